#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <type_traits>
#include <variant>
#include <vector>

#include <json.hpp>

#include "weaksep/errors.hpp"
#include "weaksep/nn/tensor.hpp"

namespace weaksep::nn {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

// Layout (all integers little-endian):
//   "WKSPCKPT" | u32 version | u32 n + n bytes of JSON header
//   | u32 blob count | blobs...
// blob: u8 section | u16 n + name | u8 dtype (0 f32, 1 f64) | u8 rank
//       | u64 dims[rank] | packed data
inline constexpr char kCheckpointMagic[8] = {'W', 'K', 'S', 'P', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

enum class BlobSection : std::uint8_t { parameter = 0, buffer = 1, adam_first_moment = 2, adam_second_moment = 3 };

struct Blob {
  BlobSection section = BlobSection::parameter;
  std::string name;
  Shape shape;
  std::variant<std::vector<float>, std::vector<double>> data;
};

struct Checkpoint {
  nlohmann::json header = nlohmann::json::object();
  std::vector<Blob> blobs;

  const Blob* find(BlobSection section, const std::string& name) const {
    for (const auto& b : blobs)
      if (b.section == section && b.name == name) return &b;
    return nullptr;
  }
};

template <class T>
void append_tensor(Checkpoint& ckpt, BlobSection section, std::string name, const Tensor<T>& t) {
  static_assert(std::is_same_v<T, float> || std::is_same_v<T, double>);
  ckpt.blobs.push_back({section, std::move(name), t.shape(), std::vector<T>(t.storage().begin(), t.storage().end())});
}

template <class T>
Tensor<T> blob_tensor(const Blob& blob) {
  return std::visit([&](const auto& v) { return Tensor<T>(blob.shape, std::vector<T>(v.begin(), v.end())); },
                    blob.data);
}

namespace detail {

template <class U>
void write_pod(std::ostream& os, U v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(U));
}

template <class U>
U read_pod(std::istream& is, const std::filesystem::path& path) {
  U v{};
  if (!is.read(reinterpret_cast<char*>(&v), sizeof(U))) throw DataError("truncated checkpoint " + path.string());
  return v;
}

}  // namespace detail

inline void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream os(tmp, std::ios::binary);
    if (!os) throw DataError("cannot write checkpoint " + path.string());
    os.write(kCheckpointMagic, sizeof(kCheckpointMagic));
    detail::write_pod<std::uint32_t>(os, kCheckpointVersion);
    const std::string header = ckpt.header.dump();
    detail::write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(header.size()));
    os.write(header.data(), static_cast<std::streamsize>(header.size()));
    detail::write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(ckpt.blobs.size()));
    for (const auto& b : ckpt.blobs) {
      detail::write_pod<std::uint8_t>(os, static_cast<std::uint8_t>(b.section));
      detail::write_pod<std::uint16_t>(os, static_cast<std::uint16_t>(b.name.size()));
      os.write(b.name.data(), static_cast<std::streamsize>(b.name.size()));
      detail::write_pod<std::uint8_t>(os, b.data.index() == 0 ? 0 : 1);
      detail::write_pod<std::uint8_t>(os, static_cast<std::uint8_t>(b.shape.size()));
      for (auto d : b.shape) detail::write_pod<std::uint64_t>(os, d);
      std::visit(
          [&](const auto& v) {
            if (v.size() != element_count(b.shape)) throw ShapeError("checkpoint blob " + b.name + " size mismatch");
            os.write(reinterpret_cast<const char*>(v.data()),
                     static_cast<std::streamsize>(v.size() * sizeof(v[0])));
          },
          b.data);
    }
    if (!os) throw DataError("failed writing checkpoint " + path.string());
  }
  std::filesystem::rename(tmp, path);
}

inline Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open checkpoint " + path.string());
  char magic[8];
  if (!is.read(magic, 8) || std::memcmp(magic, kCheckpointMagic, 8) != 0) {
    throw DataError("not a weaksep checkpoint: " + path.string());
  }
  const auto version = detail::read_pod<std::uint32_t>(is, path);
  if (version != kCheckpointVersion) {
    throw DataError("checkpoint version " + std::to_string(version) + " not supported (expected " +
                    std::to_string(kCheckpointVersion) + "): " + path.string());
  }
  Checkpoint ckpt;
  const auto header_len = detail::read_pod<std::uint32_t>(is, path);
  std::string header(header_len, '\0');
  if (!is.read(header.data(), header_len)) throw DataError("truncated checkpoint " + path.string());
  ckpt.header = nlohmann::json::parse(header);
  const auto count = detail::read_pod<std::uint32_t>(is, path);
  ckpt.blobs.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    Blob b;
    const auto section = detail::read_pod<std::uint8_t>(is, path);
    if (section > 3) throw DataError("unknown blob section in " + path.string());
    b.section = static_cast<BlobSection>(section);
    const auto name_len = detail::read_pod<std::uint16_t>(is, path);
    b.name.resize(name_len);
    if (!is.read(b.name.data(), name_len)) throw DataError("truncated checkpoint " + path.string());
    const auto dtype = detail::read_pod<std::uint8_t>(is, path);
    const auto rank = detail::read_pod<std::uint8_t>(is, path);
    for (std::uint8_t r = 0; r < rank; ++r) b.shape.push_back(detail::read_pod<std::uint64_t>(is, path));
    const std::size_t n = element_count(b.shape);
    auto read_values = [&](auto& v) {
      v.resize(n);
      if (!is.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(v[0])))) {
        throw DataError("truncated checkpoint " + path.string());
      }
    };
    if (dtype == 0) {
      std::vector<float> v;
      read_values(v);
      b.data = std::move(v);
    } else if (dtype == 1) {
      std::vector<double> v;
      read_values(v);
      b.data = std::move(v);
    } else {
      throw DataError("unknown dtype in checkpoint " + path.string());
    }
    ckpt.blobs.push_back(std::move(b));
  }
  return ckpt;
}

}  // namespace weaksep::nn
