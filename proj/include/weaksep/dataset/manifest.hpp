#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "weaksep/dataset/mixtures.hpp"

namespace weaksep::dataset {

inline constexpr int kManifestVersion = 1;
inline constexpr const char* kManifestFormat = "weaksep-manifest";

struct ManifestRecord {
  std::string id;
  Partition partition = Partition::train;
  std::vector<int> combination;
  double gain_db = 0.0;
  std::string mixture_path;               // relative to the manifest directory
  std::vector<std::string> source_paths;  // empty when ground truth was not kept
  std::vector<int> h;
  std::vector<std::string> clip_ids;
  double headroom = 1.0;

  bool operator==(const ManifestRecord&) const = default;
};

struct Manifest {
  std::vector<int> labels;
  nlohmann::json spec = nlohmann::json::object();
  std::vector<ManifestRecord> records;
  std::filesystem::path base_dir;
  std::filesystem::path path;  // file it was read from or written to

  bool has_sources() const {
    for (const auto& r : records)
      if (r.source_paths.size() != r.combination.size()) return false;
    return !records.empty();
  }

  std::vector<ManifestRecord> partition(Partition p) const {
    std::vector<ManifestRecord> out;
    for (const auto& r : records)
      if (r.partition == p) out.push_back(r);
    return out;
  }

  std::filesystem::path resolve(const std::string& relative) const { return base_dir / relative; }
};

inline nlohmann::json to_json(const MixtureSpec& spec) {
  return {{"classes", spec.classes.spec()},
          {"components", spec.components},
          {"counts", {{"train", spec.counts.train}, {"val", spec.counts.val}, {"test", spec.counts.test}}},
          {"gains_db", spec.gains_db},
          {"seed", spec.seed},
          {"quantize", spec.quantize}};
}

inline nlohmann::json to_json(const ManifestRecord& r) {
  nlohmann::json j;
  j["id"] = r.id;
  j["partition"] = to_string(r.partition);
  j["combination"] = r.combination;
  j["gain_db"] = r.gain_db;
  j["mixture_path"] = r.mixture_path;
  j["source_paths"] = r.source_paths;
  j["h"] = r.h;
  j["clip_ids"] = r.clip_ids;
  j["headroom"] = r.headroom;
  return j;
}

inline ManifestRecord record_from_json(const nlohmann::json& j) {
  ManifestRecord r;
  r.id = j.at("id").get<std::string>();
  r.partition = parse_partition(j.at("partition").get<std::string>());
  r.combination = j.at("combination").get<std::vector<int>>();
  r.gain_db = j.at("gain_db").get<double>();
  r.mixture_path = j.at("mixture_path").get<std::string>();
  r.source_paths = j.at("source_paths").get<std::vector<std::string>>();
  r.h = j.at("h").get<std::vector<int>>();
  if (j.contains("clip_ids")) r.clip_ids = j["clip_ids"].get<std::vector<std::string>>();
  if (j.contains("headroom")) r.headroom = j["headroom"].get<double>();
  return r;
}

/// Writes a versioned JSON-lines manifest: one header line, then one record per mixture.
inline void write_manifest(const Manifest& m, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write manifest " + path.string());
  const nlohmann::json header{{"format", kManifestFormat},
                              {"version", kManifestVersion},
                              {"labels", m.labels},
                              {"records", m.records.size()},
                              {"spec", m.spec}};
  out << header.dump() << '\n';
  for (const auto& r : m.records) out << to_json(r).dump() << '\n';
  if (!out) throw DataError("failed writing manifest " + path.string());
}

/// Reads a manifest; with `check_files`, every referenced WAV must exist.
inline Manifest read_manifest(const std::filesystem::path& path, bool check_files = true) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open manifest " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw DataError("empty manifest " + path.string());
  Manifest m;
  m.base_dir = path.parent_path();
  m.path = path;
  try {
    const auto header = nlohmann::json::parse(line);
    if (header.value("format", "") != kManifestFormat) throw DataError("not a mixture manifest: " + path.string());
    const int version = header.at("version").get<int>();
    if (version != kManifestVersion) {
      throw DataError("manifest " + path.string() + " has version " + std::to_string(version) + ", expected " +
                      std::to_string(kManifestVersion));
    }
    m.labels = header.at("labels").get<std::vector<int>>();
    m.spec = header.value("spec", nlohmann::json::object());
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
      ++line_no;
      if (line.empty()) continue;
      auto r = record_from_json(nlohmann::json::parse(line));
      if (r.h.size() != m.labels.size() || r.h != label_vector(m.labels, r.combination)) {
        throw DataError("manifest " + path.string() + " line " + std::to_string(line_no) +
                        ": labels disagree with combination");
      }
      m.records.push_back(std::move(r));
    }
    if (m.records.size() != header.at("records").get<std::size_t>())
      throw DataError("manifest " + path.string() + " is truncated");
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed manifest " + path.string() + ": " + e.what());
  }
  if (check_files) {
    auto require = [&](const std::string& rel) {
      if (!std::filesystem::exists(m.resolve(rel))) throw DataError("missing audio file " + m.resolve(rel).string());
    };
    for (const auto& r : m.records) {
      require(r.mixture_path);
      for (const auto& rel : r.source_paths) require(rel);
    }
  }
  return m;
}

/// Writes mixture (and, if requested, component) WAVs under dir/audio and the manifest at dir/manifest.jsonl.
inline Manifest write_dataset(const std::vector<MixtureExample>& examples, const std::vector<int>& labels,
                              const std::filesystem::path& dir, const nlohmann::json& spec,
                              bool with_sources = true) {
  Manifest m;
  m.labels = labels;
  m.spec = spec;
  m.base_dir = dir;
  for (const auto& ex : examples) {
    ManifestRecord r;
    r.id = ex.id;
    r.partition = ex.partition;
    r.combination = ex.combination;
    r.gain_db = ex.gain_db;
    r.h = ex.h;
    r.clip_ids = ex.clip_ids;
    r.headroom = ex.headroom;
    r.mixture_path = "audio/" + ex.id + ".mix.wav";
    dsp::write_wav(dir / r.mixture_path, ex.mixture);
    if (with_sources) {
      for (std::size_t c = 0; c < ex.sources.size(); ++c) {
        r.source_paths.push_back("audio/" + ex.id + ".src" + std::to_string(ex.combination[c]) + ".wav");
        dsp::write_wav(dir / r.source_paths.back(), ex.sources[c]);
      }
    }
    m.records.push_back(std::move(r));
  }
  m.path = dir / "manifest.jsonl";
  write_manifest(m, m.path);
  return m;
}

/// Loads the audio of one record. Sources are read only when asked for.
inline MixtureExample load_example(const Manifest& m, const ManifestRecord& r, bool with_sources) {
  MixtureExample ex;
  ex.id = r.id;
  ex.partition = r.partition;
  ex.combination = r.combination;
  ex.gain_db = r.gain_db;
  ex.h = r.h;
  ex.clip_ids = r.clip_ids;
  ex.headroom = r.headroom;
  ex.mixture = dsp::read_wav(m.resolve(r.mixture_path));
  if (with_sources) {
    if (r.source_paths.size() != r.combination.size())
      throw DataError("mixture " + r.id + " has no ground-truth sources in the manifest");
    for (const auto& rel : r.source_paths) ex.sources.push_back(dsp::read_wav(m.resolve(rel)));
  }
  return ex;
}

}  // namespace weaksep::dataset
