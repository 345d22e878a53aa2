#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "weaksep/errors.hpp"

namespace weaksep::sepmodel {

enum class Variant { ae, vae };
enum class Supervision { signal, class_label };

inline std::string to_string(Variant v) { return v == Variant::ae ? "ae" : "vae"; }
inline std::string to_string(Supervision s) { return s == Supervision::signal ? "signal" : "class"; }

inline Variant parse_variant(const std::string& s) {
  if (s == "ae") return Variant::ae;
  if (s == "vae") return Variant::vae;
  throw std::invalid_argument("unknown variant '" + s + "' (expected ae or vae)");
}

inline Supervision parse_supervision(const std::string& s) {
  if (s == "signal") return Supervision::signal;
  if (s == "class") return Supervision::class_label;
  throw std::invalid_argument("unknown supervision '" + s + "' (expected signal or class)");
}

/// Layer widths of the encoder CNN; the decoder mirrors them.
///
/// Encoder: conv (1 x bins) -> conv (kernel x 1, stride) -> conv (kernel x 1,
/// stride) -> fully connected -> latent head. Every layer but the head is
/// followed by batch norm and ReLU.
struct Architecture {
  std::size_t frames = 30;
  std::size_t bins = 257;
  std::size_t conv1_filters = 128;
  std::size_t conv2_filters = 128;
  std::size_t conv3_filters = 256;
  std::size_t fc_units = 512;
  std::size_t latent = 128;
  std::size_t time_kernel = 4;
  std::size_t time_stride = 2;

  std::size_t frames_after_conv2() const { return (frames - time_kernel) / time_stride + 1; }
  std::size_t frames_after_conv3() const { return (frames_after_conv2() - time_kernel) / time_stride + 1; }
  std::size_t flat_features() const { return frames_after_conv3() * conv3_filters; }

  /// The strided time convolutions must tile the input exactly so that the
  /// transposed decoder chain lands back on `frames`.
  void validate() const {
    if (frames == 0 || bins == 0 || conv1_filters == 0 || conv2_filters == 0 || conv3_filters == 0 ||
        fc_units == 0 || latent == 0 || time_kernel == 0 || time_stride == 0) {
      throw ShapeError("Architecture: all sizes must be >= 1");
    }
    if (frames < time_kernel || (frames - time_kernel) % time_stride != 0) {
      throw ShapeError("Architecture: " + std::to_string(frames) + " frames do not tile kernel " +
                       std::to_string(time_kernel) + " / stride " + std::to_string(time_stride));
    }
    const std::size_t t2 = frames_after_conv2();
    if (t2 < time_kernel || (t2 - time_kernel) % time_stride != 0) {
      throw ShapeError("Architecture: second conv output of " + std::to_string(t2) + " frames does not tile");
    }
  }

  static Architecture tiny(std::size_t frames = 4, std::size_t bins = 4, std::size_t time_kernel = 2) {
    Architecture a;
    a.frames = frames;
    a.bins = bins;
    a.conv1_filters = 3;
    a.conv2_filters = 3;
    a.conv3_filters = 4;
    a.fc_units = 5;
    a.latent = 2;
    a.time_kernel = time_kernel;
    a.time_stride = 1;
    return a;
  }

  friend bool operator==(const Architecture&, const Architecture&) = default;
};

inline void to_json(nlohmann::json& j, const Architecture& a) {
  j = {{"frames", a.frames},         {"bins", a.bins},
       {"conv1_filters", a.conv1_filters}, {"conv2_filters", a.conv2_filters},
       {"conv3_filters", a.conv3_filters}, {"fc_units", a.fc_units},
       {"latent", a.latent},         {"time_kernel", a.time_kernel},
       {"time_stride", a.time_stride}};
}

inline void from_json(const nlohmann::json& j, Architecture& a) {
  j.at("frames").get_to(a.frames);
  j.at("bins").get_to(a.bins);
  j.at("conv1_filters").get_to(a.conv1_filters);
  j.at("conv2_filters").get_to(a.conv2_filters);
  j.at("conv3_filters").get_to(a.conv3_filters);
  j.at("fc_units").get_to(a.fc_units);
  j.at("latent").get_to(a.latent);
  j.at("time_kernel").get_to(a.time_kernel);
  j.at("time_stride").get_to(a.time_stride);
}

}  // namespace weaksep::sepmodel
