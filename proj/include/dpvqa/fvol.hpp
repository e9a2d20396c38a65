#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "dpvqa/tensor.hpp"

namespace dpvqa {

// Frame-major feature volume as stored on disk: N frames of a W×H grid with D
// channels, little-endian float32 payload behind a "FVOL" header.
struct VolumeData {
  std::uint32_t frames = 0;
  std::uint32_t width = 0;
  std::uint32_t height = 0;
  std::uint32_t channels = 0;
  std::vector<float> values;

  std::size_t frame_size() const {
    return static_cast<std::size_t>(width) * height * channels;
  }
  float at(std::size_t n, std::size_t x, std::size_t y, std::size_t c) const {
    return values[((n * width + x) * height + y) * channels + c];
  }
  float& at(std::size_t n, std::size_t x, std::size_t y, std::size_t c) {
    return values[((n * width + x) * height + y) * channels + c];
  }
};

inline constexpr std::uint32_t kFvolVersion = 1;

void write_fvol(std::ostream& out, const VolumeData& volume);
void write_fvol(const std::string& path, const VolumeData& volume);
VolumeData read_fvol(std::istream& in, const std::string& source = "<stream>");
VolumeData read_fvol(const std::string& path);

template <class T>
Tensor<T> volume_tensor(const VolumeData& volume, bool requires_grad = false);

// Little-endian primitives shared with the checkpoint format.
void write_u32(std::ostream& out, std::uint32_t v);
void write_u64(std::ostream& out, std::uint64_t v);
void write_f32(std::ostream& out, float v);
std::uint32_t read_u32(std::istream& in, const std::string& source);
std::uint64_t read_u64(std::istream& in, const std::string& source);
float read_f32(std::istream& in, const std::string& source);

}  // namespace dpvqa
