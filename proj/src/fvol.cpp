#include "dpvqa/fvol.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cstring>
#include <fstream>

namespace dpvqa {

namespace {

template <class U>
U to_little(U v) {
  if constexpr (std::endian::native == std::endian::little) {
    return v;
  } else {
    std::array<unsigned char, sizeof(U)> bytes;
    std::memcpy(bytes.data(), &v, sizeof(U));
    std::reverse(bytes.begin(), bytes.end());
    std::memcpy(&v, bytes.data(), sizeof(U));
    return v;
  }
}

template <class U>
void write_raw(std::ostream& out, U v) {
  v = to_little(v);
  out.write(reinterpret_cast<const char*>(&v), sizeof(U));
}

template <class U>
U read_raw(std::istream& in, const std::string& source) {
  U v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof(U))) {
    throw FormatError(source + ": unexpected end of file");
  }
  return to_little(v);
}

}  // namespace

void write_u32(std::ostream& out, std::uint32_t v) { write_raw(out, v); }
void write_u64(std::ostream& out, std::uint64_t v) { write_raw(out, v); }
void write_f32(std::ostream& out, float v) {
  std::uint32_t bits = std::bit_cast<std::uint32_t>(v);
  write_raw(out, bits);
}
std::uint32_t read_u32(std::istream& in, const std::string& source) {
  return read_raw<std::uint32_t>(in, source);
}
std::uint64_t read_u64(std::istream& in, const std::string& source) {
  return read_raw<std::uint64_t>(in, source);
}
float read_f32(std::istream& in, const std::string& source) {
  return std::bit_cast<float>(read_raw<std::uint32_t>(in, source));
}

void write_fvol(std::ostream& out, const VolumeData& volume) {
  if (volume.values.size() != volume.frames * volume.frame_size()) {
    throw FormatError("write_fvol: payload size does not match header extents");
  }
  out.write("FVOL", 4);
  write_u32(out, kFvolVersion);
  write_u32(out, volume.frames);
  write_u32(out, volume.width);
  write_u32(out, volume.height);
  write_u32(out, volume.channels);
  if constexpr (std::endian::native == std::endian::little) {
    out.write(reinterpret_cast<const char*>(volume.values.data()),
              static_cast<std::streamsize>(volume.values.size() * sizeof(float)));
  } else {
    for (float v : volume.values) write_f32(out, v);
  }
  if (!out) throw FormatError("write_fvol: write failed");
}

void write_fvol(const std::string& path, const VolumeData& volume) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot create " + path);
  write_fvol(out, volume);
}

VolumeData read_fvol(std::istream& in, const std::string& source) {
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, "FVOL", 4) != 0) {
    throw FormatError(source + ": missing FVOL magic");
  }
  auto version = read_u32(in, source);
  if (version != kFvolVersion) {
    throw FormatError(source + ": unsupported FVOL version " + std::to_string(version));
  }
  VolumeData v;
  v.frames = read_u32(in, source);
  v.width = read_u32(in, source);
  v.height = read_u32(in, source);
  v.channels = read_u32(in, source);
  if (v.frames == 0 || v.width == 0 || v.height == 0 || v.channels == 0) {
    throw FormatError(source + ": all FVOL extents must be positive");
  }
  v.values.resize(static_cast<std::size_t>(v.frames) * v.frame_size());
  if constexpr (std::endian::native == std::endian::little) {
    if (!in.read(reinterpret_cast<char*>(v.values.data()),
                 static_cast<std::streamsize>(v.values.size() * sizeof(float)))) {
      throw FormatError(source + ": truncated FVOL payload");
    }
  } else {
    for (auto& x : v.values) x = read_f32(in, source);
  }
  return v;
}

VolumeData read_fvol(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path);
  return read_fvol(in, path);
}

template <class T>
Tensor<T> volume_tensor(const VolumeData& volume, bool requires_grad) {
  std::vector<T> data(volume.values.begin(), volume.values.end());
  return Tensor<T>::from_data({volume.frames, volume.width, volume.height, volume.channels},
                              std::move(data), requires_grad);
}

template Tensor<float> volume_tensor(const VolumeData&, bool);
template Tensor<double> volume_tensor(const VolumeData&, bool);

}  // namespace dpvqa
