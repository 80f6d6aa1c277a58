#pragma once

// NWC1 raster container and the named-parameter checkpoint format.
//
// NWC1 layout (little-endian):
//   "NWC1" | u32 version=1 | u32 frame_count |
//   per frame: u32 height | u32 width | f32 resolution_km | i64 timestamp_min |
//              u32 channels | f32[channels*height*width] row-major
//
// Checkpoint layout (little-endian):
//   "NWCK" | u32 version=1 | u32 record_count |
//   per record: u32 name_len | utf8 name | u32 rank | u32 dims[rank] | f32[prod(dims)]

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "nwc/grid.hpp"

namespace nwc {

struct Nwc1Frame {
  std::uint32_t height = 0;
  std::uint32_t width = 0;
  float resolution_km = 1.0F;
  std::int64_t timestamp_min = 0;
  std::uint32_t channels = 1;
  std::vector<float> values;
};

std::vector<unsigned char> encode_nwc1(const std::vector<Nwc1Frame>& frames);
std::vector<Nwc1Frame> decode_nwc1(const std::vector<unsigned char>& bytes);

void write_nwc1(const std::filesystem::path& path, const std::vector<Nwc1Frame>& frames);
std::vector<Nwc1Frame> read_nwc1(const std::filesystem::path& path);

/// A stack maps to one NWC1 frame per timestep.
std::vector<Nwc1Frame> stack_to_frames(const FieldStack& stack);
FieldStack frames_to_stack(const std::vector<Nwc1Frame>& frames);

void write_stack(const std::filesystem::path& path, const FieldStack& stack);
FieldStack read_stack(const std::filesystem::path& path);

void write_frame(const std::filesystem::path& path, const RasterFrame& frame);
RasterFrame read_frame(const std::filesystem::path& path);

struct NamedArray {
  std::string name;
  std::vector<int> shape;
  std::vector<float> data;
};

std::vector<unsigned char> encode_checkpoint(const std::vector<NamedArray>& records);
std::vector<NamedArray> decode_checkpoint(const std::vector<unsigned char>& bytes);
void write_checkpoint(const std::filesystem::path& path, const std::vector<NamedArray>& records);
std::vector<NamedArray> read_checkpoint(const std::filesystem::path& path);

std::vector<unsigned char> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, const std::vector<unsigned char>& bytes);

}  // namespace nwc
