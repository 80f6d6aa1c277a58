#include "nwc/container.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <numeric>

#include "nwc/errors.hpp"

namespace nwc {

namespace {

constexpr unsigned char kFrameMagic[4] = {0x4E, 0x57, 0x43, 0x31};       // NWC1
constexpr unsigned char kCheckpointMagic[4] = {0x4E, 0x57, 0x43, 0x4B};  // NWCK
constexpr std::uint32_t kVersion = 1;

class Writer {
 public:
  void bytes(const unsigned char* p, std::size_t n) { out_.insert(out_.end(), p, p + n); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xFFU));
  }
  void i64(std::int64_t v) {
    const auto u = static_cast<std::uint64_t>(v);
    for (int i = 0; i < 8; ++i) out_.push_back(static_cast<unsigned char>((u >> (8 * i)) & 0xFFU));
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void f32s(const std::vector<float>& vs) {
    out_.reserve(out_.size() + 4 * vs.size());
    for (float v : vs) f32(v);
  }
  std::vector<unsigned char> take() { return std::move(out_); }

 private:
  std::vector<unsigned char> out_;
};

class Reader {
 public:
  explicit Reader(const std::vector<unsigned char>& in) : in_(in) {}
  void need(std::size_t n) const {
    if (pos_ + n > in_.size()) throw FormatError("truncated container");
  }
  void magic(const unsigned char (&m)[4], const char* what) {
    need(4);
    if (std::memcmp(in_.data() + pos_, m, 4) != 0) throw FormatError(std::string("bad magic for ") + what);
    pos_ += 4;
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(in_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::int64_t i64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(in_[pos_ + i]) << (8 * i);
    pos_ += 8;
    return static_cast<std::int64_t>(v);
  }
  float f32() { return std::bit_cast<float>(u32()); }
  std::string str(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(in_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  std::vector<float> f32s(std::size_t n) {
    need(4 * n);
    std::vector<float> out(n);
    for (auto& v : out) v = f32();
    return out;
  }
  bool done() const { return pos_ == in_.size(); }

 private:
  const std::vector<unsigned char>& in_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<unsigned char> encode_nwc1(const std::vector<Nwc1Frame>& frames) {
  Writer w;
  w.bytes(kFrameMagic, 4);
  w.u32(kVersion);
  w.u32(static_cast<std::uint32_t>(frames.size()));
  for (const auto& f : frames) {
    if (f.values.size() != static_cast<std::size_t>(f.channels) * f.height * f.width) {
      throw ShapeError("NWC1 frame value count mismatch");
    }
    w.u32(f.height);
    w.u32(f.width);
    w.f32(f.resolution_km);
    w.i64(f.timestamp_min);
    w.u32(f.channels);
    w.f32s(f.values);
  }
  return w.take();
}

std::vector<Nwc1Frame> decode_nwc1(const std::vector<unsigned char>& bytes) {
  Reader r(bytes);
  r.magic(kFrameMagic, "NWC1");
  if (r.u32() != kVersion) throw FormatError("unsupported NWC1 version");
  const std::uint32_t count = r.u32();
  std::vector<Nwc1Frame> frames;
  frames.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    Nwc1Frame f;
    f.height = r.u32();
    f.width = r.u32();
    f.resolution_km = r.f32();
    f.timestamp_min = r.i64();
    f.channels = r.u32();
    f.values = r.f32s(static_cast<std::size_t>(f.channels) * f.height * f.width);
    frames.push_back(std::move(f));
  }
  if (!r.done()) throw FormatError("trailing bytes after NWC1 frames");
  return frames;
}

std::vector<unsigned char> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  in.seekg(0, std::ios::end);
  const auto size = static_cast<std::size_t>(in.tellg());
  in.seekg(0, std::ios::beg);
  std::vector<unsigned char> bytes(size);
  if (size > 0) in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(size));
  if (!in) throw IoError("short read on " + path.string());
  return bytes;
}

void write_file_bytes(const std::filesystem::path& path, const std::vector<unsigned char>& bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("short write on " + path.string());
}

void write_nwc1(const std::filesystem::path& path, const std::vector<Nwc1Frame>& frames) {
  write_file_bytes(path, encode_nwc1(frames));
}

std::vector<Nwc1Frame> read_nwc1(const std::filesystem::path& path) { return decode_nwc1(read_file_bytes(path)); }

std::vector<Nwc1Frame> stack_to_frames(const FieldStack& stack) {
  stack.validate();
  std::vector<Nwc1Frame> frames;
  const std::size_t per = static_cast<std::size_t>(stack.channels) * stack.plane_size();
  for (int t = 0; t < stack.timesteps; ++t) {
    Nwc1Frame f;
    f.height = static_cast<std::uint32_t>(stack.height);
    f.width = static_cast<std::uint32_t>(stack.width);
    f.resolution_km = stack.resolution_km;
    f.timestamp_min = stack.timestamps_min[static_cast<std::size_t>(t)];
    f.channels = static_cast<std::uint32_t>(stack.channels);
    const auto begin = stack.values.begin() + static_cast<std::ptrdiff_t>(t * per);
    f.values.assign(begin, begin + static_cast<std::ptrdiff_t>(per));
    frames.push_back(std::move(f));
  }
  return frames;
}

FieldStack frames_to_stack(const std::vector<Nwc1Frame>& frames) {
  if (frames.empty()) throw ShapeError("no frames");
  const auto& first = frames.front();
  FieldStack s = FieldStack::zeros(static_cast<int>(frames.size()), static_cast<int>(first.channels),
                                   static_cast<int>(first.height), static_cast<int>(first.width), first.resolution_km);
  const std::size_t per = static_cast<std::size_t>(s.channels) * s.plane_size();
  for (std::size_t t = 0; t < frames.size(); ++t) {
    const auto& f = frames[t];
    if (f.height != first.height || f.width != first.width || f.channels != first.channels ||
        f.resolution_km != first.resolution_km) {
      throw ShapeError("frames in one stack must share geometry");
    }
    s.timestamps_min[t] = f.timestamp_min;
    std::copy(f.values.begin(), f.values.end(), s.values.begin() + static_cast<std::ptrdiff_t>(t * per));
  }
  return s;
}

void write_stack(const std::filesystem::path& path, const FieldStack& stack) {
  write_nwc1(path, stack_to_frames(stack));
}

FieldStack read_stack(const std::filesystem::path& path) { return frames_to_stack(read_nwc1(path)); }

void write_frame(const std::filesystem::path& path, const RasterFrame& frame) {
  Nwc1Frame f;
  f.height = static_cast<std::uint32_t>(frame.height());
  f.width = static_cast<std::uint32_t>(frame.width());
  f.resolution_km = frame.resolution_km();
  f.timestamp_min = frame.timestamp_min();
  f.channels = 1;
  f.values.assign(frame.values().begin(), frame.values().end());
  write_nwc1(path, {f});
}

RasterFrame read_frame(const std::filesystem::path& path) {
  auto frames = read_nwc1(path);
  if (frames.size() != 1 || frames[0].channels != 1) throw FormatError("expected a single-frame, single-channel file");
  auto& f = frames[0];
  return RasterFrame(static_cast<int>(f.height), static_cast<int>(f.width), f.resolution_km, f.timestamp_min,
                     std::move(f.values));
}

std::vector<unsigned char> encode_checkpoint(const std::vector<NamedArray>& records) {
  Writer w;
  w.bytes(kCheckpointMagic, 4);
  w.u32(kVersion);
  w.u32(static_cast<std::uint32_t>(records.size()));
  for (const auto& rec : records) {
    const std::size_t n = std::accumulate(rec.shape.begin(), rec.shape.end(), std::size_t{1},
                                          [](std::size_t a, int b) { return a * static_cast<std::size_t>(b); });
    if (n != rec.data.size()) throw ShapeError("checkpoint record " + rec.name + " size mismatch");
    w.u32(static_cast<std::uint32_t>(rec.name.size()));
    w.bytes(reinterpret_cast<const unsigned char*>(rec.name.data()), rec.name.size());
    w.u32(static_cast<std::uint32_t>(rec.shape.size()));
    for (int d : rec.shape) w.u32(static_cast<std::uint32_t>(d));
    w.f32s(rec.data);
  }
  return w.take();
}

std::vector<NamedArray> decode_checkpoint(const std::vector<unsigned char>& bytes) {
  Reader r(bytes);
  r.magic(kCheckpointMagic, "checkpoint");
  if (r.u32() != kVersion) throw FormatError("unsupported checkpoint version");
  const std::uint32_t count = r.u32();
  std::vector<NamedArray> out;
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedArray rec;
    rec.name = r.str(r.u32());
    const std::uint32_t rank = r.u32();
    std::size_t n = 1;
    for (std::uint32_t d = 0; d < rank; ++d) {
      rec.shape.push_back(static_cast<int>(r.u32()));
      n *= static_cast<std::size_t>(rec.shape.back());
    }
    rec.data = r.f32s(n);
    out.push_back(std::move(rec));
  }
  if (!r.done()) throw FormatError("trailing bytes after checkpoint records");
  return out;
}

void write_checkpoint(const std::filesystem::path& path, const std::vector<NamedArray>& records) {
  write_file_bytes(path, encode_checkpoint(records));
}

std::vector<NamedArray> read_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(read_file_bytes(path));
}

}  // namespace nwc
