#pragma once

// On-disk formats. All binary formats are little-endian and start with a
// four-byte magic followed by a u32 version (currently 1).
//
// IGCK checkpoint
//   "IGCK" u32 version, u32 n (anchors), u32 D_e, u32 hidden width,
//   u32 trainable flags (bit0 positions, bit1 embeddings, bit2 features),
//   f32 offset range, f32 base scale,
//   f32 positions[n*3], f32 embeddings[n*D_e], f32 features[n*6],
//   then for each head in (offset, color, opacity, log-scale):
//   f32 w1[hidden*D_e], b1[hidden], w2[out*hidden], b2[out]
//   with out = 15, 15, 5, 5.
// IGMK mask view
//   "IGMK" u32 version, u32 H, u32 W, u32 m, u32 ids[H*W] (row-major,
//   0xFFFFFFFF = no mask).
// IGLB labels
//   "IGLB" u32 version, u32 n, u32 m, u32 labels[n].
// IGEM embeddings
//   "IGEM" u32 version, u32 count, u32 dim, f32 data[count*dim].
// IGPC point cloud
//   "IGPC" u32 version, u32 n, then per point f32 x y z r g b,
//   u32 gt_instance, u32 gt_class.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <png.h>

#include "json.hpp"

#include "igs/association.hpp"
#include "igs/common.hpp"
#include "igs/losses.hpp"
#include "igs/renderer.hpp"
#include "igs/scene_model.hpp"

namespace igs {

inline constexpr std::uint32_t kFormatVersion = 1;

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Byte buffers

class ByteWriter {
 public:
  void magic(std::string_view m) { buf_.append(m); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  }
  void f32(double v) { u32(std::bit_cast<std::uint32_t>(static_cast<float>(v))); }
  void u8(std::uint8_t v) { buf_.push_back(static_cast<char>(v)); }
  void f32s(std::span<const double> vs) {
    for (double v : vs) f32(v);
  }
  void raw(std::string_view s) { buf_.append(s); }
  const std::string& bytes() const { return buf_; }

 private:
  std::string buf_;
};

class ByteReader {
 public:
  ByteReader(std::string data, std::string source) : data_(std::move(data)), source_(std::move(source)) {}

  void magic(std::string_view m) {
    need(m.size());
    require(std::string_view(data_).substr(pos_, m.size()) == m, ErrorKind::Data,
            source_ + ": bad magic, expected " + std::string(m));
    pos_ += m.size();
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
    pos_ += 4;
    return v;
  }
  double f32() { return static_cast<double>(std::bit_cast<float>(u32())); }
  void f32s(std::span<double> out) {
    for (double& v : out) v = f32();
  }
  void version() {
    const std::uint32_t v = u32();
    require(v == kFormatVersion, ErrorKind::Data, source_ + ": unsupported version " + std::to_string(v));
  }
  void expect_end() const { require(pos_ == data_.size(), ErrorKind::Data, source_ + ": trailing bytes"); }

 private:
  void need(std::size_t n) const {
    require(pos_ + n <= data_.size(), ErrorKind::Data, source_ + ": truncated file");
  }
  std::string data_;
  std::string source_;
  std::size_t pos_ = 0;
};

inline std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Io, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) fail(ErrorKind::Io, "read failed: " + path.string());
  return ss.str();
}

// Writes to a sibling temp file, then renames over the destination.
inline void write_file_atomic(const fs::path& path, std::string_view bytes) {
  std::error_code ec;
  if (path.has_parent_path()) fs::create_directories(path.parent_path(), ec);
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorKind::Io, "cannot write " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) fail(ErrorKind::Io, "write failed: " + tmp.string());
  }
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp, ec);
    fail(ErrorKind::Io, "cannot rename onto " + path.string());
  }
}

// ---------------------------------------------------------------------------
// IGCK

inline std::string encode_checkpoint(const Model& model) {
  const AnchorSet& a = model.anchors;
  const DecoderParams& d = model.decoder;
  ByteWriter w;
  w.magic("IGCK");
  w.u32(kFormatVersion);
  w.u32(static_cast<std::uint32_t>(a.size()));
  w.u32(static_cast<std::uint32_t>(a.embedding_dim));
  w.u32(static_cast<std::uint32_t>(d.hidden_width));
  w.u32((a.train_positions ? 1u : 0u) | (a.train_embeddings ? 2u : 0u) | (a.train_features ? 4u : 0u));
  w.f32(d.offset_range);
  w.f32(d.base_scale);
  for (const Vec3& p : a.positions) w.f32s(p);
  w.f32s(a.embeddings);
  for (const Feature& f : a.features) w.f32s(f);
  for (const MlpHead& h : d.heads) {
    w.f32s(h.w1);
    w.f32s(h.b1);
    w.f32s(h.w2);
    w.f32s(h.b2);
  }
  return w.bytes();
}

inline Model decode_checkpoint(std::string bytes, const std::string& source = "checkpoint") {
  ByteReader r(std::move(bytes), source);
  r.magic("IGCK");
  r.version();
  const std::uint32_t n = r.u32(), de = r.u32(), hidden = r.u32(), flags = r.u32();
  require(n >= 1 && de >= 1 && hidden >= 1, ErrorKind::Data, source + ": empty checkpoint dimensions");
  Model m;
  const double rho = r.f32(), s0 = r.f32();
  m.decoder = DecoderParams::zeros(de, hidden, rho, s0);
  AnchorSet& a = m.anchors;
  a.embedding_dim = de;
  a.train_positions = flags & 1u;
  a.train_embeddings = flags & 2u;
  a.train_features = flags & 4u;
  a.positions.resize(n);
  for (Vec3& p : a.positions) r.f32s(p);
  a.embeddings.resize(static_cast<std::size_t>(n) * de);
  r.f32s(a.embeddings);
  a.features.resize(n);
  for (Feature& f : a.features) r.f32s(f);
  for (MlpHead& h : m.decoder.heads) {
    r.f32s(h.w1);
    r.f32s(h.b1);
    r.f32s(h.w2);
    r.f32s(h.b2);
  }
  r.expect_end();
  return m;
}

inline void save_checkpoint(const fs::path& path, const Model& model) { write_file_atomic(path, encode_checkpoint(model)); }
inline Model load_checkpoint(const fs::path& path) { return decode_checkpoint(read_file(path), path.string()); }

// ---------------------------------------------------------------------------
// IGMK

inline std::string encode_masks(const MaskView& m) {
  ByteWriter w;
  w.magic("IGMK");
  w.u32(kFormatVersion);
  w.u32(static_cast<std::uint32_t>(m.height));
  w.u32(static_cast<std::uint32_t>(m.width));
  w.u32(m.mask_count);
  for (std::uint32_t id : m.ids) w.u32(id);
  return w.bytes();
}

inline MaskView decode_masks(std::string bytes, const std::string& source = "masks") {
  ByteReader r(std::move(bytes), source);
  r.magic("IGMK");
  r.version();
  MaskView m;
  m.height = static_cast<int>(r.u32());
  m.width = static_cast<int>(r.u32());
  m.mask_count = r.u32();
  m.ids.resize(m.pixel_count());
  for (auto& id : m.ids) id = r.u32();
  r.expect_end();
  m.validate();
  return m;
}

// ---------------------------------------------------------------------------
// IGLB

inline std::string encode_labels(std::span<const std::uint32_t> labels, std::uint32_t count) {
  ByteWriter w;
  w.magic("IGLB");
  w.u32(kFormatVersion);
  w.u32(static_cast<std::uint32_t>(labels.size()));
  w.u32(count);
  for (std::uint32_t l : labels) w.u32(l);
  return w.bytes();
}

struct LabelFile {
  std::uint32_t count = 0;
  std::vector<std::uint32_t> labels;
};

inline LabelFile decode_labels(std::string bytes, const std::string& source = "labels") {
  ByteReader r(std::move(bytes), source);
  r.magic("IGLB");
  r.version();
  LabelFile f;
  f.labels.resize(r.u32());
  f.count = r.u32();
  for (auto& l : f.labels) l = r.u32();
  r.expect_end();
  return f;
}

// ---------------------------------------------------------------------------
// IGEM

inline std::string encode_embeddings(const EmbeddingTable& t) {
  ByteWriter w;
  w.magic("IGEM");
  w.u32(kFormatVersion);
  w.u32(static_cast<std::uint32_t>(t.count()));
  w.u32(static_cast<std::uint32_t>(t.dim));
  w.f32s(t.data);
  return w.bytes();
}

inline EmbeddingTable decode_embeddings(std::string bytes, const std::string& source = "embeddings") {
  ByteReader r(std::move(bytes), source);
  r.magic("IGEM");
  r.version();
  const std::uint32_t count = r.u32(), dim = r.u32();
  EmbeddingTable t(count, dim);
  r.f32s(t.data);
  r.expect_end();
  require(all_finite(t.data), ErrorKind::Data, source + ": NaN or Inf in embeddings");
  return t;
}

// ---------------------------------------------------------------------------
// IGPC

struct PointCloud {
  std::vector<Vec3> positions;
  std::vector<Vec3> colors;
  std::vector<std::uint32_t> instance;
  std::vector<std::uint32_t> classes;
};

inline std::string encode_points(const PointCloud& pc) {
  ByteWriter w;
  w.magic("IGPC");
  w.u32(kFormatVersion);
  w.u32(static_cast<std::uint32_t>(pc.positions.size()));
  for (std::size_t i = 0; i < pc.positions.size(); ++i) {
    w.f32s(pc.positions[i]);
    w.f32s(pc.colors[i]);
    w.u32(pc.instance[i]);
    w.u32(pc.classes[i]);
  }
  return w.bytes();
}

inline PointCloud decode_points(std::string bytes, const std::string& source = "points") {
  ByteReader r(std::move(bytes), source);
  r.magic("IGPC");
  r.version();
  const std::uint32_t n = r.u32();
  PointCloud pc;
  pc.positions.resize(n);
  pc.colors.resize(n);
  pc.instance.resize(n);
  pc.classes.resize(n);
  for (std::uint32_t i = 0; i < n; ++i) {
    r.f32s(pc.positions[i]);
    r.f32s(pc.colors[i]);
    pc.instance[i] = r.u32();
    pc.classes[i] = r.u32();
  }
  r.expect_end();
  return pc;
}

// ---------------------------------------------------------------------------
// Camera JSON

inline nlohmann::ordered_json camera_to_json(const Camera& c) {
  nlohmann::ordered_json j;
  j["fx"] = c.fx;
  j["fy"] = c.fy;
  j["cx"] = c.cx;
  j["cy"] = c.cy;
  j["width"] = c.width;
  j["height"] = c.height;
  j["R"] = std::vector<double>(c.R.begin(), c.R.end());
  j["t"] = std::vector<double>(c.t.begin(), c.t.end());
  return j;
}

inline std::string camera_to_string(const Camera& c) { return camera_to_json(c).dump(2) + "\n"; }

inline Camera camera_from_json(const nlohmann::json& j, const std::string& source = "camera") {
  try {
    Camera c;
    c.fx = j.at("fx").get<double>();
    c.fy = j.at("fy").get<double>();
    c.cx = j.at("cx").get<double>();
    c.cy = j.at("cy").get<double>();
    c.width = j.at("width").get<int>();
    c.height = j.at("height").get<int>();
    const auto R = j.at("R").get<std::vector<double>>();
    const auto t = j.at("t").get<std::vector<double>>();
    require(R.size() == 9 && t.size() == 3, ErrorKind::Data, source + ": R needs 9 and t needs 3 entries");
    std::copy(R.begin(), R.end(), c.R.begin());
    std::copy(t.begin(), t.end(), c.t.begin());
    c.validate();
    return c;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Data, source + ": " + e.what());
  }
}

inline Camera load_camera(const fs::path& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    fail(ErrorKind::Data, path.string() + ": " + e.what());
  }
  return camera_from_json(j, path.string());
}

// ---------------------------------------------------------------------------
// Images

// Channel-major f32 dump (C planes of H x W), no header.
inline std::string encode_planar_f32(const Image& img) {
  ByteWriter w;
  for (int c = 0; c < img.channels; ++c)
    for (int y = 0; y < img.height; ++y)
      for (int x = 0; x < img.width; ++x) w.f32(img.at(x, y, c));
  return w.bytes();
}

inline Image decode_planar_f32(std::string bytes, int width, int height, int channels, const std::string& source) {
  require(bytes.size() == static_cast<std::size_t>(width) * height * channels * 4, ErrorKind::Data,
          source + ": raw image has unexpected size");
  ByteReader r(std::move(bytes), source);
  Image img(width, height, channels);
  for (int c = 0; c < channels; ++c)
    for (int y = 0; y < height; ++y)
      for (int x = 0; x < width; ++x) img.at(x, y, c) = r.f32();
  return img;
}

// 8-bit RGB PNG of the first three channels (or a grey image for one).
inline std::string encode_png(const Image& img) {
  require(img.channels == 1 || img.channels >= 3, ErrorKind::Usage, "PNG export needs 1 or >= 3 channels");
  png_image pi;
  std::memset(&pi, 0, sizeof(pi));
  pi.version = PNG_IMAGE_VERSION;
  pi.width = static_cast<png_uint_32>(img.width);
  pi.height = static_cast<png_uint_32>(img.height);
  pi.format = PNG_FORMAT_RGB;
  std::vector<std::uint8_t> px(static_cast<std::size_t>(img.width) * img.height * 3);
  for (std::size_t p = 0; p < img.pixel_count(); ++p)
    for (int c = 0; c < 3; ++c) {
      const double v = img.data[p * img.channels + (img.channels == 1 ? 0 : c)];
      px[p * 3 + c] = static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
    }
  png_alloc_size_t size = 0;
  require(png_image_write_get_memory_size(pi, size, 0, px.data(), 0, nullptr) != 0, ErrorKind::Io,
          "PNG encoding failed");
  std::string out(size, '\0');
  require(png_image_write_to_memory(&pi, out.data(), &size, 0, px.data(), 0, nullptr) != 0, ErrorKind::Io,
          "PNG encoding failed");
  out.resize(size);
  return out;
}

// ---------------------------------------------------------------------------
// PLY export: binary little-endian, x y z float, red green blue uchar,
// instance uint.

inline Vec3 instance_color(std::uint32_t id) {
  if (id == kNoLabel) return {0.3, 0.3, 0.3};
  const double golden = 0.6180339887498949;
  const double h = std::fmod(0.1 + golden * id, 1.0);
  // HSV(h, 0.7, 0.95)
  const double s = 0.7, v = 0.95;
  const double hp = h * 6.0;
  const double c = v * s, x = c * (1.0 - std::abs(std::fmod(hp, 2.0) - 1.0)), m = v - c;
  Vec3 rgb{};
  switch (static_cast<int>(hp) % 6) {
    case 0: rgb = {c, x, 0}; break;
    case 1: rgb = {x, c, 0}; break;
    case 2: rgb = {0, c, x}; break;
    case 3: rgb = {0, x, c}; break;
    case 4: rgb = {x, 0, c}; break;
    default: rgb = {c, 0, x}; break;
  }
  return {rgb[0] + m, rgb[1] + m, rgb[2] + m};
}

inline std::string encode_instance_ply(std::span<const Vec3> positions, std::span<const std::uint32_t> labels) {
  require(positions.size() == labels.size(), ErrorKind::Usage, "PLY export: positions and labels differ in length");
  std::ostringstream hdr;
  hdr << "ply\nformat binary_little_endian 1.0\ncomment instance labels encoded as colors\n"
      << "element vertex " << positions.size() << "\n"
      << "property float x\nproperty float y\nproperty float z\n"
      << "property uchar red\nproperty uchar green\nproperty uchar blue\n"
      << "property uint instance\nend_header\n";
  ByteWriter w;
  w.raw(hdr.str());
  for (std::size_t i = 0; i < positions.size(); ++i) {
    w.f32s(positions[i]);
    const Vec3 c = instance_color(labels[i]);
    for (double v : c) w.u8(static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)));
    w.u32(labels[i]);
  }
  return w.bytes();
}

}  // namespace igs
