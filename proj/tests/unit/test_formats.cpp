#include <gtest/gtest.h>

#include <cstring>

#include "igs/formats.hpp"

using namespace igs;

namespace {

Model small_model() {
  Rng rng(4);
  std::vector<Vec3> pts(6);
  for (Vec3& p : pts) p = {rng.uniform(), rng.uniform(), rng.uniform()};
  ModelConfig cfg;
  cfg.embedding_dim = 5;
  cfg.hidden_width = 7;
  Model m;
  m.anchors = init_anchors(pts, cfg, 2);
  m.decoder = init_decoder(pts, cfg, 2);
  m.anchors.train_positions = false;
  return m;
}

template <typename Fn>
ErrorKind kind_of(Fn&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no error raised";
  return ErrorKind::Usage;
}

std::uint32_t read_u32(const std::string& s, std::size_t at) {
  std::uint32_t v;
  std::memcpy(&v, s.data() + at, 4);
  return v;
}

fs::path temp_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("igs_formats_" + name);
  fs::remove_all(p);
  return p;
}

}  // namespace

TEST(Checkpoint, RoundTripIsStable) {
  const Model m = small_model();
  const std::string a = encode_checkpoint(m);
  EXPECT_EQ(a.substr(0, 4), "IGCK");
  EXPECT_EQ(read_u32(a, 4), kFormatVersion);
  EXPECT_EQ(read_u32(a, 8), 6u);
  const Model back = decode_checkpoint(a);
  EXPECT_EQ(encode_checkpoint(back), a);
  EXPECT_FALSE(back.anchors.train_positions);
  EXPECT_TRUE(back.anchors.train_features);
  EXPECT_EQ(back.decoder.hidden_width, 7u);
  for (std::size_t i = 0; i < m.anchors.size(); ++i)
    for (int d = 0; d < 3; ++d)
      EXPECT_EQ(back.anchors.positions[i][d], static_cast<double>(static_cast<float>(m.anchors.positions[i][d])));
}

TEST(Checkpoint, ExpectedSize) {
  const Model m = small_model();
  const std::size_t n = 6, de = 5, h = 7;
  std::size_t floats = 2 + n * 3 + n * de + n * 6;
  for (std::size_t out : {15, 15, 5, 5}) floats += h * de + h + out * h + out;
  EXPECT_EQ(encode_checkpoint(m).size(), 4 + 4 * 5 + 4 * floats);
}

TEST(Checkpoint, CorruptInputIsDataError) {
  const std::string a = encode_checkpoint(small_model());
  EXPECT_EQ(kind_of([&] { decode_checkpoint(a.substr(0, a.size() - 3)); }), ErrorKind::Data);
  EXPECT_EQ(kind_of([&] { decode_checkpoint(a + "x"); }), ErrorKind::Data);
  std::string bad = a;
  bad[0] = 'X';
  EXPECT_EQ(kind_of([&] { decode_checkpoint(bad); }), ErrorKind::Data);
  bad = a;
  bad[4] = 9;
  EXPECT_EQ(kind_of([&] { decode_checkpoint(bad); }), ErrorKind::Data);
}

TEST(Masks, RoundTrip) {
  MaskView m;
  m.width = 3;
  m.height = 2;
  m.mask_count = 2;
  m.ids = {0, 1, kNoMask, 1, 1, 0};
  const std::string bytes = encode_masks(m);
  EXPECT_EQ(bytes.size(), 4u + 4 * 4 + 6 * 4);
  EXPECT_EQ(read_u32(bytes, 8), 2u);  // H
  EXPECT_EQ(read_u32(bytes, 12), 3u);  // W
  const MaskView b = decode_masks(bytes);
  EXPECT_EQ(b.ids, m.ids);
  EXPECT_EQ(b.mask_count, 2u);
}

TEST(Masks, OutOfRangeIdIsDataError) {
  MaskView m;
  m.width = 1;
  m.height = 1;
  m.mask_count = 1;
  m.ids = {0};
  std::string bytes = encode_masks(m);
  bytes[bytes.size() - 4] = 5;
  EXPECT_EQ(kind_of([&] { decode_masks(bytes); }), ErrorKind::Data);
}

TEST(Labels, RoundTrip) {
  const std::vector<std::uint32_t> l{2, 0, 1, 1};
  const LabelFile f = decode_labels(encode_labels(l, 3));
  EXPECT_EQ(f.count, 3u);
  EXPECT_EQ(f.labels, l);
}

TEST(Embeddings, RoundTripThroughF32) {
  EmbeddingTable t(2, 3);
  t.data = {0.5, -1.0, 0.25, 1.0, 2.0, 3.0};
  const EmbeddingTable b = decode_embeddings(encode_embeddings(t));
  EXPECT_EQ(b.dim, 3u);
  EXPECT_EQ(b.data, t.data);
}

TEST(Points, RoundTrip) {
  PointCloud pc;
  pc.positions = {{1, 2, 3}, {-1, 0.5, 0}};
  pc.colors = {{0.25, 0.5, 1}, {0, 0, 0}};
  pc.instance = {0, 1};
  pc.classes = {4, 2};
  const std::string bytes = encode_points(pc);
  EXPECT_EQ(bytes.size(), 12u + 2 * 32);
  const PointCloud b = decode_points(bytes);
  EXPECT_EQ(b.positions, pc.positions);
  EXPECT_EQ(b.colors, pc.colors);
  EXPECT_EQ(b.instance, pc.instance);
  EXPECT_EQ(b.classes, pc.classes);
}

TEST(CameraJson, RoundTrip) {
  Camera c;
  c.fx = 60;
  c.fy = 61;
  c.cx = 31.5;
  c.cy = 30.5;
  c.width = 64;
  c.height = 62;
  c.R = {0, 1, 0, -1, 0, 0, 0, 0, 1};
  c.t = {0.5, -0.25, 3};
  const Camera b = camera_from_json(nlohmann::json::parse(camera_to_string(c)));
  EXPECT_EQ(b.fx, c.fx);
  EXPECT_EQ(b.cy, c.cy);
  EXPECT_EQ(b.height, c.height);
  EXPECT_EQ(b.R, c.R);
  EXPECT_EQ(b.t, c.t);
}

TEST(CameraJson, MissingKeyOrBadRotationIsDataError) {
  auto j = nlohmann::json::parse(camera_to_string(Camera{}));
  j.erase("fx");
  EXPECT_EQ(kind_of([&] { camera_from_json(j); }), ErrorKind::Data);
  j = nlohmann::json::parse(camera_to_string(Camera{}));
  j["R"] = std::vector<double>{2, 0, 0, 0, 1, 0, 0, 0, 1};
  EXPECT_EQ(kind_of([&] { camera_from_json(j); }), ErrorKind::Data);
}

TEST(PlanarF32, ChannelMajorLayout) {
  Image img(2, 1, 3);
  img.data = {1, 2, 3, 4, 5, 6};  // pixel 0 = (1,2,3), pixel 1 = (4,5,6)
  const std::string bytes = encode_planar_f32(img);
  ASSERT_EQ(bytes.size(), 24u);
  float v[6];
  std::memcpy(v, bytes.data(), 24);
  EXPECT_EQ(v[0], 1.0f);
  EXPECT_EQ(v[1], 4.0f);
  EXPECT_EQ(v[2], 2.0f);
  EXPECT_EQ(v[5], 6.0f);
  EXPECT_EQ(decode_planar_f32(bytes, 2, 1, 3, "x").data, img.data);
  EXPECT_EQ(kind_of([&] { decode_planar_f32(bytes, 3, 1, 3, "x"); }), ErrorKind::Data);
}

TEST(Png, DecodesToSamePixels) {
  Image img(3, 2, 3);
  for (std::size_t i = 0; i < img.data.size(); ++i) img.data[i] = static_cast<double>(i) / 17.0;
  img.data[0] = 2.0;  // clamped
  const std::string png = encode_png(img);
  ASSERT_GT(png.size(), 8u);
  EXPECT_EQ(png.substr(1, 3), "PNG");
  png_image pi;
  std::memset(&pi, 0, sizeof(pi));
  pi.version = PNG_IMAGE_VERSION;
  ASSERT_NE(png_image_begin_read_from_memory(&pi, png.data(), png.size()), 0);
  pi.format = PNG_FORMAT_RGB;
  std::vector<std::uint8_t> px(PNG_IMAGE_SIZE(pi));
  ASSERT_NE(png_image_finish_read(&pi, nullptr, px.data(), 0, nullptr), 0);
  EXPECT_EQ(pi.width, 3u);
  EXPECT_EQ(px[0], 255);
  for (std::size_t i = 1; i < px.size(); ++i) EXPECT_EQ(px[i], std::lround(img.data[i] * 255.0));
}

TEST(Ply, HeaderAndPayload) {
  const std::vector<Vec3> pos{{0, 0, 0}, {1, 2, 3}};
  const std::vector<std::uint32_t> labels{0, 7};
  const std::string ply = encode_instance_ply(pos, labels);
  const std::string end = "end_header\n";
  const std::size_t body = ply.find(end) + end.size();
  EXPECT_EQ(ply.rfind("ply\nformat binary_little_endian 1.0\n", 0), 0u);
  EXPECT_NE(ply.find("element vertex 2\n"), std::string::npos);
  EXPECT_EQ(ply.size() - body, 2u * (12 + 3 + 4));
  EXPECT_EQ(read_u32(ply, body + 2 * 19 - 4), 7u);
  float y;
  std::memcpy(&y, ply.data() + body + 19 + 4, 4);
  EXPECT_EQ(y, 2.0f);
}

TEST(InstanceColor, DistinctForNeighbouringIds) {
  for (std::uint32_t i = 0; i < 20; ++i) EXPECT_NE(instance_color(i), instance_color(i + 1));
}

TEST(Files, AtomicWriteCreatesParents) {
  const fs::path dir = temp_dir("write");
  write_file_atomic(dir / "a" / "b.bin", "hello");
  EXPECT_EQ(read_file(dir / "a" / "b.bin"), "hello");
  write_file_atomic(dir / "a" / "b.bin", "bye");
  EXPECT_EQ(read_file(dir / "a" / "b.bin"), "bye");
  fs::remove_all(dir);
}

TEST(Files, MissingFileIsIoErrorWithPath) {
  try {
    read_file("/nonexistent/igs/file.bin");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Io);
    EXPECT_NE(std::string(e.what()).find("/nonexistent/igs/file.bin"), std::string::npos);
  }
}
