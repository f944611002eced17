#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <vector>

#include "cl_lab/data.hpp"
#include "cl_lab/error.hpp"
#include "support.hpp"

using namespace cl_lab;

namespace {

std::string temp_path(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "cl_lab_test_data";
  std::filesystem::create_directories(dir);
  return (dir / name).string();
}

void write_bytes(const std::string& path, const std::vector<unsigned char>& b) {
  std::ofstream f(path, std::ios::binary);
  f.write(reinterpret_cast<const char*>(b.data()), std::streamsize(b.size()));
}

std::vector<unsigned char> read_bytes(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

void be32(std::vector<unsigned char>& b, std::uint32_t v) {
  for (int s = 24; s >= 0; s -= 8) b.push_back((v >> s) & 0xff);
}

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "expected an error";
  return ErrorKind::Domain;
}

}  // namespace

TEST(Idx, ImageFixture) {
  std::vector<unsigned char> b = {0, 0, 0x08, 3};
  be32(b, 2);
  be32(b, 28);
  be32(b, 28);
  for (int img = 0; img < 2; ++img)
    for (int k = 0; k < 784; ++k) b.push_back(static_cast<unsigned char>((k * 7 + img * 13) % 256));
  const std::string path = temp_path("images.idx");
  write_bytes(path, b);
  const Mat m = load_idx(path);
  ASSERT_EQ(m.rows(), 784);
  ASSERT_EQ(m.cols(), 2);
  for (int img = 0; img < 2; ++img)
    for (int k = 0; k < 784; ++k) EXPECT_DOUBLE_EQ(m(k, img), double((k * 7 + img * 13) % 256) / 255.0);
}

TEST(Idx, LabelFixture) {
  std::vector<unsigned char> b = {0, 0, 0x08, 1};
  be32(b, 2);
  b.push_back(3);
  b.push_back(7);
  const std::string path = temp_path("labels.idx");
  write_bytes(path, b);
  const Mat m = load_idx(path);
  ASSERT_EQ(m.rows(), 1);
  ASSERT_EQ(m.cols(), 2);
  EXPECT_EQ(m(0, 0), 3.0);
  EXPECT_EQ(m(0, 1), 7.0);
}

TEST(Idx, Errors) {
  const std::string path = temp_path("bad.idx");
  write_bytes(path, {1, 0, 0x08, 1, 0, 0, 0, 1, 5});
  EXPECT_EQ(kind_of([&] { load_idx(path); }), ErrorKind::Parse);
  std::vector<unsigned char> b = {0, 0, 0x08, 1};
  be32(b, 10);
  b.push_back(1);
  write_bytes(path, b);
  try {
    load_idx(path);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Parse);
    EXPECT_NE(std::string(e.what()).find("byte offset"), std::string::npos);
  }
  EXPECT_EQ(kind_of([&] { load_idx(temp_path("does-not-exist.idx")); }), ErrorKind::Io);
}

TEST(Whiten, OrthonormalRowsUnchanged) {
  Rng rng(1);
  const Mat q = haar_orthogonal(16, rng);
  const Mat x0 = q.topRows(4);
  EXPECT_LE((whiten(x0, 0.0, rng) - x0).norm(), 1e-8);
}

TEST(Whiten, GaussianInputWithNoise) {
  Rng rng(2);
  const Mat x = whiten(rng.gaussian_matrix(8, 64), 0.01, rng);
  EXPECT_LE(whitening_error(x), 1e-6 * std::sqrt(8.0));
}

TEST(Whiten, SingleRowScaledToUnitNorm) {
  Rng rng(3);
  Mat x0(1, 4);
  x0 << 3, 4, 0, 0;
  const Mat x = whiten(x0, 0.0, rng);
  EXPECT_NEAR(x.norm(), 1.0, 1e-12);
  EXPECT_LE((x - x0 / 5.0).norm(), 1e-12);
}

TEST(Whiten, Idempotent) {
  Rng rng(4);
  const Mat x = whiten(rng.gaussian_matrix(6, 40), 0.01, rng);
  EXPECT_LE((whiten(x, 0.0, rng) - x).norm(), 1e-6);
}

TEST(Whiten, SingularCovarianceIsNumericalError) {
  Rng rng(5);
  const Mat x0 = rng.gaussian_matrix(3, 1) * rng.gaussian_matrix(1, 10);
  EXPECT_EQ(kind_of([&] { whiten(x0, 0.0, rng); }), ErrorKind::Numerical);
}

TEST(Rotate, IdentityRotationKeepsTask) {
  Rng rng(6);
  const Task t = synth_teacher_task(6, 30, 2, 0.0, rng);
  const TaskPair pair = rotate_task_with(t, Mat::Identity(6, 6));
  EXPECT_EQ(pair.new_task.inputs, t.inputs);
  EXPECT_EQ(pair.new_task.labels, t.labels);
}

TEST(Rotate, PreservesWhiteningLabelsAndSpectrum) {
  Rng rng(7);
  const Task t = synth_teacher_task(10, 50, 3, 0.1, rng);
  const TaskPair pair = rotate_task(t, rng);
  ASSERT_TRUE(pair.rotation.has_value());
  EXPECT_LE((pair.new_task.inputs - *pair.rotation * t.inputs).norm(), 1e-10);
  EXPECT_EQ(pair.new_task.labels, t.labels);
  EXPECT_LE(whitening_error(pair.new_task.inputs), 1e-6 * std::sqrt(10.0));
  const Vec s_old = singular_spectrum(t.inputs).values, s_new = singular_spectrum(pair.new_task.inputs).values;
  EXPECT_LE((s_old - s_new).norm(), 1e-10);
  const double e_old = erank_of_powered_spectrum(singular_spectrum(t.labels * pinv(t.inputs)), 1.0);
  const double e_new =
      erank_of_powered_spectrum(singular_spectrum(pair.new_task.labels * pinv(pair.new_task.inputs)), 1.0);
  EXPECT_NEAR(e_old, e_new, 1e-8);
}

TEST(Labels, ModuloRank) {
  std::vector<int> l(10);
  for (int i = 0; i < 10; ++i) l[std::size_t(i)] = i;
  EXPECT_EQ(modulo_rank_labels(l, 10), l);
  const auto two = modulo_rank_labels(l, 2);
  for (int i = 0; i < 10; ++i) EXPECT_EQ(two[std::size_t(i)], i % 2);
  for (int v : modulo_rank_labels(l, 1)) EXPECT_EQ(v, 0);
  EXPECT_THROW(modulo_rank_labels(l, 0), Error);
}

TEST(Labels, ModuloOneCollapsesTargetRank) {
  Rng rng(8);
  std::vector<int> l;
  for (int i = 0; i < 60; ++i) l.push_back(i % 10);
  const Mat x = whiten(rng.gaussian_matrix(10, 60), 0.01, rng);
  const Mat y = embed_labels(modulo_rank_labels(l, 1), 10);
  const Spectrum s = singular_spectrum(y * x.transpose());
  EXPECT_NEAR(erank_of_powered_spectrum(s, 2.0), 1.0, 1e-8);
}

TEST(Labels, Embedding) {
  const Mat a = embed_labels({2}, 4);
  Vec want = Vec::Zero(4);
  want(2) = 1;
  EXPECT_EQ(Vec(a.col(0)), want);
  EXPECT_EQ(embed_labels({}, 3).cols(), 0);
  const Mat b = embed_labels({0, 1}, 3);
  Mat expected = Mat::Zero(3, 2);
  expected(0, 0) = 1;
  expected(1, 1) = 1;
  EXPECT_EQ(b, expected);
  EXPECT_THROW(embed_labels({3}, 3), Error);
}

TEST(Teacher, FullRankNoiseless) {
  Rng rng(9);
  const Task t = synth_teacher_task(8, 40, 8, 0.0, rng);
  const Vec s = singular_spectrum(t.labels * pinv(t.inputs)).values;
  EXPECT_GT(s(7), 1e-6);
  EXPECT_LE(whitening_error(t.inputs), 1e-6 * std::sqrt(8.0));
  ASSERT_TRUE(t.meta.rank_cap.has_value());
  EXPECT_EQ(*t.meta.rank_cap, 8);
}

TEST(Teacher, RankOneTarget) {
  Rng rng(10);
  const Task t = synth_teacher_task(12, 60, 1, 0.0, rng);
  EXPECT_LE(erank_of_powered_spectrum(singular_spectrum(t.labels * pinv(t.inputs)), 1.0), 1.05);
}

TEST(Teacher, GenerationRankBound) {
  Rng rng(1);
  const Task t = synth_teacher_task(32, 512, 5, 0.0, rng);
  EXPECT_LE(erank_of_powered_spectrum(singular_spectrum(t.labels * pinv(t.inputs)), 1.0), 5.5);
}

TEST(Teacher, Reproducible) {
  Rng a(11), b(11);
  const Task ta = synth_teacher_task(6, 20, 2, 0.3, a);
  const Task tb = synth_teacher_task(6, 20, 2, 0.3, b);
  EXPECT_EQ(ta.inputs, tb.inputs);
  EXPECT_EQ(ta.labels, tb.labels);
}

TEST(IdxTask, PcaWhitenedAndModuloLabels) {
  Rng rng(12);
  const Mat images = rng.gaussian_matrix(20, 50).cwiseAbs();
  Mat labels(1, 50);
  for (int j = 0; j < 50; ++j) labels(0, j) = j % 10;
  const Task t = idx_task(images, labels, 6, 40, 3, 0.01, rng);
  EXPECT_EQ(t.dim_x(), 6);
  EXPECT_EQ(t.n(), 40);
  EXPECT_LE(whitening_error(t.inputs), 1e-6 * std::sqrt(6.0));
  for (int j = 0; j < 40; ++j) EXPECT_EQ(t.labels((j % 10) % 3, j), 1.0);
}

TEST(TaskFile, RoundTripIsBitwise) {
  Rng rng(13);
  Task t = synth_teacher_task(5, 17, 2, 0.2, rng);
  t.meta.name = "round-trip";
  const std::string path = temp_path("task.clt");
  save_task(t, path);
  const Task u = load_task(path);
  EXPECT_EQ(u.inputs, t.inputs);
  EXPECT_EQ(u.labels, t.labels);
  EXPECT_EQ(u.meta.name, t.meta.name);
  EXPECT_EQ(u.meta.seed, t.meta.seed);
  EXPECT_EQ(u.meta.whitened, t.meta.whitened);
  EXPECT_EQ(u.meta.rank_cap, t.meta.rank_cap);
  save_task(u, temp_path("task2.clt"));
  EXPECT_EQ(read_bytes(path), read_bytes(temp_path("task2.clt")));
}

TEST(TaskFile, Layout) {
  Rng rng(14);
  const Task t = synth_teacher_task(3, 4, 1, 0.0, rng);
  const std::string path = temp_path("layout.clt");
  save_task(t, path);
  const auto b = read_bytes(path);
  EXPECT_EQ(std::string(b.begin(), b.begin() + 4), "CLT1");
  EXPECT_EQ(b[4], 1);  // version, little-endian
  EXPECT_EQ(b[8], 3);  // d_x
  EXPECT_EQ(b[12], 3); // d_y
  EXPECT_EQ(b[16], 4); // n
}

TEST(TaskFile, CorruptionAndVersion) {
  Rng rng(15);
  const Task t = synth_teacher_task(3, 6, 1, 0.0, rng);
  const std::string path = temp_path("corrupt.clt");
  save_task(t, path);
  auto b = read_bytes(path);
  auto flipped = b;
  flipped[30] ^= 0x40;
  write_bytes(path, flipped);
  EXPECT_EQ(kind_of([&] { load_task(path); }), ErrorKind::Parse);
  auto bumped = b;
  bumped[4] = 2;
  write_bytes(path, bumped);
  try {
    load_task(path);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Parse);
    EXPECT_NE(std::string(e.what()).find("version"), std::string::npos);
  }
}
