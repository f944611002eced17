#include "cl_lab/data.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include <boost/crc.hpp>
#include <nlohmann/json.hpp>

#include "cl_lab/error.hpp"

namespace cl_lab {

namespace {

constexpr char kTaskMagic[4] = {'C', 'L', 'T', '1'};
constexpr std::uint32_t kTaskVersion = 1;

std::vector<unsigned char> read_all(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Io, "cannot open " + path);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) fail(ErrorKind::Io, "read error on " + path);
  return bytes;
}

std::uint32_t read_be32(const std::vector<unsigned char>& b, std::size_t off, const std::string& path) {
  if (off + 4 > b.size()) fail(ErrorKind::Parse, path + ": truncated at byte offset " + std::to_string(off));
  return (std::uint32_t(b[off]) << 24) | (std::uint32_t(b[off + 1]) << 16) | (std::uint32_t(b[off + 2]) << 8) |
         std::uint32_t(b[off + 3]);
}

class LeWriter {
 public:
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf.push_back(static_cast<unsigned char>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf.push_back(static_cast<unsigned char>(v >> (8 * i)));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void raw(const void* p, std::size_t n) {
    const auto* c = static_cast<const unsigned char*>(p);
    buf.insert(buf.end(), c, c + n);
  }
  std::vector<unsigned char> buf;
};

class LeReader {
 public:
  LeReader(const std::vector<unsigned char>& b, std::size_t end, std::string path)
      : b_(b), end_(end), path_(std::move(path)) {}
  void need(std::size_t n) {
    if (off_ + n > end_) fail(ErrorKind::Parse, path_ + ": truncated at byte offset " + std::to_string(off_));
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t(b_[off_ + i]) << (8 * i);
    off_ += 4;
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t(b_[off_ + i]) << (8 * i);
    off_ += 8;
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string str(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(b_.data() + off_), n);
    off_ += n;
    return s;
  }
  std::size_t offset() const { return off_; }

 private:
  const std::vector<unsigned char>& b_;
  std::size_t end_;
  std::string path_;
  std::size_t off_ = 0;
};

std::uint32_t crc32_of(const unsigned char* p, std::size_t n) {
  boost::crc_32_type crc;
  crc.process_bytes(p, n);
  return crc.checksum();
}

}  // namespace

Mat load_idx(const std::string& path) {
  const std::vector<unsigned char> b = read_all(path);
  if (b.size() < 4) fail(ErrorKind::Parse, path + ": truncated at byte offset " + std::to_string(b.size()));
  if (b[0] != 0 || b[1] != 0) fail(ErrorKind::Parse, path + ": bad IDX magic at byte offset 0");
  if (b[2] != 0x08) fail(ErrorKind::Parse, path + ": unsupported IDX element type at byte offset 2");
  const int ndims = b[3];
  if (ndims < 1 || ndims > 3) fail(ErrorKind::Parse, path + ": bad IDX dimension count at byte offset 3");
  std::vector<std::size_t> shape;
  for (int i = 0; i < ndims; ++i) shape.push_back(read_be32(b, 4 + 4 * std::size_t(i), path));
  const std::size_t header = 4 + 4 * std::size_t(ndims);
  const std::size_t n = shape[0];
  std::size_t per = 1;
  for (int i = 1; i < ndims; ++i) per *= shape[std::size_t(i)];
  const std::size_t need = header + n * per;
  if (b.size() < need) fail(ErrorKind::Parse, path + ": truncated at byte offset " + std::to_string(b.size()));
  Mat out(static_cast<Eigen::Index>(per), static_cast<Eigen::Index>(n));
  const double scale = (ndims == 1) ? 1.0 : 1.0 / 255.0;
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t i = 0; i < per; ++i)
      out(Eigen::Index(i), Eigen::Index(j)) = double(b[header + j * per + i]) * scale;
  return out;
}

double whitening_error(const Mat& x) {
  return (x * x.transpose() - Mat::Identity(x.rows(), x.rows())).norm();
}

Mat whiten(const Mat& x0, double noise_std, Rng& rng) {
  require(x0.cols() >= x0.rows(), "whiten: need at least as many samples as dimensions");
  require(noise_std >= 0, "whiten: noise_std must be nonnegative");
  Mat xt = x0;
  if (noise_std > 0) xt += noise_std * rng.gaussian_matrix(x0.rows(), x0.cols());
  const Mat c = xt * xt.transpose();
  const EigenDecomp e = eigh(c);
  const Vec& lam = e.values.values;
  const double top = lam(0);
  const double bottom = lam(lam.size() - 1);
  if (!(top > 0) || bottom <= 1e-12 * top)
    fail(ErrorKind::Numerical, "whiten: input covariance is singular; increase noise_std");
  const Vec inv_sqrt = lam.cwiseSqrt().cwiseInverse();
  const Mat w = e.vectors * inv_sqrt.asDiagonal() * e.vectors.transpose();
  return w * xt;
}

TaskPair rotate_task_with(const Task& old_task, const Mat& rotation) {
  require(rotation.rows() == old_task.dim_x() && rotation.cols() == old_task.dim_x(),
          "rotate_task: rotation dimension mismatch");
  Task nt;
  nt.inputs = rotation * old_task.inputs;
  nt.labels = old_task.labels;
  nt.meta = old_task.meta;
  nt.meta.name = old_task.meta.name + "-rotated";
  return TaskPair{old_task, std::move(nt), rotation};
}

TaskPair rotate_task(const Task& old_task, Rng& rng) {
  return rotate_task_with(old_task, haar_orthogonal(static_cast<int>(old_task.dim_x()), rng));
}

std::vector<int> modulo_rank_labels(const std::vector<int>& labels, int r) {
  require(r >= 1, "modulo_rank_labels: r must be >= 1");
  std::vector<int> out;
  out.reserve(labels.size());
  for (int l : labels) out.push_back(((l % r) + r) % r);
  return out;
}

Mat embed_labels(const std::vector<int>& classes, int d) {
  Mat y = Mat::Zero(d, static_cast<Eigen::Index>(classes.size()));
  for (std::size_t j = 0; j < classes.size(); ++j) {
    require(classes[j] >= 0 && classes[j] < d, "embed_labels: class " + std::to_string(classes[j]) +
                                                   " does not fit in dimension " + std::to_string(d));
    y(classes[j], Eigen::Index(j)) = 1.0;
  }
  return y;
}

Task synth_teacher_task(int d, int n, int r, double label_noise, Rng& rng, double whiten_noise) {
  require(n >= d, "synth_teacher_task: need n >= d");
  require(r >= 1 && r <= d, "synth_teacher_task: rank must lie in [1, d]");
  const std::uint64_t seed = rng.seed();
  const Mat x = whiten(rng.gaussian_matrix(d, n), whiten_noise, rng);
  const Mat u = haar_orthogonal(d, rng);
  const Mat v = haar_orthogonal(d, rng);
  const Mat g = u.leftCols(r) * v.leftCols(r).transpose();
  Mat y = g * x;
  if (label_noise > 0) y += label_noise * rng.gaussian_matrix(d, n);
  Task t{x, y, TaskMeta{"teacher", seed, true, r}};
  return t;
}

Task idx_task(const Mat& images, const Mat& labels, int d, int n, int r, double whiten_noise, Rng& rng) {
  require(images.cols() >= n && labels.cols() >= n, "idx_task: not enough samples");
  require(d >= 1 && d <= images.rows() && n >= d, "idx_task: bad dimension");
  const Mat x = images.leftCols(n);
  const Vec mean = x.rowwise().mean();
  const Mat centered = x.colwise() - mean;
  const EigenDecomp e = eigh(centered * centered.transpose());
  const Mat reduced = e.vectors.leftCols(d).transpose() * centered;
  std::vector<int> cls;
  for (int j = 0; j < n; ++j) cls.push_back(static_cast<int>(std::lround(labels(0, j))));
  cls = modulo_rank_labels(cls, r);
  Task t{whiten(reduced, whiten_noise, rng), embed_labels(cls, d), TaskMeta{"idx", rng.seed(), true, r}};
  return t;
}

void save_task(const Task& t, const std::string& path) {
  require(t.inputs.cols() == t.labels.cols(), "save_task: inputs and labels disagree on sample count");
  LeWriter w;
  w.raw(kTaskMagic, 4);
  w.u32(kTaskVersion);
  w.u32(static_cast<std::uint32_t>(t.dim_x()));
  w.u32(static_cast<std::uint32_t>(t.dim_y()));
  w.u64(static_cast<std::uint64_t>(t.n()));
  for (Eigen::Index j = 0; j < t.inputs.cols(); ++j)
    for (Eigen::Index i = 0; i < t.inputs.rows(); ++i) w.f64(t.inputs(i, j));
  for (Eigen::Index j = 0; j < t.labels.cols(); ++j)
    for (Eigen::Index i = 0; i < t.labels.rows(); ++i) w.f64(t.labels(i, j));
  nlohmann::ordered_json meta;
  meta["name"] = t.meta.name;
  meta["seed"] = t.meta.seed;
  meta["whitened"] = t.meta.whitened;
  if (t.meta.rank_cap) meta["rank_cap"] = *t.meta.rank_cap;
  else meta["rank_cap"] = nullptr;
  const std::string text = meta.dump();
  w.u64(text.size());
  w.raw(text.data(), text.size());
  w.u32(crc32_of(w.buf.data(), w.buf.size()));
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::Io, "cannot open " + path + " for writing");
  out.write(reinterpret_cast<const char*>(w.buf.data()), static_cast<std::streamsize>(w.buf.size()));
  if (!out) fail(ErrorKind::Io, "write error on " + path);
}

Task load_task(const std::string& path) {
  const std::vector<unsigned char> b = read_all(path);
  if (b.size() < 4 + 4 + 4) fail(ErrorKind::Parse, path + ": truncated at byte offset " + std::to_string(b.size()));
  if (std::memcmp(b.data(), kTaskMagic, 4) != 0) fail(ErrorKind::Parse, path + ": bad task magic at byte offset 0");
  LeReader head(b, b.size(), path);
  head.str(4);
  const std::uint32_t version = head.u32();
  if (version != kTaskVersion)
    fail(ErrorKind::Parse, path + ": unsupported task file version " + std::to_string(version) + " (expected " +
                               std::to_string(kTaskVersion) + ")");
  const std::size_t body = b.size() - 4;
  std::uint32_t stored = 0;
  for (int i = 0; i < 4; ++i) stored |= std::uint32_t(b[body + std::size_t(i)]) << (8 * i);
  if (crc32_of(b.data(), body) != stored) fail(ErrorKind::Parse, path + ": checksum mismatch");
  LeReader r(b, body, path);
  r.str(4);
  r.u32();
  const std::uint32_t dx = r.u32();
  const std::uint32_t dy = r.u32();
  const std::uint64_t n = r.u64();
  Task t;
  t.inputs.resize(dx, static_cast<Eigen::Index>(n));
  t.labels.resize(dy, static_cast<Eigen::Index>(n));
  r.need((std::uint64_t(dx) + dy) * n * 8);
  for (Eigen::Index j = 0; j < t.inputs.cols(); ++j)
    for (Eigen::Index i = 0; i < t.inputs.rows(); ++i) t.inputs(i, j) = r.f64();
  for (Eigen::Index j = 0; j < t.labels.cols(); ++j)
    for (Eigen::Index i = 0; i < t.labels.rows(); ++i) t.labels(i, j) = r.f64();
  const std::uint64_t len = r.u64();
  const std::string text = r.str(len);
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(text);
    t.meta.name = meta.at("name").get<std::string>();
    t.meta.seed = meta.at("seed").get<std::uint64_t>();
    t.meta.whitened = meta.at("whitened").get<bool>();
    if (meta.contains("rank_cap") && !meta["rank_cap"].is_null()) t.meta.rank_cap = meta["rank_cap"].get<int>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Parse, path + ": bad meta block: " + e.what());
  }
  return t;
}

}  // namespace cl_lab
