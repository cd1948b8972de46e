// Checkpoint container, little-endian:
//   magic "M4SCKPT\0", u32 version
//   config   : u64 length + key=value text (TrainConfig echo)
//   dims     : u64 d_rad, u64 d_path
//   tensors  : u32 count, then per tensor
//              u32 name length + name, u8 trainable, u32 rank (2),
//              u64 rows, u64 cols, f64 values (row-major)
//   history  : u32 count, then per epoch i32 epoch, f64 train_loss, f64 val_c_index
//   selection: f64 initial_val_c_index, i32 best_epoch
//   baseline : u64 count, f64 event_times[count], f64 cumulative[count]

#include "m4s/training.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace m4s {
namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

constexpr char kMagic[8] = {'M', '4', 'S', 'C', 'K', 'P', 'T', '\0'};

class Writer {
 public:
  explicit Writer(std::ostream& out) : out_(out) {}

  template <typename T>
  void pod(const T& v) {
    out_.write(reinterpret_cast<const char*>(&v), sizeof(T));
  }
  void bytes(const std::string& s) {
    pod<std::uint64_t>(s.size());
    out_.write(s.data(), static_cast<std::streamsize>(s.size()));
  }
  void doubles(const double* p, std::size_t n) {
    out_.write(reinterpret_cast<const char*>(p), static_cast<std::streamsize>(n * sizeof(double)));
  }

 private:
  std::ostream& out_;
};

class Reader {
 public:
  explicit Reader(std::istream& in) : in_(in) {}

  template <typename T>
  T pod() {
    T v{};
    in_.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in_) throw std::runtime_error("checkpoint: truncated file");
    return v;
  }
  std::string bytes(std::size_t limit = std::size_t{1} << 24) {
    const auto n = pod<std::uint64_t>();
    if (n > limit) throw std::runtime_error("checkpoint: corrupt string length");
    std::string s(n, '\0');
    in_.read(s.data(), static_cast<std::streamsize>(n));
    if (!in_) throw std::runtime_error("checkpoint: truncated file");
    return s;
  }
  void doubles(double* p, std::size_t n) {
    in_.read(reinterpret_cast<char*>(p), static_cast<std::streamsize>(n * sizeof(double)));
    if (!in_) throw std::runtime_error("checkpoint: truncated file");
  }

 private:
  std::istream& in_;
};

}  // namespace

void write_checkpoint(std::ostream& out, const Checkpoint& ckpt) {
  Writer w(out);
  out.write(kMagic, sizeof kMagic);
  w.pod<std::uint32_t>(Checkpoint::kVersion);
  w.bytes(ckpt.config.to_key_value());
  w.pod<std::uint64_t>(static_cast<std::uint64_t>(ckpt.model.config.d_rad));
  w.pod<std::uint64_t>(static_cast<std::uint64_t>(ckpt.model.config.d_path));

  std::uint32_t count = 0;
  visit_model(ckpt.model.params, [&](const std::string&, const Matrix&, bool) { ++count; });
  w.pod(count);
  visit_model(ckpt.model.params, [&](const std::string& name, const Matrix& m, bool trainable) {
    w.pod<std::uint32_t>(static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    w.pod<std::uint8_t>(trainable ? 1 : 0);
    w.pod<std::uint32_t>(2);
    w.pod<std::uint64_t>(static_cast<std::uint64_t>(m.rows()));
    w.pod<std::uint64_t>(static_cast<std::uint64_t>(m.cols()));
    w.doubles(m.data(), static_cast<std::size_t>(m.size()));
  });

  w.pod<std::uint32_t>(static_cast<std::uint32_t>(ckpt.history.size()));
  for (const auto& h : ckpt.history) {
    w.pod<std::int32_t>(h.epoch);
    w.pod(h.train_loss);
    w.pod(h.val_c_index);
  }
  w.pod(ckpt.initial_val_c_index);
  w.pod<std::int32_t>(ckpt.best_epoch);

  w.pod<std::uint64_t>(static_cast<std::uint64_t>(ckpt.baseline.event_times.size()));
  w.doubles(ckpt.baseline.event_times.data(), static_cast<std::size_t>(ckpt.baseline.event_times.size()));
  w.doubles(ckpt.baseline.cumulative.data(), static_cast<std::size_t>(ckpt.baseline.cumulative.size()));
  if (!out) throw std::runtime_error("checkpoint: write failed");
}

Checkpoint read_checkpoint(std::istream& in) {
  Reader r(in);
  char magic[sizeof kMagic];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kMagic, sizeof kMagic) != 0) throw std::runtime_error("checkpoint: bad magic");
  const auto version = r.pod<std::uint32_t>();
  if (version != Checkpoint::kVersion)
    throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));

  Checkpoint ckpt;
  std::istringstream cfg(r.bytes());
  ckpt.config = TrainConfig::parse(cfg);
  const auto d_rad = static_cast<Eigen::Index>(r.pod<std::uint64_t>());
  const auto d_path = static_cast<Eigen::Index>(r.pod<std::uint64_t>());
  // Skeleton with the right layout; every tensor is overwritten below.
  ckpt.model = init_model(ckpt.config.model_config(d_rad, d_path), 0);

  const auto count = r.pod<std::uint32_t>();
  std::uint32_t seen = 0;
  visit_model(ckpt.model.params, [&](const std::string& expected, Matrix& m, bool trainable) {
    if (seen++ >= count) throw std::runtime_error("checkpoint: missing tensor " + expected);
    const auto len = r.pod<std::uint32_t>();
    std::string name(len, '\0');
    in.read(name.data(), len);
    if (name != expected) throw std::runtime_error("checkpoint: expected tensor " + expected + ", found " + name);
    if ((r.pod<std::uint8_t>() != 0) != trainable) throw std::runtime_error("checkpoint: trainable flag mismatch for " + name);
    if (r.pod<std::uint32_t>() != 2) throw std::runtime_error("checkpoint: unsupported rank for " + name);
    const auto rows = static_cast<Eigen::Index>(r.pod<std::uint64_t>());
    const auto cols = static_cast<Eigen::Index>(r.pod<std::uint64_t>());
    if (rows != m.rows() || cols != m.cols())
      throw ShapeError("checkpoint tensor " + name, Shape{rows, cols}, shape_of(m));
    r.doubles(m.data(), static_cast<std::size_t>(m.size()));
  });
  if (seen != count) throw std::runtime_error("checkpoint: unexpected extra tensors");

  const auto hist = r.pod<std::uint32_t>();
  for (std::uint32_t k = 0; k < hist; ++k) {
    EpochRecord h;
    h.epoch = r.pod<std::int32_t>();
    h.train_loss = r.pod<double>();
    h.val_c_index = r.pod<double>();
    ckpt.history.push_back(h);
  }
  ckpt.initial_val_c_index = r.pod<double>();
  ckpt.best_epoch = r.pod<std::int32_t>();

  const auto n = static_cast<Eigen::Index>(r.pod<std::uint64_t>());
  if (n < 0 || n > (Eigen::Index{1} << 32)) throw std::runtime_error("checkpoint: corrupt baseline length");
  ckpt.baseline.event_times.resize(n);
  ckpt.baseline.cumulative.resize(n);
  r.doubles(ckpt.baseline.event_times.data(), static_cast<std::size_t>(n));
  r.doubles(ckpt.baseline.cumulative.data(), static_cast<std::size_t>(n));
  return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
  write_checkpoint(out, ckpt);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
  return read_checkpoint(in);
}

}  // namespace m4s
