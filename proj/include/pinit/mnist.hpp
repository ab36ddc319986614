#ifndef PINIT_MNIST_HPP
#define PINIT_MNIST_HPP

// IDX loading for MNIST / Fashion-MNIST plus the sampling and batching used
// by the training loop.
//
// IDX layout (all integers big-endian):
//   images: magic 0x00000803, count, rows, cols, then count*rows*cols bytes
//   labels: magic 0x00000801, count, then count bytes
// Gzip-compressed files are read transparently.

#include <zlib.h>

#include <algorithm>
#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <numeric>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "pinit/matrix.hpp"
#include "pinit/network.hpp"
#include "pinit/rng.hpp"

namespace pinit {

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Wrong magic number or malformed header.
class IdxFormatError : public DataError {
 public:
  using DataError::DataError;
};

/// Payload shorter than the header promises.
class IdxLengthError : public DataError {
 public:
  using DataError::DataError;
};

inline constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;
inline constexpr std::size_t kNumClasses = 10;

/// Undecoded pixels, one 784-byte (rows*cols) block per image.
struct RawImages {
  std::size_t count = 0;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::uint8_t> pixels;

  [[nodiscard]] std::size_t pixels_per_image() const noexcept { return rows * cols; }
};

namespace detail {

inline std::vector<std::uint8_t> read_all_bytes(const std::filesystem::path& path) {
  gzFile f = gzopen(path.string().c_str(), "rb");
  if (f == nullptr) throw DataError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes;
  std::array<std::uint8_t, 1 << 16> buf{};
  for (;;) {
    const int n = gzread(f, buf.data(), static_cast<unsigned>(buf.size()));
    if (n < 0) {
      gzclose(f);
      throw DataError("read error in " + path.string());
    }
    if (n == 0) break;
    bytes.insert(bytes.end(), buf.begin(), buf.begin() + n);
  }
  gzclose(f);
  return bytes;
}

inline std::uint32_t read_be32(std::span<const std::uint8_t> bytes, std::size_t offset) {
  return (std::uint32_t{bytes[offset]} << 24) | (std::uint32_t{bytes[offset + 1]} << 16) |
         (std::uint32_t{bytes[offset + 2]} << 8) | std::uint32_t{bytes[offset + 3]};
}

inline void append_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 24));
  out.push_back(static_cast<std::uint8_t>(v >> 16));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

}  // namespace detail

inline RawImages parse_idx_images(std::span<const std::uint8_t> bytes,
                                  const std::string& what = "idx images") {
  if (bytes.size() < 16) throw IdxFormatError(what + ": header truncated");
  const auto magic = detail::read_be32(bytes, 0);
  if (magic != kIdxImagesMagic) throw IdxFormatError(what + ": bad magic number");
  RawImages raw;
  raw.count = detail::read_be32(bytes, 4);
  raw.rows = detail::read_be32(bytes, 8);
  raw.cols = detail::read_be32(bytes, 12);
  const std::size_t payload = raw.count * raw.rows * raw.cols;
  if (bytes.size() - 16 < payload) {
    throw IdxLengthError(what + ": expected " + std::to_string(payload) + " pixel bytes, found " +
                         std::to_string(bytes.size() - 16));
  }
  raw.pixels.assign(bytes.begin() + 16, bytes.begin() + 16 + static_cast<std::ptrdiff_t>(payload));
  return raw;
}

/// Labels must be < max_classes (10 for the supported datasets).
inline std::vector<Label> parse_idx_labels(std::span<const std::uint8_t> bytes,
                                           const std::string& what = "idx labels",
                                           std::size_t max_classes = kNumClasses) {
  if (bytes.size() < 8) throw IdxFormatError(what + ": header truncated");
  if (detail::read_be32(bytes, 0) != kIdxLabelsMagic) throw IdxFormatError(what + ": bad magic number");
  const std::size_t count = detail::read_be32(bytes, 4);
  if (bytes.size() - 8 < count) {
    throw IdxLengthError(what + ": expected " + std::to_string(count) + " labels, found " +
                         std::to_string(bytes.size() - 8));
  }
  std::vector<Label> labels(bytes.begin() + 8, bytes.begin() + 8 + static_cast<std::ptrdiff_t>(count));
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= max_classes) {
      throw DataError(what + ": label " + std::to_string(labels[i]) + " at index " +
                      std::to_string(i) + " out of range");
    }
  }
  return labels;
}

inline RawImages load_idx_images(const std::filesystem::path& path) {
  return parse_idx_images(detail::read_all_bytes(path), path.string());
}

inline std::vector<Label> load_idx_labels(const std::filesystem::path& path) {
  return parse_idx_labels(detail::read_all_bytes(path), path.string());
}

inline std::vector<std::uint8_t> encode_idx_images(const RawImages& raw) {
  std::vector<std::uint8_t> out;
  out.reserve(16 + raw.pixels.size());
  detail::append_be32(out, kIdxImagesMagic);
  detail::append_be32(out, static_cast<std::uint32_t>(raw.count));
  detail::append_be32(out, static_cast<std::uint32_t>(raw.rows));
  detail::append_be32(out, static_cast<std::uint32_t>(raw.cols));
  out.insert(out.end(), raw.pixels.begin(), raw.pixels.end());
  return out;
}

inline std::vector<std::uint8_t> encode_idx_labels(std::span<const Label> labels) {
  std::vector<std::uint8_t> out;
  out.reserve(8 + labels.size());
  detail::append_be32(out, kIdxLabelsMagic);
  detail::append_be32(out, static_cast<std::uint32_t>(labels.size()));
  out.insert(out.end(), labels.begin(), labels.end());
  return out;
}

/// Normalised images (pixels x samples, values in [0, 1]) with their labels.
struct Dataset {
  Matrix images;
  std::vector<Label> labels;
  std::string name;

  [[nodiscard]] std::size_t size() const noexcept { return labels.size(); }
  [[nodiscard]] std::size_t features() const noexcept { return images.rows(); }
};

/// Divides every pixel by 255 and pairs images with labels.
inline Dataset normalize(const RawImages& raw, std::vector<Label> labels, std::string name = {}) {
  if (raw.count != labels.size()) {
    throw DataError("dataset '" + name + "': " + std::to_string(raw.count) + " images but " +
                    std::to_string(labels.size()) + " labels");
  }
  const std::size_t dim = raw.pixels_per_image();
  Dataset d;
  d.name = std::move(name);
  d.labels = std::move(labels);
  d.images = Matrix(dim, raw.count);
  for (std::size_t s = 0; s < raw.count; ++s) {
    for (std::size_t p = 0; p < dim; ++p) {
      d.images(p, s) = static_cast<double>(raw.pixels[s * dim + p]) / 255.0;
    }
  }
  return d;
}

/// Samples at the given indices, in that order.
inline Dataset select(const Dataset& d, std::span<const std::size_t> indices) {
  Dataset out;
  out.name = d.name;
  out.images = gather_columns(d.images, indices);
  out.labels.reserve(indices.size());
  for (auto i : indices) out.labels.push_back(d.labels.at(i));
  return out;
}

/// n samples drawn without replacement.
inline Dataset subset(const Dataset& d, std::size_t n, Rng& rng) {
  if (n > d.size()) {
    throw std::invalid_argument("subset: requested " + std::to_string(n) + " of " +
                                std::to_string(d.size()) + " samples");
  }
  std::vector<std::size_t> order(d.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);
  order.resize(n);
  return select(d, order);
}

/// First n samples, without shuffling.
inline Dataset head(const Dataset& d, std::size_t n) {
  std::vector<std::size_t> order(std::min(n, d.size()));
  std::iota(order.begin(), order.end(), std::size_t{0});
  return select(d, order);
}

/// num_classes x labels.size() matrix with a single 1 per column.
inline Matrix one_hot(std::span<const Label> labels, std::size_t num_classes = kNumClasses) {
  Matrix out(num_classes, labels.size());
  for (std::size_t j = 0; j < labels.size(); ++j) {
    if (labels[j] >= num_classes) {
      throw std::out_of_range("one_hot: class " + std::to_string(labels[j]) + " out of range");
    }
    out(labels[j], j) = 1.0;
  }
  return out;
}

struct Batch {
  Matrix x;                   // features x batch
  Matrix y;                   // one-hot targets
  std::vector<Label> labels;
};

/// Endless stream of shuffled mini-batches. Each epoch is a fresh
/// permutation; when batch_size does not divide n the last batch of the epoch
/// is short, so one epoch is ceil(n / batch_size) batches.
class BatchStream {
 public:
  BatchStream(const Dataset& data, std::size_t batch_size, Rng rng)
      : data_(&data), batch_size_(batch_size), rng_(std::move(rng)) {
    if (batch_size_ == 0) throw std::invalid_argument("batch size must be positive");
    if (data.size() == 0) throw std::invalid_argument("cannot batch an empty dataset");
    order_.resize(data.size());
    std::iota(order_.begin(), order_.end(), std::size_t{0});
  }

  [[nodiscard]] std::size_t batches_per_epoch() const noexcept {
    return (data_->size() + batch_size_ - 1) / batch_size_;
  }
  [[nodiscard]] std::size_t epoch() const noexcept { return epoch_; }
  /// True when the batch returned by the last next() closed an epoch.
  [[nodiscard]] bool epoch_finished() const noexcept { return cursor_ == 0 && started_; }
  [[nodiscard]] std::span<const std::size_t> order() const noexcept { return order_; }
  [[nodiscard]] const Rng& rng() const noexcept { return rng_; }

  Batch next() {
    if (cursor_ == 0) {
      std::shuffle(order_.begin(), order_.end(), rng_);
      if (started_) ++epoch_;
      started_ = true;
    }
    const std::size_t end = std::min(cursor_ + batch_size_, order_.size());
    const std::span<const std::size_t> idx(order_.data() + cursor_, end - cursor_);
    Batch b;
    b.x = gather_columns(data_->images, idx);
    b.labels.reserve(idx.size());
    for (auto i : idx) b.labels.push_back(data_->labels[i]);
    b.y = one_hot(b.labels);
    cursor_ = end == order_.size() ? 0 : end;
    return b;
  }

 private:
  const Dataset* data_;
  std::size_t batch_size_;
  Rng rng_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
  std::size_t epoch_ = 0;
  bool started_ = false;
};

/// All batches of one epoch.
inline std::vector<Batch> epoch_batches(const Dataset& data, std::size_t batch_size, Rng& rng) {
  BatchStream stream(data, batch_size, rng);
  std::vector<Batch> out;
  for (std::size_t i = 0; i < stream.batches_per_epoch(); ++i) out.push_back(stream.next());
  rng = stream.rng();
  return out;
}

struct DatasetSplits {
  Dataset train;
  Dataset test;
};

namespace detail {

inline std::filesystem::path find_idx_file(const std::filesystem::path& dir, const std::string& stem) {
  for (const char* suffix : {"", ".gz"}) {
    auto p = dir / (stem + suffix);
    if (std::filesystem::exists(p)) return p;
  }
  throw DataError("missing " + (dir / stem).string() + "[.gz]");
}

}  // namespace detail

/// Loads `<data_dir>/<name>/{train,t10k}-{images-idx3,labels-idx1}-ubyte[.gz]`,
/// falling back to `<data_dir>` itself when the sub-directory does not exist.
inline DatasetSplits load_dataset(const std::filesystem::path& data_dir, const std::string& name) {
  auto dir = data_dir / name;
  if (!std::filesystem::is_directory(dir)) dir = data_dir;
  auto load = [&](const std::string& split) {
    auto images = load_idx_images(detail::find_idx_file(dir, split + "-images-idx3-ubyte"));
    auto labels = load_idx_labels(detail::find_idx_file(dir, split + "-labels-idx1-ubyte"));
    return normalize(images, std::move(labels), name + "/" + split);
  };
  return {load("train"), load("t10k")};
}

}  // namespace pinit

#endif  // PINIT_MNIST_HPP
