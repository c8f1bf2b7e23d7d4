#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "poolnet/random.hpp"
#include "poolnet/tensor.hpp"

namespace poolnet {

enum class Split { Train, Test, Validation };

std::string_view to_string(Split s);

/// Raw 8-bit pixels (N, 3, 32, 32) plus labels. Pixels are mapped to [-1, 1]
/// by preprocess() when a batch is gathered.
struct Dataset {
  Tensor<unsigned char> pixels;
  std::vector<int> labels;
  Split split = Split::Train;

  std::size_t size() const noexcept { return labels.size(); }
  Shape sample_shape() const noexcept { return {1, pixels.shape().c, pixels.shape().h, pixels.shape().w}; }

  /// Copy of the listed samples, in order.
  Dataset subset(std::span<const std::size_t> indices) const;
  Dataset head(std::size_t count) const;

  /// Count of each label 0..9.
  std::vector<std::size_t> histogram() const;
};

class DataError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

inline constexpr std::size_t kCifarSide = 32;
inline constexpr std::size_t kCifarChannels = 3;
inline constexpr std::size_t kCifarRecord = 1 + kCifarChannels * kCifarSide * kCifarSide;

/// One CIFAR-10 binary batch file. Throws DataError on missing file,
/// truncated record or a label byte above 9.
Dataset load_cifar10_file(const std::filesystem::path &file, Split split);

/// data_batch_1..5.bin and test_batch.bin from `dir`.
std::pair<Dataset, Dataset> load_cifar10(const std::filesystem::path &dir);

/// True when all six batch files exist in `dir`.
bool cifar10_present(const std::filesystem::path &dir);

/// byte / 255 * 2 - 1
template <typename T = float> constexpr T preprocess(unsigned char byte) noexcept {
  return static_cast<T>(byte) / T(255) * T(2) - T(1);
}

struct AugmentPolicy {
  double flip_prob = 0.5;
  int max_shift = 4;
  float fill = 0.0f;
  bool enabled = true;
};

/// Random choices for one augmented sample.
struct AugmentDraw {
  bool flip = false;
  int dx = 0;
  int dy = 0;
};

AugmentDraw draw_augment(const AugmentPolicy &policy, Rng &rng);

/// Horizontal flip (if drawn) then out[y][x] = in[y + dy][x + dx], with
/// out-of-range sources set to `fill`. `in` and `out` are one (C, H, W) sample
/// and must not alias.
template <typename T>
void apply_augment(std::span<const T> in, std::span<T> out, const Shape &sample, const AugmentDraw &draw, T fill);

/// Augmented copy of a (1, C, H, W) image; the input is never modified.
template <typename T> Tensor<T> augment(const Tensor<T> &image, const AugmentPolicy &policy, Rng &rng);

/// Preprocessed (and optionally augmented) batch of the listed samples.
/// Sample i of the batch draws its augmentation from make_rng(augment_seed, i).
template <typename T>
Tensor<T> gather_batch(const Dataset &ds, std::span<const std::size_t> indices, const AugmentPolicy *policy = nullptr,
                       std::uint64_t augment_seed = 0);

std::vector<int> gather_labels(const Dataset &ds, std::span<const std::size_t> indices);

/// Reproducible N(0, 1) tensors of shape (1, channels, extent, extent);
/// element i of the stream depends only on (seed, i).
class GaussianStream {
public:
  GaussianStream(std::size_t extent, std::size_t channels, std::uint64_t seed);

  template <typename T> Tensor<T> at(std::size_t index) const;

  std::size_t extent() const noexcept { return extent_; }
  std::size_t channels() const noexcept { return channels_; }

private:
  std::size_t extent_;
  std::size_t channels_;
  std::uint64_t seed_;
};

/// `count` tensors from a GaussianStream.
template <typename T>
std::vector<Tensor<T>> gaussian_inputs(std::size_t extent, std::size_t channels, std::size_t count, std::uint64_t seed);

/// Seeded split of `train` into (remaining train, validation of `count` samples).
std::pair<Dataset, Dataset> split_validation(const Dataset &train, std::size_t count, std::uint64_t seed);

/// Learnable stand-in with CIFAR-10 geometry: each class is a fixed smooth
/// colour template plus per-sample noise and a random shift. Balanced labels.
Dataset synthetic_cifar_like(std::size_t count, std::uint64_t seed, Split split = Split::Train);

// Raw tensor dump: "PNRT" magic, u32 dtype code (1 u8, 2 f32, 3 f64),
// 4 x u64 shape, then little-endian values.
template <typename T> void write_raw_tensor(std::ostream &os, const Tensor<T> &t);
template <typename T> Tensor<T> read_raw_tensor(std::istream &is);
template <typename T> void write_raw_tensor(const std::filesystem::path &file, const Tensor<T> &t);
template <typename T> Tensor<T> read_raw_tensor(const std::filesystem::path &file);

} // namespace poolnet
