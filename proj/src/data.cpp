#include "poolnet/data.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <random>

namespace poolnet {

std::string_view to_string(Split s) {
  switch (s) {
  case Split::Train:
    return "train";
  case Split::Test:
    return "test";
  case Split::Validation:
    return "validation";
  }
  return "?";
}

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
  if (indices.empty())
    throw std::invalid_argument("Dataset::subset: empty index list");
  const Shape s = pixels.shape();
  Dataset out;
  out.split = split;
  out.pixels = Tensor<unsigned char>(Shape{indices.size(), s.c, s.h, s.w});
  out.labels.reserve(indices.size());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= size())
      throw std::out_of_range("Dataset::subset: index " + std::to_string(indices[i]) + " out of range");
    std::ranges::copy(pixels.sample(indices[i]), out.pixels.sample(i).begin());
    out.labels.push_back(labels[indices[i]]);
  }
  return out;
}

Dataset Dataset::head(std::size_t count) const {
  std::vector<std::size_t> idx(std::min(count, size()));
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  return subset(idx);
}

std::vector<std::size_t> Dataset::histogram() const {
  std::vector<std::size_t> h(10, 0);
  for (int l : labels)
    if (l >= 0 && l < 10)
      ++h[static_cast<std::size_t>(l)];
  return h;
}

// ---------------------------------------------------------------------------
// CIFAR-10 binary

Dataset load_cifar10_file(const std::filesystem::path &file, Split split) {
  std::ifstream in(file, std::ios::binary);
  if (!in)
    throw DataError("cannot open CIFAR-10 batch '" + file.string() + "'");
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.empty() || bytes.size() % kCifarRecord != 0)
    throw DataError("truncated record in '" + file.string() + "': " + std::to_string(bytes.size()) +
                    " bytes is not a multiple of " + std::to_string(kCifarRecord));
  const std::size_t n = bytes.size() / kCifarRecord;
  Dataset ds;
  ds.split = split;
  ds.pixels = Tensor<unsigned char>(Shape{n, kCifarChannels, kCifarSide, kCifarSide});
  ds.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const unsigned char *rec = bytes.data() + i * kCifarRecord;
    if (rec[0] > 9)
      throw DataError("corrupt label " + std::to_string(rec[0]) + " in record " + std::to_string(i) + " of '" +
                      file.string() + "'");
    ds.labels[i] = rec[0];
    std::memcpy(ds.pixels.sample(i).data(), rec + 1, kCifarRecord - 1);
  }
  return ds;
}

namespace {

const std::array<const char *, 6> kBatchFiles = {"data_batch_1.bin", "data_batch_2.bin", "data_batch_3.bin",
                                                 "data_batch_4.bin", "data_batch_5.bin", "test_batch.bin"};

Dataset concat(const std::vector<Dataset> &parts, Split split) {
  std::size_t n = 0;
  for (const auto &p : parts)
    n += p.size();
  Dataset out;
  out.split = split;
  out.pixels = Tensor<unsigned char>(Shape{n, kCifarChannels, kCifarSide, kCifarSide});
  auto dst = out.pixels.data().begin();
  for (const auto &p : parts) {
    dst = std::ranges::copy(p.pixels.data(), dst).out;
    out.labels.insert(out.labels.end(), p.labels.begin(), p.labels.end());
  }
  return out;
}

} // namespace

bool cifar10_present(const std::filesystem::path &dir) {
  std::error_code ec;
  return std::ranges::all_of(kBatchFiles, [&](const char *f) { return std::filesystem::is_regular_file(dir / f, ec); });
}

std::pair<Dataset, Dataset> load_cifar10(const std::filesystem::path &dir) {
  for (const char *f : kBatchFiles)
    if (!std::filesystem::exists(dir / f))
      throw DataError("missing CIFAR-10 file '" + (dir / f).string() + "'");
  std::vector<Dataset> train;
  for (std::size_t i = 0; i < 5; ++i)
    train.push_back(load_cifar10_file(dir / kBatchFiles[i], Split::Train));
  return {concat(train, Split::Train), load_cifar10_file(dir / kBatchFiles[5], Split::Test)};
}

// ---------------------------------------------------------------------------
// Augmentation

AugmentDraw draw_augment(const AugmentPolicy &policy, Rng &rng) {
  AugmentDraw d;
  if (!policy.enabled)
    return d;
  std::bernoulli_distribution flip(policy.flip_prob);
  std::uniform_int_distribution<int> shift(-policy.max_shift, policy.max_shift);
  d.flip = flip(rng);
  d.dx = shift(rng);
  d.dy = shift(rng);
  return d;
}

template <typename T>
void apply_augment(std::span<const T> in, std::span<T> out, const Shape &sample, const AugmentDraw &draw, T fill) {
  if (in.size() != sample.sample() || out.size() != sample.sample())
    throw ShapeError("apply_augment: buffer size does not match sample shape " + sample.str());
  const auto h = static_cast<std::ptrdiff_t>(sample.h);
  const auto w = static_cast<std::ptrdiff_t>(sample.w);
  for (std::size_t c = 0; c < sample.c; ++c) {
    const T *src = in.data() + c * sample.plane();
    T *dst = out.data() + c * sample.plane();
    for (std::ptrdiff_t y = 0; y < h; ++y)
      for (std::ptrdiff_t x = 0; x < w; ++x) {
        const std::ptrdiff_t sy = y + draw.dy;
        const std::ptrdiff_t sx = x + draw.dx;
        if (sy < 0 || sy >= h || sx < 0 || sx >= w) {
          dst[y * w + x] = fill;
          continue;
        }
        const std::ptrdiff_t fx = draw.flip ? w - 1 - sx : sx;
        dst[y * w + x] = src[sy * w + fx];
      }
  }
}

template <typename T> Tensor<T> augment(const Tensor<T> &image, const AugmentPolicy &policy, Rng &rng) {
  if (image.shape().n != 1)
    throw ShapeError("augment: expected a single image, got " + image.shape().str());
  Tensor<T> out(image.shape());
  apply_augment<T>(image.data(), out.data(), image.shape(), draw_augment(policy, rng), static_cast<T>(policy.fill));
  return out;
}

template <typename T>
Tensor<T> gather_batch(const Dataset &ds, std::span<const std::size_t> indices, const AugmentPolicy *policy,
                       std::uint64_t augment_seed) {
  if (indices.empty())
    throw std::invalid_argument("gather_batch: empty batch");
  const Shape s = ds.sample_shape();
  Tensor<T> batch(Shape{indices.size(), s.c, s.h, s.w});
  std::vector<T> scratch(s.sample());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= ds.size())
      throw std::out_of_range("gather_batch: index out of range");
    const auto raw = ds.pixels.sample(indices[i]);
    std::ranges::transform(raw, scratch.begin(), [](unsigned char b) { return preprocess<T>(b); });
    auto dst = batch.sample(i);
    if (policy && policy->enabled) {
      Rng rng = make_rng(augment_seed, i);
      apply_augment<T>(scratch, dst, s, draw_augment(*policy, rng), static_cast<T>(policy->fill));
    } else {
      std::ranges::copy(scratch, dst.begin());
    }
  }
  return batch;
}

std::vector<int> gather_labels(const Dataset &ds, std::span<const std::size_t> indices) {
  std::vector<int> out;
  out.reserve(indices.size());
  for (std::size_t i : indices)
    out.push_back(ds.labels.at(i));
  return out;
}

// ---------------------------------------------------------------------------
// Gaussian inputs

GaussianStream::GaussianStream(std::size_t extent, std::size_t channels, std::uint64_t seed)
    : extent_(extent), channels_(channels), seed_(seed) {
  if (extent == 0 || channels == 0)
    throw std::invalid_argument("GaussianStream: extent and channels must be >= 1");
}

template <typename T> Tensor<T> GaussianStream::at(std::size_t index) const {
  Tensor<T> t(Shape{1, channels_, extent_, extent_});
  Rng rng = make_rng(seed_, index);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (auto &v : t.data())
    v = static_cast<T>(normal(rng));
  return t;
}

template <typename T>
std::vector<Tensor<T>> gaussian_inputs(std::size_t extent, std::size_t channels, std::size_t count,
                                       std::uint64_t seed) {
  GaussianStream stream(extent, channels, seed);
  std::vector<Tensor<T>> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i)
    out.push_back(stream.at<T>(i));
  return out;
}

// ---------------------------------------------------------------------------
// Splits and synthetic data

std::pair<Dataset, Dataset> split_validation(const Dataset &train, std::size_t count, std::uint64_t seed) {
  if (count == 0 || count >= train.size())
    throw std::invalid_argument("split_validation: need 0 < count < " + std::to_string(train.size()));
  std::vector<std::size_t> idx(train.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  Rng rng = make_rng(seed, 0);
  std::shuffle(idx.begin(), idx.end(), rng);
  std::vector<std::size_t> val(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(count));
  std::vector<std::size_t> rest(idx.begin() + static_cast<std::ptrdiff_t>(count), idx.end());
  std::ranges::sort(val);
  std::ranges::sort(rest);
  Dataset v = train.subset(val);
  v.split = Split::Validation;
  return {train.subset(rest), std::move(v)};
}

Dataset synthetic_cifar_like(std::size_t count, std::uint64_t seed, Split split) {
  if (count == 0)
    throw std::invalid_argument("synthetic_cifar_like: count must be >= 1");
  constexpr std::size_t side = kCifarSide;
  constexpr std::size_t plane = side * side;
  // Templates depend only on the class, so train and test draws share them.
  std::vector<std::vector<double>> templates(10, std::vector<double>(kCifarChannels * plane));
  for (std::size_t k = 0; k < 10; ++k) {
    Rng rng = make_rng(0x5EED'C1A5ULL, k);
    std::uniform_real_distribution<double> phase(0.0, 2.0 * M_PI), freq(0.5, 3.0), amp(0.2, 0.45);
    for (std::size_t c = 0; c < kCifarChannels; ++c)
      for (int wave = 0; wave < 3; ++wave) {
        const double fy = freq(rng), fx = freq(rng), ph = phase(rng), a = amp(rng);
        for (std::size_t y = 0; y < side; ++y)
          for (std::size_t x = 0; x < side; ++x)
            templates[k][c * plane + y * side + x] +=
                a * std::sin(2.0 * M_PI * (fy * y + fx * x) / side + ph);
      }
  }
  Dataset ds;
  ds.split = split;
  ds.pixels = Tensor<unsigned char>(Shape{count, kCifarChannels, side, side});
  ds.labels.resize(count);
  std::vector<std::size_t> order(count);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng shuffle_rng = make_rng(seed, 0);
  std::shuffle(order.begin(), order.end(), shuffle_rng);
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t label = order[i] % 10;
    ds.labels[i] = static_cast<int>(label);
    Rng rng = make_rng(seed, i + 1);
    std::normal_distribution<double> noise(0.0, 0.35);
    std::uniform_int_distribution<int> shift(-3, 3);
    const int dy = shift(rng), dx = shift(rng);
    auto dst = ds.pixels.sample(i);
    for (std::size_t c = 0; c < kCifarChannels; ++c)
      for (std::size_t y = 0; y < side; ++y)
        for (std::size_t x = 0; x < side; ++x) {
          const std::size_t ty = static_cast<std::size_t>(static_cast<int>(y + side) + dy) % side;
          const std::size_t tx = static_cast<std::size_t>(static_cast<int>(x + side) + dx) % side;
          const double v = std::clamp(templates[label][c * plane + ty * side + tx] + noise(rng), -1.0, 1.0);
          dst[c * plane + y * side + x] = static_cast<unsigned char>(std::lround((v + 1.0) * 127.5));
        }
  }
  return ds;
}

// ---------------------------------------------------------------------------
// Raw dump

namespace {

constexpr std::array<char, 4> kMagic = {'P', 'N', 'R', 'T'};

template <typename T> constexpr std::uint32_t dtype_code() {
  if constexpr (std::is_same_v<T, unsigned char>)
    return 1;
  else if constexpr (std::is_same_v<T, float>)
    return 2;
  else
    return 3;
}

template <typename U> void put_le(std::ostream &os, U value) {
  std::array<char, sizeof(U)> b;
  std::memcpy(b.data(), &value, sizeof(U));
  if constexpr (std::endian::native == std::endian::big)
    std::ranges::reverse(b);
  os.write(b.data(), sizeof(U));
}

template <typename U> U get_le(std::istream &is) {
  std::array<char, sizeof(U)> b;
  if (!is.read(b.data(), sizeof(U)))
    throw DataError("raw tensor: unexpected end of file");
  if constexpr (std::endian::native == std::endian::big)
    std::ranges::reverse(b);
  U value;
  std::memcpy(&value, b.data(), sizeof(U));
  return value;
}

} // namespace

template <typename T> void write_raw_tensor(std::ostream &os, const Tensor<T> &t) {
  os.write(kMagic.data(), kMagic.size());
  put_le<std::uint32_t>(os, dtype_code<T>());
  for (std::size_t e : {t.shape().n, t.shape().c, t.shape().h, t.shape().w})
    put_le<std::uint64_t>(os, e);
  for (T v : t.data())
    put_le<T>(os, v);
}

template <typename T> Tensor<T> read_raw_tensor(std::istream &is) {
  std::array<char, 4> magic{};
  if (!is.read(magic.data(), magic.size()) || magic != kMagic)
    throw DataError("not a raw tensor record");
  const auto code = get_le<std::uint32_t>(is);
  if (code != dtype_code<T>())
    throw DataError("raw tensor dtype code " + std::to_string(code) + " does not match requested type");
  Shape s;
  s.n = get_le<std::uint64_t>(is);
  s.c = get_le<std::uint64_t>(is);
  s.h = get_le<std::uint64_t>(is);
  s.w = get_le<std::uint64_t>(is);
  if (!s.valid())
    throw DataError("raw tensor has invalid shape " + s.str());
  Tensor<T> t(s);
  for (auto &v : t.data())
    v = get_le<T>(is);
  return t;
}

template <typename T> void write_raw_tensor(const std::filesystem::path &file, const Tensor<T> &t) {
  std::ofstream os(file, std::ios::binary | std::ios::trunc);
  if (!os)
    throw DataError("cannot write '" + file.string() + "'");
  write_raw_tensor(os, t);
  if (!os)
    throw DataError("write failed for '" + file.string() + "'");
}

template <typename T> Tensor<T> read_raw_tensor(const std::filesystem::path &file) {
  std::ifstream is(file, std::ios::binary);
  if (!is)
    throw DataError("cannot open '" + file.string() + "'");
  try {
    return read_raw_tensor<T>(is);
  } catch (const DataError &e) {
    throw DataError("'" + file.string() + "': " + e.what());
  }
}

template void apply_augment<float>(std::span<const float>, std::span<float>, const Shape &, const AugmentDraw &, float);
template void apply_augment<double>(std::span<const double>, std::span<double>, const Shape &, const AugmentDraw &,
                                    double);
template Tensor<float> augment(const Tensor<float> &, const AugmentPolicy &, Rng &);
template Tensor<double> augment(const Tensor<double> &, const AugmentPolicy &, Rng &);
template Tensor<float> gather_batch<float>(const Dataset &, std::span<const std::size_t>, const AugmentPolicy *,
                                          std::uint64_t);
template Tensor<double> gather_batch<double>(const Dataset &, std::span<const std::size_t>, const AugmentPolicy *,
                                            std::uint64_t);
template Tensor<float> GaussianStream::at<float>(std::size_t) const;
template Tensor<double> GaussianStream::at<double>(std::size_t) const;
template std::vector<Tensor<float>> gaussian_inputs<float>(std::size_t, std::size_t, std::size_t, std::uint64_t);
template std::vector<Tensor<double>> gaussian_inputs<double>(std::size_t, std::size_t, std::size_t, std::uint64_t);
template void write_raw_tensor<unsigned char>(std::ostream &, const Tensor<unsigned char> &);
template void write_raw_tensor<float>(std::ostream &, const Tensor<float> &);
template void write_raw_tensor<double>(std::ostream &, const Tensor<double> &);
template Tensor<unsigned char> read_raw_tensor<unsigned char>(std::istream &);
template Tensor<float> read_raw_tensor<float>(std::istream &);
template Tensor<double> read_raw_tensor<double>(std::istream &);
template void write_raw_tensor<unsigned char>(const std::filesystem::path &, const Tensor<unsigned char> &);
template void write_raw_tensor<float>(const std::filesystem::path &, const Tensor<float> &);
template void write_raw_tensor<double>(const std::filesystem::path &, const Tensor<double> &);
template Tensor<unsigned char> read_raw_tensor<unsigned char>(const std::filesystem::path &);
template Tensor<float> read_raw_tensor<float>(const std::filesystem::path &);
template Tensor<double> read_raw_tensor<double>(const std::filesystem::path &);

} // namespace poolnet
