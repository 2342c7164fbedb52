#include "pdsep/mixing.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "pdsep/error.hpp"

namespace pdsep {

const char* to_string(MixKind kind) { return kind == MixKind::Instantaneous ? "inst" : "conv"; }

MixKind mix_kind_from_string(const std::string& s) {
  if (s == "inst" || s == "instantaneous") return MixKind::Instantaneous;
  if (s == "conv" || s == "convolutive") return MixKind::Convolutive;
  throw InvalidArgument("unknown mixing kind '" + s + "' (expected inst or conv)");
}

void validate(const MixingSpec& spec) {
  if (spec.sources < 2) throw InvalidArgument("mixing spec: need at least two sources");
  if (spec.kind == MixKind::Instantaneous && !spec.kernel_shape.empty())
    throw InvalidArgument("mixing spec: instantaneous mixing takes scalar weights");
  if (spec.kind == MixKind::Convolutive) {
    if (spec.kernel_shape.empty() || spec.kernel_shape.size() > 2)
      throw InvalidArgument("mixing spec: convolutive kernels must be 1-D or 2-D");
    for (auto e : spec.kernel_shape)
      if (e == 0) throw InvalidArgument("mixing spec: empty kernel");
  }
  if (spec.coefficients.size() != spec.sources * spec.kernel_size())
    throw InvalidArgument("mixing spec: expected " + std::to_string(spec.sources * spec.kernel_size()) +
                          " coefficients, got " + std::to_string(spec.coefficients.size()));
  bool nonzero = false;
  for (float c : spec.coefficients) {
    if (!std::isfinite(c)) throw InvalidArgument("mixing spec: non-finite coefficient");
    nonzero = nonzero || c != 0.0f;
  }
  if (!nonzero) throw InvalidArgument("mixing spec: all coefficients are zero");
}

Mixture peak_normalize(std::vector<double> raw) {
  double peak = 0.0;
  for (double v : raw) peak = std::max(peak, std::abs(v));
  if (!(peak > 0.0) || !std::isfinite(peak)) throw InvalidArgument("mixing: mixture is identically zero or not finite");
  Mixture m;
  m.scale = 1.0 / peak;
  for (double& v : raw) v *= m.scale;
  m.values = std::move(raw);
  return m;
}

namespace {

void check_sources(const char* who, std::span<const SignalView> sources) {
  if (sources.empty()) throw InvalidArgument(std::string(who) + ": no sources");
  for (const auto& s : sources)
    if (s.size() != sources[0].size())
      throw InvalidArgument(std::string(who) + ": source length mismatch " + std::to_string(s.size()) + " vs " +
                            std::to_string(sources[0].size()));
  if (sources[0].empty()) throw InvalidArgument(std::string(who) + ": empty sources");
}

}  // namespace

std::vector<double> mix_instantaneous_raw(std::span<const SignalView> sources, std::span<const double> weights) {
  check_sources("mix_instantaneous", sources);
  if (weights.size() != sources.size())
    throw InvalidArgument("mix_instantaneous: " + std::to_string(weights.size()) + " weights for " +
                          std::to_string(sources.size()) + " sources");
  if (std::all_of(weights.begin(), weights.end(), [](double w) { return w == 0.0; }))
    throw InvalidArgument("mix_instantaneous: all weights are zero");
  std::vector<double> x(sources[0].size(), 0.0);
  for (std::size_t i = 0; i < sources.size(); ++i)
    for (std::size_t t = 0; t < x.size(); ++t) x[t] += weights[i] * sources[i][t];
  return x;
}

Mixture mix_instantaneous(std::span<const SignalView> sources, std::span<const double> weights) {
  return peak_normalize(mix_instantaneous_raw(sources, weights));
}

std::vector<double> convolve_causal(SignalView kernel, SignalView signal) {
  if (kernel.empty()) throw InvalidArgument("convolve: empty kernel");
  std::vector<double> y(signal.size(), 0.0);
  for (std::size_t t = 0; t < y.size(); ++t) {
    double acc = 0.0;
    const std::size_t kmax = std::min(kernel.size() - 1, t);
    for (std::size_t k = 0; k <= kmax; ++k) acc += kernel[k] * signal[t - k];
    y[t] = acc;
  }
  return y;
}

std::vector<double> convolve_same_2d(SignalView kernel, std::size_t kh, std::size_t kw, SignalView plane,
                                     std::size_t h, std::size_t w) {
  if (kh == 0 || kw == 0 || kernel.size() != kh * kw) throw InvalidArgument("convolve_2d: kernel shape mismatch");
  if (plane.size() != h * w) throw InvalidArgument("convolve_2d: plane shape mismatch");
  const auto ch = static_cast<std::ptrdiff_t>(kh / 2), cw = static_cast<std::ptrdiff_t>(kw / 2);
  std::vector<double> y(h * w, 0.0);
  for (std::size_t i = 0; i < h; ++i)
    for (std::size_t j = 0; j < w; ++j) {
      double acc = 0.0;
      for (std::size_t a = 0; a < kh; ++a) {
        const std::ptrdiff_t si = static_cast<std::ptrdiff_t>(i) - static_cast<std::ptrdiff_t>(a) + ch;
        if (si < 0 || si >= static_cast<std::ptrdiff_t>(h)) continue;
        for (std::size_t b = 0; b < kw; ++b) {
          const std::ptrdiff_t sj = static_cast<std::ptrdiff_t>(j) - static_cast<std::ptrdiff_t>(b) + cw;
          if (sj < 0 || sj >= static_cast<std::ptrdiff_t>(w)) continue;
          acc += kernel[a * kw + b] * plane[static_cast<std::size_t>(si) * w + static_cast<std::size_t>(sj)];
        }
      }
      y[i * w + j] = acc;
    }
  return y;
}

std::vector<double> mix_convolutive_raw(std::span<const SignalView> sources, const Shape& signal_shape,
                                        std::span<const SignalView> kernels, const Shape& kernel_shape) {
  check_sources("mix_convolutive", sources);
  if (kernels.size() != sources.size())
    throw InvalidArgument("mix_convolutive: " + std::to_string(kernels.size()) + " kernels for " +
                          std::to_string(sources.size()) + " sources");
  if (shape_size(signal_shape) != sources[0].size())
    throw InvalidArgument("mix_convolutive: signal shape " + shape_string(signal_shape) + " does not match source length");
  const std::size_t ksize = shape_size(kernel_shape);
  if (kernel_shape.empty() || ksize == 0) throw InvalidArgument("mix_convolutive: empty kernel");
  for (const auto& k : kernels)
    if (k.size() != ksize) throw InvalidArgument("mix_convolutive: kernels must share one length");
  const bool two_d = signal_shape.size() == 3;
  if (two_d != (kernel_shape.size() == 2))
    throw InvalidArgument("mix_convolutive: kernel rank does not match signal rank");

  const std::size_t channels = signal_shape[0];
  const std::size_t plane = sources[0].size() / channels;
  std::vector<double> x(sources[0].size(), 0.0);
  for (std::size_t i = 0; i < sources.size(); ++i)
    for (std::size_t c = 0; c < channels; ++c) {
      SignalView s = sources[i].subspan(c * plane, plane);
      std::vector<double> y = two_d ? convolve_same_2d(kernels[i], kernel_shape[0], kernel_shape[1], s, signal_shape[1],
                                                       signal_shape[2])
                                    : convolve_causal(kernels[i], s);
      for (std::size_t t = 0; t < plane; ++t) x[c * plane + t] += y[t];
    }
  return x;
}

Mixture mix_convolutive(std::span<const SignalView> sources, const Shape& signal_shape,
                        std::span<const SignalView> kernels, const Shape& kernel_shape) {
  return peak_normalize(mix_convolutive_raw(sources, signal_shape, kernels, kernel_shape));
}

MixingSpec random_spec(MixKind kind, std::size_t n, const Shape& kernel_shape, std::uint64_t seed) {
  if (n < 2) throw InvalidArgument("random_spec: need at least two sources");
  MixingSpec spec;
  spec.kind = kind;
  spec.sources = static_cast<std::uint32_t>(n);
  spec.seed = seed;
  if (kind == MixKind::Convolutive) {
    if (kernel_shape.empty()) throw InvalidArgument("random_spec: convolutive mixing needs a kernel shape");
    spec.kernel_shape = kernel_shape;
  }
  Rng rng(seed);
  spec.coefficients.resize(n * spec.kernel_size());
  // Redraw in the (probability zero) event of an all-zero draw.
  do {
    for (auto& c : spec.coefficients) c = static_cast<float>(rng.normal());
  } while (std::all_of(spec.coefficients.begin(), spec.coefficients.end(), [](float c) { return c == 0.0f; }));
  validate(spec);
  return spec;
}

std::vector<double> apply_spec(std::span<const SignalView> sources, const Shape& signal_shape, MixingSpec& spec) {
  validate(spec);
  if (sources.size() != spec.sources)
    throw InvalidArgument("apply_spec: spec mixes " + std::to_string(spec.sources) + " sources, got " +
                          std::to_string(sources.size()));
  const std::size_t ks = spec.kernel_size();
  std::vector<double> coeffs(spec.coefficients.begin(), spec.coefficients.end());
  Mixture m;
  if (spec.kind == MixKind::Instantaneous) {
    m = mix_instantaneous(sources, coeffs);
  } else {
    std::vector<SignalView> kernels;
    for (std::size_t i = 0; i < spec.sources; ++i) kernels.emplace_back(coeffs.data() + i * ks, ks);
    m = mix_convolutive(sources, signal_shape, kernels, spec.kernel_shape);
  }
  spec.scale = static_cast<float>(m.scale);
  return std::move(m.values);
}

Shape default_kernel_shape(const Shape& signal_shape) {
  return signal_shape.size() == 3 ? Shape{3, 3} : Shape{8};
}

namespace {

void normalize_peak(std::vector<double>& v) {
  double peak = 0.0;
  for (double x : v) peak = std::max(peak, std::abs(x));
  if (peak > 0.0)
    for (double& x : v) x /= peak;
}

}  // namespace

std::vector<std::vector<double>> source_bank_1d(std::size_t length) {
  if (length < 8) throw InvalidArgument("source bank: length must be at least 8");
  const double two_pi = 2.0 * std::numbers::pi;
  const double n = static_cast<double>(length);
  std::vector<std::vector<double>> bank(4, std::vector<double>(length));
  for (std::size_t t = 0; t < length; ++t) {
    const double tt = static_cast<double>(t);
    bank[0][t] = std::sin(two_pi * 4.0 * tt / n);
    bank[1][t] = 2.0 * static_cast<double>((6 * t) % length) / n - 1.0;
    bank[2][t] = ((6 * t) / length) % 2 == 0 ? 1.0 : -1.0;
  }
  // Band-limited noise: harmonics 5..20 with fixed pseudo-random amplitude and phase.
  Rng rng(0x6e6f697365ULL);
  for (int k = 5; k <= 20; ++k) {
    const double amp = 0.5 + rng.uniform();
    const double phase = two_pi * rng.uniform();
    for (std::size_t t = 0; t < length; ++t)
      bank[3][t] += amp * std::sin(two_pi * k * static_cast<double>(t) / n + phase);
  }
  normalize_peak(bank[3]);
  return bank;
}

std::vector<std::vector<double>> source_bank_2d(std::size_t height, std::size_t width) {
  if (height < 4 || width < 4) throw InvalidArgument("source bank: images must be at least 4x4");
  const double two_pi = 2.0 * std::numbers::pi;
  const double h = static_cast<double>(height), w = static_cast<double>(width);
  std::vector<std::vector<double>> bank(4, std::vector<double>(height * width, 0.0));
  Rng rng(0x696d616765ULL);
  double amp[3], fi[3], fj[3], ph[3];
  for (int k = 0; k < 3; ++k) {
    amp[k] = 0.5 + rng.uniform();
    fi[k] = 1.0 + std::floor(4.0 * rng.uniform());
    fj[k] = 1.0 + std::floor(4.0 * rng.uniform());
    ph[k] = two_pi * rng.uniform();
  }
  for (std::size_t i = 0; i < height; ++i)
    for (std::size_t j = 0; j < width; ++j) {
      const double y = static_cast<double>(i), x = static_cast<double>(j);
      const std::size_t p = i * width + j;
      bank[0][p] = std::sin(two_pi * (3.0 * y / h + 2.0 * x / w));
      bank[1][p] = ((i * 4 / height) + (j * 4 / width)) % 2 == 0 ? 1.0 : -1.0;
      const double r = std::hypot(y - h / 2.0, x - w / 2.0);
      bank[2][p] = std::cos(two_pi * r / 8.0);
      for (int k = 0; k < 3; ++k) bank[3][p] += amp[k] * std::sin(two_pi * (fi[k] * y / h + fj[k] * x / w) + ph[k]);
    }
  for (auto& img : bank) normalize_peak(img);
  return bank;
}

}  // namespace pdsep
