#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "pdsep/random.hpp"
#include "pdsep/tensor.hpp"

namespace pdsep {

enum class MixKind : std::uint32_t { Instantaneous = 0, Convolutive = 1 };

const char* to_string(MixKind kind);  // "inst" / "conv"
MixKind mix_kind_from_string(const std::string& s);

/// Everything needed to regenerate one mixture from its sources.
struct MixingSpec {
  MixKind kind = MixKind::Instantaneous;
  std::uint32_t sources = 0;
  // Empty for instantaneous mixing; {K} or {KH,KW} for convolutive.
  Shape kernel_shape;
  // sources * prod(kernel_shape) coefficients, source-major.
  std::vector<float> coefficients;
  // Peak normalization factor applied after mixing.
  float scale = 1.0f;
  std::uint64_t seed = 0;

  std::size_t kernel_size() const { return shape_size(kernel_shape); }
  std::span<const float> coefficients_of(std::size_t i) const {
    return std::span<const float>(coefficients).subspan(i * kernel_size(), kernel_size());
  }
  bool operator==(const MixingSpec&) const = default;
};

/// Throws InvalidArgument when a MixingSpec invariant is violated.
void validate(const MixingSpec& spec);

using SignalView = std::span<const double>;

struct Mixture {
  std::vector<double> values;  // peak-normalized
  double scale = 1.0;          // values = scale * raw
};

/// Divide by max|x|. Throws when x is identically zero.
Mixture peak_normalize(std::vector<double> raw);

/// sum_i w_i * s_i, without normalization.
std::vector<double> mix_instantaneous_raw(std::span<const SignalView> sources, std::span<const double> weights);
Mixture mix_instantaneous(std::span<const SignalView> sources, std::span<const double> weights);

/// y[t] = sum_v a[t-v] s[v] for t < length(s): causal, zero-padded, truncated.
std::vector<double> convolve_causal(SignalView kernel, SignalView signal);

/// Same-size zero-padded 2-D convolution of an HxW plane with a KHxKW kernel
/// centred at (KH/2, KW/2): y[i,j] = sum_{a,b} k[a,b] x[i-a+KH/2, j-b+KW/2].
std::vector<double> convolve_same_2d(SignalView kernel, std::size_t kh, std::size_t kw, SignalView plane,
                                     std::size_t h, std::size_t w);

/// Convolve each source (shape [C,T] or [C,H,W], channels independently) with
/// its kernel and sum, without normalization.
std::vector<double> mix_convolutive_raw(std::span<const SignalView> sources, const Shape& signal_shape,
                                        std::span<const SignalView> kernels, const Shape& kernel_shape);
Mixture mix_convolutive(std::span<const SignalView> sources, const Shape& signal_shape,
                        std::span<const SignalView> kernels, const Shape& kernel_shape);

/// Weights or kernel taps drawn i.i.d. from N(0,1), rounded to 32-bit.
MixingSpec random_spec(MixKind kind, std::size_t n, const Shape& kernel_shape, std::uint64_t seed);

/// Mix `sources` according to `spec`, filling spec.scale. Returns the
/// normalized mixture.
std::vector<double> apply_spec(std::span<const SignalView> sources, const Shape& signal_shape, MixingSpec& spec);

/// Default kernel shape for a signal shape: {8} for [C,T], {3,3} for [C,H,W].
Shape default_kernel_shape(const Shape& signal_shape);

/// Built-in analytic sources, each peak-normalized to 1.
/// 1-D bank order: sinusoid, sawtooth, square, band-limited noise.
std::vector<std::vector<double>> source_bank_1d(std::size_t length);
/// 2-D bank order: diagonal stripes, checkerboard, rings, smooth noise.
std::vector<std::vector<double>> source_bank_2d(std::size_t height, std::size_t width);

}  // namespace pdsep
