#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pdsep/random.hpp"
#include "pdsep/tensor.hpp"

namespace pdsep {

struct CriticLayer {
  std::size_t channels = 1;
  std::size_t kernel = 3;
  std::size_t stride = 1;

  bool operator==(const CriticLayer&) const = default;
};

/// Shape of every generator and critic in a model bank.
///
/// The generator is a U-net: `channels.size()` stride-2 encoder levels, the
/// same number of decoder levels (nearest x2 upsample then a stride-1 conv),
/// additive skips from encoder level l-1 into decoder level l, tanh output.
/// The critic is a stack of strided convs scored per patch and averaged.
struct ArchDescriptor {
  Shape input_shape{1, 256};  // [C,T] or [C,H,W]
  std::vector<std::size_t> channels{8, 16, 16, 16};
  // Indexed by decoder level; level 0 produces the output and never drops.
  std::vector<double> decoder_dropout{0.0, 0.0, 0.5, 0.5};
  std::size_t down_kernel = 4;
  std::size_t up_kernel = 3;
  std::vector<CriticLayer> critic{{8, 4, 2}, {16, 3, 2}, {1, 3, 1}};
  double leaky_slope = 0.2;

  std::size_t spatial_rank() const { return input_shape.size() - 1; }
  std::size_t depth() const { return channels.size(); }

  bool operator==(const ArchDescriptor&) const = default;
};

ArchDescriptor default_arch_1d(std::size_t length = 256);
ArchDescriptor default_arch_2d(std::size_t height = 32, std::size_t width = 32, std::size_t channels = 1);

/// Throws InvalidArgument describing the first violated constraint.
void validate(const ArchDescriptor& arch);

/// Input samples seen by one critic output cell along one spatial axis.
std::size_t critic_receptive_field(const ArchDescriptor& arch);

/// Ordered, uniquely named parameter tensors.
class ParamSet {
 public:
  void add(std::string name, Tensor value);
  std::size_t size() const { return tensors_.size(); }
  const std::string& name(std::size_t i) const { return names_[i]; }
  Tensor& operator[](std::size_t i) { return tensors_[i]; }
  const Tensor& operator[](std::size_t i) const { return tensors_[i]; }
  const Tensor& at(const std::string& name) const;
  Tensor& at(const std::string& name);
  std::vector<Tensor>& tensors() { return tensors_; }
  const std::vector<Tensor>& tensors() const { return tensors_; }
  const std::vector<std::string>& names() const { return names_; }

  void set_requires_grad(bool on);
  std::size_t parameter_count() const;

 private:
  std::vector<std::string> names_;
  std::vector<Tensor> tensors_;
};

/// Deep copy: values only, requires_grad preserved.
ParamSet clone(const ParamSet& params);

struct GeneratorOptions {
  // Dropout is the noise source and stays on at inference unless disabled
  // for debugging.
  bool dropout = true;
  // Debug: drop the skip into this decoder level (1..L-1); -1 keeps all.
  int ablate_skip = -1;
};

class Generator {
 public:
  Generator() = default;
  Generator(const ArchDescriptor& arch, std::uint64_t seed);

  Tensor forward(const Tensor& x, Rng& rng, const GeneratorOptions& opt = {}) const;

  const ArchDescriptor& arch() const { return arch_; }
  ParamSet& params() { return params_; }
  const ParamSet& params() const { return params_; }

 private:
  ArchDescriptor arch_;
  ParamSet params_;
};

/// Leaky-rectifier slopes chosen in one critic pass, one tensor per hidden
/// layer. With these held fixed the critic is affine in its input.
struct ActivationPattern {
  std::vector<Tensor> slopes;
};

/// Critic weights start from N(0, 0.02) truncated at this bound (the default
/// clipping bound).
inline constexpr double kCriticInitBound = 0.05;

class Critic {
 public:
  Critic() = default;
  Critic(const ArchDescriptor& arch, std::uint64_t seed);

  /// Mean patch score; `pattern`, when given, receives the activation slopes.
  Tensor forward(const Tensor& x, ActivationPattern* pattern = nullptr) const;

  /// Patch score map before averaging.
  Tensor patch_scores(const Tensor& x, ActivationPattern* pattern = nullptr) const;

  /// Gradient of the mean score with respect to x. Parameter gradients are
  /// left untouched.
  std::vector<float> input_gradient(const Tensor& x, ActivationPattern* pattern = nullptr) const;

  /// Linear part of the critic around the pass that produced `pattern`,
  /// applied to `direction`: <grad_x D, direction>. Differentiable in the
  /// parameters.
  Tensor directional_derivative(const Tensor& direction, const ActivationPattern& pattern) const;

  const ArchDescriptor& arch() const { return arch_; }
  ParamSet& params() { return params_; }
  const ParamSet& params() const { return params_; }

 private:
  Tensor scores(const ParamSet& params, const Tensor& x, ActivationPattern* pattern) const;

  ArchDescriptor arch_;
  ParamSet params_;
};

}  // namespace pdsep
