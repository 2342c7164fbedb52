#include "pdsep/nets.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "pdsep/error.hpp"

namespace pdsep {

ArchDescriptor default_arch_1d(std::size_t length) {
  ArchDescriptor a;
  a.input_shape = {1, length};
  return a;
}

ArchDescriptor default_arch_2d(std::size_t height, std::size_t width, std::size_t channels) {
  ArchDescriptor a;
  a.input_shape = {channels, height, width};
  a.channels = {8, 16, 32};
  a.decoder_dropout = {0.0, 0.5, 0.5};
  a.critic = {{8, 4, 2}, {16, 3, 2}, {1, 3, 1}};
  return a;
}

void validate(const ArchDescriptor& arch) {
  const std::size_t r = arch.input_shape.size();
  if (r != 2 && r != 3) throw InvalidArgument("arch: input shape must be [C,T] or [C,H,W], got " + shape_string(arch.input_shape));
  for (auto e : arch.input_shape)
    if (e == 0) throw InvalidArgument("arch: zero extent in input shape");
  const std::size_t depth = arch.channels.size();
  if (depth == 0) throw InvalidArgument("arch: generator needs at least one level");
  for (auto c : arch.channels)
    if (c == 0) throw InvalidArgument("arch: zero channel count");
  if (arch.decoder_dropout.size() != depth)
    throw InvalidArgument("arch: decoder_dropout needs one rate per level (" + std::to_string(depth) + ")");
  if (arch.decoder_dropout[0] != 0.0) throw InvalidArgument("arch: the output level cannot use dropout");
  for (double p : arch.decoder_dropout)
    if (!(p >= 0.0 && p < 1.0)) throw InvalidArgument("arch: dropout rates must lie in [0,1)");
  if (arch.down_kernel < 2 || arch.down_kernel % 2 != 0) throw InvalidArgument("arch: down_kernel must be even and >= 2");
  if (arch.up_kernel % 2 != 1) throw InvalidArgument("arch: up_kernel must be odd");
  const std::size_t factor = std::size_t{1} << depth;
  for (std::size_t d = 1; d < r; ++d)
    if (arch.input_shape[d] % factor != 0)
      throw InvalidArgument("arch: spatial extent " + std::to_string(arch.input_shape[d]) + " not divisible by 2^" +
                            std::to_string(depth));
  if (arch.critic.empty()) throw InvalidArgument("arch: critic needs at least one layer");
  if (arch.critic.back().channels != 1) throw InvalidArgument("arch: last critic layer must have one channel");
  for (const auto& l : arch.critic)
    if (l.channels == 0 || l.kernel == 0 || l.stride == 0) throw InvalidArgument("arch: invalid critic layer");
  if (!(arch.leaky_slope >= 0.0 && arch.leaky_slope < 1.0)) throw InvalidArgument("arch: leaky slope must lie in [0,1)");
}

std::size_t critic_receptive_field(const ArchDescriptor& arch) {
  std::size_t rf = 1, jump = 1;
  for (const auto& l : arch.critic) {
    rf += (l.kernel - 1) * jump;
    jump *= l.stride;
  }
  return rf;
}

// ---------------------------------------------------------------------------

void ParamSet::add(std::string name, Tensor value) {
  if (std::find(names_.begin(), names_.end(), name) != names_.end())
    throw InvalidArgument("params: duplicate name " + name);
  names_.push_back(std::move(name));
  tensors_.push_back(std::move(value));
}

const Tensor& ParamSet::at(const std::string& name) const {
  auto it = std::find(names_.begin(), names_.end(), name);
  if (it == names_.end()) throw InvalidArgument("params: no parameter named " + name);
  return tensors_[static_cast<std::size_t>(it - names_.begin())];
}

Tensor& ParamSet::at(const std::string& name) {
  return const_cast<Tensor&>(static_cast<const ParamSet&>(*this).at(name));
}

void ParamSet::set_requires_grad(bool on) {
  for (auto& t : tensors_) t.set_requires_grad(on);
}

std::size_t ParamSet::parameter_count() const {
  std::size_t n = 0;
  for (const auto& t : tensors_) n += t.size();
  return n;
}

ParamSet clone(const ParamSet& params) {
  ParamSet out;
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor t = params[i].detach();
    t.set_requires_grad(params[i].requires_grad());
    out.add(params.name(i), std::move(t));
  }
  return out;
}

// ---------------------------------------------------------------------------

namespace {

Shape kernel_shape(std::size_t spatial_rank, std::size_t out, std::size_t in, std::size_t k) {
  return spatial_rank == 1 ? Shape{out, in, k} : Shape{out, in, k, k};
}

// N(0, 0.02), redrawn beyond `bound` when one is given.
Tensor normal_tensor(const Shape& shape, Rng& rng, double bound) {
  std::vector<float> v(shape_size(shape));
  for (auto& x : v) {
    double d = rng.normal(0.0, 0.02);
    while (bound > 0.0 && std::abs(d) > bound) d = rng.normal(0.0, 0.02);
    x = static_cast<float>(d);
  }
  return Tensor(shape, std::move(v), true);
}

void add_conv(ParamSet& ps, const std::string& prefix, std::size_t spatial_rank, std::size_t out, std::size_t in,
              std::size_t k, Rng& rng, double bound = 0.0) {
  ps.add(prefix + ".weight", normal_tensor(kernel_shape(spatial_rank, out, in, k), rng, bound));
  ps.add(prefix + ".bias", Tensor::zeros({out}, true));
}

Tensor conv(std::size_t spatial_rank, const Tensor& x, const Tensor& w, const Tensor& b, std::size_t stride,
            std::size_t pad) {
  if (spatial_rank == 1) return conv1d(x, w, b, Conv1dOptions{stride, pad, pad});
  return conv2d(x, w, b, Conv2dOptions{stride, stride, pad, pad});
}

void check_input(const char* who, const ArchDescriptor& arch, const Tensor& x) {
  if (!x.defined() || x.shape() != arch.input_shape)
    throw InvalidArgument(std::string(who) + ": input shape " + (x.defined() ? shape_string(x.shape()) : "[]") +
                          " does not match descriptor " + shape_string(arch.input_shape));
}

}  // namespace

Generator::Generator(const ArchDescriptor& arch, std::uint64_t seed) : arch_(arch) {
  validate(arch_);
  Rng rng(seed);
  const std::size_t sr = arch_.spatial_rank();
  const std::size_t in_ch = arch_.input_shape[0];
  const std::size_t depth = arch_.depth();
  for (std::size_t l = 0; l < depth; ++l)
    add_conv(params_, "enc" + std::to_string(l), sr, arch_.channels[l], l == 0 ? in_ch : arch_.channels[l - 1],
             arch_.down_kernel, rng);
  for (std::size_t l = depth; l-- > 0;)
    add_conv(params_, "dec" + std::to_string(l), sr, l == 0 ? in_ch : arch_.channels[l - 1], arch_.channels[l],
             arch_.up_kernel, rng);
}

Tensor Generator::forward(const Tensor& x, Rng& rng, const GeneratorOptions& opt) const {
  check_input("generator", arch_, x);
  const std::size_t sr = arch_.spatial_rank();
  const std::size_t depth = arch_.depth();
  const float slope = static_cast<float>(arch_.leaky_slope);
  const std::size_t down_pad = (arch_.down_kernel - 2) / 2;
  const std::size_t up_pad = (arch_.up_kernel - 1) / 2;

  std::vector<Tensor> skips;
  skips.reserve(depth);
  Tensor h = x;
  for (std::size_t l = 0; l < depth; ++l) {
    const auto& w = params_[2 * l];
    const auto& b = params_[2 * l + 1];
    h = leaky_relu(conv(sr, h, w, b, 2, down_pad), slope);
    skips.push_back(h);
  }
  for (std::size_t l = depth; l-- > 0;) {
    // decoder levels are stored innermost first, after the encoder
    const std::size_t idx = 2 * depth + 2 * (depth - 1 - l);
    const auto& w = params_[idx];
    const auto& b = params_[idx + 1];
    h = conv(sr, upsample2x(h), w, b, 1, up_pad);
    if (l == 0) return tanh(h);
    h = leaky_relu(h, slope);
    if (opt.dropout && arch_.decoder_dropout[l] > 0.0) h = dropout(h, arch_.decoder_dropout[l], rng);
    if (opt.ablate_skip != static_cast<int>(l)) h = add(h, skips[l - 1]);
  }
  return h;  // unreachable: depth >= 1
}

// ---------------------------------------------------------------------------

Critic::Critic(const ArchDescriptor& arch, std::uint64_t seed) : arch_(arch) {
  validate(arch_);
  Rng rng(seed);
  const std::size_t sr = arch_.spatial_rank();
  std::size_t in_ch = arch_.input_shape[0];
  for (std::size_t l = 0; l < arch_.critic.size(); ++l) {
    add_conv(params_, "layer" + std::to_string(l), sr, arch_.critic[l].channels, in_ch, arch_.critic[l].kernel, rng,
             kCriticInitBound);
    in_ch = arch_.critic[l].channels;
  }
}

Tensor Critic::patch_scores(const Tensor& x, ActivationPattern* pattern) const { return scores(params_, x, pattern); }

std::vector<float> Critic::input_gradient(const Tensor& x, ActivationPattern* pattern) const {
  ParamSet frozen = clone(params_);
  frozen.set_requires_grad(false);
  Tensor xg = x.detach();
  xg.set_requires_grad(true);
  mean(scores(frozen, xg, pattern)).backward();
  return std::vector<float>(xg.grad().begin(), xg.grad().end());
}

Tensor Critic::scores(const ParamSet& params, const Tensor& x, ActivationPattern* pattern) const {
  check_input("critic", arch_, x);
  const std::size_t sr = arch_.spatial_rank();
  const float slope = static_cast<float>(arch_.leaky_slope);
  if (pattern) pattern->slopes.clear();
  Tensor h = x;
  const std::size_t n = arch_.critic.size();
  for (std::size_t l = 0; l < n; ++l) {
    const auto& layer = arch_.critic[l];
    const auto& w = params[2 * l];
    const auto& b = params[2 * l + 1];
    h = conv(sr, h, w, b, layer.stride, (layer.kernel - 1) / 2);
    if (l + 1 == n) break;
    if (pattern) {
      std::vector<float> s(h.size());
      auto hv = h.data();
      for (std::size_t i = 0; i < s.size(); ++i) s[i] = hv[i] > 0.0f ? 1.0f : slope;
      pattern->slopes.emplace_back(h.shape(), std::move(s));
    }
    h = leaky_relu(h, slope);
  }
  return h;
}

Tensor Critic::forward(const Tensor& x, ActivationPattern* pattern) const {
  return mean(patch_scores(x, pattern));
}

Tensor Critic::directional_derivative(const Tensor& direction, const ActivationPattern& pattern) const {
  check_input("critic", arch_, direction);
  const std::size_t n = arch_.critic.size();
  if (pattern.slopes.size() + 1 != n) throw InvalidArgument("critic: activation pattern does not match the layer stack");
  const std::size_t sr = arch_.spatial_rank();
  Tensor h = direction;
  for (std::size_t l = 0; l < n; ++l) {
    const auto& layer = arch_.critic[l];
    h = conv(sr, h, params_[2 * l], Tensor{}, layer.stride, (layer.kernel - 1) / 2);
    if (l + 1 < n) h = mul(h, pattern.slopes[l]);
  }
  return mean(h);
}

}  // namespace pdsep
