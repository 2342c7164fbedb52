#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pdsep/tensor.hpp"

namespace pdsep {

struct GradcheckConfig {
  double step = 1e-5;
  double tolerance = 1e-3;
  std::size_t cases_per_op = 100;
  std::uint64_t seed = 0x67726164;
};

struct OpCheck {
  OpKind op = OpKind::Leaf;
  std::size_t cases = 0;
  std::size_t failed_cases = 0;
  // max |analytic - numeric| / max(|analytic|, |numeric|, 1e-6) over all entries
  double max_rel_error = 0.0;
  bool passed() const { return failed_cases == 0; }
};

struct GradcheckReport {
  std::vector<OpCheck> ops;
  double tolerance = 0.0;
  bool passed() const;
  std::vector<std::string> failed_ops() const;
  /// One line per op: name, cases, max relative error, PASS/FAIL.
  std::string text() const;
};

/// Every op of the catalogue.
std::vector<OpKind> catalogue_ops();

/// Central finite-difference check of one op over randomized cases, in 64-bit.
/// Each case back-propagates a random weighting of the op's output.
OpCheck gradcheck_op(OpKind op, const GradcheckConfig& cfg = {});

GradcheckReport gradcheck_all(const GradcheckConfig& cfg = {});

}  // namespace pdsep
