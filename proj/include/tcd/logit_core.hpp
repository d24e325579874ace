#pragma once

// Per-step logit algebra for temporal contrastive decoding.
//
//   combined = (1 + alpha) * z_ori - alpha * z_con
//   keep k   iff  conf(k) >= beta * max(conf)          (plausibility mask)
//   p        = softmax(combined restricted to kept indices)
//
// Everything here is a pure function of its arguments.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "tcd/error.hpp"

namespace tcd {

/// Raw scores over a fixed vocabulary at one decode step. Never empty, never
/// holds NaN or infinities.
class LogitVector {
 public:
  LogitVector() = default;

  explicit LogitVector(std::vector<double> values) : values_(std::move(values)) {
    require(!values_.empty(), "LogitVector: vocabulary size must be positive");
    for (std::size_t k = 0; k < values_.size(); ++k) {
      require(std::isfinite(values_[k]),
              "LogitVector: entry " + std::to_string(k) + " is not finite");
    }
  }

  LogitVector(std::initializer_list<double> values) : LogitVector(std::vector<double>(values)) {}

  std::size_t vocab_size() const noexcept { return values_.size(); }
  std::span<const double> values() const noexcept { return values_; }
  double operator[](std::size_t k) const { return values_[k]; }

  friend bool operator==(const LogitVector&, const LogitVector&) = default;

 private:
  std::vector<double> values_;
};

/// Logits with implausible entries set to -inf.
struct MaskedLogits {
  std::vector<double> values;
  std::size_t plausible_count = 0;
};

/// Normalized distribution over the vocabulary; masked entries are exactly 0.
struct ProbabilityVector {
  std::vector<double> values;
};

enum class ThresholdSpace {
  /// Threshold on softmax(z_ori): keep p_ori[k] >= beta * max(p_ori).
  probability,
  /// Threshold raw scores: keep combined[k] >= beta * max(z_ori).
  raw_logit,
};

inline const char* to_string(ThresholdSpace space) {
  return space == ThresholdSpace::probability ? "probability" : "raw_logit";
}

inline ThresholdSpace threshold_space_from_string(const std::string& name) {
  if (name == "probability") return ThresholdSpace::probability;
  if (name == "raw_logit") return ThresholdSpace::raw_logit;
  throw ContractViolation("unknown threshold space '" + name + "'");
}

struct ContrastParams {
  double alpha = 0.5;
  double beta = 0.5;
  ThresholdSpace threshold_space = ThresholdSpace::probability;

  void validate() const {
    require(std::isfinite(alpha) && alpha >= 0.0,
            "ContrastParams: alpha must be >= 0, got " + std::to_string(alpha));
    require(std::isfinite(beta) && beta >= 0.0 && beta <= 1.0,
            "ContrastParams: beta must lie in [0, 1], got " + std::to_string(beta));
  }
};

struct StepDiagnostics {
  std::size_t plausible_count = 0;
  std::size_t argmax_ori = 0;
  std::size_t argmax_final = 0;
  bool contrast_flipped = false;
};

/// Index of the largest entry; exact ties resolve to the lowest index.
/// Entries equal to -inf never win unless every entry is -inf.
inline std::size_t argmax(std::span<const double> values) {
  require(!values.empty(), "argmax: empty input");
  std::size_t best = 0;
  for (std::size_t k = 1; k < values.size(); ++k) {
    if (values[k] > values[best]) best = k;
  }
  return best;
}

inline std::vector<double> softmax(std::span<const double> values) {
  require(!values.empty(), "softmax: empty input");
  const double top = *std::max_element(values.begin(), values.end());
  std::vector<double> out(values.size());
  double total = 0.0;
  for (std::size_t k = 0; k < values.size(); ++k) {
    out[k] = std::exp(values[k] - top);
    total += out[k];
  }
  for (double& v : out) v /= total;
  return out;
}

inline LogitVector combine_logits(const LogitVector& z_ori, const LogitVector& z_con, double alpha) {
  if (z_ori.vocab_size() != z_con.vocab_size()) {
    throw ContractViolation("combine_logits: vocab size mismatch (original " +
                            std::to_string(z_ori.vocab_size()) + ", counterpart " +
                            std::to_string(z_con.vocab_size()) + ")");
  }
  require(std::isfinite(alpha) && alpha >= 0.0, "combine_logits: alpha must be >= 0");
  std::vector<double> out(z_ori.vocab_size());
  for (std::size_t k = 0; k < out.size(); ++k) {
    out[k] = (1.0 + alpha) * z_ori[k] - alpha * z_con[k];
  }
  return LogitVector(std::move(out));
}

/// Masks entries of `combined` whose original-context confidence falls below
/// beta times the best original confidence. The argmax of z_ori is always
/// kept, so the result has at least one finite entry.
inline MaskedLogits plausibility_mask(const LogitVector& z_ori, const LogitVector& combined,
                                      const ContrastParams& params) {
  params.validate();
  if (z_ori.vocab_size() != combined.vocab_size()) {
    throw ContractViolation("plausibility_mask: vocab size mismatch (original " +
                            std::to_string(z_ori.vocab_size()) + ", combined " +
                            std::to_string(combined.vocab_size()) + ")");
  }
  const std::size_t n = z_ori.vocab_size();
  const std::size_t top = argmax(z_ori.values());

  std::vector<bool> keep(n, false);
  if (params.threshold_space == ThresholdSpace::probability) {
    const auto p_ori = softmax(z_ori.values());
    const double tau = params.beta * p_ori[top];
    for (std::size_t k = 0; k < n; ++k) keep[k] = p_ori[k] >= tau;
  } else {
    const double tau = params.beta * z_ori[top];
    for (std::size_t k = 0; k < n; ++k) keep[k] = combined[k] >= tau;
  }
  keep[top] = true;

  MaskedLogits out;
  out.values.resize(n);
  for (std::size_t k = 0; k < n; ++k) {
    if (keep[k]) {
      out.values[k] = combined[k];
      ++out.plausible_count;
    } else {
      out.values[k] = -std::numeric_limits<double>::infinity();
    }
  }
  return out;
}

inline ProbabilityVector masked_softmax(const MaskedLogits& m) {
  double top = -std::numeric_limits<double>::infinity();
  std::size_t finite = 0;
  for (double v : m.values) {
    if (std::isfinite(v)) {
      top = std::max(top, v);
      ++finite;
    }
  }
  require(finite > 0, "masked_softmax: every entry is masked");

  ProbabilityVector out;
  out.values.assign(m.values.size(), 0.0);
  double total = 0.0;
  for (std::size_t k = 0; k < m.values.size(); ++k) {
    if (std::isfinite(m.values[k])) {
      out.values[k] = std::exp(m.values[k] - top);
      total += out.values[k];
    }
  }
  for (double& v : out.values) v /= total;
  return out;
}

struct ModulatedStep {
  ProbabilityVector probabilities;
  StepDiagnostics diagnostics;
};

inline ModulatedStep modulated_step(const LogitVector& z_ori, const LogitVector& z_con,
                                    const ContrastParams& params) {
  params.validate();
  const auto combined = combine_logits(z_ori, z_con, params.alpha);
  const auto masked = plausibility_mask(z_ori, combined, params);

  ModulatedStep step;
  step.probabilities = masked_softmax(masked);
  step.diagnostics.plausible_count = masked.plausible_count;
  step.diagnostics.argmax_ori = argmax(z_ori.values());
  // Chosen on the masked logits; softmax is monotone so this is the argmax
  // of the distribution without exp() rounding ties.
  step.diagnostics.argmax_final = argmax(masked.values);
  step.diagnostics.contrast_flipped =
      step.diagnostics.argmax_ori != step.diagnostics.argmax_final;
  return step;
}

}  // namespace tcd
