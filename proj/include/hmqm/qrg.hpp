#pragma once

#include <complex>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "hmqm/matchings.hpp"
#include "hmqm/rng.hpp"
#include "json.hpp"

namespace hmqm {

using Complex = std::complex<double>;
using ComplexMatrix = Eigen::MatrixXcd;
using ComplexVector = Eigen::VectorXcd;

/// Tolerances shared by every state and probability check.
namespace tol {
inline constexpr double kNorm = 1e-12;
inline constexpr double kDensity = 1e-9;
inline constexpr double kProbability = 1e-9;
inline constexpr double kImaginary = 1e-10;
}  // namespace tol

/// The secret string x of one retrieval game. Bit x_i is addressed 1-based;
/// internally bit i - 1 of a 64-bit mask, so n <= 64.
class BitString {
 public:
  BitString(std::size_t n, std::uint64_t mask);

  /// Parses "0101": the first character is x_1.
  static BitString parse(std::string_view text);

  std::size_t size() const noexcept { return n_; }
  std::uint64_t mask() const noexcept { return mask_; }

  int bit(std::size_t i) const noexcept { return static_cast<int>((mask_ >> (i - 1)) & 1U); }
  /// (-1)^{x_i}
  double sign(std::size_t i) const noexcept { return bit(i) ? -1.0 : 1.0; }

  BitString complement() const;
  std::string str() const;

  friend bool operator==(const BitString&, const BitString&) = default;

 private:
  std::size_t n_;
  std::uint64_t mask_;
};

/// Uniformly random string of length n.
BitString random_bit_string(std::size_t n, Rng& rng);

class PureState {
 public:
  /// Throws InvalidArgument unless the vector has unit norm within 1e-12.
  explicit PureState(ComplexVector amplitudes);

  std::size_t dim() const noexcept { return static_cast<std::size_t>(amplitudes_.size()); }
  const ComplexVector& amplitudes() const noexcept { return amplitudes_; }

 private:
  ComplexVector amplitudes_;
};

class DensityMatrix {
 public:
  /// Validates Hermiticity, unit trace and positivity (tolerance 1e-9).
  explicit DensityMatrix(ComplexMatrix entries);

  /// Skips validation. For matrices built by closed-form constructions that
  /// the test suite checks separately.
  static DensityMatrix unchecked(ComplexMatrix entries);

  static DensityMatrix pure(const PureState& psi);
  static DensityMatrix maximally_mixed(std::size_t dim);

  std::size_t dim() const noexcept { return static_cast<std::size_t>(entries_.rows()); }
  const ComplexMatrix& matrix() const noexcept { return entries_; }

 private:
  struct Unchecked {};
  DensityMatrix(ComplexMatrix entries, Unchecked) : entries_(std::move(entries)) {}

  ComplexMatrix entries_;
};

/// Description of the first violated density-matrix invariant, if any.
std::optional<std::string> density_violation(const ComplexMatrix& m);

/// Grouped correct/incorrect effects of the matching measurement averaged
/// over a uniformly random relation.
struct AveragedPovm {
  ComplexMatrix correct_effect;
  ComplexMatrix incorrect_effect;
};

/// Answer (i, j, b) to a matching relation: b is the claimed parity x_i xor x_j.
struct MeasurementOutcome {
  int i = 0;
  int j = 0;
  int b = 0;

  friend bool operator==(const MeasurementOutcome&, const MeasurementOutcome&) = default;
};

/// A measurement that may have produced nothing (detector loss).
using Outcome = std::optional<MeasurementOutcome>;

struct OutcomeProbability {
  MeasurementOutcome outcome;
  double probability;
};

/// Clamps p to [0, 1]; values further than 1e-9 outside are a logic error.
double clamp_probability(double p);

/// (1/sqrt n) sum_i (-1)^{x_i} |i>
PureState hidden_matching_state(const BitString& x);

DensityMatrix hidden_matching_density(const BitString& x);

/// Exact distribution of the measurement in the basis (|i> +- |j>)/sqrt2 over
/// the pairs of `m`, ordered by pair then by b.
std::vector<OutcomeProbability> outcome_distribution(const DensityMatrix& rho, const Matching& m);

/// Inverse-CDF sample of outcome_distribution driven by one 64-bit draw.
MeasurementOutcome sample_matching_outcome(const DensityMatrix& rho, const Matching& m, std::uint64_t draw);

MeasurementOutcome measure_matching(const DensityMatrix& rho, const Matching& m, Rng& rng);

/// Probability that measuring `rho` with relation alpha yields a wrong parity.
double error_probability_given_matching(const DensityMatrix& rho, const BitString& x, std::size_t alpha,
                                        const DisjointMatchingSet& set);

/// Error probability averaged uniformly over all n - 1 relations,
/// n / (2(n - 1)) * (1 - F_x).
double averaged_error_probability(const DensityMatrix& rho, const BitString& x, const DisjointMatchingSet& set);

/// F_x = <phi_x| rho |phi_x>
double fidelity(const BitString& x, const DensityMatrix& rho);

AveragedPovm averaged_povm(const BitString& x, const DisjointMatchingSet& set);

/// True when `outcome` is a correct answer for secret x under relation m.
bool is_correct_answer(const MeasurementOutcome& outcome, const Matching& m, const BitString& x);

/// Rows of [re, im] pairs.
nlohmann::json to_json(const DensityMatrix& rho);
DensityMatrix density_from_json(const nlohmann::json& j);

}  // namespace hmqm
