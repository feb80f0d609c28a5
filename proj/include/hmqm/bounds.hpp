#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "hmqm/qrg.hpp"

namespace hmqm {

using RealMatrix = Eigen::MatrixXd;

/// Largest n for which the 1/2 + 1/n fidelity law has been checked by the
/// numerical eigensolve. Values above it are computed but flagged.
inline constexpr int kVerifiedMaxDimension = 14;

/// Ensemble average (1/2^n) sum_x phi_x (x) phi_x in closed form:
/// (1/n^2) (1 + SWAP + n |Phi+><Phi+| - 2 D), D = sum_i |ii><ii|.
RealMatrix pair_average(int n);

/// Q(n) on X (x) Y (x) Z (index x n^2 + y n + z):
/// (1/2) [A_XY (x) 1_Z + A_XZ (x) 1_Y] with A = pair_average(n).
/// Throws InvalidArgument when the dense matrix would exceed `memory_budget`.
RealMatrix build_q_matrix(int n, std::size_t memory_budget = std::size_t{1} << 30);

struct EigenSettings {
  /// Above this dimension the dense eigensolver is replaced by power iteration.
  Eigen::Index dense_limit = 1000;
  double tolerance = 1e-10;
  int max_iterations = 100000;
};

enum class EigenMethod { Dense, PowerIteration };

struct SpectralEstimate {
  double value = 0.0;
  /// ||H v - value v|| for the returned unit vector.
  double residual = 0.0;
  int iterations = 0;
  EigenMethod method = EigenMethod::Dense;
};

/// Largest eigenvalue of a Hermitian matrix. Throws InvalidArgument when the
/// input is not Hermitian within 1e-9, or std::runtime_error when power
/// iteration fails to certify its residual.
SpectralEstimate largest_eigenvalue(const RealMatrix& h, const EigenSettings& settings = {});
SpectralEstimate largest_eigenvalue(const ComplexMatrix& h, const EigenSettings& settings = {});

/// Largest eigenvalue; equals the operator norm for the PSD matrices used here.
double operator_norm(const RealMatrix& h, const EigenSettings& settings = {});
double operator_norm(const ComplexMatrix& h, const EigenSettings& settings = {});

/// n ||Q(n)||, the dual-feasible upper bound on the average clone fidelity.
/// Requires even n in [4, 14].
double fidelity_bound(int n);

/// 1/2 - 1/(2(n - 1)): lower bound on the two verifiers' summed error on a
/// single unknown position.
double pair_error_lower_bound(int n);

/// (997/999)(1/4 - 1/(4(n - 1)))
double e_min(int n);

/// 1/2 - (1/4)(n + 2)/(n + 1): error inflicted by the symmetric cloner.
double e_max(int n);

/// v = (1/2)(n + 2)/(n + 1)
double cloner_weight(int n);

struct ClonePair {
  DensityMatrix first_clone;
  DensityMatrix second_clone;
};

/// Appends a maximally mixed ancilla, projects on the symmetric subspace with
/// S2 = (1 + SWAP)/2, renormalises and returns both single-system reductions.
ClonePair symmetric_clone(const DensityMatrix& rho);

/// Mixing weight v = 1 - 2 beta whose depolarised hidden-matching state has
/// averaged error exactly beta. beta must lie in [0, 1/2].
double depolarization_for_error(double beta);

/// (e_min - 3 eps/(2 eta)) / (1 - 3 eps/eta). Requires 0 < eta <= 1 and
/// 0 <= 3 eps/eta < 1.
double lossy_e_min(double e_min_value, double epsilon, double eta);

struct CloneBound {
  int n = 0;
  double q_norm = 0.0;
  double fidelity_bound = 0.0;
  double pair_error_lower = 0.0;
  double e_min = 0.0;
  double e_max = 0.0;
  bool verified_range = true;
};

/// Builds Q(n), computes its norm and fills the derived bounds. n above
/// kVerifiedMaxDimension is allowed and reported with verified_range false.
CloneBound compute_clone_bound(int n, const EigenSettings& settings = {});

inline constexpr const char* kBoundCsvHeader = "n,q_norm,fidelity_bound,pair_error_lower,e_min,e_max";

std::string to_csv_row(const CloneBound& b);

}  // namespace hmqm
