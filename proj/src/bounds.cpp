#include "hmqm/bounds.hpp"

#include <cmath>
#include <cstdio>
#include <stdexcept>

#include <Eigen/Eigenvalues>

#include "hmqm/error.hpp"
#include "hmqm/rng.hpp"

namespace hmqm {

namespace {

void require_even(int n, int minimum, const char* what) {
  if (n < minimum || n % 2 != 0) {
    throw InvalidArgument(std::string(what) + ": n must be even and >= " + std::to_string(minimum) + ", got " +
                          std::to_string(n));
  }
}

template <typename Matrix>
void require_hermitian(const Matrix& h) {
  if (h.rows() != h.cols() || h.rows() == 0) throw InvalidArgument("eigenvalue input must be square and non-empty");
  if ((h - h.adjoint()).cwiseAbs().maxCoeff() > 1e-9) throw InvalidArgument("eigenvalue input is not Hermitian");
}

template <typename Matrix>
SpectralEstimate dense_largest(const Matrix& h) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(h, Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success) throw std::runtime_error("dense Hermitian eigensolver failed");
  return {es.eigenvalues().maxCoeff(), 0.0, 0, EigenMethod::Dense};
}

// Power iteration on h + shift 1, where the shift (a Gershgorin bound) makes
// the shifted matrix PSD so its dominant eigenvalue is the largest one of h.
template <typename Matrix>
SpectralEstimate power_largest(const Matrix& h, const EigenSettings& settings) {
  using Vector = Eigen::Matrix<typename Matrix::Scalar, Eigen::Dynamic, 1>;
  const Eigen::Index d = h.rows();

  double gershgorin_low = 0.0;
  for (Eigen::Index i = 0; i < d; ++i) {
    const double radius = h.row(i).cwiseAbs().sum() - std::abs(h(i, i));
    gershgorin_low = std::min(gershgorin_low, std::real(h(i, i)) - radius);
  }
  const double shift = -gershgorin_low;

  Rng rng(0x5eed);
  Vector v(d);
  for (Eigen::Index i = 0; i < d; ++i) v(i) = uniform01(rng) + 0.5;
  v.normalize();

  SpectralEstimate est{0.0, 0.0, 0, EigenMethod::PowerIteration};
  Vector hv(d);
  for (int it = 1; it <= settings.max_iterations; ++it) {
    hv.noalias() = h * v;
    const double lambda = std::real(v.dot(hv));
    const double residual = (hv - lambda * v).norm();
    est = {lambda, residual, it, EigenMethod::PowerIteration};
    if (residual <= settings.tolerance * std::max(1.0, std::abs(lambda))) return est;
    v = hv + shift * v;
    v.normalize();
  }
  throw std::runtime_error("power iteration did not converge: residual " + std::to_string(est.residual) +
                           " after " + std::to_string(est.iterations) + " iterations");
}

template <typename Matrix>
SpectralEstimate largest_impl(const Matrix& h, const EigenSettings& settings) {
  require_hermitian(h);
  if (h.rows() <= settings.dense_limit) return dense_largest(h);
  return power_largest(h, settings);
}

}  // namespace

RealMatrix pair_average(int n) {
  require_even(n, 2, "pair_average");
  const Eigen::Index d = n;
  const Eigen::Index d2 = d * d;
  RealMatrix a = RealMatrix::Zero(d2, d2);
  auto idx = [d](Eigen::Index p, Eigen::Index q) { return p * d + q; };
  for (Eigen::Index i = 0; i < d; ++i) {
    for (Eigen::Index k = 0; k < d; ++k) {
      a(idx(i, k), idx(i, k)) += 1.0;                          // identity
      a(idx(i, k), idx(k, i)) += 1.0;                          // SWAP
    }
    for (Eigen::Index j = 0; j < d; ++j) a(idx(i, i), idx(j, j)) += 1.0;  // n |Phi+><Phi+|
    a(idx(i, i), idx(i, i)) -= 2.0;                            // -2 D
  }
  return a / static_cast<double>(d2);
}

RealMatrix build_q_matrix(int n, std::size_t memory_budget) {
  require_even(n, 2, "build_q_matrix");
  const Eigen::Index d = n;
  const Eigen::Index d3 = d * d * d;
  const auto bytes = static_cast<std::size_t>(d3) * static_cast<std::size_t>(d3) * sizeof(double);
  if (bytes > memory_budget) {
    throw InvalidArgument("Q(" + std::to_string(n) + ") needs " + std::to_string(bytes) +
                          " bytes, over the budget of " + std::to_string(memory_budget));
  }
  const RealMatrix a = pair_average(n);
  RealMatrix q = RealMatrix::Zero(d3, d3);
  auto idx3 = [d](Eigen::Index x, Eigen::Index y, Eigen::Index z) { return (x * d + y) * d + z; };
  for (Eigen::Index x = 0; x < d; ++x) {
    for (Eigen::Index y = 0; y < d; ++y) {
      for (Eigen::Index xp = 0; xp < d; ++xp) {
        for (Eigen::Index yp = 0; yp < d; ++yp) {
          const double axy = a(x * d + y, xp * d + yp);
          if (axy == 0.0) continue;
          // A on (X, Y), identity on Z; then A on (X, Z), identity on Y with
          // the roles of the second index swapped.
          for (Eigen::Index z = 0; z < d; ++z) {
            q(idx3(x, y, z), idx3(xp, yp, z)) += 0.5 * axy;
            q(idx3(x, z, y), idx3(xp, z, yp)) += 0.5 * axy;
          }
        }
      }
    }
  }
  return q;
}

SpectralEstimate largest_eigenvalue(const RealMatrix& h, const EigenSettings& settings) {
  return largest_impl(h, settings);
}

SpectralEstimate largest_eigenvalue(const ComplexMatrix& h, const EigenSettings& settings) {
  return largest_impl(h, settings);
}

double operator_norm(const RealMatrix& h, const EigenSettings& settings) {
  return largest_eigenvalue(h, settings).value;
}

double operator_norm(const ComplexMatrix& h, const EigenSettings& settings) {
  return largest_eigenvalue(h, settings).value;
}

double fidelity_bound(int n) {
  require_even(n, 4, "fidelity_bound");
  if (n > kVerifiedMaxDimension) {
    throw InvalidArgument("fidelity_bound is defined for n <= 14; use compute_clone_bound for larger n");
  }
  return static_cast<double>(n) * operator_norm(build_q_matrix(n));
}

double pair_error_lower_bound(int n) {
  require_even(n, 4, "pair_error_lower_bound");
  return 0.5 - 1.0 / (2.0 * (n - 1));
}

double e_min(int n) {
  require_even(n, 4, "e_min");
  return (997.0 / 999.0) * (0.25 - 1.0 / (4.0 * (n - 1)));
}

double e_max(int n) {
  if (n < 2) throw InvalidArgument("e_max: n must be >= 2");
  return 0.5 - 0.25 * (n + 2.0) / (n + 1.0);
}

double cloner_weight(int n) {
  if (n < 1) throw InvalidArgument("cloner_weight: n must be positive");
  return 0.5 * (n + 2.0) / (n + 1.0);
}

ClonePair symmetric_clone(const DensityMatrix& rho) {
  const auto d = static_cast<Eigen::Index>(rho.dim());
  const Eigen::Index d2 = d * d;
  const ComplexMatrix& r = rho.matrix();

  // rho (x) 1/n on the doubled space, index a n + b.
  ComplexMatrix extended = ComplexMatrix::Zero(d2, d2);
  for (Eigen::Index a = 0; a < d; ++a) {
    for (Eigen::Index ap = 0; ap < d; ++ap) {
      for (Eigen::Index b = 0; b < d; ++b) extended(a * d + b, ap * d + b) = r(a, ap) / static_cast<double>(d);
    }
  }
  ComplexMatrix swap = ComplexMatrix::Zero(d2, d2);
  for (Eigen::Index a = 0; a < d; ++a) {
    for (Eigen::Index b = 0; b < d; ++b) swap(a * d + b, b * d + a) = 1.0;
  }
  const ComplexMatrix s2 = (ComplexMatrix::Identity(d2, d2) + swap) / 2.0;
  ComplexMatrix projected = s2 * extended * s2;
  const double norm = projected.trace().real();
  if (!(norm > 0.0)) throw std::logic_error("symmetric projection annihilated the state");
  projected /= norm;

  ComplexMatrix first = ComplexMatrix::Zero(d, d);
  ComplexMatrix second = ComplexMatrix::Zero(d, d);
  for (Eigen::Index a = 0; a < d; ++a) {
    for (Eigen::Index ap = 0; ap < d; ++ap) {
      for (Eigen::Index b = 0; b < d; ++b) {
        first(a, ap) += projected(a * d + b, ap * d + b);
        second(a, ap) += projected(b * d + a, b * d + ap);
      }
    }
  }
  return {DensityMatrix::unchecked(std::move(first)), DensityMatrix::unchecked(std::move(second))};
}

double depolarization_for_error(double beta) {
  if (!(beta >= 0.0 && beta <= 0.5)) throw InvalidArgument("target error rate must lie in [0, 1/2]");
  return 1.0 - 2.0 * beta;
}

double lossy_e_min(double e_min_value, double epsilon, double eta) {
  if (!(eta > 0.0 && eta <= 1.0)) throw InvalidArgument("detector efficiency must lie in (0, 1]");
  if (!(epsilon >= 0.0)) throw InvalidArgument("loss security parameter must be non-negative");
  const double slack = 3.0 * epsilon / eta;
  if (!(slack < 1.0)) throw InvalidArgument("3 epsilon / eta must be below 1");
  return (e_min_value - 1.5 * epsilon / eta) / (1.0 - slack);
}

CloneBound compute_clone_bound(int n, const EigenSettings& settings) {
  require_even(n, 4, "compute_clone_bound");
  CloneBound b;
  b.n = n;
  b.q_norm = operator_norm(build_q_matrix(n), settings);
  b.fidelity_bound = n * b.q_norm;
  b.pair_error_lower = pair_error_lower_bound(n);
  b.e_min = e_min(n);
  b.e_max = e_max(n);
  b.verified_range = n <= kVerifiedMaxDimension;
  return b;
}

std::string to_csv_row(const CloneBound& b) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%d,%.12f,%.12f,%.12f,%.12f,%.12f", b.n, b.q_norm, b.fidelity_bound,
                b.pair_error_lower, b.e_min, b.e_max);
  return buf;
}

}  // namespace hmqm
