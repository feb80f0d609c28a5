#include "hmqm/qrg.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <Eigen/Eigenvalues>

#include "hmqm/error.hpp"

namespace hmqm {

namespace {

void require_dim(std::size_t got, std::size_t want, const char* what) {
  if (got != want) {
    throw InvalidArgument(std::string(what) + ": dimension mismatch (" + std::to_string(got) + " vs " +
                          std::to_string(want) + ")");
  }
}

double real_or_throw(Complex z, const char* what) {
  if (std::abs(z.imag()) >= tol::kImaginary) {
    throw std::logic_error(std::string(what) + " has imaginary part " + std::to_string(z.imag()));
  }
  return z.real();
}

}  // namespace

BitString::BitString(std::size_t n, std::uint64_t mask) : n_(n), mask_(mask) {
  if (n == 0 || n > 64) throw InvalidArgument("bit string length must be in [1, 64]");
  if (n < 64 && (mask >> n) != 0) throw InvalidArgument("bit string mask has bits beyond its length");
}

BitString BitString::parse(std::string_view text) {
  std::uint64_t mask = 0;
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (text[i] == '1') {
      mask |= std::uint64_t{1} << i;
    } else if (text[i] != '0') {
      throw InvalidArgument("bit string may only contain '0' and '1'");
    }
  }
  return BitString(text.size(), mask);
}

BitString BitString::complement() const {
  const std::uint64_t all = n_ == 64 ? ~std::uint64_t{0} : ((std::uint64_t{1} << n_) - 1);
  return BitString(n_, ~mask_ & all);
}

std::string BitString::str() const {
  std::string s(n_, '0');
  for (std::size_t i = 1; i <= n_; ++i) {
    if (bit(i)) s[i - 1] = '1';
  }
  return s;
}

BitString random_bit_string(std::size_t n, Rng& rng) {
  const std::uint64_t draw = rng();
  return BitString(n, n == 64 ? draw : (draw & ((std::uint64_t{1} << n) - 1)));
}

PureState::PureState(ComplexVector amplitudes) : amplitudes_(std::move(amplitudes)) {
  if (amplitudes_.size() == 0) throw InvalidArgument("pure state needs a positive dimension");
  if (std::abs(amplitudes_.norm() - 1.0) > tol::kNorm) {
    throw InvalidArgument("pure state is not normalised");
  }
}

std::optional<std::string> density_violation(const ComplexMatrix& m) {
  if (m.rows() == 0 || m.rows() != m.cols()) return "density matrix must be square and non-empty";
  if ((m - m.adjoint()).cwiseAbs().maxCoeff() > tol::kDensity) return "density matrix is not Hermitian";
  if (std::abs(m.trace() - Complex(1.0, 0.0)) > tol::kDensity) return "density matrix trace differs from 1";
  const ComplexMatrix herm = (m + m.adjoint()) / 2.0;
  Eigen::SelfAdjointEigenSolver<ComplexMatrix> es(herm, Eigen::EigenvaluesOnly);
  if (es.eigenvalues().minCoeff() < -tol::kDensity) return "density matrix has a negative eigenvalue";
  return std::nullopt;
}

DensityMatrix::DensityMatrix(ComplexMatrix entries) : entries_(std::move(entries)) {
  if (auto why = density_violation(entries_)) throw InvalidArgument(*why);
}

DensityMatrix DensityMatrix::unchecked(ComplexMatrix entries) { return DensityMatrix(std::move(entries), Unchecked{}); }

DensityMatrix DensityMatrix::pure(const PureState& psi) {
  const ComplexVector& v = psi.amplitudes();
  return unchecked(v * v.adjoint());
}

DensityMatrix DensityMatrix::maximally_mixed(std::size_t dim) {
  const auto d = static_cast<Eigen::Index>(dim);
  return unchecked(ComplexMatrix::Identity(d, d) / static_cast<double>(dim));
}

double clamp_probability(double p) {
  if (p < -tol::kProbability || p > 1.0 + tol::kProbability) {
    throw std::logic_error("probability " + std::to_string(p) + " outside [0, 1]");
  }
  return std::clamp(p, 0.0, 1.0);
}

PureState hidden_matching_state(const BitString& x) {
  const std::size_t n = x.size();
  ComplexVector v(static_cast<Eigen::Index>(n));
  const double scale = 1.0 / std::sqrt(static_cast<double>(n));
  for (std::size_t i = 1; i <= n; ++i) v(static_cast<Eigen::Index>(i - 1)) = x.sign(i) * scale;
  return PureState(std::move(v));
}

DensityMatrix hidden_matching_density(const BitString& x) { return DensityMatrix::pure(hidden_matching_state(x)); }

std::vector<OutcomeProbability> outcome_distribution(const DensityMatrix& rho, const Matching& m) {
  require_dim(rho.dim(), static_cast<std::size_t>(m.n()), "outcome_distribution");
  const ComplexMatrix& a = rho.matrix();
  std::vector<OutcomeProbability> out;
  out.reserve(static_cast<std::size_t>(m.n()));
  double total = 0.0;
  for (const NodePair& p : m.pairs()) {
    const Eigen::Index i = p.first - 1;
    const Eigen::Index j = p.second - 1;
    const double diag = (a(i, i) + a(j, j)).real();
    const double cross = (a(i, j) + a(j, i)).real();
    const double plus = clamp_probability(0.5 * (diag + cross));
    const double minus = clamp_probability(0.5 * (diag - cross));
    out.push_back({{p.first, p.second, 0}, plus});
    out.push_back({{p.first, p.second, 1}, minus});
    total += plus + minus;
  }
  if (std::abs(total - 1.0) > tol::kProbability) {
    throw std::logic_error("matching outcome probabilities sum to " + std::to_string(total));
  }
  return out;
}

MeasurementOutcome sample_matching_outcome(const DensityMatrix& rho, const Matching& m, std::uint64_t draw) {
  const auto dist = outcome_distribution(rho, m);
  const double u = unit_interval(draw);
  double acc = 0.0;
  for (const auto& entry : dist) {
    acc += entry.probability;
    if (u < acc) return entry.outcome;
  }
  // u landed in the rounding slack above the last cumulative value.
  for (auto it = dist.rbegin(); it != dist.rend(); ++it) {
    if (it->probability > 0.0) return it->outcome;
  }
  return dist.back().outcome;
}

MeasurementOutcome measure_matching(const DensityMatrix& rho, const Matching& m, Rng& rng) {
  return sample_matching_outcome(rho, m, rng());
}

double error_probability_given_matching(const DensityMatrix& rho, const BitString& x, std::size_t alpha,
                                        const DisjointMatchingSet& set) {
  require_dim(rho.dim(), static_cast<std::size_t>(set.n), "error_probability_given_matching");
  require_dim(x.size(), static_cast<std::size_t>(set.n), "error_probability_given_matching");
  const Matching& m = set.relation(alpha);
  const ComplexMatrix& a = rho.matrix();
  Complex sum = 0.0;
  for (const NodePair& p : m.pairs()) {
    const double parity_sign = x.sign(static_cast<std::size_t>(p.first)) * x.sign(static_cast<std::size_t>(p.second));
    sum += parity_sign * (a(p.first - 1, p.second - 1) + a(p.second - 1, p.first - 1));
  }
  return clamp_probability(0.5 * (1.0 - real_or_throw(sum, "matching parity sum")));
}

double fidelity(const BitString& x, const DensityMatrix& rho) {
  require_dim(rho.dim(), x.size(), "fidelity");
  const ComplexVector phi = hidden_matching_state(x).amplitudes();
  return clamp_probability(real_or_throw(phi.dot(rho.matrix() * phi), "fidelity"));
}

double averaged_error_probability(const DensityMatrix& rho, const BitString& x, const DisjointMatchingSet& set) {
  require_dim(rho.dim(), static_cast<std::size_t>(set.n), "averaged_error_probability");
  const double n = static_cast<double>(set.n);
  return clamp_probability(n / (2.0 * (n - 1.0)) * (1.0 - fidelity(x, rho)));
}

AveragedPovm averaged_povm(const BitString& x, const DisjointMatchingSet& set) {
  require_dim(x.size(), static_cast<std::size_t>(set.n), "averaged_povm");
  const auto d = static_cast<Eigen::Index>(set.n);
  const double n = static_cast<double>(set.n);
  const ComplexMatrix identity = ComplexMatrix::Identity(d, d);
  const ComplexMatrix phi = hidden_matching_density(x).matrix();
  AveragedPovm povm;
  povm.incorrect_effect = n / (2.0 * (n - 1.0)) * (identity - phi);
  povm.correct_effect = identity - povm.incorrect_effect;
  return povm;
}

bool is_correct_answer(const MeasurementOutcome& outcome, const Matching& m, const BitString& x) {
  if (outcome.i >= outcome.j || (outcome.b != 0 && outcome.b != 1)) return false;
  if (!m.contains(outcome.i, outcome.j)) return false;
  const int parity = x.bit(static_cast<std::size_t>(outcome.i)) ^ x.bit(static_cast<std::size_t>(outcome.j));
  return parity == outcome.b;
}

nlohmann::json to_json(const DensityMatrix& rho) {
  const ComplexMatrix& m = rho.matrix();
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back({m(r, c).real(), m(r, c).imag()});
    rows.push_back(std::move(row));
  }
  return rows;
}

DensityMatrix density_from_json(const nlohmann::json& j) {
  const auto d = static_cast<Eigen::Index>(j.size());
  ComplexMatrix m(d, d);
  for (Eigen::Index r = 0; r < d; ++r) {
    const auto& row = j.at(static_cast<std::size_t>(r));
    if (static_cast<Eigen::Index>(row.size()) != d) throw InvalidArgument("density matrix JSON is not square");
    for (Eigen::Index c = 0; c < d; ++c) {
      const auto& z = row.at(static_cast<std::size_t>(c));
      m(r, c) = Complex(z.at(0).get<double>(), z.at(1).get<double>());
    }
  }
  return DensityMatrix(std::move(m));
}

}  // namespace hmqm
