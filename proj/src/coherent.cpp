#include "hmqm/coherent.hpp"

#include <cmath>
#include <cstdio>

#include "hmqm/bounds.hpp"
#include "hmqm/error.hpp"

namespace hmqm {

PhotonStats photon_statistics(double mu) {
  if (!(mu > 0.0) || !std::isfinite(mu)) throw InvalidArgument("mean photon number must be positive and finite");
  PhotonStats s;
  s.p0 = std::exp(-mu);
  s.p1 = mu * s.p0;
  // 1 - p0 - p1 without cancellation at small mu.
  s.p2plus = std::max(0.0, -std::expm1(-mu) - s.p1);
  return s;
}

PhotonStats photon_statistics(const BlockSource& source) {
  if (source.n < 1) throw InvalidArgument("a block needs at least one mode");
  return photon_statistics(source.mean_photon_number());
}

double effective_adversary_error(double e_prime_min, const PhotonStats& stats) {
  if (!(e_prime_min >= 0.0 && e_prime_min <= 0.5)) throw InvalidArgument("e'_min must lie in [0, 1/2]");
  const double emitted = stats.p1 + stats.p2plus;
  if (!(emitted > 0.0)) throw InvalidArgument("source never emits a photon");
  return e_prime_min * stats.p1 / emitted;
}

double fold_source_loss(double eta_detector, const PhotonStats& stats) {
  if (!(eta_detector > 0.0 && eta_detector <= 1.0)) throw InvalidArgument("detector efficiency must lie in (0, 1]");
  return eta_detector * (1.0 - stats.p0);
}

ComplexVector single_photon_amplitudes(const BitString& x, Complex alpha) {
  if (!(std::abs(alpha) > 0.0)) throw InvalidArgument("coherent amplitude must be non-zero");
  const auto n = static_cast<Eigen::Index>(x.size());
  const double scale = 1.0 / std::sqrt(static_cast<double>(n));

  // <1_i, 0_rest| prod_k |beta_k> = beta_i prod_k exp(-|beta_k|^2 / 2)
  ComplexVector beta(n);
  double vacuum = 1.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    beta(i) = static_cast<double>(x.sign(static_cast<std::size_t>(i) + 1)) * alpha * scale;
    vacuum *= std::exp(-std::norm(beta(i)) / 2.0);
  }
  ComplexVector amplitudes = beta * vacuum;
  amplitudes /= amplitudes.norm();
  amplitudes *= std::conj(alpha) / std::abs(alpha);
  return amplitudes;
}

bool matches_hidden_matching_state(const ComplexVector& amplitudes, const BitString& x, double tol) {
  const ComplexVector ideal = hidden_matching_state(x).amplitudes();
  if (amplitudes.size() != ideal.size()) return false;
  return (amplitudes - ideal).cwiseAbs().maxCoeff() <= tol;
}

bool single_photon_state_equivalence(const BitString& x, Complex alpha, double tol) {
  return matches_hidden_matching_state(single_photon_amplitudes(x, alpha), x, tol);
}

CoherentRow coherent_row(double mu, int n, double eta_detector, double epsilon) {
  CoherentRow row;
  row.mean_photon_number = mu;
  row.stats = photon_statistics(mu);
  row.effective_eta = fold_source_loss(eta_detector, row.stats);
  if (3.0 * epsilon < row.effective_eta) {
    const double e = lossy_e_min(e_min(n), epsilon, row.effective_eta);
    row.e_prime_min = e;
    if (e > 0.0 && e <= 0.5) row.effective_adversary_error = effective_adversary_error(e, row.stats);
  }
  return row;
}

std::string to_csv_row(const CoherentRow& row) {
  char buf[256];
  int len = std::snprintf(buf, sizeof buf, "%.6g,%.12f,%.12f,%.12f,%.12f,", row.mean_photon_number, row.stats.p0,
                          row.stats.p1, row.stats.p2plus, row.effective_eta);
  std::string out(buf, static_cast<std::size_t>(len));
  if (row.effective_adversary_error) {
    std::snprintf(buf, sizeof buf, "%.12f", *row.effective_adversary_error);
    out += buf;
  }
  return out;
}

}  // namespace hmqm
