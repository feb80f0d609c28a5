#pragma once

#include <optional>
#include <string>
#include <vector>

#include "hmqm/qrg.hpp"

namespace hmqm {

/// n phase-randomised coherent pulses carrying one hidden-matching state.
/// Mode i has amplitude (-1)^{x_i} alpha / sqrt(n), so the block holds
/// |alpha|^2 photons on average.
struct BlockSource {
  Complex alpha;
  int n = 0;

  double mean_photon_number() const { return std::norm(alpha); }
};

struct PhotonStats {
  double p0 = 0.0;
  double p1 = 0.0;
  double p2plus = 0.0;
};

/// Poisson statistics at mean photon number mu = |alpha|^2 > 0.
PhotonStats photon_statistics(double mean_photon_number);
PhotonStats photon_statistics(const BlockSource& source);

/// e' p1 / (p1 + p2plus): multi-photon blocks are counted as perfect forgeries.
double effective_adversary_error(double e_prime_min, const PhotonStats& stats);

/// eta (1 - p0): empty blocks behave like detector loss.
double fold_source_loss(double eta_detector, const PhotonStats& stats);

/// Normalised one-photon component of the block, with the global phase of
/// alpha removed.
ComplexVector single_photon_amplitudes(const BitString& x, Complex alpha);

/// True iff `amplitudes` equals hidden_matching_state(x) entrywise within tol.
bool matches_hidden_matching_state(const ComplexVector& amplitudes, const BitString& x, double tol = 1e-14);

/// single_photon_amplitudes(x, alpha) checked against the ideal state.
bool single_photon_state_equivalence(const BitString& x, Complex alpha = Complex(0.5, 0.0), double tol = 1e-14);

/// One row of an intensity sweep. The loss-adjusted bound uses the folded
/// efficiency; when it leaves no positive margin the adversary error is empty.
struct CoherentRow {
  double mean_photon_number = 0.0;
  PhotonStats stats;
  double effective_eta = 0.0;
  std::optional<double> e_prime_min;
  std::optional<double> effective_adversary_error;
};

CoherentRow coherent_row(double mean_photon_number, int n, double eta_detector, double epsilon);

inline constexpr const char* kCoherentCsvHeader = "alpha_sq,p0,p1,p2plus,effective_eta,effective_adversary_error";

/// Empty cells for rows without a positive bound.
std::string to_csv_row(const CoherentRow& row);

}  // namespace hmqm
