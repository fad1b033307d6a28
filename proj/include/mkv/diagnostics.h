// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "mkv/particles.h"

namespace mkv {

struct IntegrabilityReport {
  double estimate = 0.0;          // sum over steps of per_step
  std::vector<double> per_step;   // mean_i (|b|^p + |a|^p) * dt on each recorded interval
  double median = 0.0;
  bool flagged = false;           // some step exceeds 1e3 x the median
  std::size_t worst_step = 0;
};

struct IndependenceTest {
  std::string label;
  double statistic = 0.0;  // standard normal under the null
  double p_value = 1.0;
};

struct DiagnosticsReport {
  IntegrabilityReport integrability;
  std::vector<IndependenceTest> tests;
  double fraction_below(double alpha) const;
  double min_p_value() const;
};

struct DiagnosticsOptions {
  std::size_t state_tests = 100;   // X_t against the following W increment, across particles
  std::size_t common_tests = 100;  // W increments against common increments, per particle
};

// (i) Monte-Carlo estimate of E int (|b|^p + |a|^p) dmu dt with a spike
// flag; (ii) compatibility tests that the W increments after t are
// uncorrelated with statistics known at t and with the common path. Each
// statistic is exactly N(0, 1) given the conditioning data under a correct
// noise wiring. Requires an ensemble simulated with keep_noise; auxiliary
// inputs are set to zero when re-evaluating coefficients.
DiagnosticsReport diagnostics(const ParticleEnsemble& ensemble, const CoefficientField& field,
                              double p, const DiagnosticsOptions& options = {});

}  // namespace mkv
