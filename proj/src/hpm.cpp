#include "awac/hpm.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "awac/error.hpp"

namespace awac {

namespace {

constexpr double kSqrtTwoPi = 2.5066282746310002;  // sqrt(2 pi)

}  // namespace

WorkloadLevel::WorkloadLevel(double value) : value_(value) {
  if (!std::isfinite(value) || value < 0.0 || value > 1.0) {
    throw ConfigError("workload level out of [0,1]: " + std::to_string(value));
  }
}

WorkloadLevel WorkloadLevel::clamped(double value) noexcept {
  WorkloadLevel w;
  w.value_ = std::isnan(value) ? 0.0 : std::clamp(value, 0.0, 1.0);
  return w;
}

IsaScore::IsaScore(int value) : value_(value) {
  if (value < -2 || value > 2) {
    throw ConfigError("ISA score must be in -2..2, got " + std::to_string(value));
  }
}

HpmChannelParams HpmChannelParams::peak_normalized(WorkloadLevel mu, double sigma) {
  return HpmChannelParams{mu, sigma, sigma * kSqrtTwoPi};
}

double HpmChannelParams::effective_amplitude() const noexcept {
  return amplitude > 0.0 ? amplitude : sigma * kSqrtTwoPi;
}

void HpmChannelParams::validate() const {
  if (!(sigma > 0.0) || !std::isfinite(sigma)) {
    throw ConfigError("hpm sigma must be > 0");
  }
  if (amplitude < 0.0 || !std::isfinite(amplitude)) {
    throw ConfigError("hpm amplitude must be > 0 (or 0 for peak-normalized)");
  }
}

HpmParams HpmParams::defaults() {
  HpmParams p;
  p.subjective = HpmChannelParams::peak_normalized(WorkloadLevel{0.5}, 0.2);
  p.objective = HpmChannelParams::peak_normalized(WorkloadLevel{0.5}, 0.2);
  return p;
}

void HpmParams::validate() const {
  subjective.validate();
  objective.validate();
  if (alpha_p < 0.0 || alpha_p > 1.0 || beta_p < 0.0 || beta_p > 1.0) {
    throw ConfigError("hpm fusion weights must lie in [0,1]");
  }
  if (std::abs(alpha_p + beta_p - 1.0) > 1e-12) {
    throw ConfigError("hpm fusion weights must sum to 1");
  }
}

PerformanceScore performance_curve(WorkloadLevel s, const HpmChannelParams& params) {
  const double d = s.value() - params.mu.value();
  const double sigma = params.sigma;
  return params.effective_amplitude() / (sigma * kSqrtTwoPi) *
         std::exp(-(d * d) / (2.0 * sigma * sigma));
}

double calibrate_amplitude(std::span<const CurveSample> samples) {
  if (samples.size() < 2) {
    throw ConfigError("amplitude calibration needs at least 2 samples");
  }
  double area = 0.0;
  for (std::size_t i = 0; i + 1 < samples.size(); ++i) {
    const double dx = samples[i + 1].x - samples[i].x;
    if (!(dx > 0.0)) {
      throw ConfigError("calibration samples must have strictly increasing x (index " +
                        std::to_string(i + 1) + ")");
    }
    area += dx * (samples[i].y + samples[i + 1].y) / 2.0;
  }
  return area;
}

WorkloadLevel isa_to_workload(IsaScore isa) noexcept {
  return WorkloadLevel::clamped((isa.value() + 2) / 4.0);
}

PerformanceScore operator_performance(WorkloadLevel s_subj, WorkloadLevel s_obj,
                                      const HpmParams& params) {
  return params.alpha_p * performance_curve(s_obj, params.objective) +
         params.beta_p * performance_curve(s_subj, params.subjective);
}

PerformanceScore team_performance(std::span<const PerformanceScore> perfs) {
  if (perfs.empty()) {
    throw ConfigError("team performance of an empty team");
  }
  double sum = 0.0;
  for (double p : perfs) sum += p;
  return sum / static_cast<double>(perfs.size());
}

WorkloadLevel predict_next_state(WorkloadLevel s, double delta_w) noexcept {
  return WorkloadLevel::clamped(s.value() + delta_w);
}

PerformanceScore predict_next_performance(WorkloadLevel s_subj, WorkloadLevel s_obj,
                                          double delta_w, const HpmParams& params) {
  return operator_performance(predict_next_state(s_subj, delta_w),
                              predict_next_state(s_obj, delta_w), params);
}

}  // namespace awac
