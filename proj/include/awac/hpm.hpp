#pragma once

// Human performance model: an inverted-U (Yerkes-Dodson) map from cognitive
// workload to task performance, fused over a subjective and an objective
// workload channel.

#include <span>

namespace awac {

// Normalized cognitive workload on [0, 1]. Both the self-reported (ISA) and
// the predicted (objective) channels live on this scale.
class WorkloadLevel {
 public:
  constexpr WorkloadLevel() = default;
  // Throws ConfigError if `value` is outside [0, 1] or not finite.
  explicit WorkloadLevel(double value);

  static WorkloadLevel clamped(double value) noexcept;

  constexpr double value() const noexcept { return value_; }
  friend constexpr auto operator<=>(WorkloadLevel, WorkloadLevel) = default;

 private:
  double value_ = 0.0;
};

// Five-point instantaneous self-assessment rating, -2 (very low) to +2 (very high).
class IsaScore {
 public:
  constexpr IsaScore() = default;
  explicit IsaScore(int value);

  constexpr int value() const noexcept { return value_; }
  friend constexpr auto operator<=>(IsaScore, IsaScore) = default;

 private:
  int value_ = 0;
};

using PerformanceScore = double;

struct HpmChannelParams {
  WorkloadLevel mu{0.5};  // optimal workload, location of the peak
  double sigma = 0.2;     // curve width in workload units
  double amplitude = 0.0; // area constant A; 0 means "peak-normalized"

  // A = sigma * sqrt(2 pi) so that the curve peaks at exactly 1.
  static HpmChannelParams peak_normalized(WorkloadLevel mu, double sigma);

  double effective_amplitude() const noexcept;
  void validate() const;
};

struct HpmParams {
  HpmChannelParams subjective;
  HpmChannelParams objective;
  double alpha_p = 0.5;  // weight on the objective channel
  double beta_p = 0.5;   // weight on the subjective channel

  static HpmParams defaults();
  // sigma > 0, amplitude > 0, weights in [0, 1] summing to 1.
  void validate() const;
};

struct CurveSample {
  double x = 0.0;
  double y = 0.0;
};

PerformanceScore performance_curve(WorkloadLevel s, const HpmChannelParams& params);

// Trapezoidal area under an empirical (workload, performance) curve.
// Requires >= 2 samples with strictly increasing x.
double calibrate_amplitude(std::span<const CurveSample> samples);

WorkloadLevel isa_to_workload(IsaScore isa) noexcept;

PerformanceScore operator_performance(WorkloadLevel s_subj, WorkloadLevel s_obj,
                                      const HpmParams& params);

// Mean of the operators' performances; throws on an empty list.
PerformanceScore team_performance(std::span<const PerformanceScore> perfs);

// Additive workload transition, saturating at the ends of [0, 1].
WorkloadLevel predict_next_state(WorkloadLevel s, double delta_w) noexcept;

PerformanceScore predict_next_performance(WorkloadLevel s_subj, WorkloadLevel s_obj,
                                          double delta_w, const HpmParams& params);

}  // namespace awac
