#pragma once

// Per-team normalization and the one-way repeated-measures ANOVA battery
// (teams as subjects, allocation conditions as the within factor).

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace awac {

// Rows are subjects (teams), columns are conditions. Row-major cells.
class TrialMatrix {
 public:
  TrialMatrix() = default;
  TrialMatrix(std::vector<std::string> row_labels, std::vector<std::string> col_labels,
              std::vector<double> cells);

  std::size_t rows() const noexcept { return row_labels_.size(); }
  std::size_t cols() const noexcept { return col_labels_.size(); }
  double at(std::size_t r, std::size_t c) const { return cells_[r * cols() + c]; }
  double& at(std::size_t r, std::size_t c) { return cells_[r * cols() + c]; }
  std::vector<double> column(std::size_t c) const;

  const std::vector<std::string>& row_labels() const noexcept { return row_labels_; }
  const std::vector<std::string>& col_labels() const noexcept { return col_labels_; }
  const std::vector<double>& cells() const noexcept { return cells_; }

  // Subset of columns by label, in the given order. Throws on unknown labels.
  TrialMatrix select_columns(std::span<const std::string> labels) const;

  // Rectangular, finite, at least 2 x 2.
  void validate() const;

 private:
  std::vector<std::string> row_labels_;
  std::vector<std::string> col_labels_;
  std::vector<double> cells_;
};

// Header row holds the condition labels (first cell names the id column);
// each following row is "<team id>,<value>,...".
TrialMatrix read_trial_csv(std::istream& in);
TrialMatrix read_trial_csv(const std::filesystem::path& path);
void write_trial_csv(std::ostream& out, const TrialMatrix& m);

// Divides each cell by its row mean. Throws if a row mean is not positive.
TrialMatrix normalize_rows(const TrialMatrix& raw);

struct AnovaResult {
  double ss_total = 0.0;
  double ss_between = 0.0;
  double ss_within = 0.0;
  double ss_subjects = 0.0;
  double ss_error = 0.0;
  int df_between = 0;
  int df_within = 0;
  int df_subjects = 0;
  int df_error = 0;
  double ms_between = 0.0;
  double ms_within = 0.0;
  double ms_error = 0.0;
  double f_stat = 0.0;
  double p_value = 1.0;
  bool degenerate = false;  // zero error variance
};

AnovaResult rm_anova(const TrialMatrix& m);

// Regularized incomplete beta I_x(a, b), continued-fraction evaluation.
double regularized_incomplete_beta(double a, double b, double x);

// Upper tail P(F > f) of the F(d1, d2) distribution.
double f_sf(double f, int d1, int d2);

// Two-sided Student-t tail P(|T| > |t|) with `df` degrees of freedom.
double t_sf_two_sided(double t, int df);

struct PairwiseResult {
  std::string first;
  std::string second;
  double mean_difference = 0.0;  // mean(first - second)
  double t_stat = 0.0;
  int df = 0;
  double p_raw = 1.0;
  double p_adjusted = 1.0;  // min(1, p_raw * number of pairs)
  bool significant_raw = false;
  bool significant_adjusted = false;
  bool degenerate = false;  // zero variance of the differences
};

std::vector<PairwiseResult> bonferroni_pairwise(const TrialMatrix& m, double alpha);

struct ConditionSummary {
  std::string label;
  double mean = 0.0;
  double sd = 0.0;  // sample (n - 1) standard deviation
};

std::vector<ConditionSummary> summarize(const TrialMatrix& m);

struct PairedTest {
  std::size_t n = 0;
  double mean_a = 0.0;
  double mean_b = 0.0;
  double mean_difference = 0.0;  // mean(a - b)
  double t_stat = 0.0;
  int df = 0;
  std::optional<double> p_value;  // empty when n < 2
  bool degenerate = false;
};

PairedTest paired_t_test(std::span<const double> a, std::span<const double> b);

struct StatsReport {
  std::string title;
  std::vector<ConditionSummary> summary;
  AnovaResult anova;
  std::vector<PairwiseResult> pairwise;
  double alpha = 0.1;
};

StatsReport analyze(const TrialMatrix& m, double alpha, std::string title = {});
std::string format_report(const StatsReport& report);
nlohmann::json report_json(const StatsReport& report);

}  // namespace awac
