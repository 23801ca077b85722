#include "awac/stats.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

#include "awac/error.hpp"

namespace awac {

namespace {

std::string trim(std::string s) {
  const auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, ',')) fields.push_back(trim(field));
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

double mean_of(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double sample_sd(std::span<const double> v, double mean) {
  if (v.size() < 2) return 0.0;
  double s = 0.0;
  for (double x : v) s += (x - mean) * (x - mean);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

// Continued fraction for the incomplete beta function (modified Lentz).
double beta_continued_fraction(double a, double b, double x) {
  constexpr int kMaxIter = 10000;
  constexpr double kEps = 1e-16;
  constexpr double kTiny = 1e-300;
  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::abs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < kEps) return h;
  }
  throw NumericError("incomplete beta continued fraction did not converge");
}

}  // namespace

TrialMatrix::TrialMatrix(std::vector<std::string> row_labels, std::vector<std::string> col_labels,
                         std::vector<double> cells)
    : row_labels_(std::move(row_labels)), col_labels_(std::move(col_labels)), cells_(std::move(cells)) {
  if (cells_.size() != row_labels_.size() * col_labels_.size()) {
    throw ConfigError("trial matrix cell count does not match its labels");
  }
}

std::vector<double> TrialMatrix::column(std::size_t c) const {
  std::vector<double> out(rows());
  for (std::size_t r = 0; r < rows(); ++r) out[r] = at(r, c);
  return out;
}

TrialMatrix TrialMatrix::select_columns(std::span<const std::string> labels) const {
  std::vector<std::size_t> idx;
  for (const auto& l : labels) {
    const auto it = std::find(col_labels_.begin(), col_labels_.end(), l);
    if (it == col_labels_.end()) throw ConfigError("unknown column '" + l + "'");
    idx.push_back(static_cast<std::size_t>(it - col_labels_.begin()));
  }
  std::vector<double> cells;
  cells.reserve(rows() * idx.size());
  for (std::size_t r = 0; r < rows(); ++r) {
    for (std::size_t c : idx) cells.push_back(at(r, c));
  }
  return TrialMatrix(row_labels_, std::vector<std::string>(labels.begin(), labels.end()),
                     std::move(cells));
}

void TrialMatrix::validate() const {
  if (rows() < 2 || cols() < 2) throw ConfigError("trial matrix needs at least 2 rows and 2 columns");
  for (double v : cells_) {
    if (!std::isfinite(v)) throw ConfigError("trial matrix has a non-finite cell");
  }
}

TrialMatrix read_trial_csv(std::istream& in) {
  std::string line;
  std::vector<std::string> header;
  int line_no = 0;
  while (header.empty() && std::getline(in, line)) {
    ++line_no;
    if (!trim(line).empty()) header = split_csv_line(line);
  }
  if (header.size() < 2) throw IoError("csv: missing header row");
  std::vector<std::string> cols(header.begin() + 1, header.end());
  std::vector<std::string> rows;
  std::vector<double> cells;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto fields = split_csv_line(line);
    if (fields.size() != header.size()) {
      throw IoError("csv: line " + std::to_string(line_no) + " has " + std::to_string(fields.size()) +
                    " fields, expected " + std::to_string(header.size()));
    }
    rows.push_back(fields[0]);
    for (std::size_t i = 1; i < fields.size(); ++i) {
      try {
        std::size_t used = 0;
        cells.push_back(std::stod(fields[i], &used));
        if (used != fields[i].size()) throw std::invalid_argument("trailing characters");
      } catch (const std::exception&) {
        throw IoError("csv: line " + std::to_string(line_no) + " has a non-numeric cell '" +
                      fields[i] + "'");
      }
    }
  }
  return TrialMatrix(std::move(rows), std::move(cols), std::move(cells));
}

TrialMatrix read_trial_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  return read_trial_csv(in);
}

void write_trial_csv(std::ostream& out, const TrialMatrix& m) {
  out << "team";
  for (const auto& c : m.col_labels()) out << ',' << c;
  out << '\n';
  char buf[64];
  for (std::size_t r = 0; r < m.rows(); ++r) {
    out << m.row_labels()[r];
    for (std::size_t c = 0; c < m.cols(); ++c) {
      std::snprintf(buf, sizeof buf, ",%.10g", m.at(r, c));
      out << buf;
    }
    out << '\n';
  }
}

TrialMatrix normalize_rows(const TrialMatrix& raw) {
  TrialMatrix out = raw;
  for (std::size_t r = 0; r < raw.rows(); ++r) {
    double sum = 0.0;
    for (std::size_t c = 0; c < raw.cols(); ++c) sum += raw.at(r, c);
    const double mean = sum / static_cast<double>(raw.cols());
    if (!(mean > 0.0)) {
      throw ConfigError("row '" + raw.row_labels()[r] + "' has a non-positive mean");
    }
    for (std::size_t c = 0; c < raw.cols(); ++c) out.at(r, c) = raw.at(r, c) / mean;
  }
  return out;
}

AnovaResult rm_anova(const TrialMatrix& m) {
  m.validate();
  const std::size_t n = m.rows();
  const std::size_t k = m.cols();
  const double grand = mean_of(m.cells());

  AnovaResult res;
  for (double v : m.cells()) res.ss_total += (v - grand) * (v - grand);
  for (std::size_t c = 0; c < k; ++c) {
    const auto col = m.column(c);
    const double d = mean_of(col) - grand;
    res.ss_between += static_cast<double>(n) * d * d;
  }
  for (std::size_t r = 0; r < n; ++r) {
    double sum = 0.0;
    for (std::size_t c = 0; c < k; ++c) sum += m.at(r, c);
    const double d = sum / static_cast<double>(k) - grand;
    res.ss_subjects += static_cast<double>(k) * d * d;
  }
  res.ss_within = res.ss_total - res.ss_between;
  res.ss_error = std::max(0.0, res.ss_within - res.ss_subjects);

  res.df_between = static_cast<int>(k - 1);
  res.df_within = static_cast<int>(k * (n - 1));
  res.df_subjects = static_cast<int>(n - 1);
  res.df_error = static_cast<int>((k - 1) * (n - 1));
  res.ms_between = res.ss_between / res.df_between;
  res.ms_within = res.ss_within / res.df_within;
  res.ms_error = res.ss_error / res.df_error;

  const double scale = std::max(res.ss_total, std::numeric_limits<double>::min());
  const bool no_error = res.ss_error <= 1e-12 * scale;
  const bool no_effect = res.ss_between <= 1e-12 * scale;
  if (no_error) {
    res.degenerate = true;
    res.f_stat = no_effect ? 0.0 : std::numeric_limits<double>::infinity();
    res.p_value = no_effect ? 1.0 : 0.0;
  } else {
    res.f_stat = res.ms_between / res.ms_error;
    res.p_value = f_sf(res.f_stat, res.df_between, res.df_error);
  }
  return res;
}

double regularized_incomplete_beta(double a, double b, double x) {
  if (!(a > 0.0 && b > 0.0)) throw ConfigError("incomplete beta needs a, b > 0");
  if (!(x >= 0.0 && x <= 1.0)) throw ConfigError("incomplete beta needs x in [0,1]");
  if (x == 0.0) return 0.0;
  if (x == 1.0) return 1.0;
  const double log_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                           a * std::log(x) + b * std::log1p(-x);
  const double front = std::exp(log_front);
  if (x < (a + 1.0) / (a + b + 2.0)) {
    return front * beta_continued_fraction(a, b, x) / a;
  }
  return 1.0 - front * beta_continued_fraction(b, a, 1.0 - x) / b;
}

double f_sf(double f, int d1, int d2) {
  if (d1 < 1 || d2 < 1) throw ConfigError("F distribution needs d1, d2 >= 1");
  if (std::isnan(f)) throw ConfigError("F statistic is NaN");
  if (f <= 0.0) return 1.0;
  if (std::isinf(f)) return 0.0;
  const double x = d2 / (d2 + d1 * f);
  return regularized_incomplete_beta(d2 / 2.0, d1 / 2.0, x);
}

double t_sf_two_sided(double t, int df) {
  if (df < 1) throw ConfigError("t distribution needs df >= 1");
  if (std::isinf(t)) return 0.0;
  return regularized_incomplete_beta(df / 2.0, 0.5, df / (df + t * t));
}

PairedTest paired_t_test(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ConfigError("paired test: length mismatch");
  PairedTest res;
  res.n = a.size();
  if (res.n == 0) return res;
  std::vector<double> diff(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) diff[i] = a[i] - b[i];
  res.mean_a = mean_of(a);
  res.mean_b = mean_of(b);
  res.mean_difference = mean_of(diff);
  if (res.n < 2) return res;
  res.df = static_cast<int>(res.n - 1);
  const double sd = sample_sd(diff, res.mean_difference);
  if (!(sd > 0.0)) {
    res.degenerate = true;
    if (res.mean_difference == 0.0) {
      res.t_stat = 0.0;
      res.p_value = 1.0;
    } else {
      res.t_stat = std::copysign(std::numeric_limits<double>::infinity(), res.mean_difference);
      res.p_value = 0.0;
    }
    return res;
  }
  res.t_stat = res.mean_difference / (sd / std::sqrt(static_cast<double>(res.n)));
  res.p_value = t_sf_two_sided(res.t_stat, res.df);
  return res;
}

std::vector<PairwiseResult> bonferroni_pairwise(const TrialMatrix& m, double alpha) {
  m.validate();
  const std::size_t k = m.cols();
  const double pairs = static_cast<double>(k * (k - 1) / 2);
  std::vector<PairwiseResult> out;
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = i + 1; j < k; ++j) {
      const auto a = m.column(i);
      const auto b = m.column(j);
      const PairedTest t = paired_t_test(a, b);
      PairwiseResult r;
      r.first = m.col_labels()[i];
      r.second = m.col_labels()[j];
      r.mean_difference = t.mean_difference;
      r.t_stat = t.t_stat;
      r.df = t.df;
      r.p_raw = t.p_value.value_or(1.0);
      r.p_adjusted = std::min(1.0, r.p_raw * pairs);
      r.significant_raw = r.p_raw < alpha;
      r.significant_adjusted = r.p_adjusted < alpha;
      r.degenerate = t.degenerate;
      out.push_back(std::move(r));
    }
  }
  return out;
}

std::vector<ConditionSummary> summarize(const TrialMatrix& m) {
  std::vector<ConditionSummary> out;
  for (std::size_t c = 0; c < m.cols(); ++c) {
    const auto col = m.column(c);
    const double mean = mean_of(col);
    out.push_back({m.col_labels()[c], mean, sample_sd(col, mean)});
  }
  return out;
}

StatsReport analyze(const TrialMatrix& m, double alpha, std::string title) {
  StatsReport r;
  r.title = std::move(title);
  r.alpha = alpha;
  r.summary = summarize(m);
  r.anova = rm_anova(m);
  r.pairwise = bonferroni_pairwise(m, alpha);
  return r;
}

std::string format_report(const StatsReport& report) {
  std::ostringstream os;
  char buf[256];
  if (!report.title.empty()) os << report.title << "\n\n";
  os << "Condition      Mean      S.D.\n";
  for (const auto& s : report.summary) {
    std::snprintf(buf, sizeof buf, "%-10s %8.4f  %8.4f\n", s.label.c_str(), s.mean, s.sd);
    os << buf;
  }
  const auto& a = report.anova;
  os << "\nRepeated-measures ANOVA (uncorrected for sphericity)\n";
  os << "Source            DF   Sum of Sq.   Mean Sq.        F   p-value\n";
  std::snprintf(buf, sizeof buf, "Between groups  %4d   %10.4f   %8.4f %8.4f   %.4f\n",
                a.df_between, a.ss_between, a.ms_between, a.f_stat, a.p_value);
  os << buf;
  std::snprintf(buf, sizeof buf, "Within groups   %4d   %10.4f   %8.4f\n", a.df_within,
                a.ss_within, a.ms_within);
  os << buf;
  std::snprintf(buf, sizeof buf, "Subjects        %4d   %10.4f\n", a.df_subjects, a.ss_subjects);
  os << buf;
  std::snprintf(buf, sizeof buf, "Error           %4d   %10.4f   %8.4f\n", a.df_error, a.ss_error,
                a.ms_error);
  os << buf;
  if (a.degenerate) os << "note: zero error variance (degenerate design)\n";

  std::snprintf(buf, sizeof buf, "\nPaired t-tests, Bonferroni over %zu pairs (alpha = %.3g)\n",
                report.pairwise.size(), report.alpha);
  os << buf;
  os << "Pair              Diff        t   p(raw)   p(adj)  sig(raw) sig(adj)\n";
  for (const auto& p : report.pairwise) {
    const std::string pair = p.first + " vs " + p.second;
    std::snprintf(buf, sizeof buf, "%-14s %8.4f %8.4f   %.4f   %.4f  %-8s %s%s\n", pair.c_str(),
                  p.mean_difference, p.t_stat, p.p_raw, p.p_adjusted,
                  p.significant_raw ? "yes" : "no", p.significant_adjusted ? "yes" : "no",
                  p.degenerate ? "  (zero variance)" : "");
    os << buf;
  }
  return os.str();
}

namespace {

nlohmann::json finite_or_null(double v) {
  return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr);
}

}  // namespace

nlohmann::json report_json(const StatsReport& report) {
  nlohmann::json summary = nlohmann::json::array();
  for (const auto& s : report.summary) {
    summary.push_back({{"condition", s.label}, {"mean", s.mean}, {"sd", s.sd}});
  }
  const auto& a = report.anova;
  nlohmann::json pairwise = nlohmann::json::array();
  for (const auto& p : report.pairwise) {
    pairwise.push_back({{"first", p.first},
                        {"second", p.second},
                        {"mean_difference", p.mean_difference},
                        {"t", finite_or_null(p.t_stat)},
                        {"df", p.df},
                        {"p_raw", p.p_raw},
                        {"p_adjusted", p.p_adjusted},
                        {"significant_raw", p.significant_raw},
                        {"significant_adjusted", p.significant_adjusted},
                        {"degenerate", p.degenerate}});
  }
  return {{"title", report.title},
          {"alpha", report.alpha},
          {"summary", summary},
          {"anova",
           {{"ss_total", a.ss_total},
            {"ss_between", a.ss_between},
            {"ss_within", a.ss_within},
            {"ss_subjects", a.ss_subjects},
            {"ss_error", a.ss_error},
            {"df_between", a.df_between},
            {"df_within", a.df_within},
            {"df_subjects", a.df_subjects},
            {"df_error", a.df_error},
            {"ms_between", a.ms_between},
            {"ms_within", a.ms_within},
            {"ms_error", a.ms_error},
            {"f", finite_or_null(a.f_stat)},
            {"p", a.p_value},
            {"degenerate", a.degenerate},
            {"sphericity_correction", "none"}}},
          {"pairwise", pairwise}};
}

}  // namespace awac
