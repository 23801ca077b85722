#include <doctest.h>

#include <cmath>
#include <limits>
#include <sstream>

#include <boost/math/distributions/fisher_f.hpp>
#include <boost/math/distributions/students_t.hpp>

#include "awac/error.hpp"
#include "awac/stats.hpp"

using namespace awac;

namespace {

TrialMatrix table(const std::vector<std::string>& cols) {
  return read_trial_csv(std::filesystem::path(AWAC_DATA_DIR) / "table2.csv").select_columns(cols);
}

TrialMatrix from_csv(const std::string& text) {
  std::istringstream in(text);
  return read_trial_csv(in);
}

}  // namespace

TEST_CASE("incomplete beta against reference values") {
  CHECK(regularized_incomplete_beta(2, 3, 0.4) == doctest::Approx(0.5248).epsilon(1e-12));
  CHECK(regularized_incomplete_beta(0.5, 0.5, 0.3) == doctest::Approx(0.369010119565545).epsilon(1e-12));
  CHECK(regularized_incomplete_beta(10, 20, 0.35) == doctest::Approx(0.592386663663905).epsilon(1e-12));
  CHECK(regularized_incomplete_beta(3, 4, 0.0) == 0.0);
  CHECK(regularized_incomplete_beta(3, 4, 1.0) == 1.0);
  CHECK_THROWS_AS(regularized_incomplete_beta(0, 1, 0.5), ConfigError);
  CHECK_THROWS_AS(regularized_incomplete_beta(1, 1, 1.5), ConfigError);
}

TEST_CASE("F upper tail against reference values") {
  CHECK(f_sf(2.5, 3, 45) == doctest::Approx(0.0715111791253018).epsilon(1e-10));
  CHECK(f_sf(1, 1, 1) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(f_sf(0.3, 5, 12) == doctest::Approx(0.903576418747435).epsilon(1e-10));
  CHECK(f_sf(10, 2, 100) == doctest::Approx(0.000109884819117173).epsilon(1e-9));
  CHECK(f_sf(0.0, 3, 45) == 1.0);
  CHECK(f_sf(std::numeric_limits<double>::infinity(), 3, 45) == 0.0);
  CHECK_THROWS_AS(f_sf(1.0, 0, 4), ConfigError);
  CHECK_THROWS_AS(f_sf(std::nan(""), 2, 4), ConfigError);
}

TEST_CASE("F upper tail agrees with Boost.Math over a grid") {
  for (int d1 : {1, 2, 3, 7, 20}) {
    for (int d2 : {1, 4, 45, 300}) {
      const boost::math::fisher_f dist(d1, d2);
      for (double f : {0.01, 0.5, 1.0, 2.2, 5.0, 40.0}) {
        const double ref = boost::math::cdf(boost::math::complement(dist, f));
        CHECK(f_sf(f, d1, d2) == doctest::Approx(ref).epsilon(1e-9));
      }
    }
  }
}

TEST_CASE("two-sided t tail against reference values and Boost.Math") {
  CHECK(t_sf_two_sided(2.1, 15) == doctest::Approx(0.0530552561520428).epsilon(1e-10));
  CHECK(t_sf_two_sided(0.5, 3) == doctest::Approx(0.651447964848151).epsilon(1e-10));
  CHECK(t_sf_two_sided(4, 9999) == doctest::Approx(6.37987145625876e-05).epsilon(1e-8));
  CHECK(t_sf_two_sided(-2.1, 15) == t_sf_two_sided(2.1, 15));
  CHECK(t_sf_two_sided(0.0, 5) == doctest::Approx(1.0));
  for (int df : {1, 2, 9, 30, 500}) {
    const boost::math::students_t dist(df);
    for (double t : {0.1, 1.0, 2.5, 6.0}) {
      const double ref = 2.0 * boost::math::cdf(boost::math::complement(dist, t));
      CHECK(t_sf_two_sided(t, df) == doctest::Approx(ref).epsilon(1e-9));
    }
  }
  CHECK_THROWS_AS(t_sf_two_sided(1.0, 0), ConfigError);
}

TEST_CASE("published fixed/random/adaptive comparison reproduces") {
  const TrialMatrix m = table({"A", "D", "F", "H"});
  const AnovaResult a = rm_anova(m);
  CHECK(a.ss_total == doctest::Approx(1.2632333500).epsilon(1e-9));
  CHECK(a.ss_between == doctest::Approx(0.1026487487).epsilon(1e-9));
  CHECK(a.ss_within == doctest::Approx(1.1605846013).epsilon(1e-9));
  CHECK(a.ss_subjects == doctest::Approx(0.4650270350).epsilon(1e-9));
  CHECK(a.ss_error == doctest::Approx(0.6955575663).epsilon(1e-9));
  CHECK(a.df_between == 3);
  CHECK(a.df_error == 45);
  CHECK(a.df_subjects == 15);
  CHECK(a.df_within == 60);
  CHECK(a.f_stat == doctest::Approx(2.2136647).epsilon(1e-7));
  CHECK(a.p_value == doctest::Approx(0.0995447210).epsilon(1e-8));
  CHECK_FALSE(a.degenerate);

  const auto pw = bonferroni_pairwise(m, 0.1);
  REQUIRE(pw.size() == 6);
  const double t_ref[] = {-0.17129877886619033, -1.818181197291084, -1.9581801457183716,
                          -1.6794782821215752, -2.1535782601454567, 0.40534517656944935};
  const double p_ref[] = {0.8662782870965767, 0.08906021164308857, 0.06907494162269458,
                          0.11376144700610225, 0.04794847727536418, 0.6909462396061183};
  for (std::size_t i = 0; i < 6; ++i) {
    CHECK(pw[i].t_stat == doctest::Approx(t_ref[i]).epsilon(1e-9));
    CHECK(pw[i].p_raw == doctest::Approx(p_ref[i]).epsilon(1e-8));
    CHECK(pw[i].p_adjusted == doctest::Approx(std::min(1.0, 6.0 * p_ref[i])).epsilon(1e-8));
    CHECK_FALSE(pw[i].significant_adjusted);
    CHECK(pw[i].df == 15);
  }
  CHECK(pw[0].first == "A");
  CHECK(pw[0].second == "D");
  CHECK(pw[4].significant_raw);
  CHECK(pw[4].first == "D");
  CHECK(pw[4].second == "H");
}

TEST_CASE("published approval comparison reproduces") {
  const TrialMatrix m = table({"B", "C", "E", "G"});
  const AnovaResult a = rm_anova(m);
  CHECK(a.ss_between == doctest::Approx(0.1092152180).epsilon(1e-9));
  CHECK(a.ss_error == doctest::Approx(0.6946176395).epsilon(1e-9));
  CHECK(a.f_stat == doctest::Approx(2.3584605059).epsilon(1e-9));
  CHECK(a.p_value == doctest::Approx(0.0841977707).epsilon(1e-8));

  const auto pw = bonferroni_pairwise(m, 0.1);
  const double p_ref[] = {0.04189791239437095, 0.6117639465050304, 0.8487393247160875,
                          0.11831936405108909, 0.046440556009577624, 0.33323028512229425};
  for (std::size_t i = 0; i < 6; ++i) {
    CHECK(pw[i].p_raw == doctest::Approx(p_ref[i]).epsilon(1e-8));
    CHECK_FALSE(pw[i].significant_adjusted);
  }

  const auto s = summarize(m);
  CHECK(s[0].label == "B");
  CHECK(s[0].mean == doctest::Approx(1.02745).epsilon(1e-12));
  CHECK(s[0].sd == doctest::Approx(0.12927003).epsilon(1e-7));
  CHECK(s[1].mean == doctest::Approx(0.9315625).epsilon(1e-12));
}

TEST_CASE("rm-anova sums of squares partition") {
  const TrialMatrix m = table({"A", "B", "C", "D", "E", "F", "G", "H"});
  const AnovaResult a = rm_anova(m);
  CHECK(a.ss_between + a.ss_subjects + a.ss_error == doctest::Approx(a.ss_total).epsilon(1e-12));
  CHECK(a.df_between + a.df_subjects + a.df_error == static_cast<int>(m.rows() * m.cols() - 1));
}

TEST_CASE("rm-anova degenerate designs") {
  // Columns identical: no effect, no error.
  const TrialMatrix same = from_csv("team,x,y\nT1,1,1\nT2,2,2\nT3,3,3\n");
  const AnovaResult a = rm_anova(same);
  CHECK(a.degenerate);
  CHECK(a.f_stat == 0.0);
  CHECK(a.p_value == 1.0);

  // Constant shift: effect with zero error.
  const TrialMatrix shift = from_csv("team,x,y\nT1,1,2\nT2,2,3\nT3,5,6\n");
  const AnovaResult b = rm_anova(shift);
  CHECK(b.degenerate);
  CHECK(std::isinf(b.f_stat));
  CHECK(b.p_value == 0.0);
  const auto pw = bonferroni_pairwise(shift, 0.05);
  REQUIRE(pw.size() == 1);
  CHECK(pw[0].degenerate);
  CHECK(pw[0].p_raw == 0.0);

  CHECK_THROWS_AS(rm_anova(from_csv("team,x\nT1,1\nT2,2\n")), ConfigError);
  CHECK_THROWS_AS(rm_anova(from_csv("team,x,y\nT1,1,2\n")), ConfigError);
}

TEST_CASE("paired t-test edge cases") {
  const std::vector<double> one{1.0};
  const PairedTest t = paired_t_test(one, one);
  CHECK(t.n == 1);
  CHECK_FALSE(t.p_value.has_value());
  const std::vector<double> a{1.0, 2.0, 3.0};
  const std::vector<double> b{1.0, 2.0};
  CHECK_THROWS_AS(paired_t_test(a, b), ConfigError);
  const std::vector<double> c{1.0, 3.0, 2.0, 5.0};
  const std::vector<double> d{0.0, 1.0, 2.5, 3.0};
  const PairedTest u = paired_t_test(c, d);
  const PairedTest v = paired_t_test(d, c);
  CHECK(u.t_stat == doctest::Approx(-v.t_stat));
  CHECK(*u.p_value == doctest::Approx(*v.p_value));
}

TEST_CASE("row normalization") {
  const TrialMatrix m = from_csv("team,a,b\nT1,2,6\nT2,1,1\n");
  const TrialMatrix n = normalize_rows(m);
  CHECK(n.at(0, 0) == doctest::Approx(0.5));
  CHECK(n.at(0, 1) == doctest::Approx(1.5));
  CHECK(n.at(1, 0) == doctest::Approx(1.0));
  CHECK_THROWS_AS(normalize_rows(from_csv("team,a,b\nT1,-1,-1\nT2,1,1\n")), ConfigError);
}

TEST_CASE("trial CSV parsing and errors") {
  const TrialMatrix m = from_csv("\nteam,a,b\n\nT1,1.5,2\nT2,3,4e-1\n");
  CHECK(m.rows() == 2);
  CHECK(m.col_labels() == std::vector<std::string>{"a", "b"});
  CHECK(m.at(1, 1) == doctest::Approx(0.4));

  std::ostringstream out;
  write_trial_csv(out, m);
  const TrialMatrix back = from_csv(out.str());
  CHECK(back.cells() == m.cells());
  CHECK(back.row_labels() == m.row_labels());

  CHECK_THROWS_AS(from_csv(""), IoError);
  CHECK_THROWS_AS(from_csv("team,a,b\nT1,1\n"), IoError);
  CHECK_THROWS_AS(from_csv("team,a,b\nT1,1,x\n"), IoError);
  CHECK_THROWS_AS(from_csv("team,a,b\nT1,1,2abc\n"), IoError);
  CHECK_THROWS_AS(read_trial_csv(std::filesystem::path("/nonexistent/file.csv")), IoError);
  CHECK_THROWS_AS(m.select_columns(std::vector<std::string>{"zz"}), ConfigError);
  CHECK_THROWS_AS(rm_anova(from_csv("team,a,b\nT1,1,nan\nT2,1,2\n")), ConfigError);
}

TEST_CASE("report rendering") {
  const StatsReport r = analyze(table({"A", "D", "F", "H"}), 0.1, "fixed vs adaptive");
  const std::string text = format_report(r);
  CHECK(text.find("fixed vs adaptive") != std::string::npos);
  CHECK(text.find("2.21") != std::string::npos);
  const auto j = report_json(r);
  CHECK(j.at("anova").at("f").get<double>() == doctest::Approx(2.2136647).epsilon(1e-7));
  CHECK(j.at("pairwise").size() == 6);
}
