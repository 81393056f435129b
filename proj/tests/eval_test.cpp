#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <random>

#include "antispoof/eval/csv.hpp"
#include "antispoof/eval/folds.hpp"
#include "antispoof/eval/report.hpp"
#include "antispoof/eval/roc.hpp"
#include "oracles.hpp"
#include "table_one.hpp"
#include "test_util.hpp"

using namespace antispoof;
using namespace antispoof::eval;

namespace {

std::vector<ScoredSample> scored(const std::vector<double>& genuine, const std::vector<double>& attack) {
  std::vector<ScoredSample> out;
  for (double s : genuine) out.push_back({s, Truth::Genuine, "SYNTH", "g", "g" + std::to_string(out.size())});
  for (double s : attack) out.push_back({s, Truth::Attack, "SYNTH", "a", "a" + std::to_string(out.size())});
  return out;
}

// Scores on a coarse grid so that ties occur often.
struct Fixture {
  std::vector<double> genuine, attack;
};

Fixture random_fixture(std::mt19937_64& rng, std::size_t max_n = 1000) {
  std::uniform_int_distribution<std::size_t> size(2, max_n);
  const std::size_t n = size(rng);
  std::uniform_int_distribution<std::size_t> split(1, n - 1);
  const std::size_t g = split(rng);
  std::uniform_int_distribution<int> level(0, 1 + int(rng() % 200));
  std::normal_distribution<double> shift(0.0, 20.0);
  const double offset = shift(rng);
  Fixture f;
  for (std::size_t i = 0; i < g; ++i) f.genuine.push_back(level(rng) + offset);
  for (std::size_t i = g; i < n; ++i) f.attack.push_back(level(rng) * 0.9);
  return f;
}

ScenarioResult cell(int frames, int scale, double dev, double test) {
  ScenarioResult r;
  r.frame_count = frames;
  r.scale_index = scale;
  r.dev_eer = dev;
  r.test_hter = test;
  return r;
}

std::vector<ScenarioResult> table_one_cells() {
  std::vector<ScenarioResult> out;
  for (int f = 0; f < 3; ++f)
    for (int s = 0; s < 5; ++s) out.push_back(cell(f + 1, s + 1, kTableOne[f][s][0], kTableOne[f][s][1]));
  return out;
}

}  // namespace

TEST(Roc, SeparatedScoresReachZeroError) {
  const auto roc = roc_points(scored({0.8, 0.9, 0.95}, {0.1, 0.3}));
  EXPECT_TRUE(std::any_of(roc.begin(), roc.end(), [](const RocPoint& p) { return p.far == 0 && p.frr == 0; }));
}

TEST(Roc, EqualScoresGiveOnlyDegeneratePoints) {
  for (const auto& p : roc_points(scored({0.5, 0.5}, {0.5, 0.5, 0.5}))) {
    EXPECT_TRUE((p.far == 1 && p.frr == 0) || (p.far == 0 && p.frr == 1)) << p.far << " " << p.frr;
  }
}

TEST(Roc, SingleClassRaises) {
  EXPECT_THROW(roc_points(scored({0.1, 0.2}, {})), DegenerateLabelsError);
  EXPECT_THROW(eer_threshold(scored({}, {0.2})), DegenerateLabelsError);
  EXPECT_THROW(hter_at_threshold(scored({0.3}, {}), 0.0), DegenerateLabelsError);
}

TEST(Roc, RandomScoresMatchCountingOracle) {
  std::mt19937_64 rng(20);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> g(10), a(10);
    for (auto& v : g) v = std::round(u(rng) * 20) / 20;
    for (auto& v : a) v = std::round(u(rng) * 20) / 20;
    const auto roc = roc_points(scored(g, a));
    const auto candidates = oracle::score_candidates(g, a);
    ASSERT_EQ(roc.size(), candidates.size());
    for (std::size_t i = 0; i < roc.size(); ++i) {
      const auto r = oracle::count_rates(g, a, candidates[i]);
      EXPECT_EQ(roc[i].threshold, candidates[i]);
      EXPECT_EQ(roc[i].far, r.far);
      EXPECT_EQ(roc[i].frr, r.frr);
    }
  }
}

TEST(Roc, MonotoneInThreshold) {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 50; ++trial) {
    const auto f = random_fixture(rng, 300);
    const auto roc = roc_points(scored(f.genuine, f.attack));
    for (std::size_t i = 1; i < roc.size(); ++i) {
      EXPECT_LT(roc[i - 1].threshold, roc[i].threshold);
      EXPECT_GE(roc[i - 1].far, roc[i].far);
      EXPECT_LE(roc[i - 1].frr, roc[i].frr);
    }
  }
}

TEST(Eer, PerfectSeparationIsZero) {
  const auto e = eer_threshold(scored({0.8, 0.9}, {0.1, 0.2}));
  EXPECT_EQ(e.eer, 0.0);
  EXPECT_EQ(e.threshold, 0.5);  // middle of the zero-error gap
  EXPECT_EQ(hter_at_threshold(scored({0.8, 0.9}, {0.1, 0.2}), e.threshold), 0.0);
}

TEST(Eer, HandSweptFourSampleFixture) {
  const auto e = eer_threshold(scored({0.9, 0.7}, {0.8, 0.2}));
  EXPECT_GT(e.threshold, 0.7);
  EXPECT_LE(e.threshold, 0.8);
  EXPECT_EQ(e.far, 0.5);
  EXPECT_EQ(e.frr, 0.5);
  EXPECT_EQ(e.eer, 50.0);
}

TEST(Eer, InvertedPolarityOnSeparableSet) {
  // Every genuine scores below every attack. FAR == FRR only where both
  // rates are 1: from the gap midpoint up to the lowest attack score.
  const std::vector<double> g = {0.1, 0.2, 0.3}, a = {0.7, 0.8, 0.9};
  const auto e = eer_threshold(scored(g, a));
  const auto o = oracle::eer_sweep(g, a, oracle::sweep_candidates(g, a));
  EXPECT_EQ(e.eer, o.eer);
  EXPECT_EQ(e.threshold, o.threshold);
  EXPECT_EQ(e.eer, 100.0);
  EXPECT_EQ(e.threshold, 0.5);
}

TEST(Eer, MatchesExhaustiveSweepOnRandomFixtures) {
  std::mt19937_64 rng(22);
  for (int trial = 0; trial < 100; ++trial) {
    const auto f = random_fixture(rng);
    const auto e = eer_threshold(scored(f.genuine, f.attack));
    const auto o = oracle::eer_sweep(f.genuine, f.attack, oracle::sweep_candidates(f.genuine, f.attack));
    EXPECT_EQ(e.threshold, o.threshold);
    EXPECT_EQ(e.eer, o.eer);
    EXPECT_EQ(e.far, o.far);
    EXPECT_EQ(e.frr, o.frr);
  }
}

TEST(Eer, NoMidpointThresholdDoesBetter) {
  std::mt19937_64 rng(23);
  for (int trial = 0; trial < 30; ++trial) {
    const auto f = random_fixture(rng, 200);
    const auto e = eer_threshold(scored(f.genuine, f.attack));
    auto c = oracle::sweep_candidates(f.genuine, f.attack);
    std::vector<double> mids = {c[1] - 1.0, c[c.size() - 2] + 1.0};
    for (std::size_t i = 2; i + 1 < c.size(); ++i) mids.push_back((c[i - 1] + c[i]) / 2);
    for (double t : mids) {
      const auto r = oracle::count_rates(f.genuine, f.attack, t);
      const double gap = std::abs(r.far - r.frr), best_gap = std::abs(e.far - e.frr);
      EXPECT_TRUE(gap > best_gap || (gap == best_gap && (r.far + r.frr) >= (e.far + e.frr)));
    }
  }
}

TEST(Eer, InvariantUnderStrictlyIncreasingMaps) {
  const std::vector<std::function<double(double)>> maps = {
      [](double x) { return 3 * x + 1; },         [](double x) { return x * x * x; },
      [](double x) { return std::exp(x); },       [](double x) { return std::atan(x); },
      [](double x) { return x + x * x * x; },     [](double x) { return std::log1p(std::exp(x)); },
      [](double x) { return 0.5 * x - 7; },       [](double x) { return std::tanh(x / 3); },
      [](double x) { return std::cbrt(x) + x; },  [](double x) { return std::exp(x / 2) - std::exp(-x); },
  };
  std::mt19937_64 rng(24);
  std::uniform_int_distribution<int> level(-30, 30);
  for (const auto& f : maps) {
    std::vector<double> g(200), a(150);
    for (auto& v : g) v = level(rng) / 10.0 + 0.5;
    for (auto& v : a) v = level(rng) / 10.0;
    std::vector<double> fg, fa;
    for (double v : g) fg.push_back(f(v));
    for (double v : a) fa.push_back(f(v));
    const auto e0 = eer_threshold(scored(g, a));
    const auto e1 = eer_threshold(scored(fg, fa));
    EXPECT_EQ(e0.eer, e1.eer);
    // The threshold keeps its rank position among the mapped scores.
    const auto r0 = oracle::count_rates(g, a, e0.threshold), r1 = oracle::count_rates(fg, fa, e1.threshold);
    EXPECT_EQ(r0.far, r1.far);
    EXPECT_EQ(r0.frr, r1.frr);
    if (std::find(g.begin(), g.end(), e0.threshold) != g.end() ||
        std::find(a.begin(), a.end(), e0.threshold) != a.end())
      EXPECT_EQ(f(e0.threshold), e1.threshold);
  }
}

TEST(Hter, OneSidedAndSeparated) {
  EXPECT_EQ(hter_at_threshold(scored({0.8, 0.9}, {0.1, 0.2}), 0.5), 0.0);
  EXPECT_EQ(hter_at_threshold(scored({0.1, 0.2}, {0.0, 0.05}), 0.5), 50.0);
}

TEST(Hter, MatchesCountingOracleAndEqualsEerOnDev) {
  std::mt19937_64 rng(25);
  std::uniform_real_distribution<double> u(-50, 50);
  for (int trial = 0; trial < 100; ++trial) {
    const auto f = random_fixture(rng, 500);
    const double t = u(rng);
    const auto r = oracle::count_rates(f.genuine, f.attack, t);
    const double h = hter_at_threshold(scored(f.genuine, f.attack), t);
    EXPECT_EQ(h, (r.far + r.frr) / 2 * 100);
    EXPECT_GE(h, 0.0);
    EXPECT_LE(h, 100.0);
    const auto e = eer_threshold(scored(f.genuine, f.attack));
    EXPECT_EQ(hter_at_threshold(scored(f.genuine, f.attack), e.threshold), e.eer);
  }
}

TEST(SequenceScores, AveragedPerSequence) {
  std::vector<ScoredSample> frames = {
      {1.0, Truth::Genuine, "A", "s1", "q1"}, {3.0, Truth::Genuine, "A", "s1", "q1"},
      {-1.0, Truth::Attack, "A", "s1", "q2"}, {5.0, Truth::Genuine, "B", "s1", "q1"}};
  const auto seq = aggregate_by_sequence(frames);
  ASSERT_EQ(seq.size(), 3u);
  EXPECT_EQ(seq[0].score, 2.0);
  EXPECT_EQ(seq[1].score, -1.0);
  EXPECT_EQ(seq[2].dataset, "B");
  frames.push_back({0.0, Truth::Attack, "A", "s1", "q1"});
  EXPECT_THROW(aggregate_by_sequence(frames), ConfigError);
}

TEST(Folds, FiftySubjectsIntoFiveFolds) {
  std::vector<std::string> subjects;
  for (int i = 0; i < 50; ++i) subjects.push_back("p" + std::to_string(i));
  const auto plan = make_folds(subjects, 5, 9);
  EXPECT_EQ(plan.assignment.size(), 50u);
  for (std::size_t f = 0; f < 5; ++f) EXPECT_EQ(plan.fold_subjects(f).size(), 10u);
  EXPECT_EQ(make_folds(subjects, 5, 9).assignment, plan.assignment);
  EXPECT_NE(make_folds(subjects, 5, 10).assignment, plan.assignment);
}

TEST(Folds, DegeneratePlansRaise) {
  EXPECT_THROW(make_folds({"a", "b", "c"}, 1, 0), ConfigError);
  EXPECT_THROW(make_folds({"a", "b", "c", "c"}, 4, 0), ConfigError);
}

TEST(Folds, PartitionBalancedWithinOne) {
  std::mt19937_64 rng(26);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t k = 2 + rng() % 6, n = k + rng() % 40;
    std::vector<std::string> subjects;
    for (std::size_t i = 0; i < n; ++i) subjects.push_back("s" + std::to_string(i));
    subjects.push_back("s0");  // duplicates collapse
    const auto plan = make_folds(subjects, k, rng());
    std::size_t lo = n, hi = 0, total = 0;
    for (std::size_t f = 0; f < k; ++f) {
      const std::size_t sz = plan.fold_subjects(f).size();
      lo = std::min(lo, sz);
      hi = std::max(hi, sz);
      total += sz;
    }
    EXPECT_EQ(total, n);
    EXPECT_LE(hi - lo, 1u);
    for (const auto& s : subjects) {
      std::size_t hits = 0;
      for (std::size_t f = 0; f < k; ++f) hits += plan.in_fold(s, f);
      EXPECT_EQ(hits, 1u);
    }
  }
}

TEST(CrossValidation, MeansAndPerFoldThresholds) {
  auto a = cell(1, 3, 4, 4), b = cell(1, 3, 5, 5), c = cell(1, 3, 6, 6);
  a.thresholds = {0.1};
  b.thresholds = {0.2};
  c.thresholds = {0.3};
  const auto r = aggregate_cross_validation({a, b, c});
  EXPECT_DOUBLE_EQ(r.dev_eer, 5.0);
  EXPECT_DOUBLE_EQ(r.test_hter, 5.0);
  EXPECT_EQ(r.thresholds, (std::vector<double>{0.1, 0.2, 0.3}));
  EXPECT_EQ(aggregate_cross_validation({b, b, b}).dev_eer, 5.0);
  EXPECT_THROW(aggregate_cross_validation({}), ConfigError);
  EXPECT_THROW(aggregate_cross_validation({a, cell(2, 3, 1, 1)}), ConfigError);

  std::mt19937_64 rng(27);
  std::uniform_real_distribution<double> u(0, 100);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<ScenarioResult> folds;
    double sum = 0;
    for (int i = 0; i < 5; ++i) {
      folds.push_back(cell(2, 2, u(rng), u(rng)));
      sum += folds.back().dev_eer;
    }
    EXPECT_NEAR(aggregate_cross_validation(folds).dev_eer, sum / 5, 1e-9);
  }
}

TEST(Report, ReproducesPublishedTableMeans) {
  const auto r = build_report(table_one_cells());
  for (int f = 0; f < 3; ++f) {
    EXPECT_NEAR(r.row_mean[std::size_t(f)]->dev, kTableOneRowMean[f][0], 0.01);
    EXPECT_NEAR(r.row_mean[std::size_t(f)]->test, kTableOneRowMean[f][1], 0.01);
  }
  for (int s = 0; s < 5; ++s) {
    EXPECT_NEAR(r.column_mean[std::size_t(s)]->dev, kTableOneColumnMean[s][0], 0.01);
    EXPECT_NEAR(r.column_mean[std::size_t(s)]->test, kTableOneColumnMean[s][1], 0.01);
  }
  EXPECT_NEAR(r.grand_mean->dev, kTableOneGrandMean[0], 0.01);
  EXPECT_NEAR(r.grand_mean->test, kTableOneGrandMean[1], 0.01);
  const std::string csv = report_csv(r);
  EXPECT_NE(csv.find("\n1,7.06,7.38,5.44,5.58,4.92,5.09,5.81,5.84,6.98,6.99,6.04,6.18\n"), std::string::npos) << csv;
  EXPECT_NE(csv.find("\nMean,7.45,7.63,5.31,5.41,5.02,5.08,5.63,5.66,7.73,7.49,6.23,6.25\n"), std::string::npos) << csv;
}

TEST(Report, ZeroGridAndMissingCells) {
  std::vector<ScenarioResult> zeros;
  for (int f = 1; f <= 3; ++f)
    for (int s = 1; s <= 5; ++s) zeros.push_back(cell(f, s, 0, 0));
  const auto r = build_report(zeros);
  EXPECT_EQ(r.grand_mean->dev, 0.0);
  EXPECT_EQ(r.column_mean[2]->test, 0.0);

  zeros.erase(zeros.begin() + 7);
  try {
    build_report(zeros);
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("(frames 2, scale 3)"), std::string::npos) << e.what();
  }
  const auto partial = build_partial_report({cell(1, 1, 2, 4), cell(1, 3, 4, 8), cell(1, 5, 6, 12)});
  EXPECT_FALSE(partial.cell(1, 2).has_value());
  EXPECT_DOUBLE_EQ(partial.row_mean[0]->test, 8.0);
  EXPECT_FALSE(partial.row_mean[1].has_value());
  const std::string csv = report_csv(partial);
  EXPECT_NE(csv.find("\n1,2.00,4.00,NA,NA,4.00,8.00,NA,NA,6.00,12.00,4.00,8.00\n"), std::string::npos) << csv;
  EXPECT_NE(csv.find("\n2,NA,NA,NA,NA,NA,NA,NA,NA,NA,NA,NA,NA\n"), std::string::npos) << csv;
  EXPECT_THROW(build_partial_report({cell(1, 6, 0, 0)}), ConfigError);
  EXPECT_THROW(build_partial_report({cell(1, 1, 0, 0), cell(1, 1, 0, 0)}), ConfigError);
}

TEST(Report, CombinedLayoutSharesDevRow) {
  const auto a = build_partial_report({cell(1, 3, 2, 3)});
  const auto b = build_partial_report({cell(1, 3, 2, 7)});
  const std::string csv = combined_report_csv({{"synth_a", a}, {"synth_b", b}});
  EXPECT_EQ(csv,
            "frames,set,scale1,scale2,scale3,scale4,scale5,mean\n"
            "1,dev,NA,NA,2.00,NA,NA,2.00\n"
            "1,test:synth_a,NA,NA,3.00,NA,NA,3.00\n"
            "1,test:synth_b,NA,NA,7.00,NA,NA,7.00\n"
            "2,dev,NA,NA,NA,NA,NA,NA\n"
            "2,test:synth_a,NA,NA,NA,NA,NA,NA\n"
            "2,test:synth_b,NA,NA,NA,NA,NA,NA\n"
            "3,dev,NA,NA,NA,NA,NA,NA\n"
            "3,test:synth_a,NA,NA,NA,NA,NA,NA\n"
            "3,test:synth_b,NA,NA,NA,NA,NA,NA\n"
            "Mean,dev,NA,NA,2.00,NA,NA,2.00\n"
            "Mean,test:synth_a,NA,NA,3.00,NA,NA,3.00\n"
            "Mean,test:synth_b,NA,NA,7.00,NA,NA,7.00\n");
}

TEST(ScoreFiles, RoundTripAndErrors) {
  testutil::TempDir dir;
  const auto s = scored({0.1, 1.0 / 3.0, -2e-300}, {5e10, -0.0});
  write_scores(dir / "s.csv", s);
  EXPECT_EQ(read_scores(dir / "s.csv"), s);
  testutil::spit(dir / "bad.csv", "dataset,subject_id,sequence_id,truth,score\nA,s,q,maybe,0.1\n");
  EXPECT_THROW(read_scores(dir / "bad.csv"), ParseError);
  testutil::spit(dir / "bad.csv", "x,y\n");
  EXPECT_THROW(read_scores(dir / "bad.csv"), ParseError);
  testutil::spit(dir / "bad.csv", "dataset,subject_id,sequence_id,truth,score\nA,s,q,genuine,0.1x\n");
  EXPECT_THROW(read_scores(dir / "bad.csv"), ParseError);
  EXPECT_THROW(read_scores(dir / "none.csv"), IoError);
  EXPECT_EQ(roc_csv({{-INFINITY, 1, 0}, {0.5, 0.25, 0.5}}), "threshold,far,frr\n-inf,1,0\n0.5,0.25,0.5\n");
}
