#include <gtest/gtest.h>

#include <random>

#include "oracles.hpp"
#include "tapetrack/pbp.hpp"

using namespace tapetrack;

TEST(MaxProduct, SingleNodeTakesUnaryArgmin) {
  PairGraph g(1, {});
  ParticleTables t;
  t.unary.push_back((Eigen::VectorXd(3) << 3, 1, 2).finished());
  EXPECT_EQ(max_product_select(g, t, 4), std::vector<int>{1});
}

TEST(MaxProduct, TwoNodeChainMatchesSixteenCombinations) {
  std::mt19937_64 gen(4);
  for (int trial = 0; trial < 50; ++trial) {
    PairGraph g(2, {{0, 1}});
    ParticleTables t;
    std::uniform_real_distribution<double> u(0.0, 10.0);
    for (int s = 0; s < 2; ++s) t.unary.push_back(Eigen::VectorXd::NullaryExpr(4, [&] { return u(gen); }));
    t.pairwise.push_back(Eigen::MatrixXd::NullaryExpr(4, 4, [&] { return u(gen); }));
    const auto x = max_product_select(g, t, 2);
    EXPECT_EQ(oracle::labelling_energy(g, t, x), oracle::min_labelling_energy(g, t)) << trial;
  }
}

TEST(MaxProduct, ExactOnRandomTrees) {
  std::mt19937_64 gen(2024);
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 1 + static_cast<int>(gen() % 6);
    const PairGraph g = oracle::random_tree(gen, n);
    const ParticleTables t = oracle::random_tables(gen, g, 5);
    const auto x = max_product_select(g, t, n);
    EXPECT_EQ(oracle::labelling_energy(g, t, x), oracle::min_labelling_energy(g, t)) << trial;
  }
}

TEST(MaxProduct, ForestsDecodeEveryComponent) {
  PairGraph g(4, {{0, 1}});
  ParticleTables t;
  for (int s = 0; s < 4; ++s) t.unary.push_back((Eigen::VectorXd(2) << s % 2, 1 - s % 2).finished());
  t.pairwise.push_back(Eigen::MatrixXd::Zero(2, 2));
  const auto x = max_product_select(g, t, 3);
  EXPECT_EQ(x, (std::vector<int>{0, 1, 0, 1}));
}

namespace {

// Quadratic chain pulling every node to a target with a smoothness term.
struct ChainModel {
  using State = double;
  static constexpr int dims = 1;
  PairGraph g{4, {{0, 1}, {1, 2}, {2, 3}}};
  std::vector<double> target{1.0, -2.0, 4.0, 0.5};

  static double coordinate(const State& s, int) { return s; }
  static void set_coordinate(State& s, int, double v) { s = v; }
  static bool admissible(const State& s) { return std::isfinite(s); }
  const PairGraph& graph() const { return g; }
  void prepare(const std::vector<State>&) {}
  double unary(int n, const State& s) const { return (s - target[static_cast<std::size_t>(n)]) * (s - target[static_cast<std::size_t>(n)]); }
  double pairwise(int, const State& a, const State& b) const { return 0.5 * (a - b) * (a - b); }
  Eigen::MatrixXd pairwise_table(int e, const std::vector<State>& pa, const std::vector<State>& pb,
                                 const Eigen::VectorXd&, const Eigen::VectorXd&) const {
    Eigen::MatrixXd m(static_cast<Eigen::Index>(pa.size()), static_cast<Eigen::Index>(pb.size()));
    for (std::size_t i = 0; i < pa.size(); ++i) {
      for (std::size_t j = 0; j < pb.size(); ++j) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = pairwise(e, pa[i], pb[j]);
    }
    return m;
  }
  std::vector<State> augment(int, std::vector<State> base, const std::vector<State>&) const { return base; }
  double total_energy(const std::vector<State>& x) const {
    double e = 0.0;
    for (int n = 0; n < 4; ++n) e += unary(n, x[static_cast<std::size_t>(n)]);
    for (const auto& [a, b] : g.edges) e += pairwise(0, x[static_cast<std::size_t>(a)], x[static_cast<std::size_t>(b)]);
    return e;
  }
};

}  // namespace

TEST(RunPbp, TraceNonIncreasingAndApproachesOptimum) {
  ChainModel m;
  PbpOptions opt;
  opt.iterations = 60;
  opt.particle_count = 20;
  opt.slice_width = 2.0;
  const auto r = run_pbp(m, std::vector<double>(4, 0.0), opt);
  ASSERT_FALSE(r.energy_trace.empty());
  for (std::size_t i = 1; i < r.energy_trace.size(); ++i) EXPECT_LE(r.energy_trace[i], r.energy_trace[i - 1]);
  EXPECT_LE(r.best_energy, r.initial_energy);
  EXPECT_EQ(r.best_energy, m.total_energy(r.states));
  // Optimum of the quadratic: solve (2I + L) x = 2 target.
  Eigen::Matrix4d a = 2.0 * Eigen::Matrix4d::Identity();
  for (const auto& [i, j] : m.g.edges) {
    a(i, i) += 1.0;
    a(j, j) += 1.0;
    a(i, j) -= 1.0;
    a(j, i) -= 1.0;
  }
  const Eigen::Vector4d x = a.ldlt().solve(2.0 * Eigen::Vector4d(1.0, -2.0, 4.0, 0.5));
  const std::vector<double> opt_x(x.data(), x.data() + 4);
  EXPECT_LT(r.best_energy - m.total_energy(opt_x), 0.05);
}

TEST(RunPbp, DeterministicForFixedSeed) {
  ChainModel m;
  PbpOptions opt;
  opt.iterations = 10;
  const auto a = run_pbp(m, std::vector<double>(4, 0.0), opt);
  const auto b = run_pbp(m, std::vector<double>(4, 0.0), opt);
  EXPECT_EQ(a.states, b.states);
  EXPECT_EQ(a.energy_trace, b.energy_trace);
  opt.seed = 2;
  const auto c = run_pbp(m, std::vector<double>(4, 0.0), opt);
  EXPECT_NE(a.states, c.states);
}
