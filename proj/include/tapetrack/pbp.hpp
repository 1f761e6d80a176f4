#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cstdint>
#include <limits>
#include <queue>
#include <utility>
#include <vector>

#include "tapetrack/sampling.hpp"

namespace tapetrack {

// Undirected pairwise graph with per-node incidence lists.
struct PairGraph {
  int node_count = 0;
  std::vector<std::pair<int, int>> edges;

  struct Incidence {
    int edge;
    int other;
    bool first;  // node is edges[edge].first
  };
  std::vector<std::vector<Incidence>> incidence;

  PairGraph() = default;
  PairGraph(int n, std::vector<std::pair<int, int>> e) : node_count(n), edges(std::move(e)) {
    incidence.resize(static_cast<std::size_t>(n));
    for (std::size_t k = 0; k < edges.size(); ++k) {
      const auto [a, b] = edges[k];
      incidence[static_cast<std::size_t>(a)].push_back({static_cast<int>(k), b, true});
      incidence[static_cast<std::size_t>(b)].push_back({static_cast<int>(k), a, false});
    }
  }
};

// Energies over fixed particle sets. pairwise[e](i, j) is the energy of
// particle i at edges[e].first and particle j at edges[e].second.
struct ParticleTables {
  std::vector<Eigen::VectorXd> unary;
  std::vector<Eigen::MatrixXd> pairwise;
};

// Min-sum (max-product in the energy domain) message passing with a
// synchronous schedule, followed by sequential decoding in breadth-first
// order where each node conditions on its already decoded neighbours.
// Exact on trees once `sweeps` reaches the tree diameter.
inline std::vector<int> max_product_select(const PairGraph& graph, const ParticleTables& tables, int sweeps) {
  const auto n = static_cast<std::size_t>(graph.node_count);
  const std::size_t m = graph.edges.size();
  // messages[2e] : first -> second (indexed by second's particles),
  // messages[2e+1] : second -> first.
  std::vector<Eigen::VectorXd> msg(2 * m);
  for (std::size_t e = 0; e < m; ++e) {
    msg[2 * e] = Eigen::VectorXd::Zero(tables.unary[static_cast<std::size_t>(graph.edges[e].second)].size());
    msg[2 * e + 1] = Eigen::VectorXd::Zero(tables.unary[static_cast<std::size_t>(graph.edges[e].first)].size());
  }
  auto incoming = [&](std::size_t node, const std::vector<Eigen::VectorXd>& messages) {
    Eigen::VectorXd sum = tables.unary[node];
    for (const auto& inc : graph.incidence[node]) {
      sum += messages[2 * static_cast<std::size_t>(inc.edge) + (inc.first ? 1 : 0)];
    }
    return sum;
  };

  std::vector<Eigen::VectorXd> next(msg.size());
  for (int sweep = 0; sweep < sweeps && m > 0; ++sweep) {
    std::vector<Eigen::VectorXd> belief(n);
    for (std::size_t s = 0; s < n; ++s) belief[s] = incoming(s, msg);
    for (std::size_t e = 0; e < m; ++e) {
      const auto a = static_cast<std::size_t>(graph.edges[e].first);
      const auto b = static_cast<std::size_t>(graph.edges[e].second);
      const Eigen::MatrixXd& table = tables.pairwise[e];
      // a -> b
      const Eigen::VectorXd ha = belief[a] - msg[2 * e + 1];
      Eigen::VectorXd out_b = (table.colwise() + ha).colwise().minCoeff().transpose();
      out_b.array() -= out_b.minCoeff();
      // b -> a
      const Eigen::VectorXd hb = belief[b] - msg[2 * e];
      Eigen::VectorXd out_a = (table.rowwise() + hb.transpose()).rowwise().minCoeff();
      out_a.array() -= out_a.minCoeff();
      next[2 * e] = std::move(out_b);
      next[2 * e + 1] = std::move(out_a);
    }
    std::swap(msg, next);
  }

  std::vector<int> choice(n, -1);
  for (std::size_t root = 0; root < n; ++root) {
    if (choice[root] >= 0) continue;
    std::queue<std::size_t> queue;
    queue.push(root);
    std::vector<char> queued(n, 0);
    queued[root] = 1;
    while (!queue.empty()) {
      const std::size_t u = queue.front();
      queue.pop();
      Eigen::VectorXd score = tables.unary[u];
      for (const auto& inc : graph.incidence[u]) {
        const auto v = static_cast<std::size_t>(inc.other);
        const auto& table = tables.pairwise[static_cast<std::size_t>(inc.edge)];
        if (choice[v] >= 0) {
          score += inc.first ? Eigen::VectorXd(table.col(choice[v])) : Eigen::VectorXd(table.row(choice[v]).transpose());
        } else {
          score += msg[2 * static_cast<std::size_t>(inc.edge) + (inc.first ? 1 : 0)];
        }
      }
      Eigen::Index best = 0;
      score.minCoeff(&best);
      choice[u] = static_cast<int>(best);
      for (const auto& inc : graph.incidence[u]) {
        const auto v = static_cast<std::size_t>(inc.other);
        if (!queued[v] && choice[v] < 0) {
          queued[v] = 1;
          queue.push(v);
        }
      }
    }
  }
  return choice;
}

struct PbpOptions {
  int iterations = 40;
  int particle_count = 30;
  int inner_sweeps = 6;
  double slice_width = 10.0;
  int slice_max_steps = 8;
  double temperature = 1.0;
  double tolerance = 1e-6;
  int patience = 5;
  std::uint64_t seed = 1;
};

template <typename State>
struct PbpResult {
  std::vector<State> states;
  std::vector<double> energy_trace;  // best total energy after each iteration
  double initial_energy = 0.0;
  double best_energy = 0.0;
  int iterations = 0;
};

// Max-product particle belief propagation with slice-sampled particles.
//
// Model interface:
//   using State;  static constexpr int dims;
//   static double coordinate(const State&, int);  static void set_coordinate(State&, int, double);
//   static bool admissible(const State&);
//   const PairGraph& graph() const;
//   void prepare(const std::vector<State>& current);      // per-iteration caches
//   double unary(int node, const State&) const;
//   double pairwise(int edge, const State& first, const State& second) const;
//   Eigen::MatrixXd pairwise_table(int edge, const std::vector<State>&, const std::vector<State>&,
//                                  const Eigen::VectorXd& unary_first, const Eigen::VectorXd& unary_second) const;
//   std::vector<State> augment(int node, std::vector<State> base, const std::vector<State>& current) const;
//   double total_energy(const std::vector<State>&) const;   // exact objective
template <typename Model>
PbpResult<typename Model::State> run_pbp(Model& model, std::vector<typename Model::State> initial,
                                         const PbpOptions& opt) {
  using State = typename Model::State;
  const PairGraph& graph = model.graph();
  const auto n = static_cast<std::size_t>(graph.node_count);

  PbpResult<State> result;
  result.states = std::move(initial);
  result.initial_energy = model.total_energy(result.states);
  result.best_energy = result.initial_energy;
  if (n == 0) return result;

  int stall = 0;
  for (int iter = 0; iter < opt.iterations; ++iter) {
    const std::vector<State>& current = result.states;
    model.prepare(current);

    std::vector<std::vector<State>> particles(n);
    ParticleTables tables;
    tables.unary.resize(n);
    for (std::size_t s = 0; s < n; ++s) {
      const int node = static_cast<int>(s);
      auto local_energy = [&](const State& x) {
        double e = model.unary(node, x);
        for (const auto& inc : graph.incidence[s]) {
          const State& other = current[static_cast<std::size_t>(inc.other)];
          e += inc.first ? model.pairwise(inc.edge, x, other) : model.pairwise(inc.edge, other, x);
        }
        return e;
      };
      Rng rng(opt.seed, s, static_cast<std::uint64_t>(iter));
      std::vector<State> base;
      base.reserve(static_cast<std::size_t>(opt.particle_count));
      State x = current[s];
      base.push_back(x);
      for (int p = 1; p < opt.particle_count; ++p) {
        for (int k = 0; k < Model::dims; ++k) {
          auto log_density = [&](double v) {
            State y = x;
            Model::set_coordinate(y, k, v);
            if (!Model::admissible(y)) return -std::numeric_limits<double>::infinity();
            return -local_energy(y) / opt.temperature;
          };
          Model::set_coordinate(
              x, k, slice_sample(Model::coordinate(x, k), log_density, opt.slice_width, opt.slice_max_steps, rng));
        }
        base.push_back(x);
      }
      particles[s] = model.augment(node, std::move(base), current);
      auto& u = tables.unary[s];
      u.resize(static_cast<Eigen::Index>(particles[s].size()));
      for (std::size_t i = 0; i < particles[s].size(); ++i) u(static_cast<Eigen::Index>(i)) = model.unary(node, particles[s][i]);
    }
    tables.pairwise.resize(graph.edges.size());
    for (std::size_t e = 0; e < graph.edges.size(); ++e) {
      const auto a = static_cast<std::size_t>(graph.edges[e].first);
      const auto b = static_cast<std::size_t>(graph.edges[e].second);
      tables.pairwise[e] = model.pairwise_table(static_cast<int>(e), particles[a], particles[b], tables.unary[a],
                                                tables.unary[b]);
    }

    const std::vector<int> choice = max_product_select(graph, tables, opt.inner_sweeps);
    std::vector<State> candidate(n);
    for (std::size_t s = 0; s < n; ++s) candidate[s] = particles[s][static_cast<std::size_t>(choice[s])];
    const double energy = model.total_energy(candidate);
    const double previous = result.best_energy;
    if (energy < result.best_energy) {
      result.best_energy = energy;
      result.states = std::move(candidate);
    }
    result.energy_trace.push_back(result.best_energy);
    result.iterations = iter + 1;
    stall = (previous - result.best_energy < opt.tolerance) ? stall + 1 : 0;
    if (stall >= opt.patience) break;
  }
  return result;
}

}  // namespace tapetrack
