#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>
#include <set>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "tapetrack/candidates.hpp"
#include "tapetrack/error.hpp"

namespace tapetrack {

inline constexpr double kIsolatedEdgeCost = 1e6;

// Binary edge-selection program: choose exactly n edges minimising the
// summed cost, each chosen edge having between min and max chosen
// neighbours, no exclusivity pair fully chosen.
struct SelectionProblem {
  int edge_count = 0;
  std::vector<double> costs;
  std::vector<std::vector<int>> neighbor_sets;
  std::vector<std::pair<int, int>> exclusivity_groups;
  int n_e_target = 0;

  void validate() const {
    const auto n = static_cast<std::size_t>(edge_count);
    if (costs.size() != n || neighbor_sets.size() != n) {
      throw Error("invalid-problem", "costs/neighbor_sets must have one entry per edge");
    }
    for (double c : costs) {
      if (!std::isfinite(c) || !(c > 0.0)) throw Error("invalid-problem", "edge costs must be finite and positive");
    }
    std::set<std::pair<int, int>> arcs;
    for (int e = 0; e < edge_count; ++e) {
      for (int w : neighbor_sets[static_cast<std::size_t>(e)]) {
        if (w < 0 || w >= edge_count || w == e) throw Error("invalid-problem", "bad neighbor index");
        arcs.emplace(e, w);
      }
    }
    for (const auto& [a, b] : arcs) {
      if (!arcs.count({b, a})) throw Error("invalid-problem", "neighbor sets must be symmetric");
    }
    for (const auto& [a, b] : exclusivity_groups) {
      if (a == b || a < 0 || b < 0 || a >= edge_count || b >= edge_count) {
        throw Error("invalid-problem", "exclusivity pairs must reference two distinct edges");
      }
    }
    if (n_e_target < 0) throw Error("invalid-problem", "negative edge target");
  }
};

struct SelectionOptions {
  int min_neighbors = 6;
  int max_neighbors = 12;
  double floor_fraction = 0.5;
  std::uint64_t node_limit = 0;  // 0: unlimited
};

struct EdgeSelection {
  std::vector<std::uint8_t> selected;
  double objective = 0.0;
  int achieved_n_e = 0;
  bool feasible = false;
  bool proven_optimal = true;  // false only when a node limit cut the search
  std::uint64_t nodes = 0;
};

// Omega_e: every other cloud edge sharing an endpoint with e.
inline std::vector<std::vector<int>> edge_neighbor_sets(const EdgeCloud& cloud) {
  std::vector<std::vector<int>> incident(cloud.points.size());
  for (std::size_t e = 0; e < cloud.edges.size(); ++e) {
    incident[static_cast<std::size_t>(cloud.edges[e].i)].push_back(static_cast<int>(e));
    incident[static_cast<std::size_t>(cloud.edges[e].j)].push_back(static_cast<int>(e));
  }
  std::vector<std::vector<int>> omega(cloud.edges.size());
  for (std::size_t e = 0; e < cloud.edges.size(); ++e) {
    auto& out = omega[e];
    for (int p : {cloud.edges[e].i, cloud.edges[e].j}) {
      for (int f : incident[static_cast<std::size_t>(p)]) {
        if (f != static_cast<int>(e)) out.push_back(f);
      }
    }
    std::sort(out.begin(), out.end());
  }
  return omega;
}

// c_e = 1 / |Omega_e|, or kIsolatedEdgeCost for an edge without neighbours.
inline std::vector<double> edge_costs(const EdgeCloud& cloud) {
  const auto omega = edge_neighbor_sets(cloud);
  std::vector<double> costs;
  costs.reserve(omega.size());
  for (const auto& o : omega) costs.push_back(o.empty() ? kIsolatedEdgeCost : 1.0 / static_cast<double>(o.size()));
  return costs;
}

// Edges e_ij, e_kl with four distinct endpoints conflict when some camera
// triangulated both from the same blob pair.
inline std::vector<std::pair<int, int>> exclusivity_pairs(const EdgeCloud& cloud) {
  std::map<std::tuple<int, int, int>, std::vector<int>> groups;
  for (std::size_t e = 0; e < cloud.edges.size(); ++e) {
    const auto& pi = cloud.points[static_cast<std::size_t>(cloud.edges[e].i)];
    const auto& pj = cloud.points[static_cast<std::size_t>(cloud.edges[e].j)];
    for (const auto& [cam, bi] : pi.blobs) {
      auto it = pj.blobs.find(cam);
      if (it == pj.blobs.end()) continue;
      groups[{cam, std::min(bi, it->second), std::max(bi, it->second)}].push_back(static_cast<int>(e));
    }
  }
  std::set<std::pair<int, int>> pairs;
  for (const auto& [key, members] : groups) {
    for (std::size_t a = 0; a < members.size(); ++a) {
      for (std::size_t b = a + 1; b < members.size(); ++b) {
        const auto& ea = cloud.edges[static_cast<std::size_t>(members[a])];
        const auto& eb = cloud.edges[static_cast<std::size_t>(members[b])];
        if (ea.i == eb.i || ea.i == eb.j || ea.j == eb.i || ea.j == eb.j) continue;
        pairs.emplace(std::min(members[a], members[b]), std::max(members[a], members[b]));
      }
    }
  }
  return {pairs.begin(), pairs.end()};
}

inline SelectionProblem make_selection_problem(const EdgeCloud& cloud, int n_e_target) {
  SelectionProblem p;
  p.edge_count = static_cast<int>(cloud.edges.size());
  p.neighbor_sets = edge_neighbor_sets(cloud);
  p.costs.reserve(p.neighbor_sets.size());
  for (const auto& o : p.neighbor_sets) {
    p.costs.push_back(o.empty() ? kIsolatedEdgeCost : 1.0 / static_cast<double>(o.size()));
  }
  p.exclusivity_groups = exclusivity_pairs(cloud);
  p.n_e_target = n_e_target;
  return p;
}

// Objective in index order; all comparisons of solutions go through it.
inline double selection_objective(const SelectionProblem& p, const std::vector<std::uint8_t>& selected) {
  double total = 0.0;
  for (std::size_t e = 0; e < selected.size(); ++e) {
    if (selected[e]) total += p.costs[e];
  }
  return total;
}

inline constexpr double kObjectiveTolerance = 1e-9;

// Total order on solutions: lower objective, ties (within tolerance) broken
// by the lexicographically smallest sorted index set.
inline bool selection_better(double obj_a, const std::vector<int>& set_a, double obj_b, const std::vector<int>& set_b) {
  if (obj_a < obj_b - kObjectiveTolerance) return true;
  if (obj_a > obj_b + kObjectiveTolerance) return false;
  return std::lexicographical_compare(set_a.begin(), set_a.end(), set_b.begin(), set_b.end());
}

namespace detail {

// Depth-first branch and bound for a fixed cardinality n.
class SelectionSearch {
public:
  SelectionSearch(const SelectionProblem& problem, const SelectionOptions& options, const std::vector<char>& eligible,
                  int n)
      : p_(problem), opt_(options), n_(n) {
    const auto m = static_cast<std::size_t>(p_.edge_count);
    value_.assign(m, kFree);
    sel_nbr_.assign(m, 0);
    free_nbr_.resize(m);
    for (std::size_t e = 0; e < m; ++e) free_nbr_[e] = static_cast<int>(p_.neighbor_sets[e].size());
    free_count_ = p_.edge_count;
    queued_.assign(m, 0);
    partners_.resize(m);
    for (const auto& [a, b] : p_.exclusivity_groups) {
      partners_[static_cast<std::size_t>(a)].push_back(b);
      partners_[static_cast<std::size_t>(b)].push_back(a);
    }
    by_cost_.resize(m);
    std::iota(by_cost_.begin(), by_cost_.end(), 0);
    std::stable_sort(by_cost_.begin(), by_cost_.end(), [&](int a, int b) {
      return p_.costs[static_cast<std::size_t>(a)] < p_.costs[static_cast<std::size_t>(b)];
    });
    for (std::size_t e = 0; e < m; ++e) {
      if (!eligible[e]) assign(static_cast<int>(e), kOff);
    }
    for (int e = 0; e < p_.edge_count; ++e) enqueue(e);
  }

  // Returns true when a feasible selection was found.
  bool run() {
    dfs();
    return found_;
  }

  bool aborted() const { return aborted_; }
  std::uint64_t nodes() const { return nodes_; }
  const std::vector<int>& best_set() const { return best_set_; }
  double best_objective() const { return best_obj_; }

private:
  static constexpr signed char kFree = -1;
  static constexpr signed char kOff = 0;
  static constexpr signed char kOn = 1;

  void assign(int e, signed char v) {
    const auto ue = static_cast<std::size_t>(e);
    value_[ue] = v;
    --free_count_;
    if (v == kOn) {
      ++sel_count_;
      cost_ += p_.costs[ue];
    }
    for (int w : p_.neighbor_sets[ue]) {
      --free_nbr_[static_cast<std::size_t>(w)];
      if (v == kOn) ++sel_nbr_[static_cast<std::size_t>(w)];
      enqueue(w);
    }
    enqueue(e);
    if (v == kOn) {
      for (int q : partners_[ue]) enqueue(q);
    }
    trail_.push_back(e);
  }

  void undo(std::size_t mark) {
    while (trail_.size() > mark) {
      const int e = trail_.back();
      trail_.pop_back();
      const auto ue = static_cast<std::size_t>(e);
      const signed char v = value_[ue];
      value_[ue] = kFree;
      ++free_count_;
      if (v == kOn) {
        --sel_count_;
        cost_ -= p_.costs[ue];
      }
      for (int w : p_.neighbor_sets[ue]) {
        ++free_nbr_[static_cast<std::size_t>(w)];
        if (v == kOn) --sel_nbr_[static_cast<std::size_t>(w)];
      }
    }
  }

  void enqueue(int e) {
    auto& flag = queued_[static_cast<std::size_t>(e)];
    if (!flag) {
      flag = 1;
      queue_.push_back(e);
    }
  }

  void clear_queue() {
    for (int e : queue_) queued_[static_cast<std::size_t>(e)] = 0;
    queue_.clear();
  }

  void set_free_neighbors(int e, signed char v) {
    for (int w : p_.neighbor_sets[static_cast<std::size_t>(e)]) {
      if (value_[static_cast<std::size_t>(w)] == kFree) assign(w, v);
    }
  }

  // Local consistency of one edge; may assign further edges.
  bool check(int e) {
    const int lo = opt_.min_neighbors;
    const int hi = opt_.max_neighbors;
    const auto ue = static_cast<std::size_t>(e);
    const int s = sel_nbr_[ue];
    const int f = free_nbr_[ue];
    if (value_[ue] == kOn) {
      if (s > hi || s + f < lo) return false;
      for (int q : partners_[ue]) {
        const signed char pv = value_[static_cast<std::size_t>(q)];
        if (pv == kOn) return false;
        if (pv == kFree) assign(q, kOff);
      }
      if (f > 0 && s == hi) set_free_neighbors(e, kOff);
      else if (f > 0 && s + f == lo) set_free_neighbors(e, kOn);
    } else if (value_[ue] == kFree) {
      bool off = s > hi || s + f < lo;
      for (int q : partners_[ue]) off |= value_[static_cast<std::size_t>(q)] == kOn;
      if (off) assign(e, kOff);
    }
    return true;
  }

  bool propagate() {
    std::size_t head = 0;
    bool ok = true;
    while (ok) {
      if (sel_count_ > n_ || sel_count_ + free_count_ < n_) {
        ok = false;
        break;
      }
      if (free_count_ > 0 && (sel_count_ == n_ || sel_count_ + free_count_ == n_)) {
        const signed char v = sel_count_ == n_ ? kOff : kOn;
        for (int e = 0; e < p_.edge_count; ++e) {
          if (value_[static_cast<std::size_t>(e)] == kFree) assign(e, v);
        }
        continue;
      }
      if (head == queue_.size()) break;
      const int e = queue_[head++];
      queued_[static_cast<std::size_t>(e)] = 0;
      ok = check(e);
    }
    clear_queue();
    return ok;
  }

  double lower_bound() const {
    int need = n_ - sel_count_;
    double bound = cost_;
    for (int e : by_cost_) {
      if (need == 0) break;
      if (value_[static_cast<std::size_t>(e)] == kFree) {
        bound += p_.costs[static_cast<std::size_t>(e)];
        --need;
      }
    }
    return bound;
  }

  // Lexicographically smallest completion of the current partial assignment.
  bool smallest_completion_beats_incumbent() const {
    int need = n_ - sel_count_;
    std::vector<int> completion;
    completion.reserve(static_cast<std::size_t>(n_));
    for (int e = 0; e < p_.edge_count; ++e) {
      const signed char v = value_[static_cast<std::size_t>(e)];
      if (v == kOn) {
        completion.push_back(e);
      } else if (v == kFree && need > 0) {
        completion.push_back(e);
        --need;
      }
    }
    return std::lexicographical_compare(completion.begin(), completion.end(), best_set_.begin(), best_set_.end());
  }

  void record_leaf() {
    std::vector<std::uint8_t> sel(static_cast<std::size_t>(p_.edge_count), 0);
    std::vector<int> set;
    for (int e = 0; e < p_.edge_count; ++e) {
      if (value_[static_cast<std::size_t>(e)] == kOn) {
        sel[static_cast<std::size_t>(e)] = 1;
        set.push_back(e);
      }
    }
    const double obj = selection_objective(p_, sel);
    if (!found_ || selection_better(obj, set, best_obj_, best_set_)) {
      best_obj_ = obj;
      best_set_ = std::move(set);
      found_ = true;
    }
  }

  // Grows the selection where it is incomplete: a free neighbour of a chosen
  // edge short of neighbours, else the cheapest free edge touching the
  // selection, else the cheapest free edge.
  int branch_edge() const {
    const auto cheaper = [&](int a, int b) {
      const double ca = p_.costs[static_cast<std::size_t>(a)];
      const double cb = p_.costs[static_cast<std::size_t>(b)];
      return ca < cb || (ca == cb && a < b);
    };
    for (int e = 0; e < p_.edge_count; ++e) {
      const auto ue = static_cast<std::size_t>(e);
      if (value_[ue] != kOn || sel_nbr_[ue] >= opt_.min_neighbors) continue;
      int best = -1;
      for (int w : p_.neighbor_sets[ue]) {
        if (value_[static_cast<std::size_t>(w)] == kFree && (best < 0 || cheaper(w, best))) best = w;
      }
      if (best >= 0) return best;
    }
    int fallback = -1;
    for (int e : by_cost_) {
      const auto ue = static_cast<std::size_t>(e);
      if (value_[ue] != kFree) continue;
      if (sel_nbr_[ue] > 0) return e;
      if (fallback < 0) fallback = e;
    }
    return fallback;
  }

  void dfs() {
    if (aborted_) return;
    const std::size_t mark = trail_.size();
    if (!propagate()) {
      undo(mark);
      return;
    }
    if (sel_count_ == n_ && free_count_ == 0) {
      record_leaf();
      undo(mark);
      return;
    }
    if (found_) {
      const double bound = lower_bound();
      if (bound > best_obj_ + kObjectiveTolerance ||
          (bound >= best_obj_ - kObjectiveTolerance && !smallest_completion_beats_incumbent())) {
        undo(mark);
        return;
      }
    }
    ++nodes_;
    if (opt_.node_limit && nodes_ > opt_.node_limit) {
      aborted_ = true;
      undo(mark);
      return;
    }
    const int branch = branch_edge();
    for (signed char v : {kOn, kOff}) {
      const std::size_t inner = trail_.size();
      assign(branch, v);
      dfs();
      undo(inner);
      if (aborted_) break;
    }
    undo(mark);
  }

  const SelectionProblem& p_;
  SelectionOptions opt_;
  int n_;
  std::vector<signed char> value_;
  std::vector<int> sel_nbr_;
  std::vector<int> free_nbr_;
  int sel_count_ = 0;
  int free_count_ = 0;
  double cost_ = 0.0;
  std::vector<int> trail_;
  std::vector<int> queue_;
  std::vector<char> queued_;
  std::vector<std::vector<int>> partners_;
  std::vector<int> by_cost_;
  bool found_ = false;
  bool aborted_ = false;
  double best_obj_ = std::numeric_limits<double>::infinity();
  std::vector<int> best_set_;
  std::uint64_t nodes_ = 0;
};

// Edges that can never be chosen: fewer than min_neighbors potentially
// chosen neighbours, applied to a fixpoint.
inline std::vector<char> eligible_edges(const SelectionProblem& p, int min_neighbors) {
  const auto m = static_cast<std::size_t>(p.edge_count);
  std::vector<char> eligible(m, 1);
  std::vector<int> potential(m);
  std::vector<int> stack;
  for (std::size_t e = 0; e < m; ++e) {
    potential[e] = static_cast<int>(p.neighbor_sets[e].size());
    if (potential[e] < min_neighbors) {
      eligible[e] = 0;
      stack.push_back(static_cast<int>(e));
    }
  }
  while (!stack.empty()) {
    const int e = stack.back();
    stack.pop_back();
    for (int w : p.neighbor_sets[static_cast<std::size_t>(e)]) {
      const auto uw = static_cast<std::size_t>(w);
      if (eligible[uw] && --potential[uw] < min_neighbors) {
        eligible[uw] = 0;
        stack.push_back(w);
      }
    }
  }
  return eligible;
}

}  // namespace detail

// Exact solution with the infeasibility relaxation: the edge target is
// lowered by one until a feasible selection exists or it drops below
// floor(floor_fraction * n_e_target). A node limit bounds the whole solve;
// when it is hit the best selection found so far is returned and
// proven_optimal is false.
inline EdgeSelection solve_selection(const SelectionProblem& problem, const SelectionOptions& options = {}) {
  problem.validate();
  EdgeSelection result;
  result.selected.assign(static_cast<std::size_t>(problem.edge_count), 0);
  const std::vector<char> eligible = detail::eligible_edges(problem, options.min_neighbors);
  const int eligible_count = static_cast<int>(std::count(eligible.begin(), eligible.end(), 1));
  const int floor_n = static_cast<int>(std::floor(options.floor_fraction * problem.n_e_target));
  int n = problem.n_e_target;
  if (n > 0 && n > eligible_count) n = std::max(eligible_count, floor_n - 1);
  for (; n >= floor_n && n >= 0; --n) {
    if (n == 0) {
      result.feasible = true;
      result.achieved_n_e = 0;
      result.objective = 0.0;
      return result;
    }
    SelectionOptions level = options;
    if (options.node_limit) {
      if (result.nodes >= options.node_limit) break;
      level.node_limit = options.node_limit - result.nodes;
    }
    detail::SelectionSearch search(problem, level, eligible, n);
    const bool found = search.run();
    result.nodes += search.nodes();
    if (found) {
      for (int e : search.best_set()) result.selected[static_cast<std::size_t>(e)] = 1;
      result.objective = search.best_objective();
      result.achieved_n_e = n;
      result.feasible = true;
      result.proven_optimal = !search.aborted();
      return result;
    }
    if (search.aborted()) result.proven_optimal = false;
  }
  result.feasible = false;
  result.achieved_n_e = 0;
  return result;
}

}  // namespace tapetrack
