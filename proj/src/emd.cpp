// Primal network simplex for the balanced transportation problem.
// Spanning tree kept as parent pointers; thread order, depths and potentials
// are rebuilt after each pivot, which is O(nodes) and cheap next to pricing.
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include "cdst.hpp"
#include "tensor.hpp"

namespace diffsketch::cdst {

namespace {

constexpr int kDirUp = 1;     // tree arc points from node to parent
constexpr int kDirDown = -1;  // tree arc points from parent to node
constexpr signed char kTree = 0, kLower = 1;

class TransportSimplex {
 public:
  TransportSimplex(const std::vector<long long>& supply, const std::vector<long long>& demand,
                   const Eigen::MatrixXd& cost)
      : n_(static_cast<int>(supply.size())), m_(static_cast<int>(demand.size())), cost_matrix_(cost) {
    nodes_ = n_ + m_;
    root_ = nodes_;
    real_arcs_ = static_cast<long long>(n_) * m_;
    const long long all_arcs = real_arcs_ + nodes_;
    flow_.assign(static_cast<std::size_t>(all_arcs), 0);
    state_.assign(static_cast<std::size_t>(real_arcs_), kLower);
    art_cost_.assign(static_cast<std::size_t>(nodes_), 0.0);

    double max_cost = 0.0;
    for (Eigen::Index i = 0; i < cost.size(); ++i) max_cost = std::max(max_cost, std::abs(cost.data()[i]));
    const double art = (max_cost + 1.0) * (nodes_ + 1);
    eps_ = 1e-12 * (max_cost + 1.0);

    parent_.assign(nodes_ + 1, -1);
    pred_.assign(nodes_ + 1, -1);
    dir_.assign(nodes_ + 1, 0);
    pi_.assign(nodes_ + 1, 0.0);
    depth_.assign(nodes_ + 1, 0);
    for (int u = 0; u < nodes_; ++u) {
      const long long e = real_arcs_ + u;
      parent_[u] = root_;
      pred_[u] = e;
      if (u < n_) {
        dir_[u] = kDirUp;
        flow_[e] = supply[u];
      } else {
        dir_[u] = kDirDown;
        flow_[e] = demand[u - n_];
        art_cost_[u] = art;
      }
    }
    block_ = std::max<long long>(10, static_cast<long long>(std::sqrt(static_cast<double>(real_arcs_))));
    rebuild();
  }

  double solve() {
    while (find_entering()) pivot();
    for (int u = 0; u < nodes_; ++u)
      if (flow_[real_arcs_ + u] != 0) throw NumericError("emd: artificial flow remains, problem infeasible");
    double total = 0.0;
    for (long long e = 0; e < real_arcs_; ++e)
      if (flow_[e] != 0) total += static_cast<double>(flow_[e]) * arc_cost(e);
    return total;
  }

 private:
  int source(long long e) const {
    if (e < real_arcs_) return static_cast<int>(e / m_);
    const int u = static_cast<int>(e - real_arcs_);
    return u < n_ ? u : root_;
  }
  int target(long long e) const {
    if (e < real_arcs_) return n_ + static_cast<int>(e % m_);
    const int u = static_cast<int>(e - real_arcs_);
    return u < n_ ? root_ : u;
  }
  double arc_cost(long long e) const {
    if (e < real_arcs_) return cost_matrix_(static_cast<Eigen::Index>(e / m_), static_cast<Eigen::Index>(e % m_));
    return art_cost_[static_cast<std::size_t>(e - real_arcs_)];
  }
  double reduced(long long e) const { return arc_cost(e) + pi_[source(e)] - pi_[target(e)]; }

  // Block search pricing: scan blocks from the last position, stop at the first
  // block that contains an improving arc.
  bool find_entering() {
    double best = -eps_;
    long long cnt = block_;
    long long e = next_;
    for (long long k = 0; k < real_arcs_; ++k) {
      if (state_[e] == kLower) {
        const double c = reduced(e);
        if (c < best) {
          best = c;
          in_ = e;
        }
      }
      if (++e == real_arcs_) e = 0;
      if (--cnt == 0) {
        if (best < -eps_) {
          next_ = e;
          return true;
        }
        cnt = block_;
      }
    }
    next_ = e;
    return best < -eps_;
  }

  void pivot() {
    const int s = source(in_), t = target(in_);
    int u = s, v = t;
    while (u != v) {
      if (depth_[u] > depth_[v]) u = parent_[u];
      else v = parent_[v];
    }
    const int join = u;

    // Flow runs s -> t on the entering arc and back t -> join -> s through the tree.
    constexpr long long kInf = std::numeric_limits<long long>::max();
    long long delta = kInf;
    int u_out = -1;
    bool on_source_side = true;
    for (int w = s; w != join; w = parent_[w])
      if (dir_[w] == kDirUp && flow_[pred_[w]] < delta) {
        delta = flow_[pred_[w]];
        u_out = w;
        on_source_side = true;
      }
    for (int w = t; w != join; w = parent_[w])
      if (dir_[w] == kDirDown && flow_[pred_[w]] <= delta) {
        delta = flow_[pred_[w]];
        u_out = w;
        on_source_side = false;
      }
    if (u_out < 0) throw NumericError("emd: unbounded pivot");

    if (delta > 0) {
      flow_[in_] += delta;
      for (int w = s; w != join; w = parent_[w]) flow_[pred_[w]] -= dir_[w] * delta;
      for (int w = t; w != join; w = parent_[w]) flow_[pred_[w]] += dir_[w] * delta;
    }
    const long long out_arc = pred_[u_out];
    state_[in_] = kTree;
    if (out_arc < real_arcs_) state_[out_arc] = kLower;

    // Re-hang the stem u_in .. u_out under v_in.
    const int u_in = on_source_side ? s : t;
    const int v_in = on_source_side ? t : s;
    int stem = u_in, new_parent = v_in;
    long long new_pred = in_;
    int new_dir = u_in == s ? kDirUp : kDirDown;
    while (true) {
      const int old_parent = parent_[stem];
      const long long old_pred = pred_[stem];
      const int old_dir = dir_[stem];
      parent_[stem] = new_parent;
      pred_[stem] = new_pred;
      dir_[stem] = new_dir;
      if (stem == u_out) break;
      new_parent = stem;
      new_pred = old_pred;
      new_dir = -old_dir;
      stem = old_parent;
    }
    rebuild();
  }

  void rebuild() {
    const int total = nodes_ + 1;
    child_start_.assign(total + 1, 0);
    for (int u = 0; u < total; ++u)
      if (parent_[u] >= 0) ++child_start_[parent_[u] + 1];
    for (int u = 0; u < total; ++u) child_start_[u + 1] += child_start_[u];
    children_.assign(static_cast<std::size_t>(nodes_), 0);
    fill_.assign(child_start_.begin(), child_start_.end() - 1);
    for (int u = 0; u < total; ++u)
      if (parent_[u] >= 0) children_[fill_[parent_[u]]++] = u;

    stack_.clear();
    stack_.push_back(root_);
    pi_[root_] = 0.0;
    depth_[root_] = 0;
    while (!stack_.empty()) {
      const int p = stack_.back();
      stack_.pop_back();
      for (int k = child_start_[p]; k < child_start_[p + 1]; ++k) {
        const int u = children_[k];
        const double c = arc_cost(pred_[u]);
        pi_[u] = dir_[u] == kDirUp ? pi_[p] - c : pi_[p] + c;
        depth_[u] = depth_[p] + 1;
        stack_.push_back(u);
      }
    }
  }

  int n_, m_, nodes_, root_;
  long long real_arcs_;
  const Eigen::MatrixXd& cost_matrix_;
  std::vector<long long> flow_;
  std::vector<signed char> state_;
  std::vector<double> art_cost_;
  std::vector<int> parent_;
  std::vector<long long> pred_;
  std::vector<int> dir_;
  std::vector<double> pi_;
  std::vector<int> depth_;
  std::vector<int> child_start_, children_, fill_, stack_;
  double eps_ = 0.0;
  long long block_ = 10;
  long long next_ = 0;
  long long in_ = -1;
};

}  // namespace

double transport_cost(const std::vector<long long>& supply, const std::vector<long long>& demand,
                      const Eigen::MatrixXd& cost) {
  if (supply.empty() || demand.empty()) throw InputError("transport: empty side");
  if (cost.rows() != static_cast<Eigen::Index>(supply.size()) || cost.cols() != static_cast<Eigen::Index>(demand.size()))
    throw InputError("transport: cost matrix shape mismatch");
  if (!cost.allFinite()) throw NumericError("transport: non-finite cost");
  long long s = 0, d = 0;
  for (auto v : supply) {
    if (v < 0) throw InputError("transport: negative supply");
    s += v;
  }
  for (auto v : demand) {
    if (v < 0) throw InputError("transport: negative demand");
    d += v;
  }
  if (s != d) throw InputError("transport: supply and demand totals differ");
  if (s == 0) return 0.0;
  TransportSimplex solver(supply, demand, cost);
  return solver.solve();
}

double emd(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  if (a.rows() == 0 || b.rows() == 0) throw InputError("emd: empty point set");
  if (a.cols() != b.cols()) throw InputError("emd: dimension mismatch");
  const long long n = a.rows(), m = b.rows();
  Eigen::MatrixXd cost(n, m);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < m; ++j) cost(i, j) = (a.row(i) - b.row(j)).norm();
  const long long g = std::gcd(n, m);
  // Uniform weights 1/n and 1/m scaled to integers m/g and n/g.
  const std::vector<long long> supply(static_cast<std::size_t>(n), m / g);
  const std::vector<long long> demand(static_cast<std::size_t>(m), n / g);
  return transport_cost(supply, demand, cost) / static_cast<double>(n * (m / g));
}

}  // namespace diffsketch::cdst
