#pragma once

#include "cvtslam/scene.hpp"
#include "cvtslam/types.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <tuple>
#include <utility>
#include <vector>

namespace cvtslam {

/// s(p,q) = -ln(|r_p - r_q| + 1) off the diagonal; the diagonal holds the
/// preference of each point to be an exemplar.
template <typename Scalar>
struct SimilarityMatrix {
  MatrixX<Scalar> s;

  Eigen::Index size() const { return s.rows(); }
};

template <typename Scalar>
Scalar similarity(const Vector3<Scalar>& p, const Vector3<Scalar>& q) {
  return -std::log((p - q).norm() + Scalar(1));
}

/// Median of the off-diagonal entries of a symmetric similarity matrix
/// (0 when there are none).
template <typename Scalar>
Scalar median_offdiagonal(const MatrixX<Scalar>& s) {
  std::vector<Scalar> values;
  for (Eigen::Index p = 0; p < s.rows(); ++p)
    for (Eigen::Index q = p + 1; q < s.cols(); ++q) values.push_back(s(p, q));
  if (values.empty()) return Scalar(0);
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 == 1 ? values[n / 2] : Scalar(0.5) * (values[n / 2 - 1] + values[n / 2]);
}

template <typename Scalar>
Scalar minimum_offdiagonal(const MatrixX<Scalar>& s) {
  Scalar out = Scalar(0);
  bool any = false;
  for (Eigen::Index p = 0; p < s.rows(); ++p)
    for (Eigen::Index q = p + 1; q < s.cols(); ++q) {
      out = any ? std::min(out, s(p, q)) : s(p, q);
      any = true;
    }
  return out;
}

/// How the shared preference is derived when no fixed value is given.
enum class PreferenceRule { median, minimum };

/// A fixed `preference` wins over `rule`.
template <typename Scalar>
SimilarityMatrix<Scalar> build_similarity(std::span<const Vector3<Scalar>> points, std::optional<Scalar> preference = std::nullopt,
                                          PreferenceRule rule = PreferenceRule::median) {
  const auto n = static_cast<Eigen::Index>(points.size());
  SimilarityMatrix<Scalar> sim{MatrixX<Scalar>::Zero(n, n)};
  for (Eigen::Index p = 0; p < n; ++p)
    for (Eigen::Index q = p + 1; q < n; ++q) {
      const Scalar v = similarity<Scalar>(points[p], points[q]);
      sim.s(p, q) = v;
      sim.s(q, p) = v;
    }
  const Scalar pref = preference                        ? *preference
                      : rule == PreferenceRule::minimum ? minimum_offdiagonal<Scalar>(sim.s)
                                                        : median_offdiagonal<Scalar>(sim.s);
  sim.s.diagonal().setConstant(pref);
  return sim;
}

enum class DampingMode {
  conventional,  // x <- (1 - lambda) x_new + lambda x_old
  literal,       // x <- (1 - lambda) x_new + x_old
};

struct ApOptions {
  double lambda = 0.5;
  int n_iter = 200;
  DampingMode damping = DampingMode::conventional;
  std::optional<double> preference;  // empty: derived by `rule`
  PreferenceRule rule = PreferenceRule::minimum;
};

template <typename Scalar>
struct ApState {
  MatrixX<Scalar> r;  // responsibilities
  MatrixX<Scalar> a;  // availabilities
  Scalar lambda = Scalar(0.5);
  int n_iter = 200;

  static ApState zeros(Eigen::Index n, Scalar lambda, int n_iter) {
    return {MatrixX<Scalar>::Zero(n, n), MatrixX<Scalar>::Zero(n, n), lambda, n_iter};
  }
};

template <typename Scalar>
Scalar damp(Scalar fresh, Scalar old, Scalar lambda, DampingMode mode) {
  return mode == DampingMode::conventional ? (Scalar(1) - lambda) * fresh + lambda * old
                                           : (Scalar(1) - lambda) * fresh + old;
}

/// One message-passing sweep: responsibility update and damping, availability
/// update and damping, then the (undamped) self-availability.
template <typename Scalar>
void ap_iteration(const SimilarityMatrix<Scalar>& sim, ApState<Scalar>& st, DampingMode mode) {
  const auto& s = sim.s;
  const Eigen::Index n = s.rows();
  const Scalar neg_inf = -std::numeric_limits<Scalar>::infinity();

  // responsibilities
  for (Eigen::Index p = 0; p < n; ++p) {
    Scalar best = neg_inf, second = neg_inf;
    Eigen::Index best_q = -1;
    for (Eigen::Index q = 0; q < n; ++q) {
      const Scalar v = st.a(p, q) + s(p, q);
      if (v > best) {
        second = best;
        best = v;
        best_q = q;
      } else if (v > second) {
        second = v;
      }
    }
    for (Eigen::Index q = 0; q < n; ++q) {
      const Scalar competitor = q == best_q ? second : best;
      const Scalar fresh = n == 1 ? s(p, q) : s(p, q) - competitor;
      st.r(p, q) = damp(fresh, st.r(p, q), st.lambda, mode);
    }
  }

  // availabilities
  VectorX<Scalar> positive_sum(n);
  for (Eigen::Index q = 0; q < n; ++q) {
    Scalar acc = Scalar(0);
    for (Eigen::Index p = 0; p < n; ++p)
      if (p != q) acc += std::max(Scalar(0), st.r(p, q));
    positive_sum[q] = acc;
  }
  for (Eigen::Index p = 0; p < n; ++p)
    for (Eigen::Index q = 0; q < n; ++q) {
      if (p == q) continue;
      const Scalar fresh = std::min(Scalar(0), st.r(q, q) + positive_sum[q] - std::max(Scalar(0), st.r(p, q)));
      st.a(p, q) = damp(fresh, st.a(p, q), st.lambda, mode);
    }
  for (Eigen::Index q = 0; q < n; ++q) st.a(q, q) = positive_sum[q];
}

/// E_p = argmax_q {a(p,q) + r(p,q)}, lowest index on ties.
template <typename Scalar>
std::vector<int> choose_exemplars(const ApState<Scalar>& st) {
  const Eigen::Index n = st.r.rows();
  std::vector<int> e(static_cast<std::size_t>(n));
  for (Eigen::Index p = 0; p < n; ++p) {
    Eigen::Index best = 0;
    (st.a.row(p) + st.r.row(p)).maxCoeff(&best);
    e[static_cast<std::size_t>(p)] = static_cast<int>(best);
  }
  return e;
}

struct ApResult {
  std::vector<int> exemplar;      // per point, after making every exemplar its own head
  std::vector<int> raw_exemplar;  // argmax rule as computed
  bool converged = false;         // raw assignment unchanged over the trailing iterations
};

/// Copy of `sim` with a tiny fixed-seed jitter on every entry, so that
/// exactly tied similarities cannot make the messages oscillate. Preferences
/// are only ever lowered: a point that is exactly as similar to another as
/// its preference joins rather than becoming an exemplar.
template <typename Scalar>
SimilarityMatrix<Scalar> break_ties(const SimilarityMatrix<Scalar>& sim, Scalar scale = Scalar(1e-12)) {
  std::mt19937_64 gen(0x5eed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  SimilarityMatrix<Scalar> out = sim;
  for (Eigen::Index q = 0; q < out.s.cols(); ++q)
    for (Eigen::Index p = 0; p < out.s.rows(); ++p) {
      const Scalar jitter = scale * (std::abs(out.s(p, q)) + Scalar(1)) * Scalar(unit(gen));
      out.s(p, q) += p == q ? -jitter - scale : jitter;
    }
  return out;
}

/// Fixed-count affinity propagation from zero messages, run on break_ties(sim).
template <typename Scalar>
ApResult affinity_propagation(const SimilarityMatrix<Scalar>& sim, Scalar lambda, int n_iter,
                              DampingMode mode = DampingMode::conventional) {
  if (!(lambda > Scalar(0) && lambda < Scalar(1))) throw std::invalid_argument("affinity_propagation: lambda must be in (0,1)");
  if (n_iter < 1) throw std::invalid_argument("affinity_propagation: n_iter must be >= 1");
  ApResult out;
  const Eigen::Index n = sim.size();
  if (n == 0) {
    out.converged = true;
    return out;
  }

  constexpr int kStableWindow = 20;
  const auto jittered = break_ties(sim);
  auto st = ApState<Scalar>::zeros(n, lambda, n_iter);
  std::vector<int> previous;
  int stable = 0;
  for (int it = 0; it < n_iter; ++it) {
    ap_iteration(jittered, st, mode);
    auto current = choose_exemplars(st);
    stable = current == previous ? stable + 1 : 0;
    previous = std::move(current);
  }
  out.raw_exemplar = previous;
  out.converged = stable + 1 >= std::min(kStableWindow, n_iter);

  out.exemplar = out.raw_exemplar;
  for (int k : out.raw_exemplar) out.exemplar[static_cast<std::size_t>(k)] = k;
  return out;
}

struct ClusterMember {
  int vehicle_id = 0;
  int path_index = 0;
  PathId path_id = kLosPath;

  auto key() const { return std::pair{vehicle_id, path_id}; }
  friend bool operator==(const ClusterMember&, const ClusterMember&) = default;
};

/// Per-vehicle VT estimate fed to clustering.
template <typename Scalar>
struct VtEstimate {
  ClusterMember member;
  Vector3<Scalar> position = Vector3<Scalar>::Zero();
  Scalar additional_distance = Scalar(0);
};

/// A common virtual transmitter: member-mean position and additional
/// distance, and its membership index (at most one path per vehicle).
template <typename Scalar>
struct CvtCluster {
  Vector3<Scalar> position = Vector3<Scalar>::Zero();
  Scalar additional_distance = Scalar(0);
  std::vector<ClusterMember> members;
  int cluster_id = -1;

  std::size_t member_count() const { return members.size(); }

  /// CVTI entry for `vehicle_id`: its path index, or 0 if it has no member here.
  int index_for(int vehicle_id) const {
    for (const auto& m : members)
      if (m.vehicle_id == vehicle_id) return m.path_index;
    return 0;
  }

  bool contains(const ClusterMember& m) const {
    return std::any_of(members.begin(), members.end(), [&](const ClusterMember& x) { return x.key() == m.key(); });
  }
};

template <typename Scalar>
CvtCluster<Scalar> cluster_from(std::span<const VtEstimate<Scalar>> estimates, const std::vector<std::size_t>& indices) {
  CvtCluster<Scalar> c;
  for (std::size_t i : indices) {
    c.position += estimates[i].position;
    c.additional_distance += estimates[i].additional_distance;
    c.members.push_back(estimates[i].member);
  }
  const Scalar n = Scalar(indices.size());
  c.position /= n;
  c.additional_distance /= n;
  return c;
}

/// Group points by exemplar into clusters (member means). A second VT of the
/// same vehicle inside one group is split off into its own singleton; the VT
/// nearest the exemplar stays.
template <typename Scalar>
std::vector<CvtCluster<Scalar>> form_clusters(const std::vector<int>& exemplar, std::span<const VtEstimate<Scalar>> estimates) {
  if (exemplar.size() != estimates.size()) throw std::invalid_argument("form_clusters: assignment/estimate size mismatch");
  std::map<int, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < exemplar.size(); ++i) groups[exemplar[i]].push_back(i);

  std::vector<CvtCluster<Scalar>> out;
  std::vector<std::size_t> demoted;
  for (auto& [head, idx] : groups) {
    const Vector3<Scalar>& center = estimates[static_cast<std::size_t>(head)].position;
    std::map<int, std::size_t> keep;  // vehicle id -> point index
    for (std::size_t i : idx) {
      const int v = estimates[i].member.vehicle_id;
      auto it = keep.find(v);
      if (it == keep.end()) {
        keep.emplace(v, i);
        continue;
      }
      const Scalar d_new = (estimates[i].position - center).norm();
      const Scalar d_old = (estimates[it->second].position - center).norm();
      if (d_new < d_old) {
        demoted.push_back(it->second);
        it->second = i;
      } else {
        demoted.push_back(i);
      }
    }
    std::vector<std::size_t> kept;
    for (std::size_t i : idx)
      if (std::find(demoted.begin(), demoted.end(), i) == demoted.end()) kept.push_back(i);
    out.push_back(cluster_from<Scalar>(estimates, kept));
  }
  std::sort(demoted.begin(), demoted.end());
  for (std::size_t i : demoted) out.push_back(cluster_from<Scalar>(estimates, {i}));
  return out;
}

struct CarryOver {
  std::vector<int> retired;  // previous ids without a successor
  std::vector<int> fresh;    // ids newly allocated in this call
};

/// Give each current cluster the id of the previous cluster it shares the
/// most (vehicle, path) members with; ties go to the smaller centroid
/// distance, then the lower previous id. Each previous id is inherited at
/// most once; unmatched clusters draw ids from `next_id`.
template <typename Scalar>
CarryOver carry_over_identity(const std::vector<CvtCluster<Scalar>>& prev, std::vector<CvtCluster<Scalar>>& curr, int& next_id) {
  struct Candidate {
    std::size_t overlap;
    Scalar distance;
    int prev_id;
    std::size_t curr_index;
  };
  std::vector<Candidate> candidates;
  for (std::size_t c = 0; c < curr.size(); ++c)
    for (const auto& p : prev) {
      std::size_t overlap = 0;
      for (const auto& m : curr[c].members) overlap += p.contains(m) ? 1 : 0;
      if (overlap > 0) candidates.push_back({overlap, (p.position - curr[c].position).norm(), p.cluster_id, c});
    }
  std::sort(candidates.begin(), candidates.end(), [](const Candidate& x, const Candidate& y) {
    return std::tie(y.overlap, x.distance, x.prev_id, x.curr_index) < std::tie(x.overlap, y.distance, y.prev_id, y.curr_index);
  });

  std::vector<bool> assigned(curr.size(), false);
  std::vector<int> taken;
  for (const auto& cand : candidates) {
    if (assigned[cand.curr_index] || std::find(taken.begin(), taken.end(), cand.prev_id) != taken.end()) continue;
    curr[cand.curr_index].cluster_id = cand.prev_id;
    assigned[cand.curr_index] = true;
    taken.push_back(cand.prev_id);
  }

  CarryOver out;
  for (std::size_t c = 0; c < curr.size(); ++c)
    if (!assigned[c]) {
      curr[c].cluster_id = next_id++;
      out.fresh.push_back(curr[c].cluster_id);
    }
  for (const auto& p : prev)
    if (std::find(taken.begin(), taken.end(), p.cluster_id) == taken.end()) out.retired.push_back(p.cluster_id);
  std::sort(out.retired.begin(), out.retired.end());
  return out;
}

}  // namespace cvtslam
