/*
 * This file is part of stmra, a header-only library for multi-resolution
 * approximations of spatiotemporal Gaussian processes.
 *
 * Licensed under the Apache License, Version 2.0. See LICENSE in the
 * project root for license information.
 */

#ifndef STMRA_MRA_HPP
#define STMRA_MRA_HPP

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "stmra/covariance.hpp"
#include "stmra/linalg.hpp"
#include "stmra/parallel.hpp"
#include "stmra/partition.hpp"
#include "stmra/types.hpp"

namespace stmra {

namespace detail {

/// Records the largest dense block allocated along the tree algorithms so
/// tests can enforce that no n-by-n matrix is ever formed. Only
/// two-dimensional scratch counts; plain length-n vectors do not.
struct BlockBudget {
  static std::atomic<std::size_t>& peak() {
    static std::atomic<std::size_t> p{0};
    return p;
  }
  static void reset() { peak().store(0, std::memory_order_relaxed); }
  static std::size_t peak_elements() {
    return peak().load(std::memory_order_relaxed);
  }
  static void note(std::size_t rows, std::size_t cols) {
    const std::size_t e = rows * cols;
    auto& p = peak();
    std::size_t cur = p.load(std::memory_order_relaxed);
    while (cur < e &&
           !p.compare_exchange_weak(cur, e, std::memory_order_relaxed)) {
    }
  }
};

}  // namespace detail

// ---------------------------------------------------------------------------
// Region factors
// ---------------------------------------------------------------------------

/// Prior quantities of the remainder recursion, built once per model. U[i]
/// is the normalized basis block of the region's knots against ancestor i
/// (the raw cross-covariance under the level-i remainder, right-solved with
/// the ancestor's Cholesky factor), so remainders subtract as plain U U^T
/// products. Non-leaf regions keep the Cholesky factor of their remainder
/// Gram; leaves keep the full remainder covariance of their knots
/// (observations first, then prediction locations) plus the pieces of its
/// observation block used by the data passes. Data-dependent upward messages
/// live in the evaluation state, not here.
struct RegionFactors {
  std::vector<Eigen::MatrixXd> U;
  Eigen::MatrixXd L;      // non-leaf: lower Cholesky of the remainder Gram
  Eigen::MatrixXd V;      // leaf: remainder covariance over all leaf knots
  Eigen::MatrixXd L_obs;  // leaf: lower Cholesky of V[obs, obs]
  Eigen::MatrixXd Rw;     // leaf: L_obs^{-1} V[obs, pred]
  Eigen::VectorXd spp;    // leaf: diagonal of V[pred, pred]
};

// ---------------------------------------------------------------------------
// Model
// ---------------------------------------------------------------------------

/// A partition tree paired with a covariance model. Construction runs the
/// top-down factor build, so evaluating the same tree at new covariance
/// parameters means constructing a new model from a copy of the tree. The
/// model is read-only afterwards and safe to share across threads.
class MraModel {
 public:
  MraModel(PartitionTree tree, CovarianceModel cov, unsigned max_threads = 0)
      : tree_(std::move(tree)), cov_(std::move(cov)) {
    const auto [b, e] = tree_.level_range(tree_.levels());
    for (std::size_t i = b; i < e; ++i) {
      n_obs_ += tree_.region(i).obs_rows.size();
      n_pred_ += tree_.region(i).pred_rows.size();
    }
    if (n_obs_ == 0)
      throw data_error("the partition carries no observations");
    build_factors(max_threads);
  }

  const PartitionTree& tree() const { return tree_; }
  const CovarianceModel& covariance() const { return cov_; }
  const RegionFactors& factors(std::size_t region) const {
    return factors_[region];
  }
  std::size_t observation_count() const { return n_obs_; }
  std::size_t prediction_count() const { return n_pred_; }

  /// Region indices of the strict ancestors of a region, root first.
  std::vector<std::size_t> ancestors(std::size_t region) const {
    std::vector<std::size_t> chain;
    for (std::size_t p = tree_.region(region).parent; p != Region::npos;
         p = tree_.region(p).parent)
      chain.push_back(p);
    std::reverse(chain.begin(), chain.end());
    return chain;
  }

 private:
  void build_factors(unsigned max_threads) {
    factors_.assign(tree_.size(), RegionFactors{});
    const int M = tree_.levels();
    for (int m = 0; m <= M; ++m) {
      const auto [b, e] = tree_.level_range(m);
      parallel_for(
          e - b,
          [&](std::size_t t) {
            const std::size_t j = b + t;
            const Region& reg = tree_.region(j);
            RegionFactors& rf = factors_[j];
            const auto anc = ancestors(j);
            const auto& Q = reg.knots;

            rf.U.resize(anc.size());
            for (std::size_t i = 0; i < anc.size(); ++i) {
              const RegionFactors& af = factors_[anc[i]];
              const auto& Qa = tree_.region(anc[i]).knots;
              detail::BlockBudget::note(Q.size(), Qa.size());
              Eigen::MatrixXd cross = cov_matrix(cov_, Q, Qa);
              for (std::size_t k = 0; k < i; ++k)
                cross.noalias() -= rf.U[k] * af.U[k].transpose();
              af.L.transpose()
                  .triangularView<Eigen::Upper>()
                  .solveInPlace<Eigen::OnTheRight>(cross);
              rf.U[i] = std::move(cross);
            }

            detail::BlockBudget::note(Q.size(), Q.size());
            Eigen::MatrixXd gram = cov_matrix(cov_, Q, Q);
            for (std::size_t k = 0; k < anc.size(); ++k)
              gram.noalias() -= rf.U[k] * rf.U[k].transpose();

            if (!reg.is_leaf()) {
              rf.L = detail::jittered_llt(gram, reg.path_string()).matrixL();
              return;
            }
            const auto nobs =
                static_cast<Eigen::Index>(reg.obs_rows.size());
            const auto npred =
                static_cast<Eigen::Index>(reg.pred_rows.size());
            rf.V = std::move(gram);
            if (nobs > 0) {
              detail::BlockBudget::note(nobs, nobs);
              rf.L_obs = detail::jittered_llt(rf.V.topLeftCorner(nobs, nobs),
                                              reg.path_string())
                             .matrixL();
              detail::BlockBudget::note(nobs, npred);
              rf.Rw = rf.L_obs.triangularView<Eigen::Lower>().solve(
                  rf.V.topRightCorner(nobs, npred));
            } else {
              rf.L_obs.resize(0, 0);
              rf.Rw = Eigen::MatrixXd::Zero(0, npred);
            }
            rf.spp = rf.V.bottomRightCorner(npred, npred).diagonal();
          },
          max_threads);
    }
  }

  PartitionTree tree_;
  CovarianceModel cov_;
  std::vector<RegionFactors> factors_;
  std::size_t n_obs_ = 0;
  std::size_t n_pred_ = 0;
};

// ---------------------------------------------------------------------------
// Evaluation passes
// ---------------------------------------------------------------------------

namespace detail {

/// Per-region state of one likelihood or prediction evaluation. Blocks are
/// indexed by position in the region's ancestor chain; a region at level m
/// additionally uses index m for itself.
struct EvalNode {
  // Upward messages toward the parent (indices over the parent chain).
  std::vector<std::vector<Eigen::MatrixXd>> A;
  std::vector<Eigen::VectorXd> om;
  // Non-leaf retained state for the downward pass.
  Eigen::LLT<Eigen::MatrixXd> lam;
  std::vector<Eigen::MatrixXd> Atil_m;
  Eigen::VectorXd omt_m;
  // Leaf retained state.
  Eigen::VectorXd e;
  std::vector<Eigen::MatrixXd> F;
  // Log-likelihood contribution of this region.
  double contrib = 0.0;
  // Downward results: posterior mean of the region's weights and covariance
  // blocks against each ancestor (S[m] is the region's own marginal).
  Eigen::VectorXd mu;
  std::vector<Eigen::MatrixXd> S;
};

inline std::size_t tree_knot_count(const MraModel& model, std::size_t j) {
  return model.tree().region(j).knots.size();
}

/// Leaf step: whiten the data and basis blocks with the observation-block
/// Cholesky factor and form the cross-product messages.
inline void upward_leaf(const MraModel& model, std::size_t j,
                        const std::vector<double>& y, EvalNode& node) {
  const Region& reg = model.tree().region(j);
  const RegionFactors& rf = model.factors(j);
  const std::size_t m = static_cast<std::size_t>(reg.level);
  const auto anc = model.ancestors(j);
  const auto nobs = static_cast<Eigen::Index>(reg.obs_rows.size());

  Eigen::VectorXd yl(nobs);
  for (Eigen::Index t = 0; t < nobs; ++t)
    yl[t] = y[reg.obs_rows[static_cast<std::size_t>(t)]];
  node.e = rf.L_obs.triangularView<Eigen::Lower>().solve(yl);
  node.contrib = 2.0 * rf.L_obs.diagonal().array().log().sum() +
                 node.e.squaredNorm();

  node.F.resize(m);
  node.om.resize(m);
  node.A.assign(m, std::vector<Eigen::MatrixXd>(m));
  for (std::size_t i = 0; i < m; ++i) {
    BlockBudget::note(reg.obs_rows.size(), tree_knot_count(model, anc[i]));
    node.F[i] = rf.L_obs.triangularView<Eigen::Lower>().solve(
        rf.U[i].topRows(nobs));
    node.om[i] = node.F[i].transpose() * node.e;
  }
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t k = i; k < m; ++k) {
      BlockBudget::note(static_cast<std::size_t>(node.F[i].cols()),
                        static_cast<std::size_t>(node.F[k].cols()));
      node.A[i][k] = node.F[i].transpose() * node.F[k];
      if (k != i) node.A[k][i] = node.A[i][k].transpose();
    }
}

/// Non-leaf step: sum the children's messages, absorb this region's own
/// weights, and pass Schur-complemented messages upward.
inline void upward_node(const MraModel& model, std::size_t j,
                        std::vector<EvalNode>& nodes) {
  const Region& reg = model.tree().region(j);
  const std::size_t m = static_cast<std::size_t>(reg.level);
  const auto r = static_cast<Eigen::Index>(reg.knots.size());
  const auto anc = model.ancestors(j);

  std::vector<std::vector<Eigen::MatrixXd>> At(
      m + 1, std::vector<Eigen::MatrixXd>(m + 1));
  std::vector<Eigen::VectorXd> omt(m + 1);
  auto rows_of = [&](std::size_t i) {
    return static_cast<Eigen::Index>(
        i == m ? reg.knots.size() : tree_knot_count(model, anc[i]));
  };
  for (std::size_t i = 0; i <= m; ++i) {
    omt[i] = Eigen::VectorXd::Zero(rows_of(i));
    for (std::size_t k = 0; k <= m; ++k) {
      BlockBudget::note(static_cast<std::size_t>(rows_of(i)),
                        static_cast<std::size_t>(rows_of(k)));
      At[i][k] = Eigen::MatrixXd::Zero(rows_of(i), rows_of(k));
    }
  }
  for (std::size_t c : reg.children) {
    const EvalNode& ch = nodes[c];
    for (std::size_t i = 0; i <= m; ++i) {
      omt[i] += ch.om[i];
      for (std::size_t k = 0; k <= m; ++k) At[i][k] += ch.A[i][k];
    }
  }

  EvalNode& node = nodes[j];
  BlockBudget::note(reg.knots.size(), reg.knots.size());
  Eigen::MatrixXd lambda = Eigen::MatrixXd::Identity(r, r) + At[m][m];
  node.lam.compute(lambda);
  if (node.lam.info() != Eigen::Success)
    throw numeric_error(
        "posterior factorization failed; consider raising the nugget bound",
        reg.path_string());
  const Eigen::VectorXd g =
      node.lam.matrixL().solve(omt[m]);
  node.contrib =
      2.0 * node.lam.matrixLLT().diagonal().array().log().sum() -
      g.squaredNorm();

  std::vector<Eigen::MatrixXd> H(m);
  for (std::size_t i = 0; i < m; ++i) {
    BlockBudget::note(reg.knots.size(), static_cast<std::size_t>(rows_of(i)));
    H[i] = node.lam.matrixL().solve(At[i][m].transpose());
  }
  node.om.resize(m);
  node.A.assign(m, std::vector<Eigen::MatrixXd>(m));
  for (std::size_t i = 0; i < m; ++i) {
    node.om[i] = omt[i] - H[i].transpose() * g;
    for (std::size_t k = 0; k < m; ++k) {
      BlockBudget::note(static_cast<std::size_t>(rows_of(i)),
                        static_cast<std::size_t>(rows_of(k)));
      node.A[i][k] = At[i][k] - H[i].transpose() * H[k];
    }
  }
  node.Atil_m.resize(m);
  for (std::size_t i = 0; i < m; ++i) node.Atil_m[i] = std::move(At[i][m]);
  node.omt_m = std::move(omt[m]);
}

/// Runs the full upward pass and returns the log-likelihood; the per-region
/// state is kept for a subsequent downward pass.
inline double upward_pass(const MraModel& model, const std::vector<double>& y,
                          std::vector<EvalNode>& nodes,
                          unsigned max_threads) {
  if (y.size() != model.observation_count())
    throw data_error("value count does not match the partitioned observations");
  for (double v : y)
    if (!std::isfinite(v))
      throw data_error("observation values must be finite");

  const PartitionTree& tree = model.tree();
  nodes.assign(tree.size(), EvalNode{});
  for (int m = tree.levels(); m >= 0; --m) {
    const auto [b, e] = tree.level_range(m);
    parallel_for(
        e - b,
        [&](std::size_t t) {
          const std::size_t j = b + t;
          if (tree.region(j).is_leaf())
            upward_leaf(model, j, y, nodes[j]);
          else
            upward_node(model, j, nodes);
        },
        max_threads);
  }

  double sum = 0.0;
  for (const EvalNode& node : nodes) sum += node.contrib;
  const double n = static_cast<double>(model.observation_count());
  return -0.5 * (n * std::log(2.0 * std::numbers::pi) + sum);
}

/// Posterior covariance block between ancestor-chain positions i and k, read
/// from the rows stored at the deeper of the two regions.
inline Eigen::MatrixXd posterior_block(const std::vector<EvalNode>& nodes,
                                       const std::vector<std::size_t>& anc,
                                       std::size_t i, std::size_t k) {
  if (i >= k) return nodes[anc[i]].S[k];
  return nodes[anc[k]].S[i].transpose();
}

/// Downward pass over the non-leaf regions: posterior means of the knot
/// weights and covariance blocks along every ancestor chain.
inline void downward_pass(const MraModel& model, std::vector<EvalNode>& nodes,
                          unsigned max_threads) {
  const PartitionTree& tree = model.tree();
  for (int m = 0; m < tree.levels(); ++m) {
    const auto [b, e] = tree.level_range(m);
    parallel_for(
        e - b,
        [&](std::size_t t) {
          const std::size_t j = b + t;
          EvalNode& node = nodes[j];
          const auto anc = model.ancestors(j);
          const std::size_t lev = static_cast<std::size_t>(m);
          const auto r =
              static_cast<Eigen::Index>(tree.region(j).knots.size());

          std::vector<Eigen::MatrixXd> W(lev);
          for (std::size_t i = 0; i < lev; ++i) {
            BlockBudget::note(tree.region(j).knots.size(),
                              tree_knot_count(model, anc[i]));
            W[i] = node.lam.solve(node.Atil_m[i].transpose());
          }
          node.mu = node.lam.solve(node.omt_m);
          for (std::size_t i = 0; i < lev; ++i)
            node.mu -= W[i] * nodes[anc[i]].mu;

          node.S.resize(lev + 1);
          for (std::size_t i = 0; i < lev; ++i) {
            BlockBudget::note(tree.region(j).knots.size(),
                              tree_knot_count(model, anc[i]));
            node.S[i] = Eigen::MatrixXd::Zero(
                r, static_cast<Eigen::Index>(tree_knot_count(model, anc[i])));
            for (std::size_t k = 0; k < lev; ++k)
              node.S[i].noalias() -=
                  W[k] * posterior_block(nodes, anc, k, i);
          }
          BlockBudget::note(tree.region(j).knots.size(),
                            tree.region(j).knots.size());
          node.S[lev] = node.lam.solve(Eigen::MatrixXd::Identity(r, r));
          for (std::size_t k = 0; k < lev; ++k)
            for (std::size_t l = 0; l < lev; ++l)
              node.S[lev].noalias() +=
                  W[k] * posterior_block(nodes, anc, k, l) * W[l].transpose();
        },
        max_threads);
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Likelihood
// ---------------------------------------------------------------------------

/// Gaussian log-likelihood of the observed values under the model's
/// multi-resolution covariance, computed by the tree algorithm without
/// forming any matrix larger than one region's block. `y` is aligned with
/// the observation set the partition was built from.
inline double mra_loglik(const MraModel& model, const std::vector<double>& y,
                         unsigned max_threads = 0) {
  std::vector<detail::EvalNode> nodes;
  return detail::upward_pass(model, y, nodes, max_threads);
}

// ---------------------------------------------------------------------------
// Prediction
// ---------------------------------------------------------------------------

/// Posterior mean and variance at every prediction location attached to the
/// partition, in the order of the prediction set the partition was built
/// from. Variances include the nugget (they target new observations) and are
/// clamped at zero.
inline PredictionField mra_predict(const MraModel& model,
                                   const std::vector<double>& y,
                                   unsigned max_threads = 0) {
  std::vector<detail::EvalNode> nodes;
  detail::upward_pass(model, y, nodes, max_threads);
  detail::downward_pass(model, nodes, max_threads);

  const PartitionTree& tree = model.tree();
  PredictionField field;
  field.locations.resize(model.prediction_count());
  field.mean.assign(model.prediction_count(), 0.0);
  field.variance.assign(model.prediction_count(), 0.0);

  const auto [b, e] = tree.level_range(tree.levels());
  parallel_for(
      e - b,
      [&](std::size_t t) {
        const std::size_t j = b + t;
        const Region& reg = tree.region(j);
        const auto npred = static_cast<Eigen::Index>(reg.pred_rows.size());
        if (npred == 0) return;
        const RegionFactors& rf = model.factors(j);
        const detail::EvalNode& node = nodes[j];
        const auto anc = model.ancestors(j);
        const std::size_t m = anc.size();

        std::vector<Eigen::MatrixXd> C(m);
        for (std::size_t i = 0; i < m; ++i) {
          detail::BlockBudget::note(reg.pred_rows.size(),
                                    detail::tree_knot_count(model, anc[i]));
          C[i] = rf.U[i].bottomRows(npred);
          C[i].noalias() -= rf.Rw.transpose() * node.F[i];
        }

        Eigen::VectorXd mean = rf.Rw.transpose() * node.e;
        for (std::size_t i = 0; i < m; ++i)
          mean.noalias() += C[i] * nodes[anc[i]].mu;

        Eigen::VectorXd var = rf.spp;
        if (rf.Rw.rows() > 0)
          var -= rf.Rw.colwise().squaredNorm().transpose();
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t k = 0; k < m; ++k) {
            if (C[i].cols() == 0 || C[k].cols() == 0) continue;
            detail::BlockBudget::note(reg.pred_rows.size(),
                                      detail::tree_knot_count(model, anc[k]));
            const Eigen::MatrixXd T =
                C[i] * detail::posterior_block(nodes, anc, i, k);
            var += (T.array() * C[k].array()).rowwise().sum().matrix();
          }

        for (Eigen::Index p = 0; p < npred; ++p) {
          const std::size_t row = reg.pred_rows[static_cast<std::size_t>(p)];
          field.locations[row] = model.tree().prediction_location(row);
          field.mean[row] = mean[p];
          field.variance[row] = std::max(var[p], 0.0);
        }
      },
      max_threads);
  return field;
}

/// Averages mra_predict over the 9 partitions obtained by shifting the grid
/// by -1, 0, +1 offsets in space and time (the config's own offsets are
/// ignored): per-location mean of means and mean of variances. Costs about
/// 9 single predictions.
inline PredictionField averaged_predict(const PartitionConfig& config,
                                        const SpaceTimeExtent& domain,
                                        const PointDataset& observations,
                                        const PointDataset& predictions,
                                        const CovarianceModel& cov,
                                        unsigned max_threads = 0) {
  std::vector<double> y;
  y.reserve(observations.size());
  for (std::size_t i = 0; i < observations.size(); ++i) {
    if (!observations.value(i))
      throw data_error("observations with missing values cannot be averaged; "
                       "drop them first");
    y.push_back(*observations.value(i));
  }

  PredictionField out;
  for (int so : {-1, 0, 1}) {
    for (int to : {-1, 0, 1}) {
      PartitionConfig cfg = config;
      cfg.spatial_offset = so;
      cfg.temporal_offset = to;
      MraModel model(partition(domain, observations, predictions, cfg), cov,
                     max_threads);
      PredictionField field = mra_predict(model, y, max_threads);
      if (out.locations.empty()) {
        out = std::move(field);
        continue;
      }
      for (std::size_t i = 0; i < out.mean.size(); ++i) {
        out.mean[i] += field.mean[i];
        out.variance[i] += field.variance[i];
      }
    }
  }
  for (std::size_t i = 0; i < out.mean.size(); ++i) {
    out.mean[i] /= 9.0;
    out.variance[i] /= 9.0;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Oracle-facing dense forms
// ---------------------------------------------------------------------------

/// Remainder covariance V^{(l)}(A, B) after recursively conditioning on the
/// anchor knot sets Q_0 .. Q_{l-1}: V^{(0)} is the plain covariance and each
/// level subtracts the regression on the next anchor set. Sequential
/// conditioning equals one-shot joint conditioning, which is the testing
/// contract. `where` labels factorization errors (region path or similar).
inline Eigen::MatrixXd remainder_cov(
    const CovarianceModel& cov,
    const std::vector<std::vector<Location>>& anchors,
    const std::vector<Location>& A, const std::vector<Location>& B,
    const std::string& where = "") {
  struct Chain {
    std::vector<Eigen::MatrixXd> U;
    Eigen::MatrixXd L;
  };
  auto label = [&](std::size_t level) {
    return where.empty() ? "anchor level " + std::to_string(level) : where;
  };

  std::vector<Chain> chain(anchors.size());
  for (std::size_t i = 0; i < anchors.size(); ++i) {
    chain[i].U.resize(i);
    for (std::size_t k = 0; k < i; ++k) {
      Eigen::MatrixXd cross = cov_matrix(cov, anchors[i], anchors[k]);
      for (std::size_t l = 0; l < k; ++l)
        cross.noalias() -= chain[i].U[l] * chain[k].U[l].transpose();
      chain[k]
          .L.transpose()
          .triangularView<Eigen::Upper>()
          .solveInPlace<Eigen::OnTheRight>(cross);
      chain[i].U[k] = std::move(cross);
    }
    Eigen::MatrixXd gram = cov_matrix(cov, anchors[i], anchors[i]);
    for (std::size_t k = 0; k < i; ++k)
      gram.noalias() -= chain[i].U[k] * chain[i].U[k].transpose();
    chain[i].L = detail::jittered_llt(gram, label(i)).matrixL();
  }

  auto u_chain = [&](const std::vector<Location>& P) {
    std::vector<Eigen::MatrixXd> u(anchors.size());
    for (std::size_t i = 0; i < anchors.size(); ++i) {
      Eigen::MatrixXd cross = cov_matrix(cov, P, anchors[i]);
      for (std::size_t k = 0; k < i; ++k)
        cross.noalias() -= u[k] * chain[i].U[k].transpose();
      chain[i]
          .L.transpose()
          .triangularView<Eigen::Upper>()
          .solveInPlace<Eigen::OnTheRight>(cross);
      u[i] = std::move(cross);
    }
    return u;
  };

  const auto uA = u_chain(A);
  const auto uB = u_chain(B);
  Eigen::MatrixXd out = cov_matrix(cov, A, B);
  for (std::size_t i = 0; i < anchors.size(); ++i)
    out.noalias() -= uA[i] * uB[i].transpose();
  return out;
}

/// Dense multi-resolution covariance over arbitrary in-domain locations:
/// basis contributions accumulate over every level at which two locations
/// share a region, plus the leaf remainder when they share a leaf (which
/// makes within-leaf covariances exact). Quadratic in |A|; intended as the
/// validation oracle for the tree algorithms, not for production use.
inline Eigen::MatrixXd mra_cov_dense(const MraModel& model,
                                     const std::vector<Location>& A) {
  const PartitionTree& tree = model.tree();
  const CovarianceModel& cov = model.covariance();
  const int M = tree.levels();
  const std::size_t n = A.size();

  std::vector<std::vector<std::size_t>> chain(n);
  std::vector<std::vector<Eigen::MatrixXd>> u(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (!tree.domain().contains_closed(A[i]))
      throw data_error("location " + std::to_string(i) +
                       " lies outside the domain");
    const std::size_t leaf = tree.locate(A[i], M);
    chain[i] = model.ancestors(leaf);
    chain[i].push_back(leaf);
    const std::vector<Location> pt{A[i]};
    u[i].resize(static_cast<std::size_t>(M));
    for (int m = 0; m < M; ++m) {
      const std::size_t a = chain[i][static_cast<std::size_t>(m)];
      const RegionFactors& af = model.factors(a);
      Eigen::MatrixXd cross = cov_matrix(cov, pt, tree.region(a).knots);
      for (int k = 0; k < m; ++k)
        cross.noalias() -=
            u[i][static_cast<std::size_t>(k)] *
            af.U[static_cast<std::size_t>(k)].transpose();
      af.L.transpose()
          .triangularView<Eigen::Upper>()
          .solveInPlace<Eigen::OnTheRight>(cross);
      u[i][static_cast<std::size_t>(m)] = std::move(cross);
    }
  }

  Eigen::MatrixXd out(static_cast<Eigen::Index>(n),
                      static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = i; k < n; ++k) {
      std::size_t shared = 0;
      while (shared < chain[i].size() && shared < chain[k].size() &&
             chain[i][shared] == chain[k][shared])
        ++shared;
      double value;
      if (shared == chain[i].size() && shared == chain[k].size()) {
        value = cov(A[i], A[k]);
      } else {
        value = 0.0;
        for (std::size_t m = 0; m < shared; ++m)
          value += (u[i][m] * u[k][m].transpose())(0, 0);
      }
      out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = value;
      out(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(i)) = value;
    }
  }
  return out;
}

}  // namespace stmra

#endif  // STMRA_MRA_HPP
