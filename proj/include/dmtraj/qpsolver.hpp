// Copyright 2026 The dmtraj Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Dense convex QP solvers.
//
//   minimize    1/2 x' P x + q' x
//   subject to  A_eq x = b_eq
//               lb <= A_in x <= ub
//
// Two methods are provided. The default is a dual active-set method
// (Goldfarb-Idnani): it starts from the unconstrained minimum and adds the
// most violated constraint at a time, keeping the active normals in a
// factorized form. It needs P positive definite and terminates in a finite
// number of steps with an exact answer or an infeasibility verdict.
//
// The second is operator splitting (ADMM). Equality rows are folded into the two-sided system with lb = ub. The
// iteration follows the usual splitting with over-relaxation: a regularized
// KKT solve for x, projection of A x onto [lb, ub] and a dual ascent step.
// The data is equilibrated (Ruiz) before iterating, the penalty is rebalanced
// from the residual ratio, and once the residuals are small the active set
// is guessed from the duals and the reduced KKT system is solved exactly
// ("polishing"). Primal infeasibility is detected from the dual iterate
// differences.

#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "dmtraj/core.hpp"

namespace dmtraj {

struct QpProblem {
  Eigen::MatrixXd hessian;   // P, symmetric positive semidefinite
  Eigen::VectorXd gradient;  // q
  Eigen::MatrixXd a_eq;
  Eigen::VectorXd b_eq;
  Eigen::MatrixXd a_in;
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;

  Eigen::Index num_vars() const { return gradient.size(); }

  void validate() const {
    const Eigen::Index n = gradient.size();
    if (hessian.rows() != n || hessian.cols() != n) {
      throw ValidationError("hessian: expected " + std::to_string(n) + "x" + std::to_string(n));
    }
    if (a_eq.rows() != b_eq.size() || (a_eq.rows() > 0 && a_eq.cols() != n)) {
      throw ValidationError("a_eq: dimension mismatch with b_eq or the variable count");
    }
    if (a_in.rows() != lower.size() || a_in.rows() != upper.size() ||
        (a_in.rows() > 0 && a_in.cols() != n)) {
      throw ValidationError("a_in: dimension mismatch with bounds or the variable count");
    }
    if (!hessian.allFinite() || !gradient.allFinite() || !a_eq.allFinite() ||
        !b_eq.allFinite() || !a_in.allFinite()) {
      throw ValidationError("problem: matrices must be finite");
    }
    for (Eigen::Index i = 0; i < lower.size(); ++i) {
      if (std::isnan(lower(i)) || std::isnan(upper(i))) {
        throw ValidationError("bounds: NaN bound in row " + std::to_string(i));
      }
    }
  }

  double objective(const Eigen::VectorXd& x) const {
    return 0.5 * x.dot(hessian * x) + gradient.dot(x);
  }
};

enum class QpStatus { kSolved, kInfeasible, kMaxIter };

inline const char* to_string(QpStatus s) {
  switch (s) {
    case QpStatus::kSolved: return "solved";
    case QpStatus::kInfeasible: return "infeasible";
    case QpStatus::kMaxIter: return "max_iter";
  }
  return "unknown";
}

enum class QpMethod { kActiveSet, kAdmm };

struct QpSettings {
  QpMethod method = QpMethod::kActiveSet;
  double eps = 1e-6;
  int max_iter = 4000;
  double rho = 0.1;
  double sigma = 1e-6;
  double alpha = 1.6;
  int adapt_interval = 25;
  int check_interval = 5;
  double eps_infeasible = 1e-6;
  int scaling_iters = 10;
  bool polish = true;
};

/// Dual vector y is stacked as [equality rows; inequality rows].
struct QpWarmStart {
  Eigen::VectorXd x;
  Eigen::VectorXd y;
};

struct QpSolution {
  Eigen::VectorXd x;
  Eigen::VectorXd y;
  double objective = 0.0;
  QpStatus status = QpStatus::kMaxIter;
  int iterations = 0;
  double primal_residual = 0.0;  // infinity norm, normalized by max(1, |Ax|, |z|)
  double dual_residual = 0.0;    // infinity norm, normalized by max(1, |Px|, |A'y|, |q|)
  bool polished = false;
};

class AdmmSolver {
 public:
  explicit AdmmSolver(QpSettings settings = {}) : settings_(settings) {}

  const QpSettings& settings() const { return settings_; }

  QpSolution solve(const QpProblem& prob, const QpWarmStart* warm = nullptr) const {
    prob.validate();
    Work w(prob);
    QpSolution out;
    out.x = Eigen::VectorXd::Zero(w.n);
    out.y = Eigen::VectorXd::Zero(w.m);

    for (Eigen::Index i = 0; i < w.m; ++i) {
      if (w.l(i) > w.u(i)) {
        out.status = QpStatus::kInfeasible;
        return out;
      }
    }

    scale(w);
    init_iterates(w, warm);

    Eigen::VectorXd rho_vec = penalty_vector(w, settings_.rho);
    double rho = settings_.rho;
    Eigen::LLT<Eigen::MatrixXd> kkt = factor(w, rho_vec);

    Eigen::VectorXd x_tilde(w.n), z_tilde(w.m), z_hat(w.m), y_prev(w.m);
    Residuals res;
    int iter = 0;
    bool converged = false;
    for (iter = 1; iter <= settings_.max_iter; ++iter) {
      y_prev = w.y;
      x_tilde = kkt.solve(settings_.sigma * w.x - w.q +
                          w.a.transpose() * (rho_vec.cwiseProduct(w.z) - w.y));
      z_tilde.noalias() = w.a * x_tilde;
      w.x = settings_.alpha * x_tilde + (1.0 - settings_.alpha) * w.x;
      z_hat = settings_.alpha * z_tilde + (1.0 - settings_.alpha) * w.z;
      w.z = (z_hat + w.y.cwiseQuotient(rho_vec)).cwiseMax(w.l).cwiseMin(w.u);
      w.y += rho_vec.cwiseProduct(z_hat - w.z);

      const bool check = iter == 1 || iter % settings_.check_interval == 0 ||
                         iter % settings_.adapt_interval == 0 || iter == settings_.max_iter;
      if (!check) continue;

      res = residuals(w);
      if (res.primal <= settings_.eps && res.dual <= settings_.eps) {
        converged = true;
        break;
      }
      if (primal_infeasible(w, w.y - y_prev)) {
        out.status = QpStatus::kInfeasible;
        out.iterations = iter;
        unscale_into(w, out);
        out.primal_residual = res.primal;
        out.dual_residual = res.dual;
        return out;
      }
      if (iter % settings_.adapt_interval == 0) {
        if (settings_.polish && res.primal < 1e-3 && res.dual < 1e-3) {
          if (try_polish(w, out)) {
            out.iterations = iter;
            return out;
          }
        }
        const double new_rho = std::clamp(rho * std::sqrt(res.primal_scaled /
                                                          std::max(res.dual_scaled, 1e-30)),
                                          1e-6, 1e6);
        if (new_rho > 5.0 * rho || new_rho < rho / 5.0) {
          rho = new_rho;
          rho_vec = penalty_vector(w, rho);
          kkt = factor(w, rho_vec);
        }
      }
    }
    iter = std::min(iter, settings_.max_iter);

    if (settings_.polish && try_polish(w, out)) {
      out.iterations = iter;
      return out;
    }
    unscale_into(w, out);
    out.iterations = iter;
    out.primal_residual = res.primal;
    out.dual_residual = res.dual;
    out.status = converged ? QpStatus::kSolved : QpStatus::kMaxIter;
    out.objective = prob.objective(out.x);
    return out;
  }

 private:
  struct Work {
    explicit Work(const QpProblem& prob) : src(&prob) {
      n = prob.num_vars();
      m_eq = prob.a_eq.rows();
      m = m_eq + prob.a_in.rows();
      p = 0.5 * (prob.hessian + prob.hessian.transpose());
      q = prob.gradient;
      a.resize(m, n);
      l.resize(m);
      u.resize(m);
      if (m_eq > 0) {
        a.topRows(m_eq) = prob.a_eq;
        l.head(m_eq) = prob.b_eq;
        u.head(m_eq) = prob.b_eq;
      }
      if (m > m_eq) {
        a.bottomRows(m - m_eq) = prob.a_in;
        l.tail(m - m_eq) = prob.lower;
        u.tail(m - m_eq) = prob.upper;
      }
      d = Eigen::VectorXd::Ones(n);
      e = Eigen::VectorXd::Ones(m);
    }
    const QpProblem* src;
    Eigen::Index n = 0, m = 0, m_eq = 0;
    Eigen::MatrixXd p, a;
    Eigen::VectorXd q, l, u;
    Eigen::VectorXd d, e;  // variable and constraint scaling
    double c = 1.0;        // cost scaling
    Eigen::VectorXd x, z, y;
  };

  struct Residuals {
    double primal = kInf, dual = kInf;
    double primal_scaled = kInf, dual_scaled = kInf;
  };

  void scale(Work& w) const {
    for (int it = 0; it < settings_.scaling_iters; ++it) {
      Eigen::VectorXd delta(w.n);
      for (Eigen::Index j = 0; j < w.n; ++j) {
        double nrm = w.p.col(j).cwiseAbs().maxCoeff();
        if (w.m > 0) nrm = std::max(nrm, w.a.col(j).cwiseAbs().maxCoeff());
        delta(j) = nrm < 1e-8 ? 1.0 : std::clamp(1.0 / std::sqrt(nrm), 1e-4, 1e4);
      }
      Eigen::VectorXd eps_row(w.m);
      for (Eigen::Index i = 0; i < w.m; ++i) {
        const double nrm = w.a.row(i).cwiseAbs().maxCoeff();
        eps_row(i) = nrm < 1e-8 ? 1.0 : std::clamp(1.0 / std::sqrt(nrm), 1e-4, 1e4);
      }
      w.p = delta.asDiagonal() * w.p * delta.asDiagonal();
      w.a = eps_row.asDiagonal() * w.a * delta.asDiagonal();
      w.q = w.q.cwiseProduct(delta);
      w.d = w.d.cwiseProduct(delta);
      w.e = w.e.cwiseProduct(eps_row);

      double mean_col = 0.0;
      for (Eigen::Index j = 0; j < w.n; ++j) mean_col += w.p.col(j).cwiseAbs().maxCoeff();
      mean_col /= static_cast<double>(std::max<Eigen::Index>(w.n, 1));
      const double q_norm = w.q.size() > 0 ? w.q.cwiseAbs().maxCoeff() : 0.0;
      double gamma = std::max(mean_col, q_norm);
      gamma = gamma < 1e-8 ? 1.0 : std::clamp(1.0 / gamma, 1e-4, 1e4);
      w.p *= gamma;
      w.q *= gamma;
      w.c *= gamma;
    }
    for (Eigen::Index i = 0; i < w.m; ++i) {
      if (std::isfinite(w.l(i))) w.l(i) *= w.e(i);
      if (std::isfinite(w.u(i))) w.u(i) *= w.e(i);
    }
  }

  void init_iterates(Work& w, const QpWarmStart* warm) const {
    w.x = Eigen::VectorXd::Zero(w.n);
    w.y = Eigen::VectorXd::Zero(w.m);
    if (warm != nullptr && warm->x.size() == w.n) w.x = warm->x.cwiseQuotient(w.d);
    if (warm != nullptr && warm->y.size() == w.m) w.y = w.c * warm->y.cwiseQuotient(w.e);
    w.z = (w.a * w.x).cwiseMax(w.l).cwiseMin(w.u);
  }

  static bool is_equality(const Work& w, Eigen::Index i) { return w.l(i) == w.u(i); }

  Eigen::VectorXd penalty_vector(const Work& w, double rho) const {
    Eigen::VectorXd r(w.m);
    for (Eigen::Index i = 0; i < w.m; ++i) {
      if (!std::isfinite(w.l(i)) && !std::isfinite(w.u(i))) {
        r(i) = 1e-6;  // free row
      } else {
        r(i) = is_equality(w, i) ? 1e3 * rho : rho;
      }
    }
    return r;
  }

  Eigen::LLT<Eigen::MatrixXd> factor(const Work& w, const Eigen::VectorXd& rho_vec) const {
    Eigen::MatrixXd k = w.p;
    k.diagonal().array() += settings_.sigma;
    if (w.m > 0) k.noalias() += w.a.transpose() * rho_vec.asDiagonal() * w.a;
    return Eigen::LLT<Eigen::MatrixXd>(k);
  }

  static double inf_norm(const Eigen::VectorXd& v) {
    return v.size() > 0 ? v.cwiseAbs().maxCoeff() : 0.0;
  }

  // Residuals of the unscaled problem, normalized for the stopping test, plus
  // the scaled-space ratios used to rebalance the penalty.
  Residuals residuals(const Work& w) const {
    Residuals r;
    const Eigen::VectorXd ax_s = w.a * w.x;
    const Eigen::VectorXd px_s = w.p * w.x;
    const Eigen::VectorXd aty_s = w.a.transpose() * w.y;

    const Eigen::VectorXd ax = ax_s.cwiseQuotient(w.e);
    const Eigen::VectorXd z = w.z.cwiseQuotient(w.e);
    const double prim = inf_norm(ax - z);
    r.primal = prim / std::max({1.0, inf_norm(ax), inf_norm(z)});

    const Eigen::VectorXd px = px_s.cwiseQuotient(w.d) / w.c;
    const Eigen::VectorXd aty = aty_s.cwiseQuotient(w.d) / w.c;
    const Eigen::VectorXd q = w.q.cwiseQuotient(w.d) / w.c;
    const double dual = inf_norm(px + q + aty);
    r.dual = dual / std::max({1.0, inf_norm(px), inf_norm(aty), inf_norm(q)});

    r.primal_scaled = inf_norm(ax_s - w.z) / std::max({1e-30, inf_norm(ax_s), inf_norm(w.z)});
    r.dual_scaled = inf_norm(px_s + w.q + aty_s) /
                    std::max({1e-30, inf_norm(px_s), inf_norm(aty_s), inf_norm(w.q)});
    return r;
  }

  bool primal_infeasible(const Work& w, const Eigen::VectorXd& dy_s) const {
    if (w.m == 0) return false;
    const Eigen::VectorXd dy = dy_s.cwiseProduct(w.e);
    const double dy_norm = inf_norm(dy);
    if (dy_norm < 1e-12) return false;
    const Eigen::VectorXd aty = (w.a.transpose() * dy_s).cwiseQuotient(w.d);
    if (inf_norm(aty) > settings_.eps_infeasible * dy_norm) return false;
    double support = 0.0;
    for (Eigen::Index i = 0; i < w.m; ++i) {
      const double ui = std::isfinite(w.u(i)) ? w.u(i) / w.e(i) : kInf;
      const double li = std::isfinite(w.l(i)) ? w.l(i) / w.e(i) : -kInf;
      if (dy(i) > 0.0) {
        if (!std::isfinite(ui)) return false;
        support += ui * dy(i);
      } else if (dy(i) < 0.0) {
        if (!std::isfinite(li)) return false;
        support += li * dy(i);
      }
    }
    return support < -settings_.eps_infeasible * dy_norm;
  }

  void unscale_into(const Work& w, QpSolution& out) const {
    out.x = w.x.cwiseProduct(w.d);
    out.y = w.y.cwiseProduct(w.e) / w.c;
  }

  // Solves the equality-constrained problem on the guessed active set and
  // keeps it only if it is an exact KKT point of the original problem.
  bool try_polish(const Work& w, QpSolution& out) const {
    std::vector<Eigen::Index> rows;
    std::vector<double> rhs;
    for (Eigen::Index i = 0; i < w.m; ++i) {
      if (is_equality(w, i)) {
        rows.push_back(i);
        rhs.push_back(w.l(i));
      } else if (w.z(i) - w.l(i) < -w.y(i)) {
        rows.push_back(i);
        rhs.push_back(w.l(i));
      } else if (w.u(i) - w.z(i) < w.y(i)) {
        rows.push_back(i);
        rhs.push_back(w.u(i));
      }
    }
    const Eigen::Index k = static_cast<Eigen::Index>(rows.size());
    const Eigen::Index dim = w.n + k;
    constexpr double kReg = 1e-10;
    Eigen::MatrixXd kkt = Eigen::MatrixXd::Zero(dim, dim);
    kkt.topLeftCorner(w.n, w.n) = w.p;
    Eigen::VectorXd b(dim);
    b.head(w.n) = -w.q;
    for (Eigen::Index r = 0; r < k; ++r) {
      kkt.block(w.n + r, 0, 1, w.n) = w.a.row(rows[static_cast<std::size_t>(r)]);
      kkt.block(0, w.n + r, w.n, 1) = w.a.row(rows[static_cast<std::size_t>(r)]).transpose();
      b(w.n + r) = rhs[static_cast<std::size_t>(r)];
    }
    Eigen::MatrixXd reg = kkt;
    reg.diagonal().head(w.n).array() += kReg;
    reg.diagonal().tail(k).array() -= kReg;
    const Eigen::PartialPivLU<Eigen::MatrixXd> lu(reg);
    Eigen::VectorXd sol = lu.solve(b);
    for (int it = 0; it < 5; ++it) sol += lu.solve(b - kkt * sol);
    if (!sol.allFinite()) return false;

    Work cand = w;
    cand.x = sol.head(w.n);
    cand.y.setZero();
    for (Eigen::Index r = 0; r < k; ++r) cand.y(rows[static_cast<std::size_t>(r)]) = sol(w.n + r);
    cand.z = (cand.a * cand.x).cwiseMax(cand.l).cwiseMin(cand.u);
    const Residuals res = residuals(cand);
    if (!(res.primal <= settings_.eps && res.dual <= settings_.eps)) return false;

    const Eigen::VectorXd y = cand.y.cwiseProduct(cand.e) / cand.c;
    const double y_tol = settings_.eps * std::max(1.0, inf_norm(y));
    for (Eigen::Index r = 0; r < k; ++r) {
      const Eigen::Index i = rows[static_cast<std::size_t>(r)];
      if (is_equality(w, i)) continue;
      const bool at_lower = rhs[static_cast<std::size_t>(r)] == w.l(i);
      if (at_lower && y(i) > y_tol) return false;
      if (!at_lower && y(i) < -y_tol) return false;
    }

    unscale_into(cand, out);
    out.status = QpStatus::kSolved;
    out.polished = true;
    out.primal_residual = res.primal;
    out.dual_residual = res.dual;
    out.objective = w.src->objective(out.x);
    return true;
  }

  QpSettings settings_;
};

class ActiveSetSolver {
 public:
  explicit ActiveSetSolver(QpSettings settings = {}) : settings_(settings) {}

  QpSolution solve(const QpProblem& prob, const QpWarmStart* warm = nullptr) const {
    prob.validate();
    const Eigen::Index n = prob.num_vars();
    const Eigen::Index m_eq = prob.a_eq.rows();
    const Eigen::Index m_in = prob.a_in.rows();
    QpSolution out;
    out.x = Eigen::VectorXd::Zero(n);
    out.y = Eigen::VectorXd::Zero(m_eq + m_in);

    Rows rows;
    if (!build_rows(prob, rows)) {
      out.status = QpStatus::kInfeasible;
      return out;
    }

    Eigen::MatrixXd g = 0.5 * (prob.hessian + prob.hessian.transpose());
    Eigen::LLT<Eigen::MatrixXd> llt(g);
    double shift = 0.0;
    const double diag_scale = std::max(1.0, g.diagonal().cwiseAbs().maxCoeff());
    while (llt.info() != Eigen::Success || llt.matrixL().toDenseMatrix().diagonal().minCoeff() <= 0.0) {
      shift = shift == 0.0 ? 1e-12 * diag_scale : shift * 10.0;
      if (shift > 1e-4 * diag_scale) throw ValidationError("hessian: not positive semidefinite");
      llt.compute(g + shift * Eigen::MatrixXd::Identity(n, n));
    }

    if (warm && warm->y.size() == m_eq + m_in && try_guess(prob, g, rows, warm->y, out)) {
      out.iterations = 1;
      return out;
    }

    State st(n);
    st.j = llt.matrixU().solve(Eigen::MatrixXd::Identity(n, n));  // L^-T
    st.x = -llt.solve(prob.gradient);
    st.active_flag.assign(rows.count(), false);
    int iter = 0;
    const double tol = 1e-12;

    // equalities first, never dropped
    for (std::size_t c = 0; c < rows.count(); ++c) {
      if (!rows.equality[c]) continue;
      double viol = rows.normal.col(static_cast<Eigen::Index>(c)).dot(st.x) - rows.rhs(static_cast<Eigen::Index>(c));
      if (viol > 0.0) {
        rows.normal.col(static_cast<Eigen::Index>(c)) *= -1.0;
        rows.rhs(static_cast<Eigen::Index>(c)) *= -1.0;
        rows.sign[c] *= -1.0;
      }
      const auto r = add_constraint(st, rows, c, iter);
      if (r == Step::kInfeasible) {
        out.status = QpStatus::kInfeasible;
        out.iterations = iter;
        return out;
      }
      if (r == Step::kMaxIter) return finish(prob, rows, st, iter, QpStatus::kMaxIter, out);
    }

    for (;;) {
      // most violated inactive inequality
      std::size_t pick = rows.count();
      double worst = 0.0;
      const Eigen::VectorXd slack = rows.normal.transpose() * st.x - rows.rhs;
      for (std::size_t c = 0; c < rows.count(); ++c) {
        if (rows.equality[c] || st.active_flag[c]) continue;
        const double lim = -tol * std::max(1.0, std::abs(rows.rhs(static_cast<Eigen::Index>(c))));
        const double v = slack(static_cast<Eigen::Index>(c));
        if (v < lim && v < worst) {
          worst = v;
          pick = c;
        }
      }
      if (pick == rows.count()) break;
      const auto r = add_constraint(st, rows, pick, iter);
      if (r == Step::kInfeasible) {
        out.status = QpStatus::kInfeasible;
        out.iterations = iter;
        out.x = st.x;
        return out;
      }
      if (r == Step::kMaxIter) return finish(prob, rows, st, iter, QpStatus::kMaxIter, out);
    }
    return finish(prob, rows, st, iter, QpStatus::kSolved, out);
  }

 private:
  // Constraints as n' x >= b with unit normals, stored column-wise.
  struct Rows {
    Eigen::MatrixXd normal;
    Eigen::VectorXd rhs;
    std::vector<bool> equality;
    std::vector<Eigen::Index> source;  // index into the stacked [eq; in] rows
    std::vector<double> sign;          // +1 for a lower bound, -1 for an upper bound
    std::vector<double> scale;         // original row norm

    std::size_t count() const { return equality.size(); }
  };

  struct State {
    explicit State(Eigen::Index n) : r(Eigen::MatrixXd::Zero(n, n)) {}
    Eigen::MatrixXd j;  // J' N_active = [R; 0]
    Eigen::MatrixXd r;
    Eigen::VectorXd x;
    std::vector<std::size_t> active;
    std::vector<double> u;
    std::vector<bool> active_flag;
  };

  enum class Step { kAdded, kInfeasible, kMaxIter };

  static bool build_rows(const QpProblem& prob, Rows& rows) {
    const Eigen::Index n = prob.num_vars();
    std::vector<Eigen::VectorXd> cols;
    std::vector<double> rhs;
    auto push = [&](const Eigen::VectorXd& a, double b, bool eq, Eigen::Index src, double sign,
                    double norm) {
      cols.push_back(a);
      rhs.push_back(b);
      rows.equality.push_back(eq);
      rows.source.push_back(src);
      rows.sign.push_back(sign);
      rows.scale.push_back(norm);
    };
    for (Eigen::Index i = 0; i < prob.a_eq.rows(); ++i) {
      const double norm = prob.a_eq.row(i).norm();
      if (norm == 0.0) {
        if (std::abs(prob.b_eq(i)) > 1e-12) return false;
        continue;
      }
      push(prob.a_eq.row(i).transpose() / norm, prob.b_eq(i) / norm, true, i, 1.0, norm);
    }
    for (Eigen::Index i = 0; i < prob.a_in.rows(); ++i) {
      const double lo = prob.lower(i), hi = prob.upper(i);
      if (lo > hi) return false;
      const double norm = prob.a_in.row(i).norm();
      const Eigen::Index src = prob.a_eq.rows() + i;
      if (norm == 0.0) {
        if (lo > 1e-12 || hi < -1e-12) return false;
        continue;
      }
      const Eigen::VectorXd a = prob.a_in.row(i).transpose() / norm;
      if (lo == hi) {
        push(a, lo / norm, true, src, 1.0, norm);
        continue;
      }
      if (std::isfinite(lo)) push(a, lo / norm, false, src, 1.0, norm);
      if (std::isfinite(hi)) push(-a, -hi / norm, false, src, -1.0, norm);
    }
    rows.normal.resize(n, static_cast<Eigen::Index>(cols.size()));
    for (std::size_t c = 0; c < cols.size(); ++c) rows.normal.col(static_cast<Eigen::Index>(c)) = cols[c];
    rows.rhs = Eigen::Map<const Eigen::VectorXd>(rhs.data(), static_cast<Eigen::Index>(rhs.size()));
    return true;
  }

  Step add_constraint(State& st, const Rows& rows, std::size_t p, int& iter) const {
    const Eigen::Index n = st.x.size();
    const Eigen::VectorXd np = rows.normal.col(static_cast<Eigen::Index>(p));
    const double bp = rows.rhs(static_cast<Eigen::Index>(p));
    double u_p = 0.0;
    for (;;) {
      if (++iter > settings_.max_iter) return Step::kMaxIter;
      const Eigen::Index q = static_cast<Eigen::Index>(st.active.size());
      const Eigen::VectorXd d = st.j.transpose() * np;
      const Eigen::VectorXd z = st.j.rightCols(n - q) * d.tail(n - q);
      Eigen::VectorXd r = Eigen::VectorXd::Zero(q);
      if (q > 0) {
        r = st.r.topLeftCorner(q, q).triangularView<Eigen::Upper>().solve(d.head(q));
      }
      // dual step limit from active inequalities
      double t1 = kInf;
      Eigen::Index drop = -1;
      for (Eigen::Index k = 0; k < q; ++k) {
        if (rows.equality[st.active[static_cast<std::size_t>(k)]]) continue;
        if (r(k) > 0.0) {
          const double t = st.u[static_cast<std::size_t>(k)] / r(k);
          if (t < t1) {
            t1 = t;
            drop = k;
          }
        }
      }
      const double s = np.dot(st.x) - bp;
      const double curv = z.dot(np);
      const double t2 = curv > 1e-14 ? -s / curv : kInf;
      const double t = std::min(t1, t2);
      if (!std::isfinite(t)) {
        // an equality that is a combination of active ones and already satisfied
        if (rows.equality[p] && std::abs(s) <= 1e-9 * std::max(1.0, std::abs(bp))) return Step::kAdded;
        return Step::kInfeasible;
      }
      for (Eigen::Index k = 0; k < q; ++k) st.u[static_cast<std::size_t>(k)] -= t * r(k);
      u_p += t;
      if (std::isfinite(t2)) st.x += t * z;
      if (t == t2) {
        push_active(st, d, p, u_p);
        return Step::kAdded;
      }
      drop_active(st, drop);
    }
  }

  static void push_active(State& st, Eigen::VectorXd d, std::size_t p, double u_p) {
    const Eigen::Index n = st.x.size();
    const Eigen::Index q = static_cast<Eigen::Index>(st.active.size());
    for (Eigen::Index k = n - 1; k > q; --k) {
      const double a = d(k - 1), b = d(k);
      if (b == 0.0) continue;
      const double h = std::hypot(a, b);
      const double c = a / h, s = b / h;
      d(k - 1) = h;
      d(k) = 0.0;
      const Eigen::VectorXd jk1 = st.j.col(k - 1);
      st.j.col(k - 1) = c * jk1 + s * st.j.col(k);
      st.j.col(k) = -s * jk1 + c * st.j.col(k);
    }
    st.r.col(q).head(q + 1) = d.head(q + 1);
    st.active.push_back(p);
    st.u.push_back(u_p);
    st.active_flag[p] = true;
  }

  static void drop_active(State& st, Eigen::Index k) {
    const Eigen::Index q = static_cast<Eigen::Index>(st.active.size());
    st.active_flag[st.active[static_cast<std::size_t>(k)]] = false;
    for (Eigen::Index c = k; c + 1 < q; ++c) st.r.col(c) = st.r.col(c + 1);
    st.r.col(q - 1).setZero();
    st.active.erase(st.active.begin() + k);
    st.u.erase(st.u.begin() + k);
    for (Eigen::Index i = k; i + 1 < q; ++i) {
      const double a = st.r(i, i), b = st.r(i + 1, i);
      if (b == 0.0) continue;
      const double h = std::hypot(a, b);
      const double c = a / h, s = b / h;
      for (Eigen::Index col = i; col + 1 < q; ++col) {
        const double ri = st.r(i, col), ri1 = st.r(i + 1, col);
        st.r(i, col) = c * ri + s * ri1;
        st.r(i + 1, col) = -s * ri + c * ri1;
      }
      st.r(i + 1, i) = 0.0;
      const Eigen::VectorXd ji = st.j.col(i);
      st.j.col(i) = c * ji + s * st.j.col(i + 1);
      st.j.col(i + 1) = -s * ji + c * st.j.col(i + 1);
    }
  }

  // Solves the KKT system for a guessed active set taken from dual signs.
  bool try_guess(const QpProblem& prob, const Eigen::MatrixXd& g, const Rows& rows,
                 const Eigen::VectorXd& y, QpSolution& out) const {
    const Eigen::Index n = prob.num_vars();
    std::vector<std::size_t> set;
    const double ytol = 1e-9 * std::max(1.0, y.cwiseAbs().maxCoeff());
    for (std::size_t c = 0; c < rows.count(); ++c) {
      const double yc = y(rows.source[c]);
      if (rows.equality[c] || (rows.sign[c] > 0 && yc < -ytol) || (rows.sign[c] < 0 && yc > ytol)) {
        set.push_back(c);
      }
    }
    const Eigen::Index k = static_cast<Eigen::Index>(set.size());
    if (k > n) return false;
    Eigen::MatrixXd kkt = Eigen::MatrixXd::Zero(n + k, n + k);
    Eigen::VectorXd rhs(n + k);
    kkt.topLeftCorner(n, n) = g;
    rhs.head(n) = -prob.gradient;
    for (Eigen::Index i = 0; i < k; ++i) {
      const auto c = static_cast<Eigen::Index>(set[static_cast<std::size_t>(i)]);
      kkt.block(0, n + i, n, 1) = -rows.normal.col(c);
      kkt.block(n + i, 0, 1, n) = rows.normal.col(c).transpose();
      rhs(n + i) = rows.rhs(c);
    }
    const Eigen::FullPivLU<Eigen::MatrixXd> lu(kkt);
    if (lu.rank() < n + k) return false;
    const Eigen::VectorXd sol = lu.solve(rhs);
    State st(n);
    st.x = sol.head(n);
    st.active_flag.assign(rows.count(), false);
    for (Eigen::Index i = 0; i < k; ++i) {
      const std::size_t c = set[static_cast<std::size_t>(i)];
      if (!rows.equality[c] && sol(n + i) < -1e-12) return false;
      st.active.push_back(c);
      st.u.push_back(sol(n + i));
      st.active_flag[c] = true;
    }
    const Eigen::VectorXd slack = rows.normal.transpose() * st.x - rows.rhs;
    for (std::size_t c = 0; c < rows.count(); ++c) {
      if (slack(static_cast<Eigen::Index>(c)) < -1e-9 * std::max(1.0, std::abs(rows.rhs(static_cast<Eigen::Index>(c))))) {
        return false;
      }
    }
    finish(prob, rows, st, 1, QpStatus::kSolved, out);
    return out.primal_residual <= settings_.eps && out.dual_residual <= settings_.eps;
  }

  QpSolution& finish(const QpProblem& prob, const Rows& rows, const State& st, int iter,
                     QpStatus status, QpSolution& out) const {
    out.x = st.x;
    out.y.setZero(prob.a_eq.rows() + prob.a_in.rows());
    // G x + q = sum u_i n_i and P x + q + A' y = 0, n_i = sign a_i / |a_i|
    for (std::size_t k = 0; k < st.active.size(); ++k) {
      const std::size_t c = st.active[k];
      out.y(rows.source[c]) -= rows.sign[c] * st.u[k] / rows.scale[c];
    }
    out.iterations = iter;
    out.status = status;
    out.objective = prob.objective(out.x);

    const Eigen::VectorXd ax_eq = prob.a_eq * out.x;
    const Eigen::VectorXd ax_in = prob.a_in * out.x;
    double prim = 0.0, norm_ax = 0.0;
    if (ax_eq.size() > 0) {
      prim = (ax_eq - prob.b_eq).cwiseAbs().maxCoeff();
      norm_ax = std::max(ax_eq.cwiseAbs().maxCoeff(), prob.b_eq.cwiseAbs().maxCoeff());
    }
    for (Eigen::Index i = 0; i < ax_in.size(); ++i) {
      prim = std::max({prim, prob.lower(i) - ax_in(i), ax_in(i) - prob.upper(i)});
      norm_ax = std::max(norm_ax, std::abs(ax_in(i)));
    }
    const Eigen::VectorXd px = prob.hessian * out.x;
    const Eigen::VectorXd aty = prob.a_eq.transpose() * out.y.head(prob.a_eq.rows()) +
                                prob.a_in.transpose() * out.y.tail(prob.a_in.rows());
    const double dual = (px + prob.gradient + aty).lpNorm<Eigen::Infinity>();
    const double dual_norm = std::max({1.0, px.lpNorm<Eigen::Infinity>(),
                                       aty.lpNorm<Eigen::Infinity>(),
                                       prob.gradient.lpNorm<Eigen::Infinity>()});
    out.primal_residual = std::max(prim, 0.0) / std::max(1.0, norm_ax);
    out.dual_residual = dual / dual_norm;
    return out;
  }

  QpSettings settings_;
};

class QpSolver {
 public:
  explicit QpSolver(QpSettings settings = {}) : settings_(settings) {}

  const QpSettings& settings() const { return settings_; }

  QpSolution solve(const QpProblem& prob, const QpWarmStart* warm = nullptr) const {
    if (settings_.method == QpMethod::kAdmm) return AdmmSolver(settings_).solve(prob, warm);
    return ActiveSetSolver(settings_).solve(prob, warm);
  }

 private:
  QpSettings settings_;
};

inline QpSolution solve_qp(const QpProblem& prob, const QpSettings& settings = {},
                           const QpWarmStart* warm = nullptr) {
  return QpSolver(settings).solve(prob, warm);
}

}  // namespace dmtraj
