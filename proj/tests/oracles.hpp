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

// Slow reference implementations used only by the tests. None of them share
// code with the library.

#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <vector>

namespace oracle {

/// Exhaustive active-set QP: min 1/2 x'Px + q'x, Aeq x = beq,
/// lo <= Ain x <= hi. Every row is tried as inactive, at its lower bound or
/// at its upper bound; the best KKT-consistent candidate wins. P must be
/// positive definite.
struct QpResult {
  bool feasible = false;
  Eigen::VectorXd x;
  double objective = std::numeric_limits<double>::infinity();
};

inline QpResult enumerate_qp(const Eigen::MatrixXd& p, const Eigen::VectorXd& q,
                             const Eigen::MatrixXd& aeq, const Eigen::VectorXd& beq,
                             const Eigen::MatrixXd& ain, const Eigen::VectorXd& lo,
                             const Eigen::VectorXd& hi, double tol = 1e-9) {
  const int n = static_cast<int>(q.size());
  const int m = static_cast<int>(ain.rows());
  QpResult best;
  std::vector<int> choice(static_cast<std::size_t>(m), 0);
  long total = 1;
  for (int i = 0; i < m; ++i) total *= 3;
  for (long code = 0; code < total; ++code) {
    long c = code;
    std::vector<int> rows;
    std::vector<double> rhs;
    for (int i = 0; i < m; ++i) {
      choice[static_cast<std::size_t>(i)] = static_cast<int>(c % 3);
      c /= 3;
    }
    bool skip = false;
    for (int i = 0; i < m; ++i) {
      const int ch = choice[static_cast<std::size_t>(i)];
      if (ch == 1 && !std::isfinite(lo(i))) skip = true;
      if (ch == 2 && !std::isfinite(hi(i))) skip = true;
      if (ch != 0) {
        rows.push_back(i);
        rhs.push_back(ch == 1 ? lo(i) : hi(i));
      }
    }
    if (skip) continue;
    const int k = static_cast<int>(aeq.rows()) + static_cast<int>(rows.size());
    Eigen::MatrixXd kkt = Eigen::MatrixXd::Zero(n + k, n + k);
    Eigen::VectorXd b = Eigen::VectorXd::Zero(n + k);
    kkt.topLeftCorner(n, n) = p;
    b.head(n) = -q;
    Eigen::MatrixXd a(k, n);
    Eigen::VectorXd ab(k);
    if (aeq.rows() > 0) {
      a.topRows(aeq.rows()) = aeq;
      ab.head(aeq.rows()) = beq;
    }
    for (std::size_t r = 0; r < rows.size(); ++r) {
      a.row(aeq.rows() + static_cast<Eigen::Index>(r)) = ain.row(rows[r]);
      ab(aeq.rows() + static_cast<Eigen::Index>(r)) = rhs[r];
    }
    kkt.topRightCorner(n, k) = a.transpose();
    kkt.bottomLeftCorner(k, n) = a;
    b.tail(k) = ab;
    Eigen::FullPivLU<Eigen::MatrixXd> lu(kkt);
    if (lu.rank() < n + k) continue;
    const Eigen::VectorXd sol = lu.solve(b);
    const Eigen::VectorXd x = sol.head(n);
    const Eigen::VectorXd lam = sol.tail(k);
    if (aeq.rows() > 0 && (aeq * x - beq).cwiseAbs().maxCoeff() > 1e-7) continue;
    bool ok = true;
    if (m > 0) {
      const Eigen::VectorXd v = ain * x;
      for (int i = 0; i < m; ++i) {
        if (v(i) < lo(i) - 1e-7 || v(i) > hi(i) + 1e-7) ok = false;
      }
    }
    // multiplier signs: Px + q + A' lam = 0, so lam <= 0 at a lower bound
    for (std::size_t r = 0; r < rows.size() && ok; ++r) {
      const double l = lam(aeq.rows() + static_cast<Eigen::Index>(r));
      const int ch = choice[static_cast<std::size_t>(rows[r])];
      if (ch == 1 && l > tol) ok = false;
      if (ch == 2 && l < -tol) ok = false;
    }
    if (!ok) continue;
    const double obj = 0.5 * x.dot(p * x) + q.dot(x);
    if (obj < best.objective) {
      best.feasible = true;
      best.x = x;
      best.objective = obj;
    }
  }
  return best;
}

/// Accelerated projected gradient on the dual of
/// min 1/2 x'Px + q'x, lo <= A x <= hi (equalities as lo == hi), run for a
/// fixed, large number of iterations with adaptive restart.
inline QpResult dual_gradient_qp(const Eigen::MatrixXd& p, const Eigen::VectorXd& q,
                                 const Eigen::MatrixXd& a, const Eigen::VectorXd& lo,
                                 const Eigen::VectorXd& hi, int iterations = 200000) {
  const Eigen::LLT<Eigen::MatrixXd> llt(p);
  const Eigen::MatrixXd pinv_at = llt.solve(a.transpose());
  const Eigen::VectorXd pinv_q = llt.solve(q);
  const Eigen::MatrixXd m = a * pinv_at;
  const double lip = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(m).eigenvalues().maxCoeff();
  const double step = 1.0 / lip;
  const Eigen::Index rows = a.rows();
  auto primal = [&](const Eigen::VectorXd& y) -> Eigen::VectorXd {
    return -pinv_q - pinv_at * y;
  };
  // prox of step * support function of [lo, hi]
  auto prox = [&](const Eigen::VectorXd& v) {
    Eigen::VectorXd out(rows);
    for (Eigen::Index i = 0; i < rows; ++i) {
      const double z = std::clamp(v(i) / step, lo(i), hi(i));
      out(i) = v(i) - step * z;
    }
    return out;
  };
  Eigen::VectorXd y = Eigen::VectorXd::Zero(rows), y_prev = y, w = y;
  double theta = 1.0;
  for (int k = 0; k < iterations; ++k) {
    const Eigen::VectorXd grad = a * primal(w);  // gradient of the smooth dual part
    y_prev = y;
    y = prox(w + step * grad);
    const double theta_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * theta * theta));
    if ((w - y).dot(y - y_prev) > 0.0) {
      theta = 1.0;
      w = y;
      continue;
    }
    w = y + ((theta - 1.0) / theta_next) * (y - y_prev);
    theta = theta_next;
  }
  QpResult out;
  out.x = primal(y);
  const Eigen::VectorXd ax = a * out.x;
  double viol = 0.0;
  for (Eigen::Index i = 0; i < rows; ++i) viol = std::max({viol, lo(i) - ax(i), ax(i) - hi(i)});
  out.feasible = viol < 1e-6;
  out.objective = 0.5 * out.x.dot(p * out.x) + q.dot(out.x);
  return out;
}

/// Composite Gauss-Legendre quadrature (5 nodes per panel).
inline double integrate(const std::function<double(double)>& f, double a, double b,
                        int panels = 64) {
  static const double nodes[5] = {0.0, -0.5384693101056831, 0.5384693101056831,
                                  -0.9061798459386640, 0.9061798459386640};
  static const double weights[5] = {0.5688888888888889, 0.4786286704993665,
                                    0.4786286704993665, 0.2369268850561891,
                                    0.2369268850561891};
  const double h = (b - a) / panels;
  double total = 0.0;
  for (int p = 0; p < panels; ++p) {
    const double mid = a + (p + 0.5) * h;
    for (int i = 0; i < 5; ++i) total += weights[i] * f(mid + 0.5 * h * nodes[i]);
  }
  return 0.5 * h * total;
}

/// k-th derivative of sum_j c_j t^j, evaluated by repeated differentiation of
/// the coefficient list.
inline double poly_derivative(const Eigen::VectorXd& c, double t, int k) {
  std::vector<double> a(c.data(), c.data() + c.size());
  for (int d = 0; d < k; ++d) {
    if (a.size() <= 1) return 0.0;
    for (std::size_t j = 1; j < a.size(); ++j) a[j - 1] = a[j] * static_cast<double>(j);
    a.pop_back();
  }
  double v = 0.0;
  for (std::size_t j = a.size(); j-- > 0;) v = v * t + a[j];
  return v;
}

/// Central finite-difference gradient.
inline Eigen::VectorXd fd_gradient(const std::function<double(const Eigen::VectorXd&)>& f,
                                   const Eigen::VectorXd& x, double h = 1e-6) {
  Eigen::VectorXd g(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    Eigen::VectorXd xp = x, xm = x;
    xp(i) += h;
    xm(i) -= h;
    g(i) = (f(xp) - f(xm)) / (2.0 * h);
  }
  return g;
}

/// Smallest circle containing all points, by trying every pair and triple.
struct Circle {
  Eigen::Vector2d center = Eigen::Vector2d::Zero();
  double radius = 0.0;
};

inline Circle brute_force_mec(const std::vector<Eigen::Vector2d>& pts) {
  Circle best{pts.front(), std::numeric_limits<double>::infinity()};
  auto covers = [&](const Circle& c) {
    for (const auto& p : pts) {
      if ((p - c.center).norm() > c.radius + 1e-9) return false;
    }
    return true;
  };
  auto consider = [&](const Circle& c) {
    if (c.radius < best.radius && covers(c)) best = c;
  };
  if (pts.size() == 1) return {pts.front(), 0.0};
  for (std::size_t i = 0; i < pts.size(); ++i) {
    for (std::size_t j = i + 1; j < pts.size(); ++j) {
      const Eigen::Vector2d c = 0.5 * (pts[i] + pts[j]);
      consider({c, (pts[i] - c).norm()});
      for (std::size_t k = j + 1; k < pts.size(); ++k) {
        const Eigen::Vector2d a = pts[i], b = pts[j], d = pts[k];
        const double den = 2.0 * (a.x() * (b.y() - d.y()) + b.x() * (d.y() - a.y()) +
                                  d.x() * (a.y() - b.y()));
        if (std::abs(den) < 1e-12) continue;
        const double ux = (a.squaredNorm() * (b.y() - d.y()) + b.squaredNorm() * (d.y() - a.y()) +
                           d.squaredNorm() * (a.y() - b.y())) / den;
        const double uy = (a.squaredNorm() * (d.x() - b.x()) + b.squaredNorm() * (a.x() - d.x()) +
                           d.squaredNorm() * (b.x() - a.x())) / den;
        const Eigen::Vector2d cc(ux, uy);
        consider({cc, (a - cc).norm()});
      }
    }
  }
  return best;
}

}  // namespace oracle
