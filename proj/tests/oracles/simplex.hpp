#pragma once

// Dense two-phase simplex (Bland's rule) for
//   maximize c^T x  s.t.  A x <= b,  x >= 0.
// Returns -inf when infeasible, +inf when unbounded. Kept separate from the
// production solver so the padding optimum can be checked against a
// general-purpose LP.

#include <cmath>
#include <limits>
#include <utility>
#include <vector>

namespace gevd::oracle {

class Simplex {
public:
    Simplex(const std::vector<std::vector<double>>& A, const std::vector<double>& b, const std::vector<double>& c)
        : m_(static_cast<int>(b.size())), n_(static_cast<int>(c.size())), N_(n_ + 1), B_(m_),
          D_(m_ + 2, std::vector<double>(n_ + 2, 0.0)) {
        for (int i = 0; i < m_; ++i) {
            for (int j = 0; j < n_; ++j) D_[i][j] = A[i][j];
        }
        for (int i = 0; i < m_; ++i) {
            B_[i] = n_ + i;
            D_[i][n_] = -1;
            D_[i][n_ + 1] = b[i];
        }
        for (int j = 0; j < n_; ++j) {
            N_[j] = j;
            D_[m_][j] = -c[j];
        }
        N_[n_] = -1;
        D_[m_ + 1][n_] = 1;
    }

    double solve(std::vector<double>& x) {
        int r = 0;
        for (int i = 1; i < m_; ++i) {
            if (D_[i][n_ + 1] < D_[r][n_ + 1]) r = i;
        }
        if (D_[r][n_ + 1] < -kEps) {
            pivot(r, n_);
            if (!run(2) || D_[m_ + 1][n_ + 1] < -kEps) return -std::numeric_limits<double>::infinity();
            for (int i = 0; i < m_; ++i) {
                if (B_[i] == -1) {
                    int s = 0;
                    for (int j = 1; j <= n_; ++j) {
                        if (better(D_[i][j], N_[j], D_[i][s], N_[s])) s = j;
                    }
                    pivot(i, s);
                }
            }
        }
        bool ok = run(1);
        x.assign(n_, 0.0);
        for (int i = 0; i < m_; ++i) {
            if (B_[i] < n_) x[B_[i]] = D_[i][n_ + 1];
        }
        return ok ? D_[m_][n_ + 1] : std::numeric_limits<double>::infinity();
    }

private:
    static constexpr double kEps = 1e-9;

    static bool better(double v, int id, double best_v, int best_id) {
        return std::make_pair(v, id) < std::make_pair(best_v, best_id);
    }

    void pivot(int r, int s) {
        double inv = 1.0 / D_[r][s];
        for (int i = 0; i < m_ + 2; ++i) {
            if (i != r && std::abs(D_[i][s]) > kEps) {
                double f = D_[i][s] * inv;
                for (int j = 0; j < n_ + 2; ++j) D_[i][j] -= D_[r][j] * f;
                D_[i][s] = D_[r][s] * f;
            }
        }
        for (int j = 0; j < n_ + 2; ++j) {
            if (j != s) D_[r][j] *= inv;
        }
        for (int i = 0; i < m_ + 2; ++i) {
            if (i != r) D_[i][s] *= -inv;
        }
        D_[r][s] = inv;
        std::swap(B_[r], N_[s]);
    }

    bool run(int phase) {
        int x = m_ + phase - 1;
        for (;;) {
            int s = -1;
            for (int j = 0; j <= n_; ++j) {
                if (N_[j] == -phase) continue;
                if (s == -1 || better(D_[x][j], N_[j], D_[x][s], N_[s])) s = j;
            }
            if (D_[x][s] >= -kEps) return true;
            int r = -1;
            for (int i = 0; i < m_; ++i) {
                if (D_[i][s] <= kEps) continue;
                if (r == -1 || std::make_pair(D_[i][n_ + 1] / D_[i][s], B_[i]) <
                                   std::make_pair(D_[r][n_ + 1] / D_[r][s], B_[r])) {
                    r = i;
                }
            }
            if (r == -1) return false;
            pivot(r, s);
        }
    }

    int m_, n_;
    std::vector<int> N_, B_;
    std::vector<std::vector<double>> D_;
};

/// Full padding LP with T = sum b + sum p substituted out. Returns the
/// minimal total padding (or +inf when infeasible).
inline double padding_lp_optimum(const std::vector<double>& b, const std::vector<double>& r, double g) {
    const std::size_t n = b.size();
    double B = 0;
    for (double x : b) B += x;
    std::vector<std::vector<double>> A;
    std::vector<double> rhs;
    for (std::size_t i = 0; i < n; ++i) {
        // b_i + p_i >= (r_i - g)(B + sum p)
        std::vector<double> lo(n, r[i] - g);
        lo[i] -= 1;
        A.push_back(lo);
        rhs.push_back(b[i] - (r[i] - g) * B);
        // b_i + p_i <= (r_i + g)(B + sum p)
        std::vector<double> hi(n, -(r[i] + g));
        hi[i] += 1;
        A.push_back(hi);
        rhs.push_back((r[i] + g) * B - b[i]);
    }
    std::vector<double> c(n, -1.0);
    std::vector<double> x;
    Simplex lp(A, rhs, c);
    double v = lp.solve(x);
    if (!std::isfinite(v)) return std::numeric_limits<double>::infinity();
    return -v;
}

} // namespace gevd::oracle
