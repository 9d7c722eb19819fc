#pragma once

#include <array>
#include <cassert>
#include <span>

#include "ahlp/core.hpp"

namespace ahlp {

/// Symmetric dense matrix; full square storage, row-major, lower triangle authoritative.
struct DenseSymMatrix {
    index_t order = 0;
    std::vector<double> data; // order*order

    DenseSymMatrix() = default;
    explicit DenseSymMatrix(index_t n) : order(n), data(static_cast<size_t>(n) * static_cast<size_t>(n), 0.0) {}

    double& at(index_t i, index_t j) { return data[static_cast<size_t>(i) * static_cast<size_t>(order) + static_cast<size_t>(j)]; }
    double at(index_t i, index_t j) const { return data[static_cast<size_t>(i) * static_cast<size_t>(order) + static_cast<size_t>(j)]; }

    /// Mirror the lower triangle into the upper one.
    void symmetrize() {
        for (index_t i = 0; i < order; ++i)
            for (index_t j = 0; j < i; ++j) at(j, i) = at(i, j);
    }

    /// y += alpha * M x (uses the lower triangle symmetrically).
    void multiply_add(std::span<const double> x, std::span<double> y, double alpha = 1.0) const {
        for (index_t i = 0; i < order; ++i) {
            double s = at(i, i) * x[static_cast<size_t>(i)];
            for (index_t j = 0; j < i; ++j) {
                s += at(i, j) * x[static_cast<size_t>(j)];
                y[static_cast<size_t>(j)] += alpha * at(i, j) * x[static_cast<size_t>(i)];
            }
            y[static_cast<size_t>(i)] += alpha * s;
        }
    }
};

struct Inertia {
    index_t positive = 0;
    index_t negative = 0;
    index_t zero = 0;

    friend bool operator==(const Inertia&, const Inertia&) = default;
    Inertia& operator+=(const Inertia& o) {
        positive += o.positive;
        negative += o.negative;
        zero += o.zero;
        return *this;
    }
};

/// L D L^T factors with 1x1/2x2 pivoting, LAPACK sytf2 layout (lower).
class DenseFactorization {
public:
    DenseFactorization() = default;

    index_t order() const { return n_; }
    const Inertia& inertia() const { return inertia_; }
    index_t num_2x2_pivots() const { return two_by_two_; }

    static DenseFactorization compute(const DenseSymMatrix& m) {
        DenseFactorization f;
        f.n_ = m.order;
        f.a_ = m.data;
        f.ipiv_.assign(static_cast<size_t>(f.n_), 0);
        f.factorize();
        return f;
    }

    void solve_in_place(std::span<double> b) const {
        assert(static_cast<index_t>(b.size()) == n_);
        if (n_ == 0) return;
        forward(b);
        backward(b);
    }

    std::vector<double> solve(std::span<const double> rhs) const {
        std::vector<double> b(rhs.begin(), rhs.end());
        solve_in_place(b);
        return b;
    }

private:
    index_t n_ = 0;
    std::vector<double> a_;
    std::vector<index_t> ipiv_; // >=0: 1x1 pivot swapped with ipiv[k]; <0: 2x2 block, partner -(ipiv[k]+1)
    Inertia inertia_;
    index_t two_by_two_ = 0;

    double& a(index_t i, index_t j) { return a_[static_cast<size_t>(i) * static_cast<size_t>(n_) + static_cast<size_t>(j)]; }
    double a(index_t i, index_t j) const { return a_[static_cast<size_t>(i) * static_cast<size_t>(n_) + static_cast<size_t>(j)]; }

    void swap_trailing(index_t kk, index_t kp) {
        // symmetric interchange of rows/cols kk < kp inside the trailing block
        for (index_t i = kp + 1; i < n_; ++i) std::swap(a(i, kk), a(i, kp));
        for (index_t j = kk + 1; j < kp; ++j) std::swap(a(j, kk), a(kp, j));
        std::swap(a(kk, kk), a(kp, kp));
    }

    void factorize() {
        const double alpha = (1.0 + std::sqrt(17.0)) / 8.0;
        index_t k = 0;
        while (k < n_) {
            index_t kstep = 1;
            index_t kp = k;
            const double absakk = std::abs(a(k, k));
            index_t imax = k;
            double colmax = 0.0;
            for (index_t i = k + 1; i < n_; ++i) {
                const double v = std::abs(a(i, k));
                if (v > colmax) {
                    colmax = v;
                    imax = i;
                }
            }
            if (std::max(absakk, colmax) == 0.0) throw singular_error(k, "dense factorization: zero pivot column");

            if (absakk >= alpha * colmax) {
                kp = k;
            } else {
                double rowmax = 0.0;
                for (index_t j = k; j < imax; ++j) rowmax = std::max(rowmax, std::abs(a(imax, j)));
                for (index_t i = imax + 1; i < n_; ++i) rowmax = std::max(rowmax, std::abs(a(i, imax)));
                if (absakk >= alpha * colmax * (colmax / rowmax)) {
                    kp = k;
                } else if (std::abs(a(imax, imax)) >= alpha * rowmax) {
                    kp = imax;
                } else {
                    kp = imax;
                    kstep = 2;
                }
            }

            const index_t kk = k + kstep - 1;
            if (kp != kk) {
                swap_trailing(kk, kp);
                if (kstep == 2) std::swap(a(k + 1, k), a(kp, k));
            }

            if (kstep == 1) {
                const double d = a(k, k);
                if (d == 0.0) throw singular_error(k, "dense factorization: zero 1x1 pivot");
                const double d_inv = 1.0 / d;
                for (index_t j = k + 1; j < n_; ++j) {
                    const double w = d_inv * a(j, k);
                    if (a(j, k) != 0.0)
                        for (index_t i = j; i < n_; ++i) a(i, j) -= a(i, k) * w;
                }
                for (index_t i = k + 1; i < n_; ++i) a(i, k) *= d_inv;
                if (d > 0.0)
                    ++inertia_.positive;
                else
                    ++inertia_.negative;
                ipiv_[static_cast<size_t>(k)] = kp;
                k += 1;
            } else {
                // 2x2 pivot on (k, k+1)
                if (k < n_ - 2) {
                    double d21 = a(k + 1, k);
                    const double d11 = a(k + 1, k + 1) / d21;
                    const double d22 = a(k, k) / d21;
                    const double t = 1.0 / (d11 * d22 - 1.0);
                    d21 = t / d21;
                    for (index_t j = k + 2; j < n_; ++j) {
                        const double wk = d21 * (d11 * a(j, k) - a(j, k + 1));
                        const double wkp1 = d21 * (d22 * a(j, k + 1) - a(j, k));
                        for (index_t i = j; i < n_; ++i) a(i, j) -= a(i, k) * wk + a(i, k + 1) * wkp1;
                        a(j, k) = wk;
                        a(j, k + 1) = wkp1;
                    }
                }
                const double det = a(k, k) * a(k + 1, k + 1) - a(k + 1, k) * a(k + 1, k);
                if (det < 0.0) {
                    ++inertia_.positive;
                    ++inertia_.negative;
                } else if (a(k, k) + a(k + 1, k + 1) > 0.0) {
                    inertia_.positive += 2;
                } else {
                    inertia_.negative += 2;
                }
                ++two_by_two_;
                ipiv_[static_cast<size_t>(k)] = -(kp + 1);
                ipiv_[static_cast<size_t>(k + 1)] = -(kp + 1);
                k += 2;
            }
        }
    }

    void forward(std::span<double> b) const {
        index_t k = 0;
        while (k < n_) {
            if (ipiv_[static_cast<size_t>(k)] >= 0) {
                const index_t kp = ipiv_[static_cast<size_t>(k)];
                if (kp != k) std::swap(b[static_cast<size_t>(k)], b[static_cast<size_t>(kp)]);
                const double bk = b[static_cast<size_t>(k)];
                for (index_t i = k + 1; i < n_; ++i) b[static_cast<size_t>(i)] -= a(i, k) * bk;
                b[static_cast<size_t>(k)] = bk / a(k, k);
                k += 1;
            } else {
                const index_t kp = -(ipiv_[static_cast<size_t>(k)] + 1);
                if (kp != k + 1) std::swap(b[static_cast<size_t>(k + 1)], b[static_cast<size_t>(kp)]);
                const double bk = b[static_cast<size_t>(k)];
                const double bk1 = b[static_cast<size_t>(k + 1)];
                for (index_t i = k + 2; i < n_; ++i)
                    b[static_cast<size_t>(i)] -= a(i, k) * bk + a(i, k + 1) * bk1;
                const double akm1k = a(k + 1, k);
                const double akm1 = a(k, k) / akm1k;
                const double ak = a(k + 1, k + 1) / akm1k;
                const double denom = akm1 * ak - 1.0;
                const double bkm1 = bk / akm1k;
                const double bkk = bk1 / akm1k;
                b[static_cast<size_t>(k)] = (ak * bkm1 - bkk) / denom;
                b[static_cast<size_t>(k + 1)] = (akm1 * bkk - bkm1) / denom;
                k += 2;
            }
        }
    }

    void backward(std::span<double> b) const {
        index_t k = n_ - 1;
        while (k >= 0) {
            if (ipiv_[static_cast<size_t>(k)] >= 0) {
                double s = b[static_cast<size_t>(k)];
                for (index_t i = k + 1; i < n_; ++i) s -= a(i, k) * b[static_cast<size_t>(i)];
                b[static_cast<size_t>(k)] = s;
                const index_t kp = ipiv_[static_cast<size_t>(k)];
                if (kp != k) std::swap(b[static_cast<size_t>(k)], b[static_cast<size_t>(kp)]);
                k -= 1;
            } else {
                double sk = b[static_cast<size_t>(k)];
                double skm1 = b[static_cast<size_t>(k - 1)];
                for (index_t i = k + 1; i < n_; ++i) {
                    sk -= a(i, k) * b[static_cast<size_t>(i)];
                    skm1 -= a(i, k - 1) * b[static_cast<size_t>(i)];
                }
                b[static_cast<size_t>(k)] = sk;
                b[static_cast<size_t>(k - 1)] = skm1;
                const index_t kp = -(ipiv_[static_cast<size_t>(k)] + 1);
                if (kp != k) std::swap(b[static_cast<size_t>(k)], b[static_cast<size_t>(kp)]);
                k -= 2;
            }
        }
    }
};

inline DenseFactorization dense_factor(const DenseSymMatrix& m) { return DenseFactorization::compute(m); }

inline std::vector<double> dense_solve(const DenseFactorization& f, std::span<const double> b) { return f.solve(b); }

} // namespace ahlp
