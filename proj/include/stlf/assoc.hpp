#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "stlf/error.hpp"
#include "stlf/rng.hpp"

namespace stlf {

// ---------------------------------------------------------------------------
// special functions
// ---------------------------------------------------------------------------

// Recurrence down to x >= 6, then the Bernoulli asymptotic series. Accurate
// to ~1e-10 for arguments >= 1.
inline double digamma(double x) {
    if (!(x > 0.0))
        throw NumericError("digamma requires a positive argument");
    double r = 0.0;
    while (x < 6.0) {
        r -= 1.0 / x;
        x += 1.0;
    }
    const double inv = 1.0 / x;
    const double inv2 = inv * inv;
    r += std::log(x) - 0.5 * inv -
         inv2 * (1.0 / 12.0 -
                 inv2 * (1.0 / 120.0 -
                         inv2 * (1.0 / 252.0 - inv2 * (1.0 / 240.0 - inv2 * (1.0 / 132.0)))));
    return r;
}

namespace detail {

// Continued fraction for the regularized incomplete beta (modified Lentz).
inline double betacf(double a, double b, double x) {
    constexpr int max_iter = 300;
    constexpr double eps = 3e-16;
    constexpr double fpmin = 1e-300;
    const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::abs(d) < fpmin) d = fpmin;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= max_iter; ++m) {
        const int m2 = 2 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < fpmin) d = fpmin;
        c = 1.0 + aa / c;
        if (std::abs(c) < fpmin) c = fpmin;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < fpmin) d = fpmin;
        c = 1.0 + aa / c;
        if (std::abs(c) < fpmin) c = fpmin;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::abs(del - 1.0) < eps) break;
    }
    return h;
}

} // namespace detail

inline double incomplete_beta(double a, double b, double x) {
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    const double lnbt = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                        a * std::log(x) + b * std::log1p(-x);
    const double bt = std::exp(lnbt);
    if (x < (a + 1.0) / (a + b + 2.0))
        return bt * detail::betacf(a, b, x) / a;
    return 1.0 - bt * detail::betacf(b, a, 1.0 - x) / b;
}

// Two-sided p-value of a Student-t statistic.
inline double student_t_two_sided_p(double t, double df) {
    if (df <= 0.0)
        throw NumericError("student_t_two_sided_p: df must be positive");
    if (!std::isfinite(t)) return 0.0;
    return incomplete_beta(0.5 * df, 0.5, df / (df + t * t));
}

// ---------------------------------------------------------------------------
// correlation kernels
// ---------------------------------------------------------------------------

struct CiResult {
    double statistic;  // partial correlation in [-1, 1]
    double p_value;    // two-sided, in [0, 1]
    int sample_size;
    int cond_dim;
};

namespace detail {

inline void check_not_constant(const Eigen::VectorXd& v, const char* what) {
    if (v.size() == 0 || v.maxCoeff() == v.minCoeff())
        throw NumericError(std::string("degenerate (constant) input: ") + what);
}

inline Eigen::VectorXd zscore(const Eigen::VectorXd& v, const char* what) {
    check_not_constant(v, what);
    const double mu = v.mean();
    const double sd = std::sqrt((v.array() - mu).square().sum() / static_cast<double>(v.size()));
    return ((v.array() - mu) / sd).matrix();
}

inline double pearson_centered(const Eigen::VectorXd& xc, const Eigen::VectorXd& yc) {
    const double sx = xc.squaredNorm(), sy = yc.squaredNorm();
    if (sx <= 0.0 || sy <= 0.0)
        throw NumericError("degenerate (constant) input: pearson");
    return std::clamp(xc.dot(yc) / std::sqrt(sx * sy), -1.0, 1.0);
}

struct ParcorrOptions {
    // Drop linearly dependent conditioning columns instead of erroring, and
    // treat a fully-explained (zero-residual-variance) variable as
    // independent. Used inside graph search where deterministic or collinear
    // conditions can legitimately arise.
    bool tolerant = false;
};

inline CiResult parcorr_impl(const Eigen::VectorXd& x, const Eigen::VectorXd& y,
                             const Eigen::MatrixXd& z, const ParcorrOptions& opts) {
    const Eigen::Index n = x.size();
    if (y.size() != n || (z.size() != 0 && z.rows() != n))
        throw NumericError("parcorr_test: length mismatch");
    const Eigen::Index d = z.cols();
    if (n < d + 4)
        throw NumericError("parcorr_test: need at least |Z|+4 samples, got " +
                           std::to_string(n));

    const Eigen::VectorXd xs = zscore(x, "x");
    const Eigen::VectorXd ys = zscore(y, "y");

    Eigen::VectorXd rx = xs, ry = ys;
    Eigen::Index rank_used = 0;
    if (d > 0) {
        Eigen::MatrixXd design(n, d + 1);
        design.col(0).setOnes();
        for (Eigen::Index j = 0; j < d; ++j) {
            const Eigen::VectorXd col = z.col(j);
            if (col.maxCoeff() == col.minCoeff()) {
                if (!opts.tolerant)
                    throw NumericError("parcorr_test: rank-deficient conditioning matrix "
                                       "(constant column)");
                design.col(j + 1).setZero();
            } else {
                design.col(j + 1) = zscore(col, "Z column");
            }
        }
        Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
        const Eigen::Index rank = qr.rank();
        if (!opts.tolerant && rank < d + 1)
            throw NumericError("parcorr_test: rank-deficient conditioning matrix");
        rx = xs - design * qr.solve(xs);
        ry = ys - design * qr.solve(ys);
        rank_used = std::max<Eigen::Index>(rank - 1, 0); // intercept excluded
    }

    const double res_scale = 1e-10 * std::sqrt(static_cast<double>(n));
    if (rx.norm() < res_scale || ry.norm() < res_scale) {
        if (opts.tolerant)
            return CiResult{0.0, 1.0, static_cast<int>(n), static_cast<int>(d)};
        throw NumericError("parcorr_test: residual variance vanished");
    }

    const Eigen::VectorXd rxc = (rx.array() - rx.mean()).matrix();
    const Eigen::VectorXd ryc = (ry.array() - ry.mean()).matrix();
    const double r = pearson_centered(rxc, ryc);
    const double df =
        static_cast<double>(n) - static_cast<double>(opts.tolerant ? rank_used : d) - 2.0;
    double p;
    if (std::abs(r) >= 1.0) {
        p = 0.0;
    } else {
        const double t = r * std::sqrt(df / (1.0 - r * r));
        p = student_t_two_sided_p(t, df);
    }
    return CiResult{r, p, static_cast<int>(n), static_cast<int>(d)};
}

} // namespace detail

// Product-moment correlation. Requires equal lengths >= 3 and non-constant
// inputs.
inline double pearson(const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
    if (x.size() != y.size())
        throw NumericError("pearson: length mismatch");
    if (x.size() < 3)
        throw NumericError("pearson: need at least 3 samples");
    detail::check_not_constant(x, "x");
    detail::check_not_constant(y, "y");
    const Eigen::VectorXd xc = (x.array() - x.mean()).matrix();
    const Eigen::VectorXd yc = (y.array() - y.mean()).matrix();
    return detail::pearson_centered(xc, yc);
}

// Partial correlation of x and y given the columns of z: both variables are
// residualized on [1, z] by least squares, the residuals are correlated, and
// the statistic is mapped to a two-sided p-value through the Student-t
// transform with n - |z| - 2 degrees of freedom. Inputs are z-scored
// internally.
inline CiResult parcorr_test(const Eigen::VectorXd& x, const Eigen::VectorXd& y,
                             const Eigen::MatrixXd& z) {
    return detail::parcorr_impl(x, y, z, {});
}

// Kraskov-Stoegbauer-Grassberger estimator (variant 1) with max-norm
// neighborhoods:
//   MI = psi(k) + psi(n) - < psi(n_x + 1) + psi(n_y + 1) >
// Inputs are z-scored and de-tied with deterministic jitter of amplitude
// 1e-10 (fixed seed), so the estimate is reproducible for a given input
// order. Clamped below at 0.
inline double knn_mutual_information(const Eigen::VectorXd& x, const Eigen::VectorXd& y,
                                     int k = 3) {
    const Eigen::Index n = x.size();
    if (y.size() != n)
        throw NumericError("knn_mutual_information: length mismatch");
    if (k < 1 || n <= k)
        throw NumericError("knn_mutual_information: need n > k >= 1, got n=" +
                           std::to_string(n) + " k=" + std::to_string(k));

    Eigen::VectorXd xs = detail::zscore(x, "x");
    Eigen::VectorXd ys = detail::zscore(y, "y");
    Rng jitter(derive_seed(0x6b73675f6a697474ULL, "ksg-jitter"));
    for (Eigen::Index i = 0; i < n; ++i) xs(i) += 1e-10 * jitter.uniform(-1.0, 1.0);
    for (Eigen::Index i = 0; i < n; ++i) ys(i) += 1e-10 * jitter.uniform(-1.0, 1.0);

    std::vector<double> dist(static_cast<std::size_t>(n - 1));
    double psi_sum = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        std::size_t m = 0;
        for (Eigen::Index j = 0; j < n; ++j) {
            if (j == i) continue;
            dist[m++] = std::max(std::abs(xs(i) - xs(j)), std::abs(ys(i) - ys(j)));
        }
        std::nth_element(dist.begin(), dist.begin() + (k - 1), dist.end());
        const double eps = dist[static_cast<std::size_t>(k - 1)];
        int nx = 0, ny = 0;
        for (Eigen::Index j = 0; j < n; ++j) {
            if (j == i) continue;
            if (std::abs(xs(i) - xs(j)) < eps) ++nx;
            if (std::abs(ys(i) - ys(j)) < eps) ++ny;
        }
        psi_sum += digamma(nx + 1.0) + digamma(ny + 1.0);
    }
    const double mi = digamma(static_cast<double>(k)) + digamma(static_cast<double>(n)) -
                      psi_sum / static_cast<double>(n);
    return std::max(mi, 0.0);
}

} // namespace stlf
