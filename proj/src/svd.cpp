#include "fatlab/svd.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace fatlab {

namespace {

// One-sided Jacobi on a tall copy (m >= n): rotate column pairs until all are
// mutually orthogonal, then σ_j = ‖col_j‖ and U = A·diag(1/σ).
SvdResult svd_tall(const Tensor& a, int max_sweeps) {
    int64_t m = a.shape[0], n = a.shape[1];
    std::vector<double> w = a.data;           // working copy, row-major m×n
    std::vector<double> v(n * n, 0.0);        // right vectors, n×n
    for (int64_t i = 0; i < n; ++i) v[i * n + i] = 1.0;

    const double tol = 1e-15;
    int sweep = 0;
    for (; sweep < max_sweeps; ++sweep) {
        int64_t rotations = 0;
        for (int64_t i = 0; i + 1 < n; ++i) {
            for (int64_t j = i + 1; j < n; ++j) {
                double aii = 0.0, ajj = 0.0, aij = 0.0;
                for (int64_t r = 0; r < m; ++r) {
                    double x = w[r * n + i], y = w[r * n + j];
                    aii += x * x;
                    ajj += y * y;
                    aij += x * y;
                }
                if (std::fabs(aij) <= tol * std::sqrt(aii * ajj) || aij == 0.0) continue;
                ++rotations;
                double zeta = (ajj - aii) / (2.0 * aij);
                double t = (zeta >= 0.0 ? 1.0 : -1.0) /
                           (std::fabs(zeta) + std::sqrt(1.0 + zeta * zeta));
                double cs = 1.0 / std::sqrt(1.0 + t * t);
                double sn = cs * t;
                for (int64_t r = 0; r < m; ++r) {
                    double x = w[r * n + i], y = w[r * n + j];
                    w[r * n + i] = cs * x - sn * y;
                    w[r * n + j] = sn * x + cs * y;
                }
                for (int64_t r = 0; r < n; ++r) {
                    double x = v[r * n + i], y = v[r * n + j];
                    v[r * n + i] = cs * x - sn * y;
                    v[r * n + j] = sn * x + cs * y;
                }
            }
        }
        if (rotations == 0) break;
    }
    if (sweep == max_sweeps)
        throw InternalError("jacobi_svd: no convergence after " + std::to_string(max_sweeps) +
                            " sweeps on " + shape_to_string(a.shape));

    std::vector<double> sigma(n);
    for (int64_t j = 0; j < n; ++j) {
        double s = 0.0;
        for (int64_t r = 0; r < m; ++r) s += w[r * n + j] * w[r * n + j];
        sigma[j] = std::sqrt(s);
    }
    std::vector<int64_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](int64_t x, int64_t y) { return sigma[x] > sigma[y]; });

    SvdResult out;
    out.sweeps = sweep + 1;
    out.sigma.resize(n);
    out.u = Tensor({m, n});
    out.v = Tensor({n, n});
    for (int64_t j = 0; j < n; ++j) {
        int64_t src = order[j];
        out.sigma[j] = sigma[src];
        double inv = sigma[src] > 0.0 ? 1.0 / sigma[src] : 0.0;
        for (int64_t r = 0; r < m; ++r) out.u.data[r * n + j] = w[r * n + src] * inv;
        for (int64_t r = 0; r < n; ++r) out.v.data[r * n + j] = v[r * n + src];
    }
    return out;
}

Tensor transpose(const Tensor& a) {
    int64_t m = a.shape[0], n = a.shape[1];
    Tensor t({n, m});
    for (int64_t r = 0; r < m; ++r)
        for (int64_t c = 0; c < n; ++c) t.data[c * m + r] = a.data[r * n + c];
    return t;
}

}  // namespace

SvdResult jacobi_svd(const Tensor& a, int max_sweeps) {
    if (a.shape.size() != 2) throw ValueError("jacobi_svd: expected matrix, got " + a.shape_str());
    if (a.shape[0] >= a.shape[1]) return svd_tall(a, max_sweeps);
    SvdResult r = svd_tall(transpose(a), max_sweeps);
    std::swap(r.u, r.v);
    return r;
}

double nuclear_norm(const Tensor& a) {
    SvdResult r = jacobi_svd(a);
    double s = 0.0;
    for (double x : r.sigma) s += x;
    return s;
}

Tensor nuclear_subgradient(const Tensor& a, double cutoff) {
    SvdResult r = jacobi_svd(a);
    int64_t m = a.shape[0], n = a.shape[1];
    int64_t p = (int64_t)r.sigma.size();
    double smax = r.sigma.empty() ? 0.0 : r.sigma[0];
    Tensor g({m, n});
    for (int64_t k = 0; k < p; ++k) {
        if (r.sigma[k] <= cutoff * smax) break;
        for (int64_t i = 0; i < m; ++i) {
            double uk = r.u.data[i * p + k];
            for (int64_t j = 0; j < n; ++j) g.data[i * n + j] += uk * r.v.data[j * p + k];
        }
    }
    return g;
}

}  // namespace fatlab
