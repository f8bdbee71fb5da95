#include "fatlab/kernels.hpp"

#include <cmath>
#include <vector>

#ifdef FATLAB_HAVE_OPENMP
#include <omp.h>
#endif

namespace fatlab {
namespace kernels {

namespace {

Backend g_backend =
#ifdef FATLAB_HAVE_OPENMP
    Backend::openmp;
#else
    Backend::serial;
#endif
Precision g_precision = Precision::f64;

// Per-row primitives shared by the serial reference and the OpenMP loops.
// Each output element is accumulated in a fixed order (k ascending), which is
// what makes the two backends bit-identical.

template <typename T>
inline void product_row_nn(const T* arow, const T* B, T* crow, int64_t k, int64_t n) {
    for (int64_t j = 0; j < n; ++j) crow[j] = T(0);
    for (int64_t p = 0; p < k; ++p) {
        T a = arow[p];
        const T* brow = B + p * n;
        for (int64_t j = 0; j < n; ++j) crow[j] += a * brow[j];
    }
}

template <typename T>
inline void product_row_nt(const T* arow, const T* B, T* crow, int64_t k, int64_t n) {
    for (int64_t j = 0; j < n; ++j) {
        const T* brow = B + j * k;
        T s = T(0);
        for (int64_t p = 0; p < k; ++p) s += arow[p] * brow[p];
        crow[j] = s;
    }
}

// row p of A^T * B: Σ_m A[m,p] * B[m,:]
template <typename T>
inline void product_row_tn(const T* A, const T* B, T* crow, int64_t m, int64_t k, int64_t n, int64_t p) {
    for (int64_t j = 0; j < n; ++j) crow[j] = T(0);
    for (int64_t r = 0; r < m; ++r) {
        T a = A[r * k + p];
        const T* brow = B + r * n;
        for (int64_t j = 0; j < n; ++j) crow[j] += a * brow[j];
    }
}

template <typename T>
inline void store_row(const T* crow, double* Crow, int64_t n, bool accumulate) {
    if (accumulate)
        for (int64_t j = 0; j < n; ++j) Crow[j] += (double)crow[j];
    else
        for (int64_t j = 0; j < n; ++j) Crow[j] = (double)crow[j];
}

inline double softmax_ce_row(const double* z, int32_t label, double* p, int64_t cols) {
    double m = z[0];
    for (int64_t c = 1; c < cols; ++c)
        if (z[c] > m) m = z[c];
    double s = 0.0;
    for (int64_t c = 0; c < cols; ++c) {
        double e = std::exp(z[c] - m);
        p[c] = e;
        s += e;
    }
    double inv = 1.0 / s;
    for (int64_t c = 0; c < cols; ++c) p[c] *= inv;
    return (m + std::log(s)) - z[label];
}

template <typename T>
void mm_nn_serial(const T* A, const T* B, double* C, int64_t m, int64_t k, int64_t n, bool accumulate) {
    std::vector<T> crow(n);
    for (int64_t i = 0; i < m; ++i) {
        product_row_nn(A + i * k, B, crow.data(), k, n);
        store_row(crow.data(), C + i * n, n, accumulate);
    }
}

template <typename T>
void mm_nn_omp(const T* A, const T* B, double* C, int64_t m, int64_t k, int64_t n, bool accumulate) {
#pragma omp parallel
    {
        std::vector<T> crow(n);
#pragma omp for schedule(static)
        for (int64_t i = 0; i < m; ++i) {
            product_row_nn(A + i * k, B, crow.data(), k, n);
            store_row(crow.data(), C + i * n, n, accumulate);
        }
    }
}

template <typename T>
void mm_nt_serial(const T* A, const T* B, double* C, int64_t m, int64_t k, int64_t n, bool accumulate) {
    std::vector<T> crow(n);
    for (int64_t i = 0; i < m; ++i) {
        product_row_nt(A + i * k, B, crow.data(), k, n);
        store_row(crow.data(), C + i * n, n, accumulate);
    }
}

template <typename T>
void mm_nt_omp(const T* A, const T* B, double* C, int64_t m, int64_t k, int64_t n, bool accumulate) {
#pragma omp parallel
    {
        std::vector<T> crow(n);
#pragma omp for schedule(static)
        for (int64_t i = 0; i < m; ++i) {
            product_row_nt(A + i * k, B, crow.data(), k, n);
            store_row(crow.data(), C + i * n, n, accumulate);
        }
    }
}

template <typename T>
void mm_tn_serial(const T* A, const T* B, double* C, int64_t m, int64_t k, int64_t n, bool accumulate) {
    std::vector<T> crow(n);
    for (int64_t p = 0; p < k; ++p) {
        product_row_tn(A, B, crow.data(), m, k, n, p);
        store_row(crow.data(), C + p * n, n, accumulate);
    }
}

template <typename T>
void mm_tn_omp(const T* A, const T* B, double* C, int64_t m, int64_t k, int64_t n, bool accumulate) {
#pragma omp parallel
    {
        std::vector<T> crow(n);
#pragma omp for schedule(static)
        for (int64_t p = 0; p < k; ++p) {
            product_row_tn(A, B, crow.data(), m, k, n, p);
            store_row(crow.data(), C + p * n, n, accumulate);
        }
    }
}

std::vector<float> to_f32(const double* src, int64_t n) {
    std::vector<float> out(n);
    for (int64_t i = 0; i < n; ++i) out[i] = (float)src[i];
    return out;
}

bool use_omp() { return g_backend == Backend::openmp; }

}  // namespace

void set_backend(Backend b) { g_backend = b; }
Backend backend() { return g_backend; }
void set_precision(Precision p) { g_precision = p; }
Precision precision() { return g_precision; }

int max_threads() {
#ifdef FATLAB_HAVE_OPENMP
    return omp_get_max_threads();
#else
    return 1;
#endif
}

void matmul_nn(const double* A, const double* B, double* C, int64_t m, int64_t k, int64_t n, bool accumulate) {
    if (g_precision == Precision::f32) {
        auto af = to_f32(A, m * k);
        auto bf = to_f32(B, k * n);
        if (use_omp()) mm_nn_omp<float>(af.data(), bf.data(), C, m, k, n, accumulate);
        else mm_nn_serial<float>(af.data(), bf.data(), C, m, k, n, accumulate);
        return;
    }
    if (use_omp()) mm_nn_omp<double>(A, B, C, m, k, n, accumulate);
    else mm_nn_serial<double>(A, B, C, m, k, n, accumulate);
}

void matmul_nt(const double* A, const double* B, double* C, int64_t m, int64_t k, int64_t n, bool accumulate) {
    if (g_precision == Precision::f32) {
        auto af = to_f32(A, m * k);
        auto bf = to_f32(B, n * k);
        if (use_omp()) mm_nt_omp<float>(af.data(), bf.data(), C, m, k, n, accumulate);
        else mm_nt_serial<float>(af.data(), bf.data(), C, m, k, n, accumulate);
        return;
    }
    if (use_omp()) mm_nt_omp<double>(A, B, C, m, k, n, accumulate);
    else mm_nt_serial<double>(A, B, C, m, k, n, accumulate);
}

void matmul_tn(const double* A, const double* B, double* C, int64_t m, int64_t k, int64_t n, bool accumulate) {
    if (g_precision == Precision::f32) {
        auto af = to_f32(A, m * k);
        auto bf = to_f32(B, m * n);
        if (use_omp()) mm_tn_omp<float>(af.data(), bf.data(), C, m, k, n, accumulate);
        else mm_tn_serial<float>(af.data(), bf.data(), C, m, k, n, accumulate);
        return;
    }
    if (use_omp()) mm_tn_omp<double>(A, B, C, m, k, n, accumulate);
    else mm_tn_serial<double>(A, B, C, m, k, n, accumulate);
}

#define FATLAB_EW_LOOP(expr)                       \
    if (use_omp()) {                               \
        _Pragma("omp parallel for schedule(static)") \
        for (int64_t i = 0; i < n; ++i) expr;      \
    } else {                                       \
        for (int64_t i = 0; i < n; ++i) expr;      \
    }

void ew_add(const double* a, const double* b, double* out, int64_t n) { FATLAB_EW_LOOP(out[i] = a[i] + b[i]) }
void ew_sub(const double* a, const double* b, double* out, int64_t n) { FATLAB_EW_LOOP(out[i] = a[i] - b[i]) }
void ew_mul(const double* a, const double* b, double* out, int64_t n) { FATLAB_EW_LOOP(out[i] = a[i] * b[i]) }
void relu(const double* x, double* y, int64_t n) { FATLAB_EW_LOOP(y[i] = x[i] > 0.0 ? x[i] : 0.0) }
void relu_backward(const double* x, const double* gy, double* gx, int64_t n) {
    FATLAB_EW_LOOP(gx[i] += x[i] > 0.0 ? gy[i] : 0.0)
}
void acc(const double* g, double* out, int64_t n) { FATLAB_EW_LOOP(out[i] += g[i]) }
void acc_scaled(const double* g, double s, double* out, int64_t n) { FATLAB_EW_LOOP(out[i] += s * g[i]) }
void acc_mul(const double* g, const double* h, double* out, int64_t n) { FATLAB_EW_LOOP(out[i] += g[i] * h[i]) }

void bias_add(const double* x, const double* b, double* y, int64_t rows, int64_t cols) {
    if (use_omp()) {
#pragma omp parallel for schedule(static)
        for (int64_t r = 0; r < rows; ++r)
            for (int64_t c = 0; c < cols; ++c) y[r * cols + c] = x[r * cols + c] + b[c];
    } else {
        for (int64_t r = 0; r < rows; ++r)
            for (int64_t c = 0; c < cols; ++c) y[r * cols + c] = x[r * cols + c] + b[c];
    }
}

void col_sum_acc(const double* g, double* gb, int64_t rows, int64_t cols) {
    if (use_omp()) {
#pragma omp parallel for schedule(static)
        for (int64_t c = 0; c < cols; ++c) {
            double s = 0.0;
            for (int64_t r = 0; r < rows; ++r) s += g[r * cols + c];
            gb[c] += s;
        }
    } else {
        for (int64_t c = 0; c < cols; ++c) {
            double s = 0.0;
            for (int64_t r = 0; r < rows; ++r) s += g[r * cols + c];
            gb[c] += s;
        }
    }
}

void softmax_ce_rows(const double* z, const int32_t* labels, double* probs, double* row_loss,
                     int64_t rows, int64_t cols) {
    if (use_omp()) {
#pragma omp parallel for schedule(static)
        for (int64_t r = 0; r < rows; ++r)
            row_loss[r] = softmax_ce_row(z + r * cols, labels[r], probs + r * cols, cols);
    } else {
        for (int64_t r = 0; r < rows; ++r)
            row_loss[r] = softmax_ce_row(z + r * cols, labels[r], probs + r * cols, cols);
    }
}

void softmax_ce_backward(const double* probs, const int32_t* labels, double gscale, double* gz,
                         int64_t rows, int64_t cols) {
    if (use_omp()) {
#pragma omp parallel for schedule(static)
        for (int64_t r = 0; r < rows; ++r) {
            for (int64_t c = 0; c < cols; ++c) gz[r * cols + c] += probs[r * cols + c] * gscale;
            gz[r * cols + labels[r]] -= gscale;
        }
    } else {
        for (int64_t r = 0; r < rows; ++r) {
            for (int64_t c = 0; c < cols; ++c) gz[r * cols + c] += probs[r * cols + c] * gscale;
            gz[r * cols + labels[r]] -= gscale;
        }
    }
}

namespace serial_ref {

void matmul_nn(const double* A, const double* B, double* C, int64_t m, int64_t k, int64_t n, bool accumulate) {
    mm_nn_serial<double>(A, B, C, m, k, n, accumulate);
}
void matmul_nt(const double* A, const double* B, double* C, int64_t m, int64_t k, int64_t n, bool accumulate) {
    mm_nt_serial<double>(A, B, C, m, k, n, accumulate);
}
void matmul_tn(const double* A, const double* B, double* C, int64_t m, int64_t k, int64_t n, bool accumulate) {
    mm_tn_serial<double>(A, B, C, m, k, n, accumulate);
}
void ew_add(const double* a, const double* b, double* out, int64_t n) {
    for (int64_t i = 0; i < n; ++i) out[i] = a[i] + b[i];
}
void ew_sub(const double* a, const double* b, double* out, int64_t n) {
    for (int64_t i = 0; i < n; ++i) out[i] = a[i] - b[i];
}
void ew_mul(const double* a, const double* b, double* out, int64_t n) {
    for (int64_t i = 0; i < n; ++i) out[i] = a[i] * b[i];
}
void relu(const double* x, double* y, int64_t n) {
    for (int64_t i = 0; i < n; ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
}
void relu_backward(const double* x, const double* gy, double* gx, int64_t n) {
    for (int64_t i = 0; i < n; ++i) gx[i] += x[i] > 0.0 ? gy[i] : 0.0;
}
void acc(const double* g, double* out, int64_t n) {
    for (int64_t i = 0; i < n; ++i) out[i] += g[i];
}
void acc_scaled(const double* g, double s, double* out, int64_t n) {
    for (int64_t i = 0; i < n; ++i) out[i] += s * g[i];
}
void acc_mul(const double* g, const double* h, double* out, int64_t n) {
    for (int64_t i = 0; i < n; ++i) out[i] += g[i] * h[i];
}
void bias_add(const double* x, const double* b, double* y, int64_t rows, int64_t cols) {
    for (int64_t r = 0; r < rows; ++r)
        for (int64_t c = 0; c < cols; ++c) y[r * cols + c] = x[r * cols + c] + b[c];
}
void col_sum_acc(const double* g, double* gb, int64_t rows, int64_t cols) {
    for (int64_t c = 0; c < cols; ++c) {
        double s = 0.0;
        for (int64_t r = 0; r < rows; ++r) s += g[r * cols + c];
        gb[c] += s;
    }
}
void softmax_ce_rows(const double* z, const int32_t* labels, double* probs, double* row_loss,
                     int64_t rows, int64_t cols) {
    for (int64_t r = 0; r < rows; ++r)
        row_loss[r] = softmax_ce_row(z + r * cols, labels[r], probs + r * cols, cols);
}
void softmax_ce_backward(const double* probs, const int32_t* labels, double gscale, double* gz,
                         int64_t rows, int64_t cols) {
    for (int64_t r = 0; r < rows; ++r) {
        for (int64_t c = 0; c < cols; ++c) gz[r * cols + c] += probs[r * cols + c] * gscale;
        gz[r * cols + labels[r]] -= gscale;
    }
}

}  // namespace serial_ref

}  // namespace kernels
}  // namespace fatlab
