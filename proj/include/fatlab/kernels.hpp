#pragma once

#include <cstdint>

namespace fatlab {
namespace kernels {

// Hot loops run either on the OpenMP backend or on a plain serial reference.
// Both share the same per-row arithmetic, so outputs are bit-identical for
// any thread count; the reference exists to check exactly that (and to race
// against in the benchmark target).
enum class Backend { serial, openmp };

// f32 narrows the matrix-product compute path to float (inputs converted,
// accumulation in float, result widened back to double storage). Everything
// else stays double; tensor storage is always double.
enum class Precision { f64, f32 };

void set_backend(Backend b);
Backend backend();
void set_precision(Precision p);
Precision precision();
int max_threads();

// C[m,n] (+)= A[m,k] * B[k,n]
void matmul_nn(const double* A, const double* B, double* C, int64_t m, int64_t k, int64_t n, bool accumulate);
// C[m,n] (+)= A[m,k] * B[n,k]^T
void matmul_nt(const double* A, const double* B, double* C, int64_t m, int64_t k, int64_t n, bool accumulate);
// C[k,n] (+)= A[m,k]^T * B[m,n]
void matmul_tn(const double* A, const double* B, double* C, int64_t m, int64_t k, int64_t n, bool accumulate);

void ew_add(const double* a, const double* b, double* out, int64_t n);
void ew_sub(const double* a, const double* b, double* out, int64_t n);
void ew_mul(const double* a, const double* b, double* out, int64_t n);
void relu(const double* x, double* y, int64_t n);
void relu_backward(const double* x, const double* gy, double* gx, int64_t n);  // gx += gy * (x>0)
void acc(const double* g, double* out, int64_t n);                             // out += g
void acc_scaled(const double* g, double s, double* out, int64_t n);            // out += s*g
void acc_mul(const double* g, const double* h, double* out, int64_t n);        // out += g⊙h
void bias_add(const double* x, const double* b, double* y, int64_t rows, int64_t cols);
void col_sum_acc(const double* g, double* gb, int64_t rows, int64_t cols);     // gb[c] += Σ_r g[r,c]
void softmax_ce_rows(const double* z, const int32_t* labels, double* probs, double* row_loss,
                     int64_t rows, int64_t cols);
void softmax_ce_backward(const double* probs, const int32_t* labels, double gscale, double* gz,
                         int64_t rows, int64_t cols);

// Serial reference. Same signatures, plain loops, no OpenMP pragmas.
namespace serial_ref {
void matmul_nn(const double* A, const double* B, double* C, int64_t m, int64_t k, int64_t n, bool accumulate);
void matmul_nt(const double* A, const double* B, double* C, int64_t m, int64_t k, int64_t n, bool accumulate);
void matmul_tn(const double* A, const double* B, double* C, int64_t m, int64_t k, int64_t n, bool accumulate);
void ew_add(const double* a, const double* b, double* out, int64_t n);
void ew_sub(const double* a, const double* b, double* out, int64_t n);
void ew_mul(const double* a, const double* b, double* out, int64_t n);
void relu(const double* x, double* y, int64_t n);
void relu_backward(const double* x, const double* gy, double* gx, int64_t n);
void acc(const double* g, double* out, int64_t n);
void acc_scaled(const double* g, double s, double* out, int64_t n);
void acc_mul(const double* g, const double* h, double* out, int64_t n);
void bias_add(const double* x, const double* b, double* y, int64_t rows, int64_t cols);
void col_sum_acc(const double* g, double* gb, int64_t rows, int64_t cols);
void softmax_ce_rows(const double* z, const int32_t* labels, double* probs, double* row_loss,
                     int64_t rows, int64_t cols);
void softmax_ce_backward(const double* probs, const int32_t* labels, double gscale, double* gz,
                         int64_t rows, int64_t cols);
}  // namespace serial_ref

}  // namespace kernels
}  // namespace fatlab
