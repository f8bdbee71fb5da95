#pragma once

#include "fatlab/tensor.hpp"

namespace fatlab {

// Thin SVD of an m×n matrix: u is m×p, v is n×p, p = min(m,n), singular
// values descending. One-sided Jacobi (Hestenes): cheap, dependency-free and
// accurate at the b×c sizes the nuclear regularizer sees.
struct SvdResult {
    Tensor u;
    Tensor v;
    std::vector<double> sigma;
    int sweeps = 0;
};

SvdResult jacobi_svd(const Tensor& a, int max_sweeps = 60);

double nuclear_norm(const Tensor& a);

// U·Vᵀ over singular triplets with σ > cutoff·σ_max; the nuclear-norm
// subgradient with singular vectors treated as constants.
Tensor nuclear_subgradient(const Tensor& a, double cutoff = 1e-12);

}  // namespace fatlab
