#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "fatlab/attacks.hpp"
#include "fatlab/data.hpp"
#include "fatlab/model.hpp"

namespace fatlab {

struct AttackResult {
    std::string name;
    AttackConfig config;
    double robust_acc = 0.0;
};

struct EvalReport {
    double clean_acc = 0.0;
    double clean_ce = 0.0;
    int64_t n_samples = 0;
    std::vector<AttackResult> attacks;
};

std::string eval_report_json(const EvalReport& r);

// Mean CE of the model on x; fixed summation order so chunked callers agree
// bit-for-bit with one-shot callers.
double mean_ce(const ModelParams& params, const Tensor& x, const std::vector<int32_t>& y);

// Robust-correct count under one attack. Every sample gets its own rng key
// (seed, attack_init stream, tag, sample_id) so the result is independent of
// how callers batch the work. sample_ids must parallel the rows of x.
int64_t count_robust_correct(const ModelParams& params, const Tensor& x,
                             const std::vector<int32_t>& y,
                             const std::vector<int64_t>& sample_ids, const AttackConfig& atk,
                             uint64_t seed, uint64_t tag, int64_t eval_batch = 256);

// Clean accuracy plus robust accuracy per named attack; tag = attack index.
EvalReport evaluate(const ModelParams& params, const Dataset& ds,
                    const std::vector<std::pair<std::string, AttackConfig>>& attacks,
                    uint64_t seed, int64_t eval_batch = 256);

struct LandscapeGrid {
    Tensor r1;  // [n, D] Rademacher rows, entries ±eta_mag
    Tensor r2;  // [n, D] eta_mag * sign(per-sample CE input gradient)
    int64_t n1 = 0, n2 = 0;
    double eta_mag = 0.0;
    std::vector<double> values;  // n1*n2 row-major; [i*n2+j] at (a_i, b_j)
    double at(int64_t i, int64_t j) const { return values[i * n2 + j]; }
};

// Mean CE over samples at x + a_i*r1 + b_j*r2, a and b linearly spaced over
// [-1, 1], inputs clipped to [0,1]. n1 and n2 must be odd so (0,0) is a cell.
LandscapeGrid landscape_grid(const ModelParams& params, const Tensor& samples,
                             const std::vector<int32_t>& labels, double eta_mag, int64_t n1,
                             int64_t n2, uint64_t seed);

std::string landscape_csv(const LandscapeGrid& g);

struct SweepPoint {
    double epsilon = 0.0;
    double robust_acc = 0.0;
};

// Robust accuracy per ε, ascending. Each sample's smaller-ε perturbation is
// replayed as an extra init candidate at the next ε and success is sticky
// (once any candidate misclassifies, the sample stays counted as broken), so
// the curve is non-increasing exactly, not just statistically. A single-ε
// sweep runs no replay and matches evaluate() bit-for-bit.
std::vector<SweepPoint> strength_sweep(const ModelParams& params, const Dataset& ds,
                                       const std::vector<double>& eps_list,
                                       const AttackConfig& tmpl, uint64_t seed,
                                       int64_t eval_batch = 256);

std::string sweep_csv(const std::vector<SweepPoint>& pts);

}  // namespace fatlab
