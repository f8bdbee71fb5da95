#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fatlab/model.hpp"
#include "fatlab/rng.hpp"
#include "fatlab/tensor.hpp"

namespace fatlab {

enum class InitScheme { zero, normal_half, uniform_full, bernoulli_half, atta_prior, pgi_momentum };
enum class AttackLoss { cross_entropy, margin };

const char* init_scheme_name(InitScheme s);
InitScheme parse_init_scheme(const std::string& s);
const char* attack_loss_name(AttackLoss l);
AttackLoss parse_attack_loss(const std::string& s);

// epsilon == 0 is accepted as "attack disabled": every caller short-circuits
// to a zero perturbation, which is what the ε=0 rows of a strength sweep mean.
struct AttackConfig {
    double epsilon = 8.0 / 255.0;
    double alpha = 0.0;  // 0 -> default_alpha(init, epsilon)
    int steps = 1;
    InitScheme init = InitScheme::uniform_full;
    AttackLoss loss = AttackLoss::cross_entropy;
    double pgi_mu = 0.3;

    double resolved_alpha() const;
    void validate() const;
};

// Step size each init scheme is normally paired with; zero init keeps the
// classic full-ε step.
double default_alpha(InitScheme scheme, double epsilon);

// Stored per-sample perturbation (ATTA and PGI) and signed-gradient momentum
// (PGI), keyed by stable dataset index. Cold start is all zeros.
struct PriorState {
    int64_t n = 0;
    int64_t dim = 0;
    double epsilon = 0.0;
    double mu = 0.3;
    std::vector<double> eta;
    std::vector<double> momentum;  // empty unless PGI

    static PriorState make(int64_t n, int64_t dim, double epsilon, double mu, bool with_momentum);
};

// What the attack ascends. kind none or lipschitz -> plain loss (the
// Lipschitz term is identically zero at δ=η, so it adds no gradient);
// guided/nuclear with min_max placement add λ·R against constant clean logits.
struct AttackObjective {
    AttackLoss loss = AttackLoss::cross_entropy;
    bool add_guided = false;
    bool add_nuclear = false;
    double lambda = 0.0;
};

// One row of init noise; counter_base spaces draws so batch mode can pack
// rows into one key while eval mode keys each sample separately.
void fill_init_row(double* row, int64_t dim, InitScheme scheme, double epsilon,
                   const rng::Key& key, uint64_t counter_base, const double* prior_row);

Tensor sample_init(InitScheme scheme, double epsilon, const std::vector<int64_t>& shape,
                   const PriorState* prior, const std::vector<int64_t>& sample_ids,
                   const rng::Key& key);

// Single FGSM step: δ = clip(η + α·sign(∇_x L(f(x+η),y)), ±ε), then
// shrink so x+δ stays in [0,1]. sign(0)=0; nothing differentiates through
// sign. signed_grad_out receives sign(∇) when the caller needs it (PGI).
Tensor fgsm_step(const ModelParams& params, const Tensor& x, const std::vector<int32_t>& y,
                 const Tensor& eta, double alpha, double epsilon,
                 const AttackObjective& obj = {}, Tensor* signed_grad_out = nullptr);

// Iterated fgsm_step from the configured init. sample_ids feed prior lookups
// and (in per_sample_keys mode) the rng; key identifies (seed, epoch, batch).
Tensor pgd(const ModelParams& params, const Tensor& x, const std::vector<int32_t>& y,
           const AttackConfig& cfg, const rng::Key& key,
           const PriorState* prior = nullptr, const std::vector<int64_t>* sample_ids = nullptr,
           const AttackObjective& obj = {}, Tensor* signed_grad_out = nullptr,
           const Tensor* init_override = nullptr);

Tensor margin_pgd(const ModelParams& params, const Tensor& x, const std::vector<int32_t>& y,
                  AttackConfig cfg, const rng::Key& key);

void update_prior_state(PriorState& state, const std::vector<int64_t>& sample_ids,
                        const Tensor& delta, const Tensor& signed_grad, InitScheme scheme,
                        double alpha);

}  // namespace fatlab
