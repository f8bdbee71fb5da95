#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "fatlab/data.hpp"
#include "fatlab/trainer.hpp"

namespace fatlab {

// Reals accept "a/b" fractions so ε = 8/255 survives config files losslessly.
double parse_real(const std::string& s);
int64_t parse_int(const std::string& s);
uint64_t parse_u64(const std::string& s);

uint64_t fnv1a64(const std::string& s);

// "pgdN" / "marginN": N-step PGD under CE or margin loss, uniform init,
// step size 2.5ε/N for N ≥ 2 (single-step keeps the per-scheme default).
AttackConfig parse_attack_preset(const std::string& name, double epsilon);

struct ExperimentConfig {
    std::string out_dir = "run";
    uint64_t seed = 0;

    ModelSpec model{2, {64, 64}, 2};
    DatasetDescriptor dataset;
    DatasetDescriptor eval_dataset;
    bool eval_dataset_given = false;

    TrainConfig train;  // constructor applies the full default training bundle

    // co_monitor attack pieces, materialized into train.co by resolve()
    double co_epsilon = -1.0;  // -1 -> attack epsilon
    double co_alpha = 0.0;     // 0 -> 2.5ε/steps
    int64_t co_steps = 10;
    InitScheme co_init = InitScheme::uniform_full;

    uint64_t eval_seed = 1;
    int64_t eval_batch = 256;
    double eval_epsilon = -1.0;  // -1 -> attack epsilon
    std::vector<std::string> eval_attacks{"pgd50", "margin20"};

    double landscape_eta = 8.0 / 255.0;
    int64_t landscape_n1 = 21;
    int64_t landscape_n2 = 21;
    int64_t landscape_samples = 1000;
    uint64_t landscape_seed = 2;

    std::vector<double> sweep_eps;
    std::string sweep_attack = "pgd10";
    uint64_t sweep_seed = 3;

    ExperimentConfig();
    void resolve();
    std::string serialize() const;
    std::string hash() const;
    std::vector<std::pair<std::string, AttackConfig>> eval_attack_configs() const;
    AttackConfig sweep_attack_config() const;
};

// Parses and resolves; unknown sections/keys and malformed values are
// rejected with the line number.
ExperimentConfig parse_config_text(const std::string& text);
ExperimentConfig load_config(const std::string& path);

}  // namespace fatlab
