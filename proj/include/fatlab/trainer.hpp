#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "fatlab/attacks.hpp"
#include "fatlab/augment.hpp"
#include "fatlab/averaging.hpp"
#include "fatlab/data.hpp"
#include "fatlab/model.hpp"
#include "fatlab/regularizers.hpp"

namespace fatlab {

enum class LrKind { multistep, cyclic };

const char* lr_kind_name(LrKind k);
LrKind parse_lr_kind(const std::string& s);

struct LrSchedule {
    LrKind kind = LrKind::multistep;
    double base = 0.1;
    std::vector<int64_t> milestones{100, 105};
    double factor = 0.1;
    double max_lr = 0.2;

    void validate(int64_t epochs) const;
};

// multistep ignores the step arguments; cyclic is the triangular ramp
// 0 -> max_lr -> 0, linear in the global step over the whole run.
double lr_at(const LrSchedule& s, int64_t epoch, int64_t global_step, int64_t total_steps);

struct CoStatus {
    bool collapsed = false;
    int64_t epoch = -1;  // 1-based epoch of first collapse
};

// Collapse = current robust accuracy < fraction * running peak.
CoStatus co_monitor(const std::vector<double>& robust_history, double collapse_fraction);

struct CoMonitorConfig {
    AttackConfig eval_attack;  // config layer defaults this to PGD-10 at the train ε
    double collapse_fraction = 0.5;
};

struct TrainConfig {
    int64_t epochs = 110;
    int64_t batch_size = 128;
    LrSchedule lr;
    double momentum = 0.9;
    double weight_decay = 5e-4;
    AttackConfig attack;
    RegularizerSpec regularizer;
    AugmentSpec augment;
    WaConfig wa;
    uint64_t seed = 0;
    CoMonitorConfig co;
    int64_t eval_subset = 1000;

    void validate() const;
};

struct SgdState {
    std::vector<Tensor> vw, vb;
    static SgdState make(const ModelSpec& spec);
};

// v <- momentum*v + (grad + weight_decay*param); param <- param - lr*v
void sgd_step(ModelParams& params, const std::map<std::string, Tensor>& grads, SgdState& vel,
              double lr, double momentum, double weight_decay);

struct RunRecord {
    int64_t epoch = 0;  // 1-based
    double lr = 0.0;
    double train_clean_acc = 0.0;
    double train_robust_acc = 0.0;
    double delta_ratio_mean = 1.0;
    double eval_clean_acc = 0.0;
    double eval_robust_acc = 0.0;
    double loss_ce = 0.0;
    double loss_reg = 0.0;
    int64_t wa_updates_applied = 0;  // within this epoch
    int64_t wa_updates_skipped = 0;
    double wall_seconds = 0.0;  // since train start; the one nondeterministic column
};

std::string run_record_csv_header();
std::string run_record_csv_row(const RunRecord& r);
std::string run_record_json(const RunRecord& r);

struct TrainState {
    ModelSpec spec;
    ModelParams params;
    SgdState velocity;
    EmaState ema;
    bool wa_active = false;
    PriorState prior;
    bool prior_active = false;
    int64_t epoch = 0;  // completed epochs
    int64_t steps_per_epoch = 0;
    int64_t total_steps = 0;
    std::chrono::steady_clock::time_point started;
};

TrainState make_train_state(const ModelSpec& spec, const TrainConfig& cfg, const Dataset& train);

// One pass over the training set: per batch augment -> init -> attack ->
// composite loss -> backward -> sgd -> quality gate -> weight averaging ->
// prior update; then the held-out evaluation that feeds the CO monitor.
RunRecord train_epoch(TrainState& st, const Dataset& train, const Dataset& eval_ds,
                      const TrainConfig& cfg);

struct TrainSink {
    std::function<void(const RunRecord&)> on_record;
    // name without extension; averaged marks θ̃ checkpoints
    std::function<void(const std::string& name, const ModelParams& p, bool averaged,
                       int64_t epoch)> on_checkpoint;
};

struct TrainResult {
    ModelParams final_params;
    ModelParams averaged;  // meaningful when wa_active
    bool wa_active = false;
    ModelParams best_params;  // the evaluated model (θ̃ under WA) at the best epoch
    int64_t best_epoch = 0;
    std::vector<RunRecord> records;
    CoStatus co;
};

TrainResult train(const ModelSpec& spec, const Dataset& train_ds, const Dataset& eval_ds,
                  const TrainConfig& cfg, const TrainSink* sink = nullptr);

}  // namespace fatlab
