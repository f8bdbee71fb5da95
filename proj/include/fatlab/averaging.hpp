#pragma once

#include <cstdint>
#include <string>

#include "fatlab/model.hpp"

namespace fatlab {

enum class WaKind { none, ema, auto_ema };
// le: apply when Δ <= T (the attack is effective, so θ is trustworthy);
// gt: the opposite reading, kept selectable for experiments.
enum class GateDirection { le, gt };

const char* wa_kind_name(WaKind k);
WaKind parse_wa_kind(const std::string& s);
const char* gate_name(GateDirection g);
GateDirection parse_gate(const std::string& s);

struct WaConfig {
    WaKind kind = WaKind::none;
    double tau = 0.999;
    double threshold = 0.82;
    GateDirection gate = GateDirection::le;

    void validate() const;
};

struct QualitySnapshot {
    int64_t clean_correct = 0;
    int64_t robust_correct = 0;
    int64_t batch_size = 0;
    double delta_ratio = 1.0;
};

struct EmaState {
    ModelParams theta_avg;
    double tau = 0.999;
    double threshold = 0.82;
    GateDirection gate = GateDirection::le;
    int64_t updates_applied = 0;
    int64_t updates_skipped = 0;
};

EmaState make_ema_state(const ModelParams& initial, const WaConfig& cfg);

// θ̃ <- τ·θ̃ + (1−τ)·θ elementwise.
void ema_update(EmaState& state, const ModelParams& theta);

// Δ = robust_acc / clean_acc; defined as 1 when no clean prediction is
// correct (an update is then skipped under any T < 1).
double quality_ratio(int64_t clean_correct, int64_t robust_correct, int64_t batch_size);

QualitySnapshot make_snapshot(int64_t clean_correct, int64_t robust_correct, int64_t batch_size);

// Gated EMA: apply when the gate is open for snapshot.delta_ratio, otherwise
// leave θ̃ untouched and count the skip.
void auto_ema_update(EmaState& state, const ModelParams& theta, const QualitySnapshot& snap);

}  // namespace fatlab
