#include "fatlab/averaging.hpp"

#include <cmath>

namespace fatlab {

const char* wa_kind_name(WaKind k) {
    switch (k) {
        case WaKind::none: return "none";
        case WaKind::ema: return "ema";
        case WaKind::auto_ema: return "auto_ema";
    }
    return "?";
}

WaKind parse_wa_kind(const std::string& s) {
    if (s == "none") return WaKind::none;
    if (s == "ema") return WaKind::ema;
    if (s == "auto_ema") return WaKind::auto_ema;
    throw ValueError("unknown weight-averaging kind '" + s + "'");
}

const char* gate_name(GateDirection g) { return g == GateDirection::le ? "le" : "gt"; }

GateDirection parse_gate(const std::string& s) {
    if (s == "le") return GateDirection::le;
    if (s == "gt") return GateDirection::gt;
    throw ValueError("unknown gate direction '" + s + "' (want le or gt)");
}

void WaConfig::validate() const {
    if (kind == WaKind::none) return;
    if (!(tau > 0.0) || !(tau < 1.0)) throw ValueError("wa: tau must be in (0,1)");
    if (kind == WaKind::auto_ema && (!(threshold > 0.0) || threshold > 1.0))
        throw ValueError("wa: threshold must be in (0,1]");
}

EmaState make_ema_state(const ModelParams& initial, const WaConfig& cfg) {
    cfg.validate();
    EmaState s;
    s.theta_avg = initial;
    s.tau = cfg.tau;
    s.threshold = cfg.threshold;
    s.gate = cfg.gate;
    return s;
}

void ema_update(EmaState& state, const ModelParams& theta) {
    state.theta_avg.mix_from(theta, state.tau);
    ++state.updates_applied;
}

double quality_ratio(int64_t clean_correct, int64_t robust_correct, int64_t batch_size) {
    if (batch_size < 1) throw ValueError("quality_ratio: empty batch");
    if (clean_correct < 0 || clean_correct > batch_size || robust_correct < 0 ||
        robust_correct > batch_size)
        throw ValueError("quality_ratio: counts outside batch");
    if (clean_correct == 0) return 1.0;
    double clean_acc = (double)clean_correct / (double)batch_size;
    double robust_acc = (double)robust_correct / (double)batch_size;
    return robust_acc / clean_acc;
}

QualitySnapshot make_snapshot(int64_t clean_correct, int64_t robust_correct, int64_t batch_size) {
    QualitySnapshot s;
    s.clean_correct = clean_correct;
    s.robust_correct = robust_correct;
    s.batch_size = batch_size;
    s.delta_ratio = quality_ratio(clean_correct, robust_correct, batch_size);
    return s;
}

void auto_ema_update(EmaState& state, const ModelParams& theta, const QualitySnapshot& snap) {
    bool open = state.gate == GateDirection::le ? snap.delta_ratio <= state.threshold
                                                : snap.delta_ratio > state.threshold;
    if (open) ema_update(state, theta);
    else ++state.updates_skipped;
}

}  // namespace fatlab
