#include "fatlab/cli.hpp"

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "fatlab/config.hpp"
#include "fatlab/eval.hpp"
#include "fatlab/trainer.hpp"

namespace fatlab {

namespace fs = std::filesystem;

std::string resolve_out_dir(const std::string& out_dir) {
    fs::path p(out_dir);
    if (p.is_absolute()) return out_dir;
    const char* root = std::getenv("FATLAB_OUT_ROOT");
    if (!root || !*root) return out_dir;
    return (fs::path(root) / p).string();
}

namespace {

void write_file(const fs::path& path, const std::string& content) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw ValueError("cannot write file: " + path.string());
    f << content;
    if (!f) throw ValueError("write failed: " + path.string());
}

template <typename Fn>
int guarded(Fn&& fn) {
    try {
        fn();
        return 0;
    } catch (const ValueError& e) {
        std::fprintf(stderr, "error: %s\n", e.msg.c_str());
        return 1;
    } catch (const InternalError& e) {
        std::fprintf(stderr, "internal error: %s\n", e.msg.c_str());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "internal error: %s\n", e.what());
        return 2;
    }
}

struct OutLayout {
    fs::path root, checkpoints, reports;
};

OutLayout make_layout(const ExperimentConfig& cfg) {
    OutLayout L;
    L.root = resolve_out_dir(cfg.out_dir);
    L.checkpoints = L.root / "checkpoints";
    L.reports = L.root / "reports";
    fs::create_directories(L.checkpoints);
    fs::create_directories(L.reports);
    write_file(L.root / "config.resolved", cfg.serialize());
    return L;
}

ModelParams load_params_checked(const std::string& path, const Dataset& ds) {
    ModelParams p = load_checkpoint(path);
    if (p.spec.input_dim != ds.dim)
        throw ValueError("checkpoint input dim " + std::to_string(p.spec.input_dim) +
                         " does not match dataset dim " + std::to_string(ds.dim));
    return p;
}

}  // namespace

int run_train(const std::string& config_path) {
    return guarded([&] {
        ExperimentConfig cfg = load_config(config_path);
        OutLayout L = make_layout(cfg);
        Dataset train_ds = load_dataset(cfg.dataset);
        Dataset eval_ds = load_dataset(cfg.eval_dataset);

        std::ofstream csv(L.root / "records.csv", std::ios::binary);
        std::ofstream jsonl(L.root / "records.jsonl", std::ios::binary);
        if (!csv || !jsonl) throw ValueError("cannot open record files in " + L.root.string());
        csv << run_record_csv_header() << "\n";
        csv.flush();

        CheckpointManifest man;
        man.seed = cfg.seed;
        man.config_hash = cfg.hash();

        TrainSink sink;
        sink.on_record = [&](const RunRecord& r) {
            csv << run_record_csv_row(r) << "\n";
            csv.flush();
            jsonl << run_record_json(r) << "\n";
            jsonl.flush();
            std::printf("epoch %lld clean %.4f robust %.4f eval_robust %.4f\n",
                        (long long)r.epoch, r.train_clean_acc, r.train_robust_acc,
                        r.eval_robust_acc);
            std::fflush(stdout);
        };
        sink.on_checkpoint = [&](const std::string& name, const ModelParams& p, bool averaged,
                                 int64_t epoch) {
            CheckpointManifest m = man;
            m.epoch = epoch;
            m.averaged = averaged;
            save_checkpoint((L.checkpoints / (name + ".ckpt")).string(), p, m);
        };

        TrainResult res = train(cfg.model, train_ds, eval_ds, cfg.train, &sink);

        double peak = 0.0;
        for (const auto& r : res.records) peak = std::max(peak, r.eval_robust_acc);
        std::string co = "{\n";
        co += std::string("  \"collapsed\": ") + (res.co.collapsed ? "true" : "false") + ",\n";
        co += "  \"collapse_epoch\": " + std::to_string(res.co.epoch) + ",\n";
        char buf[64];
        std::snprintf(buf, sizeof buf, "%.17g", cfg.train.co.collapse_fraction);
        co += std::string("  \"collapse_fraction\": ") + buf + ",\n";
        std::snprintf(buf, sizeof buf, "%.17g", peak);
        co += std::string("  \"peak_eval_robust_acc\": ") + buf + ",\n";
        std::snprintf(buf, sizeof buf, "%.17g", res.records.back().eval_robust_acc);
        co += std::string("  \"final_eval_robust_acc\": ") + buf + "\n}\n";
        write_file(L.reports / "co_report.json", co);

        const ModelParams& final_model = res.wa_active ? res.averaged : res.final_params;
        EvalReport rep = evaluate(final_model, eval_ds, cfg.eval_attack_configs(), cfg.eval_seed,
                                  cfg.eval_batch);
        write_file(L.reports / "eval_final.json", eval_report_json(rep));

        std::printf("%s after %zu epochs; best epoch %lld; outputs in %s\n",
                    res.co.collapsed ? "collapsed" : "healthy", res.records.size(),
                    (long long)res.best_epoch, L.root.string().c_str());
    });
}

int run_eval(const std::string& config_path, const std::string& checkpoint_path) {
    return guarded([&] {
        ExperimentConfig cfg = load_config(config_path);
        OutLayout L = make_layout(cfg);
        Dataset ds = load_dataset(cfg.dataset);
        ModelParams p = load_params_checked(checkpoint_path, ds);
        EvalReport rep = evaluate(p, ds, cfg.eval_attack_configs(), cfg.eval_seed, cfg.eval_batch);
        std::string j = eval_report_json(rep);
        write_file(L.reports / "eval.json", j);
        std::fputs(j.c_str(), stdout);
    });
}

int run_landscape(const std::string& config_path, const std::string& checkpoint_path) {
    return guarded([&] {
        ExperimentConfig cfg = load_config(config_path);
        OutLayout L = make_layout(cfg);
        Dataset ds = load_dataset(cfg.dataset);
        ModelParams p = load_params_checked(checkpoint_path, ds);
        int64_t m = std::min<int64_t>(cfg.landscape_samples, ds.n);
        Dataset sub = ds.take(0, m);
        LandscapeGrid g = landscape_grid(p, sub.x, sub.y, cfg.landscape_eta, cfg.landscape_n1,
                                         cfg.landscape_n2, cfg.landscape_seed);
        write_file(L.reports / "landscape.csv", landscape_csv(g));
        std::printf("landscape %lldx%lld over %lld samples; center %.17g; %s\n",
                    (long long)g.n1, (long long)g.n2, (long long)m,
                    g.at((g.n1 - 1) / 2, (g.n2 - 1) / 2),
                    (L.reports / "landscape.csv").string().c_str());
    });
}

int run_sweep(const std::string& config_path, const std::string& checkpoint_path) {
    return guarded([&] {
        ExperimentConfig cfg = load_config(config_path);
        OutLayout L = make_layout(cfg);
        Dataset ds = load_dataset(cfg.dataset);
        ModelParams p = load_params_checked(checkpoint_path, ds);
        auto pts = strength_sweep(p, ds, cfg.sweep_eps, cfg.sweep_attack_config(), cfg.sweep_seed,
                                  cfg.eval_batch);
        write_file(L.reports / "sweep.csv", sweep_csv(pts));
        std::printf("sweep over %zu epsilons; %s\n", pts.size(),
                    (L.reports / "sweep.csv").string().c_str());
    });
}

}  // namespace fatlab
