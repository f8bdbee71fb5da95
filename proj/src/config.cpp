#include "fatlab/config.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace fatlab {

namespace {

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

double parse_plain_real(const std::string& s) {
    const char* c = s.c_str();
    char* end = nullptr;
    double v = std::strtod(c, &end);
    if (end == c || *end != '\0') throw ValueError("not a number: '" + s + "'");
    return v;
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : s) {
        if (ch == ',') {
            std::string t = trim(cur);
            if (!t.empty()) out.push_back(t);
            cur.clear();
        } else {
            cur += ch;
        }
    }
    std::string t = trim(cur);
    if (!t.empty()) out.push_back(t);
    return out;
}

std::string fmt_g(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace

double parse_real(const std::string& s) {
    size_t slash = s.find('/');
    if (slash == std::string::npos) return parse_plain_real(s);
    double num = parse_plain_real(trim(s.substr(0, slash)));
    double den = parse_plain_real(trim(s.substr(slash + 1)));
    if (den == 0.0) throw ValueError("fraction with zero denominator: '" + s + "'");
    return num / den;
}

int64_t parse_int(const std::string& s) {
    const char* c = s.c_str();
    char* end = nullptr;
    long long v = std::strtoll(c, &end, 10);
    if (end == c || *end != '\0') throw ValueError("not an integer: '" + s + "'");
    return (int64_t)v;
}

uint64_t parse_u64(const std::string& s) {
    const char* c = s.c_str();
    char* end = nullptr;
    unsigned long long v = std::strtoull(c, &end, 10);
    if (end == c || *end != '\0' || s[0] == '-')
        throw ValueError("not a non-negative integer: '" + s + "'");
    return (uint64_t)v;
}

uint64_t fnv1a64(const std::string& s) {
    uint64_t h = 14695981039346656037ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

AttackConfig parse_attack_preset(const std::string& name, double epsilon) {
    AttackConfig cfg;
    cfg.epsilon = epsilon;
    cfg.init = InitScheme::uniform_full;
    std::string num;
    if (name.rfind("pgd", 0) == 0) {
        cfg.loss = AttackLoss::cross_entropy;
        num = name.substr(3);
    } else if (name.rfind("margin", 0) == 0) {
        cfg.loss = AttackLoss::margin;
        num = name.substr(6);
    } else {
        throw ValueError("unknown attack preset '" + name + "' (want pgdN or marginN)");
    }
    cfg.steps = (int)parse_int(num);
    if (cfg.steps < 1) throw ValueError("attack preset '" + name + "': steps must be >= 1");
    cfg.alpha = cfg.steps >= 2 ? 2.5 * epsilon / (double)cfg.steps : 0.0;
    cfg.validate();
    return cfg;
}

ExperimentConfig::ExperimentConfig() {
    train.attack.epsilon = 8.0 / 255.0;
    train.attack.alpha = 0.0;
    train.attack.steps = 1;
    train.attack.init = InitScheme::bernoulli_half;
    train.attack.loss = AttackLoss::cross_entropy;
    train.regularizer.kind = RegKind::lipschitz;
    train.regularizer.lambda = 12.0;
    train.regularizer.placement = RegPlacement::min_only;
    train.augment.kind = AugKind::cutout;
    train.wa.kind = WaKind::auto_ema;
    train.wa.tau = 0.999;
    train.wa.threshold = 0.82;
    for (int k = 2; k <= 16; k += 2) sweep_eps.push_back((double)k / 255.0);
}

void ExperimentConfig::resolve() {
    train.seed = seed;
    model.validate();

    if (!eval_dataset_given) {
        eval_dataset = dataset;
        if (dataset.source == DataSource::synthetic_blobs) eval_dataset.seed = dataset.seed + 1;
    }
    if (dataset.source == DataSource::idx_files &&
        (dataset.images_path.empty() || dataset.labels_path.empty()))
        throw ValueError("config: idx dataset needs images and labels paths");

    if (co_epsilon < 0.0) co_epsilon = train.attack.epsilon;
    if (co_steps < 1) throw ValueError("config: co_monitor steps must be >= 1");
    if (co_alpha == 0.0 && co_steps >= 2) co_alpha = 2.5 * co_epsilon / (double)co_steps;
    train.co.eval_attack.epsilon = co_epsilon;
    train.co.eval_attack.alpha = co_alpha;
    train.co.eval_attack.steps = (int)co_steps;
    train.co.eval_attack.init = co_init;
    train.co.eval_attack.loss = AttackLoss::cross_entropy;

    if (eval_epsilon < 0.0) eval_epsilon = train.attack.epsilon;
    if (eval_batch < 1) throw ValueError("config: eval batch must be >= 1");
    for (const auto& a : eval_attacks) parse_attack_preset(a, eval_epsilon);

    if (!(landscape_eta > 0.0)) throw ValueError("config: landscape eta_mag must be > 0");
    if (landscape_n1 < 1 || landscape_n2 < 1 || landscape_n1 % 2 == 0 || landscape_n2 % 2 == 0)
        throw ValueError("config: landscape n1 and n2 must be odd");
    if (landscape_samples < 1) throw ValueError("config: landscape samples must be >= 1");

    if (sweep_eps.empty()) throw ValueError("config: sweep eps list is empty");
    for (size_t i = 0; i < sweep_eps.size(); ++i) {
        if (sweep_eps[i] < 0.0 || sweep_eps[i] > 1.0)
            throw ValueError("config: sweep eps outside [0,1]");
        if (i > 0 && sweep_eps[i] < sweep_eps[i - 1])
            throw ValueError("config: sweep eps must be ascending");
    }
    parse_attack_preset(sweep_attack, sweep_eps.back());

    train.validate();
}

std::vector<std::pair<std::string, AttackConfig>> ExperimentConfig::eval_attack_configs() const {
    std::vector<std::pair<std::string, AttackConfig>> out;
    for (const auto& a : eval_attacks) out.emplace_back(a, parse_attack_preset(a, eval_epsilon));
    return out;
}

AttackConfig ExperimentConfig::sweep_attack_config() const {
    return parse_attack_preset(sweep_attack, sweep_eps.back());
}

namespace {

std::string join_i64(const std::vector<int64_t>& v) {
    std::string s;
    for (size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
    return s;
}

std::string join_real(const std::vector<double>& v) {
    std::string s;
    for (size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + fmt_g(v[i]);
    return s;
}

std::string join_str(const std::vector<std::string>& v) {
    std::string s;
    for (size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + v[i];
    return s;
}

void emit_dataset(std::string& s, const char* section, const DatasetDescriptor& d) {
    s += std::string("[") + section + "]\n";
    s += std::string("source = ") +
         (d.source == DataSource::synthetic_blobs ? "blobs" : "idx") + "\n";
    s += "n = " + std::to_string(d.n) + "\n";
    s += "dim = " + std::to_string(d.dim) + "\n";
    s += "classes = " + std::to_string(d.classes) + "\n";
    s += "margin = " + fmt_g(d.margin) + "\n";
    s += "seed = " + std::to_string(d.seed) + "\n";
    s += "images = " + d.images_path + "\n";
    s += "labels = " + d.labels_path + "\n\n";
}

}  // namespace

std::string ExperimentConfig::serialize() const {
    std::string s;
    s += "[run]\n";
    s += "out_dir = " + out_dir + "\n";
    s += "seed = " + std::to_string(seed) + "\n\n";

    s += "[model]\n";
    s += "input_dim = " + std::to_string(model.input_dim) + "\n";
    s += "hidden = " + join_i64(model.hidden_dims) + "\n";
    s += "classes = " + std::to_string(model.num_classes) + "\n\n";

    emit_dataset(s, "dataset", dataset);
    emit_dataset(s, "eval_dataset", eval_dataset);

    s += "[train]\n";
    s += "epochs = " + std::to_string(train.epochs) + "\n";
    s += "batch_size = " + std::to_string(train.batch_size) + "\n";
    s += "momentum = " + fmt_g(train.momentum) + "\n";
    s += "weight_decay = " + fmt_g(train.weight_decay) + "\n";
    s += "eval_subset = " + std::to_string(train.eval_subset) + "\n\n";

    s += "[lr]\n";
    s += std::string("kind = ") + lr_kind_name(train.lr.kind) + "\n";
    s += "base = " + fmt_g(train.lr.base) + "\n";
    s += "milestones = " + join_i64(train.lr.milestones) + "\n";
    s += "factor = " + fmt_g(train.lr.factor) + "\n";
    s += "max_lr = " + fmt_g(train.lr.max_lr) + "\n\n";

    s += "[attack]\n";
    s += "epsilon = " + fmt_g(train.attack.epsilon) + "\n";
    s += "alpha = " + fmt_g(train.attack.alpha) + "\n";
    s += "steps = " + std::to_string(train.attack.steps) + "\n";
    s += std::string("init = ") + init_scheme_name(train.attack.init) + "\n";
    s += std::string("loss = ") + attack_loss_name(train.attack.loss) + "\n";
    s += "pgi_mu = " + fmt_g(train.attack.pgi_mu) + "\n\n";

    s += "[regularizer]\n";
    s += std::string("kind = ") + reg_kind_name(train.regularizer.kind) + "\n";
    s += "lambda = " + fmt_g(train.regularizer.lambda) + "\n";
    s += std::string("placement = ") + placement_name(train.regularizer.placement) + "\n";
    s += "norm_floor = " + fmt_g(train.regularizer.norm_floor) + "\n\n";

    s += "[augment]\n";
    s += std::string("kind = ") + aug_kind_name(train.augment.kind) + "\n";
    s += "cutout_size = " + std::to_string(train.augment.cutout_size) + "\n";
    s += "mixup_alpha = " + fmt_g(train.augment.mixup_alpha) + "\n\n";

    s += "[wa]\n";
    s += std::string("kind = ") + wa_kind_name(train.wa.kind) + "\n";
    s += "tau = " + fmt_g(train.wa.tau) + "\n";
    s += "threshold = " + fmt_g(train.wa.threshold) + "\n";
    s += std::string("gate = ") + gate_name(train.wa.gate) + "\n\n";

    s += "[co_monitor]\n";
    s += "collapse_fraction = " + fmt_g(train.co.collapse_fraction) + "\n";
    s += "epsilon = " + fmt_g(co_epsilon) + "\n";
    s += "alpha = " + fmt_g(co_alpha) + "\n";
    s += "steps = " + std::to_string(co_steps) + "\n";
    s += std::string("init = ") + init_scheme_name(co_init) + "\n\n";

    s += "[eval]\n";
    s += "seed = " + std::to_string(eval_seed) + "\n";
    s += "batch = " + std::to_string(eval_batch) + "\n";
    s += "epsilon = " + fmt_g(eval_epsilon) + "\n";
    s += "attacks = " + join_str(eval_attacks) + "\n\n";

    s += "[landscape]\n";
    s += "eta_mag = " + fmt_g(landscape_eta) + "\n";
    s += "n1 = " + std::to_string(landscape_n1) + "\n";
    s += "n2 = " + std::to_string(landscape_n2) + "\n";
    s += "samples = " + std::to_string(landscape_samples) + "\n";
    s += "seed = " + std::to_string(landscape_seed) + "\n\n";

    s += "[sweep]\n";
    s += "eps = " + join_real(sweep_eps) + "\n";
    s += "attack = " + sweep_attack + "\n";
    s += "seed = " + std::to_string(sweep_seed) + "\n";
    return s;
}

std::string ExperimentConfig::hash() const {
    char buf[24];
    std::snprintf(buf, sizeof buf, "%016llx", (unsigned long long)fnv1a64(serialize()));
    return buf;
}

namespace {

struct LineError {
    static ValueError at(int line, const std::string& what) {
        return ValueError("config line " + std::to_string(line) + ": " + what);
    }
};

void apply_dataset_key(DatasetDescriptor& d, const std::string& key, const std::string& val,
                       int line) {
    if (key == "source") {
        if (val == "blobs")
            d.source = DataSource::synthetic_blobs;
        else if (val == "idx")
            d.source = DataSource::idx_files;
        else
            throw LineError::at(line, "source must be blobs or idx");
    } else if (key == "n") {
        d.n = parse_int(val);
    } else if (key == "dim") {
        d.dim = parse_int(val);
    } else if (key == "classes") {
        d.classes = parse_int(val);
    } else if (key == "margin") {
        d.margin = parse_real(val);
    } else if (key == "seed") {
        d.seed = parse_u64(val);
    } else if (key == "images") {
        d.images_path = val;
    } else if (key == "labels") {
        d.labels_path = val;
    } else {
        throw LineError::at(line, "unknown key '" + key + "' in dataset section");
    }
}

}  // namespace

ExperimentConfig parse_config_text(const std::string& text) {
    ExperimentConfig c;
    std::istringstream in(text);
    std::string raw;
    std::string section;
    int line = 0;
    while (std::getline(in, raw)) {
        ++line;
        // inline comments start at whitespace-preceded # (paths keep bare #)
        size_t cut = std::string::npos;
        for (size_t i = 0; i < raw.size(); ++i)
            if (raw[i] == '#' && (i == 0 || raw[i - 1] == ' ' || raw[i - 1] == '\t')) {
                cut = i;
                break;
            }
        std::string s = trim(cut == std::string::npos ? raw : raw.substr(0, cut));
        if (s.empty() || s[0] == ';') continue;
        if (s.front() == '[') {
            if (s.back() != ']') throw LineError::at(line, "unterminated section header");
            section = trim(s.substr(1, s.size() - 2));
            const char* known[] = {"run", "model", "dataset", "eval_dataset", "train",
                                   "lr", "attack", "regularizer", "augment", "wa",
                                   "co_monitor", "eval", "landscape", "sweep"};
            bool ok = false;
            for (const char* k : known) ok = ok || section == k;
            if (!ok) throw LineError::at(line, "unknown section [" + section + "]");
            if (section == "eval_dataset") c.eval_dataset_given = true;
            continue;
        }
        size_t eq = s.find('=');
        if (eq == std::string::npos) throw LineError::at(line, "expected key = value");
        std::string key = trim(s.substr(0, eq));
        std::string val = trim(s.substr(eq + 1));
        if (key.empty()) throw LineError::at(line, "empty key");
        if (section.empty()) throw LineError::at(line, "key before any [section]");

        try {
            if (section == "run") {
                if (key == "out_dir")
                    c.out_dir = val;
                else if (key == "seed")
                    c.seed = parse_u64(val);
                else
                    throw ValueError("unknown key '" + key + "' in [run]");
            } else if (section == "model") {
                if (key == "input_dim") {
                    c.model.input_dim = parse_int(val);
                } else if (key == "hidden") {
                    c.model.hidden_dims.clear();
                    for (const auto& t : split_list(val)) c.model.hidden_dims.push_back(parse_int(t));
                } else if (key == "classes") {
                    c.model.num_classes = parse_int(val);
                } else {
                    throw ValueError("unknown key '" + key + "' in [model]");
                }
            } else if (section == "dataset") {
                apply_dataset_key(c.dataset, key, val, line);
            } else if (section == "eval_dataset") {
                apply_dataset_key(c.eval_dataset, key, val, line);
            } else if (section == "train") {
                if (key == "epochs")
                    c.train.epochs = parse_int(val);
                else if (key == "batch_size")
                    c.train.batch_size = parse_int(val);
                else if (key == "momentum")
                    c.train.momentum = parse_real(val);
                else if (key == "weight_decay")
                    c.train.weight_decay = parse_real(val);
                else if (key == "eval_subset")
                    c.train.eval_subset = parse_int(val);
                else
                    throw ValueError("unknown key '" + key + "' in [train]");
            } else if (section == "lr") {
                if (key == "kind") {
                    c.train.lr.kind = parse_lr_kind(val);
                } else if (key == "base") {
                    c.train.lr.base = parse_real(val);
                } else if (key == "milestones") {
                    c.train.lr.milestones.clear();
                    for (const auto& t : split_list(val))
                        c.train.lr.milestones.push_back(parse_int(t));
                } else if (key == "factor") {
                    c.train.lr.factor = parse_real(val);
                } else if (key == "max_lr") {
                    c.train.lr.max_lr = parse_real(val);
                } else {
                    throw ValueError("unknown key '" + key + "' in [lr]");
                }
            } else if (section == "attack") {
                if (key == "epsilon")
                    c.train.attack.epsilon = parse_real(val);
                else if (key == "alpha")
                    c.train.attack.alpha = parse_real(val);
                else if (key == "steps")
                    c.train.attack.steps = (int)parse_int(val);
                else if (key == "init")
                    c.train.attack.init = parse_init_scheme(val);
                else if (key == "loss")
                    c.train.attack.loss = parse_attack_loss(val);
                else if (key == "pgi_mu")
                    c.train.attack.pgi_mu = parse_real(val);
                else
                    throw ValueError("unknown key '" + key + "' in [attack]");
            } else if (section == "regularizer") {
                if (key == "kind")
                    c.train.regularizer.kind = parse_reg_kind(val);
                else if (key == "lambda")
                    c.train.regularizer.lambda = parse_real(val);
                else if (key == "placement")
                    c.train.regularizer.placement = parse_placement(val);
                else if (key == "norm_floor")
                    c.train.regularizer.norm_floor = parse_real(val);
                else
                    throw ValueError("unknown key '" + key + "' in [regularizer]");
            } else if (section == "augment") {
                if (key == "kind")
                    c.train.augment.kind = parse_aug_kind(val);
                else if (key == "cutout_size")
                    c.train.augment.cutout_size = parse_int(val);
                else if (key == "mixup_alpha")
                    c.train.augment.mixup_alpha = parse_real(val);
                else
                    throw ValueError("unknown key '" + key + "' in [augment]");
            } else if (section == "wa") {
                if (key == "kind")
                    c.train.wa.kind = parse_wa_kind(val);
                else if (key == "tau")
                    c.train.wa.tau = parse_real(val);
                else if (key == "threshold")
                    c.train.wa.threshold = parse_real(val);
                else if (key == "gate")
                    c.train.wa.gate = parse_gate(val);
                else
                    throw ValueError("unknown key '" + key + "' in [wa]");
            } else if (section == "co_monitor") {
                if (key == "collapse_fraction")
                    c.train.co.collapse_fraction = parse_real(val);
                else if (key == "epsilon")
                    c.co_epsilon = parse_real(val);
                else if (key == "alpha")
                    c.co_alpha = parse_real(val);
                else if (key == "steps")
                    c.co_steps = parse_int(val);
                else if (key == "init")
                    c.co_init = parse_init_scheme(val);
                else
                    throw ValueError("unknown key '" + key + "' in [co_monitor]");
            } else if (section == "eval") {
                if (key == "seed")
                    c.eval_seed = parse_u64(val);
                else if (key == "batch")
                    c.eval_batch = parse_int(val);
                else if (key == "epsilon")
                    c.eval_epsilon = parse_real(val);
                else if (key == "attacks")
                    c.eval_attacks = split_list(val);
                else
                    throw ValueError("unknown key '" + key + "' in [eval]");
            } else if (section == "landscape") {
                if (key == "eta_mag")
                    c.landscape_eta = parse_real(val);
                else if (key == "n1")
                    c.landscape_n1 = parse_int(val);
                else if (key == "n2")
                    c.landscape_n2 = parse_int(val);
                else if (key == "samples")
                    c.landscape_samples = parse_int(val);
                else if (key == "seed")
                    c.landscape_seed = parse_u64(val);
                else
                    throw ValueError("unknown key '" + key + "' in [landscape]");
            } else if (section == "sweep") {
                if (key == "eps") {
                    c.sweep_eps.clear();
                    for (const auto& t : split_list(val)) c.sweep_eps.push_back(parse_real(t));
                } else if (key == "attack") {
                    c.sweep_attack = val;
                } else if (key == "seed") {
                    c.sweep_seed = parse_u64(val);
                } else {
                    throw ValueError("unknown key '" + key + "' in [sweep]");
                }
            }
        } catch (const ValueError& e) {
            std::string m = e.msg;
            if (m.rfind("config line", 0) == 0) throw;
            throw LineError::at(line, m);
        }
    }
    c.resolve();
    return c;
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ValueError("cannot open config file: " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    return parse_config_text(ss.str());
}

}  // namespace fatlab
