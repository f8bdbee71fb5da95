#include "fatlab/model.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "fatlab/kernels.hpp"
#include "fatlab/rng.hpp"

namespace fatlab {

void ModelSpec::validate() const {
    if (input_dim < 1) throw ValueError("model: input_dim must be >= 1");
    if (num_classes < 1) throw ValueError("model: num_classes must be >= 1");
    if (hidden_dims.empty()) throw ValueError("model: at least one hidden layer required");
    for (int64_t h : hidden_dims)
        if (h < 1) throw ValueError("model: hidden dim must be >= 1");
}

int64_t ModelSpec::total_count() const {
    int64_t n = 0, prev = input_dim;
    for (int64_t h : hidden_dims) {
        n += prev * h + h;
        prev = h;
    }
    n += prev * num_classes + num_classes;
    return n;
}

std::string ModelSpec::to_string() const {
    std::ostringstream os;
    os << input_dim << "->(";
    for (size_t i = 0; i < hidden_dims.size(); ++i) {
        if (i) os << ",";
        os << hidden_dims[i];
    }
    os << ")->" << num_classes;
    return os.str();
}

void ModelParams::mix_from(const ModelParams& other, double tau) {
    if (!(spec == other.spec))
        throw ValueError("param mix: spec " + spec.to_string() + " vs " + other.spec.to_string());
    for (size_t l = 0; l < weights.size(); ++l) {
        double* d = weights[l].data.data();
        const double* s = other.weights[l].data.data();
        for (int64_t i = 0; i < weights[l].numel(); ++i) d[i] = tau * d[i] + (1.0 - tau) * s[i];
        double* db = biases[l].data.data();
        const double* sb = other.biases[l].data.data();
        for (int64_t i = 0; i < biases[l].numel(); ++i) db[i] = tau * db[i] + (1.0 - tau) * sb[i];
    }
}

namespace {

std::vector<int64_t> layer_dims(const ModelSpec& spec) {
    std::vector<int64_t> dims;
    dims.push_back(spec.input_dim);
    for (int64_t h : spec.hidden_dims) dims.push_back(h);
    dims.push_back(spec.num_classes);
    return dims;
}

}  // namespace

ModelParams init_params(const ModelSpec& spec, uint64_t seed) {
    spec.validate();
    ModelParams p;
    p.spec = spec;
    auto dims = layer_dims(spec);
    for (size_t l = 0; l + 1 < dims.size(); ++l) {
        int64_t fan_in = dims[l], fan_out = dims[l + 1];
        double limit = std::sqrt(6.0 / (double)fan_in);
        Tensor w({fan_in, fan_out});
        rng::Key wkey{seed, rng::Stream::weight_init, (uint64_t)l, 0};
        for (int64_t i = 0; i < w.numel(); ++i)
            w.data[i] = rng::uniform(wkey, (uint64_t)i, -limit, limit);
        p.weights.push_back(std::move(w));
        p.biases.emplace_back(std::vector<int64_t>{fan_out}, 0.0);
    }
    return p;
}

ModelParams zeros_like(const ModelSpec& spec) {
    spec.validate();
    ModelParams p;
    p.spec = spec;
    auto dims = layer_dims(spec);
    for (size_t l = 0; l + 1 < dims.size(); ++l) {
        p.weights.emplace_back(std::vector<int64_t>{dims[l], dims[l + 1]});
        p.biases.emplace_back(std::vector<int64_t>{dims[l + 1]});
    }
    return p;
}

std::vector<std::string> param_names(const ModelSpec& spec) {
    std::vector<std::string> names;
    size_t layers = spec.hidden_dims.size() + 1;
    for (size_t l = 0; l < layers; ++l) {
        names.push_back("w" + std::to_string(l));
        names.push_back("b" + std::to_string(l));
    }
    return names;
}

std::map<std::string, Tensor> param_bindings(const ModelParams& p) {
    std::map<std::string, Tensor> b;
    for (size_t l = 0; l < p.weights.size(); ++l) {
        b.emplace("w" + std::to_string(l), p.weights[l]);
        b.emplace("b" + std::to_string(l), p.biases[l]);
    }
    return b;
}

ParamNodes add_param_inputs(Graph& g, const ModelSpec& spec) {
    spec.validate();
    ParamNodes pn;
    auto dims = layer_dims(spec);
    for (size_t l = 0; l + 1 < dims.size(); ++l) {
        pn.w.push_back(g.input("w" + std::to_string(l), {dims[l], dims[l + 1]}));
        pn.b.push_back(g.input("b" + std::to_string(l), {dims[l + 1]}));
    }
    return pn;
}

Tower add_tower(Graph& g, const ModelSpec& spec, const ParamNodes& params, NodeId x_node) {
    Tower t;
    NodeId h = x_node;
    size_t hidden = spec.hidden_dims.size();
    for (size_t l = 0; l < hidden; ++l) {
        h = g.relu(g.bias_add(g.matmul(h, params.w[l]), params.b[l]));
    }
    t.features = h;
    t.logits = g.bias_add(g.matmul(h, params.w[hidden]), params.b[hidden]);
    return t;
}

void model_forward(const ModelParams& p, const Tensor& batch, Tensor* logits, Tensor* features) {
    if (batch.shape.size() != 2 || batch.shape[1] != p.spec.input_dim)
        throw ValueError("model_forward: batch " + batch.shape_str() + " vs input_dim " +
                         std::to_string(p.spec.input_dim));
    int64_t B = batch.shape[0];
    size_t hidden = p.spec.hidden_dims.size();
    Tensor cur = batch;
    for (size_t l = 0; l < hidden; ++l) {
        int64_t in = p.weights[l].shape[0], out = p.weights[l].shape[1];
        Tensor z({B, out});
        kernels::matmul_nn(cur.data.data(), p.weights[l].data.data(), z.data.data(), B, in, out, false);
        kernels::bias_add(z.data.data(), p.biases[l].data.data(), z.data.data(), B, out);
        kernels::relu(z.data.data(), z.data.data(), B * out);
        cur = std::move(z);
    }
    if (features) *features = cur;
    int64_t in = p.weights[hidden].shape[0], out = p.weights[hidden].shape[1];
    Tensor z({B, out});
    kernels::matmul_nn(cur.data.data(), p.weights[hidden].data.data(), z.data.data(), B, in, out, false);
    kernels::bias_add(z.data.data(), p.biases[hidden].data.data(), z.data.data(), B, out);
    if (logits) *logits = std::move(z);
}

std::vector<int32_t> predict(const Tensor& logits) {
    int64_t B = logits.shape[0], C = logits.shape[1];
    std::vector<int32_t> out(B);
    for (int64_t r = 0; r < B; ++r) {
        const double* z = logits.data.data() + r * C;
        int32_t best = 0;
        for (int32_t c = 1; c < C; ++c)
            if (z[c] > z[best]) best = c;
        out[r] = best;
    }
    return out;
}

int64_t count_correct(const Tensor& logits, const std::vector<int32_t>& labels) {
    auto pred = predict(logits);
    if (pred.size() != labels.size()) throw ValueError("count_correct: label count mismatch");
    int64_t n = 0;
    for (size_t i = 0; i < pred.size(); ++i)
        if (pred[i] == labels[i]) ++n;
    return n;
}

namespace {

constexpr char kMagic[4] = {'F', 'A', 'T', 'C'};
constexpr uint32_t kVersion = 1;

void write_u32(std::ofstream& f, uint32_t v) { f.write(reinterpret_cast<const char*>(&v), 4); }

uint32_t read_u32(std::ifstream& f, const std::string& path, int64_t& offset) {
    uint32_t v = 0;
    f.read(reinterpret_cast<char*>(&v), 4);
    if (!f) throw ValueError("checkpoint " + path + ": truncated at byte " + std::to_string(offset));
    offset += 4;
    return v;
}

void write_doubles(std::ofstream& f, const std::vector<double>& v) {
    f.write(reinterpret_cast<const char*>(v.data()), (std::streamsize)(v.size() * 8));
}

void read_doubles(std::ifstream& f, std::vector<double>& v, const std::string& path, int64_t& offset) {
    f.read(reinterpret_cast<char*>(v.data()), (std::streamsize)(v.size() * 8));
    if (!f) throw ValueError("checkpoint " + path + ": truncated at byte " + std::to_string(offset));
    offset += (int64_t)v.size() * 8;
}

}  // namespace

void save_checkpoint(const std::string& path, const ModelParams& p, const CheckpointManifest& m) {
    // layout assumes a little-endian host, as does the IDX reader's byte swap
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw ValueError("cannot write checkpoint " + path);
    f.write(kMagic, 4);
    write_u32(f, kVersion);
    write_u32(f, (uint32_t)p.spec.input_dim);
    write_u32(f, (uint32_t)p.spec.hidden_dims.size());
    for (int64_t h : p.spec.hidden_dims) write_u32(f, (uint32_t)h);
    write_u32(f, (uint32_t)p.spec.num_classes);
    for (size_t l = 0; l < p.weights.size(); ++l) {
        write_doubles(f, p.weights[l].data);
        write_doubles(f, p.biases[l].data);
    }
    if (!f) throw ValueError("write failed for checkpoint " + path);
    f.close();

    std::ofstream mf(path + ".manifest", std::ios::trunc);
    if (!mf) throw ValueError("cannot write manifest for " + path);
    mf << "seed=" << m.seed << "\n";
    mf << "epoch=" << m.epoch << "\n";
    mf << "config_hash=" << m.config_hash << "\n";
    mf << "averaged=" << (m.averaged ? 1 : 0) << "\n";
}

ModelParams load_checkpoint(const std::string& path, CheckpointManifest* manifest) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw ValueError("cannot open checkpoint " + path);
    int64_t offset = 0;
    char magic[4] = {};
    f.read(magic, 4);
    if (!f || std::memcmp(magic, kMagic, 4) != 0)
        throw ValueError("checkpoint " + path + ": bad magic at byte 0");
    offset += 4;
    uint32_t version = read_u32(f, path, offset);
    if (version != kVersion)
        throw ValueError("checkpoint " + path + ": version " + std::to_string(version) +
                         ", expected " + std::to_string(kVersion));
    ModelSpec spec;
    spec.input_dim = read_u32(f, path, offset);
    uint32_t nh = read_u32(f, path, offset);
    if (nh > 64) throw ValueError("checkpoint " + path + ": implausible hidden-layer count " +
                                  std::to_string(nh) + " at byte 8");
    for (uint32_t i = 0; i < nh; ++i) spec.hidden_dims.push_back(read_u32(f, path, offset));
    spec.num_classes = read_u32(f, path, offset);
    spec.validate();

    ModelParams p = zeros_like(spec);
    for (size_t l = 0; l < p.weights.size(); ++l) {
        read_doubles(f, p.weights[l].data, path, offset);
        read_doubles(f, p.biases[l].data, path, offset);
    }
    f.peek();
    if (!f.eof())
        throw ValueError("checkpoint " + path + ": trailing bytes after offset " + std::to_string(offset));

    if (manifest) {
        std::ifstream mf(path + ".manifest");
        if (mf) {
            std::string line;
            while (std::getline(mf, line)) {
                auto eq = line.find('=');
                if (eq == std::string::npos) continue;
                std::string key = line.substr(0, eq), val = line.substr(eq + 1);
                if (key == "seed") manifest->seed = std::stoull(val);
                else if (key == "epoch") manifest->epoch = std::stoll(val);
                else if (key == "config_hash") manifest->config_hash = val;
                else if (key == "averaged") manifest->averaged = val == "1";
            }
        }
    }
    return p;
}

}  // namespace fatlab
