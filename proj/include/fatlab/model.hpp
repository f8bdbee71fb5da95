#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "fatlab/graph.hpp"
#include "fatlab/tensor.hpp"

namespace fatlab {

struct ModelSpec {
    int64_t input_dim = 0;
    std::vector<int64_t> hidden_dims;
    int64_t num_classes = 0;

    void validate() const;  // all dims >= 1, at least one hidden layer
    bool operator==(const ModelSpec& o) const = default;
    int64_t total_count() const;
    std::string to_string() const;
};

// One weight matrix [in,out] plus bias [out] per layer, in forward order.
// The last hidden layer's post-ReLU activations are the feature tap.
struct ModelParams {
    ModelSpec spec;
    std::vector<Tensor> weights;
    std::vector<Tensor> biases;

    int64_t total_count() const { return spec.total_count(); }
    // p <- tau*p + (1-tau)*other, elementwise; specs must match
    void mix_from(const ModelParams& other, double tau);
};

ModelParams init_params(const ModelSpec& spec, uint64_t seed);
ModelParams zeros_like(const ModelSpec& spec);

std::vector<std::string> param_names(const ModelSpec& spec);  // w0,b0,w1,b1,...
std::map<std::string, Tensor> param_bindings(const ModelParams& p);

struct ParamNodes {
    std::vector<NodeId> w;
    std::vector<NodeId> b;
};

struct Tower {
    NodeId logits = -1;
    NodeId features = -1;
};

// Declares w0,b0,... as graph inputs so one graph can run several towers
// (clean / eta / adversarial) through shared parameters.
ParamNodes add_param_inputs(Graph& g, const ModelSpec& spec);
Tower add_tower(Graph& g, const ModelSpec& spec, const ParamNodes& params, NodeId x_node);

// Plain inference without a graph: fills logits [B,C] and, when features is
// non-null, the post-ReLU last hidden activations [B,H]. Same kernels as the
// graph path, so bits agree.
void model_forward(const ModelParams& p, const Tensor& batch, Tensor* logits, Tensor* features);

int64_t count_correct(const Tensor& logits, const std::vector<int32_t>& labels);
std::vector<int32_t> predict(const Tensor& logits);

struct CheckpointManifest {
    uint64_t seed = 0;
    int64_t epoch = 0;
    std::string config_hash;
    bool averaged = false;
};

void save_checkpoint(const std::string& path, const ModelParams& p, const CheckpointManifest& m);
ModelParams load_checkpoint(const std::string& path, CheckpointManifest* manifest = nullptr);

}  // namespace fatlab
