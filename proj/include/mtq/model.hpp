#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "mtq/dataset.hpp"
#include "mtq/task.hpp"

namespace mtq {

// Feedforward regressor with a shared trunk and one branch per task.
// trunk_layers lists the hidden widths of the full stack; layers before
// split_index are shared, layers from split_index on are replicated into
// every branch. branch_layers adds further per-task hidden widths, and each
// branch ends in a one-node linear head. split_index == trunk depth with no
// branch layers degenerates to a shared trunk with one output node per task.
struct Architecture {
    int input_dim = 0;
    std::vector<int> trunk_layers;
    int split_index = 0;
    std::vector<int> branch_layers;
    std::vector<TaskId> tasks;

    void validate() const;
    // Widths of one branch stack: replicated trunk tail + branch_layers + head.
    std::vector<int> branch_widths() const;
    int shared_output_dim() const;  // width feeding the branches
    std::size_t param_count() const;
    std::string descriptor() const;
    static Architecture from_descriptor(const std::string& line);
};

struct Layer {
    Eigen::MatrixXd W;  // out x in
    Eigen::VectorXd b;  // out
};

struct ModelParams {
    std::vector<Layer> trunk;                  // shared layers
    std::vector<std::vector<Layer>> branches;  // [task][layer], last = head

    std::size_t num_tasks() const { return branches.size(); }

    // Applies fn to every layer of *this paired with the same layer of
    // others. All arguments must share one shape.
    template <class Fn, class... Ts>
    void visit(Fn&& fn, Ts&... others) {
        for (std::size_t i = 0; i < trunk.size(); ++i) fn(trunk[i], others.trunk[i]...);
        for (std::size_t t = 0; t < branches.size(); ++t)
            for (std::size_t i = 0; i < branches[t].size(); ++i)
                fn(branches[t][i], others.branches[t][i]...);
    }
    template <class Fn, class... Ts>
    void visit(Fn&& fn, const Ts&... others) const {
        for (std::size_t i = 0; i < trunk.size(); ++i) fn(trunk[i], others.trunk[i]...);
        for (std::size_t t = 0; t < branches.size(); ++t)
            for (std::size_t i = 0; i < branches[t].size(); ++i)
                fn(branches[t][i], others.branches[t][i]...);
    }

    ModelParams zeros_like() const;
    bool same_shape(const ModelParams& other) const;
};

using ParamGrads = ModelParams;

// Pre-activations and activations of one batch, enough for exact gradients.
struct ForwardCache {
    Eigen::MatrixXd input;
    std::vector<Eigen::MatrixXd> trunk_pre;   // per shared layer
    std::vector<Eigen::MatrixXd> trunk_act;   // relu(trunk_pre)
    std::vector<std::vector<Eigen::MatrixXd>> branch_pre;  // [task][layer]
    std::vector<std::vector<Eigen::MatrixXd>> branch_act;  // hidden activations
};

// Uniform(-s, s) with s = sqrt(6 / fan_in), biases zero. Deterministic in
// (arch, seed).
ModelParams init_params(const Architecture& arch, std::uint64_t seed);

// Outputs are batch x T. Pure in (params, x).
std::pair<Eigen::MatrixXd, ForwardCache> forward(const ModelParams& params,
                                                 const Eigen::MatrixXd& x);
Eigen::MatrixXd forward_outputs(const ModelParams& params, const Eigen::MatrixXd& x);

// Gradients of sum(outputs * output_grads) w.r.t. every parameter.
ParamGrads backward(const ModelParams& params, const ForwardCache& cache,
                    const Eigen::MatrixXd& output_grads);

struct GradCheckReport {
    double max_rel_error = 0.0;
    std::size_t params_checked = 0;
    bool pass = false;
};

// Central-difference verification of backward over every parameter.
// Inputs are resampled (deterministically) until all hidden pre-activations
// clear the rectifier kink by a margin, so the difference quotient never
// crosses it.
GradCheckReport gradient_check(const Architecture& arch, std::uint64_t seed,
                               double tolerance, double step = 1e-5);

struct Model {
    Architecture arch;
    ModelParams params;
};

struct Checkpoint {
    Model model;
    std::uint64_t seed = 0;
    int epoch = 0;
};

// Versioned text checkpoint; decimals round-trip at full double precision.
void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace mtq
