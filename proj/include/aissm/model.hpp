#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "aissm/config.hpp"
#include "aissm/frames.hpp"
#include "aissm/parameters.hpp"
#include "aissm/tensor.hpp"

namespace aissm {

enum class Arch { aissm, cnn, cnn_gru };

// stochastic: draw from softmax; argmax: mode; relaxed: forward value is the
// softmax itself (used where finite differences must see a smooth function).
enum class SamplingMode { stochastic, argmax, relaxed };

const char* to_string(Arch arch);
const char* to_string(SamplingMode mode);
Arch parse_arch(const std::string& name);
SamplingMode parse_sampling(const std::string& name);

struct ModelConfig {
    Arch arch = Arch::aissm;
    std::uint32_t input_height = 120;
    std::uint32_t input_width = 160;
    // First conv is 4x4 stride 4; the rest are 3x3 stride 2 padding 1.
    std::vector<std::size_t> conv_channels{8, 16, 32};
    // Hidden widths of the encoder MLP (trunk features for the baselines).
    std::vector<std::size_t> mlp_widths{96};
    std::size_t n_vars = 16;
    std::size_t n_classes = 16;
    std::size_t d_r = 96;
    std::size_t prior_hidden = 128;
    std::size_t head_hidden = 128;
    std::vector<std::size_t> conf_channels{4, 8};
    std::size_t conf_hidden = 16;
    // Block task-loss gradients into the confidence network.
    bool alpha_stopgrad = true;
    SamplingMode eval_sampling = SamplingMode::argmax;
    std::size_t budget = 500000;
    double budget_tolerance = 0.10;

    static ModelConfig defaults(Arch arch);
    // Starts from defaults(arch) and applies every recognised key.
    static ModelConfig from_key_values(const KeyValues& kv);
    KeyValues to_key_values() const;

    std::size_t d_s() const { return n_vars * n_classes; }
    void validate() const;
};

// Recurrent carry between frames. Baselines leave unused parts empty.
struct ModelState {
    std::vector<double> h;
    std::vector<double> s_prev;

    friend bool operator==(const ModelState&, const ModelState&) = default;
};

struct StepContext {
    SamplingMode mode = SamplingMode::argmax;
    std::mt19937_64* rng = nullptr;  // required for stochastic sampling
    std::optional<double> alpha_override;
};

struct StepResult {
    ad::Tensor y_hat;      // [2], normalized centroid
    ad::Tensor alpha_hat;  // [1]; undefined for baselines
    ad::Tensor s_q, s_p, s_bar;
    ad::Tensor h;       // next recurrent vector (undefined for CNN)
    ad::Tensor s_next;  // next s_prev (AISSM)
};

// Straight-through categorical sample over the rows of z:
// sg(onehot) + (σ(z) − sg(σ(z))).
ad::Tensor st_sample(const ad::Tensor& logits, SamplingMode mode, std::mt19937_64* rng);

// α·s_q + (1 − α)·s_p
ad::Tensor fuse(const ad::Tensor& s_q, const ad::Tensor& s_p, const ad::Tensor& alpha);

struct ConvLayer {
    ad::Tensor weight;
    ad::Tensor bias;
    std::size_t stride = 1;
    std::size_t padding = 0;
};

struct DenseLayer {
    ad::Tensor weight;
    ad::Tensor bias;
};

class Model {
public:
    explicit Model(ModelConfig config, std::uint64_t seed = 0);

    Model(const Model&) = delete;
    Model& operator=(const Model&) = delete;
    Model(Model&&) = default;
    Model& operator=(Model&&) = default;

    const ModelConfig& config() const { return config_; }
    ParameterSet& parameters() { return params_; }
    const ParameterSet& parameters() const { return params_; }

    std::size_t param_count() const { return params_.count(); }
    // Scalar count per top-level group: encoder, dynamics, prior, confidence, head.
    std::map<std::string, std::size_t> group_counts() const;
    // Throws ConfigError when the count leaves budget ± tolerance.
    void check_budget() const;

    ModelState initial_state() const;
    ad::Tensor observation(const EventFrame& frame) const;

    ad::Tensor encoder(const ad::Tensor& obs) const;             // [n_vars, n_classes]
    ad::Tensor dynamics(const ad::Tensor& h_prev, const ad::Tensor& s_prev) const;  // [d_r]
    ad::Tensor prior(const ad::Tensor& h) const;                 // [n_vars, n_classes]
    ad::Tensor confidence(const ad::Tensor& obs) const;          // [1]
    ad::Tensor head(const ad::Tensor& features) const;           // [2]

    // Conv trunk + MLP hidden layers; the encoder's shared body.
    ad::Tensor trunk(const ad::Tensor& obs) const;
    ad::Tensor baseline_cnn(const ad::Tensor& obs) const;
    // Returns (y_hat, h').
    std::pair<ad::Tensor, ad::Tensor> baseline_cnn_gru(const ad::Tensor& obs, const ad::Tensor& h_prev) const;

    // One frame for any architecture. state tensors: h [d_r] and s_prev [d_s] as used.
    StepResult step(const ad::Tensor& obs, const ad::Tensor& h_prev, const ad::Tensor& s_prev,
                    StepContext& ctx) const;
    StepResult step(const ad::Tensor& obs, const ModelState& state, StepContext& ctx) const;

    static ModelState to_state(const StepResult& r);

private:
    ModelConfig config_;
    ParameterSet params_;
    std::vector<ConvLayer> enc_convs_;
    std::vector<DenseLayer> enc_mlp_;
    DenseLayer enc_out_;
    ad::GruWeights gru_;
    DenseLayer prior_hidden_;
    DenseLayer prior_out_;
    std::vector<ConvLayer> conf_convs_;
    DenseLayer conf_hidden_;
    DenseLayer conf_out_;
    DenseLayer head_hidden_;
    DenseLayer head_out_;
};

// Spatial size after the conv plan: first layer k4 s4, later k3 s2 p1.
std::pair<std::size_t, std::size_t> conv_stack_output(std::size_t height, std::size_t width, std::size_t layers);

}  // namespace aissm
