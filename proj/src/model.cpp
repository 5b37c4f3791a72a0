#include "aissm/model.hpp"

#include <algorithm>
#include <cmath>

#include "aissm/errors.hpp"

namespace aissm {

using ad::Tensor;

const char* to_string(Arch arch) {
    switch (arch) {
        case Arch::aissm: return "aissm";
        case Arch::cnn: return "cnn";
        case Arch::cnn_gru: return "cnn_gru";
    }
    return "?";
}

const char* to_string(SamplingMode mode) {
    switch (mode) {
        case SamplingMode::stochastic: return "stochastic";
        case SamplingMode::argmax: return "argmax";
        case SamplingMode::relaxed: return "relaxed";
    }
    return "?";
}

Arch parse_arch(const std::string& name) {
    if (name == "aissm") return Arch::aissm;
    if (name == "cnn") return Arch::cnn;
    if (name == "cnn_gru" || name == "cnn-gru") return Arch::cnn_gru;
    throw ConfigError("unknown model arch '" + name + "' (expected aissm, cnn, cnn_gru)");
}

SamplingMode parse_sampling(const std::string& name) {
    if (name == "stochastic") return SamplingMode::stochastic;
    if (name == "argmax" || name == "mode") return SamplingMode::argmax;
    if (name == "relaxed") return SamplingMode::relaxed;
    throw ConfigError("unknown sampling mode '" + name + "'");
}

// ---------------------------------------------------------------------------
// ModelConfig

ModelConfig ModelConfig::defaults(Arch arch) {
    ModelConfig c;
    c.arch = arch;
    switch (arch) {
        case Arch::aissm:
            break;
        case Arch::cnn:
            c.mlp_widths = {180};
            break;
        case Arch::cnn_gru:
            c.mlp_widths = {140};
            c.d_r = 128;
            break;
    }
    return c;
}

ModelConfig ModelConfig::from_key_values(const KeyValues& kv) {
    ModelConfig c = defaults(parse_arch(kv.get_string("arch", "aissm")));
    c.input_height = static_cast<std::uint32_t>(kv.get_uint("input_height", c.input_height));
    c.input_width = static_cast<std::uint32_t>(kv.get_uint("input_width", c.input_width));
    c.conv_channels = kv.get_sizes("conv_channels", c.conv_channels);
    c.mlp_widths = kv.get_sizes("mlp_widths", c.mlp_widths);
    c.n_vars = kv.get_uint("n_vars", c.n_vars);
    c.n_classes = kv.get_uint("n_classes", c.n_classes);
    c.d_r = kv.get_uint("d_r", c.d_r);
    c.prior_hidden = kv.get_uint("prior_hidden", c.prior_hidden);
    c.head_hidden = kv.get_uint("head_hidden", c.head_hidden);
    c.conf_channels = kv.get_sizes("conf_channels", c.conf_channels);
    c.conf_hidden = kv.get_uint("conf_hidden", c.conf_hidden);
    c.alpha_stopgrad = kv.get_bool("alpha_stopgrad", c.alpha_stopgrad);
    c.eval_sampling = parse_sampling(kv.get_string("eval_sampling", to_string(c.eval_sampling)));
    c.budget = kv.get_uint("budget", c.budget);
    c.budget_tolerance = kv.get_double("budget_tolerance", c.budget_tolerance);
    c.validate();
    return c;
}

KeyValues ModelConfig::to_key_values() const {
    KeyValues kv;
    kv.set("arch", to_string(arch));
    kv.set("input_height", std::to_string(input_height));
    kv.set("input_width", std::to_string(input_width));
    kv.set("conv_channels", join_sizes(conv_channels));
    kv.set("mlp_widths", join_sizes(mlp_widths));
    kv.set("n_vars", std::to_string(n_vars));
    kv.set("n_classes", std::to_string(n_classes));
    kv.set("d_r", std::to_string(d_r));
    kv.set("prior_hidden", std::to_string(prior_hidden));
    kv.set("head_hidden", std::to_string(head_hidden));
    kv.set("conf_channels", join_sizes(conf_channels));
    kv.set("conf_hidden", std::to_string(conf_hidden));
    kv.set("alpha_stopgrad", alpha_stopgrad ? "on" : "off");
    kv.set("eval_sampling", to_string(eval_sampling));
    kv.set("budget", std::to_string(budget));
    char tol[32];
    std::snprintf(tol, sizeof tol, "%.17g", budget_tolerance);
    kv.set("budget_tolerance", tol);
    return kv;
}

void ModelConfig::validate() const {
    if (n_vars < 2 || n_classes < 2) throw ConfigError("model: n_vars and n_classes must be >= 2");
    if (d_r == 0 || prior_hidden == 0 || head_hidden == 0 || conf_hidden == 0) {
        throw ConfigError("model: layer widths must be >= 1");
    }
    for (auto w : mlp_widths) {
        if (w == 0) throw ConfigError("model: mlp_widths entries must be >= 1");
    }
    for (auto c : conv_channels) {
        if (c == 0) throw ConfigError("model: conv_channels entries must be >= 1");
    }
    for (auto c : conf_channels) {
        if (c == 0) throw ConfigError("model: conf_channels entries must be >= 1");
    }
    const std::size_t max_layers = std::max(conv_channels.size(), conf_channels.size());
    if (max_layers > 0 && (input_height < 4 || input_width < 4)) {
        throw ConfigError("model: input must be at least 4x4 for the conv stack");
    }
}

std::pair<std::size_t, std::size_t> conv_stack_output(std::size_t height, std::size_t width, std::size_t layers) {
    for (std::size_t i = 0; i < layers; ++i) {
        if (i == 0) {
            height = (height - 4) / 4 + 1;
            width = (width - 4) / 4 + 1;
        } else {
            height = (height + 2 - 3) / 2 + 1;
            width = (width + 2 - 3) / 2 + 1;
        }
    }
    return {height, width};
}

// ---------------------------------------------------------------------------
// Sampling and fusion

Tensor st_sample(const Tensor& logits, SamplingMode mode, std::mt19937_64* rng) {
    const Tensor probs = ad::softmax(logits);
    if (mode == SamplingMode::relaxed) return probs;
    if (mode == SamplingMode::stochastic && rng == nullptr) {
        throw ConfigError("st_sample: stochastic sampling needs a random generator");
    }
    const std::size_t n = logits.shape().back();
    const std::size_t rows = logits.numel() / n;
    const auto p = probs.data();
    std::vector<double> hard(p.size(), 0.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (std::size_t r = 0; r < rows; ++r) {
        const double* pr = p.data() + r * n;
        std::size_t pick = 0;
        if (mode == SamplingMode::argmax) {
            pick = static_cast<std::size_t>(std::max_element(pr, pr + n) - pr);
        } else {
            const double u = unit(*rng);
            double cum = 0.0;
            pick = n - 1;
            for (std::size_t i = 0; i < n; ++i) {
                cum += pr[i];
                if (u < cum) {
                    pick = i;
                    break;
                }
            }
        }
        hard[r * n + pick] = 1.0;
    }
    const Tensor sample = Tensor::from(logits.shape(), std::move(hard));
    return ad::add(sample, ad::sub(probs, probs.detach()));
}

Tensor fuse(const Tensor& s_q, const Tensor& s_p, const Tensor& alpha) {
    if (s_q.numel() != s_p.numel()) throw ShapeError("fuse: latent sizes differ");
    return ad::add(ad::scalar_mul(alpha, s_q), ad::scalar_mul(ad::one_minus(alpha), s_p));
}

// ---------------------------------------------------------------------------
// Model

namespace {

Tensor apply(const DenseLayer& l, const Tensor& x) { return ad::affine(x, l.weight, l.bias); }

Tensor apply(const ConvLayer& l, const Tensor& x) { return ad::conv2d(x, l.weight, l.bias, l.stride, l.padding); }

}  // namespace

Model::Model(ModelConfig config, std::uint64_t seed) : config_(std::move(config)) {
    config_.validate();
    std::mt19937_64 rng(seed);

    auto conv = [&](const std::string& name, std::size_t c_in, std::size_t c_out, bool first) {
        const std::size_t k = first ? 4 : 3;
        ConvLayer l;
        l.stride = first ? 4 : 2;
        l.padding = first ? 0 : 1;
        l.weight = params_.add(name + ".weight", Tensor::zeros({c_out, c_in, k, k}, true));
        l.bias = params_.add(name + ".bias", Tensor::zeros({c_out}, true));
        init::kaiming_uniform(l.weight, c_in * k * k, rng);
        return l;
    };
    auto dense = [&](const std::string& name, std::size_t in, std::size_t out) {
        DenseLayer l;
        l.weight = params_.add(name + ".weight", Tensor::zeros({out, in}, true));
        l.bias = params_.add(name + ".bias", Tensor::zeros({out}, true));
        init::kaiming_uniform(l.weight, in, rng);
        return l;
    };
    auto gru = [&](std::size_t d_in, std::size_t d_r) {
        gru_.w_input = params_.add("dynamics.w_input", Tensor::zeros({3 * d_r, d_in}, true));
        gru_.w_hidden = params_.add("dynamics.w_hidden", Tensor::zeros({3 * d_r, d_r}, true));
        gru_.b_input = params_.add("dynamics.b_input", Tensor::zeros({3 * d_r}, true));
        gru_.b_hidden = params_.add("dynamics.b_hidden", Tensor::zeros({3 * d_r}, true));
        init::kaiming_uniform(gru_.w_input, d_in, rng);
        init::orthogonal_blocks(gru_.w_hidden, d_r, rng);
    };

    std::size_t channels = 1;
    for (std::size_t i = 0; i < config_.conv_channels.size(); ++i) {
        enc_convs_.push_back(conv("encoder.conv" + std::to_string(i), channels, config_.conv_channels[i], i == 0));
        channels = config_.conv_channels[i];
    }
    auto [oh, ow] = conv_stack_output(config_.input_height, config_.input_width, config_.conv_channels.size());
    std::size_t features = channels * oh * ow;
    for (std::size_t i = 0; i < config_.mlp_widths.size(); ++i) {
        enc_mlp_.push_back(dense("encoder.fc" + std::to_string(i), features, config_.mlp_widths[i]));
        features = config_.mlp_widths[i];
    }

    std::size_t head_in = features;
    switch (config_.arch) {
        case Arch::aissm: {
            enc_out_ = dense("encoder.out", features, config_.d_s());
            gru(config_.d_s(), config_.d_r);
            prior_hidden_ = dense("prior.fc0", config_.d_r, config_.prior_hidden);
            prior_out_ = dense("prior.out", config_.prior_hidden, config_.d_s());
            std::size_t c = 1;
            for (std::size_t i = 0; i < config_.conf_channels.size(); ++i) {
                conf_convs_.push_back(conv("confidence.conv" + std::to_string(i), c, config_.conf_channels[i], i == 0));
                c = config_.conf_channels[i];
            }
            auto [ch, cw] = conv_stack_output(config_.input_height, config_.input_width, config_.conf_channels.size());
            conf_hidden_ = dense("confidence.fc0", c * ch * cw, config_.conf_hidden);
            conf_out_ = dense("confidence.out", config_.conf_hidden, 1);
            head_in = config_.d_s();
            break;
        }
        case Arch::cnn:
            break;
        case Arch::cnn_gru:
            gru(features, config_.d_r);
            head_in = config_.d_r;
            break;
    }
    head_hidden_ = dense("head.fc0", head_in, config_.head_hidden);
    head_out_ = dense("head.out", config_.head_hidden, 2);
}

std::map<std::string, std::size_t> Model::group_counts() const {
    std::map<std::string, std::size_t> out;
    for (const auto& [name, t] : params_) out[name.substr(0, name.find('.'))] += t.numel();
    return out;
}

void Model::check_budget() const {
    const double count = static_cast<double>(param_count());
    const double lo = config_.budget * (1.0 - config_.budget_tolerance);
    const double hi = config_.budget * (1.0 + config_.budget_tolerance);
    if (count < lo || count > hi) {
        throw ConfigError("model " + std::string(to_string(config_.arch)) + " has " + std::to_string(param_count()) +
                          " parameters, outside the budget " + std::to_string(config_.budget) + " +/- " +
                          std::to_string(static_cast<int>(config_.budget_tolerance * 100)) + "%");
    }
}

ModelState Model::initial_state() const {
    ModelState s;
    if (config_.arch != Arch::cnn) s.h.assign(config_.d_r, 0.0);
    if (config_.arch == Arch::aissm) s.s_prev.assign(config_.d_s(), 0.0);
    return s;
}

Tensor Model::observation(const EventFrame& frame) const {
    if (frame.height != config_.input_height || frame.width != config_.input_width) {
        throw ShapeError("observation: frame is " + std::to_string(frame.width) + "x" + std::to_string(frame.height) +
                         ", model expects " + std::to_string(config_.input_width) + "x" +
                         std::to_string(config_.input_height));
    }
    return Tensor::from({1, config_.input_height, config_.input_width}, frame.binary_values());
}

Tensor Model::trunk(const Tensor& obs) const {
    if (obs.rank() != 3 || obs.dim(0) != 1 || obs.dim(1) != config_.input_height || obs.dim(2) != config_.input_width) {
        throw ShapeError("model input must be [1," + std::to_string(config_.input_height) + "," +
                         std::to_string(config_.input_width) + "], got " + ad::shape_str(obs.shape()));
    }
    Tensor x = obs;
    for (const auto& c : enc_convs_) x = ad::silu(apply(c, x));
    x = ad::flatten(x);
    for (const auto& d : enc_mlp_) x = ad::silu(apply(d, x));
    return x;
}

Tensor Model::encoder(const Tensor& obs) const {
    if (config_.arch != Arch::aissm) throw ConfigError("encoder posterior exists only for the aissm arch");
    return ad::reshape(apply(enc_out_, trunk(obs)), {config_.n_vars, config_.n_classes});
}

Tensor Model::dynamics(const Tensor& h_prev, const Tensor& s_prev) const {
    if (config_.arch == Arch::cnn) throw ConfigError("cnn arch has no recurrent dynamics");
    return ad::gru_cell(s_prev, h_prev, gru_);
}

Tensor Model::prior(const Tensor& h) const {
    if (config_.arch != Arch::aissm) throw ConfigError("transition prior exists only for the aissm arch");
    if (h.numel() != config_.d_r) throw ShapeError("prior: expected h of size " + std::to_string(config_.d_r));
    const Tensor x = ad::silu(apply(prior_hidden_, ad::flatten(h)));
    return ad::reshape(apply(prior_out_, x), {config_.n_vars, config_.n_classes});
}

Tensor Model::confidence(const Tensor& obs) const {
    if (config_.arch != Arch::aissm) throw ConfigError("confidence network exists only for the aissm arch");
    Tensor x = obs;
    for (const auto& c : conf_convs_) x = ad::silu(apply(c, x));
    x = ad::silu(apply(conf_hidden_, ad::flatten(x)));
    return ad::sigmoid(apply(conf_out_, x));
}

Tensor Model::head(const Tensor& features) const {
    const Tensor x = ad::silu(apply(head_hidden_, ad::flatten(features)));
    return ad::sigmoid(apply(head_out_, x));
}

Tensor Model::baseline_cnn(const Tensor& obs) const {
    if (config_.arch != Arch::cnn) throw ConfigError("baseline_cnn needs the cnn arch");
    return head(trunk(obs));
}

std::pair<Tensor, Tensor> Model::baseline_cnn_gru(const Tensor& obs, const Tensor& h_prev) const {
    if (config_.arch != Arch::cnn_gru) throw ConfigError("baseline_cnn_gru needs the cnn_gru arch");
    Tensor h = ad::gru_cell(trunk(obs), h_prev, gru_);
    Tensor y = head(h);
    return {y, h};
}

StepResult Model::step(const Tensor& obs, const Tensor& h_prev, const Tensor& s_prev, StepContext& ctx) const {
    StepResult r;
    switch (config_.arch) {
        case Arch::cnn:
            r.y_hat = baseline_cnn(obs);
            return r;
        case Arch::cnn_gru: {
            auto [y, h] = baseline_cnn_gru(obs, h_prev);
            r.y_hat = y;
            r.h = h;
            return r;
        }
        case Arch::aissm:
            break;
    }
    r.h = dynamics(h_prev, s_prev);
    r.s_p = ad::flatten(st_sample(prior(r.h), ctx.mode, ctx.rng));
    r.s_q = ad::flatten(st_sample(encoder(obs), ctx.mode, ctx.rng));
    r.alpha_hat = confidence(obs);
    Tensor alpha;
    if (ctx.alpha_override) {
        alpha = Tensor::scalar(*ctx.alpha_override);
    } else {
        alpha = config_.alpha_stopgrad ? r.alpha_hat.detach() : r.alpha_hat;
    }
    r.s_bar = fuse(r.s_q, r.s_p, alpha);
    r.y_hat = head(r.s_bar);
    r.s_next = r.s_q;
    return r;
}

StepResult Model::step(const Tensor& obs, const ModelState& state, StepContext& ctx) const {
    const Tensor h = state.h.empty() ? Tensor() : Tensor::from({state.h.size()}, state.h);
    const Tensor s = state.s_prev.empty() ? Tensor() : Tensor::from({state.s_prev.size()}, state.s_prev);
    return step(obs, h, s, ctx);
}

ModelState Model::to_state(const StepResult& r) {
    ModelState s;
    if (r.h.defined()) s.h = r.h.to_vector();
    if (r.s_next.defined()) s.s_prev = r.s_next.to_vector();
    return s;
}

}  // namespace aissm
