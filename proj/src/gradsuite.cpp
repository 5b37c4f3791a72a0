#include "aissm/gradsuite.hpp"

#include <algorithm>
#include <cstdio>
#include <functional>
#include <map>
#include <memory>
#include <ostream>
#include <random>

namespace aissm {

using ad::Tensor;

namespace {

using Loss = std::function<Tensor()>;
// Registers the checked tensors in params and returns the scalar loss.
using Setup = std::function<Loss(std::mt19937_64&, ParameterSet&)>;

struct Case {
    std::string name;
    Setup setup;
};

std::vector<double> uniform(std::mt19937_64& rng, std::size_t n, double lo, double hi) {
    std::uniform_real_distribution<double> d(lo, hi);
    std::vector<double> v(n);
    for (auto& x : v) x = d(rng);
    return v;
}

// Magnitudes in [lo, hi] with random sign.
std::vector<double> away_from_zero(std::mt19937_64& rng, std::size_t n, double lo, double hi) {
    std::uniform_real_distribution<double> mag(lo, hi);
    std::bernoulli_distribution sign(0.5);
    std::vector<double> v(n);
    for (auto& x : v) x = sign(rng) ? mag(rng) : -mag(rng);
    return v;
}

Tensor leaf(ParameterSet& params, const std::string& name, ad::Shape shape, std::vector<double> values) {
    return params.add(name, Tensor::from(std::move(shape), std::move(values)));
}

Tensor random_leaf(ParameterSet& params, const std::string& name, ad::Shape shape, std::mt19937_64& rng,
                   double lo = -1.0, double hi = 1.0) {
    const std::size_t n = ad::shape_numel(shape);
    return leaf(params, name, std::move(shape), uniform(rng, n, lo, hi));
}

// Σ w ⊙ y with fixed random w, so every output coordinate carries weight.
Loss weighted(std::mt19937_64& rng, std::function<Tensor()> f) {
    std::shared_ptr<Tensor> w;
    return [f = std::move(f), w, seed = rng()]() mutable {
        Tensor y = f();
        if (!w) {
            std::mt19937_64 r(seed);
            w = std::make_shared<Tensor>(Tensor::from(y.shape(), uniform(r, y.numel(), -1.0, 1.0)));
        }
        return ad::sum(ad::mul(*w, y));
    };
}

Case unary(const std::string& name, Tensor (*op)(const Tensor&), double lo = -2.0, double hi = 2.0,
           bool avoid_zero = false) {
    return {name, [=](std::mt19937_64& rng, ParameterSet& p) {
                Tensor a = avoid_zero ? leaf(p, "a", {3, 4}, away_from_zero(rng, 12, 0.1, hi))
                                      : random_leaf(p, "a", {3, 4}, rng, lo, hi);
                return weighted(rng, [=] { return op(a); });
            }};
}

Case binary(const std::string& name, Tensor (*op)(const Tensor&, const Tensor&)) {
    return {name, [=](std::mt19937_64& rng, ParameterSet& p) {
                Tensor a = random_leaf(p, "a", {2, 5}, rng, -2.0, 2.0);
                Tensor b = random_leaf(p, "b", {2, 5}, rng, -2.0, 2.0);
                return weighted(rng, [=] { return op(a, b); });
            }};
}

struct ModelFixture {
    std::unique_ptr<Model> model;
    std::vector<Tensor> frames;
    std::vector<Tensor> targets;
    std::vector<Tensor> alphas;
    Tensor h0;
    Tensor s0;
};

std::shared_ptr<ModelFixture> model_fixture(Arch arch, std::mt19937_64& rng, bool alpha_stopgrad) {
    auto fx = std::make_shared<ModelFixture>();
    ModelConfig cfg = tiny_model_config(arch);
    cfg.alpha_stopgrad = alpha_stopgrad;
    fx->model = std::make_unique<Model>(cfg, rng());
    const std::size_t pixels = cfg.input_height * cfg.input_width;
    std::bernoulli_distribution on(0.3);
    for (int k = 0; k < 3; ++k) {
        std::vector<double> v(pixels);
        for (auto& x : v) x = on(rng) ? 1.0 : 0.0;
        fx->frames.push_back(Tensor::from({1, cfg.input_height, cfg.input_width}, std::move(v)));
        fx->targets.push_back(Tensor::from({2}, uniform(rng, 2, 0.05, 0.95)));
        fx->alphas.push_back(Tensor::from({1}, uniform(rng, 1, 0.0, 1.0)));
    }
    if (arch != Arch::cnn) fx->h0 = Tensor::from({cfg.d_r}, uniform(rng, cfg.d_r, -0.5, 0.5));
    if (arch == Arch::aissm) {
        std::vector<double> s(cfg.d_s(), 0.0);
        std::uniform_int_distribution<std::size_t> pick(0, cfg.n_classes - 1);
        for (std::size_t v = 0; v < cfg.n_vars; ++v) s[v * cfg.n_classes + pick(rng)] = 1.0;
        fx->s0 = Tensor::from({cfg.d_s()}, std::move(s));
    }
    return fx;
}

// Task plus confidence Huber summed over a three-frame unroll.
Loss unroll_loss(std::shared_ptr<ModelFixture> fx, SamplingMode mode) {
    return [fx, mode] {
        Tensor h = fx->h0;
        Tensor s = fx->s0;
        Tensor loss;
        for (std::size_t k = 0; k < fx->frames.size(); ++k) {
            StepContext ctx;
            ctx.mode = mode;
            const StepResult r = fx->model->step(fx->frames[k], h, s, ctx);
            Tensor l = ad::huber(fx->targets[k], r.y_hat, 1.0);
            if (r.alpha_hat.defined()) l = ad::add(l, ad::huber(fx->alphas[k], r.alpha_hat, 1.0));
            loss = loss.defined() ? ad::add(loss, l) : l;
            h = r.h;
            s = r.s_next;
        }
        return loss;
    };
}

std::vector<Case> suite_cases() {
    std::vector<Case> cases;
    cases.push_back(binary("add", ad::add));
    cases.push_back(binary("sub", ad::sub));
    cases.push_back(binary("mul", ad::mul));
    cases.push_back({"scale", [](std::mt19937_64& rng, ParameterSet& p) {
                         Tensor a = random_leaf(p, "a", {7}, rng);
                         const double f = uniform(rng, 1, -3.0, 3.0)[0];
                         return weighted(rng, [=] { return ad::scale(a, f); });
                     }});
    cases.push_back({"scalar_mul", [](std::mt19937_64& rng, ParameterSet& p) {
                         Tensor s = random_leaf(p, "s", {1}, rng);
                         Tensor a = random_leaf(p, "a", {6}, rng);
                         return weighted(rng, [=] { return ad::scalar_mul(s, a); });
                     }});
    cases.push_back(unary("one_minus", ad::one_minus));
    cases.push_back(unary("relu", ad::relu, -2.0, 2.0, true));
    cases.push_back(unary("silu", ad::silu, -4.0, 4.0));
    cases.push_back(unary("sigmoid", ad::sigmoid, -4.0, 4.0));
    cases.push_back(unary("tanh", ad::tanh, -2.0, 2.0));
    cases.push_back({"structural", [](std::mt19937_64& rng, ParameterSet& p) {
                         Tensor a = random_leaf(p, "a", {2, 3, 2}, rng);
                         Tensor b = random_leaf(p, "b", {4}, rng);
                         return weighted(rng, [=] {
                             return ad::reshape(ad::concat(ad::slice(ad::flatten(a), 2, 7), b), {11, 1});
                         });
                     }});
    cases.push_back({"sum", [](std::mt19937_64& rng, ParameterSet& p) {
                         Tensor a = random_leaf(p, "a", {3, 3}, rng);
                         return weighted(rng, [=] { return ad::sum(a); });
                     }});
    cases.push_back({"affine", [](std::mt19937_64& rng, ParameterSet& p) {
                         Tensor x = random_leaf(p, "x", {5}, rng);
                         Tensor w = random_leaf(p, "w", {4, 5}, rng);
                         Tensor b = random_leaf(p, "b", {4}, rng);
                         return weighted(rng, [=] { return ad::affine(x, w, b); });
                     }});
    struct ConvShape {
        const char* name;
        std::size_t c_in, h, w, c_out, k, stride, pad;
    };
    for (const ConvShape cs : {ConvShape{"conv2d_k3_s2_p1", 2, 7, 6, 3, 3, 2, 1},
                               ConvShape{"conv2d_k3_s1_p0", 2, 5, 6, 2, 3, 1, 0},
                               ConvShape{"conv2d_k4_s4_p0", 1, 8, 12, 3, 4, 4, 0}}) {
        cases.push_back({cs.name, [cs](std::mt19937_64& rng, ParameterSet& p) {
                             Tensor x = random_leaf(p, "x", {cs.c_in, cs.h, cs.w}, rng);
                             Tensor w = random_leaf(p, "w", {cs.c_out, cs.c_in, cs.k, cs.k}, rng);
                             Tensor b = random_leaf(p, "b", {cs.c_out}, rng);
                             return weighted(rng, [=] { return ad::conv2d(x, w, b, cs.stride, cs.pad); });
                         }});
    }
    cases.push_back({"gru_cell", [](std::mt19937_64& rng, ParameterSet& p) {
                         Tensor x = random_leaf(p, "x", {3}, rng);
                         Tensor h = random_leaf(p, "h", {4}, rng, -0.9, 0.9);
                         ad::GruWeights g{random_leaf(p, "w_input", {12, 3}, rng),
                                          random_leaf(p, "w_hidden", {12, 4}, rng),
                                          random_leaf(p, "b_input", {12}, rng),
                                          random_leaf(p, "b_hidden", {12}, rng)};
                         return weighted(rng, [=] { return ad::gru_cell(x, h, g); });
                     }});
    cases.push_back({"softmax", [](std::mt19937_64& rng, ParameterSet& p) {
                         Tensor z = random_leaf(p, "z", {3, 4}, rng, -3.0, 3.0);
                         return weighted(rng, [=] { return ad::softmax(z); });
                     }});
    cases.push_back({"huber", [](std::mt19937_64& rng, ParameterSet& p) {
                         // Differences straddle both branches but stay clear of |d| = δ.
                         std::vector<double> t = uniform(rng, 8, -1.0, 1.0);
                         std::vector<double> d = away_from_zero(rng, 4, 0.1, 0.9);
                         for (double x : away_from_zero(rng, 4, 1.1, 3.0)) d.push_back(x);
                         std::vector<double> y(8);
                         for (std::size_t i = 0; i < 8; ++i) y[i] = t[i] + d[i];
                         Tensor target = leaf(p, "target", {2, 4}, t);
                         Tensor pred = leaf(p, "prediction", {2, 4}, y);
                         return Loss([=] { return ad::huber(target, pred, 1.0); });
                     }});
    cases.push_back({"aissm_step_relaxed", [](std::mt19937_64& rng, ParameterSet& p) {
                         auto fx = model_fixture(Arch::aissm, rng, false);
                         p = fx->model->parameters();
                         return unroll_loss(fx, SamplingMode::relaxed);
                     }});
    cases.push_back({"aissm_step_argmax", [](std::mt19937_64& rng, ParameterSet& p) {
                         auto fx = model_fixture(Arch::aissm, rng, false);
                         p = fx->model->parameters().subset_if([](const std::string& n) {
                             return n.starts_with("head.") || n.starts_with("confidence.");
                         });
                         return unroll_loss(fx, SamplingMode::argmax);
                     }});
    cases.push_back({"cnn", [](std::mt19937_64& rng, ParameterSet& p) {
                         auto fx = model_fixture(Arch::cnn, rng, true);
                         p = fx->model->parameters();
                         return unroll_loss(fx, SamplingMode::argmax);
                     }});
    cases.push_back({"cnn_gru", [](std::mt19937_64& rng, ParameterSet& p) {
                         auto fx = model_fixture(Arch::cnn_gru, rng, true);
                         p = fx->model->parameters();
                         return unroll_loss(fx, SamplingMode::argmax);
                     }});
    return cases;
}

void absorb(GradCheckReport& total, const GradCheckReport& run) {
    for (const auto& e : run.entries) {
        auto it = std::find_if(total.entries.begin(), total.entries.end(),
                               [&](const GradCheckEntry& t) { return t.name == e.name; });
        if (it == total.entries.end()) {
            total.entries.push_back(e);
            continue;
        }
        it->coords_checked += e.coords_checked;
        it->max_rel_error = std::max(it->max_rel_error, e.max_rel_error);
        it->max_abs_error = std::max(it->max_abs_error, e.max_abs_error);
        it->passed = it->passed && e.passed;
    }
    total.passed = total.passed && run.passed;
    total.max_rel_error = std::max(total.max_rel_error, run.max_rel_error);
}

}  // namespace

ModelConfig tiny_model_config(Arch arch) {
    ModelConfig c = ModelConfig::defaults(arch);
    c.input_height = 16;
    c.input_width = 20;
    c.conv_channels = {2, 3};
    c.mlp_widths = {6};
    c.n_vars = 2;
    c.n_classes = 3;
    c.d_r = 4;
    c.prior_hidden = 5;
    c.head_hidden = 5;
    c.conf_channels = {2};
    c.conf_hidden = 3;
    return c;
}

std::vector<SuiteResult> run_gradient_suite(const SuiteOptions& options) {
    std::vector<SuiteResult> results;
    for (const Case& c : suite_cases()) {
        SuiteResult result;
        result.name = c.name;
        for (std::size_t s = 0; s < options.seeds; ++s) {
            std::mt19937_64 rng(options.first_seed + s);
            ParameterSet params;
            const Loss loss = c.setup(rng, params);
            GradCheckOptions check = options.check;
            check.seed = options.first_seed + s;
            absorb(result.report, grad_check(loss, params, check));
            ++result.seeds;
        }
        results.push_back(std::move(result));
    }
    return results;
}

bool suite_passed(const std::vector<SuiteResult>& results) {
    for (const auto& r : results) {
        if (!r.report.passed) return false;
    }
    return !results.empty();
}

void print_suite(std::ostream& os, const std::vector<SuiteResult>& results) {
    for (const auto& r : results) {
        char title[128];
        std::snprintf(title, sizeof title, "%s (%zu seeds)", r.name.c_str(), r.seeds);
        print_report(os, title, r.report);
    }
}

}  // namespace aissm
