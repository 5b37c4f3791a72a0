#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "aissm/adam.hpp"
#include "aissm/errors.hpp"
#include "aissm/gradcheck.hpp"
#include "aissm/gradsuite.hpp"
#include "aissm/parameters.hpp"
#include "aissm/tensor.hpp"

namespace aissm {
namespace {

using ad::Tensor;

std::vector<double> random_values(std::size_t n, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> d(lo, hi);
    std::vector<double> v(n);
    for (auto& x : v) x = d(rng);
    return v;
}

TEST(Conv2d, OutputShapeFollowsStrideAndPadding) {
    Tensor x = Tensor::zeros({1, 120, 160});
    Tensor w = Tensor::zeros({8, 1, 3, 3});
    Tensor b = Tensor::zeros({8});
    EXPECT_EQ(ad::conv2d(x, w, b, 2, 1).shape(), (ad::Shape{8, 60, 80}));
}

TEST(Conv2d, ZeroWeightsGiveZeroOutput) {
    Tensor x = Tensor::from({2, 5, 5}, random_values(50, 1));
    Tensor out = ad::conv2d(x, Tensor::zeros({3, 2, 3, 3}), Tensor::zeros({3}), 1, 1);
    for (double v : out.data()) EXPECT_EQ(v, 0.0);
}

TEST(Conv2d, DegenerateOneByOne) {
    Tensor out = ad::conv2d(Tensor::from({1, 1, 1}, {2.5}), Tensor::from({1, 1, 1, 1}, {-3.0}),
                            Tensor::from({1}, {0.75}), 1, 0);
    EXPECT_EQ(out.item(), 2.5 * -3.0 + 0.75);
}

TEST(Conv2d, MatchesDirectSummation) {
    const std::size_t C = 2, H = 6, W = 5, O = 3, K = 3, S = 2, P = 1;
    const auto xv = random_values(C * H * W, 2);
    const auto wv = random_values(O * C * K * K, 3);
    const auto bv = random_values(O, 4);
    Tensor out = ad::conv2d(Tensor::from({C, H, W}, xv), Tensor::from({O, C, K, K}, wv), Tensor::from({O}, bv), S, P);
    const std::size_t Ho = (H + 2 * P - K) / S + 1, Wo = (W + 2 * P - K) / S + 1;
    ASSERT_EQ(out.shape(), (ad::Shape{O, Ho, Wo}));
    for (std::size_t o = 0; o < O; ++o) {
        for (std::size_t i = 0; i < Ho; ++i) {
            for (std::size_t j = 0; j < Wo; ++j) {
                double acc = bv[o];
                for (std::size_t c = 0; c < C; ++c) {
                    for (std::size_t ki = 0; ki < K; ++ki) {
                        for (std::size_t kj = 0; kj < K; ++kj) {
                            const long r = static_cast<long>(i * S + ki) - static_cast<long>(P);
                            const long q = static_cast<long>(j * S + kj) - static_cast<long>(P);
                            if (r < 0 || q < 0 || r >= long(H) || q >= long(W)) continue;
                            acc += xv[(c * H + r) * W + q] * wv[((o * C + c) * K + ki) * K + kj];
                        }
                    }
                }
                EXPECT_NEAR(out.data()[(o * Ho + i) * Wo + j], acc, 1e-12);
            }
        }
    }
}

TEST(Conv2d, RejectsMismatchedChannels) {
    EXPECT_THROW(ad::conv2d(Tensor::zeros({2, 5, 5}), Tensor::zeros({1, 3, 3, 3}), Tensor::zeros({1}), 1, 0),
                 ShapeError);
    EXPECT_THROW(ad::conv2d(Tensor::zeros({1, 2, 2}), Tensor::zeros({1, 1, 3, 3}), Tensor::zeros({1}), 1, 0),
                 ShapeError);
    EXPECT_THROW(ad::conv2d(Tensor::zeros({1, 5, 5}), Tensor::zeros({1, 1, 3, 3}), Tensor::zeros({1}), 0, 0),
                 ShapeError);
}

TEST(Linearity, ConvAndAffineAreLinearWithoutBias) {
    const double a = 1.7;
    const auto xv = random_values(2 * 6 * 6, 5);
    std::vector<double> ax(xv);
    for (auto& v : ax) v *= a;
    Tensor w = Tensor::from({3, 2, 3, 3}, random_values(54, 6));
    Tensor zb = Tensor::zeros({3});
    Tensor f1 = ad::conv2d(Tensor::from({2, 6, 6}, ax), w, zb, 1, 1);
    Tensor f2 = ad::conv2d(Tensor::from({2, 6, 6}, xv), w, zb, 1, 1);
    for (std::size_t i = 0; i < f1.numel(); ++i) EXPECT_NEAR(f1.data()[i], a * f2.data()[i], 1e-14);

    Tensor wa = Tensor::from({4, 72}, random_values(288, 7));
    Tensor g1 = ad::affine(Tensor::from({72}, ax), wa, Tensor::zeros({4}));
    Tensor g2 = ad::affine(Tensor::from({72}, xv), wa, Tensor::zeros({4}));
    for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(g1.data()[i], a * g2.data()[i], 1e-13);
}

ad::GruWeights gru_weights(std::size_t d_in, std::size_t d_r, std::uint64_t seed) {
    return {Tensor::from({3 * d_r, d_in}, random_values(3 * d_r * d_in, seed)),
            Tensor::from({3 * d_r, d_r}, random_values(3 * d_r * d_r, seed + 1)),
            Tensor::from({3 * d_r}, random_values(3 * d_r, seed + 2)),
            Tensor::from({3 * d_r}, random_values(3 * d_r, seed + 3))};
}

TEST(GruCell, ZeroParamsAndStateStayZero) {
    ad::GruWeights g{Tensor::zeros({12, 3}), Tensor::zeros({12, 4}), Tensor::zeros({12}), Tensor::zeros({12})};
    Tensor h = ad::gru_cell(Tensor::from({3}, {0.3, -2.0, 5.0}), Tensor::zeros({4}), g);
    for (double v : h.data()) EXPECT_EQ(v, 0.0);
}

TEST(GruCell, SaturatedUpdateGateKeepsState) {
    const std::size_t d = 4;
    ad::GruWeights g = gru_weights(3, d, 10);
    std::vector<double> b(3 * d, 0.0);
    for (std::size_t i = d; i < 2 * d; ++i) b[i] = 60.0;
    g.b_input = Tensor::from({3 * d}, b);
    const std::vector<double> h0{0.2, -0.4, 0.6, -0.8};
    Tensor h = ad::gru_cell(Tensor::from({3}, {0.1, 0.2, 0.3}), Tensor::from({d}, h0), g);
    for (std::size_t i = 0; i < d; ++i) EXPECT_NEAR(h.data()[i], h0[i], 1e-12);
}

TEST(GruCell, MatchesReferenceEquations) {
    const std::size_t din = 3, d = 2;
    ad::GruWeights g = gru_weights(din, d, 20);
    const std::vector<double> x{0.5, -0.25, 1.0}, h{0.3, -0.6};
    Tensor out = ad::gru_cell(Tensor::from({din}, x), Tensor::from({d}, h), g);
    auto wi = g.w_input.data(), wh = g.w_hidden.data(), bi = g.b_input.data(), bh = g.b_hidden.data();
    auto row = [](std::span<const double> w, std::size_t r, const std::vector<double>& v) {
        double s = 0.0;
        for (std::size_t k = 0; k < v.size(); ++k) s += w[r * v.size() + k] * v[k];
        return s;
    };
    auto sig = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
    for (std::size_t i = 0; i < d; ++i) {
        const double r = sig(row(wi, i, x) + bi[i] + row(wh, i, h) + bh[i]);
        const double z = sig(row(wi, d + i, x) + bi[d + i] + row(wh, d + i, h) + bh[d + i]);
        const double n = std::tanh(row(wi, 2 * d + i, x) + bi[2 * d + i] + r * (row(wh, 2 * d + i, h) + bh[2 * d + i]));
        EXPECT_NEAR(out.data()[i], (1.0 - z) * n + z * h[i], 1e-12);
    }
}

TEST(GruCell, OutputBoundedWhenStateIs) {
    ad::GruWeights g = gru_weights(5, 6, 30);
    Tensor h = Tensor::from({6}, random_values(6, 31, -0.99, 0.99));
    for (int t = 0; t < 50; ++t) {
        h = ad::gru_cell(Tensor::from({5}, random_values(5, 40 + t, -3, 3)), h, g);
        for (double v : h.data()) {
            EXPECT_GT(v, -1.0);
            EXPECT_LT(v, 1.0);
        }
    }
}

TEST(GruCell, RejectsWrongDims) {
    ad::GruWeights g = gru_weights(3, 4, 50);
    EXPECT_THROW(ad::gru_cell(Tensor::zeros({2}), Tensor::zeros({4}), g), ShapeError);
    EXPECT_THROW(ad::gru_cell(Tensor::zeros({3}), Tensor::zeros({5}), g), ShapeError);
}

TEST(GruCell, InputGradientMatchesFiniteDifferences) {
    ParameterSet p;
    Tensor x = p.add("x", Tensor::from({3}, random_values(3, 60)));
    ad::GruWeights g = gru_weights(3, 4, 61);
    Tensor h = Tensor::from({4}, random_values(4, 62, -0.5, 0.5));
    Tensor w = Tensor::from({4}, random_values(4, 63));
    const auto report = grad_check([&] { return ad::sum(ad::mul(w, ad::gru_cell(x, h, g))); }, p);
    EXPECT_TRUE(report.passed);
    EXPECT_LT(report.max_rel_error, 1e-4);
}

TEST(Huber, QuadraticAndLinearBranches) {
    EXPECT_DOUBLE_EQ(ad::huber(Tensor::from({1}, {0.0}), Tensor::from({1}, {0.5}), 1.0).item(), 0.125);
    EXPECT_DOUBLE_EQ(ad::huber(Tensor::from({1}, {0.0}), Tensor::from({1}, {2.0}), 1.0).item(), 1.5);
    EXPECT_DOUBLE_EQ(ad::huber(Tensor::from({1}, {1.0}), Tensor::from({1}, {-1.0}), 1.0).item(), 1.5);
}

TEST(Huber, IdentityHasZeroLossAndGradient) {
    ParameterSet p;
    Tensor y = p.add("y", Tensor::from({3}, {0.1, 0.2, 0.3}));
    Tensor loss = ad::huber(Tensor::from({3}, {0.1, 0.2, 0.3}), y, 1.0);
    EXPECT_EQ(loss.item(), 0.0);
    loss.backward();
    for (double g : y.grad()) EXPECT_EQ(g, 0.0);
}

TEST(Huber, GradientClippedAtDelta) {
    ParameterSet p;
    Tensor y = p.add("y", Tensor::from({3}, {5.0, -7.0, 0.25}));
    ad::huber(Tensor::zeros({3}), y, 0.5).backward();
    EXPECT_DOUBLE_EQ(y.grad()[0], 0.5);
    EXPECT_DOUBLE_EQ(y.grad()[1], -0.5);
    EXPECT_DOUBLE_EQ(y.grad()[2], 0.25);
}

TEST(Huber, SumsElementsAndAveragesBatch) {
    Tensor t = Tensor::zeros({2, 2});
    Tensor y = Tensor::from({2, 2}, {0.5, 2.0, 0.0, 1.0});
    EXPECT_DOUBLE_EQ(ad::huber(t, y, 1.0).item(), (0.125 + 1.5 + 0.0 + 0.5) / 2.0);
    EXPECT_THROW(ad::huber(Tensor::zeros({3}), Tensor::zeros({2}), 1.0), ShapeError);
}

TEST(Softmax, UniformForEqualLogits) {
    Tensor s = ad::softmax(Tensor::zeros({4}));
    for (double v : s.data()) EXPECT_DOUBLE_EQ(v, 0.25);
}

TEST(Softmax, ShiftInvariantTwoClass) {
    const double k = 0.7;
    for (double c : {-500.0, 0.0, 3.0, 800.0}) {
        Tensor s = ad::softmax(Tensor::from({2}, {c, c + k}));
        EXPECT_NEAR(s.data()[1], 1.0 / (1.0 + std::exp(-k)), 1e-13);
    }
}

TEST(Softmax, RowsAreProbabilityVectors) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        Tensor s = ad::softmax(Tensor::from({5, 7}, random_values(35, seed, -50, 50)));
        for (std::size_t r = 0; r < 5; ++r) {
            double total = 0.0;
            for (std::size_t c = 0; c < 7; ++c) {
                const double v = s.data()[r * 7 + c];
                EXPECT_GE(v, 0.0);
                total += v;
            }
            EXPECT_NEAR(total, 1.0, 1e-12);
        }
    }
}

TEST(Softmax, JacobianMatchesFiniteDifferences) {
    ParameterSet p;
    Tensor z = p.add("z", Tensor::from({2, 4}, random_values(8, 70, -2, 2)));
    Tensor w = Tensor::from({2, 4}, random_values(8, 71));
    EXPECT_TRUE(grad_check([&] { return ad::sum(ad::mul(w, ad::softmax(z))); }, p).passed);
}

TEST(Adam, FirstStepMovesByLearningRate) {
    ParameterSet p;
    Tensor a = p.add("a", Tensor::from({3}, {1.0, -2.0, 0.5}));
    AdamState st = AdamState::for_parameters(p);
    a.mutable_grad()[0] = 3.0;
    a.mutable_grad()[1] = -0.01;
    a.mutable_grad()[2] = 250.0;
    adam_step(p, st);
    EXPECT_NEAR(a.data()[0], 1.0 - 1e-3, 1e-10);
    EXPECT_NEAR(a.data()[1], -2.0 + 1e-3, 1e-8);
    EXPECT_NEAR(a.data()[2], 0.5 - 1e-3, 1e-10);
    EXPECT_EQ(st.step, 1u);
}

TEST(Adam, ZeroGradientIsNoOp) {
    ParameterSet p;
    Tensor a = p.add("a", Tensor::from({2}, {0.3, -0.7}));
    AdamState st = AdamState::for_parameters(p);
    p.zero_grad();
    adam_step(p, st);
    EXPECT_EQ(a.data()[0], 0.3);
    EXPECT_EQ(a.data()[1], -0.7);
    EXPECT_EQ(st.first_moment["a"], (std::vector<double>{0.0, 0.0}));
    EXPECT_EQ(st.second_moment["a"], (std::vector<double>{0.0, 0.0}));
    EXPECT_EQ(st.step, 1u);
}

TEST(Adam, ReducesQuadraticMonotonically) {
    ParameterSet p;
    Tensor q = p.add("p", Tensor::from({1}, {1.0}));
    AdamState st = AdamState::for_parameters(p);
    double previous = 0.5;
    for (int i = 0; i < 2; ++i) {
        p.zero_grad();
        Tensor loss = ad::scale(ad::sum(ad::mul(q, q)), 0.5);
        loss.backward();
        adam_step(p, st);
        const double now = 0.5 * q.data()[0] * q.data()[0];
        EXPECT_LT(now, previous);
        previous = now;
    }
}

TEST(Adam, MissingGradientNamesParameter) {
    ParameterSet p;
    p.add("encoder.fc0.weight", Tensor::zeros({2}));
    AdamState st = AdamState::for_parameters(p);
    try {
        adam_step(p, st);
        FAIL() << "expected an error";
    } catch (const Error& e) {
        EXPECT_NE(std::string(e.what()).find("encoder.fc0.weight"), std::string::npos);
    }
}

TEST(ParameterSetTest, CountsAndOrdersByName) {
    ParameterSet p;
    p.add("b", Tensor::zeros({2, 3}));
    p.add("a", Tensor::zeros({4}));
    EXPECT_EQ(p.count(), 10u);
    EXPECT_EQ(p.begin()->first, "a");
    EXPECT_THROW(p.add("a", Tensor::zeros({1})), Error);
}

TEST(GradCheck, QuadraticHasExactGradient) {
    ParameterSet p;
    Tensor x = p.add("p", Tensor::from({3}, {1.0, 2.0, 3.0}));
    const auto report = grad_check([&] { return ad::sum(ad::mul(x, x)); }, p);
    EXPECT_LT(report.max_rel_error, 1e-8);
    x.zero_grad();
    ad::sum(ad::mul(x, x)).backward();
    EXPECT_EQ(std::vector<double>(x.grad().begin(), x.grad().end()), (std::vector<double>{2, 4, 6}));
}

TEST(GradCheck, ConstantFunctionHasZeroGradients) {
    ParameterSet p;
    Tensor x = p.add("p", Tensor::from({2}, {1.0, 2.0}));
    const auto report = grad_check([&] { return ad::add(ad::scale(ad::sum(x), 0.0), Tensor::scalar(4.0)); }, p);
    EXPECT_TRUE(report.passed);
    EXPECT_LE(report.entries[0].max_abs_error, 1e-10);
}

TEST(GradCheck, NonDeterministicFunctionRejected) {
    ParameterSet p;
    Tensor x = p.add("p", Tensor::from({1}, {1.0}));
    int calls = 0;
    EXPECT_THROW(grad_check(
                     [&] {
                         ++calls;
                         return ad::scale(ad::sum(x), static_cast<double>(calls));
                     },
                     p),
                 Error);
}

TEST(GradCheck, EpsilonRangeEnforced) {
    ParameterSet p;
    Tensor x = p.add("p", Tensor::from({1}, {1.0}));
    GradCheckOptions o;
    o.epsilon = 1e-2;
    EXPECT_THROW(grad_check([&] { return ad::sum(x); }, p, o), ConfigError);
}

TEST(GradientSuite, AllPrimitivesAndModelsPass) {
    const auto results = run_gradient_suite();
    for (const auto& r : results) {
        EXPECT_GE(r.seeds, 20u);
        EXPECT_TRUE(r.report.passed) << r.name << " max rel " << r.report.max_rel_error;
    }
}

class FaultInjection : public ::testing::TestWithParam<ad::BackwardFault> {
protected:
    void TearDown() override { ad::set_backward_fault(ad::BackwardFault::none); }
};

TEST_P(FaultInjection, SignFlipIsDetected) {
    ad::set_backward_fault(GetParam());
    SuiteOptions o;
    o.seeds = 2;
    EXPECT_FALSE(suite_passed(run_gradient_suite(o)));
}

INSTANTIATE_TEST_SUITE_P(Primitives, FaultInjection,
                         ::testing::Values(ad::BackwardFault::conv2d, ad::BackwardFault::affine,
                                           ad::BackwardFault::softmax, ad::BackwardFault::sigmoid,
                                           ad::BackwardFault::tanh, ad::BackwardFault::silu,
                                           ad::BackwardFault::mul));

TEST(Determinism, ForwardIsBitReproducible) {
    Tensor x = Tensor::from({2, 9, 9}, random_values(162, 80));
    Tensor w = Tensor::from({4, 2, 3, 3}, random_values(72, 81));
    Tensor b = Tensor::from({4}, random_values(4, 82));
    const auto a = ad::conv2d(x, w, b, 2, 1).to_vector();
    EXPECT_EQ(a, ad::conv2d(x, w, b, 2, 1).to_vector());
}

TEST(Tape, LeafGradientsAccumulateUntilCleared) {
    ParameterSet p;
    Tensor x = p.add("x", Tensor::from({1}, {3.0}));
    ad::sum(ad::scale(x, 2.0)).backward();
    ad::sum(ad::scale(x, 2.0)).backward();
    EXPECT_EQ(x.grad()[0], 4.0);
    x.zero_grad();
    EXPECT_EQ(x.grad()[0], 0.0);
}

TEST(Tape, NoGradGuardSkipsRecording) {
    ParameterSet p;
    Tensor x = p.add("x", Tensor::from({1}, {3.0}));
    Tensor y;
    {
        ad::NoGradGuard guard;
        y = ad::scale(x, 2.0);
    }
    EXPECT_FALSE(y.requires_grad());
}

TEST(Tape, DetachBlocksGradient) {
    ParameterSet p;
    Tensor x = p.add("x", Tensor::from({1}, {3.0}));
    p.zero_grad();
    ad::sum(ad::add(ad::mul(x, x.detach()), x)).backward();
    EXPECT_EQ(x.grad()[0], 4.0);
}

}  // namespace
}  // namespace aissm
