#include "aissm/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_set>

#include "aissm/errors.hpp"

namespace aissm::ad {

namespace {

thread_local bool g_grad_enabled = true;
BackwardFault g_fault = BackwardFault::none;

double fault_sign(BackwardFault op) { return op != BackwardFault::none && g_fault == op ? -1.0 : 1.0; }

// Four interleaved partial sums combined in a fixed order: vectorizable and
// still bit-reproducible.
double dot(const double* a, const double* b, std::size_t n) {
    double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        s0 += a[i] * b[i];
        s1 += a[i + 1] * b[i + 1];
        s2 += a[i + 2] * b[i + 2];
        s3 += a[i + 3] * b[i + 3];
    }
    double tail = 0.0;
    for (; i < n; ++i) tail += a[i] * b[i];
    return ((s0 + s1) + (s2 + s3)) + tail;
}

// y += a·x
void axpy(double a, const double* x, double* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape()) {
        throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
    }
}

void require_defined(const Tensor& t, const char* op) {
    if (!t.defined()) throw ShapeError(std::string(op) + ": undefined tensor");
}

// Elementwise unary op with derivative expressed through input and output values.
template <typename Forward, typename Derivative>
Tensor unary(const Tensor& a, Forward f, Derivative df, BackwardFault tag) {
    require_defined(a, "unary");
    const auto in = a.data();
    std::vector<double> out(in.size());
    for (std::size_t i = 0; i < in.size(); ++i) out[i] = f(in[i]);
    return Tensor::make_result(a.shape(), std::move(out), {a}, [df, tag](detail::Node& self) {
        auto& p = *self.parents[0];
        if (!p.requires_grad) return;
        const double sgn = fault_sign(tag);
        for (std::size_t i = 0; i < self.grad.size(); ++i) {
            p.grad[i] += sgn * self.grad[i] * df(p.value[i], self.value[i]);
        }
    });
}

}  // namespace

std::size_t shape_numel(const Shape& shape) {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    return n;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << 'x';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }
bool grad_enabled() { return g_grad_enabled; }

void set_backward_fault(BackwardFault fault) { g_fault = fault; }
BackwardFault backward_fault() { return g_fault; }

BackwardFault parse_backward_fault(const std::string& name) {
    if (name.empty() || name == "none") return BackwardFault::none;
    if (name == "conv2d") return BackwardFault::conv2d;
    if (name == "affine") return BackwardFault::affine;
    if (name == "softmax") return BackwardFault::softmax;
    if (name == "sigmoid") return BackwardFault::sigmoid;
    if (name == "tanh") return BackwardFault::tanh;
    if (name == "silu") return BackwardFault::silu;
    if (name == "mul") return BackwardFault::mul;
    throw ConfigError("unknown backward fault '" + name + "'");
}

// ---------------------------------------------------------------------------
// Tensor

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
    return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
    const auto n = shape_numel(shape);
    return from(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
    if (shape_numel(shape) != values.size()) {
        throw ShapeError("tensor: shape " + shape_str(shape) + " does not hold " +
                         std::to_string(values.size()) + " values");
    }
    auto node = std::make_shared<detail::Node>();
    node->shape = std::move(shape);
    node->value = std::move(values);
    node->requires_grad = requires_grad;
    return Tensor(std::move(node));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
    return from({1}, {value}, requires_grad);
}

const Shape& Tensor::shape() const { return node_->shape; }

std::size_t Tensor::dim(std::size_t axis) const {
    if (axis >= node_->shape.size()) throw ShapeError("dim: axis out of range");
    return node_->shape[axis];
}

std::size_t Tensor::numel() const { return node_ ? node_->value.size() : 0; }

std::span<const double> Tensor::data() const { return node_->value; }

std::span<double> Tensor::mutable_data() {
    if (!node_->is_leaf) throw Error("mutable_data: tensor is not a leaf");
    return node_->value;
}

double Tensor::item() const {
    if (numel() != 1) throw ShapeError("item: tensor has " + std::to_string(numel()) + " elements");
    return node_->value[0];
}

std::vector<double> Tensor::to_vector() const { return node_->value; }

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }

bool Tensor::has_grad() const { return node_ && node_->grad.size() == node_->value.size(); }

std::span<const double> Tensor::grad() const { return node_->grad; }

std::span<double> Tensor::mutable_grad() {
    node_->ensure_grad();
    return node_->grad;
}

void Tensor::zero_grad() {
    if (node_) node_->grad.assign(node_->value.size(), 0.0);
}

Tensor Tensor::detach() const { return from(node_->shape, node_->value, false); }

Tensor Tensor::make_result(Shape shape, std::vector<double> values, std::vector<Tensor> inputs,
                           std::function<void(detail::Node&)> backward_fn) {
    auto node = std::make_shared<detail::Node>();
    node->shape = std::move(shape);
    node->value = std::move(values);
    node->is_leaf = false;
    if (g_grad_enabled) {
        const bool any = std::any_of(inputs.begin(), inputs.end(),
                                     [](const Tensor& t) { return t.requires_grad(); });
        if (any) {
            node->requires_grad = true;
            node->parents.reserve(inputs.size());
            for (auto& in : inputs) node->parents.push_back(in.node_);
            node->backward = std::move(backward_fn);
        }
    }
    return Tensor(std::move(node));
}

void Tensor::backward() const {
    if (numel() != 1) throw ShapeError("backward: root must be a scalar, got " + shape_str(shape()));
    if (!node_->requires_grad) return;

    // Iterative post-order DFS over nodes that require grad.
    std::vector<detail::Node*> order;
    std::unordered_set<detail::Node*> visited;
    std::vector<std::pair<detail::Node*, std::size_t>> stack;
    stack.emplace_back(node_.get(), 0);
    visited.insert(node_.get());
    while (!stack.empty()) {
        auto& [n, next] = stack.back();
        if (next < n->parents.size()) {
            detail::Node* p = n->parents[next++].get();
            if (p->requires_grad && visited.insert(p).second) stack.emplace_back(p, 0);
        } else {
            order.push_back(n);
            stack.pop_back();
        }
    }

    for (auto* n : order) {
        if (n->is_leaf) {
            n->ensure_grad();
        } else {
            n->grad.assign(n->value.size(), 0.0);
        }
    }
    node_->grad[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        if ((*it)->backward) (*it)->backward(**it);
    }
}

// ---------------------------------------------------------------------------
// Elementwise

Tensor add(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "add");
    const auto x = a.data();
    const auto y = b.data();
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] + y[i];
    return Tensor::make_result(a.shape(), std::move(out), {a, b}, [](detail::Node& self) {
        for (auto& p : self.parents) {
            if (!p->requires_grad) continue;
            for (std::size_t i = 0; i < self.grad.size(); ++i) p->grad[i] += self.grad[i];
        }
    });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "sub");
    const auto x = a.data();
    const auto y = b.data();
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] - y[i];
    return Tensor::make_result(a.shape(), std::move(out), {a, b}, [](detail::Node& self) {
        auto& pa = *self.parents[0];
        auto& pb = *self.parents[1];
        for (std::size_t i = 0; i < self.grad.size(); ++i) {
            if (pa.requires_grad) pa.grad[i] += self.grad[i];
            if (pb.requires_grad) pb.grad[i] -= self.grad[i];
        }
    });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "mul");
    const auto x = a.data();
    const auto y = b.data();
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * y[i];
    return Tensor::make_result(a.shape(), std::move(out), {a, b}, [](detail::Node& self) {
        auto& pa = *self.parents[0];
        auto& pb = *self.parents[1];
        const double sgn = fault_sign(BackwardFault::mul);
        for (std::size_t i = 0; i < self.grad.size(); ++i) {
            if (pa.requires_grad) pa.grad[i] += sgn * self.grad[i] * pb.value[i];
            if (pb.requires_grad) pb.grad[i] += sgn * self.grad[i] * pa.value[i];
        }
    });
}

Tensor scale(const Tensor& a, double factor) {
    const auto x = a.data();
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * factor;
    return Tensor::make_result(a.shape(), std::move(out), {a}, [factor](detail::Node& self) {
        auto& p = *self.parents[0];
        for (std::size_t i = 0; i < self.grad.size(); ++i) p.grad[i] += self.grad[i] * factor;
    });
}

Tensor scalar_mul(const Tensor& s, const Tensor& a) {
    if (s.numel() != 1) throw ShapeError("scalar_mul: scale must have one element, got " + shape_str(s.shape()));
    const double k = s.data()[0];
    const auto x = a.data();
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = k * x[i];
    return Tensor::make_result(a.shape(), std::move(out), {s, a}, [](detail::Node& self) {
        auto& ps = *self.parents[0];
        auto& pa = *self.parents[1];
        const double k = ps.value[0];
        double gs = 0.0;
        for (std::size_t i = 0; i < self.grad.size(); ++i) {
            if (pa.requires_grad) pa.grad[i] += self.grad[i] * k;
            gs += self.grad[i] * pa.value[i];
        }
        if (ps.requires_grad) ps.grad[0] += gs;
    });
}

Tensor one_minus(const Tensor& a) {
    const auto x = a.data();
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = 1.0 - x[i];
    return Tensor::make_result(a.shape(), std::move(out), {a}, [](detail::Node& self) {
        auto& p = *self.parents[0];
        for (std::size_t i = 0; i < self.grad.size(); ++i) p.grad[i] -= self.grad[i];
    });
}

Tensor relu(const Tensor& a) {
    return unary(
        a, [](double x) { return x > 0.0 ? x : 0.0; },
        [](double x, double) { return x > 0.0 ? 1.0 : 0.0; }, BackwardFault::none);
}

Tensor silu(const Tensor& a) {
    const auto in = a.data();
    auto gate = std::make_shared<std::vector<double>>(in.size());
    std::vector<double> out(in.size());
    for (std::size_t i = 0; i < in.size(); ++i) {
        const double s = 1.0 / (1.0 + std::exp(-in[i]));
        (*gate)[i] = s;
        out[i] = in[i] * s;
    }
    return Tensor::make_result(a.shape(), std::move(out), {a}, [gate](detail::Node& self) {
        auto& p = *self.parents[0];
        const double sgn = fault_sign(BackwardFault::silu);
        for (std::size_t i = 0; i < self.grad.size(); ++i) {
            const double s = (*gate)[i];
            p.grad[i] += sgn * self.grad[i] * s * (1.0 + p.value[i] * (1.0 - s));
        }
    });
}

Tensor sigmoid(const Tensor& a) {
    return unary(
        a,
        [](double x) {
            if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
            const double e = std::exp(x);
            return e / (1.0 + e);
        },
        [](double, double y) { return y * (1.0 - y); }, BackwardFault::sigmoid);
}

Tensor tanh(const Tensor& a) {
    return unary(
        a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; },
        BackwardFault::tanh);
}

// ---------------------------------------------------------------------------
// Structural

Tensor reshape(const Tensor& a, Shape shape) {
    if (shape_numel(shape) != a.numel()) {
        throw ShapeError("reshape: cannot view " + shape_str(a.shape()) + " as " + shape_str(shape));
    }
    std::vector<double> out(a.data().begin(), a.data().end());
    return Tensor::make_result(std::move(shape), std::move(out), {a}, [](detail::Node& self) {
        auto& p = *self.parents[0];
        for (std::size_t i = 0; i < self.grad.size(); ++i) p.grad[i] += self.grad[i];
    });
}

Tensor flatten(const Tensor& a) { return reshape(a, {a.numel()}); }

Tensor slice(const Tensor& a, std::size_t begin, std::size_t length) {
    if (begin + length > a.numel()) {
        throw ShapeError("slice: [" + std::to_string(begin) + ", " + std::to_string(begin + length) +
                         ") exceeds " + std::to_string(a.numel()) + " elements");
    }
    const auto x = a.data();
    std::vector<double> out(x.begin() + static_cast<std::ptrdiff_t>(begin),
                            x.begin() + static_cast<std::ptrdiff_t>(begin + length));
    return Tensor::make_result({length}, std::move(out), {a}, [begin](detail::Node& self) {
        auto& p = *self.parents[0];
        for (std::size_t i = 0; i < self.grad.size(); ++i) p.grad[begin + i] += self.grad[i];
    });
}

Tensor concat(const Tensor& a, const Tensor& b) {
    std::vector<double> out;
    out.reserve(a.numel() + b.numel());
    out.insert(out.end(), a.data().begin(), a.data().end());
    out.insert(out.end(), b.data().begin(), b.data().end());
    const std::size_t split = a.numel();
    return Tensor::make_result({out.size()}, std::move(out), {a, b}, [split](detail::Node& self) {
        auto& pa = *self.parents[0];
        auto& pb = *self.parents[1];
        for (std::size_t i = 0; i < self.grad.size(); ++i) {
            if (i < split) {
                if (pa.requires_grad) pa.grad[i] += self.grad[i];
            } else if (pb.requires_grad) {
                pb.grad[i - split] += self.grad[i];
            }
        }
    });
}

Tensor sum(const Tensor& a) {
    double acc = 0.0;
    for (double v : a.data()) acc += v;
    return Tensor::make_result({1}, {acc}, {a}, [](detail::Node& self) {
        auto& p = *self.parents[0];
        for (auto& g : p.grad) g += self.grad[0];
    });
}

// ---------------------------------------------------------------------------
// Layers

Tensor affine(const Tensor& x, const Tensor& weight, const Tensor& bias) {
    if (weight.rank() != 2 || x.numel() != weight.dim(1) || bias.numel() != weight.dim(0)) {
        throw ShapeError("affine: weight " + shape_str(weight.shape()) + ", input " +
                         shape_str(x.shape()) + ", bias " + shape_str(bias.shape()));
    }
    const std::size_t n_out = weight.dim(0);
    const std::size_t n_in = weight.dim(1);
    const double* w = weight.data().data();
    const double* in = x.data().data();
    std::vector<double> out(bias.data().begin(), bias.data().end());
    for (std::size_t o = 0; o < n_out; ++o) out[o] += dot(w + o * n_in, in, n_in);
    return Tensor::make_result({n_out}, std::move(out), {x, weight, bias},
                               [n_out, n_in](detail::Node& self) {
        auto& px = *self.parents[0];
        auto& pw = *self.parents[1];
        auto& pb = *self.parents[2];
        const double sgn = fault_sign(BackwardFault::affine);
        const double* gy = self.grad.data();
        if (pb.requires_grad) {
            for (std::size_t o = 0; o < n_out; ++o) pb.grad[o] += gy[o];
        }
        if (pw.requires_grad) {
            for (std::size_t o = 0; o < n_out; ++o) {
                if (gy[o] != 0.0) axpy(gy[o], px.value.data(), pw.grad.data() + o * n_in, n_in);
            }
        }
        if (px.requires_grad) {
            for (std::size_t o = 0; o < n_out; ++o) {
                if (gy[o] != 0.0) axpy(sgn * gy[o], pw.value.data() + o * n_in, px.grad.data(), n_in);
            }
        }
    });
}

namespace {

struct ConvGeometry {
    std::size_t c_in, h, w, c_out, k, stride, padding, oh, ow;
    std::size_t patch() const { return c_in * k * k; }
    std::size_t positions() const { return oh * ow; }
};

// col[(ci*k + kh)*k + kw][y*ow + x] = input at the receptive-field tap, 0 in padding.
std::vector<double> im2col(const double* in, const ConvGeometry& g) {
    std::vector<double> col(g.patch() * g.positions(), 0.0);
    const auto pad = static_cast<std::ptrdiff_t>(g.padding);
    for (std::size_t ci = 0; ci < g.c_in; ++ci) {
        for (std::size_t kh = 0; kh < g.k; ++kh) {
            for (std::size_t kw = 0; kw < g.k; ++kw) {
                double* dst = col.data() + ((ci * g.k + kh) * g.k + kw) * g.positions();
                for (std::size_t y = 0; y < g.oh; ++y) {
                    const auto iy = static_cast<std::ptrdiff_t>(y * g.stride + kh) - pad;
                    if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.h)) continue;
                    const double* src = in + (ci * g.h + static_cast<std::size_t>(iy)) * g.w;
                    for (std::size_t x = 0; x < g.ow; ++x) {
                        const auto ix = static_cast<std::ptrdiff_t>(x * g.stride + kw) - pad;
                        if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.w)) continue;
                        dst[y * g.ow + x] = src[ix];
                    }
                }
            }
        }
    }
    return col;
}

void col2im_add(const std::vector<double>& col, double* grad_in, const ConvGeometry& g) {
    const auto pad = static_cast<std::ptrdiff_t>(g.padding);
    for (std::size_t ci = 0; ci < g.c_in; ++ci) {
        for (std::size_t kh = 0; kh < g.k; ++kh) {
            for (std::size_t kw = 0; kw < g.k; ++kw) {
                const double* src = col.data() + ((ci * g.k + kh) * g.k + kw) * g.positions();
                for (std::size_t y = 0; y < g.oh; ++y) {
                    const auto iy = static_cast<std::ptrdiff_t>(y * g.stride + kh) - pad;
                    if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.h)) continue;
                    double* dst = grad_in + (ci * g.h + static_cast<std::size_t>(iy)) * g.w;
                    for (std::size_t x = 0; x < g.ow; ++x) {
                        const auto ix = static_cast<std::ptrdiff_t>(x * g.stride + kw) - pad;
                        if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.w)) continue;
                        dst[ix] += src[y * g.ow + x];
                    }
                }
            }
        }
    }
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, std::size_t stride,
              std::size_t padding) {
    if (x.rank() != 3) throw ShapeError("conv2d: input must be [C,H,W], got " + shape_str(x.shape()));
    if (weight.rank() != 4 || weight.dim(2) != weight.dim(3)) {
        throw ShapeError("conv2d: weight must be [C_out,C_in,K,K], got " + shape_str(weight.shape()));
    }
    if (weight.dim(1) != x.dim(0)) {
        throw ShapeError("conv2d: input has " + std::to_string(x.dim(0)) + " channels, weight expects " +
                         std::to_string(weight.dim(1)));
    }
    if (bias.numel() != weight.dim(0)) {
        throw ShapeError("conv2d: bias " + shape_str(bias.shape()) + " does not match " +
                         std::to_string(weight.dim(0)) + " output channels");
    }
    if (stride == 0) throw ShapeError("conv2d: stride must be >= 1");
    ConvGeometry g{};
    g.c_in = x.dim(0);
    g.h = x.dim(1);
    g.w = x.dim(2);
    g.c_out = weight.dim(0);
    g.k = weight.dim(2);
    g.stride = stride;
    g.padding = padding;
    if (g.h + 2 * padding < g.k || g.w + 2 * padding < g.k) {
        throw ShapeError("conv2d: kernel " + std::to_string(g.k) + " does not fit padded input " +
                         shape_str(x.shape()));
    }
    g.oh = (g.h + 2 * padding - g.k) / stride + 1;
    g.ow = (g.w + 2 * padding - g.k) / stride + 1;

    auto col = std::make_shared<std::vector<double>>(im2col(x.data().data(), g));
    const double* wt = weight.data().data();
    const double* bs = bias.data().data();
    const std::size_t npos = g.positions();
    const std::size_t patch = g.patch();
    std::vector<double> out(g.c_out * npos);
    for (std::size_t co = 0; co < g.c_out; ++co) {
        double* plane = out.data() + co * npos;
        std::fill(plane, plane + npos, bs[co]);
        const double* wrow = wt + co * patch;
        for (std::size_t j = 0; j < patch; ++j) {
            if (wrow[j] != 0.0) axpy(wrow[j], col->data() + j * npos, plane, npos);
        }
    }

    return Tensor::make_result({g.c_out, g.oh, g.ow}, std::move(out), {x, weight, bias},
                               [g, col](detail::Node& self) {
        auto& px = *self.parents[0];
        auto& pw = *self.parents[1];
        auto& pb = *self.parents[2];
        const double sgn = fault_sign(BackwardFault::conv2d);
        const std::size_t npos = g.positions();
        const std::size_t patch = g.patch();
        const double* gy = self.grad.data();
        std::vector<double> gcol;
        if (px.requires_grad) gcol.assign(patch * npos, 0.0);
        for (std::size_t co = 0; co < g.c_out; ++co) {
            const double* gplane = gy + co * npos;
            if (pb.requires_grad) {
                double acc = 0.0;
                for (std::size_t i = 0; i < npos; ++i) acc += gplane[i];
                pb.grad[co] += acc;
            }
            if (pw.requires_grad) {
                double* gw = pw.grad.data() + co * patch;
                for (std::size_t j = 0; j < patch; ++j) gw[j] += dot(gplane, col->data() + j * npos, npos);
            }
            if (px.requires_grad) {
                const double* wrow = pw.value.data() + co * patch;
                for (std::size_t j = 0; j < patch; ++j) {
                    if (wrow[j] != 0.0) axpy(sgn * wrow[j], gplane, gcol.data() + j * npos, npos);
                }
            }
        }
        if (px.requires_grad) col2im_add(gcol, px.grad.data(), g);
    });
}

Tensor gru_cell(const Tensor& x, const Tensor& h_prev, const GruWeights& weights) {
    const std::size_t d_r = h_prev.numel();
    if (weights.w_hidden.rank() != 2 || weights.w_hidden.dim(0) != 3 * d_r || weights.w_hidden.dim(1) != d_r) {
        throw ShapeError("gru_cell: hidden kernel " + shape_str(weights.w_hidden.shape()) +
                         " does not match state of size " + std::to_string(d_r));
    }
    if (weights.w_input.rank() != 2 || weights.w_input.dim(0) != 3 * d_r || weights.w_input.dim(1) != x.numel()) {
        throw ShapeError("gru_cell: input kernel " + shape_str(weights.w_input.shape()) +
                         " does not match input of size " + std::to_string(x.numel()));
    }
    const Tensor h = flatten(h_prev);
    const Tensor gx = affine(flatten(x), weights.w_input, weights.b_input);
    const Tensor gh = affine(h, weights.w_hidden, weights.b_hidden);
    const Tensor r = sigmoid(add(slice(gx, 0, d_r), slice(gh, 0, d_r)));
    const Tensor z = sigmoid(add(slice(gx, d_r, d_r), slice(gh, d_r, d_r)));
    const Tensor n = tanh(add(slice(gx, 2 * d_r, d_r), mul(r, slice(gh, 2 * d_r, d_r))));
    return add(mul(one_minus(z), n), mul(z, h));
}

Tensor softmax(const Tensor& z) {
    if (z.rank() == 0 || z.numel() == 0) throw ShapeError("softmax: empty input");
    const std::size_t n = z.shape().back();
    const std::size_t rows = z.numel() / n;
    const auto in = z.data();
    std::vector<double> out(in.size());
    for (std::size_t r = 0; r < rows; ++r) {
        const double* zr = in.data() + r * n;
        double* pr = out.data() + r * n;
        const double m = *std::max_element(zr, zr + n);
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            pr[i] = std::exp(zr[i] - m);
            total += pr[i];
        }
        for (std::size_t i = 0; i < n; ++i) pr[i] /= total;
    }
    return Tensor::make_result(z.shape(), std::move(out), {z}, [n, rows](detail::Node& self) {
        auto& p = *self.parents[0];
        const double sgn = fault_sign(BackwardFault::softmax);
        for (std::size_t r = 0; r < rows; ++r) {
            const double* y = self.value.data() + r * n;
            const double* gy = self.grad.data() + r * n;
            double dot = 0.0;
            for (std::size_t i = 0; i < n; ++i) dot += gy[i] * y[i];
            for (std::size_t i = 0; i < n; ++i) p.grad[r * n + i] += sgn * y[i] * (gy[i] - dot);
        }
    });
}

Tensor huber(const Tensor& target, const Tensor& prediction, double delta) {
    require_same_shape(target, prediction, "huber");
    if (!(delta > 0.0)) throw ShapeError("huber: delta must be positive");
    const double batch = prediction.rank() >= 2 ? static_cast<double>(prediction.dim(0)) : 1.0;
    const auto y = target.data();
    const auto yh = prediction.data();
    double total = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        const double a = std::abs(yh[i] - y[i]);
        const double m = std::min(a, delta);
        total += 0.5 * m * m + delta * (a - m);
    }
    return Tensor::make_result({1}, {total / batch}, {target, prediction},
                               [delta, batch](detail::Node& self) {
        auto& pt = *self.parents[0];
        auto& pp = *self.parents[1];
        const double g = self.grad[0] / batch;
        for (std::size_t i = 0; i < pp.value.size(); ++i) {
            const double d = std::clamp(pp.value[i] - pt.value[i], -delta, delta);
            if (pp.requires_grad) pp.grad[i] += g * d;
            if (pt.requires_grad) pt.grad[i] -= g * d;
        }
    });
}

}  // namespace aissm::ad
