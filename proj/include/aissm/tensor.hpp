#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace aissm::ad {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {

struct Node {
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad;
    bool requires_grad = false;
    bool is_leaf = true;
    std::vector<std::shared_ptr<Node>> parents;
    // Reads this node's grad and accumulates into the parents' grads.
    std::function<void(Node&)> backward;

    void ensure_grad() {
        if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
    }
};

}  // namespace detail

// Dense row-major float64 tensor with a reverse-mode tape. Copies share the node.
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, double value, bool requires_grad = false);
    static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
    static Tensor scalar(double value, bool requires_grad = false);

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const;
    std::size_t dim(std::size_t axis) const;
    std::size_t rank() const { return shape().size(); }
    std::size_t numel() const;

    std::span<const double> data() const;
    // Only leaves may be written; used for parameter updates and test fixtures.
    std::span<double> mutable_data();
    double item() const;
    double operator[](std::size_t i) const { return data()[i]; }
    std::vector<double> to_vector() const;

    bool requires_grad() const;
    bool has_grad() const;
    std::span<const double> grad() const;
    std::span<double> mutable_grad();
    void zero_grad();

    // Shares no tape with the source: a stop-gradient.
    Tensor detach() const;

    // Seeds d(this)/d(this) = 1 and propagates to every reachable leaf.
    // Leaf gradients accumulate across calls until zero_grad().
    void backward() const;

    // Internal: ops build results through this.
    static Tensor make_result(Shape shape, std::vector<double> values,
                              std::vector<Tensor> inputs,
                              std::function<void(detail::Node&)> backward_fn);
    detail::Node& node() const { return *node_; }
    const std::shared_ptr<detail::Node>& node_ptr() const { return node_; }

private:
    explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
    std::shared_ptr<detail::Node> node_;
};

// While alive, ops on this thread do not record the tape.
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

bool grad_enabled();

// Mutation hook for verifying the gradient checker: flips the sign of one
// primitive's input-gradient contribution.
enum class BackwardFault { none, conv2d, affine, softmax, sigmoid, tanh, silu, mul };
void set_backward_fault(BackwardFault fault);
BackwardFault backward_fault();
BackwardFault parse_backward_fault(const std::string& name);

// ---- elementwise ----
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
// s has a single element and multiplies every entry of a.
Tensor scalar_mul(const Tensor& s, const Tensor& a);
Tensor one_minus(const Tensor& a);

Tensor relu(const Tensor& a);
Tensor silu(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor tanh(const Tensor& a);

// ---- structural ----
Tensor reshape(const Tensor& a, Shape shape);
Tensor flatten(const Tensor& a);
Tensor slice(const Tensor& a, std::size_t begin, std::size_t length);
Tensor concat(const Tensor& a, const Tensor& b);
Tensor sum(const Tensor& a);

// ---- layers ----
// weight [out, in], x [in], bias [out] -> [out]
Tensor affine(const Tensor& x, const Tensor& weight, const Tensor& bias);

// x [C_in, H, W], weight [C_out, C_in, K, K], bias [C_out] -> [C_out, H', W']
Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, std::size_t stride,
              std::size_t padding);

struct GruWeights {
    Tensor w_input;   // [3*d_R, d_in], gate order (reset, update, candidate)
    Tensor w_hidden;  // [3*d_R, d_R]
    Tensor b_input;   // [3*d_R]
    Tensor b_hidden;  // [3*d_R]
};

// r = σ(W_ir x + b_ir + W_hr h + b_hr)
// z = σ(W_iz x + b_iz + W_hz h + b_hz)
// n = tanh(W_in x + b_in + r ⊙ (W_hn h + b_hn))
// h' = (1 − z) ⊙ n + z ⊙ h
Tensor gru_cell(const Tensor& x, const Tensor& h_prev, const GruWeights& weights);

// Softmax over the last axis; every leading index is an independent row.
Tensor softmax(const Tensor& z);

// Σ_i 0.5·min(|d_i|, δ)² + δ(|d_i| − min(|d_i|, δ)); rank ≥ 2 inputs are
// averaged over their leading (batch) axis.
Tensor huber(const Tensor& target, const Tensor& prediction, double delta);

}  // namespace aissm::ad
