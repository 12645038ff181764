#pragma once

// Reverse-mode differentiation over a flat tape. Every op appends one node;
// backward() walks nodes in exact reverse order and accumulates gradients
// additively into each input.

#include <atomic>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "sfpp/kernels.hpp"
#include "sfpp/tensor.hpp"

namespace sfpp {

struct Var {
  std::uint64_t tape = 0;
  int index = -1;
  bool valid() const { return index >= 0; }
};

template <typename Scalar>
class Tape {
 public:
  using TensorT = Tensor<Scalar>;
  // Receives the tape and the gradient flowing into the node's output.
  using BackwardFn = std::function<void(Tape&, const TensorT&)>;

  Tape() : id_(next_id()) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  Tape(Tape&&) = default;
  Tape& operator=(Tape&&) = default;

  Var constant(TensorT value) { return push(std::move(value), false, {}, {}, {}); }

  Var parameter(std::string name, TensorT value) {
    Var v = push(std::move(value), true, {}, {}, name);
    named_.emplace_back(std::move(name), v.index);
    return v;
  }

  // Leaf that needs a gradient but is not a named parameter (gradient checks).
  Var variable(TensorT value) { return push(std::move(value), true, {}, {}, {}); }

  Var record(TensorT value, std::vector<Var> inputs, BackwardFn fn, const char* op) {
    require_finite(value, op);
    bool needs = false;
    for (const Var& in : inputs) {
      check(in);
      needs = needs || nodes_[static_cast<std::size_t>(in.index)].requires_grad;
    }
    return push(std::move(value), needs, std::move(inputs), needs ? std::move(fn) : BackwardFn{}, {});
  }

  const TensorT& value(Var v) const {
    check(v);
    return nodes_[static_cast<std::size_t>(v.index)].value;
  }

  bool requires_grad(Var v) const {
    check(v);
    return nodes_[static_cast<std::size_t>(v.index)].requires_grad;
  }

  bool has_grad(Var v) const {
    check(v);
    return !nodes_[static_cast<std::size_t>(v.index)].grad.empty();
  }

  // Gradient of the last backward() target; zeros if nothing reached v.
  TensorT grad(Var v) const {
    check(v);
    const Node& n = nodes_[static_cast<std::size_t>(v.index)];
    return n.grad.empty() ? TensorT::zeros_like(n.value) : n.grad;
  }

  void accumulate(Var v, const TensorT& g) {
    check(v);
    Node& n = nodes_[static_cast<std::size_t>(v.index)];
    if (!n.requires_grad) return;
    if (g.shape() != n.value.shape())
      throw ShapeError("gradient shape " + shape_str(g.shape()) + " does not match value " +
                       shape_str(n.value.shape()));
    if (n.grad.empty())
      n.grad = g;
    else
      n.grad.array() += g.array();
  }

  void backward(Var loss) {
    check(loss);
    if (consumed_) throw InvalidArgument("backward: tape already consumed");
    const Node& root = nodes_[static_cast<std::size_t>(loss.index)];
    if (root.value.size() != 1)
      throw ShapeError("backward: loss must be scalar, got " + shape_str(root.value.shape()));
    consumed_ = true;
    if (!root.requires_grad) return;
    nodes_[static_cast<std::size_t>(loss.index)].grad = TensorT(root.value.shape(), Scalar(1));
    for (int i = loss.index; i >= 0; --i) {
      Node& n = nodes_[static_cast<std::size_t>(i)];
      if (!n.backward || n.grad.empty()) continue;
      // Copy: the callback may accumulate into this very node only if it
      // feeds itself, which the tape never records, but keep it a value.
      const TensorT g = n.grad;
      n.backward(*this, g);
      require_finite(nodes_[static_cast<std::size_t>(i)].grad, "backward");
    }
  }

  // (name, gradient) for every named parameter in registration order.
  std::vector<std::pair<std::string, TensorT>> parameter_grads() const {
    std::vector<std::pair<std::string, TensorT>> out;
    out.reserve(named_.size());
    for (const auto& [name, idx] : named_) out.emplace_back(name, grad(Var{id_, idx}));
    return out;
  }

  bool consumed() const { return consumed_; }
  std::size_t size() const { return nodes_.size(); }
  std::uint64_t id() const { return id_; }

 private:
  struct Node {
    TensorT value;
    TensorT grad;
    bool requires_grad = false;
    std::vector<Var> inputs;
    BackwardFn backward;
    std::string name;
  };

  static std::uint64_t next_id() {
    static std::atomic<std::uint64_t> counter{1};
    return counter.fetch_add(1);
  }

  Var push(TensorT value, bool requires_grad, std::vector<Var> inputs, BackwardFn fn,
           std::string name) {
    nodes_.push_back(Node{std::move(value), TensorT{}, requires_grad, std::move(inputs), std::move(fn),
                          std::move(name)});
    return Var{id_, static_cast<int>(nodes_.size()) - 1};
  }

  void check(Var v) const {
    if (v.tape != id_ || v.index < 0 || v.index >= static_cast<int>(nodes_.size()))
      throw InvalidArgument("variable does not belong to this tape");
  }

  std::uint64_t id_;
  std::vector<Node> nodes_;
  std::vector<std::pair<std::string, int>> named_;
  bool consumed_ = false;
};

// ---------------------------------------------------------------------------
// Differentiable ops.

template <typename Scalar>
Var conv2d(Tape<Scalar>& tape, Var input, Var kernel, Var bias, int stride, int pad,
           kernels::ConvAlgo algo = kernels::ConvAlgo::kIm2col) {
  const auto* b = bias.valid() ? &tape.value(bias) : nullptr;
  Tensor<Scalar> out = kernels::conv2d(tape.value(input), tape.value(kernel), b, stride, pad, algo);
  std::vector<Var> ins{input, kernel};
  if (bias.valid()) ins.push_back(bias);
  return tape.record(
      std::move(out), ins,
      [input, kernel, bias, stride, pad](Tape<Scalar>& t, const Tensor<Scalar>& g) {
        const bool gi = t.requires_grad(input), gk = t.requires_grad(kernel);
        const bool gb = bias.valid() && t.requires_grad(bias);
        auto grads = kernels::conv2d_backward(t.value(input), t.value(kernel), g, stride, pad, gi, gk, gb);
        if (gi) t.accumulate(input, grads.input);
        if (gk) t.accumulate(kernel, grads.kernel);
        if (gb) t.accumulate(bias, grads.bias);
      },
      "conv2d");
}

template <typename Scalar>
Var conv2d(Tape<Scalar>& tape, Var input, Var kernel, int stride, int pad) {
  return conv2d(tape, input, kernel, Var{}, stride, pad);
}

template <typename Scalar>
Var xcorr_depthwise(Tape<Scalar>& tape, Var templ, Var search) {
  Tensor<Scalar> out = kernels::xcorr_depthwise(tape.value(templ), tape.value(search));
  return tape.record(
      std::move(out), {templ, search},
      [templ, search](Tape<Scalar>& t, const Tensor<Scalar>& g) {
        const bool gt = t.requires_grad(templ), gs = t.requires_grad(search);
        Tensor<Scalar> dt = Tensor<Scalar>::zeros_like(t.value(templ));
        Tensor<Scalar> ds = Tensor<Scalar>::zeros_like(t.value(search));
        kernels::xcorr_depthwise_backward(t.value(templ), t.value(search), g, gt ? &dt : nullptr,
                                          gs ? &ds : nullptr);
        if (gt) t.accumulate(templ, dt);
        if (gs) t.accumulate(search, ds);
      },
      "xcorr_depthwise");
}

template <typename Scalar>
Var maxpool2d(Tape<Scalar>& tape, Var input, int window) {
  auto argmax = std::make_shared<std::vector<Eigen::Index>>();
  Tensor<Scalar> out = kernels::maxpool2d(tape.value(input), window, argmax.get());
  return tape.record(
      std::move(out), {input},
      [input, argmax](Tape<Scalar>& t, const Tensor<Scalar>& g) {
        Tensor<Scalar> dx = Tensor<Scalar>::zeros_like(t.value(input));
        for (std::size_t o = 0; o < argmax->size(); ++o) dx[(*argmax)[o]] += g[static_cast<Eigen::Index>(o)];
        t.accumulate(input, dx);
      },
      "maxpool2d");
}

template <typename Scalar>
Var crop_border(Tape<Scalar>& tape, Var input, int border) {
  if (border == 0) return input;
  Tensor<Scalar> out = kernels::crop_border(tape.value(input), border);
  return tape.record(
      std::move(out), {input},
      [input, border](Tape<Scalar>& t, const Tensor<Scalar>& g) {
        Tensor<Scalar> dx = Tensor<Scalar>::zeros_like(t.value(input));
        for (int c = 0; c < g.dim(0); ++c)
          for (int i = 0; i < g.dim(1); ++i)
            for (int j = 0; j < g.dim(2); ++j) dx(c, i + border, j + border) = g(c, i, j);
        t.accumulate(input, dx);
      },
      "crop_border");
}

template <typename Scalar>
Var reshape(Tape<Scalar>& tape, Var input, Shape shape) {
  Tensor<Scalar> out = tape.value(input).reshaped(std::move(shape));
  return tape.record(
      std::move(out), {input},
      [input](Tape<Scalar>& t, const Tensor<Scalar>& g) {
        t.accumulate(input, g.reshaped(t.value(input).shape()));
      },
      "reshape");
}

// Channel slice [begin, begin+count) of a [C,H,W] tensor.
template <typename Scalar>
Var slice_channels(Tape<Scalar>& tape, Var input, int begin, int count) {
  const Tensor<Scalar>& x = tape.value(input);
  if (x.rank() != 3 || begin < 0 || count < 1 || begin + count > x.dim(0))
    throw ShapeError("slice_channels: bad range for " + shape_str(x.shape()));
  const Eigen::Index plane = Eigen::Index(x.dim(1)) * x.dim(2);
  Tensor<Scalar> out(Shape{count, x.dim(1), x.dim(2)}, x.array().segment(begin * plane, count * plane).eval());
  return tape.record(
      std::move(out), {input},
      [input, begin, count, plane](Tape<Scalar>& t, const Tensor<Scalar>& g) {
        Tensor<Scalar> dx = Tensor<Scalar>::zeros_like(t.value(input));
        dx.array().segment(begin * plane, count * plane) = g.array();
        t.accumulate(input, dx);
      },
      "slice_channels");
}

// ---------------------------------------------------------------------------
// Elementwise family. Binary ops accept equal shapes or a scalar operand.

enum class Elementwise { kRelu, kAdd, kMul, kExp, kScale };

template <typename Scalar>
Var relu(Tape<Scalar>& tape, Var x) {
  Tensor<Scalar> out(tape.value(x).shape(), tape.value(x).array().max(Scalar(0)).eval());
  return tape.record(
      std::move(out), {x},
      [x](Tape<Scalar>& t, const Tensor<Scalar>& g) {
        const auto& v = t.value(x).array();
        t.accumulate(x, Tensor<Scalar>(g.shape(), (v > Scalar(0)).select(g.array(), Scalar(0)).eval()));
      },
      "relu");
}

template <typename Scalar>
Var exp(Tape<Scalar>& tape, Var x) {
  Tensor<Scalar> out(tape.value(x).shape(), tape.value(x).array().exp().eval());
  return tape.record(
      std::move(out), {x},
      [x](Tape<Scalar>& t, const Tensor<Scalar>& g) {
        t.accumulate(x, Tensor<Scalar>(g.shape(), (g.array() * t.value(x).array().exp()).eval()));
      },
      "exp");
}

template <typename Scalar>
Var scale(Tape<Scalar>& tape, Var x, Scalar factor) {
  Tensor<Scalar> out(tape.value(x).shape(), (tape.value(x).array() * factor).eval());
  return tape.record(
      std::move(out), {x},
      [x, factor](Tape<Scalar>& t, const Tensor<Scalar>& g) {
        t.accumulate(x, Tensor<Scalar>(g.shape(), (g.array() * factor).eval()));
      },
      "scale");
}

namespace detail {

template <typename Scalar>
void check_binary(const Tensor<Scalar>& a, const Tensor<Scalar>& b, const char* op) {
  if (a.shape() == b.shape() || a.size() == 1 || b.size() == 1) return;
  throw ShapeError(std::string(op) + ": incompatible shapes " + shape_str(a.shape()) + " and " +
                   shape_str(b.shape()));
}

// Sums a full-shape gradient down to the operand's shape (scalar operands).
template <typename Scalar>
Tensor<Scalar> reduce_to(const Tensor<Scalar>& operand, Tensor<Scalar> g) {
  if (operand.shape() == g.shape()) return g;
  return Tensor<Scalar>(operand.shape(), Scalar(g.array().sum()));
}

}  // namespace detail

template <typename Scalar>
Var add(Tape<Scalar>& tape, Var a, Var b) {
  const auto& va = tape.value(a);
  const auto& vb = tape.value(b);
  detail::check_binary(va, vb, "add");
  Tensor<Scalar> out;
  if (va.shape() == vb.shape())
    out = Tensor<Scalar>(va.shape(), (va.array() + vb.array()).eval());
  else if (vb.size() == 1)
    out = Tensor<Scalar>(va.shape(), (va.array() + vb[0]).eval());
  else
    out = Tensor<Scalar>(vb.shape(), (vb.array() + va[0]).eval());
  return tape.record(
      std::move(out), {a, b},
      [a, b](Tape<Scalar>& t, const Tensor<Scalar>& g) {
        t.accumulate(a, detail::reduce_to(t.value(a), g));
        t.accumulate(b, detail::reduce_to(t.value(b), g));
      },
      "add");
}

template <typename Scalar>
Var mul(Tape<Scalar>& tape, Var a, Var b) {
  const auto& va = tape.value(a);
  const auto& vb = tape.value(b);
  detail::check_binary(va, vb, "mul");
  auto product = [](const Tensor<Scalar>& x, const Tensor<Scalar>& y) {
    if (x.shape() == y.shape()) return Tensor<Scalar>(x.shape(), (x.array() * y.array()).eval());
    if (y.size() == 1) return Tensor<Scalar>(x.shape(), (x.array() * y[0]).eval());
    return Tensor<Scalar>(y.shape(), (y.array() * x[0]).eval());
  };
  Tensor<Scalar> out = product(va, vb);
  return tape.record(
      std::move(out), {a, b},
      [a, b, product](Tape<Scalar>& t, const Tensor<Scalar>& g) {
        if (t.requires_grad(a)) t.accumulate(a, detail::reduce_to(t.value(a), product(g, t.value(b))));
        if (t.requires_grad(b)) t.accumulate(b, detail::reduce_to(t.value(b), product(g, t.value(a))));
      },
      "mul");
}

template <typename Scalar>
Var sum(Tape<Scalar>& tape, Var x) {
  Tensor<Scalar> out = Tensor<Scalar>::scalar(tape.value(x).array().sum());
  return tape.record(
      std::move(out), {x},
      [x](Tape<Scalar>& t, const Tensor<Scalar>& g) {
        t.accumulate(x, Tensor<Scalar>(t.value(x).shape(), g[0]));
      },
      "sum");
}

// Dispatcher over the elementwise family. `factor` is used by kScale only.
template <typename Scalar>
Var elementwise(Tape<Scalar>& tape, Elementwise kind, std::span<const Var> operands,
                Scalar factor = Scalar(1)) {
  const std::size_t arity = (kind == Elementwise::kAdd || kind == Elementwise::kMul) ? 2 : 1;
  if (operands.size() != arity)
    throw ShapeError("elementwise: expected " + std::to_string(arity) + " operands");
  switch (kind) {
    case Elementwise::kRelu: return relu(tape, operands[0]);
    case Elementwise::kExp: return exp(tape, operands[0]);
    case Elementwise::kScale: return scale(tape, operands[0], factor);
    case Elementwise::kAdd: return add(tape, operands[0], operands[1]);
    case Elementwise::kMul: return mul(tape, operands[0], operands[1]);
  }
  throw ShapeError("elementwise: unknown kind");
}

}  // namespace sfpp
