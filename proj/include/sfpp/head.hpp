#pragma once

#include "sfpp/autograd.hpp"

namespace sfpp {

// Raw head outputs on one N x N grid: cls and quality are pre-sigmoid logits,
// reg holds the four raw regression channels before the distance mapping.
template <typename Scalar>
struct HeadOutput {
  Tensor<Scalar> cls;      // [N,N]  (anchor variant: [K,N,N])
  Tensor<Scalar> quality;  // [N,N]  (empty for the anchor variant)
  Tensor<Scalar> reg;      // [4,N,N] (anchor variant: [4K,N,N])

  int grid() const { return cls.dim(cls.rank() - 1); }
};

// Same maps as tape variables, for training.
struct HeadVars {
  Var cls;
  Var quality;
  Var reg;
};

// distances = stride * exp(raw)
template <typename Scalar>
Var decode_distances(Tape<Scalar>& tape, Var reg_raw, int stride) {
  return scale(tape, exp(tape, reg_raw), Scalar(stride));
}

template <typename Scalar>
Tensor<Scalar> decode_distances(const Tensor<Scalar>& reg_raw, int stride) {
  Tensor<Scalar> out(reg_raw.shape(), (reg_raw.array().exp() * Scalar(stride)).eval());
  require_finite(out, "decode_distances");
  return out;
}

template <typename Scalar>
Scalar sigmoid(Scalar x) {
  return x >= 0 ? Scalar(1) / (Scalar(1) + std::exp(-x)) : std::exp(x) / (Scalar(1) + std::exp(x));
}

template <typename Scalar>
Tensor<Scalar> sigmoid(const Tensor<Scalar>& logits) {
  Tensor<Scalar> out(logits.shape());
  for (Eigen::Index i = 0; i < logits.size(); ++i) out[i] = sigmoid(logits[i]);
  return out;
}

}  // namespace sfpp
