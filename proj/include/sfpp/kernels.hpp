#pragma once

// Forward and backward kernels on plain tensors. The tape-level ops in
// autograd.hpp wrap these; nothing here records anything.

#include <Eigen/Core>

#include <limits>
#include <string>

#include "sfpp/tensor.hpp"

namespace sfpp::kernels {

enum class ConvAlgo { kDirect, kIm2col };

template <typename Scalar>
using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct ConvGeometry {
  int cin, h, w;
  int cout, kh, kw;
  int stride, pad;
  int ho, wo;
};

template <typename Scalar>
ConvGeometry conv_geometry(const Tensor<Scalar>& input, const Tensor<Scalar>& kernel, int stride,
                           int pad) {
  if (input.rank() != 3) throw ShapeError("conv2d: input must be [C,H,W], got " + shape_str(input.shape()));
  if (kernel.rank() != 4)
    throw ShapeError("conv2d: kernel must be [Cout,Cin,kh,kw], got " + shape_str(kernel.shape()));
  if (stride < 1) throw ShapeError("conv2d: stride must be >= 1");
  if (pad < 0) throw ShapeError("conv2d: pad must be >= 0");
  ConvGeometry g{input.dim(0), input.dim(1), input.dim(2), kernel.dim(0), kernel.dim(2), kernel.dim(3),
                 stride, pad, 0, 0};
  if (kernel.dim(1) != g.cin)
    throw ShapeError("conv2d: kernel expects " + std::to_string(kernel.dim(1)) +
                     " input channels, input has " + std::to_string(g.cin));
  const int span_h = g.h + 2 * pad - g.kh;
  const int span_w = g.w + 2 * pad - g.kw;
  if (span_h < 0 || span_w < 0)
    throw ShapeError("conv2d: kernel " + shape_str(kernel.shape()) + " larger than padded input " +
                     shape_str(input.shape()));
  g.ho = span_h / stride + 1;
  g.wo = span_w / stride + 1;
  return g;
}

// Unfolds input patches into a [Cin*kh*kw, Ho*Wo] matrix; out-of-range taps are 0.
template <typename Scalar>
RowMatrix<Scalar> im2col(const Tensor<Scalar>& input, const ConvGeometry& g) {
  RowMatrix<Scalar> cols(Eigen::Index(g.cin) * g.kh * g.kw, Eigen::Index(g.ho) * g.wo);
  const Scalar* src = input.data();
  for (int c = 0; c < g.cin; ++c)
    for (int ki = 0; ki < g.kh; ++ki)
      for (int kj = 0; kj < g.kw; ++kj) {
        Scalar* row = cols.row((Eigen::Index(c) * g.kh + ki) * g.kw + kj).data();
        for (int oi = 0; oi < g.ho; ++oi) {
          const int ii = oi * g.stride - g.pad + ki;
          Scalar* dst = row + Eigen::Index(oi) * g.wo;
          if (ii < 0 || ii >= g.h) {
            std::fill(dst, dst + g.wo, Scalar(0));
            continue;
          }
          const Scalar* line = src + (Eigen::Index(c) * g.h + ii) * g.w;
          for (int oj = 0; oj < g.wo; ++oj) {
            const int jj = oj * g.stride - g.pad + kj;
            dst[oj] = (jj >= 0 && jj < g.w) ? line[jj] : Scalar(0);
          }
        }
      }
  return cols;
}

template <typename Scalar>
void col2im_add(const RowMatrix<Scalar>& cols, const ConvGeometry& g, Tensor<Scalar>& grad_input) {
  Scalar* dst = grad_input.data();
  for (int c = 0; c < g.cin; ++c)
    for (int ki = 0; ki < g.kh; ++ki)
      for (int kj = 0; kj < g.kw; ++kj) {
        const Scalar* row = cols.row((Eigen::Index(c) * g.kh + ki) * g.kw + kj).data();
        for (int oi = 0; oi < g.ho; ++oi) {
          const int ii = oi * g.stride - g.pad + ki;
          if (ii < 0 || ii >= g.h) continue;
          Scalar* line = dst + (Eigen::Index(c) * g.h + ii) * g.w;
          const Scalar* src = row + Eigen::Index(oi) * g.wo;
          for (int oj = 0; oj < g.wo; ++oj) {
            const int jj = oj * g.stride - g.pad + kj;
            if (jj >= 0 && jj < g.w) line[jj] += src[oj];
          }
        }
      }
}

// Reference implementation: seven nested loops, no unfolding.
template <typename Scalar>
Tensor<Scalar> conv2d_direct(const Tensor<Scalar>& input, const Tensor<Scalar>& kernel,
                             const Tensor<Scalar>* bias, int stride, int pad) {
  const ConvGeometry g = conv_geometry(input, kernel, stride, pad);
  Tensor<Scalar> out(Shape{g.cout, g.ho, g.wo});
  for (int co = 0; co < g.cout; ++co)
    for (int oi = 0; oi < g.ho; ++oi)
      for (int oj = 0; oj < g.wo; ++oj) {
        Scalar acc = bias ? (*bias)[co] : Scalar(0);
        for (int ci = 0; ci < g.cin; ++ci)
          for (int ki = 0; ki < g.kh; ++ki) {
            const int ii = oi * stride - pad + ki;
            if (ii < 0 || ii >= g.h) continue;
            for (int kj = 0; kj < g.kw; ++kj) {
              const int jj = oj * stride - pad + kj;
              if (jj < 0 || jj >= g.w) continue;
              acc += input(ci, ii, jj) *
                     kernel[((Eigen::Index(co) * g.cin + ci) * g.kh + ki) * g.kw + kj];
            }
          }
        out(co, oi, oj) = acc;
      }
  return out;
}

template <typename Scalar>
Tensor<Scalar> conv2d_im2col(const Tensor<Scalar>& input, const Tensor<Scalar>& kernel,
                             const Tensor<Scalar>* bias, int stride, int pad) {
  const ConvGeometry g = conv_geometry(input, kernel, stride, pad);
  const Eigen::Index ck = Eigen::Index(g.cin) * g.kh * g.kw;
  const Eigen::Index positions = Eigen::Index(g.ho) * g.wo;
  Tensor<Scalar> out(Shape{g.cout, g.ho, g.wo});
  Eigen::Map<const RowMatrix<Scalar>> k(kernel.data(), g.cout, ck);
  Eigen::Map<RowMatrix<Scalar>> o(out.data(), g.cout, positions);
  if (g.kh == 1 && g.kw == 1 && g.stride == 1 && g.pad == 0) {
    Eigen::Map<const RowMatrix<Scalar>> x(input.data(), g.cin, positions);
    o.noalias() = k * x;
  } else {
    o.noalias() = k * im2col(input, g);
  }
  if (bias) {
    for (int co = 0; co < g.cout; ++co) o.row(co).array() += (*bias)[co];
  }
  return out;
}

template <typename Scalar>
Tensor<Scalar> conv2d(const Tensor<Scalar>& input, const Tensor<Scalar>& kernel,
                      const Tensor<Scalar>* bias, int stride, int pad,
                      ConvAlgo algo = ConvAlgo::kIm2col) {
  if (bias && (bias->rank() != 1 || bias->dim(0) != kernel.dim(0)))
    throw ShapeError("conv2d: bias must be [Cout]");
  return algo == ConvAlgo::kDirect ? conv2d_direct(input, kernel, bias, stride, pad)
                                   : conv2d_im2col(input, kernel, bias, stride, pad);
}

template <typename Scalar>
struct ConvGrads {
  Tensor<Scalar> input, kernel, bias;
};

template <typename Scalar>
ConvGrads<Scalar> conv2d_backward(const Tensor<Scalar>& input, const Tensor<Scalar>& kernel,
                                  const Tensor<Scalar>& grad_out, int stride, int pad,
                                  bool want_input, bool want_kernel, bool want_bias) {
  const ConvGeometry g = conv_geometry(input, kernel, stride, pad);
  const Eigen::Index ck = Eigen::Index(g.cin) * g.kh * g.kw;
  const Eigen::Index positions = Eigen::Index(g.ho) * g.wo;
  Eigen::Map<const RowMatrix<Scalar>> k(kernel.data(), g.cout, ck);
  Eigen::Map<const RowMatrix<Scalar>> go(grad_out.data(), g.cout, positions);
  const bool pointwise = g.kh == 1 && g.kw == 1 && g.stride == 1 && g.pad == 0;

  ConvGrads<Scalar> grads;
  if (want_kernel) {
    grads.kernel = Tensor<Scalar>(kernel.shape());
    Eigen::Map<RowMatrix<Scalar>> gk(grads.kernel.data(), g.cout, ck);
    if (pointwise) {
      Eigen::Map<const RowMatrix<Scalar>> x(input.data(), g.cin, positions);
      gk.noalias() = go * x.transpose();
    } else {
      gk.noalias() = go * im2col(input, g).transpose();
    }
  }
  if (want_input) {
    grads.input = Tensor<Scalar>(input.shape());
    if (pointwise) {
      Eigen::Map<RowMatrix<Scalar>> gx(grads.input.data(), g.cin, positions);
      gx.noalias() = k.transpose() * go;
    } else {
      RowMatrix<Scalar> gcols = k.transpose() * go;
      col2im_add(gcols, g, grads.input);
    }
  }
  if (want_bias) {
    grads.bias = Tensor<Scalar>(Shape{g.cout});
    for (int co = 0; co < g.cout; ++co) grads.bias[co] = go.row(co).sum();
  }
  return grads;
}

// Per-channel valid cross-correlation; the template acts as the kernel.
template <typename Scalar>
Tensor<Scalar> xcorr_depthwise(const Tensor<Scalar>& templ, const Tensor<Scalar>& search) {
  if (templ.rank() != 3 || search.rank() != 3)
    throw ShapeError("xcorr_depthwise: operands must be [C,H,W]");
  if (templ.dim(0) != search.dim(0))
    throw ShapeError("xcorr_depthwise: channel mismatch " + shape_str(templ.shape()) + " vs " +
                     shape_str(search.shape()));
  const int c = templ.dim(0), ht = templ.dim(1), wt = templ.dim(2);
  const int hs = search.dim(1), ws = search.dim(2);
  if (ht > hs || wt > ws)
    throw ShapeError("xcorr_depthwise: template " + shape_str(templ.shape()) +
                     " larger than search " + shape_str(search.shape()));
  const int ho = hs - ht + 1, wo = ws - wt + 1;
  Tensor<Scalar> out(Shape{c, ho, wo});
  for (int ch = 0; ch < c; ++ch)
    for (int oi = 0; oi < ho; ++oi)
      for (int oj = 0; oj < wo; ++oj) {
        Scalar acc(0);
        for (int ti = 0; ti < ht; ++ti) {
          const Scalar* s = search.data() + (Eigen::Index(ch) * hs + oi + ti) * ws + oj;
          const Scalar* t = templ.data() + (Eigen::Index(ch) * ht + ti) * wt;
          for (int tj = 0; tj < wt; ++tj) acc += s[tj] * t[tj];
        }
        out(ch, oi, oj) = acc;
      }
  return out;
}

template <typename Scalar>
void xcorr_depthwise_backward(const Tensor<Scalar>& templ, const Tensor<Scalar>& search,
                              const Tensor<Scalar>& grad_out, Tensor<Scalar>* grad_templ,
                              Tensor<Scalar>* grad_search) {
  const int c = templ.dim(0), ht = templ.dim(1), wt = templ.dim(2);
  const int ho = grad_out.dim(1), wo = grad_out.dim(2);
  for (int ch = 0; ch < c; ++ch)
    for (int oi = 0; oi < ho; ++oi)
      for (int oj = 0; oj < wo; ++oj) {
        const Scalar g = grad_out(ch, oi, oj);
        if (g == Scalar(0)) continue;
        for (int ti = 0; ti < ht; ++ti)
          for (int tj = 0; tj < wt; ++tj) {
            if (grad_templ) (*grad_templ)(ch, ti, tj) += g * search(ch, oi + ti, oj + tj);
            if (grad_search) (*grad_search)(ch, oi + ti, oj + tj) += g * templ(ch, ti, tj);
          }
      }
}

// Non-overlapping max pooling; records the winning flat index per output cell.
template <typename Scalar>
Tensor<Scalar> maxpool2d(const Tensor<Scalar>& input, int window, std::vector<Eigen::Index>* argmax) {
  if (input.rank() != 3) throw ShapeError("maxpool2d: input must be [C,H,W]");
  if (window < 1 || input.dim(1) < window || input.dim(2) < window)
    throw ShapeError("maxpool2d: window " + std::to_string(window) + " does not fit " +
                     shape_str(input.shape()));
  const int c = input.dim(0), h = input.dim(1), w = input.dim(2);
  const int ho = h / window, wo = w / window;
  Tensor<Scalar> out(Shape{c, ho, wo});
  if (argmax) argmax->assign(static_cast<std::size_t>(out.size()), 0);
  Eigen::Index o = 0;
  for (int ch = 0; ch < c; ++ch)
    for (int oi = 0; oi < ho; ++oi)
      for (int oj = 0; oj < wo; ++oj, ++o) {
        Scalar best = -std::numeric_limits<Scalar>::infinity();
        Eigen::Index best_idx = 0;
        for (int di = 0; di < window; ++di)
          for (int dj = 0; dj < window; ++dj) {
            const Eigen::Index idx = (Eigen::Index(ch) * h + oi * window + di) * w + oj * window + dj;
            if (input[idx] > best) {
              best = input[idx];
              best_idx = idx;
            }
          }
        out[o] = best;
        if (argmax) (*argmax)[static_cast<std::size_t>(o)] = best_idx;
      }
  return out;
}

// Removes `border` rows/cols from every side of each channel.
template <typename Scalar>
Tensor<Scalar> crop_border(const Tensor<Scalar>& input, int border) {
  if (input.rank() != 3) throw ShapeError("crop_border: input must be [C,H,W]");
  const int h = input.dim(1) - 2 * border, w = input.dim(2) - 2 * border;
  if (border < 0 || h < 1 || w < 1)
    throw ShapeError("crop_border: border " + std::to_string(border) + " too large for " +
                     shape_str(input.shape()));
  Tensor<Scalar> out(Shape{input.dim(0), h, w});
  for (int ch = 0; ch < input.dim(0); ++ch)
    for (int i = 0; i < h; ++i)
      for (int j = 0; j < w; ++j) out(ch, i, j) = input(ch, i + border, j + border);
  return out;
}

}  // namespace sfpp::kernels
