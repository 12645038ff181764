#pragma once

// Independent reference implementations: plain loops and closed forms, no
// shared code with the library kernels.

#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "sfpp/box.hpp"
#include "sfpp/tensor.hpp"

namespace oracle {

using sfpp::Shape;
using T = sfpp::Tensor<double>;

inline T random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1, double hi = 1) {
  std::uniform_real_distribution<double> u(lo, hi);
  T t(std::move(shape));
  for (Eigen::Index i = 0; i < t.size(); ++i) t[i] = u(rng);
  return t;
}

// Direct cross-correlation convolution with zero padding.
inline T conv2d(const T& x, const T& k, int stride, int pad) {
  const int cin = x.dim(0), h = x.dim(1), w = x.dim(2);
  const int cout = k.dim(0), kh = k.dim(2), kw = k.dim(3);
  const int ho = (h + 2 * pad - kh) / stride + 1, wo = (w + 2 * pad - kw) / stride + 1;
  T y(Shape{cout, ho, wo});
  for (int o = 0; o < cout; ++o)
    for (int i = 0; i < ho; ++i)
      for (int j = 0; j < wo; ++j) {
        double acc = 0;
        for (int c = 0; c < cin; ++c)
          for (int a = 0; a < kh; ++a)
            for (int b = 0; b < kw; ++b) {
              const int yi = i * stride - pad + a, xj = j * stride - pad + b;
              if (yi < 0 || xj < 0 || yi >= h || xj >= w) continue;
              acc += x(c, yi, xj) * k[((Eigen::Index(o) * cin + c) * kh + a) * kw + b];
            }
        y(o, i, j) = acc;
      }
  return y;
}

inline T xcorr_depthwise(const T& z, const T& x) {
  const int c = z.dim(0), ht = z.dim(1), wt = z.dim(2);
  const int ho = x.dim(1) - ht + 1, wo = x.dim(2) - wt + 1;
  T y(Shape{c, ho, wo});
  for (int ch = 0; ch < c; ++ch)
    for (int i = 0; i < ho; ++i)
      for (int j = 0; j < wo; ++j) {
        double acc = 0;
        for (int a = 0; a < ht; ++a)
          for (int b = 0; b < wt; ++b) acc += z(ch, a, b) * x(ch, i + a, j + b);
        y(ch, i, j) = acc;
      }
  return y;
}

inline double sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }

// -alpha_t (1 - p_t)^gamma ln p_t summed over cells.
inline double focal(const T& logits, const T& label, double gamma, double alpha) {
  double s = 0;
  for (Eigen::Index i = 0; i < logits.size(); ++i) {
    const double p = sigmoid(logits[i]);
    const bool pos = label[i] > 0.5;
    const double pt = pos ? p : 1 - p;
    const double at = pos ? alpha : 1 - alpha;
    s += -at * std::pow(1 - pt, gamma) * std::log(pt);
  }
  return s;
}

inline double bce(const T& logits, const T& target, const T& mask) {
  double s = 0;
  for (Eigen::Index i = 0; i < logits.size(); ++i) {
    if (!(mask[i] > 0)) continue;
    const double q = sigmoid(logits[i]);
    s += -(target[i] * std::log(q) + (1 - target[i]) * std::log(1 - q));
  }
  return s;
}

// IoU via decoded corner boxes around a common anchor point.
inline double ltrb_iou(const double* a, const double* b) {
  const sfpp::BBox ba{-a[0], -a[1], a[2], a[3]}, bb{-b[0], -b[1], b[2], b[3]};
  return sfpp::iou(ba, bb);
}

// Central-difference Jacobian of a vector function, [out, in].
inline std::vector<std::vector<double>> jacobian(const std::function<T(const T&)>& f, const T& x,
                                                 double eps = 1e-6) {
  const T y0 = f(x);
  std::vector<std::vector<double>> j(size_t(y0.size()), std::vector<double>(size_t(x.size())));
  T p = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    p[i] = x[i] + eps;
    const T up = f(p);
    p[i] = x[i] - eps;
    const T dn = f(p);
    p[i] = x[i];
    for (Eigen::Index o = 0; o < y0.size(); ++o) j[size_t(o)][size_t(i)] = (up[o] - dn[o]) / (2 * eps);
  }
  return j;
}

}  // namespace oracle
