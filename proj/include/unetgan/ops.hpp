#pragma once

// Differentiable 1-D signal layers. Audio tensors are [batch, channel, time]
// so the convolution inner loops run contiguously over time.

#include <cmath>
#include <cstring>
#include <string>

#include "unetgan/tensor.hpp"

namespace unetgan {

struct Conv1dSpec {
  std::size_t in_channels = 1;
  std::size_t out_channels = 1;
  std::size_t kernel_size = 1;
  std::size_t stride = 1;
  std::size_t dilation = 1;

  void validate() const {
    if (in_channels == 0 || out_channels == 0 || kernel_size == 0 || stride == 0 || dilation == 0)
      throw ConfigError("conv1d spec: channels, kernel, stride and dilation must be >= 1");
  }

  // Same-length padding: T' = ceil(T / stride).
  std::size_t out_time(std::size_t t) const { return (t + stride - 1) / stride; }

  std::size_t pad_left(std::size_t t) const {
    std::size_t span = (out_time(t) - 1) * stride + (kernel_size - 1) * dilation + 1;
    std::size_t total = span > t ? span - t : 0;
    return total / 2;
  }
};

// Cross-correlation with dilation and stride, zero padded so the output time
// extent is ceil(T/s). Differentiable w.r.t. input, weight and bias.
template <class T>
Tensor<T> conv1d(const Tensor<T>& input, const Conv1dSpec& spec, const Tensor<T>& weight,
                 const Tensor<T>& bias) {
  spec.validate();
  if (input.shape().size() != 3)
    throw ShapeError("conv1d: input must be [B,C,T], got " + shape_str(input.shape()));
  const std::size_t B = input.shape()[0], Cin = input.shape()[1], Tlen = input.shape()[2];
  if (Tlen == 0) throw ShapeError("conv1d: zero-length input");
  if (Cin != spec.in_channels)
    throw ShapeError("conv1d: input has " + std::to_string(Cin) + " channels, spec expects " +
                     std::to_string(spec.in_channels));
  Shape wshape{spec.out_channels, spec.in_channels, spec.kernel_size};
  if (weight.shape() != wshape)
    throw ShapeError("conv1d: weight shape " + shape_str(weight.shape()) + ", expected " +
                     shape_str(wshape));
  if (bias.shape() != Shape{spec.out_channels})
    throw ShapeError("conv1d: bias shape " + shape_str(bias.shape()));

  const std::size_t Cout = spec.out_channels, K = spec.kernel_size;
  const std::size_t s = spec.stride, r = spec.dilation;
  const std::size_t Tout = spec.out_time(Tlen);
  const std::ptrdiff_t left = std::ptrdiff_t(spec.pad_left(Tlen));

  auto n = detail::make_result<T>("conv1d", {B, Cout, Tout},
                                  {input.node(), weight.node(), bias.node()});
  const T* in = input.data().data();
  const T* w = weight.data().data();
  const T* bv = bias.data().data();
  T* out = n->value.data();

  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t co = 0; co < Cout; ++co) {
      T* orow = out + (b * Cout + co) * Tout;
      for (std::size_t i = 0; i < Tout; ++i) orow[i] = bv[co];
      for (std::size_t ci = 0; ci < Cin; ++ci) {
        const T* irow = in + (b * Cin + ci) * Tlen;
        const T* wrow = w + (co * Cin + ci) * K;
        for (std::size_t k = 0; k < K; ++k) {
          const std::ptrdiff_t off = std::ptrdiff_t(r * k) - left;  // input index = i*s + off
          const T wk = wrow[k];
          // i range keeping i*s + off within [0, Tlen)
          std::size_t i0 = 0;
          if (off < 0) i0 = std::size_t((-off + std::ptrdiff_t(s) - 1) / std::ptrdiff_t(s));
          std::size_t i1 = Tout;
          if (std::ptrdiff_t(Tlen) - off > 0) {
            std::size_t lim = (std::size_t(std::ptrdiff_t(Tlen) - off) + s - 1) / s;
            i1 = std::min(Tout, lim);
          } else {
            i1 = i0;
          }
          const T* ip = irow + std::ptrdiff_t(i0 * s) + off;
          if (s == 1) {
            for (std::size_t i = i0; i < i1; ++i, ++ip) orow[i] += wk * *ip;
          } else {
            for (std::size_t i = i0; i < i1; ++i, ip += s) orow[i] += wk * *ip;
          }
        }
      }
    }
  }

  auto in_n = input.node(), w_n = weight.node(), b_n = bias.node();
  auto self = n.get();
  n->backprop = [self, in_n, w_n, b_n, B, Cin, Cout, Tlen, Tout, K, s, r, left] {
    const T* go = self->grad.data();
    if (b_n->requires_grad) {
      b_n->ensure_grad();
      for (std::size_t b = 0; b < B; ++b)
        for (std::size_t co = 0; co < Cout; ++co) {
          const T* grow = go + (b * Cout + co) * Tout;
          T acc = 0;
          for (std::size_t i = 0; i < Tout; ++i) acc += grow[i];
          b_n->grad[co] += acc;
        }
    }
    for (std::size_t b = 0; b < B; ++b) {
      for (std::size_t co = 0; co < Cout; ++co) {
        const T* grow = go + (b * Cout + co) * Tout;
        for (std::size_t ci = 0; ci < Cin; ++ci) {
          const T* irow = in_n->value.data() + (b * Cin + ci) * Tlen;
          for (std::size_t k = 0; k < K; ++k) {
            const std::ptrdiff_t off = std::ptrdiff_t(r * k) - left;
            std::size_t i0 = 0;
            if (off < 0) i0 = std::size_t((-off + std::ptrdiff_t(s) - 1) / std::ptrdiff_t(s));
            std::size_t i1 = Tout;
            if (std::ptrdiff_t(Tlen) - off > 0) {
              std::size_t lim = (std::size_t(std::ptrdiff_t(Tlen) - off) + s - 1) / s;
              i1 = std::min(Tout, lim);
            } else {
              i1 = i0;
            }
            if (w_n->requires_grad) {
              w_n->ensure_grad();
              const T* ip = irow + std::ptrdiff_t(i0 * s) + off;
              T acc = 0;
              for (std::size_t i = i0; i < i1; ++i, ip += s) acc += grow[i] * *ip;
              w_n->grad[(co * Cin + ci) * K + k] += acc;
            }
            if (in_n->requires_grad) {
              in_n->ensure_grad();
              T* gi = in_n->grad.data() + (b * Cin + ci) * Tlen + std::ptrdiff_t(i0 * s) + off;
              const T wk = w_n->value[(co * Cin + ci) * K + k];
              for (std::size_t i = i0; i < i1; ++i, gi += s) *gi += grow[i] * wk;
            }
          }
        }
      }
    }
  };
  detail::check_finite(*n);
  return Tensor<T>(n);
}

// ---------------------------------------------------------------------------
// Batch normalization
// ---------------------------------------------------------------------------

enum class BnMode { training, inference };

template <class T>
struct BatchNormState {
  Tensor<T> gamma;  // learnable scale
  Tensor<T> beta;   // learnable shift
  std::vector<T> running_mean;
  std::vector<T> running_var;
  T momentum = T(0.9);
  T eps = T(1e-5);

  static BatchNormState make(std::size_t channels) {
    BatchNormState st;
    st.gamma = Tensor<T>::full({channels}, T(1), true);
    st.beta = Tensor<T>::zeros({channels}, true);
    st.running_mean.assign(channels, T(0));
    st.running_var.assign(channels, T(1));
    return st;
  }

  std::size_t channels() const { return st_channels(); }
  std::size_t st_channels() const { return gamma.shape()[0]; }
};

// Normalizes per channel over (batch, time). Training mode uses batch
// statistics and updates the running estimates; inference mode is a fixed
// affine map from the running estimates.
template <class T>
Tensor<T> batchnorm(const Tensor<T>& input, BatchNormState<T>& state, BnMode mode) {
  if (input.shape().size() != 3)
    throw ShapeError("batchnorm: input must be [B,C,T], got " + shape_str(input.shape()));
  const std::size_t B = input.shape()[0], C = input.shape()[1], Tlen = input.shape()[2];
  if (C != state.channels())
    throw ShapeError("batchnorm: channel mismatch, input " + std::to_string(C) + " vs state " +
                     std::to_string(state.channels()));
  const std::size_t N = B * Tlen;  // samples per channel
  if (mode == BnMode::training && N < 2)
    throw DataError("batchnorm: training mode needs B*T >= 2 per channel, got " +
                    std::to_string(N));

  auto n = detail::make_result<T>("batchnorm", input.shape(),
                                  {input.node(), state.gamma.node(), state.beta.node()});
  const T* in = input.data().data();
  const T* g = state.gamma.data().data();
  const T* be = state.beta.data().data();
  T* out = n->value.data();

  // Per-channel statistics used by both forward and backward.
  auto stats_mean = std::make_shared<std::vector<T>>(C);
  auto stats_istd = std::make_shared<std::vector<T>>(C);

  for (std::size_t c = 0; c < C; ++c) {
    T m, v;
    if (mode == BnMode::training) {
      T acc = 0;
      for (std::size_t b = 0; b < B; ++b) {
        const T* row = in + (b * C + c) * Tlen;
        for (std::size_t t = 0; t < Tlen; ++t) acc += row[t];
      }
      m = acc / T(N);
      T vacc = 0;
      for (std::size_t b = 0; b < B; ++b) {
        const T* row = in + (b * C + c) * Tlen;
        for (std::size_t t = 0; t < Tlen; ++t) {
          T d = row[t] - m;
          vacc += d * d;
        }
      }
      v = vacc / T(N);
      state.running_mean[c] = state.momentum * state.running_mean[c] + (T(1) - state.momentum) * m;
      state.running_var[c] = state.momentum * state.running_var[c] + (T(1) - state.momentum) * v;
    } else {
      m = state.running_mean[c];
      v = state.running_var[c];
    }
    const T istd = T(1) / std::sqrt(v + state.eps);
    (*stats_mean)[c] = m;
    (*stats_istd)[c] = istd;
    for (std::size_t b = 0; b < B; ++b) {
      const T* row = in + (b * C + c) * Tlen;
      T* orow = out + (b * C + c) * Tlen;
      for (std::size_t t = 0; t < Tlen; ++t) orow[t] = g[c] * (row[t] - m) * istd + be[c];
    }
  }

  auto in_n = input.node(), g_n = state.gamma.node(), b_n = state.beta.node();
  auto self = n.get();
  n->backprop = [self, in_n, g_n, b_n, stats_mean, stats_istd, B, C, Tlen, N, mode] {
    const T* go = self->grad.data();
    for (std::size_t c = 0; c < C; ++c) {
      const T m = (*stats_mean)[c];
      const T istd = (*stats_istd)[c];
      const T gamma_c = g_n->value[c];
      // Reductions over (B,T) for this channel.
      T sum_dy = 0, sum_dy_xhat = 0;
      for (std::size_t b = 0; b < B; ++b) {
        const T* grow = go + (b * C + c) * Tlen;
        const T* irow = in_n->value.data() + (b * C + c) * Tlen;
        for (std::size_t t = 0; t < Tlen; ++t) {
          sum_dy += grow[t];
          sum_dy_xhat += grow[t] * (irow[t] - m) * istd;
        }
      }
      if (g_n->requires_grad) {
        g_n->ensure_grad();
        g_n->grad[c] += sum_dy_xhat;
      }
      if (b_n->requires_grad) {
        b_n->ensure_grad();
        b_n->grad[c] += sum_dy;
      }
      if (in_n->requires_grad) {
        in_n->ensure_grad();
        for (std::size_t b = 0; b < B; ++b) {
          const T* grow = go + (b * C + c) * Tlen;
          const T* irow = in_n->value.data() + (b * C + c) * Tlen;
          T* gi = in_n->grad.data() + (b * C + c) * Tlen;
          if (mode == BnMode::training) {
            for (std::size_t t = 0; t < Tlen; ++t) {
              T xhat = (irow[t] - m) * istd;
              gi[t] += gamma_c * istd *
                       (grow[t] - (sum_dy + xhat * sum_dy_xhat) / T(N));
            }
          } else {
            for (std::size_t t = 0; t < Tlen; ++t) gi[t] += gamma_c * istd * grow[t];
          }
        }
      }
    }
  };
  detail::check_finite(*n);
  return Tensor<T>(n);
}

// ---------------------------------------------------------------------------
// Activations
// ---------------------------------------------------------------------------

template <class T>
Tensor<T> leaky_relu(const Tensor<T>& a, T slope) {
  if (!(slope > T(0) && slope < T(1)))
    throw ConfigError("leaky_relu: slope must lie in (0,1)");
  auto n = detail::make_result<T>("leaky_relu", a.shape(), {a.node()});
  for (std::size_t i = 0; i < n->value.size(); ++i) {
    T x = a.data()[i];
    n->value[i] = x >= T(0) ? x : slope * x;
  }
  auto an = a.node();
  auto self = n.get();
  n->backprop = [self, an, slope] {
    if (!an->requires_grad) return;
    an->ensure_grad();
    for (std::size_t i = 0; i < self->grad.size(); ++i)
      an->grad[i] += self->grad[i] * (an->value[i] >= T(0) ? T(1) : slope);
  };
  detail::check_finite(*n);
  return Tensor<T>(n);
}

template <class T>
Tensor<T> tanh_act(const Tensor<T>& a) {
  auto n = detail::make_result<T>("tanh", a.shape(), {a.node()});
  for (std::size_t i = 0; i < n->value.size(); ++i) n->value[i] = std::tanh(a.data()[i]);
  auto an = a.node();
  auto self = n.get();
  n->backprop = [self, an] {
    if (!an->requires_grad) return;
    an->ensure_grad();
    for (std::size_t i = 0; i < self->grad.size(); ++i) {
      T y = self->value[i];
      an->grad[i] += self->grad[i] * (T(1) - y * y);
    }
  };
  detail::check_finite(*n);
  return Tensor<T>(n);
}

template <class T>
Tensor<T> sigmoid(const Tensor<T>& a) {
  auto n = detail::make_result<T>("sigmoid", a.shape(), {a.node()});
  for (std::size_t i = 0; i < n->value.size(); ++i)
    n->value[i] = T(1) / (T(1) + std::exp(-a.data()[i]));
  auto an = a.node();
  auto self = n.get();
  n->backprop = [self, an] {
    if (!an->requires_grad) return;
    an->ensure_grad();
    for (std::size_t i = 0; i < self->grad.size(); ++i) {
      T y = self->value[i];
      an->grad[i] += self->grad[i] * y * (T(1) - y);
    }
  };
  detail::check_finite(*n);
  return Tensor<T>(n);
}

// ---------------------------------------------------------------------------
// Resampling and structure ops
// ---------------------------------------------------------------------------

// Keeps every other time step (indices 0, 2, 4, ...).
template <class T>
Tensor<T> decimate(const Tensor<T>& a) {
  if (a.shape().size() != 3)
    throw ShapeError("decimate: input must be [B,C,T], got " + shape_str(a.shape()));
  const std::size_t B = a.shape()[0], C = a.shape()[1], Tlen = a.shape()[2];
  const std::size_t Tout = (Tlen + 1) / 2;
  auto n = detail::make_result<T>("decimate", {B, C, Tout}, {a.node()});
  for (std::size_t bc = 0; bc < B * C; ++bc) {
    const T* row = a.data().data() + bc * Tlen;
    T* orow = n->value.data() + bc * Tout;
    for (std::size_t i = 0; i < Tout; ++i) orow[i] = row[2 * i];
  }
  auto an = a.node();
  auto self = n.get();
  n->backprop = [self, an, B, C, Tlen, Tout] {
    if (!an->requires_grad) return;
    an->ensure_grad();
    for (std::size_t bc = 0; bc < B * C; ++bc) {
      const T* grow = self->grad.data() + bc * Tout;
      T* gi = an->grad.data() + bc * Tlen;
      for (std::size_t i = 0; i < Tout; ++i) gi[2 * i] += grow[i];
    }
  };
  return Tensor<T>(n);
}

// Linear interpolation by a factor of two: out[2i] = in[i],
// out[2i+1] = (in[i] + in[i+1]) / 2, last odd sample replicates the boundary.
template <class T>
Tensor<T> upsample_linear2x(const Tensor<T>& a) {
  if (a.shape().size() != 3)
    throw ShapeError("upsample_linear2x: input must be [B,C,T], got " + shape_str(a.shape()));
  const std::size_t B = a.shape()[0], C = a.shape()[1], Tlen = a.shape()[2];
  const std::size_t Tout = 2 * Tlen;
  auto n = detail::make_result<T>("upsample_linear2x", {B, C, Tout}, {a.node()});
  for (std::size_t bc = 0; bc < B * C; ++bc) {
    const T* row = a.data().data() + bc * Tlen;
    T* orow = n->value.data() + bc * Tout;
    for (std::size_t i = 0; i + 1 < Tlen; ++i) {
      orow[2 * i] = row[i];
      orow[2 * i + 1] = (row[i] + row[i + 1]) / T(2);
    }
    orow[2 * (Tlen - 1)] = row[Tlen - 1];
    orow[2 * Tlen - 1] = row[Tlen - 1];
  }
  auto an = a.node();
  auto self = n.get();
  n->backprop = [self, an, B, C, Tlen, Tout] {
    if (!an->requires_grad) return;
    an->ensure_grad();
    for (std::size_t bc = 0; bc < B * C; ++bc) {
      const T* grow = self->grad.data() + bc * Tout;
      T* gi = an->grad.data() + bc * Tlen;
      for (std::size_t i = 0; i + 1 < Tlen; ++i) {
        gi[i] += grow[2 * i] + grow[2 * i + 1] / T(2);
        gi[i + 1] += grow[2 * i + 1] / T(2);
      }
      gi[Tlen - 1] += grow[2 * (Tlen - 1)] + grow[2 * Tlen - 1];
    }
  };
  return Tensor<T>(n);
}

// Channel-wise concatenation of [B,C1,T] and [B,C2,T].
template <class T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape().size() != 3 || b.shape().size() != 3)
    throw ShapeError("concat_channels: inputs must be [B,C,T]");
  const std::size_t B = a.shape()[0], C1 = a.shape()[1], Tlen = a.shape()[2];
  const std::size_t C2 = b.shape()[1];
  if (b.shape()[0] != B)
    throw ShapeError("concat_channels: batch mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  if (b.shape()[2] != Tlen)
    throw ShapeError("concat_channels: time extent mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  auto n = detail::make_result<T>("concat_channels", {B, C1 + C2, Tlen}, {a.node(), b.node()});
  for (std::size_t bb = 0; bb < B; ++bb) {
    std::memcpy(n->value.data() + bb * (C1 + C2) * Tlen, a.data().data() + bb * C1 * Tlen,
                C1 * Tlen * sizeof(T));
    std::memcpy(n->value.data() + (bb * (C1 + C2) + C1) * Tlen, b.data().data() + bb * C2 * Tlen,
                C2 * Tlen * sizeof(T));
  }
  auto an = a.node(), bn = b.node();
  auto self = n.get();
  n->backprop = [self, an, bn, B, C1, C2, Tlen] {
    for (std::size_t bb = 0; bb < B; ++bb) {
      if (an->requires_grad) {
        an->ensure_grad();
        const T* g = self->grad.data() + bb * (C1 + C2) * Tlen;
        T* gi = an->grad.data() + bb * C1 * Tlen;
        for (std::size_t i = 0; i < C1 * Tlen; ++i) gi[i] += g[i];
      }
      if (bn->requires_grad) {
        bn->ensure_grad();
        const T* g = self->grad.data() + (bb * (C1 + C2) + C1) * Tlen;
        T* gi = bn->grad.data() + bb * C2 * Tlen;
        for (std::size_t i = 0; i < C2 * Tlen; ++i) gi[i] += g[i];
      }
    }
  };
  return Tensor<T>(n);
}

// Global average over time: [B,C,T] -> [B,C].
template <class T>
Tensor<T> mean_over_time(const Tensor<T>& a) {
  if (a.shape().size() != 3)
    throw ShapeError("mean_over_time: input must be [B,C,T], got " + shape_str(a.shape()));
  const std::size_t B = a.shape()[0], C = a.shape()[1], Tlen = a.shape()[2];
  auto n = detail::make_result<T>("mean_over_time", {B, C}, {a.node()});
  for (std::size_t bc = 0; bc < B * C; ++bc) {
    const T* row = a.data().data() + bc * Tlen;
    T acc = 0;
    for (std::size_t t = 0; t < Tlen; ++t) acc += row[t];
    n->value[bc] = acc / T(Tlen);
  }
  auto an = a.node();
  auto self = n.get();
  n->backprop = [self, an, B, C, Tlen] {
    if (!an->requires_grad) return;
    an->ensure_grad();
    for (std::size_t bc = 0; bc < B * C; ++bc) {
      T g = self->grad[bc] / T(Tlen);
      T* gi = an->grad.data() + bc * Tlen;
      for (std::size_t t = 0; t < Tlen; ++t) gi[t] += g;
    }
  };
  return Tensor<T>(n);
}

// Dense layer: [B,C] x weight[C,O] + bias[O] -> [B,O].
template <class T>
Tensor<T> linear(const Tensor<T>& a, const Tensor<T>& weight, const Tensor<T>& bias) {
  if (a.shape().size() != 2 || weight.shape().size() != 2)
    throw ShapeError("linear: expects [B,C] input and [C,O] weight");
  const std::size_t B = a.shape()[0], C = a.shape()[1], O = weight.shape()[1];
  if (weight.shape()[0] != C)
    throw ShapeError("linear: weight shape " + shape_str(weight.shape()) + " vs input " +
                     shape_str(a.shape()));
  if (bias.shape() != Shape{O}) throw ShapeError("linear: bias shape " + shape_str(bias.shape()));
  auto n = detail::make_result<T>("linear", {B, O}, {a.node(), weight.node(), bias.node()});
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t o = 0; o < O; ++o) {
      T acc = bias.data()[o];
      for (std::size_t c = 0; c < C; ++c) acc += a.data()[b * C + c] * weight.data()[c * O + o];
      n->value[b * O + o] = acc;
    }
  auto an = a.node(), wn = weight.node(), bn = bias.node();
  auto self = n.get();
  n->backprop = [self, an, wn, bn, B, C, O] {
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t o = 0; o < O; ++o) {
        const T g = self->grad[b * O + o];
        if (bn->requires_grad) {
          bn->ensure_grad();
          bn->grad[o] += g;
        }
        if (wn->requires_grad) {
          wn->ensure_grad();
          for (std::size_t c = 0; c < C; ++c) wn->grad[c * O + o] += g * an->value[b * C + c];
        }
        if (an->requires_grad) {
          an->ensure_grad();
          for (std::size_t c = 0; c < C; ++c) an->grad[b * C + c] += g * wn->value[c * O + o];
        }
      }
  };
  detail::check_finite(*n);
  return Tensor<T>(n);
}

// [B,C] -> [B], drops a singleton channel axis.
template <class T>
Tensor<T> squeeze_channel(const Tensor<T>& a) {
  if (a.shape().size() != 2 || a.shape()[1] != 1)
    throw ShapeError("squeeze_channel: expects [B,1], got " + shape_str(a.shape()));
  auto n = detail::make_result<T>("squeeze_channel", {a.shape()[0]}, {a.node()});
  n->value = a.data();
  auto an = a.node();
  auto self = n.get();
  n->backprop = [self, an] {
    if (!an->requires_grad) return;
    an->ensure_grad();
    for (std::size_t i = 0; i < self->grad.size(); ++i) an->grad[i] += self->grad[i];
  };
  return Tensor<T>(n);
}

}  // namespace unetgan
