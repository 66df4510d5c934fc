#pragma once

#include <vector>

#include "delaynet/tensor.hpp"

namespace delaynet {

// Elementwise unary. Result shape equals input shape; gradients flow to
// requires_grad parents. Any NaN in the result raises numeric_error naming
// the op and the first offending index.
Tensor exp(const Tensor& x);
Tensor neg(const Tensor& x);
Tensor sqrt(const Tensor& x);  // no implicit epsilon; callers guard
Tensor sigmoid(const Tensor& x);
Tensor sin(const Tensor& x);
Tensor cos(const Tensor& x);
Tensor abs(const Tensor& x);  // subgradient 0 at 0
/// max(x,0) + 0.01*min(x,0)
Tensor leaky_relu(const Tensor& x);

// Elementwise binary. Shapes must match exactly, or one operand may be a
// one-element tensor (scalar broadcast). Full broadcasting is out of scope.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);  // no implicit epsilon
Tensor atan2(const Tensor& y, const Tensor& x);  // gradient at (0,0) is 0
Tensor minimum(const Tensor& a, const Tensor& b);  // ties take a
Tensor maximum(const Tensor& a, const Tensor& b);  // ties take a

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }
inline Tensor operator+(const Tensor& a, double b) { return add(a, Tensor::scalar(b)); }
inline Tensor operator-(const Tensor& a, double b) { return sub(a, Tensor::scalar(b)); }
inline Tensor operator*(const Tensor& a, double b) { return mul(a, Tensor::scalar(b)); }
inline Tensor operator/(const Tensor& a, double b) { return div(a, Tensor::scalar(b)); }
inline Tensor operator*(double a, const Tensor& b) { return mul(Tensor::scalar(a), b); }
inline Tensor operator-(const Tensor& a) { return neg(a); }

/// [M,K] x [K,N] -> [M,N]. dA = dC*B^T, dB = A^T*dC.
Tensor matmul(const Tensor& a, const Tensor& b);

enum class Padding { same_zero, causal_left };

/// Per-channel 1-D convolution, correlation-indexed: tap j of a kernel row
/// reads x at offset j - pad_left, so mass left of center reaches into the
/// past. same_zero keeps length S with the padding split evenly (extra on
/// the right for even K); causal_left puts all K-1 pad positions on the
/// left so output[t] depends on x[..t] only.
Tensor conv1d_depthwise(const Tensor& x, const Tensor& kernels, Padding padding);

/// Full causal convolution: x [B,Cin,S], w [Cout,Cin,K] -> [B,Cout,S].
/// output[t] is a function of x[.., 0..t] only.
Tensor conv1d_causal(const Tensor& x, const Tensor& w);

/// Same affine map at every time position: x [B,Cin,L], w [Cout,Cin],
/// bias [Cout] -> [B,Cout,L].
Tensor linear_ct(const Tensor& x, const Tensor& w, const Tensor& bias);

/// Arithmetic mean over all elements -> one-element tensor.
Tensor mean_all(const Tensor& x);

/// x [B,Ca,L] ++ y [B,Cb,L] -> [B,Ca+Cb,L] along the channel axis.
Tensor concat_channels(const Tensor& a, const Tensor& b);

/// Each channel repeated n consecutive times: [B,C,L] -> [B,n*C,L],
/// output channel c*n+j mirrors input channel c.
Tensor repeat_channels(const Tensor& x, int n);

/// Keep the trailing keep_last time positions: [B,C,S] -> [B,C,keep_last].
Tensor crop_time(const Tensor& x, std::int64_t keep_last);

/// Stack equal-length vectors into a matrix [N,K].
Tensor stack_rows(const std::vector<Tensor>& rows);

/// Flatten and join tensors of any shape into one vector [sum of numels],
/// in argument order.
Tensor concat_all(const std::vector<Tensor>& parts);

/// Same data, new shape; element counts must agree.
Tensor reshape(const Tensor& x, Shape shape);

/// Append a length-S last axis by repetition: [d0,..,dk] -> [d0,..,dk,S].
Tensor expand_last(const Tensor& x, std::int64_t s);

/// Linear interpolation of x along time at per-channel fractional
/// coordinates: x [B,C,Li], coords [C,Lo] (or [1,Lo], shared across
/// channels) -> [B,C,Lo]. Coordinates outside [0,Li-1] read as 0.
/// Differentiable in both x and coords.
Tensor warp_time(const Tensor& x, const Tensor& coords);

/// Linear interpolation into a fixed table sampled at integer positions
/// 0..table.size()-1; outside reads 0. Gradient flows to coords only.
Tensor interp_table(std::vector<double> table, const Tensor& coords);

/// Independent full-aperture dot products: x [B,C,S], kernels [C,T,S]
/// -> [B,C,T] with out[b,c,t] = sum_i kernels[c,t,i]*x[b,c,i].
Tensor per_cell_dot(const Tensor& x, const Tensor& kernels);

}  // namespace delaynet
