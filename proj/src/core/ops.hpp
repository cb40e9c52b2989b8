#pragma once

#include "core/tensor.hpp"

namespace fuseformer {

// elementwise; shapes must match
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);

Tensor add_scalar(const Tensor& a, double c);
Tensor mul_scalar(const Tensor& a, double c);

Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);

// reductions to a one-element tensor
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

// [n,k] x [k,m] -> [n,m]
Tensor matmul(const Tensor& a, const Tensor& b);
// batched: [B,n,k] x [B,k,m] -> [B,n,m]
Tensor bmm(const Tensor& a, const Tensor& b);

// same element count; shares the buffer
Tensor reshape(const Tensor& x, std::vector<int> shape);
// out.dim(i) == x.dim(perm[i])
Tensor permute(const Tensor& x, const std::vector<int>& perm);

Tensor concat(const std::vector<Tensor>& parts, int axis);

// input [Ci,H,W], kernel [Co,Ci,kh,kw], cross-correlation (no kernel flip).
// Output extent (H + 2*padding - kh) must divide stride exactly.
Tensor conv2d(const Tensor& input, const Tensor& kernel, int stride, int padding);

// x [C,H,W] + bias [C]
Tensor add_channel_bias(const Tensor& x, const Tensor& bias);

// numerically stable (max-subtracted) along `axis`
Tensor softmax(const Tensor& x, int axis);

// x [C,H,W] -> [C,f*H,f*W], pixel replication
Tensor upsample_nearest(const Tensor& x, int factor);

// x [C,H,W], k divides H and W; ties route to the first element in
// row-major window order
Tensor max_pool2d(const Tensor& x, int k);

} // namespace fuseformer
