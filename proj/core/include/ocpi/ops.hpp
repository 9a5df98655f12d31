#pragma once

#include <cstdint>
#include <span>

#include "ocpi/tape.hpp"

namespace ocpi::nn {

// Stride-1 cross-correlation with "same" zero padding. w is
// (c_out, c_in, k, k) with odd k, b is (1, c_out, 1, 1).
Var conv2d(Tape& t, Var x, Var w, Var b);
Var relu(Tape& t, Var x);
// 2x2 max pooling; the gradient goes to the first maximum in row-major
// window order.
Var maxpool2x2(Tape& t, Var x);
Var upsample_nearest2x(Tape& t, Var x);
Var concat_channels(Tape& t, Var a, Var b);
// Fully connected layer over the flattened item: w is (out, in, 1, 1), b is
// (1, out, 1, 1); result is (n, out, 1, 1).
Var dense(Tape& t, Var x, Var w, Var b);
Var reshape(Tape& t, Var x, const Shape& s);

// Mean per-pixel cross-entropy of softmax(logits) against class ids
// (n*h*w entries, row-major over n, h, w).
Var softmax_cross_entropy(Tape& t, Var logits, std::span<const std::uint8_t> classes);

// Argmax class per pixel (first maximum on ties).
std::vector<std::uint8_t> argmax_classes(const Tensor& logits);
Tensor softmax(const Tensor& logits);

// Forward-only reference kernels used by benchmarks.
Tensor conv2d_forward(const Tensor& x, const Tensor& w, const Tensor& b);

}  // namespace ocpi::nn
