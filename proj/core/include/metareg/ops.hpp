// Copyright 2026 The metareg Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <span>

#include "metareg/tape.hpp"
#include "metareg/tensor.hpp"

namespace metareg {

// ---------------------------------------------------------------------------
// Plain kernels. These take and return tensors directly and are what the
// tape ops below call in their forward pass.
// ---------------------------------------------------------------------------

/// "Same"-padded 3D convolution: input [C,X,Y,Z] (or [X,Y,Z] for C=1),
/// kernel [O,C,k,k,k] with k odd, padding k/2, zero outside the grid.
/// `bias` is [O] or null. Output extent is (X + 2*(k/2) - k)/stride + 1.
template <typename T>
BasicTensor<T> conv3d(const BasicTensor<T>& input, const BasicTensor<T>& kernel, int stride,
                      const BasicTensor<T>* bias = nullptr);

/// Trilinear sample of a single-channel grid at a continuous voxel
/// coordinate. Corners outside the grid contribute 0.
template <typename T>
T trilinear_sample(const BasicTensor<T>& volume, T x, T y, T z);

/// Trilinear x2 upsampling of every channel with corner alignment: output
/// index i along an axis of length L reads input coordinate i*(L-1)/(2L-1).
template <typename T>
BasicTensor<T> upsample_trilinear(const BasicTensor<T>& input);

/// out[p] = trilinear_sample(volume, p + u(p)) with `ddf` [3,X,Y,Z] giving
/// u in voxel units of the output grid.
template <typename T>
BasicTensor<T> warp(const BasicTensor<T>& volume, const BasicTensor<T>& ddf);

// ---------------------------------------------------------------------------
// Differentiable ops recorded on a tape.
// ---------------------------------------------------------------------------

/// `bias` may be an invalid Var (no bias).
template <typename T>
Var conv3d(BasicTape<T>& tape, Var input, Var kernel, Var bias, int stride);

template <typename T>
Var leaky_relu(BasicTape<T>& tape, Var x, T slope);

template <typename T>
Var upsample2(BasicTape<T>& tape, Var x);

/// Concatenates two [C,X,Y,Z] tensors along the channel axis.
template <typename T>
Var concat_channels(BasicTape<T>& tape, Var a, Var b);

/// Samples `volume` [X,Y,Z] at `points` [3,PX,PY,PZ] (voxel coordinates,
/// channel-major x/y/z); result is [PX,PY,PZ]. Differentiable in both.
template <typename T>
Var sample(BasicTape<T>& tape, Var volume, Var points);

/// Warps `volume` [MX,MY,MZ] by `ddf` [3,X,Y,Z]; result is [X,Y,Z].
/// Differentiable in both.
template <typename T>
Var warp(BasicTape<T>& tape, Var volume, Var ddf);

/// Same data under new dims (element count must match).
template <typename T>
Var reshape(BasicTape<T>& tape, Var x, std::vector<int> dims);

/// Elementwise sum of two same-shape tensors.
template <typename T>
Var add(BasicTape<T>& tape, Var a, Var b);

template <typename T>
Var scale(BasicTape<T>& tape, Var x, T factor);

/// Elementwise mean of same-shape tensors.
template <typename T>
Var mean(BasicTape<T>& tape, std::span<const Var> xs);

}  // namespace metareg
