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

#include "metareg/losses.hpp"

#include <cmath>
#include <string>

#include "metareg/ops.hpp"

namespace metareg {

void validate(const LossWeights& w) {
  if (!(w.alpha >= 0.0) || !std::isfinite(w.alpha)) throw DomainError("loss weight alpha must be finite and >= 0");
}

namespace {

template <typename T>
void require_matching(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  if (a.rank() < 3 || b.rank() < 3 || a.extent() != b.extent() || a.size() != b.size())
    throw ShapeError("ssd: grid mismatch " + dims_to_string(a.dims()) + " vs " + dims_to_string(b.dims()));
}

template <typename T>
void require_field(const BasicTensor<T>& u) {
  if (u.rank() != 4 || u.dim(0) != 3) throw ShapeError("bending_energy needs a [3,X,Y,Z] field, got " + dims_to_string(u.dims()));
  const Extent e = u.extent();
  if (e.x < 3 || e.y < 3 || e.z < 3)
    throw ShapeError("bending_energy needs extent >= 3 on every axis, got " + to_string(e));
}

struct Strides {
  std::ptrdiff_t x, y, z;
};

// Visits every interior voxel of every component with the six second
// differences (dxy etc. already divided by 4).
template <typename T, typename Fn>
void for_each_interior(const BasicTensor<T>& u, Fn&& fn) {
  const Extent e = u.extent();
  const Strides s{1, e.x, static_cast<std::ptrdiff_t>(e.x) * e.y};
  const std::size_t n = e.voxels();
  for (int c = 0; c < 3; ++c) {
    const T* f = u.data() + static_cast<std::size_t>(c) * n;
    for (int z = 1; z < e.z - 1; ++z)
      for (int y = 1; y < e.y - 1; ++y)
        for (int x = 1; x < e.x - 1; ++x) {
          const std::ptrdiff_t i = x + s.y * y + s.z * z;
          const T* p = f + i;
          const T dxx = p[s.x] - T(2) * p[0] + p[-s.x];
          const T dyy = p[s.y] - T(2) * p[0] + p[-s.y];
          const T dzz = p[s.z] - T(2) * p[0] + p[-s.z];
          const T dxy = (p[s.x + s.y] - p[s.x - s.y] - p[-s.x + s.y] + p[-s.x - s.y]) * T(0.25);
          const T dxz = (p[s.x + s.z] - p[s.x - s.z] - p[-s.x + s.z] + p[-s.x - s.z]) * T(0.25);
          const T dyz = (p[s.y + s.z] - p[s.y - s.z] - p[-s.y + s.z] + p[-s.y - s.z]) * T(0.25);
          fn(static_cast<std::size_t>(c) * n + static_cast<std::size_t>(i), s, dxx, dyy, dzz, dxy, dxz, dyz);
        }
  }
}

template <typename T>
std::size_t interior_count(const Extent& e) {
  return static_cast<std::size_t>(e.x - 2) * static_cast<std::size_t>(e.y - 2) * static_cast<std::size_t>(e.z - 2) * 3;
}

}  // namespace

template <typename T>
T ssd(const BasicTensor<T>& warped, const BasicTensor<T>& fixed) {
  require_matching(warped, fixed);
  double acc = 0.0;
  for (std::size_t i = 0; i < warped.size(); ++i) {
    const double d = static_cast<double>(warped[i]) - static_cast<double>(fixed[i]);
    acc += d * d;
  }
  return static_cast<T>(acc / static_cast<double>(warped.size()));
}

template <typename T>
T bending_energy(const BasicTensor<T>& ddf) {
  require_field(ddf);
  double acc = 0.0;
  for_each_interior(ddf, [&](std::size_t, const Strides&, T dxx, T dyy, T dzz, T dxy, T dxz, T dyz) {
    acc += static_cast<double>(dxx * dxx + dyy * dyy + dzz * dzz + T(2) * (dxy * dxy + dxz * dxz + dyz * dyz));
  });
  return static_cast<T>(acc / static_cast<double>(interior_count<T>(ddf.extent())));
}

template <typename T>
T total_loss(const BasicTensor<T>& moving, const BasicTensor<T>& fixed, const BasicTensor<T>& ddf,
             const LossWeights& w) {
  validate(w);
  const T sim = ssd(warp(moving, ddf), fixed);
  if (w.alpha == 0.0) return sim;
  return sim + static_cast<T>(w.alpha) * bending_energy(ddf);
}

template <typename T>
Var ssd(BasicTape<T>& tape, Var warped, Var fixed) {
  const T value = ssd(tape.value(warped), tape.value(fixed));
  return tape.record(OpKind::Ssd, {warped.id, fixed.id}, BasicTensor<T>::scalar(value),
                     [warped, fixed](BasicTape<T>& t, int self) {
                       const auto& a = t.value(warped);
                       const auto& b = t.value(fixed);
                       const T k = T(2) * t.grad(Var{self}).item() / static_cast<T>(a.size());
                       if (t.requires_grad(warped)) {
                         auto& ga = t.grad_buffer(warped.id);
                         for (std::size_t i = 0; i < a.size(); ++i) ga[i] += k * (a[i] - b[i]);
                       }
                       if (t.requires_grad(fixed)) {
                         auto& gb = t.grad_buffer(fixed.id);
                         for (std::size_t i = 0; i < a.size(); ++i) gb[i] -= k * (a[i] - b[i]);
                       }
                     });
}

template <typename T>
Var bending_energy(BasicTape<T>& tape, Var ddf) {
  const T value = bending_energy(tape.value(ddf));
  return tape.record(OpKind::BendingEnergy, {ddf.id}, BasicTensor<T>::scalar(value), [ddf](BasicTape<T>& t, int self) {
    const auto& u = t.value(ddf);
    T* g = t.grad_buffer(ddf.id).data();
    const T coef = T(2) * t.grad(Var{self}).item() / static_cast<T>(interior_count<T>(u.extent()));
    for_each_interior(u, [&](std::size_t i, const Strides& s, T dxx, T dyy, T dzz, T dxy, T dxz, T dyz) {
      T* p = g + i;
      const T gxx = coef * dxx, gyy = coef * dyy, gzz = coef * dzz;
      p[s.x] += gxx;
      p[-s.x] += gxx;
      p[s.y] += gyy;
      p[-s.y] += gyy;
      p[s.z] += gzz;
      p[-s.z] += gzz;
      p[0] -= T(2) * (gxx + gyy + gzz);
      // d(2*dxy^2)/d(corner) = 4*dxy * (+-1/4)
      const T half = T(0.5) * coef;
      const T gxy = half * dxy, gxz = half * dxz, gyz = half * dyz;
      p[s.x + s.y] += gxy;
      p[s.x - s.y] -= gxy;
      p[-s.x + s.y] -= gxy;
      p[-s.x - s.y] += gxy;
      p[s.x + s.z] += gxz;
      p[s.x - s.z] -= gxz;
      p[-s.x + s.z] -= gxz;
      p[-s.x - s.z] += gxz;
      p[s.y + s.z] += gyz;
      p[s.y - s.z] -= gyz;
      p[-s.y + s.z] -= gyz;
      p[-s.y - s.z] += gyz;
    });
  });
}

template <typename T>
Var total_loss(BasicTape<T>& tape, Var moving, Var fixed, Var ddf, const LossWeights& w) {
  validate(w);
  const Var warped = warp(tape, moving, ddf);
  const Var sim = ssd(tape, warped, fixed);
  if (w.alpha == 0.0) return sim;
  const Var reg = scale(tape, bending_energy(tape, ddf), static_cast<T>(w.alpha));
  return add(tape, sim, reg);
}

#define METAREG_INSTANTIATE_LOSSES(T)                                                                         \
  template T ssd<T>(const BasicTensor<T>&, const BasicTensor<T>&);                                            \
  template T bending_energy<T>(const BasicTensor<T>&);                                                        \
  template T total_loss<T>(const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&,               \
                           const LossWeights&);                                                               \
  template Var ssd<T>(BasicTape<T>&, Var, Var);                                                               \
  template Var bending_energy<T>(BasicTape<T>&, Var);                                                         \
  template Var total_loss<T>(BasicTape<T>&, Var, Var, Var, const LossWeights&);

METAREG_INSTANTIATE_LOSSES(float)
METAREG_INSTANTIATE_LOSSES(double)

}  // namespace metareg
