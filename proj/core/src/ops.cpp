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

#include "metareg/ops.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>

#if defined(__AVX512F__)
#include <immintrin.h>
#endif

namespace metareg {

std::string to_string(const Extent& e) {
  return std::to_string(e.x) + "x" + std::to_string(e.y) + "x" + std::to_string(e.z);
}

std::string dims_to_string(const std::vector<int>& dims) {
  std::string s = "[";
  for (std::size_t i = 0; i < dims.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(dims[i]);
  }
  return s + "]";
}

std::string_view to_string(OpKind kind) {
  switch (kind) {
    case OpKind::Constant: return "constant";
    case OpKind::Variable: return "variable";
    case OpKind::Parameter: return "parameter";
    case OpKind::Conv3d: return "conv3d";
    case OpKind::LeakyRelu: return "leaky_relu";
    case OpKind::Upsample2: return "upsample2";
    case OpKind::Concat: return "concat";
    case OpKind::Sample: return "sample";
    case OpKind::Warp: return "warp";
    case OpKind::Ssd: return "ssd";
    case OpKind::BendingEnergy: return "bending_energy";
    case OpKind::Add: return "add";
    case OpKind::Scale: return "scale";
    case OpKind::Mean: return "mean";
    case OpKind::Reshape: return "reshape";
  }
  return "unknown";
}

namespace {

// ---------------------------------------------------------------------------
// Convolution: im2col over blocks of output positions followed by a small
// register-blocked product with the kernel matrix [O, C*k^3].
// ---------------------------------------------------------------------------

constexpr int kBlock = 128;

struct ConvGeom {
  int c = 0, x = 0, y = 0, z = 0;
  int o = 0, k = 0, s = 1, p = 0;
  int ox = 0, oy = 0, oz = 0;
  std::size_t in_vox = 0, out_vox = 0;
  int taps = 0;  // k^3
  int kdim = 0;  // C * k^3
};

template <typename T>
ConvGeom conv_geometry(const BasicTensor<T>& input, const BasicTensor<T>& kernel, int stride) {
  if (input.rank() != 3 && input.rank() != 4)
    throw ShapeError("conv3d input must be [C,X,Y,Z] or [X,Y,Z], got " + dims_to_string(input.dims()));
  if (kernel.rank() != 5) throw ShapeError("conv3d kernel must be [O,C,k,k,k], got " + dims_to_string(kernel.dims()));
  if (stride < 1) throw DomainError("conv3d stride must be positive");
  ConvGeom g;
  const Extent e = input.extent();
  g.c = input.channels();
  g.x = e.x;
  g.y = e.y;
  g.z = e.z;
  g.o = kernel.dim(0);
  g.k = kernel.dim(2);
  if (kernel.dim(1) != g.c)
    throw ShapeError("conv3d kernel expects " + std::to_string(kernel.dim(1)) + " input channels, input has " +
                     std::to_string(g.c));
  if (kernel.dim(3) != g.k || kernel.dim(4) != g.k) throw ShapeError("conv3d kernel must be cubic");
  if (g.k % 2 == 0) throw ShapeError("conv3d kernel size must be odd");
  g.s = stride;
  g.p = g.k / 2;
  g.ox = (g.x + 2 * g.p - g.k) / g.s + 1;
  g.oy = (g.y + 2 * g.p - g.k) / g.s + 1;
  g.oz = (g.z + 2 * g.p - g.k) / g.s + 1;
  g.in_vox = e.voxels();
  g.out_vox = static_cast<std::size_t>(g.ox) * g.oy * g.oz;
  g.taps = g.k * g.k * g.k;
  g.kdim = g.c * g.taps;
  return g;
}

// Valid output range [lo, hi) along one axis for kernel tap `t`.
inline void tap_range(int out_len, int in_len, int s, int p, int t, int& lo, int& hi) {
  // need 0 <= o*s + t - p < in_len
  const int a = p - t;
  lo = a <= 0 ? 0 : (a + s - 1) / s;
  const int b = in_len - 1 + p - t;
  hi = b < 0 ? 0 : b / s + 1;
  lo = std::min(lo, out_len);
  hi = std::clamp(hi, lo, out_len);
}

// Walks the output positions [start, start+n) as row segments of constant
// (oy, oz) and calls fn(i0, ox0, ox1, oy, oz) where i0 is the offset of ox0
// within the block.
template <typename Fn>
void for_each_segment(const ConvGeom& g, std::size_t start, int n, Fn&& fn) {
  std::size_t pos = start;
  const std::size_t end = start + static_cast<std::size_t>(n);
  while (pos < end) {
    const int ox0 = static_cast<int>(pos % static_cast<std::size_t>(g.ox));
    const std::size_t row = pos / static_cast<std::size_t>(g.ox);
    const int oy = static_cast<int>(row % static_cast<std::size_t>(g.oy));
    const int oz = static_cast<int>(row / static_cast<std::size_t>(g.oy));
    const int ox1 = static_cast<int>(std::min<std::size_t>(static_cast<std::size_t>(g.ox), ox0 + (end - pos)));
    fn(static_cast<int>(pos - start), ox0, ox1, oy, oz);
    pos += static_cast<std::size_t>(ox1 - ox0);
  }
}

// col[(c*taps + tap) * kBlock + i] = input sample feeding output position start+i.
template <typename T>
void im2col(const ConvGeom& g, const T* in, std::size_t start, int n, T* col) {
  for_each_segment(g, start, n, [&](int i0, int ox0, int ox1, int oy, int oz) {
    const int len = ox1 - ox0;
    for (int c = 0; c < g.c; ++c) {
      const T* src_c = in + static_cast<std::size_t>(c) * g.in_vox;
      for (int kz = 0; kz < g.k; ++kz) {
        const int iz = oz * g.s + kz - g.p;
        for (int ky = 0; ky < g.k; ++ky) {
          const int iy = oy * g.s + ky - g.p;
          const bool row_ok = iz >= 0 && iz < g.z && iy >= 0 && iy < g.y;
          const T* src = row_ok ? src_c + static_cast<std::size_t>(g.x) * (iy + static_cast<std::size_t>(g.y) * iz) : nullptr;
          for (int kx = 0; kx < g.k; ++kx) {
            T* dst = col + static_cast<std::size_t>((c * g.k + kz) * g.k * g.k + ky * g.k + kx) * kBlock + i0;
            if (!row_ok) {
              std::fill(dst, dst + len, T{0});
              continue;
            }
            int lo, hi;
            tap_range(g.ox, g.x, g.s, g.p, kx, lo, hi);
            lo = std::clamp(lo, ox0, ox1);
            hi = std::clamp(hi, lo, ox1);
            std::fill(dst, dst + (lo - ox0), T{0});
            if (g.s == 1) {
              const T* s = src + (lo + kx - g.p);
              T* d = dst + (lo - ox0);
              for (int j = 0; j < hi - lo; ++j) d[j] = s[j];
            } else {
              for (int ox = lo; ox < hi; ++ox) dst[ox - ox0] = src[ox * g.s + kx - g.p];
            }
            std::fill(dst + (hi - ox0), dst + len, T{0});
          }
        }
      }
    }
  });
}

// Scatter-add counterpart of im2col.
template <typename T>
void col2im_add(const ConvGeom& g, const T* col, std::size_t start, int n, T* gin) {
  for_each_segment(g, start, n, [&](int i0, int ox0, int ox1, int oy, int oz) {
    for (int c = 0; c < g.c; ++c) {
      T* dst_c = gin + static_cast<std::size_t>(c) * g.in_vox;
      for (int kz = 0; kz < g.k; ++kz) {
        const int iz = oz * g.s + kz - g.p;
        if (iz < 0 || iz >= g.z) continue;
        for (int ky = 0; ky < g.k; ++ky) {
          const int iy = oy * g.s + ky - g.p;
          if (iy < 0 || iy >= g.y) continue;
          T* dst = dst_c + static_cast<std::size_t>(g.x) * (iy + static_cast<std::size_t>(g.y) * iz);
          for (int kx = 0; kx < g.k; ++kx) {
            const T* src = col + static_cast<std::size_t>((c * g.k + kz) * g.k * g.k + ky * g.k + kx) * kBlock + i0;
            int lo, hi;
            tap_range(g.ox, g.x, g.s, g.p, kx, lo, hi);
            lo = std::clamp(lo, ox0, ox1);
            hi = std::clamp(hi, lo, ox1);
            if (g.s == 1) {
              T* d = dst + (lo + kx - g.p);
              const T* s = src + (lo - ox0);
              for (int j = 0; j < hi - lo; ++j) d[j] += s[j];
            } else {
              for (int ox = lo; ox < hi; ++ox) dst[ox * g.s + kx - g.p] += src[ox - ox0];
            }
          }
        }
      }
    }
  });
}

// Register-blocked kernels on 64-byte vectors (GCC/Clang vector extensions;
// lowered to narrower instructions on targets without AVX-512).
template <typename T>
struct Simd {
  static constexpr int lanes = static_cast<int>(64 / sizeof(T));
  typedef T vec __attribute__((vector_size(64)));
  static vec load(const T* p) {
    vec v;
    __builtin_memcpy(&v, p, sizeof(vec));
    return v;
  }
  static void store(T* p, const vec& v) { __builtin_memcpy(p, &v, sizeof(vec)); }
  static vec splat(T x) { return vec{} + x; }
};

inline int padded(int n, int step) { return (n + step - 1) / step * step; }

// out[j][i] = bias + sum_q w[o0+j][q] * rows[q][i]. Every row must be
// readable up to n_pad.
template <typename T, int OB>
void fwd_kernel(int kdim, const T* w, const T* bias, int o0, const T* const* rows, int n_pad, T* oblk) {
  using S = Simd<T>;
  using vec = typename S::vec;
  constexpr int L = S::lanes;
  for (int i0 = 0; i0 < n_pad; i0 += 2 * L) {
    vec acc[OB][2];
    for (int j = 0; j < OB; ++j) acc[j][0] = acc[j][1] = S::splat(bias ? bias[o0 + j] : T{0});
    const T* wr[OB];
    for (int j = 0; j < OB; ++j) wr[j] = w + static_cast<std::size_t>(o0 + j) * kdim;
    for (int q = 0; q < kdim; ++q) {
      const T* cv = rows[q] + i0;
      const vec c0 = S::load(cv), c1 = S::load(cv + L);
      for (int j = 0; j < OB; ++j) {
        const vec a = S::splat(wr[j][q]);
        acc[j][0] += a * c0;
        acc[j][1] += a * c1;
      }
    }
    for (int j = 0; j < OB; ++j) {
      S::store(oblk + j * kBlock + i0, acc[j][0]);
      S::store(oblk + j * kBlock + i0 + L, acc[j][1]);
    }
  }
}

// Lane-partial weight gradients: acc[(o*kdim + q)*L + l] += sum over i = l mod L
// of gout[o][i] * rows[q][i].
template <typename T, int OB, int QB>
void gw_kernel(int kdim, int o0, int q0, const T* const* grows, const T* const* rows, int n_pad, T* lanes_acc) {
  using S = Simd<T>;
  using vec = typename S::vec;
  constexpr int L = S::lanes;
  vec acc[OB][QB];
  for (int j = 0; j < OB; ++j)
    for (int r = 0; r < QB; ++r) acc[j][r] = S::load(lanes_acc + (static_cast<std::size_t>(o0 + j) * kdim + q0 + r) * L);
  for (int i = 0; i < n_pad; i += L) {
    vec cv[QB];
    for (int r = 0; r < QB; ++r) cv[r] = S::load(rows[q0 + r] + i);
    for (int j = 0; j < OB; ++j) {
      const vec gv = S::load(grows[o0 + j] + i);
      for (int r = 0; r < QB; ++r) acc[j][r] += gv * cv[r];
    }
  }
  for (int j = 0; j < OB; ++j)
    for (int r = 0; r < QB; ++r) S::store(lanes_acc + (static_cast<std::size_t>(o0 + j) * kdim + q0 + r) * L, acc[j][r]);
}

// gcol[q0+r][i] = sum_o w[o][q0+r] * gout[o][i]
template <typename T, int QB>
void gcol_kernel(const ConvGeom& g, const T* w, int q0, const T* gblk, int n_pad, T* gcol) {
  using S = Simd<T>;
  using vec = typename S::vec;
  constexpr int L = S::lanes;
  for (int i0 = 0; i0 < n_pad; i0 += 2 * L) {
    vec acc[QB][2] = {};
    for (int o = 0; o < g.o; ++o) {
      const vec g0 = S::load(gblk + o * kBlock + i0), g1 = S::load(gblk + o * kBlock + i0 + L);
      const T* wo = w + static_cast<std::size_t>(o) * g.kdim + q0;
      for (int r = 0; r < QB; ++r) {
        const vec a = S::splat(wo[r]);
        acc[r][0] += a * g0;
        acc[r][1] += a * g1;
      }
    }
    for (int r = 0; r < QB; ++r) {
      S::store(gcol + static_cast<std::size_t>(q0 + r) * kBlock + i0, acc[r][0]);
      S::store(gcol + static_cast<std::size_t>(q0 + r) * kBlock + i0 + L, acc[r][1]);
    }
  }
}

// Runs fwd_kernel over all output channels of one block and hands each
// finished group to emit(o0, count).
template <typename T, typename Emit>
void fwd_block(int kdim, int o_count, const T* w, const T* bias, const T* const* rows, int n_pad, T* oblk, Emit&& emit) {
  int o = 0;
  for (; o + 8 <= o_count; o += 8) {
    fwd_kernel<T, 8>(kdim, w, bias, o, rows, n_pad, oblk);
    emit(o, 8);
  }
  for (; o + 4 <= o_count; o += 4) {
    fwd_kernel<T, 4>(kdim, w, bias, o, rows, n_pad, oblk);
    emit(o, 4);
  }
  for (; o < o_count; ++o) {
    fwd_kernel<T, 1>(kdim, w, bias, o, rows, n_pad, oblk);
    emit(o, 1);
  }
}

template <typename T>
void gw_block(int kdim, int o_count, const T* const* grows, const T* const* rows, int n_pad, T* lanes_acc) {
  int o = 0;
  for (; o + 8 <= o_count; o += 8) {
    int q = 0;
    for (; q + 3 <= kdim; q += 3) gw_kernel<T, 8, 3>(kdim, o, q, grows, rows, n_pad, lanes_acc);
    for (; q < kdim; ++q) gw_kernel<T, 8, 1>(kdim, o, q, grows, rows, n_pad, lanes_acc);
  }
  for (; o + 4 <= o_count; o += 4) {
    int q = 0;
    for (; q + 4 <= kdim; q += 4) gw_kernel<T, 4, 4>(kdim, o, q, grows, rows, n_pad, lanes_acc);
    for (; q < kdim; ++q) gw_kernel<T, 4, 1>(kdim, o, q, grows, rows, n_pad, lanes_acc);
  }
  for (; o < o_count; ++o) {
    int q = 0;
    for (; q + 4 <= kdim; q += 4) gw_kernel<T, 1, 4>(kdim, o, q, grows, rows, n_pad, lanes_acc);
    for (; q < kdim; ++q) gw_kernel<T, 1, 1>(kdim, o, q, grows, rows, n_pad, lanes_acc);
  }
}

template <typename T>
void reduce_lanes(const std::vector<T>& lanes_acc, std::size_t count, T* gw) {
  constexpr int L = Simd<T>::lanes;
  for (std::size_t r = 0; r < count; ++r) {
    T s = T{0};
    for (int l = 0; l < L; ++l) s += lanes_acc[r * L + l];
    gw[r] += s;
  }
}

// ---------------------------------------------------------------------------
// Stride 1: work on a zero-padded copy of the input. For an output voxel at
// padded index q, tap t reads padded index q + shift[t], so each row of the
// implicit column matrix is a plain pointer into the padded volume and no
// im2col copy is needed. Outputs are computed over the contiguous padded
// index range covering the interior; positions on the padding ring are
// computed and discarded.
// ---------------------------------------------------------------------------

struct PadGeom {
  int p = 0;
  int px = 0, py = 0, pz = 0;
  std::size_t vox = 0;    // padded voxels per channel
  std::size_t alloc = 0;  // per-channel stride including read-ahead slack
  std::size_t q_lo = 0, q_hi = 0;  // interior index range [q_lo, q_hi)
  std::vector<std::ptrdiff_t> shift;  // per tap
};

template <typename T>
PadGeom pad_geometry(const ConvGeom& g) {
  PadGeom pg;
  pg.p = g.p;
  pg.px = g.x + 2 * g.p;
  pg.py = g.y + 2 * g.p;
  pg.pz = g.z + 2 * g.p;
  pg.vox = static_cast<std::size_t>(pg.px) * pg.py * pg.pz;
  pg.alloc = pg.vox + 2 * kBlock;
  auto at = [&](int x, int y, int z) {
    return static_cast<std::size_t>(x) + static_cast<std::size_t>(pg.px) * (y + static_cast<std::size_t>(pg.py) * z);
  };
  pg.q_lo = at(g.p, g.p, g.p);
  pg.q_hi = at(g.x - 1 + g.p, g.y - 1 + g.p, g.z - 1 + g.p) + 1;
  for (int kz = 0; kz < g.k; ++kz)
    for (int ky = 0; ky < g.k; ++ky)
      for (int kx = 0; kx < g.k; ++kx)
        pg.shift.push_back(static_cast<std::ptrdiff_t>(kx - g.p) + static_cast<std::ptrdiff_t>(pg.px) * (ky - g.p) +
                           static_cast<std::ptrdiff_t>(pg.px) * pg.py * (kz - g.p));
  return pg;
}

// Copies `channels` unpadded volumes into a zero-padded buffer; the leading
// q_lo slack before the first interior voxel makes every shifted read in range.
template <typename T>
std::vector<T> pad_channels(const ConvGeom& g, const PadGeom& pg, const T* src, int channels) {
  std::vector<T> dst(static_cast<std::size_t>(channels) * pg.alloc, T{0});
  for (int c = 0; c < channels; ++c)
    for (int z = 0; z < g.z; ++z)
      for (int y = 0; y < g.y; ++y) {
        const T* s = src + static_cast<std::size_t>(c) * g.in_vox + static_cast<std::size_t>(g.x) * (y + static_cast<std::size_t>(g.y) * z);
        T* d = dst.data() + static_cast<std::size_t>(c) * pg.alloc + pg.p +
               static_cast<std::size_t>(pg.px) * (y + pg.p + static_cast<std::size_t>(pg.py) * (z + pg.p));
        std::copy(s, s + g.x, d);
      }
  return dst;
}

// Visits the interior voxels among padded indices [q0, q0+n) as runs:
// fn(block offset, unpadded index, length).
template <typename Fn>
void for_each_interior_run(const ConvGeom& g, const PadGeom& pg, std::size_t q0, int n, Fn&& fn) {
  std::size_t q = q0;
  const std::size_t end = q0 + static_cast<std::size_t>(n);
  while (q < end) {
    const int x = static_cast<int>(q % static_cast<std::size_t>(pg.px));
    const std::size_t row = q / static_cast<std::size_t>(pg.px);
    const int y = static_cast<int>(row % static_cast<std::size_t>(pg.py)) - pg.p;
    const int z = static_cast<int>(row / static_cast<std::size_t>(pg.py)) - pg.p;
    const int row_end = static_cast<int>(std::min<std::size_t>(static_cast<std::size_t>(pg.px), x + (end - q)));
    if (y >= 0 && y < g.y && z >= 0 && z < g.z) {
      const int x0 = std::max(x, pg.p), x1 = std::min(row_end, pg.p + g.x);
      if (x0 < x1)
        fn(static_cast<int>(q - q0) + (x0 - x), static_cast<std::size_t>(x0 - pg.p) + static_cast<std::size_t>(g.x) * (y + static_cast<std::size_t>(g.y) * z), x1 - x0);
    }
    q += static_cast<std::size_t>(row_end - x);
  }
}

// Forward over a padded input with `cin` channels. w is [O, cin*taps].
// Adds into out when accumulate is set.
template <typename T>
void conv_forward_padded(const ConvGeom& g, const PadGeom& pg, const T* in_pad, int cin, int cout, const T* w,
                         const T* bias, T* out, bool accumulate) {
  constexpr int step = 2 * Simd<T>::lanes;
  const int taps = g.taps;
  const int kdim = cin * taps;
  std::vector<const T*> base(static_cast<std::size_t>(kdim)), rows(static_cast<std::size_t>(kdim));
  for (int c = 0; c < cin; ++c)
    for (int t = 0; t < taps; ++t) base[static_cast<std::size_t>(c * taps + t)] = in_pad + static_cast<std::size_t>(c) * pg.alloc + pg.shift[static_cast<std::size_t>(t)];
  std::vector<T> oblk(static_cast<std::size_t>(8) * kBlock);
  for (std::size_t q0 = pg.q_lo; q0 < pg.q_hi; q0 += kBlock) {
    const int n = static_cast<int>(std::min<std::size_t>(kBlock, pg.q_hi - q0));
    const int n_pad = padded(n, step);
    for (std::size_t r = 0; r < rows.size(); ++r) rows[r] = base[r] + q0;
    fwd_block(kdim, cout, w, bias, rows.data(), n_pad, oblk.data(), [&](int o0, int ob) {
      for (int j = 0; j < ob; ++j) {
        const T* src = oblk.data() + j * kBlock;
        T* dst = out + static_cast<std::size_t>(o0 + j) * g.in_vox;
        for_each_interior_run(g, pg, q0, n, [&](int i, std::size_t idx, int len) {
          if (accumulate)
            for (int l = 0; l < len; ++l) dst[idx + l] += src[i + l];
          else
            std::copy(src + i, src + i + len, dst + idx);
        });
      }
    });
  }
}

template <typename T>
void conv_backward_padded(const ConvGeom& g, const T* in, const T* w, const T* gout, T* gin, T* gw) {
  const PadGeom pg = pad_geometry<T>(g);
  const std::vector<T> gpad = pad_channels(g, pg, gout, g.o);
  if (gin) {
    // Input gradient is the forward pass of gout with the kernel transposed
    // over channels and flipped over taps.
    std::vector<T> wt(static_cast<std::size_t>(g.c) * g.o * g.taps);
    for (int o = 0; o < g.o; ++o)
      for (int c = 0; c < g.c; ++c)
        for (int t = 0; t < g.taps; ++t)
          wt[(static_cast<std::size_t>(c) * g.o + o) * g.taps + (g.taps - 1 - t)] = w[(static_cast<std::size_t>(o) * g.c + c) * g.taps + t];
    conv_forward_padded(g, pg, gpad.data(), g.o, g.c, wt.data(), static_cast<const T*>(nullptr), gin, true);
  }
  if (gw) {
    constexpr int L = Simd<T>::lanes;
    constexpr int step = 2 * L;
    const std::vector<T> xpad = pad_channels(g, pg, in, g.c);
    std::vector<T> lanes_acc(static_cast<std::size_t>(g.o) * g.kdim * L);
    std::vector<const T*> base(static_cast<std::size_t>(g.kdim)), rows(static_cast<std::size_t>(g.kdim));
    std::vector<const T*> grows(static_cast<std::size_t>(g.o));
    for (int c = 0; c < g.c; ++c)
      for (int t = 0; t < g.taps; ++t)
        base[static_cast<std::size_t>(c * g.taps + t)] = xpad.data() + static_cast<std::size_t>(c) * pg.alloc + pg.shift[static_cast<std::size_t>(t)];
    // gpad is zero on the padding ring and past q_hi, so the discarded
    // positions contribute nothing.
    // Long chunks keep the accumulators in registers; the tail still pads
    // by less than `step`, so reads stay inside the slack.
    constexpr std::size_t chunk = 16 * kBlock;
    for (std::size_t q0 = pg.q_lo; q0 < pg.q_hi; q0 += chunk) {
      const int n = static_cast<int>(std::min<std::size_t>(chunk, pg.q_hi - q0));
      const int n_pad = padded(n, step);
      for (std::size_t r = 0; r < rows.size(); ++r) rows[r] = base[r] + q0;
      for (int o = 0; o < g.o; ++o) grows[static_cast<std::size_t>(o)] = gpad.data() + static_cast<std::size_t>(o) * pg.alloc + q0;
      gw_block(g.kdim, g.o, grows.data(), rows.data(), n_pad, lanes_acc.data());
    }
    reduce_lanes(lanes_acc, static_cast<std::size_t>(g.o) * g.kdim, gw);
  }
}

// ---------------------------------------------------------------------------
// General stride: explicit im2col blocks.
// ---------------------------------------------------------------------------

template <typename T>
void zero_tail(T* col, int rows, int n, int n_pad) {
  if (n == n_pad) return;
  for (int q = 0; q < rows; ++q) std::fill(col + static_cast<std::size_t>(q) * kBlock + n, col + static_cast<std::size_t>(q) * kBlock + n_pad, T{0});
}

template <typename T>
std::vector<const T*> block_rows(const std::vector<T>& col, int count) {
  std::vector<const T*> rows(static_cast<std::size_t>(count));
  for (int q = 0; q < count; ++q) rows[static_cast<std::size_t>(q)] = col.data() + static_cast<std::size_t>(q) * kBlock;
  return rows;
}

template <typename T>
void conv_forward(const ConvGeom& g, const T* in, const T* w, const T* bias, T* out) {
  if (g.s == 1) {
    const PadGeom pg = pad_geometry<T>(g);
    const std::vector<T> xpad = pad_channels(g, pg, in, g.c);
    conv_forward_padded(g, pg, xpad.data(), g.c, g.o, w, bias, out, false);
    return;
  }
  constexpr int step = 2 * Simd<T>::lanes;
  std::vector<T> col(static_cast<std::size_t>(g.kdim) * kBlock);
  const std::vector<const T*> rows = block_rows(col, g.kdim);
  std::vector<T> oblk(static_cast<std::size_t>(8) * kBlock);
  for (std::size_t start = 0; start < g.out_vox; start += kBlock) {
    const int n = static_cast<int>(std::min<std::size_t>(kBlock, g.out_vox - start));
    const int n_pad = padded(n, step);
    im2col(g, in, start, n, col.data());
    zero_tail(col.data(), g.kdim, n, n_pad);
    fwd_block(g.kdim, g.o, w, bias, rows.data(), n_pad, oblk.data(), [&](int o0, int ob) {
      for (int j = 0; j < ob; ++j)
        std::copy(oblk.data() + j * kBlock, oblk.data() + j * kBlock + n, out + static_cast<std::size_t>(o0 + j) * g.out_vox + start);
    });
  }
}

template <typename T>
void conv_backward(const ConvGeom& g, const T* in, const T* w, const T* gout, T* gin, T* gw, T* gb) {
  if (gb) {
    for (int o = 0; o < g.o; ++o) {
      const T* go = gout + static_cast<std::size_t>(o) * g.out_vox;
      T s = T{0};
      for (std::size_t i = 0; i < g.out_vox; ++i) s += go[i];
      gb[o] += s;
    }
  }
  if (g.s == 1) {
    conv_backward_padded(g, in, w, gout, gin, gw);
    return;
  }
  constexpr int L = Simd<T>::lanes;
  constexpr int step = 2 * L;
  std::vector<T> col(gw ? static_cast<std::size_t>(g.kdim) * kBlock : 0);
  std::vector<T> gcol(gin ? static_cast<std::size_t>(g.kdim) * kBlock : 0);
  std::vector<T> gblk(static_cast<std::size_t>(g.o) * kBlock);
  std::vector<T> lanes_acc(gw ? static_cast<std::size_t>(g.o) * g.kdim * L : 0);
  const std::vector<const T*> rows = gw ? block_rows(col, g.kdim) : std::vector<const T*>{};
  const std::vector<const T*> grows = block_rows(gblk, g.o);
  for (std::size_t start = 0; start < g.out_vox; start += kBlock) {
    const int n = static_cast<int>(std::min<std::size_t>(kBlock, g.out_vox - start));
    const int n_pad = padded(n, step);
    for (int o = 0; o < g.o; ++o) {
      const T* go = gout + static_cast<std::size_t>(o) * g.out_vox + start;
      T* dst = gblk.data() + static_cast<std::size_t>(o) * kBlock;
      std::copy(go, go + n, dst);
      std::fill(dst + n, dst + n_pad, T{0});
    }
    if (gw) {
      im2col(g, in, start, n, col.data());
      zero_tail(col.data(), g.kdim, n, n_pad);
      gw_block(g.kdim, g.o, grows.data(), rows.data(), n_pad, lanes_acc.data());
    }
    if (gin) {
      int q = 0;
      for (; q + 8 <= g.kdim; q += 8) gcol_kernel<T, 8>(g, w, q, gblk.data(), n_pad, gcol.data());
      for (; q < g.kdim; ++q) gcol_kernel<T, 1>(g, w, q, gblk.data(), n_pad, gcol.data());
      col2im_add(g, gcol.data(), start, n, gin);
    }
  }
  if (gw) reduce_lanes(lanes_acc, static_cast<std::size_t>(g.o) * g.kdim, gw);
}

// ---------------------------------------------------------------------------
// Trilinear interpolation with zero padding.
// ---------------------------------------------------------------------------

template <typename T>
struct Stencil {
  std::array<std::ptrdiff_t, 8> index;  // -1 when outside
  std::array<T, 8> w;
  std::array<T, 8> dwx, dwy, dwz;
};

// Returns false when all eight corners are outside the grid.
template <typename T>
bool make_stencil(const Extent& e, T x, T y, T z, Stencil<T>& st, bool with_grad) {
  if (!(x > T(-1) && x < T(e.x) && y > T(-1) && y < T(e.y) && z > T(-1) && z < T(e.z))) return false;
  const T fx = std::floor(x), fy = std::floor(y), fz = std::floor(z);
  const int x0 = static_cast<int>(fx), y0 = static_cast<int>(fy), z0 = static_cast<int>(fz);
  const T tx = x - fx, ty = y - fy, tz = z - fz;
  const T wx[2] = {T(1) - tx, tx}, wy[2] = {T(1) - ty, ty}, wz[2] = {T(1) - tz, tz};
  const T dx[2] = {T(-1), T(1)};
  int n = 0;
  for (int cz = 0; cz < 2; ++cz) {
    for (int cy = 0; cy < 2; ++cy) {
      for (int cx = 0; cx < 2; ++cx, ++n) {
        const int xi = x0 + cx, yi = y0 + cy, zi = z0 + cz;
        const bool inside = xi >= 0 && xi < e.x && yi >= 0 && yi < e.y && zi >= 0 && zi < e.z;
        st.index[n] = inside ? static_cast<std::ptrdiff_t>(xi) + static_cast<std::ptrdiff_t>(e.x) * (yi + static_cast<std::ptrdiff_t>(e.y) * zi) : -1;
        st.w[n] = wx[cx] * wy[cy] * wz[cz];
        if (with_grad) {
          st.dwx[n] = dx[cx] * wy[cy] * wz[cz];
          st.dwy[n] = wx[cx] * dx[cy] * wz[cz];
          st.dwz[n] = wx[cx] * wy[cy] * dx[cz];
        }
      }
    }
  }
  return true;
}

template <typename T>
T apply_stencil(const Stencil<T>& st, const T* v) {
  T s = T{0};
  for (int n = 0; n < 8; ++n)
    if (st.index[n] >= 0) s += st.w[n] * v[st.index[n]];
  return s;
}

template <typename T>
void require_volume(const BasicTensor<T>& v, const char* what) {
  if (v.rank() == 3) return;
  if (v.rank() == 4 && v.dim(0) == 1) return;
  throw ShapeError(std::string(what) + " must be a single-channel [X,Y,Z] grid, got " + dims_to_string(v.dims()));
}

template <typename T>
void require_vector_field(const BasicTensor<T>& v, const char* what) {
  if (v.rank() != 4 || v.dim(0) != 3)
    throw ShapeError(std::string(what) + " must be [3,X,Y,Z], got " + dims_to_string(v.dims()));
}

// Shared forward/backward for sample() and warp(). When `offset_by_grid` the
// sampling coordinate is p + field(p), otherwise field(p) itself.
template <typename T>
BasicTensor<T> resample_forward(const BasicTensor<T>& vol, const BasicTensor<T>& field, bool offset_by_grid) {
  const Extent ve = vol.extent();
  const Extent fe = field.extent();
  BasicTensor<T> out = BasicTensor<T>::volume(fe);
  const std::size_t n = fe.voxels();
  const T* fx = field.data();
  const T* fy = fx + n;
  const T* fz = fy + n;
  Stencil<T> st;
  std::size_t i = 0;
  for (int z = 0; z < fe.z; ++z)
    for (int y = 0; y < fe.y; ++y)
      for (int x = 0; x < fe.x; ++x, ++i) {
        const T px = offset_by_grid ? T(x) + fx[i] : fx[i];
        const T py = offset_by_grid ? T(y) + fy[i] : fy[i];
        const T pz = offset_by_grid ? T(z) + fz[i] : fz[i];
        out[i] = make_stencil(ve, px, py, pz, st, false) ? apply_stencil(st, vol.data()) : T{0};
      }
  return out;
}

template <typename T>
void resample_backward(const BasicTensor<T>& vol, const BasicTensor<T>& field, bool offset_by_grid,
                       const BasicTensor<T>& gout, T* gvol, T* gfield) {
  const Extent ve = vol.extent();
  const Extent fe = field.extent();
  const std::size_t n = fe.voxels();
  const T* fx = field.data();
  const T* fy = fx + n;
  const T* fz = fy + n;
  const T* v = vol.data();
  Stencil<T> st;
  std::size_t i = 0;
  for (int z = 0; z < fe.z; ++z)
    for (int y = 0; y < fe.y; ++y)
      for (int x = 0; x < fe.x; ++x, ++i) {
        const T g = gout[i];
        if (g == T{0}) continue;
        const T px = offset_by_grid ? T(x) + fx[i] : fx[i];
        const T py = offset_by_grid ? T(y) + fy[i] : fy[i];
        const T pz = offset_by_grid ? T(z) + fz[i] : fz[i];
        if (!make_stencil(ve, px, py, pz, st, gfield != nullptr)) continue;
        T ax = T{0}, ay = T{0}, az = T{0};
        for (int c = 0; c < 8; ++c) {
          if (st.index[c] < 0) continue;
          if (gvol) gvol[st.index[c]] += g * st.w[c];
          if (gfield) {
            const T val = v[st.index[c]];
            ax += st.dwx[c] * val;
            ay += st.dwy[c] * val;
            az += st.dwz[c] * val;
          }
        }
        if (gfield) {
          gfield[i] += g * ax;
          gfield[i + n] += g * ay;
          gfield[i + 2 * n] += g * az;
        }
      }
}

// ---------------------------------------------------------------------------
// Upsampling tables.
// ---------------------------------------------------------------------------

template <typename T>
struct UpAxis {
  std::vector<int> i0, i1;
  std::vector<T> t;
};

template <typename T>
UpAxis<T> up_axis(int len) {
  UpAxis<T> a;
  const int out = 2 * len;
  a.i0.resize(out);
  a.i1.resize(out);
  a.t.resize(out);
  for (int i = 0; i < out; ++i) {
    const double pos = len == 1 ? 0.0 : static_cast<double>(i) * (len - 1) / (out - 1);
    int lo = static_cast<int>(std::floor(pos));
    lo = std::clamp(lo, 0, len - 1);
    a.i0[i] = lo;
    a.i1[i] = std::min(lo + 1, len - 1);
    a.t[i] = static_cast<T>(pos - lo);
  }
  return a;
}

template <typename T>
void require_same_shape(const BasicTensor<T>& a, const BasicTensor<T>& b, const char* what) {
  if (!a.same_shape(b))
    throw ShapeError(std::string(what) + ": shape mismatch " + dims_to_string(a.dims()) + " vs " +
                     dims_to_string(b.dims()));
}

}  // namespace

// ---------------------------------------------------------------------------
// Plain kernels
// ---------------------------------------------------------------------------

template <typename T>
BasicTensor<T> conv3d(const BasicTensor<T>& input, const BasicTensor<T>& kernel, int stride,
                      const BasicTensor<T>* bias) {
  const ConvGeom g = conv_geometry(input, kernel, stride);
  if (bias && (bias->rank() != 1 || bias->dim(0) != g.o))
    throw ShapeError("conv3d bias must be [" + std::to_string(g.o) + "]");
  BasicTensor<T> out = BasicTensor<T>::channels(g.o, Extent{g.ox, g.oy, g.oz});
  conv_forward(g, input.data(), kernel.data(), bias ? bias->data() : nullptr, out.data());
  return out;
}

template <typename T>
T trilinear_sample(const BasicTensor<T>& volume, T x, T y, T z) {
  require_volume(volume, "trilinear_sample volume");
  Stencil<T> st;
  if (!make_stencil(volume.extent(), x, y, z, st, false)) return T{0};
  return apply_stencil(st, volume.data());
}

template <typename T>
BasicTensor<T> upsample_trilinear(const BasicTensor<T>& input) {
  const Extent e = input.extent();
  const int c = input.channels();
  const Extent oe{2 * e.x, 2 * e.y, 2 * e.z};
  const auto ax = up_axis<T>(e.x), ay = up_axis<T>(e.y), az = up_axis<T>(e.z);
  BasicTensor<T> out = BasicTensor<T>::channels(c, oe);
  for (int ch = 0; ch < c; ++ch) {
    const T* src = input.data() + static_cast<std::size_t>(ch) * e.voxels();
    T* dst = out.data() + static_cast<std::size_t>(ch) * oe.voxels();
    auto at = [&](int x, int y, int z) { return src[x + static_cast<std::size_t>(e.x) * (y + static_cast<std::size_t>(e.y) * z)]; };
    std::size_t i = 0;
    for (int z = 0; z < oe.z; ++z)
      for (int y = 0; y < oe.y; ++y)
        for (int x = 0; x < oe.x; ++x, ++i) {
          const T tx = ax.t[x], ty = ay.t[y], tz = az.t[z];
          const int x0 = ax.i0[x], x1 = ax.i1[x], y0 = ay.i0[y], y1 = ay.i1[y], z0 = az.i0[z], z1 = az.i1[z];
          const T c00 = at(x0, y0, z0) * (T(1) - tx) + at(x1, y0, z0) * tx;
          const T c10 = at(x0, y1, z0) * (T(1) - tx) + at(x1, y1, z0) * tx;
          const T c01 = at(x0, y0, z1) * (T(1) - tx) + at(x1, y0, z1) * tx;
          const T c11 = at(x0, y1, z1) * (T(1) - tx) + at(x1, y1, z1) * tx;
          const T c0 = c00 * (T(1) - ty) + c10 * ty;
          const T c1 = c01 * (T(1) - ty) + c11 * ty;
          dst[i] = c0 * (T(1) - tz) + c1 * tz;
        }
  }
  if (input.rank() == 3) return BasicTensor<T>({oe.x, oe.y, oe.z}, std::move(out.storage()));
  std::vector<int> dims = input.dims();
  const auto r = dims.size();
  dims[r - 3] = oe.x;
  dims[r - 2] = oe.y;
  dims[r - 1] = oe.z;
  return BasicTensor<T>(std::move(dims), std::move(out.storage()));
}

template <typename T>
BasicTensor<T> warp(const BasicTensor<T>& volume, const BasicTensor<T>& ddf) {
  require_volume(volume, "warp volume");
  require_vector_field(ddf, "warp displacement field");
  return resample_forward(volume, ddf, true);
}

// ---------------------------------------------------------------------------
// Tape ops
// ---------------------------------------------------------------------------

template <typename T>
Var conv3d(BasicTape<T>& tape, Var input, Var kernel, Var bias, int stride) {
  const auto& in = tape.value(input);
  const auto& w = tape.value(kernel);
  const ConvGeom g = conv_geometry(in, w, stride);
  const BasicTensor<T>* b = bias.valid() ? &tape.value(bias) : nullptr;
  BasicTensor<T> out = conv3d(in, w, stride, b);
  std::vector<int> inputs{input.id, kernel.id};
  if (bias.valid()) inputs.push_back(bias.id);
  return tape.record(OpKind::Conv3d, std::move(inputs), std::move(out),
                     [g, input, kernel, bias](BasicTape<T>& t, int self) {
                       const auto& gout = t.grad(Var{self});
                       T* gin = t.requires_grad(input) ? t.grad_buffer(input.id).data() : nullptr;
                       T* gw = t.requires_grad(kernel) ? t.grad_buffer(kernel.id).data() : nullptr;
                       T* gb = bias.valid() && t.requires_grad(bias) ? t.grad_buffer(bias.id).data() : nullptr;
                       conv_backward(g, t.value(input).data(), t.value(kernel).data(), gout.data(), gin, gw, gb);
                     });
}

namespace {

// GCC's auto-vectorized select here runs ~10x slower on mixed-sign input
// than explicit max/min or mask moves, so spell it out.
#if defined(__AVX512F__)
inline void leaky_fwd(const float* in, float* out, std::size_t n, float slope) {
  const __m512 z = _mm512_setzero_ps(), k = _mm512_set1_ps(slope);
  std::size_t i = 0;
  for (; i + 16 <= n; i += 16) {
    const __m512 v = _mm512_loadu_ps(in + i);
    _mm512_storeu_ps(out + i, _mm512_mask_mov_ps(_mm512_mul_ps(k, v), _mm512_cmp_ps_mask(v, z, _CMP_GT_OQ), v));
  }
  for (; i < n; ++i) out[i] = in[i] > 0.0f ? in[i] : slope * in[i];
}
inline void leaky_fwd(const double* in, double* out, std::size_t n, double slope) {
  const __m512d z = _mm512_setzero_pd(), k = _mm512_set1_pd(slope);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m512d v = _mm512_loadu_pd(in + i);
    _mm512_storeu_pd(out + i, _mm512_mask_mov_pd(_mm512_mul_pd(k, v), _mm512_cmp_pd_mask(v, z, _CMP_GT_OQ), v));
  }
  for (; i < n; ++i) out[i] = in[i] > 0.0 ? in[i] : slope * in[i];
}
inline void leaky_bwd(const float* in, const float* g, float* gin, std::size_t n, float slope) {
  const __m512 z = _mm512_setzero_ps(), k = _mm512_set1_ps(slope);
  std::size_t i = 0;
  for (; i + 16 <= n; i += 16) {
    const __m512 gv = _mm512_loadu_ps(g + i);
    const __m512 d = _mm512_mask_mov_ps(_mm512_mul_ps(k, gv), _mm512_cmp_ps_mask(_mm512_loadu_ps(in + i), z, _CMP_GT_OQ), gv);
    _mm512_storeu_ps(gin + i, _mm512_add_ps(_mm512_loadu_ps(gin + i), d));
  }
  for (; i < n; ++i) gin[i] += in[i] > 0.0f ? g[i] : slope * g[i];
}
inline void leaky_bwd(const double* in, const double* g, double* gin, std::size_t n, double slope) {
  const __m512d z = _mm512_setzero_pd(), k = _mm512_set1_pd(slope);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m512d gv = _mm512_loadu_pd(g + i);
    const __m512d d = _mm512_mask_mov_pd(_mm512_mul_pd(k, gv), _mm512_cmp_pd_mask(_mm512_loadu_pd(in + i), z, _CMP_GT_OQ), gv);
    _mm512_storeu_pd(gin + i, _mm512_add_pd(_mm512_loadu_pd(gin + i), d));
  }
  for (; i < n; ++i) gin[i] += in[i] > 0.0 ? g[i] : slope * g[i];
}
#else
template <typename T>
void leaky_fwd(const T* in, T* out, std::size_t n, T slope) {
  for (std::size_t i = 0; i < n; ++i) out[i] = in[i] > T{0} ? in[i] : slope * in[i];
}
template <typename T>
void leaky_bwd(const T* in, const T* g, T* gin, std::size_t n, T slope) {
  for (std::size_t i = 0; i < n; ++i) gin[i] += in[i] > T{0} ? g[i] : slope * g[i];
}
#endif

}  // namespace

template <typename T>
Var leaky_relu(BasicTape<T>& tape, Var x, T slope) {
  const auto& in = tape.value(x);
  BasicTensor<T> out(in.dims());
  const std::size_t n = in.size();
  leaky_fwd(in.data(), out.data(), n, slope);
  return tape.record(OpKind::LeakyRelu, {x.id}, std::move(out), [x, slope](BasicTape<T>& t, int self) {
    const auto& gout = t.grad(Var{self});
    const auto& in = t.value(x);
    auto& gin = t.grad_buffer(x.id);
    const std::size_t n = in.size();
    leaky_bwd(in.data(), gout.data(), gin.data(), n, slope);
  });
}

template <typename T>
Var upsample2(BasicTape<T>& tape, Var x) {
  BasicTensor<T> out = upsample_trilinear(tape.value(x));
  return tape.record(OpKind::Upsample2, {x.id}, std::move(out), [x](BasicTape<T>& t, int self) {
    const auto& in = t.value(x);
    const auto& gout = t.grad(Var{self});
    auto& gin = t.grad_buffer(x.id);
    const Extent e = in.extent();
    const Extent oe{2 * e.x, 2 * e.y, 2 * e.z};
    const auto ax = up_axis<T>(e.x), ay = up_axis<T>(e.y), az = up_axis<T>(e.z);
    for (int ch = 0; ch < in.channels(); ++ch) {
      T* dst = gin.data() + static_cast<std::size_t>(ch) * e.voxels();
      const T* src = gout.data() + static_cast<std::size_t>(ch) * oe.voxels();
      auto at = [&](int xx, int yy, int zz) -> T& {
        return dst[xx + static_cast<std::size_t>(e.x) * (yy + static_cast<std::size_t>(e.y) * zz)];
      };
      std::size_t i = 0;
      for (int zz = 0; zz < oe.z; ++zz)
        for (int yy = 0; yy < oe.y; ++yy)
          for (int xx = 0; xx < oe.x; ++xx, ++i) {
            const T g = src[i];
            const T tx = ax.t[xx], ty = ay.t[yy], tz = az.t[zz];
            const int x0 = ax.i0[xx], x1 = ax.i1[xx], y0 = ay.i0[yy], y1 = ay.i1[yy], z0 = az.i0[zz], z1 = az.i1[zz];
            const T g0 = g * (T(1) - tz), g1 = g * tz;
            const T g00 = g0 * (T(1) - ty), g10 = g0 * ty, g01 = g1 * (T(1) - ty), g11 = g1 * ty;
            at(x0, y0, z0) += g00 * (T(1) - tx);
            at(x1, y0, z0) += g00 * tx;
            at(x0, y1, z0) += g10 * (T(1) - tx);
            at(x1, y1, z0) += g10 * tx;
            at(x0, y0, z1) += g01 * (T(1) - tx);
            at(x1, y0, z1) += g01 * tx;
            at(x0, y1, z1) += g11 * (T(1) - tx);
            at(x1, y1, z1) += g11 * tx;
          }
    }
  });
}

template <typename T>
Var concat_channels(BasicTape<T>& tape, Var a, Var b) {
  const auto& va = tape.value(a);
  const auto& vb = tape.value(b);
  if (va.rank() != 4 || vb.rank() != 4 || va.extent() != vb.extent())
    throw ShapeError("concat_channels needs [C,X,Y,Z] tensors on one grid, got " + dims_to_string(va.dims()) + " and " +
                     dims_to_string(vb.dims()));
  std::vector<T> data;
  data.reserve(va.size() + vb.size());
  data.insert(data.end(), va.storage().begin(), va.storage().end());
  data.insert(data.end(), vb.storage().begin(), vb.storage().end());
  const Extent e = va.extent();
  BasicTensor<T> out({va.dim(0) + vb.dim(0), e.x, e.y, e.z}, std::move(data));
  return tape.record(OpKind::Concat, {a.id, b.id}, std::move(out), [a, b](BasicTape<T>& t, int self) {
    const auto& gout = t.grad(Var{self});
    const std::size_t na = t.value(a).size();
    if (t.requires_grad(a)) {
      auto& ga = t.grad_buffer(a.id);
      for (std::size_t i = 0; i < na; ++i) ga[i] += gout[i];
    }
    if (t.requires_grad(b)) {
      auto& gb = t.grad_buffer(b.id);
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += gout[na + i];
    }
  });
}

template <typename T>
Var sample(BasicTape<T>& tape, Var volume, Var points) {
  const auto& vol = tape.value(volume);
  const auto& pts = tape.value(points);
  require_volume(vol, "sample volume");
  require_vector_field(pts, "sample points");
  BasicTensor<T> out = resample_forward(vol, pts, false);
  return tape.record(OpKind::Sample, {volume.id, points.id}, std::move(out), [volume, points](BasicTape<T>& t, int self) {
    T* gv = t.requires_grad(volume) ? t.grad_buffer(volume.id).data() : nullptr;
    T* gp = t.requires_grad(points) ? t.grad_buffer(points.id).data() : nullptr;
    resample_backward(t.value(volume), t.value(points), false, t.grad(Var{self}), gv, gp);
  });
}

template <typename T>
Var warp(BasicTape<T>& tape, Var volume, Var ddf) {
  BasicTensor<T> out = warp(tape.value(volume), tape.value(ddf));
  return tape.record(OpKind::Warp, {volume.id, ddf.id}, std::move(out), [volume, ddf](BasicTape<T>& t, int self) {
    T* gv = t.requires_grad(volume) ? t.grad_buffer(volume.id).data() : nullptr;
    T* gd = t.requires_grad(ddf) ? t.grad_buffer(ddf.id).data() : nullptr;
    resample_backward(t.value(volume), t.value(ddf), true, t.grad(Var{self}), gv, gd);
  });
}

template <typename T>
Var reshape(BasicTape<T>& tape, Var x, std::vector<int> dims) {
  const auto& vx = tape.value(x);
  BasicTensor<T> out(std::move(dims), vx.storage());
  return tape.record(OpKind::Reshape, {x.id}, std::move(out), [x](BasicTape<T>& t, int self) {
    const auto& g = t.grad(Var{self});
    auto& gx = t.grad_buffer(x.id);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
  });
}

template <typename T>
Var add(BasicTape<T>& tape, Var a, Var b) {
  const auto& va = tape.value(a);
  const auto& vb = tape.value(b);
  require_same_shape(va, vb, "add");
  BasicTensor<T> out(va.dims());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = va[i] + vb[i];
  return tape.record(OpKind::Add, {a.id, b.id}, std::move(out), [a, b](BasicTape<T>& t, int self) {
    const auto& g = t.grad(Var{self});
    for (Var v : {a, b}) {
      if (!t.requires_grad(v)) continue;
      auto& gv = t.grad_buffer(v.id);
      for (std::size_t i = 0; i < g.size(); ++i) gv[i] += g[i];
    }
  });
}

template <typename T>
Var scale(BasicTape<T>& tape, Var x, T factor) {
  const auto& vx = tape.value(x);
  BasicTensor<T> out(vx.dims());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = factor * vx[i];
  return tape.record(OpKind::Scale, {x.id}, std::move(out), [x, factor](BasicTape<T>& t, int self) {
    const auto& g = t.grad(Var{self});
    auto& gx = t.grad_buffer(x.id);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += factor * g[i];
  });
}

template <typename T>
Var mean(BasicTape<T>& tape, std::span<const Var> xs) {
  if (xs.empty()) throw DomainError("mean of an empty list");
  const auto& first = tape.value(xs[0]);
  BasicTensor<T> out(first.dims());
  std::vector<int> ids;
  for (Var v : xs) {
    const auto& vv = tape.value(v);
    require_same_shape(first, vv, "mean");
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += vv[i];
    ids.push_back(v.id);
  }
  const T inv = T(1) / static_cast<T>(xs.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= inv;
  return tape.record(OpKind::Mean, ids, std::move(out), [ids, inv](BasicTape<T>& t, int self) {
    const auto& g = t.grad(Var{self});
    for (int id : ids) {
      if (!t.requires_grad(id)) continue;
      auto& gv = t.grad_buffer(id);
      for (std::size_t i = 0; i < g.size(); ++i) gv[i] += inv * g[i];
    }
  });
}

#define METAREG_INSTANTIATE_OPS(T)                                                                          \
  template BasicTensor<T> conv3d<T>(const BasicTensor<T>&, const BasicTensor<T>&, int, const BasicTensor<T>*); \
  template T trilinear_sample<T>(const BasicTensor<T>&, T, T, T);                                           \
  template BasicTensor<T> upsample_trilinear<T>(const BasicTensor<T>&);                                     \
  template BasicTensor<T> warp<T>(const BasicTensor<T>&, const BasicTensor<T>&);                            \
  template Var conv3d<T>(BasicTape<T>&, Var, Var, Var, int);                                                \
  template Var leaky_relu<T>(BasicTape<T>&, Var, T);                                                        \
  template Var upsample2<T>(BasicTape<T>&, Var);                                                            \
  template Var concat_channels<T>(BasicTape<T>&, Var, Var);                                                 \
  template Var sample<T>(BasicTape<T>&, Var, Var);                                                          \
  template Var warp<T>(BasicTape<T>&, Var, Var);                                                            \
  template Var reshape<T>(BasicTape<T>&, Var, std::vector<int>);                                           \
  template Var add<T>(BasicTape<T>&, Var, Var);                                                             \
  template Var scale<T>(BasicTape<T>&, Var, T);                                                             \
  template Var mean<T>(BasicTape<T>&, std::span<const Var>);

METAREG_INSTANTIATE_OPS(float)
METAREG_INSTANTIATE_OPS(double)

}  // namespace metareg
