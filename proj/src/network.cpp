#include "swaptest/network.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include <Eigen/Core>

#include "swaptest/error.hpp"
#include "swaptest/seeding.hpp"

namespace swaptest {

namespace {

struct ConvGeom {
  Shape in, out;
  int kd, kh, kw;
  int sd, sh, sw;
  int pd, ph, pw;

  std::size_t taps() const { return static_cast<std::size_t>(kd) * kh * kw; }
};

ConvGeom conv_geom(const LayerSpec& l, const Shape& in, const Shape& out) {
  const bool is3d = l.spatial_dims == 3;
  const int pad = l.padding == Padding::Same ? (l.kernel - 1) / 2 : 0;
  return {in,
          out,
          is3d ? l.kernel : 1, l.kernel, l.kernel,
          is3d ? l.stride : 1, l.stride, l.stride,
          is3d ? pad : 0, pad, pad};
}

// Output indices o with 0 <= o * s + k - p < n.
inline void valid_range(int k, int s, int p, int n, int out, int& lo, int& hi) {
  const int a = p - k;
  lo = a <= 0 ? 0 : (a + s - 1) / s;
  const int b = n - 1 - k + p;
  hi = b < 0 ? 0 : std::min(out, b / s + 1);
}

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Unfold the input into a (IC * taps) x (OD * OH * OW) matrix; taps falling in
// the padding read as zero.
template <typename T>
void im2col(const ConvGeom& g, const T* in, T* col) {
  const int D = g.in.d, H = g.in.h, W = g.in.w;
  const int OD = g.out.d, OH = g.out.h, OW = g.out.w;
  const std::size_t n = static_cast<std::size_t>(OD) * OH * OW;
  const std::size_t in_plane = static_cast<std::size_t>(D) * H * W;
  std::size_t row = 0;
  for (int ic = 0; ic < g.in.c; ++ic) {
    const T* src = in + ic * in_plane;
    for (int kz = 0; kz < g.kd; ++kz) {
      int zlo, zhi;
      valid_range(kz, g.sd, g.pd, D, OD, zlo, zhi);
      for (int ky = 0; ky < g.kh; ++ky) {
        int ylo, yhi;
        valid_range(ky, g.sh, g.ph, H, OH, ylo, yhi);
        for (int kx = 0; kx < g.kw; ++kx, ++row) {
          int xlo, xhi;
          valid_range(kx, g.sw, g.pw, W, OW, xlo, xhi);
          T* dst = col + row * n;
          std::fill(dst, dst + n, T(0));
          const int shift = kx - g.pw;
          for (int oz = zlo; oz < zhi; ++oz) {
            const int iz = oz * g.sd + kz - g.pd;
            for (int oy = ylo; oy < yhi; ++oy) {
              const int iy = oy * g.sh + ky - g.ph;
              T* drow = dst + (static_cast<std::size_t>(oz) * OH + oy) * OW;
              const T* irow = src + (static_cast<std::size_t>(iz) * H + iy) * W;
              for (int ox = xlo; ox < xhi; ++ox) drow[ox] = irow[ox * g.sw + shift];
            }
          }
        }
      }
    }
  }
}

// Adjoint of im2col: scatter-add columns back onto the input grid.
template <typename T>
void col2im(const ConvGeom& g, const T* col, T* din) {
  const int D = g.in.d, H = g.in.h, W = g.in.w;
  const int OD = g.out.d, OH = g.out.h, OW = g.out.w;
  const std::size_t n = static_cast<std::size_t>(OD) * OH * OW;
  const std::size_t in_plane = static_cast<std::size_t>(D) * H * W;
  std::size_t row = 0;
  for (int ic = 0; ic < g.in.c; ++ic) {
    T* dst = din + ic * in_plane;
    for (int kz = 0; kz < g.kd; ++kz) {
      int zlo, zhi;
      valid_range(kz, g.sd, g.pd, D, OD, zlo, zhi);
      for (int ky = 0; ky < g.kh; ++ky) {
        int ylo, yhi;
        valid_range(ky, g.sh, g.ph, H, OH, ylo, yhi);
        for (int kx = 0; kx < g.kw; ++kx, ++row) {
          int xlo, xhi;
          valid_range(kx, g.sw, g.pw, W, OW, xlo, xhi);
          const T* src = col + row * n;
          const int shift = kx - g.pw;
          for (int oz = zlo; oz < zhi; ++oz) {
            const int iz = oz * g.sd + kz - g.pd;
            for (int oy = ylo; oy < yhi; ++oy) {
              const int iy = oy * g.sh + ky - g.ph;
              const T* srow = src + (static_cast<std::size_t>(oz) * OH + oy) * OW;
              T* drow = dst + (static_cast<std::size_t>(iz) * H + iy) * W;
              for (int ox = xlo; ox < xhi; ++ox) drow[ox * g.sw + shift] += srow[ox];
            }
          }
        }
      }
    }
  }
}

// Operands are copied into Eigen-owned (aligned) storage: Eigen picks its
// vectorized code path by pointer alignment, and the summation order must not
// depend on where the caller's buffers happen to live.
template <typename T>
void conv_forward(const ConvGeom& g, const T* in, const T* w, const T* bias, T* out) {
  const Eigen::Index M = g.out.c;
  const Eigen::Index K = static_cast<Eigen::Index>(g.in.c * g.taps());
  const Eigen::Index N = static_cast<Eigen::Index>(g.out.d) * g.out.h * g.out.w;
  RowMat<T> col(K, N);
  im2col(g, in, col.data());
  const RowMat<T> Wm = Eigen::Map<const RowMat<T>>(w, M, K);
  RowMat<T> O(M, N);
  O.noalias() = Wm * col;
  for (Eigen::Index m = 0; m < M; ++m) {
    const T* src = O.data() + m * N;
    T* dst = out + m * N;
    for (Eigen::Index i = 0; i < N; ++i) dst[i] = src[i] + bias[m];
  }
}

template <typename T>
void conv_backward(const ConvGeom& g, const T* in, const T* w, const T* dout, T* gw,
                   T* gbias, T* din) {
  const Eigen::Index M = g.out.c;
  const Eigen::Index K = static_cast<Eigen::Index>(g.in.c * g.taps());
  const Eigen::Index N = static_cast<Eigen::Index>(g.out.d) * g.out.h * g.out.w;
  RowMat<T> col(K, N);
  im2col(g, in, col.data());
  const RowMat<T> G = Eigen::Map<const RowMat<T>>(dout, M, N);
  RowMat<T> GW(M, K);
  GW.noalias() = G * col.transpose();
  for (Eigen::Index i = 0; i < M * K; ++i) gw[i] += GW.data()[i];
  for (Eigen::Index m = 0; m < M; ++m) {
    T s = 0;
    for (Eigen::Index i = 0; i < N; ++i) s += dout[m * N + i];
    gbias[m] += s;
  }
  if (din) {
    const RowMat<T> Wm = Eigen::Map<const RowMat<T>>(w, M, K);
    col.noalias() = Wm.transpose() * G;
    col2im(g, col.data(), din);
  }
}

template <typename T>
void pool_forward(const Shape& in, const Shape& out, bool pool_depth, const T* src, T* dst,
                  std::uint32_t* argmax) {
  const int kd = pool_depth ? 2 : 1;
  std::size_t o = 0;
  for (int c = 0; c < out.c; ++c)
    for (int z = 0; z < out.d; ++z)
      for (int y = 0; y < out.h; ++y)
        for (int x = 0; x < out.w; ++x, ++o) {
          T best = -std::numeric_limits<T>::infinity();
          std::uint32_t best_i = 0;
          for (int dz = 0; dz < kd; ++dz)
            for (int dy = 0; dy < 2; ++dy)
              for (int dx = 0; dx < 2; ++dx) {
                const std::size_t i =
                    ((static_cast<std::size_t>(c) * in.d + (z * kd + dz)) * in.h + (2 * y + dy)) *
                        in.w +
                    (2 * x + dx);
                if (src[i] > best) {
                  best = src[i];
                  best_i = static_cast<std::uint32_t>(i);
                }
              }
          dst[o] = best;
          if (argmax) argmax[o] = best_i;
        }
}

std::uint64_t layer_seed(std::uint64_t seed, std::size_t layer) {
  return derive_seed(seed, {fnv1a("dropout"), static_cast<std::uint64_t>(layer)});
}

}  // namespace

template <typename T>
std::vector<T> make_input(const NetworkSpec& spec, const Volume& volume) {
  if (volume.dims() != spec.input.volume_dims)
    throw ShapeError("input volume " + to_string(volume.dims()) +
                     " does not match network input " + to_string(spec.input.volume_dims));
  const auto vals = volume.values();
  if (spec.input.kind == InputKind::Volume3D) return std::vector<T>(vals.begin(), vals.end());

  const Vec3i d = volume.dims();
  const int axis = plane_axis(spec.input.plane);
  const int step = spec.input.slice_step;
  const Shape s = spec.input_shape();
  std::vector<T> out(s.size());
  std::size_t o = 0;
  for (int ch = 0; ch < s.c; ++ch) {
    const int k = ch * step;
    for (int r = 0; r < s.h; ++r)
      for (int q = 0; q < s.w; ++q) {
        int x, y, z;
        switch (axis) {
          case 0: x = k; z = r; y = q; break;
          case 1: y = k; z = r; x = q; break;
          default: z = k; y = r; x = q; break;
        }
        out[o++] = static_cast<T>(volume.at(x, y, z));
      }
  }
  (void)d;
  return out;
}

template <typename T>
std::array<T, 2> forward(const NetworkSpec& spec, std::span<const T> params,
                         std::span<const T> input, std::span<const T> covariates, Mode mode,
                         std::uint64_t dropout_seed, ForwardCache<T>* cache) {
  const auto shapes = spec.layer_shapes();
  const auto offsets = spec.param_offsets();
  if (params.size() != offsets.back())
    throw ShapeError("parameter vector has " + std::to_string(params.size()) +
                     " entries, network expects " + std::to_string(offsets.back()));
  const Shape in_shape = spec.input_shape();
  if (input.size() != in_shape.size())
    throw ShapeError("input tensor has " + std::to_string(input.size()) +
                     " entries, network expects " + std::to_string(in_shape.size()));
  if (covariates.size() != static_cast<std::size_t>(spec.covariates))
    throw ShapeError("expected " + std::to_string(spec.covariates) + " covariates");

  const std::size_t L = spec.layers.size();
  if (cache) {
    cache->acts.assign(L + 1, {});
    cache->pool_argmax.assign(L, {});
    cache->dropout_mask.assign(L, {});
  }

  std::vector<T> cur(input.begin(), input.end());
  Shape cur_shape = in_shape;
  for (std::size_t i = 0; i < L; ++i) {
    const LayerSpec& l = spec.layers[i];
    const Shape& out_shape = shapes[i];
    const T* p = params.data() + offsets[i];
    std::vector<T> next;
    switch (l.kind) {
      case LayerKind::Conv: {
        next.resize(out_shape.size());
        const ConvGeom g = conv_geom(l, cur_shape, out_shape);
        const std::size_t nw = static_cast<std::size_t>(out_shape.c) * cur_shape.c * g.taps();
        conv_forward(g, cur.data(), p, p + nw, next.data());
        break;
      }
      case LayerKind::Relu:
        next = cur;
        for (auto& v : next) v = v > T(0) ? v : T(0);
        break;
      case LayerKind::MaxPool: {
        next.resize(out_shape.size());
        std::uint32_t* am = nullptr;
        if (cache) {
          cache->pool_argmax[i].resize(out_shape.size());
          am = cache->pool_argmax[i].data();
        }
        pool_forward(cur_shape, out_shape, l.spatial_dims == 3, cur.data(), next.data(), am);
        break;
      }
      case LayerKind::Flatten:
      case LayerKind::Softmax:
        next = cur;
        break;
      case LayerKind::CovariateConcat:
        next = cur;
        next.insert(next.end(), covariates.begin(), covariates.end());
        break;
      case LayerKind::Dense: {
        const std::size_t n_in = cur.size();
        next.resize(static_cast<std::size_t>(l.units));
        const T* bias = p + static_cast<std::size_t>(l.units) * n_in;
        for (int u = 0; u < l.units; ++u) {
          const T* wrow = p + static_cast<std::size_t>(u) * n_in;
          T acc = bias[u];
          for (std::size_t k = 0; k < n_in; ++k) acc += wrow[k] * cur[k];
          next[static_cast<std::size_t>(u)] = acc;
        }
        break;
      }
      case LayerKind::Dropout: {
        next = cur;
        if (mode == Mode::Train && l.rate > 0.0) {
          std::mt19937_64 rng(layer_seed(dropout_seed, i));
          std::uniform_real_distribution<double> u(0.0, 1.0);
          const T keep_scale = static_cast<T>(1.0 / (1.0 - l.rate));
          std::vector<T> mask(cur.size());
          for (auto& m : mask) m = u(rng) >= l.rate ? keep_scale : T(0);
          for (std::size_t k = 0; k < next.size(); ++k) next[k] *= mask[k];
          if (cache) cache->dropout_mask[i] = std::move(mask);
        }
        break;
      }
    }
    if (cache) cache->acts[i] = std::move(cur);
    cur = std::move(next);
    cur_shape = out_shape;
  }
  if (cur.size() != 2) throw ShapeError("network does not end in two logits");
  std::array<T, 2> logits{cur[0], cur[1]};
  if (cache) cache->acts[L] = std::move(cur);
  return logits;
}

template <typename T>
void backward(const NetworkSpec& spec, std::span<const T> params, const ForwardCache<T>& cache,
              std::array<T, 2> logit_grad, std::span<T> grad) {
  const auto shapes = spec.layer_shapes();
  const auto offsets = spec.param_offsets();
  const std::size_t L = spec.layers.size();
  if (cache.acts.size() != L + 1 || grad.size() != offsets.back() ||
      params.size() != offsets.back())
    throw ShapeError("backward: cache or gradient does not match the network");

  std::vector<T> dcur{logit_grad[0], logit_grad[1]};
  for (std::size_t ii = L; ii-- > 0;) {
    const LayerSpec& l = spec.layers[ii];
    const std::vector<T>& in = cache.acts[ii];
    const Shape in_shape = ii == 0 ? spec.input_shape() : shapes[ii - 1];
    const T* p = params.data() + offsets[ii];
    T* gp = grad.data() + offsets[ii];
    std::vector<T> din;
    const bool need_din = ii > 0;
    switch (l.kind) {
      case LayerKind::Conv: {
        const ConvGeom g = conv_geom(l, in_shape, shapes[ii]);
        const std::size_t nw = static_cast<std::size_t>(shapes[ii].c) * in_shape.c * g.taps();
        if (need_din) din.assign(in.size(), T(0));
        conv_backward(g, in.data(), p, dcur.data(), gp, gp + nw,
                      need_din ? din.data() : nullptr);
        break;
      }
      case LayerKind::Relu:
        din = dcur;
        for (std::size_t k = 0; k < din.size(); ++k)
          if (!(in[k] > T(0))) din[k] = T(0);
        break;
      case LayerKind::MaxPool: {
        din.assign(in.size(), T(0));
        const auto& am = cache.pool_argmax[ii];
        for (std::size_t k = 0; k < dcur.size(); ++k) din[am[k]] += dcur[k];
        break;
      }
      case LayerKind::Flatten:
      case LayerKind::Softmax:
        din = std::move(dcur);
        break;
      case LayerKind::CovariateConcat:
        din.assign(dcur.begin(), dcur.begin() + static_cast<std::ptrdiff_t>(in.size()));
        break;
      case LayerKind::Dense: {
        const std::size_t n_in = in.size();
        T* gbias = gp + static_cast<std::size_t>(l.units) * n_in;
        if (need_din) din.assign(n_in, T(0));
        for (int u = 0; u < l.units; ++u) {
          const T go = dcur[static_cast<std::size_t>(u)];
          gbias[u] += go;
          T* gw = gp + static_cast<std::size_t>(u) * n_in;
          const T* wrow = p + static_cast<std::size_t>(u) * n_in;
          for (std::size_t k = 0; k < n_in; ++k) gw[k] += go * in[k];
          if (need_din)
            for (std::size_t k = 0; k < n_in; ++k) din[k] += go * wrow[k];
        }
        break;
      }
      case LayerKind::Dropout: {
        din = std::move(dcur);
        const auto& mask = cache.dropout_mask[ii];
        if (!mask.empty())
          for (std::size_t k = 0; k < din.size(); ++k) din[k] *= mask[k];
        break;
      }
    }
    dcur = std::move(din);
  }
}

template <typename T>
T cross_entropy(std::array<T, 2> z, int target, std::array<T, 2>* grad) {
  const T m = std::max(z[0], z[1]);
  const T lse = m + std::log(std::exp(z[0] - m) + std::exp(z[1] - m));
  if (grad) {
    (*grad)[0] = std::exp(z[0] - lse) - (target == 0 ? T(1) : T(0));
    (*grad)[1] = std::exp(z[1] - lse) - (target == 1 ? T(1) : T(0));
  }
  return lse - z[static_cast<std::size_t>(target)];
}

std::array<double, 2> softmax2(std::array<double, 2> z, double temperature) {
  const double a = z[0] / temperature, b = z[1] / temperature;
  const double m = std::max(a, b);
  const double ea = std::exp(a - m), eb = std::exp(b - m);
  return {ea / (ea + eb), eb / (ea + eb)};
}

std::vector<float> init_parameters(const NetworkSpec& spec, std::uint64_t seed) {
  const auto shapes = spec.layer_shapes();
  const auto offsets = spec.param_offsets();
  std::vector<float> params(offsets.back(), 0.0f);
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const LayerSpec& l = spec.layers[i];
    if (l.kind != LayerKind::Conv && l.kind != LayerKind::Dense) continue;
    const Shape in = i == 0 ? spec.input_shape() : shapes[i - 1];
    std::size_t fan_in, n_weights;
    if (l.kind == LayerKind::Conv) {
      const std::size_t k = static_cast<std::size_t>(l.kernel);
      fan_in = static_cast<std::size_t>(in.c) * (l.spatial_dims == 3 ? k * k * k : k * k);
      n_weights = fan_in * static_cast<std::size_t>(l.filters);
    } else {
      fan_in = in.size();
      n_weights = fan_in * static_cast<std::size_t>(l.units);
    }
    std::mt19937_64 rng(derive_seed(seed, {fnv1a("init"), static_cast<std::uint64_t>(i)}));
    std::normal_distribution<double> normal(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
    for (std::size_t k = 0; k < n_weights; ++k)
      params[offsets[i] + k] = static_cast<float>(normal(rng));
  }
  return params;
}

#define SWAPTEST_INSTANTIATE(T)                                                              \
  template std::vector<T> make_input<T>(const NetworkSpec&, const Volume&);                  \
  template std::array<T, 2> forward<T>(const NetworkSpec&, std::span<const T>,               \
                                       std::span<const T>, std::span<const T>, Mode,         \
                                       std::uint64_t, ForwardCache<T>*);                     \
  template void backward<T>(const NetworkSpec&, std::span<const T>, const ForwardCache<T>&, \
                            std::array<T, 2>, std::span<T>);                                 \
  template T cross_entropy<T>(std::array<T, 2>, int, std::array<T, 2>*);

SWAPTEST_INSTANTIATE(float)
SWAPTEST_INSTANTIATE(double)

#undef SWAPTEST_INSTANTIATE

}  // namespace swaptest
