#include "qsmlab/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>

namespace qsmlab::ad {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using StridedMap = Eigen::Map<RowMat, 0, Eigen::OuterStride<>>;
using ConstStridedMap = Eigen::Map<const RowMat, 0, Eigen::OuterStride<>>;

void require_rank5(const Tensor& t, const char* op) {
  if (t.rank() != 5) {
    throw DimensionError(std::string(op) + " expects a rank-5 tensor, got " + to_string(t.shape()));
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape " + to_string(a.shape()) + " vs " +
                         to_string(b.shape()));
  }
}

void accumulate(Node& parent, std::span<const double> g) {
  if (!parent.requires_grad) return;
  auto& buf = parent.grad_buffer();
  for (std::size_t i = 0; i < buf.size(); ++i) buf[i] += g[i];
}

struct ConvGeometry {
  std::size_t n, cin, cout, k, stride, pad;
  std::size_t ix, iy, iz;
  std::size_t ox, oy, oz;
  std::size_t rows() const { return cin * k * k * k; }
  std::size_t in_plane() const { return ix * iy * iz; }
  std::size_t out_plane() const { return ox * oy * oz; }
  std::size_t chunk_rows() const { return std::max<std::size_t>(1, 4096 / (oy * oz)); }
};

// Gathers input patches for output x-rows [x0, x1) of sample `in` into cols
// (rows() x P, row-major).
void im2col(const double* in, const ConvGeometry& g, std::size_t x0, std::size_t x1, RowMat& cols) {
  const std::size_t P = (x1 - x0) * g.oy * g.oz;
  cols.resize(static_cast<Eigen::Index>(g.rows()), static_cast<Eigen::Index>(P));
  const auto pad = static_cast<std::ptrdiff_t>(g.pad);
  for (std::size_t ci = 0; ci < g.cin; ++ci) {
    const double* plane = in + ci * g.in_plane();
    for (std::size_t a = 0; a < g.k; ++a)
      for (std::size_t b = 0; b < g.k; ++b)
        for (std::size_t c = 0; c < g.k; ++c) {
          const std::size_t row = ((ci * g.k + a) * g.k + b) * g.k + c;
          double* dst = cols.data() + row * P;
          std::size_t p = 0;
          for (std::size_t ox = x0; ox < x1; ++ox) {
            const auto x = static_cast<std::ptrdiff_t>(ox * g.stride + a) - pad;
            for (std::size_t oy = 0; oy < g.oy; ++oy) {
              const auto y = static_cast<std::ptrdiff_t>(oy * g.stride + b) - pad;
              const bool row_ok = x >= 0 && x < std::ptrdiff_t(g.ix) && y >= 0 && y < std::ptrdiff_t(g.iy);
              const double* src = row_ok ? plane + (std::size_t(x) * g.iy + std::size_t(y)) * g.iz : nullptr;
              for (std::size_t oz = 0; oz < g.oz; ++oz, ++p) {
                const auto z = static_cast<std::ptrdiff_t>(oz * g.stride + c) - pad;
                dst[p] = (row_ok && z >= 0 && z < std::ptrdiff_t(g.iz)) ? src[z] : 0.0;
              }
            }
          }
        }
  }
}

// Scatter-add adjoint of im2col.
void col2im(const RowMat& cols, const ConvGeometry& g, std::size_t x0, std::size_t x1, double* out) {
  const std::size_t P = (x1 - x0) * g.oy * g.oz;
  const auto pad = static_cast<std::ptrdiff_t>(g.pad);
  for (std::size_t ci = 0; ci < g.cin; ++ci) {
    double* plane = out + ci * g.in_plane();
    for (std::size_t a = 0; a < g.k; ++a)
      for (std::size_t b = 0; b < g.k; ++b)
        for (std::size_t c = 0; c < g.k; ++c) {
          const std::size_t row = ((ci * g.k + a) * g.k + b) * g.k + c;
          const double* src = cols.data() + row * P;
          std::size_t p = 0;
          for (std::size_t ox = x0; ox < x1; ++ox) {
            const auto x = static_cast<std::ptrdiff_t>(ox * g.stride + a) - pad;
            for (std::size_t oy = 0; oy < g.oy; ++oy) {
              const auto y = static_cast<std::ptrdiff_t>(oy * g.stride + b) - pad;
              const bool row_ok = x >= 0 && x < std::ptrdiff_t(g.ix) && y >= 0 && y < std::ptrdiff_t(g.iy);
              if (!row_ok) {
                p += g.oz;
                continue;
              }
              double* dst = plane + (std::size_t(x) * g.iy + std::size_t(y)) * g.iz;
              for (std::size_t oz = 0; oz < g.oz; ++oz, ++p) {
                const auto z = static_cast<std::ptrdiff_t>(oz * g.stride + c) - pad;
                if (z >= 0 && z < std::ptrdiff_t(g.iz)) dst[z] += src[p];
              }
            }
          }
        }
  }
}

}  // namespace

// ---------------------------------------------------------------------------

Tensor conv3(const Tensor& input, const Tensor& weight, const Tensor& bias, int stride,
             int padding) {
  require_rank5(input, "conv3");
  require_rank5(weight, "conv3 weight");
  const auto& is = input.shape();
  const auto& ws = weight.shape();
  if (ws[2] != ws[3] || ws[2] != ws[4]) throw DimensionError("conv3 kernel must be cubic");
  if (ws[1] != is[1]) {
    throw DimensionError("conv3: kernel expects " + std::to_string(ws[1]) +
                         " input channels, input has " + std::to_string(is[1]));
  }
  if (bias.numel() != ws[0]) throw DimensionError("conv3: bias size must equal output channels");
  if (stride < 1) throw DimensionError("conv3: stride must be >= 1");
  ConvGeometry g{};
  g.n = is[0];
  g.cin = is[1];
  g.cout = ws[0];
  g.k = ws[2];
  g.stride = static_cast<std::size_t>(stride);
  g.pad = padding < 0 ? g.k / 2 : static_cast<std::size_t>(padding);
  g.ix = is[2];
  g.iy = is[3];
  g.iz = is[4];
  auto out_extent = [&](std::size_t n) -> std::size_t {
    if (n + 2 * g.pad < g.k) throw DimensionError("conv3: input smaller than kernel");
    return (n + 2 * g.pad - g.k) / g.stride + 1;
  };
  g.ox = out_extent(g.ix);
  g.oy = out_extent(g.iy);
  g.oz = out_extent(g.iz);

  Buffer out(g.n * g.cout * g.out_plane());
  const Eigen::Map<const RowMat> W(weight.values().data(), Eigen::Index(g.cout), Eigen::Index(g.rows()));
  const double* bptr = bias.values().data();
  RowMat cols;
  const std::size_t step = g.chunk_rows();
  for (std::size_t n = 0; n < g.n; ++n) {
    const double* in = input.values().data() + n * g.cin * g.in_plane();
    for (std::size_t x0 = 0; x0 < g.ox; x0 += step) {
      const std::size_t x1 = std::min(g.ox, x0 + step);
      const auto P = Eigen::Index((x1 - x0) * g.oy * g.oz);
      im2col(in, g, x0, x1, cols);
      StridedMap Y(out.data() + n * g.cout * g.out_plane() + x0 * g.oy * g.oz, Eigen::Index(g.cout), P,
                   Eigen::OuterStride<>(Eigen::Index(g.out_plane())));
      Y.noalias() = W * cols;
      for (std::size_t co = 0; co < g.cout; ++co) Y.row(Eigen::Index(co)).array() += bptr[co];
    }
  }

  return make_result(
      {g.n, g.cout, g.ox, g.oy, g.oz}, std::move(out), {input, weight, bias},
      [g](Node& self) {
        Node& in = *self.parents[0];
        Node& wn = *self.parents[1];
        Node& bn = *self.parents[2];
        const Eigen::Map<const RowMat> W(wn.value.data(), Eigen::Index(g.cout), Eigen::Index(g.rows()));
        RowMat cols;
        RowMat dcols;
        RowMat dW = RowMat::Zero(Eigen::Index(g.cout), Eigen::Index(g.rows()));
        std::vector<double> db(g.cout, 0.0);
        std::vector<double> dx;
        if (in.requires_grad) dx.assign(in.value.size(), 0.0);
        const std::size_t step = g.chunk_rows();
        for (std::size_t n = 0; n < g.n; ++n) {
          const double* x = in.value.data() + n * g.cin * g.in_plane();
          for (std::size_t x0 = 0; x0 < g.ox; x0 += step) {
            const std::size_t x1 = std::min(g.ox, x0 + step);
            const auto P = Eigen::Index((x1 - x0) * g.oy * g.oz);
            ConstStridedMap dY(self.grad.data() + n * g.cout * g.out_plane() + x0 * g.oy * g.oz,
                               Eigen::Index(g.cout), P, Eigen::OuterStride<>(Eigen::Index(g.out_plane())));
            if (wn.requires_grad) {
              im2col(x, g, x0, x1, cols);
              dW.noalias() += dY * cols.transpose();
            }
            if (bn.requires_grad)
              for (std::size_t co = 0; co < g.cout; ++co) db[co] += dY.row(Eigen::Index(co)).sum();
            if (in.requires_grad) {
              dcols.noalias() = W.transpose() * dY;
              col2im(dcols, g, x0, x1, dx.data() + n * g.cin * g.in_plane());
            }
          }
        }
        if (in.requires_grad) accumulate(in, dx);
        if (wn.requires_grad) accumulate(wn, std::span<const double>(dW.data(), std::size_t(dW.size())));
        if (bn.requires_grad) accumulate(bn, db);
      },
      "conv3");
}

Tensor conv3_transposed(const Tensor& input, const Tensor& weight, const Tensor& bias) {
  require_rank5(input, "conv3_transposed");
  require_rank5(weight, "conv3_transposed weight");
  const auto& is = input.shape();
  const auto& ws = weight.shape();
  if (ws[2] != 2 || ws[3] != 2 || ws[4] != 2) {
    throw DimensionError("conv3_transposed expects a 2x2x2 kernel");
  }
  if (ws[0] != is[1]) throw DimensionError("conv3_transposed: channel mismatch");
  if (bias.numel() != ws[1]) throw DimensionError("conv3_transposed: bias size mismatch");
  const std::size_t N = is[0], cin = is[1], cout = ws[1];
  const std::size_t X = is[2], Y = is[3], Z = is[4];
  const std::size_t P = X * Y * Z;
  const std::size_t OY = 2 * Y, OZ = 2 * Z;
  const std::size_t oplane = 8 * P;
  const std::size_t R = cout * 8;

  // Block rows (co, a, b, c) map to output voxel (2x + a, 2y + b, 2z + c).
  auto out_index = [=](std::size_t r, std::size_t p) {
    const std::size_t co = r / 8, a = (r / 4) % 2, b = (r / 2) % 2, c = r % 2;
    const std::size_t x = p / (Y * Z), y = (p / Z) % Y, z = p % Z;
    return co * oplane + ((2 * x + a) * OY + (2 * y + b)) * OZ + (2 * z + c);
  };

  Buffer out(N * cout * oplane);
  const Eigen::Map<const RowMat> Wm(weight.values().data(), Eigen::Index(cin), Eigen::Index(R));
  RowMat block;
  for (std::size_t n = 0; n < N; ++n) {
    const Eigen::Map<const RowMat> Xm(input.values().data() + n * cin * P, Eigen::Index(cin), Eigen::Index(P));
    block.noalias() = Wm.transpose() * Xm;
    double* o = out.data() + n * cout * oplane;
    for (std::size_t r = 0; r < R; ++r) {
      const double bv = bias.values()[r / 8];
      for (std::size_t p = 0; p < P; ++p) o[out_index(r, p)] = block(Eigen::Index(r), Eigen::Index(p)) + bv;
    }
  }

  return make_result(
      {N, cout, 2 * X, OY, OZ}, std::move(out), {input, weight, bias},
      [=](Node& self) {
        Node& in = *self.parents[0];
        Node& wn = *self.parents[1];
        Node& bn = *self.parents[2];
        const Eigen::Map<const RowMat> Wm(wn.value.data(), Eigen::Index(cin), Eigen::Index(R));
        RowMat dblock(static_cast<Eigen::Index>(R), static_cast<Eigen::Index>(P));
        RowMat dW = RowMat::Zero(Eigen::Index(cin), Eigen::Index(R));
        std::vector<double> dx(in.requires_grad ? in.value.size() : 0, 0.0);
        std::vector<double> db(cout, 0.0);
        for (std::size_t n = 0; n < N; ++n) {
          const double* go = self.grad.data() + n * cout * oplane;
          for (std::size_t r = 0; r < R; ++r)
            for (std::size_t p = 0; p < P; ++p) dblock(Eigen::Index(r), Eigen::Index(p)) = go[out_index(r, p)];
          if (bn.requires_grad)
            for (std::size_t r = 0; r < R; ++r) db[r / 8] += dblock.row(Eigen::Index(r)).sum();
          if (wn.requires_grad) {
            const Eigen::Map<const RowMat> Xm(in.value.data() + n * cin * P, Eigen::Index(cin), Eigen::Index(P));
            dW.noalias() += Xm * dblock.transpose();
          }
          if (in.requires_grad) {
            Eigen::Map<RowMat> dX(dx.data() + n * cin * P, Eigen::Index(cin), Eigen::Index(P));
            dX.noalias() = Wm * dblock;
          }
        }
        if (in.requires_grad) accumulate(in, dx);
        if (wn.requires_grad) accumulate(wn, std::span<const double>(dW.data(), std::size_t(dW.size())));
        if (bn.requires_grad) accumulate(bn, db);
      },
      "conv3_transposed");
}

Tensor maxpool3(const Tensor& input) {
  require_rank5(input, "maxpool3");
  const auto& s = input.shape();
  if (s[2] % 2 || s[3] % 2 || s[4] % 2) {
    throw DimensionError("maxpool3: spatial dims must be divisible by 2, got " + to_string(s));
  }
  const std::size_t NC = s[0] * s[1], X = s[2], Y = s[3], Z = s[4];
  const std::size_t ox = X / 2, oy = Y / 2, oz = Z / 2;
  Buffer out(NC * ox * oy * oz);
  std::vector<std::size_t> argmax(out.size());
  const double* in = input.values().data();
  std::size_t o = 0;
  for (std::size_t nc = 0; nc < NC; ++nc) {
    const std::size_t base = nc * X * Y * Z;
    for (std::size_t x = 0; x < ox; ++x)
      for (std::size_t y = 0; y < oy; ++y)
        for (std::size_t z = 0; z < oz; ++z, ++o) {
          std::size_t best = base + ((2 * x) * Y + 2 * y) * Z + 2 * z;
          for (std::size_t a = 0; a < 2; ++a)
            for (std::size_t b = 0; b < 2; ++b)
              for (std::size_t c = 0; c < 2; ++c) {
                const std::size_t idx = base + ((2 * x + a) * Y + (2 * y + b)) * Z + (2 * z + c);
                if (in[idx] > in[best]) best = idx;
              }
          out[o] = in[best];
          argmax[o] = best;
        }
  }
  return make_result(
      {s[0], s[1], ox, oy, oz}, std::move(out), {input},
      [argmax = std::move(argmax)](Node& self) {
        Node& in = *self.parents[0];
        auto& g = in.grad_buffer();
        for (std::size_t i = 0; i < argmax.size(); ++i) g[argmax[i]] += self.grad[i];
      },
      "maxpool3");
}

Tensor batchnorm3(const Tensor& input, const Tensor& gamma, const Tensor& beta, RunningStats& stats,
                  NormMode mode) {
  require_rank5(input, "batchnorm3");
  const auto& s = input.shape();
  const std::size_t N = s[0], C = s[1], S = s[2] * s[3] * s[4];
  if (gamma.numel() != C || beta.numel() != C || stats.mean.numel() != C || stats.var.numel() != C) {
    throw DimensionError("batchnorm3: per-channel parameter size must equal " + std::to_string(C));
  }
  const double count = static_cast<double>(N * S);
  std::vector<double> mu(C), inv_std(C);
  const double* x = input.values().data();
  if (mode == NormMode::Train) {
    if (N * S < 2) throw DimensionError("batchnorm3: need at least two values per channel");
    auto rm = stats.mean.mutable_values();
    auto rv = stats.var.mutable_values();
    for (std::size_t c = 0; c < C; ++c) {
      double m = 0.0;
      for (std::size_t n = 0; n < N; ++n) {
        const double* p = x + (n * C + c) * S;
        for (std::size_t i = 0; i < S; ++i) m += p[i];
      }
      m /= count;
      double v = 0.0;
      for (std::size_t n = 0; n < N; ++n) {
        const double* p = x + (n * C + c) * S;
        for (std::size_t i = 0; i < S; ++i) v += (p[i] - m) * (p[i] - m);
      }
      const double var = v / count;
      mu[c] = m;
      inv_std[c] = 1.0 / std::sqrt(var + stats.eps);
      rm[c] = (1.0 - stats.momentum) * rm[c] + stats.momentum * m;
      rv[c] = (1.0 - stats.momentum) * rv[c] + stats.momentum * (v / (count - 1.0));
    }
  } else {
    for (std::size_t c = 0; c < C; ++c) {
      mu[c] = stats.mean.values()[c];
      inv_std[c] = 1.0 / std::sqrt(stats.var.values()[c] + stats.eps);
    }
  }
  std::vector<double> xhat(input.numel());
  Buffer out(input.numel());
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t c = 0; c < C; ++c) {
      const std::size_t off = (n * C + c) * S;
      const double gm = gamma.values()[c], bt = beta.values()[c];
      for (std::size_t i = 0; i < S; ++i) {
        xhat[off + i] = (x[off + i] - mu[c]) * inv_std[c];
        out[off + i] = gm * xhat[off + i] + bt;
      }
    }
  const bool train = mode == NormMode::Train;
  return make_result(
      s, std::move(out), {input, gamma, beta},
      [N, C, S, count, train, inv_std = std::move(inv_std), xhat = std::move(xhat)](Node& self) {
        Node& in = *self.parents[0];
        Node& gn = *self.parents[1];
        Node& bn = *self.parents[2];
        const double* dy = self.grad.data();
        std::vector<double> dgamma(C, 0.0), dbeta(C, 0.0);
        for (std::size_t n = 0; n < N; ++n)
          for (std::size_t c = 0; c < C; ++c) {
            const std::size_t off = (n * C + c) * S;
            for (std::size_t i = 0; i < S; ++i) {
              dgamma[c] += dy[off + i] * xhat[off + i];
              dbeta[c] += dy[off + i];
            }
          }
        if (in.requires_grad) {
          auto& dx = in.grad_buffer();
          for (std::size_t n = 0; n < N; ++n)
            for (std::size_t c = 0; c < C; ++c) {
              const std::size_t off = (n * C + c) * S;
              const double g = gn.value[c] * inv_std[c];
              if (train) {
                const double mdy = dbeta[c] / count;
                const double mdyx = dgamma[c] / count;
                for (std::size_t i = 0; i < S; ++i)
                  dx[off + i] += g * (dy[off + i] - mdy - xhat[off + i] * mdyx);
              } else {
                for (std::size_t i = 0; i < S; ++i) dx[off + i] += g * dy[off + i];
              }
            }
        }
        if (gn.requires_grad) accumulate(gn, dgamma);
        if (bn.requires_grad) accumulate(bn, dbeta);
      },
      "batchnorm3");
}

// ---------------------------------------------------------------------------
// Elementwise and reductions

namespace {

template <class F, class D>
Tensor unary(const Tensor& x, F f, D dfdx, const char* name) {
  Buffer out(x.numel());
  const auto xv = x.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(xv[i]);
  return make_result(
      x.shape(), std::move(out), {x},
      [dfdx](Node& self) {
        Node& in = *self.parents[0];
        auto& g = in.grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * dfdx(in.value[i], self.value[i]);
      },
      name);
}

}  // namespace

Tensor relu(const Tensor& x) {
  return unary(
      x, [](double v) { return v > 0.0 ? v : 0.0; }, [](double v, double) { return v > 0.0 ? 1.0 : 0.0; },
      "relu");
}

Tensor concat(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw DimensionError("concat of zero tensors");
  const Shape& s0 = parts[0].shape();
  if (s0.size() < 2) throw DimensionError("concat needs rank >= 2");
  std::size_t channels = 0;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    if (s.size() != s0.size() || s[0] != s0[0] || !std::equal(s.begin() + 2, s.end(), s0.begin() + 2)) {
      throw DimensionError("concat: incompatible shapes " + to_string(s0) + " and " + to_string(s));
    }
    channels += s[1];
  }
  Shape out_shape = s0;
  out_shape[1] = channels;
  const std::size_t N = s0[0];
  const std::size_t S = numel(s0) / (s0[0] * s0[1]);
  Buffer out(numel(out_shape));
  std::vector<std::size_t> offsets;
  std::size_t off = 0;
  for (const auto& p : parts) {
    offsets.push_back(off);
    const std::size_t c = p.shape()[1];
    for (std::size_t n = 0; n < N; ++n)
      std::copy_n(p.values().data() + n * c * S, c * S, out.data() + (n * channels + off) * S);
    off += c;
  }
  return make_result(
      out_shape, std::move(out), parts,
      [N, S, channels, offsets](Node& self) {
        for (std::size_t k = 0; k < self.parents.size(); ++k) {
          Node& p = *self.parents[k];
          if (!p.requires_grad) continue;
          const std::size_t c = p.shape[1];
          auto& g = p.grad_buffer();
          for (std::size_t n = 0; n < N; ++n) {
            const double* src = self.grad.data() + (n * channels + offsets[k]) * S;
            double* dst = g.data() + n * c * S;
            for (std::size_t i = 0; i < c * S; ++i) dst[i] += src[i];
          }
        }
      },
      "concat");
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  Buffer out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] + b.values()[i];
  return make_result(
      a.shape(), std::move(out), {a, b},
      [](Node& self) {
        accumulate(*self.parents[0], self.grad);
        accumulate(*self.parents[1], self.grad);
      },
      "add");
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  Buffer out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] - b.values()[i];
  return make_result(
      a.shape(), std::move(out), {a, b},
      [](Node& self) {
        accumulate(*self.parents[0], self.grad);
        Node& pb = *self.parents[1];
        if (!pb.requires_grad) return;
        auto& g = pb.grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i];
      },
      "sub");
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  Buffer out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] * b.values()[i];
  return make_result(
      a.shape(), std::move(out), {a, b},
      [](Node& self) {
        Node& pa = *self.parents[0];
        Node& pb = *self.parents[1];
        if (pa.requires_grad) {
          auto& g = pa.grad_buffer();
          for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pb.value[i];
        }
        if (pb.requires_grad) {
          auto& g = pb.grad_buffer();
          for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pa.value[i];
        }
      },
      "mul");
}

Tensor scale(const Tensor& x, double s) {
  return unary(x, [s](double v) { return s * v; }, [s](double, double) { return s; }, "scale");
}

Tensor add_scalar(const Tensor& x, double s) {
  return unary(x, [s](double v) { return v + s; }, [](double, double) { return 1.0; }, "add_scalar");
}

Tensor exp(const Tensor& x) {
  return unary(
      x, [](double v) { return std::exp(std::clamp(v, -kExpClamp, kExpClamp)); },
      [](double v, double y) { return (v < -kExpClamp || v > kExpClamp) ? 0.0 : y; }, "exp");
}

Tensor log(const Tensor& x) {
  for (double v : x.values()) {
    if (!(v > 0.0)) throw NumericalError("log of nonpositive value");
  }
  return unary(
      x, [](double v) { return std::log(std::max(v, kLogFloor)); },
      [](double v, double) { return v < kLogFloor ? 0.0 : 1.0 / v; }, "log");
}

Tensor square(const Tensor& x) {
  return unary(x, [](double v) { return v * v; }, [](double v, double) { return 2.0 * v; }, "square");
}

Tensor sqrt(const Tensor& x) {
  for (double v : x.values()) {
    if (v < 0.0) throw NumericalError("sqrt of negative value");
  }
  return unary(
      x, [](double v) { return std::sqrt(v); }, [](double, double y) { return y > 0.0 ? 0.5 / y : 0.0; },
      "sqrt");
}

Tensor abs(const Tensor& x) {
  return unary(
      x, [](double v) { return std::abs(v); },
      [](double v, double) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }, "abs");
}

Tensor clamp(const Tensor& x, double lo, double hi) {
  if (lo > hi) throw ConfigError("clamp: lo > hi");
  return unary(
      x, [lo, hi](double v) { return std::clamp(v, lo, hi); },
      [lo, hi](double v, double) { return (v < lo || v > hi) ? 0.0 : 1.0; }, "clamp");
}

Tensor sum(const Tensor& x) {
  double acc = 0.0;
  for (double v : x.values()) acc += v;
  return make_result(
      {1}, {acc}, {x},
      [](Node& self) {
        Node& in = *self.parents[0];
        auto& g = in.grad_buffer();
        for (double& v : g) v += self.grad[0];
      },
      "sum");
}

Tensor mean(const Tensor& x) { return scale(sum(x), 1.0 / static_cast<double>(x.numel())); }

Tensor linear_map(const Tensor& x, Shape out_shape, LinearFn forward, LinearFn adjoint,
                  const char* name) {
  Buffer out(numel(out_shape));
  forward(x.values(), out);
  return make_result(
      std::move(out_shape), std::move(out), {x},
      [adjoint = std::move(adjoint)](Node& self) {
        Node& in = *self.parents[0];
        std::vector<double> g(in.value.size(), 0.0);
        adjoint(self.grad, g);
        accumulate(in, g);
      },
      name);
}

}  // namespace qsmlab::ad
