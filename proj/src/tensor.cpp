// Copyright 2026 The spikedrive Authors
// SPDX-License-Identifier: Apache-2.0

#include "spikedrive/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "spikedrive/errors.hpp"
#include "spikedrive/kernels.hpp"

namespace spikedrive {

std::size_t shape_product(const Shape& shape) {
  std::size_t n = 1;
  for (auto e : shape) n *= e;
  return n;
}

std::string shape_to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

namespace {

void check_extents(const Shape& shape) {
  for (auto e : shape) {
    if (e == 0) throw ShapeError("tensor extents must be >= 1, got " + shape_to_string(shape));
  }
}

void require_rank(const Tensor& x, std::size_t rank, const char* op) {
  if (x.rank() != rank) {
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) +
                     ", got " + shape_to_string(x.shape()));
  }
}

}  // namespace

Tensor::Tensor() : data_(1, 0.0) {}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)) {
  check_extents(shape_);
  data_.assign(shape_product(shape_), fill);
}

Tensor::Tensor(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  check_extents(shape_);
  if (data_.size() != shape_product(shape_)) {
    throw ShapeError("data length " + std::to_string(data_.size()) +
                     " does not match shape " + shape_to_string(shape_));
  }
}

Tensor Tensor::scalar(double value) { return Tensor(Shape{}, std::vector<double>{value}); }

Tensor Tensor::vector(std::vector<double> values) {
  const auto n = values.size();
  return Tensor(Shape{n}, std::move(values));
}

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t m = rows.size();
  const std::size_t p = m ? rows.begin()->size() : 0;
  std::vector<double> data;
  data.reserve(m * p);
  for (const auto& r : rows) {
    if (r.size() != p) throw ShapeError("ragged matrix literal");
    data.insert(data.end(), r.begin(), r.end());
  }
  return Tensor(Shape{m, p}, std::move(data));
}

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= shape_.size()) {
    throw ShapeError("axis " + std::to_string(axis) + " out of range for " +
                     shape_to_string(shape_));
  }
  return shape_[axis];
}

double& Tensor::at(std::size_t i, std::size_t j) { return data_[i * shape_[1] + j]; }
double Tensor::at(std::size_t i, std::size_t j) const { return data_[i * shape_[1] + j]; }
double& Tensor::at(std::size_t c, std::size_t i, std::size_t j) {
  return data_[(c * shape_[1] + i) * shape_[2] + j];
}
double Tensor::at(std::size_t c, std::size_t i, std::size_t j) const {
  return data_[(c * shape_[1] + i) * shape_[2] + j];
}

Tensor Tensor::reshaped(Shape shape) const {
  if (shape_product(shape) != data_.size()) {
    throw ShapeError("cannot reshape " + shape_to_string(shape_) + " to " +
                     shape_to_string(shape));
  }
  return Tensor(std::move(shape), data_);
}

void ConvSpec::validate() const {
  if (kernel.rank() != 4) throw ShapeError("conv kernel must be [out,in,kh,kw], got " +
                                           shape_to_string(kernel.shape()));
  if (bias.rank() != 1 || bias.dim(0) != kernel.dim(0)) {
    throw ShapeError("conv bias must be [out_ch], got " + shape_to_string(bias.shape()));
  }
  if (stride.first < 1 || stride.second < 1) throw ShapeError("conv stride must be >= 1");
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  const std::size_t m = a.dim(0), k = a.dim(1), p = b.dim(1);
  if (b.dim(0) != k) {
    throw ShapeError("matmul: inner extents differ, " + shape_to_string(a.shape()) + " x " +
                     shape_to_string(b.shape()));
  }
  Tensor c(Shape{m, p});
  kernels::active().gemm_accumulate(a.raw(), b.raw(), c.raw(), m, k, p);
  return c;
}

Tensor transpose(const Tensor& a) {
  require_rank(a, 2, "transpose");
  const std::size_t m = a.dim(0), n = a.dim(1);
  Tensor t(Shape{n, m});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) t.at(j, i) = a.at(i, j);
  return t;
}

Tensor conv2d(const Tensor& x, const ConvSpec& spec) {
  require_rank(x, 3, "conv2d");
  spec.validate();
  const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
  const std::size_t oc = spec.out_channels(), kh = spec.kernel.dim(2), kw = spec.kernel.dim(3);
  const auto [sh, sw] = spec.stride;
  const auto [ph, pw] = spec.padding;
  if (spec.in_channels() != c) {
    throw ShapeError("conv2d: kernel expects " + std::to_string(spec.in_channels()) +
                     " input channels, input has " + std::to_string(c));
  }
  if (kh > h + 2 * ph || kw > w + 2 * pw) {
    throw ShapeError("conv2d: kernel " + shape_to_string(spec.kernel.shape()) +
                     " larger than padded input " + shape_to_string(x.shape()));
  }
  const std::size_t oh = (h + 2 * ph - kh) / sh + 1;
  const std::size_t ow = (w + 2 * pw - kw) / sw + 1;
  const std::size_t rows = c * kh * kw;
  const std::size_t cols = oh * ow;

  // im2col: cols[(ci, ky, kx)][(oy, ox)]
  Tensor patches(Shape{rows, cols});
  for (std::size_t ci = 0; ci < c; ++ci) {
    for (std::size_t ky = 0; ky < kh; ++ky) {
      for (std::size_t kx = 0; kx < kw; ++kx) {
        double* dst = patches.raw() + ((ci * kh + ky) * kw + kx) * cols;
        for (std::size_t oy = 0; oy < oh; ++oy) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * sh + ky) -
                                    static_cast<std::ptrdiff_t>(ph);
          for (std::size_t ox = 0; ox < ow; ++ox) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * sw + kx) -
                                      static_cast<std::ptrdiff_t>(pw);
            const bool inside = iy >= 0 && ix >= 0 && iy < static_cast<std::ptrdiff_t>(h) &&
                                ix < static_cast<std::ptrdiff_t>(w);
            dst[oy * ow + ox] = inside ? x.at(ci, static_cast<std::size_t>(iy),
                                              static_cast<std::size_t>(ix))
                                       : 0.0;
          }
        }
      }
    }
  }

  Tensor out(Shape{oc, oh, ow});
  kernels::active().gemm_accumulate(spec.kernel.raw(), patches.raw(), out.raw(), oc, rows, cols);
  const auto& k = kernels::active();
  for (std::size_t o = 0; o < oc; ++o) {
    k.scale_shift(out.raw() + o * cols, 1.0, spec.bias[o], out.raw() + o * cols, cols);
  }
  return out;
}

Tensor maxpool2d(const Tensor& x, const PoolSpec& pool) {
  require_rank(x, 3, "maxpool2d");
  const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
  const auto [kh, kw] = pool.window;
  const auto [sh, sw] = pool.stride;
  if (kh < 1 || kw < 1 || sh < 1 || sw < 1) throw ShapeError("maxpool2d: window and stride must be >= 1");
  if (kh > h || kw > w) {
    throw ShapeError("maxpool2d: window exceeds input " + shape_to_string(x.shape()));
  }
  const std::size_t oh = (h - kh) / sh + 1, ow = (w - kw) / sw + 1;
  Tensor out(Shape{c, oh, ow});
  for (std::size_t ci = 0; ci < c; ++ci) {
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox) {
        double m = x.at(ci, oy * sh, ox * sw);
        for (std::size_t ky = 0; ky < kh; ++ky)
          for (std::size_t kx = 0; kx < kw; ++kx)
            m = std::max(m, x.at(ci, oy * sh + ky, ox * sw + kx));
        out.at(ci, oy, ox) = m;
      }
    }
  }
  return out;
}

Tensor global_avg_pool(const Tensor& x) {
  require_rank(x, 2, "global_avg_pool");
  const std::size_t n = x.dim(0), d = x.dim(1);
  Tensor out(Shape{d});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) out[j] += x.at(i, j);
  for (std::size_t j = 0; j < d; ++j) out[j] /= static_cast<double>(n);
  return out;
}

Tensor affine(const Tensor& x, std::span<const double> scale, std::span<const double> shift,
              std::size_t axis) {
  const std::size_t channels = x.dim(axis);
  if (scale.size() != channels || shift.size() != channels) {
    throw ShapeError("affine: expected " + std::to_string(channels) +
                     " channel parameters, got scale " + std::to_string(scale.size()) +
                     " shift " + std::to_string(shift.size()));
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= x.dim(i);
  for (std::size_t i = axis + 1; i < x.rank(); ++i) inner *= x.dim(i);

  Tensor out(x.shape());
  const auto& k = kernels::active();
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t ch = 0; ch < channels; ++ch) {
      const std::size_t base = (o * channels + ch) * inner;
      if (inner == 1) {
        out[base] = x[base] * scale[ch] + shift[ch];
      } else {
        k.scale_shift(x.raw() + base, scale[ch], shift[ch], out.raw() + base, inner);
      }
    }
  }
  return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError("add: " + shape_to_string(a.shape()) + " vs " + shape_to_string(b.shape()));
  }
  Tensor out = a;
  kernels::active().add_inplace(b.raw(), out.raw(), out.size());
  return out;
}

Tensor subtract(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError("subtract: " + shape_to_string(a.shape()) + " vs " +
                     shape_to_string(b.shape()));
  }
  Tensor out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b[i];
  return out;
}

Tensor scale(const Tensor& x, double factor) {
  Tensor out(x.shape());
  kernels::active().scale_shift(x.raw(), factor, 0.0, out.raw(), x.size());
  return out;
}

Tensor relu(const Tensor& x) {
  Tensor out(x.shape());
  kernels::active().relu(x.raw(), out.raw(), x.size());
  return out;
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  require_rank(x, 2, "linear");
  require_rank(weight, 2, "linear");
  if (bias.rank() != 1 || bias.dim(0) != weight.dim(0)) {
    throw ShapeError("linear: bias " + shape_to_string(bias.shape()) + " for weight " +
                     shape_to_string(weight.shape()));
  }
  Tensor y = matmul(x, transpose(weight));
  const std::size_t n = y.dim(0), out = y.dim(1);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < out; ++j) y.at(i, j) += bias[j];
  return y;
}

Tensor column_block(const Tensor& x, std::size_t begin, std::size_t count) {
  require_rank(x, 2, "column_block");
  if (begin + count > x.dim(1)) throw ShapeError("column_block: range exceeds columns");
  const std::size_t n = x.dim(0);
  Tensor out(Shape{n, count});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < count; ++j) out.at(i, j) = x.at(i, begin + j);
  return out;
}

Tensor concat_columns(std::span<const Tensor> parts) {
  if (parts.empty()) throw ShapeError("concat_columns: nothing to concatenate");
  const std::size_t n = parts.front().dim(0);
  std::size_t total = 0;
  for (const auto& p : parts) {
    require_rank(p, 2, "concat_columns");
    if (p.dim(0) != n) throw ShapeError("concat_columns: row counts differ");
    total += p.dim(1);
  }
  Tensor out(Shape{n, total});
  std::size_t offset = 0;
  for (const auto& p : parts) {
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < p.dim(1); ++j) out.at(i, offset + j) = p.at(i, j);
    offset += p.dim(1);
  }
  return out;
}

Tensor stack(std::span<const Tensor> parts) {
  if (parts.empty()) throw ShapeError("stack: nothing to stack");
  Shape shape = parts.front().shape();
  std::vector<double> data;
  data.reserve(parts.size() * parts.front().size());
  for (const auto& p : parts) {
    if (p.shape() != shape) throw ShapeError("stack: shapes differ");
    data.insert(data.end(), p.data().begin(), p.data().end());
  }
  shape.insert(shape.begin(), parts.size());
  return Tensor(std::move(shape), std::move(data));
}

Tensor feature_map_to_tokens(const Tensor& x) {
  require_rank(x, 3, "feature_map_to_tokens");
  const std::size_t c = x.dim(0), hw = x.dim(1) * x.dim(2);
  Tensor out(Shape{hw, c});
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t p = 0; p < hw; ++p) out.at(p, ch) = x[ch * hw + p];
  return out;
}

double sum(const Tensor& x) {
  double s = 0.0;
  for (double v : x.data()) s += v;
  return s;
}

double max_abs(const Tensor& x) {
  double m = 0.0;
  for (double v : x.data()) m = std::max(m, std::abs(v));
  return m;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError("max_abs_diff: " + shape_to_string(a.shape()) + " vs " +
                     shape_to_string(b.shape()));
  }
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

std::size_t argmax(const Tensor& x) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < x.size(); ++i)
    if (x[i] > x[best]) best = i;
  return best;
}

bool all_finite(const Tensor& x) {
  return std::all_of(x.data().begin(), x.data().end(), [](double v) { return std::isfinite(v); });
}

}  // namespace spikedrive
