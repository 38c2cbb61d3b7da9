#pragma once

#include "bggan/graph.hpp"
#include "bggan/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <utility>
#include <vector>

namespace bggan {

namespace detail {

template <typename Scalar>
Var<Scalar> make_op(OpKind kind, Tensor4<Scalar> value, std::vector<Var<Scalar>> parents,
                    std::function<std::vector<Var<Scalar>>(const Var<Scalar>&)> bwd) {
    auto n = std::make_shared<Node<Scalar>>();
    n->value = std::move(value);
    n->kind = kind;
    if (grad_recording()) {
        bool any = false;
        for (const auto& p : parents) any = any || p.requires_grad();
        n->parents = std::move(parents);
        n->requires_grad = any;
        if (any) n->backward = std::move(bwd);
    }
    return Var<Scalar>(std::move(n));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise arithmetic

template <typename Scalar>
Var<Scalar> operator+(const Var<Scalar>& a, const Var<Scalar>& b) {
    require_same_shape(a.value(), b.value(), "add");
    Tensor4<Scalar> out(a.shape());
    out.data = a.value().data + b.value().data;
    return detail::make_op<Scalar>(OpKind::Add, std::move(out), {a, b},
                                   [](const Var<Scalar>& g) {
                                       return std::vector<Var<Scalar>>{g, g};
                                   });
}

template <typename Scalar>
Var<Scalar> scalar_mul(const Var<Scalar>& x, Scalar s) {
    Tensor4<Scalar> out(x.shape());
    out.data = x.value().data * s;
    return detail::make_op<Scalar>(OpKind::ScalarMul, std::move(out), {x},
                                   [s](const Var<Scalar>& g) {
                                       return std::vector<Var<Scalar>>{scalar_mul(g, s)};
                                   });
}

template <typename Scalar>
Var<Scalar> operator-(const Var<Scalar>& a, const Var<Scalar>& b) {
    require_same_shape(a.value(), b.value(), "sub");
    Tensor4<Scalar> out(a.shape());
    out.data = a.value().data - b.value().data;
    return detail::make_op<Scalar>(OpKind::Sub, std::move(out), {a, b},
                                   [](const Var<Scalar>& g) {
                                       return std::vector<Var<Scalar>>{g, scalar_mul(g, Scalar(-1))};
                                   });
}

template <typename Scalar>
Var<Scalar> operator*(const Var<Scalar>& a, const Var<Scalar>& b) {
    require_same_shape(a.value(), b.value(), "mul");
    Tensor4<Scalar> out(a.shape());
    out.data = a.value().data * b.value().data;
    return detail::make_op<Scalar>(OpKind::Mul, std::move(out), {a, b},
                                   [a, b](const Var<Scalar>& g) {
                                       return std::vector<Var<Scalar>>{g * b, g * a};
                                   });
}

template <typename Scalar>
Var<Scalar> operator/(const Var<Scalar>& a, const Var<Scalar>& b) {
    require_same_shape(a.value(), b.value(), "div");
    Tensor4<Scalar> out(a.shape());
    out.data = a.value().data / b.value().data;
    return detail::make_op<Scalar>(
        OpKind::Div, std::move(out), {a, b}, [a, b](const Var<Scalar>& g) {
            Var<Scalar> da = g / b;
            Var<Scalar> db = scalar_mul((g * a) / (b * b), Scalar(-1));
            return std::vector<Var<Scalar>>{da, db};
        });
}

template <typename Scalar>
Var<Scalar> scalar_add(const Var<Scalar>& x, Scalar s) {
    Tensor4<Scalar> out(x.shape());
    out.data = x.value().data + s;
    return detail::make_op<Scalar>(OpKind::ScalarAdd, std::move(out), {x},
                                   [](const Var<Scalar>& g) {
                                       return std::vector<Var<Scalar>>{g};
                                   });
}

template <typename Scalar>
Var<Scalar> vsqrt(const Var<Scalar>& x) {
    Tensor4<Scalar> out(x.shape());
    out.data = x.value().data.sqrt();
    return detail::make_op<Scalar>(OpKind::Sqrt, std::move(out), {x},
                                   [x](const Var<Scalar>& g) {
                                       // d sqrt(x) = g / (2 sqrt(x))
                                       return std::vector<Var<Scalar>>{
                                           scalar_mul(g / vsqrt(x), Scalar(0.5))};
                                   });
}

/// Multiply by a fixed (non-differentiated) mask. Used by the backward paths
/// of piecewise-linear activations.
template <typename Scalar>
Var<Scalar> mask_mul(const Var<Scalar>& x, Tensor4<Scalar> mask) {
    require_same_shape(x.value(), mask, "mask_mul");
    Tensor4<Scalar> out(x.shape());
    out.data = x.value().data * mask.data;
    return detail::make_op<Scalar>(OpKind::MaskMul, std::move(out), {x},
                                   [mask](const Var<Scalar>& g) {
                                       return std::vector<Var<Scalar>>{mask_mul(g, mask)};
                                   });
}

template <typename Scalar>
Var<Scalar> vabs(const Var<Scalar>& x) {
    Tensor4<Scalar> out(x.shape());
    out.data = x.value().data.abs();
    return detail::make_op<Scalar>(OpKind::Abs, std::move(out), {x},
                                   [x](const Var<Scalar>& g) {
                                       Tensor4<Scalar> sign(x.shape());
                                       sign.data = x.value().data.sign();
                                       return std::vector<Var<Scalar>>{mask_mul(g, std::move(sign))};
                                   });
}

template <typename Scalar>
Var<Scalar> vtanh(const Var<Scalar>& x) {
    Tensor4<Scalar> out(x.shape());
    out.data = x.value().data.tanh();
    return detail::make_op<Scalar>(OpKind::Tanh, std::move(out), {x},
                                   [x](const Var<Scalar>& g) {
                                       Var<Scalar> t = vtanh(x);
                                       // g * (1 - tanh^2)
                                       Var<Scalar> d = g - g * (t * t);
                                       return std::vector<Var<Scalar>>{d};
                                   });
}

template <typename Scalar>
Var<Scalar> relu(const Var<Scalar>& x) {
    Tensor4<Scalar> out(x.shape());
    out.data = x.value().data.max(Scalar(0));
    return detail::make_op<Scalar>(OpKind::Relu, std::move(out), {x},
                                   [x](const Var<Scalar>& g) {
                                       Tensor4<Scalar> mask(x.shape());
                                       mask.data =
                                           (x.value().data > Scalar(0)).template cast<Scalar>();
                                       return std::vector<Var<Scalar>>{mask_mul(g, std::move(mask))};
                                   });
}

template <typename Scalar>
Var<Scalar> leaky_relu(const Var<Scalar>& x, Scalar slope) {
    Tensor4<Scalar> out(x.shape());
    out.data = x.value().data.max(x.value().data * slope);
    return detail::make_op<Scalar>(
        OpKind::LeakyRelu, std::move(out), {x}, [x, slope](const Var<Scalar>& g) {
            Tensor4<Scalar> mask(x.shape());
            mask.data = (x.value().data > Scalar(0)).template cast<Scalar>() * (Scalar(1) - slope) +
                        slope;
            return std::vector<Var<Scalar>>{mask_mul(g, std::move(mask))};
        });
}

template <typename Scalar>
Var<Scalar> clamp(const Var<Scalar>& x, Scalar lo, Scalar hi) {
    Tensor4<Scalar> out(x.shape());
    out.data = x.value().data.max(lo).min(hi);
    return detail::make_op<Scalar>(
        OpKind::Clamp, std::move(out), {x}, [x, lo, hi](const Var<Scalar>& g) {
            Tensor4<Scalar> mask(x.shape());
            mask.data = ((x.value().data >= lo) && (x.value().data <= hi)).template cast<Scalar>();
            return std::vector<Var<Scalar>>{mask_mul(g, std::move(mask))};
        });
}

// ---------------------------------------------------------------------------
// Broadcast / reduce

inline bool bcast_compatible(const Shape4& from, const Shape4& to) {
    for (int i = 0; i < 4; ++i)
        if (from[i] != to[i] && from[i] != 1) return false;
    return true;
}

template <typename Scalar>
Tensor4<Scalar> bcast_to_value(const Tensor4<Scalar>& x, const Shape4& to) {
    Tensor4<Scalar> out(to);
    const Shape4& f = x.shape;
    for (Index n = 0; n < to[0]; ++n)
        for (Index c = 0; c < to[1]; ++c)
            for (Index h = 0; h < to[2]; ++h)
                for (Index w = 0; w < to[3]; ++w)
                    out(n, c, h, w) = x(f[0] == 1 ? 0 : n, f[1] == 1 ? 0 : c, f[2] == 1 ? 0 : h,
                                        f[3] == 1 ? 0 : w);
    return out;
}

template <typename Scalar>
Tensor4<Scalar> sum_to_value(const Tensor4<Scalar>& x, const Shape4& to) {
    Tensor4<Scalar> out = Tensor4<Scalar>::zeros(to);
    const Shape4& f = x.shape;
    for (Index n = 0; n < f[0]; ++n)
        for (Index c = 0; c < f[1]; ++c)
            for (Index h = 0; h < f[2]; ++h)
                for (Index w = 0; w < f[3]; ++w)
                    out(to[0] == 1 ? 0 : n, to[1] == 1 ? 0 : c, to[2] == 1 ? 0 : h,
                        to[3] == 1 ? 0 : w) += x(n, c, h, w);
    return out;
}

template <typename Scalar>
Var<Scalar> sum_to(const Var<Scalar>& x, const Shape4& to);

/// Expand size-1 axes of x up to `to`.
template <typename Scalar>
Var<Scalar> bcast_to(const Var<Scalar>& x, const Shape4& to) {
    if (!bcast_compatible(x.shape(), to))
        throw ShapeError("bcast_to: cannot broadcast " + shape_str(x.shape()) + " to " +
                         shape_str(to));
    Shape4 from = x.shape();
    return detail::make_op<Scalar>(OpKind::BcastTo, bcast_to_value(x.value(), to), {x},
                                   [from](const Var<Scalar>& g) {
                                       return std::vector<Var<Scalar>>{sum_to(g, from)};
                                   });
}

/// Sum x over the axes collapsed to size 1 in `to` (axis-reduction primitive).
template <typename Scalar>
Var<Scalar> sum_to(const Var<Scalar>& x, const Shape4& to) {
    if (!bcast_compatible(to, x.shape()))
        throw ShapeError("sum_to: cannot reduce " + shape_str(x.shape()) + " to " + shape_str(to));
    Shape4 from = x.shape();
    return detail::make_op<Scalar>(OpKind::SumTo, sum_to_value(x.value(), to), {x},
                                   [from](const Var<Scalar>& g) {
                                       return std::vector<Var<Scalar>>{bcast_to(g, from)};
                                   });
}

template <typename Scalar>
Var<Scalar> sum_all(const Var<Scalar>& x) {
    return sum_to(x, {1, 1, 1, 1});
}

template <typename Scalar>
Var<Scalar> mean_all(const Var<Scalar>& x) {
    return scalar_mul(sum_all(x), Scalar(1) / Scalar(x.value().numel()));
}

// ---------------------------------------------------------------------------
// Shape manipulation

template <typename Scalar>
Var<Scalar> reshape(const Var<Scalar>& x, const Shape4& to) {
    if (shape_numel(to) != x.value().numel())
        throw ShapeError("reshape: numel mismatch " + shape_str(x.shape()) + " to " + shape_str(to));
    Tensor4<Scalar> out(to);
    out.data = x.value().data;
    Shape4 from = x.shape();
    return detail::make_op<Scalar>(OpKind::Reshape, std::move(out), {x},
                                   [from](const Var<Scalar>& g) {
                                       return std::vector<Var<Scalar>>{reshape(g, from)};
                                   });
}

template <typename Scalar>
Var<Scalar> slice_channels(const Var<Scalar>& x, Index c0, Index len);

template <typename Scalar>
Var<Scalar> concat_channels(const std::vector<Var<Scalar>>& parts) {
    if (parts.empty()) throw ShapeError("concat_channels: no inputs");
    Shape4 s = parts[0].shape();
    Index ctot = 0;
    for (const auto& p : parts) {
        const Shape4& ps = p.shape();
        if (ps[0] != s[0] || ps[2] != s[2] || ps[3] != s[3])
            throw ShapeError("concat_channels: incompatible shapes");
        ctot += ps[1];
    }
    Tensor4<Scalar> out({s[0], ctot, s[2], s[3]});
    Index coff = 0;
    for (const auto& p : parts) {
        const Tensor4<Scalar>& pv = p.value();
        for (Index n = 0; n < s[0]; ++n)
            for (Index c = 0; c < pv.shape[1]; ++c)
                for (Index h = 0; h < s[2]; ++h)
                    for (Index w = 0; w < s[3]; ++w) out(n, coff + c, h, w) = pv(n, c, h, w);
        coff += pv.shape[1];
    }
    std::vector<Index> widths;
    for (const auto& p : parts) widths.push_back(p.shape()[1]);
    return detail::make_op<Scalar>(OpKind::ConcatC, std::move(out), parts,
                                   [widths](const Var<Scalar>& g) {
                                       std::vector<Var<Scalar>> grads;
                                       Index off = 0;
                                       for (Index wdt : widths) {
                                           grads.push_back(slice_channels(g, off, wdt));
                                           off += wdt;
                                       }
                                       return grads;
                                   });
}

template <typename Scalar>
Var<Scalar> slice_channels(const Var<Scalar>& x, Index c0, Index len) {
    const Shape4& s = x.shape();
    if (c0 < 0 || len < 1 || c0 + len > s[1]) throw ShapeError("slice_channels: range out of bounds");
    Tensor4<Scalar> out({s[0], len, s[2], s[3]});
    for (Index n = 0; n < s[0]; ++n)
        for (Index c = 0; c < len; ++c)
            for (Index h = 0; h < s[2]; ++h)
                for (Index w = 0; w < s[3]; ++w) out(n, c, h, w) = x.value()(n, c0 + c, h, w);
    Shape4 from = s;
    return detail::make_op<Scalar>(
        OpKind::SliceC, std::move(out), {x}, [from, c0, len](const Var<Scalar>& g) {
            // Embed the slice gradient back into a zero tensor of the source
            // shape via concatenation with constant zero blocks.
            std::vector<Var<Scalar>> blocks;
            if (c0 > 0)
                blocks.push_back(
                    make_constant(Tensor4<Scalar>::zeros({from[0], c0, from[2], from[3]})));
            blocks.push_back(g);
            Index rest = from[1] - c0 - len;
            if (rest > 0)
                blocks.push_back(
                    make_constant(Tensor4<Scalar>::zeros({from[0], rest, from[2], from[3]})));
            return std::vector<Var<Scalar>>{concat_channels(blocks)};
        });
}

// ---------------------------------------------------------------------------
// Dense matrix product on (1,1,rows,cols) tensors

template <typename Scalar>
Var<Scalar> transpose2d(const Var<Scalar>& x) {
    const Shape4& s = x.shape();
    if (s[0] != 1 || s[1] != 1) throw ShapeError("transpose2d: expects (1,1,r,c)");
    Tensor4<Scalar> out({1, 1, s[3], s[2]});
    for (Index r = 0; r < s[2]; ++r)
        for (Index c = 0; c < s[3]; ++c) out(0, 0, c, r) = x.value()(0, 0, r, c);
    return detail::make_op<Scalar>(OpKind::Transpose, std::move(out), {x},
                                   [](const Var<Scalar>& g) {
                                       return std::vector<Var<Scalar>>{transpose2d(g)};
                                   });
}

template <typename Scalar>
Var<Scalar> matmul(const Var<Scalar>& a, const Var<Scalar>& b) {
    const Shape4& sa = a.shape();
    const Shape4& sb = b.shape();
    if (sa[0] != 1 || sa[1] != 1 || sb[0] != 1 || sb[1] != 1 || sa[3] != sb[2])
        throw ShapeError("matmul: incompatible shapes " + shape_str(sa) + " x " + shape_str(sb));
    using RM = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    Tensor4<Scalar> out({1, 1, sa[2], sb[3]});
    Eigen::Map<const RM> A(a.value().data.data(), sa[2], sa[3]);
    Eigen::Map<const RM> B(b.value().data.data(), sb[2], sb[3]);
    Eigen::Map<RM>(out.data.data(), sa[2], sb[3]).noalias() = A * B;
    return detail::make_op<Scalar>(OpKind::MatMul, std::move(out), {a, b},
                                   [a, b](const Var<Scalar>& g) {
                                       Var<Scalar> da = matmul(g, transpose2d(b));
                                       Var<Scalar> db = matmul(transpose2d(a), g);
                                       return std::vector<Var<Scalar>>{da, db};
                                   });
}

// ---------------------------------------------------------------------------
// Convolution lowering: im2col / col2im and the cols<->NCHW layout permute

struct ConvGeom {
    Index n = 0, c = 0, h = 0, w = 0;  // input image
    Index kh = 1, kw = 1, sh = 1, sw = 1, ph = 0, pw = 0;

    Index oh() const { return (h + 2 * ph - kh) / sh + 1; }
    Index ow() const { return (w + 2 * pw - kw) / sw + 1; }

    void validate() const {
        if (n < 1 || c < 1 || h < 1 || w < 1 || kh < 1 || kw < 1 || sh < 1 || sw < 1 || ph < 0 ||
            pw < 0 || h + 2 * ph < kh || w + 2 * pw < kw)
            throw ShapeError("conv geometry invalid for input " + shape_str({n, c, h, w}));
    }
};

template <typename Scalar>
Var<Scalar> col2im(const Var<Scalar>& cols, const ConvGeom& geom);

/// Lower image patches to a (c*kh*kw) x (n*oh*ow) matrix; out-of-bounds
/// positions read as zero (zero padding).
template <typename Scalar>
Var<Scalar> im2col(const Var<Scalar>& x, const ConvGeom& geom) {
    geom.validate();
    if (x.shape() != Shape4{geom.n, geom.c, geom.h, geom.w})
        throw ShapeError("im2col: input " + shape_str(x.shape()) + " does not match geometry");
    const Index oh = geom.oh(), ow = geom.ow();
    Tensor4<Scalar> out = Tensor4<Scalar>::zeros({1, 1, geom.c * geom.kh * geom.kw, geom.n * oh * ow});
    const Tensor4<Scalar>& xv = x.value();
    for (Index ci = 0; ci < geom.c; ++ci)
        for (Index ky = 0; ky < geom.kh; ++ky)
            for (Index kx = 0; kx < geom.kw; ++kx) {
                const Index r = (ci * geom.kh + ky) * geom.kw + kx;
                for (Index ni = 0; ni < geom.n; ++ni)
                    for (Index oy = 0; oy < oh; ++oy) {
                        const Index iy = oy * geom.sh - geom.ph + ky;
                        if (iy < 0 || iy >= geom.h) continue;
                        for (Index ox = 0; ox < ow; ++ox) {
                            const Index ix = ox * geom.sw - geom.pw + kx;
                            if (ix < 0 || ix >= geom.w) continue;
                            out(0, 0, r, (ni * oh + oy) * ow + ox) = xv(ni, ci, iy, ix);
                        }
                    }
            }
    return detail::make_op<Scalar>(OpKind::Im2Col, std::move(out), {x},
                                   [geom](const Var<Scalar>& g) {
                                       return std::vector<Var<Scalar>>{col2im(g, geom)};
                                   });
}

/// Adjoint of im2col: scatter-add patch columns back into an image.
template <typename Scalar>
Var<Scalar> col2im(const Var<Scalar>& cols, const ConvGeom& geom) {
    geom.validate();
    const Index oh = geom.oh(), ow = geom.ow();
    if (cols.shape() != Shape4{1, 1, geom.c * geom.kh * geom.kw, geom.n * oh * ow})
        throw ShapeError("col2im: input " + shape_str(cols.shape()) + " does not match geometry");
    Tensor4<Scalar> out = Tensor4<Scalar>::zeros({geom.n, geom.c, geom.h, geom.w});
    const Tensor4<Scalar>& cv = cols.value();
    for (Index ci = 0; ci < geom.c; ++ci)
        for (Index ky = 0; ky < geom.kh; ++ky)
            for (Index kx = 0; kx < geom.kw; ++kx) {
                const Index r = (ci * geom.kh + ky) * geom.kw + kx;
                for (Index ni = 0; ni < geom.n; ++ni)
                    for (Index oy = 0; oy < oh; ++oy) {
                        const Index iy = oy * geom.sh - geom.ph + ky;
                        if (iy < 0 || iy >= geom.h) continue;
                        for (Index ox = 0; ox < ow; ++ox) {
                            const Index ix = ox * geom.sw - geom.pw + kx;
                            if (ix < 0 || ix >= geom.w) continue;
                            out(ni, ci, iy, ix) += cv(0, 0, r, (ni * oh + oy) * ow + ox);
                        }
                    }
            }
    return detail::make_op<Scalar>(OpKind::Col2Im, std::move(out), {cols},
                                   [geom](const Var<Scalar>& g) {
                                       return std::vector<Var<Scalar>>{im2col(g, geom)};
                                   });
}

template <typename Scalar>
Var<Scalar> nchw_to_cols(const Var<Scalar>& x);

/// (1,1,C,N*h*w) column layout -> (N,C,h,w).
template <typename Scalar>
Var<Scalar> cols_to_nchw(const Var<Scalar>& x, Index n, Index h, Index w) {
    const Shape4& s = x.shape();
    if (s[0] != 1 || s[1] != 1 || s[3] != n * h * w)
        throw ShapeError("cols_to_nchw: bad input shape " + shape_str(s));
    const Index c = s[2];
    Tensor4<Scalar> out({n, c, h, w});
    for (Index ni = 0; ni < n; ++ni)
        for (Index ci = 0; ci < c; ++ci)
            for (Index y = 0; y < h; ++y)
                for (Index xx = 0; xx < w; ++xx)
                    out(ni, ci, y, xx) = x.value()(0, 0, ci, (ni * h + y) * w + xx);
    return detail::make_op<Scalar>(OpKind::ColsToNCHW, std::move(out), {x},
                                   [](const Var<Scalar>& g) {
                                       return std::vector<Var<Scalar>>{nchw_to_cols(g)};
                                   });
}

/// (N,C,h,w) -> (1,1,C,N*h*w) column layout.
template <typename Scalar>
Var<Scalar> nchw_to_cols(const Var<Scalar>& x) {
    const Shape4& s = x.shape();
    Tensor4<Scalar> out({1, 1, s[1], s[0] * s[2] * s[3]});
    for (Index ni = 0; ni < s[0]; ++ni)
        for (Index ci = 0; ci < s[1]; ++ci)
            for (Index y = 0; y < s[2]; ++y)
                for (Index xx = 0; xx < s[3]; ++xx)
                    out(0, 0, ci, (ni * s[2] + y) * s[3] + xx) = x.value()(ni, ci, y, xx);
    Index n = s[0], h = s[2], w = s[3];
    return detail::make_op<Scalar>(OpKind::NCHWToCols, std::move(out), {x},
                                   [n, h, w](const Var<Scalar>& g) {
                                       return std::vector<Var<Scalar>>{cols_to_nchw(g, n, h, w)};
                                   });
}

// ---------------------------------------------------------------------------
// Pooling

struct PoolGeom {
    Index kh = 1, kw = 1, sh = 1, sw = 1;
};

template <typename Scalar>
Var<Scalar> avgpool_adjoint(const Var<Scalar>& g, const Shape4& in_shape, const PoolGeom& p);

/// Spatial average pooling, no padding.
template <typename Scalar>
Var<Scalar> avgpool(const Var<Scalar>& x, const PoolGeom& p) {
    const Shape4& s = x.shape();
    if (p.kh < 1 || p.kw < 1 || p.sh < 1 || p.sw < 1 || s[2] < p.kh || s[3] < p.kw)
        throw ShapeError("avgpool: window exceeds input " + shape_str(s));
    const Index oh = (s[2] - p.kh) / p.sh + 1;
    const Index ow = (s[3] - p.kw) / p.sw + 1;
    Tensor4<Scalar> out({s[0], s[1], oh, ow});
    const Scalar inv = Scalar(1) / Scalar(p.kh * p.kw);
    for (Index n = 0; n < s[0]; ++n)
        for (Index c = 0; c < s[1]; ++c)
            for (Index oy = 0; oy < oh; ++oy)
                for (Index ox = 0; ox < ow; ++ox) {
                    Scalar acc = 0;
                    for (Index ky = 0; ky < p.kh; ++ky)
                        for (Index kx = 0; kx < p.kw; ++kx)
                            acc += x.value()(n, c, oy * p.sh + ky, ox * p.sw + kx);
                    out(n, c, oy, ox) = acc * inv;
                }
    Shape4 in_shape = s;
    return detail::make_op<Scalar>(OpKind::AvgPool, std::move(out), {x},
                                   [in_shape, p](const Var<Scalar>& g) {
                                       return std::vector<Var<Scalar>>{
                                           avgpool_adjoint(g, in_shape, p)};
                                   });
}

/// Exact adjoint of avgpool (uniform scatter of g / window size).
template <typename Scalar>
Var<Scalar> avgpool_adjoint(const Var<Scalar>& g, const Shape4& in_shape, const PoolGeom& p) {
    const Shape4& s = g.shape();
    Tensor4<Scalar> out = Tensor4<Scalar>::zeros(in_shape);
    const Scalar inv = Scalar(1) / Scalar(p.kh * p.kw);
    for (Index n = 0; n < s[0]; ++n)
        for (Index c = 0; c < s[1]; ++c)
            for (Index oy = 0; oy < s[2]; ++oy)
                for (Index ox = 0; ox < s[3]; ++ox) {
                    const Scalar v = g.value()(n, c, oy, ox) * inv;
                    for (Index ky = 0; ky < p.kh; ++ky)
                        for (Index kx = 0; kx < p.kw; ++kx)
                            out(n, c, oy * p.sh + ky, ox * p.sw + kx) += v;
                }
    return detail::make_op<Scalar>(OpKind::AvgPoolGrad, std::move(out), {g},
                                   [p](const Var<Scalar>& gg) {
                                       return std::vector<Var<Scalar>>{avgpool(gg, p)};
                                   });
}

/// Max pooling (used by the pretrained feature-extractor stack).
template <typename Scalar>
Var<Scalar> maxpool(const Var<Scalar>& x, Index k, Index stride) {
    const Shape4& s = x.shape();
    if (s[2] < k || s[3] < k) throw ShapeError("maxpool: window exceeds input");
    const Index oh = (s[2] - k) / stride + 1;
    const Index ow = (s[3] - k) / stride + 1;
    Tensor4<Scalar> out({s[0], s[1], oh, ow});
    auto argmax = std::make_shared<std::vector<Index>>(out.numel());
    Index oi = 0;
    for (Index n = 0; n < s[0]; ++n)
        for (Index c = 0; c < s[1]; ++c)
            for (Index oy = 0; oy < oh; ++oy)
                for (Index ox = 0; ox < ow; ++ox, ++oi) {
                    Scalar best = x.value()(n, c, oy * stride, ox * stride);
                    Index best_idx = ((n * s[1] + c) * s[2] + oy * stride) * s[3] + ox * stride;
                    for (Index ky = 0; ky < k; ++ky)
                        for (Index kx = 0; kx < k; ++kx) {
                            const Index iy = oy * stride + ky, ix = ox * stride + kx;
                            const Scalar v = x.value()(n, c, iy, ix);
                            if (v > best) {
                                best = v;
                                best_idx = ((n * s[1] + c) * s[2] + iy) * s[3] + ix;
                            }
                        }
                    out.data[oi] = best;
                    (*argmax)[oi] = best_idx;
                }
    Shape4 in_shape = s;
    return detail::make_op<Scalar>(
        OpKind::MaxPool, std::move(out), {x}, [argmax, in_shape](const Var<Scalar>& g) {
            // Scatter by saved argmax; linear in g so a constant-index scatter
            // (itself a MaskMul-free data movement) is a valid graph op.
            Tensor4<Scalar> gx = Tensor4<Scalar>::zeros(in_shape);
            for (Index i = 0; i < g.value().numel(); ++i) gx.data[(*argmax)[i]] += g.value().data[i];
            // First-order only: gradient w.r.t. g of this scatter is the
            // gather, which the feature-extractor path never needs.
            return std::vector<Var<Scalar>>{make_constant(std::move(gx))};
        });
}

// ---------------------------------------------------------------------------
// Depthwise convolution with a fixed kernel (SSIM windows)

/// Convolve every channel with the same fixed 2D kernel (correlation, zero
/// padding `pad`, stride 1). The kernel is not a differentiation target.
template <typename Scalar>
Var<Scalar> dwconv_fixed(const Var<Scalar>& x, const Tensor4<Scalar>& kernel, Index pad) {
    const Shape4& ks = kernel.shape;
    if (ks[0] != 1 || ks[1] != 1 || ks[2] != ks[3])
        throw ShapeError("dwconv_fixed: kernel must be square (1,1,k,k)");
    const Index kh = ks[2], kw = ks[3];
    const Shape4& s = x.shape();
    if (s[2] + 2 * pad < kh || s[3] + 2 * pad < kw)
        throw ShapeError("dwconv_fixed: input smaller than kernel");
    const Index oh = s[2] + 2 * pad - kh + 1;
    const Index ow = s[3] + 2 * pad - kw + 1;
    Tensor4<Scalar> out({s[0], s[1], oh, ow});
    for (Index n = 0; n < s[0]; ++n)
        for (Index c = 0; c < s[1]; ++c)
            for (Index oy = 0; oy < oh; ++oy)
                for (Index ox = 0; ox < ow; ++ox) {
                    Scalar acc = 0;
                    for (Index ky = 0; ky < kh; ++ky) {
                        const Index iy = oy - pad + ky;
                        if (iy < 0 || iy >= s[2]) continue;
                        for (Index kx = 0; kx < kw; ++kx) {
                            const Index ix = ox - pad + kx;
                            if (ix < 0 || ix >= s[3]) continue;
                            acc += kernel(0, 0, ky, kx) * x.value()(n, c, iy, ix);
                        }
                    }
                    out(n, c, oy, ox) = acc;
                }
    Tensor4<Scalar> flipped({1, 1, kh, kw});
    for (Index ky = 0; ky < kh; ++ky)
        for (Index kx = 0; kx < kw; ++kx)
            flipped(0, 0, ky, kx) = kernel(0, 0, kh - 1 - ky, kw - 1 - kx);
    return detail::make_op<Scalar>(OpKind::DwConv, std::move(out), {x},
                                   [flipped, kh, pad](const Var<Scalar>& g) {
                                       return std::vector<Var<Scalar>>{
                                           dwconv_fixed(g, flipped, kh - 1 - pad)};
                                   });
}

}  // namespace bggan
