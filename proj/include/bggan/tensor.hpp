#pragma once

#include <Eigen/Core>

#include <array>
#include <initializer_list>
#include <sstream>
#include <stdexcept>
#include <string>

namespace bggan {

using Index = Eigen::Index;
using Shape4 = std::array<Index, 4>;  // (batch, channel, height, width)

struct ShapeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct InvalidInputError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline std::string shape_str(const Shape4& s) {
    std::ostringstream os;
    os << "(" << s[0] << "," << s[1] << "," << s[2] << "," << s[3] << ")";
    return os.str();
}

inline Index shape_numel(const Shape4& s) { return s[0] * s[1] * s[2] * s[3]; }

/// Dense rank-4 array in NCHW order, w fastest. Backed by a flat Eigen array
/// so elementwise work stays expression-based and matmuls can Map slices.
template <typename Scalar>
struct Tensor4 {
    using Flat = Eigen::Array<Scalar, Eigen::Dynamic, 1>;

    Shape4 shape{0, 0, 0, 0};
    Flat data;

    Tensor4() = default;
    explicit Tensor4(const Shape4& s) : shape(s), data(shape_numel(s)) {}
    Tensor4(const Shape4& s, Scalar fill) : shape(s), data(Flat::Constant(shape_numel(s), fill)) {}

    static Tensor4 zeros(const Shape4& s) { return Tensor4(s, Scalar(0)); }
    static Tensor4 ones(const Shape4& s) { return Tensor4(s, Scalar(1)); }
    static Tensor4 scalar(Scalar v) { return Tensor4({1, 1, 1, 1}, v); }

    Index numel() const { return data.size(); }
    Index batch() const { return shape[0]; }
    Index channels() const { return shape[1]; }
    Index height() const { return shape[2]; }
    Index width() const { return shape[3]; }

    Scalar& operator()(Index n, Index c, Index h, Index w) {
        return data[((n * shape[1] + c) * shape[2] + h) * shape[3] + w];
    }
    Scalar operator()(Index n, Index c, Index h, Index w) const {
        return data[((n * shape[1] + c) * shape[2] + h) * shape[3] + w];
    }

    bool same_shape(const Tensor4& o) const { return shape == o.shape; }

    template <typename Other>
    Tensor4<Other> cast() const {
        Tensor4<Other> out(shape);
        out.data = data.template cast<Other>();
        return out;
    }
};

using Tensor4f = Tensor4<float>;
using Tensor4d = Tensor4<double>;

template <typename Scalar>
void require_same_shape(const Tensor4<Scalar>& a, const Tensor4<Scalar>& b, const char* what) {
    if (!a.same_shape(b))
        throw ShapeError(std::string(what) + ": shape mismatch " + shape_str(a.shape) + " vs " +
                         shape_str(b.shape));
}

}  // namespace bggan
