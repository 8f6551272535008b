#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "attzoom/errors.hpp"

namespace az {

using i64 = std::int64_t;

// Dense rank-4 tensor, row-major N,C,H,W, 64-bit floats.
// Immutable by convention once handed to another module; ops return fresh tensors.
class Tensor {
  public:
    Tensor() : dims_{0, 0, 0, 0} {}
    Tensor(i64 n, i64 c, i64 h, i64 w, double fill = 0.0)
        : dims_{n, c, h, w}, data_(static_cast<size_t>(check_extents(n, c, h, w)), fill) {}

    static Tensor scalar(double v) {
        Tensor t(1, 1, 1, 1);
        t.data_[0] = v;
        return t;
    }

    i64 n() const { return dims_[0]; }
    i64 c() const { return dims_[1]; }
    i64 h() const { return dims_[2]; }
    i64 w() const { return dims_[3]; }
    i64 dim(int i) const { return dims_[static_cast<size_t>(i)]; }
    const std::array<i64, 4>& dims() const { return dims_; }

    i64 numel() const { return static_cast<i64>(data_.size()); }
    bool same_shape(const Tensor& o) const { return dims_ == o.dims_; }

    double& at(i64 n, i64 c, i64 h, i64 w) {
        return data_[static_cast<size_t>(((n * dims_[1] + c) * dims_[2] + h) * dims_[3] + w)];
    }
    double at(i64 n, i64 c, i64 h, i64 w) const {
        return data_[static_cast<size_t>(((n * dims_[1] + c) * dims_[2] + h) * dims_[3] + w)];
    }
    double& operator[](i64 i) { return data_[static_cast<size_t>(i)]; }
    double operator[](i64 i) const { return data_[static_cast<size_t>(i)]; }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }

    std::string shape_str() const;

    bool all_finite() const;
    double sum() const;
    double max_abs() const;

    // Same shape and elementwise == (so -0.0 matches 0.0).
    bool equals(const Tensor& o) const;

  private:
    static i64 check_extents(i64 n, i64 c, i64 h, i64 w);

    std::array<i64, 4> dims_;
    std::vector<double> data_;
};

// Flat binary format: 16-byte header of four little-endian uint32 extents,
// then numel little-endian float64 values.
void write_tensor(const std::string& path, const Tensor& t);
Tensor read_tensor(const std::string& path);

}  // namespace az
