#include "attzoom/tensor.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>

namespace az {

i64 Tensor::check_extents(i64 n, i64 c, i64 h, i64 w) {
    if (n < 0 || c < 0 || h < 0 || w < 0) {
        throw ShapeError("negative tensor extent");
    }
    return n * c * h * w;
}

std::string Tensor::shape_str() const {
    std::ostringstream os;
    os << "[" << dims_[0] << "," << dims_[1] << "," << dims_[2] << "," << dims_[3] << "]";
    return os.str();
}

bool Tensor::all_finite() const {
    for (double v : data_) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

double Tensor::sum() const {
    double s = 0.0;
    for (double v : data_) s += v;
    return s;
}

double Tensor::max_abs() const {
    double m = 0.0;
    for (double v : data_) m = std::max(m, std::abs(v));
    return m;
}

bool Tensor::equals(const Tensor& o) const {
    if (dims_ != o.dims_) return false;
    for (size_t i = 0; i < data_.size(); ++i) {
        if (data_[i] != o.data_[i]) return false;
    }
    return true;
}

namespace {

void put_u32le(std::ostream& os, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                          static_cast<unsigned char>((v >> 8) & 0xff),
                          static_cast<unsigned char>((v >> 16) & 0xff),
                          static_cast<unsigned char>((v >> 24) & 0xff)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32le(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace

void write_tensor(const std::string& path, const Tensor& t) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open for write: " + path);
    for (int i = 0; i < 4; ++i) put_u32le(os, static_cast<std::uint32_t>(t.dim(i)));
    static_assert(std::numeric_limits<double>::is_iec559 && sizeof(double) == 8);
    // Host is little-endian; doubles are written as-is.
    os.write(reinterpret_cast<const char*>(t.data()), static_cast<std::streamsize>(t.numel() * 8));
    if (!os) throw IoError("write failed: " + path);
}

Tensor read_tensor(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open for read: " + path);
    std::uint32_t d[4];
    for (auto& v : d) v = get_u32le(is);
    if (!is) throw FormatError("truncated tensor header: " + path);
    Tensor t(d[0], d[1], d[2], d[3]);
    is.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(t.numel() * 8));
    if (is.gcount() != static_cast<std::streamsize>(t.numel() * 8)) {
        throw FormatError("truncated tensor payload: " + path);
    }
    return t;
}

}  // namespace az
