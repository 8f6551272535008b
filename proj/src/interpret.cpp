#include "attzoom/interpret.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace az::interpret {

namespace {

Tensor max_normalize(Tensor t) {
    double mx = 0.0;
    for (i64 i = 0; i < t.numel(); ++i) mx = std::max(mx, t[i]);
    if (mx > 0.0) {
        for (i64 i = 0; i < t.numel(); ++i) t[i] /= mx;
    }
    return t;
}

}  // namespace

SaliencyMap grad_cam(const model::Model& model, const Tensor& input, int target_class,
                     const std::string& layer) {
    if (input.n() != 1) throw ShapeError("grad_cam expects a single sample, got " +
                                         input.shape_str());
    ad::Tape tape;
    auto fwd = model.forward(tape, input, true);
    const ad::NodePtr* act = nullptr;
    for (const auto& [name, node] : fwd.activations) {
        if (name == layer) act = &node;
    }
    if (act == nullptr) {
        std::string available;
        for (const auto& [name, node] : fwd.activations) {
            if (!available.empty()) available += ", ";
            available += name;
        }
        throw ConfigError("unknown layer '" + layer + "'; available: " + available);
    }
    auto target = ad::select_logit(tape, fwd.logits, 0, target_class);
    tape.backward(target);

    const Tensor& a = (*act)->value;
    i64 c = a.c(), h = a.h(), w = a.w();
    Tensor cam(1, 1, h, w);
    if ((*act)->grad_alloc) {
        const Tensor& g = (*act)->grad;
        for (i64 ch = 0; ch < c; ++ch) {
            double weight = 0.0;
            for (i64 y = 0; y < h; ++y) {
                for (i64 x = 0; x < w; ++x) weight += g.at(0, ch, y, x);
            }
            weight /= static_cast<double>(h * w);
            for (i64 y = 0; y < h; ++y) {
                for (i64 x = 0; x < w; ++x) {
                    cam.at(0, 0, y, x) += weight * a.at(0, ch, y, x);
                }
            }
        }
        for (i64 i = 0; i < cam.numel(); ++i) cam[i] = std::max(0.0, cam[i]);
    }
    cam = max_normalize(std::move(cam));
    if (h != input.h() || w != input.w()) {
        cam = ops::bilinear_resize(cam, input.h(), input.w());
        // Resampling can ring slightly; re-clip and re-normalize.
        for (i64 i = 0; i < cam.numel(); ++i) cam[i] = std::max(0.0, cam[i]);
        cam = max_normalize(std::move(cam));
    }
    SaliencyMap map;
    map.values = std::move(cam);
    map.layer = layer;
    map.target_class = target_class;
    return map;
}

SaliencyMap attention_heatmap(const attzoom::AttentionRecord& record) {
    const Tensor& g = record.gated;
    Tensor v(1, 1, g.h(), g.w());
    for (i64 y = 0; y < g.h(); ++y) {
        for (i64 x = 0; x < g.w(); ++x) v.at(0, 0, y, x) = g.at(0, 0, y, x);
    }
    SaliencyMap map;
    map.values = max_normalize(std::move(v));
    map.layer = "attzoom";
    return map;
}

namespace {

constexpr double kMassFloor = 0.05;

// Inverse-CDF source coordinates for one axis; weights w_i > 0 per source
// cell. Returns out_n coordinates in (0,1), strictly increasing.
std::vector<double> axis_sources(const std::vector<double>& weight, double lambda) {
    size_t n = weight.size();
    std::vector<double> src(n);
    double mn = *std::min_element(weight.begin(), weight.end());
    double mx = *std::max_element(weight.begin(), weight.end());
    if (mx == mn) {
        // Exactly uniform mass: the CDF is linear and the warp is the identity.
        for (size_t j = 0; j < n; ++j) {
            src[j] = (static_cast<double>(j) + 0.5) / static_cast<double>(n);
        }
        return src;
    }
    std::vector<double> cum(n + 1, 0.0);
    for (size_t i = 0; i < n; ++i) cum[i + 1] = cum[i] + weight[i];
    double total = cum[n];
    size_t cell = 0;
    for (size_t j = 0; j < n; ++j) {
        double t = (static_cast<double>(j) + 0.5) / static_cast<double>(n);
        double target = t * total;
        while (cell + 1 < n && cum[cell + 1] <= target) ++cell;
        double frac = (target - cum[cell]) / (cum[cell + 1] - cum[cell]);
        double full = (static_cast<double>(cell) + frac) / static_cast<double>(n);
        src[j] = (1.0 - lambda) * t + lambda * full;
    }
    return src;
}

double sample_bilinear_1d_pair(const Tensor& img, i64 n, i64 c, double fy, double fx) {
    fy = std::clamp(fy, 0.0, static_cast<double>(img.h() - 1));
    fx = std::clamp(fx, 0.0, static_cast<double>(img.w() - 1));
    i64 y0 = static_cast<i64>(std::floor(fy));
    i64 x0 = static_cast<i64>(std::floor(fx));
    i64 y1 = std::min(y0 + 1, img.h() - 1);
    i64 x1 = std::min(x0 + 1, img.w() - 1);
    double wy = fy - static_cast<double>(y0);
    double wx = fx - static_cast<double>(x0);
    return (1.0 - wy) * ((1.0 - wx) * img.at(n, c, y0, x0) + wx * img.at(n, c, y0, x1)) +
           wy * ((1.0 - wx) * img.at(n, c, y1, x0) + wx * img.at(n, c, y1, x1));
}

}  // namespace

std::pair<Tensor, WarpGrid> warp_image(const Tensor& image, const SaliencyMap& saliency,
                                       double lambda) {
    if (lambda < 0.0) throw ConfigError("warp strength lambda must be >= 0");
    const Tensor& s = saliency.values;
    if (s.h() != image.h() || s.w() != image.w()) {
        throw ShapeError("saliency " + s.shape_str() + " must match image resolution " +
                         image.shape_str());
    }
    i64 h = image.h(), w = image.w();
    std::vector<double> col_mass(static_cast<size_t>(w), 0.0);
    std::vector<double> row_mass(static_cast<size_t>(h), 0.0);
    for (i64 y = 0; y < h; ++y) {
        for (i64 x = 0; x < w; ++x) {
            double v = s.at(0, 0, y, x);
            col_mass[static_cast<size_t>(x)] += v;
            row_mass[static_cast<size_t>(y)] += v;
        }
    }
    for (auto& v : col_mass) v = v / static_cast<double>(h) + kMassFloor;
    for (auto& v : row_mass) v = v / static_cast<double>(w) + kMassFloor;

    WarpGrid grid;
    grid.h = h;
    grid.w = w;
    grid.src_x = axis_sources(col_mass, lambda);
    grid.src_y = axis_sources(row_mass, lambda);

    if (lambda == 0.0) {
        // Identity interpolation; skip resampling so the result is bitwise equal.
        return {image, std::move(grid)};
    }
    Tensor out(image.n(), image.c(), h, w);
    for (i64 n = 0; n < image.n(); ++n) {
        for (i64 c = 0; c < image.c(); ++c) {
            for (i64 y = 0; y < h; ++y) {
                double fy = grid.src_y[static_cast<size_t>(y)] * static_cast<double>(h) - 0.5;
                for (i64 x = 0; x < w; ++x) {
                    double fx =
                        grid.src_x[static_cast<size_t>(x)] * static_cast<double>(w) - 0.5;
                    out.at(n, c, y, x) = sample_bilinear_1d_pair(image, n, c, fy, fx);
                }
            }
        }
    }
    return {std::move(out), std::move(grid)};
}

void color_ramp(double t, unsigned char rgb[3]) {
    t = std::clamp(t, 0.0, 1.0);
    auto q = [](double v) {
        return static_cast<unsigned char>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
    };
    rgb[0] = q(3.0 * t);
    rgb[1] = q(3.0 * t - 1.0);
    rgb[2] = q(3.0 * t - 2.0);
}

namespace {

void write_ppm(const std::string& path, i64 h, i64 w,
               const std::vector<unsigned char>& payload) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open for write: " + path);
    os << "P6\n" << w << " " << h << "\n255\n";
    os.write(reinterpret_cast<const char*>(payload.data()),
             static_cast<std::streamsize>(payload.size()));
    if (!os) throw IoError("write failed: " + path);
}

}  // namespace

void write_image(const Tensor& image, const std::string& path) {
    if (image.n() != 1 || (image.c() != 1 && image.c() != 3)) {
        throw ShapeError("write_image expects [1,1,h,w] or [1,3,h,w], got " +
                         image.shape_str());
    }
    i64 h = image.h(), w = image.w();
    std::vector<unsigned char> payload(static_cast<size_t>(3 * h * w));
    size_t p = 0;
    for (i64 y = 0; y < h; ++y) {
        for (i64 x = 0; x < w; ++x) {
            for (i64 c = 0; c < 3; ++c) {
                i64 src_c = image.c() == 3 ? c : 0;
                double v = std::clamp(image.at(0, src_c, y, x), 0.0, 1.0);
                payload[p++] = static_cast<unsigned char>(std::lround(v * 255.0));
            }
        }
    }
    write_ppm(path, h, w, payload);
}

void write_saliency(const SaliencyMap& map, const std::string& path) {
    const Tensor& v = map.values;
    i64 h = v.h(), w = v.w();
    std::vector<unsigned char> payload(static_cast<size_t>(3 * h * w));
    size_t p = 0;
    for (i64 y = 0; y < h; ++y) {
        for (i64 x = 0; x < w; ++x) {
            unsigned char rgb[3];
            color_ramp(v.at(0, 0, y, x), rgb);
            payload[p++] = rgb[0];
            payload[p++] = rgb[1];
            payload[p++] = rgb[2];
        }
    }
    write_ppm(path, h, w, payload);
}

Tensor read_ppm(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open " + path);
    std::string magic;
    is >> magic;
    if (magic != "P6") throw FormatError("not a P6 PPM: " + path);
    i64 w, h;
    int maxval;
    is >> w >> h >> maxval;
    if (maxval != 255) throw FormatError("unsupported maxval in " + path);
    is.get();  // single whitespace after header
    Tensor img(1, 3, h, w);
    std::vector<unsigned char> payload(static_cast<size_t>(3 * h * w));
    is.read(reinterpret_cast<char*>(payload.data()),
            static_cast<std::streamsize>(payload.size()));
    if (is.gcount() != static_cast<std::streamsize>(payload.size())) {
        throw FormatError("truncated PPM payload: " + path);
    }
    size_t p = 0;
    for (i64 y = 0; y < h; ++y) {
        for (i64 x = 0; x < w; ++x) {
            for (i64 c = 0; c < 3; ++c) {
                img.at(0, c, y, x) = static_cast<double>(payload[p++]) / 255.0;
            }
        }
    }
    return img;
}

}  // namespace az::interpret
