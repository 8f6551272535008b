#include "attzoom/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>

#include <json.hpp>

namespace az::data {

using nlohmann::json;

void Dataset::validate() const {
    if (static_cast<i64>(labels.size()) != images.n()) {
        throw DataError("label count does not match image count");
    }
    for (int l : labels) {
        if (l < 0 || l >= classes) {
            throw DataError("label " + std::to_string(l) + " out of range [0," +
                            std::to_string(classes) + ")");
        }
    }
}

namespace {

constexpr i64 kCifarPixels = 3 * 32 * 32;

i64 record_size(CifarVariant v) {
    return v == CifarVariant::Cifar10 ? 1 + kCifarPixels : 2 + kCifarPixels;
}

int class_count(CifarVariant v) { return v == CifarVariant::Cifar10 ? 10 : 100; }

}  // namespace

Dataset load_cifar_binary(const std::string& path, CifarVariant variant) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open " + path);
    is.seekg(0, std::ios::end);
    i64 length = static_cast<i64>(is.tellg());
    is.seekg(0);
    i64 rec = record_size(variant);
    if (length == 0 || length % rec != 0) {
        throw FormatError("file length " + std::to_string(length) +
                          " is not a positive multiple of record size " + std::to_string(rec) +
                          ": " + path);
    }
    i64 n = length / rec;
    Dataset ds;
    ds.classes = class_count(variant);
    ds.images = Tensor(n, 3, 32, 32);
    ds.labels.resize(static_cast<size_t>(n));
    if (variant == CifarVariant::Cifar100) ds.coarse_labels.resize(static_cast<size_t>(n));
    std::vector<unsigned char> buf(static_cast<size_t>(rec));
    for (i64 i = 0; i < n; ++i) {
        is.read(reinterpret_cast<char*>(buf.data()), rec);
        if (!is) throw FormatError("short read in " + path);
        int fine;
        if (variant == CifarVariant::Cifar10) {
            fine = buf[0];
        } else {
            ds.coarse_labels[static_cast<size_t>(i)] = buf[0];
            fine = buf[1];
        }
        if (fine >= ds.classes) {
            throw DataError("label byte " + std::to_string(fine) + " >= class count " +
                            std::to_string(ds.classes));
        }
        ds.labels[static_cast<size_t>(i)] = fine;
        const unsigned char* px = buf.data() + (rec - kCifarPixels);
        double* dst = ds.images.data() + i * kCifarPixels;
        for (i64 j = 0; j < kCifarPixels; ++j) {
            dst[j] = static_cast<double>(px[j]) / 255.0;
        }
    }
    return ds;
}

void write_cifar_binary(const std::string& path, const Dataset& ds, CifarVariant variant) {
    if (ds.images.c() != 3 || ds.images.h() != 32 || ds.images.w() != 32) {
        throw FormatError("CIFAR binary requires 3x32x32 images, got " + ds.images.shape_str());
    }
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open for write: " + path);
    for (i64 i = 0; i < ds.size(); ++i) {
        if (variant == CifarVariant::Cifar100) {
            unsigned char coarse = ds.coarse_labels.empty()
                                       ? 0
                                       : static_cast<unsigned char>(
                                             ds.coarse_labels[static_cast<size_t>(i)]);
            os.put(static_cast<char>(coarse));
        }
        os.put(static_cast<char>(ds.labels[static_cast<size_t>(i)]));
        const double* src = ds.images.data() + i * kCifarPixels;
        for (i64 j = 0; j < kCifarPixels; ++j) {
            double v = std::clamp(src[j], 0.0, 1.0);
            os.put(static_cast<char>(static_cast<unsigned char>(std::lround(v * 255.0))));
        }
    }
    if (!os) throw IoError("write failed: " + path);
}

void SyntheticLocalizationSpec::validate() const {
    if (classes < 2) throw ConfigError("synthetic classes must be >= 2");
    if (image_size < 4) throw ConfigError("synthetic image_size must be >= 4");
    if (patch_size < 1 || patch_size > image_size / 2) {
        throw ConfigError("patch_size " + std::to_string(patch_size) +
                          " does not fit a quadrant of image_size " +
                          std::to_string(image_size));
    }
    if (noise_std < 0.0) throw ConfigError("noise_std must be >= 0");
    if (samples < classes) throw ConfigError("need at least one sample per class");
}

Dataset generate_synthetic(const SyntheticLocalizationSpec& spec) {
    spec.validate();
    Rng rng(Rng::mix(spec.seed, Rng::hash_str("synthetic")));

    // Fixed per-class patch patterns, drawn once.
    std::vector<Tensor> patterns;
    for (int k = 0; k < spec.classes; ++k) {
        Rng prng(Rng::mix(spec.seed, Rng::hash_str("pattern" + std::to_string(k))));
        Tensor pat(1, spec.channels, spec.patch_size, spec.patch_size);
        for (i64 i = 0; i < pat.numel(); ++i) pat[i] = prng.uniform();
        patterns.push_back(std::move(pat));
    }

    Dataset ds;
    ds.classes = spec.classes;
    ds.images = Tensor(spec.samples, spec.channels, spec.image_size, spec.image_size);
    ds.labels.resize(static_cast<size_t>(spec.samples));
    ds.quadrants.resize(static_cast<size_t>(spec.samples));
    i64 half = spec.image_size / 2;
    for (int i = 0; i < spec.samples; ++i) {
        int cls = i % spec.classes;  // balanced by construction
        int quadrant = cls % 4;
        ds.labels[static_cast<size_t>(i)] = cls;
        ds.quadrants[static_cast<size_t>(i)] = quadrant;
        for (i64 c = 0; c < spec.channels; ++c) {
            for (i64 h = 0; h < spec.image_size; ++h) {
                for (i64 w = 0; w < spec.image_size; ++w) {
                    double v = 0.5 + spec.noise_std * rng.normal();
                    ds.images.at(i, c, h, w) = std::clamp(v, 0.0, 1.0);
                }
            }
        }
        i64 max_off = half - spec.patch_size;
        i64 oh = (quadrant / 2) * half + (max_off > 0 ? rng.uniform_int(0, max_off) : 0);
        i64 ow = (quadrant % 2) * half + (max_off > 0 ? rng.uniform_int(0, max_off) : 0);
        const Tensor& pat = patterns[static_cast<size_t>(cls)];
        for (i64 c = 0; c < spec.channels; ++c) {
            for (i64 h = 0; h < spec.patch_size; ++h) {
                for (i64 w = 0; w < spec.patch_size; ++w) {
                    ds.images.at(i, c, oh + h, ow + w) = pat.at(0, c, h, w);
                }
            }
        }
    }
    return ds;
}

Tensor augment(const Tensor& batch, Rng& rng, const AugmentPolicy& policy) {
    i64 n = batch.n(), c = batch.c(), h = batch.h(), w = batch.w();
    i64 pad = policy.crop_pad;
    Tensor out(n, c, h, w);
    for (i64 i = 0; i < n; ++i) {
        i64 dy = rng.uniform_int(0, 2 * pad) - pad;
        i64 dx = rng.uniform_int(0, 2 * pad) - pad;
        bool flip = rng.bernoulli(policy.hflip_p);
        for (i64 ch = 0; ch < c; ++ch) {
            for (i64 y = 0; y < h; ++y) {
                i64 sy = y + dy;
                for (i64 x = 0; x < w; ++x) {
                    i64 sx = x + dx;
                    double v = 0.0;
                    if (sy >= 0 && sy < h && sx >= 0 && sx < w) {
                        v = batch.at(i, ch, sy, flip ? (w - 1 - sx) : sx);
                    }
                    out.at(i, ch, y, x) = v;
                }
            }
        }
    }
    return out;
}

std::pair<Dataset, Dataset> split(const Dataset& ds, double val_fraction, std::uint64_t seed) {
    if (!(val_fraction > 0.0 && val_fraction < 1.0)) {
        throw ConfigError("val_fraction must lie in (0,1)");
    }
    std::vector<std::vector<i64>> by_class(static_cast<size_t>(ds.classes));
    for (i64 i = 0; i < ds.size(); ++i) {
        by_class[static_cast<size_t>(ds.labels[static_cast<size_t>(i)])].push_back(i);
    }
    std::vector<i64> train_idx, val_idx;
    Rng rng(Rng::mix(seed, Rng::hash_str("split")));
    for (auto& idx : by_class) {
        // Fisher-Yates
        for (size_t j = idx.size(); j > 1; --j) {
            size_t k = static_cast<size_t>(rng.uniform_int(0, static_cast<i64>(j) - 1));
            std::swap(idx[j - 1], idx[k]);
        }
        i64 n_val = std::llround(static_cast<double>(idx.size()) * val_fraction);
        for (size_t j = 0; j < idx.size(); ++j) {
            (static_cast<i64>(j) < n_val ? val_idx : train_idx).push_back(idx[j]);
        }
    }
    std::sort(train_idx.begin(), train_idx.end());
    std::sort(val_idx.begin(), val_idx.end());

    auto subset = [&](const std::vector<i64>& idx, const std::string& tag) {
        Dataset out;
        out.classes = ds.classes;
        out.split = tag;
        auto [imgs, labels] = take(ds, idx);
        out.images = std::move(imgs);
        out.labels = std::move(labels);
        for (i64 i : idx) {
            if (!ds.coarse_labels.empty()) {
                out.coarse_labels.push_back(ds.coarse_labels[static_cast<size_t>(i)]);
            }
            if (!ds.quadrants.empty()) {
                out.quadrants.push_back(ds.quadrants[static_cast<size_t>(i)]);
            }
        }
        return out;
    };
    return {subset(train_idx, "train"), subset(val_idx, "val")};
}

NormStats NormStats::compute(const Tensor& images) {
    NormStats s;
    i64 c = images.c();
    i64 per_channel = images.n() * images.h() * images.w();
    s.mean.assign(static_cast<size_t>(c), 0.0);
    s.std_dev.assign(static_cast<size_t>(c), 1.0);
    for (i64 ch = 0; ch < c; ++ch) {
        double sum = 0.0, sq = 0.0;
        for (i64 n = 0; n < images.n(); ++n) {
            for (i64 h = 0; h < images.h(); ++h) {
                for (i64 w = 0; w < images.w(); ++w) {
                    double v = images.at(n, ch, h, w);
                    sum += v;
                    sq += v * v;
                }
            }
        }
        double mean = sum / static_cast<double>(per_channel);
        double var = sq / static_cast<double>(per_channel) - mean * mean;
        s.mean[static_cast<size_t>(ch)] = mean;
        s.std_dev[static_cast<size_t>(ch)] = std::sqrt(std::max(var, 1e-12));
    }
    return s;
}

Tensor NormStats::apply(const Tensor& images) const {
    Tensor out = images;
    for (i64 n = 0; n < out.n(); ++n) {
        for (i64 c = 0; c < out.c(); ++c) {
            double m = mean[static_cast<size_t>(c)];
            double inv = 1.0 / std_dev[static_cast<size_t>(c)];
            for (i64 h = 0; h < out.h(); ++h) {
                for (i64 w = 0; w < out.w(); ++w) {
                    out.at(n, c, h, w) = (out.at(n, c, h, w) - m) * inv;
                }
            }
        }
    }
    return out;
}

std::string NormStats::to_json() const {
    json j;
    j["mean"] = mean;
    j["std"] = std_dev;
    return j.dump(2);
}

NormStats NormStats::from_json(const std::string& text) {
    json j = json::parse(text);
    NormStats s;
    s.mean = j.at("mean").get<std::vector<double>>();
    s.std_dev = j.at("std").get<std::vector<double>>();
    return s;
}

std::pair<Tensor, std::vector<int>> take(const Dataset& ds, const std::vector<i64>& indices) {
    i64 c = ds.images.c(), h = ds.images.h(), w = ds.images.w();
    i64 sample = c * h * w;
    Tensor imgs(static_cast<i64>(indices.size()), c, h, w);
    std::vector<int> labels;
    labels.reserve(indices.size());
    for (size_t j = 0; j < indices.size(); ++j) {
        i64 i = indices[j];
        std::copy(ds.images.data() + i * sample, ds.images.data() + (i + 1) * sample,
                  imgs.data() + static_cast<i64>(j) * sample);
        labels.push_back(ds.labels[static_cast<size_t>(i)]);
    }
    return {std::move(imgs), std::move(labels)};
}

}  // namespace az::data
