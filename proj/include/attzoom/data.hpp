#pragma once

#include <optional>
#include <string>
#include <vector>

#include "attzoom/rng.hpp"
#include "attzoom/tensor.hpp"

namespace az::data {

// Images in [0,1], labels in [0, classes).
struct Dataset {
    Tensor images;            // [N,C,H,W]
    std::vector<int> labels;  // length N
    int classes = 0;
    std::string split = "train";
    // cifar100 coarse labels, kept so a write round-trips byte for byte.
    std::vector<int> coarse_labels;
    // Synthetic sets: ground-truth signal quadrant per sample (0..3).
    std::vector<int> quadrants;

    i64 size() const { return images.n(); }
    void validate() const;
};

enum class CifarVariant { Cifar10, Cifar100 };

// Published CIFAR binary layout: per record 1 label byte (cifar10) or
// coarse+fine label bytes (cifar100), then 3072 pixel bytes as full R, G, B
// planes of a 32x32 image. Pixels map to [0,1] by /255.
Dataset load_cifar_binary(const std::string& path, CifarVariant variant);
void write_cifar_binary(const std::string& path, const Dataset& ds, CifarVariant variant);

struct SyntheticLocalizationSpec {
    int classes = 4;
    i64 image_size = 32;
    i64 channels = 3;
    i64 patch_size = 8;
    double noise_std = 0.1;
    int samples = 1000;
    std::uint64_t seed = 0;

    void validate() const;
};

// Per-class patch pattern placed uniformly inside a class-dependent quadrant
// (quadrant = class % 4) over a noisy background. Deterministic from seed.
Dataset generate_synthetic(const SyntheticLocalizationSpec& spec);

struct AugmentPolicy {
    i64 crop_pad = 4;
    double hflip_p = 0.5;
};

// Zero-pad + random crop back to size, then random horizontal flip.
Tensor augment(const Tensor& batch, Rng& rng, const AugmentPolicy& policy = {});

// Stratified split, deterministic from seed.
std::pair<Dataset, Dataset> split(const Dataset& ds, double val_fraction, std::uint64_t seed);

// Per-channel mean/std over a training split; applied before the model.
struct NormStats {
    std::vector<double> mean;
    std::vector<double> std_dev;

    static NormStats compute(const Tensor& images);
    Tensor apply(const Tensor& images) const;
    std::string to_json() const;
    static NormStats from_json(const std::string& text);
};

// Rows `indices` of the dataset as a batch (images + labels).
std::pair<Tensor, std::vector<int>> take(const Dataset& ds, const std::vector<i64>& indices);

}  // namespace az::data
