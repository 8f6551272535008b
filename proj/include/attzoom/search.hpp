#pragma once

#include <ostream>
#include <string>
#include <vector>

#include "attzoom/backbones.hpp"
#include "attzoom/data.hpp"
#include "attzoom/optim.hpp"

namespace az::search {

// The searched hyperparameter ranges. Batch sizes are categorical; learning
// rate and weight decay are log-uniform; SGD momentum and StepLR step size
// are linear.
struct SearchSpace {
    std::vector<int> batch_sizes = {32, 64, 128, 256};
    double lr_lo = 1e-5, lr_hi = 1e-1;
    double wd_lo = 1e-6, wd_hi = 1e-2;
    double momentum_lo = 0.7, momentum_hi = 1.0;
    int step_lo = 10, step_hi = 30;
};

struct TrialConfig {
    optim::TrainConfig train;
    int trial_index = 0;
    std::uint64_t seed = 0;
};

// Deterministic: (search_seed, trial_index) fully determines the sample.
TrialConfig sample(const SearchSpace& space, std::uint64_t search_seed, int trial_index);

struct TrialResult {
    std::string arm;  // "baseline" or "attzoom"
    TrialConfig config;
    double top1 = 0.0;
    double top5 = 0.0;
    int epochs_ran = 0;
    std::string stop_reason;
};

struct SearchResult {
    std::vector<TrialResult> leaderboard;  // sorted by top1 desc, then arm, then trial
    TrialResult best_baseline;
    TrialResult best_attzoom;
    std::vector<optim::TrainLog> logs_baseline;  // per trial
    std::vector<optim::TrainLog> logs_attzoom;
};

struct SearchOptions {
    int n_trials = 5;
    int max_epochs_per_trial = 10;
    std::uint64_t search_seed = 0;
    bool paired = true;  // trial t uses identical hyperparameters in both arms
    int jobs = 1;
};

// Two-arm random search: baseline spec vs spec with AttZoom insertions.
// Paired mode shares the per-trial hyperparameters across arms.
SearchResult run_search(const model::ModelSpec& baseline_spec,
                        const model::ModelSpec& attzoom_spec, const data::Dataset& train_set,
                        const data::Dataset& val_set, const SearchSpace& space,
                        const SearchOptions& opts);

void write_leaderboard_csv(std::ostream& os, const SearchResult& result);

}  // namespace az::search
