#pragma once

#include <map>
#include <string>
#include <vector>

#include "attzoom/backbones.hpp"
#include "attzoom/data.hpp"
#include "attzoom/tensor.hpp"

namespace az::optim {

enum class Optimizer { Adam, Sgd };
enum class Scheduler { Cosine, Step, Plateau, OneCycle };

Optimizer optimizer_from_string(const std::string& s);
Scheduler scheduler_from_string(const std::string& s);
std::string to_string(Optimizer o);
std::string to_string(Scheduler s);

struct TrainConfig {
    int batch_size = 64;
    double learning_rate = 1e-3;
    double weight_decay = 0.0;
    Optimizer optimizer = Optimizer::Adam;
    double momentum = 0.9;  // SGD only, in [0.7, 1)
    Scheduler scheduler = Scheduler::Cosine;
    int step_size = 10;  // StepLR only, in [10, 30]
    int max_epochs = 50;
    int early_stop_patience = 5;
    bool augment = true;
    std::uint64_t seed = 0;

    void validate() const;
};

struct EpochRecord {
    int epoch = 0;  // 1-based
    double train_loss = 0.0;
    double val_loss = 0.0;
    double val_top1 = 0.0;
    double val_top5 = 0.0;
    double lr = 0.0;
};

struct TrainLog {
    std::vector<EpochRecord> epochs;
    int best_epoch = 0;  // 1-based index of the best val top-1 (ties -> earliest)
    std::string stop_reason;

    std::string to_ldjson() const;
    static TrainLog from_ldjson(const std::string& text);
    bool operator==(const TrainLog& o) const;
};

// v <- mu*v + (g + wd*p);  p <- p - lr*v
void sgd_step(Tensor& param, Tensor& velocity, const Tensor& grad, double lr, double momentum,
              double weight_decay);

struct AdamState {
    Tensor m, v;
    int t = 0;
};

void adam_step(Tensor& param, AdamState& state, const Tensor& grad, double lr,
               double weight_decay, double beta1 = 0.9, double beta2 = 0.999,
               double eps = 1e-8);

struct SchedulerState {
    int step_size = 10;           // StepLR drop interval
    double best_val_loss = 1e300;
    int epochs_since_improvement = 0;
    double current_factor = 1.0;  // plateau decay accumulator
};

// lr for (0-based) epoch t of `total`. Plateau consumes the val-loss history
// via observe_val_loss() between epochs.
double scheduler_lr(Scheduler tag, double base_lr, int epoch, int total,
                    const SchedulerState& state);
void observe_val_loss(Scheduler tag, SchedulerState& state, double val_loss);

// Patience-based early stopping on val top-1.
struct EarlyStopper {
    int patience;
    double best = -1.0;
    int best_epoch = 0;
    int since = 0;

    explicit EarlyStopper(int p) : patience(p) {}
    // Returns true if training should stop after this epoch (1-based).
    bool update(int epoch, double val_top1) {
        if (val_top1 > best) {
            best = val_top1;
            best_epoch = epoch;
            since = 0;
        } else {
            ++since;
        }
        return since >= patience;
    }
};

struct Metrics {
    double top1 = 0.0;
    double top5 = 0.0;
    std::vector<double> per_class;
};

struct TrainResult {
    TrainLog log;
    std::map<std::string, Tensor> best_params;
    data::NormStats norm;
};

// Deterministic training loop matching the config; early stopping on val
// top-1; restores best-epoch weights into `model` on return.
// Throws DivergenceError on non-finite loss (model keeps last finite params).
TrainResult train(model::Model& model, const data::Dataset& train_set,
                  const data::Dataset& val_set, const TrainConfig& cfg);

// top-k with ties broken toward lower class index.
Metrics evaluate(const model::Model& model, const data::Dataset& ds,
                 const data::NormStats& norm, int topk = 5, int batch_size = 64);

}  // namespace az::optim
