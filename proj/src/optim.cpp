#include "attzoom/optim.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

#include "attzoom/kernels.hpp"

namespace az::optim {

using nlohmann::json;

Optimizer optimizer_from_string(const std::string& s) {
    if (s == "adam") return Optimizer::Adam;
    if (s == "sgd") return Optimizer::Sgd;
    throw ConfigError("unknown optimizer: " + s);
}

Scheduler scheduler_from_string(const std::string& s) {
    if (s == "cosine") return Scheduler::Cosine;
    if (s == "step") return Scheduler::Step;
    if (s == "plateau") return Scheduler::Plateau;
    if (s == "one_cycle") return Scheduler::OneCycle;
    throw ConfigError("unknown scheduler: " + s);
}

std::string to_string(Optimizer o) { return o == Optimizer::Adam ? "adam" : "sgd"; }

std::string to_string(Scheduler s) {
    switch (s) {
        case Scheduler::Cosine: return "cosine";
        case Scheduler::Step: return "step";
        case Scheduler::Plateau: return "plateau";
        case Scheduler::OneCycle: return "one_cycle";
    }
    return "?";
}

void TrainConfig::validate() const {
    if (batch_size != 32 && batch_size != 64 && batch_size != 128 && batch_size != 256) {
        throw ConfigError("batch_size must be one of 32, 64, 128, 256");
    }
    if (learning_rate < 0.0) throw ConfigError("learning_rate must be >= 0");
    if (weight_decay < 0.0) throw ConfigError("weight_decay must be >= 0");
    if (optimizer == Optimizer::Sgd && !(momentum >= 0.7 && momentum < 1.0)) {
        throw ConfigError("sgd momentum must lie in [0.7, 1)");
    }
    if (scheduler == Scheduler::Step && (step_size < 10 || step_size > 30)) {
        throw ConfigError("step scheduler step_size must lie in [10, 30]");
    }
    if (max_epochs < 1) throw ConfigError("max_epochs must be >= 1");
    if (early_stop_patience < 1) throw ConfigError("early_stop_patience must be >= 1");
}

std::string TrainLog::to_ldjson() const {
    std::string out;
    for (const auto& e : epochs) {
        json j;
        j["epoch"] = e.epoch;
        j["train_loss"] = e.train_loss;
        j["val_loss"] = e.val_loss;
        j["val_top1"] = e.val_top1;
        j["val_top5"] = e.val_top5;
        j["lr"] = e.lr;
        out += j.dump() + "\n";
    }
    json tail;
    tail["best_epoch"] = best_epoch;
    tail["stop_reason"] = stop_reason;
    out += tail.dump() + "\n";
    return out;
}

TrainLog TrainLog::from_ldjson(const std::string& text) {
    TrainLog log;
    size_t pos = 0;
    while (pos < text.size()) {
        size_t end = text.find('\n', pos);
        if (end == std::string::npos) end = text.size();
        std::string line = text.substr(pos, end - pos);
        pos = end + 1;
        if (line.empty()) continue;
        json j = json::parse(line);
        if (j.contains("epoch")) {
            EpochRecord e;
            e.epoch = j["epoch"];
            e.train_loss = j["train_loss"];
            e.val_loss = j["val_loss"];
            e.val_top1 = j["val_top1"];
            e.val_top5 = j["val_top5"];
            e.lr = j["lr"];
            log.epochs.push_back(e);
        } else {
            log.best_epoch = j.at("best_epoch");
            log.stop_reason = j.at("stop_reason");
        }
    }
    return log;
}

bool TrainLog::operator==(const TrainLog& o) const {
    if (best_epoch != o.best_epoch || stop_reason != o.stop_reason ||
        epochs.size() != o.epochs.size()) {
        return false;
    }
    for (size_t i = 0; i < epochs.size(); ++i) {
        const auto& a = epochs[i];
        const auto& b = o.epochs[i];
        if (a.epoch != b.epoch || a.train_loss != b.train_loss || a.val_loss != b.val_loss ||
            a.val_top1 != b.val_top1 || a.val_top5 != b.val_top5 || a.lr != b.lr) {
            return false;
        }
    }
    return true;
}

void sgd_step(Tensor& param, Tensor& velocity, const Tensor& grad, double lr, double momentum,
              double weight_decay) {
    if (!param.same_shape(grad)) throw ShapeError("sgd_step grad shape mismatch");
    if (velocity.numel() == 0) {
        velocity = Tensor(param.n(), param.c(), param.h(), param.w());
    }
    kernels::active().sgd_update(param.data(), velocity.data(), grad.data(), lr, momentum,
                                 weight_decay, static_cast<size_t>(param.numel()));
}

void adam_step(Tensor& param, AdamState& state, const Tensor& grad, double lr,
               double weight_decay, double beta1, double beta2, double eps) {
    if (!param.same_shape(grad)) throw ShapeError("adam_step grad shape mismatch");
    if (state.m.numel() == 0) {
        state.m = Tensor(param.n(), param.c(), param.h(), param.w());
        state.v = Tensor(param.n(), param.c(), param.h(), param.w());
        state.t = 0;
    }
    state.t += 1;
    double bc1 = 1.0 - std::pow(beta1, state.t);
    double bc2 = 1.0 - std::pow(beta2, state.t);
    kernels::active().adam_update(param.data(), state.m.data(), state.v.data(), grad.data(), lr,
                                  beta1, beta2, eps, weight_decay, bc1, bc2,
                                  static_cast<size_t>(param.numel()));
}

double scheduler_lr(Scheduler tag, double base_lr, int epoch, int total,
                    const SchedulerState& state) {
    switch (tag) {
        case Scheduler::Cosine: {
            double lr_min = base_lr / 100.0;
            double t = total > 0 ? static_cast<double>(epoch) / static_cast<double>(total) : 0.0;
            return lr_min + 0.5 * (base_lr - lr_min) * (1.0 + std::cos(M_PI * t));
        }
        case Scheduler::Step:
            return base_lr * std::pow(0.1, epoch / state.step_size);
        case Scheduler::Plateau:
            return base_lr * state.current_factor;
        case Scheduler::OneCycle: {
            double end_lr = base_lr / 1000.0;
            int warm = std::max(1, (3 * total) / 10);
            if (epoch < warm) {
                return base_lr * static_cast<double>(epoch + 1) / static_cast<double>(warm);
            }
            if (total <= warm) return end_lr;
            double tau = static_cast<double>(epoch - warm) / static_cast<double>(total - warm);
            return end_lr + 0.5 * (base_lr - end_lr) * (1.0 + std::cos(M_PI * tau));
        }
    }
    throw ConfigError("unknown scheduler tag");
}

void observe_val_loss(Scheduler tag, SchedulerState& state, double val_loss) {
    if (tag != Scheduler::Plateau) return;
    if (val_loss < state.best_val_loss) {
        state.best_val_loss = val_loss;
        state.epochs_since_improvement = 0;
    } else {
        ++state.epochs_since_improvement;
        if (state.epochs_since_improvement >= 3) {
            state.current_factor *= 0.1;
            state.epochs_since_improvement = 0;
        }
    }
}

namespace {

struct EvalPass {
    double loss = 0.0;
    Metrics metrics;
};

bool in_topk(const double* logits, int k_classes, int label, int topk) {
    double lv = logits[label];
    int beats = 0;
    for (int j = 0; j < k_classes; ++j) {
        if (logits[j] > lv || (logits[j] == lv && j < label)) ++beats;
    }
    return beats < topk;
}

EvalPass eval_pass(const model::Model& m, const data::Dataset& ds, const data::NormStats& norm,
                   int batch_size, int topk) {
    int classes = ds.classes;
    if (topk > classes) throw ConfigError("top-k with k > num_classes");
    EvalPass out;
    out.metrics.per_class.assign(static_cast<size_t>(classes), 0.0);
    std::vector<double> class_total(static_cast<size_t>(classes), 0.0);
    i64 n = ds.size();
    double top1 = 0.0, top5 = 0.0, loss_sum = 0.0;
    for (i64 start = 0; start < n; start += batch_size) {
        i64 stop = std::min<i64>(start + batch_size, n);
        std::vector<i64> idx;
        for (i64 i = start; i < stop; ++i) idx.push_back(i);
        auto [imgs, labels] = data::take(ds, idx);
        Tensor input = norm.apply(imgs);
        ad::Tape tape;
        auto fwd = m.forward(tape, input, false);
        loss_sum += ops::softmax_cross_entropy(fwd.logits->value, labels) *
                    static_cast<double>(stop - start);
        const Tensor& logits = fwd.logits->value;
        for (i64 i = 0; i < stop - start; ++i) {
            int label = labels[static_cast<size_t>(i)];
            const double* lp = logits.data() + i * classes;
            bool t1 = in_topk(lp, classes, label, 1);
            if (t1) {
                top1 += 1.0;
                out.metrics.per_class[static_cast<size_t>(label)] += 1.0;
            }
            if (in_topk(lp, classes, label, topk)) top5 += 1.0;
            class_total[static_cast<size_t>(label)] += 1.0;
        }
    }
    out.loss = loss_sum / static_cast<double>(n);
    out.metrics.top1 = top1 / static_cast<double>(n);
    out.metrics.top5 = top5 / static_cast<double>(n);
    for (size_t c = 0; c < out.metrics.per_class.size(); ++c) {
        if (class_total[c] > 0) out.metrics.per_class[c] /= class_total[c];
    }
    return out;
}

}  // namespace

Metrics evaluate(const model::Model& model, const data::Dataset& ds,
                 const data::NormStats& norm, int topk, int batch_size) {
    return eval_pass(model, ds, norm, batch_size, topk).metrics;
}

TrainResult train(model::Model& model, const data::Dataset& train_set,
                  const data::Dataset& val_set, const TrainConfig& cfg) {
    cfg.validate();
    train_set.validate();
    val_set.validate();

    TrainResult result;
    result.norm = data::NormStats::compute(train_set.images);
    const data::NormStats& norm = result.norm;
    int topk = std::min(5, train_set.classes);

    Rng shuffle_rng(Rng::mix(cfg.seed, Rng::hash_str("shuffle")));
    Rng augment_rng(Rng::mix(cfg.seed, Rng::hash_str("augment")));

    std::map<std::string, Tensor> sgd_velocity;
    std::map<std::string, AdamState> adam_state;
    SchedulerState sched_state;
    EarlyStopper stopper(cfg.early_stop_patience);
    std::map<std::string, Tensor> last_finite = model.params();

    std::vector<i64> order(static_cast<size_t>(train_set.size()));
    for (i64 i = 0; i < train_set.size(); ++i) order[static_cast<size_t>(i)] = i;

    sched_state.step_size = cfg.step_size;
    for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
        double lr = scheduler_lr(cfg.scheduler, cfg.learning_rate, epoch, cfg.max_epochs,
                                 sched_state);
        // Fisher-Yates shuffle of the sample order.
        for (size_t j = order.size(); j > 1; --j) {
            size_t k = static_cast<size_t>(
                shuffle_rng.uniform_int(0, static_cast<i64>(j) - 1));
            std::swap(order[j - 1], order[k]);
        }
        double loss_sum = 0.0;
        i64 seen = 0;
        for (size_t start = 0; start < order.size(); start += cfg.batch_size) {
            size_t stop = std::min(order.size(), start + cfg.batch_size);
            std::vector<i64> idx(order.begin() + static_cast<std::ptrdiff_t>(start),
                                 order.begin() + static_cast<std::ptrdiff_t>(stop));
            auto [imgs, labels] = data::take(train_set, idx);
            if (cfg.augment) imgs = data::augment(imgs, augment_rng);
            Tensor input = norm.apply(imgs);

            ad::Tape tape;
            auto fwd = model.forward(tape, input, true);
            auto loss = ad::softmax_cross_entropy(tape, fwd.logits, labels);
            double loss_val = loss->value[0];
            if (!std::isfinite(loss_val)) {
                model.params() = last_finite;
                throw DivergenceError("non-finite training loss at epoch " +
                                      std::to_string(epoch + 1));
            }
            loss_sum += loss_val * static_cast<double>(idx.size());
            seen += static_cast<i64>(idx.size());
            tape.backward(loss);
            for (auto& [name, node] : fwd.param_nodes) {
                Tensor& param = model.params().at(name);
                Tensor zero;
                if (!node->grad_alloc) zero = Tensor(param.n(), param.c(), param.h(), param.w());
                const Tensor& grad = node->grad_alloc ? node->grad : zero;
                if (cfg.optimizer == Optimizer::Sgd) {
                    sgd_step(param, sgd_velocity[name], grad, lr, cfg.momentum,
                             cfg.weight_decay);
                } else {
                    adam_step(param, adam_state[name], grad, lr, cfg.weight_decay);
                }
            }
        }

        EvalPass val = eval_pass(model, val_set, norm, cfg.batch_size, topk);
        EpochRecord rec;
        rec.epoch = epoch + 1;
        rec.train_loss = loss_sum / static_cast<double>(seen);
        rec.val_loss = val.loss;
        rec.val_top1 = val.metrics.top1;
        rec.val_top5 = val.metrics.top5;
        rec.lr = lr;
        result.log.epochs.push_back(rec);
        last_finite = model.params();

        bool improved = val.metrics.top1 > stopper.best;
        bool stop = stopper.update(epoch + 1, val.metrics.top1);
        if (improved) result.best_params = model.params();
        observe_val_loss(cfg.scheduler, sched_state, val.loss);
        if (stop) {
            result.log.stop_reason = "early_stop";
            break;
        }
    }
    if (result.log.stop_reason.empty()) result.log.stop_reason = "max_epochs";
    result.log.best_epoch = stopper.best_epoch;
    if (!result.best_params.empty()) model.params() = result.best_params;
    return result;
}

}  // namespace az::optim
