#include "attzoom/search.hpp"

#include <algorithm>
#include <atomic>
#include <thread>

#include "attzoom/rng.hpp"

namespace az::search {

TrialConfig sample(const SearchSpace& space, std::uint64_t search_seed, int trial_index) {
    Rng rng(Rng::mix(search_seed, static_cast<std::uint64_t>(trial_index) + 1));
    TrialConfig t;
    t.trial_index = trial_index;
    t.seed = Rng::mix(search_seed, Rng::hash_str("trial" + std::to_string(trial_index)));
    auto& c = t.train;
    c.batch_size = space.batch_sizes[static_cast<size_t>(
        rng.uniform_int(0, static_cast<i64>(space.batch_sizes.size()) - 1))];
    c.learning_rate = rng.log_uniform(space.lr_lo, space.lr_hi);
    c.weight_decay = rng.log_uniform(space.wd_lo, space.wd_hi);
    if (rng.bernoulli(0.5)) {
        c.optimizer = optim::Optimizer::Adam;
    } else {
        c.optimizer = optim::Optimizer::Sgd;
        c.momentum = rng.uniform(space.momentum_lo, space.momentum_hi);
    }
    switch (rng.uniform_int(0, 3)) {
        case 0: c.scheduler = optim::Scheduler::Cosine; break;
        case 1:
            c.scheduler = optim::Scheduler::Step;
            c.step_size = static_cast<int>(rng.uniform_int(space.step_lo, space.step_hi));
            break;
        case 2: c.scheduler = optim::Scheduler::Plateau; break;
        default: c.scheduler = optim::Scheduler::OneCycle; break;
    }
    c.seed = t.seed;
    c.validate();
    return t;
}

namespace {

TrialResult run_trial(const model::ModelSpec& spec, const std::string& arm,
                      const data::Dataset& train_set, const data::Dataset& val_set,
                      TrialConfig cfg, int max_epochs, optim::TrainLog* log_out) {
    cfg.train.max_epochs = max_epochs;
    TrialResult r;
    r.arm = arm;
    r.config = cfg;
    model::ModelSpec mspec = spec;
    mspec.seed = spec.seed;  // model init shared across trials; trial seed drives training
    model::Model m = model::Model::build(mspec);
    try {
        optim::TrainResult tr = optim::train(m, train_set, val_set, cfg.train);
        if (!tr.log.epochs.empty()) {
            const auto& best = tr.log.epochs[static_cast<size_t>(tr.log.best_epoch - 1)];
            r.top1 = best.val_top1;
            r.top5 = best.val_top5;
        }
        r.epochs_ran = static_cast<int>(tr.log.epochs.size());
        r.stop_reason = tr.log.stop_reason;
        if (log_out != nullptr) *log_out = tr.log;
    } catch (const DivergenceError&) {
        // Recorded, not fatal: a diverged trial scores zero.
        r.stop_reason = "diverged";
    }
    return r;
}

}  // namespace

SearchResult run_search(const model::ModelSpec& baseline_spec,
                        const model::ModelSpec& attzoom_spec, const data::Dataset& train_set,
                        const data::Dataset& val_set, const SearchSpace& space,
                        const SearchOptions& opts) {
    SearchResult result;
    result.logs_baseline.resize(static_cast<size_t>(opts.n_trials));
    result.logs_attzoom.resize(static_cast<size_t>(opts.n_trials));
    std::vector<TrialResult> baseline(static_cast<size_t>(opts.n_trials));
    std::vector<TrialResult> attzoom(static_cast<size_t>(opts.n_trials));

    auto run_one = [&](int t) {
        TrialConfig cfg_b = sample(space, opts.search_seed, t);
        TrialConfig cfg_a =
            opts.paired ? cfg_b
                        : sample(space, Rng::mix(opts.search_seed, Rng::hash_str("attzoom")), t);
        cfg_a.trial_index = t;
        baseline[static_cast<size_t>(t)] =
            run_trial(baseline_spec, "baseline", train_set, val_set, cfg_b,
                      opts.max_epochs_per_trial, &result.logs_baseline[static_cast<size_t>(t)]);
        attzoom[static_cast<size_t>(t)] =
            run_trial(attzoom_spec, "attzoom", train_set, val_set, cfg_a,
                      opts.max_epochs_per_trial, &result.logs_attzoom[static_cast<size_t>(t)]);
    };

    if (opts.jobs <= 1) {
        for (int t = 0; t < opts.n_trials; ++t) run_one(t);
    } else {
        std::vector<std::thread> pool;
        std::atomic<int> next{0};
        for (int j = 0; j < opts.jobs; ++j) {
            pool.emplace_back([&] {
                for (int t = next.fetch_add(1); t < opts.n_trials; t = next.fetch_add(1)) {
                    run_one(t);
                }
            });
        }
        for (auto& th : pool) th.join();
    }

    result.leaderboard.insert(result.leaderboard.end(), baseline.begin(), baseline.end());
    result.leaderboard.insert(result.leaderboard.end(), attzoom.begin(), attzoom.end());
    std::sort(result.leaderboard.begin(), result.leaderboard.end(),
              [](const TrialResult& a, const TrialResult& b) {
                  if (a.top1 != b.top1) return a.top1 > b.top1;
                  if (a.arm != b.arm) return a.arm < b.arm;
                  return a.config.trial_index < b.config.trial_index;
              });
    auto best_of = [](const std::vector<TrialResult>& v) {
        TrialResult best = v.front();
        for (const auto& r : v) {
            if (r.top1 > best.top1) best = r;
        }
        return best;
    };
    result.best_baseline = best_of(baseline);
    result.best_attzoom = best_of(attzoom);
    return result;
}

void write_leaderboard_csv(std::ostream& os, const SearchResult& result) {
    os << "trial,arm,batch,lr,wd,optimizer,momentum,scheduler,step_size,top1,top5,"
          "epochs_ran,stop_reason\n";
    for (const auto& r : result.leaderboard) {
        const auto& c = r.config.train;
        os << r.config.trial_index << "," << r.arm << "," << c.batch_size << ","
           << c.learning_rate << "," << c.weight_decay << "," << optim::to_string(c.optimizer)
           << "," << (c.optimizer == optim::Optimizer::Sgd ? std::to_string(c.momentum) : "")
           << "," << optim::to_string(c.scheduler) << ","
           << (c.scheduler == optim::Scheduler::Step ? std::to_string(c.step_size) : "") << ","
           << r.top1 << "," << r.top5 << "," << r.epochs_ran << "," << r.stop_reason << "\n";
    }
}

}  // namespace az::search
