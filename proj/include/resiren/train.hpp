#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include "resiren/checkpoint.hpp"
#include "resiren/net.hpp"
#include "resiren/parallel.hpp"
#include "resiren/sampler.hpp"

namespace resiren {

struct TrainConfig {
    double learning_rate = 1e-4; // SIREN convention
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    int max_epochs = 20;
    int batch_size = 64;
    int patience = 3;
    double min_delta = 1e-5;
    std::uint64_t seed = 0;
    bool march_only = false;
    bool concat_months = false;

    void validate() const {
        if (!(learning_rate > 0.0)) throw Error("TrainConfig.learning_rate must be > 0");
        if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0)
            throw Error("TrainConfig.betas must lie in [0, 1)");
        if (patience < 1) throw Error("TrainConfig.patience must be >= 1");
        if (max_epochs < 1 || batch_size < 1) throw Error("TrainConfig.max_epochs/batch_size must be >= 1");
    }
};

struct MseResult {
    double loss = 0.0;
    std::vector<float> grad; // dLoss/dpred, same shape as pred
};

// Mean over B*V of squared error; loss reduced in 64-bit regardless of the
// parameter precision so the reported value is batch-layout independent.
template <typename T>
double mse_loss_value(const std::vector<T>& pred, const std::vector<T>& target) {
    if (pred.size() != target.size() || pred.empty()) throw Error("mse_loss: shape mismatch");
    double acc = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double d = static_cast<double>(pred[i]) - static_cast<double>(target[i]);
        acc += d * d;
    }
    return acc / static_cast<double>(pred.size());
}

template <typename T>
std::vector<T> mse_loss_grad(const std::vector<T>& pred, const std::vector<T>& target) {
    if (pred.size() != target.size() || pred.empty()) throw Error("mse_loss: shape mismatch");
    std::vector<T> grad(pred.size());
    const double scale = 2.0 / static_cast<double>(pred.size());
    for (std::size_t i = 0; i < pred.size(); ++i)
        grad[i] = static_cast<T>(scale * (static_cast<double>(pred[i]) - static_cast<double>(target[i])));
    return grad;
}

inline MseResult mse_loss(const std::vector<float>& pred, const std::vector<float>& target) {
    return MseResult{mse_loss_value(pred, target), mse_loss_grad(pred, target)};
}

// Adam moments over a flat parameter vector; shared by the backbone trainer
// and the probes.
template <typename T>
struct AdamState {
    std::vector<T> m, v;
    std::uint64_t t = 0;

    explicit AdamState(std::size_t n = 0) : m(n, T(0)), v(n, T(0)) {}
};

// One bias-corrected Adam step. Moment updates run in the parameter precision;
// the bias-corrected update itself is computed in 64-bit and cast back.
template <typename T>
void adam_step_flat(std::vector<T>& params, const std::vector<T>& grads, AdamState<T>& state,
                    double lr, double beta1, double beta2, double eps) {
    if (params.size() != grads.size() || params.size() != state.m.size())
        throw Error("adam_step: shape mismatch");
    state.t += 1;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(state.t));
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double g = static_cast<double>(grads[i]);
        const double m = beta1 * static_cast<double>(state.m[i]) + (1.0 - beta1) * g;
        const double v = beta2 * static_cast<double>(state.v[i]) + (1.0 - beta2) * g * g;
        state.m[i] = static_cast<T>(m);
        state.v[i] = static_cast<T>(v);
        const double mhat = m / bc1;
        const double vhat = v / bc2;
        params[i] = static_cast<T>(static_cast<double>(params[i]) - lr * mhat / (std::sqrt(vhat) + eps));
    }
}

template <typename T>
struct OptimizerState {
    AdamState<T> adam;
    explicit OptimizerState(const ParameterSet<T>& params) : adam(params.data.size()) {}
};

// Aborts with the offending region named, per the training contract.
template <typename T>
void check_finite_grads(const NetworkConfig& cfg, const ParameterSet<T>& grads) {
    auto scan = [&](std::size_t lo, std::size_t hi, const std::string& what) {
        for (std::size_t i = lo; i < hi; ++i)
            if (!std::isfinite(static_cast<double>(grads.data[i])))
                throw Error("non-finite gradient at " + what);
    };
    for (int j = 1; j <= cfg.depth; ++j)
        scan(grads.w_off[static_cast<std::size_t>(j) - 1],
             j == cfg.depth ? grads.w_off[static_cast<std::size_t>(cfg.depth)] : grads.w_off[static_cast<std::size_t>(j)],
             "layer " + std::to_string(j));
    scan(grads.w_off[static_cast<std::size_t>(cfg.depth)], grads.data.size(), "head");
}

template <typename T>
void adam_step(ParameterSet<T>& params, const ParameterSet<T>& grads, OptimizerState<T>& state,
               const TrainConfig& cfg, const NetworkConfig& net_cfg) {
    check_finite_grads(net_cfg, grads);
    adam_step_flat(params.data, grads.data, state.adam, cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.eps);
}

// Early stopping on the training-loss monitor (the pretraining protocol has
// no validation split). Counts epochs that fail to improve the monitor by
// min_delta; a monotone non-improving run of `patience` epochs stops training.
class EarlyStopper {
public:
    EarlyStopper(int patience, double min_delta) : patience_(patience), min_delta_(min_delta) {}

    // Returns true when training should stop after this observation.
    bool observe(double loss) {
        if (loss < best_ - min_delta_) {
            best_ = loss;
            bad_ = 0;
        } else {
            bad_ += 1;
        }
        return bad_ >= patience_;
    }

private:
    int patience_;
    double min_delta_;
    double best_ = std::numeric_limits<double>::infinity();
    int bad_ = 0;
};

// Gradient of the batch MSE over the full network, computed in fixed-size
// sample chunks that are reduced in chunk order: the result is bitwise
// independent of the worker count. Returns the batch loss.
template <typename T>
double batch_gradient(const NetworkConfig& cfg, const ParameterSet<T>& params, const SampleBatch& batch,
                      ParameterSet<T>& grads_out) {
    const std::size_t chunk = std::max<std::size_t>(8, batch.batch / 64);
    const std::size_t n_chunks = (batch.batch + chunk - 1) / chunk;
    std::vector<ParameterSet<T>> partial(n_chunks);
    std::vector<double> losses(n_chunks, 0.0);
    const std::size_t ed = static_cast<std::size_t>(batch.enc_dim);
    const std::size_t td = static_cast<std::size_t>(batch.target_dim);
    const double inv_total = 1.0 / static_cast<double>(batch.batch * td);

    parallel_for(n_chunks, [&](std::size_t c0, std::size_t c1) {
        for (std::size_t c = c0; c < c1; ++c) {
            const std::size_t lo = c * chunk;
            const std::size_t n = std::min(chunk, batch.batch - lo);
            std::vector<T> enc(batch.encodings.begin() + static_cast<std::ptrdiff_t>(lo * ed),
                               batch.encodings.begin() + static_cast<std::ptrdiff_t>((lo + n) * ed));
            auto res = forward(cfg, params, enc.data(), n, true, true);
            // dLoss/dpred for the full-batch mean: 2*(pred - target)/(B_total*V).
            std::vector<T> grad_out(n * td);
            double loss = 0.0;
            for (std::size_t i = 0; i < n * td; ++i) {
                const double d = static_cast<double>(res.head[i]) -
                                 static_cast<double>(batch.targets[(lo * td) + i]);
                loss += d * d;
                grad_out[i] = static_cast<T>(2.0 * d * inv_total);
            }
            losses[c] = loss;
            partial[c] = backward(cfg, params, res.trace, grad_out, true);
        }
    });

    grads_out = ParameterSet<T>::zeros(cfg);
    double loss_acc = 0.0;
    for (std::size_t c = 0; c < n_chunks; ++c) {
        for (std::size_t i = 0; i < grads_out.data.size(); ++i) grads_out.data[i] += partial[c].data[i];
        loss_acc += losses[c];
    }
    return loss_acc * inv_total;
}

// Deterministic mean loss of a parameter set over one sampler epoch (no
// updates); used for untrained baselines and sweep reporting.
template <typename T>
double evaluate_epoch_loss(const ClimGrid& grid, const NetworkConfig& cfg, const ParameterSet<T>& params,
                           const TrainConfig& train, std::uint64_t epoch_index) {
    EpochSampler sampler(grid, static_cast<std::size_t>(train.batch_size), subseed(train.seed, "train"),
                         epoch_index, train.march_only, train.concat_months);
    SampleBatch batch;
    double loss_sum = 0.0;
    std::size_t count = 0;
    while (sampler.next(batch)) {
        std::vector<T> enc(batch.encodings.begin(), batch.encodings.end());
        auto res = forward(cfg, params, enc.data(), batch.batch, false, true);
        for (std::size_t i = 0; i < res.head.size(); ++i) {
            const double d = static_cast<double>(res.head[i]) - static_cast<double>(batch.targets[i]);
            loss_sum += d * d;
        }
        count += res.head.size();
    }
    return loss_sum / static_cast<double>(count);
}

struct PretrainResult {
    Checkpoint checkpoint;
    std::vector<double> loss_history; // per-epoch mean training loss
    std::vector<double> epoch_seconds;
    int best_epoch = 0;
    std::uint64_t total_steps = 0;
};

// Climatic pretraining: per epoch, one shuffled pass over the land pixels with
// uniform months (or the March-Only / Concat-Months variants), Adam updates,
// best-loss checkpoint retention, early stopping on the epoch-mean loss.
inline PretrainResult pretrain(const ClimGrid& grid, const NetworkConfig& net_cfg, const TrainConfig& train) {
    net_cfg.validate();
    train.validate();
    if (!grid.normalized()) throw Error("pretrain: grid normalization not fitted");
    const int want_in = train.concat_months ? 2 : 4;
    const int want_out = static_cast<int>(train.concat_months ? 12 * grid.n_vars : grid.n_vars);
    if (net_cfg.input_dim != want_in)
        throw Error("pretrain: input_dim must be " + std::to_string(want_in) + " for this month mode");
    if (net_cfg.output_dim != want_out)
        throw Error("pretrain: output_dim must be " + std::to_string(want_out) + " (grid variables)");

    auto params = init_parameters<float>(net_cfg, subseed(train.seed, "init"));
    OptimizerState<float> opt(params);
    EarlyStopper stopper(train.patience, train.min_delta);

    PretrainResult result;
    ParameterSet<float> best_params = params;
    double best_loss = std::numeric_limits<double>::infinity();
    std::uint64_t best_steps = 0;
    ParameterSet<float> grads;

    for (int epoch = 0; epoch < train.max_epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        EpochSampler sampler(grid, static_cast<std::size_t>(train.batch_size), subseed(train.seed, "train"),
                             static_cast<std::uint64_t>(epoch), train.march_only, train.concat_months);
        SampleBatch batch;
        double loss_sum = 0.0;
        std::size_t sample_count = 0;
        while (sampler.next(batch)) {
            const double loss = batch_gradient(net_cfg, params, batch, grads);
            adam_step(params, grads, opt, train, net_cfg);
            loss_sum += loss * static_cast<double>(batch.batch);
            sample_count += batch.batch;
            result.total_steps += 1;
        }
        const double epoch_loss = loss_sum / static_cast<double>(sample_count);
        if (!std::isfinite(epoch_loss))
            throw Error("pretrain: non-finite loss at epoch " + std::to_string(epoch));
        result.loss_history.push_back(epoch_loss);
        result.epoch_seconds.push_back(
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());

        if (epoch_loss < best_loss) { // strict: the retained checkpoint is the history minimum
            best_loss = epoch_loss;
            best_params = params;
            best_steps = result.total_steps;
            result.best_epoch = epoch;
        }
        if (stopper.observe(epoch_loss)) break;
    }

    result.checkpoint.config = net_cfg;
    result.checkpoint.params = std::move(best_params);
    result.checkpoint.norm = grid.norm;
    result.checkpoint.steps = best_steps;
    result.checkpoint.final_loss = best_loss;
    result.checkpoint.seed = train.seed;
    return result;
}

inline void save_loss_history_csv(const std::string& path, const PretrainResult& result) {
    std::ofstream out(path);
    if (!out) throw Error("cannot open for writing: " + path);
    out << "epoch,mean_loss,wallclock_s\n";
    char buf[96];
    for (std::size_t e = 0; e < result.loss_history.size(); ++e) {
        std::snprintf(buf, sizeof buf, "%zu,%.17g,%.3f\n", e, result.loss_history[e], result.epoch_seconds[e]);
        out << buf;
    }
}

} // namespace resiren
