#pragma once

// Downstream evaluation: frozen-checkpoint embedding providers, task losses
// (softmax CE, AN-full), metrics, and the ten-init probe suite with its
// from-scratch baselines.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

#include "resiren/checkpoint.hpp"
#include "resiren/mlp.hpp"
#include "resiren/net.hpp"
#include "resiren/parallel.hpp"
#include "resiren/tasks.hpp"
#include "resiren/train.hpp"

namespace resiren {

// ---------------------------------------------------------------------------
// Embedding providers

enum class MonthPolicy : std::uint8_t {
    Observation,    // encode the record's own month (SDM convention)
    SeasonalConcat, // concat embeddings for months 3, 6, 9, 12 (static tasks)
    RecValues,      // head outputs (reconstructed variables) instead of embeddings
};

inline const char* to_string(MonthPolicy p) {
    switch (p) {
        case MonthPolicy::Observation: return "obs-month";
        case MonthPolicy::SeasonalConcat: return "seasonal-concat";
        case MonthPolicy::RecValues: return "rec-values";
    }
    return "?";
}

struct EmbeddingProvider {
    Checkpoint checkpoint;
    MonthPolicy policy = MonthPolicy::Observation;

    int feature_dim() const {
        switch (policy) {
            case MonthPolicy::SeasonalConcat: return 4 * checkpoint.config.embedding_dim;
            case MonthPolicy::RecValues: return checkpoint.config.output_dim;
            default: return checkpoint.config.embedding_dim;
        }
    }

    std::string describe() const {
        return "resiren-d" + std::to_string(checkpoint.config.depth) + "/" + to_string(policy);
    }
};

namespace detail {

// Encoding with exactly cfg.input_dim components, overriding the month when
// month_override > 0 (used by the seasonal concat policy).
inline void encode_for_config(const NetworkConfig& cfg, const GeoTemporalPoint& pt, int month_override,
                              float* out) {
    if (cfg.input_dim == 2) {
        const auto e = encode_location_only(pt);
        out[0] = static_cast<float>(e.values[0]);
        out[1] = static_cast<float>(e.values[1]);
        return;
    }
    GeoTemporalPoint p = pt;
    if (month_override > 0) p.month = month_override;
    if (cfg.input_dim == 4) p.epoch.reset();
    if (cfg.input_dim == 5 && !p.epoch)
        throw Error("embed: checkpoint expects an epoch component but the point has none");
    p.validate();
    const auto e = encode_position(p);
    for (std::size_t i = 0; i < e.values.size(); ++i) out[i] = static_cast<float>(e.values[i]);
}

} // namespace detail

// Feature matrix [points.size()][provider.feature_dim()], row-major.
inline std::vector<double> embed(const EmbeddingProvider& provider,
                                 const std::vector<GeoTemporalPoint>& points) {
    const NetworkConfig& cfg = provider.checkpoint.config;
    const std::size_t n = points.size();
    const std::size_t fd = static_cast<std::size_t>(provider.feature_dim());
    std::vector<double> features(n * fd, 0.0);
    if (n == 0) return features;

    auto run_month = [&](int month_override, std::size_t col0, std::size_t width, bool with_head) {
        std::vector<float> enc(n * static_cast<std::size_t>(cfg.input_dim));
        for (std::size_t i = 0; i < n; ++i)
            detail::encode_for_config(cfg, points[i], month_override,
                                      enc.data() + i * static_cast<std::size_t>(cfg.input_dim));
        auto res = forward(cfg, provider.checkpoint.params, enc.data(), n, false, with_head);
        const std::vector<float>& src = with_head ? res.head : res.embeddings;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t c = 0; c < width; ++c)
                features[i * fd + col0 + c] = static_cast<double>(src[i * width + c]);
    };

    switch (provider.policy) {
        case MonthPolicy::Observation:
            run_month(0, 0, fd, false);
            break;
        case MonthPolicy::SeasonalConcat: {
            const std::size_t emb = static_cast<std::size_t>(cfg.embedding_dim);
            int slot = 0;
            for (int month : {3, 6, 9, 12}) run_month(month, static_cast<std::size_t>(slot++) * emb, emb, false);
            break;
        }
        case MonthPolicy::RecValues:
            run_month(0, 0, fd, true);
            break;
    }
    return features;
}

// ---------------------------------------------------------------------------
// Losses

// Numerically stable log(sigmoid(x)).
inline double log_sigmoid(double x) {
    return x < 0.0 ? x - std::log1p(std::exp(x)) : -std::log1p(std::exp(-x));
}

inline double sigmoid(double x) {
    return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

struct SoftmaxCeResult {
    double loss = 0.0;
    std::vector<double> grad; // dLoss/dlogits, [B][C]
};

inline SoftmaxCeResult softmax_cross_entropy(const std::vector<double>& logits, std::size_t batch,
                                             int n_classes, const std::vector<int>& labels) {
    if (logits.size() != batch * static_cast<std::size_t>(n_classes) || labels.size() != batch)
        throw Error("softmax_cross_entropy: shape mismatch");
    SoftmaxCeResult res;
    res.grad.assign(logits.size(), 0.0);
    const double inv_b = 1.0 / static_cast<double>(batch);
    for (std::size_t i = 0; i < batch; ++i) {
        const int y = labels[i];
        if (y < 0 || y >= n_classes) throw Error("softmax_cross_entropy: label out of range");
        const double* row = logits.data() + i * static_cast<std::size_t>(n_classes);
        double* grow = res.grad.data() + i * static_cast<std::size_t>(n_classes);
        const double mx = *std::max_element(row, row + n_classes);
        double denom = 0.0;
        for (int c = 0; c < n_classes; ++c) denom += std::exp(row[c] - mx);
        res.loss += -(row[y] - mx - std::log(denom)) * inv_b;
        for (int c = 0; c < n_classes; ++c)
            grow[c] = (std::exp(row[c] - mx) / denom - (c == y ? 1.0 : 0.0)) * inv_b;
    }
    return res;
}

struct AnFullResult {
    double loss = 0.0;
    std::vector<double> grad_scores; // [B][S]
    std::vector<double> grad_bg;     // [B][S]
};

// AN-full with background sampling: per record i with true species s,
//   −[ S·log σ(score_{i,s}) + Σ_{s′≠s} log(1−σ(score_{i,s′}))
//      + Σ_{s′} log(1−σ(bg_{i,s′})) ] / S,
// averaged over the batch. The positive term carries weight λ = S.
inline AnFullResult anfull_loss(const std::vector<double>& scores, std::size_t batch, int n_species,
                                const std::vector<int>& species, const std::vector<double>& bg_scores) {
    const std::size_t S = static_cast<std::size_t>(n_species);
    if (scores.size() != batch * S || bg_scores.size() != batch * S || species.size() != batch)
        throw Error("anfull_loss: shape mismatch");
    AnFullResult res;
    res.grad_scores.assign(scores.size(), 0.0);
    res.grad_bg.assign(bg_scores.size(), 0.0);
    const double inv = 1.0 / (static_cast<double>(batch) * static_cast<double>(S));
    for (std::size_t i = 0; i < batch; ++i) {
        const int s = species[i];
        if (s < 0 || s >= n_species) throw Error("anfull_loss: species id out of range");
        const double* sc = scores.data() + i * S;
        const double* bg = bg_scores.data() + i * S;
        double* gsc = res.grad_scores.data() + i * S;
        double* gbg = res.grad_bg.data() + i * S;
        double acc = 0.0;
        for (int c = 0; c < n_species; ++c) {
            if (c == s) {
                acc += static_cast<double>(n_species) * log_sigmoid(sc[c]);
                gsc[c] = -static_cast<double>(n_species) * (1.0 - sigmoid(sc[c])) * inv;
            } else {
                acc += log_sigmoid(-sc[c]); // log(1 − σ)
                gsc[c] = sigmoid(sc[c]) * inv;
            }
            acc += log_sigmoid(-bg[c]);
            gbg[c] = sigmoid(bg[c]) * inv;
        }
        res.loss += -acc * inv;
    }
    return res;
}

// ---------------------------------------------------------------------------
// Metrics

// Unweighted mean of per-class F1; a class absent from both predictions and
// truth contributes 0.
inline double metric_macro_f1(const std::vector<int>& pred, const std::vector<int>& truth, int n_classes) {
    if (pred.size() != truth.size() || pred.empty()) throw Error("metric_macro_f1: shape mismatch");
    if (n_classes < 1) throw Error("metric_macro_f1: n_classes must be >= 1");
    std::vector<std::size_t> tp(static_cast<std::size_t>(n_classes), 0), fp(tp), fn(tp);
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const int p = pred[i], t = truth[i];
        if (p < 0 || p >= n_classes || t < 0 || t >= n_classes)
            throw Error("metric_macro_f1: class id out of range");
        if (p == t) tp[static_cast<std::size_t>(p)] += 1;
        else {
            fp[static_cast<std::size_t>(p)] += 1;
            fn[static_cast<std::size_t>(t)] += 1;
        }
    }
    double sum = 0.0;
    for (int c = 0; c < n_classes; ++c) {
        const std::size_t cc = static_cast<std::size_t>(c);
        const double denom = static_cast<double>(2 * tp[cc] + fp[cc] + fn[cc]);
        sum += denom > 0.0 ? 2.0 * static_cast<double>(tp[cc]) / denom : 0.0;
    }
    return sum / static_cast<double>(n_classes);
}

// Argmax with ties broken toward the lowest index.
inline int argmax_row(const double* row, int n) {
    int best = 0;
    for (int c = 1; c < n; ++c)
        if (row[c] > row[best]) best = c;
    return best;
}

inline double metric_top1(const std::vector<double>& scores, std::size_t n, int n_classes,
                          const std::vector<int>& truth) {
    if (scores.size() != n * static_cast<std::size_t>(n_classes) || truth.size() != n || n == 0)
        throw Error("metric_top1: shape mismatch");
    std::size_t hit = 0;
    for (std::size_t i = 0; i < n; ++i)
        if (argmax_row(scores.data() + i * static_cast<std::size_t>(n_classes), n_classes) == truth[i]) hit += 1;
    return static_cast<double>(hit) / static_cast<double>(n);
}

// Per-target R² = 1 − SSE/SST (SST about the evaluated split's mean), averaged
// over targets; a zero-variance target contributes 0.
inline double metric_r2(const std::vector<double>& pred, const std::vector<double>& truth, std::size_t n,
                        int n_targets) {
    if (pred.size() != n * static_cast<std::size_t>(n_targets) || truth.size() != pred.size() || n == 0)
        throw Error("metric_r2: shape mismatch");
    double sum = 0.0;
    for (int t = 0; t < n_targets; ++t) {
        double mean = 0.0;
        for (std::size_t i = 0; i < n; ++i) mean += truth[i * static_cast<std::size_t>(n_targets) + t];
        mean /= static_cast<double>(n);
        double sse = 0.0, sst = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double y = truth[i * static_cast<std::size_t>(n_targets) + t];
            const double d = y - pred[i * static_cast<std::size_t>(n_targets) + t];
            sse += d * d;
            sst += (y - mean) * (y - mean);
        }
        sum += sst > 0.0 ? 1.0 - sse / sst : 0.0;
    }
    return sum / static_cast<double>(n_targets);
}

// ---------------------------------------------------------------------------
// Probe specification and data

enum class ProbeKind : std::uint8_t { SingleLayer, Mlp };
enum class BaselineKind : std::uint8_t { None, FsLoc, FsCh, FsLocCh };

inline const char* to_string(ProbeKind k) { return k == ProbeKind::SingleLayer ? "linear" : "mlp"; }

inline const char* to_string(BaselineKind k) {
    switch (k) {
        case BaselineKind::FsLoc: return "fs-loc";
        case BaselineKind::FsCh: return "fs-ch";
        case BaselineKind::FsLocCh: return "fs-loc-ch";
        default: return "none";
    }
}

struct ProbeSpec {
    ProbeKind kind = ProbeKind::SingleLayer;
    BaselineKind baseline = BaselineKind::None; // replaces the provider when set
    int n_inits = 10;
    double learning_rate = 1e-3;
    int max_epochs = 100;
    int batch_size = 256;
    int patience = 10; // epochs without a new best validation metric

    void validate() const {
        if (n_inits < 1) throw Error("ProbeSpec.n_inits must be >= 1");
        if (!(learning_rate > 0.0)) throw Error("ProbeSpec.learning_rate must be > 0");
        if (max_epochs < 1 || batch_size < 1 || patience < 1)
            throw Error("ProbeSpec.max_epochs/batch_size/patience must be >= 1");
    }
};

// Feature/target view of a task, ready to fit. Built from a provider + dataset
// (or a from-scratch baseline), or assembled directly for toy problems.
struct ProbeProblem {
    TaskDataset::Kind kind = TaskDataset::Kind::Classification;
    int feature_dim = 0;
    int out_dim = 0; // classes, species, or regression targets
    std::vector<double> features; // [N][feature_dim]
    std::vector<int> labels;      // classification / sdm
    std::vector<double> targets;  // regression, [N][out_dim]
    std::vector<std::size_t> train_idx, val_idx, test_idx;
    std::vector<double> bg_features; // sdm: [train_idx.size()][feature_dim]

    void validate() const {
        if (feature_dim < 1 || out_dim < 1) throw Error("ProbeProblem: dims must be >= 1");
        if (train_idx.empty() || val_idx.empty() || test_idx.empty())
            throw Error("ProbeProblem: all three splits must be non-empty");
        if (kind == TaskDataset::Kind::Sdm &&
            bg_features.size() != train_idx.size() * static_cast<std::size_t>(feature_dim))
            throw Error("ProbeProblem: background features must cover the train split");
        if (kind == TaskDataset::Kind::Classification || kind == TaskDataset::Kind::Sdm) {
            std::vector<char> seen(static_cast<std::size_t>(out_dim), 0);
            int distinct = 0;
            for (std::size_t i : train_idx)
                if (!seen[static_cast<std::size_t>(labels[i])]) {
                    seen[static_cast<std::size_t>(labels[i])] = 1;
                    distinct += 1;
                }
            if (distinct < 2) throw Error("ProbeProblem: degenerate targets (single class in train)");
        }
    }

    std::size_t n_records() const {
        return kind == TaskDataset::Kind::Regression
                   ? targets.size() / static_cast<std::size_t>(out_dim)
                   : labels.size();
    }

    std::vector<double> gather_features(const std::vector<std::size_t>& idx) const {
        const std::size_t fd = static_cast<std::size_t>(feature_dim);
        std::vector<double> out(idx.size() * fd);
        for (std::size_t k = 0; k < idx.size(); ++k)
            std::copy_n(features.data() + idx[k] * fd, fd, out.data() + k * fd);
        return out;
    }
};

// Raw normalized variables at a point's pixel for months 3, 6, 9, 12 — the
// FS-CH input representation.
inline void seasonal_raw_features(const ClimGrid& grid, const GeoTemporalPoint& pt, double* out) {
    if (!grid.normalized()) throw Error("seasonal_raw_features: grid normalization not fitted");
    const std::uint32_t ix = grid.pixel_ix(pt.lon_deg);
    const std::uint32_t iy = grid.pixel_iy(pt.lat_deg);
    std::size_t k = 0;
    for (int month : {3, 6, 9, 12})
        for (int v = 0; v < static_cast<int>(grid.n_vars); ++v)
            out[k++] = grid.normalized_value(month, v, iy, ix);
}

inline int baseline_feature_dim(BaselineKind kind, const ClimGrid& grid) {
    switch (kind) {
        case BaselineKind::FsLoc: return 2;
        case BaselineKind::FsCh: return 4 * static_cast<int>(grid.n_vars);
        case BaselineKind::FsLocCh: return 2 + 4 * static_cast<int>(grid.n_vars);
        default: throw Error("baseline_feature_dim: not a baseline");
    }
}

inline void baseline_features(BaselineKind kind, const ClimGrid& grid, const GeoTemporalPoint& pt,
                              double* out) {
    std::size_t off = 0;
    if (kind == BaselineKind::FsLoc || kind == BaselineKind::FsLocCh) {
        const auto e = encode_location_only(pt);
        out[off++] = e.values[0];
        out[off++] = e.values[1];
    }
    if (kind == BaselineKind::FsCh || kind == BaselineKind::FsLocCh)
        seasonal_raw_features(grid, pt, out + off);
}

// Assembles features and split indices. `grid` is required for baselines and
// for SDM background sampling; pass nullptr otherwise.
inline ProbeProblem build_probe_problem(const EmbeddingProvider* provider, const TaskDataset& dataset,
                                        const ProbeSpec& spec, const ClimGrid* grid, std::uint64_t seed) {
    spec.validate();
    if (dataset.records.empty()) throw Error("build_probe_problem: empty dataset");
    const bool baseline = spec.baseline != BaselineKind::None;
    if (!baseline && provider == nullptr)
        throw Error("build_probe_problem: provider required unless a baseline is selected");
    if (baseline && grid == nullptr) throw Error("build_probe_problem: baselines require the grid");

    ProbeProblem prob;
    prob.kind = dataset.kind;
    prob.out_dim = dataset.kind == TaskDataset::Kind::Regression ? dataset.n_targets : dataset.n_classes;
    prob.feature_dim = baseline ? baseline_feature_dim(spec.baseline, *grid) : provider->feature_dim();

    std::vector<GeoTemporalPoint> points;
    points.reserve(dataset.records.size());
    for (const auto& rec : dataset.records) points.push_back(rec.pt);

    const std::size_t fd = static_cast<std::size_t>(prob.feature_dim);
    if (baseline) {
        prob.features.assign(points.size() * fd, 0.0);
        for (std::size_t i = 0; i < points.size(); ++i)
            baseline_features(spec.baseline, *grid, points[i], prob.features.data() + i * fd);
    } else {
        prob.features = embed(*provider, points);
    }

    for (std::size_t i = 0; i < dataset.records.size(); ++i) {
        const auto& rec = dataset.records[i];
        switch (rec.split) {
            case Split::Train: prob.train_idx.push_back(i); break;
            case Split::Val: prob.val_idx.push_back(i); break;
            case Split::Test: prob.test_idx.push_back(i); break;
        }
        if (dataset.kind == TaskDataset::Kind::Regression)
            prob.targets.insert(prob.targets.end(), rec.y.begin(), rec.y.end());
        else
            prob.labels.push_back(rec.label);
    }

    if (dataset.kind == TaskDataset::Kind::Sdm) {
        if (grid == nullptr) throw Error("build_probe_problem: sdm background sampling requires the grid");
        // One background location per train record, uniform over land with a
        // uniform month, drawn once per suite.
        Rng rng(subseed(seed, "background"));
        const auto land = grid->land_pixels();
        if (land.empty()) throw Error("build_probe_problem: grid has no land pixels");
        std::vector<GeoTemporalPoint> bg_points;
        bg_points.reserve(prob.train_idx.size());
        for (std::size_t k = 0; k < prob.train_idx.size(); ++k) {
            const auto px = land[static_cast<std::size_t>(rng.uniform_int(land.size()))];
            const int month = static_cast<int>(rng.uniform_int(12)) + 1;
            bg_points.push_back(detail::pixel_point(*grid, px, month));
        }
        if (baseline) {
            prob.bg_features.assign(bg_points.size() * fd, 0.0);
            for (std::size_t i = 0; i < bg_points.size(); ++i)
                baseline_features(spec.baseline, *grid, bg_points[i], prob.bg_features.data() + i * fd);
        } else {
            prob.bg_features = embed(*provider, bg_points);
        }
    }

    prob.validate();
    return prob;
}

// ---------------------------------------------------------------------------
// Fitting

namespace detail {

// Probe heads share one trainer; the two model families (dense nets and the
// end-to-end sine net of FS-Loc) expose the same forward/backward surface.
struct MlpModel {
    Mlp net;
    MlpTrace trace;

    static MlpModel make(const ProbeProblem& prob, const ProbeSpec& spec, std::uint64_t seed) {
        MlpConfig cfg;
        cfg.in_dim = prob.feature_dim;
        cfg.out_dim = prob.out_dim;
        if (spec.baseline == BaselineKind::FsCh || spec.baseline == BaselineKind::FsLocCh) {
            cfg.hidden = {64, 64, 64, 64}; // 4-layer residual net
            cfg.activation = MlpActivation::Relu;
            cfg.residual = true;
        } else if (spec.kind == ProbeKind::Mlp) {
            cfg.hidden = {64, 64, 64};
            cfg.activation = MlpActivation::Tanh;
        }
        return MlpModel{Mlp::init(cfg, subseed(seed, "probe-init")), {}};
    }

    std::vector<double>& flat() { return net.params; }
    std::vector<double> forward(const double* x, std::size_t batch, bool keep_trace) {
        return net.forward(x, batch, keep_trace ? &trace : nullptr);
    }
    std::vector<double> backward(const std::vector<double>& grad_out) {
        return net.backward(trace, grad_out);
    }
};

// FS-Loc: a small ReSIREN over [lon/180, lat/90] trained end to end on the
// task; the head produces the task outputs directly.
struct SineModel {
    NetworkConfig cfg;
    ParameterSet<double> params;
    ForwardTrace<double> trace;

    static SineModel make(const ProbeProblem& prob, std::uint64_t seed) {
        NetworkConfig cfg;
        cfg.depth = 4;
        cfg.input_dim = 2;
        cfg.hidden_dim = 64;
        cfg.embedding_dim = 64;
        cfg.output_dim = prob.out_dim;
        SineModel m{cfg, init_parameters<double>(cfg, subseed(seed, "probe-init")), {}};
        return m;
    }

    std::vector<double>& flat() { return params.data; }
    std::vector<double> forward(const double* x, std::size_t batch, bool keep_trace) {
        auto res = resiren::forward(cfg, params, x, batch, keep_trace, true);
        if (keep_trace) trace = std::move(res.trace);
        return std::move(res.head);
    }
    std::vector<double> backward(const std::vector<double>& grad_out) {
        return resiren::backward(cfg, params, trace, grad_out, true).data;
    }
};

template <typename Model>
double split_metric(Model& model, const ProbeProblem& prob, const std::vector<std::size_t>& idx) {
    const auto feats = prob.gather_features(idx);
    auto out = model.forward(feats.data(), idx.size(), false);
    switch (prob.kind) {
        case TaskDataset::Kind::Classification: {
            std::vector<int> pred(idx.size()), truth(idx.size());
            for (std::size_t k = 0; k < idx.size(); ++k) {
                pred[k] = argmax_row(out.data() + k * static_cast<std::size_t>(prob.out_dim), prob.out_dim);
                truth[k] = prob.labels[idx[k]];
            }
            return metric_macro_f1(pred, truth, prob.out_dim);
        }
        case TaskDataset::Kind::Sdm: {
            std::vector<int> truth(idx.size());
            for (std::size_t k = 0; k < idx.size(); ++k) truth[k] = prob.labels[idx[k]];
            return metric_top1(out, idx.size(), prob.out_dim, truth);
        }
        case TaskDataset::Kind::Regression: {
            std::vector<double> truth(idx.size() * static_cast<std::size_t>(prob.out_dim));
            for (std::size_t k = 0; k < idx.size(); ++k)
                std::copy_n(prob.targets.data() + idx[k] * static_cast<std::size_t>(prob.out_dim),
                            static_cast<std::size_t>(prob.out_dim),
                            truth.data() + k * static_cast<std::size_t>(prob.out_dim));
            return metric_r2(out, truth, idx.size(), prob.out_dim);
        }
    }
    throw Error("split_metric: unreachable");
}

template <typename Model>
struct FitOutcome {
    Model model;
    double val_metric = 0.0;
    double test_metric = 0.0;
    int best_epoch = -1;
};

// Adam minibatch training with best-validation-epoch selection (strict
// improvement, so ties resolve to the earlier epoch).
template <typename Model>
FitOutcome<Model> fit_model(Model model, const ProbeProblem& prob, const ProbeSpec& spec,
                            std::uint64_t seed) {
    const std::size_t n_train = prob.train_idx.size();
    const std::size_t fd = static_cast<std::size_t>(prob.feature_dim);
    const std::size_t od = static_cast<std::size_t>(prob.out_dim);
    AdamState<double> adam(model.flat().size());

    std::vector<double> best_params = model.flat();
    double best_val = -std::numeric_limits<double>::infinity();
    int best_epoch = -1, bad = 0;

    std::vector<double> bx, bt;
    std::vector<int> bl;
    for (int epoch = 0; epoch < spec.max_epochs; ++epoch) {
        Rng shuffle_rng(subseed(seed, "probe-shuffle", static_cast<std::uint64_t>(epoch)));
        const auto perm = shuffle_rng.permutation(static_cast<std::uint32_t>(n_train));
        for (std::size_t lo = 0; lo < n_train; lo += static_cast<std::size_t>(spec.batch_size)) {
            const std::size_t b = std::min(static_cast<std::size_t>(spec.batch_size), n_train - lo);
            bx.assign(b * fd, 0.0);
            for (std::size_t k = 0; k < b; ++k)
                std::copy_n(prob.features.data() + prob.train_idx[perm[lo + k]] * fd, fd,
                            bx.data() + k * fd);
            auto out = model.forward(bx.data(), b, true);

            std::vector<double> grads;
            if (prob.kind == TaskDataset::Kind::Classification) {
                bl.assign(b, 0);
                for (std::size_t k = 0; k < b; ++k) bl[k] = prob.labels[prob.train_idx[perm[lo + k]]];
                auto ce = softmax_cross_entropy(out, b, prob.out_dim, bl);
                grads = model.backward(ce.grad);
            } else if (prob.kind == TaskDataset::Kind::Regression) {
                bt.assign(b * od, 0.0);
                for (std::size_t k = 0; k < b; ++k)
                    std::copy_n(prob.targets.data() + prob.train_idx[perm[lo + k]] * od, od,
                                bt.data() + k * od);
                grads = model.backward(mse_loss_grad(out, bt));
            } else { // Sdm: AN-full needs a second pass over the background rows
                bl.assign(b, 0);
                bt.assign(b * fd, 0.0); // background features for this batch
                for (std::size_t k = 0; k < b; ++k) {
                    bl[k] = prob.labels[prob.train_idx[perm[lo + k]]];
                    std::copy_n(prob.bg_features.data() + static_cast<std::size_t>(perm[lo + k]) * fd, fd,
                                bt.data() + k * fd);
                }
                auto obs_out = out;
                auto an_probe = model; // scoring backgrounds must not clobber the obs trace
                auto bg_out = an_probe.forward(bt.data(), b, true);
                auto an = anfull_loss(obs_out, b, prob.out_dim, bl, bg_out);
                grads = model.backward(an.grad_scores);
                const auto bg_grads = an_probe.backward(an.grad_bg);
                for (std::size_t i = 0; i < grads.size(); ++i) grads[i] += bg_grads[i];
            }
            adam_step_flat(model.flat(), grads, adam, spec.learning_rate, 0.9, 0.999, 1e-8);
        }

        const double val = split_metric(model, prob, prob.val_idx);
        if (val > best_val) {
            best_val = val;
            best_params = model.flat();
            best_epoch = epoch;
            bad = 0;
        } else if (++bad >= spec.patience) {
            break;
        }
    }

    model.flat() = best_params;
    FitOutcome<Model> outcome{std::move(model), best_val, 0.0, best_epoch};
    outcome.test_metric = split_metric(outcome.model, prob, prob.test_idx);
    return outcome;
}

} // namespace detail

inline const char* metric_name_for(TaskDataset::Kind kind) {
    switch (kind) {
        case TaskDataset::Kind::Classification: return "macro_f1";
        case TaskDataset::Kind::Sdm: return "top1_accuracy";
        case TaskDataset::Kind::Regression: return "r2";
    }
    return "?";
}

// One probe fit; the returned test metric uses the best-validation parameters.
struct FitResult {
    double val_metric = 0.0;
    double test_metric = 0.0;
    int best_epoch = -1;
};

inline FitResult fit_probe(const ProbeProblem& prob, const ProbeSpec& spec, std::uint64_t seed) {
    prob.validate();
    spec.validate();
    if (spec.baseline == BaselineKind::FsLoc) {
        auto out = detail::fit_model(detail::SineModel::make(prob, seed), prob, spec, seed);
        return {out.val_metric, out.test_metric, out.best_epoch};
    }
    auto out = detail::fit_model(detail::MlpModel::make(prob, spec, seed), prob, spec, seed);
    return {out.val_metric, out.test_metric, out.best_epoch};
}

struct ProbeReport {
    std::string task, provider, probe_kind, metric;
    double mean = 0.0;
    double stddev = 0.0; // population std over the per-seed values
    std::vector<double> per_seed; // index = probe seed (0..n_inits-1)

    static std::string csv_header() { return "provider,task,probe_kind,metric,mean,std,seeds"; }

    std::string csv_row() const {
        char buf[64];
        std::string row = provider + "," + task + "," + probe_kind + "," + metric;
        std::snprintf(buf, sizeof buf, ",%.10g,%.10g", mean, stddev);
        row += buf;
        for (std::size_t i = 0; i < per_seed.size(); ++i) {
            std::snprintf(buf, sizeof buf, "%s%.10g", i == 0 ? "," : ";", per_seed[i]);
            row += buf;
        }
        return row;
    }
};

// Trains n_inits probes with seeds 0..n_inits−1 (concurrently; each fit owns
// its parameters) and reports mean ± population std of the test metric.
inline ProbeReport run_probe_suite(const EmbeddingProvider* provider, const TaskDataset& dataset,
                                   const ProbeSpec& spec, const ClimGrid* grid, std::uint64_t seed) {
    const ProbeProblem prob = build_probe_problem(provider, dataset, spec, grid, seed);

    ProbeReport report;
    report.task = dataset.name.empty() ? "task" : dataset.name;
    report.provider = spec.baseline != BaselineKind::None ? to_string(spec.baseline)
                                                          : provider->describe();
    report.probe_kind = spec.baseline != BaselineKind::None ? "end-to-end" : to_string(spec.kind);
    report.metric = metric_name_for(dataset.kind);
    report.per_seed.assign(static_cast<std::size_t>(spec.n_inits), 0.0);

    parallel_for(static_cast<std::size_t>(spec.n_inits), [&](std::size_t lo, std::size_t hi) {
        for (std::size_t s = lo; s < hi; ++s)
            report.per_seed[s] = fit_probe(prob, spec, s).test_metric;
    });

    double mean = 0.0;
    for (double v : report.per_seed) mean += v;
    mean /= static_cast<double>(spec.n_inits);
    double var = 0.0;
    for (double v : report.per_seed) var += (v - mean) * (v - mean);
    report.mean = mean;
    report.stddev = std::sqrt(var / static_cast<double>(spec.n_inits));
    return report;
}

} // namespace resiren
