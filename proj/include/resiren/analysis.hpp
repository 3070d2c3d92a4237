#pragma once

// Post-training analysis: reconstruction-error reports, the SIREN-vs-ReSIREN
// depth sweep, the ablation table, and prediction-grid export.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "resiren/probe.hpp"
#include "resiren/train.hpp"

namespace resiren {

// ---------------------------------------------------------------------------
// Reconstruction error

struct VariableErrorSummary {
    double q05 = 0.0, q25 = 0.0, q50 = 0.0, q75 = 0.0, q95 = 0.0;
    double mae = 0.0;
    double mean_log = 0.0; // mean of log10(err + 1e-12); the log keeps heavy tails readable
};

struct ErrorReport {
    double global_mae = 0.0;
    std::vector<VariableErrorSummary> per_var;
    std::array<double, 12> month_mae{};
    // Spatial mean-absolute-error cells covering the grid extent exactly,
    // row 0 southmost.
    int cell_rows = 0, cell_cols = 0;
    std::vector<double> cell_mae;
    std::vector<std::uint64_t> cell_count;
    std::vector<double> cell_truth_var; // population variance of the truth values per cell
};

// Predictions in normalized space for a point batch, [N][n_vars]; the month
// comes from each point.
using PredictFn = std::function<std::vector<double>(const std::vector<GeoTemporalPoint>&)>;

namespace detail {

inline double pool_quantile(std::vector<float>& pool, double q) {
    // Linear interpolation on the sorted pool; callers sort once beforehand.
    const double pos = q * static_cast<double>(pool.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(pos);
    const std::size_t hi = std::min(lo + 1, pool.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return (1.0 - frac) * pool[lo] + frac * pool[hi];
}

} // namespace detail

// Samples n_locations land pixels uniformly (with replacement), evaluates the
// prediction at all 12 months, and aggregates |prediction − truth| in
// normalized space per variable, per month, and per spatial cell.
inline ErrorReport reconstruction_error(const PredictFn& predict, const ClimGrid& grid,
                                        std::size_t n_locations, std::uint64_t seed, int cell_rows = 136,
                                        int cell_cols = 320) {
    if (!grid.normalized()) throw Error("reconstruction_error: grid normalization not fitted");
    if (n_locations == 0) throw Error("reconstruction_error: n_locations must be >= 1");
    if (cell_rows < 1 || cell_cols < 1) throw Error("reconstruction_error: cell grid must be >= 1x1");

    Rng rng(subseed(seed, "recon"));
    const auto land = grid.land_pixels();
    if (land.empty()) throw Error("reconstruction_error: grid has no land pixels");
    std::vector<std::uint32_t> pixels(n_locations);
    for (auto& px : pixels) px = land[static_cast<std::size_t>(rng.uniform_int(land.size()))];

    ErrorReport report;
    report.cell_rows = cell_rows;
    report.cell_cols = cell_cols;
    const std::size_t n_cells = static_cast<std::size_t>(cell_rows) * static_cast<std::size_t>(cell_cols);
    std::vector<double> cell_err(n_cells, 0.0), cell_tsum(n_cells, 0.0), cell_tsq(n_cells, 0.0);
    report.cell_count.assign(n_cells, 0);

    const std::size_t V = grid.n_vars;
    std::vector<std::vector<float>> pools(V); // per-variable |err| pools for the quantiles
    for (auto& p : pools) p.reserve(n_locations * 12);
    std::vector<double> var_err_sum(V, 0.0), var_log_sum(V, 0.0);
    std::array<double, 12> month_err_sum{};

    // Cell index of each sampled pixel (fixed across months).
    std::vector<std::size_t> cell_of(n_locations);
    const double lon_span = grid.lon_max - grid.lon_min;
    const double lat_span = grid.lat_max - grid.lat_min;
    for (std::size_t i = 0; i < n_locations; ++i) {
        const std::uint32_t ix = pixels[i] % grid.width;
        const std::uint32_t iy = pixels[i] / grid.width;
        const double fx = (grid.pixel_lon(ix) - grid.lon_min) / lon_span;
        const double fy = (grid.pixel_lat(iy) - grid.lat_min) / lat_span;
        const std::size_t cx = std::min(static_cast<std::size_t>(fx * cell_cols),
                                        static_cast<std::size_t>(cell_cols) - 1);
        const std::size_t cy = std::min(static_cast<std::size_t>(fy * cell_rows),
                                        static_cast<std::size_t>(cell_rows) - 1);
        cell_of[i] = cy * static_cast<std::size_t>(cell_cols) + cx;
    }

    std::vector<GeoTemporalPoint> points(n_locations);
    for (int month = 1; month <= 12; ++month) {
        for (std::size_t i = 0; i < n_locations; ++i)
            points[i] = detail::pixel_point(grid, pixels[i], month);
        const auto pred = predict(points);
        if (pred.size() != n_locations * V)
            throw Error("reconstruction_error: prediction width mismatch");
        for (std::size_t i = 0; i < n_locations; ++i) {
            const std::uint32_t ix = pixels[i] % grid.width;
            const std::uint32_t iy = pixels[i] / grid.width;
            for (std::size_t v = 0; v < V; ++v) {
                const double truth = grid.normalized_value(month, static_cast<int>(v), iy, ix);
                const double err = std::abs(pred[i * V + v] - truth);
                pools[v].push_back(static_cast<float>(err));
                var_err_sum[v] += err;
                var_log_sum[v] += std::log10(err + 1e-12);
                month_err_sum[static_cast<std::size_t>(month) - 1] += err;
                cell_err[cell_of[i]] += err;
                cell_tsum[cell_of[i]] += truth;
                cell_tsq[cell_of[i]] += truth * truth;
                report.cell_count[cell_of[i]] += 1;
            }
        }
    }

    const double n_per_var = static_cast<double>(n_locations) * 12.0;
    report.per_var.resize(V);
    double total = 0.0;
    for (std::size_t v = 0; v < V; ++v) {
        auto& s = report.per_var[v];
        std::sort(pools[v].begin(), pools[v].end());
        s.q05 = detail::pool_quantile(pools[v], 0.05);
        s.q25 = detail::pool_quantile(pools[v], 0.25);
        s.q50 = detail::pool_quantile(pools[v], 0.50);
        s.q75 = detail::pool_quantile(pools[v], 0.75);
        s.q95 = detail::pool_quantile(pools[v], 0.95);
        s.mae = var_err_sum[v] / n_per_var;
        s.mean_log = var_log_sum[v] / n_per_var;
        total += var_err_sum[v];
    }
    report.global_mae = total / (n_per_var * static_cast<double>(V));
    for (int m = 0; m < 12; ++m)
        report.month_mae[static_cast<std::size_t>(m)] =
            month_err_sum[static_cast<std::size_t>(m)] / (static_cast<double>(n_locations) * static_cast<double>(V));
    report.cell_mae.assign(n_cells, 0.0);
    report.cell_truth_var.assign(n_cells, 0.0);
    for (std::size_t c = 0; c < n_cells; ++c) {
        if (report.cell_count[c] == 0) continue;
        const double n = static_cast<double>(report.cell_count[c]);
        const double mean = cell_tsum[c] / n;
        report.cell_mae[c] = cell_err[c] / n;
        report.cell_truth_var[c] = std::max(0.0, cell_tsq[c] / n - mean * mean);
    }
    return report;
}

// Prediction function backed by a checkpoint head. Handles both month-encoded
// backbones (output = the grid variables) and location-only backbones trained
// on the month-concatenated target (output = 12 x variables; the slice for the
// point's month is returned).
inline PredictFn checkpoint_predictor(const Checkpoint& ckpt, const ClimGrid& grid) {
    const int V = static_cast<int>(grid.n_vars);
    const bool concat = ckpt.config.input_dim == 2;
    if (ckpt.config.output_dim != (concat ? 12 * V : V))
        throw Error("reconstruction_error: checkpoint head incompatible with this grid");
    return [&ckpt, V, concat](const std::vector<GeoTemporalPoint>& points) {
        const NetworkConfig& cfg = ckpt.config;
        std::vector<float> enc(points.size() * static_cast<std::size_t>(cfg.input_dim));
        for (std::size_t i = 0; i < points.size(); ++i)
            detail::encode_for_config(cfg, points[i], 0,
                                      enc.data() + i * static_cast<std::size_t>(cfg.input_dim));
        auto res = forward(cfg, ckpt.params, enc.data(), points.size(), false, true);
        std::vector<double> out(points.size() * static_cast<std::size_t>(V));
        const std::size_t od = static_cast<std::size_t>(cfg.output_dim);
        for (std::size_t i = 0; i < points.size(); ++i) {
            const std::size_t base = concat ? static_cast<std::size_t>(points[i].month - 1) *
                                                  static_cast<std::size_t>(V)
                                            : 0;
            for (int v = 0; v < V; ++v)
                out[i * static_cast<std::size_t>(V) + static_cast<std::size_t>(v)] =
                    static_cast<double>(res.head[i * od + base + static_cast<std::size_t>(v)]);
        }
        return out;
    };
}

inline ErrorReport reconstruction_error(const Checkpoint& ckpt, const ClimGrid& grid,
                                        std::size_t n_locations, std::uint64_t seed, int cell_rows = 136,
                                        int cell_cols = 320) {
    return reconstruction_error(checkpoint_predictor(ckpt, grid), grid, n_locations, seed, cell_rows,
                                cell_cols);
}

inline void save_error_summary_csv(const std::string& path, const ErrorReport& report) {
    std::ofstream out(path);
    if (!out) throw Error("cannot open for writing: " + path);
    char buf[256];
    out << "scope,index,mae,q05,q25,q50,q75,q95,mean_log10\n";
    std::snprintf(buf, sizeof buf, "global,,%.10g,,,,,,\n", report.global_mae);
    out << buf;
    for (std::size_t v = 0; v < report.per_var.size(); ++v) {
        const auto& s = report.per_var[v];
        std::snprintf(buf, sizeof buf, "variable,%zu,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g\n", v,
                      s.mae, s.q05, s.q25, s.q50, s.q75, s.q95, s.mean_log);
        out << buf;
    }
    for (int m = 0; m < 12; ++m) {
        std::snprintf(buf, sizeof buf, "month,%d,%.10g,,,,,,\n", m + 1,
                      report.month_mae[static_cast<std::size_t>(m)]);
        out << buf;
    }
}

inline void save_error_cells_csv(const std::string& path, const ErrorReport& report) {
    std::ofstream out(path);
    if (!out) throw Error("cannot open for writing: " + path);
    out << "row,col,count,mae,truth_var\n";
    char buf[160];
    for (int r = 0; r < report.cell_rows; ++r)
        for (int c = 0; c < report.cell_cols; ++c) {
            const std::size_t idx = static_cast<std::size_t>(r) * static_cast<std::size_t>(report.cell_cols) +
                                    static_cast<std::size_t>(c);
            std::snprintf(buf, sizeof buf, "%d,%d,%llu,%.10g,%.10g\n", r, c,
                          static_cast<unsigned long long>(report.cell_count[idx]), report.cell_mae[idx],
                          report.cell_truth_var[idx]);
            out << buf;
        }
}

// ---------------------------------------------------------------------------
// Scaling sweep

struct ScalingResult {
    int depth = 0;
    ResidualMode mode = ResidualMode::Off;
    std::uint64_t seed = 0;
    double final_loss = 0.0;
    double wallclock_s = 0.0;
    bool has_probe = false;
    double probe_metric = 0.0;
};

inline MonthPolicy default_policy(TaskDataset::Kind kind) {
    return kind == TaskDataset::Kind::Sdm ? MonthPolicy::Observation : MonthPolicy::SeasonalConcat;
}

// Trains every (depth, mode, seed) combination under identical budgets and
// optionally evaluates each with the probing suite. Cells run sequentially so
// wallclock readings are not contended.
inline std::vector<ScalingResult> scaling_sweep(const ClimGrid& grid, const std::vector<int>& depths,
                                                const std::vector<ResidualMode>& modes,
                                                const std::vector<std::uint64_t>& seeds,
                                                const NetworkConfig& base_cfg, const TrainConfig& base_train,
                                                const TaskDataset* task = nullptr,
                                                const ProbeSpec* probe_spec = nullptr) {
    if (depths.empty() || modes.empty() || seeds.empty())
        throw Error("scaling_sweep: depths/modes/seeds must be non-empty");
    std::vector<ScalingResult> results;
    for (int depth : depths)
        for (ResidualMode mode : modes)
            for (std::uint64_t seed : seeds) {
                NetworkConfig cfg = base_cfg;
                cfg.depth = depth;
                cfg.residual = mode;
                TrainConfig train = base_train;
                train.seed = seed;
                const auto res = pretrain(grid, cfg, train);
                ScalingResult cell{depth, mode, seed, res.checkpoint.final_loss, 0.0, false, 0.0};
                for (double s : res.epoch_seconds) cell.wallclock_s += s;
                if (task && probe_spec) {
                    EmbeddingProvider provider{res.checkpoint, default_policy(task->kind)};
                    cell.probe_metric = run_probe_suite(&provider, *task, *probe_spec, &grid, seed).mean;
                    cell.has_probe = true;
                }
                results.push_back(std::move(cell));
            }
    return results;
}

inline void save_scaling_csv(const std::string& path, const std::vector<ScalingResult>& results) {
    std::ofstream out(path);
    if (!out) throw Error("cannot open for writing: " + path);
    out << "depth,residual,seed,final_loss,wallclock_s,probe_metric\n";
    char buf[160];
    for (const auto& r : results) {
        std::snprintf(buf, sizeof buf, "%d,%s,%llu,%.10g,%.4f,", r.depth, to_string(r.mode),
                      static_cast<unsigned long long>(r.seed), r.final_loss, r.wallclock_s);
        out << buf;
        if (r.has_probe) {
            std::snprintf(buf, sizeof buf, "%.10g", r.probe_metric);
            out << buf;
        }
        out << "\n";
    }
}

// ---------------------------------------------------------------------------
// Ablations

struct AblationRow {
    std::string name;
    bool in_scope = true;
    // One entry per task, in the order the tasks were passed.
    std::vector<double> mean, stddev;
};

struct AblationTable {
    std::vector<std::string> task_names;
    std::vector<AblationRow> rows;
};

// Executes the in-scope ablation rows end to end: pretrain the variant, probe
// all given tasks. The rec-values row reuses the full model's checkpoint with
// head outputs as features. CH-CLIP and ERA5 need external data and are
// emitted as explicit out-of-scope placeholders.
inline AblationTable run_ablations(const ClimGrid& grid, const std::vector<const TaskDataset*>& tasks,
                                   const NetworkConfig& base_cfg, const TrainConfig& base_train,
                                   const ProbeSpec& probe_spec) {
    if (tasks.empty()) throw Error("run_ablations: at least one task required");
    AblationTable table;
    for (const auto* t : tasks) table.task_names.push_back(t->name);

    struct Variant {
        std::string name;
        NetworkConfig cfg;
        TrainConfig train;
        MonthPolicy policy_override = MonthPolicy::Observation;
        bool has_policy_override = false;
    };

    std::vector<Variant> variants;
    {
        Variant v{"climplicit", base_cfg, base_train};
        variants.push_back(v);
    }
    {
        Variant v{"siren", base_cfg, base_train};
        v.cfg.residual = ResidualMode::Off;
        variants.push_back(v);
    }
    {
        Variant v{"concat-months", base_cfg, base_train};
        v.cfg.input_dim = 2;
        v.cfg.output_dim = 12 * static_cast<int>(grid.n_vars);
        v.train.concat_months = true;
        v.policy_override = MonthPolicy::Observation; // location-only embeddings carry no month
        v.has_policy_override = true;
        variants.push_back(v);
    }
    {
        Variant v{"march-only", base_cfg, base_train};
        v.train.march_only = true;
        variants.push_back(v);
    }
    {
        Variant v{"no-hsiren", base_cfg, base_train};
        v.cfg.first_layer = ActivationKind::Sine;
        variants.push_back(v);
    }

    Checkpoint full_checkpoint; // reused by the rec-values row
    for (const auto& variant : variants) {
        const auto res = pretrain(grid, variant.cfg, variant.train);
        if (variant.name == "climplicit") full_checkpoint = res.checkpoint;
        AblationRow row{variant.name, true, {}, {}};
        for (const auto* task : tasks) {
            EmbeddingProvider provider{res.checkpoint, variant.has_policy_override
                                                           ? variant.policy_override
                                                           : default_policy(task->kind)};
            const auto report = run_probe_suite(&provider, *task, probe_spec, &grid, variant.train.seed);
            row.mean.push_back(report.mean);
            row.stddev.push_back(report.stddev);
        }
        table.rows.push_back(std::move(row));
    }

    {
        AblationRow row{"rec-values", true, {}, {}};
        for (const auto* task : tasks) {
            EmbeddingProvider provider{full_checkpoint, MonthPolicy::RecValues};
            const auto report = run_probe_suite(&provider, *task, probe_spec, &grid, base_train.seed);
            row.mean.push_back(report.mean);
            row.stddev.push_back(report.stddev);
        }
        table.rows.push_back(std::move(row));
    }

    for (const char* name : {"ch-clip", "era5"}) {
        AblationRow row{name, false, {}, {}};
        table.rows.push_back(std::move(row));
    }
    return table;
}

inline void save_ablation_csv(const std::string& path, const AblationTable& table) {
    std::ofstream out(path);
    if (!out) throw Error("cannot open for writing: " + path);
    out << "ablation";
    for (const auto& t : table.task_names) out << "," << t << "_mean," << t << "_std";
    out << "\n";
    char buf[64];
    for (const auto& row : table.rows) {
        out << row.name;
        for (std::size_t i = 0; i < table.task_names.size(); ++i) {
            if (!row.in_scope) {
                out << ",out-of-scope,out-of-scope";
            } else {
                std::snprintf(buf, sizeof buf, ",%.10g,%.10g", row.mean[i], row.stddev[i]);
                out << buf;
            }
        }
        out << "\n";
    }
}

// ---------------------------------------------------------------------------
// Prediction-grid export

struct Region {
    double lon_min = -180.0, lon_max = 180.0;
    double lat_min = -90.0, lat_max = 90.0;

    void validate() const {
        if (!(lon_min < lon_max) || !(lat_min < lat_max)) throw Error("Region: empty extent");
    }
};

// Evaluates a probe (or, when probe is null, the raw provider feature at
// out_index) over a regular lon/lat grid of cell centers for one month and
// writes lon,lat,value rows. Row order: south to north, west to east.
inline void export_prediction_grid(const EmbeddingProvider& provider, const Mlp* probe, int out_index,
                                   const Region& region, int n_lon, int n_lat, int month,
                                   const std::string& path) {
    region.validate();
    if (n_lon < 1 || n_lat < 1) throw Error("export_prediction_grid: resolution must be >= 1");
    if (month < 1 || month > 12) throw Error("export_prediction_grid: month must be in 1..12");
    if (out_index < 0) throw Error("export_prediction_grid: out_index must be >= 0");

    std::vector<GeoTemporalPoint> points;
    points.reserve(static_cast<std::size_t>(n_lon) * static_cast<std::size_t>(n_lat));
    const double dlon = (region.lon_max - region.lon_min) / n_lon;
    const double dlat = (region.lat_max - region.lat_min) / n_lat;
    for (int iy = 0; iy < n_lat; ++iy)
        for (int ix = 0; ix < n_lon; ++ix)
            points.push_back(GeoTemporalPoint{region.lon_min + (ix + 0.5) * dlon,
                                              region.lat_min + (iy + 0.5) * dlat, month, {}});

    const auto features = embed(provider, points);
    const std::size_t fd = static_cast<std::size_t>(provider.feature_dim());
    std::vector<double> values(points.size());
    if (probe) {
        if (probe->config.in_dim != provider.feature_dim())
            throw Error("export_prediction_grid: probe input width mismatch");
        if (out_index >= probe->config.out_dim)
            throw Error("export_prediction_grid: out_index exceeds probe outputs");
        const auto out = probe->forward(features.data(), points.size());
        const std::size_t od = static_cast<std::size_t>(probe->config.out_dim);
        for (std::size_t i = 0; i < points.size(); ++i)
            values[i] = out[i * od + static_cast<std::size_t>(out_index)];
    } else {
        if (out_index >= provider.feature_dim())
            throw Error("export_prediction_grid: out_index exceeds feature width");
        for (std::size_t i = 0; i < points.size(); ++i)
            values[i] = features[i * fd + static_cast<std::size_t>(out_index)];
    }

    std::ofstream out(path);
    if (!out) throw Error("cannot open for writing: " + path);
    out << "lon,lat,value\n";
    char buf[96];
    for (std::size_t i = 0; i < points.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%.10g,%.10g,%.10g\n", points[i].lon_deg, points[i].lat_deg,
                      values[i]);
        out << buf;
    }
}

} // namespace resiren
