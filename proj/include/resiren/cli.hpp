#pragma once

// Command implementations behind the `resiren` binary. Flag parsing lives in
// the tool's main; these functions take resolved argument structs, write all
// artifacts plus a RunManifest into the output directory, and throw
// resiren::Error on any failure.

#include <array>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

#include "resiren/analysis.hpp"
#include "resiren/manifest.hpp"

namespace resiren::cli {

namespace detail {

inline std::string join(const std::string& dir, const std::string& name) {
    return (std::filesystem::path(dir) / name).string();
}

inline void ensure_outdir(const std::string& dir) {
    if (dir.empty()) throw Error("output directory must be given");
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw Error("cannot create output directory " + dir + ": " + ec.message());
}

inline void require_file(const std::string& path, const std::string& what) {
    if (!std::filesystem::exists(path)) throw Error(what + " not found: " + path);
}

class Stopwatch {
public:
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }

private:
    std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

} // namespace detail

inline ResidualMode parse_residual(const std::string& s) {
    if (s == "off") return ResidualMode::Off;
    if (s == "half") return ResidualMode::Half;
    if (s == "sqrt2") return ResidualMode::SqrtTwo;
    throw Error("unknown residual mode: " + s + " (expected off|half|sqrt2)");
}

inline ActivationKind parse_first_layer(const std::string& s) {
    if (s == "hsiren") return ActivationKind::HSiren;
    if (s == "sine") return ActivationKind::Sine;
    throw Error("unknown first-layer activation: " + s + " (expected hsiren|sine)");
}

inline MonthPolicy parse_month_policy(const std::string& s) {
    if (s == "obs") return MonthPolicy::Observation;
    if (s == "seasonal") return MonthPolicy::SeasonalConcat;
    if (s == "rec") return MonthPolicy::RecValues;
    throw Error("unknown month policy: " + s + " (expected obs|seasonal|rec)");
}

inline ProbeKind parse_probe_kind(const std::string& s) {
    if (s == "linear") return ProbeKind::SingleLayer;
    if (s == "mlp") return ProbeKind::Mlp;
    throw Error("unknown probe kind: " + s + " (expected linear|mlp)");
}

inline BaselineKind parse_baseline(const std::string& s) {
    if (s.empty() || s == "none") return BaselineKind::None;
    if (s == "fs-loc") return BaselineKind::FsLoc;
    if (s == "fs-ch") return BaselineKind::FsCh;
    if (s == "fs-loc-ch") return BaselineKind::FsLocCh;
    throw Error("unknown baseline: " + s + " (expected fs-loc|fs-ch|fs-loc-ch)");
}

// ---------------------------------------------------------------------------
// gen

struct GenArgs {
    std::string out;
    std::uint64_t seed = 0;
    std::uint32_t width = 64, height = 32, vars = 8;
};

inline int cmd_gen(const GenArgs& args) {
    detail::Stopwatch timer;
    detail::ensure_outdir(args.out);
    auto grid = generate_synthetic_climatology(args.width, args.height, args.vars, args.seed);
    fit_normalization(grid);
    const std::string grid_path = detail::join(args.out, "grid.cgrd");
    save_grid(grid_path, grid);

    RunManifest m;
    m.command = "gen";
    m.seed = args.seed;
    m.config = {{"width", args.width}, {"height", args.height}, {"vars", args.vars}};
    m.outputs = {"grid.cgrd"};
    m.wallclock_s = timer.seconds();
    save_manifest(detail::join(args.out, "manifest.json"), m);
    return 0;
}

// ---------------------------------------------------------------------------
// pretrain

struct PretrainArgs {
    std::string grid, out;
    std::uint64_t seed = 0;
    int depth = 8, hidden = 128, embedding = 64;
    double omega0 = 30.0;
    std::string residual = "half";
    std::string first_layer = "hsiren";
    bool march_only = false, concat_months = false;
    int epochs = 10, batch = 64, patience = 3;
    double lr = 1e-4, min_delta = 1e-5;
};

inline int cmd_pretrain(const PretrainArgs& args) {
    detail::Stopwatch timer;
    detail::require_file(args.grid, "grid");
    detail::ensure_outdir(args.out);
    const auto grid = load_grid(args.grid);

    NetworkConfig cfg;
    cfg.depth = args.depth;
    cfg.input_dim = args.concat_months ? 2 : 4;
    cfg.hidden_dim = args.hidden;
    cfg.embedding_dim = args.embedding;
    cfg.output_dim = static_cast<int>(args.concat_months ? 12 * grid.n_vars : grid.n_vars);
    cfg.omega0 = args.omega0;
    cfg.residual = parse_residual(args.residual);
    cfg.first_layer = parse_first_layer(args.first_layer);

    TrainConfig train;
    train.learning_rate = args.lr;
    train.max_epochs = args.epochs;
    train.batch_size = args.batch;
    train.patience = args.patience;
    train.min_delta = args.min_delta;
    train.seed = args.seed;
    train.march_only = args.march_only;
    train.concat_months = args.concat_months;

    const auto result = pretrain(grid, cfg, train);
    save_checkpoint(detail::join(args.out, "checkpoint.rsrn"), result.checkpoint);
    save_loss_history_csv(detail::join(args.out, "loss_history.csv"), result);

    RunManifest m;
    m.command = "pretrain";
    m.seed = args.seed;
    m.config = {{"depth", cfg.depth},
                {"input_dim", cfg.input_dim},
                {"hidden_dim", cfg.hidden_dim},
                {"embedding_dim", cfg.embedding_dim},
                {"output_dim", cfg.output_dim},
                {"omega0", cfg.omega0},
                {"residual", args.residual},
                {"first_layer", args.first_layer},
                {"march_only", args.march_only},
                {"concat_months", args.concat_months},
                {"epochs", args.epochs},
                {"batch_size", args.batch},
                {"learning_rate", args.lr},
                {"patience", args.patience},
                {"min_delta", args.min_delta},
                {"best_epoch", result.best_epoch},
                {"final_loss", result.checkpoint.final_loss}};
    m.inputs = {args.grid};
    m.outputs = {"checkpoint.rsrn", "loss_history.csv"};
    m.wallclock_s = timer.seconds();
    save_manifest(detail::join(args.out, "manifest.json"), m);
    return 0;
}

// ---------------------------------------------------------------------------
// embed

struct EmbedArgs {
    std::string checkpoint, points, out;
    std::string months = "obs";
};

namespace detail {

inline std::vector<GeoTemporalPoint> load_points_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open: " + path);
    std::string line;
    if (!std::getline(in, line)) throw Error("points csv " + path + ": empty file");
    if (line.rfind("lon_deg,lat_deg,month", 0) != 0)
        throw Error("points csv " + path + ": expected header lon_deg,lat_deg,month");
    std::vector<GeoTemporalPoint> points;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        std::vector<std::string> cells;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (cells.size() < 3)
            throw Error("points csv " + path + ": line " + std::to_string(line_no) + " has too few columns");
        GeoTemporalPoint pt;
        try {
            pt.lon_deg = std::stod(cells[0]);
            pt.lat_deg = std::stod(cells[1]);
            pt.month = std::stoi(cells[2]);
        } catch (const std::exception&) {
            throw Error("points csv " + path + ": line " + std::to_string(line_no) + " is not numeric");
        }
        pt.validate();
        points.push_back(pt);
    }
    if (points.empty()) throw Error("points csv " + path + ": no rows");
    return points;
}

} // namespace detail

inline int cmd_embed(const EmbedArgs& args) {
    detail::Stopwatch timer;
    detail::require_file(args.checkpoint, "checkpoint");
    detail::require_file(args.points, "points csv");
    detail::ensure_outdir(args.out);

    EmbeddingProvider provider{load_checkpoint(args.checkpoint), parse_month_policy(args.months)};
    const auto points = detail::load_points_csv(args.points);
    const auto features = embed(provider, points);
    const std::size_t fd = static_cast<std::size_t>(provider.feature_dim());

    const std::string out_path = detail::join(args.out, "embeddings.csv");
    std::ofstream out(out_path);
    if (!out) throw Error("cannot open for writing: " + out_path);
    out << "lon_deg,lat_deg,month";
    for (std::size_t c = 0; c < fd; ++c) out << ",f" << c;
    out << "\n";
    char buf[64];
    for (std::size_t i = 0; i < points.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%.10g,%.10g,%d", points[i].lon_deg, points[i].lat_deg,
                      points[i].month);
        out << buf;
        for (std::size_t c = 0; c < fd; ++c) {
            std::snprintf(buf, sizeof buf, ",%.9g", features[i * fd + c]);
            out << buf;
        }
        out << "\n";
    }
    out.close();

    RunManifest m;
    m.command = "embed";
    m.config = {{"months", args.months}, {"feature_dim", provider.feature_dim()},
                {"n_points", points.size()}};
    m.inputs = {args.checkpoint, args.points};
    m.outputs = {"embeddings.csv"};
    m.wallclock_s = timer.seconds();
    save_manifest(detail::join(args.out, "manifest.json"), m);
    return 0;
}

// ---------------------------------------------------------------------------
// probe

struct ProbeArgs {
    std::string checkpoint; // unused when a baseline is selected
    std::string grid, out;
    std::string task = "biomes"; // biomes|sdm|traits
    std::uint64_t seed = 0;
    std::string months;          // empty = task default (obs for sdm, seasonal otherwise)
    std::string probe = "linear";
    std::string baseline;        // fs-loc|fs-ch|fs-loc-ch
    int n_inits = 10;
    int points = 1500, classes = 6, species = 4, occurrences = 1200, targets = 4;
};

namespace detail {

inline TaskDataset build_task(const ClimGrid& grid, const ProbeArgs& args) {
    const std::uint64_t task_seed = subseed(args.seed, "task");
    const std::array<double, 3> split{0.6, 0.2, 0.2};
    if (args.task == "biomes")
        return build_biomes_task(grid, static_cast<std::size_t>(args.points), args.classes, split, task_seed);
    if (args.task == "sdm")
        return build_sdm_task(grid, args.species, static_cast<std::size_t>(args.occurrences), split,
                              task_seed);
    if (args.task == "traits")
        return build_traits_task(grid, static_cast<std::size_t>(args.points), args.targets, split, task_seed);
    throw Error("unknown task: " + args.task + " (expected biomes|sdm|traits)");
}

} // namespace detail

inline int cmd_probe(const ProbeArgs& args) {
    detail::Stopwatch timer;
    detail::require_file(args.grid, "grid");
    detail::ensure_outdir(args.out);
    const auto grid = load_grid(args.grid);
    const auto dataset = detail::build_task(grid, args);

    ProbeSpec spec;
    spec.kind = parse_probe_kind(args.probe);
    spec.baseline = parse_baseline(args.baseline);
    spec.n_inits = args.n_inits;

    EmbeddingProvider provider;
    const EmbeddingProvider* provider_ptr = nullptr;
    std::string months = args.months;
    if (spec.baseline == BaselineKind::None) {
        detail::require_file(args.checkpoint, "checkpoint");
        provider.checkpoint = load_checkpoint(args.checkpoint);
        provider.policy = months.empty() ? default_policy(dataset.kind) : parse_month_policy(months);
        months = to_string(provider.policy);
        provider_ptr = &provider;
    }

    const auto report = run_probe_suite(provider_ptr, dataset, spec, &grid, subseed(args.seed, "probe"));
    save_task_csv(detail::join(args.out, "task.csv"), dataset);
    save_probe_report_json(detail::join(args.out, "report.json"), report);
    save_probe_report_csv(detail::join(args.out, "report.csv"), {report});

    RunManifest m;
    m.command = "probe";
    m.seed = args.seed;
    m.config = {{"task", args.task},       {"months", months},
                {"probe", args.probe},     {"baseline", args.baseline.empty() ? "none" : args.baseline},
                {"n_inits", args.n_inits}, {"points", args.points},
                {"classes", args.classes}, {"species", args.species},
                {"occurrences", args.occurrences}, {"targets", args.targets},
                {"metric", report.metric}, {"mean", report.mean},
                {"std", report.stddev}};
    m.inputs = {args.grid};
    if (spec.baseline == BaselineKind::None) m.inputs.push_back(args.checkpoint);
    m.outputs = {"task.csv", "report.json", "report.csv"};
    m.wallclock_s = timer.seconds();
    save_manifest(detail::join(args.out, "manifest.json"), m);
    return 0;
}

// ---------------------------------------------------------------------------
// analyze

struct AnalyzeArgs {
    std::string checkpoint, grid, out;
    std::uint64_t seed = 0;
    std::size_t locations = 2000;
    int cell_rows = 136, cell_cols = 320;
    int pred_var = 0, pred_month = 3, pred_lon = 64, pred_lat = 32;
};

inline int cmd_analyze(const AnalyzeArgs& args) {
    detail::Stopwatch timer;
    detail::require_file(args.checkpoint, "checkpoint");
    detail::require_file(args.grid, "grid");
    detail::ensure_outdir(args.out);
    const auto grid = load_grid(args.grid);
    const auto ckpt = load_checkpoint(args.checkpoint);

    const auto report =
        reconstruction_error(ckpt, grid, args.locations, args.seed, args.cell_rows, args.cell_cols);
    save_error_summary_csv(detail::join(args.out, "error_summary.csv"), report);
    save_error_cells_csv(detail::join(args.out, "error_cells.csv"), report);

    // Reconstructed-variable map over the grid extent (probe-free: raw
    // rec-values feature at pred_var).
    EmbeddingProvider provider{ckpt, MonthPolicy::RecValues};
    Region region{grid.lon_min, grid.lon_max, grid.lat_min, grid.lat_max};
    export_prediction_grid(provider, nullptr, args.pred_var, region, args.pred_lon, args.pred_lat,
                           args.pred_month, detail::join(args.out, "prediction_grid.csv"));

    RunManifest m;
    m.command = "analyze";
    m.seed = args.seed;
    m.config = {{"locations", args.locations}, {"cell_rows", args.cell_rows},
                {"cell_cols", args.cell_cols}, {"pred_var", args.pred_var},
                {"pred_month", args.pred_month}, {"pred_lon", args.pred_lon},
                {"pred_lat", args.pred_lat},   {"global_mae", report.global_mae}};
    m.inputs = {args.checkpoint, args.grid};
    m.outputs = {"error_summary.csv", "error_cells.csv", "prediction_grid.csv"};
    m.wallclock_s = timer.seconds();
    save_manifest(detail::join(args.out, "manifest.json"), m);
    return 0;
}

// ---------------------------------------------------------------------------
// scale

struct ScaleArgs {
    std::string grid, out;
    std::uint64_t seed = 0;
    std::vector<int> depths = {2, 4, 8, 16, 32};
    std::vector<std::string> modes = {"off", "half"};
    int n_seeds = 3;
    int depth = 8; // base depth for the ablation table
    int hidden = 64, embedding = 32;
    int epochs = 3, batch = 64, patience = 3;
    double lr = 1e-4;
    bool ablations = false;
    std::string task; // optional probe task for sweep cells (biomes|sdm|traits)
    int n_inits = 10;
    int points = 1200, classes = 6, species = 4, occurrences = 1000, targets = 4;
};

inline int cmd_scale(const ScaleArgs& args) {
    detail::Stopwatch timer;
    detail::require_file(args.grid, "grid");
    detail::ensure_outdir(args.out);
    const auto grid = load_grid(args.grid);

    NetworkConfig base_cfg;
    base_cfg.depth = args.depth;
    base_cfg.hidden_dim = args.hidden;
    base_cfg.embedding_dim = args.embedding;
    base_cfg.output_dim = static_cast<int>(grid.n_vars);

    TrainConfig base_train;
    base_train.learning_rate = args.lr;
    base_train.max_epochs = args.epochs;
    base_train.batch_size = args.batch;
    base_train.patience = args.patience;
    base_train.seed = args.seed;

    ProbeSpec probe_spec;
    probe_spec.n_inits = args.n_inits;

    RunManifest m;
    m.command = "scale";
    m.seed = args.seed;
    m.inputs = {args.grid};

    if (args.ablations) {
        ProbeArgs task_args;
        task_args.seed = args.seed;
        task_args.points = args.points;
        task_args.classes = args.classes;
        task_args.species = args.species;
        task_args.occurrences = args.occurrences;
        task_args.targets = args.targets;
        std::vector<TaskDataset> tasks;
        for (const char* name : {"biomes", "sdm", "traits"}) {
            task_args.task = name;
            tasks.push_back(detail::build_task(grid, task_args));
        }
        std::vector<const TaskDataset*> task_ptrs;
        for (const auto& t : tasks) task_ptrs.push_back(&t);
        const auto table = run_ablations(grid, task_ptrs, base_cfg, base_train, probe_spec);
        save_ablation_csv(detail::join(args.out, "ablations.csv"), table);
        m.outputs = {"ablations.csv"};
    } else {
        std::vector<ResidualMode> modes;
        for (const auto& s : args.modes) modes.push_back(parse_residual(s));
        std::vector<std::uint64_t> seeds;
        for (int k = 0; k < args.n_seeds; ++k)
            seeds.push_back(subseed(args.seed, "sweep", static_cast<std::uint64_t>(k)));

        const TaskDataset* task_ptr = nullptr;
        TaskDataset task;
        if (!args.task.empty()) {
            ProbeArgs task_args;
            task_args.task = args.task;
            task_args.seed = args.seed;
            task_args.points = args.points;
            task_args.classes = args.classes;
            task_args.species = args.species;
            task_args.occurrences = args.occurrences;
            task_args.targets = args.targets;
            task = detail::build_task(grid, task_args);
            task_ptr = &task;
        }
        const auto results = scaling_sweep(grid, args.depths, modes, seeds, base_cfg, base_train,
                                           task_ptr, task_ptr ? &probe_spec : nullptr);
        save_scaling_csv(detail::join(args.out, "scaling.csv"), results);
        m.outputs = {"scaling.csv"};
    }

    m.config = {{"depths", args.depths},   {"modes", args.modes},     {"n_seeds", args.n_seeds},
                {"depth", args.depth},     {"hidden", args.hidden},   {"embedding", args.embedding},
                {"epochs", args.epochs},   {"batch_size", args.batch},{"learning_rate", args.lr},
                {"ablations", args.ablations}, {"task", args.task},   {"n_inits", args.n_inits}};
    m.wallclock_s = timer.seconds();
    save_manifest(detail::join(args.out, "manifest.json"), m);
    return 0;
}

} // namespace resiren::cli
