#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "resiren/encoding.hpp"
#include "resiren/grid.hpp"
#include "resiren/rng.hpp"

namespace resiren {

enum class Split : std::uint8_t { Train = 0, Val = 1, Test = 2 };

inline const char* to_string(Split s) {
    switch (s) {
        case Split::Train: return "train";
        case Split::Val: return "val";
        default: return "test";
    }
}

struct TaskRecord {
    GeoTemporalPoint pt;
    int label = -1;            // class id (biomes) or species id (SDM)
    std::vector<double> y;     // regression targets (traits)
    Split split = Split::Train;
};

struct TaskDataset {
    enum class Kind : std::uint8_t { Classification = 0, Sdm = 1, Regression = 2 };
    Kind kind = Kind::Classification;
    std::string name;   // short label used in reports ("biomes", "sdm", "traits")
    int n_classes = 0;  // classes or species
    int n_targets = 0;  // regression width
    std::vector<TaskRecord> records;
};

inline std::array<std::size_t, 3> split_counts(std::size_t n, const std::array<double, 3>& fractions) {
    const double total = fractions[0] + fractions[1] + fractions[2];
    if (std::abs(total - 1.0) > 1e-9) throw Error("split fractions must sum to 1");
    const auto n_train = static_cast<std::size_t>(std::llround(fractions[0] * static_cast<double>(n)));
    const auto n_trainval = static_cast<std::size_t>(std::llround((fractions[0] + fractions[1]) * static_cast<double>(n)));
    return {n_train, n_trainval - n_train, n - n_trainval};
}

namespace detail {

// Uniform land locations without replacement, as pixel-center points.
inline std::vector<std::uint32_t> sample_land_pixels(const ClimGrid& grid, std::size_t n_points, Rng& rng) {
    const auto land = grid.land_pixels();
    if (n_points > land.size())
        throw Error("n_points " + std::to_string(n_points) + " exceeds land pixels " +
                    std::to_string(land.size()) + " (sampling is without replacement)");
    auto order = rng.permutation(static_cast<std::uint32_t>(land.size()));
    std::vector<std::uint32_t> out(n_points);
    for (std::size_t i = 0; i < n_points; ++i) out[i] = land[order[i]];
    return out;
}

inline GeoTemporalPoint pixel_point(const ClimGrid& grid, std::uint32_t px, int month) {
    GeoTemporalPoint pt;
    pt.lon_deg = grid.pixel_lon(px % grid.width);
    pt.lat_deg = grid.pixel_lat(px / grid.width);
    pt.month = month;
    return pt;
}

inline void assign_splits(std::vector<TaskRecord>& records, const std::array<double, 3>& fractions) {
    const auto counts = split_counts(records.size(), fractions);
    for (std::size_t i = 0; i < records.size(); ++i)
        records[i].split = i < counts[0] ? Split::Train : (i < counts[0] + counts[1] ? Split::Val : Split::Test);
}

} // namespace detail

// Biomes analog: label each sampled land location by quantile-binning a fresh
// smooth field (independent of the climate variables) into n_classes, so
// classes are balanced by construction. Static task; records carry month 3.
inline TaskDataset build_biomes_task(const ClimGrid& grid, std::size_t n_points, int n_classes,
                                     const std::array<double, 3>& split, std::uint64_t seed) {
    if (n_classes < 2) throw Error("build_biomes_task: n_classes must be >= 2");
    Rng rng(subseed(seed, "biomes"));
    const auto pixels = detail::sample_land_pixels(grid, n_points, rng);

    Rng field_rng(subseed(seed, "biome-field"));
    const WaveBank field = WaveBank::draw(field_rng, 5, 0.6, 0.7);
    std::vector<double> values(n_points);
    for (std::size_t i = 0; i < n_points; ++i) {
        const double x = grid.pixel_lon(pixels[i] % grid.width) / 180.0;
        const double y = grid.pixel_lat(pixels[i] / grid.width) / 90.0;
        values[i] = field.eval(x, y);
    }
    std::vector<double> sorted = values;
    std::sort(sorted.begin(), sorted.end());
    std::vector<double> thresholds;
    for (int c = 1; c < n_classes; ++c)
        thresholds.push_back(sorted[static_cast<std::size_t>(c) * n_points / static_cast<std::size_t>(n_classes)]);

    TaskDataset ds;
    ds.kind = TaskDataset::Kind::Classification;
    ds.name = "biomes";
    ds.n_classes = n_classes;
    for (std::size_t i = 0; i < n_points; ++i) {
        TaskRecord rec;
        rec.pt = detail::pixel_point(grid, pixels[i], 3);
        rec.label = static_cast<int>(std::upper_bound(thresholds.begin(), thresholds.end(), values[i]) - thresholds.begin());
        ds.records.push_back(std::move(rec));
    }
    detail::assign_splits(ds.records, split);
    return ds;
}

// Species definitions behind the SDM analog, exposed so tests and analyses can
// check occurrences against the generating process.
struct SdmDesign {
    struct Species {
        std::vector<double> weights; // per-variable linear score
        int gate_start = 1, gate_len = 12;
        bool in_gate(int month) const {
            const int d = ((month - gate_start) % 12 + 12) % 12;
            return d < gate_len;
        }
    };
    std::vector<Species> species;
    double score_scale = 2.0;

    double suitability(const ClimGrid& grid, int sp, std::uint32_t iy, std::uint32_t ix, int month) const {
        const Species& s = species[static_cast<std::size_t>(sp)];
        if (!s.in_gate(month)) return 0.0;
        double score = 0.0;
        for (std::uint32_t v = 0; v < grid.n_vars; ++v)
            score += s.weights[v] * grid.normalized_value(month, static_cast<int>(v), iy, ix);
        return 1.0 / (1.0 + std::exp(-score_scale * score));
    }
};

// Presence-only SDM analog: each species has a seeded linear suitability over
// the normalized variables and a contiguous month gate; occurrences are
// rejection-sampled proportionally to suitability and carry their observation
// month. Default split [0.7, 0.05, 0.25].
inline TaskDataset build_sdm_task(const ClimGrid& grid, int n_species, std::size_t n_occurrences,
                                  const std::array<double, 3>& split, std::uint64_t seed,
                                  SdmDesign* out_design = nullptr) {
    if (n_species < 2) throw Error("build_sdm_task: n_species must be >= 2");
    if (!grid.normalized()) throw Error("build_sdm_task: grid normalization not fitted");
    Rng rng(subseed(seed, "sdm"));

    SdmDesign design;
    for (int s = 0; s < n_species; ++s) {
        SdmDesign::Species sp;
        double norm2 = 0.0;
        for (std::uint32_t v = 0; v < grid.n_vars; ++v) {
            sp.weights.push_back(rng.uniform(-1.0, 1.0));
            norm2 += sp.weights.back() * sp.weights.back();
        }
        const double inv = 1.0 / std::max(1e-12, std::sqrt(norm2));
        for (auto& w : sp.weights) w *= inv;
        sp.gate_start = 1 + static_cast<int>(rng.uniform_int(12));
        sp.gate_len = 3 + static_cast<int>(rng.uniform_int(6)); // 3..8 months
        design.species.push_back(std::move(sp));
    }

    const auto land = grid.land_pixels();
    TaskDataset ds;
    ds.kind = TaskDataset::Kind::Sdm;
    ds.name = "sdm";
    ds.n_classes = n_species;
    for (std::size_t i = 0; i < n_occurrences; ++i) {
        const int sp = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(n_species)));
        const auto& gate = design.species[static_cast<std::size_t>(sp)];
        for (;;) {
            const std::uint32_t px = land[rng.uniform_int(land.size())];
            const int month = 1 + static_cast<int>((gate.gate_start - 1 + rng.uniform_int(static_cast<std::uint64_t>(gate.gate_len))) % 12);
            const double p = design.suitability(grid, sp, px / grid.width, px % grid.width, month);
            if (rng.uniform() < p) {
                TaskRecord rec;
                rec.pt = detail::pixel_point(grid, px, month);
                rec.label = sp;
                ds.records.push_back(std::move(rec));
                break;
            }
        }
    }
    detail::assign_splits(ds.records, split);
    if (out_design) *out_design = design;
    return ds;
}

// Traits analog: regression targets built from per-month variables aggregated
// over the year. Target 0 is the annual mean of variable 0 (linearly
// recoverable, the calibration oracle); further targets cycle through a
// cross-variable monthly covariation, a winter-summer contrast, and a
// saturating cross-term — all month-resolved, which is what the March-Only
// ablation degrades. All targets are standardized over the train split.
// Records carry month 3.
inline TaskDataset build_traits_task(const ClimGrid& grid, std::size_t n_points, int n_targets,
                                     const std::array<double, 3>& split, std::uint64_t seed) {
    if (n_targets < 1) throw Error("build_traits_task: n_targets must be >= 1");
    Rng rng(subseed(seed, "traits"));
    const auto pixels = detail::sample_land_pixels(grid, n_points, rng);

    struct TraitDef {
        int kind;       // 0 mean, 1 covariation, 2 contrast, 3 tanh cross-term
        int var_a, var_b;
    };
    std::vector<TraitDef> defs;
    for (int t = 0; t < n_targets; ++t) {
        TraitDef d;
        if (t == 0) {
            d = {0, 0, 0};
        } else {
            d.kind = 1 + (t - 1) % 3;
            d.var_a = static_cast<int>(rng.uniform_int(grid.n_vars));
            d.var_b = static_cast<int>(rng.uniform_int(grid.n_vars));
        }
        defs.push_back(d);
    }

    auto monthly = [&](std::uint32_t px, int v, int m) {
        return static_cast<double>(grid.value(m, v, px / grid.width, px % grid.width));
    };
    auto annual_mean = [&](std::uint32_t px, int v) {
        double s = 0.0;
        for (int m = 1; m <= 12; ++m) s += monthly(px, v, m);
        return s / 12.0;
    };

    TaskDataset ds;
    ds.kind = TaskDataset::Kind::Regression;
    ds.name = "traits";
    ds.n_targets = n_targets;
    for (const std::uint32_t px : pixels) {
        TaskRecord rec;
        rec.pt = detail::pixel_point(grid, px, 3);
        for (const TraitDef& d : defs) {
            double y = 0.0;
            switch (d.kind) {
                case 0: y = annual_mean(px, d.var_a); break;
                case 1: {
                    // Mean monthly cross-product of two variables. (A min-max
                    // seasonal range would be spatially constant here: the
                    // generator's seasonal term has the same amplitude at
                    // every location, and the other components are static.)
                    for (int m = 1; m <= 12; ++m)
                        y += monthly(px, d.var_a, m) * monthly(px, d.var_b, m);
                    y /= 12.0;
                    break;
                }
                case 2: {
                    for (int m = 1; m <= 12; ++m)
                        y += std::cos(2.0 * kPi * static_cast<double>(m) / 12.0) * monthly(px, d.var_a, m);
                    y /= 12.0;
                    break;
                }
                default:
                    y = std::tanh(0.7 * annual_mean(px, d.var_a) + 0.4 * annual_mean(px, d.var_b));
            }
            rec.y.push_back(y);
        }
        ds.records.push_back(std::move(rec));
    }
    detail::assign_splits(ds.records, split);

    // Standardize each target over the train split.
    const auto counts = split_counts(ds.records.size(), split);
    if (counts[0] < 2) throw Error("build_traits_task: train split too small to standardize");
    for (int t = 0; t < n_targets; ++t) {
        double sum = 0.0, sum2 = 0.0;
        for (std::size_t i = 0; i < counts[0]; ++i) {
            const double y = ds.records[i].y[static_cast<std::size_t>(t)];
            sum += y;
            sum2 += y * y;
        }
        const double mean = sum / static_cast<double>(counts[0]);
        const double var = std::max(0.0, sum2 / static_cast<double>(counts[0]) - mean * mean);
        // Relative guard: sum2/n - mean^2 bottoms out around 1e-16 * mean^2
        // from cancellation alone, so an absolute epsilon cannot separate a
        // constant target from a merely small one.
        if (!(var > 1e-9 * std::max(1.0, mean * mean)))
            throw Error("build_traits_task: degenerate target " + std::to_string(t));
        const double inv = 1.0 / std::sqrt(var);
        for (auto& rec : ds.records) {
            auto& y = rec.y[static_cast<std::size_t>(t)];
            y = (y - mean) * inv;
        }
    }
    return ds;
}

// CSV: header lon_deg,lat_deg,month,split,target[,target1,...]. Class/species
// ids use one "target" column; regression uses target0..targetK-1.
inline void save_task_csv(const std::string& path, const TaskDataset& ds) {
    std::ofstream out(path);
    if (!out) throw Error("cannot open for writing: " + path);
    out << "lon_deg,lat_deg,month,split";
    if (ds.kind == TaskDataset::Kind::Regression)
        for (int t = 0; t < ds.n_targets; ++t) out << ",target" << t;
    else
        out << ",target";
    out << "\n";
    char buf[64];
    for (const auto& rec : ds.records) {
        std::snprintf(buf, sizeof buf, "%.10g,%.10g,%d,%s", rec.pt.lon_deg, rec.pt.lat_deg, rec.pt.month,
                      to_string(rec.split));
        out << buf;
        if (ds.kind == TaskDataset::Kind::Regression)
            for (const double y : rec.y) {
                std::snprintf(buf, sizeof buf, ",%.17g", y);
                out << buf;
            }
        else
            out << "," << rec.label;
        out << "\n";
    }
    if (!out) throw Error("write failed: " + path);
}

inline TaskDataset load_task_csv(const std::string& path, TaskDataset::Kind kind) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open: " + path);
    std::string line;
    if (!std::getline(in, line)) throw Error("task csv " + path + ": empty file");
    std::vector<std::string> header;
    {
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) header.push_back(cell);
    }
    if (header.size() < 5 || header[0] != "lon_deg" || header[1] != "lat_deg" || header[2] != "month" ||
        header[3] != "split")
        throw Error("task csv " + path + ": unexpected header");
    const int n_targets = static_cast<int>(header.size()) - 4;

    TaskDataset ds;
    ds.kind = kind;
    ds.name = std::filesystem::path(path).stem().string();
    if (kind == TaskDataset::Kind::Regression) ds.n_targets = n_targets;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        std::vector<std::string> cells;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (cells.size() != header.size())
            throw Error("task csv " + path + ": wrong column count at line " + std::to_string(line_no));
        TaskRecord rec;
        rec.pt.lon_deg = std::stod(cells[0]);
        rec.pt.lat_deg = std::stod(cells[1]);
        rec.pt.month = std::stoi(cells[2]);
        if (cells[3] == "train") rec.split = Split::Train;
        else if (cells[3] == "val") rec.split = Split::Val;
        else if (cells[3] == "test") rec.split = Split::Test;
        else throw Error("task csv " + path + ": bad split '" + cells[3] + "' at line " + std::to_string(line_no));
        if (kind == TaskDataset::Kind::Regression)
            for (int t = 0; t < n_targets; ++t) rec.y.push_back(std::stod(cells[static_cast<std::size_t>(4 + t)]));
        else {
            rec.label = std::stoi(cells[4]);
            ds.n_classes = std::max(ds.n_classes, rec.label + 1);
        }
        rec.pt.validate();
        ds.records.push_back(std::move(rec));
    }
    return ds;
}

} // namespace resiren
