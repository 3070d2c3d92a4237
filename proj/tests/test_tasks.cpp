#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <map>

#include "resiren/tasks.hpp"

using Catch::Approx;
using Catch::Matchers::ContainsSubstring;
using namespace resiren;

namespace {

const std::array<double, 3> kSplit{0.6, 0.2, 0.2};

ClimGrid make_grid() {
    auto grid = generate_synthetic_climatology(64, 32, 4, 11);
    fit_normalization(grid);
    return grid;
}

std::array<std::size_t, 3> count_splits(const TaskDataset& ds) {
    std::array<std::size_t, 3> c{0, 0, 0};
    for (const auto& rec : ds.records) c[static_cast<std::size_t>(rec.split)] += 1;
    return c;
}

bool on_land_pixel_center(const ClimGrid& grid, const GeoTemporalPoint& pt) {
    const auto ix = grid.pixel_ix(pt.lon_deg);
    const auto iy = grid.pixel_iy(pt.lat_deg);
    return grid.land(iy, ix) && std::abs(grid.pixel_lon(ix) - pt.lon_deg) < 1e-9 &&
           std::abs(grid.pixel_lat(iy) - pt.lat_deg) < 1e-9;
}

} // namespace

TEST_CASE("split counts follow the rounding convention", "[tasks]") {
    CHECK(split_counts(10, kSplit) == std::array<std::size_t, 3>{6, 2, 2});
    CHECK(split_counts(7, kSplit) == std::array<std::size_t, 3>{4, 2, 1});
    CHECK(split_counts(100, {0.7, 0.05, 0.25}) == std::array<std::size_t, 3>{70, 5, 25});
    CHECK_THROWS_WITH(split_counts(10, {0.5, 0.2, 0.2}), ContainsSubstring("sum to 1"));
}

TEST_CASE("biomes task is balanced, static and deterministic", "[tasks]") {
    const auto grid = make_grid();
    const auto ds = build_biomes_task(grid, 300, 5, kSplit, 21);
    REQUIRE(ds.kind == TaskDataset::Kind::Classification);
    CHECK(ds.name == "biomes");
    CHECK(ds.n_classes == 5);
    REQUIRE(ds.records.size() == 300);
    CHECK(count_splits(ds) == std::array<std::size_t, 3>{180, 60, 60});

    std::map<int, int> class_counts;
    for (const auto& rec : ds.records) {
        REQUIRE(rec.label >= 0);
        REQUIRE(rec.label < 5);
        REQUIRE(rec.pt.month == 3);
        REQUIRE(on_land_pixel_center(grid, rec.pt));
        class_counts[rec.label] += 1;
    }
    REQUIRE(class_counts.size() == 5);
    // Quantile binning keeps classes near balance.
    for (const auto& [label, count] : class_counts) {
        CHECK(count >= 40);
        CHECK(count <= 80);
    }

    const auto again = build_biomes_task(grid, 300, 5, kSplit, 21);
    for (std::size_t i = 0; i < ds.records.size(); ++i) {
        REQUIRE(again.records[i].label == ds.records[i].label);
        REQUIRE(again.records[i].pt.lon_deg == ds.records[i].pt.lon_deg);
    }
    const auto other = build_biomes_task(grid, 300, 5, kSplit, 22);
    bool differs = false;
    for (std::size_t i = 0; i < ds.records.size() && !differs; ++i)
        differs = other.records[i].pt.lon_deg != ds.records[i].pt.lon_deg ||
                  other.records[i].label != ds.records[i].label;
    CHECK(differs);
}

TEST_CASE("sdm occurrences respect the species month gates", "[tasks]") {
    const auto grid = make_grid();
    SdmDesign design;
    const auto ds = build_sdm_task(grid, 4, 300, kSplit, 33, &design);
    REQUIRE(ds.kind == TaskDataset::Kind::Sdm);
    CHECK(ds.name == "sdm");
    CHECK(ds.n_classes == 4);
    REQUIRE(ds.records.size() == 300);
    REQUIRE(design.species.size() == 4);

    std::map<int, int> species_counts;
    for (const auto& rec : ds.records) {
        REQUIRE(rec.label >= 0);
        REQUIRE(rec.label < 4);
        REQUIRE(on_land_pixel_center(grid, rec.pt));
        const auto& sp = design.species[static_cast<std::size_t>(rec.label)];
        REQUIRE(sp.in_gate(rec.pt.month));
        species_counts[rec.label] += 1;
    }
    REQUIRE(species_counts.size() == 4); // uniform species draw reaches everyone
    for (const auto& sp : design.species) {
        CHECK(sp.gate_len >= 3);
        CHECK(sp.gate_len <= 8);
        CHECK(sp.gate_start >= 1);
        CHECK(sp.gate_start <= 12);
        double norm2 = 0.0;
        for (const double w : sp.weights) norm2 += w * w;
        CHECK(norm2 == Approx(1.0).epsilon(1e-9)); // unit-norm score weights
    }

    // Occurrences concentrate where suitability is high: the mean suitability
    // of sampled records beats the land-wide mean for their species.
    const auto land = grid.land_pixels();
    double rec_suit = 0.0;
    for (const auto& rec : ds.records)
        rec_suit += design.suitability(grid, rec.label, grid.pixel_iy(rec.pt.lat_deg),
                                       grid.pixel_ix(rec.pt.lon_deg), rec.pt.month);
    rec_suit /= static_cast<double>(ds.records.size());
    double land_suit = 0.0;
    std::size_t n_land_eval = 0;
    for (const auto px : land)
        for (int m = 1; m <= 12; ++m)
            for (int sp = 0; sp < 4; ++sp) {
                land_suit += design.suitability(grid, sp, px / grid.width, px % grid.width, m);
                n_land_eval += 1;
            }
    land_suit /= static_cast<double>(n_land_eval);
    CHECK(rec_suit > land_suit);
}

TEST_CASE("in_gate wraps across December", "[tasks]") {
    SdmDesign::Species sp;
    sp.gate_start = 11;
    sp.gate_len = 4; // months 11, 12, 1, 2
    CHECK(sp.in_gate(11));
    CHECK(sp.in_gate(12));
    CHECK(sp.in_gate(1));
    CHECK(sp.in_gate(2));
    CHECK_FALSE(sp.in_gate(3));
    CHECK_FALSE(sp.in_gate(10));
}

TEST_CASE("traits targets are train-standardized and recomputable", "[tasks]") {
    const auto grid = make_grid();
    const auto ds = build_traits_task(grid, 300, 4, kSplit, 44);
    REQUIRE(ds.kind == TaskDataset::Kind::Regression);
    CHECK(ds.name == "traits");
    CHECK(ds.n_targets == 4);
    const auto counts = count_splits(ds);
    CHECK(counts == std::array<std::size_t, 3>{180, 60, 60});

    for (int t = 0; t < 4; ++t) {
        double sum = 0.0, sum2 = 0.0;
        for (std::size_t i = 0; i < 180; ++i) {
            const double y = ds.records[i].y[static_cast<std::size_t>(t)];
            REQUIRE(std::isfinite(y));
            sum += y;
            sum2 += y * y;
        }
        CHECK(sum / 180.0 == Approx(0.0).margin(1e-9));
        CHECK(sum2 / 180.0 == Approx(1.0).epsilon(1e-9));
    }

    // Target 0 is the standardized annual mean of variable 0: recompute it
    // from the grid for every record.
    std::vector<double> raw(ds.records.size());
    for (std::size_t i = 0; i < ds.records.size(); ++i) {
        const auto ix = grid.pixel_ix(ds.records[i].pt.lon_deg);
        const auto iy = grid.pixel_iy(ds.records[i].pt.lat_deg);
        double s = 0.0;
        for (int m = 1; m <= 12; ++m) s += static_cast<double>(grid.value(m, 0, iy, ix));
        raw[i] = s / 12.0;
    }
    double mean = 0.0, sq = 0.0;
    for (std::size_t i = 0; i < 180; ++i) {
        mean += raw[i];
        sq += raw[i] * raw[i];
    }
    mean /= 180.0;
    const double stddev = std::sqrt(sq / 180.0 - mean * mean);
    for (std::size_t i = 0; i < ds.records.size(); ++i)
        REQUIRE(ds.records[i].y[0] == Approx((raw[i] - mean) / stddev).margin(1e-9));
}

TEST_CASE("task builders enforce their preconditions", "[tasks]") {
    const auto grid = make_grid();
    const auto n_land = grid.land_pixels().size();
    CHECK_THROWS_WITH(build_biomes_task(grid, n_land + 1, 4, kSplit, 1),
                      ContainsSubstring("exceeds land pixels"));
    CHECK_THROWS_WITH(build_biomes_task(grid, 100, 1, kSplit, 1), ContainsSubstring("n_classes"));
    CHECK_THROWS_WITH(build_sdm_task(grid, 1, 100, kSplit, 1), ContainsSubstring("n_species"));
    CHECK_THROWS_WITH(build_traits_task(grid, 100, 0, kSplit, 1), ContainsSubstring("n_targets"));

    auto raw = generate_synthetic_climatology(16, 8, 2, 3);
    CHECK_THROWS_WITH(build_sdm_task(raw, 3, 50, kSplit, 1), ContainsSubstring("normalization"));
}

TEST_CASE("classification CSV round-trips", "[tasks]") {
    const auto grid = make_grid();
    const auto ds = build_biomes_task(grid, 120, 4, kSplit, 5);
    const std::string path = "biomes_roundtrip.csv";
    save_task_csv(path, ds);
    const auto loaded = load_task_csv(path, TaskDataset::Kind::Classification);

    REQUIRE(loaded.records.size() == ds.records.size());
    CHECK(loaded.n_classes == 4);
    CHECK(loaded.name == "biomes_roundtrip");
    for (std::size_t i = 0; i < ds.records.size(); ++i) {
        CHECK(loaded.records[i].pt.lon_deg == Approx(ds.records[i].pt.lon_deg).margin(1e-8));
        CHECK(loaded.records[i].pt.lat_deg == Approx(ds.records[i].pt.lat_deg).margin(1e-8));
        CHECK(loaded.records[i].pt.month == ds.records[i].pt.month);
        CHECK(loaded.records[i].label == ds.records[i].label);
        CHECK(loaded.records[i].split == ds.records[i].split);
    }
    std::filesystem::remove(path);
}

TEST_CASE("regression CSV round-trips exactly", "[tasks]") {
    const auto grid = make_grid();
    const auto ds = build_traits_task(grid, 100, 3, kSplit, 6);
    const std::string path = "traits_roundtrip.csv";
    save_task_csv(path, ds);
    const auto loaded = load_task_csv(path, TaskDataset::Kind::Regression);
    REQUIRE(loaded.records.size() == ds.records.size());
    CHECK(loaded.n_targets == 3);
    // %.17g preserves doubles exactly.
    for (std::size_t i = 0; i < ds.records.size(); ++i) REQUIRE(loaded.records[i].y == ds.records[i].y);
    std::filesystem::remove(path);
}

TEST_CASE("task CSV loading rejects malformed files", "[tasks]") {
    const std::string path = "bad_task.csv";
    auto write = [&](const std::string& text) {
        std::ofstream out(path);
        out << text;
    };
    write("lon,lat,month,split,target\n");
    CHECK_THROWS_WITH(load_task_csv(path, TaskDataset::Kind::Classification),
                      ContainsSubstring("unexpected header"));
    write("lon_deg,lat_deg,month,split,target\n1.0,2.0,3,nowhere,1\n");
    CHECK_THROWS_WITH(load_task_csv(path, TaskDataset::Kind::Classification),
                      ContainsSubstring("bad split"));
    write("lon_deg,lat_deg,month,split,target\n1.0,2.0,3\n");
    CHECK_THROWS_WITH(load_task_csv(path, TaskDataset::Kind::Classification),
                      ContainsSubstring("column count"));
    write("");
    CHECK_THROWS_WITH(load_task_csv(path, TaskDataset::Kind::Classification),
                      ContainsSubstring("empty"));
    std::filesystem::remove(path);
}
