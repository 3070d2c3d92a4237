#include <catch2/catch_amalgamated.hpp>

#include <map>

#include "resiren/sampler.hpp"

using Catch::Approx;
using Catch::Matchers::ContainsSubstring;
using namespace resiren;

namespace {

ClimGrid make_grid(std::uint32_t w = 16, std::uint32_t h = 8, std::uint32_t v = 3) {
    auto grid = generate_synthetic_climatology(w, h, v, 11);
    fit_normalization(grid);
    return grid;
}

// Recover the visited pixel from a batch row's location encoding.
std::uint32_t pixel_of(const ClimGrid& grid, const SampleBatch& batch, std::size_t i) {
    const double lon = static_cast<double>(batch.encodings[i * static_cast<std::size_t>(batch.enc_dim)]) * 180.0;
    const double lat = static_cast<double>(batch.encodings[i * static_cast<std::size_t>(batch.enc_dim) + 1]) * 90.0;
    return grid.pixel_iy(lat) * grid.width + grid.pixel_ix(lon);
}

} // namespace

TEST_CASE("one epoch visits every land pixel exactly once", "[sampler]") {
    const auto grid = make_grid();
    const auto land = grid.land_pixels();
    EpochSampler sampler(grid, 7, 5, 0, false, false);
    CHECK(sampler.visits_per_epoch() == land.size());

    std::map<std::uint32_t, int> visits;
    SampleBatch batch;
    std::size_t total = 0;
    std::size_t last_batch = 0;
    while (sampler.next(batch)) {
        for (std::size_t i = 0; i < batch.batch; ++i) visits[pixel_of(grid, batch, i)] += 1;
        total += batch.batch;
        last_batch = batch.batch;
    }
    CHECK(total == land.size());
    if (land.size() % 7 != 0) CHECK(last_batch == land.size() % 7);
    REQUIRE(visits.size() == land.size());
    for (const auto px : land) {
        REQUIRE(visits.count(px) == 1);
        REQUIRE(visits.at(px) == 1);
    }
}

TEST_CASE("batches are deterministic per (seed, epoch)", "[sampler]") {
    const auto grid = make_grid();
    EpochSampler a(grid, 8, 5, 0, false, false);
    EpochSampler b(grid, 8, 5, 0, false, false);
    SampleBatch ba, bb;
    while (a.next(ba)) {
        REQUIRE(b.next(bb));
        REQUIRE(ba.encodings == bb.encodings);
        REQUIRE(ba.targets == bb.targets);
        REQUIRE(ba.months == bb.months);
    }
    CHECK_FALSE(b.next(bb));

    // A different epoch reshuffles the visit order.
    EpochSampler c(grid, 8, 5, 1, false, false);
    SampleBatch bc;
    EpochSampler a2(grid, 8, 5, 0, false, false);
    REQUIRE(a2.next(ba));
    REQUIRE(c.next(bc));
    CHECK(ba.encodings != bc.encodings);
}

TEST_CASE("targets are the normalized grid values for the drawn month", "[sampler]") {
    const auto grid = make_grid();
    EpochSampler sampler(grid, 6, 9, 2, false, false);
    SampleBatch batch;
    REQUIRE(sampler.next(batch));
    REQUIRE(batch.enc_dim == 4);
    REQUIRE(batch.target_dim == 3);
    for (std::size_t i = 0; i < batch.batch; ++i) {
        const auto px = pixel_of(grid, batch, i);
        const int month = batch.months[i];
        REQUIRE(month >= 1);
        REQUIRE(month <= 12);
        // Month encoding components match the drawn month.
        const double angle = 2.0 * kPi * month / 12.0;
        CHECK(batch.encodings[i * 4 + 2] == Approx(std::sin(angle)).margin(1e-6));
        CHECK(batch.encodings[i * 4 + 3] == Approx(std::cos(angle)).margin(1e-6));
        for (int v = 0; v < 3; ++v)
            REQUIRE(batch.targets[i * 3 + static_cast<std::size_t>(v)] ==
                    static_cast<float>(grid.normalized_value(month, v, px / grid.width, px % grid.width)));
    }
}

TEST_CASE("months are uniform over one epoch", "[sampler]") {
    auto grid = generate_synthetic_climatology(64, 32, 8, 11);
    fit_normalization(grid);
    EpochSampler sampler(grid, 64, 5, 0, false, false);
    SampleBatch batch;
    std::size_t counts[12] = {0};
    std::size_t total = 0;
    while (sampler.next(batch))
        for (std::size_t i = 0; i < batch.batch; ++i) {
            counts[batch.months[i] - 1] += 1;
            total += 1;
        }
    // Frozen draw: chi-square 8.40 on 11 dof for this seed; the bound leaves
    // headroom while still catching a broken month stream.
    const double expect = static_cast<double>(total) / 12.0;
    double chi2 = 0.0;
    for (const auto c : counts) {
        const double d = static_cast<double>(c) - expect;
        chi2 += d * d / expect;
    }
    CHECK(chi2 < 25.0);
    for (const auto c : counts) CHECK(c > 0);
}

TEST_CASE("march-only pins every visit to month 3", "[sampler]") {
    const auto grid = make_grid();
    EpochSampler sampler(grid, 8, 5, 0, true, false);
    SampleBatch batch;
    while (sampler.next(batch))
        for (std::size_t i = 0; i < batch.batch; ++i) {
            REQUIRE(batch.months[i] == 3);
            CHECK(batch.encodings[i * 4 + 2] == Approx(1.0).margin(1e-6)); // sin(pi/2)
        }
}

TEST_CASE("march-only and full training share the visit order", "[sampler]") {
    const auto grid = make_grid();
    EpochSampler full(grid, 8, 5, 0, false, false);
    EpochSampler march(grid, 8, 5, 0, true, false);
    SampleBatch bf, bm;
    while (full.next(bf)) {
        REQUIRE(march.next(bm));
        for (std::size_t i = 0; i < bf.batch; ++i)
            REQUIRE(pixel_of(grid, bf, i) == pixel_of(grid, bm, i));
    }
}

TEST_CASE("concat-months emits location-only encodings with stacked targets", "[sampler]") {
    const auto grid = make_grid();
    EpochSampler sampler(grid, 5, 7, 0, false, true);
    CHECK(sampler.enc_dim() == 2);
    CHECK(sampler.target_dim() == 36);
    SampleBatch batch;
    REQUIRE(sampler.next(batch));
    for (std::size_t i = 0; i < batch.batch; ++i) {
        const auto px = pixel_of(grid, batch, i);
        for (int m = 1; m <= 12; ++m)
            for (int v = 0; v < 3; ++v)
                REQUIRE(batch.targets[i * 36 + static_cast<std::size_t>(m - 1) * 3 + static_cast<std::size_t>(v)] ==
                        static_cast<float>(grid.normalized_value(m, v, px / grid.width, px % grid.width)));
    }
}

TEST_CASE("the sampler enforces its preconditions", "[sampler]") {
    auto grid = generate_synthetic_climatology(16, 8, 3, 11); // not normalized
    CHECK_THROWS_WITH(EpochSampler(grid, 8, 5, 0, false, false), ContainsSubstring("normalization"));
    fit_normalization(grid);
    CHECK_THROWS_WITH(EpochSampler(grid, 0, 5, 0, false, false), ContainsSubstring("batch_size"));
}
