#pragma once

#include <cstdint>
#include <vector>

#include "resiren/encoding.hpp"
#include "resiren/grid.hpp"
#include "resiren/rng.hpp"

namespace resiren {

struct SampleBatch {
    std::size_t batch = 0;
    int enc_dim = 0, target_dim = 0;
    std::vector<float> encodings; // batch x enc_dim
    std::vector<float> targets;   // batch x target_dim, normalized
    std::vector<int> months;      // observation month per sample (3 under march_only)
};

// One epoch visits every land pixel exactly once in a seeded shuffle; each
// visit draws a uniform month. The pixel permutation and the month draws use
// independent sub-streams of the train seed, so March-Only (which skips month
// draws) and full training consume identical visit orders by construction.
class EpochSampler {
public:
    EpochSampler(const ClimGrid& grid, std::size_t batch_size, std::uint64_t train_seed,
                 std::uint64_t epoch_index, bool march_only, bool concat_months)
        : grid_(grid),
          batch_size_(batch_size),
          months_rng_(subseed(train_seed, "months", epoch_index)),
          march_only_(march_only),
          concat_months_(concat_months) {
        if (batch_size == 0) throw Error("EpochSampler: batch_size must be >= 1");
        if (!grid.normalized()) throw Error("EpochSampler: grid normalization not fitted");
        land_ = grid.land_pixels();
        if (land_.empty()) throw Error("EpochSampler: empty land mask");
        Rng perm_rng(subseed(train_seed, "perm", epoch_index));
        order_ = perm_rng.permutation(static_cast<std::uint32_t>(land_.size()));
    }

    int enc_dim() const { return concat_months_ ? 2 : 4; }
    int target_dim() const { return static_cast<int>(concat_months_ ? 12 * grid_.n_vars : grid_.n_vars); }
    std::size_t visits_per_epoch() const { return land_.size(); }

    // Fills the next batch; returns false once the epoch is exhausted. The
    // last batch may be short.
    bool next(SampleBatch& out) {
        if (cursor_ >= order_.size()) return false;
        const std::size_t n = std::min(batch_size_, order_.size() - cursor_);
        const int ed = enc_dim(), td = target_dim();
        out.batch = n;
        out.enc_dim = ed;
        out.target_dim = td;
        out.encodings.assign(n * static_cast<std::size_t>(ed), 0.0f);
        out.targets.assign(n * static_cast<std::size_t>(td), 0.0f);
        out.months.assign(n, 0);
        for (std::size_t i = 0; i < n; ++i) {
            const std::uint32_t px = land_[order_[cursor_ + i]];
            const std::uint32_t iy = px / grid_.width, ix = px % grid_.width;
            GeoTemporalPoint pt;
            pt.lon_deg = grid_.pixel_lon(ix);
            pt.lat_deg = grid_.pixel_lat(iy);
            pt.month = march_only_ ? 3 : 1 + static_cast<int>(months_rng_.uniform_int(12));
            out.months[i] = pt.month;
            const PositionalEncoding enc = concat_months_ ? encode_location_only(pt) : encode_position(pt);
            for (int d = 0; d < ed; ++d)
                out.encodings[i * static_cast<std::size_t>(ed) + d] = static_cast<float>(enc.values[static_cast<std::size_t>(d)]);
            if (concat_months_) {
                for (int m = 1; m <= 12; ++m)
                    for (std::uint32_t v = 0; v < grid_.n_vars; ++v)
                        out.targets[i * static_cast<std::size_t>(td) + static_cast<std::size_t>(m - 1) * grid_.n_vars + v] =
                            static_cast<float>(grid_.normalized_value(m, static_cast<int>(v), iy, ix));
            } else {
                for (std::uint32_t v = 0; v < grid_.n_vars; ++v)
                    out.targets[i * static_cast<std::size_t>(td) + v] =
                        static_cast<float>(grid_.normalized_value(pt.month, static_cast<int>(v), iy, ix));
            }
        }
        cursor_ += n;
        return true;
    }

private:
    const ClimGrid& grid_;
    std::size_t batch_size_;
    std::vector<std::uint32_t> land_;
    std::vector<std::uint32_t> order_;
    std::size_t cursor_ = 0;
    Rng months_rng_;
    bool march_only_, concat_months_;
};

} // namespace resiren
