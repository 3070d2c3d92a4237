#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "resiren/io.hpp"

namespace resiren {

inline constexpr double kPi = 3.14159265358979323846;

// The four climatology-epoch codes, stored exactly as published (note the
// asymmetric -0.33/0.33 rather than thirds).
inline constexpr double kEpochValues[4] = {-1.0, -0.33, 0.33, 1.0};

struct GeoTemporalPoint {
    double lon_deg = 0.0; // [-180, 180]
    double lat_deg = 0.0; // [-90, 90]
    int month = 1;        // {1..12}
    std::optional<double> epoch; // one of kEpochValues when present

    void validate() const {
        if (!(lon_deg >= -180.0 && lon_deg <= 180.0))
            throw Error("lon_deg out of range [-180,180]: " + std::to_string(lon_deg));
        if (!(lat_deg >= -90.0 && lat_deg <= 90.0))
            throw Error("lat_deg out of range [-90,90]: " + std::to_string(lat_deg));
        if (month < 1 || month > 12)
            throw Error("month out of range {1..12}: " + std::to_string(month));
        if (epoch) {
            bool ok = false;
            for (const double e : kEpochValues) ok = ok || (*epoch == e);
            if (!ok) throw Error("epoch not in {-1,-0.33,0.33,1}: " + std::to_string(*epoch));
        }
    }
};

struct PositionalEncoding {
    std::vector<double> values; // length 4, or 5 with epoch
};

// [lon/180, lat/90, sin(2πm/12), cos(2πm/12)] (+ epoch). The month terms use
// the 1-based month directly; December/January adjacency comes from the cycle.
inline PositionalEncoding encode_position(const GeoTemporalPoint& pt) {
    pt.validate();
    const double angle = 2.0 * kPi * static_cast<double>(pt.month) / 12.0;
    PositionalEncoding enc;
    enc.values = {pt.lon_deg / 180.0, pt.lat_deg / 90.0, std::sin(angle), std::cos(angle)};
    if (pt.epoch) enc.values.push_back(*pt.epoch);
    return enc;
}

// Location-only variant for the Concat-Months ablation and the FS-Loc
// baseline: the network input reduces to [λ, φ].
inline PositionalEncoding encode_location_only(const GeoTemporalPoint& pt) {
    pt.validate();
    return PositionalEncoding{{pt.lon_deg / 180.0, pt.lat_deg / 90.0}};
}

} // namespace resiren
