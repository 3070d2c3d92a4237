#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "resiren/checkpoint.hpp"
#include "resiren/encoding.hpp"
#include "resiren/io.hpp"
#include "resiren/rng.hpp"
#include "resiren/version.hpp"

namespace resiren {

// A bank of seeded sinusoidal plane waves over normalized coordinates
// x = lon/180, y = lat/90. Used for the spatial texture, the shared ridged
// elevation, the land-mask field, and the held-out task fields.
struct WaveBank {
    std::vector<double> amp, fx, fy, phase;

    static WaveBank draw(Rng& rng, int n_waves, double freq_scale, double amp_decay_power) {
        WaveBank w;
        for (int k = 1; k <= n_waves; ++k) {
            w.amp.push_back(rng.uniform(-1.0, 1.0) / std::pow(static_cast<double>(k), amp_decay_power));
            w.fx.push_back(rng.uniform(-1.0, 1.0) * kPi * freq_scale * k);
            w.fy.push_back(rng.uniform(-1.0, 1.0) * kPi * freq_scale * k);
            w.phase.push_back(rng.uniform(0.0, 2.0 * kPi));
        }
        return w;
    }

    double eval(double x, double y) const {
        double s = 0.0;
        for (std::size_t k = 0; k < amp.size(); ++k)
            s += amp[k] * std::sin(fx[k] * x + fy[k] * y + phase[k]);
        return s;
    }

    // Ridged variant: amp * (1 - |sin|) gives sharp crest lines, the synthetic
    // stand-in for mountain ranges.
    double eval_ridged(double x, double y) const {
        double s = 0.0;
        for (std::size_t k = 0; k < amp.size(); ++k)
            s += std::abs(amp[k]) * (1.0 - std::abs(std::sin(fx[k] * x + fy[k] * y + phase[k])));
        return s;
    }
};

// Component toggles exist so tests can isolate individual terms (e.g. the
// pure-seasonal antisymmetry check).
struct GenOptions {
    bool latitudinal = true;
    bool seasonal = true;
    bool texture = true;
    bool elevation = true;
};

struct ClimGrid {
    std::uint32_t width = 0, height = 0, n_vars = 0, n_months = 12;
    double lon_min = -180.0, lon_max = 180.0, lat_min = -90.0, lat_max = 90.0;
    std::vector<float> values;       // [month][var][row][col], row 0 = southmost
    std::vector<std::uint8_t> mask;  // height*width, 1 = land
    NormStats norm;                  // empty stddev entries (== 0) mean "not fitted"

    std::size_t value_index(int month, int var, std::uint32_t iy, std::uint32_t ix) const {
        return ((static_cast<std::size_t>(month - 1) * n_vars + static_cast<std::size_t>(var)) * height + iy) * width + ix;
    }
    float value(int month, int var, std::uint32_t iy, std::uint32_t ix) const {
        return values[value_index(month, var, iy, ix)];
    }
    bool land(std::uint32_t iy, std::uint32_t ix) const { return mask[static_cast<std::size_t>(iy) * width + ix] != 0; }

    // Pixel centers; the affine pixel<->coordinate map and its inverse.
    double pixel_lon(std::uint32_t ix) const {
        return lon_min + (static_cast<double>(ix) + 0.5) * (lon_max - lon_min) / width;
    }
    double pixel_lat(std::uint32_t iy) const {
        return lat_min + (static_cast<double>(iy) + 0.5) * (lat_max - lat_min) / height;
    }
    std::uint32_t pixel_ix(double lon) const {
        const double t = (lon - lon_min) / (lon_max - lon_min) * width;
        return static_cast<std::uint32_t>(std::clamp(static_cast<long>(std::floor(t)), 0l, static_cast<long>(width) - 1));
    }
    std::uint32_t pixel_iy(double lat) const {
        const double t = (lat - lat_min) / (lat_max - lat_min) * height;
        return static_cast<std::uint32_t>(std::clamp(static_cast<long>(std::floor(t)), 0l, static_cast<long>(height) - 1));
    }

    bool normalized() const {
        if (norm.stddev.size() != n_vars) return false;
        for (const double s : norm.stddev)
            if (!(s > 0.0)) return false;
        return true;
    }

    double normalized_value(int month, int var, std::uint32_t iy, std::uint32_t ix) const {
        return (static_cast<double>(value(month, var, iy, ix)) - norm.mean[static_cast<std::size_t>(var)]) /
               norm.stddev[static_cast<std::size_t>(var)];
    }

    // Land pixels as flat row-major indices iy*width+ix, in scan order.
    std::vector<std::uint32_t> land_pixels() const {
        std::vector<std::uint32_t> out;
        for (std::uint32_t i = 0; i < height * width; ++i)
            if (mask[i]) out.push_back(i);
        return out;
    }
};

// Deterministic synthetic climatology. Per (variable v, month m, position):
//   a_v*cos(pi*phi/90)                                (latitudinal gradient)
// + b_v*cos(2*pi*(m - phase_v)/12)*sign(phi)          (season, flipped across the equator)
// + sum_k c_{v,k}*sin(alpha_k*x + beta_k*y + gamma_k) (smooth texture, shared wave geometry)
// + d_v * sum_k e_k*(1 - |sin(...)|)                  (shared ridged elevation)
// The land mask thresholds a low-frequency field at its 0.7-quantile, so at
// least 30% of pixels are land by construction.
//
// Draw order from the seeded generator is part of the format contract:
// texture waves (8), elevation waves (6), land waves (4), then per variable
// a_v, b_v, phase_v, c_{v,1..8}, d_v.
inline ClimGrid generate_synthetic_climatology(std::uint32_t width, std::uint32_t height, std::uint32_t n_vars,
                                               std::uint64_t seed, const GenOptions& opt = {}) {
    if (width < 8 || height < 8) throw Error("generate_synthetic_climatology: W,H must be >= 8");
    if (n_vars < 1 || n_vars > 16) throw Error("generate_synthetic_climatology: V must be in 1..16");

    Rng rng(subseed(seed, "climatology"));
    const WaveBank texture = WaveBank::draw(rng, 8, 1.0, 0.5);
    WaveBank elevation = WaveBank::draw(rng, 6, 1.7, 0.5);
    for (auto& a : elevation.amp) a = 0.2 + 0.3 * std::abs(a); // ridge amplitudes in [0.2, 0.5]
    const WaveBank land_field = WaveBank::draw(rng, 4, 0.55, 1.0);

    struct VarCoeffs {
        double a, b, phase, d;
        std::vector<double> c;
    };
    std::vector<VarCoeffs> vars;
    for (std::uint32_t v = 0; v < n_vars; ++v) {
        VarCoeffs vc;
        vc.a = rng.uniform(0.5, 1.5);
        vc.b = rng.uniform(0.3, 1.0);
        vc.phase = rng.uniform(0.0, 12.0);
        for (int k = 1; k <= 8; ++k) vc.c.push_back(rng.uniform(-1.0, 1.0) * 0.6 / std::sqrt(static_cast<double>(k)));
        vc.d = rng.uniform(0.5, 1.5);
        vars.push_back(std::move(vc));
    }

    ClimGrid grid;
    grid.width = width;
    grid.height = height;
    grid.n_vars = n_vars;
    grid.values.assign(static_cast<std::size_t>(12) * n_vars * height * width, 0.0f);
    grid.mask.assign(static_cast<std::size_t>(height) * width, 0);
    grid.norm.mean.assign(n_vars, 0.0);
    grid.norm.stddev.assign(n_vars, 0.0);

    // Land mask: threshold the low-frequency field at its 0.7-quantile.
    std::vector<double> land_values(static_cast<std::size_t>(height) * width);
    for (std::uint32_t iy = 0; iy < height; ++iy) {
        const double y = grid.pixel_lat(iy) / 90.0;
        for (std::uint32_t ix = 0; ix < width; ++ix) {
            const double x = grid.pixel_lon(ix) / 180.0;
            land_values[static_cast<std::size_t>(iy) * width + ix] = land_field.eval(x, y);
        }
    }
    std::vector<double> sorted = land_values;
    std::sort(sorted.begin(), sorted.end());
    const double threshold = sorted[static_cast<std::size_t>(0.7 * static_cast<double>(sorted.size()))];
    for (std::size_t i = 0; i < land_values.size(); ++i) grid.mask[i] = land_values[i] >= threshold ? 1 : 0;

    for (std::uint32_t iy = 0; iy < height; ++iy) {
        const double lat = grid.pixel_lat(iy);
        const double y = lat / 90.0;
        const double sgn = lat >= 0.0 ? 1.0 : -1.0;
        for (std::uint32_t ix = 0; ix < width; ++ix) {
            const double x = grid.pixel_lon(ix) / 180.0;
            const double tex_base = opt.elevation ? elevation.eval_ridged(x, y) : 0.0;
            for (std::uint32_t v = 0; v < n_vars; ++v) {
                const VarCoeffs& vc = vars[v];
                double texture_term = 0.0;
                if (opt.texture)
                    for (std::size_t k = 0; k < texture.amp.size(); ++k)
                        texture_term += vc.c[k] * std::sin(texture.fx[k] * x + texture.fy[k] * y + texture.phase[k]);
                const double lat_term = opt.latitudinal ? vc.a * std::cos(kPi * lat / 90.0) : 0.0;
                for (int m = 1; m <= 12; ++m) {
                    const double season = opt.seasonal
                        ? vc.b * std::cos(2.0 * kPi * (static_cast<double>(m) - vc.phase) / 12.0) * sgn
                        : 0.0;
                    const double value = lat_term + season + texture_term + vc.d * tex_base;
                    grid.values[grid.value_index(m, static_cast<int>(v), iy, ix)] = static_cast<float>(value);
                }
            }
        }
    }
    return grid;
}

// Per-variable mean/std over all months and land pixels, stored in the grid.
inline void fit_normalization(ClimGrid& grid) {
    const auto land = grid.land_pixels();
    if (land.empty()) throw Error("fit_normalization: empty land mask");
    for (std::uint32_t v = 0; v < grid.n_vars; ++v) {
        double sum = 0.0, sum2 = 0.0;
        const std::size_t n = land.size() * 12;
        for (int m = 1; m <= 12; ++m)
            for (const std::uint32_t px : land) {
                const double x = grid.value(m, static_cast<int>(v), px / grid.width, px % grid.width);
                sum += x;
                sum2 += x * x;
            }
        const double mean = sum / static_cast<double>(n);
        const double var = std::max(0.0, sum2 / static_cast<double>(n) - mean * mean);
        if (!(var > 0.0)) throw Error("fit_normalization: variable " + std::to_string(v) + " has zero variance");
        grid.norm.mean[v] = mean;
        grid.norm.stddev[v] = std::sqrt(var);
    }
}

// File layout (little-endian): "CGRD" | u32 version | u32 W,H,V,M | f64
// lon_min,lon_max,lat_min,lat_max | V*(f64 mu, f64 sigma; zeros when not
// fitted) | f32 values [M][V][H][W] | bit-packed mask (LSB-first) | CRC32.
inline void save_grid(const std::string& path, const ClimGrid& grid) {
    ByteWriter w;
    w.raw("CGRD", 4);
    w.u32(kGridFormatVersion);
    w.u32(grid.width);
    w.u32(grid.height);
    w.u32(grid.n_vars);
    w.u32(grid.n_months);
    w.f64(grid.lon_min);
    w.f64(grid.lon_max);
    w.f64(grid.lat_min);
    w.f64(grid.lat_max);
    for (std::uint32_t v = 0; v < grid.n_vars; ++v) {
        w.f64(v < grid.norm.mean.size() ? grid.norm.mean[v] : 0.0);
        w.f64(v < grid.norm.stddev.size() ? grid.norm.stddev[v] : 0.0);
    }
    for (const float x : grid.values) w.f32(x);
    const std::size_t n_pixels = static_cast<std::size_t>(grid.height) * grid.width;
    for (std::size_t i = 0; i < n_pixels; i += 8) {
        std::uint8_t byte = 0;
        for (std::size_t b = 0; b < 8 && i + b < n_pixels; ++b)
            if (grid.mask[i + b]) byte |= static_cast<std::uint8_t>(1u << b);
        w.u8(byte);
    }
    w.finish_to_file(path);
}

inline ClimGrid load_grid(const std::string& path) {
    auto r = ByteReader::from_file(path);
    r.check_crc("grid " + path);
    char magic[4];
    r.raw(magic, 4);
    if (std::string(magic, 4) != "CGRD") throw Error("grid " + path + ": bad magic");
    const std::uint32_t version = r.u32();
    if (version != kGridFormatVersion)
        throw Error("grid " + path + ": unsupported format version " + std::to_string(version));
    ClimGrid grid;
    grid.width = r.u32();
    grid.height = r.u32();
    grid.n_vars = r.u32();
    grid.n_months = r.u32();
    if (grid.n_months != 12) throw Error("grid " + path + ": month count must be 12");
    grid.lon_min = r.f64();
    grid.lon_max = r.f64();
    grid.lat_min = r.f64();
    grid.lat_max = r.f64();
    for (std::uint32_t v = 0; v < grid.n_vars; ++v) {
        grid.norm.mean.push_back(r.f64());
        grid.norm.stddev.push_back(r.f64());
    }
    const std::size_t n_values = static_cast<std::size_t>(12) * grid.n_vars * grid.height * grid.width;
    grid.values.resize(n_values);
    for (auto& x : grid.values) x = r.f32();
    const std::size_t n_pixels = static_cast<std::size_t>(grid.height) * grid.width;
    grid.mask.assign(n_pixels, 0);
    for (std::size_t i = 0; i < n_pixels; i += 8) {
        const std::uint8_t byte = r.u8();
        for (std::size_t b = 0; b < 8 && i + b < n_pixels; ++b)
            grid.mask[i + b] = (byte >> b) & 1u;
    }
    if (r.remaining() != 0) throw Error("grid " + path + ": trailing bytes");
    return grid;
}

} // namespace resiren
