#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "resiren/io.hpp"
#include "resiren/net.hpp"
#include "resiren/version.hpp"

namespace resiren {

// Per-variable normalization statistics carried alongside the weights so a
// checkpoint is self-contained for denormalized prediction.
struct NormStats {
    std::vector<double> mean, stddev;
};

struct Checkpoint {
    NetworkConfig config;
    ParameterSet<float> params;
    NormStats norm;
    std::uint64_t steps = 0;
    double final_loss = 0.0;
    std::uint64_t seed = 0;
};

// File layout (little-endian): "RSRN" | u32 version | u32 depth,in,hidden,
// emb,out | f64 omega0 | u8 residual | u8 first_layer | u32 V + V*(f64 mu,
// f64 sigma) | u64 steps | f64 final_loss | u64 seed | u64 param_count |
// f32 params | CRC32 of everything before it.
inline void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
    ckpt.config.validate();
    if (ckpt.params.data.size() != ckpt.config.param_count())
        throw Error("save_checkpoint: parameter count mismatch");
    if (ckpt.norm.mean.size() != ckpt.norm.stddev.size())
        throw Error("save_checkpoint: norm stats shape mismatch");
    ByteWriter w;
    w.raw("RSRN", 4);
    w.u32(kCheckpointFormatVersion);
    w.u32(static_cast<std::uint32_t>(ckpt.config.depth));
    w.u32(static_cast<std::uint32_t>(ckpt.config.input_dim));
    w.u32(static_cast<std::uint32_t>(ckpt.config.hidden_dim));
    w.u32(static_cast<std::uint32_t>(ckpt.config.embedding_dim));
    w.u32(static_cast<std::uint32_t>(ckpt.config.output_dim));
    w.f64(ckpt.config.omega0);
    w.u8(static_cast<std::uint8_t>(ckpt.config.residual));
    w.u8(static_cast<std::uint8_t>(ckpt.config.first_layer));
    w.u32(static_cast<std::uint32_t>(ckpt.norm.mean.size()));
    for (std::size_t v = 0; v < ckpt.norm.mean.size(); ++v) {
        w.f64(ckpt.norm.mean[v]);
        w.f64(ckpt.norm.stddev[v]);
    }
    w.u64(ckpt.steps);
    w.f64(ckpt.final_loss);
    w.u64(ckpt.seed);
    w.u64(ckpt.params.data.size());
    for (const float p : ckpt.params.data) w.f32(p);
    w.finish_to_file(path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
    auto r = ByteReader::from_file(path);
    r.check_crc("checkpoint " + path);
    char magic[4];
    r.raw(magic, 4);
    if (std::string(magic, 4) != "RSRN") throw Error("checkpoint " + path + ": bad magic");
    const std::uint32_t version = r.u32();
    if (version != kCheckpointFormatVersion)
        throw Error("checkpoint " + path + ": unsupported format version " + std::to_string(version));
    Checkpoint ckpt;
    ckpt.config.depth = static_cast<int>(r.u32());
    ckpt.config.input_dim = static_cast<int>(r.u32());
    ckpt.config.hidden_dim = static_cast<int>(r.u32());
    ckpt.config.embedding_dim = static_cast<int>(r.u32());
    ckpt.config.output_dim = static_cast<int>(r.u32());
    ckpt.config.omega0 = r.f64();
    const std::uint8_t residual = r.u8();
    if (residual > 2) throw Error("checkpoint " + path + ": bad residual mode");
    ckpt.config.residual = static_cast<ResidualMode>(residual);
    const std::uint8_t first = r.u8();
    if (first > 1) throw Error("checkpoint " + path + ": bad first-layer activation");
    ckpt.config.first_layer = static_cast<ActivationKind>(first);
    ckpt.config.validate();
    const std::uint32_t nvars = r.u32();
    for (std::uint32_t v = 0; v < nvars; ++v) {
        ckpt.norm.mean.push_back(r.f64());
        ckpt.norm.stddev.push_back(r.f64());
    }
    ckpt.steps = r.u64();
    ckpt.final_loss = r.f64();
    ckpt.seed = r.u64();
    const std::uint64_t count = r.u64();
    if (count != ckpt.config.param_count())
        throw Error("checkpoint " + path + ": parameter count disagrees with config");
    ckpt.params = ParameterSet<float>::zeros(ckpt.config);
    for (std::uint64_t i = 0; i < count; ++i) ckpt.params.data[i] = r.f32();
    return ckpt;
}

} // namespace resiren
