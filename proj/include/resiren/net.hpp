#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "resiren/io.hpp"
#include "resiren/parallel.hpp"
#include "resiren/rng.hpp"

namespace resiren {

enum class ActivationKind : std::uint8_t { HSiren = 0, Sine = 1, Identity = 2 };
enum class ResidualMode : std::uint8_t { Off = 0, Half = 1, SqrtTwo = 2 };

inline const char* to_string(ResidualMode m) {
    switch (m) {
        case ResidualMode::Off: return "off";
        case ResidualMode::Half: return "half";
        default: return "sqrt2";
    }
}
inline const char* to_string(ActivationKind a) {
    switch (a) {
        case ActivationKind::HSiren: return "hsiren";
        case ActivationKind::Sine: return "sine";
        default: return "identity";
    }
}

// Architecture description. Depth D counts the backbone layers including the
// Identity-activated embedding layer; the affine head is separate.
struct NetworkConfig {
    int depth = 16;
    int input_dim = 4;     // 4, 5 with epoch, or 2 for location-only variants
    int hidden_dim = 512;
    int embedding_dim = 256;
    int output_dim = 11;   // head width (number of regressed variables)
    double omega0 = 30.0;
    ResidualMode residual = ResidualMode::Half;
    ActivationKind first_layer = ActivationKind::HSiren;

    void validate() const {
        if (depth < 2) throw Error("NetworkConfig.depth must be >= 2");
        if (input_dim < 1 || hidden_dim < 1 || embedding_dim < 1 || output_dim < 1)
            throw Error("NetworkConfig dims must be >= 1");
        if (!(omega0 > 0.0)) throw Error("NetworkConfig.omega0 must be > 0");
        if (first_layer == ActivationKind::Identity)
            throw Error("NetworkConfig.first_layer must be hsiren or sine");
    }

    // 1-based layer shapes: 1 maps input->hidden, 2..D-1 hidden->hidden,
    // D maps hidden->embedding.
    int layer_in(int j) const { return j == 1 ? input_dim : hidden_dim; }
    int layer_out(int j) const { return j == depth ? embedding_dim : hidden_dim; }

    ActivationKind activation_at(int j) const {
        if (j == 1) return first_layer;
        if (j == depth) return ActivationKind::Identity;
        return ActivationKind::Sine;
    }

    // Residual mixing applies only between equal-shape hidden->hidden layers,
    // so the chain seeds at h'_2 = h_2 and the first mix happens at layer 3.
    // Layer D (hidden->embedding) takes no incoming skip.
    bool mixes(int j) const {
        return residual != ResidualMode::Off && j >= 3 && j <= depth - 1;
    }

    double mix_factor() const {
        return residual == ResidualMode::SqrtTwo ? 1.0 / std::sqrt(2.0) : 0.5;
    }

    std::uint64_t param_count() const {
        std::uint64_t n = 0;
        for (int j = 1; j <= depth; ++j)
            n += static_cast<std::uint64_t>(layer_in(j)) * layer_out(j) + layer_out(j);
        n += static_cast<std::uint64_t>(embedding_dim) * output_dim + output_dim;
        return n;
    }
};

inline double activation(ActivationKind kind, double omega0, double x) {
    switch (kind) {
        case ActivationKind::HSiren: return std::sin(omega0 * std::sinh(2.0 * x));
        case ActivationKind::Sine: return std::sin(omega0 * x);
        default: return x;
    }
}

inline double activation_derivative(ActivationKind kind, double omega0, double x) {
    switch (kind) {
        case ActivationKind::HSiren:
            return 2.0 * omega0 * std::cosh(2.0 * x) * std::cos(omega0 * std::sinh(2.0 * x));
        case ActivationKind::Sine: return omega0 * std::cos(omega0 * x);
        default: return 1.0;
    }
}

// Flat parameter storage: layer 1 W,b | layer 2 W,b | ... | layer D W,b |
// head W,b. Weights are row-major [out][in]. The flat layout doubles as the
// checkpoint serialization order and the Adam moment layout.
template <typename T>
struct ParameterSet {
    std::vector<T> data;
    std::vector<std::size_t> w_off, b_off; // index 0..D-1 = layers 1..D, index D = head
    int depth = 0;

    static ParameterSet zeros(const NetworkConfig& cfg) {
        cfg.validate();
        ParameterSet p;
        p.depth = cfg.depth;
        std::size_t off = 0;
        for (int j = 1; j <= cfg.depth; ++j) {
            p.w_off.push_back(off);
            off += static_cast<std::size_t>(cfg.layer_in(j)) * cfg.layer_out(j);
            p.b_off.push_back(off);
            off += static_cast<std::size_t>(cfg.layer_out(j));
        }
        p.w_off.push_back(off);
        off += static_cast<std::size_t>(cfg.embedding_dim) * cfg.output_dim;
        p.b_off.push_back(off);
        off += static_cast<std::size_t>(cfg.output_dim);
        p.data.assign(off, T(0));
        return p;
    }

    T* layer_w(int j) { return data.data() + w_off[static_cast<std::size_t>(j) - 1]; }
    T* layer_b(int j) { return data.data() + b_off[static_cast<std::size_t>(j) - 1]; }
    const T* layer_w(int j) const { return data.data() + w_off[static_cast<std::size_t>(j) - 1]; }
    const T* layer_b(int j) const { return data.data() + b_off[static_cast<std::size_t>(j) - 1]; }
    T* head_w() { return data.data() + w_off[static_cast<std::size_t>(depth)]; }
    T* head_b() { return data.data() + b_off[static_cast<std::size_t>(depth)]; }
    const T* head_w() const { return data.data() + w_off[static_cast<std::size_t>(depth)]; }
    const T* head_b() const { return data.data() + b_off[static_cast<std::size_t>(depth)]; }
};

template <typename To, typename From>
ParameterSet<To> cast_params(const NetworkConfig& cfg, const ParameterSet<From>& src) {
    auto dst = ParameterSet<To>::zeros(cfg);
    for (std::size_t i = 0; i < src.data.size(); ++i) dst.data[i] = static_cast<To>(src.data[i]);
    return dst;
}

// SIREN-style initialization: layer 1 U[-1/fan_in, 1/fan_in]; deeper layers
// U[-sqrt(6/fan_in)/omega0, ...]; head U[-sqrt(6/fan_in), ...] (no sine
// follows it); biases zero. Draws happen in double so the realization is
// identical for float and double instantiations.
template <typename T = float>
ParameterSet<T> init_parameters(const NetworkConfig& cfg, std::uint64_t seed) {
    auto params = ParameterSet<T>::zeros(cfg);
    Rng rng(seed);
    for (int j = 1; j <= cfg.depth; ++j) {
        const int fan_in = cfg.layer_in(j);
        const double bound = (j == 1) ? 1.0 / fan_in : std::sqrt(6.0 / fan_in) / cfg.omega0;
        T* w = params.layer_w(j);
        const std::size_t n = static_cast<std::size_t>(fan_in) * cfg.layer_out(j);
        for (std::size_t i = 0; i < n; ++i) w[i] = static_cast<T>(rng.uniform(-bound, bound));
    }
    {
        const double bound = std::sqrt(6.0 / cfg.embedding_dim);
        T* w = params.head_w();
        const std::size_t n = static_cast<std::size_t>(cfg.embedding_dim) * cfg.output_dim;
        for (std::size_t i = 0; i < n; ++i) w[i] = static_cast<T>(rng.uniform(-bound, bound));
    }
    return params;
}

// Per-layer record of the forward pass: pre-activation h_j, residual-mixed
// pre-activation h'_j, and post-activations z (z[0] is the input batch,
// z[j] = A_j(h'_j); z[D] is the embedding).
template <typename T>
struct ForwardTrace {
    std::size_t batch = 0;
    std::vector<std::vector<T>> h, hp; // D entries each
    std::vector<std::vector<T>> z;     // D+1 entries
};

template <typename T>
struct ForwardResult {
    std::vector<T> embeddings; // B x embedding_dim
    std::vector<T> head;       // B x output_dim (empty unless with_head)
    ForwardTrace<T> trace;     // populated only with keep_trace
};

template <typename T>
ForwardResult<T> forward(const NetworkConfig& cfg, const ParameterSet<T>& params, const T* enc,
                         std::size_t batch, bool keep_trace, bool with_head) {
    cfg.validate();
    if (batch == 0) throw Error("forward: empty batch");
    const int D = cfg.depth;
    const T r = static_cast<T>(cfg.mix_factor());

    // Working post-activations for the current layer boundary.
    std::vector<T> z(static_cast<std::size_t>(batch) * cfg.input_dim);
    std::copy(enc, enc + z.size(), z.begin());

    ForwardResult<T> out;
    if (keep_trace) {
        out.trace.batch = batch;
        out.trace.h.resize(static_cast<std::size_t>(D));
        out.trace.hp.resize(static_cast<std::size_t>(D));
        out.trace.z.resize(static_cast<std::size_t>(D) + 1);
        out.trace.z[0] = z;
    }

    std::vector<T> hp_prev; // h'_{j-1}, only meaningful at hidden width
    std::vector<T> h, hp, z_next;
    bool nonfinite = false;
    int nonfinite_layer = 0;

    for (int j = 1; j <= D; ++j) {
        const int in = cfg.layer_in(j), outw = cfg.layer_out(j);
        const T* W = params.layer_w(j);
        const T* b = params.layer_b(j);
        const ActivationKind act = cfg.activation_at(j);
        const bool mix = cfg.mixes(j);

        h.assign(static_cast<std::size_t>(batch) * outw, T(0));
        parallel_for(batch, [&](std::size_t b0, std::size_t b1) {
            for (std::size_t s = b0; s < b1; ++s) {
                const T* zin = z.data() + s * static_cast<std::size_t>(in);
                T* hrow = h.data() + s * static_cast<std::size_t>(outw);
                for (int row = 0; row < outw; ++row) {
                    const T* wrow = W + static_cast<std::size_t>(row) * in;
                    T acc = b[row];
                    for (int c = 0; c < in; ++c) acc += wrow[c] * zin[c];
                    hrow[row] = acc;
                }
            }
        });

        if (mix) {
            hp.resize(h.size());
            for (std::size_t i = 0; i < h.size(); ++i) hp[i] = (h[i] + hp_prev[i]) * r;
        } else {
            hp = h;
        }
        for (const T v : hp) {
            if (!std::isfinite(static_cast<double>(v))) {
                nonfinite = true;
                break;
            }
        }
        if (nonfinite) {
            nonfinite_layer = j;
            break;
        }

        z_next.resize(hp.size());
        if (act == ActivationKind::Identity) {
            z_next = hp;
        } else {
            parallel_for(batch, [&](std::size_t b0, std::size_t b1) {
                for (std::size_t s = b0; s < b1; ++s) {
                    const std::size_t base = s * static_cast<std::size_t>(outw);
                    for (int u = 0; u < outw; ++u)
                        z_next[base + u] = static_cast<T>(
                            activation(act, cfg.omega0, static_cast<double>(hp[base + u])));
                }
            });
        }

        if (keep_trace) {
            out.trace.h[static_cast<std::size_t>(j) - 1] = h;
            out.trace.hp[static_cast<std::size_t>(j) - 1] = hp;
            out.trace.z[static_cast<std::size_t>(j)] = z_next;
        }
        hp_prev = hp;
        z = z_next;
    }
    if (nonfinite)
        throw Error("non-finite activation at layer " + std::to_string(nonfinite_layer));

    out.embeddings = z; // layer D is Identity, so z == h'_D == e

    if (with_head) {
        const int emb = cfg.embedding_dim, outd = cfg.output_dim;
        const T* W = params.head_w();
        const T* b = params.head_b();
        out.head.assign(batch * static_cast<std::size_t>(outd), T(0));
        parallel_for(batch, [&](std::size_t b0, std::size_t b1) {
            for (std::size_t s = b0; s < b1; ++s) {
                const T* e = out.embeddings.data() + s * static_cast<std::size_t>(emb);
                T* y = out.head.data() + s * static_cast<std::size_t>(outd);
                for (int row = 0; row < outd; ++row) {
                    const T* wrow = W + static_cast<std::size_t>(row) * emb;
                    T acc = b[row];
                    for (int c = 0; c < emb; ++c) acc += wrow[c] * e[c];
                    y[row] = acc;
                }
            }
        });
    }
    return out;
}

template <typename T>
ForwardResult<T> forward(const NetworkConfig& cfg, const ParameterSet<T>& params,
                         const std::vector<T>& enc, bool keep_trace, bool with_head) {
    if (enc.size() % static_cast<std::size_t>(cfg.input_dim) != 0)
        throw Error("forward: encoding size not a multiple of input_dim");
    return forward(cfg, params, enc.data(), enc.size() / cfg.input_dim, keep_trace, with_head);
}

// Reverse-mode gradients of a scalar loss through the head (optional) and the
// residual recurrence. grad_out is dL/d(head output) when through_head, else
// dL/d(embedding), flattened B x width. The skip chain back-propagates the mix
// factor along both branches: at a mixing layer j, dL/dh_j = r * dL/dh'_j and
// dL/dh'_{j-1} gains r * dL/dh'_j on top of the usual path through W_j.
template <typename T>
ParameterSet<T> backward(const NetworkConfig& cfg, const ParameterSet<T>& params,
                         const ForwardTrace<T>& trace, const std::vector<T>& grad_out,
                         bool through_head) {
    if (trace.batch == 0) throw Error("backward: missing forward trace");
    const std::size_t B = trace.batch;
    const int D = cfg.depth;
    const T r = static_cast<T>(cfg.mix_factor());
    auto grads = ParameterSet<T>::zeros(cfg);

    // dL/dh'_j for the layer currently being processed.
    std::vector<T> ghp;
    if (through_head) {
        const int emb = cfg.embedding_dim, outd = cfg.output_dim;
        if (grad_out.size() != B * static_cast<std::size_t>(outd))
            throw Error("backward: grad_out shape mismatch");
        const T* W = params.head_w();
        T* dW = grads.head_w();
        T* db = grads.head_b();
        const std::vector<T>& e = trace.z[static_cast<std::size_t>(D)];
        ghp.assign(B * static_cast<std::size_t>(emb), T(0));
        for (std::size_t s = 0; s < B; ++s) {
            const T* g = grad_out.data() + s * static_cast<std::size_t>(outd);
            const T* erow = e.data() + s * static_cast<std::size_t>(emb);
            T* ge = ghp.data() + s * static_cast<std::size_t>(emb);
            for (int row = 0; row < outd; ++row) {
                const T gv = g[row];
                db[row] += gv;
                T* dwrow = dW + static_cast<std::size_t>(row) * emb;
                const T* wrow = W + static_cast<std::size_t>(row) * emb;
                for (int c = 0; c < emb; ++c) {
                    dwrow[c] += gv * erow[c];
                    ge[c] += wrow[c] * gv;
                }
            }
        }
    } else {
        if (grad_out.size() != B * static_cast<std::size_t>(cfg.embedding_dim))
            throw Error("backward: grad_out shape mismatch");
        ghp = grad_out;
    }

    std::vector<T> gh, ghp_prev;
    for (int j = D; j >= 1; --j) {
        const int in = cfg.layer_in(j), outw = cfg.layer_out(j);
        const bool mix = cfg.mixes(j);

        // Through the mix: direct branch picks up the factor r.
        if (mix) {
            gh.resize(ghp.size());
            for (std::size_t i = 0; i < ghp.size(); ++i) gh[i] = ghp[i] * r;
        } else {
            gh = ghp;
        }

        const T* W = params.layer_w(j);
        T* dW = grads.layer_w(j);
        T* db = grads.layer_b(j);
        const std::vector<T>& zin = trace.z[static_cast<std::size_t>(j) - 1];

        if (j > 1) {
            ghp_prev.assign(B * static_cast<std::size_t>(in), T(0));
        } else {
            ghp_prev.clear();
        }

        for (std::size_t s = 0; s < B; ++s) {
            const T* ghrow = gh.data() + s * static_cast<std::size_t>(outw);
            const T* zrow = zin.data() + s * static_cast<std::size_t>(in);
            T* gz = j > 1 ? ghp_prev.data() + s * static_cast<std::size_t>(in) : nullptr;
            for (int row = 0; row < outw; ++row) {
                const T gv = ghrow[row];
                db[row] += gv;
                T* dwrow = dW + static_cast<std::size_t>(row) * in;
                const T* wrow = W + static_cast<std::size_t>(row) * in;
                if (j > 1) {
                    for (int c = 0; c < in; ++c) {
                        dwrow[c] += gv * zrow[c];
                        gz[c] += wrow[c] * gv;
                    }
                } else {
                    for (int c = 0; c < in; ++c) dwrow[c] += gv * zrow[c];
                }
            }
        }

        if (j > 1) {
            // Chain rule through A_{j-1} evaluated at h'_{j-1}, plus the skip
            // branch of the mix at layer j.
            const ActivationKind act_prev = cfg.activation_at(j - 1);
            const std::vector<T>& hp_prev = trace.hp[static_cast<std::size_t>(j) - 2];
            for (std::size_t i = 0; i < ghp_prev.size(); ++i)
                ghp_prev[i] = static_cast<T>(
                    static_cast<double>(ghp_prev[i]) *
                    activation_derivative(act_prev, cfg.omega0, static_cast<double>(hp_prev[i])));
            if (mix)
                for (std::size_t i = 0; i < ghp_prev.size(); ++i) ghp_prev[i] += ghp[i] * r;
            ghp = ghp_prev;
        }
    }
    return grads;
}

// Monte-Carlo distributional profile at initialization: pooled std of h'_j per
// layer over random inputs uniform in [-1,1]^input_dim. Sine layers report the
// sine-argument scale omega0 * std(h'_j) — the quantity the initialization
// holds near 1 — while the Identity embedding layer reports the raw std.
struct StabilityProfile {
    std::vector<double> layer_std; // index j-1 for layers 1..D
};

template <typename T = float>
StabilityProfile stability_profile(const NetworkConfig& cfg, const ParameterSet<T>& params,
                                   std::size_t n_samples, std::uint64_t seed) {
    cfg.validate();
    const int D = cfg.depth;
    const std::size_t chunk = 256;
    const std::size_t n_chunks = (n_samples + chunk - 1) / chunk;

    // Per-chunk partial sums, reduced in chunk order for determinism.
    std::vector<std::vector<double>> sum(n_chunks), sum2(n_chunks);
    std::vector<std::vector<std::size_t>> count(n_chunks);

    parallel_for(n_chunks, [&](std::size_t c0, std::size_t c1) {
        for (std::size_t c = c0; c < c1; ++c) {
            const std::size_t b = std::min(chunk, n_samples - c * chunk);
            Rng rng(subseed(seed, "stability", c));
            std::vector<T> enc(b * static_cast<std::size_t>(cfg.input_dim));
            for (auto& v : enc) v = static_cast<T>(rng.uniform(-1.0, 1.0));
            auto res = forward(cfg, params, enc.data(), b, true, false);
            sum[c].assign(static_cast<std::size_t>(D), 0.0);
            sum2[c].assign(static_cast<std::size_t>(D), 0.0);
            count[c].assign(static_cast<std::size_t>(D), 0);
            for (int j = 1; j <= D; ++j) {
                const auto& hp = res.trace.hp[static_cast<std::size_t>(j) - 1];
                double s1 = 0.0, s2 = 0.0;
                for (const T v : hp) {
                    const double x = static_cast<double>(v);
                    s1 += x;
                    s2 += x * x;
                }
                sum[c][static_cast<std::size_t>(j) - 1] = s1;
                sum2[c][static_cast<std::size_t>(j) - 1] = s2;
                count[c][static_cast<std::size_t>(j) - 1] = hp.size();
            }
        }
    });

    StabilityProfile profile;
    for (int j = 1; j <= D; ++j) {
        double s1 = 0.0, s2 = 0.0;
        std::size_t n = 0;
        for (std::size_t c = 0; c < n_chunks; ++c) {
            s1 += sum[c][static_cast<std::size_t>(j) - 1];
            s2 += sum2[c][static_cast<std::size_t>(j) - 1];
            n += count[c][static_cast<std::size_t>(j) - 1];
        }
        const double mean = s1 / static_cast<double>(n);
        const double var = std::max(0.0, s2 / static_cast<double>(n) - mean * mean);
        const double scale = (cfg.activation_at(j) == ActivationKind::Identity) ? 1.0 : cfg.omega0;
        profile.layer_std.push_back(scale * std::sqrt(var));
    }
    return profile;
}

} // namespace resiren
