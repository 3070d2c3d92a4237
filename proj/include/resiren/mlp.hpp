#pragma once

// Small dense networks for probing: a single affine map, the 3x64 tanh MLP,
// and the 4-layer residual ReLU net used by the FS-CH baseline. Kept separate
// from the sine backbone: no omega0, no h' chain, plain Glorot init.

#include <cmath>
#include <cstdint>
#include <vector>

#include "resiren/io.hpp"
#include "resiren/rng.hpp"

namespace resiren {

enum class MlpActivation { Tanh, Relu };

struct MlpConfig {
    int in_dim = 0;
    int out_dim = 0;
    std::vector<int> hidden; // empty = single affine map
    MlpActivation activation = MlpActivation::Tanh;
    bool residual = false; // skip h_l = act(z_l) + h_{l-1} where widths match

    void validate() const {
        if (in_dim < 1 || out_dim < 1) throw Error("MlpConfig: dims must be >= 1");
        for (int h : hidden)
            if (h < 1) throw Error("MlpConfig: hidden widths must be >= 1");
    }

    int n_affine() const { return static_cast<int>(hidden.size()) + 1; }

    int affine_in(int l) const { return l == 0 ? in_dim : hidden[static_cast<std::size_t>(l) - 1]; }
    int affine_out(int l) const {
        return l == n_affine() - 1 ? out_dim : hidden[static_cast<std::size_t>(l)];
    }

    // Skip connections only between equal-width hidden layers.
    bool skips(int l) const {
        return residual && l >= 1 && l < n_affine() - 1 && affine_in(l) == affine_out(l);
    }

    std::size_t param_count() const {
        std::size_t n = 0;
        for (int l = 0; l < n_affine(); ++l)
            n += static_cast<std::size_t>(affine_out(l)) * static_cast<std::size_t>(affine_in(l)) +
                 static_cast<std::size_t>(affine_out(l));
        return n;
    }
};

inline double mlp_activation(MlpActivation a, double z) {
    return a == MlpActivation::Tanh ? std::tanh(z) : (z > 0.0 ? z : 0.0);
}

inline double mlp_activation_derivative(MlpActivation a, double z) {
    if (a == MlpActivation::Tanh) {
        const double t = std::tanh(z);
        return 1.0 - t * t;
    }
    return z > 0.0 ? 1.0 : 0.0;
}

struct MlpTrace {
    std::size_t batch = 0;
    std::vector<double> input;            // [B][in_dim]
    std::vector<std::vector<double>> z;   // pre-activations per affine map
    std::vector<std::vector<double>> h;   // post-activations per hidden layer
};

struct Mlp {
    MlpConfig config;
    std::vector<double> params;
    std::vector<std::size_t> w_off, b_off;

    static Mlp init(const MlpConfig& cfg, std::uint64_t seed) {
        cfg.validate();
        Mlp net;
        net.config = cfg;
        net.params.assign(cfg.param_count(), 0.0);
        std::size_t off = 0;
        for (int l = 0; l < cfg.n_affine(); ++l) {
            net.w_off.push_back(off);
            off += static_cast<std::size_t>(cfg.affine_out(l)) * static_cast<std::size_t>(cfg.affine_in(l));
            net.b_off.push_back(off);
            off += static_cast<std::size_t>(cfg.affine_out(l));
        }
        Rng rng(seed);
        for (int l = 0; l < cfg.n_affine(); ++l) {
            const double bound = std::sqrt(6.0 / (cfg.affine_in(l) + cfg.affine_out(l))); // Glorot
            double* w = net.params.data() + net.w_off[static_cast<std::size_t>(l)];
            const std::size_t n = static_cast<std::size_t>(cfg.affine_out(l)) *
                                  static_cast<std::size_t>(cfg.affine_in(l));
            for (std::size_t i = 0; i < n; ++i) w[i] = rng.uniform(-bound, bound);
            // biases stay zero
        }
        return net;
    }

    const double* weight(int l) const { return params.data() + w_off[static_cast<std::size_t>(l)]; }
    const double* bias(int l) const { return params.data() + b_off[static_cast<std::size_t>(l)]; }

    // Returns [B][out_dim]; fills trace when given for a later backward pass.
    std::vector<double> forward(const double* input, std::size_t batch, MlpTrace* trace = nullptr) const {
        const int L = config.n_affine();
        std::vector<double> cur(input, input + batch * static_cast<std::size_t>(config.in_dim));
        if (trace) {
            trace->batch = batch;
            trace->input = cur;
            trace->z.assign(static_cast<std::size_t>(L), {});
            trace->h.assign(static_cast<std::size_t>(L) - 1, {});
        }
        for (int l = 0; l < L; ++l) {
            const int din = config.affine_in(l), dout = config.affine_out(l);
            std::vector<double> z(batch * static_cast<std::size_t>(dout));
            const double* w = weight(l);
            const double* b = bias(l);
            for (std::size_t s = 0; s < batch; ++s) {
                const double* x = cur.data() + s * static_cast<std::size_t>(din);
                double* zr = z.data() + s * static_cast<std::size_t>(dout);
                for (int o = 0; o < dout; ++o) {
                    double acc = b[o];
                    const double* wr = w + static_cast<std::size_t>(o) * static_cast<std::size_t>(din);
                    for (int i = 0; i < din; ++i) acc += wr[i] * x[i];
                    zr[o] = acc;
                }
            }
            if (trace) trace->z[static_cast<std::size_t>(l)] = z;
            if (l == L - 1) {
                cur = std::move(z); // head is affine
            } else {
                std::vector<double> h(z.size());
                const bool skip = config.skips(l);
                for (std::size_t i = 0; i < z.size(); ++i) {
                    h[i] = mlp_activation(config.activation, z[i]);
                    if (skip) h[i] += cur[i];
                }
                if (trace) trace->h[static_cast<std::size_t>(l)] = h;
                cur = std::move(h);
            }
        }
        return cur;
    }

    // Gradient of a scalar loss wrt params given dLoss/doutput; same flat layout.
    std::vector<double> backward(const MlpTrace& trace, const std::vector<double>& grad_out) const {
        const int L = config.n_affine();
        const std::size_t B = trace.batch;
        std::vector<double> grads(params.size(), 0.0);
        std::vector<double> gh = grad_out; // dLoss/d(post-activation of layer above)
        for (int l = L - 1; l >= 0; --l) {
            const int din = config.affine_in(l), dout = config.affine_out(l);
            const std::vector<double>& below =
                l == 0 ? trace.input : trace.h[static_cast<std::size_t>(l) - 1];
            // dLoss/dz for this affine map.
            std::vector<double> gz(B * static_cast<std::size_t>(dout));
            if (l == L - 1) {
                gz = gh;
            } else {
                const std::vector<double>& z = trace.z[static_cast<std::size_t>(l)];
                for (std::size_t i = 0; i < gz.size(); ++i)
                    gz[i] = gh[i] * mlp_activation_derivative(config.activation, z[i]);
            }
            double* gw = grads.data() + w_off[static_cast<std::size_t>(l)];
            double* gb = grads.data() + b_off[static_cast<std::size_t>(l)];
            std::vector<double> gx(B * static_cast<std::size_t>(din), 0.0);
            const double* w = weight(l);
            for (std::size_t s = 0; s < B; ++s) {
                const double* x = below.data() + s * static_cast<std::size_t>(din);
                const double* gzr = gz.data() + s * static_cast<std::size_t>(dout);
                double* gxr = gx.data() + s * static_cast<std::size_t>(din);
                for (int o = 0; o < dout; ++o) {
                    const double g = gzr[o];
                    gb[o] += g;
                    double* gwr = gw + static_cast<std::size_t>(o) * static_cast<std::size_t>(din);
                    const double* wr = w + static_cast<std::size_t>(o) * static_cast<std::size_t>(din);
                    for (int i = 0; i < din; ++i) {
                        gwr[i] += g * x[i];
                        gxr[i] += g * wr[i];
                    }
                }
            }
            if (l > 0 && config.skips(l)) // identity branch of the skip
                for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += gh[i];
            gh = std::move(gx);
        }
        return grads;
    }
};

} // namespace resiren
