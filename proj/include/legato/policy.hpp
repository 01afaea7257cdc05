#pragma once

#include <cmath>
#include <numbers>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "legato/flowmath.hpp"
#include "legato/tasks.hpp"

namespace legato {

constexpr int kTimeEmbedDim = 6;

inline void time_embedding(double t, double* out) {
    out[0] = t;
    out[1] = 1.0 - t;
    out[2] = std::sin(std::numbers::pi * t);
    out[3] = std::cos(std::numbers::pi * t);
    out[4] = std::sin(2.0 * std::numbers::pi * t);
    out[5] = std::cos(2.0 * std::numbers::pi * t);
}

// Network shape. Checkpoint loading rejects any mismatch of these fields.
struct NetArch {
    int h = 0;
    int action_dim = 0;
    int obs_dim = 0;
    std::vector<int> hidden{128, 128};
    int temb_dim = kTimeEmbedDim;
    bool cond_row = true;

    int input_dim() const { return h * (action_dim + 1) + obs_dim + temb_dim; }
    int output_dim() const { return h * action_dim; }

    bool operator==(const NetArch& o) const {
        return h == o.h && action_dim == o.action_dim && obs_dim == o.obs_dim &&
               hidden == o.hidden && temb_dim == o.temb_dim && cond_row == o.cond_row;
    }
};

// Per-dimension affine normalization fitted on the training set. The policy
// operates in normalized units; the executor maps back to env units.
struct Normalizer {
    std::vector<double> obs_mean, obs_std, act_mean, act_std;

    static Normalizer fit(const Dataset& ds) {
        Normalizer n;
        const auto od = static_cast<std::size_t>(ds.obs_dim);
        const auto ad = static_cast<std::size_t>(ds.action_dim);
        n.obs_mean.assign(od, 0.0);
        n.obs_std.assign(od, 0.0);
        n.act_mean.assign(ad, 0.0);
        n.act_std.assign(ad, 0.0);

        double n_obs = 0.0, n_act = 0.0;
        for (const auto& demo : ds.demos) {
            for (std::size_t j = 0; j < od; ++j) n.obs_mean[j] += demo.obs[j];
            n_obs += 1.0;
            for (std::size_t i = 0; i < demo.actions.rows(); ++i)
                for (std::size_t j = 0; j < ad; ++j) n.act_mean[j] += demo.actions(i, j);
            n_act += static_cast<double>(demo.actions.rows());
        }
        for (std::size_t j = 0; j < od; ++j) n.obs_mean[j] /= n_obs;
        for (std::size_t j = 0; j < ad; ++j) n.act_mean[j] /= n_act;

        for (const auto& demo : ds.demos) {
            for (std::size_t j = 0; j < od; ++j) {
                const double dv = demo.obs[j] - n.obs_mean[j];
                n.obs_std[j] += dv * dv;
            }
            for (std::size_t i = 0; i < demo.actions.rows(); ++i)
                for (std::size_t j = 0; j < ad; ++j) {
                    const double dv = demo.actions(i, j) - n.act_mean[j];
                    n.act_std[j] += dv * dv;
                }
        }
        for (std::size_t j = 0; j < od; ++j)
            n.obs_std[j] = std::max(std::sqrt(n.obs_std[j] / n_obs), 1e-8);
        for (std::size_t j = 0; j < ad; ++j)
            n.act_std[j] = std::max(std::sqrt(n.act_std[j] / n_act), 1e-8);
        return n;
    }

    std::vector<double> normalize_obs(std::span<const double> obs) const {
        std::vector<double> out(obs.size());
        for (std::size_t j = 0; j < obs.size(); ++j)
            out[j] = (obs[j] - obs_mean[j]) / obs_std[j];
        return out;
    }

    Chunk normalize_actions(const Chunk& a) const {
        Chunk out(a.rows(), a.cols());
        for (std::size_t i = 0; i < a.rows(); ++i)
            for (std::size_t j = 0; j < a.cols(); ++j)
                out(i, j) = (a(i, j) - act_mean[j]) / act_std[j];
        return out;
    }

    Chunk denormalize_actions(const Chunk& a) const {
        Chunk out(a.rows(), a.cols());
        for (std::size_t i = 0; i < a.rows(); ++i)
            for (std::size_t j = 0; j < a.cols(); ++j)
                out(i, j) = a(i, j) * act_std[j] + act_mean[j];
        return out;
    }
};

// Copies the chunk and appends one column holding the per-row guidance
// weight (or zeros when the condition row is disabled). The input layout to
// the network is this matrix flattened row-major, then the observation,
// then the time embedding.
inline Chunk attach_condition_row(const Chunk& y, const GuidanceSchedule& g, bool enabled) {
    detail::require_horizon(y, g, "attach_condition_row");
    Chunk out(y.rows(), y.cols() + 1);
    for (std::size_t i = 0; i < y.rows(); ++i) {
        for (std::size_t j = 0; j < y.cols(); ++j) out(i, j) = y(i, j);
        out(i, y.cols()) = enabled ? g.omega[i] : 0.0;
    }
    return out;
}

class PolicyNet {
public:
    struct Layer {
        std::vector<double> w;  // out x in, row-major
        std::vector<double> b;  // out
        int in = 0, out = 0;
    };

    PolicyNet() = default;
    explicit PolicyNet(NetArch arch) : arch_(std::move(arch)) {
        int in = arch_.input_dim();
        for (int width : arch_.hidden) {
            layers_.push_back(Layer{std::vector<double>(static_cast<std::size_t>(width) * in, 0.0),
                                    std::vector<double>(static_cast<std::size_t>(width), 0.0), in,
                                    width});
            in = width;
        }
        const int out = arch_.output_dim();
        layers_.push_back(Layer{std::vector<double>(static_cast<std::size_t>(out) * in, 0.0),
                                std::vector<double>(static_cast<std::size_t>(out), 0.0), in, out});
    }

    const NetArch& arch() const { return arch_; }
    std::vector<Layer>& layers() { return layers_; }
    const std::vector<Layer>& layers() const { return layers_; }

    Normalizer& normalizer() { return norm_; }
    const Normalizer& normalizer() const { return norm_; }

    // Xavier-uniform weights, zero biases.
    void init(Rng& rng) {
        for (auto& layer : layers_) {
            const double bound = std::sqrt(6.0 / (layer.in + layer.out));
            for (double& w : layer.w) w = draw_uniform(rng, -bound, bound);
            std::fill(layer.b.begin(), layer.b.end(), 0.0);
        }
    }

    std::size_t param_count() const {
        std::size_t n = 0;
        for (const auto& layer : layers_) n += layer.w.size() + layer.b.size();
        return n;
    }

    std::vector<double> flat_params() const {
        std::vector<double> out;
        out.reserve(param_count());
        for (const auto& layer : layers_) {
            out.insert(out.end(), layer.w.begin(), layer.w.end());
            out.insert(out.end(), layer.b.begin(), layer.b.end());
        }
        return out;
    }

    void set_flat_params(std::span<const double> params) {
        if (params.size() != param_count())
            throw std::invalid_argument("PolicyNet: flat parameter size mismatch");
        std::size_t off = 0;
        for (auto& layer : layers_) {
            std::copy_n(params.begin() + static_cast<std::ptrdiff_t>(off), layer.w.size(),
                        layer.w.begin());
            off += layer.w.size();
            std::copy_n(params.begin() + static_cast<std::ptrdiff_t>(off), layer.b.size(),
                        layer.b.begin());
            off += layer.b.size();
        }
    }

    double& param_at(std::size_t flat_index) {
        std::size_t off = flat_index;
        for (auto& layer : layers_) {
            if (off < layer.w.size()) return layer.w[off];
            off -= layer.w.size();
            if (off < layer.b.size()) return layer.b[off];
            off -= layer.b.size();
        }
        throw std::out_of_range("PolicyNet: flat parameter index out of range");
    }

    void assemble_input(const Chunk& y, std::span<const double> obs, double t,
                        const GuidanceSchedule& g, std::vector<double>& input) const {
        if (static_cast<int>(y.rows()) != arch_.h || static_cast<int>(y.cols()) != arch_.action_dim)
            throw std::invalid_argument("PolicyNet: chunk shape does not match architecture");
        if (static_cast<int>(obs.size()) != arch_.obs_dim)
            throw std::invalid_argument("PolicyNet: observation size does not match architecture");
        detail::require_horizon(y, g, "PolicyNet::assemble_input");

        input.resize(static_cast<std::size_t>(arch_.input_dim()));
        std::size_t k = 0;
        for (std::size_t i = 0; i < y.rows(); ++i) {
            for (std::size_t j = 0; j < y.cols(); ++j) input[k++] = y(i, j);
            input[k++] = arch_.cond_row ? g.omega[i] : 0.0;
        }
        for (double v : obs) input[k++] = v;
        double temb[kTimeEmbedDim];
        time_embedding(t, temb);
        for (int j = 0; j < arch_.temb_dim; ++j) input[k++] = temb[j];
    }

    // Scratch buffers reused across forward/backward calls.
    struct Workspace {
        std::vector<double> input;
        std::vector<std::vector<double>> acts;    // post-activation per layer
        std::vector<std::vector<double>> deltas;  // dL/dz per layer
        std::vector<double> grad;                 // flat, same layout as flat_params()
    };

    void forward_flat(const std::vector<double>& input, Workspace& ws) const {
        ws.acts.resize(layers_.size());
        const std::vector<double>* x = &input;
        for (std::size_t l = 0; l < layers_.size(); ++l) {
            const Layer& layer = layers_[l];
            auto& act = ws.acts[l];
            act.assign(static_cast<std::size_t>(layer.out), 0.0);
            const bool last = l + 1 == layers_.size();
            for (int o = 0; o < layer.out; ++o) {
                const double* wrow = layer.w.data() + static_cast<std::size_t>(o) * layer.in;
                double z = layer.b[static_cast<std::size_t>(o)];
                for (int i = 0; i < layer.in; ++i) z += wrow[i] * (*x)[static_cast<std::size_t>(i)];
                act[static_cast<std::size_t>(o)] = last ? z : std::tanh(z);
            }
            x = &act;
        }
    }

    // Velocity field evaluation. y and obs are in normalized units.
    Chunk forward(const Chunk& y, std::span<const double> obs, double t,
                  const GuidanceSchedule& g) const {
        Workspace ws;
        assemble_input(y, obs, t, g, ws.input);
        forward_flat(ws.input, ws);
        const auto& out = ws.acts.back();
        return Chunk::from_rows(y.rows(), y.cols(),
                                std::vector<double>(out.begin(), out.end()));
    }

    // Accumulates dLoss/dparams into ws.grad for one sample, given
    // dLoss/doutput in ws.deltas.back(). forward_flat must have run on
    // ws.input first.
    void backward_flat(Workspace& ws) const {
        ws.deltas.resize(layers_.size());
        for (std::size_t l = layers_.size(); l-- > 0;) {
            const Layer& layer = layers_[l];
            const auto& delta = ws.deltas[l];
            if (l > 0) {
                auto& prev = ws.deltas[l - 1];
                prev.assign(static_cast<std::size_t>(layer.in), 0.0);
                for (int o = 0; o < layer.out; ++o) {
                    const double dz = delta[static_cast<std::size_t>(o)];
                    const double* wrow = layer.w.data() + static_cast<std::size_t>(o) * layer.in;
                    for (int i = 0; i < layer.in; ++i) prev[static_cast<std::size_t>(i)] += wrow[i] * dz;
                }
                const auto& act = ws.acts[l - 1];
                for (int i = 0; i < layer.in; ++i) {
                    const double a = act[static_cast<std::size_t>(i)];
                    prev[static_cast<std::size_t>(i)] *= 1.0 - a * a;
                }
            }
        }

        std::size_t off = 0;
        for (std::size_t l = 0; l < layers_.size(); ++l) {
            const Layer& layer = layers_[l];
            const auto& delta = ws.deltas[l];
            const std::vector<double>& x = l == 0 ? ws.input : ws.acts[l - 1];
            double* gw = ws.grad.data() + off;
            for (int o = 0; o < layer.out; ++o) {
                const double dz = delta[static_cast<std::size_t>(o)];
                double* grow = gw + static_cast<std::size_t>(o) * layer.in;
                for (int i = 0; i < layer.in; ++i) grow[i] += dz * x[static_cast<std::size_t>(i)];
            }
            off += layer.w.size();
            double* gb = ws.grad.data() + off;
            for (int o = 0; o < layer.out; ++o) gb[o] += delta[static_cast<std::size_t>(o)];
            off += layer.b.size();
        }
    }

private:
    NetArch arch_;
    std::vector<Layer> layers_;
    Normalizer norm_;
};

enum class TrainFamily { vanilla, legato, rtc_train };

inline std::string to_string(TrainFamily f) {
    switch (f) {
        case TrainFamily::vanilla: return "vanilla";
        case TrainFamily::legato: return "legato";
        case TrainFamily::rtc_train: return "rtc_train";
    }
    throw std::logic_error("to_string(TrainFamily): bad value");
}

inline TrainFamily train_family_from_string(const std::string& s) {
    if (s == "vanilla") return TrainFamily::vanilla;
    if (s == "legato") return TrainFamily::legato;
    if (s == "rtc_train") return TrainFamily::rtc_train;
    throw std::invalid_argument("unknown training family: " + s);
}

struct TrainConfig {
    TrainFamily family = TrainFamily::legato;
    int steps = 2000;
    int batch = 128;
    double lr = 1e-3;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    std::uint64_t seed = 0;
    IntRange d_range{0, 10};
    IntRange r_range{0, 50};
    int n_steps = 5;
    bool cond_row = true;
};

// Draws the guidance schedule used for one training sample. The vanilla
// family always trains at zero weights (plain flow matching); the
// hard-prefix family keeps the prefix but no ramp.
inline GuidanceSchedule sample_train_schedule(Rng& rng, const TrainConfig& cfg, int h) {
    switch (cfg.family) {
        case TrainFamily::vanilla:
            return zero_schedule(h, cfg.n_steps);
        case TrainFamily::legato:
            return sample_schedule(rng, cfg.d_range, cfg.r_range, h, cfg.n_steps);
        case TrainFamily::rtc_train:
            return sample_schedule(rng, cfg.d_range, IntRange{0, 0}, h, cfg.n_steps);
    }
    throw std::logic_error("sample_train_schedule: bad family");
}

// Regression target for one training sample. The reference used to build
// the interpolation state is always the data chunk itself. The hard-prefix
// family keeps the plain flow-matching velocity of its mixed path,
// (1 - w) * (a - eps); the other families use the closed-form reshaped
// target.
inline Chunk train_target(const Chunk& a, const Chunk& eps, const GuidanceSchedule& g,
                          double t, TrainFamily family) {
    if (family == TrainFamily::rtc_train) {
        Chunk out(a.rows(), a.cols());
        for (std::size_t i = 0; i < a.rows(); ++i) {
            const double c = 1.0 - g.omega[i];
            for (std::size_t j = 0; j < a.cols(); ++j)
                out(i, j) = c * (a(i, j) - eps(i, j));
        }
        return out;
    }
    return target_velocity(a, eps, g, t);
}

struct AdamState {
    std::vector<double> m, v;
    int step = 0;

    explicit AdamState(std::size_t n) : m(n, 0.0), v(n, 0.0) {}
};

inline void adam_update(PolicyNet& net, std::span<const double> grad, AdamState& opt,
                        const TrainConfig& cfg) {
    opt.step += 1;
    const double bc1 = 1.0 - std::pow(cfg.adam_beta1, opt.step);
    const double bc2 = 1.0 - std::pow(cfg.adam_beta2, opt.step);
    std::size_t k = 0;
    for (auto& layer : net.layers()) {
        auto update = [&](std::vector<double>& params) {
            for (double& p : params) {
                const double g = grad[k];
                opt.m[k] = cfg.adam_beta1 * opt.m[k] + (1.0 - cfg.adam_beta1) * g;
                opt.v[k] = cfg.adam_beta2 * opt.v[k] + (1.0 - cfg.adam_beta2) * g * g;
                const double mhat = opt.m[k] / bc1;
                const double vhat = opt.v[k] / bc2;
                p -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.adam_eps);
                ++k;
            }
        };
        update(layer.w);
        update(layer.b);
    }
}

// One optimizer step over a batch of (observation, chunk) samples, already
// normalized. Per sample: t ~ U(0,1), eps ~ N(0,I), a fresh schedule, the
// interpolation state, and the family's regression target. Returns the mean
// squared error over the batch; throws if it is not finite.
inline double training_step(PolicyNet& net,
                            const std::vector<const Demonstration*>& batch, Rng& rng,
                            const TrainConfig& cfg, AdamState& opt,
                            PolicyNet::Workspace& ws) {
    if (batch.empty()) throw std::invalid_argument("training_step: empty batch");
    const auto& arch = net.arch();
    const int k_out = arch.output_dim();
    ws.grad.assign(net.param_count(), 0.0);
    ws.deltas.resize(net.layers().size());

    const double inv_batch = 1.0 / static_cast<double>(batch.size());
    double loss = 0.0;
    for (const Demonstration* demo : batch) {
        const double t = draw_uniform(rng);
        const Chunk eps = draw_normal_chunk(rng, demo->actions.rows(), demo->actions.cols());
        const GuidanceSchedule sched = sample_train_schedule(rng, cfg, arch.h);
        const Chunk y = legato_path(eps, demo->actions, sched, t);
        const Chunk target = train_target(demo->actions, eps, sched, t, cfg.family);

        net.assemble_input(y, demo->obs, t, sched, ws.input);
        net.forward_flat(ws.input, ws);
        const auto& out = ws.acts.back();

        auto& dout = ws.deltas.back();
        dout.assign(static_cast<std::size_t>(k_out), 0.0);
        double sample_loss = 0.0;
        for (int j = 0; j < k_out; ++j) {
            const double diff = out[static_cast<std::size_t>(j)] -
                                target.data()[static_cast<std::size_t>(j)];
            sample_loss += diff * diff;
            dout[static_cast<std::size_t>(j)] = 2.0 * diff / k_out * inv_batch;
        }
        loss += sample_loss / k_out;
        net.backward_flat(ws);
    }
    loss *= inv_batch;
    if (!std::isfinite(loss)) throw std::runtime_error("training_step: loss diverged");

    adam_update(net, ws.grad, opt, cfg);
    return loss;
}

struct TrainResult {
    std::vector<double> loss_curve;
};

// Fits the normalizer, initializes the network, and runs cfg.steps batch
// updates with uniformly resampled demo indices. Fully deterministic given
// (dataset, cfg).
inline TrainResult train(PolicyNet& net, const Dataset& ds, const TrainConfig& cfg) {
    if (ds.demos.empty()) throw std::invalid_argument("train: empty dataset");
    net.normalizer() = Normalizer::fit(ds);

    std::vector<Demonstration> normalized(ds.demos.size());
    for (std::size_t i = 0; i < ds.demos.size(); ++i) {
        normalized[i].obs = net.normalizer().normalize_obs(ds.demos[i].obs);
        normalized[i].actions = net.normalizer().normalize_actions(ds.demos[i].actions);
        normalized[i].mode_label = ds.demos[i].mode_label;
    }

    Rng rng = make_rng(cfg.seed, 0x7261696eull);
    net.init(rng);

    AdamState opt(net.param_count());
    PolicyNet::Workspace ws;
    TrainResult result;
    result.loss_curve.reserve(static_cast<std::size_t>(cfg.steps));

    std::vector<const Demonstration*> batch(static_cast<std::size_t>(cfg.batch));
    for (int step = 0; step < cfg.steps; ++step) {
        for (auto& slot : batch)
            slot = &normalized[static_cast<std::size_t>(
                draw_int(rng, 0, static_cast<int>(normalized.size()) - 1))];
        result.loss_curve.push_back(training_step(net, batch, rng, cfg, opt, ws));
    }
    return result;
}

// Compares analytic parameter gradients against central finite differences
// (step h_fd) on n_params randomly chosen parameters for one sample drawn
// from the given demo. Returns the largest relative error.
inline double grad_check(PolicyNet& net, const Demonstration& demo, Rng& rng,
                         const TrainConfig& cfg, int n_params = 50, double h_fd = 1e-5) {
    const auto& arch = net.arch();
    const double t = draw_uniform(rng);
    const Chunk eps = draw_normal_chunk(rng, demo.actions.rows(), demo.actions.cols());
    const GuidanceSchedule sched = sample_train_schedule(rng, cfg, arch.h);
    const Chunk y = legato_path(eps, demo.actions, sched, t);
    const Chunk target = train_target(demo.actions, eps, sched, t, cfg.family);
    const int k_out = arch.output_dim();

    auto loss_at = [&]() {
        PolicyNet::Workspace ws;
        net.assemble_input(y, demo.obs, t, sched, ws.input);
        net.forward_flat(ws.input, ws);
        double loss = 0.0;
        for (int j = 0; j < k_out; ++j) {
            const double diff = ws.acts.back()[static_cast<std::size_t>(j)] -
                                target.data()[static_cast<std::size_t>(j)];
            loss += diff * diff;
        }
        return loss / k_out;
    };

    PolicyNet::Workspace ws;
    ws.grad.assign(net.param_count(), 0.0);
    ws.deltas.resize(net.layers().size());
    net.assemble_input(y, demo.obs, t, sched, ws.input);
    net.forward_flat(ws.input, ws);
    auto& dout = ws.deltas.back();
    dout.assign(static_cast<std::size_t>(k_out), 0.0);
    for (int j = 0; j < k_out; ++j)
        dout[static_cast<std::size_t>(j)] = 2.0 *
                                            (ws.acts.back()[static_cast<std::size_t>(j)] -
                                             target.data()[static_cast<std::size_t>(j)]) /
                                            k_out;
    net.backward_flat(ws);

    double max_rel = 0.0;
    const std::size_t n_total = net.param_count();
    for (int trial = 0; trial < n_params; ++trial) {
        const auto idx = static_cast<std::size_t>(
            draw_int(rng, 0, static_cast<int>(n_total) - 1));
        double& p = net.param_at(idx);
        const double saved = p;
        p = saved + h_fd;
        const double lp = loss_at();
        p = saved - h_fd;
        const double lm = loss_at();
        p = saved;

        const double fd = (lp - lm) / (2.0 * h_fd);
        const double an = ws.grad[idx];
        // The difference quotient carries ~1e-11 of roundoff at this step
        // size, so gradients below ~1e-7 cannot support a relative
        // comparison; the floor makes the check absolute at that scale
        // (|fd - an| < tol * floor) instead of measuring noise.
        const double denom = std::max({std::abs(fd), std::abs(an), 1e-4});
        max_rel = std::max(max_rel, std::abs(fd - an) / denom);
    }
    return max_rel;
}

// ---------------------------------------------------------------------------
// Checkpoint: JSON-of-arrays with format version, architecture descriptor,
// flat parameters, normalizer, training config, and seed.
// ---------------------------------------------------------------------------

constexpr int kCheckpointVersion = 1;

struct Checkpoint {
    PolicyNet net;
    TrainConfig config;
};

inline nlohmann::json arch_to_json(const NetArch& a) {
    return {{"h", a.h},          {"action_dim", a.action_dim}, {"obs_dim", a.obs_dim},
            {"hidden", a.hidden}, {"temb_dim", a.temb_dim},     {"cond_row", a.cond_row}};
}

inline NetArch arch_from_json(const nlohmann::json& j) {
    NetArch a;
    a.h = j.at("h").get<int>();
    a.action_dim = j.at("action_dim").get<int>();
    a.obs_dim = j.at("obs_dim").get<int>();
    a.hidden = j.at("hidden").get<std::vector<int>>();
    a.temb_dim = j.at("temb_dim").get<int>();
    a.cond_row = j.at("cond_row").get<bool>();
    return a;
}

inline void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
    const auto& net = ckpt.net;
    const auto& cfg = ckpt.config;
    nlohmann::json j = {
        {"format_version", kCheckpointVersion},
        {"family", to_string(cfg.family)},
        {"arch", arch_to_json(net.arch())},
        {"params", net.flat_params()},
        {"normalizer",
         {{"obs_mean", net.normalizer().obs_mean},
          {"obs_std", net.normalizer().obs_std},
          {"act_mean", net.normalizer().act_mean},
          {"act_std", net.normalizer().act_std}}},
        {"train_config",
         {{"steps", cfg.steps},
          {"batch", cfg.batch},
          {"lr", cfg.lr},
          {"adam_beta1", cfg.adam_beta1},
          {"adam_beta2", cfg.adam_beta2},
          {"adam_eps", cfg.adam_eps},
          {"d_lo", cfg.d_range.lo},
          {"d_hi", cfg.d_range.hi},
          {"r_lo", cfg.r_range.lo},
          {"r_hi", cfg.r_range.hi},
          {"n_steps", cfg.n_steps},
          {"cond_row", cfg.cond_row}}},
        {"seed", cfg.seed}};

    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("save_checkpoint: cannot open " + path.string());
    os << j.dump();
    if (!os) throw std::runtime_error("save_checkpoint: write failed for " + path.string());
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("load_checkpoint: cannot open " + path.string());
    nlohmann::json j;
    is >> j;

    if (j.at("format_version").get<int>() != kCheckpointVersion)
        throw std::runtime_error("load_checkpoint: unsupported format version");

    Checkpoint ckpt;
    ckpt.net = PolicyNet(arch_from_json(j.at("arch")));
    const auto params = j.at("params").get<std::vector<double>>();
    if (params.size() != ckpt.net.param_count())
        throw std::runtime_error("load_checkpoint: parameter count does not match architecture");
    ckpt.net.set_flat_params(params);

    const auto& jn = j.at("normalizer");
    ckpt.net.normalizer().obs_mean = jn.at("obs_mean").get<std::vector<double>>();
    ckpt.net.normalizer().obs_std = jn.at("obs_std").get<std::vector<double>>();
    ckpt.net.normalizer().act_mean = jn.at("act_mean").get<std::vector<double>>();
    ckpt.net.normalizer().act_std = jn.at("act_std").get<std::vector<double>>();

    const auto& jc = j.at("train_config");
    ckpt.config.family = train_family_from_string(j.at("family").get<std::string>());
    ckpt.config.steps = jc.at("steps").get<int>();
    ckpt.config.batch = jc.at("batch").get<int>();
    ckpt.config.lr = jc.at("lr").get<double>();
    ckpt.config.adam_beta1 = jc.at("adam_beta1").get<double>();
    ckpt.config.adam_beta2 = jc.at("adam_beta2").get<double>();
    ckpt.config.adam_eps = jc.at("adam_eps").get<double>();
    ckpt.config.d_range = {jc.at("d_lo").get<int>(), jc.at("d_hi").get<int>()};
    ckpt.config.r_range = {jc.at("r_lo").get<int>(), jc.at("r_hi").get<int>()};
    ckpt.config.n_steps = jc.at("n_steps").get<int>();
    ckpt.config.cond_row = jc.at("cond_row").get<bool>();
    ckpt.config.seed = j.at("seed").get<std::uint64_t>();
    return ckpt;
}

// Guard used by consumers that know what shape the network must have.
inline void require_arch(const Checkpoint& ckpt, const NetArch& expected) {
    if (!(ckpt.net.arch() == expected))
        throw std::runtime_error("checkpoint architecture does not match the requested shape");
}

}  // namespace legato
