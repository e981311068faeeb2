#ifndef SONOS_TRAINER_HPP
#define SONOS_TRAINER_HPP

// Two-layer sigmoid MLP trained by per-example SGD on squared error, with
// every forward, backward and update pass routed through crossbar kernels.
//
// Each weight layer is an (inputs + 1) x outputs array: inputs drive the rows
// and the extra row carries a constant 1 for the bias. The forward pass is a
// vmm, error propagation an mvm, and the update the rank-1 product of the
// layer's input activations and its learning-rate-scaled error.

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <functional>
#include <istream>
#include <memory>
#include <numeric>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "sonos/crossbar.hpp"
#include "sonos/dataset.hpp"
#include "sonos/device_model.hpp"
#include "sonos/errors.hpp"
#include "sonos/matrix.hpp"
#include "sonos/rng.hpp"
#include "sonos/weight_mapping.hpp"

namespace sonos {

/// Floating-point weights. With quantization on, the converters still sit at
/// every kernel edge, which models ideal (noise-free, linear) devices.
struct FloatBackend {
    bool quantization = false;
    ConverterBank converters{};
};

struct AnalogBackend {
    WeightScheme scheme = OneDeviceRef{};
    DeviceModelParams device{};
    ConverterBank converters{};
    KernelFlags flags{};
    UpdateMode update_mode = UpdateMode::kOpenLoop;
    /// Closed-loop accuracy of weight initialization, weight units.
    double init_tolerance = 2e-3;
};

using Backend = std::variant<FloatBackend, AnalogBackend>;

struct NetworkConfig {
    std::array<std::size_t, 3> layer_sizes{784, 300, 10};
    int epochs = 40;
    double learning_rate = 0.01;
    std::uint64_t seed = 1;
    /// Initial weights are uniform in [-init_range, init_range].
    double init_range = 0.1;
    Backend backend = FloatBackend{};

    void validate() const {
        for (auto n : layer_sizes) {
            if (n == 0) throw ConfigError("layer_sizes: every layer needs at least one unit");
        }
        if (epochs < 0) throw ConfigError("epochs must be non-negative");
        if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
            throw ConfigError("learning_rate must be positive");
        }
        if (!(init_range >= 0.0)) throw ConfigError("init_range must be non-negative");
        if (const auto* a = std::get_if<AnalogBackend>(&backend)) {
            a->device.validate();
            a->converters.validate();
            if (!(a->init_tolerance > 0.0)) throw ConfigError("init_tolerance must be positive");
        } else {
            std::get<FloatBackend>(backend).converters.validate();
        }
    }
};

inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

// ---------------------------------------------------------------------------
// Weight layers

class WeightLayer {
public:
    virtual ~WeightLayer() = default;
    virtual const Matrix& weights() const = 0;
    virtual std::vector<double> forward(std::span<const double> x) const = 0;
    virtual std::vector<double> backward(std::span<const double> delta) const = 0;
    /// W += a e^T for input activations a (rows) and scaled error e (cols).
    virtual std::optional<CarryStats> update(std::span<const double> activations, std::span<const double> error,
                                             Rng& rng) = 0;
};

namespace detail {
/// Update converters are assigned by role: the small-range row-update
/// converter carries the learning-rate-scaled error and the column-update
/// converter carries activations, whichever array side each lands on.
inline void encode_update(std::vector<double>& a, std::vector<double>& e, const ConverterBank& bank) {
    quantize_in_place(a, bank.col_update);
    quantize_in_place(e, bank.row_update);
}
}  // namespace detail

class FloatLayer final : public WeightLayer {
public:
    FloatLayer(Matrix w, const FloatBackend& cfg) : w_(std::move(w)), cfg_(cfg) {}

    const Matrix& weights() const override { return w_; }

    std::vector<double> forward(std::span<const double> x) const override {
        return vmm(w_, x, forward_edges(cfg_.converters, cfg_.quantization));
    }
    std::vector<double> backward(std::span<const double> delta) const override {
        return mvm(w_, delta, backward_edges(cfg_.converters, cfg_.quantization));
    }

    std::optional<CarryStats> update(std::span<const double> activations, std::span<const double> error,
                                     Rng&) override {
        require_dims(activations.size(), w_.rows(), "update activations");
        require_dims(error.size(), w_.cols(), "update error");
        std::vector<double> a(activations.begin(), activations.end());
        std::vector<double> e(error.begin(), error.end());
        if (cfg_.quantization) detail::encode_update(a, e, cfg_.converters);
        for (std::size_t i = 0; i < a.size(); ++i) {
            if (a[i] == 0.0) continue;
            auto row = w_.row(i);
            for (std::size_t j = 0; j < e.size(); ++j) row[j] += a[i] * e[j];
        }
        return std::nullopt;
    }

private:
    Matrix w_;
    FloatBackend cfg_;
};

class AnalogLayer final : public WeightLayer {
public:
    AnalogLayer(const Matrix& w_init, const AnalogBackend& cfg, Rng& rng)
        : mw_(w_init.rows(), w_init.cols(), cfg.scheme, cfg.device, cfg.converters, cfg.flags) {
        mw_.set_update_mode(cfg.update_mode);
        mw_.init(w_init, cfg.init_tolerance, rng);
    }

    const Matrix& weights() const override { return mw_.weights(); }
    const MappedWeights& mapped() const { return mw_; }
    MappedWeights& mapped() { return mw_; }

    std::vector<double> forward(std::span<const double> x) const override {
        return vmm(mw_.weights(), x, forward_edges(mw_.converters(), mw_.flags().quantization_enabled));
    }
    std::vector<double> backward(std::span<const double> delta) const override {
        return mvm(mw_.weights(), delta, backward_edges(mw_.converters(), mw_.flags().quantization_enabled));
    }

    std::optional<CarryStats> update(std::span<const double> activations, std::span<const double> error,
                                     Rng& rng) override {
        std::vector<double> a(activations.begin(), activations.end());
        std::vector<double> e(error.begin(), error.end());
        if (mw_.flags().quantization_enabled) detail::encode_update(a, e, mw_.converters());
        return mw_.apply_update_encoded(a, e, rng);
    }

private:
    MappedWeights mw_;
};

// ---------------------------------------------------------------------------
// Network

struct ForwardResult {
    std::vector<double> hidden;  // sigmoid activations, no bias entry
    std::vector<double> output;
};

struct BackwardResult {
    std::vector<double> delta_out;
    std::vector<double> delta_hidden;
};

class Network {
public:
    /// Builds a network with weights uniform in [-init_range, init_range],
    /// programmed onto devices for the analog backend.
    explicit Network(const NetworkConfig& cfg) : cfg_(cfg) {
        cfg_.validate();
        Rng init_rng(cfg_.seed * 0x100000001b3ULL + 1);
        const auto [n_in, n_hid, n_out] = cfg_.layer_sizes;
        Matrix w1(n_in + 1, n_hid);
        Matrix w2(n_hid + 1, n_out);
        for (double& w : w1.data()) w = init_rng.uniform(-cfg_.init_range, cfg_.init_range);
        for (double& w : w2.data()) w = init_rng.uniform(-cfg_.init_range, cfg_.init_range);
        layers_[0] = make_layer(w1, init_rng);
        layers_[1] = make_layer(w2, init_rng);
    }

    /// Network with explicit initial weights (bias in the last row).
    Network(const NetworkConfig& cfg, const Matrix& w1, const Matrix& w2) : cfg_(cfg) {
        cfg_.validate();
        const auto [n_in, n_hid, n_out] = cfg_.layer_sizes;
        if (w1.rows() != n_in + 1 || w1.cols() != n_hid || w2.rows() != n_hid + 1 || w2.cols() != n_out) {
            throw DimensionError("Network: weight shapes do not match layer_sizes (+1 bias row)");
        }
        Rng init_rng(cfg_.seed * 0x100000001b3ULL + 1);
        layers_[0] = make_layer(w1, init_rng);
        layers_[1] = make_layer(w2, init_rng);
    }

    const NetworkConfig& config() const noexcept { return cfg_; }
    const WeightLayer& layer(std::size_t k) const { return *layers_.at(k); }
    WeightLayer& layer(std::size_t k) { return *layers_.at(k); }

    ForwardResult forward(std::span<const double> x) const {
        require_dims(x.size(), cfg_.layer_sizes[0], "forward_pass input");
        ForwardResult r;
        r.hidden = layers_[0]->forward(with_bias(x));
        for (double& h : r.hidden) h = sigmoid(h);
        r.output = layers_[1]->forward(with_bias(r.hidden));
        for (double& y : r.output) y = sigmoid(y);
        return r;
    }

    BackwardResult backward(const ForwardResult& fwd, std::span<const double> target) const {
        require_dims(target.size(), cfg_.layer_sizes[2], "backward_pass target");
        require_dims(fwd.output.size(), cfg_.layer_sizes[2], "backward_pass output");
        require_dims(fwd.hidden.size(), cfg_.layer_sizes[1], "backward_pass hidden");
        BackwardResult r;
        r.delta_out.resize(fwd.output.size());
        for (std::size_t k = 0; k < fwd.output.size(); ++k) {
            const double y = fwd.output[k];
            r.delta_out[k] = (y - target[k]) * y * (1.0 - y);
        }
        auto back = layers_[1]->backward(r.delta_out);
        back.pop_back();  // bias row
        r.delta_hidden = std::move(back);
        for (std::size_t j = 0; j < r.delta_hidden.size(); ++j) {
            const double h = fwd.hidden[j];
            r.delta_hidden[j] *= h * (1.0 - h);
        }
        return r;
    }

    /// One SGD step on one example. Returns carry statistics from any carry
    /// pass the update triggered.
    CarryStats step(std::span<const double> x, const ForwardResult& fwd, const BackwardResult& bwd, Rng& rng) {
        const double lr = cfg_.learning_rate;
        std::vector<double> e_out(bwd.delta_out.size());
        for (std::size_t k = 0; k < e_out.size(); ++k) e_out[k] = -lr * bwd.delta_out[k];
        std::vector<double> e_hid(bwd.delta_hidden.size());
        for (std::size_t j = 0; j < e_hid.size(); ++j) e_hid[j] = -lr * bwd.delta_hidden[j];
        CarryStats stats;
        if (auto c = layers_[1]->update(with_bias(fwd.hidden), e_out, rng)) stats += *c;
        if (auto c = layers_[0]->update(with_bias(x), e_hid, rng)) stats += *c;
        return stats;
    }

    static std::vector<double> with_bias(std::span<const double> v) {
        std::vector<double> out(v.begin(), v.end());
        out.push_back(1.0);
        return out;
    }

private:
    std::unique_ptr<WeightLayer> make_layer(const Matrix& w, Rng& rng) const {
        if (const auto* a = std::get_if<AnalogBackend>(&cfg_.backend)) {
            return std::make_unique<AnalogLayer>(w, *a, rng);
        }
        return std::make_unique<FloatLayer>(w, std::get<FloatBackend>(cfg_.backend));
    }

    NetworkConfig cfg_;
    std::array<std::unique_ptr<WeightLayer>, 2> layers_;
};

inline ForwardResult forward_pass(const Network& net, std::span<const double> x) { return net.forward(x); }

inline BackwardResult backward_pass(const Network& net, const ForwardResult& fwd, std::span<const double> target) {
    return net.backward(fwd, target);
}

inline std::size_t argmax(std::span<const double> v) {
    return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

inline std::vector<double> to_double(std::span<const float> x) { return {x.begin(), x.end()}; }

/// Classification accuracy on a split. Read-only.
inline double evaluate(const Network& net, const Split& split) {
    if (split.size() == 0) return 0.0;
    require_dims(split.dims, net.config().layer_sizes[0], "evaluate features");
    std::size_t correct = 0;
    for (std::size_t k = 0; k < split.size(); ++k) {
        const auto fwd = net.forward(to_double(split.example(k)));
        if (static_cast<int>(argmax(fwd.output)) == split.labels[k]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(split.size());
}

// ---------------------------------------------------------------------------
// Training

struct EpochLog {
    int epoch = 0;
    /// Fraction of training examples classified correctly by the forward
    /// pass that preceded each example's update.
    double train_acc = 0.0;
    double test_acc = 0.0;
    std::size_t carries = 0;
    double seconds = 0.0;
};

struct TrainLog {
    std::vector<EpochLog> epochs;
    CarryStats carry_totals{};
    double initial_test_acc = 0.0;

    double final_test_acc() const { return epochs.empty() ? initial_test_acc : epochs.back().test_acc; }
    double best_test_acc() const {
        double best = initial_test_acc;
        for (const auto& e : epochs) best = std::max(best, e.test_acc);
        return best;
    }
};

struct TrainOptions {
    /// Record wall-clock seconds per epoch. Off by default so identical
    /// seeds produce byte-identical logs.
    bool record_wall_clock = false;
    std::function<void(const EpochLog&)> on_epoch;
};

inline std::vector<double> one_hot(int label, std::size_t classes) {
    std::vector<double> t(classes, 0.0);
    t.at(static_cast<std::size_t>(label)) = 1.0;
    return t;
}

/// Trains net in place. Example order is reshuffled every epoch from the
/// run seed; write noise draws from its own stream so matched seeds share
/// initial weights and example order across backends.
inline TrainLog train(Network& net, const Dataset& data, const TrainOptions& opts = {}) {
    const auto& cfg = net.config();
    require_dims(data.train.dims, cfg.layer_sizes[0], "train features");
    if (data.classes > 0) require_dims(static_cast<std::size_t>(data.classes), cfg.layer_sizes[2], "train classes");

    Rng shuffle_rng(cfg.seed * 0x9e3779b97f4a7c15ULL + 2);
    Rng noise_rng(cfg.seed * 0xbf58476d1ce4e5b9ULL + 3);
    std::vector<std::size_t> order(data.train.size());
    std::iota(order.begin(), order.end(), std::size_t{0});

    TrainLog log;
    log.initial_test_acc = evaluate(net, data.test);
    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        std::shuffle(order.begin(), order.end(), shuffle_rng.engine());
        std::size_t correct = 0;
        CarryStats carries;
        for (std::size_t k : order) {
            const auto x = to_double(data.train.example(k));
            const int label = data.train.labels[k];
            const auto fwd = net.forward(x);
            if (static_cast<int>(argmax(fwd.output)) == label) ++correct;
            const auto bwd = net.backward(fwd, one_hot(label, cfg.layer_sizes[2]));
            carries += net.step(x, fwd, bwd, noise_rng);
        }
        EpochLog e;
        e.epoch = epoch;
        e.train_acc = order.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(order.size());
        e.test_acc = evaluate(net, data.test);
        e.carries = carries.cells_carried;
        if (opts.record_wall_clock) {
            e.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        }
        log.carry_totals += carries;
        log.epochs.push_back(e);
        if (opts.on_epoch) opts.on_epoch(e);
    }
    return log;
}

inline constexpr const char* kTrainLogHeader = "epoch,train_acc,test_acc,carries,seconds";

inline void write_train_log_csv(std::ostream& os, const TrainLog& log) {
    os << kTrainLogHeader << '\n';
    char buf[160];
    for (const auto& e : log.epochs) {
        std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g,%zu,%.17g\n", e.epoch, e.train_acc, e.test_acc, e.carries,
                      e.seconds);
        os << buf;
    }
}

inline TrainLog read_train_log_csv(std::istream& is) {
    std::string line;
    if (!std::getline(is, line) || detail::trim(line) != kTrainLogHeader) {
        throw ParseError("train log CSV: header must be '" + std::string(kTrainLogHeader) + "'");
    }
    TrainLog log;
    std::size_t lineno = 1;
    while (std::getline(is, line)) {
        ++lineno;
        line = detail::trim(line);
        if (line.empty()) continue;
        const auto f = detail::split_csv_line(line);
        const std::string ctx = "train log line " + std::to_string(lineno);
        if (f.size() != 5) throw ParseError(ctx + ": expected 5 fields");
        EpochLog e;
        e.epoch = static_cast<int>(detail::parse_int(f[0], ctx));
        e.train_acc = detail::parse_double(f[1], ctx);
        e.test_acc = detail::parse_double(f[2], ctx);
        e.carries = static_cast<std::size_t>(detail::parse_int(f[3], ctx));
        e.seconds = detail::parse_double(f[4], ctx);
        log.epochs.push_back(e);
    }
    return log;
}

}  // namespace sonos

#endif  // SONOS_TRAINER_HPP
