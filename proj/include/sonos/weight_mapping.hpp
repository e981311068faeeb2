#ifndef SONOS_WEIGHT_MAPPING_HPP
#define SONOS_WEIGHT_MAPPING_HPP

// Encodings of signed algorithmic weights on unsigned device conductances.
//
//   OneDeviceRef      w = 2 (g - g_ref) / (g_max - g_min)
//   DifferentialPair  w = (g+ - g-) / (g_max - g_min)
//   PeriodicCarry     w = (base * d1 + d0) / (base + 1)
//
// In the periodic-carry encoding each digit is itself a one-device or
// differential value in [-1, 1]. The low digit reserves part of its range as
// carry headroom, so its decoded span is stretched to [-1, 1] / (1 - headroom)
// while updates accumulate in it; a periodic carry pass moves the overflow
// into the high digit with closed-loop writes.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "sonos/crossbar.hpp"
#include "sonos/device_model.hpp"
#include "sonos/errors.hpp"
#include "sonos/matrix.hpp"
#include "sonos/rng.hpp"

namespace sonos {

/// How a signed update is split across a differential pair.
enum class DifferentialRouting {
    /// Half the change on each device: erase one, program the other.
    kSplitPair,
    /// Whole change on one device, always erased: plus for positive, minus for negative.
    kSingleErase,
};

/// How apply_update turns a requested change into device writes.
enum class UpdateMode {
    /// One open-loop pulse per device, as in the parallel hardware write.
    kOpenLoop,
    /// Program-and-verify per device to within 1% of the requested change.
    /// Far slower; approximates an ideal linear device.
    kClosedLoop,
};

struct OneDeviceRef {
    /// Reference conductance; defaults to the middle of the device range.
    std::optional<double> g_ref;
};

struct DifferentialPair {
    DifferentialRouting routing = DifferentialRouting::kSplitPair;
};

enum class DigitScheme { kOneDeviceRef, kDifferentialPair };

struct PeriodicCarry {
    int digits = 2;
    int base = 8;
    double headroom_frac = 0.5;
    int carry_interval = 1000;
    DigitScheme digit_scheme = DigitScheme::kDifferentialPair;
    DifferentialRouting routing = DifferentialRouting::kSplitPair;
    /// Closed-loop accuracy of a carry, in algorithmic weight units.
    double carry_tolerance = 2e-3;
    int carry_max_pulses = 200;
};

using WeightScheme = std::variant<OneDeviceRef, DifferentialPair, PeriodicCarry>;

inline std::string scheme_name(const WeightScheme& s) {
    if (std::holds_alternative<OneDeviceRef>(s)) return "one_device";
    if (std::holds_alternative<DifferentialPair>(s)) return "differential";
    return "periodic_carry";
}

inline std::size_t devices_per_weight(const WeightScheme& s) {
    if (std::holds_alternative<OneDeviceRef>(s)) return 1;
    if (std::holds_alternative<DifferentialPair>(s)) return 2;
    return std::get<PeriodicCarry>(s).digit_scheme == DigitScheme::kDifferentialPair ? 4 : 2;
}

struct CarryStats {
    std::size_t cells_carried = 0;
    std::size_t pulses_used = 0;
    std::size_t cells_saturated = 0;
    std::size_t write_failures = 0;

    CarryStats& operator+=(const CarryStats& o) {
        cells_carried += o.cells_carried;
        pulses_used += o.pulses_used;
        cells_saturated += o.cells_saturated;
        write_failures += o.write_failures;
        return *this;
    }
};

class MappedWeights {
public:
    MappedWeights(std::size_t rows, std::size_t cols, WeightScheme scheme, const DeviceModelParams& params,
                  const ConverterBank& converters = {}, KernelFlags flags = {})
        : scheme_(std::move(scheme)), decoded_(rows, cols) {
        params.validate();
        if (const auto* one = std::get_if<OneDeviceRef>(&scheme_)) {
            const double g_ref = one->g_ref.value_or(params.g_mid());
            if (!(g_ref >= params.g_min && g_ref <= params.g_max)) {
                throw DomainError("OneDeviceRef: g_ref outside [g_min, g_max]");
            }
        }
        if (const auto* pc = std::get_if<PeriodicCarry>(&scheme_)) {
            if (pc->digits != 2) throw ConfigError("PeriodicCarry: only two digits are supported");
            if (pc->base < 2) throw ConfigError("PeriodicCarry: base must be at least 2");
            if (!(pc->headroom_frac >= 0.0 && pc->headroom_frac < 1.0)) {
                throw ConfigError("PeriodicCarry: headroom_frac must be in [0,1)");
            }
            if (pc->carry_interval < 1) throw ConfigError("PeriodicCarry: carry_interval must be positive");
            if (!(pc->carry_tolerance > 0.0)) throw ConfigError("PeriodicCarry: carry_tolerance must be positive");
        }
        const std::size_t n = devices_per_weight(scheme_);
        arrays_.reserve(n);
        for (std::size_t k = 0; k < n; ++k) arrays_.emplace_back(rows, cols, params, converters, flags);
        configure_digits();
        refresh_all();
    }

    const WeightScheme& scheme() const noexcept { return scheme_; }
    std::size_t rows() const noexcept { return decoded_.rows(); }
    std::size_t cols() const noexcept { return decoded_.cols(); }
    std::size_t update_counter() const noexcept { return update_counter_; }
    const DeviceModelParams& params() const noexcept { return arrays_.front().params(); }
    const ConverterBank& converters() const noexcept { return arrays_.front().converters(); }
    const KernelFlags& flags() const noexcept { return arrays_.front().flags(); }

    std::span<const CrossbarArray> arrays() const noexcept { return arrays_; }
    CrossbarArray& array(std::size_t k) { return arrays_.at(k); }
    const CrossbarArray& array(std::size_t k) const { return arrays_.at(k); }

    void set_flags(KernelFlags f) {
        for (auto& a : arrays_) a.set_flags(f);
    }

    UpdateMode update_mode() const noexcept { return update_mode_; }
    void set_update_mode(UpdateMode m) noexcept { update_mode_ = m; }

    /// Decoded weights, kept current as devices change.
    const Matrix& weights() const noexcept { return decoded_; }

    bool is_periodic_carry() const noexcept { return std::holds_alternative<PeriodicCarry>(scheme_); }

    /// Decoded high and low digit of a periodic-carry cell.
    std::pair<double, double> digits(std::size_t i, std::size_t j) const {
        if (!is_periodic_carry()) throw ConfigError("digits: scheme is not PeriodicCarry");
        return {digit_value(high_, i, j), digit_value(low_, i, j)};
    }

    /// Symmetric bound on weights init_weights can represent.
    double init_limit() const {
        if (const auto* pc = std::get_if<PeriodicCarry>(&scheme_)) {
            return static_cast<double>(pc->base) / static_cast<double>(pc->base + 1);
        }
        if (const auto* one = std::get_if<OneDeviceRef>(&scheme_)) {
            const auto& p = params();
            const double g_ref = one->g_ref.value_or(p.g_mid());
            return 2.0 * std::min(p.g_max - g_ref, g_ref - p.g_min) / p.range();
        }
        return 1.0;
    }

    /// Applies u v^T with u through the row-update converter and v through
    /// the column-update converter.
    std::optional<CarryStats> apply_update(std::span<const double> u, std::span<const double> v, Rng& rng) {
        require_dims(u.size(), rows(), "apply_update row vector");
        require_dims(v.size(), cols(), "apply_update column vector");
        std::vector<double> uq(u.begin(), u.end());
        std::vector<double> vq(v.begin(), v.end());
        if (flags().quantization_enabled) {
            quantize_in_place(uq, converters().row_update);
            quantize_in_place(vq, converters().col_update);
        }
        return apply_update_encoded(uq, vq, rng);
    }

    /// Applies u v^T with vectors already on the converter grid. Advances the
    /// update counter and runs a carry pass when it reaches the interval;
    /// returns that pass's statistics if one ran.
    std::optional<CarryStats> apply_update_encoded(std::span<const double> u, std::span<const double> v, Rng& rng) {
        require_dims(u.size(), rows(), "apply_update row vector");
        require_dims(v.size(), cols(), "apply_update column vector");
        for (std::size_t i = 0; i < u.size(); ++i) {
            if (u[i] == 0.0) continue;
            for (std::size_t j = 0; j < v.size(); ++j) {
                if (v[j] == 0.0) continue;
                write_delta(update_digit(), i, j, u[i] * v[j] * update_gain_, rng);
                decoded_(i, j) = decode_cell(i, j);
            }
        }
        ++update_counter_;
        if (const auto* pc = std::get_if<PeriodicCarry>(&scheme_)) {
            if (update_counter_ >= static_cast<std::size_t>(pc->carry_interval)) return carry(rng);
        }
        return std::nullopt;
    }

    /// One carry pass: every cell whose low digit left its nominal range moves
    /// d0 / base into the high digit and resets the low digit to zero, both by
    /// closed-loop writes. Resets the update counter.
    CarryStats carry(Rng& rng) {
        const auto* pc = std::get_if<PeriodicCarry>(&scheme_);
        if (!pc) throw ConfigError("carry_step: scheme is not PeriodicCarry");
        CarryStats stats;
        const double g_tol = conductance_tolerance(pc->carry_tolerance);
        for (std::size_t i = 0; i < rows(); ++i) {
            for (std::size_t j = 0; j < cols(); ++j) {
                const double d0 = digit_value(low_, i, j);
                if (std::abs(d0) <= 1.0) continue;
                const double d1 = digit_value(high_, i, j);
                double target = d1 + d0 / static_cast<double>(pc->base);
                if (std::abs(target) > 1.0) {
                    target = std::clamp(target, -1.0, 1.0);
                    ++stats.cells_saturated;
                }
                ++stats.cells_carried;
                try {
                    stats.pulses_used += write_digit(high_, i, j, target, g_tol, pc->carry_max_pulses, rng);
                    stats.pulses_used += write_digit(low_, i, j, 0.0, g_tol, pc->carry_max_pulses, rng);
                } catch (const ConvergenceError& e) {
                    stats.pulses_used += static_cast<std::size_t>(e.pulses_used());
                    ++stats.write_failures;
                }
                decoded_(i, j) = decode_cell(i, j);
            }
        }
        update_counter_ = 0;
        return stats;
    }

    /// Programs every cell to w_init by closed-loop writes. Periodic carry
    /// stores the whole value in the high digit and zeroes the low digit.
    void init(const Matrix& w_init, double tolerance, Rng& rng, int max_pulses = 1000) {
        require_dims(w_init.rows(), rows(), "init_weights rows");
        require_dims(w_init.cols(), cols(), "init_weights cols");
        if (!(tolerance > 0.0)) throw DomainError("init_weights: tolerance must be positive");
        const double limit = init_limit();
        for (double w : w_init.data()) {
            if (!std::isfinite(w) || std::abs(w) > limit + 1e-12) {
                throw RangeError("init_weights: value " + std::to_string(w) + " outside representable range +-" +
                                 std::to_string(limit));
            }
        }
        const double g_tol = conductance_tolerance(tolerance);
        const auto* pc = std::get_if<PeriodicCarry>(&scheme_);
        for (std::size_t i = 0; i < rows(); ++i) {
            for (std::size_t j = 0; j < cols(); ++j) {
                const double w = w_init(i, j);
                if (pc) {
                    const double d1 = w * static_cast<double>(pc->base + 1) / static_cast<double>(pc->base);
                    write_digit(high_, i, j, std::clamp(d1, -1.0, 1.0), g_tol, max_pulses, rng);
                    write_digit(low_, i, j, 0.0, g_tol, max_pulses, rng);
                } else {
                    write_digit(update_digit(), i, j, w, g_tol, max_pulses, rng);
                }
                decoded_(i, j) = decode_cell(i, j);
            }
        }
        update_counter_ = 0;
    }

    double decode_cell(std::size_t i, std::size_t j) const {
        if (const auto* pc = std::get_if<PeriodicCarry>(&scheme_)) {
            const double b = static_cast<double>(pc->base);
            return (b * digit_value(high_, i, j) + digit_value(low_, i, j)) / (b + 1.0);
        }
        return digit_value(high_, i, j);
    }

    /// Recomputes the decoded cache from device state, e.g. after editing
    /// conductances directly.
    void refresh_all() {
        for (std::size_t i = 0; i < rows(); ++i)
            for (std::size_t j = 0; j < cols(); ++j) decoded_(i, j) = decode_cell(i, j);
    }

    /// Weight tolerance expressed as the per-device conductance tolerance that
    /// bounds the summed decoded error.
    double conductance_tolerance(double weight_tolerance) const {
        double sens = 0.0;
        for (const auto* d : {&high_, &low_}) {
            if (d->count == 0) continue;
            const double per = d->weight_scale * (d->count == 1 ? 2.0 : 1.0) / params().range();
            sens += per * static_cast<double>(d->count);
        }
        return weight_tolerance / sens;
    }

private:
    // One digit realised on one or two arrays. value = scale * normalized,
    // where normalized is 2(g - g_ref)/range (one device) or (g+ - g-)/range.
    struct Digit {
        std::size_t first = 0;  // index into arrays_
        std::size_t count = 0;  // 1 or 2 devices
        double g_ref = 0.0;     // single-device reference
        double value_scale = 1.0;
        double weight_scale = 1.0;  // d(weight)/d(normalized)
        DifferentialRouting routing = DifferentialRouting::kSplitPair;
    };

    void configure_digits() {
        const auto& p = params();
        if (const auto* one = std::get_if<OneDeviceRef>(&scheme_)) {
            high_ = {0, 1, one->g_ref.value_or(p.g_mid()), 1.0, 1.0, DifferentialRouting::kSplitPair};
            update_gain_ = 1.0;
            return;
        }
        if (const auto* dp = std::get_if<DifferentialPair>(&scheme_)) {
            high_ = {0, 2, p.g_mid(), 1.0, 1.0, dp->routing};
            update_gain_ = 1.0;
            return;
        }
        const auto& pc = std::get<PeriodicCarry>(scheme_);
        const std::size_t per = pc.digit_scheme == DigitScheme::kDifferentialPair ? 2 : 1;
        const double b = static_cast<double>(pc.base);
        const double low_span = 1.0 / (1.0 - pc.headroom_frac);
        high_ = {0, per, p.g_mid(), 1.0, b / (b + 1.0), pc.routing};
        low_ = {per, per, p.g_mid(), low_span, low_span / (b + 1.0), pc.routing};
        // weight change -> low digit value change
        update_gain_ = b + 1.0;
    }

    const Digit& update_digit() const { return is_periodic_carry() ? low_ : high_; }

    double normalized(const Digit& d, std::size_t i, std::size_t j) const {
        const double range = params().range();
        if (d.count == 1) return 2.0 * (arrays_[d.first].conductance(i, j) - d.g_ref) / range;
        return (arrays_[d.first].conductance(i, j) - arrays_[d.first + 1].conductance(i, j)) / range;
    }

    double digit_value(const Digit& d, std::size_t i, std::size_t j) const {
        return d.value_scale * normalized(d, i, j);
    }

    void move_device(CrossbarArray& a, std::size_t i, std::size_t j, double dg, Rng& rng) {
        if (update_mode_ == UpdateMode::kOpenLoop) {
            a.nudge(i, j, dg, rng);
            return;
        }
        const auto& p = a.params();
        const double target = std::clamp(a.conductance(i, j) + dg, p.g_min, p.g_max);
        const double tol = std::max(1e-2 * std::abs(dg), 1e-9 * p.range());
        try {
            write_to_target(a, i, j, target, tol, 100, rng);
        } catch (const ConvergenceError&) {
            // leave the device where the loop stopped; training tolerates it
        }
    }

    /// Change of a digit's value by delta (digit units).
    void write_delta(const Digit& d, std::size_t i, std::size_t j, double delta, Rng& rng) {
        const double range = params().range();
        const double dn = delta / d.value_scale;
        if (d.count == 1) {
            move_device(arrays_[d.first], i, j, dn * 0.5 * range, rng);
            return;
        }
        if (d.routing == DifferentialRouting::kSplitPair) {
            const double dg = dn * 0.5 * range;
            move_device(arrays_[d.first], i, j, dg, rng);
            move_device(arrays_[d.first + 1], i, j, -dg, rng);
        } else if (dn > 0.0) {
            move_device(arrays_[d.first], i, j, dn * range, rng);
        } else {
            move_device(arrays_[d.first + 1], i, j, -dn * range, rng);
        }
    }

    /// Closed-loop write of a digit to a value (digit units). Pairs are
    /// written symmetrically about mid-range.
    std::size_t write_digit(const Digit& d, std::size_t i, std::size_t j, double value, double g_tol,
                            int max_pulses, Rng& rng) {
        const auto& p = params();
        const double n = value / d.value_scale;
        std::size_t pulses = 0;
        if (d.count == 1) {
            const double g = std::clamp(d.g_ref + 0.5 * n * p.range(), p.g_min, p.g_max);
            pulses += write_to_target(arrays_[d.first], i, j, g, g_tol, max_pulses, rng);
        } else {
            const double half = 0.5 * n * p.range();
            const double gp = std::clamp(p.g_mid() + half, p.g_min, p.g_max);
            const double gm = std::clamp(p.g_mid() - half, p.g_min, p.g_max);
            pulses += write_to_target(arrays_[d.first], i, j, gp, g_tol, max_pulses, rng);
            pulses += write_to_target(arrays_[d.first + 1], i, j, gm, g_tol, max_pulses, rng);
        }
        return pulses;
    }

    WeightScheme scheme_;
    std::vector<CrossbarArray> arrays_;
    Matrix decoded_;
    Digit high_;
    Digit low_;
    double update_gain_ = 1.0;
    std::size_t update_counter_ = 0;
    UpdateMode update_mode_ = UpdateMode::kOpenLoop;
};

// Free-function surface.

inline Matrix decode_weights(const MappedWeights& mw) {
    Matrix w(mw.rows(), mw.cols());
    for (std::size_t i = 0; i < mw.rows(); ++i)
        for (std::size_t j = 0; j < mw.cols(); ++j) w(i, j) = mw.decode_cell(i, j);
    return w;
}

inline std::optional<CarryStats> apply_update(MappedWeights& mw, std::span<const double> u, std::span<const double> v,
                                              Rng& rng) {
    return mw.apply_update(u, v, rng);
}

inline CarryStats carry_step(MappedWeights& mw, Rng& rng) { return mw.carry(rng); }

inline void init_weights(MappedWeights& mw, const Matrix& w_init, double tolerance, Rng& rng) {
    mw.init(w_init, tolerance, rng);
}

}  // namespace sonos

#endif  // SONOS_WEIGHT_MAPPING_HPP
