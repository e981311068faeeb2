#ifndef SONOS_CROSSBAR_HPP
#define SONOS_CROSSBAR_HPP

// Crossbar of SONOS devices and the three accelerated kernels:
//   vmm  y = W^T x   (inputs on rows, integrated along columns)
//   mvm  z = W v     (inputs on columns, integrated along rows)
//   opu  W += u v^T  (parallel rank-1 write, open loop)
// plus closed-loop program-and-verify and the half-select bias check.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "sonos/device_model.hpp"
#include "sonos/errors.hpp"
#include "sonos/matrix.hpp"
#include "sonos/rng.hpp"

namespace sonos {

// ---------------------------------------------------------------------------
// Converters

/// Uniform midtread A/D or D/A converter: 2^bits - 1 levels spanning
/// [min, max] with both endpoints and zero on the grid.
struct ConverterSpec {
    double min = -1.0;
    double max = 1.0;
    int bits = 8;

    int levels() const { return (1 << bits) - 1; }
    double step() const { return (max - min) / static_cast<double>(levels() - 1); }

    void validate() const {
        if (!(min < max)) throw DomainError("converter: min must be below max");
        if (bits < 1 || bits > 16) throw DomainError("converter: bits must be in [1,16]");
        if (bits == 1) throw DomainError("converter: one bit gives a single level, zero cannot be paired with a range");
        if (min < 0.0 && max > 0.0) {
            const double zero_index = -min / step();
            if (std::abs(zero_index - std::round(zero_index)) > 1e-9) {
                throw DomainError("converter: zero is not on the level grid");
            }
        } else if (min != 0.0 && max != 0.0) {
            throw DomainError("converter: range must contain zero");
        }
    }

    bool operator==(const ConverterSpec&) const = default;
};

/// Clip to the converter range, then round to the nearest level. Ties round
/// away from zero so the quantizer is odd-symmetric on symmetric ranges.
inline double quantize(double value, const ConverterSpec& spec) {
    const double step = spec.step();
    const double lo_index = std::round(spec.min / step);
    const double hi_index = std::round(spec.max / step);
    const double index = std::clamp(std::round(value / step), lo_index, hi_index);
    if (index == lo_index) return spec.min;
    if (index == hi_index) return spec.max;
    return index * step;
}

inline void quantize_in_place(std::span<double> values, const ConverterSpec& spec) {
    for (double& v : values) v = quantize(v, spec);
}

/// The six converter blocks around a core, defaulting to the published table.
struct ConverterBank {
    ConverterSpec row_input{-1.0, 1.0, 8};
    ConverterSpec col_output{-6.0, 6.0, 8};
    ConverterSpec col_input{-1.0, 1.0, 8};
    ConverterSpec row_output{-4.0, 4.0, 8};
    ConverterSpec row_update{-0.01, 0.01, 7};
    ConverterSpec col_update{-1.0, 1.0, 5};

    void validate() const {
        for (const auto* s : {&row_input, &col_output, &col_input, &row_output, &row_update, &col_update}) {
            s->validate();
        }
    }

    bool operator==(const ConverterBank&) const = default;
};

struct KernelFlags {
    bool quantization_enabled = true;
    bool noise_enabled = true;
};

// ---------------------------------------------------------------------------
// Array

class CrossbarArray {
public:
    CrossbarArray(std::size_t rows, std::size_t cols, DeviceModelParams params, ConverterBank converters = {},
                  KernelFlags flags = {})
        : rows_(rows), cols_(cols), params_(std::move(params)), converters_(converters), flags_(flags) {
        if (rows == 0 || cols == 0) throw DimensionError("CrossbarArray: dimensions must be positive");
        params_.validate();
        converters_.validate();
        g_.assign(rows * cols, params_.g_mid());
        full_pulse_ = full_pulse_delta(params_);
    }

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    const DeviceModelParams& params() const noexcept { return params_; }
    const ConverterBank& converters() const noexcept { return converters_; }
    const KernelFlags& flags() const noexcept { return flags_; }
    void set_flags(KernelFlags f) { flags_ = f; }

    DeviceState device(std::size_t i, std::size_t j) const { return {g_[index(i, j)]}; }
    double conductance(std::size_t i, std::size_t j) const { return g_[index(i, j)]; }
    std::span<const double> conductances() const noexcept { return g_; }

    void set_conductance(std::size_t i, std::size_t j, double g) {
        if (!(g >= params_.g_min && g <= params_.g_max)) {
            throw DomainError("set_conductance: value outside [g_min, g_max]");
        }
        g_[index(i, j)] = g;
    }

    void fill(double g) {
        for (std::size_t k = 0; k < g_.size(); ++k) set_conductance(k / cols_, k % cols_, g);
    }

    /// Raw-array algorithmic view: the conductance mapped linearly onto
    /// [-1, 1] about the middle of the range.
    double weight(std::size_t i, std::size_t j) const {
        return 2.0 * (g_[index(i, j)] - params_.g_mid()) / params_.range();
    }

    Matrix weights() const {
        Matrix w(rows_, cols_);
        for (std::size_t i = 0; i < rows_; ++i)
            for (std::size_t j = 0; j < cols_; ++j) w(i, j) = weight(i, j);
        return w;
    }

    /// Conductance change of one full pulse at mid-range (mean model).
    double full_pulse_conductance() const noexcept { return full_pulse_; }

    /// Open-loop pulse toward a requested conductance change. The magnitude
    /// is the requested change over a full pulse's mid-range change, capped
    /// at one full pulse. A zero request writes nothing.
    void nudge(std::size_t i, std::size_t j, double dg_target, Rng& rng) {
        if (dg_target == 0.0) return;
        const double magnitude = std::min(std::abs(dg_target) / full_pulse_, 1.0);
        pulse(i, j, dg_target > 0.0 ? PulseDirection::kErase : PulseDirection::kProgram, magnitude, rng);
    }

    void pulse(std::size_t i, std::size_t j, PulseDirection dir, double magnitude, Rng& rng) {
        double& g = g_[index(i, j)];
        DeviceState s{g};
        s = flags_.noise_enabled ? apply_pulse(s, dir, magnitude, params_, rng)
                                 : apply_pulse_mean(s, dir, magnitude, params_);
        g = s.g;
    }

private:
    std::size_t index(std::size_t i, std::size_t j) const {
        if (i >= rows_ || j >= cols_) throw DimensionError("CrossbarArray: cell index out of range");
        return i * cols_ + j;
    }

    std::size_t rows_;
    std::size_t cols_;
    DeviceModelParams params_;
    ConverterBank converters_;
    KernelFlags flags_;
    std::vector<double> g_;
    double full_pulse_ = 0.0;
};

// ---------------------------------------------------------------------------
// Read kernels over an algorithmic weight matrix

/// Converters applied at the edges of a read kernel; null means "ideal".
struct EdgeQuantization {
    const ConverterSpec* input = nullptr;
    const ConverterSpec* output = nullptr;
};

/// y_j = sum_i x_i w_ij
inline std::vector<double> vmm(const Matrix& w, std::span<const double> x, EdgeQuantization q = {}) {
    require_dims(x.size(), w.rows(), "vmm input");
    std::vector<double> y(w.cols(), 0.0);
    for (std::size_t i = 0; i < w.rows(); ++i) {
        const double xi = q.input ? quantize(x[i], *q.input) : x[i];
        if (xi == 0.0) continue;
        const auto row = w.row(i);
        for (std::size_t j = 0; j < y.size(); ++j) y[j] += xi * row[j];
    }
    if (q.output) quantize_in_place(y, *q.output);
    return y;
}

/// z_i = sum_j w_ij v_j
inline std::vector<double> mvm(const Matrix& w, std::span<const double> v, EdgeQuantization q = {}) {
    require_dims(v.size(), w.cols(), "mvm input");
    std::vector<double> vq(v.begin(), v.end());
    if (q.input) quantize_in_place(vq, *q.input);
    std::vector<double> z(w.rows(), 0.0);
    for (std::size_t i = 0; i < w.rows(); ++i) {
        const auto row = w.row(i);
        double acc = 0.0;
        for (std::size_t j = 0; j < vq.size(); ++j) acc += row[j] * vq[j];
        z[i] = acc;
    }
    if (q.output) quantize_in_place(z, *q.output);
    return z;
}

inline EdgeQuantization forward_edges(const ConverterBank& bank, bool enabled) {
    return enabled ? EdgeQuantization{&bank.row_input, &bank.col_output} : EdgeQuantization{};
}

inline EdgeQuantization backward_edges(const ConverterBank& bank, bool enabled) {
    return enabled ? EdgeQuantization{&bank.col_input, &bank.row_output} : EdgeQuantization{};
}

inline std::vector<double> vmm(const CrossbarArray& a, std::span<const double> x) {
    require_dims(x.size(), a.rows(), "vmm input");
    return vmm(a.weights(), x, forward_edges(a.converters(), a.flags().quantization_enabled));
}

inline std::vector<double> mvm(const CrossbarArray& a, std::span<const double> v) {
    require_dims(v.size(), a.cols(), "mvm input");
    return mvm(a.weights(), v, backward_edges(a.converters(), a.flags().quantization_enabled));
}

// ---------------------------------------------------------------------------
// Outer-product update

/// Parallel write with already-encoded update vectors: every cell with a
/// non-zero u_i * v_j gets one open-loop pulse in that direction.
inline void opu_encoded(CrossbarArray& a, std::span<const double> u, std::span<const double> v, Rng& rng) {
    require_dims(u.size(), a.rows(), "opu row vector");
    require_dims(v.size(), a.cols(), "opu column vector");
    const double g_per_w = 0.5 * a.params().range();
    for (std::size_t i = 0; i < u.size(); ++i) {
        if (u[i] == 0.0) continue;
        for (std::size_t j = 0; j < v.size(); ++j) {
            if (v[j] == 0.0) continue;
            a.nudge(i, j, u[i] * v[j] * g_per_w, rng);
        }
    }
}

/// Parallel outer-product update: u through the row update converter, v
/// through the column update converter, then one pulse per selected cell.
inline void opu(CrossbarArray& a, std::span<const double> u, std::span<const double> v, Rng& rng) {
    require_dims(u.size(), a.rows(), "opu row vector");
    require_dims(v.size(), a.cols(), "opu column vector");
    std::vector<double> uq(u.begin(), u.end());
    std::vector<double> vq(v.begin(), v.end());
    if (a.flags().quantization_enabled) {
        quantize_in_place(uq, a.converters().row_update);
        quantize_in_place(vq, a.converters().col_update);
    }
    opu_encoded(a, uq, vq, rng);
}

/// Magnitude the update controller assigns to a requested weight change on a
/// raw array.
inline double opu_pulse_magnitude(const CrossbarArray& a, double dw) {
    const double dw_full = 2.0 * a.full_pulse_conductance() / a.params().range();
    return std::clamp(std::abs(dw) / dw_full, 0.0, 1.0);
}

// ---------------------------------------------------------------------------
// Closed-loop write

/// Program-and-verify: read, pulse toward the target with a magnitude
/// proportional to the remaining error, repeat. Returns pulses used.
inline int write_to_target(CrossbarArray& a, std::size_t i, std::size_t j, double g_target, double tolerance,
                           int max_pulses, Rng& rng) {
    const auto& p = a.params();
    if (!(g_target >= p.g_min && g_target <= p.g_max)) {
        throw DomainError("write_to_target: target outside [g_min, g_max]");
    }
    if (!(tolerance > 0.0)) throw DomainError("write_to_target: tolerance must be positive");
    if (max_pulses < 0) throw DomainError("write_to_target: max_pulses must be non-negative");

    int pulses = 0;
    for (;;) {
        const double g = a.conductance(i, j);
        const double err = g_target - g;
        if (std::abs(err) <= tolerance) return pulses;
        const PulseDirection dir = err > 0.0 ? PulseDirection::kErase : PulseDirection::kProgram;
        const double full = std::abs(mean_delta(g, dir, 1.0, p));
        if (pulses >= max_pulses || !(full > 0.0)) {
            throw ConvergenceError("write_to_target: no convergence within " + std::to_string(max_pulses) +
                                       " pulses",
                                   g, pulses);
        }
        a.pulse(i, j, dir, std::min(std::abs(err) / full, 1.0), rng);
        ++pulses;
    }
}

// ---------------------------------------------------------------------------
// Half-select write biasing

struct BiasScheme {
    double v_write_selected = 10.0;
    double v_write_unselected_max = 7.0;
    /// Source-drain voltage the access transistor can block.
    double v_access_holdoff = 1.5;
};

struct BiasReport {
    bool pass = true;
    double required_holdoff = 0.0;
    double max_unselected_stress = 0.0;
    std::size_t selected_cells = 0;
    std::size_t overstressed_cells = 0;
    std::vector<std::string> failures;
};

/// Checks a half-select write for the given row/column sign patterns.
///
/// The write runs in one sub-phase per (row sign, column sign) combination.
/// In a sub-phase, selected rows sit at v_sel and the other rows at
/// v_sel - v_unsel; selected columns sit at 0 and the others at
/// v_sel - v_unsel. A selected cell sees v_sel, half-selected cells see
/// v_unsel or v_sel - v_unsel, and fully unselected cells see 0. The access
/// transistor must block half the selected/unselected difference.
inline BiasReport validate_write_biases(const BiasScheme& scheme, std::span<const int> u_signs,
                                        std::span<const int> v_signs, double v_inhibit = 7.0) {
    BiasReport rep;
    const double v_sel = scheme.v_write_selected;
    const double v_uns = scheme.v_write_unselected_max;
    rep.required_holdoff = (v_sel - v_uns) / 2.0;

    if (!(v_uns < v_sel)) {
        rep.pass = false;
        rep.failures.push_back("unselected write voltage must be below the selected voltage");
    }
    if (scheme.v_access_holdoff + 1e-12 < rep.required_holdoff) {
        rep.pass = false;
        rep.failures.push_back("access transistor hold-off " + std::to_string(scheme.v_access_holdoff) +
                               " V below required " + std::to_string(rep.required_holdoff) + " V");
    }

    const double row_off = v_sel - v_uns;
    const double col_off = v_sel - v_uns;
    const auto sgn = [](int s) { return s > 0 ? 1 : (s < 0 ? -1 : 0); };

    for (int rs : {-1, 1}) {
        for (int cs : {-1, 1}) {
            const bool any_row = std::any_of(u_signs.begin(), u_signs.end(), [&](int s) { return sgn(s) == rs; });
            const bool any_col = std::any_of(v_signs.begin(), v_signs.end(), [&](int s) { return sgn(s) == cs; });
            if (!any_row || !any_col) continue;
            for (std::size_t i = 0; i < u_signs.size(); ++i) {
                const bool row_sel = sgn(u_signs[i]) == rs;
                const double v_gate = row_sel ? v_sel : row_off;
                for (std::size_t j = 0; j < v_signs.size(); ++j) {
                    const bool col_sel = sgn(v_signs[j]) == cs;
                    const double v_source = col_sel ? 0.0 : col_off;
                    const double vgs = std::abs(v_gate - v_source);
                    if (row_sel && col_sel) {
                        ++rep.selected_cells;
                        continue;
                    }
                    rep.max_unselected_stress = std::max(rep.max_unselected_stress, vgs);
                    if (vgs > v_inhibit + 1e-12) ++rep.overstressed_cells;
                }
            }
        }
    }
    if (rep.overstressed_cells > 0) {
        rep.pass = false;
        rep.failures.push_back(std::to_string(rep.overstressed_cells) + " unselected cell-phases above the " +
                               std::to_string(v_inhibit) + " V inhibit level");
    }
    return rep;
}

// ---------------------------------------------------------------------------
// Snapshot CSV: first line "<rows>,<cols>", then one line of conductances
// (siemens) per row.

inline void write_snapshot_csv(std::ostream& os, const CrossbarArray& a) {
    os << a.rows() << ',' << a.cols() << '\n';
    char buf[32];
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t j = 0; j < a.cols(); ++j) {
            std::snprintf(buf, sizeof buf, "%.17g", a.conductance(i, j));
            os << (j ? "," : "") << buf;
        }
        os << '\n';
    }
}

inline CrossbarArray read_snapshot_csv(std::istream& is, const DeviceModelParams& params,
                                       const ConverterBank& converters = {}, KernelFlags flags = {}) {
    std::string line;
    if (!std::getline(is, line)) throw ParseError("snapshot CSV: empty input", 0);
    const auto dims = detail::split_csv_line(detail::trim(line));
    if (dims.size() != 2) throw ParseError("snapshot CSV: first line must be '<rows>,<cols>'");
    const long long rows = detail::parse_int(detail::trim(dims[0]), "snapshot CSV rows");
    const long long cols = detail::parse_int(detail::trim(dims[1]), "snapshot CSV cols");
    if (rows <= 0 || cols <= 0) throw ParseError("snapshot CSV: dimensions must be positive");
    CrossbarArray a(static_cast<std::size_t>(rows), static_cast<std::size_t>(cols), params, converters, flags);
    for (long long i = 0; i < rows; ++i) {
        if (!std::getline(is, line)) {
            throw ParseError("snapshot CSV: expected " + std::to_string(rows) + " rows, got " + std::to_string(i));
        }
        const auto f = detail::split_csv_line(detail::trim(line));
        if (static_cast<long long>(f.size()) != cols) {
            throw ParseError("snapshot CSV row " + std::to_string(i) + ": expected " + std::to_string(cols) +
                             " values");
        }
        for (long long j = 0; j < cols; ++j) {
            const double g = detail::parse_double(detail::trim(f[j]), "snapshot CSV row " + std::to_string(i));
            if (!(g >= params.g_min && g <= params.g_max)) {
                throw ParseError("snapshot CSV row " + std::to_string(i) + ": conductance outside device range");
            }
            a.set_conductance(static_cast<std::size_t>(i), static_cast<std::size_t>(j), g);
        }
    }
    return a;
}

}  // namespace sonos

#endif  // SONOS_CROSSBAR_HPP
