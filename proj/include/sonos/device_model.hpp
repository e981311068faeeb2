#ifndef SONOS_DEVICE_MODEL_HPP
#define SONOS_DEVICE_MODEL_HPP

// Stochastic model of a single SONOS analog synapse.
//
// A device holds one conductance g in [g_min, g_max]. Erase pulses raise g,
// program pulses lower it. The mean response blends two shapes:
//
//   symmetric  (subthreshold read):  dg = g * (exp(+-s*u) - 1)
//   asymmetric (above-threshold):    dg = +a*u*(g_max - g)   (erase)
//                                    dg = -a*u*(g - g_min)   (program)
//
// with blend weight lambda in [0, 1] selected by the read gate voltage. Write
// noise multiplies the mean change by (1 + eps), eps ~ N(0, noise_frac), and
// the result is clamped to the rails.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstddef>
#include <cstdio>
#include <fstream>
#include <istream>
#include <limits>
#include <map>
#include <numbers>
#include <ostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "sonos/errors.hpp"
#include "sonos/rng.hpp"

namespace sonos {

enum class PulseDirection { kProgram, kErase };

inline const char* to_string(PulseDirection d) { return d == PulseDirection::kErase ? "E" : "P"; }

/// Nominal write conditions. Informational: carried for reporting and for
/// the half-select bias validator, not used by the pulse model itself.
struct PulseMetadata {
    double v_program = 10.0;
    double v_erase = -11.0;
    double pulse_width_s = 10e-6;
    double v_inhibit_program = 7.0;
    double v_inhibit_erase = -8.0;
};

struct ReadVoltagePreset {
    double volts;
    double asymmetry;
};

inline std::vector<ReadVoltagePreset> default_read_voltage_presets() {
    return {{1.4, 0.0}, {1.8, 0.3}, {2.2, 0.6}, {2.6, 1.0}};
}

struct DeviceModelParams {
    double g_min = 1e-9;
    double g_max = 10e-9;
    double step_sym = std::numbers::ln10 / 100.0;
    double step_asym = 0.023;
    double asymmetry = 0.0;
    double write_noise_frac = 0.2;
    std::vector<ReadVoltagePreset> read_voltage_presets = default_read_voltage_presets();
    PulseMetadata pulse_metadata{};

    double g_mid() const { return 0.5 * (g_min + g_max); }
    double range() const { return g_max - g_min; }

    void validate() const {
        if (!(g_min > 0.0) || !std::isfinite(g_min)) throw DomainError("g_min must be positive and finite");
        if (!(g_max > g_min) || !std::isfinite(g_max)) throw DomainError("g_max must exceed g_min");
        if (g_max / g_min < 2.0) throw DomainError("g_max/g_min must be at least 2");
        if (!(step_sym > 0.0)) throw DomainError("step_sym must be positive");
        if (!(step_asym > 0.0)) throw DomainError("step_asym must be positive");
        if (!(asymmetry >= 0.0 && asymmetry <= 1.0)) throw DomainError("asymmetry must be in [0,1]");
        if (!(write_noise_frac >= 0.0)) throw DomainError("write_noise_frac must be non-negative");
        for (std::size_t i = 0; i < read_voltage_presets.size(); ++i) {
            const auto& p = read_voltage_presets[i];
            if (!(p.asymmetry >= 0.0 && p.asymmetry <= 1.0)) {
                throw DomainError("read voltage preset asymmetry must be in [0,1]");
            }
            if (i > 0) {
                const auto& prev = read_voltage_presets[i - 1];
                if (!(p.volts > prev.volts) || p.asymmetry < prev.asymmetry) {
                    throw DomainError("read voltage presets must be sorted and monotone");
                }
            }
        }
    }

    /// Asymmetry for a read voltage: exact preset, or linear interpolation
    /// between neighbours. Voltages outside the table are rejected.
    double asymmetry_for(double volts) const {
        const auto& p = read_voltage_presets;
        if (p.empty()) throw DomainError("no read voltage presets configured");
        for (std::size_t i = 0; i < p.size(); ++i) {
            if (std::abs(p[i].volts - volts) < 1e-9) return p[i].asymmetry;
        }
        if (volts < p.front().volts || volts > p.back().volts) {
            throw DomainError("read voltage " + std::to_string(volts) + " V outside preset table");
        }
        auto hi = std::upper_bound(p.begin(), p.end(), volts,
                                   [](double v, const ReadVoltagePreset& q) { return v < q.volts; });
        auto lo = hi - 1;
        const double t = (volts - lo->volts) / (hi->volts - lo->volts);
        return lo->asymmetry + t * (hi->asymmetry - lo->asymmetry);
    }

    DeviceModelParams with_read_voltage(double volts) const {
        DeviceModelParams out = *this;
        out.asymmetry = asymmetry_for(volts);
        return out;
    }
};

struct DeviceState {
    double g = 0.0;
};

/// Mean (noise-free, unclamped) conductance change of one pulse.
inline double mean_delta(double g, PulseDirection dir, double magnitude, const DeviceModelParams& p) {
    const double lam = p.asymmetry;
    double sym = 0.0;
    double asym = 0.0;
    if (dir == PulseDirection::kErase) {
        if (lam < 1.0) sym = g * std::expm1(p.step_sym * magnitude);
        if (lam > 0.0) asym = p.step_asym * magnitude * (p.g_max - g);
    } else {
        if (lam < 1.0) sym = g * std::expm1(-p.step_sym * magnitude);
        if (lam > 0.0) asym = -p.step_asym * magnitude * (g - p.g_min);
    }
    return (1.0 - lam) * sym + lam * asym;
}

/// Mean conductance change of one full erase pulse at the middle of the
/// range. The open-loop update controller scales pulse magnitudes by this.
inline double full_pulse_delta(const DeviceModelParams& p) {
    return mean_delta(p.g_mid(), PulseDirection::kErase, 1.0, p);
}

namespace detail {
inline void check_pulse_args(const DeviceState& s, double magnitude) {
    if (!std::isfinite(s.g)) throw DomainError("apply_pulse: non-finite device state");
    if (!(magnitude >= 0.0 && magnitude <= 1.0)) {
        throw DomainError("apply_pulse: magnitude must be in [0,1]");
    }
}
}  // namespace detail

/// Noise-free pulse: mean update followed by the clamp.
inline DeviceState apply_pulse_mean(DeviceState s, PulseDirection dir, double magnitude,
                                    const DeviceModelParams& p) {
    detail::check_pulse_args(s, magnitude);
    if (magnitude == 0.0) return s;
    s.g = std::clamp(s.g + mean_delta(s.g, dir, magnitude, p), p.g_min, p.g_max);
    return s;
}

/// One write pulse with multiplicative Gaussian write noise. A zero-magnitude
/// pulse is a no-op and consumes no randomness.
inline DeviceState apply_pulse(DeviceState s, PulseDirection dir, double magnitude,
                               const DeviceModelParams& p, Rng& rng) {
    detail::check_pulse_args(s, magnitude);
    if (magnitude == 0.0) return s;
    double dg = mean_delta(s.g, dir, magnitude, p);
    if (p.write_noise_frac > 0.0) dg *= 1.0 + rng.normal(0.0, p.write_noise_frac);
    s.g = std::clamp(s.g + dg, p.g_min, p.g_max);
    return s;
}

// ---------------------------------------------------------------------------
// Pulse records and the CSV format they travel in.

struct PulseRecord {
    int repetition = 0;
    int pulse_index = 0;
    PulseDirection direction = PulseDirection::kErase;
    double g_measured = 0.0;
    double v_g_read = 1.4;
};

inline constexpr const char* kPulseCsvHeader = "repetition,pulse_index,direction,conductance_S,v_g_read";

inline void write_pulse_csv(std::ostream& os, const std::vector<PulseRecord>& records) {
    os << kPulseCsvHeader << '\n';
    char buf[128];
    for (const auto& r : records) {
        std::snprintf(buf, sizeof buf, "%d,%d,%s,%.17g,%.17g\n", r.repetition, r.pulse_index,
                      to_string(r.direction), r.g_measured, r.v_g_read);
        os << buf;
    }
}

namespace detail {
inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    std::istringstream ss(line);
    while (std::getline(ss, field, ',')) out.push_back(field);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

inline std::string trim(std::string s) {
    const auto not_space = [](unsigned char c) { return !std::isspace(c); };
    s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
    s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
    return s;
}

inline double parse_double(const std::string& field, const std::string& ctx) {
    std::size_t used = 0;
    double v = 0.0;
    try {
        v = std::stod(field, &used);
    } catch (const std::exception&) {
        throw ParseError(ctx + ": not a number: '" + field + "'");
    }
    if (used != field.size()) throw ParseError(ctx + ": trailing characters in '" + field + "'");
    return v;
}

inline long long parse_int(const std::string& field, const std::string& ctx) {
    std::size_t used = 0;
    long long v = 0;
    try {
        v = std::stoll(field, &used);
    } catch (const std::exception&) {
        throw ParseError(ctx + ": not an integer: '" + field + "'");
    }
    if (used != field.size()) throw ParseError(ctx + ": trailing characters in '" + field + "'");
    return v;
}
}  // namespace detail

inline std::vector<PulseRecord> read_pulse_csv(std::istream& is) {
    std::string line;
    if (!std::getline(is, line)) throw ParseError("pulse CSV: empty input", 0);
    if (detail::trim(line) != kPulseCsvHeader) {
        throw ParseError("pulse CSV: header must be '" + std::string(kPulseCsvHeader) + "'");
    }
    std::vector<PulseRecord> out;
    std::size_t lineno = 1;
    while (std::getline(is, line)) {
        ++lineno;
        line = detail::trim(line);
        if (line.empty()) continue;
        const auto f = detail::split_csv_line(line);
        const std::string ctx = "pulse CSV line " + std::to_string(lineno);
        if (f.size() != 5) throw ParseError(ctx + ": expected 5 fields, got " + std::to_string(f.size()));
        PulseRecord r;
        r.repetition = static_cast<int>(detail::parse_int(detail::trim(f[0]), ctx + " repetition"));
        r.pulse_index = static_cast<int>(detail::parse_int(detail::trim(f[1]), ctx + " pulse_index"));
        const std::string dir = detail::trim(f[2]);
        if (dir == "P") {
            r.direction = PulseDirection::kProgram;
        } else if (dir == "E") {
            r.direction = PulseDirection::kErase;
        } else {
            throw ParseError(ctx + ": direction must be P or E, got '" + dir + "'");
        }
        r.g_measured = detail::parse_double(detail::trim(f[3]), ctx + " conductance_S");
        r.v_g_read = detail::parse_double(detail::trim(f[4]), ctx + " v_g_read");
        if (!(r.g_measured > 0.0) || !std::isfinite(r.g_measured)) {
            throw ParseError(ctx + ": conductance must be positive");
        }
        out.push_back(r);
    }
    return out;
}

inline std::vector<PulseRecord> read_pulse_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open pulse CSV '" + path + "'");
    return read_pulse_csv(in);
}

struct SweepSpec {
    int repetitions = 50;
    int pulses_per_direction = 100;
    double v_g_read = 1.4;
};

/// Synthetic characterization sweep: each repetition applies a run of full
/// erase pulses then a run of full program pulses, starting from g_min and
/// carrying state across repetitions. Conductance is recorded after every pulse.
inline std::vector<PulseRecord> generate_pulse_sweep(const DeviceModelParams& p, const SweepSpec& spec,
                                                     Rng& rng) {
    p.validate();
    std::vector<PulseRecord> out;
    out.reserve(static_cast<std::size_t>(spec.repetitions) * spec.pulses_per_direction * 2);
    DeviceState s{p.g_min};
    for (int rep = 0; rep < spec.repetitions; ++rep) {
        for (auto dir : {PulseDirection::kErase, PulseDirection::kProgram}) {
            for (int k = 0; k < spec.pulses_per_direction; ++k) {
                s = apply_pulse(s, dir, 1.0, p, rng);
                out.push_back({rep, k, dir, s.g, spec.v_g_read});
            }
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Fitting.

enum class FitMode { kSymmetric, kAsymmetric, kAuto };

struct FitReport {
    FitMode chosen = FitMode::kSymmetric;
    std::size_t erase_runs = 0;
    std::size_t program_runs = 0;
    std::size_t pairs_used = 0;
    double step_sym = 0.0;
    double step_asym = 0.0;
    double residual_rms_sym = 0.0;   // siemens
    double residual_rms_asym = 0.0;  // siemens
    double noise_sym = 0.0;
    double noise_asym = 0.0;
};

struct DeviceFit {
    DeviceModelParams params;
    FitReport report;
};

namespace detail {
struct PulsePair {
    double g_prev;
    double g_next;
    double sign;  // +1 erase, -1 program
};

inline double relative_noise(const std::vector<PulsePair>& pairs, auto&& model_delta) {
    double sum = 0.0;
    double sum_sq = 0.0;
    std::size_t n = 0;
    for (const auto& pp : pairs) {
        const double m = model_delta(pp);
        if (std::abs(m) < 1e-300) continue;
        const double r = (pp.g_next - pp.g_prev) / m - 1.0;
        sum += r;
        sum_sq += r * r;
        ++n;
    }
    if (n < 2) return 0.0;
    const double mean = sum / static_cast<double>(n);
    return std::sqrt(std::max(0.0, (sum_sq - n * mean * mean) / static_cast<double>(n - 1)));
}
}  // namespace detail

/// Recovers device parameters from measured pulse trains.
///
/// Records are grouped into runs by (repetition, direction) and ordered by
/// pulse_index; consecutive readings inside a run form (before, after) pairs.
/// Pairs that end on an observed rail are dropped because the clamp hides the
/// true step. The symmetric step is the least-squares constant of the signed
/// log-conductance change; the asymmetric step and its rails come from a joint
/// linear fit of the change against conductance. Write noise is the
/// spread of the per-pulse ratio (observed / modelled change).
inline DeviceFit fit_device_model(const std::vector<PulseRecord>& records, FitMode mode_hint) {
    constexpr std::size_t kMinRunLength = 10;

    std::map<std::pair<int, int>, std::vector<std::pair<int, double>>> runs;
    for (const auto& r : records) {
        if (!(r.g_measured > 0.0) || !std::isfinite(r.g_measured)) {
            throw DomainError("fit_device_model: conductance must be positive and finite");
        }
        runs[{r.repetition, r.direction == PulseDirection::kErase ? 1 : 0}].emplace_back(r.pulse_index,
                                                                                          r.g_measured);
    }

    FitReport report;
    for (auto& [key, run] : runs) {
        std::sort(run.begin(), run.end());
        for (std::size_t k = 1; k < run.size(); ++k) {
            if (run[k].first == run[k - 1].first) {
                throw DegenerateDataError("fit_device_model: duplicate pulse_index " +
                                          std::to_string(run[k].first) + " in repetition " +
                                          std::to_string(key.first));
            }
        }
        if (run.size() >= kMinRunLength) {
            (key.second == 1 ? report.erase_runs : report.program_runs) += 1;
        }
    }
    if (report.erase_runs == 0 || report.program_runs == 0) {
        throw InsufficientDataError("fit_device_model: need at least one program and one erase run of " +
                                    std::to_string(kMinRunLength) + " or more pulses");
    }

    double g_lo = records.front().g_measured;
    double g_hi = g_lo;
    for (const auto& r : records) {
        g_lo = std::min(g_lo, r.g_measured);
        g_hi = std::max(g_hi, r.g_measured);
    }
    if (!(g_hi > g_lo)) throw DegenerateDataError("fit_device_model: no conductance dynamic range");
    if (g_hi / g_lo < 2.0) {
        throw DegenerateDataError("fit_device_model: observed g_max/g_min below 2");
    }

    const double rail_eps = 1e-12 * g_hi;
    std::vector<detail::PulsePair> pairs;
    for (const auto& [key, run] : runs) {
        const double sign = key.second == 1 ? 1.0 : -1.0;
        for (std::size_t k = 1; k < run.size(); ++k) {
            const double next = run[k].second;
            if (std::abs(next - g_lo) <= rail_eps || std::abs(next - g_hi) <= rail_eps) continue;
            pairs.push_back({run[k - 1].second, next, sign});
        }
    }
    if (pairs.size() < 2) throw InsufficientDataError("fit_device_model: too few unclamped pulse pairs");
    report.pairs_used = pairs.size();

    // Symmetric: mean signed log step. Asymmetric: erase steps follow
    // a*(g_max - g) and program steps a*(g - g_min), i.e. dg = A - a*g and
    // dg = B - a*g with A = a*g_max, B = a*g_min, solved jointly by linear
    // least squares so the rails need not be reached by the sweep.
    double sum_log = 0.0;
    double m[3][3] = {};
    double rhs[3] = {};
    for (const auto& pp : pairs) {
        sum_log += pp.sign * std::log(pp.g_next / pp.g_prev);
        const double row[3] = {-pp.g_prev / g_hi, pp.sign > 0 ? 1.0 : 0.0, pp.sign > 0 ? 0.0 : 1.0};
        const double dg = (pp.g_next - pp.g_prev) / g_hi;
        for (int r = 0; r < 3; ++r) {
            rhs[r] += row[r] * dg;
            for (int c = 0; c < 3; ++c) m[r][c] += row[r] * row[c];
        }
    }
    const auto det3 = [](const double (&q)[3][3]) {
        return q[0][0] * (q[1][1] * q[2][2] - q[1][2] * q[2][1]) - q[0][1] * (q[1][0] * q[2][2] - q[1][2] * q[2][0]) +
               q[0][2] * (q[1][0] * q[2][1] - q[1][1] * q[2][0]);
    };
    const double det = det3(m);
    double sol[3] = {};
    if (std::abs(det) > 0.0) {
        for (int k = 0; k < 3; ++k) {
            double q[3][3];
            for (int r = 0; r < 3; ++r)
                for (int c = 0; c < 3; ++c) q[r][c] = c == k ? rhs[r] : m[r][c];
            sol[k] = det3(q) / det;
        }
    }
    const double s = sum_log / static_cast<double>(pairs.size());
    const double a = sol[0];
    const bool sym_ok = s > 0.0;
    const bool asym_ok = a > 0.0;
    if (!sym_ok && !asym_ok) {
        throw DegenerateDataError("fit_device_model: pulses do not move conductance in the pulse direction");
    }
    // Rails implied by the asymmetric fit; fall back to the observed extremes
    // when they are not physical.
    double a_hi = asym_ok ? sol[1] / a * g_hi : g_hi;
    double a_lo = asym_ok ? sol[2] / a * g_hi : g_lo;
    if (!(a_lo > 0.0) || !(a_hi > a_lo) || a_lo > g_lo || a_hi < g_hi) {
        a_lo = g_lo;
        a_hi = g_hi;
    }
    report.step_sym = s;
    report.step_asym = a;

    const auto sym_model = [&](const detail::PulsePair& pp) { return pp.g_prev * std::expm1(pp.sign * s); };
    const auto asym_model = [&](const detail::PulsePair& pp) {
        return pp.sign > 0 ? a * (a_hi - pp.g_prev) : -a * (pp.g_prev - a_lo);
    };
    double ss_sym = 0.0;
    double ss_asym = 0.0;
    for (const auto& pp : pairs) {
        const double obs = pp.g_next - pp.g_prev;
        ss_sym += std::pow(obs - sym_model(pp), 2);
        ss_asym += std::pow(obs - asym_model(pp), 2);
    }
    const double inf = std::numeric_limits<double>::infinity();
    report.residual_rms_sym = sym_ok ? std::sqrt(ss_sym / static_cast<double>(pairs.size())) : inf;
    report.residual_rms_asym = asym_ok ? std::sqrt(ss_asym / static_cast<double>(pairs.size())) : inf;
    report.noise_sym = sym_ok ? detail::relative_noise(pairs, sym_model) : 0.0;
    report.noise_asym = asym_ok ? detail::relative_noise(pairs, asym_model) : 0.0;

    if (mode_hint == FitMode::kAuto) {
        report.chosen = report.residual_rms_sym <= report.residual_rms_asym ? FitMode::kSymmetric
                                                                            : FitMode::kAsymmetric;
    } else {
        report.chosen = mode_hint;
        if ((mode_hint == FitMode::kSymmetric && !sym_ok) || (mode_hint == FitMode::kAsymmetric && !asym_ok)) {
            throw DegenerateDataError(std::string("fit_device_model: data cannot be fitted by the ") +
                                      (mode_hint == FitMode::kSymmetric ? "symmetric" : "asymmetric") + " model");
        }
    }

    DeviceModelParams params;
    const bool sym = report.chosen == FitMode::kSymmetric;
    params.g_min = sym ? g_lo : a_lo;
    params.g_max = sym ? g_hi : a_hi;
    // an inapplicable model's step keeps its default
    if (sym_ok) params.step_sym = s;
    if (asym_ok) params.step_asym = a;
    params.asymmetry = sym ? 0.0 : 1.0;
    params.write_noise_frac = sym ? report.noise_sym : report.noise_asym;
    params.validate();
    return {params, report};
}

inline const char* to_string(FitMode m) {
    switch (m) {
        case FitMode::kSymmetric: return "symmetric";
        case FitMode::kAsymmetric: return "asymmetric";
        case FitMode::kAuto: return "auto";
    }
    return "?";
}

}  // namespace sonos

#endif  // SONOS_DEVICE_MODEL_HPP
