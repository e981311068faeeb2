#ifndef SONOS_ARCH_COST_HPP
#define SONOS_ARCH_COST_HPP

// Energy, latency and area of a 1024x1024 SONOS training core.
//
// Reference SRAM / ReRAM / SONOS figures for one training core are embedded as golden data.
// The estimator is semi-empirical: array, wire and high-voltage driver costs
// follow from cell parameters, while converter costs and the update line
// activity per precision are calibration constants frozen in the defaults.

#include <array>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "sonos/errors.hpp"

namespace sonos {

enum class Kernel : std::size_t { kVmm = 0, kMvm = 1, kOpu = 2, kTotal = 3 };
enum class Technology : std::size_t { kSram = 0, kReram = 1, kSonos = 2 };

inline constexpr std::array<int, 3> kPrecisions{8, 4, 2};
inline constexpr std::array<const char*, 4> kKernelNames{"VMM", "MVM", "OPU", "Total"};
inline constexpr std::array<const char*, 3> kTechnologyNames{"SRAM", "ReRAM", "SONOS"};

inline std::size_t precision_index(int bits) {
    for (std::size_t k = 0; k < kPrecisions.size(); ++k) {
        if (kPrecisions[k] == bits) return k;
    }
    throw DomainError("precision must be 8, 4 or 2 bits, got " + std::to_string(bits));
}

// ---------------------------------------------------------------------------
// Golden data

struct GoldenTables {
    using PerPrecision = std::array<double, 3>;  // 8, 4, 2 bit
    using PerKernel = std::array<PerPrecision, 4>;

    std::array<PerPrecision, 3> area_um2;
    std::array<PerKernel, 3> energy_nj;
    std::array<PerKernel, 3> latency_us;

    double area(Technology t, int bits) const { return area_um2[idx(t)][precision_index(bits)]; }
    double energy(Technology t, Kernel k, int bits) const {
        return energy_nj[idx(t)][static_cast<std::size_t>(k)][precision_index(bits)];
    }
    double latency(Technology t, Kernel k, int bits) const {
        return latency_us[idx(t)][static_cast<std::size_t>(k)][precision_index(bits)];
    }

private:
    static std::size_t idx(Technology t) { return static_cast<std::size_t>(t); }
};

inline const GoldenTables& golden_tables() {
    static const GoldenTables g{
        // area, um^2
        {{{836000, 814000, 800000}, {75000, 46000, 41000}, {195000, 166000, 161000}}},
        // energy, nJ: VMM, MVM, OPU, Total
        {{
            {{{2850, 2237, 1848}, {4855, 4241, 3852}, {4300, 3673, 3274}, {12000, 10150, 8974}}},
            {{{12.8, 1.00, 0.44}, {12.8, 1.00, 0.44}, {2.2, 1.00, 0.46}, {27.9, 2.66, 1.35}}},
            {{{14.4, 2.25, 1.5}, {14.4, 2.25, 1.5}, {71.5, 30.9, 10.6}, {100, 35.4, 13.6}}},
        }},
        // latency, us
        {{
            {{{4, 4, 4}, {32, 32, 32}, {8, 8, 8}, {44, 44, 44}}},
            {{{0.384, 0.024, 0.011}, {0.384, 0.024, 0.011}, {0.512, 0.032, 0.032}, {1.28, 0.080, 0.054}}},
            {{{0.402, 0.032, 0.014}, {0.402, 0.032, 0.014}, {20, 20, 20}, {20.80, 20.06, 20.02}}},
        }},
    };
    return g;
}

struct GoldenRatios {
    double energy_ratio = 0.0;
    double latency_ratio = 0.0;
    double area_ratio = 0.0;
};

/// SRAM over SONOS for total energy, total latency and area.
inline GoldenRatios golden_ratios(const GoldenTables& t, int bits) {
    return {t.energy(Technology::kSram, Kernel::kTotal, bits) / t.energy(Technology::kSonos, Kernel::kTotal, bits),
            t.latency(Technology::kSram, Kernel::kTotal, bits) / t.latency(Technology::kSonos, Kernel::kTotal, bits),
            t.area(Technology::kSram, bits) / t.area(Technology::kSonos, bits)};
}

// ---------------------------------------------------------------------------
// Estimator

/// Calibration constants for one converter precision.
struct PrecisionProfile {
    int bits = 8;
    double converter_energy_pj = 0.0;   // per converted sample
    double converter_latency_us = 0.0;  // one read pass, converter bound
    double update_line_activity = 1.0;  // fraction of lines charged per write phase
    double periphery_area_um2 = 0.0;    // converters, digital, buffers
};

struct CostParams {
    std::size_t array_rows = 1024;
    std::size_t array_cols = 1024;
    double cell_capacitance_F = 100e-18;
    double access_capacitance_F = 100e-18;
    double cell_area_um2 = 0.053;
    double access_area_um2 = 0.053;
    double hv_transistor_area_um2 = 1.44;
    double hv_transistor_capacitance_F = 7.44e-15;
    double hv_transistors_per_line = 6.0;
    double r_on_ohm = 100e6;
    double v_program = 10.0;
    double v_erase = 11.0;
    double v_inhibit_delta = 3.0;
    double pulse_width_s = 10e-6;
    /// Drain bias while reading or writing; sets the (tiny) channel current.
    double v_drain = 0.1;
    std::array<PrecisionProfile, 3> profiles{{
        {8, 7.0, 0.402, 1.00, 66156.0},
        {4, 1.1, 0.032, 0.53, 37156.0},
        {2, 0.73, 0.014, 0.17, 32156.0},
    }};

    const PrecisionProfile& profile(int bits) const { return profiles[precision_index(bits)]; }

    /// Physical quantities must be positive; calibration constants
    /// (converter energy/latency, activity, periphery area) non-negative.
    void validate() const {
        const auto pos = [](double v, const char* name) {
            if (!(v > 0.0) || !std::isfinite(v)) throw DomainError(std::string("CostParams.") + name + " must be positive");
        };
        if (array_rows == 0 || array_cols == 0) throw DomainError("CostParams: array dimensions must be positive");
        pos(cell_capacitance_F, "cell_capacitance_F");
        pos(access_capacitance_F, "access_capacitance_F");
        pos(cell_area_um2, "cell_area_um2");
        pos(access_area_um2, "access_area_um2");
        pos(hv_transistor_area_um2, "hv_transistor_area_um2");
        pos(hv_transistor_capacitance_F, "hv_transistor_capacitance_F");
        pos(hv_transistors_per_line, "hv_transistors_per_line");
        pos(r_on_ohm, "r_on_ohm");
        pos(v_program, "v_program");
        pos(v_erase, "v_erase");
        pos(v_inhibit_delta, "v_inhibit_delta");
        pos(pulse_width_s, "pulse_width_s");
        pos(v_drain, "v_drain");
        for (std::size_t k = 0; k < profiles.size(); ++k) {
            const auto& p = profiles[k];
            if (p.bits != kPrecisions[k]) throw DomainError("CostParams: profiles must be ordered 8, 4, 2 bit");
            for (double v : {p.converter_energy_pj, p.converter_latency_us, p.update_line_activity,
                             p.periphery_area_um2}) {
                if (!(v >= 0.0) || !std::isfinite(v)) {
                    throw DomainError("CostParams: calibration constants must be non-negative");
                }
            }
            if (p.update_line_activity > 1.0) throw DomainError("CostParams: update_line_activity must be <= 1");
        }
    }
};

struct CostReport {
    int bits = 8;
    std::array<double, 4> energy_nj{};   // VMM, MVM, OPU, Total
    std::array<double, 4> latency_us{};  // VMM, MVM, OPU, Total
    double area_um2 = 0.0;

    // OPU energy components
    double cv2_energy_nj = 0.0;
    double device_current_energy_nj = 0.0;
    double update_converter_energy_nj = 0.0;
    // read energy components (per VMM or MVM)
    double read_converter_energy_nj = 0.0;
    double array_read_energy_nj = 0.0;
    // area components
    double cell_area_um2 = 0.0;
    double access_area_um2 = 0.0;
    double hv_area_um2 = 0.0;
    double periphery_area_um2 = 0.0;

    // dominance fractions
    double cv2_share_of_write_energy = 0.0;
    double write_share_of_latency = 0.0;
    double cell_access_share_of_area = 0.0;

    double energy(Kernel k) const { return energy_nj[static_cast<std::size_t>(k)]; }
    double latency(Kernel k) const { return latency_us[static_cast<std::size_t>(k)]; }
};

/// Line capacitance: every cell on the line contributes its gate and its
/// access transistor, plus one high-voltage driver drain.
inline double line_capacitance_F(const CostParams& p, std::size_t cells_on_line) {
    return static_cast<double>(cells_on_line) * (p.cell_capacitance_F + p.access_capacitance_F) +
           p.hv_transistor_capacitance_F;
}

inline CostReport estimate(const CostParams& p, int bits) {
    p.validate();
    const auto& prof = p.profile(bits);
    const double rows = static_cast<double>(p.array_rows);
    const double cols = static_cast<double>(p.array_cols);
    const double cells = rows * cols;
    constexpr double kNano = 1e9;

    CostReport r;
    r.bits = bits;

    // Read kernels: one D/A per input line, one A/D per output line, and the
    // array current integrated over the conversion window.
    const double read_latency_us = prof.converter_latency_us;
    r.read_converter_energy_nj = (rows + cols) * prof.converter_energy_pj * 1e-3;
    r.array_read_energy_nj = cells * p.v_drain * p.v_drain / p.r_on_ohm * read_latency_us * 1e-6 * kNano;
    const double read_energy = r.read_converter_energy_nj + r.array_read_energy_nj;

    // Parallel write: a program phase and an erase phase of one pulse each.
    // Gate lines swing to the write voltage, source lines to the inhibit offset.
    const double act = prof.update_line_activity;
    const double c_row = line_capacitance_F(p, p.array_cols);
    const double c_col = line_capacitance_F(p, p.array_rows);
    const double v2_gate = p.v_program * p.v_program + p.v_erase * p.v_erase;
    const double v2_source = 2.0 * p.v_inhibit_delta * p.v_inhibit_delta;
    r.cv2_energy_nj = act * (rows * c_row * v2_gate + cols * c_col * v2_source) * kNano;
    r.device_current_energy_nj =
        act * 2.0 * cells * p.v_drain * p.v_drain / p.r_on_ohm * p.pulse_width_s * kNano;
    r.update_converter_energy_nj = (rows + cols) * prof.converter_energy_pj * 1e-3;
    const double opu_energy = r.cv2_energy_nj + r.device_current_energy_nj + r.update_converter_energy_nj;
    const double opu_latency_us = 2.0 * p.pulse_width_s * 1e6;

    r.energy_nj = {read_energy, read_energy, opu_energy, 2.0 * read_energy + opu_energy};
    r.latency_us = {read_latency_us, read_latency_us, opu_latency_us, 2.0 * read_latency_us + opu_latency_us};

    r.cell_area_um2 = cells * p.cell_area_um2;
    r.access_area_um2 = cells * p.access_area_um2;
    r.hv_area_um2 = (rows + cols) * p.hv_transistors_per_line * p.hv_transistor_area_um2;
    r.periphery_area_um2 = prof.periphery_area_um2;
    r.area_um2 = r.cell_area_um2 + r.access_area_um2 + r.hv_area_um2 + r.periphery_area_um2;

    r.cv2_share_of_write_energy = opu_energy > 0.0 ? r.cv2_energy_nj / opu_energy : 0.0;
    r.write_share_of_latency = opu_latency_us / r.latency(Kernel::kTotal);
    r.cell_access_share_of_area = (r.cell_area_um2 + r.access_area_um2) / r.area_um2;
    return r;
}

/// Report holding one technology's golden entries, for regression checks.
inline CostReport report_from_golden(const GoldenTables& t, Technology tech, int bits) {
    CostReport r;
    r.bits = bits;
    for (std::size_t k = 0; k < 4; ++k) {
        r.energy_nj[k] = t.energy(tech, static_cast<Kernel>(k), bits);
        r.latency_us[k] = t.latency(tech, static_cast<Kernel>(k), bits);
    }
    r.area_um2 = t.area(tech, bits);
    return r;
}

struct Deviation {
    std::string metric;  // "energy_nj", "latency_us", "area_um2"
    std::string kernel;  // VMM, MVM, OPU, Total or "-"
    double estimate = 0.0;
    double golden = 0.0;
    double ratio = 0.0;  // estimate / golden
    bool flagged = false;
};

struct DeviationSummary {
    int bits = 8;
    double factor = 2.0;
    std::vector<Deviation> entries;

    bool all_within() const {
        for (const auto& e : entries)
            if (e.flagged) return false;
        return true;
    }
};

/// Per-entry estimate/golden ratios against the SONOS column; entries
/// outside [1/factor, factor] are flagged.
inline DeviationSummary compare(const CostReport& report, const GoldenTables& t, int bits, double factor = 2.0) {
    if (report.bits != bits) throw DomainError("compare: report precision does not match");
    if (!(factor >= 1.0)) throw DomainError("compare: factor must be >= 1");
    DeviationSummary s;
    s.bits = bits;
    s.factor = factor;
    const auto add = [&](std::string metric, std::string kernel, double est, double gold) {
        Deviation d{std::move(metric), std::move(kernel), est, gold, est / gold, false};
        d.flagged = !(d.ratio >= 1.0 / factor && d.ratio <= factor);
        s.entries.push_back(std::move(d));
    };
    for (std::size_t k = 0; k < 4; ++k) {
        add("energy_nj", kKernelNames[k], report.energy_nj[k],
            t.energy(Technology::kSonos, static_cast<Kernel>(k), bits));
    }
    for (std::size_t k = 0; k < 4; ++k) {
        add("latency_us", kKernelNames[k], report.latency_us[k],
            t.latency(Technology::kSonos, static_cast<Kernel>(k), bits));
    }
    add("area_um2", "-", report.area_um2, t.area(Technology::kSonos, bits));
    return s;
}

}  // namespace sonos

#endif  // SONOS_ARCH_COST_HPP
