#ifndef SONOS_CONFIG_HPP
#define SONOS_CONFIG_HPP

// JSON experiment configs and JSON export of parameters and reports.
// Every object is read strictly: unknown keys and wrong types are errors
// that name the offending field by its dotted path.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "sonos/arch_cost.hpp"
#include "sonos/dataset.hpp"
#include "sonos/device_model.hpp"
#include "sonos/errors.hpp"
#include "sonos/trainer.hpp"
#include "sonos/weight_mapping.hpp"

namespace sonos {

using nlohmann::json;

inline constexpr const char* kOutputDirEnv = "SONOS_OUTPUT_DIR";

/// $SONOS_OUTPUT_DIR if set and non-empty, else "sonos_out".
inline std::string default_output_dir() {
    const char* env = std::getenv(kOutputDirEnv);
    return env && *env ? std::string(env) : std::string("sonos_out");
}

namespace detail {

/// Reads the fields of one JSON object, remembering which keys were used.
class ObjectReader {
public:
    ObjectReader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) throw ConfigError(where() + ": expected a JSON object");
    }

    std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

    bool has(const std::string& key) const { return j_.contains(key); }

    const json* raw(const std::string& key) {
        seen_.insert(key);
        auto it = j_.find(key);
        return it == j_.end() ? nullptr : &*it;
    }

    void number(const std::string& key, double& out) {
        if (const json* v = raw(key)) {
            if (!v->is_number()) throw ConfigError(field(key) + ": expected a number");
            out = v->get<double>();
        }
    }

    template <class Int>
    void integer(const std::string& key, Int& out) {
        if (const json* v = raw(key)) {
            if (!v->is_number_integer()) throw ConfigError(field(key) + ": expected an integer");
            if constexpr (std::is_unsigned_v<Int>) {
                if (v->get<long long>() < 0 && !v->is_number_unsigned()) {
                    throw ConfigError(field(key) + ": must be non-negative");
                }
            }
            out = v->get<Int>();
        }
    }

    void boolean(const std::string& key, bool& out) {
        if (const json* v = raw(key)) {
            if (!v->is_boolean()) throw ConfigError(field(key) + ": expected true or false");
            out = v->get<bool>();
        }
    }

    void string(const std::string& key, std::string& out) {
        if (const json* v = raw(key)) {
            if (!v->is_string()) throw ConfigError(field(key) + ": expected a string");
            out = v->get<std::string>();
        }
    }

    /// Rejects keys that were never asked for.
    void finish() const {
        for (auto it = j_.begin(); it != j_.end(); ++it) {
            if (!seen_.count(it.key())) throw ConfigError(field(it.key()) + ": unknown key");
        }
    }

private:
    std::string where() const { return path_.empty() ? "config" : path_; }

    const json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

template <class E>
E parse_enum(const std::string& value, const std::string& field,
             std::initializer_list<std::pair<const char*, E>> options) {
    std::string names;
    for (const auto& [name, e] : options) {
        if (value == name) return e;
        names += names.empty() ? "" : ", ";
        names += name;
    }
    throw ConfigError(field + ": unknown value '" + value + "' (expected one of: " + names + ")");
}

/// Re-throws library validation errors with the section path attached.
template <class F>
void validated(const std::string& path, F&& f) {
    try {
        f();
    } catch (const DomainError& e) {
        throw ConfigError(path + ": " + e.what());
    }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Readers

inline PulseMetadata pulse_metadata_from_json(const json& j, const std::string& path) {
    detail::ObjectReader r(j, path);
    PulseMetadata m;
    r.number("v_program", m.v_program);
    r.number("v_erase", m.v_erase);
    r.number("pulse_width_s", m.pulse_width_s);
    r.number("v_inhibit_program", m.v_inhibit_program);
    r.number("v_inhibit_erase", m.v_inhibit_erase);
    r.finish();
    return m;
}

/// Device parameters. "read_voltage" selects the asymmetry from the preset
/// table and may not be combined with an explicit "asymmetry".
inline DeviceModelParams device_params_from_json(const json& j, const std::string& path,
                                                 DeviceModelParams p = {}) {
    detail::ObjectReader r(j, path);
    r.number("g_min", p.g_min);
    r.number("g_max", p.g_max);
    r.number("step_sym", p.step_sym);
    r.number("step_asym", p.step_asym);
    r.number("asymmetry", p.asymmetry);
    r.number("write_noise_frac", p.write_noise_frac);
    if (const json* presets = r.raw("read_voltage_presets")) {
        if (!presets->is_array()) throw ConfigError(r.field("read_voltage_presets") + ": expected an array");
        p.read_voltage_presets.clear();
        for (std::size_t k = 0; k < presets->size(); ++k) {
            detail::ObjectReader pr((*presets)[k], r.field("read_voltage_presets") + "[" + std::to_string(k) + "]");
            ReadVoltagePreset rv{0.0, 0.0};
            if (!pr.has("volts") || !pr.has("asymmetry")) {
                throw ConfigError(pr.field("volts") + ": preset needs 'volts' and 'asymmetry'");
            }
            pr.number("volts", rv.volts);
            pr.number("asymmetry", rv.asymmetry);
            pr.finish();
            p.read_voltage_presets.push_back(rv);
        }
    }
    if (const json* pm = r.raw("pulse")) p.pulse_metadata = pulse_metadata_from_json(*pm, r.field("pulse"));
    if (r.has("read_voltage")) {
        if (r.has("asymmetry")) throw ConfigError(r.field("read_voltage") + ": cannot be combined with asymmetry");
        double v = 0.0;
        r.number("read_voltage", v);
        detail::validated(r.field("read_voltage"), [&] { p.asymmetry = p.asymmetry_for(v); });
    }
    r.finish();
    detail::validated(path, [&] { p.validate(); });
    return p;
}

inline ConverterSpec converter_from_json(const json& j, const std::string& path, ConverterSpec s) {
    detail::ObjectReader r(j, path);
    r.number("min", s.min);
    r.number("max", s.max);
    r.integer("bits", s.bits);
    r.finish();
    detail::validated(path, [&] { s.validate(); });
    return s;
}

inline ConverterBank converters_from_json(const json& j, const std::string& path) {
    detail::ObjectReader r(j, path);
    ConverterBank b;
    const auto one = [&](const char* key, ConverterSpec& s) {
        if (const json* v = r.raw(key)) s = converter_from_json(*v, r.field(key), s);
    };
    one("row_input", b.row_input);
    one("col_output", b.col_output);
    one("col_input", b.col_input);
    one("row_output", b.row_output);
    one("row_update", b.row_update);
    one("col_update", b.col_update);
    r.finish();
    return b;
}

inline KernelFlags flags_from_json(const json& j, const std::string& path) {
    detail::ObjectReader r(j, path);
    KernelFlags f;
    r.boolean("quantization", f.quantization_enabled);
    r.boolean("noise", f.noise_enabled);
    r.finish();
    return f;
}

inline DifferentialRouting routing_from_string(const std::string& s, const std::string& field) {
    return detail::parse_enum<DifferentialRouting>(
        s, field, {{"split_pair", DifferentialRouting::kSplitPair}, {"single_erase", DifferentialRouting::kSingleErase}});
}

inline WeightScheme scheme_from_json(const json& j, const std::string& path) {
    detail::ObjectReader r(j, path);
    std::string type;
    if (!r.has("type")) throw ConfigError(r.field("type") + ": missing scheme type");
    r.string("type", type);
    std::string routing;
    WeightScheme out;
    if (type == "one_device") {
        OneDeviceRef s;
        if (r.has("g_ref")) {
            double g = 0.0;
            r.number("g_ref", g);
            s.g_ref = g;
        }
        out = s;
    } else if (type == "differential") {
        DifferentialPair s;
        r.string("routing", routing);
        if (!routing.empty()) s.routing = routing_from_string(routing, r.field("routing"));
        out = s;
    } else if (type == "periodic_carry") {
        PeriodicCarry s;
        r.integer("digits", s.digits);
        r.integer("base", s.base);
        r.number("headroom_frac", s.headroom_frac);
        r.integer("carry_interval", s.carry_interval);
        std::string digit_scheme;
        r.string("digit_scheme", digit_scheme);
        if (!digit_scheme.empty()) {
            s.digit_scheme = detail::parse_enum<DigitScheme>(
                digit_scheme, r.field("digit_scheme"),
                {{"one_device", DigitScheme::kOneDeviceRef}, {"differential", DigitScheme::kDifferentialPair}});
        }
        r.string("routing", routing);
        if (!routing.empty()) s.routing = routing_from_string(routing, r.field("routing"));
        r.number("carry_tolerance", s.carry_tolerance);
        r.integer("carry_max_pulses", s.carry_max_pulses);
        if (s.digits != 2) throw ConfigError(r.field("digits") + ": only 2 digits are supported");
        if (s.base < 2) throw ConfigError(r.field("base") + ": must be at least 2");
        if (!(s.headroom_frac > 0.0 && s.headroom_frac < 1.0)) {
            throw ConfigError(r.field("headroom_frac") + ": must be in (0, 1)");
        }
        if (s.carry_interval < 1) throw ConfigError(r.field("carry_interval") + ": must be at least 1");
        if (!(s.carry_tolerance > 0.0)) throw ConfigError(r.field("carry_tolerance") + ": must be positive");
        if (s.carry_max_pulses < 1) throw ConfigError(r.field("carry_max_pulses") + ": must be at least 1");
        out = s;
    } else {
        throw ConfigError(r.field("type") + ": unknown scheme '" + type +
                          "' (expected one_device, differential or periodic_carry)");
    }
    r.finish();
    return out;
}

inline CostParams cost_params_from_json(const json& j, const std::string& path) {
    detail::ObjectReader r(j, path);
    CostParams p;
    r.integer("array_rows", p.array_rows);
    r.integer("array_cols", p.array_cols);
    r.number("cell_capacitance_F", p.cell_capacitance_F);
    r.number("access_capacitance_F", p.access_capacitance_F);
    r.number("cell_area_um2", p.cell_area_um2);
    r.number("access_area_um2", p.access_area_um2);
    r.number("hv_transistor_area_um2", p.hv_transistor_area_um2);
    r.number("hv_transistor_capacitance_F", p.hv_transistor_capacitance_F);
    r.number("hv_transistors_per_line", p.hv_transistors_per_line);
    r.number("r_on_ohm", p.r_on_ohm);
    r.number("v_program", p.v_program);
    r.number("v_erase", p.v_erase);
    r.number("v_inhibit_delta", p.v_inhibit_delta);
    r.number("pulse_width_s", p.pulse_width_s);
    r.number("v_drain", p.v_drain);
    if (const json* profiles = r.raw("profiles")) {
        const std::string f = r.field("profiles");
        if (!profiles->is_array() || profiles->size() != 3) {
            throw ConfigError(f + ": expected an array of three profiles (8, 4, 2 bit)");
        }
        for (std::size_t k = 0; k < 3; ++k) {
            detail::ObjectReader pr((*profiles)[k], f + "[" + std::to_string(k) + "]");
            auto& prof = p.profiles[k];
            pr.integer("bits", prof.bits);
            pr.number("converter_energy_pj", prof.converter_energy_pj);
            pr.number("converter_latency_us", prof.converter_latency_us);
            pr.number("update_line_activity", prof.update_line_activity);
            pr.number("periphery_area_um2", prof.periphery_area_um2);
            pr.finish();
        }
    }
    r.finish();
    detail::validated(path.empty() ? "cost params" : path, [&] { p.validate(); });
    return p;
}

// ---------------------------------------------------------------------------
// Experiment config

struct DatasetConfig {
    std::string kind = "mnist";  // mnist | surrogate
    std::string mnist_dir = "data/mnist";
    /// Use only the first N examples of each split (0 = all).
    std::size_t train_limit = 0;
    std::size_t test_limit = 0;
    SurrogateSpec surrogate{};
};

struct ExperimentConfig {
    std::uint64_t seed = 1;
    std::string output_dir = default_output_dir();
    /// Worker threads for sweep and ladder subcommands.
    int threads = 1;
    DatasetConfig dataset{};
    NetworkConfig network{};
    std::vector<double> sweep_read_voltages{1.4, 1.8, 2.2, 2.6};
    std::vector<WeightScheme> ladder_schemes{OneDeviceRef{}, DifferentialPair{}, PeriodicCarry{}};
    CostParams cost{};
};

inline DatasetConfig dataset_from_json(const json& j, const std::string& path) {
    detail::ObjectReader r(j, path);
    DatasetConfig d;
    r.string("kind", d.kind);
    if (d.kind != "mnist" && d.kind != "surrogate") {
        throw ConfigError(r.field("kind") + ": unknown dataset '" + d.kind + "' (expected mnist or surrogate)");
    }
    r.string("mnist_dir", d.mnist_dir);
    r.integer("train_limit", d.train_limit);
    r.integer("test_limit", d.test_limit);
    if (const json* s = r.raw("surrogate")) {
        detail::ObjectReader sr(*s, r.field("surrogate"));
        sr.integer("train", d.surrogate.train);
        sr.integer("test", d.surrogate.test);
        sr.integer("dims", d.surrogate.dims);
        sr.integer("classes", d.surrogate.classes);
        sr.number("spread", d.surrogate.spread);
        sr.finish();
        if (d.surrogate.classes < 2) throw ConfigError(sr.field("classes") + ": need at least 2 classes");
        if (d.surrogate.dims == 0) throw ConfigError(sr.field("dims") + ": must be positive");
        if (!(d.surrogate.spread >= 0.0)) throw ConfigError(sr.field("spread") + ": must be non-negative");
    }
    r.finish();
    return d;
}

/// Parses an experiment config. The backend is assembled from the
/// "network", "device", "converters", "flags" and "scheme" sections.
inline ExperimentConfig experiment_from_json(const json& j) {
    detail::ObjectReader r(j, "");
    ExperimentConfig c;
    r.integer("seed", c.seed);
    r.string("output_dir", c.output_dir);
    r.integer("threads", c.threads);
    if (c.threads < 1) throw ConfigError("threads: must be at least 1");
    if (const json* d = r.raw("dataset")) c.dataset = dataset_from_json(*d, "dataset");

    std::string backend = "float";
    bool float_quantization = false;
    if (const json* n = r.raw("network")) {
        detail::ObjectReader nr(*n, "network");
        if (const json* ls = nr.raw("layer_sizes")) {
            if (!ls->is_array() || ls->size() != 3) {
                throw ConfigError("network.layer_sizes: expected three layer sizes (input, hidden, output)");
            }
            for (std::size_t k = 0; k < 3; ++k) {
                if (!(*ls)[k].is_number_unsigned() || (*ls)[k].get<std::size_t>() == 0) {
                    throw ConfigError("network.layer_sizes[" + std::to_string(k) + "]: expected a positive integer");
                }
                c.network.layer_sizes[k] = (*ls)[k].get<std::size_t>();
            }
        }
        nr.integer("epochs", c.network.epochs);
        nr.number("learning_rate", c.network.learning_rate);
        nr.number("init_range", c.network.init_range);
        nr.string("backend", backend);
        nr.boolean("quantization", float_quantization);
        nr.finish();
    }

    AnalogBackend analog;
    ConverterBank converters;
    if (const json* d = r.raw("device")) analog.device = device_params_from_json(*d, "device");
    if (const json* cv = r.raw("converters")) converters = converters_from_json(*cv, "converters");
    analog.converters = converters;
    if (const json* f = r.raw("flags")) analog.flags = flags_from_json(*f, "flags");
    if (const json* s = r.raw("scheme")) analog.scheme = scheme_from_json(*s, "scheme");
    std::string update_mode;
    r.string("update_mode", update_mode);
    if (!update_mode.empty()) {
        analog.update_mode = detail::parse_enum<UpdateMode>(
            update_mode, "update_mode", {{"open_loop", UpdateMode::kOpenLoop}, {"closed_loop", UpdateMode::kClosedLoop}});
    }
    r.number("init_tolerance", analog.init_tolerance);

    if (backend == "float") {
        if (r.has("flags") || r.has("scheme") || r.has("update_mode")) {
            throw ConfigError("network.backend: 'flags', 'scheme' and 'update_mode' need the analog backend");
        }
        c.network.backend = FloatBackend{float_quantization, converters};
    } else if (backend == "analog") {
        if (float_quantization) {
            throw ConfigError("network.quantization: only for the float backend; use flags.quantization");
        }
        c.network.backend = analog;
    } else {
        throw ConfigError("network.backend: unknown backend '" + backend + "' (expected float or analog)");
    }

    if (const json* s = r.raw("sweep")) {
        detail::ObjectReader sr(*s, "sweep");
        if (const json* v = sr.raw("read_voltages")) {
            if (!v->is_array() || v->empty()) throw ConfigError("sweep.read_voltages: expected a non-empty array");
            c.sweep_read_voltages.clear();
            for (const auto& x : *v) {
                if (!x.is_number()) throw ConfigError("sweep.read_voltages: expected numbers");
                c.sweep_read_voltages.push_back(x.get<double>());
            }
        }
        sr.finish();
    }
    if (const json* l = r.raw("ladder")) {
        detail::ObjectReader lr(*l, "ladder");
        if (const json* v = lr.raw("schemes")) {
            if (!v->is_array() || v->empty()) throw ConfigError("ladder.schemes: expected a non-empty array");
            c.ladder_schemes.clear();
            for (std::size_t k = 0; k < v->size(); ++k) {
                c.ladder_schemes.push_back(scheme_from_json((*v)[k], "ladder.schemes[" + std::to_string(k) + "]"));
            }
        }
        lr.finish();
    }
    if (const json* cp = r.raw("cost")) c.cost = cost_params_from_json(*cp, "cost");
    r.finish();

    c.network.seed = c.seed;
    try {
        c.network.validate();
    } catch (const ConfigError& e) {
        throw ConfigError(std::string("network: ") + e.what());
    } catch (const DomainError& e) {
        throw ConfigError(std::string("network: ") + e.what());
    }
    return c;
}

inline json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open '" + path + "'");
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError(path + ": malformed JSON: " + e.what());
    }
}

inline ExperimentConfig load_experiment(const std::string& path) {
    try {
        return experiment_from_json(read_json_file(path));
    } catch (const ConfigError& e) {
        const std::string msg = e.what();
        if (msg.rfind(path, 0) == 0) throw;
        throw ConfigError(path + ": " + msg);
    }
}

inline Dataset load_dataset(const DatasetConfig& d, std::uint64_t seed) {
    Dataset data;
    if (d.kind == "mnist") {
        const auto paths = MnistPaths::in_directory(d.mnist_dir);
        for (const auto& f : {paths.train_images, paths.train_labels, paths.test_images, paths.test_labels}) {
            if (!std::filesystem::exists(f)) throw ConfigError("dataset.mnist_dir: missing file '" + f + "'");
        }
        data = load_mnist(paths);
    } else {
        data = gen_filetypes_surrogate(seed, d.surrogate);
    }
    data.train = data.train.head(d.train_limit);
    data.test = data.test.head(d.test_limit);
    return data;
}

// ---------------------------------------------------------------------------
// Writers

inline json to_json(const DeviceModelParams& p) {
    json presets = json::array();
    for (const auto& rv : p.read_voltage_presets) presets.push_back({{"volts", rv.volts}, {"asymmetry", rv.asymmetry}});
    const auto& m = p.pulse_metadata;
    return {{"g_min", p.g_min},
            {"g_max", p.g_max},
            {"step_sym", p.step_sym},
            {"step_asym", p.step_asym},
            {"asymmetry", p.asymmetry},
            {"write_noise_frac", p.write_noise_frac},
            {"read_voltage_presets", presets},
            {"pulse",
             {{"v_program", m.v_program},
              {"v_erase", m.v_erase},
              {"pulse_width_s", m.pulse_width_s},
              {"v_inhibit_program", m.v_inhibit_program},
              {"v_inhibit_erase", m.v_inhibit_erase}}}};
}

inline json to_json(const FitReport& r) {
    return {{"chosen", to_string(r.chosen)},
            {"erase_runs", r.erase_runs},
            {"program_runs", r.program_runs},
            {"pairs_used", r.pairs_used},
            {"step_sym", r.step_sym},
            {"step_asym", r.step_asym},
            {"residual_rms_sym_S", r.residual_rms_sym},
            {"residual_rms_asym_S", r.residual_rms_asym},
            {"noise_sym", r.noise_sym},
            {"noise_asym", r.noise_asym}};
}

inline json to_json(const CostParams& p) {
    json profiles = json::array();
    for (const auto& prof : p.profiles) {
        profiles.push_back({{"bits", prof.bits},
                            {"converter_energy_pj", prof.converter_energy_pj},
                            {"converter_latency_us", prof.converter_latency_us},
                            {"update_line_activity", prof.update_line_activity},
                            {"periphery_area_um2", prof.periphery_area_um2}});
    }
    return {{"array_rows", p.array_rows},
            {"array_cols", p.array_cols},
            {"cell_capacitance_F", p.cell_capacitance_F},
            {"access_capacitance_F", p.access_capacitance_F},
            {"cell_area_um2", p.cell_area_um2},
            {"access_area_um2", p.access_area_um2},
            {"hv_transistor_area_um2", p.hv_transistor_area_um2},
            {"hv_transistor_capacitance_F", p.hv_transistor_capacitance_F},
            {"hv_transistors_per_line", p.hv_transistors_per_line},
            {"r_on_ohm", p.r_on_ohm},
            {"v_program", p.v_program},
            {"v_erase", p.v_erase},
            {"v_inhibit_delta", p.v_inhibit_delta},
            {"pulse_width_s", p.pulse_width_s},
            {"v_drain", p.v_drain},
            {"profiles", profiles}};
}

inline json to_json(const CostReport& r) {
    json energy = json::object();
    json latency = json::object();
    for (std::size_t k = 0; k < 4; ++k) {
        energy[kKernelNames[k]] = r.energy_nj[k];
        latency[kKernelNames[k]] = r.latency_us[k];
    }
    return {{"bits", r.bits},
            {"energy_nj", energy},
            {"latency_us", latency},
            {"area_um2", r.area_um2},
            {"components",
             {{"cv2_energy_nj", r.cv2_energy_nj},
              {"device_current_energy_nj", r.device_current_energy_nj},
              {"update_converter_energy_nj", r.update_converter_energy_nj},
              {"read_converter_energy_nj", r.read_converter_energy_nj},
              {"array_read_energy_nj", r.array_read_energy_nj},
              {"cell_area_um2", r.cell_area_um2},
              {"access_area_um2", r.access_area_um2},
              {"hv_area_um2", r.hv_area_um2},
              {"periphery_area_um2", r.periphery_area_um2}}},
            {"fractions",
             {{"cv2_share_of_write_energy", r.cv2_share_of_write_energy},
              {"write_share_of_latency", r.write_share_of_latency},
              {"cell_access_share_of_area", r.cell_access_share_of_area}}}};
}

inline json to_json(const DeviationSummary& s) {
    json entries = json::array();
    for (const auto& d : s.entries) {
        entries.push_back({{"metric", d.metric},
                           {"kernel", d.kernel},
                           {"estimate", d.estimate},
                           {"golden", d.golden},
                           {"ratio", d.ratio},
                           {"flagged", d.flagged}});
    }
    return {{"bits", s.bits}, {"factor", s.factor}, {"all_within", s.all_within()}, {"entries", entries}};
}

inline constexpr const char* kCostCsvHeader = "bits,metric,kernel,estimate,golden,ratio,flagged";

inline void write_deviation_csv(std::ostream& os, const std::vector<DeviationSummary>& summaries) {
    os << kCostCsvHeader << '\n';
    char buf[256];
    for (const auto& s : summaries) {
        for (const auto& d : s.entries) {
            std::snprintf(buf, sizeof buf, "%d,%s,%s,%.17g,%.17g,%.17g,%d\n", s.bits, d.metric.c_str(),
                          d.kernel.c_str(), d.estimate, d.golden, d.ratio, d.flagged ? 1 : 0);
            os << buf;
        }
    }
}

}  // namespace sonos

#endif  // SONOS_CONFIG_HPP
