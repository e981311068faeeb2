#ifndef SONOS_CLI_HPP
#define SONOS_CLI_HPP

// Batch experiment runner behind the `sonos` tool.

#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"

#include "sonos/arch_cost.hpp"
#include "sonos/config.hpp"
#include "sonos/dataset.hpp"
#include "sonos/device_model.hpp"
#include "sonos/errors.hpp"
#include "sonos/trainer.hpp"
#include "sonos/weight_mapping.hpp"

namespace sonos::cli {

inline constexpr const char* kSweepCsvHeader = "read_voltage_V,asymmetry,final_test_acc,best_test_acc";
inline constexpr const char* kLadderCsvHeader = "scheme,devices_per_weight,final_test_acc,best_test_acc,carries";
inline constexpr const char* kCarryDemoCsvHeader = "step,update,high_digit,low_digit,weight,carry";

namespace detail {

inline std::filesystem::path prepare_output_dir(const std::string& dir) {
    std::filesystem::path p(dir);
    std::error_code ec;
    std::filesystem::create_directories(p, ec);
    if (ec) throw ConfigError("output directory '" + dir + "': " + ec.message());
    return p;
}

inline std::ofstream open_output(const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot write '" + path.string() + "'");
    return out;
}

inline std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

struct RunResult {
    TrainLog log;
    std::string error;
};

/// Runs independent trainings on up to `threads` workers. Each run owns its
/// network; the dataset is shared read-only.
inline std::vector<RunResult> run_all(const std::vector<NetworkConfig>& configs, const Dataset& data, int threads,
                                      std::ostream& err) {
    std::vector<RunResult> results(configs.size());
    std::mutex log_mutex;
    std::size_t next = 0;
    const auto worker = [&] {
        for (;;) {
            std::size_t k;
            {
                std::lock_guard<std::mutex> lock(log_mutex);
                if (next >= configs.size()) return;
                k = next++;
            }
            try {
                Network net(configs[k]);
                TrainOptions opts;
                opts.on_epoch = [&, k](const EpochLog& e) {
                    std::lock_guard<std::mutex> lock(log_mutex);
                    err << "run " << k << " epoch " << e.epoch << " test_acc " << fmt("%.4f", e.test_acc) << '\n';
                };
                results[k].log = train(net, data, opts);
            } catch (const std::exception& e) {
                results[k].error = e.what();
            }
        }
    };
    const int n = std::max(1, std::min<int>(threads, static_cast<int>(configs.size())));
    if (n == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int t = 0; t < n; ++t) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    for (std::size_t k = 0; k < results.size(); ++k) {
        if (!results[k].error.empty()) throw std::runtime_error("run " + std::to_string(k) + ": " + results[k].error);
    }
    return results;
}

inline AnalogBackend analog_backend_of(const ExperimentConfig& c, const std::string& command) {
    const auto* a = std::get_if<AnalogBackend>(&c.network.backend);
    if (!a) throw ConfigError("network.backend: " + command + " needs the analog backend");
    return *a;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Subcommands

inline int cmd_gen_pulses(const std::string& out_path, const SweepSpec& spec, double v_read, std::uint64_t seed,
                          std::ostream& out) {
    DeviceModelParams p;
    SweepSpec s = spec;
    s.v_g_read = v_read;
    p.asymmetry = p.asymmetry_for(v_read);
    Rng rng(seed);
    const auto records = generate_pulse_sweep(p, s, rng);
    auto f = detail::open_output(out_path);
    write_pulse_csv(f, records);
    out << "wrote " << records.size() << " pulses to " << out_path << '\n';
    return 0;
}

inline int cmd_fit_device(const std::string& pulses_csv, const std::string& mode, const std::string& out_dir,
                          std::ostream& out) {
    if (!std::filesystem::exists(pulses_csv)) throw ConfigError("pulses file '" + pulses_csv + "' not found");
    const FitMode hint = sonos::detail::parse_enum<FitMode>(
        mode, "--mode",
        {{"auto", FitMode::kAuto}, {"symmetric", FitMode::kSymmetric}, {"asymmetric", FitMode::kAsymmetric}});
    const auto records = read_pulse_csv(pulses_csv);
    const auto fit = fit_device_model(records, hint);
    const json doc = {{"params", to_json(fit.params)}, {"report", to_json(fit.report)}};
    const auto dir = detail::prepare_output_dir(out_dir);
    auto f = detail::open_output(dir / "device_fit.json");
    f << doc.dump(2) << '\n';
    const auto& r = fit.report;
    out << "model " << to_string(r.chosen) << ", " << r.erase_runs << " erase / " << r.program_runs
        << " program runs, " << r.pairs_used << " pulse pairs\n";
    out << "step_sym = " << detail::fmt("%.6g", r.step_sym) << "  residual = " << detail::fmt("%.4g", r.residual_rms_sym)
        << " S  noise = " << detail::fmt("%.4f", r.noise_sym) << '\n';
    out << "step_asym = " << detail::fmt("%.6g", r.step_asym)
        << "  residual = " << detail::fmt("%.4g", r.residual_rms_asym)
        << " S  noise = " << detail::fmt("%.4f", r.noise_asym) << '\n';
    out << "wrote " << (dir / "device_fit.json").string() << '\n';
    return 0;
}

inline int cmd_train(const std::string& config_path, const std::string& out_override, bool wall_clock,
                     std::ostream& out, std::ostream& err) {
    const auto cfg = load_experiment(config_path);
    const auto data = load_dataset(cfg.dataset, cfg.seed);
    const auto dir = detail::prepare_output_dir(out_override.empty() ? cfg.output_dir : out_override);
    Network net(cfg.network);
    TrainOptions opts;
    opts.record_wall_clock = wall_clock;
    opts.on_epoch = [&](const EpochLog& e) {
        err << "epoch " << e.epoch << " train_acc " << detail::fmt("%.4f", e.train_acc) << " test_acc "
            << detail::fmt("%.4f", e.test_acc) << '\n';
    };
    const auto log = train(net, data, opts);
    auto f = detail::open_output(dir / "train_log.csv");
    write_train_log_csv(f, log);
    out << "final_test_acc = " << detail::fmt("%.4f", log.final_test_acc()) << '\n';
    out << "best_test_acc = " << detail::fmt("%.4f", log.best_test_acc()) << '\n';
    out << "wrote " << (dir / "train_log.csv").string() << '\n';
    return 0;
}

inline int cmd_sweep(const std::string& config_path, const std::string& out_override, std::ostream& out,
                     std::ostream& err) {
    const auto cfg = load_experiment(config_path);
    const auto base = detail::analog_backend_of(cfg, "sweep-read-voltage");
    std::vector<NetworkConfig> runs;
    std::vector<double> lambdas;
    for (double v : cfg.sweep_read_voltages) {
        NetworkConfig n = cfg.network;
        AnalogBackend a = base;
        a.device = a.device.with_read_voltage(v);
        lambdas.push_back(a.device.asymmetry);
        n.backend = a;
        runs.push_back(n);
    }
    const auto data = load_dataset(cfg.dataset, cfg.seed);
    const auto dir = detail::prepare_output_dir(out_override.empty() ? cfg.output_dir : out_override);
    const auto results = detail::run_all(runs, data, cfg.threads, err);
    auto f = detail::open_output(dir / "sweep_read_voltage.csv");
    f << kSweepCsvHeader << '\n';
    for (std::size_t k = 0; k < runs.size(); ++k) {
        char buf[160];
        std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%.17g\n", cfg.sweep_read_voltages[k], lambdas[k],
                      results[k].log.final_test_acc(), results[k].log.best_test_acc());
        f << buf;
        out << "V_read " << cfg.sweep_read_voltages[k] << " V  lambda " << lambdas[k] << "  final_test_acc "
            << detail::fmt("%.4f", results[k].log.final_test_acc()) << '\n';
    }
    out << "wrote " << (dir / "sweep_read_voltage.csv").string() << '\n';
    return 0;
}

inline int cmd_ladder(const std::string& config_path, const std::string& out_override, std::ostream& out,
                      std::ostream& err) {
    const auto cfg = load_experiment(config_path);
    const auto base = detail::analog_backend_of(cfg, "scheme-ladder");
    std::vector<NetworkConfig> runs;
    for (const auto& s : cfg.ladder_schemes) {
        NetworkConfig n = cfg.network;
        AnalogBackend a = base;
        a.scheme = s;
        n.backend = a;
        runs.push_back(n);
    }
    const auto data = load_dataset(cfg.dataset, cfg.seed);
    const auto dir = detail::prepare_output_dir(out_override.empty() ? cfg.output_dir : out_override);
    const auto results = detail::run_all(runs, data, cfg.threads, err);
    auto f = detail::open_output(dir / "scheme_ladder.csv");
    f << kLadderCsvHeader << '\n';
    for (std::size_t k = 0; k < runs.size(); ++k) {
        const auto& s = cfg.ladder_schemes[k];
        const auto& log = results[k].log;
        char buf[200];
        std::snprintf(buf, sizeof buf, "%s,%zu,%.17g,%.17g,%zu\n", scheme_name(s).c_str(), devices_per_weight(s),
                      log.final_test_acc(), log.best_test_acc(), log.carry_totals.cells_carried);
        f << buf;
        out << scheme_name(s) << "  final_test_acc " << detail::fmt("%.4f", log.final_test_acc()) << '\n';
    }
    out << "wrote " << (dir / "scheme_ladder.csv").string() << '\n';
    return 0;
}

struct CarryDemoOptions {
    int updates = 200;
    int interval = 20;
    double update_size = 0.01;
    double positive_fraction = 0.7;
    bool noise = true;
    std::uint64_t seed = 1;
};

/// One periodic-carry weight driven by a biased random walk of updates.
inline int cmd_carry_demo(const CarryDemoOptions& o, const std::string& out_dir, std::ostream& out) {
    if (o.updates < 1 || o.interval < 1) throw ConfigError("carry-demo: --updates and --interval must be positive");
    if (!(o.update_size > 0.0)) throw ConfigError("carry-demo: --update-size must be positive");
    if (!(o.positive_fraction >= 0.0 && o.positive_fraction <= 1.0)) {
        throw ConfigError("carry-demo: --positive-fraction must be in [0, 1]");
    }
    PeriodicCarry pc;
    pc.carry_interval = o.interval;
    KernelFlags flags;
    flags.noise_enabled = o.noise;
    flags.quantization_enabled = false;
    MappedWeights mw(1, 1, pc, DeviceModelParams{}, ConverterBank{}, flags);
    Rng rng(o.seed);
    Rng walk(rng.split());
    const auto dir = detail::prepare_output_dir(out_dir);
    auto f = detail::open_output(dir / "carry_demo.csv");
    f << kCarryDemoCsvHeader << '\n';
    std::size_t carries = 0;
    char buf[200];
    for (int step = 1; step <= o.updates; ++step) {
        const double dw = walk.uniform(0.0, 1.0) < o.positive_fraction ? o.update_size : -o.update_size;
        const double u[1] = {dw};
        const double v[1] = {1.0};
        const auto stats = mw.apply_update_encoded(u, v, rng);
        const bool carried = stats && stats->cells_carried > 0;
        carries += carried ? 1 : 0;
        const auto [d1, d0] = mw.digits(0, 0);
        std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g,%.17g,%.17g,%d\n", step, dw, d1, d0, mw.weights()(0, 0),
                      carried ? 1 : 0);
        f << buf;
    }
    out << o.updates << " updates, " << carries << " carries, final weight "
        << detail::fmt("%.4f", mw.weights()(0, 0)) << '\n';
    out << "wrote " << (dir / "carry_demo.csv").string() << '\n';
    return 0;
}

inline int cmd_cost(const std::string& params_path, const std::string& out_dir, double factor, std::ostream& out) {
    CostParams params;
    if (!params_path.empty()) {
        if (!std::filesystem::exists(params_path)) throw ConfigError("params file '" + params_path + "' not found");
        try {
            params = cost_params_from_json(read_json_file(params_path), "");
        } catch (const ConfigError& e) {
            throw ConfigError(params_path + ": " + e.what());
        }
    }
    const auto& g = golden_tables();
    char buf[256];

    out << "Golden area (um^2)\n";
    for (std::size_t t = 0; t < 3; ++t) {
        std::snprintf(buf, sizeof buf, "  %-6s %10.0f %10.0f %10.0f\n", kTechnologyNames[t], g.area_um2[t][0],
                      g.area_um2[t][1], g.area_um2[t][2]);
        out << buf;
    }
    for (const bool energy : {true, false}) {
        out << (energy ? "Golden energy (nJ), 8/4/2 bit\n" : "Golden latency (us), 8/4/2 bit\n");
        for (std::size_t t = 0; t < 3; ++t) {
            for (std::size_t k = 0; k < 4; ++k) {
                const auto& row = energy ? g.energy_nj[t][k] : g.latency_us[t][k];
                std::snprintf(buf, sizeof buf, "  %-6s %-6s %10g %10g %10g\n", kTechnologyNames[t], kKernelNames[k],
                              row[0], row[1], row[2]);
                out << buf;
            }
        }
    }

    json doc;
    doc["params"] = to_json(params);
    std::vector<DeviationSummary> summaries;
    for (int bits : kPrecisions) {
        const auto r = golden_ratios(g, bits);
        std::snprintf(buf, sizeof buf, "energy_ratio_%dbit = %.1f\nlatency_ratio_%dbit = %.3f\narea_ratio_%dbit = %.3f\n",
                      bits, r.energy_ratio, bits, r.latency_ratio, bits, r.area_ratio);
        out << buf;
        const auto est = estimate(params, bits);
        const auto dev = compare(est, g, bits, factor);
        out << "Estimate " << bits << "-bit\n";
        for (const auto& d : dev.entries) {
            std::snprintf(buf, sizeof buf, "  %-10s %-5s estimate %12.5g  golden %12.5g  ratio %7.3f%s\n",
                          d.metric.c_str(), d.kernel.c_str(), d.estimate, d.golden, d.ratio,
                          d.flagged ? "  FLAGGED" : "");
            out << buf;
        }
        std::snprintf(buf, sizeof buf,
                      "  cv2_share_of_write_energy = %.3f\n  write_share_of_latency = %.3f\n"
                      "  cell_access_share_of_area = %.3f\n",
                      est.cv2_share_of_write_energy, est.write_share_of_latency, est.cell_access_share_of_area);
        out << buf;
        const std::string key = std::to_string(bits) + "bit";
        doc["ratios"][key] = {{"energy_ratio", r.energy_ratio},
                              {"latency_ratio", r.latency_ratio},
                              {"area_ratio", r.area_ratio}};
        doc["estimates"][key] = to_json(est);
        doc["deviations"][key] = to_json(dev);
        summaries.push_back(dev);
    }
    const auto dir = detail::prepare_output_dir(out_dir);
    auto jf = detail::open_output(dir / "cost_report.json");
    jf << doc.dump(2) << '\n';
    auto cf = detail::open_output(dir / "cost_deviations.csv");
    write_deviation_csv(cf, summaries);
    out << "wrote " << (dir / "cost_report.json").string() << " and " << (dir / "cost_deviations.csv").string()
        << '\n';
    return 0;
}

// ---------------------------------------------------------------------------

inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    CLI::App app{"SONOS crossbar training simulator"};
    app.require_subcommand(1);
    app.fallthrough();
    std::string out_dir;
    app.add_option("-o,--out", out_dir, "Output directory (default: config output_dir, then $SONOS_OUTPUT_DIR)");

    std::string pulses_csv, fit_mode = "auto";
    auto* fit = app.add_subcommand("fit-device", "Fit device model parameters to a pulse CSV");
    fit->add_option("pulses", pulses_csv, "Pulse CSV")->required();
    fit->add_option("--mode", fit_mode, "auto, symmetric or asymmetric");

    std::string gen_path;
    SweepSpec gen_spec;
    double gen_vread = 1.4;
    std::uint64_t gen_seed = 1;
    auto* gen = app.add_subcommand("gen-pulses", "Write a synthetic pulse sweep CSV");
    gen->add_option("output", gen_path, "CSV path")->required();
    gen->add_option("--repetitions", gen_spec.repetitions);
    gen->add_option("--pulses", gen_spec.pulses_per_direction, "Pulses per direction");
    gen->add_option("--read-voltage", gen_vread, "Read voltage, selects the asymmetry preset");
    gen->add_option("--seed", gen_seed);

    std::string config_path;
    bool wall_clock = false;
    auto* tr = app.add_subcommand("train", "Train one network, write train_log.csv");
    tr->add_option("config", config_path, "Experiment config JSON")->required();
    tr->add_flag("--wall-clock", wall_clock, "Record per-epoch seconds in the log");

    auto* sw = app.add_subcommand("sweep-read-voltage", "Train once per read-voltage preset");
    sw->add_option("config", config_path, "Experiment config JSON")->required();

    auto* ld = app.add_subcommand("scheme-ladder", "Compare weight schemes");
    ld->add_option("config", config_path, "Experiment config JSON")->required();

    CarryDemoOptions demo;
    bool demo_no_noise = false;
    auto* cd = app.add_subcommand("carry-demo", "Trace one periodic-carry weight");
    cd->add_option("--updates", demo.updates);
    cd->add_option("--interval", demo.interval, "Updates between carry passes");
    cd->add_option("--update-size", demo.update_size, "Weight change per update");
    cd->add_option("--positive-fraction", demo.positive_fraction, "Probability an update is positive");
    cd->add_option("--seed", demo.seed);
    cd->add_flag("--no-noise", demo_no_noise, "Disable write noise");

    std::string params_path;
    double factor = 2.0;
    auto* cost = app.add_subcommand("cost", "Golden tables, ratios, estimate and deviations");
    cost->add_option("--params", params_path, "CostParams JSON");
    cost->add_option("--factor", factor, "Flag estimates outside this factor of golden");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::ParseError& e) {
        return app.exit(e, out, err);
    }

    const std::string plain_out = out_dir.empty() ? default_output_dir() : out_dir;
    try {
        if (*fit) return cmd_fit_device(pulses_csv, fit_mode, plain_out, out);
        if (*gen) return cmd_gen_pulses(gen_path, gen_spec, gen_vread, gen_seed, out);
        if (*tr) return cmd_train(config_path, out_dir, wall_clock, out, err);
        if (*sw) return cmd_sweep(config_path, out_dir, out, err);
        if (*ld) return cmd_ladder(config_path, out_dir, out, err);
        if (*cd) {
            demo.noise = !demo_no_noise;
            return cmd_carry_demo(demo, plain_out, out);
        }
        if (*cost) return cmd_cost(params_path, plain_out, factor, out);
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return 1;
    }
    return 1;
}

}  // namespace sonos::cli

#endif  // SONOS_CLI_HPP
