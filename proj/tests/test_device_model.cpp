#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "sonos/device_model.hpp"

using namespace sonos;

namespace {

DeviceModelParams noiseless(double lambda = 0.0) {
    DeviceModelParams p;
    p.asymmetry = lambda;
    p.write_noise_frac = 0.0;
    return p;
}

}  // namespace

TEST(DeviceParams, DefaultsValidate) {
    DeviceModelParams p;
    EXPECT_NO_THROW(p.validate());
    EXPECT_DOUBLE_EQ(p.g_min, 1e-9);
    EXPECT_DOUBLE_EQ(p.g_max, 10e-9);
    EXPECT_NEAR(p.step_sym, 0.0230258509, 1e-10);
    EXPECT_DOUBLE_EQ(p.step_asym, 0.023);
    EXPECT_DOUBLE_EQ(p.write_noise_frac, 0.2);
}

TEST(DeviceParams, InvalidRejected) {
    auto bad = [](auto mutate) {
        DeviceModelParams p;
        mutate(p);
        EXPECT_THROW(p.validate(), DomainError);
    };
    bad([](auto& p) { p.g_min = 0.0; });
    bad([](auto& p) { p.g_max = p.g_min; });
    bad([](auto& p) { p.g_max = 1.5 * p.g_min; });
    bad([](auto& p) { p.step_sym = 0.0; });
    bad([](auto& p) { p.step_asym = -1.0; });
    bad([](auto& p) { p.asymmetry = 1.2; });
    bad([](auto& p) { p.write_noise_frac = -0.1; });
    bad([](auto& p) { p.read_voltage_presets = {{1.4, 0.5}, {1.8, 0.2}}; });
}

TEST(DeviceParams, ReadVoltagePresets) {
    DeviceModelParams p;
    EXPECT_DOUBLE_EQ(p.asymmetry_for(1.4), 0.0);
    EXPECT_DOUBLE_EQ(p.asymmetry_for(1.8), 0.3);
    EXPECT_DOUBLE_EQ(p.asymmetry_for(2.2), 0.6);
    EXPECT_DOUBLE_EQ(p.asymmetry_for(2.6), 1.0);
    EXPECT_NEAR(p.asymmetry_for(2.0), 0.45, 1e-12);
    EXPECT_THROW(p.asymmetry_for(3.0), DomainError);
    EXPECT_DOUBLE_EQ(p.with_read_voltage(2.2).asymmetry, 0.6);
}

TEST(ApplyPulse, SymmetricEraseOracle) {
    // 5 nS * exp(ln(10)/100), 30-digit evaluation
    Rng rng(1);
    const auto s = apply_pulse({5e-9}, PulseDirection::kErase, 1.0, noiseless(), rng);
    EXPECT_NEAR(s.g, 5.1164649614037707e-9, 1e-20);
}

TEST(ApplyPulse, AsymmetricEraseOracle) {
    Rng rng(1);
    const auto s = apply_pulse({5e-9}, PulseDirection::kErase, 1.0, noiseless(1.0), rng);
    EXPECT_NEAR(s.g, 5.115e-9, 1e-20);
}

TEST(ApplyPulse, BlendIsConvexCombination) {
    const auto p0 = noiseless(0.0), p1 = noiseless(1.0), pm = noiseless(0.3);
    for (double g : {1.5e-9, 4e-9, 9e-9}) {
        for (auto dir : {PulseDirection::kErase, PulseDirection::kProgram}) {
            const double want = 0.7 * mean_delta(g, dir, 0.6, p0) + 0.3 * mean_delta(g, dir, 0.6, p1);
            EXPECT_NEAR(mean_delta(g, dir, 0.6, pm), want, 1e-24);
        }
    }
}

TEST(ApplyPulse, ProgramAtFloorClamps) {
    Rng rng(1);
    const auto s = apply_pulse({1e-9}, PulseDirection::kProgram, 1.0, noiseless(), rng);
    EXPECT_DOUBLE_EQ(s.g, 1e-9);
}

TEST(ApplyPulse, ZeroMagnitudeIsNoOp) {
    DeviceModelParams p;  // noise on
    Rng a(7), b(7);
    for (auto dir : {PulseDirection::kErase, PulseDirection::kProgram}) {
        EXPECT_EQ(apply_pulse({3.3e-9}, dir, 0.0, p, a).g, 3.3e-9);
    }
    // consumes no randomness
    EXPECT_EQ(a.next(), b.next());
}

TEST(ApplyPulse, ArgumentErrors) {
    Rng rng(1);
    DeviceModelParams p;
    EXPECT_THROW(apply_pulse({5e-9}, PulseDirection::kErase, 1.5, p, rng), DomainError);
    EXPECT_THROW(apply_pulse({5e-9}, PulseDirection::kErase, -0.1, p, rng), DomainError);
    EXPECT_THROW(apply_pulse({NAN}, PulseDirection::kErase, 0.5, p, rng), DomainError);
}

TEST(ApplyPulse, ClampUnderNoise) {
    DeviceModelParams p;
    p.write_noise_frac = 2.0;  // exaggerated to hit both rails often
    p.asymmetry = 0.5;
    Rng rng(3);
    DeviceState s{p.g_mid()};
    for (int k = 0; k < 20000; ++k) {
        const auto dir = rng.uniform(0, 1) < 0.5 ? PulseDirection::kErase : PulseDirection::kProgram;
        s = apply_pulse(s, dir, rng.uniform(0, 1), p, rng);
        ASSERT_GE(s.g, p.g_min);
        ASSERT_LE(s.g, p.g_max);
    }
}

TEST(ApplyPulse, MonotoneDirectionNoiseOff) {
    for (double lam : {0.0, 0.3, 0.6, 1.0}) {
        const auto p = noiseless(lam);
        Rng rng(1);
        for (double g = p.g_min; g <= p.g_max; g += 0.25e-9) {
            for (double u : {0.1, 0.5, 1.0}) {
                EXPECT_GE(apply_pulse({g}, PulseDirection::kErase, u, p, rng).g, g);
                EXPECT_LE(apply_pulse({g}, PulseDirection::kProgram, u, p, rng).g, g);
            }
        }
    }
}

TEST(ApplyPulse, SymmetricReversibility) {
    const auto p = noiseless();
    Rng rng(1);
    for (double g : {1.2e-9, 3e-9, 5.5e-9, 9.7e-9}) {
        const auto up = apply_pulse({g}, PulseDirection::kErase, 1.0, p, rng);
        const auto back = apply_pulse(up, PulseDirection::kProgram, 1.0, p, rng);
        EXPECT_NEAR(back.g, g, 1e-12 * g);
    }
}

TEST(ApplyPulse, AsymmetricMidpointDecay) {
    const auto p = noiseless(1.0);
    Rng rng(1);
    for (double g0 : {p.g_min, 2e-9, 8e-9, p.g_max}) {
        DeviceState s{g0};
        for (int k = 0; k < 200; ++k) {
            s = apply_pulse(s, k % 2 ? PulseDirection::kProgram : PulseDirection::kErase, 1.0, p, rng);
        }
        EXPECT_LE(std::abs(s.g - p.g_mid()) / p.g_mid(), 0.02) << "start " << g0;
    }
}

TEST(ApplyPulse, HundredPulseTraverse) {
    auto p = noiseless();
    p.step_sym = std::log(p.g_max / p.g_min) / 100.0;
    Rng rng(1);
    DeviceState s{p.g_min};
    for (int k = 0; k < 99; ++k) s = apply_pulse(s, PulseDirection::kErase, 1.0, p, rng);
    EXPECT_LT(s.g, p.g_max * (1 - 1e-3));
    s = apply_pulse(s, PulseDirection::kErase, 1.0, p, rng);
    EXPECT_NEAR(s.g, p.g_max, 1e-12 * p.g_max);
}

TEST(ApplyPulse, NoiseDeterministicAndCentred) {
    DeviceModelParams p;
    Rng a(11), b(11);
    DeviceState sa{p.g_mid()}, sb{p.g_mid()};
    for (int k = 0; k < 100; ++k) {
        sa = apply_pulse(sa, PulseDirection::kErase, 0.3, p, a);
        sb = apply_pulse(sb, PulseDirection::kErase, 0.3, p, b);
        ASSERT_EQ(sa.g, sb.g);
    }
    // the relative spread of a single step matches write_noise_frac
    Rng rng(5);
    const double mean = mean_delta(p.g_mid(), PulseDirection::kErase, 1.0, p);
    double s1 = 0, s2 = 0;
    const int n = 20000;
    for (int k = 0; k < n; ++k) {
        const double r = (apply_pulse({p.g_mid()}, PulseDirection::kErase, 1.0, p, rng).g - p.g_mid()) / mean - 1.0;
        s1 += r;
        s2 += r * r;
    }
    EXPECT_NEAR(s1 / n, 0.0, 0.01);
    EXPECT_NEAR(std::sqrt(s2 / n), 0.2, 0.01);
}

TEST(PulseCsv, RoundTrip) {
    DeviceModelParams p;
    Rng rng(2);
    SweepSpec spec{3, 12, 1.8};
    const auto recs = generate_pulse_sweep(p.with_read_voltage(1.8), spec, rng);
    ASSERT_EQ(recs.size(), 3u * 2u * 12u);
    std::stringstream ss;
    write_pulse_csv(ss, recs);
    EXPECT_EQ(ss.str().substr(0, ss.str().find('\n')), kPulseCsvHeader);
    const auto back = read_pulse_csv(ss);
    ASSERT_EQ(back.size(), recs.size());
    for (std::size_t k = 0; k < recs.size(); ++k) {
        EXPECT_EQ(back[k].repetition, recs[k].repetition);
        EXPECT_EQ(back[k].pulse_index, recs[k].pulse_index);
        EXPECT_EQ(back[k].direction, recs[k].direction);
        EXPECT_EQ(back[k].g_measured, recs[k].g_measured);
        EXPECT_EQ(back[k].v_g_read, recs[k].v_g_read);
    }
}

TEST(PulseCsv, MalformedRejected) {
    std::stringstream bad_header("rep,idx\n");
    EXPECT_THROW(read_pulse_csv(bad_header), ParseError);
    std::stringstream bad_dir(std::string(kPulseCsvHeader) + "\n0,0,X,1e-9,1.4\n");
    EXPECT_THROW(read_pulse_csv(bad_dir), ParseError);
    std::stringstream bad_num(std::string(kPulseCsvHeader) + "\n0,0,E,abc,1.4\n");
    EXPECT_THROW(read_pulse_csv(bad_num), ParseError);
}

TEST(Fit, NoiselessSymmetricRoundTrip) {
    auto p = noiseless();
    p.step_sym = 0.023026;
    Rng rng(1);
    const auto recs = generate_pulse_sweep(p, SweepSpec{}, rng);
    const auto fit = fit_device_model(recs, FitMode::kAuto);
    EXPECT_EQ(fit.report.chosen, FitMode::kSymmetric);
    EXPECT_NEAR(fit.params.step_sym / 0.023026, 1.0, 0.01);
    EXPECT_NEAR(fit.params.asymmetry, 0.0, 1e-12);
}

TEST(Fit, NoiselessAsymmetricRoundTrip) {
    const auto p = noiseless(1.0);
    Rng rng(1);
    const auto recs = generate_pulse_sweep(p, SweepSpec{5, 100, 2.6}, rng);
    const auto fit = fit_device_model(recs, FitMode::kAuto);
    EXPECT_EQ(fit.report.chosen, FitMode::kAsymmetric);
    EXPECT_NEAR(fit.params.step_asym / 0.023, 1.0, 0.01);
}

TEST(Fit, NoiseRecovered) {
    DeviceModelParams p;  // noise 0.2
    Rng rng(4);
    const auto recs = generate_pulse_sweep(p, SweepSpec{}, rng);
    const auto fit = fit_device_model(recs, FitMode::kSymmetric);
    EXPECT_NEAR(fit.params.write_noise_frac / 0.2, 1.0, 0.15);
    EXPECT_NEAR(fit.params.step_sym / p.step_sym, 1.0, 0.05);
}

TEST(Fit, DegenerateAndInsufficient) {
    std::vector<PulseRecord> flat;
    for (int k = 0; k < 20; ++k) {
        flat.push_back({0, k, PulseDirection::kErase, 5e-9, 1.4});
        flat.push_back({0, k, PulseDirection::kProgram, 5e-9, 1.4});
    }
    EXPECT_THROW(fit_device_model(flat, FitMode::kAuto), DegenerateDataError);

    DeviceModelParams p = noiseless();
    Rng rng(1);
    const auto few = generate_pulse_sweep(p, SweepSpec{2, 5, 1.4}, rng);
    EXPECT_THROW(fit_device_model(few, FitMode::kAuto), InsufficientDataError);
    EXPECT_THROW(fit_device_model({}, FitMode::kAuto), InsufficientDataError);
}
