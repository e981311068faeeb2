#include <gtest/gtest.h>

#include <cmath>

#include "sonos/weight_mapping.hpp"

using namespace sonos;

namespace {

DeviceModelParams ideal() {
    DeviceModelParams p;
    p.write_noise_frac = 0.0;
    return p;
}

KernelFlags off() { return {false, false}; }

// Writes a differential digit directly: arrays (k, k+1), value = scale * (g+ - g-)/range.
void set_pair(MappedWeights& mw, std::size_t k, double value, double scale) {
    const auto& p = mw.params();
    const double half = 0.5 * value / scale * p.range();
    mw.array(k).set_conductance(0, 0, p.g_mid() + half);
    mw.array(k + 1).set_conductance(0, 0, p.g_mid() - half);
}

void set_digits(MappedWeights& mw, double d1, double d0) {
    set_pair(mw, 0, d1, 1.0);
    set_pair(mw, 2, d0, 2.0);  // low digit spans [-2, 2] with 50% headroom
    mw.refresh_all();
}

}  // namespace

TEST(Schemes, NamesAndDeviceCounts) {
    EXPECT_EQ(devices_per_weight(OneDeviceRef{}), 1u);
    EXPECT_EQ(devices_per_weight(DifferentialPair{}), 2u);
    EXPECT_EQ(devices_per_weight(PeriodicCarry{}), 4u);
    PeriodicCarry one_digit;
    one_digit.digit_scheme = DigitScheme::kOneDeviceRef;
    EXPECT_EQ(devices_per_weight(one_digit), 2u);
    EXPECT_EQ(scheme_name(PeriodicCarry{}), "periodic_carry");
    PeriodicCarry pc;
    EXPECT_EQ(pc.base, 8);
    EXPECT_EQ(pc.digits, 2);
    EXPECT_DOUBLE_EQ(pc.headroom_frac, 0.5);
    EXPECT_EQ(pc.carry_interval, 1000);
}

TEST(Decode, OneDeviceAtReferenceIsZero) {
    MappedWeights mw(2, 2, OneDeviceRef{}, ideal());
    EXPECT_EQ(mw.weights()(1, 1), 0.0);
    mw.array(0).set_conductance(0, 1, 10e-9);
    mw.refresh_all();
    EXPECT_DOUBLE_EQ(mw.weights()(0, 1), 1.0);
    MappedWeights custom(1, 1, OneDeviceRef{3e-9}, ideal());
    custom.array(0).set_conductance(0, 0, 3e-9);
    custom.refresh_all();
    EXPECT_EQ(custom.weights()(0, 0), 0.0);
    EXPECT_THROW(MappedWeights(1, 1, OneDeviceRef{20e-9}, ideal()), DomainError);
}

TEST(Decode, DifferentialFullScale) {
    MappedWeights mw(1, 1, DifferentialPair{}, ideal());
    mw.array(0).set_conductance(0, 0, 10e-9);
    mw.array(1).set_conductance(0, 0, 1e-9);
    mw.refresh_all();
    EXPECT_DOUBLE_EQ(decode_weights(mw)(0, 0), 1.0);
}

TEST(Decode, PeriodicCarryDigits) {
    MappedWeights mw(1, 1, PeriodicCarry{}, ideal());
    set_digits(mw, 0.5, 1.5);
    EXPECT_NEAR(decode_weights(mw)(0, 0), 5.5 / 9.0, 1e-12);
    EXPECT_NEAR(decode_weights(mw)(0, 0), 0.6111, 1e-4);
    const auto [d1, d0] = mw.digits(0, 0);
    EXPECT_NEAR(d1, 0.5, 1e-12);
    EXPECT_NEAR(d0, 1.5, 1e-12);
}

TEST(Carry, ConservesDecodedValue) {
    MappedWeights mw(1, 1, PeriodicCarry{}, ideal(), {}, off());
    set_digits(mw, 0.5, 1.5);
    Rng rng(1);
    const auto stats = carry_step(mw, rng);
    EXPECT_EQ(stats.cells_carried, 1u);
    EXPECT_EQ(stats.cells_saturated, 0u);
    EXPECT_GT(stats.pulses_used, 0u);
    const auto [d1, d0] = mw.digits(0, 0);
    const double tol = PeriodicCarry{}.carry_tolerance;
    EXPECT_NEAR(d1, 0.6875, tol);
    EXPECT_NEAR(d0, 0.0, tol);
    EXPECT_NEAR(mw.weights()(0, 0), 5.5 / 9.0, tol);
}

TEST(Carry, InsideNominalRangeUntouched) {
    MappedWeights mw(1, 1, PeriodicCarry{}, ideal(), {}, off());
    set_digits(mw, 0.0, 0.5);
    std::vector<double> before;
    for (std::size_t k = 0; k < 4; ++k) before.push_back(mw.array(k).conductance(0, 0));
    Rng rng(1);
    const auto stats = carry_step(mw, rng);
    EXPECT_EQ(stats.cells_carried, 0u);
    for (std::size_t k = 0; k < 4; ++k) EXPECT_EQ(mw.array(k).conductance(0, 0), before[k]);
}

TEST(Carry, HighDigitSaturationReported) {
    MappedWeights mw(1, 1, PeriodicCarry{}, ideal(), {}, off());
    set_digits(mw, 1.0, 1.5);
    Rng rng(1);
    const auto stats = carry_step(mw, rng);
    EXPECT_EQ(stats.cells_saturated, 1u);
    const auto [d1, d0] = mw.digits(0, 0);
    EXPECT_NEAR(d1, 1.0, 2e-3);
    EXPECT_NEAR(d0, 0.0, 2e-3);
}

TEST(Carry, RandomStatesConserveAndResetLowDigit) {
    MappedWeights mw(1, 1, PeriodicCarry{}, ideal(), {}, off());
    Rng rng(7);
    const double tol = PeriodicCarry{}.carry_tolerance;
    std::size_t saturated = 0;
    for (int t = 0; t < 500; ++t) {
        set_digits(mw, rng.uniform(-1.0, 1.0), rng.uniform(-2.0, 2.0));
        const double before = mw.weights()(0, 0);
        const auto stats = carry_step(mw, rng);
        EXPECT_EQ(stats.write_failures, 0u);
        if (stats.cells_saturated) {
            // value beyond the high digit's rail: d1 pinned, excess lost
            ++saturated;
            EXPECT_NEAR(std::abs(mw.digits(0, 0).first), 1.0, tol);
        } else {
            EXPECT_LE(std::abs(mw.weights()(0, 0) - before), tol);
        }
        EXPECT_LE(std::abs(mw.digits(0, 0).second), 1.0 + tol);
    }
    EXPECT_GT(saturated, 0u);
    EXPECT_LT(saturated, 100u);
}

TEST(Carry, WrongSchemeRejected) {
    MappedWeights mw(1, 1, DifferentialPair{}, ideal());
    Rng rng(1);
    EXPECT_THROW(carry_step(mw, rng), ConfigError);
    EXPECT_THROW(mw.digits(0, 0), ConfigError);
}

TEST(Update, CounterFiresExactlyAtInterval) {
    MappedWeights mw(2, 2, PeriodicCarry{}, ideal(), {}, off());
    Rng rng(1);
    const std::vector<double> zero(2, 0.0);
    const std::vector<double> u{0.01, -0.01}, v{1.0, 1.0};
    int fired = 0;
    for (int k = 1; k <= 2500; ++k) {
        // zero vectors count as updates too
        const auto stats = apply_update(mw, k % 3 ? u : zero, v, rng);
        if (stats) {
            ++fired;
            EXPECT_EQ(k % 1000, 0) << "carry ran at update " << k;
        }
        EXPECT_EQ(mw.update_counter(), static_cast<std::size_t>(k % 1000));
    }
    EXPECT_EQ(fired, 2);
}

TEST(Update, ZeroVectorsNoStateChange) {
    MappedWeights mw(2, 3, DifferentialPair{}, DeviceModelParams{}, {}, {true, true});
    Rng rng(1);
    const auto before = mw.array(0).conductances()[0];
    apply_update(mw, std::vector<double>(2, 0.0), std::vector<double>{1, 1, 1}, rng);
    EXPECT_EQ(mw.array(0).conductances()[0], before);
    EXPECT_EQ(mw.update_counter(), 1u);
    EXPECT_THROW(apply_update(mw, std::vector<double>(3, 0.0), std::vector<double>(3, 0.0), rng), DimensionError);
}

TEST(Update, SingleEraseRoutesToOneDevice) {
    MappedWeights mw(1, 1, DifferentialPair{DifferentialRouting::kSingleErase}, ideal(), {}, off());
    Rng rng(1);
    const double mid = mw.params().g_mid();
    apply_update(mw, std::vector<double>{0.005}, std::vector<double>{1.0}, rng);
    EXPECT_GT(mw.array(0).conductance(0, 0), mid);
    EXPECT_EQ(mw.array(1).conductance(0, 0), mid);
    apply_update(mw, std::vector<double>{-0.01}, std::vector<double>{1.0}, rng);
    EXPECT_GT(mw.array(1).conductance(0, 0), mid);  // minus device erased, not programmed
    EXPECT_LT(mw.weights()(0, 0), 0.0);
}

TEST(Update, SplitPairMovesBothDevices) {
    MappedWeights mw(1, 1, DifferentialPair{}, ideal(), {}, off());
    Rng rng(1);
    const double mid = mw.params().g_mid();
    apply_update(mw, std::vector<double>{0.005}, std::vector<double>{1.0}, rng);
    EXPECT_GT(mw.array(0).conductance(0, 0), mid);
    EXPECT_LT(mw.array(1).conductance(0, 0), mid);
    EXPECT_NEAR(mw.weights()(0, 0), 0.005, 0.05 * 0.005);
}

TEST(Update, PeriodicCarryWritesLowDigitOnly) {
    MappedWeights mw(1, 1, PeriodicCarry{}, ideal(), {}, off());
    Rng rng(1);
    apply_update(mw, std::vector<double>{0.005}, std::vector<double>{1.0}, rng);
    const auto [d1, d0] = mw.digits(0, 0);
    EXPECT_EQ(d1, 0.0);
    EXPECT_NEAR(d0, 9.0 * 0.005, 0.05 * 9.0 * 0.005);
    EXPECT_NEAR(mw.weights()(0, 0), 0.005, 0.05 * 0.005);
}

TEST(Update, ClosedLoopTracksRequestedChange) {
    MappedWeights mw(1, 1, OneDeviceRef{}, ideal(), {}, off());
    mw.set_update_mode(UpdateMode::kClosedLoop);
    Rng rng(1);
    mw.array(0).set_conductance(0, 0, 2e-9);
    mw.refresh_all();
    const double before = mw.weights()(0, 0);
    apply_update(mw, std::vector<double>{0.01}, std::vector<double>{0.7}, rng);
    EXPECT_NEAR(mw.weights()(0, 0) - before, 0.007, 0.01 * 0.007 + 1e-9);
}

TEST(Init, RoundTripAllSchemes) {
    Rng rng(3);
    Matrix w(4, 5);
    for (double& x : w.data()) x = rng.uniform(-0.5, 0.5);
    const double tol = 1e-3;
    for (const WeightScheme& s : {WeightScheme{OneDeviceRef{}}, WeightScheme{DifferentialPair{}},
                                  WeightScheme{PeriodicCarry{}}}) {
        MappedWeights mw(4, 5, s, DeviceModelParams{}, {}, {false, true});
        init_weights(mw, w, tol, rng);
        const Matrix d = decode_weights(mw);
        for (std::size_t k = 0; k < w.data().size(); ++k) {
            EXPECT_LE(std::abs(d.data()[k] - w.data()[k]), tol) << scheme_name(s);
        }
    }
}

TEST(Init, ZeroAndCarryEncoding) {
    Rng rng(1);
    MappedWeights one(2, 2, OneDeviceRef{}, ideal(), {}, off());
    init_weights(one, Matrix(2, 2), 1e-4, rng);
    for (double g : one.array(0).conductances()) EXPECT_NEAR(g, one.params().g_mid(), 1e-12);

    MappedWeights pc(1, 1, PeriodicCarry{}, ideal(), {}, off());
    Matrix w(1, 1);
    w(0, 0) = 5.5 / 9.0;
    init_weights(pc, w, 1e-4, rng);
    const auto [d1, d0] = pc.digits(0, 0);
    EXPECT_NEAR(d1, 0.6875, 1e-3);
    EXPECT_NEAR(d0, 0.0, 1e-3);
}

TEST(Init, UnrepresentableRejected) {
    Rng rng(1);
    Matrix w(1, 1);
    w(0, 0) = 1.5;
    MappedWeights dp(1, 1, DifferentialPair{}, ideal());
    EXPECT_THROW(init_weights(dp, w, 1e-3, rng), RangeError);
    w(0, 0) = 0.95;  // above 8/9 for periodic carry
    MappedWeights pc(1, 1, PeriodicCarry{}, ideal());
    EXPECT_THROW(init_weights(pc, w, 1e-3, rng), RangeError);
}

TEST(Noise, DifferentialAveragesWriteNoise) {
    // identical update streams; compare decoded error against the ideal sum
    const auto run = [](const WeightScheme& s) {
        MappedWeights mw(1, 64, s, DeviceModelParams{}, {}, {false, true});
        Rng updates(11), noise(12);
        std::vector<double> ideal(64, 0.0);
        for (int t = 0; t < 200; ++t) {
            std::vector<double> v(64);
            for (auto& x : v) x = updates.uniform(-1.0, 1.0);
            const double u = updates.uniform(-0.01, 0.01);
            for (std::size_t j = 0; j < 64; ++j) ideal[j] += u * v[j];
            apply_update(mw, std::vector<double>{u}, v, noise);
        }
        double ss = 0.0;
        for (std::size_t j = 0; j < 64; ++j) ss += std::pow(mw.weights()(0, j) - ideal[j], 2);
        return ss / 64.0;
    };
    EXPECT_LT(run(DifferentialPair{}), 0.8 * run(OneDeviceRef{}));
}
