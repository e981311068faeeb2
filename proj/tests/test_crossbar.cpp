#include <gtest/gtest.h>

#include <cmath>
#include <sstream>
#include <vector>

#include "sonos/crossbar.hpp"

using namespace sonos;

namespace {

DeviceModelParams ideal() {
    DeviceModelParams p;
    p.write_noise_frac = 0.0;
    return p;
}

KernelFlags off() { return {false, false}; }

Matrix mat(std::size_t r, std::size_t c, std::initializer_list<double> v) {
    Matrix m(r, c);
    std::size_t k = 0;
    for (double x : v) m(k / c, k % c) = x, ++k;
    return m;
}

// Array whose raw weight view equals w (entries in [-1, 1]).
CrossbarArray array_with(const Matrix& w, KernelFlags flags = {false, false}) {
    CrossbarArray a(w.rows(), w.cols(), ideal(), {}, flags);
    for (std::size_t i = 0; i < w.rows(); ++i)
        for (std::size_t j = 0; j < w.cols(); ++j) a.set_conductance(i, j, a.params().g_mid() + 0.5 * w(i, j) * a.params().range());
    return a;
}

}  // namespace

// ---------------------------------------------------------------------------
// Quantizer

TEST(Quantize, EightBitOracle) {
    ConverterSpec s{-1, 1, 8};
    EXPECT_EQ(s.levels(), 255);
    EXPECT_NEAR(quantize(0.3, s), 38.0 * 2.0 / 254.0, 1e-15);
    EXPECT_NEAR(quantize(0.3, s), 0.2992126, 1e-7);
    EXPECT_EQ(quantize(1.5, s), 1.0);
    EXPECT_EQ(quantize(-7.0, s), -1.0);
    EXPECT_EQ(quantize(0.0, s), 0.0);
}

TEST(Quantize, BruteForceNearestLevel) {
    ConverterBank bank;
    Rng rng(1);
    for (const auto* s : {&bank.row_input, &bank.col_output, &bank.row_output, &bank.row_update, &bank.col_update}) {
        std::vector<double> levels;
        for (int k = 0; k < s->levels(); ++k) levels.push_back(s->min + k * s->step());
        for (int t = 0; t < 2000; ++t) {
            const double x = rng.uniform(1.2 * s->min, 1.2 * s->max);
            double best = levels.front();
            for (double l : levels)
                if (std::abs(l - x) < std::abs(best - x)) best = l;
            ASSERT_NEAR(quantize(x, *s), best, 1e-12 * (s->max - s->min));
        }
    }
}

TEST(Quantize, PropertiesAndTies) {
    ConverterSpec s{-0.01, 0.01, 7};
    const double step = s.step();
    Rng rng(2);
    for (int t = 0; t < 1000; ++t) {
        const double x = rng.uniform(-0.01, 0.01);
        const double q = quantize(x, s);
        EXPECT_EQ(quantize(q, s), q);
        EXPECT_LE(std::abs(q - x), step / 2 + 1e-18);
        EXPECT_EQ(quantize(-x, s), -q);
    }
    // exact half-step rounds away from zero on both sides
    ConverterSpec unit{-1, 1, 2};  // levels -1, 0, 1
    EXPECT_EQ(quantize(0.5, unit), 1.0);
    EXPECT_EQ(quantize(-0.5, unit), -1.0);
}

TEST(Quantize, SpecValidation) {
    EXPECT_THROW((ConverterSpec{1, -1, 8}.validate()), DomainError);
    EXPECT_THROW((ConverterSpec{-1, 1, 17}.validate()), DomainError);
    EXPECT_THROW((ConverterSpec{-1, 1, 1}.validate()), DomainError);
    EXPECT_THROW((ConverterSpec{-1, 2, 8}.validate()), DomainError);  // zero off-grid
    EXPECT_NO_THROW((ConverterSpec{0, 1, 4}.validate()));
}

TEST(ConverterBankTest, Defaults) {
    ConverterBank b;
    EXPECT_EQ(b.row_input, (ConverterSpec{-1, 1, 8}));
    EXPECT_EQ(b.col_output, (ConverterSpec{-6, 6, 8}));
    EXPECT_EQ(b.col_input, (ConverterSpec{-1, 1, 8}));
    EXPECT_EQ(b.row_output, (ConverterSpec{-4, 4, 8}));
    EXPECT_EQ(b.row_update, (ConverterSpec{-0.01, 0.01, 7}));
    EXPECT_EQ(b.col_update, (ConverterSpec{-1, 1, 5}));
}

// ---------------------------------------------------------------------------
// Read kernels

TEST(Kernels, HandOracles) {
    const Matrix w = mat(2, 2, {0.5, -0.25, 0.1, 0.3});
    const double x[2] = {1, -1};
    const auto y = vmm(w, x);
    EXPECT_NEAR(y[0], 0.4, 1e-15);
    EXPECT_NEAR(y[1], -0.55, 1e-15);
    const double v[2] = {1, 0};
    const auto z = mvm(w, v);
    EXPECT_NEAR(z[0], 0.5, 1e-15);
    EXPECT_NEAR(z[1], 0.1, 1e-15);

    // same through a device array
    const auto a = array_with(w);
    const auto ya = vmm(a, x);
    EXPECT_NEAR(ya[0], 0.4, 1e-12);
    EXPECT_NEAR(ya[1], -0.55, 1e-12);
}

TEST(Kernels, IdentityZeroAndDims) {
    const Matrix w = mat(2, 3, {0.1, 0.2, 0.3, -0.4, -0.5, -0.6});
    const double e1[2] = {0, 1};
    EXPECT_EQ(vmm(w, e1), (std::vector<double>{-0.4, -0.5, -0.6}));
    const double zero[3] = {0, 0, 0};
    EXPECT_EQ(mvm(w, zero), (std::vector<double>{0, 0}));
    EXPECT_THROW(vmm(w, zero), DimensionError);
    EXPECT_THROW(mvm(w, e1), DimensionError);
}

TEST(Kernels, TransposeIdentityExact) {
    Rng rng(3);
    Matrix w(5, 7);
    for (double& x : w.data()) x = rng.uniform(-1, 1);
    for (std::size_t i = 0; i < 5; ++i) {
        for (std::size_t j = 0; j < 7; ++j) {
            std::vector<double> ei(5, 0.0), ej(7, 0.0);
            ei[i] = 1;
            ej[j] = 1;
            EXPECT_EQ(mvm(w, ej)[i], vmm(w, ei)[j]);
        }
    }
}

TEST(Kernels, Linearity) {
    Rng rng(4);
    Matrix w(6, 4);
    for (double& x : w.data()) x = rng.uniform(-1, 1);
    std::vector<double> x1(6), x2(6), xs(6);
    for (std::size_t k = 0; k < 6; ++k) {
        x1[k] = rng.uniform(-1, 1);
        x2[k] = rng.uniform(-1, 1);
        xs[k] = x1[k] + x2[k];
    }
    const auto y1 = vmm(w, x1), y2 = vmm(w, x2), ys = vmm(w, xs);
    for (std::size_t j = 0; j < 4; ++j) EXPECT_NEAR(ys[j], y1[j] + y2[j], 1e-13);
}

TEST(Kernels, QuantizedEdges) {
    const Matrix w = mat(1, 1, {1.0});
    auto a = array_with(w, {true, false});
    const double x[1] = {0.3};
    // input quantized to 38/127, output grid of col_output has step 12/254
    const double xq = 38.0 / 127.0;
    const double step = 12.0 / 254.0;
    EXPECT_NEAR(vmm(a, x)[0], std::round(xq / step) * step, 1e-9);
    const double big[1] = {1.0};
    auto b = array_with(mat(1, 1, {1.0}), {true, false});
    EXPECT_NEAR(vmm(b, big)[0], std::round(1.0 / step) * step, 1e-9);
}

// ---------------------------------------------------------------------------
// Outer-product update

TEST(Opu, FullPulseAndMagnitudeOracle) {
    CrossbarArray a(1, 1, ideal(), {}, off());
    const double dw_full = 2.0 * a.full_pulse_conductance() / a.params().range();
    EXPECT_NEAR(dw_full, 0.0284692127875884, 1e-15);
    EXPECT_NEAR(opu_pulse_magnitude(a, 0.005 * 0.5), 0.0878141597610284, 1e-13);
    EXPECT_EQ(opu_pulse_magnitude(a, 1.0), 1.0);
}

TEST(Opu, ZeroVectorsSilent) {
    CrossbarArray a(3, 4, DeviceModelParams{}, {}, {true, true});
    Rng rng(1);
    a.set_conductance(1, 2, 7e-9);
    const std::vector<double> before(a.conductances().begin(), a.conductances().end());
    const std::vector<double> u0(3, 0.0), v0(4, 0.0), u{0.005, 0.0, -0.004}, v{0.5, 0.0, 0.9, -0.2};
    opu(a, u0, v, rng);
    opu(a, u, v0, rng);
    EXPECT_EQ(std::vector<double>(a.conductances().begin(), a.conductances().end()), before);
    // rows/columns with zero entries stay bit-identical
    opu(a, u, v, rng);
    for (std::size_t j = 0; j < 4; ++j) EXPECT_EQ(a.conductance(1, j), before[1 * 4 + j]);
    for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(a.conductance(i, 1), before[i * 4 + 1]);
}

TEST(Opu, DirectionConvention) {
    CrossbarArray a(1, 2, ideal(), {}, off());
    Rng rng(1);
    const double u[1] = {0.01};
    const double v[2] = {1.0, -1.0};
    opu(a, u, v, rng);
    EXPECT_GT(a.conductance(0, 0), a.params().g_mid());  // positive -> erase -> up
    EXPECT_LT(a.conductance(0, 1), a.params().g_mid());
}

TEST(Opu, MonotoneSaturation) {
    CrossbarArray a(1, 1, ideal(), {}, off());
    Rng rng(1);
    const double u[1] = {1.0};
    const double v[1] = {1.0};
    double prev = a.conductance(0, 0);
    for (int k = 0; k < 400; ++k) {
        opu(a, u, v, rng);
        ASSERT_GE(a.conductance(0, 0), prev);
        prev = a.conductance(0, 0);
    }
    EXPECT_DOUBLE_EQ(prev, a.params().g_max);
}

TEST(Opu, FirstOrderAgainstDenseReference) {
    Rng rng(9);
    for (int trial = 0; trial < 20; ++trial) {
        // fresh array at mid-range, where the open-loop controller is calibrated
        CrossbarArray a(8, 8, ideal(), {}, off());
        std::vector<double> u(8), v(8);
        for (auto& x : u) x = rng.uniform(-0.01, 0.01);
        for (auto& x : v) x = rng.uniform(-1, 1);
        const Matrix before = a.weights();
        opu(a, u, v, rng);
        const Matrix after = a.weights();
        for (std::size_t i = 0; i < 8; ++i) {
            for (std::size_t j = 0; j < 8; ++j) {
                const double want = u[i] * v[j];
                const double got = after(i, j) - before(i, j);
                ASSERT_LE(std::abs(got - want), 0.05 * std::abs(want) + 1e-15) << i << "," << j;
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Closed-loop write

TEST(WriteToTarget, AlreadyThere) {
    CrossbarArray a(1, 1, ideal(), {}, off());
    a.set_conductance(0, 0, 5e-9);
    Rng rng(1);
    EXPECT_EQ(write_to_target(a, 0, 0, 5e-9, 1e-12, 10, rng), 0);
}

TEST(WriteToTarget, ConvergesWithinBound) {
    CrossbarArray a(1, 1, ideal(), {}, off());
    a.set_conductance(0, 0, 2e-9);
    Rng rng(1);
    const int n = write_to_target(a, 0, 0, 8e-9, 0.05e-9, 200, rng);
    EXPECT_LE(std::abs(a.conductance(0, 0) - 8e-9), 0.05e-9);
    EXPECT_LE(n, 61);  // ceil(ln(8/2) / step_sym)
    EXPECT_GE(n, 60);
}

TEST(WriteToTarget, NoisyAndErrors) {
    CrossbarArray a(1, 1, DeviceModelParams{}, {}, {false, true});
    Rng rng(2);
    write_to_target(a, 0, 0, 3e-9, 0.01e-9, 500, rng);
    EXPECT_LE(std::abs(a.conductance(0, 0) - 3e-9), 0.01e-9);
    EXPECT_THROW(write_to_target(a, 0, 0, 11e-9, 1e-11, 10, rng), DomainError);
    EXPECT_THROW(write_to_target(a, 0, 0, 5e-9, 0.0, 10, rng), DomainError);
    a.set_conductance(0, 0, 1e-9);
    try {
        write_to_target(a, 0, 0, 9e-9, 1e-13, 3, rng);
        FAIL() << "expected ConvergenceError";
    } catch (const ConvergenceError& e) {
        EXPECT_EQ(e.pulses_used(), 3);
        EXPECT_GT(e.final_g(), 1e-9);
    }
}

// ---------------------------------------------------------------------------
// Bias validation

TEST(Bias, DefaultsPass) {
    const int u[3] = {1, 0, -1};
    const int v[4] = {1, -1, 0, 1};
    const auto r = validate_write_biases(BiasScheme{}, u, v);
    EXPECT_TRUE(r.pass);
    EXPECT_DOUBLE_EQ(r.required_holdoff, 1.5);
    EXPECT_LE(r.max_unselected_stress, 7.0);
    EXPECT_EQ(r.selected_cells, 6u);
}

TEST(Bias, NoMarginFails) {
    const int u[2] = {1, -1};
    const int v[2] = {1, -1};
    BiasScheme s;
    s.v_write_unselected_max = 10.0;
    EXPECT_FALSE(validate_write_biases(s, u, v).pass);
    // a lower inhibit level than the half-select stress also fails
    EXPECT_FALSE(validate_write_biases(BiasScheme{}, u, v, 6.0).pass);
}

TEST(Bias, ZeroPatternVacuous) {
    const int u[3] = {0, 0, 0};
    const int v[2] = {0, 0};
    const auto r = validate_write_biases(BiasScheme{}, u, v);
    EXPECT_TRUE(r.pass);
    EXPECT_EQ(r.selected_cells, 0u);
}

// ---------------------------------------------------------------------------
// Snapshot

TEST(Snapshot, RoundTrip) {
    CrossbarArray a(3, 2, ideal());
    Rng rng(5);
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 2; ++j) a.set_conductance(i, j, rng.uniform(1e-9, 10e-9));
    std::stringstream ss;
    write_snapshot_csv(ss, a);
    EXPECT_EQ(ss.str().substr(0, 4), "3,2\n");
    const auto b = read_snapshot_csv(ss, ideal());
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 2; ++j) EXPECT_EQ(a.conductance(i, j), b.conductance(i, j));
}

TEST(Snapshot, Malformed) {
    std::stringstream short_rows("2,2\n1e-9,2e-9\n");
    EXPECT_THROW(read_snapshot_csv(short_rows, ideal()), ParseError);
    std::stringstream out_of_range("1,1\n5\n");
    EXPECT_THROW(read_snapshot_csv(out_of_range, ideal()), std::exception);
}
