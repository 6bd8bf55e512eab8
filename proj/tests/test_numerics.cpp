#include <doctest.h>

#include <complex>
#include <cstring>

#include "sumformer/gradcheck.hpp"

using namespace sumformer;

namespace {

// independent triple-loop product used to freeze matmul expectations
template <typename S>
Tensor<S> matmul_oracle(const Tensor<S>& a, const Tensor<S>& b) {
    const int m = a.shape[0], k = a.shape[1], n = b.shape[1];
    Tensor<S> c(Shape{m, n});
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) {
            S acc = 0;
            for (int p = 0; p < k; ++p) acc += a(i, p) * b(p, j);
            c(i, j) = acc;
        }
    return c;
}

// naive O(T^2) complex DFT used as the spectral oracle
template <typename S>
std::vector<std::complex<S>> dft_oracle(const std::vector<S>& x) {
    const int T = static_cast<int>(x.size());
    std::vector<std::complex<S>> out(static_cast<std::size_t>(T / 2 + 1));
    for (int k = 0; k <= T / 2; ++k) {
        std::complex<S> acc(0, 0);
        for (int t = 0; t < T; ++t) {
            S ang = S(-2) * S(3.14159265358979323846) * k * t / T;
            acc += std::complex<S>(std::cos(ang), std::sin(ang)) * x[static_cast<std::size_t>(t)];
        }
        out[static_cast<std::size_t>(k)] = acc;
    }
    return out;
}

template <typename S>
Tensor<S> random_tensor(Shape sh, std::mt19937_64& rng, S lo = S(-1), S hi = S(1)) {
    Tensor<S> t(std::move(sh));
    fill_uniform(t, lo, hi, rng);
    return t;
}

// loss = sum(v * R) with a fixed random weighting, so gradients are generic
template <typename S>
Value<S> weighted_sum(Tape<S>& tape, Value<S> v, const Tensor<S>& weights) {
    return sum_all(mul(v, tape.constant(weights)));
}

}  // namespace

TEST_CASE("matmul identity, frozen oracle value, zero annihilator") {
    Tensor<double> eye(Shape{3, 3});
    for (int i = 0; i < 3; ++i) eye(i, i) = 1.0;
    Tensor<double> a(Shape{3, 2}, {1, 2, 3, 4, 5, 6});
    CHECK(max_abs_diff(matmul(eye, a), a) == 0.0);

    Tensor<double> lhs(Shape{2, 3}, {1, 2, 3, 4, 5, 6});
    Tensor<double> rhs(Shape{3, 2}, {1, 0, 0, 1, 1, 1});
    Tensor<double> expected(Shape{2, 2}, {4, 5, 10, 11});
    CHECK(max_abs_diff(matmul(lhs, rhs), expected) == 0.0);
    CHECK(max_abs_diff(matmul_oracle(lhs, rhs), expected) == 0.0);

    Tensor<double> zero(Shape{2, 3});
    Tensor<double> prod = matmul(zero, rhs);
    for (std::int64_t i = 0; i < prod.numel(); ++i) CHECK(prod[i] == 0.0);

    Tensor<double> bad(Shape{4, 2});
    CHECK_THROWS_WITH_AS(matmul(lhs, bad), doctest::Contains("(2,3)"), std::invalid_argument);
}

TEST_CASE_TEMPLATE("matmul matches the naive oracle on random inputs", S, float, double) {
    std::mt19937_64 rng(7);
    for (int trial = 0; trial < 5; ++trial) {
        Tensor<S> a = random_tensor<S>(Shape{4, 6}, rng);
        Tensor<S> b = random_tensor<S>(Shape{6, 3}, rng);
        CHECK(max_abs_diff(matmul(a, b), matmul_oracle(a, b)) < S(1e-5));
    }
}

TEST_CASE("softmax symmetry, shift invariance, exp-ratio oracle, row sums") {
    Tensor<double> flat(Shape{3}, {0, 0, 0});
    Tensor<double> sm = softmax(flat, 0);
    for (int i = 0; i < 3; ++i) CHECK(sm(i) == doctest::Approx(1.0 / 3).epsilon(1e-12));

    Tensor<double> two(Shape{2}, {0.0, std::log(2.0)});
    Tensor<double> sm2 = softmax(two, -1);
    CHECK(sm2(0) == doctest::Approx(1.0 / 3).epsilon(1e-12));
    CHECK(sm2(1) == doctest::Approx(2.0 / 3).epsilon(1e-12));

    std::mt19937_64 rng(3);
    Tensor<double> x = random_tensor<double>(Shape{4, 5}, rng, -50.0, 50.0);
    Tensor<double> shifted = x;
    for (auto& v : shifted.data) v += 123.456;
    CHECK(max_abs_diff(softmax(x, 1), softmax(shifted, 1)) < 1e-12);

    Tensor<double> sm3 = softmax(x, 1);
    for (int r = 0; r < 4; ++r) {
        double sum = 0;
        for (int c = 0; c < 5; ++c) {
            CHECK(sm3(r, c) >= 0.0);
            sum += sm3(r, c);
        }
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
    }

    // softmax over a non-terminal axis sums to one along that axis
    Tensor<double> y = random_tensor<double>(Shape{3, 4}, rng);
    Tensor<double> sm0 = softmax(y, 0);
    for (int c = 0; c < 4; ++c) {
        double sum = 0;
        for (int r = 0; r < 3; ++r) sum += sm0(r, c);
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
    }
}

TEST_CASE("layer_norm constant slice, two-point slice, affine collapse") {
    Tensor<double> gamma(Shape{4}, 1.0), beta(Shape{4});
    Tensor<double> constant(Shape{2, 4}, 5.0);
    Tensor<double> ln = layer_norm(constant, gamma, beta, 1e-5);
    for (std::int64_t i = 0; i < ln.numel(); ++i) CHECK(std::abs(ln[i]) < 1e-9);

    Tensor<double> g2(Shape{2}, 1.0), b2(Shape{2});
    Tensor<double> pair(Shape{1, 2}, {1, 3});
    Tensor<double> ln2 = layer_norm(pair, g2, b2, 0.0);
    CHECK(ln2(0, 0) == doctest::Approx(-1.0).epsilon(1e-12));
    CHECK(ln2(0, 1) == doctest::Approx(1.0).epsilon(1e-12));

    std::mt19937_64 rng(11);
    Tensor<double> x = random_tensor<double>(Shape{3, 4}, rng);
    Tensor<double> gz(Shape{4});  // gamma = 0
    Tensor<double> bz(Shape{4}, {1, 2, 3, 4});
    Tensor<double> ln3 = layer_norm(x, gz, bz, 1e-5);
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 4; ++c) CHECK(ln3(r, c) == bz(c));
}

TEST_CASE("gelu fixed points and normal-CDF oracle") {
    CHECK(gelu_scalar(0.0) == 0.0);
    CHECK(std::abs(gelu_scalar(10.0) - 10.0) < 1e-4);
    const double phi1 = 0.5 * std::erfc(-1.0 / std::sqrt(2.0));  // Phi(1)
    CHECK(phi1 == doctest::Approx(0.841345).epsilon(1e-5));
    CHECK(gelu_scalar(1.0) == doctest::Approx(0.841345).epsilon(1e-4));
}

TEST_CASE("rdft: constant signal, pure tone against the naive oracle, errors") {
    Tensor<double> constant(Shape{16}, 2.5);
    Spectrum<double> cs = rdft(constant);
    CHECK(std::abs(cs.data[0].real() - 16 * 2.5) < 1e-9);
    for (int k = 1; k < cs.bins(); ++k) CHECK(std::norm(cs.data[static_cast<std::size_t>(k)]) < 1e-18);

    const int T = 16;
    Tensor<double> tone(Shape{T});
    for (int t = 0; t < T; ++t) tone(t) = std::sin(2.0 * 3.14159265358979323846 * 3 * t / T);
    Spectrum<double> ts = rdft(tone);
    std::vector<std::complex<double>> oracle = dft_oracle(std::vector<double>(tone.data.begin(), tone.data.end()));
    for (int k = 0; k < ts.bins(); ++k) {
        CHECK(std::abs(ts.data[static_cast<std::size_t>(k)].real() - oracle[static_cast<std::size_t>(k)].real()) < 1e-9);
        CHECK(std::abs(ts.data[static_cast<std::size_t>(k)].imag() - oracle[static_cast<std::size_t>(k)].imag()) < 1e-9);
    }
    for (int k = 0; k < ts.bins(); ++k) {
        double energy = std::norm(ts.data[static_cast<std::size_t>(k)]);
        if (k == 3)
            CHECK(energy > 1.0);
        else
            CHECK(energy < 1e-18);
    }

    Tensor<double> tooshort(Shape{1});
    CHECK_THROWS_AS(rdft(tooshort), std::invalid_argument);
    Spectrum<double> s = rdft(constant);
    CHECK_THROWS_AS(irdft(s, 12), std::invalid_argument);
}

TEST_CASE_TEMPLATE("rdft/irdft roundtrip for T in {2,3,16,128}", S, float, double) {
    std::mt19937_64 rng(5);
    const double tol = std::is_same_v<S, float> ? 1e-6 : 1e-12;
    for (int T : {2, 3, 16, 128}) {
        Tensor<S> x = random_tensor<S>(Shape{3, T}, rng);
        Tensor<S> back = irdft(rdft(x), T);
        CHECK(static_cast<double>(max_abs_diff(back, x)) < tol);
    }
}

TEST_CASE("Parseval energy identity at 64-bit") {
    std::mt19937_64 rng(9);
    for (int T : {8, 15, 64}) {
        Tensor<double> x = random_tensor<double>(Shape{T}, rng);
        double time_energy = 0;
        for (auto v : x.data) time_energy += v * v;
        Spectrum<double> s = rdft(x);
        double freq_energy = std::norm(s.data[0]);
        const bool even = T % 2 == 0;
        for (int k = 1; k < s.bins(); ++k) {
            double e = std::norm(s.data[static_cast<std::size_t>(k)]);
            freq_energy += (even && k == s.bins() - 1) ? e : 2 * e;
        }
        freq_energy /= T;
        CHECK(std::abs(freq_energy - time_energy) / time_energy < 1e-9);
    }
}

TEST_CASE("backward: sum of squares, repeatability, non-scalar rejection") {
    Parameter<double> p(Tensor<double>(Shape{4}, {1, -2, 3, 0.5}));
    auto run = [&](Tape<double>& tape) {
        Value<double> x = tape.param(p);
        return sum_all(mul(x, x));
    };
    Tape<double> tape;
    Value<double> loss = run(tape);
    p.zero_grad();
    tape.backward(loss);
    for (int i = 0; i < 4; ++i) CHECK(p.grad(i) == doctest::Approx(2 * p.value(i)).epsilon(1e-12));

    Tensor<double> first = p.grad;
    p.zero_grad();
    tape.backward(loss);
    CHECK(max_abs_diff(first, p.grad) == 0.0);

    Tape<double> t2;
    Value<double> vec = t2.param(p);
    CHECK_THROWS_AS(t2.backward(vec), std::invalid_argument);
}

TEST_CASE("backward on linear->gelu->layer_norm->sum matches finite differences") {
    std::mt19937_64 rng(21);
    Parameter<double> w(random_tensor<double>(Shape{3, 4}, rng));
    Parameter<double> gamma(random_tensor<double>(Shape{4}, rng, 0.5, 1.5));
    Parameter<double> beta(random_tensor<double>(Shape{4}, rng));
    Tensor<double> x = random_tensor<double>(Shape{5, 3}, rng);
    Tensor<double> weights = random_tensor<double>(Shape{5, 4}, rng);

    auto run = [&](Tape<double>& tape) {
        Value<double> h = matmul(tape.constant(x), tape.param(w));
        h = gelu(h);
        h = layer_norm_last(h, tape.param(gamma), tape.param(beta), 1e-5);
        return weighted_sum(tape, h, weights);
    };
    double err = check_gradients<double>(run, {&w, &gamma, &beta}, 1e-5);
    CHECK(err < 1e-4);
}

TEST_CASE("finite_diff_grad basics") {
    Parameter<double> p(Tensor<double>(Shape{1}, {3.0}));
    auto square = [&]() { return p.value(0) * p.value(0); };
    Tensor<double> g = finite_diff_grad<double>(square, p, 1e-5);
    CHECK(g(0) == doctest::Approx(6.0).epsilon(1e-6));

    auto constant = [&]() { return 42.0; };
    Tensor<double> gz = finite_diff_grad<double>(constant, p, 1e-5);
    CHECK(gz(0) == 0.0);
}

TEST_CASE("every tape primitive passes a finite-difference check") {
    std::mt19937_64 rng(33);
    auto check_unary = [&](auto make, Shape in_shape, Shape out_shape) {
        Parameter<double> p(random_tensor<double>(in_shape, rng));
        Tensor<double> weights = random_tensor<double>(out_shape, rng);
        auto run = [&](Tape<double>& tape) { return weighted_sum(tape, make(tape, tape.param(p)), weights); };
        CHECK(check_gradients<double>(run, {&p}, 1e-5) < 1e-4);
    };

    check_unary([](Tape<double>&, Value<double> v) { return scale(v, 2.5); }, Shape{3, 4}, Shape{3, 4});
    check_unary([](Tape<double>&, Value<double> v) { return gelu(v); }, Shape{3, 4}, Shape{3, 4});
    check_unary([](Tape<double>&, Value<double> v) { return softmax_last(v); }, Shape{3, 4}, Shape{3, 4});
    check_unary([](Tape<double>&, Value<double> v) { return normalize_last(v, 1e-5); }, Shape{3, 4}, Shape{3, 4});
    check_unary([](Tape<double>&, Value<double> v) { return reshape(v, Shape{4, 3}); }, Shape{3, 4}, Shape{4, 3});
    check_unary([](Tape<double>&, Value<double> v) { return permute(v, {1, 2, 0}); }, Shape{2, 3, 4}, Shape{3, 4, 2});
    check_unary([](Tape<double>&, Value<double> v) { return tile0(v, 3); }, Shape{2, 4}, Shape{3, 2, 4});
    check_unary([](Tape<double>&, Value<double> v) { return lowpass_last(v, 3); }, Shape{2, 8}, Shape{2, 8});

    auto check_binary = [&](auto make, Shape a_shape, Shape b_shape, Shape out_shape) {
        Parameter<double> a(random_tensor<double>(a_shape, rng));
        Parameter<double> b(random_tensor<double>(b_shape, rng));
        Tensor<double> weights = random_tensor<double>(out_shape, rng);
        auto run = [&](Tape<double>& tape) {
            return weighted_sum(tape, make(tape.param(a), tape.param(b)), weights);
        };
        CHECK(check_gradients<double>(run, {&a, &b}, 1e-5) < 1e-4);
    };

    check_binary([](Value<double> a, Value<double> b) { return add(a, b); }, Shape{3, 4}, Shape{3, 4}, Shape{3, 4});
    check_binary([](Value<double> a, Value<double> b) { return sub(a, b); }, Shape{3, 4}, Shape{3, 4}, Shape{3, 4});
    check_binary([](Value<double> a, Value<double> b) { return mul(a, b); }, Shape{3, 4}, Shape{3, 4}, Shape{3, 4});
    check_binary([](Value<double> a, Value<double> b) { return matmul(a, b); }, Shape{3, 4}, Shape{4, 2}, Shape{3, 2});
    check_binary([](Value<double> a, Value<double> b) { return lmatmul(a, b); }, Shape{2, 3}, Shape{4, 3, 5},
                 Shape{4, 2, 5});
    check_binary([](Value<double> a, Value<double> b) { return bmm(a, b); }, Shape{2, 3, 4}, Shape{2, 4, 5},
                 Shape{2, 3, 5});
    check_binary([](Value<double> a, Value<double> b) { return bmm_nt(a, b); }, Shape{2, 3, 4}, Shape{2, 5, 4},
                 Shape{2, 3, 5});
    check_binary([](Value<double> a, Value<double> b) { return mul_rowvec(a, b); }, Shape{3, 4}, Shape{4}, Shape{3, 4});
    check_binary([](Value<double> a, Value<double> b) { return add_rowvec(a, b); }, Shape{3, 4}, Shape{4}, Shape{3, 4});
    check_binary([](Value<double> a, Value<double> b) { return mul_brow(a, b); }, Shape{2, 3, 4}, Shape{2, 1, 4},
                 Shape{2, 3, 4});
}

TEST_CASE("identical inputs and seed give bitwise-identical forward outputs") {
    auto run_once = [](std::uint64_t seed) {
        std::mt19937_64 rng(seed);
        Tensor<float> x = random_tensor<float>(Shape{6, 8}, rng);
        Parameter<float> w(random_tensor<float>(Shape{8, 8}, rng));
        Tape<float> tape;
        Value<float> h = matmul(tape.constant(x), tape.param(w));
        h = gelu(h);
        h = softmax_last(h);
        return h.val();
    };
    Tensor<float> a = run_once(99), b = run_once(99);
    REQUIRE(a.numel() == b.numel());
    CHECK(std::memcmp(a.ptr(), b.ptr(), sizeof(float) * static_cast<std::size_t>(a.numel())) == 0);
}

TEST_CASE("forward operations keep finite inputs finite") {
    std::mt19937_64 rng(55);
    Tensor<double> x = random_tensor<double>(Shape{4, 6}, rng, -100.0, 100.0);
    CHECK(all_finite(softmax(x, 1)));
    CHECK(all_finite(gelu(x)));
    Tensor<double> gamma(Shape{6}, 1.0), beta(Shape{6});
    CHECK(all_finite(layer_norm(x, gamma, beta, 1e-5)));
    CHECK(all_finite(low_pass_filter(x, 2)));
}
