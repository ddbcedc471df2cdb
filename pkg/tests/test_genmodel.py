import math
from dataclasses import replace
from itertools import combinations

import numpy as np
import pytest
from hypothesis import given, strategies as st

from utlearn.fileio import write_matrix
from utlearn.genmodel import (
    Dct,
    EpsilonBall,
    FromFile,
    Gaussian,
    Identity,
    RandGaussian,
    ScaledSigns,
    TruncatedExponential,
    Uniform01,
    UniformAnnulus,
    Zero,
    dct_matrix,
    epsilon_for_support_recovery,
    gen_sparse_codes,
    gen_unitary,
    generate_model,
    init_label,
    make_init,
    normalize_model,
    parse_distribution,
    parse_init,
    synthesize,
)
from utlearn.linops import spectral_norm

ALL_DISTS = [Gaussian(), ScaledSigns(), UniformAnnulus(), TruncatedExponential(2.0), TruncatedExponential(5.0)]


class TestUnitary:
    def test_n1(self):
        w = gen_unitary(1, 0)
        assert w.shape == (1, 1) and abs(w[0, 0]) == 1.0

    def test_deterministic(self):
        assert np.array_equal(gen_unitary(7, 11), gen_unitary(7, 11))
        assert not np.array_equal(gen_unitary(7, 11), gen_unitary(7, 12))

    @pytest.mark.parametrize("seed", [0, 1, 99])
    def test_orthonormal_n50(self, seed):
        w = gen_unitary(50, seed)
        assert np.linalg.norm(w.T @ w - np.eye(50)) <= 5e-9

    def test_bad_n(self):
        with pytest.raises(ValueError):
            gen_unitary(0, 0)


class TestSparseCodes:
    def test_full_support(self):
        z = gen_sparse_codes(6, 30, 6, "gaussian", 0)
        assert np.all(z != 0)

    @given(st.integers(1, 12).flatmap(lambda n: st.tuples(st.just(n), st.integers(1, n))),
           st.sampled_from(["gaussian", "signs", "uniform", "texp"]), st.integers(0, 2**31))
    def test_exact_sparsity(self, ns, dist, seed):
        n, s = ns
        z = gen_sparse_codes(n, 25, s, dist, seed)
        assert np.all(np.count_nonzero(z, axis=0) == s)

    def test_gaussian_variance(self):
        z = gen_sparse_codes(50, 10000, 5, "gaussian", 0)
        vals = z[z != 0]
        assert vals.size == 50000
        assert abs(vals.var() / 1e-3 - 1) < 0.05

    def test_signs_magnitude(self):
        z = gen_sparse_codes(50, 1000, 5, "signs", 3)
        vals = np.abs(z[z != 0])
        assert np.all(vals == math.sqrt(50 / (5 * 1000)))

    @pytest.mark.parametrize("dist", ALL_DISTS, ids=lambda d: repr(d))
    def test_moments(self, dist):
        n, bigN, s = 50, 20000, 5
        v = n / (s * bigN)
        vals = gen_sparse_codes(n, bigN, s, dist, 5)
        vals = vals[vals != 0]
        se = math.sqrt(v / vals.size)
        assert abs(vals.mean()) <= 4 * se
        assert abs(vals.var() / v - 1) < 0.05

    def test_support_uniformity(self):
        n, s, m = 10, 2, 100_000
        z = gen_sparse_codes(n, m, s, "signs", 0)
        rows = np.nonzero(z.T)[1].reshape(m, s)
        counts = {c: 0 for c in combinations(range(n), s)}
        for r in map(tuple, np.sort(rows, axis=1)):
            counts[r] += 1
        p = 1 / 45
        se = math.sqrt(p * (1 - p) / m)
        for c in counts.values():
            assert abs(c / m - p) <= 4 * se

    def test_deterministic(self):
        a = gen_sparse_codes(20, 100, 3, "texp:3", 9)
        b = gen_sparse_codes(20, 100, 3, "texp:3", 9)
        assert np.array_equal(a, b)

    def test_invalid_s(self):
        with pytest.raises(ValueError):
            gen_sparse_codes(5, 10, 6, "gaussian", 0)
        with pytest.raises(ValueError):
            gen_sparse_codes(5, 10, 0, "gaussian", 0)


class TestDistributions:
    def test_uniform_defaults(self):
        v = 1e-3
        b, c = UniformAnnulus().bounds(v)
        assert b == pytest.approx(math.sqrt(12 * v / 7)) and c == pytest.approx(math.sqrt(3 * v / 7))

    def test_uniform_custom_validated(self):
        v = 1.0
        b = 1.6
        _, c = UniformAnnulus(b=b).bounds(v)
        assert (b * b + b * c + c * c) / 3 == pytest.approx(v, rel=1e-12)
        with pytest.raises(ValueError):
            UniformAnnulus(b=1.6, c=0.1).bounds(v)
        with pytest.raises(ValueError):
            UniformAnnulus(c=0.5).bounds(v)

    @pytest.mark.parametrize("K", [1.5, 2.0, 4.0, 10.0])
    def test_texp_identities(self, K):
        d = TruncatedExponential(K)
        a, c, b = d.params(1e-3)
        assert a * c == pytest.approx(math.log(K) / (K - 1), rel=1e-15)
        assert b == K * c
        mags = np.abs(d.sample(np.random.default_rng(0), 50000, 1e-3))
        assert mags.min() >= c and mags.max() <= b

    def test_texp_invalid(self):
        with pytest.raises(ValueError):
            TruncatedExponential(1.0).params(1.0)

    def test_parse(self):
        assert parse_distribution("gaussian") == Gaussian()
        assert parse_distribution("SIGNS") == ScaledSigns()
        assert parse_distribution("uniform:2:1") == UniformAnnulus(2.0, 1.0)
        assert parse_distribution("texp:3") == TruncatedExponential(3.0)
        with pytest.raises(ValueError):
            parse_distribution("laplace")


class TestSynthesize:
    def test_identity_transform(self):
        z = gen_sparse_codes(5, 20, 2, "gaussian", 0)
        m = synthesize(np.eye(5), z)
        assert np.array_equal(m.p, z)

    def test_noiseless_round_trip(self):
        m = generate_model(20, 300, 3, "gaussian", 1)
        assert np.linalg.norm(m.wstar @ m.p - m.zstar) <= 1e-12 * np.linalg.norm(m.zstar)
        assert spectral_norm(m.p) == pytest.approx(spectral_norm(m.zstar), rel=1e-10)

    def test_noise_level(self):
        m = generate_model(50, 10000, 5, "gaussian", 2, noise_sigma=0.01)
        expected = 0.01 * math.sqrt(50 * 10000)
        assert abs(np.linalg.norm(m.wstar @ m.p - m.zstar) / expected - 1) < 0.05
        assert m.noise_norm == pytest.approx(np.linalg.norm(m.wstar @ m.p - m.zstar), rel=1e-9)

    def test_validation(self):
        z = gen_sparse_codes(4, 10, 2, "gaussian", 0)
        with pytest.raises(ValueError):
            synthesize(np.eye(3), z)
        with pytest.raises(ValueError):
            synthesize(2 * np.eye(4), z)
        with pytest.raises(ValueError):
            synthesize(np.eye(4), z, noise_sigma=-1)
        z[0, :] = 1.0
        with pytest.raises(ValueError):
            synthesize(np.eye(4), z, s=2)

    def test_immutable(self):
        m = generate_model(5, 10, 2, "gaussian", 0)
        with pytest.raises(ValueError):
            m.p[0, 0] = 1.0

    def test_deterministic(self):
        a = generate_model(10, 50, 3, "uniform", 4, noise_sigma=0.1)
        b = generate_model(10, 50, 3, "uniform", 4, noise_sigma=0.1)
        for f in ("wstar", "zstar", "p", "noise_h"):
            assert np.array_equal(getattr(a, f), getattr(b, f))

    def test_a4_residual_decreases_with_N(self):
        res = []
        for bigN in (1000, 10000, 100000):
            vals = []
            for seed in range(5):
                z = gen_sparse_codes(50, bigN, 5, "gaussian", seed)
                vals.append(np.linalg.norm(z @ z.T - np.eye(50)))
            res.append(np.mean(vals))
        assert res[0] > res[1] > res[2]


class TestNormalize:
    def test_unit_norm(self):
        m = normalize_model(generate_model(20, 500, 4, "signs", 0, noise_sigma=0.01))
        assert abs(spectral_norm(m.p) - 1) <= 1e-10
        assert m.normalized

    def test_idempotent(self):
        m = normalize_model(generate_model(20, 500, 4, "gaussian", 0))
        m2 = normalize_model(m)
        assert np.max(np.abs(m2.p - m.p)) <= 1e-12 and np.max(np.abs(m2.zstar - m.zstar)) <= 1e-12

    def test_scale_invariant(self):
        m = generate_model(20, 500, 4, "gaussian", 0)
        big = synthesize(m.wstar, 7 * m.zstar)
        a, b = normalize_model(m), normalize_model(big)
        assert np.allclose(a.p, b.p, rtol=0, atol=1e-14)
        assert np.array_equal(a.zstar != 0, m.zstar != 0)

    def test_zero_data(self):
        m = synthesize(np.eye(2), np.vstack([np.ones(3), np.zeros(3)]))
        m = replace(m, p=np.zeros((2, 3)))
        with pytest.raises(ValueError):
            normalize_model(m)


@pytest.fixture(scope="module")
def model():
    return generate_model(8, 40, 2, "gaussian", 0)


class TestInit:
    @pytest.mark.parametrize("eps", [1e-6, 0.3, 5.0])
    def test_eps_ball_radius(self, model, eps):
        w0 = make_init(EpsilonBall(eps), model, 1)
        assert abs(np.linalg.norm(w0 - model.wstar) - eps) <= 1e-12

    def test_eps_positive(self):
        with pytest.raises(ValueError):
            EpsilonBall(0.0)

    def test_dct(self):
        d = dct_matrix(4)
        assert np.linalg.norm(d.T @ d - np.eye(4)) <= 1e-12
        # scipy's orthonormal DCT-II as an independent reference
        from scipy.fft import dct

        assert np.allclose(d, dct(np.eye(4), type=2, norm="ortho", axis=0))
        assert np.allclose(dct_matrix(16), dct(np.eye(16), type=2, norm="ortho", axis=0))

    def test_simple_specs(self, model):
        assert np.linalg.norm(make_init(Zero(), model)) == 0
        assert np.array_equal(make_init(Identity(), model), np.eye(8))
        assert np.array_equal(make_init(Dct(), model), dct_matrix(8))
        u = make_init(Uniform01(), model, 3)
        assert u.min() >= 0 and u.max() < 1
        g = make_init(RandGaussian(), model, 3)
        assert np.array_equal(g, make_init(RandGaussian(), model, 3))

    def test_from_file(self, model, tmp_path):
        w = np.arange(64.0).reshape(8, 8)
        write_matrix(tmp_path / "w.utlm", w)
        assert np.array_equal(make_init(FromFile(str(tmp_path / "w.utlm")), model), w)
        write_matrix(tmp_path / "bad.utlm", np.eye(3))
        with pytest.raises(ValueError):
            make_init(FromFile(str(tmp_path / "bad.utlm")), model)

    def test_parse_and_label(self):
        assert parse_init("eps") == "eps"
        assert parse_init("eps:0.1") == EpsilonBall(0.1)
        assert parse_init("file:/x") == FromFile("/x")
        for text in ("rand", "id", "dct", "unif", "zero"):
            assert init_label(parse_init(text)) == text
        assert init_label(EpsilonBall(1.0)) == "eps"
        with pytest.raises(ValueError):
            parse_init("ones")
        with pytest.raises(ValueError):
            parse_init("file:")


class TestEpsilonForRecovery:
    def test_signs(self):
        m = generate_model(20, 200, 4, "signs", 0)
        assert epsilon_for_support_recovery(m, 0.5) == pytest.approx(0.25, rel=1e-12)

    def test_hand_column(self):
        assert epsilon_for_support_recovery(np.array([[3.0], [4.0], [0.0]]), 0.5) == pytest.approx(0.3)

    def test_uniform_lower_bound(self):
        m = generate_model(20, 2000, 4, "uniform", 0)
        assert epsilon_for_support_recovery(m, 0.5) >= 0.125

    def test_errors(self):
        with pytest.raises(ValueError):
            epsilon_for_support_recovery(np.array([[1.0, 0.0]]), 0.5)
        with pytest.raises(ValueError):
            epsilon_for_support_recovery(np.eye(2), 0.6)
