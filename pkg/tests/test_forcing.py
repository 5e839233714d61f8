import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from snsp.forcing import (
    NoiseModel,
    Stream,
    apply_noise,
    eval_g,
    eval_g_eps,
    ito_correction,
    validate_noise_model,
    wiener_increments,
)
from snsp.spectral import GridSpec
from snsp.stepper import initial_state

from conftest import random_smooth


def _state(grid, rng, amp=0.3, vel=0.5, f=0.5):
    rho = 1.0 + amp * np.tanh(random_smooth(grid, rng, grid.N))
    return initial_state(grid, rho, vel * random_smooth(grid, rng, grid.N, 3), f=np.full(grid.shape, f))


def _full_project(a, N):
    """Projection with a complex full FFT, independent of the library transforms."""
    M = a.shape[-1]
    n = np.abs(np.fft.fftfreq(M, 1.0 / M))
    keep = (n[:, None, None] <= N) & (n[None, :, None] <= N) & (n[None, None, :] <= N)
    return np.real(np.fft.ifftn(np.fft.fftn(a, axes=(-3, -2, -1)) * keep, axes=(-3, -2, -1)))


class TestWienerIncrements:
    def test_zero_step(self):
        inc = wiener_increments(0.0, 5, Stream(1))
        assert np.all(inc.values == 0)

    def test_deterministic(self):
        a = wiener_increments(0.1, 8, Stream(42, 3, 17))
        b = wiener_increments(0.1, 8, Stream(42, 3, 17))
        assert np.array_equal(a.values, b.values)
        assert not a.values.flags.writeable

    def test_streams_differ(self):
        base = wiener_increments(0.1, 8, Stream(42, 3, 17)).values
        for s in (Stream(43, 3, 17), Stream(42, 4, 17), Stream(42, 3, 18), Stream(42, 3, 17, 1)):
            assert not np.array_equal(base, wiener_increments(0.1, 8, s).values)

    def test_prefix_stable(self):
        # more modes extend the draw without changing the leading ones
        a = wiener_increments(0.1, 4, Stream(7)).values
        b = wiener_increments(0.1, 9, Stream(7)).values
        assert np.array_equal(a, b[:4])

    def test_variance(self):
        v = wiener_increments(0.01, 100_000, Stream(2024)).values
        assert 0.0097 <= v.var(ddof=1) <= 0.0103
        across = np.concatenate([wiener_increments(0.01, 100, Stream(5, 0, n)).values for n in range(1000)])
        assert 0.0097 <= across.var(ddof=1) <= 0.0103

    def test_negative_step(self):
        with pytest.raises(ValueError):
            wiener_increments(-1.0, 2, Stream(0))

    def test_at(self):
        s = Stream(1, 2).at(5, 3)
        assert s == Stream(1, 2, 5, 3)


class TestCoefficients:
    def test_default_decay(self):
        m = NoiseModel(K=4, C=0.5)
        assert np.allclose(m.c, 0.5 / np.arange(1, 5) ** 2)

    def test_custom_needs_weights(self):
        with pytest.raises(ValueError):
            NoiseModel(K=2, g=lambda k, x, r, f, m: m)

    def test_family_formula(self):
        model = NoiseModel(K=2, C=1.0, alpha=[[1, 0, 0], [0, 2, 0]], beta=[[0, 0, 1], [0, 0, 0]], eta=[0.5, 0.0])
        m = np.array([1.0, 2.0, 3.0])
        assert np.allclose(eval_g(1, None, 2.0, 3.0, m, model), [1 * 2 + 0.5, 1.0, 3.0 + 1.5])
        assert np.allclose(eval_g(2, None, 2.0, 3.0, m, model), 0.25 * np.array([0.0, 4.0, 0.0]))

    def test_cutoff_inactive(self):
        model = NoiseModel(K=1, C=1.0)
        eps = 0.2
        rho, m = 0.5, np.array([1.0, 0.0, 0.0])  # rho >= eps, |u| = 2 <= 1/eps - 1
        assert np.array_equal(eval_g_eps(1, None, rho, 0.0, m, eps, model), eval_g(1, None, rho, 0.0, m, model))

    def test_cutoff_low_density(self):
        model = NoiseModel(K=1, C=1.0)
        assert np.all(eval_g_eps(1, None, 0.05, 0.0, np.array([0.01, 0, 0]), 0.1, model) == 0)

    def test_vacuum_guard(self):
        model = NoiseModel(K=1, C=1.0, alpha=[[1, 1, 1]])
        out = eval_g_eps(1, None, np.array([0.0, 1.0]), np.zeros(2), np.zeros((3, 2)), 0.1, model)
        assert np.all(np.isfinite(out))
        assert np.all(out[:, 0] == 0) and np.all(out[:, 1] != 0)

    def test_linear_in_momentum_bound(self):
        c = np.array([0.3])
        model = NoiseModel(K=1, c=c, g=lambda k, x, r, f, m: c[k - 1] * np.asarray(m))
        ratios = []
        for s in (0.1, 1.0, 10.0, 1e4):
            m = s * np.array([0.6, 0.8, 0.0])
            g = eval_g(1, None, 1.0, 0.0, m, model)
            assert np.linalg.norm(g) == pytest.approx(0.3 * s)
            ratios.append(np.linalg.norm(g) / (0.3 * (1.0 + 0.0 + s)))
        assert all(r <= 1 for r in ratios)
        assert ratios[-1] > 0.999


class TestApplyNoise:
    def test_zero_increment(self, rng):
        g = GridSpec(12, N=3)
        s = _state(g, rng)
        inc = wiener_increments(0.0, 3, Stream(1))
        assert np.all(apply_noise(s, inc, NoiseModel(K=3, C=1.0, shape="fourier"), g.N) == 0)

    def test_single_mode_in_galerkin_space(self):
        g = GridSpec(16, N=4)
        x, y, z = g.coords
        rho = 1.0 + 0.3 * np.cos(x)
        s = initial_state(g, rho, np.zeros((3, *g.shape)), f=np.ones(g.shape))
        model = NoiseModel(K=1, C=1.0, alpha=[[1.0, 0.5, 0.0]], eta=[0.0], shape="fourier")
        inc = wiener_increments(0.1, 1, Stream(3))
        once = g.project(rho * model.c[0] * np.stack([rho, 0.5 * rho, 0 * rho]) * np.cos(x), g.N) * inc.values[0]
        assert np.allclose(apply_noise(s, inc, model, g.N), once, atol=1e-13)

    def test_brute_force_accumulation(self, rng):
        g = GridSpec(12, L=3.0, N=3)
        s = _state(g, rng, vel=3.0)
        K = 4
        model = NoiseModel(K=K, C=0.7, shape="fourier", eps=0.4, alpha=rng.uniform(-1, 1, (K, 3)),
                           beta=rng.uniform(-1, 1, (K, 3)), eta=rng.uniform(-1, 1, K))
        inc = wiener_increments(0.05, K, Stream(9))
        rho, u, f = s.rho_values, s.u_values, s.f_values
        x = 2 * np.pi / g.L * np.arange(g.M) * g.dx
        X = np.meshgrid(x, x, x, indexing="ij")
        speed = np.sqrt(np.sum(u**2, axis=0))

        def chi(v):
            v = np.clip(v, 0, 1)
            return 1 - v * v * (3 - 2 * v)

        cut = chi(0.4 / rho - 1) * chi(speed - 1 / 0.4)
        acc = np.zeros((3, *g.shape))
        for k in range(K):
            phi = np.cos((1 + (k // 3) % g.N) * X[k % 3])
            gk = np.stack([model.c[k] * (model.alpha[k, i] * rho + model.beta[k, i] * f + model.eta[k] * rho * u[i])
                           for i in range(3)]) * phi * cut
            acc += _full_project(rho * _full_project(gk, g.N), g.N) * inc.values[k]
        assert np.allclose(apply_noise(s, inc, model, g.N), acc, atol=1e-12)
        assert cut.min() < 1  # the speed cut-off is exercised

    def test_kick_in_galerkin_space(self, rng):
        g = GridSpec(12, N=3)
        s = _state(g, rng)
        inc = wiener_increments(0.1, 5, Stream(4))
        kick = apply_noise(s, inc, NoiseModel(K=5, C=1.0, shape="fourier"), g.N)
        assert np.allclose(g.project(kick, g.N), kick, atol=1e-12)

    def test_mean_zero_over_paths(self, rng):
        g = GridSpec(8, N=2)
        s = _state(g, rng)
        model = NoiseModel(K=2, C=1.0, shape="fourier")
        kicks = np.stack([apply_noise(s, wiener_increments(0.01, 2, Stream(77, p)), model, g.N).ravel()
                          for p in range(2000)])
        sd = kicks.std(axis=0, ddof=1)
        live = sd > 1e-12
        assert np.all(np.abs(kicks.mean(axis=0)[live]) <= 4 * sd[live] / np.sqrt(2000))


class TestItoCorrection:
    def test_zero_coefficients(self, rng):
        g = GridSpec(8, N=2)
        s = _state(g, rng)
        model = NoiseModel(K=2, c=[0.0, 0.0], g=lambda k, x, r, f, m: np.zeros((3, *np.shape(r))))
        assert ito_correction(s, model, g.N) == 0.0

    def test_constant_coefficient(self):
        L = 2.5
        g = GridSpec(8, L=L, N=2)
        s = initial_state(g, np.ones(g.shape))
        cvec = np.array([0.3, -0.4, 1.2])
        model = NoiseModel(K=1, c=[1.3], g=lambda k, x, r, f, m: cvec[:, None, None, None] * np.ones_like(r))
        assert ito_correction(s, model, g.N) == pytest.approx(0.5 * cvec @ cvec * L**3, rel=1e-13)

    def test_brute_force(self, rng):
        g = GridSpec(12, N=3)
        s = _state(g, rng)
        model = NoiseModel(K=3, C=1.0, shape="fourier", alpha=rng.uniform(-1, 1, (3, 3)))
        phi = model.shape_functions(g)
        rho, m = s.rho_values, s.rho_values * s.u_values
        total = 0.0
        for k in range(3):
            pg = _full_project(eval_g(k + 1, g, rho, s.f_values, m, model, phi[k]), g.N)
            total += 0.5 * np.sum(rho * np.sum(pg**2, axis=0)) * g.cell_volume
        assert ito_correction(s, model, g.N) == pytest.approx(total, rel=1e-12)

    @pytest.mark.parametrize("lam", [0.5, 2.0])
    def test_quadratic_scaling(self, rng, lam):
        g = GridSpec(8, N=2)
        s = _state(g, rng)
        base = NoiseModel(K=2, C=1.0, shape="fourier", alpha=[[1, 0, 0], [0, 1, 1]])
        scaled = NoiseModel(K=2, c=lam * base.c, shape="fourier", alpha=base.alpha)
        assert ito_correction(s, scaled, g.N) == pytest.approx(lam**2 * ito_correction(s, base, g.N), rel=1e-12)


class TestValidateNoiseModel:
    @staticmethod
    def samples(rng, n=50, scale=10.0):
        return [(None, float(r), float(f), rng.normal(size=3)) for r, f in
                zip(rng.uniform(0, scale, n), rng.uniform(0, 2, n))]

    def test_linear_family_passes(self, rng):
        K = 5
        c = np.arange(1, K + 1, dtype=float) ** -2
        model = NoiseModel(K=K, c=c, g=lambda k, x, r, f, m: c[k - 1] * np.array([r, r, r]) / 3)
        rep = validate_noise_model(model, self.samples(rng))
        assert rep.passed, rep.violations
        assert rep.growth_ratio <= 1

    def test_summability_budget(self, rng):
        K = 10_000
        model = NoiseModel(K=K, c=np.ones(K), g=lambda k, x, r, f, m: np.zeros(3))
        rep = validate_noise_model(model, self.samples(rng, 2))
        assert not rep.passed
        assert rep.summability == pytest.approx(1e4)

    def test_quadratic_density_fails_derivative(self, rng):
        c = np.array([0.5])
        model = NoiseModel(K=1, c=c, g=lambda k, x, r, f, m: c[0] * np.array([r**2, 0.0, 0.0]))
        rep = validate_noise_model(model, self.samples(rng, 30, scale=20.0))
        assert not rep.passed
        assert rep.derivative_ratio > 10
        assert any("derivative" in v for v in rep.violations)

    @settings(max_examples=20, deadline=None)
    @given(st.integers(1, 6), st.integers(0, 2**31))
    def test_default_family_always_passes(self, K, seed):
        rng = np.random.default_rng(seed)
        a = rng.uniform(-1, 1, (K, 3))
        a /= np.maximum(1.0, np.linalg.norm(a, axis=1))[:, None] * np.sqrt(2)
        eta = rng.uniform(-1, 1, K) / np.sqrt(2)
        b = rng.uniform(-1, 1, (K, 3))
        b /= np.maximum(1.0, np.linalg.norm(b, axis=1))[:, None]
        model = NoiseModel(K=K, C=0.5, alpha=a, beta=b, eta=eta)
        assert validate_noise_model(model, self.samples(rng, 10)).passed
