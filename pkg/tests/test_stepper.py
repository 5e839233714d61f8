import numpy as np
import pytest

from snsp.forcing import NoiseModel, Stream, wiener_increments
from snsp.spectral import GridSpec, ScalarField, VectorField
from snsp.stepper import (
    SolverFailure,
    StepperConfig,
    StepRejected,
    advance,
    initial_state,
    mass_matrix_apply,
    mass_matrix_solve,
    run_trajectory,
    step_continuity,
    step_momentum,
    velocity_cutoff,
)
from snsp.thermodynamics import PressureLaw, RegularizationParams

from conftest import random_smooth


def _density(g, rng, amp=0.3, nmax=None):
    return 1.0 + amp * np.tanh(random_smooth(g, rng, g.N if nmax is None else nmax))


def _shear(g, a=0.2):
    u = np.zeros((3, *g.shape))
    u[0] = a * np.sin(g.coords[1])
    return u


class TestVelocityCutoff:
    @pytest.mark.parametrize("offset, want", [(-5.0, 1.0), (2.0, 0.0), (0.5, 0.5)])
    def test_values(self, offset, want):
        g = GridSpec(8, N=2)
        R = 10.0
        s = (R + offset) / np.sqrt(g.volume)  # a constant velocity with this L2 norm
        u = VectorField(g, np.stack([np.full(g.shape, s), np.zeros(g.shape), np.zeros(g.shape)]))
        assert velocity_cutoff(u, R) == pytest.approx(want, abs=1e-12)

    def test_projection_applied(self):
        g = GridSpec(12, N=2)
        u = np.zeros((3, *g.shape))
        u[1] = 100 * np.cos(5 * g.coords[0])  # invisible to the Galerkin space
        assert velocity_cutoff(VectorField(g, u), 1.0, N=2) == 1.0
        assert velocity_cutoff(VectorField(g, u), 1.0) == 0.0


class TestMassMatrix:
    def test_constant_density(self, rng):
        g = GridSpec(16, N=4)
        m = random_smooth(g, rng, 4, 3)
        u, info = mass_matrix_solve(np.full(g.shape, 2.5), m, 4, grid=g)
        assert np.allclose(u.values, m / 2.5, atol=1e-14)
        assert info["iterations"] <= 1
        assert info["condition"] == pytest.approx(1.0)

    def test_round_trip(self, rng):
        g = GridSpec(16, N=4)
        rho = ScalarField(g, _density(g, rng, 0.6))
        u = random_smooth(g, rng, 4, 3)
        u_back, info = mass_matrix_solve(rho, mass_matrix_apply(rho, u, 4), 4, tol=1e-12)
        assert np.max(np.abs(u_back.values - u)) <= 1e-9 * np.max(np.abs(u))
        assert info["residual"] <= 1e-11
        assert info["condition"] >= 1

    def test_symmetric_positive(self, rng):
        g = GridSpec(12, N=3)
        rho = ScalarField(g, _density(g, rng, 0.5))
        a, b = random_smooth(g, rng, 3, 3), random_smooth(g, rng, 3, 3)
        Aa, Ab = mass_matrix_apply(rho, a, 3).values, mass_matrix_apply(rho, b, 3).values
        assert np.vdot(Aa, b) == pytest.approx(np.vdot(a, Ab), rel=1e-12)
        assert np.vdot(Aa, a) >= rho.values.min() * np.vdot(a, a) * (1 - 1e-12)

    def test_lipschitz_in_density(self, rng):
        g = GridSpec(12, N=3)
        rho = _density(g, rng, 0.3)
        m = random_smooth(g, rng, 3, 3)
        u0 = mass_matrix_solve(rho, m, 3, tol=1e-13, grid=g)[0].values
        for d in (1e-2, 1e-3, 1e-4):
            pert = d * np.cos(g.coords[2])
            u1 = mass_matrix_solve(rho + pert, m, 3, tol=1e-13, grid=g)[0].values
            # |du| <= |m| |drho| / rho_min^2 in the grid L2 norm
            bound = np.sqrt(np.sum(m**2)) * d / rho.min() ** 2
            assert np.sqrt(np.sum((u1 - u0) ** 2)) <= bound

    def test_solver_failure(self, rng):
        g = GridSpec(16, N=5)
        rho = 1e-3 + np.exp(4 * np.cos(g.coords[0]) * np.cos(g.coords[1]))
        with pytest.raises(SolverFailure) as exc:
            mass_matrix_solve(rho, random_smooth(g, rng, 5, 3), 5, maxiter=2, grid=g)
        assert exc.value.iterations == 2

    def test_floor(self):
        g = GridSpec(8, N=2)
        rho = np.ones(g.shape)
        rho[0, 0, 0] = 1e-9
        with pytest.raises(StepRejected) as exc:
            mass_matrix_solve(rho, np.ones((3, *g.shape)), 2, floor=1e-8, grid=g)
        assert exc.value.kind == "floor_violation"

    def test_zero_momentum(self):
        g = GridSpec(8, N=2)
        u, info = mass_matrix_solve(np.ones(g.shape), np.zeros((3, *g.shape)), 2, grid=g)
        assert np.all(u.values == 0) and info["iterations"] == 0


class TestStepContinuity:
    def test_heat_decay(self):
        g = GridSpec(16, N=4)
        rho = 1.0 + 0.3 * np.cos(2 * g.coords[0])
        out = step_continuity(ScalarField(g, rho), np.zeros((3, *g.shape)), 1.0, 0.1, 0.05)
        assert np.allclose(out.values, 1.0 + 0.3 * np.exp(-4 * 0.1 * 0.05) * np.cos(2 * g.coords[0]), atol=1e-14)

    def test_constant_density_divergence_free(self):
        g = GridSpec(16, N=4)
        out = step_continuity(ScalarField(g, np.full(g.shape, 1.7)), _shear(g, 3.0), 1.0, 0.0, 0.1)
        assert np.allclose(out.values, 1.7, atol=1e-14)

    def test_mass_conserved(self, rng):
        g = GridSpec(16, N=4)
        rho = ScalarField(g, _density(g, rng))
        u = random_smooth(g, rng, 4, 3) * 0.2
        out = step_continuity(rho, u, 0.7, 0.05, 0.01)
        assert g.integral(out.values) == pytest.approx(g.integral(rho.values), rel=1e-14)

    def test_local_error_second_order(self):
        # constant transport: exact solution is a shift, Euler's local error is O(h^2)
        g = GridSpec(16, N=4)
        x = g.coords[0]
        c = 0.5
        u = np.zeros((3, *g.shape))
        u[0] = c
        errs = []
        for h in (0.02, 0.01, 0.005):
            out = step_continuity(ScalarField(g, 1 + 0.2 * np.sin(x)), u, 1.0, 0.0, h, tol_mp=None)
            errs.append(np.max(np.abs(out.values - (1 + 0.2 * np.sin(x - c * h)))))
        assert errs[0] / errs[1] == pytest.approx(4, rel=0.02)
        assert errs[1] / errs[2] == pytest.approx(4, rel=0.02)

    def test_envelope_rejection(self):
        g = GridSpec(16, N=4)
        x = g.coords[0]
        rho = 1 + 0.9 * np.sin(x)
        u = np.zeros((3, *g.shape))
        u[0] = 5.0
        with pytest.raises(StepRejected) as exc:
            step_continuity(ScalarField(g, rho), u, 1.0, 0.0, 0.5)
        assert exc.value.kind in ("envelope_violation", "floor_violation")


class TestStepMomentum:
    def test_stationary(self):
        g = GridSpec(12, N=3)
        s = initial_state(g, np.full(g.shape, 1.3), f=np.full(g.shape, 1.3))
        cfg = StepperConfig(h=0.1, params=RegularizationParams(delta=0.1, eps=0.2))
        m = step_momentum(s, s.rho, s.V, None, cfg)
        assert np.max(np.abs(m.values)) < 1e-15

    @pytest.mark.parametrize("eps, nu", [(0.0, 0.3), (0.2, 0.1)])
    def test_shear_decay_rate(self, eps, nu):
        # rho = f = 1 and a unit-wavenumber shear: only the diffusive terms act
        g = GridSpec(12, N=3)
        s = initial_state(g, np.ones(g.shape), _shear(g), f=np.ones(g.shape))
        h = 0.01
        cfg = StepperConfig(h=h, params=RegularizationParams(eps=eps, nu_S=nu, nu_B=0.4))
        m = step_momentum(s, s.rho, s.V, None, cfg)
        assert np.allclose(m.values, (1 - h * (eps + nu)) * s.m_values, atol=1e-15)

    def test_noise_isolated(self, rng):
        g = GridSpec(12, N=3)
        s = initial_state(g, _density(g, rng), 0.3 * random_smooth(g, rng, 3, 3), f=np.ones(g.shape))
        cfg = StepperConfig(h=0.01, params=RegularizationParams(eps=0.05))
        model = NoiseModel(K=3, C=1.0, shape="fourier")
        inc = wiener_increments(0.01, 3, Stream(11))
        rho_next = ScalarField(g, _density(g, rng))
        det = step_momentum(s, rho_next, s.V, None, cfg, model)
        sto = step_momentum(s, rho_next, s.V, inc, cfg, model)
        # the difference is the kick, linear in the increments
        inc2 = wiener_increments(0.01, 3, Stream(11))
        object.__setattr__(inc2, "values", 2 * inc.values)
        sto2 = step_momentum(s, rho_next, s.V, inc2, cfg, model)
        assert np.allclose(sto2.values - det.values, 2 * (sto.values - det.values), atol=1e-14)
        assert np.max(np.abs(sto.values - det.values)) > 1e-4
        assert np.allclose(g.project(sto.values, 3), sto.values, atol=1e-13)


class TestAdvance:
    def test_stationary(self):
        g = GridSpec(12, N=3)
        s = initial_state(g, np.full(g.shape, 0.8), f=np.full(g.shape, 0.8))
        cfg = StepperConfig(h=0.05, params=RegularizationParams(eps=0.1))
        new, diag = advance(s, cfg)
        assert np.allclose(new.rho_values, 0.8, atol=1e-15)
        assert np.max(np.abs(new.u_values)) < 1e-15
        assert new.t == pytest.approx(0.05) and new.step == 1
        assert diag.substeps == 1

    def test_stochastic_needs_stream(self):
        g = GridSpec(8, N=2)
        s = initial_state(g, np.ones(g.shape))
        with pytest.raises(ValueError):
            advance(s, StepperConfig(h=0.1), NoiseModel(K=1, C=1.0))

    def test_deterministic_given_stream(self, rng):
        g = GridSpec(12, N=3)
        s = initial_state(g, _density(g, rng), 0.2 * random_smooth(g, rng, 3, 3), f=np.ones(g.shape))
        cfg = StepperConfig(h=0.01, params=RegularizationParams(eps=0.05, nu_S=0.1))
        model = NoiseModel(K=2, C=1.0, shape="fourier")
        a, _ = advance(s, cfg, model, Stream(3, 1))
        b, _ = advance(s, cfg, model, Stream(3, 1))
        c, _ = advance(s, cfg, model, Stream(3, 2))
        assert np.array_equal(a.m_values, b.m_values)
        assert not np.array_equal(a.m_values, c.m_values)

    def test_cutoff_freezes_transport(self, rng):
        g = GridSpec(12, N=3)
        rho = _density(g, rng)
        u = 50 * random_smooth(g, rng, 3, 3)
        params = RegularizationParams(eps=0.1, R=1.0)
        s = initial_state(g, rho, u, f=np.ones(g.shape))
        assert velocity_cutoff(s.u, params.R) == 0.0
        new, diag = advance(s, StepperConfig(h=0.01, params=params))
        assert diag.chi == 0.0
        assert np.allclose(new.rho_values, g.heat(s.rho_values, 0.1 * 0.01), atol=1e-14)


class TestRunTrajectory:
    def _setup(self, rng):
        g = GridSpec(12, N=3)
        s = initial_state(g, _density(g, rng), 0.3 * random_smooth(g, rng, 3, 3), f=np.ones(g.shape))
        cfg = StepperConfig(h=0.01, law=PressureLaw(a=1, gamma=2),
                            params=RegularizationParams(delta=0.01, eps=0.05, nu_S=0.1), cadence=2)
        return s, cfg

    def test_zero_time(self, rng):
        s, cfg = self._setup(rng)
        traj = run_trajectory(s, 0.0, cfg)
        assert len(traj.records) == 1 and traj.final is s and not traj.diagnostics

    def test_bad_final_time(self, rng):
        s, cfg = self._setup(rng)
        with pytest.raises(ValueError):
            run_trajectory(s, 0.015, cfg)
        with pytest.raises(ValueError):
            run_trajectory(s, -1.0, cfg)

    def test_reproducible(self, rng):
        s, cfg = self._setup(rng)
        model = NoiseModel(K=2, C=0.5, shape="fourier")
        a = run_trajectory(s, 0.05, cfg, model, Stream(8))
        b = run_trajectory(s, 0.05, cfg, model, Stream(8))
        assert np.array_equal(a.final.m_values, b.final.m_values)
        assert [t for t, _ in a.records] == pytest.approx([0, 0.02, 0.04, 0.05])

    def test_galerkin_closure_and_mass(self, rng):
        s, cfg = self._setup(rng)
        traj = run_trajectory(s, 0.05, cfg, NoiseModel(K=2, C=0.5, shape="fourier"), Stream(1))
        g = s.grid
        for _, st in traj.records:
            assert np.allclose(g.project(st.u_values, st.N), st.u_values, atol=1e-13)
            assert np.allclose(g.project(st.m_values, st.N), st.m_values, atol=1e-13)
            assert st.mass == pytest.approx(s.mass, rel=1e-12)
        assert not traj.aborted
