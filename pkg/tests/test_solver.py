import math

import numpy as np
import pytest

from pelab import (DIRICHLET, PERIODIC, FieldState, GridSpec,
                   RangeExcursionError, RunConfig, cfl_dt, cfl_dt_coupled,
                   certify_window, cosh_potential, coupled_decomposition,
                   heat_coefficients, initial_field, laplacian, quadratic,
                   run, step_coupled, step_diffusion, step_scalar,
                   vector_norm, with_resolution)
from pelab.potentials import EllipticityWindow


def pgrid(size, n=1):
    return GridSpec(n=n, sizes=(size,) * n, h=1.0 / size, boundary=PERIODIC)


class TestCflDt:
    def test_worked_example(self):
        g = GridSpec(n=1, sizes=(128,), h=1.0 / 128, boundary=PERIODIC)
        w = EllipticityWindow(lam=1.0, Lam=2.0, r_max=1.0, samples=2, spacing=1.0)
        assert cfl_dt(g, w, 0.9) == pytest.approx(0.9 / (4 * 16384), rel=1e-14)

    def test_two_dimensional(self):
        g = GridSpec(n=2, sizes=(10, 10), h=0.1, boundary=PERIODIC)
        w = EllipticityWindow(lam=1.0, Lam=1.0, r_max=1.0, samples=2, spacing=1.0)
        assert cfl_dt(g, w, 1.0) == pytest.approx(0.0025, rel=1e-14)

    def test_doubling_Lambda_halves_dt(self):
        g = pgrid(64)
        w1 = EllipticityWindow(lam=1.0, Lam=1.0, r_max=1.0, samples=2, spacing=1.0)
        w2 = EllipticityWindow(lam=1.0, Lam=2.0, r_max=1.0, samples=2, spacing=1.0)
        assert cfl_dt(g, w1, 0.5) == pytest.approx(2 * cfl_dt(g, w2, 0.5), rel=1e-14)

    def test_coupled_effective_diffusivity_matches_window(self):
        # for the radial decomposition a + |c||H_z| = phi'' pointwise
        p = cosh_potential(1.0)
        g = pgrid(64)
        cc = coupled_decomposition(p)
        w = certify_window(p)
        assert cfl_dt_coupled(g, cc, 0.9) == pytest.approx(cfl_dt(g, w, 0.9), rel=1e-12)


class TestSteps:
    def test_constant_state_is_fixed_point(self):
        p = cosh_potential(1.0)
        g = pgrid(32)
        s = FieldState(grid=g, values=np.full((2, 32), 0.3), t=0.0)
        out = step_diffusion(s, p, 1e-5)
        assert np.array_equal(out.values, s.values)
        cc = coupled_decomposition(p)
        out2 = step_coupled(s, cc, 1e-5)
        assert np.abs(out2.values - s.values).max() < 1e-16

    def test_quadratic_step_equals_heat_stencil(self):
        # independent plain heat stencil as oracle
        p = quadratic(2.0)
        g = pgrid(64)
        x = g.coords(0)
        u = (0.5 * np.sin(2 * np.pi * x))[None]
        dt = cfl_dt(g, certify_window(p), 0.9)
        got = step_diffusion(FieldState(grid=g, values=u, t=0.0), p, dt)
        ref = u[0] + dt * (np.roll(u[0], 1) - 2 * u[0] + np.roll(u[0], -1)) / g.h ** 2
        assert np.abs(got.values[0] - ref).max() < 1e-15

    def test_heat_coefficients_step_is_componentwise_heat(self):
        # a = I, H = 0: the face fluxes telescope to the central stencil exactly
        rng = np.random.default_rng(0)
        g = pgrid(32)
        u = 0.2 * rng.standard_normal((2, 32))
        s = FieldState(grid=g, values=u, t=0.0)
        dt = 1e-5
        got = step_coupled(s, heat_coefficients(n_components=2), dt)
        ref = np.stack([u[c] + dt * laplacian(u[c], g) for c in range(2)])
        assert np.abs(got.values - ref).max() < 1e-14

    @pytest.mark.parametrize("boundary", [PERIODIC, DIRICHLET])
    def test_heat_coefficients_step_two_dimensional(self, boundary):
        rng = np.random.default_rng(8)
        size = 12
        h = 1.0 / size if boundary == PERIODIC else 1.0 / (size - 1)
        g = GridSpec(n=2, sizes=(size, size), h=h, boundary=boundary)
        u = 0.2 * rng.standard_normal((2, size, size))
        bv = None
        if boundary == DIRICHLET:
            ring = g.boundary_mask
            u[0][ring], u[1][ring] = 0.1, -0.2
            bv = (0.1, -0.2)
        s = FieldState(grid=g, values=u, t=0.0, boundary_values=bv)
        dt = 1e-5
        got = step_coupled(s, heat_coefficients(n_components=2), dt)
        ref = np.stack([u[c] + dt * laplacian(u[c], g) for c in range(2)])
        assert np.abs(got.values - ref).max() < 1e-15

    def test_scalar_identity_is_heat(self):
        g = pgrid(32)
        rng = np.random.default_rng(1)
        u = 0.3 * rng.standard_normal((1, 32))
        s = FieldState(grid=g, values=u, t=0.0)
        dt = 1e-5
        got = step_scalar(s, lambda v: v, dt)
        ref = u[0] + dt * laplacian(u[0], g)
        assert np.abs(got.values[0] - ref).max() < 1e-16

    def test_aligned_data_reduces_to_scalar(self):
        # u = U e evolves as e times the scalar flow with nonlinearity phi'
        p = cosh_potential(1.5)
        g = pgrid(128)
        e = np.array([0.6, 0.8]) / math.hypot(0.6, 0.8)
        U = 0.6 + initial_field(g, 1, {"kind": "bands", "kmax": 3, "amplitude": 0.3,
                                       "seed": 5}, 5)
        vec = FieldState(grid=g, values=np.stack([U[0] * e[0], U[0] * e[1]]), t=0.0)
        sca = FieldState(grid=g, values=U.copy(), t=0.0)
        dt = cfl_dt(g, certify_window(p), 0.9)
        for _ in range(200):
            vec = step_diffusion(vec, p, dt)
            sca = step_scalar(sca, p.phi1, dt, r_max=p.r_max)
        ref = np.stack([sca.values[0] * e[0], sca.values[0] * e[1]])
        assert np.abs(vec.values - ref).max() <= 1e-13

    def test_range_excursion_aborts_with_location(self):
        p = cosh_potential(1.0)
        g = pgrid(32)
        u = np.full((1, 32), 0.2)
        u[0, 7] = 1.5
        with pytest.raises(RangeExcursionError, match=r"\(7,\)") as exc:
            step_diffusion(FieldState(grid=g, values=u, t=0.0), p, 1e-5)
        assert exc.value.location == (7,)

    def test_nan_production_aborts(self):
        # an absurd dt overflows the update into non-finite territory
        p = quadratic(1e160)
        g = pgrid(32)
        u = initial_field(g, 1, {"kind": "mode", "amplitude": 1.0}, 0)
        s = FieldState(grid=g, values=u, t=0.0)
        with np.errstate(over="ignore", invalid="ignore"):
            with pytest.raises(RangeExcursionError, match="non-finite"):
                for _ in range(400):
                    s = step_scalar(s, lambda v: v * 1e150, 1e3)


class TestInitialData:
    def test_bands_are_resolution_independent(self):
        spec = {"kind": "bands", "kmax": 3, "amplitude": 0.5, "seed": 9}
        coarse = initial_field(pgrid(64), 2, spec, 9)
        fine = initial_field(pgrid(128), 2, spec, 9)
        assert np.array_equal(coarse, fine[:, ::2])

    def test_bands_sup_bounded_by_amplitude(self):
        for seed in (1, 2, 3):
            u = initial_field(pgrid(64, n=2), 3,
                              {"kind": "bands", "kmax": 2, "amplitude": 0.4,
                               "seed": seed}, seed)
            assert vector_norm(u).max() <= 0.4 + 1e-12

    def test_offset_bands(self):
        u = initial_field(pgrid(64), 1, {"kind": "bands", "kmax": 2,
                                         "amplitude": 0.1, "seed": 1,
                                         "offset": [0.8]}, 1)
        assert 0.7 <= np.abs(u).min() and np.abs(u).max() <= 0.9 + 1e-12

    def test_mode_hits_amplitude_on_grid(self):
        u = initial_field(pgrid(128), 1, {"kind": "mode", "k": [1],
                                          "amplitude": 1.0}, 0)
        assert u.max() == 1.0  # sin hits +1 exactly at a grid point for size 128

    def test_two_bump_direction_split(self):
        u = initial_field(pgrid(64), 2, {"kind": "two_bump", "amplitude": 0.5}, 0)
        assert vector_norm(u).max() == pytest.approx(0.5, rel=1e-12)
        assert u[0].max() > 0.2 and u[1].max() > 0.2

    def test_dirichlet_mode_vanishes_on_boundary(self):
        g = GridSpec(n=1, sizes=(65,), h=1.0 / 64, boundary=DIRICHLET)
        u = initial_field(g, 1, {"kind": "mode", "k": [1], "amplitude": 0.5}, 0)
        assert abs(u[0, 0]) < 1e-15 and abs(u[0, -1]) < 1e-12

    def test_unknown_kind(self):
        with pytest.raises(ValueError, match="unknown initial-data kind"):
            initial_field(pgrid(8), 1, {"kind": "wavelet"}, 0)


class TestRun:
    def base(self, size=64, **kw):
        args = dict(grid=pgrid(size), n_components=1, potential=cosh_potential(1.0),
                    t_end=0.005, cfl_sigma=0.9, snapshot_every=4,
                    initial={"kind": "bands", "kmax": 3, "amplitude": 0.5, "seed": 7},
                    seed=7)
        args.update(kw)
        return RunConfig(**args)

    def test_zero_time_gives_single_snapshot(self):
        traj = run(self.base(t_end=0.0))
        assert len(traj.snapshots) == 1
        assert traj.snapshots[0].t == 0.0

    def test_heat_mode_decay_oracle(self):
        cfg = self.base(size=128, potential=quadratic(2.0), t_end=0.01,
                        snapshot_every=8,
                        initial={"kind": "mode", "k": [1], "amplitude": 1.0})
        traj = run(cfg)
        g = traj.grid
        s = np.sin(2 * np.pi * g.coords(0))
        amp = float(traj.final.values[0] @ s / (s @ s))
        lam_h = -(4.0 / g.h ** 2) * np.sin(np.pi * g.h) ** 2
        assert amp == pytest.approx((1 + traj.dt * lam_h) ** traj.meta["steps"], abs=1e-12)
        assert amp == pytest.approx(math.exp(-4 * math.pi ** 2 * 0.01), rel=0.01)

    def test_deterministic_repetition_is_bit_identical(self):
        a, b = run(self.base()), run(self.base())
        assert a.meta["config_hash"] == b.meta["config_hash"]
        for sa, sb in zip(a.snapshots, b.snapshots):
            assert np.array_equal(sa.values, sb.values)

    def test_mean_conservation(self):
        for system in ("diffusion", "coupled"):
            traj = run(self.base(system=system, n_components=2, t_end=0.01,
                                 initial={"kind": "bands", "kmax": 2,
                                          "amplitude": 0.4, "seed": 3}))
            m0 = traj.snapshots[0].values.mean(axis=1)
            mT = traj.final.values.mean(axis=1)
            assert np.abs(mT - m0).max() <= 1e-13, system

    def test_sup_norm_non_increasing(self):
        traj = run(self.base(n_components=2, t_end=0.01))
        sups = [vector_norm(s.values).max() for s in traj.snapshots]
        assert all(b <= a + 1e-10 for a, b in zip(sups, sups[1:]))

    def test_initial_range_certified(self):
        cfg = self.base(initial={"kind": "mode", "amplitude": 1.2})
        with pytest.raises(RangeExcursionError, match="r_max"):
            run(cfg)

    def test_coupled_diffusion_consistency_refines(self):
        errs = []
        init = {"kind": "bands", "kmax": 3, "amplitude": 0.5, "seed": 3}
        for size in (128, 256):
            td = run(self.base(size=size, t_end=0.01, snapshot_every=1,
                               initial=init, seed=3))
            tc = run(self.base(size=size, t_end=0.01, snapshot_every=1,
                               initial=init, seed=3, system="coupled"))
            assert td.dt == tc.dt
            errs.append(np.abs(td.final.values - tc.final.values).max())
        assert errs[0] / errs[1] >= 3.5

    def test_self_convergence_second_order(self):
        def terminal(size):
            return run(self.base(size=size, t_end=0.01, snapshot_every=1)).final.values

        ref = terminal(256)
        err32 = np.abs(terminal(32) - ref[:, ::8]).max()
        err64 = np.abs(terminal(64) - ref[:, ::4]).max()
        assert err32 / err64 >= 3.5

    def test_rotational_equivariance(self):
        th = 0.7234
        R = np.array([[math.cos(th), -math.sin(th)], [math.sin(th), math.cos(th)]])
        p = cosh_potential(1.0)
        g = pgrid(64)
        u0 = initial_field(g, 2, {"kind": "bands", "kmax": 3, "amplitude": 0.5,
                                  "seed": 9}, 9)
        dt = cfl_dt(g, certify_window(p), 0.9)
        sa = FieldState(grid=g, values=u0, t=0.0)
        sb = FieldState(grid=g, values=np.einsum("ij,j...->i...", R, u0), t=0.0)
        for _ in range(150):
            sa = step_diffusion(sa, p, dt)
            sb = step_diffusion(sb, p, dt)
            diff = np.abs(np.einsum("ij,j...->i...", R, sa.values) - sb.values).max()
            assert diff <= 1e-10

    def test_dirichlet_run_keeps_boundary(self):
        g = GridSpec(n=1, sizes=(65,), h=1.0 / 64, boundary=DIRICHLET)
        cfg = RunConfig(grid=g, n_components=1, potential=cosh_potential(1.0),
                        t_end=0.005, snapshot_every=5,
                        initial={"kind": "mode", "k": [1], "amplitude": 0.5}, seed=0)
        traj = run(cfg)
        for s in traj.snapshots:
            assert s.values[0, 0] == 0.0 and s.values[0, -1] == 0.0

    def test_dt_override_validation(self):
        with pytest.raises(ValueError, match="divide"):
            run(self.base(t_end=0.005, dt_override=0.0049999))
        with pytest.raises(ValueError, match="CFL"):
            run(self.base(t_end=0.005, dt_override=0.0025, snapshot_every=1))

    def test_with_resolution_preserves_extent(self):
        cfg = self.base(size=64)
        fine = with_resolution(cfg, 128)
        assert fine.grid.sizes == (128,)
        assert fine.grid.extent(0) == pytest.approx(cfg.grid.extent(0), rel=1e-15)

    def test_snapshot_count_and_spacing(self):
        traj = run(self.base(t_end=0.005, snapshot_every=4))
        steps = traj.meta["steps"]
        assert steps % 4 == 0
        assert len(traj.snapshots) == steps // 4 + 1
        assert traj.snapshot_dt == pytest.approx(4 * traj.dt, rel=1e-12)
        assert traj.times[-1] == pytest.approx(0.005, rel=1e-12)

    def test_two_dimensional_run(self):
        cfg = RunConfig(grid=pgrid(32, n=2), n_components=2,
                        potential=cosh_potential(1.0), t_end=0.002,
                        cfl_sigma=0.9, snapshot_every=4,
                        initial={"kind": "bands", "kmax": 2, "amplitude": 0.5,
                                 "seed": 6}, seed=6)
        traj = run(cfg)
        sups = [vector_norm(s.values).max() for s in traj.snapshots]
        assert all(b <= a + 1e-10 for a, b in zip(sups, sups[1:]))
        m0 = traj.snapshots[0].values.mean(axis=(1, 2))
        mT = traj.final.values.mean(axis=(1, 2))
        assert np.abs(mT - m0).max() <= 1e-13

    def test_three_dimensional_heat_mode(self):
        g = pgrid(8, n=3)
        cfg = RunConfig(grid=g, n_components=1, potential=quadratic(2.0),
                        t_end=0.001, cfl_sigma=0.9, snapshot_every=1,
                        initial={"kind": "mode", "k": [1, 1, 1],
                                 "amplitude": 0.5}, seed=0)
        traj = run(cfg)
        # separable product mode: eigenvalue is the sum over the three axes
        lam_h = -3 * (4.0 / g.h ** 2) * math.sin(math.pi * g.h) ** 2
        factor = (1 + traj.dt * lam_h) ** traj.meta["steps"]
        u0 = traj.snapshots[0].values
        assert np.abs(traj.final.values - factor * u0).max() < 1e-12
