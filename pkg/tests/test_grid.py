import numpy as np
import pytest

from pelab import (DIRICHLET, PERIODIC, Cylinder, FieldState, GridSpec,
                   Trajectory, cylinder_average, cylinder_members, cylinder_sum,
                   gradient_sq, laplacian, read_snapshot, write_snapshot)


def periodic_grid(size=128, n=1):
    return GridSpec(n=n, sizes=(size,) * n, h=1.0 / size, boundary=PERIODIC)


def dirichlet_grid(size=65, n=1):
    return GridSpec(n=n, sizes=(size,) * n, h=1.0 / (size - 1), boundary=DIRICHLET)


def stationary_trajectory(grid, values, n_snaps=5, dt=1e-4, bv=None):
    snaps = tuple(FieldState(grid=grid, values=values.copy(), t=k * dt,
                             boundary_values=bv) for k in range(n_snaps))
    return Trajectory(snapshots=snaps, dt=dt)


class TestGridSpec:
    def test_rejects_small_axes(self):
        with pytest.raises(ValueError, match="at least 4"):
            GridSpec(n=1, sizes=(3,), h=0.1)

    def test_rejects_dimension_mismatch(self):
        with pytest.raises(ValueError):
            GridSpec(n=2, sizes=(8,), h=0.1)

    def test_boundary_layer_partitions_grid(self):
        g = dirichlet_grid(9, n=2)
        assert not np.any(g.boundary_mask & g.interior_mask)
        assert np.all(g.boundary_mask | g.interior_mask)
        # one-cell ring: 9^2 - 7^2 boundary points
        assert g.boundary_mask.sum() == 81 - 49

    def test_periodic_has_no_boundary(self):
        g = periodic_grid(8)
        assert g.boundary_mask.sum() == 0


class TestLaplacian:
    def test_constant_field_vanishes(self):
        for g in (periodic_grid(16), dirichlet_grid(17)):
            f = np.full(g.sizes, 3.7)
            assert np.all(laplacian(f, g) == 0.0)

    @pytest.mark.parametrize("size", [17, 33, 101])
    def test_exact_on_quadratics(self, size):
        # central second difference reproduces f'' = 2 exactly for f = x^2,
        # whatever the spacing
        g = dirichlet_grid(size)
        x = g.coords(0)
        out = laplacian(x * x, g)
        assert np.abs(out[1:-1] - 2.0).max() < 1e-10
        assert np.all(out[[0, -1]] == 0.0)

    def test_periodic_sine_eigenfield(self):
        g = periodic_grid(128)
        x = g.coords(0)
        f = np.sin(2 * np.pi * x)
        lam_h = -(4.0 / g.h ** 2) * np.sin(np.pi * g.h) ** 2
        out = laplacian(f, g)
        assert np.abs(out - lam_h * f).max() < 1e-10
        # cross-check by direct stencil evaluation (different summation order,
        # so agreement is to rounding of the 1/h^2-scaled intermediates)
        for j in (0, 17, 63, 127):
            direct = (f[(j + 1) % 128] - 2 * f[j] + f[j - 1]) / g.h ** 2
            assert abs(out[j] - direct) < 1e-9

    def test_shape_mismatch_raises(self):
        g = periodic_grid(16)
        with pytest.raises(ValueError, match="shape"):
            laplacian(np.zeros(8), g)

    def test_non_finite_raises(self):
        g = periodic_grid(16)
        f = np.zeros(16)
        f[3] = np.nan
        with pytest.raises(ValueError, match="non-finite"):
            laplacian(f, g)

    def test_axis_swap_isotropy(self):
        rng = np.random.default_rng(0)
        for g in (periodic_grid(12, n=2), dirichlet_grid(12, n=2)):
            f = rng.standard_normal(g.sizes)
            out = laplacian(f, g)
            swapped = laplacian(f.T.copy(), g).T
            # the transpose reorders the axis sums, so only rounding may differ
            assert np.abs(swapped - out).max() <= 1e-13 * np.abs(out).max()
            gs = gradient_sq(f, g)
            gs_swapped = gradient_sq(f.T.copy(), g).T
            assert np.abs(gs_swapped - gs).max() <= 1e-13 * max(gs.max(), 1.0)

    def test_periodic_divergence_theorem(self):
        rng = np.random.default_rng(1)
        g = periodic_grid(64)
        f = rng.standard_normal(64)
        assert abs(laplacian(f, g).sum()) < 1e-12 * np.abs(f).max() / g.h ** 2


class TestGradientSq:
    def test_constant_is_zero(self):
        for g in (periodic_grid(16), dirichlet_grid(17)):
            f = np.full((2, *g.sizes), 1.5)
            assert np.all(gradient_sq(f, g) == 0.0)

    def test_linear_slope(self):
        g = dirichlet_grid(33)
        u = 3.0 * g.coords(0)
        out = gradient_sq(u, g)
        assert np.abs(out - 9.0).max() < 1e-12  # one-sided edges exact on linears too

    def test_matches_naive_loop(self):
        rng = np.random.default_rng(2)
        g = periodic_grid(24)
        u = rng.standard_normal((3, 24))
        out = gradient_sq(u, g)
        # independent naive reimplementation
        ref = np.zeros(24)
        for c in range(3):
            for j in range(24):
                d = (u[c, (j + 1) % 24] - u[c, j - 1]) / (2 * g.h)
                ref[j] += d * d
        assert np.abs(out - ref).max() <= 1e-14 * np.abs(ref).max()

    def test_nonnegative(self):
        rng = np.random.default_rng(3)
        g = dirichlet_grid(17, n=2)
        u = rng.standard_normal((2, 17, 17))
        assert gradient_sq(u, g).min() >= 0.0


class TestHessianSq:
    def test_exact_on_a_quadratic_polynomial(self):
        from pelab import hessian_sq
        # f = x^2 + 3xy + 2y^2: second derivatives (2, 3, 4); ordered pairs
        # count the mixed one twice: 4 + 16 + 2*9 = 38
        g = dirichlet_grid(17, n=2)
        x = g.coords(0)[:, None]
        y = g.coords(1)[None, :]
        f = x * x + 3 * x * y + 2 * y * y
        out = hessian_sq(f, g)
        core = (slice(1, -1), slice(1, -1))
        assert np.abs(out[core] - 38.0).max() < 1e-9
        assert np.all(out[0] == 0.0) and np.all(out[-1] == 0.0)

    def test_periodic_and_dirichlet_agree_away_from_edges(self):
        from pelab import hessian_sq
        rng = np.random.default_rng(6)
        f = rng.standard_normal((12, 12))
        gp = periodic_grid(12, n=2)
        gd = GridSpec(n=2, sizes=(12, 12), h=gp.h, boundary=DIRICHLET)
        a = hessian_sq(f, gp)
        b = hessian_sq(f, gd)
        deep = (slice(2, -2), slice(2, -2))  # wrap-free stencils only
        assert np.abs(a[deep] - b[deep]).max() <= 1e-12 * np.abs(a[deep]).max()


class TestCylinders:
    def test_average_of_ones(self):
        g = periodic_grid(64)
        traj = stationary_trajectory(g, np.zeros((1, 64)), n_snaps=8)
        q = Cylinder(center=(0.5,), t0=traj.times[-1], R=0.1)
        assert cylinder_average(traj, q, lambda s: np.ones(g.sizes)) == pytest.approx(1.0, abs=1e-15)

    def test_indicator_average_is_count_ratio(self):
        g = periodic_grid(64)
        traj = stationary_trajectory(g, np.zeros((1, 64)), n_snaps=8)
        q = Cylinder(center=(0.5,), t0=traj.times[-1], R=0.1)
        mask, idx = cylinder_members(traj, q)
        ind = np.zeros(g.sizes)
        chosen = np.nonzero(mask)[0][: mask.sum() // 2]
        ind[chosen] = 1.0
        got = cylinder_average(traj, q, lambda s: ind)
        assert got == pytest.approx(len(chosen) / mask.sum(), rel=1e-14)

    def test_quadratic_profile_matches_direct_sum(self):
        g = dirichlet_grid(65)
        x = g.coords(0)
        u = (x * (1 - x))[None]
        traj = stationary_trajectory(g, u, n_snaps=6, bv=(0.0,))

        def g2(s):
            return gradient_sq(s.values, s.grid)

        for R in (0.1, 0.2):
            q = Cylinder(center=(0.5,), t0=traj.times[-1], R=R)
            mask, idx = cylinder_members(traj, q)
            field = g2(traj.snapshots[0])
            direct = 0.0
            for k in idx:
                for j in np.nonzero(mask)[0]:
                    direct += field[j]
            direct *= g.h * traj.snapshot_dt
            assert cylinder_sum(traj, q, g2) == pytest.approx(direct, rel=1e-14)
            vol = mask.sum() * len(idx) * g.h * traj.snapshot_dt
            assert cylinder_average(traj, q, g2) == pytest.approx(direct / vol, rel=1e-14)

    def test_monotone_under_domination(self):
        rng = np.random.default_rng(4)
        g = periodic_grid(32)
        traj = stationary_trajectory(g, np.zeros((1, 32)), n_snaps=4)
        q = Cylinder(center=(0.3,), t0=traj.times[-1], R=0.11)
        lo = rng.uniform(0.0, 1.0, size=g.sizes)
        hi = lo + rng.uniform(0.0, 1.0, size=g.sizes)
        assert cylinder_average(traj, q, lambda s: lo) <= cylinder_average(traj, q, lambda s: hi)

    def test_ball_wraps_around_periodic_boundary(self):
        g = periodic_grid(64)
        traj = stationary_trajectory(g, np.zeros((1, 64)), n_snaps=4)
        q = Cylinder(center=(0.01,), t0=traj.times[-1], R=0.1)
        mask, _ = cylinder_members(traj, q)
        assert mask[-1] and mask[0]  # minimal-image distance sees both ends

    def test_two_dimensional_ball_count_and_average(self):
        g = periodic_grid(32, n=2)
        traj = stationary_trajectory(g, np.zeros((1, 32, 32)), n_snaps=5)
        q = Cylinder(center=(0.5, 0.5), t0=traj.times[-1], R=0.13)
        mask, idx = cylinder_members(traj, q)
        # independent count: loop the grid, minimal-image distance
        count = 0
        for i in range(32):
            for j in range(32):
                dx = min(abs(i / 32 - 0.5), 1 - abs(i / 32 - 0.5))
                dy = min(abs(j / 32 - 0.5), 1 - abs(j / 32 - 0.5))
                count += dx * dx + dy * dy <= 0.13 ** 2 * (1 + 1e-12)
        assert mask.sum() == count
        assert cylinder_average(traj, q, lambda s: np.ones(g.sizes)) == \
            pytest.approx(1.0, abs=1e-15)

    def test_errors_name_the_failed_bound(self):
        g = dirichlet_grid(65)
        traj = stationary_trajectory(g, np.zeros((1, 65)), n_snaps=4, bv=(0.0,))
        with pytest.raises(ValueError, match="interior"):
            cylinder_members(traj, Cylinder(center=(0.02,), t0=traj.times[-1], R=0.1))
        with pytest.raises(ValueError, match="snapshots"):
            cylinder_members(traj, Cylinder(center=(0.5,), t0=traj.times[0], R=0.01))


class TestFieldState:
    def test_rejects_non_finite(self):
        g = periodic_grid(8)
        v = np.zeros((1, 8))
        v[0, 2] = np.inf
        with pytest.raises(ValueError, match="non-finite"):
            FieldState(grid=g, values=v, t=0.0)

    def test_dirichlet_boundary_must_match(self):
        g = dirichlet_grid(9)
        v = np.zeros((1, 9))
        v[0, 0] = 0.5
        with pytest.raises(ValueError, match="boundary"):
            FieldState(grid=g, values=v, t=0.0, boundary_values=(0.0,))

    def test_values_frozen(self):
        g = periodic_grid(8)
        s = FieldState(grid=g, values=np.zeros((1, 8)), t=0.0)
        with pytest.raises(ValueError):
            s.values[0, 0] = 1.0


class TestTrajectory:
    def test_spacing_must_be_uniform(self):
        g = periodic_grid(8)
        mk = lambda t: FieldState(grid=g, values=np.zeros((1, 8)), t=t)
        with pytest.raises(ValueError, match="uniform"):
            Trajectory(snapshots=(mk(0.0), mk(0.1), mk(0.15)), dt=0.05)

    def test_spacing_must_be_multiple_of_dt(self):
        g = periodic_grid(8)
        mk = lambda t: FieldState(grid=g, values=np.zeros((1, 8)), t=t)
        with pytest.raises(ValueError, match="multiple"):
            Trajectory(snapshots=(mk(0.0), mk(0.15)), dt=0.1)


class TestSnapshotFiles:
    def test_round_trip_is_bit_exact(self, tmp_path):
        rng = np.random.default_rng(5)
        g = dirichlet_grid(9, n=2)
        v = rng.standard_normal((3, 9, 9))
        ring = g.boundary_mask
        for c in range(3):
            v[c][ring] = 0.25 * c
        s = FieldState(grid=g, values=v, t=0.125, boundary_values=(0.0, 0.25, 0.5))
        path = tmp_path / "s.pelb"
        write_snapshot(path, s)
        back = read_snapshot(path)
        assert back.grid == g
        assert back.t == 0.125
        assert back.boundary_values == (0.0, 0.25, 0.5)
        assert np.array_equal(back.values, s.values)

    def test_binary_layout(self, tmp_path):
        g = GridSpec(n=1, sizes=(4,), h=0.25, boundary=PERIODIC)
        s = FieldState(grid=g, values=np.arange(4, dtype=float)[None], t=2.0)
        path = tmp_path / "s.pelb"
        write_snapshot(path, s)
        raw = path.read_bytes()
        assert raw[:4] == b"PELB"
        assert int.from_bytes(raw[4:8], "little") == 1
        assert raw[8] == 1 and raw[9] == 1 and raw[10] == 0
        assert int.from_bytes(raw[11:19], "little") == 4
        assert np.frombuffer(raw[19:27], "<f8")[0] == 0.25   # h
        assert np.frombuffer(raw[27:35], "<f8")[0] == 2.0    # t
        assert np.array_equal(np.frombuffer(raw[35:], "<f8"), [0.0, 1.0, 2.0, 3.0])
        assert len(raw) == 35 + 4 * 8

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "bad.pelb"
        path.write_bytes(b"NOPE" + bytes(64))
        with pytest.raises(ValueError, match="magic"):
            read_snapshot(path)

    def test_three_dimensional_round_trip(self, tmp_path):
        rng = np.random.default_rng(7)
        g = GridSpec(n=3, sizes=(4, 5, 6), h=0.125, boundary=PERIODIC)
        s = FieldState(grid=g, values=rng.standard_normal((2, 4, 5, 6)), t=0.5)
        write_snapshot(tmp_path / "s.pelb", s)
        back = read_snapshot(tmp_path / "s.pelb")
        assert back.grid == g
        assert np.array_equal(back.values, s.values)
