"""Numerical verification of the quantitative estimates satisfied by the flow.

Every monitor is a pure function of trajectories and returns a CheckReport
carrying the measured series, the tolerance used, and, on failure, a witness
(location / time / radius).  Discrete time derivatives of snapshots are
forward differences aligned with the solver's Euler step, so in the quadratic
case the entropy residual cancels to rounding rather than to truncation.

The H^-1 norm solves the discrete zero-Dirichlet Poisson problem; periodic
trajectories use the whole-domain periodic variant via conjugate gradients on
the mean-zero subspace (the contraction statement assumes matching boundary
traces, which periodic wrap-around provides).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import RangeExcursionError, SolveError
from .grid import (Cylinder, FieldState, GridSpec, Trajectory, cylinder_members,
                   gradient_sq, hessian_sq, laplacian, vector_norm)
from .potentials import (CoupledCoefficients, EllipticityWindow, EntropyData,
                         RadialPotential, build_entropy, certify_window,
                         grad_Phi_field, quadratic)
from .solver import RunConfig, run

_DIRECT_LIMIT = 200_000
_solver_cache: dict = {}


@dataclass
class CheckReport:
    """Outcome of one named check."""

    name: str
    passed: bool
    values: dict = field(default_factory=dict)
    tolerance: float | dict | None = None
    provenance: str = ""
    witness: dict | None = None

    def to_json(self) -> dict:
        def conv(x):
            if isinstance(x, np.ndarray):
                return x.tolist()
            if isinstance(x, (np.floating, np.integer)):
                return x.item()
            if isinstance(x, dict):
                return {k: conv(v) for k, v in x.items()}
            if isinstance(x, (list, tuple)):
                return [conv(v) for v in x]
            return x

        return {
            "name": self.name,
            "passed": bool(self.passed),
            "values": conv(self.values),
            "tolerance": conv(self.tolerance),
            "provenance": self.provenance,
            "witness": conv(self.witness),
        }


def _provenance(*trajs: Trajectory) -> str:
    return "+".join(t.meta.get("config_hash", "")[:16] for t in trajs)


# ---------------------------------------------------------------------------
# discrete Poisson problems and the H^-1 norm

def _dirichlet_matrix(grid: GridSpec) -> sp.csr_matrix:
    """-Laplacian on the interior unknowns, SPD, scaled by 1/h^2."""
    ks = [m - 2 for m in grid.sizes]
    eye = [sp.identity(k, format="csr") for k in ks]
    parts = []
    for a, k in enumerate(ks):
        T = sp.diags([-1.0, 2.0, -1.0], [-1, 0, 1], shape=(k, k), format="csr")
        factors = [eye[b] if b != a else T for b in range(grid.n)]
        M = factors[0]
        for f in factors[1:]:
            M = sp.kron(M, f, format="csr")
        parts.append(M)
    A = parts[0]
    for M in parts[1:]:
        A = A + M
    return (A / (grid.h * grid.h)).tocsr()


def _dirichlet_solve(grid: GridSpec, rhs: np.ndarray, method: str = "auto") -> np.ndarray:
    """Solve (-Lap) w = rhs on the interior, w = 0 on the boundary layer."""
    key = (grid.sizes, grid.h, "dirichlet")
    unknowns = int(np.prod([m - 2 for m in grid.sizes]))
    if method == "auto":
        method = "direct" if unknowns <= _DIRECT_LIMIT else "cg"
    if method == "direct":
        if key not in _solver_cache:
            _solver_cache[key] = spla.factorized(_dirichlet_matrix(grid).tocsc())
        return _solver_cache[key](rhs)
    A = _solver_cache.setdefault((key, "matrix"), _dirichlet_matrix(grid))
    w, info = spla.cg(A, rhs, rtol=1e-12, atol=0.0, maxiter=20 * unknowns)
    if info != 0:
        resid = float(np.linalg.norm(A @ w - rhs) / max(np.linalg.norm(rhs), 1e-300))
        raise SolveError(f"Poisson conjugate gradients stopped at relative residual "
                         f"{resid:.3e}", residual=resid)
    return w


def _gradient_energy(w_full: np.ndarray, grid: GridSpec) -> float:
    """Sum over faces of squared forward differences times h^n."""
    total = 0.0
    for a in range(grid.n):
        if grid.periodic:
            d = (np.roll(w_full, -1, axis=a) - w_full) / grid.h
        else:
            lo = [slice(None)] * grid.n
            hi = [slice(None)] * grid.n
            lo[a] = slice(0, -1)
            hi[a] = slice(1, None)
            d = (w_full[tuple(hi)] - w_full[tuple(lo)]) / grid.h
        total += float(np.sum(d * d))
    return total * grid.cell_volume()


def h_minus_one_norm(values: np.ndarray, grid: GridSpec, method: str = "auto") -> float:
    """Energy norm of the solution of the zero-Dirichlet Poisson problem.

    Solves Lap w = f on the interior (boundary entries of f are ignored; the
    caller supplies data vanishing on the layer) and returns
    sqrt(sum |grad w|^2 h^n).  Vector inputs return the root of the sum of the
    squared component norms.
    """
    if grid.periodic:
        raise ValueError("the H^-1 norm is defined on Dirichlet grids; "
                         "use h_minus_one_norm_periodic for periodic data")
    values = np.asarray(values, dtype=float)
    comps = values[None] if values.shape == grid.sizes else values
    if comps.shape[1:] != grid.sizes:
        raise ValueError(f"field shape {values.shape} does not match grid {grid.sizes}")
    if not np.isfinite(comps).all():
        raise ValueError("field contains non-finite values")
    core = tuple(slice(1, -1) for _ in range(grid.n))
    total = 0.0
    for c in range(comps.shape[0]):
        rhs = comps[c][core].ravel()
        w = _dirichlet_solve(grid, rhs, method=method)
        w_full = np.zeros(grid.sizes)
        w_full[core] = w.reshape([m - 2 for m in grid.sizes])
        total += _gradient_energy(w_full, grid)
    return math.sqrt(total)


def h_minus_one_norm_periodic(values: np.ndarray, grid: GridSpec) -> float:
    """Whole-domain periodic H^-1 seminorm on the mean-zero subspace (CG, no FFT)."""
    if not grid.periodic:
        raise ValueError("periodic variant called on a Dirichlet grid")
    values = np.asarray(values, dtype=float)
    comps = values[None] if values.shape == grid.sizes else values
    npts = grid.num_points

    def matvec(x):
        return -laplacian(x.reshape(grid.sizes), grid).ravel()

    A = spla.LinearOperator((npts, npts), matvec=matvec)
    total = 0.0
    for c in range(comps.shape[0]):
        b = comps[c] - comps[c].mean()
        bn = float(np.linalg.norm(b))
        if bn == 0.0:
            continue
        w, info = spla.cg(A, b.ravel(), rtol=1e-12, atol=0.0, maxiter=50 * npts)
        if info != 0:
            resid = float(np.linalg.norm(matvec(w) - b.ravel()) / bn)
            raise SolveError(f"periodic Poisson conjugate gradients stopped at "
                             f"relative residual {resid:.3e}", residual=resid)
        total += _gradient_energy(w.reshape(grid.sizes), grid)
    return math.sqrt(total)


def poincare_constant(grid: GridSpec) -> float:
    """Smallest-eigenvalue constant of the discrete Dirichlet Laplacian.

    The tensor structure makes the smallest eigenvalue exact:
    mu_1 = sum over axes of (4/h^2) sin^2(pi / (2 (k+1))) with k interior
    points per axis.  Cached per grid;  h_minus_one_norm(f) <= C_P ||f||_2
    holds exactly in the discrete setting.
    """
    key = (grid.sizes, grid.h, "poincare")
    if key not in _solver_cache:
        mu = 0.0
        for m in grid.sizes:
            k = m - 2
            mu += 4.0 / (grid.h * grid.h) * math.sin(math.pi / (2.0 * (k + 1))) ** 2
        _solver_cache[key] = 1.0 / math.sqrt(mu)
    return _solver_cache[key]


def l2_norm(values: np.ndarray, grid: GridSpec) -> float:
    """Discrete L^2 norm sqrt(sum f^2 h^n) over interior points."""
    values = np.asarray(values, dtype=float)
    comps = values[None] if values.shape == grid.sizes else values
    core = grid.interior_slices
    return math.sqrt(float(np.sum(np.square(comps[(slice(None), *core)])))
                     * grid.cell_volume())


# ---------------------------------------------------------------------------
# contraction

def _require_matched(traj0: Trajectory, traj1: Trajectory) -> None:
    if traj0.grid != traj1.grid:
        raise ValueError("mismatched runs: grids differ")
    if traj0.n_components != traj1.n_components:
        raise ValueError("mismatched runs: component counts differ")
    if abs(traj0.dt - traj1.dt) > 1e-12 * max(traj0.dt, traj1.dt):
        raise ValueError("mismatched runs: time steps differ")
    if len(traj0.snapshots) != len(traj1.snapshots) or \
            np.max(np.abs(traj0.times - traj1.times)) > 1e-9 * max(traj0.times[-1], 1e-300):
        raise ValueError("mismatched runs: snapshot times differ")
    if not traj0.grid.periodic:
        if traj0.snapshots[0].boundary_values != traj1.snapshots[0].boundary_values:
            raise ValueError("mismatched runs: boundary data differ")


def contraction_report(traj0: Trajectory, traj1: Trajectory,
                       window: EllipticityWindow, rel_tol: float = 1e-10,
                       name: str = "contraction") -> CheckReport:
    """Monotone non-increase of the H^-1 distance between two runs.

    The pass/fail verdict is plain monotonicity of d(t) within `rel_tol`
    relative per step.  The exponentially weighted series exp(2 lam t) d(t)^2
    and the best-fit decay exponent are recorded as information only; no sign
    of the exponent is asserted.
    """
    _require_matched(traj0, traj1)
    grid = traj0.grid
    norm = h_minus_one_norm_periodic if grid.periodic else h_minus_one_norm
    times = traj0.times
    d = np.array([norm(traj1.snapshots[k].values - traj0.snapshots[k].values, grid)
                  for k in range(len(times))])

    witness = None
    monotone = True
    for k in range(len(d) - 1):
        if d[k + 1] - d[k] > rel_tol * d[k]:
            monotone = False
            witness = {"step": k + 1, "t": float(times[k + 1]),
                       "d_prev": float(d[k]), "d_next": float(d[k + 1])}
            break

    weighted = np.exp(2.0 * window.lam * (times - times[0])) * d * d
    weighted_monotone = bool(np.all(np.diff(weighted) <= rel_tol * weighted[:-1]))

    rate = float("nan")
    alive = d > max(d[0], 1e-300) * 1e-12
    if alive.sum() >= 2 and d[0] > 0:
        rate = float(np.polyfit(times[alive], np.log(d[alive]), 1)[0])

    return CheckReport(
        name=name, passed=monotone, tolerance=rel_tol,
        provenance=_provenance(traj0, traj1), witness=witness,
        values={"times": times, "d": d, "monotone": monotone,
                "weighted_monotone": weighted_monotone,
                "lam": window.lam, "rate_fit": rate})


# ---------------------------------------------------------------------------
# boundedness

def sup_norm_report(traj: Trajectory, tol: float = 1e-10,
                    name: str = "sup-norm") -> CheckReport:
    """sup |u(t)| <= max(initial sup, running boundary sup) + tol, per snapshot."""
    sups = []
    bounds = []
    witness = None
    passed = True
    boundary_running = 0.0
    initial_sup = float(vector_norm(traj.snapshots[0].values).max())
    for k, snap in enumerate(traj.snapshots):
        boundary_running = max(boundary_running, snap.boundary_sup())
        r = vector_norm(snap.values)
        s = float(r.max())
        bound = max(initial_sup, boundary_running)
        sups.append(s)
        bounds.append(bound)
        if passed and s > bound + tol:
            passed = False
            loc = tuple(int(i) for i in np.unravel_index(int(r.argmax()), traj.grid.sizes))
            witness = {"snapshot": k, "t": float(snap.t), "sup": s,
                       "bound": bound, "location": loc}
    return CheckReport(name=name, passed=passed, tolerance=tol,
                       provenance=_provenance(traj),
                       values={"times": traj.times, "sup": np.array(sups),
                               "bound": np.array(bounds)}, witness=witness)


# ---------------------------------------------------------------------------
# entropy subsolution residuals

def _check_consecutive(traj: Trajectory) -> float:
    spacing = traj.snapshot_dt
    if abs(spacing - traj.dt) > 1e-9 * traj.dt:
        raise ValueError("residual checks need consecutive snapshots "
                         "(snapshot_every = 1 over the checked span)")
    if len(traj.snapshots) < 2:
        raise ValueError("residual checks need at least two snapshots")
    return spacing


def _positive_part_stats(res_fields, grid: GridSpec, times) -> tuple[dict, dict | None]:
    core = grid.interior_slices
    max_pos = 0.0
    max_abs = 0.0
    pos_pool = []
    witness = None
    pairs = 0
    for k, res in res_fields:
        r = res[core]
        pairs += 1
        max_abs = max(max_abs, float(np.abs(r).max()))
        pos = r[r > 0.0]
        if pos.size:
            pos_pool.append(pos)
            m = float(pos.max())
            if m > max_pos:
                max_pos = m
                loc = tuple(int(i) for i in np.unravel_index(int(r.argmax()), r.shape))
                witness = {"pair": k, "t": float(times[k]), "location": loc,
                           "value": m}
    pooled = np.concatenate(pos_pool) if pos_pool else np.zeros(1)
    stats = {"max_pos": max_pos,
             "p99_pos": float(np.percentile(pooled, 99.0)),
             "max_abs": max_abs,
             "pairs": pairs}
    return stats, witness


def entropy_residual_diffusion(traj: Trajectory, p: RadialPotential,
                               ent: EntropyData, window: EllipticityWindow,
                               tau: float | None = None,
                               name: str = "entropy-diffusion") -> CheckReport:
    """Positive part of D_t phi(|u|) - Lap gamma(phi(|u|)) + lam^2 |grad u|^2.

    The continuum quantity is nonpositive; the discrete positive part is pure
    scheme error and must stay below tau = K (h^2 + dt) and shrink under
    refinement.  With tau = None the report is informational (always passes).
    """
    spacing = _check_consecutive(traj)
    grid = traj.grid
    lam2 = window.lam * window.lam

    worst = max(float(vector_norm(s.values).max()) for s in traj.snapshots)
    if worst > p.r_max * (1.0 + 1e-12):
        raise RangeExcursionError(
            f"entropy range exceeded: |u| reaches {worst} > r_max = {p.r_max}")

    def fields():
        r_now = vector_norm(traj.snapshots[0].values)
        phi_now = np.asarray(p.phi(r_now), dtype=float)
        for k in range(len(traj.snapshots) - 1):
            nxt = traj.snapshots[k + 1]
            phi_next = np.asarray(p.phi(vector_norm(nxt.values)), dtype=float)
            u = traj.snapshots[k].values
            res = ((phi_next - phi_now) / spacing
                   - laplacian(np.asarray(ent.gamma(phi_now), dtype=float), grid)
                   + lam2 * gradient_sq(u, grid))
            yield k, res
            phi_now = phi_next

    stats, witness = _positive_part_stats(fields(), grid, traj.times)
    stats.update({"h": grid.h, "dt": traj.dt, "tau": tau})
    passed = True if tau is None else stats["max_pos"] <= tau
    return CheckReport(name=name, passed=passed, tolerance=tau,
                       provenance=_provenance(traj), values=stats,
                       witness=None if passed else witness)


def calibrate_residual_constant(config: RunConfig) -> float:
    """Fit K in tau(h) = K (h^2 + dt) on the quadratic case.

    For the quadratic potential the continuum residual vanishes identically
    and the forward-difference alignment makes the discrete positive part
    cancel to rounding, so the magnitude |residual| is the pure scheme-error
    scale for data of this shape; K is its ratio to h^2 + dt.
    """
    amp = float(config.initial.get("amplitude", 0.5))
    q = quadratic(r_max=max(2.0, 2.0 * amp))
    cfg = replace(config, potential=q, system="diffusion", snapshot_every=1)
    traj = run(cfg)
    rep = entropy_residual_diffusion(traj, q, build_entropy(q), certify_window(q))
    h, dt = traj.grid.h, traj.dt
    return rep.values["max_abs"] / (h * h + dt)


@dataclass(frozen=True)
class CoupledEntropyParams:
    """Exponent s and dissipation constant c for the coupled entropy exp(s H)."""

    s: float
    c: float
    eps: float
    big_c: float
    lam: float


def choose_entropy_params(cc: CoupledCoefficients, n_dim: int,
                          n_components: int) -> CoupledEntropyParams:
    """Pick (s, c): first eps = lam/2, then s large enough to absorb the cross term.

    C(eps) = (sup|H_zz| sup|c|)^2 / (4 eps) times the dimension factor n N
    (the Cauchy-Schwarz constant of the mixed term), s = max(1, 2 C / lam),
    c = (lam/2) s exp(s inf H).
    """
    lam = min(cc.lam_a, cc.lam_A)
    if lam <= 0.0:
        raise ValueError(f"coupled system is not strictly elliptic: lam = {lam}")
    eps = 0.5 * lam
    big_c = (cc.bounds["sup_Hzz"] * cc.bounds["sup_c"]) ** 2 / (4.0 * eps) \
        * n_dim * n_components
    s = max(1.0, 2.0 * big_c / lam)
    c = 0.5 * lam * s * math.exp(s * cc.bounds["inf_H"])
    return CoupledEntropyParams(s=s, c=c, eps=eps, big_c=big_c, lam=lam)


def entropy_residual_coupled(traj: Trajectory, cc: CoupledCoefficients,
                             s: float, c: float, tau: float | None = None,
                             name: str = "entropy-coupled") -> CheckReport:
    """Positive part of D_t v - div(A grad v) + c |grad u|^2 with v = exp(s H(u)).

    A = a + c^i H_{z_i} pointwise; the divergence uses the same conservative
    face averaging as the coupled step.  Degenerate H = 0 systems are routed
    to the diffusion check instead (the bound c |grad u|^2 <= 0 cannot hold
    for non-constant data without the vanishing flux term).
    """
    from .solver import _face_divergence

    if cc.bounds["sup_Hzz"] == 0.0:
        raise ValueError("H vanishes identically; use the diffusion entropy check")
    spacing = _check_consecutive(traj)
    grid = traj.grid

    worst = max(float(vector_norm(snap.values).max()) for snap in traj.snapshots)
    if worst > cc.r_max * (1.0 + 1e-12):
        raise RangeExcursionError(
            f"entropy range exceeded: |u| reaches {worst} > r_max = {cc.r_max}")

    def v_and_A(snap: FieldState):
        r = vector_norm(snap.values)
        v = np.exp(s * (np.asarray(cc.H(snap.values), dtype=float) + np.zeros_like(r)))
        A = np.asarray(cc.a(r), dtype=float) + np.zeros_like(r) \
            + np.sum(np.asarray(cc.c(snap.values), dtype=float)
                     * np.asarray(cc.H_z(snap.values), dtype=float), axis=0)
        return v, A

    def fields():
        v_now, A_now = v_and_A(traj.snapshots[0])
        for k in range(len(traj.snapshots) - 1):
            v_next, A_next = v_and_A(traj.snapshots[k + 1])
            u = traj.snapshots[k].values
            div = _face_divergence(A_now, v_now[None], None, None, grid)[0]
            res = (v_next - v_now) / spacing - div + c * gradient_sq(u, grid)
            yield k, res
            v_now, A_now = v_next, A_next

    stats, witness = _positive_part_stats(fields(), grid, traj.times)
    stats.update({"h": grid.h, "dt": traj.dt, "tau": tau, "s": s, "c": c})
    passed = True if tau is None else stats["max_pos"] <= tau
    return CheckReport(name=name, passed=passed, tolerance=tau,
                       provenance=_provenance(traj), values=stats,
                       witness=None if passed else witness)


# ---------------------------------------------------------------------------
# Morrey decay

def grad_sq_functional(snap: FieldState) -> np.ndarray:
    return gradient_sq(snap.values, snap.grid)


def morrey_profile(traj: Trajectory, point: tuple, radii: Sequence[float],
                   g: Callable[[FieldState], np.ndarray] | None = None,
                   exponent: float | None = None) -> list[tuple[float, float]]:
    """Scaled cylinder integrals R^-exponent * iint_{Q(x0,t0,R)} g, largest R first.

    `point` is (x0 coordinates, t0); the default g is |grad u|^2 with the
    default exponent n.  The variant g = |grad u|^4 with exponent n - 2 probes
    the singular-set bound of bounded solutions.  Radii below 4h are rejected
    as noise.
    """
    x0, t0 = point
    g = g or grad_sq_functional
    expo = traj.grid.n if exponent is None else float(exponent)
    out = []
    for R in sorted(radii, reverse=True):
        if R < 4.0 * traj.grid.h * (1.0 - 1e-12):
            raise ValueError(f"radius {R} is below the 4h = {4 * traj.grid.h} floor")
        q = Cylinder(center=tuple(x0), t0=float(t0), R=float(R))
        mask, idx = cylinder_members(traj, q)
        cell = traj.grid.cell_volume() * traj.snapshot_dt
        total = sum(float(np.sum(np.asarray(g(traj.snapshots[k]))[mask])) for k in idx)
        out.append((float(R), total * cell / R ** expo))
    return out


def morrey_report(traj: Trajectory, points: Sequence[tuple], radii: Sequence[float],
                  g: Callable[[FieldState], np.ndarray] | None = None,
                  decay_factor: float = 0.5, name: str = "morrey") -> CheckReport:
    """Decay check: the smallest-R quotient is at most `decay_factor` times the largest-R one."""
    profiles = []
    witness = None
    passed = True
    for pt in points:
        prof = morrey_profile(traj, pt, radii, g=g)
        profiles.append({"point": list(pt[0]), "t0": pt[1],
                         "radii": [r for r, _ in prof],
                         "values": [v for _, v in prof]})
        largest, smallest = prof[0][1], prof[-1][1]
        ok = smallest <= decay_factor * largest or (largest == 0.0 and smallest == 0.0)
        if passed and not ok:
            passed = False
            witness = {"point": list(pt[0]), "t0": pt[1],
                       "value_smallest_R": smallest, "value_largest_R": largest}
    return CheckReport(name=name, passed=passed, tolerance=decay_factor,
                       provenance=_provenance(traj),
                       values={"profiles": profiles}, witness=witness)


# ---------------------------------------------------------------------------
# reverse Hoelder and the interior estimate ratios

def _grad2_cache(traj: Trajectory) -> Callable[[int], np.ndarray]:
    cache: dict[int, np.ndarray] = {}

    def get(k: int) -> np.ndarray:
        if k not in cache:
            cache[k] = gradient_sq(traj.snapshots[k].values, traj.grid)
        return cache[k]

    return get


def _cyl_mean(traj: Trajectory, q: Cylinder, field_at: Callable[[int], np.ndarray],
              power: float = 1.0) -> float:
    mask, idx = cylinder_members(traj, q)
    total = 0.0
    for k in idx:
        f = field_at(k)[mask]
        total += float(np.sum(f if power == 1.0 else np.power(f, power)))
    return total / (float(mask.sum()) * len(idx))


def reverse_holder_report(traj: Trajectory, cylinders: Sequence[Cylinder],
                          p: float = 2.5, reference: float | None = None,
                          rel_change: float = 0.2,
                          name: str = "reverse-holder") -> CheckReport:
    """Ratio of the L^p cylinder mean of |grad u| on Q_R to the L^2 mean on Q_4R.

    Cylinders with identically vanishing gradient on the large cylinder are
    skipped and counted.  With a `reference` max ratio from another resolution
    the check passes iff the max changed by at most `rel_change` relatively;
    without one the report is informational.
    """
    if p <= 2.0:
        raise ValueError("the exponent must exceed 2")
    grad2 = _grad2_cache(traj)
    ratios = []
    skipped = 0
    for q in cylinders:
        big = Cylinder(center=q.center, t0=q.t0, R=4.0 * q.R)
        rhs2 = _cyl_mean(traj, big, grad2)
        if rhs2 <= 1e-30:
            skipped += 1
            continue
        lhs = _cyl_mean(traj, q, grad2, power=0.5 * p) ** (1.0 / p)
        ratios.append(lhs / math.sqrt(rhs2))
    max_ratio = max(ratios) if ratios else float("nan")
    if reference is None:
        passed = True
    else:
        passed = bool(ratios) and abs(max_ratio - reference) <= rel_change * reference
    witness = None
    if not passed:
        witness = {"max_ratio": max_ratio, "reference": reference}
    return CheckReport(name=name, passed=passed, tolerance=rel_change,
                       provenance=_provenance(traj),
                       values={"ratios": np.array(ratios), "max_ratio": max_ratio,
                               "skipped": skipped, "p": p, "reference": reference},
                       witness=witness)


def estimate_ratio_report(traj: Trajectory, p: RadialPotential,
                          pairs: Sequence[tuple[Cylinder, Cylinder]],
                          reference: dict | None = None, rel_change: float = 0.3,
                          name: str = "estimate-ratios") -> CheckReport:
    """Normalized interior-estimate ratios on nested cylinders Q_r inside Q_R.

    ratio_time  = (R-r)^2 iint_{Q_r} |u_t|^2            / iint_{Q_R} |grad u|^2
    ratio_hess  = (R-r)^2 iint_{Q_r} |grad^2 gradPhi|^2 / iint_{Q_R} |grad u|^2
    ratio_l4    = (R-r)^2 iint_{Q_r} |grad u|^4 / (sup|u|^2 iint_{Q_R} |grad u|^2)

    u_t is the forward snapshot difference, so every snapshot inside a small
    cylinder needs a successor.  Bounded, resolution-stable ratios (within
    `rel_change` against a reference measurement) are the pass criterion.
    """
    grid = traj.grid
    spacing = traj.snapshot_dt
    cell = grid.cell_volume() * spacing
    grad2 = _grad2_cache(traj)

    ut2_cache: dict[int, np.ndarray] = {}

    def ut2(k: int) -> np.ndarray:
        if k not in ut2_cache:
            if k + 1 >= len(traj.snapshots):
                raise ValueError("u_t forward difference needs a successor snapshot; "
                                 "place the small cylinder before the final time")
            d = (traj.snapshots[k + 1].values - traj.snapshots[k].values) / spacing
            ut2_cache[k] = np.sum(d * d, axis=0)
        return ut2_cache[k]

    hess_cache: dict[int, np.ndarray] = {}

    def hess2(k: int) -> np.ndarray:
        if k not in hess_cache:
            v = grad_Phi_field(p, traj.snapshots[k].values)
            hess_cache[k] = hessian_sq(v, grid)
        return hess_cache[k]

    def integral(q: Cylinder, field_at, power=1.0) -> float:
        mask, idx = cylinder_members(traj, q)
        total = 0.0
        for k in idx:
            f = field_at(k)[mask]
            total += float(np.sum(f if power == 1.0 else np.power(f, power)))
        return total * cell

    sup_u = max(float(vector_norm(s.values).max()) for s in traj.snapshots)
    per_pair = []
    for small, big in pairs:
        if small.R >= big.R:
            raise ValueError("nested pairs need r < R")
        gap2 = (big.R - small.R) ** 2
        i_grad = integral(big, grad2)
        i_t = integral(small, ut2)
        i_hess = integral(small, hess2)
        i_l4 = integral(small, grad2, power=2.0)
        if i_grad == 0.0:
            ratios = {"ratio_time": 0.0 if i_t == 0.0 else math.inf,
                      "ratio_hess": 0.0 if i_hess == 0.0 else math.inf,
                      "ratio_l4": 0.0 if i_l4 == 0.0 else math.inf}
        else:
            ratios = {"ratio_time": i_t * gap2 / i_grad,
                      "ratio_hess": i_hess * gap2 / i_grad,
                      "ratio_l4": i_l4 * gap2 / (sup_u * sup_u * i_grad)}
        per_pair.append({"r": small.R, "R": big.R, **ratios})

    maxima = {k: max(d[k] for d in per_pair)
              for k in ("ratio_time", "ratio_hess", "ratio_l4")}
    passed = all(math.isfinite(v) for v in maxima.values())
    witness = None
    if reference is not None:
        for k, v in maxima.items():
            ref = reference[k]
            if not (math.isfinite(v) and abs(v - ref) <= rel_change * max(ref, 1e-300)):
                passed = False
                witness = {"ratio": k, "value": v, "reference": ref}
                break
    elif not passed:
        bad = next(k for k, v in maxima.items() if not math.isfinite(v))
        witness = {"ratio": bad, "value": maxima[bad]}
    return CheckReport(name=name, passed=passed, tolerance=rel_change,
                       provenance=_provenance(traj),
                       values={"pairs": per_pair, "maxima": maxima,
                               "sup_u": sup_u, "reference": reference},
                       witness=witness)


# ---------------------------------------------------------------------------
# empirical Hoelder seminorm

def holder_seminorm(snap: FieldState, alpha: float, band: tuple[float, float],
                    n_pairs: int = 10_000, seed: int = 0) -> float:
    """Max of |u(x) - u(y)| / |x - y|^alpha over point pairs with |x-y| in the band.

    Exhaustive over all pairs on small grids (every axis at most 64 points in
    one or two dimensions); seeded random pairs otherwise.  Used comparatively
    across resolutions: a bounded seminorm under refinement is the empirical
    regularity signal.
    """
    grid = snap.grid
    lo, hi = band
    L = min(grid.extent(a) for a in range(grid.n))
    if lo < 2.0 * grid.h * (1.0 - 1e-12) or hi > 0.25 * L * (1.0 + 1e-12):
        raise ValueError(f"band {band} must lie within [2h, extent/4] = "
                         f"[{2 * grid.h}, {0.25 * L}]")

    flat = snap.values.reshape(snap.n_components, -1)
    coords = np.stack(np.meshgrid(*[grid.coords(a) for a in range(grid.n)],
                                  indexing="ij"), axis=-1).reshape(-1, grid.n)
    npts = coords.shape[0]

    def quotient(ii, jj):
        d = coords[ii] - coords[jj]
        for a in range(grid.n):
            if grid.periodic:
                La = grid.extent(a)
                d[:, a] -= La * np.round(d[:, a] / La)
        dist = np.sqrt(np.sum(d * d, axis=1))
        keep = (dist >= lo) & (dist <= hi)
        if not keep.any():
            return 0.0, 0
        du = flat[:, ii[keep]] - flat[:, jj[keep]]
        num = np.sqrt(np.sum(du * du, axis=0))
        return float((num / dist[keep] ** alpha).max()), int(keep.sum())

    exhaustive = max(grid.sizes) <= 64 and grid.n <= 2
    if exhaustive:
        best = 0.0
        for i in range(npts - 1):
            jj = np.arange(i + 1, npts)
            ii = np.full_like(jj, i)
            q, _ = quotient(ii, jj)
            best = max(best, q)
        return best

    rng = np.random.default_rng(seed)
    best = 0.0
    collected = 0
    for _ in range(200):
        ii = rng.integers(0, npts, size=4 * n_pairs)
        jj = rng.integers(0, npts, size=4 * n_pairs)
        q, kept = quotient(ii, jj)
        best = max(best, q)
        collected += kept
        if collected >= n_pairs:
            break
    return best
