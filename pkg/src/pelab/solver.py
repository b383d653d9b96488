"""Explicit time integration of the diffusion system and its coupled form.

One step is a pure function old state -> new state; forward Euler applied to
the divergence form: the diffusion step computes u + dt * Lap(grad Phi(u)),
the coupled step differences conservative face fluxes with arithmetically
averaged coefficients, and the scalar step is the N = 1 reduction with an
arbitrary increasing nonlinearity.  Range excursions abort, never clamp;
clamping would silently invalidate every estimate checked downstream.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .errors import RangeExcursionError
from .grid import FieldState, GridSpec, Trajectory, laplacian, vector_norm
from .potentials import (CoupledCoefficients, EllipticityWindow,
                         RadialPotential, certify_window, coupled_decomposition,
                         grad_Phi_field)


def cfl_dt(grid: GridSpec, window: EllipticityWindow, sigma: float = 1.0) -> float:
    """Stable explicit step: sigma * h^2 / (2 n Lambda)."""
    if not (0.0 < sigma <= 1.0):
        raise ValueError(f"cfl safety factor must be in (0, 1], got {sigma}")
    return sigma * grid.h * grid.h / (2.0 * grid.n * window.Lam)


def cfl_dt_coupled(grid: GridSpec, cc: CoupledCoefficients, sigma: float = 1.0) -> float:
    """Coupled-step bound with sup(a + |c| |H_z|) as the effective diffusivity."""
    if not (0.0 < sigma <= 1.0):
        raise ValueError(f"cfl safety factor must be in (0, 1], got {sigma}")
    return sigma * grid.h * grid.h / (2.0 * grid.n * cc.bounds["eff_Lambda"])


def _abort_if_outside(state: FieldState, r_max: float) -> None:
    r = vector_norm(state.values)
    worst = float(r.max())
    if worst > r_max * (1.0 + 1e-12):
        loc = tuple(int(i) for i in np.unravel_index(int(r.argmax()), state.grid.sizes))
        raise RangeExcursionError(
            f"|u| = {worst} exceeds r_max = {r_max} at {loc}, t = {state.t}",
            location=loc, t=state.t)


def _finish_step(state: FieldState, new: np.ndarray, dt: float) -> FieldState:
    # states are finite by construction, so non-finite values can only be born here
    if not np.isfinite(new).all():
        bad = ~np.isfinite(new)
        loc = tuple(int(i) for i in np.unravel_index(int(bad.argmax()), new.shape))
        raise RangeExcursionError(
            f"step produced a non-finite value at component {loc[0]}, point "
            f"{loc[1:]}, t = {state.t + dt}", location=loc[1:], t=state.t + dt)
    return FieldState(grid=state.grid, values=new, t=state.t + dt,
                      boundary_values=state.boundary_values)


def step_diffusion(state: FieldState, p: RadialPotential, dt: float) -> FieldState:
    """One forward-Euler step of u_t = Lap(grad Phi(u))."""
    _abort_if_outside(state, p.r_max)
    v = grad_Phi_field(p, state.values)
    new = state.values + dt * np.stack(
        [laplacian(v[c], state.grid) for c in range(state.n_components)])
    return _finish_step(state, new, dt)


def step_scalar(state: FieldState, g: Callable[[np.ndarray], np.ndarray],
                dt: float, r_max: float = math.inf) -> FieldState:
    """One forward-Euler step of the scalar equation u_t = Lap(g(u))."""
    if state.n_components != 1:
        raise ValueError("the scalar step applies to single-component states")
    if math.isfinite(r_max):
        _abort_if_outside(state, r_max)
    v = np.asarray(g(state.values[0]), dtype=float)
    new = state.values + dt * laplacian(v, state.grid)[None]
    return _finish_step(state, new, dt)


def _face_divergence(scalar_coef: np.ndarray, fields: np.ndarray,
                     extra_coef: np.ndarray | None, extra_field: np.ndarray | None,
                     grid: GridSpec) -> np.ndarray:
    """Divergence of (avg coef * D fields + avg extra_coef * D extra_field) over faces.

    `fields` is (N, *sizes); `extra_coef` is (N, *sizes) paired with the scalar
    `extra_field`.  Conservative: on periodic grids the flux differences
    telescope, so each component mean is conserved to rounding.
    """
    h = grid.h
    out = np.zeros_like(fields)
    if grid.periodic:
        for a in range(grid.n):
            du = (np.roll(fields, -1, axis=a + 1) - fields) / h
            af = 0.5 * (scalar_coef + np.roll(scalar_coef, -1, axis=a))
            flux = af[None] * du
            if extra_field is not None:
                dH = (np.roll(extra_field, -1, axis=a) - extra_field) / h
                cf = 0.5 * (extra_coef + np.roll(extra_coef, -1, axis=a + 1))
                flux = flux + cf * dH[None]
            out += (flux - np.roll(flux, 1, axis=a + 1)) / h
        return out
    core = tuple(slice(1, -1) for _ in range(grid.n))
    acc = np.zeros_like(fields[(slice(None), *core)])
    for a in range(grid.n):
        lo = list(core)
        hi = list(core)
        lo[a] = slice(0, -1)
        hi[a] = slice(1, None)
        lo, hi = tuple(lo), tuple(hi)
        du = (fields[(slice(None), *hi)] - fields[(slice(None), *lo)]) / h
        af = 0.5 * (scalar_coef[hi] + scalar_coef[lo])
        flux = af[None] * du  # flux at every face along axis a, other axes interior
        if extra_field is not None:
            dH = (extra_field[hi] - extra_field[lo]) / h
            cf = 0.5 * (extra_coef[(slice(None), *hi)] + extra_coef[(slice(None), *lo)])
            flux = flux + cf * dH[None]
        right = [slice(None)] * (grid.n + 1)
        left = [slice(None)] * (grid.n + 1)
        right[a + 1] = slice(1, None)
        left[a + 1] = slice(0, -1)
        acc += (flux[tuple(right)] - flux[tuple(left)]) / h
    out[(slice(None), *core)] = acc
    return out


def step_coupled(state: FieldState, cc: CoupledCoefficients, dt: float) -> FieldState:
    """One conservative face-flux step of u_t = div(a grad u + c grad H(u))."""
    _abort_if_outside(state, cc.r_max)
    r = vector_norm(state.values)
    a_field = np.asarray(cc.a(r), dtype=float) + np.zeros_like(r)
    h_field = np.asarray(cc.H(state.values), dtype=float) + np.zeros_like(r)
    c_field = np.asarray(cc.c(state.values), dtype=float)
    div = _face_divergence(a_field, state.values, c_field, h_field, state.grid)
    new = state.values + dt * div
    return _finish_step(state, new, dt)


# ---------------------------------------------------------------------------
# initial data

def _unit_direction(direction, n_components: int) -> np.ndarray:
    if direction is None:
        d = np.zeros(n_components)
        d[0] = 1.0
        return d
    d = np.asarray(direction, dtype=float)
    if d.shape != (n_components,):
        raise ValueError(f"direction must have {n_components} entries")
    norm = float(np.sqrt(np.sum(d * d)))
    if norm == 0.0:
        raise ValueError("direction must be nonzero")
    return d / norm


def _axis_grids(grid: GridSpec) -> list[np.ndarray]:
    out = []
    for a in range(grid.n):
        shape = [1] * grid.n
        shape[a] = grid.sizes[a]
        out.append(grid.coords(a).reshape(shape))
    return out


def _mode_field(grid: GridSpec, k, phase: float) -> np.ndarray:
    ks = [int(v) for v in (k if hasattr(k, "__len__") else [k] * grid.n)]
    if len(ks) != grid.n:
        raise ValueError("one wavenumber per axis required")
    f = np.ones(grid.sizes)
    for a, x in enumerate(_axis_grids(grid)):
        L = grid.extent(a)
        if grid.periodic:
            f = f * np.sin(2.0 * np.pi * ks[a] * x / L + phase)
        else:
            if ks[a] < 1:
                raise ValueError("Dirichlet modes need wavenumbers >= 1")
            f = f * np.sin(np.pi * ks[a] * x / L)
    return f


def _bump_field(grid: GridSpec, center, width: float) -> np.ndarray:
    d2 = np.zeros(grid.sizes)
    for a, x in enumerate(_axis_grids(grid)):
        d = x - float(center[a])
        if grid.periodic:
            L = grid.extent(a)
            d = d - L * np.round(d / L)
        d2 = d2 + d * d
    return np.exp(-d2 / (2.0 * width * width))


def initial_field(grid: GridSpec, n_components: int, spec: dict, seed: int) -> np.ndarray:
    """Named reproducible initial-data families.

    kinds: "mode" (separable sine), "bands" (seeded band-limited sum, sup-norm
    bounded by the amplitude independent of resolution), "bump" (radial
    Gaussian), "two_bump" (colliding pair), "constant".  Random draws depend
    only on the seed and the family parameters, never on the grid, so one seed
    denotes one continuum datum across resolutions.
    """
    kind = spec.get("kind", "mode")
    amp = float(spec.get("amplitude", 0.5))
    rng = np.random.default_rng(seed)
    centers_default = tuple(0.5 * grid.extent(a) for a in range(grid.n))

    if kind == "constant":
        vals = np.asarray(spec.get("value", [amp] * n_components), dtype=float)
        if vals.shape != (n_components,):
            raise ValueError(f"constant value must have {n_components} entries")
        return np.broadcast_to(vals.reshape((n_components,) + (1,) * grid.n),
                               (n_components, *grid.sizes)).copy()

    if kind == "mode":
        d = _unit_direction(spec.get("direction"), n_components)
        f = _mode_field(grid, spec.get("k", [1] * grid.n), float(spec.get("phase", 0.0)))
        return amp * d.reshape((n_components,) + (1,) * grid.n) * f[None]

    if kind == "bands":
        kmax = int(spec.get("kmax", 3))
        if kmax < 1:
            raise ValueError("kmax must be at least 1")
        modes = [tuple(idx) for idx in np.ndindex(*([kmax] * grid.n))]
        fields = np.zeros((n_components, *grid.sizes))
        l1 = np.zeros(n_components)
        for c in range(n_components):
            for kidx in modes:
                coeff = float(rng.standard_normal())
                phases = rng.uniform(0.0, 2.0 * np.pi, size=grid.n)
                f = np.ones(grid.sizes)
                for a, x in enumerate(_axis_grids(grid)):
                    L = grid.extent(a)
                    ka = kidx[a] + 1
                    if grid.periodic:
                        f = f * np.sin(2.0 * np.pi * ka * x / L + phases[a])
                    else:
                        f = f * np.sin(np.pi * ka * x / L)
                fields[c] += coeff * f
                l1[c] += abs(coeff)
        scale = amp / math.sqrt(float(np.sum(l1 * l1)))
        fields *= scale
        offset = spec.get("offset")
        if offset is not None:
            off = np.asarray(offset, dtype=float)
            if off.shape != (n_components,):
                raise ValueError(f"offset must have {n_components} entries")
            fields += off.reshape((n_components,) + (1,) * grid.n)
        return fields

    if kind == "bump":
        d = _unit_direction(spec.get("direction"), n_components)
        center = spec.get("center", centers_default)
        width = float(spec.get("width", grid.extent(0) / 8.0))
        f = _bump_field(grid, center, width)
        return amp * d.reshape((n_components,) + (1,) * grid.n) * f[None]

    if kind == "two_bump":
        c1 = spec.get("center1", tuple(0.25 * grid.extent(a) for a in range(grid.n)))
        c2 = spec.get("center2", tuple(0.75 * grid.extent(a) for a in range(grid.n)))
        w = float(spec.get("width", grid.extent(0) / 10.0))
        d1 = _unit_direction(spec.get("direction1"), n_components)
        if n_components > 1 and "direction2" not in spec:
            d2 = np.zeros(n_components)
            d2[1] = 1.0
        else:
            d2 = _unit_direction(spec.get("direction2"), n_components)
        f1 = _bump_field(grid, c1, w)
        f2 = _bump_field(grid, c2, w)
        out = (d1.reshape((n_components,) + (1,) * grid.n) * f1[None]
               + d2.reshape((n_components,) + (1,) * grid.n) * f2[None])
        sup = float(vector_norm(out).max())
        return out * (amp / sup) if sup > 0 else out

    raise ValueError(f"unknown initial-data kind '{kind}'")


# ---------------------------------------------------------------------------
# run driver

@dataclass(frozen=True)
class RunConfig:
    """Everything needed to reproduce one integration."""

    grid: GridSpec
    n_components: int
    potential: RadialPotential
    t_end: float
    system: str = "diffusion"            # diffusion | coupled | scalar
    cfl_sigma: float = 0.9
    snapshot_every: int = 1
    initial: dict = field(default_factory=lambda: {"kind": "mode"})
    seed: int = 0
    boundary_values: tuple[float, ...] | None = None
    dt_override: float | None = None
    name: str = "run"

    def __post_init__(self):
        if self.t_end < 0.0:
            raise ValueError("t_end must be nonnegative")
        if not (0.0 < self.cfl_sigma <= 1.0):
            raise ValueError("cfl_sigma must be in (0, 1]")
        if not (1 <= self.n_components <= 8):
            raise ValueError("between 1 and 8 components are supported")
        if self.snapshot_every < 1:
            raise ValueError("snapshot_every must be at least 1")
        if self.system not in ("diffusion", "coupled", "scalar"):
            raise ValueError(f"unknown system '{self.system}'")
        if self.system == "scalar" and self.n_components != 1:
            raise ValueError("the scalar system has exactly one component")
        if not self.grid.periodic and self.boundary_values is None:
            object.__setattr__(self, "boundary_values", (0.0,) * self.n_components)

    def describe(self) -> dict:
        """Canonical JSON-able description; the content hash is taken over this."""
        return {
            "grid": {"sizes": list(self.grid.sizes), "h": self.grid.h,
                     "boundary": self.grid.boundary},
            "components": self.n_components,
            "potential": {"id": self.potential.id, "r_max": self.potential.r_max},
            "system": self.system,
            "t_end": self.t_end,
            "cfl_sigma": self.cfl_sigma,
            "snapshot_every": self.snapshot_every,
            "initial": self.initial,
            "seed": self.seed,
            "boundary_values": list(self.boundary_values) if self.boundary_values else None,
            "dt_override": self.dt_override,
            "name": self.name,
        }


def config_hash(document: dict) -> str:
    """Content hash of a canonicalized JSON document."""
    blob = json.dumps(document, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()


def _plan_steps(t_end: float, dt_max: float, snapshot_every: int,
                dt_override: float | None) -> tuple[int, float]:
    if t_end == 0.0:
        return 0, dt_max
    if dt_override is not None:
        steps = round(t_end / dt_override)
        if steps < 1 or abs(steps * dt_override - t_end) > 1e-9 * t_end:
            raise ValueError("dt_override must divide t_end")
        if steps % snapshot_every:
            raise ValueError("snapshot_every must divide the step count")
        if dt_override > dt_max * (1.0 + 1e-12):
            raise ValueError(f"dt_override {dt_override} violates the CFL bound {dt_max}")
        return steps, dt_override
    raw = max(1, math.ceil(t_end / dt_max - 1e-12))
    steps = snapshot_every * math.ceil(raw / snapshot_every)
    return steps, t_end / steps


def run(config: RunConfig) -> Trajectory:
    """Integrate to t_end, storing a snapshot every `snapshot_every` steps.

    Deterministic given the seed; the manifest in `meta` records the potential,
    its certified window, dt and the content hash of the configuration.
    """
    p = config.potential
    window = certify_window(p)
    cc = None
    if config.system == "coupled":
        cc = coupled_decomposition(p)
        dt_max = cfl_dt_coupled(config.grid, cc, config.cfl_sigma)
    else:
        dt_max = cfl_dt(config.grid, window, config.cfl_sigma)
    steps, dt = _plan_steps(config.t_end, dt_max, config.snapshot_every,
                            config.dt_override)

    values = initial_field(config.grid, config.n_components, config.initial, config.seed)
    if not config.grid.periodic:
        bv = config.boundary_values
        ring = config.grid.boundary_mask
        for c in range(config.n_components):
            values[c][ring] = bv[c if len(bv) > 1 else 0]
    state = FieldState(grid=config.grid, values=values, t=0.0,
                       boundary_values=config.boundary_values)
    _abort_if_outside(state, p.r_max)

    if config.system == "scalar":
        stepper = lambda s: step_scalar(s, p.phi1, dt, r_max=p.r_max)
    elif config.system == "coupled":
        stepper = lambda s: step_coupled(s, cc, dt)
    else:
        stepper = lambda s: step_diffusion(s, p, dt)

    snaps = [state]
    for k in range(steps):
        try:
            state = stepper(state)
        except RangeExcursionError as exc:
            exc.step = k + 1
            raise
        if (k + 1) % config.snapshot_every == 0:
            snaps.append(state)
    _abort_if_outside(state, p.r_max)

    doc = config.describe()
    meta = {
        "config": doc,
        "config_hash": config_hash(doc),
        "potential_id": p.id,
        "window": {"lam": window.lam, "Lam": window.Lam, "r_max": window.r_max},
        "dt": dt,
        "steps": steps,
        "snapshot_every": config.snapshot_every,
        "seed": config.seed,
        "system": config.system,
        "name": config.name,
    }
    return Trajectory(snapshots=tuple(snaps), dt=dt, meta=meta)


def with_resolution(config: RunConfig, size: int) -> RunConfig:
    """Same physical run on `size` points per axis (extent preserved)."""
    g = config.grid
    L = g.extent(0)
    h = L / size if g.periodic else L / (size - 1)
    grid = GridSpec(n=g.n, sizes=(size,) * g.n, h=h, boundary=g.boundary)
    return replace(config, grid=grid)
