"""Discrete domains, fields, stencil calculus and parabolic-cylinder bookkeeping.

Uniform tensor grids in 1, 2 or 3 dimensions with periodic or Dirichlet
boundaries.  Dirichlet grids carry a one-cell-thick boundary layer; stencil
outputs are meaningful on the interior only (the boundary ring of a Laplacian
is returned as zero).  All reductions go through numpy, whose float sums use
pairwise (tree) summation, which bounds rounding drift deterministically.

A parabolic cylinder Q(x0, t0, R) is the discrete set of grid points within
Euclidean distance R of x0, crossed with the snapshot times t satisfying
t0 - R^2 < t <= t0.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Sequence

import numpy as np

PERIODIC = "periodic"
DIRICHLET = "dirichlet"

_MAGIC = b"PELB"
_VERSION = 1


@dataclass(frozen=True)
class GridSpec:
    """Uniform grid: n axes, `sizes` points per axis, spacing h, one boundary kind.

    Periodic axes cover [0, m*h); Dirichlet axes cover [0, (m-1)*h] with the
    first and last plane forming the boundary layer.
    """

    n: int
    sizes: tuple[int, ...]
    h: float
    boundary: str = PERIODIC

    def __post_init__(self):
        if self.n not in (1, 2, 3):
            raise ValueError(f"spatial dimension must be 1, 2 or 3, got {self.n}")
        object.__setattr__(self, "sizes", tuple(int(s) for s in self.sizes))
        if len(self.sizes) != self.n:
            raise ValueError(f"sizes {self.sizes} do not match dimension {self.n}")
        if any(s < 4 for s in self.sizes):
            raise ValueError(f"every axis needs at least 4 points, got {self.sizes}")
        if not (self.h > 0.0 and math.isfinite(self.h)):
            raise ValueError(f"spacing must be a positive finite number, got {self.h}")
        if self.boundary not in (PERIODIC, DIRICHLET):
            raise ValueError(f"boundary must be '{PERIODIC}' or '{DIRICHLET}'")

    @property
    def periodic(self) -> bool:
        return self.boundary == PERIODIC

    def extent(self, axis: int) -> float:
        """Physical length of one axis."""
        m = self.sizes[axis]
        return m * self.h if self.periodic else (m - 1) * self.h

    def coords(self, axis: int) -> np.ndarray:
        return np.arange(self.sizes[axis]) * self.h

    @cached_property
    def boundary_mask(self) -> np.ndarray:
        """Boolean mask of the one-cell boundary layer (all False when periodic)."""
        mask = np.zeros(self.sizes, dtype=bool)
        if not self.periodic:
            for a in range(self.n):
                lo = [slice(None)] * self.n
                hi = [slice(None)] * self.n
                lo[a] = 0
                hi[a] = self.sizes[a] - 1
                mask[tuple(lo)] = True
                mask[tuple(hi)] = True
        mask.setflags(write=False)
        return mask

    @cached_property
    def interior_mask(self) -> np.ndarray:
        mask = ~self.boundary_mask
        mask.setflags(write=False)
        return mask

    @property
    def interior_slices(self) -> tuple[slice, ...]:
        if self.periodic:
            return tuple(slice(None) for _ in range(self.n))
        return tuple(slice(1, -1) for _ in range(self.n))

    @property
    def num_points(self) -> int:
        return int(np.prod(self.sizes))

    def cell_volume(self) -> float:
        return self.h ** self.n


def _check_scalar_field(values: np.ndarray, grid: GridSpec) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    if values.shape != grid.sizes:
        raise ValueError(f"field shape {values.shape} does not match grid {grid.sizes}")
    if not np.isfinite(values).all():
        raise ValueError("field contains non-finite values")
    return values


def laplacian(values: np.ndarray, grid: GridSpec) -> np.ndarray:
    """Second-order 2n+1-point Laplacian of a scalar field.

    Periodic grids are differenced everywhere (wrap-around); Dirichlet grids on
    the interior only, with the boundary ring of the output set to zero.
    """
    f = _check_scalar_field(values, grid)
    h2 = grid.h * grid.h
    if grid.periodic:
        out = -2.0 * grid.n * f
        for a in range(grid.n):
            out += np.roll(f, 1, axis=a) + np.roll(f, -1, axis=a)
        return out / h2
    out = np.zeros_like(f)
    core = tuple(slice(1, -1) for _ in range(grid.n))
    acc = -2.0 * grid.n * f[core]
    for a in range(grid.n):
        up = list(core)
        dn = list(core)
        up[a] = slice(2, None)
        dn[a] = slice(0, -2)
        acc = acc + f[tuple(up)] + f[tuple(dn)]
    out[core] = acc / h2
    return out


def _as_components(values: np.ndarray, grid: GridSpec) -> np.ndarray:
    """Promote a scalar field to shape (1, *sizes); pass (N, *sizes) through."""
    values = np.asarray(values, dtype=float)
    if values.shape == grid.sizes:
        return values[None]
    if values.ndim == grid.n + 1 and values.shape[1:] == grid.sizes:
        return values
    raise ValueError(f"field shape {values.shape} does not match grid {grid.sizes}")


def gradient_sq(values: np.ndarray, grid: GridSpec) -> np.ndarray:
    """Sum over components and axes of squared first differences, |grad u|^2.

    Central differences in the interior; first-order one-sided differences on
    the Dirichlet boundary ring (lower order, kept only for completeness of
    boundary diagnostics).
    """
    comps = _as_components(values, grid)
    if not np.isfinite(comps).all():
        raise ValueError("field contains non-finite values")
    out = np.zeros(grid.sizes)
    for c in range(comps.shape[0]):
        f = comps[c]
        for a in range(grid.n):
            if grid.periodic:
                d = (np.roll(f, -1, axis=a) - np.roll(f, 1, axis=a)) / (2.0 * grid.h)
            else:
                d = np.gradient(f, grid.h, axis=a, edge_order=1)
            out += d * d
    return out


def hessian_sq(values: np.ndarray, grid: GridSpec) -> np.ndarray:
    """Sum over components and ordered axis pairs of squared second differences.

    Mixed derivatives use the 4-point cross stencil.  Dirichlet output is
    meaningful on the interior only (boundary ring zero).
    """
    comps = _as_components(values, grid)
    h2 = grid.h * grid.h
    out = np.zeros(grid.sizes)

    def shift(f, a, k):
        return np.roll(f, -k, axis=a)

    if grid.periodic:
        for c in range(comps.shape[0]):
            f = comps[c]
            for a in range(grid.n):
                daa = (shift(f, a, 1) - 2.0 * f + shift(f, a, -1)) / h2
                out += daa * daa
                for b in range(grid.n):
                    if b == a:
                        continue
                    dab = (shift(shift(f, a, 1), b, 1) - shift(shift(f, a, 1), b, -1)
                           - shift(shift(f, a, -1), b, 1) + shift(shift(f, a, -1), b, -1)) / (4.0 * h2)
                    out += dab * dab
        return out

    core = tuple(slice(1, -1) for _ in range(grid.n))

    def sh(a, k):
        sl = list(core)
        sl[a] = slice(1 + k, (-1 + k) or None)
        return tuple(sl)

    def sh2(a, ka, b, kb):
        sl = list(core)
        sl[a] = slice(1 + ka, (-1 + ka) or None)
        sl[b] = slice(1 + kb, (-1 + kb) or None)
        return tuple(sl)

    acc = np.zeros_like(comps[0][core])
    for c in range(comps.shape[0]):
        f = comps[c]
        for a in range(grid.n):
            daa = (f[sh(a, 1)] - 2.0 * f[core] + f[sh(a, -1)]) / h2
            acc += daa * daa
            for b in range(grid.n):
                if b == a:
                    continue
                dab = (f[sh2(a, 1, b, 1)] - f[sh2(a, 1, b, -1)]
                       - f[sh2(a, -1, b, 1)] + f[sh2(a, -1, b, -1)]) / (4.0 * h2)
                acc += dab * dab
    out[core] = acc
    return out


def vector_norm(values: np.ndarray) -> np.ndarray:
    """Pointwise Euclidean norm over the component axis of an (N, *sizes) array."""
    return np.sqrt(np.sum(np.square(values), axis=0))


@dataclass(frozen=True)
class FieldState:
    """N-component field on a grid at one time.

    Dirichlet states carry fixed per-component boundary values; the boundary
    layer of `values` must equal them exactly.  Arrays are frozen on
    construction so states can be shared across threads.
    """

    grid: GridSpec
    values: np.ndarray
    t: float
    boundary_values: tuple[float, ...] | None = None

    def __post_init__(self):
        values = np.ascontiguousarray(self.values, dtype=float)
        if values.ndim != self.grid.n + 1 or values.shape[1:] != self.grid.sizes:
            raise ValueError(
                f"values shape {values.shape} does not match (N, *{self.grid.sizes})")
        if not np.isfinite(values).all():
            raise ValueError("state contains non-finite values")
        if self.grid.periodic:
            if self.boundary_values is not None:
                raise ValueError("periodic states carry no boundary values")
        else:
            if self.boundary_values is None:
                raise ValueError("Dirichlet states require boundary_values")
            bv = tuple(float(v) for v in np.atleast_1d(self.boundary_values))
            if len(bv) == 1 and values.shape[0] > 1:
                bv = bv * values.shape[0]
            if len(bv) != values.shape[0]:
                raise ValueError("one boundary value per component required")
            ring = self.grid.boundary_mask
            for c, v in enumerate(bv):
                if not np.all(values[c][ring] == v):
                    raise ValueError(
                        f"boundary layer of component {c} does not equal its boundary value {v}")
            object.__setattr__(self, "boundary_values", bv)
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "t", float(self.t))

    @property
    def n_components(self) -> int:
        return self.values.shape[0]

    def boundary_sup(self) -> float:
        """Sup of |u| (vector norm) over the boundary layer; 0 for periodic grids."""
        if self.grid.periodic:
            return 0.0
        return math.sqrt(sum(v * v for v in self.boundary_values))


@dataclass(frozen=True)
class Trajectory:
    """Time-ordered snapshots with uniform spacing (an integer multiple of dt)."""

    snapshots: tuple[FieldState, ...]
    dt: float
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        snaps = tuple(self.snapshots)
        if not snaps:
            raise ValueError("a trajectory needs at least one snapshot")
        g = snaps[0].grid
        nc = snaps[0].n_components
        for s in snaps[1:]:
            if s.grid != g:
                raise ValueError("snapshots disagree on the grid")
            if s.n_components != nc:
                raise ValueError("snapshots disagree on the component count")
        times = np.array([s.t for s in snaps])
        if len(snaps) > 1:
            gaps = np.diff(times)
            if np.any(gaps <= 0):
                raise ValueError("snapshot times must be strictly increasing")
            spacing = gaps[0]
            if np.any(np.abs(gaps - spacing) > 1e-9 * max(spacing, 1e-300)):
                raise ValueError("snapshot spacing is not uniform")
            ratio = spacing / self.dt
            if abs(ratio - round(ratio)) > 1e-6:
                raise ValueError("snapshot spacing must be an integer multiple of dt")
        object.__setattr__(self, "snapshots", snaps)

    @property
    def grid(self) -> GridSpec:
        return self.snapshots[0].grid

    @property
    def n_components(self) -> int:
        return self.snapshots[0].n_components

    @property
    def times(self) -> np.ndarray:
        return np.array([s.t for s in self.snapshots])

    @property
    def snapshot_dt(self) -> float:
        if len(self.snapshots) < 2:
            return self.dt
        return self.snapshots[1].t - self.snapshots[0].t

    @property
    def final(self) -> FieldState:
        return self.snapshots[-1]


@dataclass(frozen=True)
class Cylinder:
    """Parabolic cylinder Q(x0, t0, R) = B(x0, R) x (t0 - R^2, t0].

    The spatial center is given in physical coordinates; it need not lie on a
    grid point.
    """

    center: tuple[float, ...]
    t0: float
    R: float

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))
        if not (self.R > 0.0):
            raise ValueError("cylinder radius must be positive")


def ball_mask(grid: GridSpec, center: Sequence[float], R: float) -> np.ndarray:
    """Grid points within Euclidean distance R of the center.

    Periodic axes measure minimal-image distance tied to the axis extent.
    """
    if len(center) != grid.n:
        raise ValueError("center dimension does not match the grid")
    dist2 = np.zeros(grid.sizes)
    for a in range(grid.n):
        d = grid.coords(a) - float(center[a])
        if grid.periodic:
            L = grid.extent(a)
            d = d - L * np.round(d / L)
        shape = [1] * grid.n
        shape[a] = grid.sizes[a]
        dist2 = dist2 + (d * d).reshape(shape)
    return dist2 <= R * R * (1.0 + 1e-12)


def _window_indices(traj: Trajectory, t0: float, R: float) -> np.ndarray:
    times = traj.times
    slack = 1e-12 * max(1.0, abs(t0))
    lo = t0 - R * R
    return np.nonzero((times > lo - slack) & (times <= t0 + slack))[0]


def cylinder_members(traj: Trajectory, q: Cylinder) -> tuple[np.ndarray, np.ndarray]:
    """Validated (ball mask, snapshot indices) of a cylinder inside a trajectory.

    Raises with the failed bound spelled out if the ball leaves the domain or
    fewer than two snapshots intersect the time window.
    """
    grid = traj.grid
    mask = ball_mask(grid, q.center, q.R)
    if not mask.any():
        raise ValueError(f"ball of radius {q.R} around {q.center} contains no grid point")
    for a in range(grid.n):
        L = grid.extent(a)
        if grid.periodic:
            if 2.0 * q.R >= L:
                raise ValueError(
                    f"ball diameter {2 * q.R} exceeds the periodic extent {L} on axis {a}")
        else:
            if q.center[a] - q.R < grid.h - 1e-12 * L or q.center[a] + q.R > L - grid.h + 1e-12 * L:
                raise ValueError(
                    f"ball [{q.center[a] - q.R}, {q.center[a] + q.R}] on axis {a} "
                    f"leaves the interior (h, {L - grid.h})")
    idx = _window_indices(traj, q.t0, q.R)
    if len(idx) < 2:
        raise ValueError(
            f"time window ({q.t0 - q.R ** 2}, {q.t0}] intersects only {len(idx)} "
            f"snapshots; at least 2 are required")
    return mask, idx


def cylinder_sum(traj: Trajectory, q: Cylinder,
                 g: Callable[[FieldState], np.ndarray]) -> float:
    """Space-time integral of g over the cylinder: sum of g times h^n * snapshot spacing."""
    mask, idx = cylinder_members(traj, q)
    cell = traj.grid.cell_volume() * traj.snapshot_dt
    total = 0.0
    for k in idx:
        gk = np.asarray(g(traj.snapshots[k]), dtype=float)
        if gk.shape != traj.grid.sizes:
            raise ValueError("g must evaluate to a scalar field on the grid")
        total += float(np.sum(gk[mask]))
    return total * cell


def cylinder_average(traj: Trajectory, q: Cylinder,
                     g: Callable[[FieldState], np.ndarray]) -> float:
    """Space-time average of g over the discrete cylinder.

    The integral (point sum times h^n times snapshot spacing) divided by the
    discrete cylinder volume (point count times the same cell measure).
    """
    mask, idx = cylinder_members(traj, q)
    cell = traj.grid.cell_volume() * traj.snapshot_dt
    volume = float(mask.sum()) * len(idx) * cell
    total = 0.0
    for k in idx:
        gk = np.asarray(g(traj.snapshots[k]), dtype=float)
        if gk.shape != traj.grid.sizes:
            raise ValueError("g must evaluate to a scalar field on the grid")
        total += float(np.sum(gk[mask]))
    return total * cell / volume


# Snapshot file format, bit-exact:
#   magic "PELB", version u32=1, n u8, N u8, boundary u8 (0 periodic, 1 dirichlet),
#   sizes n x u64, h f64, t f64, then N*(prod sizes) f64 values,
#   little-endian, component-major then row-major.

def write_snapshot(path, state: FieldState) -> None:
    grid = state.grid
    head = struct.pack("<4sIBBB", _MAGIC, _VERSION, grid.n, state.n_components,
                       0 if grid.periodic else 1)
    sizes = np.asarray(grid.sizes, dtype="<u8").tobytes()
    scalars = struct.pack("<dd", grid.h, state.t)
    body = np.ascontiguousarray(state.values, dtype="<f8").tobytes()
    with open(path, "wb") as fh:
        fh.write(head)
        fh.write(sizes)
        fh.write(scalars)
        fh.write(body)


def read_snapshot(path) -> FieldState:
    with open(path, "rb") as fh:
        raw = fh.read()
    magic, version, n, nc, bflag = struct.unpack_from("<4sIBBB", raw, 0)
    if magic != _MAGIC:
        raise ValueError(f"{path}: not a snapshot file (bad magic {magic!r})")
    if version != _VERSION:
        raise ValueError(f"{path}: unsupported snapshot version {version}")
    if bflag not in (0, 1):
        raise ValueError(f"{path}: unknown boundary flag {bflag}")
    off = struct.calcsize("<4sIBBB")
    sizes = np.frombuffer(raw, dtype="<u8", count=n, offset=off).astype(int)
    off += 8 * n
    h, t = struct.unpack_from("<dd", raw, off)
    off += 16
    count = nc * int(np.prod(sizes))
    values = np.frombuffer(raw, dtype="<f8", count=count, offset=off).astype(float)
    values = values.reshape((nc, *sizes))
    grid = GridSpec(n=n, sizes=tuple(sizes), h=h,
                    boundary=PERIODIC if bflag == 0 else DIRICHLET)
    bv = None
    if not grid.periodic:
        ring = grid.boundary_mask
        bv = []
        for c in range(nc):
            vals = values[c][ring]
            if vals.size and np.any(vals != vals.flat[0]):
                raise ValueError(f"{path}: boundary layer of component {c} is not constant")
            bv.append(float(vals.flat[0]))
        bv = tuple(bv)
    return FieldState(grid=grid, values=values, t=t, boundary_values=bv)
