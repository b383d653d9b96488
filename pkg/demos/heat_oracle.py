#!/usr/bin/env python3
"""Sanity anchor: with the quadratic potential the flow is the heat equation.

A single sine mode on a periodic grid is an exact eigenvector of the discrete
Laplacian, so its amplitude must follow (1 + dt*lambda_h)^steps to rounding,
and the continuum decay exp(-4 pi^2 t) to O(h^2 + dt).
"""

import math

import numpy as np

from pelab import GridSpec, RunConfig, quadratic, run

size = 128
grid = GridSpec(n=1, sizes=(size,), h=1.0 / size, boundary="periodic")
cfg = RunConfig(grid=grid, n_components=1, potential=quadratic(2.0),
                t_end=0.01, cfl_sigma=0.9, snapshot_every=8,
                initial={"kind": "mode", "k": [1], "amplitude": 1.0}, seed=1)
traj = run(cfg)

x = grid.coords(0)
s = np.sin(2 * np.pi * x)
lam_h = -(4.0 / grid.h ** 2) * math.sin(math.pi * grid.h) ** 2

print(f"grid: {size} points, dt = {traj.dt:.3e}, steps = {traj.meta['steps']}")
print(f"discrete eigenvalue lambda_h = {lam_h:.6f} (continuum -4 pi^2 = {-4 * math.pi ** 2:.6f})")
print()
print(f"{'t':>8} {'amplitude':>12} {'(1+dt*lam)^k':>14} {'exp(lam_h t)':>14}")
for snap in traj.snapshots[:: max(1, len(traj.snapshots) // 8)]:
    amp = float(snap.values[0] @ s / (s @ s))
    k = round(snap.t / traj.dt)
    pred = (1 + traj.dt * lam_h) ** k
    print(f"{snap.t:8.5f} {amp:12.8f} {pred:14.8f} {math.exp(lam_h * snap.t):14.8f}")

amp_T = float(traj.final.values[0] @ s / (s @ s))
pred_T = (1 + traj.dt * lam_h) ** traj.meta["steps"]
cont_T = math.exp(-4 * math.pi ** 2 * 0.01)
print()
print(f"terminal amplitude          : {amp_T:.12f}")
print(f"discrete prediction         : {pred_T:.12f}  (|diff| = {abs(amp_T - pred_T):.2e})")
print(f"continuum exp(-4 pi^2 0.01) : {cont_T:.12f}  (rel err = {abs(amp_T - cont_T) / cont_T:.2e})")
