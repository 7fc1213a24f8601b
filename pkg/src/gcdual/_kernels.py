"""Compiled pair-energy kernels shared by the sampler and the stability search."""
from __future__ import annotations

import math

import numba
import numpy as np

_KIND = {"ideal": 0, "hard_spheres": 1, "square_well": 2, "lennard_jones": 3}


def supported(potential) -> bool:
    return potential.kind in _KIND


def kernel_params(potential) -> tuple[int, np.ndarray]:
    if potential.kind not in _KIND:
        raise ValueError(f"compiled kernels support catalog potentials only, not {potential.kind!r}")
    p = potential.params
    prm = np.zeros(4)
    if potential.kind == "hard_spheres":
        prm[0] = p["sigma"]
    elif potential.kind in ("square_well", "lennard_jones"):
        prm[:3] = p["sigma"], p["epsilon"], p["cutoff"]
        if potential.kind == "lennard_jones":
            sr6 = (p["sigma"] / p["cutoff"]) ** 6
            prm[3] = 4.0 * p["epsilon"] * (sr6 * sr6 - sr6)
    return _KIND[potential.kind], prm


@numba.njit(cache=True)
def pair(kind, prm, r):
    if kind == 0:
        return 0.0
    if kind == 1:
        return np.inf if r < prm[0] else 0.0
    if kind == 2:
        if r < prm[0]:
            return np.inf
        return -prm[1] if r < prm[2] else 0.0
    if r >= prm[2]:
        return 0.0
    if r == 0.0:
        return np.inf
    sr6 = (prm[0] / r) ** 6
    return 4.0 * prm[1] * (sr6 * sr6 - sr6) - prm[3]


@numba.njit(cache=True)
def energy_at(pos, n, x, skip, kind, prm):
    """Energy of a particle at ``x`` with the first ``n`` rows of ``pos``, skipping row ``skip``."""
    e = 0.0
    for j in range(n):
        if j == skip:
            continue
        d = math.sqrt((pos[j, 0] - x[0]) ** 2 + (pos[j, 1] - x[1]) ** 2 + (pos[j, 2] - x[2]) ** 2)
        e += 2.0 * pair(kind, prm, d)
        if e == np.inf:
            return e
    return e


@numba.njit(cache=True)
def hill_climb(q, sides, kind, prm, rnd, step0, floor, halve_every):
    """Greedy single-particle moves; rows of ``rnd`` are (index, dx, dy, dz)."""
    n = q.shape[0]
    x = np.empty(3)
    step = step0
    for m in range(rnd.shape[0]):
        i = min(int(rnd[m, 0] * n), n - 1)
        for k in range(3):
            x[k] = min(max(q[i, k] + step * rnd[m, 1 + k], 0.0), sides[k])
        new = energy_at(q, n, x, i, kind, prm)
        if new < np.inf and new <= energy_at(q, n, q[i], i, kind, prm):
            for k in range(3):
                q[i, k] = x[k]
        if (m + 1) % halve_every == 0:
            step = max(0.5 * step, floor)
    return q
