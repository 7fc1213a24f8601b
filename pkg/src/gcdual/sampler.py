"""Grand-canonical Metropolis sampler (insertion / deletion / displacement).

Positions follow a Markov chain targeting ``exp(mu N + beta U) K^N / N!``
on the box; velocities are drawn exactly from the tilted Gaussian
``N(-lam/beta, -1/beta)`` whenever a configuration is emitted.  Random
numbers come from a numpy ``Generator`` and are handed to the compiled
kernel in blocks, so a run is reproducible from its seed alone.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator, Optional

import numba
import numpy as np

from .domain import BoxDomain, ThermoParams
from .partition import log_kinetic_factor
from ._kernels import energy_at as _energy_at, kernel_params as _kernel_params
from .potentials import PairPotential

@numba.njit(cache=True)
def _run(pos, n, energy, rnd, log_zv, beta, sides, kind, prm, dmax):
    """Consume rows of ``rnd``; stop early when the position buffer is full."""
    cap = pos.shape[0]
    x = np.empty(3)
    for step in range(rnd.shape[0]):
        move = rnd[step, 0]
        if move < 1.0 / 3.0:
            if n == cap:
                return n, energy, step
            for k in range(3):
                x[k] = rnd[step, 1 + k] * sides[k]
            du = _energy_at(pos, n, x, -1, kind, prm)
            if du < np.inf:
                log_acc = log_zv - math.log(n + 1) + beta * du
                if log_acc >= 0.0 or rnd[step, 4] < math.exp(log_acc):
                    for k in range(3):
                        pos[n, k] = x[k]
                    n += 1
                    energy += du
        elif move < 2.0 / 3.0:
            if n == 0:
                continue
            i = min(int(rnd[step, 1] * n), n - 1)
            du = -_energy_at(pos, n, pos[i], i, kind, prm)
            log_acc = math.log(n) - log_zv + beta * du
            if log_acc >= 0.0 or rnd[step, 4] < math.exp(log_acc):
                for k in range(3):
                    pos[i, k] = pos[n - 1, k]
                n -= 1
                energy += du
        else:
            if n == 0:
                continue
            i = min(int(rnd[step, 1] * n), n - 1)
            inside = True
            for k in range(3):
                x[k] = pos[i, k] + dmax * (2.0 * rnd[step, 2 + k if k < 2 else 5] - 1.0)
                if x[k] < 0.0 or x[k] > sides[k]:
                    inside = False
            if not inside:
                continue
            new = _energy_at(pos, n, x, i, kind, prm)
            if new == np.inf:
                continue
            old = _energy_at(pos, n, pos[i], i, kind, prm)
            du = new - old
            if beta * du >= 0.0 or rnd[step, 4] < math.exp(beta * du):
                for k in range(3):
                    pos[i, k] = x[k]
                energy += du
    return n, energy, rnd.shape[0]


@dataclass
class Configuration:
    positions: np.ndarray
    velocities: np.ndarray
    potential_energy: float

    @property
    def N(self) -> int:
        return len(self.positions)

    @property
    def P(self) -> np.ndarray:
        return self.velocities.sum(axis=0)

    @property
    def H(self) -> float:
        return 0.5 * float(np.sum(self.velocities**2)) + self.potential_energy


def default_thinning(box: BoxDomain, params: ThermoParams) -> int:
    zv = math.exp(params.mu + log_kinetic_factor(params.lam, params.beta)) * box.volume
    return int(max(20, min(25 * (zv + 1.0), 50000)))


def gc_sample(
    potential: PairPotential,
    box: BoxDomain,
    params: ThermoParams,
    seed: int = 0,
    n_samples: Optional[int] = None,
    thin: Optional[int] = None,
    burn_in: Optional[int] = None,
    max_displacement: Optional[float] = None,
) -> Iterator[Configuration]:
    """Yield grand-canonical configurations; infinite if ``n_samples`` is None."""
    params.check()
    kind, prm = _kernel_params(potential)
    rng = np.random.default_rng(seed)
    sides = np.asarray(box.sides, dtype=float)
    thin = thin or default_thinning(box, params)
    burn_in = 20 * thin if burn_in is None else burn_in
    dmax = max_displacement or 0.3 * min(potential.hard_core or 1.0, min(box.sides))
    log_zv = params.mu + log_kinetic_factor(params.lam, params.beta) + math.log(box.volume)
    beta = params.beta
    mean_v = -params.lam / beta
    sd_v = math.sqrt(-1.0 / beta)
    pos = np.zeros((64, 3))
    n, energy = 0, 0.0

    def advance(steps):
        nonlocal pos, n, energy
        rnd = rng.random((steps, 6))
        done = 0
        while done < steps:
            n, energy, k = _run(pos, n, energy, rnd[done:], log_zv, beta, sides, kind, prm, dmax)
            done += k
            if done < steps:
                pos = np.concatenate([pos, np.zeros_like(pos)])

    advance(burn_in)
    emitted = 0
    while n_samples is None or emitted < n_samples:
        advance(thin)
        v = mean_v + sd_v * rng.standard_normal((n, 3))
        yield Configuration(pos[:n].copy(), v, float(energy))
        emitted += 1


def sample_observables(potential, box, params, n_samples, seed=0, **kw) -> np.ndarray:
    """(n_samples, 5) array of (N, P, H) from :func:`gc_sample`."""
    out = np.empty((n_samples, 5))
    for i, c in enumerate(gc_sample(potential, box, params, seed=seed, n_samples=n_samples, **kw)):
        out[i, 0] = c.N
        out[i, 1:4] = c.P
        out[i, 4] = c.H
    return out
