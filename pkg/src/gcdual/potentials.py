"""Pair interaction potentials and their structural constants.

The configurational energy is

    U(q_1, ..., q_n) = sum_{i != j} phi(|q_i - q_j|),

a sum over *ordered* pairs, so every unordered pair enters twice.  All
constants below (stability, temperedness) refer to this normalisation.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Optional

import numpy as np
from scipy import integrate, optimize

from . import _kernels
from .domain import BoxDomain
from .errors import ConfigError, DivergenceError, DomainError

# Ground-state energy per particle of the fcc Lennard-Jones crystal (units of epsilon,
# unordered pair sum).  Used as the stability constant of the truncated-shifted form.
LJ_FCC_ENERGY_PER_PARTICLE = 8.61


@dataclass(frozen=True, eq=False)
class PairPotential:
    """A spherically symmetric pair potential together with its constants.

    ``pair_fn`` is vectorised over distances and returns ``+inf`` inside a
    hard core.  ``params`` holds the key/value description used for
    serialisation (``kind``, ``sigma``, ``epsilon``, ``cutoff``).
    """

    pair_fn: Callable[[np.ndarray], np.ndarray]
    stability_L: float
    range_R: float
    tempered_K: float
    tempered_delta: float
    name: str
    kind: str = "custom"
    params: dict = field(default_factory=dict)
    hard_core: float = 0.0
    breakpoints: tuple = ()
    pair_deriv: Optional[Callable[[np.ndarray], np.ndarray]] = None

    def __post_init__(self):
        if self.stability_L < 0:
            raise ConfigError("stability constant must be nonnegative")
        if not self.tempered_delta > 3:
            raise ConfigError("temperedness exponent must exceed the space dimension 3")

    @property
    def is_ideal(self) -> bool:
        return self.kind == "ideal"

    @property
    def is_smooth(self) -> bool:
        return self.pair_deriv is not None

    def to_config(self) -> dict:
        return {"kind": self.kind, **self.params}

    def __call__(self, r):
        return self.pair_fn(np.asarray(r, dtype=float))

    def __repr__(self):
        return f"PairPotential({self.name})"


def ideal_gas() -> PairPotential:
    return PairPotential(
        pair_fn=lambda r: np.zeros_like(np.asarray(r, dtype=float)),
        stability_L=0.0,
        range_R=0.0,
        tempered_K=0.0,
        tempered_delta=4.0,
        name="ideal",
        kind="ideal",
    )


def hard_spheres(sigma: float = 1.0) -> PairPotential:
    if sigma <= 0:
        raise ConfigError("hard-sphere diameter must be positive")

    def pair_fn(r):
        r = np.asarray(r, dtype=float)
        return np.where(r < sigma, np.inf, 0.0)

    return PairPotential(
        pair_fn=pair_fn,
        stability_L=0.0,
        range_R=sigma,
        tempered_K=0.0,
        tempered_delta=4.0,
        name=f"hard_spheres(sigma={sigma:g})",
        kind="hard_spheres",
        params={"sigma": sigma},
        hard_core=sigma,
        breakpoints=(sigma,),
    )


def _max_neighbours(sigma: float, reach: float) -> int:
    # balls of radius sigma/2 around neighbours fit in the ball of radius reach + sigma/2
    h = 0.5 * sigma
    return int(math.floor(((reach + h) ** 3 - h**3) / h**3))


def square_well(sigma: float = 1.0, epsilon: float = 1.0, cutoff: float = 1.5) -> PairPotential:
    """Hard core of diameter ``sigma`` with an attractive well of depth ``epsilon`` out to ``cutoff``."""
    if not (sigma > 0 and cutoff > sigma and epsilon >= 0):
        raise ConfigError("square well needs 0 < sigma < cutoff and epsilon >= 0")

    def pair_fn(r):
        r = np.asarray(r, dtype=float)
        return np.where(r < sigma, np.inf, np.where(r < cutoff, -epsilon, 0.0))

    # each particle has at most z partners inside the well
    z = _max_neighbours(sigma, cutoff)
    return PairPotential(
        pair_fn=pair_fn,
        stability_L=z * epsilon,
        range_R=cutoff,
        tempered_K=0.0,
        tempered_delta=4.0,
        name=f"square_well(sigma={sigma:g},epsilon={epsilon:g},cutoff={cutoff:g})",
        kind="square_well",
        params={"sigma": sigma, "epsilon": epsilon, "cutoff": cutoff},
        hard_core=sigma,
        breakpoints=(sigma, cutoff),
    )


def lennard_jones(sigma: float = 1.0, epsilon: float = 1.0, cutoff: float = 2.5) -> PairPotential:
    """Truncated and shifted 12-6 Lennard-Jones potential (zero beyond ``cutoff``)."""
    if not (sigma > 0 and epsilon >= 0 and cutoff > sigma):
        raise ConfigError("Lennard-Jones needs sigma > 0, epsilon >= 0, cutoff > sigma")
    sr6c = (sigma / cutoff) ** 6
    shift = 4.0 * epsilon * (sr6c * sr6c - sr6c)

    def pair_fn(r):
        r = np.asarray(r, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            sr6 = (sigma / r) ** 6
            v = 4.0 * epsilon * (sr6 * sr6 - sr6) - shift
        v = np.where(r < cutoff, v, 0.0)
        return np.where(r > 0, v, np.inf)

    def pair_deriv(r):
        r = np.asarray(r, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            sr6 = (sigma / r) ** 6
            d = 4.0 * epsilon * (-12.0 * sr6 * sr6 + 6.0 * sr6) / r
        return np.where(r < cutoff, d, 0.0)

    rmin = 2.0 ** (1.0 / 6.0) * sigma
    return PairPotential(
        pair_fn=pair_fn,
        # phi_ts >= phi_LJ pointwise; ordered-pair sum doubles the per-particle bound
        stability_L=2.0 * LJ_FCC_ENERGY_PER_PARTICLE * epsilon,
        range_R=cutoff,
        tempered_K=0.0,
        tempered_delta=4.0,
        name=f"lennard_jones(sigma={sigma:g},epsilon={epsilon:g},cutoff={cutoff:g})",
        kind="lennard_jones",
        params={"sigma": sigma, "epsilon": epsilon, "cutoff": cutoff},
        breakpoints=(0.8 * sigma, 0.9 * sigma, sigma, rmin, 1.5 * sigma, cutoff),
        pair_deriv=pair_deriv,
    )


CATALOG = {
    "ideal": ideal_gas,
    "hard_spheres": hard_spheres,
    "square_well": square_well,
    "lennard_jones": lennard_jones,
}

_ALIASES = {"ideal_gas": "ideal", "hs": "hard_spheres", "sw": "square_well", "lj": "lennard_jones"}


def from_config(cfg: dict) -> PairPotential:
    """Build a catalog potential from a key/value mapping (``kind`` plus parameters)."""
    cfg = dict(cfg)
    kind = str(cfg.pop("kind", "ideal")).strip().lower()
    kind = _ALIASES.get(kind, kind)
    if kind not in CATALOG:
        raise ConfigError(f"unknown potential kind {kind!r}; choose from {sorted(CATALOG)}")
    allowed = {"ideal": (), "hard_spheres": ("sigma",)}.get(kind, ("sigma", "epsilon", "cutoff"))
    extra = set(cfg) - set(allowed)
    if extra:
        raise ConfigError(f"unexpected keys for {kind}: {sorted(extra)}")
    return CATALOG[kind](**{k: float(v) for k, v in cfg.items()})


# ---------------------------------------------------------------------------
# energies


def pair_distances(positions: np.ndarray) -> np.ndarray:
    q = np.asarray(positions, dtype=float).reshape(-1, 3)
    i, j = np.triu_indices(len(q), k=1)
    return np.linalg.norm(q[i] - q[j], axis=1)


def total_potential(potential: PairPotential, positions) -> float:
    """Configurational energy, summing the pair function over ordered pairs."""
    q = np.asarray(positions, dtype=float).reshape(-1, 3)
    if len(q) < 2:
        return 0.0
    return float(2.0 * np.sum(potential.pair_fn(pair_distances(q))))


def _energy_gradient(potential, q):
    diff = q[:, None, :] - q[None, :, :]
    r = np.linalg.norm(diff, axis=-1)
    np.fill_diagonal(r, np.inf)
    d = potential.pair_deriv(r)
    d[~np.isfinite(r)] = 0.0
    # dU/dq_i = sum_j 2 * 2 phi'(r_ij) (q_i - q_j)/r_ij  (two ordered pairs contain i)
    return 4.0 * np.sum((d / r)[..., None] * diff, axis=1)


def _exclusion(potential) -> float:
    if potential.hard_core:
        return float(potential.hard_core)
    # soft cores: keep starting points out of the steep repulsive region
    return 0.9 * float(potential.params.get("sigma", 0.0))


def _lattice_configuration(box, n, spacing, rng):
    axes = [np.arange(int(np.floor(s / spacing + 1e-12)) + 1) * spacing for s in box.sides]
    axes = [a[a <= s] for a, s in zip(axes, box.sides)]
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, 3)
    if len(grid) < n:
        return None
    return grid[rng.choice(len(grid), size=n, replace=False)].copy()


def _random_configuration(potential, box, n, rng, tries=200):
    sides = np.asarray(box.sides)
    q = np.empty((n, 3))
    core = _exclusion(potential)
    for k in range(n):
        for _ in range(tries):
            t = rng.random(3) * sides
            if k == 0 or core == 0 or np.min(np.linalg.norm(q[:k] - t, axis=1)) >= core:
                q[k] = t
                break
        else:
            lattice = _lattice_configuration(box, n, core, rng) if core > 0 else None
            if lattice is None and not potential.hard_core:
                # soft potentials admit every configuration
                return rng.random((n, 3)) * sides
            return lattice
    return q


def _hill_climb(potential, box, q, rng, moves):
    sides = np.asarray(box.sides, dtype=float)
    n = len(q)
    step = 0.25 * min(sides)
    floor = 1e-3 * min(sides)
    if _kernels.supported(potential):
        kind, prm = _kernels.kernel_params(potential)
        rnd = np.column_stack([rng.random(moves), rng.normal(size=(moves, 3))])
        q = _kernels.hill_climb(np.ascontiguousarray(q), sides, kind, prm, rnd, step, floor, 10 * n)
        return q, total_potential(potential, q)
    u_pair = potential.pair_fn
    for m in range(moves):
        i = rng.integers(n)
        trial = np.clip(q[i] + step * rng.normal(size=3), 0.0, sides)
        others = np.delete(q, i, axis=0)
        old = 2.0 * np.sum(u_pair(np.linalg.norm(others - q[i], axis=1)))
        new = 2.0 * np.sum(u_pair(np.linalg.norm(others - trial, axis=1)))
        if new <= old:
            q[i] = trial
        if (m + 1) % (10 * n) == 0:
            step = max(0.5 * step, floor)
    return q, total_potential(potential, q)


def _smooth_descent(potential, box, q):
    bounds = [(0.0, s) for s in box.sides] * len(q)

    def fun(x):
        c = x.reshape(-1, 3)
        return total_potential(potential, c), _energy_gradient(potential, c).ravel()

    res = optimize.minimize(fun, q.ravel(), jac=True, method="L-BFGS-B", bounds=bounds)
    c = res.x.reshape(-1, 3)
    return c, total_potential(potential, c)


def per_n_stability(
    potential: PairPotential,
    box: BoxDomain,
    n: int,
    *,
    seed: int = 0,
    starts: int = 24,
    moves_per_particle: int = 400,
    grid: int = 20001,
) -> float:
    """Estimate the per-n stability constant L_n of ``potential`` in ``box``.

    Returns ``L_n = -min U / n`` over the best configuration found by a
    multistart search (random non-overlapping starts followed by local
    descent: L-BFGS-B for smooth potentials, greedy single-particle moves
    otherwise).  For n = 2 the search is replaced by a dense grid over the
    pair distance, which is exact up to grid resolution.  The result is
    clipped to the global stability constant.  ``-inf`` means no admissible
    configuration was found (the slab of that n is empty).
    """
    if n < 0:
        raise ValueError("n must be nonnegative")
    if n <= 1 or potential.is_ideal:
        return 0.0
    if n == 2:
        r = np.linspace(0.0, box.diameter, grid)[1:-1]
        umin = float(np.min(2.0 * potential.pair_fn(r)))
        est = -umin / 2.0
    else:
        rng = np.random.default_rng(seed)
        best = np.inf
        for _ in range(starts):
            q = _random_configuration(potential, box, n, rng)
            if q is None:
                continue
            u0 = total_potential(potential, q)
            if potential.is_smooth:
                if _kernels.supported(potential):
                    q, _ = _hill_climb(potential, box, q, rng, moves_per_particle * n // 4)
                q, u = _smooth_descent(potential, box, q)
            else:
                q, u = _hill_climb(potential, box, q, rng, moves_per_particle * n)
            # any admissible configuration bounds min U from above
            best = min(best, u, u0)
        est = -best / n
    return float(min(est, potential.stability_L)) + 0.0


# ---------------------------------------------------------------------------
# Mayer-type integral and the low-density analyticity region


def mayer_integral(potential: PairPotential, beta: float, rtol: float = 1e-10) -> float:
    """C(beta) = 4 pi int_0^inf |exp(beta phi(r)) - 1| r^2 dr."""
    if not beta < 0:
        raise DomainError(f"beta must be negative, got {beta}")
    if potential.is_ideal:
        return 0.0

    def f(r):
        v = float(potential.pair_fn(np.array([r]))[0])
        return abs(math.exp(beta * v) - 1.0) * r * r if np.isfinite(v) else r * r

    top = potential.range_R
    if np.isfinite(top):
        pts = sorted({p for p in potential.breakpoints if 0 < p < top})
        val, _ = integrate.quad(f, 0.0, top, points=pts or None, epsrel=rtol, epsabs=0.0, limit=500)
        return 4.0 * math.pi * val
    # unbounded range: require r^3 f(r) -> 0 (decay faster than r^-3)
    r1 = max([p for p in potential.breakpoints] + [1.0]) * 4.0
    tails = [f(r1 * 10.0**k) * r1 * 10.0**k for k in range(4)]
    if not all(b < a for a, b in zip(tails, tails[1:])) or tails[-1] > 1e-3 * max(tails[0], 1e-300):
        raise DivergenceError("integrand tail does not decay faster than r^-3")
    pts = sorted(p for p in potential.breakpoints if 0 < p < r1)
    v1, _ = integrate.quad(f, 0.0, r1, points=pts or None, epsrel=rtol, epsabs=0.0, limit=500)
    v2, _ = integrate.quad(f, r1, np.inf, epsrel=rtol, epsabs=0.0, limit=500)
    return 4.0 * math.pi * (v1 + v2)


class AnalyticityBound(NamedTuple):
    mu_max: float
    degenerate: bool


def analyticity_bound(potential: PairPotential, lam, beta: float) -> AnalyticityBound:
    """Largest chemical-potential weight of the low-density analyticity region at (lam, beta)."""
    from .partition import log_kinetic_factor

    if not beta < 0:
        raise DomainError(f"beta must be negative, got {beta}")
    c = mayer_integral(potential, beta)
    if c == 0.0:
        return AnalyticityBound(math.inf, True)
    mu_max = 2.0 * beta * potential.stability_L - 1.0 - math.log(c) - log_kinetic_factor(lam, beta)
    return AnalyticityBound(float(mu_max), False)


def in_region(potential: PairPotential, params) -> bool:
    b = analyticity_bound(potential, params.lam, params.beta)
    return b.degenerate or params.mu < b.mu_max
