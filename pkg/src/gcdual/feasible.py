"""Geometry of the set of solvable constraints.

The solvable set is the interior of the convex hull of the essential range
of ``(N, P, H)/|Lambda|``.  For each particle number n the essential range
is the paraboloid slab

    {N = n,  H >= -n L_n,  |P|^2 <= 2 n (H + n L_n)},

and the hull of all slabs is invariant under upward shifts in H.  All
arithmetic is done in extensive coordinates; the public interface takes and
returns intensive (per-volume) quantities.

Because every slab is invariant under rotations of P, the hull is too, and a
point (N, P, H) lies in it iff its reduction (N, |P|, H) lies in the hull of
the projected parabolas {N = n, s^2 <= 2 n (H + n L_n)} in three dimensions.
Membership is decided there by linear programming over points sampled on the
parabolas plus the recession ray (0, 0, 1).
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.optimize import linprog

from .domain import BoxDomain, MacroState
from .errors import TruncationWarning
from .potentials import PairPotential, per_n_stability


@dataclass(frozen=True)
class SlabDescription:
    """Per-n slab; ``L_n = -inf`` marks an empty slab (no admissible configuration)."""

    n: int
    L_n: float
    volume: float = 1.0

    @property
    def empty(self) -> bool:
        return not np.isfinite(self.L_n)

    @property
    def H_min(self) -> float:
        return -self.n * self.L_n

    def contains(self, N: float, P, H: float, atol: float = 1e-12) -> bool:
        """Extensive-coordinate membership in the closed slab."""
        if self.empty or abs(N - self.n) > atol:
            return False
        p2 = float(np.sum(np.asarray(P, dtype=float) ** 2))
        if self.n == 0:
            return p2 <= atol and abs(H) <= atol
        return H + self.n * self.L_n >= -atol and p2 <= 2 * self.n * (H + self.n * self.L_n) + atol

    def parabola(self, s: np.ndarray) -> np.ndarray:
        """Reduced boundary points (n, s, H) with H on the lower paraboloid."""
        s = np.asarray(s, dtype=float)
        if self.n == 0:
            return np.zeros((1, 3))
        H = s**2 / (2 * self.n) - self.n * self.L_n
        return np.column_stack([np.full_like(s, self.n), s, H])

    def to_dict(self) -> dict:
        return {"n": self.n, "L_n": self.L_n, "volume": self.volume}

    @classmethod
    def from_dict(cls, d) -> "SlabDescription":
        return cls(d["n"], d["L_n"], d["volume"])


_SLAB_CACHE: dict = {}


def _potential_key(potential: PairPotential):
    if potential.kind == "custom":
        return ("custom", id(potential))
    return (potential.kind, tuple(sorted(potential.params.items())))


def slab(potential: PairPotential, box: BoxDomain, n: int, *, seed: int = 0) -> SlabDescription:
    """Slab of configurations with exactly ``n`` particles."""
    if n < 0:
        raise ValueError("n must be nonnegative")
    key = (_potential_key(potential), tuple(box.sides), int(n), int(seed))
    if key not in _SLAB_CACHE:
        L = 0.0 if n == 0 else per_n_stability(potential, box, int(n), seed=seed)
        _SLAB_CACHE[key] = SlabDescription(int(n), float(L), box.volume)
    return _SLAB_CACHE[key]


@dataclass
class FeasibilityVerdict:
    """Outcome of a membership query.

    ``margin`` is positive inside (smallest axis-direction depth), negative
    outside (separation gap), both per volume.  For exterior points the
    ``witness`` (alpha_0, alpha_vec, alpha_4) satisfies
    ``(g - x) . witness > -margin`` on every generator g, with alpha_4 > 0.
    """

    status: str
    margin: float
    witness: Optional[np.ndarray] = None
    n_max: int = 0
    details: dict = field(default_factory=dict)

    @property
    def interior(self) -> bool:
        return self.status == "interior"

    def to_dict(self) -> dict:
        return {
            "status": self.status,
            "margin": self.margin,
            "witness": None if self.witness is None else self.witness.tolist(),
            "n_max": self.n_max,
        }

    @classmethod
    def from_dict(cls, d) -> "FeasibilityVerdict":
        w = d.get("witness")
        return cls(d["status"], d["margin"], None if w is None else np.asarray(w, dtype=float), d["n_max"])


def _reduced_generators(potential, box, n_max, resolution, target, seed, stability=None):
    N_t, p_t, H_t = target
    span = 4.0 * (abs(H_t) + p_t + 1.0)
    half = max(resolution // 2, 2)
    pts = [np.zeros((1, 3))]
    for n in range(1, n_max + 1):
        if stability is None:
            sl = slab(potential, box, n, seed=seed)
        else:
            sl = SlabDescription(n, float(stability[n - 1]), box.volume)
        if sl.empty:
            continue
        s_max = max(2.0 * p_t + 1.0, np.sqrt(2 * n * (span + max(n * sl.L_n, 0.0))))
        s = np.linspace(0.0, s_max, half)
        s = np.concatenate([-s[:0:-1], s])
        pts.append(sl.parabola(s))
    return np.vstack(pts)


def generator_points(
    potential: PairPotential,
    box: BoxDomain,
    n_max: int = 32,
    resolution: int = 200,
    *,
    directions: int = 16,
    scale: float = 1.0,
    seed: int = 0,
) -> np.ndarray:
    """Intensive 5D points on the slab boundaries, for checking witnesses.

    Momenta are laid out on spheres along ``directions`` random axes and the
    coordinate axes.  ``scale`` stretches the sampled momentum range.
    """
    rng = np.random.default_rng(seed)
    axes = np.vstack([np.eye(3), -np.eye(3), rng.normal(size=(directions, 3))])
    axes /= np.linalg.norm(axes, axis=1, keepdims=True)
    red = _reduced_generators(potential, box, n_max, resolution, (0.0, scale, scale), seed)
    red = red[red[:, 1] >= 0]
    out = [np.zeros((1, 5))]
    for w in axes:
        g = np.column_stack([red[:, 0], red[:, 1:2] * w, red[:, 2]])
        out.append(g)
    return np.vstack(out) / box.volume


def _separation(G, x):
    """max eps s.t. (g - x).alpha >= eps for all g, alpha_H >= 0, |alpha|_inf <= 1."""
    D = G - x
    c = np.array([0.0, 0.0, 0.0, -1.0])
    A = np.column_stack([-D, np.ones(len(D))])
    b = np.zeros(len(D))
    bounds = [(-1, 1), (-1, 1), (0, 1), (None, None)]
    res = linprog(c, A_ub=A, b_ub=b, bounds=bounds, method="highs")
    if res.status != 0:
        return 0.0, None
    return float(-res.fun), res.x[:3]


def _depth(G, x, d, r_cap):
    """max r such that x + r d lies in conv(G) + cone{(0,0,1)}."""
    m = len(G)
    # variables: weights (m), ray t, r
    c = np.zeros(m + 2)
    c[-1] = -1.0
    A_eq = np.zeros((4, m + 2))
    A_eq[:3, :m] = G.T
    A_eq[2, m] = 1.0
    A_eq[:3, m + 1] = -d
    A_eq[3, :m] = 1.0
    b_eq = np.concatenate([x, [1.0]])
    bounds = [(0, None)] * (m + 1) + [(None, r_cap)]
    res = linprog(c, A_eq=A_eq, b_eq=b_eq, bounds=bounds, method="highs")
    if res.status != 0:
        return -np.inf
    return float(-res.fun)


def membership(
    point: MacroState,
    potential: PairPotential,
    box: BoxDomain,
    n_max: int = 32,
    tol: float = 1e-6,
    *,
    resolution: int = 200,
    seed: int = 0,
    stability=None,
) -> FeasibilityVerdict:
    """Classify ``point`` as interior, boundary or exterior of the hull.

    ``tol`` (per volume) is the width of the boundary band on either side.
    ``stability``, if given, replaces the searched per-n constants by
    ``stability[n - 1] = L_n`` for n = 1..n_max.
    """
    if n_max < 1:
        raise ValueError("n_max must be at least 1")
    V = box.volume
    P = np.asarray(point.u, dtype=float) * V
    N, H = point.rho * V, point.E * V
    p = float(np.linalg.norm(P))
    if N > n_max - 1:
        warnings.warn(
            f"N = {N:.3g} is within one slab of n_max = {n_max}; the hull is truncated there",
            TruncationWarning,
            stacklevel=2,
        )
    x = np.array([N, p, H])
    G = _reduced_generators(potential, box, n_max, resolution, x, seed, stability)
    eps, alpha = _separation(G, x)
    if eps > 0 and alpha is not None:
        if alpha[2] <= 0:
            # tilt towards +H; the ray stays admissible and eps shrinks at most by half
            rise = max(1.0, H - G[:, 2].min())
            delta = 0.5 * eps / rise
            alpha = alpha + np.array([0.0, 0.0, delta])
            eps = float(np.min((G - x) @ alpha))
        if p > 0:
            direction = P / p
        else:
            # generators carry momenta in every direction; a nonpositive
            # coefficient on |P| only weakens the bound, so drop it
            direction = np.zeros(3)
        witness = np.concatenate([[alpha[0]], alpha[1] * direction, [alpha[2]]])
        if eps / V > tol:
            return FeasibilityVerdict("exterior", -eps / V, witness, n_max, {"eps": eps})
        return FeasibilityVerdict("boundary", -eps / V, None, n_max, {"eps": eps})
    r_cap = 10.0 * (abs(N) + p + abs(H) + 1.0)
    dirs = np.vstack([np.eye(3), -np.eye(3)])
    depth = min(_depth(G, x, d, r_cap) for d in dirs)
    margin = depth / V
    status = "interior" if margin > tol else "boundary"
    return FeasibilityVerdict(status, float(margin), None, n_max, {"depth": depth})


def witness_holds(verdict: FeasibilityVerdict, point: MacroState, generators: np.ndarray, slack: float = 1e-9) -> bool:
    """Check the separation inequality of an exterior verdict on intensive generators."""
    if verdict.status != "exterior" or verdict.witness is None:
        return False
    x = point.as_vector()
    lhs = (generators - x) @ verdict.witness
    return bool(verdict.witness[4] > 0 and np.all(lhs >= -verdict.margin - slack))


def rough_bound_check(point: MacroState, potential: PairPotential) -> bool:
    """Necessary condition for solvability: rho > 0 and E >= -L rho."""
    return bool(point.rho > 0 and point.E >= -potential.stability_L * point.rho)
