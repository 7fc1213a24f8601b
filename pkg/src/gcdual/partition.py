"""Finite-volume log-partition function, its gradient and Hessian.

Velocities integrate out exactly.  With the single-particle factor
``K(lam, beta) = int exp(lam.p + beta |p|^2 / 2) dp`` and the configurational
integrals ``Q_n(beta) = (1/n!) int_{box^n} exp(beta U) dq`` one has

    Z = sum_n exp(n a) Q_n(beta),      a = mu + log K(lam, beta),

so Z is a one-dimensional series in the particle number whose terms depend
on the parameters only through ``a`` and ``beta``.  Every derivative of
``log Z`` follows from the per-n table ``(log Q_n, d/dbeta log Q_n,
d^2/dbeta^2 log Q_n)``, i.e. from the canonical mean and variance of U.

``Q_0`` and ``Q_1`` are exact, ``Q_2`` comes from a radial reduction of the
pair integral, and ``Q_n`` for n >= 3 is estimated from a bank of Rosenbluth
(sequential multi-trial insertion) configurations generated once at a
reference ``beta_ref`` and reweighted to other beta.  The resulting
``Phi`` is a deterministic, exactly convex function of the parameters with
exact derivatives; Monte Carlo error is reported separately by batching.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional

import numpy as np
from scipy import integrate
from scipy.special import gammaln

from .domain import BoxDomain, MacroState, ThermoParams
from .errors import BudgetError, DomainError
from .potentials import PairPotential

LOG_2PI = math.log(2.0 * math.pi)


# ---------------------------------------------------------------------------
# velocity factor


def log_kinetic_factor(lam, beta: float) -> float:
    if not beta < 0:
        raise DomainError(f"beta must be negative, got {beta}")
    lam2 = float(np.dot(np.ravel(lam), np.ravel(lam)))
    return 1.5 * (LOG_2PI - math.log(-beta)) - lam2 / (2.0 * beta)


def kinetic_factor(lam, beta: float) -> float:
    """int_{R^3} exp(lam.p + beta |p|^2 / 2) dp = (2 pi / -beta)^{3/2} exp(-|lam|^2 / (2 beta))."""
    return math.exp(log_kinetic_factor(lam, beta))


def _activity_derivatives(theta: np.ndarray):
    """a(theta) = mu + log K and its gradient / Hessian in (mu, lam, beta)."""
    lam = theta[1:4]
    beta = theta[4]
    lam2 = float(lam @ lam)
    a = theta[0] + 1.5 * (LOG_2PI - math.log(-beta)) - lam2 / (2.0 * beta)
    g = np.empty(5)
    g[0] = 1.0
    g[1:4] = -lam / beta
    g[4] = -1.5 / beta + lam2 / (2.0 * beta * beta)
    h = np.zeros((5, 5))
    h[1:4, 1:4] = -np.eye(3) / beta
    h[1:4, 4] = h[4, 1:4] = lam / beta**2
    h[4, 4] = 1.5 / beta**2 - lam2 / beta**3
    return a, g, h


# ---------------------------------------------------------------------------
# pair integral over a box


_GL_X, _GL_W = np.polynomial.legendre.leggauss(12)


def _radial_weight_small(sides, r):
    # r <= min side: int_{S^2} prod_k (s_k - r|w_k|) dw in closed form
    a, b, c = sides
    poly = a * b * c - r * (a * b + b * c + c * a) / 2.0 + r * r * (a + b + c) * 2.0 / (3.0 * math.pi) - r**3 / (4.0 * math.pi)
    return 4.0 * math.pi * r * r * poly


def _radial_weight_large(sides, r):
    s1, s2, s3 = sides
    z_top = min(1.0, s3 / r)

    def inner(z):
        rho = r * math.sqrt(max(0.0, 1.0 - z * z))
        if rho == 0.0:
            return 0.5 * math.pi * s1 * s2 * (s3 - r * z)
        lo = math.acos(min(1.0, s1 / rho))
        hi = math.asin(min(1.0, s2 / rho))
        if hi <= lo:
            return 0.0

        def prim(p):
            return s1 * s2 * p + s1 * rho * math.cos(p) - s2 * rho * math.sin(p) + 0.5 * rho * rho * math.sin(p) ** 2

        return (prim(hi) - prim(lo)) * (s3 - r * z)

    kinks = [math.sqrt(1.0 - (s / r) ** 2) for s in (s1, s2, math.hypot(s1, s2)) if s < r]
    pts = sorted(k for k in kinks if 0.0 < k < z_top)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        val, _ = integrate.quad(inner, 0.0, z_top, points=pts or None, epsabs=1e-15 * s1 * s2 * s3, epsrel=1e-11, limit=200)
    return 8.0 * r * r * val


def box_radial_weight(sides, r: float) -> float:
    """A(r) with int_{box^2} f(|q1 - q2|) dq1 dq2 = int_0^diam f(r) A(r) dr."""
    sides = tuple(sorted(float(s) for s in sides))
    if r <= 0:
        return 0.0
    if r <= sides[0]:
        return _radial_weight_small(sides, r)
    if r >= math.sqrt(sum(s * s for s in sides)):
        return 0.0
    return _radial_weight_large(sides, r)


@lru_cache(maxsize=64)
def _radial_nodes(sides: tuple, breaks: tuple, panel: float):
    sides = tuple(sorted(sides))
    diam = math.sqrt(sum(s * s for s in sides))
    knots = {0.0, diam, *sides, math.hypot(sides[0], sides[1]), math.hypot(sides[0], sides[2]), math.hypot(sides[1], sides[2])}
    knots |= {b for b in breaks if 0.0 < b < diam}
    knots = sorted(knots)
    xs, ws = [], []
    for lo, hi in zip(knots[:-1], knots[1:]):
        if hi - lo < 1e-14:
            continue
        m = max(1, int(math.ceil((hi - lo) / panel)))
        edges = np.linspace(lo, hi, m + 1)
        for a, b in zip(edges[:-1], edges[1:]):
            xs.append(0.5 * (b - a) * _GL_X + 0.5 * (a + b))
            ws.append(0.5 * (b - a) * _GL_W)
    r = np.concatenate(xs)
    w = np.concatenate(ws) * np.array([box_radial_weight(sides, x) for x in r])
    return r, w


class PairQuadrature:
    """Deterministic n = 2 configurational integral by radial reduction."""

    def __init__(self, potential: PairPotential, box: BoxDomain, panels_per_unit: float = 40.0):
        scale = min(potential.hard_core or 1.0, box.diameter)
        panel = min(box.diameter / 40.0, scale / panels_per_unit * 4.0)
        self.r, self.w = _radial_nodes(tuple(box.sides), tuple(potential.breakpoints), panel)
        u = 2.0 * potential.pair_fn(self.r)
        self.finite = np.isfinite(u)
        self.u = np.where(self.finite, u, 0.0)

    def moments(self, beta: float):
        """(log Q_2, <U>_2, Var_2 U) at ``beta``."""
        with np.errstate(over="ignore"):
            f = np.where(self.finite, np.exp(beta * self.u), 0.0)
        i0 = float(np.sum(self.w * f))
        if i0 <= 0.0:
            return -np.inf, 0.0, 0.0
        i1 = float(np.sum(self.w * f * self.u)) / i0
        i2 = float(np.sum(self.w * f * self.u**2)) / i0
        return math.log(0.5 * i0), i1, max(i2 - i1 * i1, 0.0)


# ---------------------------------------------------------------------------
# Rosenbluth bank for n >= 3


class RosenbluthBank:
    """Sequential multi-trial insertion samples of growing configurations.

    For sample s and prefix size n the bank stores the cumulative Rosenbluth
    log-weight ``log W[s, n]`` and the prefix energy ``U[s, n]``; unbiasedly
    ``E[W_n f(config_n)] = E_uniform[exp(beta_ref U) f]``, hence

        Q_n(beta) = V^n / n! * mean_s W[s, n] exp((beta - beta_ref) U[s, n]).

    Particles are generated in chunks with one RNG stream per chunk, so the
    bank content never depends on the order in which it was extended.
    """

    CHUNK = 16

    def __init__(self, potential, box, *, samples=4000, trials=8, beta_ref=-1.0, seed=0, block=256):
        self.potential = potential
        self.box = box
        self.samples = int(samples)
        self.trials = int(trials)
        self.beta_ref = float(beta_ref)
        self.seed = int(seed)
        self.block = int(block)
        self.sides = np.asarray(box.sides)
        self.pos = np.zeros((self.samples, 0, 3))
        self.logw = np.zeros((self.samples, 0))
        self.energy = np.zeros((self.samples, 0))
        self.extinct_at = None  # first n with every sample dead

    @property
    def n_built(self) -> int:
        return self.pos.shape[1]

    def ensure(self, n: int) -> None:
        while self.n_built < n and self.extinct_at is None:
            self._grow_chunk()

    def _grow_chunk(self):
        c = self.n_built // self.CHUNK
        rng = np.random.default_rng([self.seed, c])
        k0 = self.n_built
        S, m, B = self.samples, self.trials, self.CHUNK
        pos = np.concatenate([self.pos, np.zeros((S, B, 3))], axis=1)
        logw = np.concatenate([self.logw, np.zeros((S, B))], axis=1)
        energy = np.concatenate([self.energy, np.zeros((S, B))], axis=1)
        pair = self.potential.pair_fn
        for k in range(k0, k0 + B):
            trial_pos = rng.random((S, m, 3)) * self.sides
            pick_u = rng.random(S)
            prev_w = logw[:, k - 1] if k > 0 else np.zeros(S)
            prev_u = energy[:, k - 1] if k > 0 else np.zeros(S)
            for s0 in range(0, S, self.block):
                sl = slice(s0, min(S, s0 + self.block))
                t = trial_pos[sl]
                if k > 0:
                    d = np.linalg.norm(t[:, :, None, :] - pos[sl, None, :k, :], axis=-1)
                    du = 2.0 * np.sum(pair(d), axis=-1)
                else:
                    du = np.zeros(t.shape[:2])
                finite = np.isfinite(du)
                with np.errstate(over="ignore"):
                    w = np.where(finite, np.exp(self.beta_ref * np.where(finite, du, 0.0)), 0.0)
                tot = w.sum(axis=1)
                alive = (tot > 0) & np.isfinite(prev_w[sl])
                cum = np.cumsum(w, axis=1) / np.where(tot > 0, tot, 1.0)[:, None]
                idx = np.minimum((cum < pick_u[sl, None]).sum(axis=1), m - 1)
                rows = np.arange(t.shape[0])
                pos[sl, k] = t[rows, idx]
                with np.errstate(divide="ignore"):
                    logw[sl, k] = np.where(alive, prev_w[sl] + np.log(np.where(alive, tot, 1.0) / m), -np.inf)
                energy[sl, k] = np.where(alive, prev_u[sl] + np.where(finite[rows, idx], du[rows, idx], 0.0), 0.0)
            if not np.any(np.isfinite(logw[:, k])) and self.extinct_at is None:
                self.extinct_at = k + 1
        self.pos, self.logw, self.energy = pos, logw, energy

    def table(self, beta: float, n_max: int, batches: int = 1):
        """Arrays (log Q_n, <U>_n, Var_n U) for n = 1..n_max, one row per batch."""
        self.ensure(n_max)
        out = np.full((batches, 3, n_max), np.nan)
        nb = min(n_max, self.n_built)
        V = self.box.volume
        n = np.arange(1, n_max + 1)
        base = n * math.log(V) - gammaln(n + 1)
        groups = np.array_split(np.arange(self.samples), batches)
        for b, g in enumerate(groups):
            lw = self.logw[g, :nb] + (beta - self.beta_ref) * self.energy[g, :nb]
            top = np.max(lw, axis=0)
            ok = np.isfinite(top)
            with np.errstate(invalid="ignore", over="ignore"):
                e = np.where(np.isfinite(lw), np.exp(lw - np.where(ok, top, 0.0)), 0.0)
            tot = e.sum(axis=0)
            uu = self.energy[g, :nb]
            with np.errstate(invalid="ignore", divide="ignore"):
                m1 = (e * uu).sum(axis=0) / tot
                m2 = (e * uu * uu).sum(axis=0) / tot
                logq = np.where(ok, top + np.log(tot / len(g)), -np.inf)
            out[b, 0, :nb] = logq
            out[b, 1, :nb] = np.where(ok, m1, 0.0)
            out[b, 2, :nb] = np.where(ok, np.maximum(m2 - m1 * m1, 0.0), 0.0)
            out[b, 0, nb:] = -np.inf
            out[b, 1:, nb:] = 0.0
        out[:, 0, :] += base
        return out


# ---------------------------------------------------------------------------
# model and estimates


@dataclass
class PartitionEstimate:
    """Value, gradient and (optionally) Hessian of Phi at one parameter point."""

    params: ThermoParams
    phi: float
    grad: np.ndarray
    hessian: Optional[np.ndarray]
    stat_error: np.ndarray
    n_max: int
    tail_bound: float
    method: str
    hessian_error: Optional[np.ndarray] = None
    box: Optional[BoxDomain] = None
    seed: Optional[int] = None

    def macro(self) -> MacroState:
        return MacroState(self.grad[0], self.grad[1:4], self.grad[4], error=self.stat_error[1:])

    def to_dict(self) -> dict:
        return {
            "params": self.params.to_dict(),
            "box": self.box.to_dict() if self.box is not None else None,
            "phi": self.phi,
            "grad": self.grad.tolist(),
            "hessian": None if self.hessian is None else self.hessian.tolist(),
            "errors": {
                "phi": float(self.stat_error[0]),
                "grad": self.stat_error[1:].tolist(),
                "hessian": None if self.hessian_error is None else self.hessian_error.tolist(),
            },
            "n_max": self.n_max,
            "tail_bound": self.tail_bound,
            "method": self.method,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d) -> "PartitionEstimate":
        err = d["errors"]
        return cls(
            params=ThermoParams.from_dict(d["params"]),
            phi=d["phi"],
            grad=np.asarray(d["grad"], dtype=float),
            hessian=None if d["hessian"] is None else np.asarray(d["hessian"], dtype=float),
            stat_error=np.asarray([err["phi"], *err["grad"]], dtype=float),
            n_max=d["n_max"],
            tail_bound=d["tail_bound"],
            method=d["method"],
            hessian_error=None if err.get("hessian") is None else np.asarray(err["hessian"], dtype=float),
            box=None if d.get("box") is None else BoxDomain.from_dict(d["box"]),
            seed=d.get("seed"),
        )


def packing_limit(potential: PairPotential, box: BoxDomain) -> Optional[int]:
    """Upper bound on the particle number with finite energy (hard cores only)."""
    if potential.hard_core <= 0:
        return None
    s = potential.hard_core
    cell = math.pi * s**3 / 6.0
    return int(math.floor(np.prod([x + s for x in box.sides]) / cell))


def tail_truncation(log_A: float, tail_eps: float, n_cap: int, n_pack: Optional[int] = None):
    """Smallest N with sum_{n > N} A^n / n! <= tail_eps, and the certified bound."""
    if log_A > math.log(n_cap + 2.0):
        # the ratio test cannot start below n_cap
        if n_pack is not None and n_pack <= n_cap:
            return n_pack, 0.0
        raise BudgetError(f"series tail bound needs more than n_cap={n_cap} terms (log A={log_A:.3g})")
    A = math.exp(log_A)
    n = 0
    while True:
        if n_pack is not None and n >= n_pack:
            return n_pack, 0.0
        if n + 2 > A:
            log_t = (n + 1) * log_A - math.lgamma(n + 2)
            bound = math.exp(log_t) / (1.0 - A / (n + 2))
            if bound <= tail_eps:
                return n, bound
        if n >= n_cap:
            raise BudgetError(f"series tail bound needs more than n_cap={n_cap} terms (A={A:.3g})")
        n += 1


class PartitionModel:
    """Phi for one (potential, box) pair with a frozen Monte Carlo bank.

    All evaluations go through the same configurational table, so values,
    gradients and Hessians are mutually consistent to rounding error.
    """

    def __init__(
        self,
        potential: PairPotential,
        box: BoxDomain,
        *,
        beta_ref: float = -1.0,
        samples: int = 4000,
        trials: int = 8,
        seed: int = 0,
        batches: int = 8,
        tail_eps: float = 1e-12,
        n_cap: int = 256,
        beta_floor: float = -1e-3,
    ):
        self.potential = potential
        self.box = box
        self.volume = box.volume
        self.tail_eps = tail_eps
        self.n_cap = n_cap
        self.batches = batches
        self.seed = seed
        self.beta_floor = beta_floor
        self.exact = potential.is_ideal
        self.n_pack = packing_limit(potential, box)
        self._pair = None if self.exact else PairQuadrature(potential, box)
        self._bank = None if self.exact else RosenbluthBank(
            potential, box, samples=samples, trials=trials, beta_ref=beta_ref, seed=seed
        )
        self._tables = {}

    # -- configurational tables ------------------------------------------------
    def config_table(self, beta: float, n_max: int) -> np.ndarray:
        """Shape (batches + 1, 3, n_max + 1): row 0 pools all samples."""
        key = (beta, n_max)
        if key in self._tables:
            return self._tables[key]
        V = self.volume
        n = np.arange(n_max + 1)
        out = np.zeros((self.batches + 1, 3, n_max + 1))
        out[:, 0, :] = n * math.log(V) - gammaln(n + 1)
        if not self.exact and n_max >= 2:
            out[:, :, 2] = self._pair.moments(beta)
            if n_max >= 3:
                pooled = self._bank.table(beta, n_max, 1)
                split = self._bank.table(beta, n_max, self.batches)
                out[0, :, 3:] = pooled[0, :, 2:]
                out[1:, :, 3:] = split[:, :, 2:]
        if len(self._tables) > 256:
            self._tables.clear()
        self._tables[key] = out
        return out

    def sampled_stability(self, n_max: int) -> np.ndarray:
        """L_n = -min U / n over the configurations the model actually integrates, n = 1..n_max.

        The surrogate's moment range is the hull of these slabs, which can sit
        inside the true solvable set when rare low-energy states are missed.
        ``-inf`` marks an n with no admissible sample.
        """
        L = np.zeros(n_max)
        if self.exact or n_max < 2:
            return L
        r = np.linspace(1e-6, self.box.diameter, 20001)
        with np.errstate(invalid="ignore"):
            u2 = 2.0 * np.min(self.potential.pair_fn(r))
        L[1] = -u2 / 2.0 if np.isfinite(u2) else -np.inf
        if n_max >= 3:
            self._bank.ensure(n_max)
            for n in range(3, n_max + 1):
                if n > self._bank.n_built:
                    L[n - 1] = -np.inf
                    continue
                alive = np.isfinite(self._bank.logw[:, n - 1])
                L[n - 1] = -np.min(self._bank.energy[alive, n - 1]) / n if alive.any() else -np.inf
        return L

    def truncation(self, theta: np.ndarray):
        beta = theta[4]
        a = _activity_derivatives(theta)[0]
        log_A = math.log(self.volume) + a + abs(beta) * self.potential.stability_L
        return tail_truncation(log_A, self.tail_eps, self.n_cap, self.n_pack)

    def _check(self, theta):
        beta = theta[4]
        if not beta < 0:
            raise DomainError(f"beta must be negative (Z is infinite), got {beta}")
        if not self.exact and beta > self.beta_floor:
            raise DomainError(f"beta={beta} is above the estimator floor {self.beta_floor}")

    # -- evaluation -------------------------------------------------------------
    def evaluate(self, params, hessian: bool = True) -> PartitionEstimate:
        theta = params.as_vector() if isinstance(params, ThermoParams) else np.asarray(params, dtype=float)
        params = ThermoParams.from_vector(theta)
        self._check(theta)
        a, ga, ha = _activity_derivatives(theta)
        V = self.volume
        if self.exact:
            # Z = exp(V e^a): Phi = e^a
            ea = math.exp(a)
            H = ea * (np.outer(ga, ga) + ha) if hessian else None
            return PartitionEstimate(params, ea, ea * ga, H, np.zeros(6), 0, 0.0, "exact",
                                     np.zeros((5, 5)) if hessian else None, self.box, None)
        n_max, tail = self.truncation(theta)
        tab = self.config_table(theta[4], n_max)
        res = [self._series(tab[b], a, ga, ha, hessian) for b in range(tab.shape[0])]
        phi, grad, H = res[0]
        rest = res[1:]
        k = len(rest)
        vals = np.array([[r[0], *r[1]] for r in rest])
        err = vals.std(axis=0, ddof=1) / math.sqrt(k) if k > 1 else np.zeros(6)
        herr = None
        if hessian and k > 1:
            herr = np.std(np.array([r[2] for r in rest]), axis=0, ddof=1) / math.sqrt(k)
        method = "quadrature" if n_max <= 2 else "monte_carlo"
        return PartitionEstimate(params, phi / V, grad / V, None if H is None else H / V, err / np.r_[V, [V] * 5],
                                 n_max, tail, method, None if herr is None else herr / V, self.box, self.seed)

    @staticmethod
    def _series(tab, a, ga, ha, hessian):
        logq, du, vu = tab
        n = np.arange(len(logq))
        g = n * a + logq
        top = np.max(g)
        p = np.exp(g - top)
        z = p.sum()
        p /= z
        log_z = top + math.log(z)
        # orders with an empty bank carry no weight and undefined energy moments
        keep = p > 0
        if not keep.all():
            p, n, du, vu = p[keep], n[keep], du[keep], vu[keep]
        en = p @ n
        eq1 = p @ du
        grad = en * ga
        grad[4] += eq1
        if not hessian:
            return log_z, grad, None
        vn = p @ (n - en) ** 2
        cnq = p @ ((n - en) * (du - eq1))
        vq = p @ (du - eq1) ** 2
        eb = np.zeros(5)
        eb[4] = 1.0
        H = en * ha + np.outer(eb, eb) * (p @ vu)
        H += vn * np.outer(ga, ga) + cnq * (np.outer(ga, eb) + np.outer(eb, ga)) + vq * np.outer(eb, eb)
        return log_z, grad, H

    def phi(self, params) -> float:
        return self.evaluate(params, hessian=False).phi

    def phi_many(self, thetas) -> np.ndarray:
        """Vectorised Phi over an (m, 5) array of parameter points."""
        thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
        beta = thetas[:, 4]
        if np.any(beta >= 0):
            raise DomainError("beta must be negative")
        lam2 = np.sum(thetas[:, 1:4] ** 2, axis=1)
        a = thetas[:, 0] + 1.5 * (LOG_2PI - np.log(-beta)) - lam2 / (2.0 * beta)
        if self.exact:
            return np.exp(a)
        out = np.empty(len(thetas))
        for b in np.unique(beta):
            idx = np.nonzero(beta == b)[0]
            self._check(np.array([0, 0, 0, 0, b]))
            worst = idx[np.argmax(a[idx])]
            n_max, _ = self.truncation(thetas[worst])
            logq = self.config_table(b, n_max)[0, 0]
            g = a[idx, None] * np.arange(n_max + 1) + logq[None, :]
            top = g.max(axis=1)
            out[idx] = (top + np.log(np.exp(g - top[:, None]).sum(axis=1))) / self.volume
        return out


# ---------------------------------------------------------------------------
# functional entry points


_MODELS = {}


def get_model(potential: PairPotential, box: BoxDomain, **opts) -> PartitionModel:
    """Cached model lookup keyed on the potential object, the box and the options."""
    key = (id(potential), box, tuple(sorted(opts.items())))
    model = _MODELS.get(key)
    if model is None or model.potential is not potential:
        if len(_MODELS) > 64:
            _MODELS.clear()
        model = _MODELS[key] = PartitionModel(potential, box, **opts)
    return model


def config_integral(potential: PairPotential, box: BoxDomain, beta: float, n: int, method: str = "auto", **opts):
    """Q_n = (1/n!) int_{box^n} exp(beta U) dq as ``(value, standard_error)``."""
    if not beta < 0:
        raise DomainError(f"beta must be negative, got {beta}")
    if n < 0:
        raise ValueError("n must be nonnegative")
    V = box.volume
    if n == 0:
        return 1.0, 0.0
    if n == 1 or potential.is_ideal:
        return math.exp(n * math.log(V) - math.lgamma(n + 1)), 0.0
    if n == 2 and method in ("auto", "quadrature"):
        lq = PairQuadrature(potential, box).moments(beta)[0]
        return math.exp(lq), 0.0
    opts.setdefault("beta_ref", beta)
    bank_opts = {k: opts[k] for k in ("samples", "trials", "seed", "beta_ref") if k in opts}
    bank = RosenbluthBank(potential, box, **bank_opts)
    batches = opts.get("batches", 8)
    tab = bank.table(beta, n, batches)[:, 0, n - 1]
    pooled = bank.table(beta, n, 1)[0, 0, n - 1]
    vals = np.exp(tab)
    return float(np.exp(pooled)), float(vals.std(ddof=1) / math.sqrt(batches))


def log_partition(potential: PairPotential, box: BoxDomain, params: ThermoParams, **opts) -> PartitionEstimate:
    hessian = opts.pop("hessian", True)
    return get_model(potential, box, **opts).evaluate(params.check(), hessian=hessian)


def moments(potential: PairPotential, box: BoxDomain, params: ThermoParams, **opts) -> MacroState:
    """(rho, u, E) = grad Phi, carrying its Monte Carlo standard errors."""
    return log_partition(potential, box, params, hessian=False, **opts).macro()


def hessian(potential: PairPotential, box: BoxDomain, params: ThermoParams, **opts) -> np.ndarray:
    """Covariance of (N, P, H) divided by the volume."""
    return log_partition(potential, box, params, hessian=True, **opts).hessian


def gc_sample(potential: PairPotential, box: BoxDomain, params: ThermoParams, seed: int = 0, **kw):
    """Grand-canonical configuration stream; see :func:`gcdual.sampler.gc_sample`."""
    from .sampler import gc_sample as _gc_sample

    return _gc_sample(potential, box, params, seed=seed, **kw)
