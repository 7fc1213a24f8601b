"""Thermodynamic-limit harness on dyadic cubes.

Level l uses the cube of side 2^l together with a shrunk companion whose
sides are reduced by ``2 R_l``, ``R_l = R0 2^(rho_exp l)``.  The harness
tracks the finite-volume pressures, the dual parameters recovered at a fixed
target, and the limit entropy obtained by conjugating the largest-level
pressure.  Limits of interacting systems are reported as Cauchy trends plus
an extrapolation whose order is fitted, never as an exact value.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .domain import BoxDomain, MacroState, ThermoParams
from .dual import DualSolution, solve_dual
from .errors import BudgetError, ConfigError, InfeasibleError, RegionError, TruncationWarning
from .feasible import membership
from .legendre import GridFunction, conjugacy_tolerance, lft
from .partition import get_model
from .potentials import PairPotential, analyticity_bound


@dataclass(frozen=True)
class BoxSequence:
    levels: tuple
    R0: float
    rho_exp: float
    boxes: tuple  # per level: (box with margin R_l, shrunk box)

    def box(self, l: int) -> BoxDomain:
        return self.boxes[self.levels.index(l)][0]

    def inner(self, l: int) -> BoxDomain:
        return self.boxes[self.levels.index(l)][1]

    def to_dict(self) -> dict:
        return {
            "levels": list(self.levels),
            "R0": self.R0,
            "rho_exp": self.rho_exp,
            "boxes": [{"outer": b.to_dict(), "inner": s.to_dict()} for b, s in self.boxes],
        }


def box_sequence(l_min: int, l_max: int, R0: float = 0.0, rho_exp: float = 0.0) -> BoxSequence:
    if l_min > l_max:
        raise ConfigError(f"l_min={l_min} exceeds l_max={l_max}")
    if not 0.0 <= rho_exp < 1.0:
        raise ConfigError("rho_exp must lie in [0, 1)")
    if R0 < 0:
        raise ConfigError("R0 must be nonnegative")
    boxes = []
    for l in range(l_min, l_max + 1):
        side = 2.0**l
        R = R0 * 2.0 ** (rho_exp * l)
        if side - 2 * R <= 0:
            raise ConfigError(f"shrunk side {side - 2 * R} at level {l} is not positive")
        outer = BoxDomain.cube(side, R)
        boxes.append((outer, outer.shrunk()))
    return BoxSequence(tuple(range(l_min, l_max + 1)), float(R0), float(rho_exp), tuple(boxes))


# ---------------------------------------------------------------------------
# extrapolation


def _extrapolate(values: np.ndarray):
    """Limit and fitted order p from the last three members of a sequence.

    Assumes v_l = v + c 2^(-p l).  Falls back to the last value when the
    differences do not shrink geometrically.
    """
    v = np.asarray(values, dtype=float)
    if len(v) < 3:
        return v[-1], None
    d1 = v[-2] - v[-3]
    d2 = v[-1] - v[-2]
    if d2 == 0.0:
        return v[-1], math.inf
    r = d2 / d1 if d1 != 0 else math.inf
    if not 0.0 < r < 1.0:
        return v[-1], None
    return v[-1] + d2 * r / (1.0 - r), -math.log2(r)


def _extrapolate_vectors(rows: np.ndarray):
    rows = np.asarray(rows, dtype=float)
    if len(rows) < 3:
        return rows[-1], None
    diffs = np.linalg.norm(np.diff(rows, axis=0), axis=1)
    if diffs[-1] == 0.0:
        return rows[-1], math.inf
    r = diffs[-1] / diffs[-2] if diffs[-2] > 0 else math.inf
    if not 0.0 < r < 1.0:
        return rows[-1], None
    return rows[-1] + (rows[-1] - rows[-2]) * r / (1.0 - r), -math.log2(r)


@dataclass
class PressureSequence:
    levels: list
    phi: np.ndarray
    errors: np.ndarray
    xi: float
    order: Optional[float]

    def to_dict(self) -> dict:
        return {"levels": self.levels, "phi": self.phi.tolist(), "errors": self.errors.tolist(),
                "xi": self.xi, "order": self.order}

    @classmethod
    def from_dict(cls, d) -> "PressureSequence":
        return cls(list(d["levels"]), np.asarray(d["phi"], dtype=float), np.asarray(d["errors"], dtype=float),
                   d["xi"], d["order"])


def _level_opts(model_opts: dict, l: int) -> dict:
    opts = dict(model_opts)
    per_level = opts.pop("level_samples", None)
    if per_level is not None:
        opts["samples"] = int(per_level[l]) if isinstance(per_level, dict) else int(per_level)
    return opts


def pressure_estimate(potential: PairPotential, params: ThermoParams, seq: BoxSequence, **model_opts) -> PressureSequence:
    params.check()
    phi, err = [], []
    for l in seq.levels:
        est = get_model(potential, seq.box(l), **_level_opts(model_opts, l)).evaluate(params, hessian=False)
        phi.append(est.phi)
        err.append(est.stat_error[0])
    xi, order = _extrapolate(np.array(phi))
    return PressureSequence(list(seq.levels), np.array(phi), np.array(err), float(xi), order)


# ---------------------------------------------------------------------------
# limit entropy by conjugation


def pressure_grid(potential, param_axes, box: BoxDomain, **model_opts) -> GridFunction:
    """Phi_box tabulated on a (mu, lam_x, lam_y, lam_z, beta) grid."""
    model = get_model(potential, box, **model_opts)
    g = GridFunction.from_function(model.phi_many, param_axes, ("mu", "lx", "ly", "lz", "beta"))
    g.meta["box"] = box.to_dict()
    return g


def entropy_limit(
    potential: PairPotential,
    macro_axes: Sequence,
    seq: BoxSequence,
    param_axes: Sequence,
    **model_opts,
) -> GridFunction:
    """s = -Xi* on ``macro_axes`` with Xi tabulated at the largest level."""
    l = seq.levels[-1]
    xi = pressure_grid(potential, param_axes, seq.box(l), **_level_opts(model_opts, l))
    conj = lft(xi, macro_axes)
    # a discrete conjugate is a finite max of affine functions, so s is finite on the grid
    out = GridFunction(conj.axes, -conj.values, ("rho", "ux", "uy", "uz", "E"))
    out.meta.update({"level": l, "hull_deviation": conj.meta["hull_deviation"],
                     "param_spacing": xi.spacing.tolist()})
    return out


# ---------------------------------------------------------------------------
# convergence of the dual parameters


@dataclass
class ConvergenceRecord:
    target: MacroState
    levels: list
    params: list  # ThermoParams or None where the level was infeasible
    phi: list
    entropy: list
    failures: dict
    cauchy_diffs: np.ndarray
    limit: Optional[ThermoParams]
    order: Optional[float]
    volumes: list = field(default_factory=list)

    def solved_levels(self) -> list:
        return [l for l, p in zip(self.levels, self.params) if p is not None]

    def to_dict(self) -> dict:
        return {
            "target": self.target.to_dict(),
            "levels": self.levels,
            "params": [None if p is None else p.to_dict() for p in self.params],
            "phi": self.phi,
            "entropy": self.entropy,
            "failures": {str(k): v for k, v in self.failures.items()},
            "cauchy_diffs": self.cauchy_diffs.tolist(),
            "limit": None if self.limit is None else self.limit.to_dict(),
            "order": self.order,
            "volumes": self.volumes,
        }

    @classmethod
    def from_dict(cls, d) -> "ConvergenceRecord":
        return cls(
            target=MacroState.from_dict(d["target"]),
            levels=list(d["levels"]),
            params=[None if p is None else ThermoParams.from_dict(p) for p in d["params"]],
            phi=list(d["phi"]),
            entropy=list(d["entropy"]),
            failures={int(k): v for k, v in d["failures"].items()},
            cauchy_diffs=np.asarray(d["cauchy_diffs"], dtype=float),
            limit=None if d["limit"] is None else ThermoParams.from_dict(d["limit"]),
            order=d["order"],
            volumes=list(d.get("volumes", [])),
        )

    def rows(self) -> list:
        """Per-level rows: l, volume, mu, lx, ly, lz, beta, phi, entropy, cauchy_diff."""
        out = []
        solved = self.solved_levels()
        for l, v, p, ph, en in zip(self.levels, self.volumes, self.params, self.phi, self.entropy):
            if p is None:
                out.append([l, v] + [math.nan] * 7 + [math.nan])
                continue
            k = solved.index(l)
            cd = self.cauchy_diffs[k - 1] if k > 0 else math.nan
            out.append([l, v, p.mu, *p.lam.tolist(), p.beta, ph, en, cd])
        return out


def parameter_convergence(
    target: MacroState,
    potential: PairPotential,
    seq: BoxSequence,
    *,
    tol: float = 1e-10,
    max_iter: int = 200,
    **model_opts,
) -> ConvergenceRecord:
    """Solve the dual problem at every level; infeasible levels are recorded, not fatal."""
    params, phi, entropy, failures, volumes = [], [], [], {}, []
    start = None
    for l in seq.levels:
        box = seq.box(l)
        volumes.append(box.volume)
        try:
            sol = solve_dual(target, potential, box, tol=tol, max_iter=max_iter, start=start,
                             **_level_opts(model_opts, l))
        except (InfeasibleError, BudgetError) as exc:
            params.append(None)
            phi.append(math.nan)
            entropy.append(math.nan)
            failures[l] = f"{type(exc).__name__}: {exc}"
            continue
        params.append(sol.params)
        phi.append(float(sol.params.as_vector() @ target.as_vector() - sol.entropy))
        entropy.append(sol.entropy)
        start = sol.params
    rows = np.array([p.as_vector() for p in params if p is not None])
    diffs = np.linalg.norm(np.diff(rows, axis=0), axis=1) if len(rows) > 1 else np.zeros(0)
    limit, order = (None, None)
    if len(rows):
        lim, order = _extrapolate_vectors(rows)
        limit = ThermoParams.from_vector(lim) if lim[4] < 0 else None
    return ConvergenceRecord(target, list(seq.levels), params, phi, entropy, failures, diffs, limit, order, volumes)


# ---------------------------------------------------------------------------
# domain of the limit entropy


@dataclass
class DomainEstimate:
    """Union over levels of the hull interiors built on the shrunk boxes.

    Level l tests |Lambda_l| x against the extensive hull of the shrunk box
    Lambda'_l, i.e. the slab hull of Lambda'_l rescaled by |Lambda'_l|/|Lambda_l|.
    """

    potential: PairPotential
    seq: BoxSequence
    n_max: Optional[int] = None
    tol: float = 1e-9
    resolution: int = 200

    def level_verdicts(self, point: MacroState) -> dict:
        out = {}
        for l in self.seq.levels:
            outer, inner = self.seq.box(l), self.seq.inner(l)
            scale = outer.volume / inner.volume
            N = point.rho * outer.volume
            n_max = self.n_max or int(min(max(8, math.ceil(2 * N) + 2), 256))
            scaled = MacroState(point.rho * scale, point.u * scale, point.E * scale)
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", TruncationWarning)
                out[l] = membership(scaled, self.potential, inner, n_max=n_max, tol=self.tol,
                                    resolution=self.resolution)
        return out

    def contains(self, point: MacroState) -> bool:
        if not point.rho > 0:
            return False
        return any(v.status == "interior" for v in self.level_verdicts(point).values())

    __call__ = contains


def domain_estimate(potential: PairPotential, seq: BoxSequence, n_max: Optional[int] = None, **kw) -> DomainEstimate:
    return DomainEstimate(potential, seq, n_max, **kw)


# ---------------------------------------------------------------------------
# the gradient map and its inverse


@dataclass
class HomeomorphismReport:
    samples: np.ndarray
    images: np.ndarray
    recovered: np.ndarray
    errors: np.ndarray
    tolerances: np.ndarray
    collisions: list
    level: int

    @property
    def passed(self) -> bool:
        return bool(np.all(self.errors <= self.tolerances) and not self.collisions)

    def to_dict(self) -> dict:
        return {
            "level": self.level,
            "samples": self.samples.tolist(),
            "images": self.images.tolist(),
            "recovered": self.recovered.tolist(),
            "errors": self.errors.tolist(),
            "tolerances": self.tolerances.tolist(),
            "collisions": self.collisions,
            "passed": self.passed,
        }

    @classmethod
    def from_dict(cls, d) -> "HomeomorphismReport":
        arr = lambda k: np.asarray(d[k], dtype=float)  # noqa: E731
        return cls(arr("samples"), arr("images"), arr("recovered"), arr("errors"), arr("tolerances"),
                   [tuple(c) for c in d["collisions"]], d["level"])


def _inverse_gradient(model, theta0, x0, hess, half_width, points, solver_tol):
    """-grad s at x0 by central differences of a zoomed discrete conjugate.

    Phi is tabulated on a cube of half-width ``half_width`` around theta0;
    the macro stencil x0 + {-2,-1,0,1,2} h_k e_k is placed so that its dual
    points theta0 + H^{-1} dx stay well inside that cube.  Returns the
    estimate and its per-component error bound: value error over the step
    plus a Richardson estimate of the truncation error.
    """
    w = np.broadcast_to(np.asarray(half_width, dtype=float), (5,))
    param_axes = [np.linspace(t - wk, t + wk, points) for t, wk in zip(theta0, w)]
    hinv = np.linalg.inv(hess)
    # dtheta = H^{-1} dx: choose h_k so a 2 h_k step moves theta by at most 40% of the half-width
    reach = np.max(np.abs(hinv) / w[:, None], axis=0)
    h = 0.2 / reach
    macro_axes = [x + hk * np.arange(-2, 3) for x, hk in zip(x0, h)]
    grid = GridFunction.from_function(model.phi_many, param_axes)
    conj = lft(grid, macro_axes).values  # = -s on the stencil
    c = (2, 2, 2, 2, 2)
    d2, d1 = np.empty(5), np.empty(5)
    for k in range(5):
        plus, minus, p1, m1 = list(c), list(c), list(c), list(c)
        plus[k], minus[k], p1[k], m1[k] = 4, 0, 3, 1
        d2[k] = (conj[tuple(plus)] - conj[tuple(minus)]) / (4 * h[k])
        d1[k] = (conj[tuple(p1)] - conj[tuple(m1)]) / (2 * h[k])
    value_tol = conjugacy_tolerance(2 * w / (points - 1), np.diag(hess))
    tol = value_tol / h + np.abs(d2 - d1) + solver_tol
    return d2, tol


def homeomorphism_check(
    potential: PairPotential,
    region_samples: Sequence,
    seq: BoxSequence,
    *,
    half_width: float = 0.005,
    points: int = 9,
    solver_tol: float = 1e-8,
    collision_tol: float = 1e-9,
    **model_opts,
) -> HomeomorphismReport:
    """Round trip theta -> grad Xi(theta) -> -grad s, plus an injectivity audit."""
    thetas = np.array([p.as_vector() if isinstance(p, ThermoParams) else np.asarray(p, dtype=float)
                       for p in region_samples])
    for th in thetas:
        bound = analyticity_bound(potential, th[1:4], th[4])
        if not (bound.degenerate or th[0] < bound.mu_max):
            raise RegionError(f"mu={th[0]:.6g} is not below the analyticity bound {bound.mu_max:.6g}")
    l = seq.levels[-1]
    model = get_model(potential, seq.box(l), **_level_opts(model_opts, l))
    images, recovered, errors, tols = [], [], [], []
    for th in thetas:
        est = model.evaluate(th, hessian=True)
        x0 = est.grad
        back, tol = _inverse_gradient(model, th, x0, est.hessian, half_width, points, solver_tol)
        images.append(x0)
        recovered.append(back)
        errors.append(float(np.linalg.norm(th - back)))
        tols.append(float(np.linalg.norm(tol)))
    images = np.array(images)
    collisions = []
    for i in range(len(thetas)):
        for j in range(i + 1, len(thetas)):
            if np.linalg.norm(images[i] - images[j]) <= collision_tol and np.linalg.norm(thetas[i] - thetas[j]) > collision_tol:
                collisions.append((i, j))
    return HomeomorphismReport(thetas, images, np.array(recovered), np.array(errors), np.array(tols), collisions, l)
