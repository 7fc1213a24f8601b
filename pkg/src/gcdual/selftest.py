"""Closed-form ideal-gas checks run by ``gcdual selftest``.

For the ideal gas Phi = exp(a) exactly, so every structural property has an
analytic reference.  Each check returns a :class:`CheckResult`; none of them
raises on failure.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .domain import BoxDomain, MacroState, ThermoParams
from .dual import ideal_gas_closed_form, minimality_gap, solve_dual
from .legendre import GridFunction, biconjugate, conjugacy_tolerance, lft
from .partition import get_model, log_kinetic_factor
from .potentials import ideal_gas
from .thermo_limit import box_sequence, homeomorphism_check, parameter_convergence


@dataclass
class CheckResult:
    criterion: int
    name: str
    passed: bool
    value: float
    threshold: float
    seconds: float = 0.0
    details: dict = field(default_factory=dict)

    def line(self) -> str:
        flag = "PASS" if self.passed else "FAIL"
        return f"[{flag}] {self.criterion:2d} {self.name}: {self.value:.3g} (threshold {self.threshold:.3g}, {self.seconds:.2f} s)"

    def to_dict(self) -> dict:
        return {"criterion": self.criterion, "name": self.name, "passed": self.passed,
                "value": self.value, "threshold": self.threshold, "seconds": self.seconds,
                "details": self.details}


def _timed(fn):
    def wrapper(*a, **kw):
        t0 = time.perf_counter()
        res = fn(*a, **kw)
        res.seconds = time.perf_counter() - t0
        return res
    wrapper.__name__ = fn.__name__
    wrapper.__doc__ = fn.__doc__
    return wrapper


def _random_targets(rng, k):
    rho = rng.uniform(0.2, 3.0, k)
    u = rng.normal(0.0, 0.5, (k, 3)) * rho[:, None]
    thermal = rng.uniform(0.3, 3.0, k)
    E = rho * thermal + np.sum(u**2, axis=1) / (2 * rho)
    return [MacroState(r, v, e) for r, v, e in zip(rho, u, E)]


@_timed
def round_trip() -> CheckResult:
    sol = solve_dual(MacroState(1.0, (0, 0, 0), 1.5), ideal_gas(), BoxDomain.cube(1.0))
    p = sol.params
    err = max(abs(p.mu + 1.5 * math.log(2 * math.pi)) / 1e-8, float(np.max(np.abs(p.lam))) / 1e-10, abs(p.beta + 1) / 1e-8)
    return CheckResult(1, "ideal-gas dual round trip", err <= 1.0, err, 1.0, details={"params": p.to_dict()})


@_timed
def fenchel_young(n: int = 100, seed: int = 0) -> CheckResult:
    rng = np.random.default_rng(seed)
    pot, box = ideal_gas(), BoxDomain.cube(1.0)
    worst_at, worst_off = 0.0, math.inf
    for x in _random_targets(rng, n):
        sol = solve_dual(x, pot, box)
        worst_at = max(worst_at, minimality_gap(sol.params, x, pot, box, solution=sol))
        d = rng.normal(size=5)
        theta = sol.params.as_vector() + 0.1 * d / np.linalg.norm(d)
        theta[4] = min(theta[4], -1e-3)
        worst_off = min(worst_off, minimality_gap(ThermoParams.from_vector(theta), x, pot, box, solution=sol))
    ok = worst_at <= 1e-6 and worst_off >= 1e-4
    return CheckResult(2, "Fenchel-Young gap", ok, worst_at, 1e-6, details={"min_perturbed_gap": worst_off})


@_timed
def gradient_consistency(n: int = 10, seed: int = 0, h: float = 1e-5) -> CheckResult:
    rng = np.random.default_rng(seed)
    model = get_model(ideal_gas(), BoxDomain.cube(1.0))
    worst = 0.0
    for _ in range(n):
        theta = np.r_[rng.uniform(-3, 1), rng.normal(0, 0.5, 3), rng.uniform(-3, -0.5)]
        g = model.evaluate(theta, hessian=False).grad
        fd = np.empty(5)
        for k in range(5):
            e = np.zeros(5)
            e[k] = h
            fd[k] = (model.phi(theta + e) - model.phi(theta - e)) / (2 * h)
        worst = max(worst, float(np.max(np.abs(fd - g) / np.maximum(1.0, np.abs(g)))))
    return CheckResult(3, "finite-difference gradients", worst <= 1e-6, worst, 1e-6)


@_timed
def feasibility_agreement(n: int = 30, seed: int = 0, band: float = 1e-3) -> CheckResult:
    import warnings

    from .errors import InfeasibleError
    from .feasible import membership

    rng = np.random.default_rng(seed)
    pot, box = ideal_gas(), BoxDomain.cube(2.0)
    disagreements, used = 0, 0
    while used < n:
        rho = rng.uniform(0.1, 2.0)
        u = rng.normal(0, 0.5, 3) * rho
        E = float(u @ u) / (2 * rho) + rho * rng.uniform(-1.0, 2.0)
        x = MacroState(rho, u, E)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            v = membership(x, pot, box, n_max=int(4 * rho * box.volume) + 8, tol=band)
        if v.status == "boundary":
            continue
        used += 1
        try:
            solve_dual(x, pot, box)
            solved = True
        except InfeasibleError:
            solved = False
        disagreements += int(solved != v.interior)
    return CheckResult(4, "membership and solver agreement", disagreements == 0, disagreements, 0)


@_timed
def conjugacy(n: int = 20, seed: int = 0, points: int = 9, half_width: float = 0.1) -> CheckResult:
    rng = np.random.default_rng(seed)
    pot, box = ideal_gas(), BoxDomain.cube(1.0)
    model = get_model(pot, box)
    worst = 0.0
    for x in _random_targets(rng, n):
        sol = solve_dual(x, pot, box)
        theta0 = sol.params.as_vector()
        axes = [np.linspace(t - half_width, t + half_width, points) for t in theta0]
        grid = GridFunction.from_function(model.phi_many, axes)
        conj = lft(grid, [[v] for v in x.as_vector()]).values.ravel()[0]
        H = model.evaluate(theta0).hessian
        tol = conjugacy_tolerance(grid.spacing, np.diag(H))
        worst = max(worst, abs(conj - sol.entropy) / (5 * tol))
    return CheckResult(5, "conjugacy of tabulated Phi", worst <= 1.0, worst, 1.0)


@_timed
def biconjugate_fixed_point() -> CheckResult:
    x = np.linspace(-2, 2, 201)
    worst = 0.0
    for f in (GridFunction((x,), np.cosh(x)), GridFunction((x, x[::4]), np.add.outer(x**2, np.abs(x[::4])))):
        ff = biconjugate(f)
        worst = max(worst, float(np.max(np.abs(ff.values - f.values))) / (2 * ff.meta["tolerance"]))
    dw = (x**2 - 1) ** 2
    hull = np.where(np.abs(x) < 1, 0.0, dw)
    ff = biconjugate(GridFunction((x,), dw))
    worst = max(worst, float(np.max(np.abs(ff.values - hull))) / (2 * ff.meta["tolerance"]))
    return CheckResult(6, "biconjugate fixed point", worst <= 1.0, worst, 1.0)


@_timed
def level_invariance() -> CheckResult:
    rec = parameter_convergence(MacroState(0.5, (0.1, 0, 0), 1.0), ideal_gas(), box_sequence(1, 4))
    P = np.array([p.as_vector() for p in rec.params])
    spread = float(np.max(np.ptp(P, axis=0)))
    return CheckResult(7, "ideal-gas parameters across levels", spread <= 1e-10, spread, 1e-10)


@_timed
def hessian_positive(n: int = 20, seed: int = 0) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst = math.inf
    for l in range(1, 5):
        model = get_model(ideal_gas(), BoxDomain.cube(2.0**l))
        for _ in range(n):
            theta = np.r_[rng.uniform(-3, 1), rng.normal(0, 0.5, 3), rng.uniform(-3, -0.5)]
            H = model.evaluate(theta).hessian
            worst = min(worst, float(np.linalg.eigvalsh(H)[0]) / float(np.max(np.abs(H))))
    return CheckResult(8, "strict convexity witness", worst > 0, worst, 0.0)


@_timed
def homeomorphism(n: int = 20, seed: int = 0) -> CheckResult:
    rng = np.random.default_rng(seed)
    thetas = np.column_stack([rng.uniform(-2, 0.5, n), rng.normal(0, 0.5, (n, 3)), rng.uniform(-2.5, -0.5, n)])
    rep = homeomorphism_check(ideal_gas(), thetas, box_sequence(1, 2))
    ratio = float(np.max(rep.errors / rep.tolerances))
    return CheckResult(9, "homeomorphism round trip", rep.passed, ratio, 1.0,
                       details={"collisions": len(rep.collisions)})


@_timed
def sampler_cross_validation(n_samples: int = 100_000, seed: int = 0) -> CheckResult:
    from .sampler import sample_observables

    box = BoxDomain.cube(2.0)
    theta = ideal_gas_closed_form(MacroState(1.0, (0.2, 0, 0), 1.6))
    obs = sample_observables(ideal_gas(), box, theta, n_samples, seed=seed)
    mean_n = box.volume * math.exp(theta.mu + log_kinetic_factor(theta.lam, theta.beta))
    counts = np.bincount(obs[:, 0].astype(int))
    lo, hi = int(stats.poisson.ppf(1e-4, mean_n)), int(stats.poisson.isf(1e-4, mean_n))
    edges = np.arange(lo, hi + 1)
    obs_b = np.array([counts[: lo + 1].sum()] + [counts[e] if e < len(counts) else 0 for e in edges[1:-1]]
                     + [counts[hi:].sum()])
    exp_p = np.r_[stats.poisson.cdf(lo, mean_n), stats.poisson.pmf(edges[1:-1], mean_n), stats.poisson.sf(hi - 1, mean_n)]
    p_value = float(stats.chisquare(obs_b, exp_p * n_samples / exp_p.sum()).pvalue)
    # analytic moments |Lambda| grad Phi; the chain is correlated, so use batch means for sigma
    model = get_model(ideal_gas(), box)
    mom = model.evaluate(theta.as_vector(), hessian=False).grad * box.volume
    batches = obs.reshape(50, -1, 5).mean(axis=1)
    sigma = batches.std(axis=0, ddof=1) / math.sqrt(len(batches))
    z = float(np.max(np.abs(obs.mean(axis=0) - mom) / np.maximum(sigma, 1e-12)))
    ok = p_value > 0.01 and z <= 3.0
    return CheckResult(10, "sampler N-distribution and moments", ok, p_value, 0.01, details={"moment_z": z})


CHECKS = (round_trip, fenchel_young, gradient_consistency, feasibility_agreement, conjugacy, biconjugate_fixed_point,
          level_invariance, hessian_positive, homeomorphism, sampler_cross_validation)


def run_all(quick: bool = False, seed: int = 0) -> list:
    """Run every ideal-gas check; ``quick`` shrinks sample counts."""
    out = []
    for check in CHECKS:
        kw = {}
        if check in (fenchel_young, feasibility_agreement, conjugacy, homeomorphism, hessian_positive, gradient_consistency):
            kw["seed"] = seed
            if quick:
                kw["n"] = 5
        if check is sampler_cross_validation:
            kw["seed"] = seed
            if quick:
                kw["n_samples"] = 20_000
        out.append(check(**kw))
    return out
