"""Recovering (mu, lambda, beta) from macroscopic constraints.

For a target x = (rho, u, E) the dual objective

    f(theta) = Phi(theta) - theta . x,       theta = (mu, lambda, beta),

is strictly convex on beta < 0, and its gradient vanishes exactly where the
grand-canonical moments equal x.  The objective is bounded below iff x is
solvable; otherwise the iterates run off to infinity or to beta = 0, which is
how infeasibility is detected.  ``|Lambda| f`` is the log of the normalising
constant ``log K`` of the entropy minimisation.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .domain import BoxDomain, MacroState, ThermoParams
from .errors import BudgetError, DomainError, InfeasibleError
from .partition import PartitionModel, get_model, log_kinetic_factor
from .potentials import PairPotential

BETA_CEILING = -1e-8


@dataclass
class DualSolution:
    params: ThermoParams
    achieved: MacroState
    target: MacroState
    residual: float
    iterations: int
    entropy: float
    converged: bool
    history: list = field(default_factory=list, repr=False)

    def to_dict(self) -> dict:
        return {
            "params": self.params.to_dict(),
            "achieved": self.achieved.to_dict(),
            "target": self.target.to_dict(),
            "residual": self.residual,
            "iterations": self.iterations,
            "entropy": self.entropy,
            "converged": self.converged,
        }

    @classmethod
    def from_dict(cls, d) -> "DualSolution":
        return cls(ThermoParams.from_dict(d["params"]), MacroState.from_dict(d["achieved"]),
                   MacroState.from_dict(d["target"]), d["residual"], d["iterations"], d["entropy"],
                   d["converged"])


def ideal_gas_closed_form(target: MacroState) -> ThermoParams:
    """Exact dual parameters of the ideal gas.

    beta = -3 / (2 (E/rho - |u|^2 / (2 rho^2))),  lambda = -beta u / rho,
    mu = log rho - log K(lambda, beta).
    """
    if not target.rho > 0:
        raise InfeasibleError(f"density must be positive, got {target.rho}")
    u = np.asarray(target.u, dtype=float)
    thermal = target.E / target.rho - float(u @ u) / (2.0 * target.rho**2)
    if not thermal > 0:
        raise InfeasibleError(f"thermal energy per particle {thermal} is not positive")
    beta = -3.0 / (2.0 * thermal)
    lam = -beta * u / target.rho
    mu = math.log(target.rho) - log_kinetic_factor(lam, beta)
    return ThermoParams(mu, lam, beta)


def _warm_start(target: MacroState, ideal: bool) -> np.ndarray:
    try:
        beta = ideal_gas_closed_form(target).beta
    except InfeasibleError:
        # interacting systems can have negative thermal energy
        beta = -1.0
    if not ideal:
        # the kinetic estimate of the temperature is unreliable when U matters
        beta = min(max(beta, -4.0), -0.25)
    lam = -beta * np.asarray(target.u) / target.rho
    return np.r_[math.log(target.rho) - log_kinetic_factor(lam, beta), lam, beta]


class _Objective:
    def __init__(self, model: PartitionModel, x: np.ndarray):
        self.model = model
        self.x = x
        self.budget_hits = 0

    def value(self, theta) -> float:
        if not (theta[4] < BETA_CEILING and np.all(np.isfinite(theta))):
            return math.inf
        try:
            with np.errstate(over="ignore", invalid="ignore"):
                phi = self.model.evaluate(theta, hessian=False).phi
        except BudgetError:
            self.budget_hits += 1
            return math.inf
        except (DomainError, FloatingPointError, OverflowError):
            return math.inf
        v = phi - float(theta @ self.x)
        return v if math.isfinite(v) else math.inf

    def grad_norm(self, theta) -> float:
        try:
            return float(np.linalg.norm(self.model.evaluate(theta, hessian=False).grad - self.x))
        except (DomainError, BudgetError, FloatingPointError, OverflowError):
            return math.inf

    def full(self, theta):
        est = self.model.evaluate(theta, hessian=True)
        return est.phi - float(theta @ self.x), est.grad - self.x, est.hessian, est


def solve_dual(
    target: MacroState,
    potential: PairPotential,
    box: BoxDomain,
    *,
    tol: float = 1e-10,
    max_iter: int = 200,
    start: Optional[ThermoParams] = None,
    theta_max: float = 1e6,
    stall_window: int = 25,
    model: Optional[PartitionModel] = None,
    **model_opts,
) -> DualSolution:
    """Damped Newton solve of grad Phi(theta) = target.

    Raises
    ------
    InfeasibleError
        If the iterates diverge (norm above ``theta_max``, beta pinned at
        zero, or a stalled decrease of the objective with a non-vanishing
        gradient), which signals a target outside the solvable set.
    BudgetError
        If ``max_iter`` iterations pass without convergence or divergence.
    """
    if not target.rho > 0:
        raise InfeasibleError(f"density must be positive, got {target.rho}")
    if not box.volume > 0:
        raise DomainError("box volume must be positive")
    model = model or get_model(potential, box, **model_opts)
    x = target.as_vector()
    obj = _Objective(model, x)
    theta = start.as_vector() if start is not None else _warm_start(target, model.exact)
    for _ in range(60):
        if math.isfinite(obj.value(theta)):
            break
        # start is outside the evaluable region: cool less, dilute, stay off the floor
        beta = theta[4]
        if beta < -1.0:
            beta = 0.5 * (beta - 1.0)
        if not model.exact:
            beta = min(beta, 2 * model.beta_floor)
        theta = np.r_[theta[0] - 1.0, theta[1:4] * beta / theta[4], beta]
    else:
        raise InfeasibleError("no evaluable starting point", ThermoParams.from_vector(theta), 0)

    history = []
    stalls = 0
    radius = 4.0
    for it in range(max_iter + 1):
        f, g, H, est = obj.full(theta)
        gnorm = float(np.linalg.norm(g))
        history.append((f, gnorm))
        if gnorm <= tol:
            params = ThermoParams.from_vector(theta)
            achieved = est.macro()
            entropy = float(theta @ x) - est.phi
            return DualSolution(params, achieved, target, gnorm, it, entropy, True, history)
        if it == max_iter:
            break
        scale = max(float(np.max(np.abs(np.diag(H)))), 1e-300)
        Hr = H + 1e-13 * scale * np.eye(5)
        try:
            step = -np.linalg.solve(Hr, g)
        except np.linalg.LinAlgError:
            step = -g / scale
        if not np.all(np.isfinite(step)):
            step = -g / scale
        # trust radius: grows on full steps so genuine divergence is still fast
        norm = float(np.linalg.norm(step))
        clipped = norm > radius
        if clipped:
            step *= radius / norm
        t = 1.0
        if step[4] > 0:
            # fraction to the boundary beta = 0
            t = min(t, 0.9 * (-theta[4]) / step[4])
        slope = float(g @ step)
        accepted = False
        obj.budget_hits = 0
        while t > 1e-14:
            trial = theta + t * step
            ft = obj.value(trial)
            if ft <= f + 1e-4 * t * slope:
                accepted = True
                break
            if t == 1.0 and ft <= f + 1e-12 * (1.0 + abs(f)) and obj.grad_norm(trial) < gnorm:
                # objective flat to rounding: judge the step by the gradient instead
                accepted = True
                break
            t *= 0.5
        if not accepted:
            stalls += 1
            if obj.budget_hits and gnorm < 1e-2 * (1.0 + float(np.linalg.norm(x))):
                # close to a solution but every trial needs a longer series: a budget problem
                raise BudgetError(f"series truncation exceeds n_cap near the solution (|grad| = {gnorm:.3g})")
            if stalls >= 3:
                raise InfeasibleError(
                    f"line search cannot decrease the dual objective (|grad| = {gnorm:.3g})",
                    ThermoParams.from_vector(theta), it,
                )
            # retry along the steepest descent direction
            step = -g / scale
            t = 1.0 if step[4] <= 0 else min(1.0, 0.9 * (-theta[4]) / step[4])
            while t > 1e-14 and not obj.value(theta + t * step) < f:
                t *= 0.5
            if t <= 1e-14:
                continue
            trial = theta + t * step
        radius = 2.0 * radius if (accepted and t == 1.0 and clipped) else max(radius, 1.0)
        if accepted and t < 0.25:
            radius = max(0.5 * radius, 1.0)
        theta = trial
        if not np.all(np.isfinite(theta)) or np.linalg.norm(theta) > theta_max:
            raise InfeasibleError(
                f"dual iterates diverge (|theta| = {np.linalg.norm(theta):.3g})",
                ThermoParams.from_vector(theta), it + 1,
            )
        if theta[4] > -1e-7 * max(1.0, np.linalg.norm(theta[:4])):
            raise InfeasibleError("dual iterates approach beta = 0", ThermoParams.from_vector(theta), it + 1)
        if len(history) > stall_window:
            f_old, _ = history[-stall_window]
            if abs(f_old - f) <= 1e-12 * (1.0 + abs(f)) and gnorm > 1e3 * tol:
                raise InfeasibleError("dual objective stalled away from a critical point",
                                      ThermoParams.from_vector(theta), it + 1)
    raise BudgetError(f"solve_dual did not converge in {max_iter} iterations (|grad| = {gnorm:.3g})")


def dual_objective(params: ThermoParams, target: MacroState, potential, box, **model_opts) -> float:
    """target . theta - Phi(theta), the Fenchel-Young lower bound on the minimal entropy."""
    model = get_model(potential, box, **model_opts)
    theta = params.as_vector()
    return float(theta @ target.as_vector()) - model.evaluate(theta, hessian=False).phi


def minimality_gap(
    alt: ThermoParams,
    target: MacroState,
    potential: PairPotential,
    box: BoxDomain,
    *,
    solution: Optional[DualSolution] = None,
    **opts,
) -> float:
    """Phi*(target) - [target . alt - Phi(alt)], nonnegative and zero only at the solution."""
    alt.check()
    model_opts = {k: v for k, v in opts.items() if k not in ("tol", "max_iter", "start", "theta_max", "stall_window")}
    sol = solution or solve_dual(target, potential, box, **opts)
    return sol.entropy - dual_objective(alt, target, potential, box, **model_opts)
