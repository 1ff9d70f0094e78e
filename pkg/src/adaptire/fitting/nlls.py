"""Damped Gauss-Newton (Levenberg-Marquardt) least squares with a finite-difference Jacobian."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Any, Callable, Sequence

import numpy as np

from ..exceptions import CoefficientError, FitError

ResidualFn = Callable[[Any, np.ndarray], np.ndarray]


class FitStage(enum.Enum):
    BASE_AT_CONDITION = "BaseAtCondition"
    PRESSURE_TREE = "PressureTree"
    PRESSURE_TREAD_TREE = "PressureTreadTree"
    TEMPERATURE_POLY = "TemperaturePoly"
    GRIP_TREE = "GripTree"
    JOINT = "Joint"


@dataclass
class FitProblem:
    """Observations plus everything the solver needs besides the residual function.

    ``observations`` is opaque to the solver and is passed straight to the
    residual function; ``len(observations)`` is used for the well-posedness check.
    ``scale`` sets the finite-difference step floor for coefficients near zero.
    """

    observations: Any
    initial_guess: np.ndarray
    stage: FitStage = FitStage.BASE_AT_CONDITION
    lower: np.ndarray | None = None
    upper: np.ndarray | None = None
    names: Sequence[str] | None = None
    scale: np.ndarray | None = None

    def __post_init__(self) -> None:
        self.initial_guess = np.asarray(self.initial_guess, dtype=np.float64).copy()
        p = self.initial_guess.size
        self.lower = np.full(p, -np.inf) if self.lower is None else np.asarray(self.lower, dtype=np.float64)
        self.upper = np.full(p, np.inf) if self.upper is None else np.asarray(self.upper, dtype=np.float64)
        self.scale = np.ones(p) if self.scale is None else np.asarray(self.scale, dtype=np.float64)
        if self.names is None:
            self.names = [f"c{i}" for i in range(p)]
        if not (self.lower.shape == self.upper.shape == self.scale.shape == (p,)) or len(self.names) != p:
            raise FitError("bounds, scale and names must match the coefficient count")
        if np.any(self.lower > self.upper):
            raise FitError("lower bound above upper bound")
        n = len(self.observations)
        if n < 2 * p:
            raise FitError(f"{self.stage.value}: {n} observations for {p} coefficients, need at least {2 * p}")


@dataclass
class FitResult:
    coefficients: np.ndarray
    residual_rms: float
    iterations: int
    converged: bool
    covariance_diagonal: np.ndarray
    gradient_norm: float
    message: str
    names: Sequence[str] = ()
    cost_history: list[float] = field(default_factory=list)

    def as_dict(self) -> dict[str, float]:
        return dict(zip(self.names, (float(c) for c in self.coefficients)))


def forward_jacobian(fn: Callable[[np.ndarray], np.ndarray], theta: np.ndarray, r0: np.ndarray,
                     scale: np.ndarray, rel_step: float = 1e-7) -> np.ndarray:
    jac = np.empty((r0.size, theta.size))
    for j in range(theta.size):
        h = rel_step * max(abs(theta[j]), scale[j])
        shifted = theta.copy()
        shifted[j] += h
        h = shifted[j] - theta[j]  # exactly representable step
        jac[:, j] = (fn(shifted) - r0) / h
    return jac


def nlls_solve(
    problem: FitProblem,
    residual_fn: ResidualFn,
    *,
    max_iterations: int = 200,
    gtol: float = 1e-10,
    xtol: float = 1e-12,
    ftol: float = 1e-15,
    lambda0: float = 1e-3,
    shrink: float = 0.3,
    grow: float = 2.0,
    rel_step: float = 1e-7,
) -> FitResult:
    """Minimise ``sum(residual_fn(observations, theta) ** 2)``.

    The damping follows a Marquardt schedule: ``lambda0`` to start, multiplied
    by ``shrink`` on an accepted step and by ``grow`` on a rejected one. The
    step solves ``(J'J + lambda * diag(J'J)) delta = -J'r``. Accepted steps never
    increase the cost.

    Raises:
        FitError: the initial residual is non-finite (naming the observation)
            or the Jacobian at the initial guess is rank deficient.
    """
    obs = problem.observations
    names = list(problem.names)

    def fn(theta: np.ndarray) -> np.ndarray:
        return np.asarray(residual_fn(obs, theta), dtype=np.float64).ravel()

    theta = np.clip(problem.initial_guess, problem.lower, problem.upper)
    r = fn(theta)
    bad = np.flatnonzero(~np.isfinite(r))
    if bad.size:
        raise FitError(f"non-finite residual for observation {int(bad[0])} at the initial guess")
    cost = 0.5 * float(r @ r)
    history = [cost]

    jac = forward_jacobian(fn, theta, r, problem.scale, rel_step)
    if not np.all(np.isfinite(jac)):
        raise FitError("non-finite Jacobian at the initial guess")
    col_norm = np.linalg.norm(jac, axis=0)
    if np.any(col_norm == 0) or np.linalg.matrix_rank(jac / np.where(col_norm > 0, col_norm, 1.0)) < theta.size:
        dead = [names[j] for j in np.flatnonzero(col_norm == 0)]
        detail = f"no sensitivity to {', '.join(dead)}" if dead else "linearly dependent coefficients"
        raise FitError(f"singular normal equations at the initial guess ({detail})")

    lam = lambda0
    iterations = 0
    converged = False
    message = "maximum iterations reached"
    grad = jac.T @ r

    while True:
        grad = jac.T @ r
        rnorm = float(np.sqrt(2.0 * cost))
        if rnorm == 0.0:
            converged, message = True, "zero residual"
            break
        cosine = np.abs(grad) / np.where(col_norm > 0, col_norm * rnorm, np.inf)
        if np.max(cosine) < gtol or np.linalg.norm(grad) < gtol:
            converged, message = True, "gradient below tolerance"
            break
        if iterations >= max_iterations:
            break
        iterations += 1

        jtj = jac.T @ jac
        diag = np.maximum(np.diag(jtj), 1e-300)
        accepted = False
        for _ in range(60):
            try:
                delta = np.linalg.solve(jtj + lam * np.diag(diag), -grad)
            except np.linalg.LinAlgError:
                lam *= grow
                continue
            trial = np.clip(theta + delta, problem.lower, problem.upper)
            step = trial - theta
            if np.linalg.norm(step) <= xtol * (np.linalg.norm(theta) + xtol):
                converged, message = True, "step below tolerance"
                break
            try:
                r_trial = fn(trial)
            except (CoefficientError, ValueError, ZeroDivisionError, FloatingPointError):
                lam *= grow
                continue
            if not np.all(np.isfinite(r_trial)):
                lam *= grow
                continue
            cost_trial = 0.5 * float(r_trial @ r_trial)
            if cost_trial <= cost:
                reduction = cost - cost_trial
                theta, r = trial, r_trial
                cost = cost_trial
                lam *= shrink
                accepted = True
                history.append(cost)
                if reduction <= ftol * cost:
                    converged, message = True, "relative cost reduction below tolerance"
                break
            lam *= grow
        if converged:
            break
        if not accepted:
            message = "no descent step found"
            break
        jac = forward_jacobian(fn, theta, r, problem.scale, rel_step)
        col_norm = np.linalg.norm(jac, axis=0)

    n, p = r.size, theta.size
    sigma2 = 2.0 * cost / max(n - p, 1)
    try:
        cov = np.linalg.pinv(jac.T @ jac) * sigma2
        var = np.diag(cov).copy()
    except np.linalg.LinAlgError:
        var = np.full(p, np.nan)
    rms = float(np.sqrt(2.0 * cost / n))
    return FitResult(
        coefficients=theta,
        residual_rms=rms,
        iterations=iterations,
        converged=converged and np.isfinite(rms),
        covariance_diagonal=var,
        gradient_norm=float(np.linalg.norm(jac.T @ r)),
        message=message,
        names=names,
        cost_history=history,
    )
