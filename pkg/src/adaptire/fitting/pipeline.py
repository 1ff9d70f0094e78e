"""Staged recovery of the adaptation tree from slip-sweep data.

Stage 1 fits ``(a3, a4, a1, a2, C, E)`` to the load sweeps at each
pressure/tread/temperature condition. Stage 2 fits a quadratic (a3) and linear
(a4) pressure law per tread/temperature, stage 3 makes those coefficients
quadratic in tread depth per temperature, and stage 4 fits the two quadratic
temperature factors. A joint pass over all coefficients then refines the
staged tree against the raw forces.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from ..exceptions import CoefficientError, FitError, UnderSampledError
from ..mf_adapt import (
    GRIP_LEVEL_NAMES,
    GRIP_LOAD_NAMES,
    STIFFNESS_AMPLITUDE_NAMES,
    STIFFNESS_LOAD_NAMES,
    AdaptedMfCoefficients,
    TireConditions,
)
from ..mf_core import magic_formula, stiffness_load_shape
from .nlls import FitProblem, FitResult, FitStage, nlls_solve
from .synthetic import REFERENCE, SweepObservation, as_array, model_lateral_force

SLOPE_WINDOW_RAD = np.deg2rad(2.6)
BASE_NAMES = ("a3", "a4", "a1", "a2", "shape_c", "curvature_e")
JOINT_NAMES = (
    STIFFNESS_AMPLITUDE_NAMES
    + STIFFNESS_LOAD_NAMES
    + ("stiffness.b11", "stiffness.b12")
    + GRIP_LOAD_NAMES
    + GRIP_LEVEL_NAMES
    + ("grip.b11", "grip.b12", "shape_c", "curvature_e")
)


@dataclass
class StageReport:
    stage: FitStage
    residual_rms: float
    converged: bool
    fits: int = 1
    iterations: int = 0


@dataclass
class FitReport:
    staged: AdaptedMfCoefficients
    refined: AdaptedMfCoefficients | None
    stages: list[StageReport] = field(default_factory=list)
    joint: FitResult | None = None
    staged_force_rms: float = float("nan")
    refined_force_rms: float = float("nan")

    @property
    def best(self) -> AdaptedMfCoefficients:
        if self.refined is not None and self.refined_force_rms <= self.staged_force_rms:
            return self.refined
        return self.staged

    def to_text(self) -> str:
        lines = ["stage                 rms            converged  fits  iterations"]
        for s in self.stages:
            lines.append(f"{s.stage.value:<21} {s.residual_rms:<14.6g} {str(s.converged):<10} {s.fits:<5} {s.iterations}")
        lines.append("")
        lines.append(f"lateral force rms, staged tree:  {self.staged_force_rms:.6g} N")
        lines.append(f"lateral force rms, joint refine: {self.refined_force_rms:.6g} N")
        lines.append(f"selected: {'joint' if self.best is self.refined else 'staged'}")
        lines.append("")
        lines.append("coefficient           value")
        named = self.best.named()
        for branch in ("stiffness", "grip"):
            for key, value in named[branch].items():
                lines.append(f"{branch + '.' + key:<21} {value!r}")
        lines.append(f"{'shape.shape_c':<21} {self.best.shape_c!r}")
        lines.append(f"{'shape.curvature_e':<21} {self.best.curvature_e!r}")
        return "\n".join(lines) + "\n"


def _levels(values: np.ndarray) -> np.ndarray:
    return np.unique(values)


def _require(axis: str, levels: np.ndarray, needed: int) -> None:
    if levels.size < needed:
        raise UnderSampledError(axis, int(levels.size), needed)


# -- stage 1 -------------------------------------------------------------------


def _base_initial_guess(arr: np.ndarray) -> np.ndarray:
    loads = _levels(arr[:, 1])
    slopes, mus = [], []
    for fz in loads:
        rows = arr[arr[:, 1] == fz]
        near = np.abs(rows[:, 0]) <= SLOPE_WINDOW_RAD
        if near.sum() >= 2:
            slope = np.polyfit(rows[near, 0], rows[near, 5], 1)[0]
        else:
            order = np.argsort(np.abs(rows[:, 0]))[:2]
            slope = np.polyfit(rows[order, 0], rows[order, 5], 1)[0]
        slopes.append(slope)
        mus.append(np.max(np.abs(rows[:, 5])) / fz)
    slopes = np.asarray(slopes)
    best = int(np.argmax(slopes))
    a3 = max(float(slopes[best]), 1.0)
    a4 = float(loads[best])
    a1, a2 = np.polyfit(loads, mus, 1)
    a1 = min(float(a1), 0.0)
    a2 = float(np.mean(np.asarray(mus) - a1 * loads))
    return np.array([a3, a4, a1, a2, 1.3, -1.0])


def _base_residual(arr: np.ndarray, theta: np.ndarray) -> np.ndarray:
    a3, a4, a1, a2, c, e = theta
    fz = arr[:, 1]
    if a4 <= 0:
        raise CoefficientError("a4 must be positive")
    peak = (a1 * fz + a2) * fz
    if np.any(peak <= 0):
        raise CoefficientError("peak force not positive")
    bcd = a3 * stiffness_load_shape(fz, a4)
    return magic_formula(arr[:, 0], bcd, c, peak, e) - arr[:, 5]


def fit_base_at_condition(arr: np.ndarray) -> FitResult:
    """Stage 1: plain MF coefficients from every load sweep at one condition."""
    _require("load", _levels(arr[:, 1]), 4)
    guess = _base_initial_guess(arr)
    problem = FitProblem(
        observations=arr,
        initial_guess=guess,
        stage=FitStage.BASE_AT_CONDITION,
        lower=np.array([1.0, 1.0, -1e-3, 1e-3, 1.0, -10.0]),
        upper=np.array([np.inf, np.inf, 0.0, 5.0, 2.0, 1.0]),
        names=BASE_NAMES,
        scale=np.array([1e4, 1e3, 1e-5, 1.0, 1.0, 1.0]),
    )
    return nlls_solve(problem, _base_residual)


# -- polynomial helpers -----------------------------------------------------------


def _polyfit(x: np.ndarray, y: np.ndarray, degree: int) -> np.ndarray:
    """Least-squares polynomial coefficients, highest power first."""
    vander = np.vander(np.asarray(x, dtype=np.float64), degree + 1)
    coef, *_ = np.linalg.lstsq(vander, np.asarray(y, dtype=np.float64), rcond=None)
    return coef


def _rms(a: np.ndarray) -> float:
    a = np.asarray(a, dtype=np.float64)
    return float(np.sqrt(np.mean(a * a))) if a.size else 0.0


# -- the staged pipeline ------------------------------------------------------------


def _build_tree(vec: np.ndarray, reference: TireConditions, span: float) -> AdaptedMfCoefficients:
    return AdaptedMfCoefficients(
        stiffness_amplitude=tuple(vec[0:9]),
        stiffness_load=tuple(vec[9:15]),
        stiffness_temperature=(vec[15], vec[16], 1.0),
        grip_load=tuple(vec[17:20]),
        grip_level=tuple(vec[20:22]),
        grip_temperature=(vec[22], vec[23], 1.0),
        reference=reference,
        temperature_span=span,
        shape_c=float(vec[24]),
        curvature_e=float(vec[25]),
    )


def _tree_vector(tree: AdaptedMfCoefficients) -> np.ndarray:
    return np.concatenate(
        [
            tree.stiffness_amplitude,
            tree.stiffness_load,
            tree.stiffness_temperature[:2],
            tree.grip_load,
            tree.grip_level,
            tree.grip_temperature[:2],
            [tree.shape_c, tree.curvature_e],
        ]
    )


def _fit_temperature_factor(
    z_levels: np.ndarray, values: list[np.ndarray], blocks: list[np.ndarray]
) -> tuple[np.ndarray, np.ndarray]:
    """Split per-temperature coefficient blocks into one block times a quadratic factor.

    ``values`` holds the stage-1 quantities the blocks describe at each
    temperature; their least-squares ratio to the first level gives the
    temperature scaling. Returns ``(block, (b11, b12))`` with the factor's
    constant term fixed at one.
    """
    anchor = values[0]
    denom = float(anchor @ anchor)
    scales = np.array([float(v @ anchor) / denom for v in values])
    poly = _polyfit(z_levels, scales, 2)
    p0 = poly[2]
    factor = np.polyval(poly, z_levels) / p0
    block = np.mean([b / f for b, f in zip(blocks, factor)], axis=0)
    return block, poly[:2] / p0


def fit_staged(arr: np.ndarray, reference: TireConditions, temperature_span: float) -> tuple[AdaptedMfCoefficients, list[StageReport]]:
    pressures = _levels(arr[:, 2])
    treads = _levels(arr[:, 3])
    temps = _levels(arr[:, 4])
    _require("load", _levels(arr[:, 1]), 4)
    _require("pressure", pressures, 3)
    _require("tread depth", treads, 3)

    def norm(p, d, t):
        return (
            (p - reference.pressure) / reference.pressure,
            (d - reference.tread_depth) / reference.tread_depth,
            (t - reference.surface_temperature) / temperature_span,
        )

    # stage 1
    base: dict[tuple[float, float, float], np.ndarray] = {}
    rms1, conv1, iters1 = [], True, 0
    for p in pressures:
        for d in treads:
            for t in temps:
                mask = (arr[:, 2] == p) & (arr[:, 3] == d) & (arr[:, 4] == t)
                if not mask.any():
                    continue
                res = fit_base_at_condition(arr[mask])
                base[(p, d, t)] = res.coefficients
                rms1.append(res.residual_rms)
                conv1 &= res.converged
                iters1 += res.iterations
    reports = [StageReport(FitStage.BASE_AT_CONDITION, _rms(rms1), conv1, len(base), iters1)]
    shape_c = float(np.median([c[4] for c in base.values()]))
    curvature_e = float(np.median([c[5] for c in base.values()]))

    # stage 2: pressure laws per (tread, temperature)
    stage2: dict[tuple[float, float], tuple[np.ndarray, np.ndarray]] = {}
    resid2 = []
    for d in treads:
        for t in temps:
            ps = np.array([p for p in pressures if (p, d, t) in base])
            _require("pressure", ps, 3)
            x = norm(ps, 0.0, 0.0)[0]
            a3 = np.array([base[(p, d, t)][0] for p in ps])
            a4 = np.array([base[(p, d, t)][1] for p in ps])
            q = _polyfit(x, a3, 2)
            lin = _polyfit(x, a4, 1)
            resid2.extend((np.polyval(q, x) - a3) / a3)
            resid2.extend((np.polyval(lin, x) - a4) / a4)
            stage2[(d, t)] = (q, lin)
    reports.append(StageReport(FitStage.PRESSURE_TREE, _rms(resid2), True, len(stage2)))

    # stage 3: tread laws per temperature, stiffness and grip
    amp_blocks, load_blocks, grip_blocks = [], [], []
    amp_values, grip_values = [], []
    loads = _levels(arr[:, 1])
    resid3, resid_grip = [], []
    for t in temps:
        ds = np.array([d for d in treads if (d, t) in stage2])
        _require("tread depth", ds, 3)
        y = norm(0.0, ds, 0.0)[1]
        q = np.array([stage2[(d, t)][0] for d in ds])  # rows: tread; cols: x^2, x, 1
        lin = np.array([stage2[(d, t)][1] for d in ds])
        amp = np.array([_polyfit(y, q[:, i], 2) for i in range(3)])
        ld = np.array([_polyfit(y, lin[:, i], 2) for i in range(2)])
        for i in range(3):
            resid3.extend(np.polyval(amp[i], y) - q[:, i])
        amp_blocks.append(amp.ravel())
        amp_values.append(np.array([base[(p, d, t)][0] for d in ds for p in pressures if (p, d, t) in base]))
        load_blocks.append(ld.ravel())

        # grip at this temperature: mu = a1(y) Fz + a2(y), averaged over pressures
        a1 = np.array([np.mean([base[(p, d, t)][2] for p in pressures if (p, d, t) in base]) for d in ds])
        a2 = np.array([np.mean([base[(p, d, t)][3] for p in pressures if (p, d, t) in base]) for d in ds])
        g_load = _polyfit(y, a1, 2)
        g_level = _polyfit(y, a2, 1)
        resid_grip.extend(np.polyval(g_level, y) - a2)
        grip_blocks.append(np.concatenate([g_load, g_level]))
        grip_values.append(np.outer(a1, loads).ravel() + np.repeat(a2, loads.size))
    scale3 = max(abs(np.mean([b[-1] for b in amp_blocks])), 1.0)
    reports.append(StageReport(FitStage.PRESSURE_TREAD_TREE, _rms(resid3) / scale3, True, len(amp_blocks)))
    reports.append(StageReport(FitStage.GRIP_TREE, _rms(resid_grip), True, len(grip_blocks)))

    # stage 4: temperature factors
    _require("temperature", temps, 3)
    z = norm(0.0, 0.0, temps)[2]
    amp, b_stiff = _fit_temperature_factor(z, amp_values, amp_blocks)
    grip, b_grip = _fit_temperature_factor(z, grip_values, grip_blocks)
    load = np.mean(load_blocks, axis=0)
    vec = np.concatenate([amp, load, b_stiff, grip[:3], grip[3:], b_grip, [shape_c, curvature_e]])
    tree = _build_tree(vec, reference, temperature_span)
    resid4 = []
    for t, blk in zip(temps, amp_blocks):
        zt = norm(0.0, 0.0, t)[2]
        resid4.extend((amp * tree.stiffness_temperature_factor(zt) - blk) / scale3)
    reports.append(StageReport(FitStage.TEMPERATURE_POLY, _rms(resid4), True, 2))
    return tree, reports


def refine_joint(arr: np.ndarray, tree: AdaptedMfCoefficients, max_iterations: int = 200) -> FitResult:
    reference, span = tree.reference, tree.temperature_span

    def residual(obs: np.ndarray, theta: np.ndarray) -> np.ndarray:
        return model_lateral_force(_build_tree(theta, reference, span), obs) - obs[:, 5]

    guess = _tree_vector(tree)
    scale = np.maximum(np.abs(guess), 1e-3)
    scale[17:20] = np.maximum(np.abs(guess[17:20]), 1e-6)
    lower = np.full(guess.size, -np.inf)
    upper = np.full(guess.size, np.inf)
    lower[24], upper[24] = 1.0, 2.0
    upper[25] = 1.0
    problem = FitProblem(arr, guess, FitStage.JOINT, lower, upper, JOINT_NAMES, scale)
    return nlls_solve(problem, residual, max_iterations=max_iterations)


def fit_with_report(
    observations,
    reference: TireConditions = REFERENCE,
    temperature_span: float = 65.0,
    joint_refinement: bool = True,
    joint_max_iterations: int = 200,
) -> FitReport:
    arr = as_array(observations)
    staged, stages = fit_staged(arr, reference, temperature_span)
    report = FitReport(staged=staged, refined=None, stages=stages)
    report.staged_force_rms = _rms(model_lateral_force(staged, arr) - arr[:, 5])
    if joint_refinement:
        joint = refine_joint(arr, staged, joint_max_iterations)
        refined = _build_tree(joint.coefficients, reference, temperature_span)
        report.joint = joint
        report.refined = refined
        report.refined_force_rms = joint.residual_rms
        report.stages.append(StageReport(FitStage.JOINT, joint.residual_rms, joint.converged, 1, joint.iterations))
    return report


def fit_stage_pipeline(observations, reference_conditions: TireConditions = REFERENCE, **kwargs) -> AdaptedMfCoefficients:
    """Fit the complete adaptation tree; see :func:`fit_with_report` for diagnostics."""
    return fit_with_report(observations, reference_conditions, **kwargs).best


class AdaptedMfRegressor(RegressorMixin, BaseEstimator):
    """Estimator wrapper around the staged pipeline.

    ``X`` columns are slip angle (rad), normal load (N), pressure (kPa), tread
    depth (mm) and surface temperature (degC); ``y`` is the lateral force (N).

    Parameters
    ----------
    reference_pressure, reference_tread_depth, reference_temperature, nominal_load
        The reference conditions the polynomial arguments are normalised to.
    temperature_span
        Temperature difference (K) mapped to a unit polynomial argument.
    joint_refinement
        Run the joint pass after the staged fit.
    """

    def __init__(
        self,
        reference_pressure: float = REFERENCE.pressure,
        reference_tread_depth: float = REFERENCE.tread_depth,
        reference_temperature: float = REFERENCE.surface_temperature,
        nominal_load: float = REFERENCE.normal_load,
        temperature_span: float = 65.0,
        joint_refinement: bool = True,
    ):
        self.reference_pressure = reference_pressure
        self.reference_tread_depth = reference_tread_depth
        self.reference_temperature = reference_temperature
        self.nominal_load = nominal_load
        self.temperature_span = temperature_span
        self.joint_refinement = joint_refinement

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=np.float64)
        if X.shape[1] != 5:
            raise ValueError(f"expected 5 feature columns, got {X.shape[1]}")
        reference = TireConditions(
            self.reference_pressure, self.reference_tread_depth, self.reference_temperature, self.nominal_load
        )
        self.report_ = fit_with_report(
            np.column_stack([X, y]), reference, self.temperature_span, self.joint_refinement
        )
        self.coefficients_ = self.report_.best
        self.n_features_in_ = 5
        return self

    def predict(self, X):
        check_is_fitted(self, "coefficients_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != 5:
            raise ValueError(f"expected 5 feature columns, got {X.shape[1]}")
        return model_lateral_force(self.coefficients_, np.column_stack([X, np.zeros(len(X))]))


def observations_to_xy(observations) -> tuple[np.ndarray, np.ndarray]:
    arr = as_array(observations)
    return arr[:, :5], arr[:, 5]


__all__ = [
    "AdaptedMfRegressor",
    "FitReport",
    "SweepObservation",
    "fit_base_at_condition",
    "fit_stage_pipeline",
    "fit_with_report",
    "observations_to_xy",
]
