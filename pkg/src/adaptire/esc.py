"""Sliding-mode yaw stability controller with individual-wheel braking.

The upper level computes the corrective yaw moment that drives
``s = yaw_rate - desired_yaw_rate`` to zero at rate ``eta``; the lower level
picks one wheel from the sign pattern of ``(desired yaw rate, s, Mz)``,
converts the moment to brake torque and trims it to the friction circle and a
longitudinal slip target. Sign conventions follow :mod:`adaptire.vehicle`.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from . import kvfile
from .mf_adapt import AdaptedMfCoefficients, TireConditions
from .vehicle import (
    BicycleReference,
    VehicleParameters,
    Wheel,
    axle_forces_from_measurements,
    desired_yaw_rate,
    reference_from_tire_model,
)

DECISION_CSV_HEADER = ("time_s", "gamma", "gamma_des", "s", "mz", "wheel", "tb", "intervention")


@dataclass(frozen=True)
class EscConfig:
    """Controller tuning. The defaults are engineering choices, not published values.

    ``refresh_*`` are the sensed-condition changes that trigger a rebuild of the
    adaptive reference; below them the reference keeps its last value.
    """

    sliding_gain: float = 5.0  # 1/s
    dead_band: float = 0.03  # rad/s
    max_brake_torque: float = 1500.0  # N m
    adaptive_reference: bool = True
    slip_target: float = 0.12
    cap_with_adapted_mu: bool = True
    filter_time_constant: float = 0.02  # s, derivative filter on the desired yaw rate
    refresh_pressure: float = 5.0  # kPa
    refresh_tread_depth: float = 0.5  # mm
    refresh_temperature: float = 10.0  # degC

    def __post_init__(self) -> None:
        if not self.sliding_gain > 0:
            raise ValueError("sliding_gain must be positive")
        if not self.dead_band >= 0:
            raise ValueError("dead_band must be >= 0")
        if not self.max_brake_torque > 0:
            raise ValueError("max_brake_torque must be positive")
        if not self.slip_target > 0:
            raise ValueError("slip_target must be positive")
        if not self.filter_time_constant > 0:
            raise ValueError("filter_time_constant must be positive")


def esc_config_from_sections(sections: dict[str, dict[str, str]]) -> EscConfig:
    data = sections.get("esc", {})
    kinds = {f.name: f.type for f in fields(EscConfig)}
    unknown = set(data) - set(kinds)
    if unknown:
        raise ValueError(f"unknown esc keys: {', '.join(sorted(unknown))}")
    values: dict[str, object] = {}
    for key, text in data.items():
        values[key] = kvfile.parse_bool(text) if kinds[key] in (bool, "bool") else float(text)
    return EscConfig(**values)


def dumps_esc_config(config: EscConfig) -> str:
    values = {f.name: getattr(config, f.name) for f in fields(config)}
    values = {k: v if isinstance(v, bool) else float(v) for k, v in values.items()}
    return kvfile.dumps({"esc": values}, header="stability controller configuration")


@dataclass(frozen=True)
class EscDecision:
    sliding: float
    desired_yaw_moment: float
    braked_wheel: Wheel | None
    brake_torque: float
    intervention: bool
    desired_yaw_rate: float = 0.0
    desired_yaw_rate_rate: float = 0.0

    def __post_init__(self) -> None:
        if (self.braked_wheel is None) != (self.brake_torque == 0.0):
            raise ValueError("a brake torque needs exactly one braked wheel")

    def brake_torques(self) -> np.ndarray:
        out = np.zeros(4)
        if self.braked_wheel is not None:
            out[int(self.braked_wheel)] = self.brake_torque
        return out


@dataclass(frozen=True)
class EscMeasurements:
    """What the controller reads each step; per-wheel arrays ordered FL, FR, RL, RR.

    ``normal_loads`` and ``lateral_forces`` stand in for the on-board force
    estimates; ``brake_moment`` is the yaw moment of the previous brake command.
    """

    time: float
    u: float
    yaw_rate: float
    ay: float
    yaw_accel: float
    road_wheel_angle: float
    wheel_speeds: np.ndarray
    normal_loads: np.ndarray
    lateral_forces: np.ndarray
    pressure: np.ndarray
    tread_depth: np.ndarray
    surface_temperature: np.ndarray
    brake_moment: float = 0.0


# -- upper and lower level laws ------------------------------------------------------------


def sliding_surface(gamma: float, gamma_des: float) -> float:
    return gamma - gamma_des


def desired_yaw_moment(params: VehicleParameters, fyf: float, fyr: float, s: float, gamma_des_rate: float,
                       road_wheel_angle: float, config: EscConfig) -> float:
    """Moment that makes ``ds/dt = -eta s`` under ``Iz dgamma/dt = lf Fyf cos(delta) - lr Fyr + Mz``."""
    tire_moment = params.lf * fyf * math.cos(road_wheel_angle) - params.lr * fyr
    return params.yaw_inertia * (gamma_des_rate - config.sliding_gain * s) - tire_moment


_BRAKE_RULES = {
    (1, 1, 1): None,
    (1, 1, -1): Wheel.FRONT_LEFT,
    (1, -1, 1): Wheel.REAR_RIGHT,
    (1, -1, -1): None,
    (-1, 1, 1): None,
    (-1, 1, -1): Wheel.REAR_LEFT,
    (-1, -1, 1): Wheel.FRONT_RIGHT,
    (-1, -1, -1): None,
}


def _sign(x: float) -> int:
    return (x > 0) - (x < 0)


def select_braked_wheel(gamma_des: float, s: float, mz: float) -> Wheel | None:
    """Wheel chosen by the sign pattern; any exact zero means no braking."""
    key = (_sign(gamma_des), _sign(s), _sign(mz))
    if 0 in key:
        return None
    return _BRAKE_RULES[key]


def brake_torque(mz: float, params: VehicleParameters, max_torque: float = math.inf) -> float:
    """Torque magnitude ``|Mz| Rw / (tr / 2)``, clamped to ``max_torque``."""
    return min(abs(mz) * params.wheel_radius / (0.5 * params.track_width), max_torque)


def limit_slip(requested: float, slip_ratio: float, peak_force: float, lateral_force: float,
               params: VehicleParameters, config: EscConfig) -> float:
    """Trim a brake torque to the friction-circle budget and the slip target.

    ``peak_force`` is ``mu Fz``. The longitudinal budget is what the circle
    leaves after the current lateral force; past the slip target the torque is
    scaled back in proportion.
    """
    budget = math.sqrt(max(peak_force * peak_force - lateral_force * lateral_force, 0.0))
    tb = min(abs(requested), budget * params.wheel_radius)
    if abs(slip_ratio) > config.slip_target:
        tb *= config.slip_target / abs(slip_ratio)
    return tb


# -- controller ---------------------------------------------------------------------------------


def _axle_conditions(p, d, t) -> tuple[TireConditions, TireConditions]:
    front = TireConditions(float(np.mean(p[:2])), float(np.mean(d[:2])), float(np.mean(t[:2])))
    rear = TireConditions(float(np.mean(p[2:])), float(np.mean(d[2:])), float(np.mean(t[2:])))
    return front, rear


class EscController:
    """One controller instance per simulated vehicle.

    Holds the derivative filter on the desired yaw rate and, in adaptive mode,
    the reference built from the tire model at the last sensed conditions. The
    fixed reference always uses the tire model at its own reference conditions.
    """

    def __init__(self, params: VehicleParameters, config: EscConfig, tire_model: AdaptedMfCoefficients):
        self.params = params
        self.config = config
        self.tire_model = tire_model
        ref = tire_model.reference
        nominal = TireConditions(ref.pressure, ref.tread_depth, ref.surface_temperature)
        self._fixed = reference_from_tire_model(params, tire_model, nominal, nominal)
        self._fixed_conditions = (nominal, nominal)
        self._adaptive = self._fixed
        self._adaptive_conditions = self._fixed_conditions
        self._filtered: float | None = None
        self.refreshes = 0

    def _needs_refresh(self, front: TireConditions, rear: TireConditions) -> bool:
        cfg = self.config
        for new, old in zip((front, rear), self._adaptive_conditions):
            if (abs(new.pressure - old.pressure) >= cfg.refresh_pressure
                    or abs(new.tread_depth - old.tread_depth) >= cfg.refresh_tread_depth
                    or abs(new.surface_temperature - old.surface_temperature) >= cfg.refresh_temperature):
                return True
        return False

    def reference(self, m: EscMeasurements) -> tuple[BicycleReference, float, tuple[TireConditions, TireConditions]]:
        if not self.config.adaptive_reference:
            return self._fixed[0], self._fixed[1], self._fixed_conditions
        front, rear = _axle_conditions(m.pressure, m.tread_depth, m.surface_temperature)
        if self._needs_refresh(front, rear):
            self._adaptive = reference_from_tire_model(self.params, self.tire_model, front, rear)
            self._adaptive_conditions = (front, rear)
            self.refreshes += 1
        return self._adaptive[0], self._adaptive[1], self._adaptive_conditions

    def step(self, m: EscMeasurements, dt: float) -> EscDecision:
        return esc_step(self, m, dt)


def esc_step(controller: EscController, m: EscMeasurements, dt: float) -> EscDecision:
    """desired yaw rate, dead-band, sliding surface, moment, wheel, torque, slip limit."""
    params, cfg = controller.params, controller.config
    reference, mu, conds = controller.reference(m)
    if not cfg.cap_with_adapted_mu:
        mu = controller._fixed[1]
    gamma_des = desired_yaw_rate(params, reference, max(m.u, 0.1), m.road_wheel_angle, mu)

    # first-order filtered derivative of the desired yaw rate
    if controller._filtered is None:
        controller._filtered = gamma_des
    rate = (gamma_des - controller._filtered) / cfg.filter_time_constant
    controller._filtered += min(dt / cfg.filter_time_constant, 1.0) * (gamma_des - controller._filtered)

    s = sliding_surface(m.yaw_rate, gamma_des)
    if abs(s) <= cfg.dead_band:
        return EscDecision(s, 0.0, None, 0.0, False, gamma_des, rate)

    fyf, fyr = axle_forces_from_measurements(params, m.ay, m.yaw_accel, m.road_wheel_angle, m.brake_moment)
    mz = desired_yaw_moment(params, fyf, fyr, s, rate, m.road_wheel_angle, cfg)
    wheel = select_braked_wheel(gamma_des, s, mz)
    if wheel is None:
        return EscDecision(s, mz, None, 0.0, True, gamma_des, rate)

    i = int(wheel)
    tb = brake_torque(mz, params, cfg.max_brake_torque)
    cond = conds[0] if i < 2 else conds[1]
    fz = float(m.normal_loads[i])
    peak = float(controller.tire_model.peak_friction(cond.tread_depth, cond.surface_temperature, fz)) * fz
    vx = max(m.u, 1.0)
    slip = (m.wheel_speeds[i] * params.wheel_radius - m.u) / vx
    tb = limit_slip(tb, slip, peak, float(m.lateral_forces[i]), params, cfg)
    if tb == 0.0:
        wheel = None
    return EscDecision(s, mz, wheel, tb, True, gamma_des, rate)


def brake_yaw_moment(params: VehicleParameters, wheel: Wheel | None, torque: float) -> float:
    """Nominal yaw moment of a braking force on one wheel, ignoring steer angle."""
    if wheel is None:
        return 0.0
    y = params.wheel_y[int(wheel)]
    return float(y * torque / params.wheel_radius)


def write_decision_log(rows: list[tuple[float, float, EscDecision]], path: str | Path) -> None:
    """``rows`` holds ``(time, yaw rate, decision)`` triples."""
    path = Path(path)
    try:
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(DECISION_CSV_HEADER)
            for t, gamma, d in rows:
                writer.writerow([
                    repr(float(t)), repr(float(gamma)), repr(float(d.desired_yaw_rate)), repr(float(d.sliding)),
                    repr(float(d.desired_yaw_moment)), d.braked_wheel.label if d.braked_wheel is not None else "None",
                    repr(float(d.brake_torque)), int(d.intervention),
                ])
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror}") from exc
