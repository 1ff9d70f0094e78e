"""Planar two-track plant, linear bicycle reference and on-line stiffness estimation.

Frame convention: x forward, y to the right, yaw positive clockwise seen from
above (z down). A positive road-wheel angle steers right and produces a
positive yaw rate. Left wheels sit at ``y = -tr/2``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, fields, replace
from pathlib import Path

import numpy as np

from . import kvfile
from .exceptions import WheelLiftError
from .mf_adapt import AdaptedMfCoefficients, TireConditions
from .mf_core import magic_formula
from .thermal import GRAVITY, ThermalParameters, surface_temperature_step


class Wheel(enum.IntEnum):
    FRONT_LEFT = 0
    FRONT_RIGHT = 1
    REAR_LEFT = 2
    REAR_RIGHT = 3

    @property
    def label(self) -> str:
        return {0: "FrontLeft", 1: "FrontRight", 2: "RearLeft", 3: "RearRight"}[int(self)]


@dataclass(frozen=True)
class VehicleParameters:
    """Geometry and inertia of the simulated car.

    The defaults describe a generic mid-size sedan; they are placeholders for
    simulation, not measured data. Static axle loads follow from the mass and
    COG position so the static balance holds by construction.
    """

    mass: float = 1500.0  # kg
    yaw_inertia: float = 2500.0  # kg m^2
    lf: float = 1.2  # m, COG to front axle
    lr: float = 1.5  # m, COG to rear axle
    track_width: float = 1.5  # m
    cog_height: float = 0.5  # m
    wheel_radius: float = 0.3  # m
    wheel_inertia: float = 1.2  # kg m^2 per wheel
    steering_ratio: float = 16.0
    drag_coefficient: float = 0.4  # N/(m/s)^2, aerodynamic drag
    front_roll_share: float = 0.8  # fraction of lateral load transfer taken by the front axle
    slip_stiffness_ratio: float = 15.0  # longitudinal slip stiffness per newton of load

    def __post_init__(self) -> None:
        for f in fields(self):
            value = getattr(self, f.name)
            if not math.isfinite(value):
                raise ValueError(f"{f.name} must be finite")
            if f.name == "drag_coefficient":
                if value < 0:
                    raise ValueError("drag_coefficient must be >= 0")
            elif f.name == "front_roll_share":
                if not 0.0 <= value <= 1.0:
                    raise ValueError("front_roll_share must lie in [0, 1]")
            elif value <= 0:
                raise ValueError(f"{f.name} must be positive")

    @property
    def wheelbase(self) -> float:
        return self.lf + self.lr

    @property
    def front_static_load(self) -> float:
        return self.mass * GRAVITY * self.lr / self.wheelbase

    @property
    def rear_static_load(self) -> float:
        return self.mass * GRAVITY * self.lf / self.wheelbase

    @property
    def wheel_x(self) -> np.ndarray:
        return np.array([self.lf, self.lf, -self.lr, -self.lr])

    @property
    def wheel_y(self) -> np.ndarray:
        half = 0.5 * self.track_width
        return np.array([-half, half, -half, half])

    def static_wheel_loads(self) -> np.ndarray:
        f, r = 0.5 * self.front_static_load, 0.5 * self.rear_static_load
        return np.array([f, f, r, r])


def dumps_vehicle(params: VehicleParameters) -> str:
    values: dict[str, object] = {f.name: float(getattr(params, f.name)) for f in fields(params)}
    return kvfile.dumps({"vehicle": values}, header="vehicle parameters (SI units); placeholder sedan defaults")


def vehicle_from_sections(sections: dict[str, dict[str, str]]) -> VehicleParameters:
    data = sections.get("vehicle", {})
    known = {f.name for f in fields(VehicleParameters)}
    unknown = set(data) - known
    if unknown:
        raise ValueError(f"unknown vehicle keys: {', '.join(sorted(unknown))}")
    return VehicleParameters(**{k: float(v) for k, v in data.items()})


def loads_vehicle(text: str) -> VehicleParameters:
    return vehicle_from_sections(kvfile.loads(text))


def save_vehicle(params: VehicleParameters, path: str | Path) -> None:
    Path(path).write_text(dumps_vehicle(params))


def load_vehicle(path: str | Path) -> VehicleParameters:
    return vehicle_from_sections(kvfile.read(path))


# -- linear reference -----------------------------------------------------------------


@dataclass(frozen=True)
class BicycleReference:
    """Axle cornering stiffnesses and the handling numbers derived from them.

    ``characteristic_speed`` is infinite for a neutral or oversteering car.
    """

    front_stiffness: float  # N/rad, both front tires
    rear_stiffness: float  # N/rad, both rear tires
    understeer: float
    characteristic_speed: float

    @classmethod
    def from_stiffness(cls, params: VehicleParameters, cf: float, cr: float) -> BicycleReference:
        kus = understeer_gradient(params, cf, cr)
        uch = math.sqrt(params.wheelbase * GRAVITY / kus) if kus > 0 else math.inf
        return cls(float(cf), float(cr), kus, uch)


def understeer_gradient(params: VehicleParameters, cf: float, cr: float) -> float:
    if not (cf > 0 and cr > 0):
        raise ValueError("cornering stiffnesses must be positive")
    return float(params.front_static_load / cf - params.rear_static_load / cr)


def desired_yaw_rate(params: VehicleParameters, reference: BicycleReference, u: float,
                     road_wheel_angle: float, mu: float) -> float:
    """Steady-state bicycle yaw rate, limited in magnitude to ``mu g / u``.

    Written as ``u delta / (L + Kus u^2 / g)``, which equals the
    characteristic-speed form for an understeering car and stays defined for
    any sign of ``Kus``. Past the critical speed of an oversteering car the
    limit applies directly.
    """
    if not u > 0:
        raise ValueError("forward speed must be positive")
    cap = abs(mu) * GRAVITY / u
    if road_wheel_angle == 0:
        return 0.0
    denom = params.wheelbase + reference.understeer * u * u / GRAVITY
    sign = math.copysign(1.0, road_wheel_angle)
    if denom <= 0:
        return sign * cap
    return sign * min(abs(u * road_wheel_angle / denom), cap)


def axle_forces_from_measurements(params: VehicleParameters, ay: float, yaw_accel: float,
                                  road_wheel_angle: float, brake_moment: float = 0.0) -> tuple[float, float]:
    """Invert the 2-DOF handling model for the axle lateral forces.

    Solves ``m ay = Fyf cos(delta) + Fyr`` and
    ``Iz yaw_accel = lf Fyf cos(delta) - lr Fyr + brake_moment``.
    """
    c = math.cos(road_wheel_angle)
    if abs(c) * params.wheelbase < 1e-9:
        raise ValueError("axle force inversion is singular at this steering angle")
    tire_moment = params.yaw_inertia * yaw_accel - brake_moment
    m_ay = params.mass * ay
    fyf_cos = (m_ay * params.lr + tire_moment) / params.wheelbase
    fyr = (m_ay * params.lf - tire_moment) / params.wheelbase
    return fyf_cos / c, fyr


def reference_from_tire_model(params: VehicleParameters, tree: AdaptedMfCoefficients,
                              front: TireConditions, rear: TireConditions) -> tuple[BicycleReference, float]:
    """Axle stiffness (two tires per axle at static load) and the mean peak friction."""
    f_load = 0.5 * params.front_static_load
    r_load = 0.5 * params.rear_static_load
    cf = 2.0 * float(tree.stiffness(front.pressure, front.tread_depth, front.surface_temperature, f_load))
    cr = 2.0 * float(tree.stiffness(rear.pressure, rear.tread_depth, rear.surface_temperature, r_load))
    mu_f = float(tree.peak_friction(front.tread_depth, front.surface_temperature, f_load))
    mu_r = float(tree.peak_friction(rear.tread_depth, rear.surface_temperature, r_load))
    return BicycleReference.from_stiffness(params, cf, cr), 0.5 * (mu_f + mu_r)


# -- two-track plant --------------------------------------------------------------------


@dataclass(frozen=True)
class PlantState:
    """Integrated plant state plus the per-wheel quantities of the last step.

    Per-wheel arrays are ordered FL, FR, RL, RR. ``ax``/``ay`` are body-frame
    accelerations of the COG from the last step and drive the load transfer of
    the next one.
    """

    u: float
    v: float = 0.0
    yaw_rate: float = 0.0
    heading: float = 0.0
    x: float = 0.0
    y: float = 0.0
    wheel_speeds: np.ndarray | None = None
    pressure: np.ndarray | None = None
    tread_depth: np.ndarray | None = None
    surface_temperature: np.ndarray | None = None
    time: float = 0.0
    ax: float = 0.0
    ay: float = 0.0
    yaw_accel: float = 0.0
    normal_loads: np.ndarray | None = None
    lateral_forces: np.ndarray | None = None
    longitudinal_forces: np.ndarray | None = None
    slip_angles: np.ndarray | None = None
    slip_ratios: np.ndarray | None = None
    peak_friction: np.ndarray | None = None

    @property
    def sideslip(self) -> float:
        return math.atan2(self.v, self.u)

    @property
    def speed(self) -> float:
        return math.hypot(self.u, self.v)

    def tire_conditions(self) -> list[TireConditions]:
        return [
            TireConditions(float(p), float(d), float(t), float(fz))
            for p, d, t, fz in zip(self.pressure, self.tread_depth, self.surface_temperature, self.normal_loads)
        ]

    def validate(self) -> None:
        scalars = (self.u, self.v, self.yaw_rate, self.heading, self.x, self.y, self.ax, self.ay, self.yaw_accel)
        if not all(math.isfinite(s) for s in scalars):
            raise ValueError("plant state is not finite")
        for name in ("wheel_speeds", "pressure", "tread_depth", "surface_temperature"):
            arr = getattr(self, name)
            if arr is None or np.shape(arr) != (4,) or not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} must be four finite values")


def initial_state(params: VehicleParameters, speed: float, conditions: TireConditions | list[TireConditions]) -> PlantState:
    """Straight running at ``speed`` with free-rolling wheels."""
    if not speed > 0:
        raise ValueError("initial speed must be positive")
    conds = [conditions] * 4 if isinstance(conditions, TireConditions) else list(conditions)
    if len(conds) != 4:
        raise ValueError("need one TireConditions per wheel")
    loads = params.static_wheel_loads()
    return PlantState(
        u=float(speed),
        wheel_speeds=np.full(4, speed / params.wheel_radius),
        pressure=np.array([c.pressure for c in conds], dtype=np.float64),
        tread_depth=np.array([c.tread_depth for c in conds], dtype=np.float64),
        surface_temperature=np.array([c.surface_temperature for c in conds], dtype=np.float64),
        normal_loads=loads,
        lateral_forces=np.zeros(4),
        longitudinal_forces=np.zeros(4),
        slip_angles=np.zeros(4),
        slip_ratios=np.zeros(4),
        peak_friction=np.zeros(4),
    )


def wheel_loads(params: VehicleParameters, ax: float, ay: float) -> np.ndarray:
    """Vertical loads with steady-state longitudinal and lateral transfer; sums to ``m g``."""
    m_h = params.mass * params.cog_height
    d_long = m_h * ax / params.wheelbase  # braking (ax < 0) loads the front
    d_lat = m_h * ay / params.track_width  # right-hand acceleration loads the left side
    d_front = params.front_roll_share * d_lat
    d_rear = d_lat - d_front
    f = 0.5 * (params.front_static_load - d_long)
    r = 0.5 * (params.rear_static_load + d_long)
    return np.array([f + 0.5 * d_front, f - 0.5 * d_front, r + 0.5 * d_rear, r - 0.5 * d_rear])


MAX_PLANT_STEP = 0.002
_MIN_SLIP_SPEED = 1.0  # m/s, floor on the longitudinal slip denominator


def plant_step(params: VehicleParameters, state: PlantState, road_wheel_angle: float, brake_torques,
               tire_model: AdaptedMfCoefficients, dt: float, thermal: ThermalParameters | None = None) -> PlantState:
    """Advance the two-track model by one explicit step.

    Lateral tire forces come from the adapted Magic Formula at each wheel's
    pressure, tread, surface temperature and current load. Longitudinal force
    comes from a linear slip stiffness saturated at ``mu Fz``; the lateral force
    is then scaled by ``sqrt(1 - (Fx / (mu Fz))^2)`` so every wheel stays inside
    its friction circle. Wheel spin relaxes exactly towards its quasi-static
    slip so the stiff rolling dynamics need no sub-stepping.

    Raises:
        WheelLiftError: a wheel's vertical load is not positive.
    """
    if not 0.0 < dt <= MAX_PLANT_STEP:
        raise ValueError(f"dt must lie in (0, {MAX_PLANT_STEP}] s")
    thermal = thermal or ThermalParameters()
    tb = np.abs(np.asarray(brake_torques, dtype=np.float64))
    if tb.shape != (4,) or not np.all(np.isfinite(tb)):
        raise ValueError("need four finite brake torques")

    fz = wheel_loads(params, state.ax, state.ay)
    low = np.flatnonzero(fz <= 0)
    if low.size:
        raise WheelLiftError(Wheel(int(low[0])).label, float(fz[low[0]]), state.time)

    wx, wy = params.wheel_x, params.wheel_y
    u, v, r = state.u, state.v, state.yaw_rate
    steer = np.array([road_wheel_angle, road_wheel_angle, 0.0, 0.0])
    cs, sn = np.cos(steer), np.sin(steer)
    vx_b = u - r * wy
    vy_b = v + r * wx
    vx = vx_b * cs + vy_b * sn  # wheel-frame velocities
    vy = -vx_b * sn + vy_b * cs
    alpha = -np.arctan2(vy, np.abs(vx))

    mu = tire_model.peak_friction(state.tread_depth, state.surface_temperature, fz)
    bcd = tire_model.stiffness(state.pressure, state.tread_depth, state.surface_temperature, fz)
    cap = mu * fz
    fy0 = magic_formula(alpha, bcd, tire_model.shape_c, cap, tire_model.curvature_e, 0.0)

    rw = params.wheel_radius
    denom = np.maximum(np.abs(vx), _MIN_SLIP_SPEED)
    c_slip = params.slip_stiffness_ratio * fz
    omega = state.wheel_speeds
    kappa = (omega * rw - vx) / denom
    fx = np.clip(c_slip * kappa, -cap, cap)
    fy = fy0 * np.sqrt(np.maximum(1.0 - (fx / cap) ** 2, 0.0))

    # wheel spin: Iw dw/dt = -Tb sign(vx) - Fx rw
    direction = np.where(vx >= 0, 1.0, -1.0)
    unsaturated = tb <= cap * rw
    omega_star = (vx - direction * tb * denom / (c_slip * rw)) / rw
    rate = c_slip * rw * rw / (params.wheel_inertia * denom)
    relaxed = omega_star + (omega - omega_star) * np.exp(-rate * dt)
    locking = omega - direction * dt * (tb - cap * rw) / params.wheel_inertia
    locking = np.where(direction > 0, np.maximum(locking, 0.0), np.minimum(locking, 0.0))
    new_omega = np.where(unsaturated, relaxed, locking)

    fx_b = fx * cs - fy * sn
    fy_b = fx * sn + fy * cs
    drag = params.drag_coefficient * u * abs(u)
    sum_fx = float(fx_b.sum()) - drag
    sum_fy = float(fy_b.sum())
    mz = float(np.sum(wx * fy_b - wy * fx_b))
    ax = sum_fx / params.mass
    ay = sum_fy / params.mass
    yaw_accel = mz / params.yaw_inertia

    psi = state.heading
    new_temp = surface_temperature_step(state.surface_temperature, thermal, fy, np.abs(vx), alpha, dt)
    return replace(
        state,
        u=u + dt * (ax + v * r),
        v=v + dt * (ay - u * r),
        yaw_rate=r + dt * yaw_accel,
        heading=psi + dt * r,
        x=state.x + dt * (u * math.cos(psi) - v * math.sin(psi)),
        y=state.y + dt * (u * math.sin(psi) + v * math.cos(psi)),
        wheel_speeds=new_omega,
        surface_temperature=new_temp,
        time=state.time + dt,
        ax=ax,
        ay=ay,
        yaw_accel=yaw_accel,
        normal_loads=fz,
        lateral_forces=fy,
        longitudinal_forces=fx,
        slip_angles=alpha,
        slip_ratios=kappa,
        peak_friction=mu,
    )


# -- cornering stiffness estimation ------------------------------------------------------


class CorneringStiffnessEstimator:
    """Recursive least squares on the sideslip-free bicycle relation.

    Subtracting the rear slip angle from the front one removes the unmeasured
    body sideslip::

        delta - L * yaw_rate / u = Fyf / Cf - Fyr / Cr

    so with axle forces from :func:`axle_forces_from_measurements` the model is
    linear in ``(1/Cf, 1/Cr)``. Parameters are tracked relative to the prior to
    keep the covariance well scaled. Samples with ``|delta|`` below the
    excitation threshold are skipped, which leaves the prior untouched on
    straight running.
    """

    def __init__(self, params: VehicleParameters, cf0: float, cr0: float, forgetting: float = 0.995,
                 excitation_threshold: float = math.radians(0.5), initial_variance: float = 1.0):
        if not (cf0 > 0 and cr0 > 0):
            raise ValueError("prior stiffnesses must be positive")
        if not 0.0 < forgetting <= 1.0:
            raise ValueError("forgetting factor must lie in (0, 1]")
        self.params = params
        self.forgetting = forgetting
        self.excitation_threshold = excitation_threshold
        self._scale = np.array([1.0 / cf0, 1.0 / cr0])
        self._theta = np.ones(2)
        self._cov = np.eye(2) * initial_variance
        self.updates = 0

    @property
    def stiffness(self) -> tuple[float, float]:
        inv = self._theta * self._scale
        return float(1.0 / inv[0]), float(1.0 / inv[1])

    @property
    def confidence(self) -> float:
        """Covariance trace of the relative parameters; smaller is more certain."""
        return float(np.trace(self._cov))

    def update(self, u: float, yaw_rate: float, ay: float, yaw_accel: float, road_wheel_angle: float,
               brake_moment: float = 0.0) -> bool:
        if abs(road_wheel_angle) <= self.excitation_threshold or u <= _MIN_SLIP_SPEED:
            return False
        fyf, fyr = axle_forces_from_measurements(self.params, ay, yaw_accel, road_wheel_angle, brake_moment)
        phi = np.array([fyf, -fyr]) * self._scale
        target = road_wheel_angle - self.params.wheelbase * yaw_rate / u
        p_phi = self._cov @ phi
        gain = p_phi / (self.forgetting + phi @ p_phi)
        self._theta = self._theta + gain * (target - phi @ self._theta)
        self._cov = (self._cov - np.outer(gain, p_phi)) / self.forgetting
        self.updates += 1
        return True


def estimate_cornering_stiffness(params: VehicleParameters, time, ay, yaw_rate, u, road_wheel_angle,
                                 prior: tuple[float, float], yaw_accel=None, **kwargs) -> tuple[float, float, float]:
    """Run the estimator over a recorded history; returns ``(Cf, Cr, covariance trace)``."""
    time = np.asarray(time, dtype=np.float64)
    if time.size < 2 or time[-1] - time[0] < 2.0:
        raise ValueError("history must span at least 2 s")
    series = [np.asarray(s, dtype=np.float64) for s in (ay, yaw_rate, u, road_wheel_angle)]
    if any(s.shape != time.shape for s in series):
        raise ValueError("all series must share the time base")
    ay, yaw_rate, u, delta = series
    accel = np.gradient(yaw_rate, time) if yaw_accel is None else np.asarray(yaw_accel, dtype=np.float64)
    est = CorneringStiffnessEstimator(params, prior[0], prior[1], **kwargs)
    for i in range(time.size):
        est.update(u[i], yaw_rate[i], ay[i], accel[i], delta[i])
    cf, cr = est.stiffness
    return cf, cr, est.confidence
