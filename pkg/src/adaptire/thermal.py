"""Contact-patch thermal balance and the frictional-power inputs it needs."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .exceptions import StabilityBoundError

GRAVITY = 9.81
TRAINING_CSV_HEADER = (
    "time_s",
    "inner_liner_c",
    "ambient_c",
    "friction_energy_w",
    "velocity_mps",
    "surface_temp_c",
)


@dataclass(frozen=True)
class ThermalParameters:
    heat_capacity: float = 3000.0  # J/K
    conductance: float = 150.0  # W/K, conductivity times contact area
    ambient: float = 25.0  # degC

    def __post_init__(self) -> None:
        if not (self.heat_capacity > 0 and self.conductance > 0):
            raise ValueError("heat capacity and conductance must be positive")
        if not np.isfinite(self.ambient):
            raise ValueError("ambient temperature must be finite")

    @property
    def time_constant(self) -> float:
        return self.heat_capacity / self.conductance


@dataclass(frozen=True)
class SlipKinematics:
    forward_velocity: float  # m/s
    wheel_speed: float  # rad/s
    effective_radius: float  # m
    slip_angle: float  # rad
    long_accel: float = 0.0  # m/s^2
    lat_accel: float = 0.0  # m/s^2
    normal_load: float = 0.0  # N

    def __post_init__(self) -> None:
        if self.forward_velocity < 0:
            raise ValueError("forward velocity must be >= 0")
        if self.effective_radius <= 0:
            raise ValueError("effective radius must be positive")


def slip_velocities(k: SlipKinematics) -> tuple[float, float, float, float]:
    """Longitudinal/lateral sliding velocities and IMU-based force estimates.

    Returns ``(Vsx, Vsy, Fx, Fy)``.
    """
    if abs(k.slip_angle) >= np.pi / 2:
        raise ValueError("|slip angle| must be below pi/2")
    vsx = k.forward_velocity - k.effective_radius * k.wheel_speed
    vsy = k.forward_velocity * np.tan(k.slip_angle)
    fx = k.normal_load * k.long_accel / GRAVITY
    fy = k.normal_load * k.lat_accel / GRAVITY
    return float(vsx), float(vsy), float(fx), float(fy)


def frictional_energy(vsx, vsy, fsx, fsy):
    """Dissipated frictional power ``|Fsx Vsx| + |Fsy Vsy|`` (W)."""
    return np.abs(fsx * vsx) + np.abs(fsy * vsy)


def surface_temperature_step(temperature, params: ThermalParameters, lateral_force, velocity, slip_angle, dt: float):
    """One explicit Euler step of the contact-patch energy balance.

    ``dT/dt = (|Fy V alpha| - lambdaA (T - T0)) / W``; the source uses the
    magnitude because sliding only ever heats the tread.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    if dt > params.time_constant:
        raise StabilityBoundError(f"dt={dt} s exceeds the explicit limit W/(lambda A)={params.time_constant} s")
    source = np.abs(lateral_force * velocity * slip_angle)
    return temperature + dt * (source - params.conductance * (temperature - params.ambient)) / params.heat_capacity


def equilibrium_temperature(params: ThermalParameters, lateral_force, velocity, slip_angle):
    return params.ambient + np.abs(lateral_force * velocity * slip_angle) / params.conductance


def integrate_surface_temperature(t0: float, params: ThermalParameters, lateral_force, velocity, slip_angle,
                                  duration: float, dt: float) -> np.ndarray:
    """Trajectory under constant inputs, including the initial value."""
    n = int(round(duration / dt))
    out = np.empty(n + 1)
    out[0] = t0
    temp = t0
    for i in range(n):
        temp = surface_temperature_step(temp, params, lateral_force, velocity, slip_angle, dt)
        out[i + 1] = temp
    return out


# -- synthetic drive cycles --------------------------------------------------------


@dataclass
class ThermalTrace:
    time: np.ndarray
    inner_liner: np.ndarray
    ambient: np.ndarray
    friction_energy: np.ndarray
    velocity: np.ndarray
    surface: np.ndarray

    def features(self) -> np.ndarray:
        """Rows of ``[inner liner, ambient, frictional power, velocity, previous surface T]``."""
        prev = np.concatenate([[self.surface[0]], self.surface[:-1]])
        return np.column_stack([self.inner_liner, self.ambient, self.friction_energy, self.velocity, prev])


def _smooth_random(rng: np.random.Generator, n: int, lo: float, hi: float, knots: int) -> np.ndarray:
    grid = np.linspace(0.0, 1.0, knots)
    values = rng.uniform(lo, hi, knots)
    return np.interp(np.linspace(0.0, 1.0, n), grid, values)


def simulate_drive_cycle(
    rng: np.random.Generator,
    duration: float = 300.0,
    sample_dt: float = 2.0,
    params: ThermalParameters | None = None,
    normal_load: float = 4000.0,
    ode_dt: float = 0.05,
    liner_time_constant: float = 90.0,
) -> ThermalTrace:
    """A random lap-like drive cycle integrated with the contact-patch ODE.

    The inner liner follows the surface temperature through a slow first-order
    lag; the frictional power seen by the predictor is the lateral sliding
    power ``Fy * V * tan(alpha)`` from the IMU-based force estimate.
    """
    if params is None:
        params = ThermalParameters(ambient=float(rng.uniform(10.0, 35.0)))
    n = int(round(duration / sample_dt)) + 1
    knots = max(4, int(duration / 20.0))
    velocity = _smooth_random(rng, n, 10.0, 50.0, knots)
    lat_accel = _smooth_random(rng, n, -9.0, 9.0, knots)
    slip = np.deg2rad(_smooth_random(rng, n, 0.0, 4.0, knots)) * np.sign(lat_accel)
    t_sample = np.arange(n) * sample_dt
    fy = normal_load * lat_accel / GRAVITY

    steps = int(round(sample_dt / ode_dt))
    surface = np.empty(n)
    liner = np.empty(n)
    temp = params.ambient + rng.uniform(0.0, 10.0)
    inner = temp
    # sample i holds the state after integrating over the interval ending at
    # t_i with the inputs of sample i; sample 0 is the initial state
    for i in range(n):
        if i > 0:
            for _ in range(steps):
                temp = surface_temperature_step(temp, params, fy[i], velocity[i], slip[i], ode_dt)
                inner += ode_dt * (temp - inner) / liner_time_constant
        surface[i] = temp
        liner[i] = inner
    energy = np.abs(fy * velocity * np.tan(slip))
    return ThermalTrace(
        time=t_sample,
        inner_liner=liner,
        ambient=np.full(n, params.ambient),
        friction_energy=energy,
        velocity=velocity,
        surface=surface,
    )


def write_training_csv(traces: list[ThermalTrace], path: str | Path) -> None:
    """Concatenate traces into one CSV; each trace restarts its time column at zero."""
    path = Path(path)
    try:
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(TRAINING_CSV_HEADER)
            for tr in traces:
                cols = (tr.time, tr.inner_liner, tr.ambient, tr.friction_energy, tr.velocity, tr.surface)
                for row in zip(*cols):
                    writer.writerow([repr(float(v)) for v in row])
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror}") from exc


def read_training_csv(path: str | Path) -> list[ThermalTrace]:
    """Read traces back; a new trace starts wherever the time column does not increase."""
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != TRAINING_CSV_HEADER:
            raise ValueError(f"{path}: expected header {','.join(TRAINING_CSV_HEADER)}")
        rows = [[float(v) for v in row] for row in reader if row]
    traces: list[ThermalTrace] = []
    start = 0
    for i in range(1, len(rows) + 1):
        if i == len(rows) or rows[i][0] <= rows[i - 1][0]:
            block = np.asarray(rows[start:i])
            traces.append(ThermalTrace(*(block[:, j].copy() for j in range(6))))
            start = i
    return traces
