"""Open-loop steering maneuvers run on the two-track plant with or without ESC."""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from . import kvfile
from .esc import EscConfig, EscController, EscMeasurements, brake_yaw_moment
from .exceptions import WheelLiftError
from .mf_adapt import AdaptedMfCoefficients, TireConditions
from .thermal import ThermalParameters
from .vehicle import PlantState, VehicleParameters, initial_state, plant_step

SERIES_COLUMNS = (
    "time_s",
    "hand_wheel_deg",
    "road_wheel_rad",
    "yaw_rate",
    "desired_yaw_rate",
    "sideslip_rad",
    "speed_mps",
    "heading_rad",
    "brake_fl",
    "brake_fr",
    "brake_rl",
    "brake_rr",
    "temp_fl",
    "temp_fr",
    "temp_rl",
    "temp_rr",
    "intervention",
)
_STOP_SPEED = 3.0  # m/s, below this the run is frozen

# off-nominal scenario for the adaptive versus fixed comparison: partly worn,
# hot and under-inflated tires on a moderate sine with dwell
COMPARE_CONDITIONS = TireConditions(pressure=200.0, tread_depth=6.0, surface_temperature=90.0)
COMPARE_AMPLITUDE = 90.0


class ManeuverKind(enum.Enum):
    SINE_WITH_DWELL = "SineWithDwell"
    STEP_STEER = "StepSteer"
    STRAIGHT_BRAKE = "StraightBrake"


@dataclass(frozen=True)
class ManeuverSpec:
    """Maneuver definition. Angles are hand-wheel degrees.

    ``hold_duration`` is the steer hold of a step steer and the braking time of
    a straight stop; ``brake_torque`` applies to the straight stop only.
    ``sample_interval`` sets the spacing of the recorded series.
    """

    kind: ManeuverKind = ManeuverKind.SINE_WITH_DWELL
    initial_speed: float = 80.0 / 3.6
    amplitude: float = 120.0
    frequency: float = 0.7
    dwell: float = 0.5
    ramp_start: float = 30.0
    ramp_step: float = 30.0
    ramp_stop: float = 330.0
    post_steer_time: float = 4.0
    dt: float = 0.001
    sample_interval: float = 0.005
    hold_duration: float = 2.0
    brake_torque: float = 600.0
    conditions: TireConditions | None = None

    def __post_init__(self) -> None:
        if not self.frequency > 0:
            raise ValueError("frequency must be positive")
        for name in ("amplitude", "ramp_start", "ramp_stop"):
            if not 0.0 <= getattr(self, name) <= 330.0:
                raise ValueError(f"{name} must lie within [0, 330] deg")
        if not self.ramp_step > 0:
            raise ValueError("ramp_step must be positive")
        if not self.initial_speed > 0:
            raise ValueError("initial_speed must be positive")
        if self.dwell < 0 or self.hold_duration < 0 or self.post_steer_time < 0:
            raise ValueError("durations must be >= 0")
        ratio = self.sample_interval / self.dt
        if not (self.dt > 0 and ratio >= 1 and abs(ratio - round(ratio)) < 1e-9):
            raise ValueError("sample_interval must be a positive multiple of dt")

    @property
    def steer_end(self) -> float:
        if self.kind is ManeuverKind.SINE_WITH_DWELL:
            return 1.0 / self.frequency + self.dwell
        return self.hold_duration

    @property
    def duration(self) -> float:
        return self.steer_end + self.post_steer_time

    def ramp(self) -> list[float]:
        n = int(math.floor((self.ramp_stop - self.ramp_start) / self.ramp_step + 1e-9)) + 1
        return [self.ramp_start + i * self.ramp_step for i in range(max(n, 0))]

    def with_amplitude(self, amplitude: float) -> ManeuverSpec:
        return replace(self, amplitude=float(amplitude))


def sine_with_dwell_profile(spec: ManeuverSpec, t: float) -> float:
    """Hand-wheel angle (deg): one sine cycle with a hold at the negative peak."""
    if t < 0:
        raise ValueError("t must be >= 0")
    a, f, dwell = spec.amplitude, spec.frequency, spec.dwell
    quarter3 = 0.75 / f
    if t < quarter3:
        return a * math.sin(2.0 * math.pi * f * t)
    if t < quarter3 + dwell:
        return -a
    if t < 1.0 / f + dwell:
        return a * math.sin(2.0 * math.pi * f * (t - dwell))
    return 0.0


def hand_wheel_angle(spec: ManeuverSpec, t: float) -> float:
    if spec.kind is ManeuverKind.SINE_WITH_DWELL:
        return sine_with_dwell_profile(spec, t)
    if spec.kind is ManeuverKind.STEP_STEER:
        ramp = 0.1
        if t >= spec.hold_duration:
            return 0.0
        return spec.amplitude * min(t / ramp, 1.0)
    return 0.0


def dumps_maneuver(spec: ManeuverSpec) -> str:
    values: dict[str, object] = {}
    for f in fields(spec):
        value = getattr(spec, f.name)
        if f.name == "conditions":
            continue
        values[f.name] = value.value if isinstance(value, ManeuverKind) else float(value)
    sections: dict[str, dict[str, object]] = {"maneuver": values}
    if spec.conditions is not None:
        c = spec.conditions
        sections["conditions"] = {
            "pressure_kpa": float(c.pressure),
            "tread_depth_mm": float(c.tread_depth),
            "surface_temp_c": float(c.surface_temperature),
        }
    return kvfile.dumps(sections, header="maneuver specification; angles in hand-wheel degrees")


def maneuver_from_sections(sections: dict[str, dict[str, str]]) -> ManeuverSpec:
    data = dict(sections.get("maneuver", {}))
    known = {f.name for f in fields(ManeuverSpec)} - {"conditions"}
    unknown = set(data) - known
    if unknown:
        raise ValueError(f"unknown maneuver keys: {', '.join(sorted(unknown))}")
    values: dict[str, object] = {}
    for key, text in data.items():
        values[key] = ManeuverKind(text.strip()) if key == "kind" else float(text)
    if "conditions" in sections:
        c = sections["conditions"]
        values["conditions"] = TireConditions(
            float(c["pressure_kpa"]), float(c["tread_depth_mm"]), float(c["surface_temp_c"])
        )
    return ManeuverSpec(**values)


def load_maneuver(path: str | Path) -> ManeuverSpec:
    return maneuver_from_sections(kvfile.read(path))


# -- results ---------------------------------------------------------------------------------


@dataclass(frozen=True)
class ManeuverSummary:
    peak_sideslip: float  # rad
    tracking_rms: float  # rad/s
    speed_loss: float  # m/s
    intervention_count: int
    spin_out: bool

    def to_text(self) -> str:
        values = {
            "peak_sideslip_rad": self.peak_sideslip,
            "tracking_rms_rad_s": self.tracking_rms,
            "speed_loss_mps": self.speed_loss,
            "intervention_count": self.intervention_count,
            "spin_out": self.spin_out,
        }
        return kvfile.dumps({"summary": values})


def summarize(series: dict[str, np.ndarray]) -> ManeuverSummary:
    """Summary statistics, computed from the recorded series alone.

    Interventions are counted as rising edges of the intervention flag; spin-out
    compares the last heading (four seconds after the steer ends) with the first.
    """
    n = len(series["time_s"])
    if n == 0:
        return ManeuverSummary(0.0, 0.0, 0.0, 0, False)
    flags = np.asarray(series["intervention"]) > 0
    rising = int(flags[0]) + int(np.count_nonzero(flags[1:] & ~flags[:-1]))
    err = np.asarray(series["yaw_rate"]) - np.asarray(series["desired_yaw_rate"])
    heading = np.asarray(series["heading_rad"])
    return ManeuverSummary(
        peak_sideslip=float(np.max(np.abs(series["sideslip_rad"]))),
        tracking_rms=float(np.sqrt(np.mean(err * err))),
        speed_loss=float(series["speed_mps"][0] - series["speed_mps"][-1]),
        intervention_count=rising,
        spin_out=bool(abs(heading[-1] - heading[0]) > math.pi / 2),
    )


@dataclass
class ManeuverResult:
    series: dict[str, np.ndarray]
    summary: ManeuverSummary
    esc_enabled: bool
    adaptive_reference: bool
    aborted: bool = False
    message: str = ""
    max_friction_usage: float = 0.0  # max over steps and wheels of |F| / (mu Fz)
    final_state: PlantState | None = field(default=None, repr=False)


def _empty_series() -> dict[str, list[float]]:
    return {name: [] for name in SERIES_COLUMNS}


def run_maneuver(spec: ManeuverSpec, params: VehicleParameters, tire_model: AdaptedMfCoefficients,
                 esc_config: EscConfig | None = None, esc_enabled: bool = True,
                 conditions: TireConditions | None = None, thermal: ThermalParameters | None = None,
                 decision_log: list | None = None) -> ManeuverResult:
    """Fixed-step closed-loop simulation of one maneuver.

    The plant always runs the adapted tire model at the true tire conditions;
    the controller's reference depends on ``esc_config.adaptive_reference``.
    Below 3 m/s the vehicle is treated as stopped and the state is held.
    A wheel lift stops the run and returns the partial series flagged as aborted.
    If ``decision_log`` is a list, ``(time, yaw rate, EscDecision)`` triples are
    appended to it at every recorded sample.
    """
    cfg = esc_config or EscConfig()
    conds = conditions or spec.conditions or tire_model.reference
    state = initial_state(params, spec.initial_speed, conds)
    controller = EscController(params, cfg, tire_model)
    n_steps = int(round(spec.duration / spec.dt))
    every = int(round(spec.sample_interval / spec.dt))
    rec = _empty_series()
    brake_moment = 0.0
    usage = 0.0
    aborted, message = False, ""
    stopped = False

    def record(t: float, hw: float, delta: float, gamma_des: float, torques: np.ndarray, active: bool) -> None:
        for key, val in (
            ("time_s", t), ("hand_wheel_deg", hw), ("road_wheel_rad", delta), ("yaw_rate", state.yaw_rate),
            ("desired_yaw_rate", gamma_des), ("sideslip_rad", state.sideslip), ("speed_mps", state.speed),
            ("heading_rad", state.heading), ("intervention", 1.0 if active else 0.0),
        ):
            rec[key].append(float(val))
        for j, suffix in enumerate(("fl", "fr", "rl", "rr")):
            rec[f"brake_{suffix}"].append(float(torques[j]))
            rec[f"temp_{suffix}"].append(float(state.surface_temperature[j]))

    for i in range(n_steps + 1):
        t = i * spec.dt
        hw = hand_wheel_angle(spec, t)
        delta = math.radians(hw) / params.steering_ratio
        torques = np.zeros(4)
        if spec.kind is ManeuverKind.STRAIGHT_BRAKE and t < spec.hold_duration:
            torques[:] = spec.brake_torque
        gamma_des, active = 0.0, False
        if not stopped:
            m = EscMeasurements(
                time=t, u=state.u, yaw_rate=state.yaw_rate, ay=state.ay, yaw_accel=state.yaw_accel,
                road_wheel_angle=delta, wheel_speeds=state.wheel_speeds, normal_loads=state.normal_loads,
                lateral_forces=state.lateral_forces, pressure=state.pressure, tread_depth=state.tread_depth,
                surface_temperature=state.surface_temperature, brake_moment=brake_moment,
            )
            decision = controller.step(m, spec.dt)
            gamma_des = decision.desired_yaw_rate
            if esc_enabled and decision_log is not None and (i % every == 0 or i == n_steps):
                decision_log.append((t, state.yaw_rate, decision))
            if esc_enabled:
                active = decision.intervention
                torques = torques + decision.brake_torques()
                brake_moment = brake_yaw_moment(params, decision.braked_wheel, decision.brake_torque)
        if i % every == 0 or i == n_steps:
            record(t, hw, delta, gamma_des, torques, active)
        if i == n_steps:
            break
        if not stopped:
            try:
                state = plant_step(params, state, delta, torques, tire_model, spec.dt, thermal)
            except WheelLiftError as exc:
                aborted, message = True, str(exc)
                break
            total = np.hypot(state.lateral_forces, state.longitudinal_forces)
            usage = max(usage, float(np.max(total / (state.peak_friction * state.normal_loads))))
            if state.speed < _STOP_SPEED:
                stopped = True

    series = {k: np.asarray(v, dtype=np.float64) for k, v in rec.items()}
    return ManeuverResult(
        series=series,
        summary=summarize(series),
        esc_enabled=esc_enabled,
        adaptive_reference=cfg.adaptive_reference,
        aborted=aborted,
        message=message,
        max_friction_usage=usage,
        final_state=state,
    )


@dataclass
class Comparison:
    adaptive: ManeuverResult
    fixed: ManeuverResult

    @property
    def deltas(self) -> dict[str, float]:
        """Adaptive minus fixed; negative values favour the adaptive controller."""
        a, f = self.adaptive.summary, self.fixed.summary
        return {
            "tracking_rms": a.tracking_rms - f.tracking_rms,
            "peak_sideslip": a.peak_sideslip - f.peak_sideslip,
            "intervention_count": float(a.intervention_count - f.intervention_count),
            "speed_loss": a.speed_loss - f.speed_loss,
        }

    def to_text(self) -> str:
        rows = {}
        for name, res in (("adaptive", self.adaptive), ("fixed", self.fixed)):
            s = res.summary
            rows[name] = {
                "peak_sideslip_rad": s.peak_sideslip,
                "tracking_rms_rad_s": s.tracking_rms,
                "speed_loss_mps": s.speed_loss,
                "intervention_count": s.intervention_count,
                "spin_out": s.spin_out,
            }
        rows["delta_adaptive_minus_fixed"] = dict(self.deltas)
        return kvfile.dumps(rows, header="adaptive versus fixed reference ESC")


def compare_adaptive_vs_fixed(spec: ManeuverSpec, params: VehicleParameters, tire_model: AdaptedMfCoefficients,
                              conditions: TireConditions, esc_config: EscConfig | None = None) -> Comparison:
    """Run both controller variants on the identical plant and tire conditions."""
    cfg = esc_config or EscConfig()
    adaptive = run_maneuver(spec, params, tire_model, replace(cfg, adaptive_reference=True), True, conditions)
    fixed = run_maneuver(spec, params, tire_model, replace(cfg, adaptive_reference=False), True, conditions)
    return Comparison(adaptive=adaptive, fixed=fixed)


def amplitude_ramp(spec: ManeuverSpec, params: VehicleParameters, tire_model: AdaptedMfCoefficients,
                   esc_config: EscConfig | None = None, esc_enabled: bool = False,
                   conditions: TireConditions | None = None) -> list[tuple[float, ManeuverSummary]]:
    return [
        (a, run_maneuver(spec.with_amplitude(a), params, tire_model, esc_config, esc_enabled, conditions).summary)
        for a in spec.ramp()
    ]


# -- export ------------------------------------------------------------------------------------


def export_results(result: ManeuverResult, out_dir: str | Path, stem: str = "maneuver") -> tuple[Path, Path]:
    """Write ``<stem>_series.csv`` and ``<stem>_summary.txt``; returns both paths."""
    out_dir = Path(out_dir)
    series_path = out_dir / f"{stem}_series.csv"
    summary_path = out_dir / f"{stem}_summary.txt"
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        with series_path.open("w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(SERIES_COLUMNS)
            cols = [result.series[name] for name in SERIES_COLUMNS]
            for row in zip(*cols):
                writer.writerow([repr(float(v)) for v in row])
        text = result.summary.to_text()
        extra = {
            "esc_enabled": result.esc_enabled,
            "adaptive_reference": result.adaptive_reference,
            "aborted": result.aborted,
            "max_friction_usage": result.max_friction_usage,
        }
        text += "\n" + kvfile.dumps({"run": extra})
        if result.message:
            text += f"# {result.message}\n"
        summary_path.write_text(text)
    except OSError as exc:
        raise OSError(f"cannot write {exc.filename or out_dir}: {exc.strerror}") from exc
    return series_path, summary_path


def read_series_csv(path: str | Path) -> dict[str, np.ndarray]:
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header) != SERIES_COLUMNS:
            raise ValueError(f"{path}: unexpected series header")
        rows = [[float(v) for v in row] for row in reader if row]
    data = np.asarray(rows, dtype=np.float64).reshape(-1, len(SERIES_COLUMNS))
    return {name: data[:, j].copy() for j, name in enumerate(SERIES_COLUMNS)}
