"""Synthetic slip-sweep measurements from a known coefficient tree.

Stands in for flat-belt tire test data. The default ground-truth tree is built
so that its sensitivities to pressure, wear and temperature hit prescribed
targets (for a high-performance summer tire: +10 % cornering stiffness for
+20 % pressure at high load, +30 % for 60 % tread loss, -20..-25 % from cold to
hot; +10 % grip for 60 % tread loss, -10 % from cold to hot) and show the
low-load/high-load pressure cross-over.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from ..mf_adapt import AdaptedMfCoefficients, TireConditions
from ..mf_core import magic_formula

CSV_HEADER = (
    "slip_angle_deg",
    "normal_load_n",
    "pressure_kpa",
    "tread_depth_mm",
    "surface_temp_c",
    "lateral_force_n",
)

REFERENCE = TireConditions(pressure=250.0, tread_depth=8.0, surface_temperature=25.0, normal_load=4000.0)
HOT_TEMPERATURE_C = 90.0


class SweepObservation(NamedTuple):
    slip_angle: float  # rad
    normal_load: float
    pressure: float
    tread_depth: float
    surface_temperature: float
    lateral_force: float


def as_array(observations: Sequence[SweepObservation] | np.ndarray) -> np.ndarray:
    arr = np.asarray(observations, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] != 6:
        raise ValueError("observations must have six columns")
    if not np.all(np.isfinite(arr)):
        raise ValueError("observations must be finite")
    if np.any(arr[:, 1] <= 0):
        raise ValueError("normal load must be positive")
    return arr


def from_array(arr: np.ndarray) -> list[SweepObservation]:
    return [SweepObservation(*map(float, row)) for row in arr]


@dataclass(frozen=True)
class SensitivityTargets:
    cs_pressure: float = 0.10  # +20 % pressure, 1.5x nominal load
    cs_tread: float = 0.30  # -60 % tread, nominal load
    cs_temperature: float = -0.225  # cold -> hot
    grip_tread: float = 0.10
    grip_temperature: float = -0.10


@dataclass(frozen=True)
class SweepGrid:
    """Full-factorial condition grid and the noise model for one synthetic data set."""

    pressures_kpa: tuple[float, ...] = (225.0, 250.0, 275.0, 300.0)
    tread_depths_mm: tuple[float, ...] = (8.0, 4.8, 2.4)
    temperatures_c: tuple[float, ...] = (25.0, 57.5, 90.0)
    load_fractions: tuple[float, ...] = (0.33, 0.67, 1.0, 1.33, 1.67)
    slip_angles_deg: tuple[float, ...] = tuple(np.linspace(-15.0, 15.0, 25))
    nominal_load: float = 4000.0
    noise_fraction: float = 0.0
    noise_floor: float = 20.0

    @property
    def size(self) -> int:
        return (
            len(self.pressures_kpa)
            * len(self.tread_depths_mm)
            * len(self.temperatures_c)
            * len(self.load_fractions)
            * len(self.slip_angles_deg)
        )


def tree_from_factors(
    amplitude: float,
    load: float,
    pressure_amp: tuple[float, float],
    pressure_load: float,
    tread_amp: tuple[float, float],
    tread_load: tuple[float, float],
    stiffness_temp: tuple[float, float],
    grip_load: tuple[float, float, float],
    grip_level: tuple[float, float],
    grip_temp: tuple[float, float],
    reference: TireConditions = REFERENCE,
    temperature_span: float = HOT_TEMPERATURE_C - REFERENCE.surface_temperature,
    shape_c: float = 1.3,
    curvature_e: float = -1.0,
) -> AdaptedMfCoefficients:
    """Expand separable pressure x tread factors into the nested coefficient blocks.

    ``pressure_amp`` is (linear, quadratic) in x, ``tread_amp`` and ``tread_load``
    are (linear, quadratic) in y.
    """
    px = np.array([pressure_amp[1], pressure_amp[0], 1.0])
    ty = np.array([tread_amp[1], tread_amp[0], 1.0])
    lx = np.array([pressure_load, 1.0])
    ly = np.array([tread_load[1], tread_load[0], 1.0])
    return AdaptedMfCoefficients(
        stiffness_amplitude=tuple((amplitude * np.outer(px, ty)).ravel()),
        stiffness_load=tuple((load * np.outer(lx, ly)).ravel()),
        stiffness_temperature=(stiffness_temp[1], stiffness_temp[0], 1.0),
        grip_load=grip_load,
        grip_level=grip_level,
        grip_temperature=(grip_temp[1], grip_temp[0], 1.0),
        reference=reference,
        temperature_span=temperature_span,
        shape_c=shape_c,
        curvature_e=curvature_e,
    )


def _shape(r: float) -> float:
    return 2.0 * r / (1.0 + r * r)


def calibrated_tree(targets: SensitivityTargets = SensitivityTargets(), reference: TireConditions = REFERENCE) -> AdaptedMfCoefficients:
    """Ground-truth tree whose sensitivities equal ``targets`` by construction."""
    fn = reference.normal_load
    a0, l0 = 60000.0, fn
    pressure_load, pressure_quad = 1.0, -0.3
    tread_load = (0.25, 0.10)
    tread_quad = 0.20

    # pressure: +20 % at 1.5 Fn
    x = 0.2
    shape_gain = _shape(1.5 * fn / (l0 * (1 + pressure_load * x))) / _shape(1.5 * fn / l0)
    pressure_lin = ((1 + targets.cs_pressure) / shape_gain - 1 - pressure_quad * x * x) / x

    # tread: -60 % at Fn
    y = -0.6
    load_y = 1 + tread_load[0] * y + tread_load[1] * y * y
    shape_gain = _shape(fn / (l0 * load_y)) / _shape(fn / l0)
    tread_lin = ((1 + targets.cs_tread) / shape_gain - 1 - tread_quad * y * y) / y

    # temperature: z = 1 is the hot point
    stiff_quad = 0.025
    stiff_lin = targets.cs_temperature - stiff_quad
    grip_quad = 0.02
    grip_lin = targets.grip_temperature - grip_quad

    # grip: mu(ref, Fn) = 1.10, -60 % tread gives the target increase
    g_load = (0.3e-5, 0.5e-5, -2.5e-5)
    level0 = 1.10 - g_load[2] * fn
    mu_ref = g_load[2] * fn + level0
    sens_y = (g_load[0] * y + g_load[1]) * y + g_load[2]
    level_lin = (mu_ref * (1 + targets.grip_tread) - sens_y * fn - level0) / y

    tree = tree_from_factors(
        amplitude=a0,
        load=l0,
        pressure_amp=(pressure_lin, pressure_quad),
        pressure_load=pressure_load,
        tread_amp=(tread_lin, tread_quad),
        tread_load=tread_load,
        stiffness_temp=(stiff_lin, stiff_quad),
        grip_load=g_load,
        grip_level=(level_lin, level0),
        grip_temp=(grip_lin, grip_quad),
        reference=reference,
    )
    tree.check_box()
    return tree


def random_tree(rng: np.random.Generator, reference: TireConditions = REFERENCE) -> AdaptedMfCoefficients:
    """A random tree that is valid over the whole condition box.

    Starts from random separable factors and perturbs every coefficient
    independently so the blocks are not rank one.
    """
    for _ in range(1000):
        tree = tree_from_factors(
            amplitude=rng.uniform(45000.0, 75000.0),
            load=rng.uniform(3000.0, 5500.0),
            pressure_amp=(rng.uniform(0.0, 0.5), rng.uniform(-0.4, 0.2)),
            pressure_load=rng.uniform(0.3, 1.2),
            tread_amp=(rng.uniform(-0.6, -0.1), rng.uniform(0.0, 0.3)),
            tread_load=(rng.uniform(0.0, 0.4), rng.uniform(-0.1, 0.2)),
            stiffness_temp=(rng.uniform(-0.35, -0.1), rng.uniform(-0.03, 0.06)),
            grip_load=(rng.uniform(-0.5e-5, 0.5e-5), rng.uniform(-0.5e-5, 1.0e-5), rng.uniform(-4e-5, -1e-5)),
            grip_level=(rng.uniform(-0.3, -0.05), rng.uniform(1.0, 1.35)),
            grip_temp=(rng.uniform(-0.2, -0.05), rng.uniform(-0.03, 0.05)),
            reference=reference,
            shape_c=rng.uniform(1.2, 1.5),
            curvature_e=rng.uniform(-1.5, 0.3),
        )
        amp = np.array(tree.stiffness_amplitude)
        ld = np.array(tree.stiffness_load)
        amp = amp + rng.normal(0.0, 0.02, amp.size) * amp[-1]
        ld = ld + rng.normal(0.0, 0.02, ld.size) * ld[-1]
        tree = AdaptedMfCoefficients(
            stiffness_amplitude=tuple(amp),
            stiffness_load=tuple(ld),
            stiffness_temperature=tree.stiffness_temperature,
            grip_load=tree.grip_load,
            grip_level=tree.grip_level,
            grip_temperature=tree.grip_temperature,
            reference=reference,
            temperature_span=tree.temperature_span,
            shape_c=tree.shape_c,
            curvature_e=tree.curvature_e,
        )
        try:
            tree.check_box()
            _check_grip_sign(tree)
        except ValueError:
            continue
        return tree
    raise RuntimeError("could not draw a valid random tree")


def _check_grip_sign(tree: AdaptedMfCoefficients) -> None:
    y = np.linspace(-1.0, 0.5, 31)
    if np.any(tree.grip_load_sensitivity(y) > 0):
        raise ValueError("grip load sensitivity must stay non-positive")
    tree.peak_friction(np.linspace(0.0, 12.0, 13), 25.0, 8000.0)


def model_lateral_force(tree: AdaptedMfCoefficients, arr: np.ndarray) -> np.ndarray:
    """Lateral force of ``tree`` at each row of an observation array (last column ignored)."""
    alpha, fz, p, d, t = arr[:, 0], arr[:, 1], arr[:, 2], arr[:, 3], arr[:, 4]
    bcd = tree.stiffness(p, d, t, fz)
    peak = tree.peak_friction(d, t, fz) * fz
    return magic_formula(alpha, bcd, tree.shape_c, peak, tree.curvature_e, tree.offset_sv)


def synthesize_sweep_data(
    grid: SweepGrid = SweepGrid(),
    seed: int = 42,
    tree: AdaptedMfCoefficients | None = None,
) -> list[SweepObservation]:
    """Full-factorial slip sweeps, ordered pressure, tread, temperature, load, slip."""
    tree = calibrated_tree() if tree is None else tree
    mesh = np.meshgrid(
        np.asarray(grid.pressures_kpa, dtype=np.float64),
        np.asarray(grid.tread_depths_mm, dtype=np.float64),
        np.asarray(grid.temperatures_c, dtype=np.float64),
        np.asarray(grid.load_fractions, dtype=np.float64) * grid.nominal_load,
        np.deg2rad(np.asarray(grid.slip_angles_deg, dtype=np.float64)),
        indexing="ij",
    )
    p, d, t, fz, alpha = (m.ravel() for m in mesh)
    arr = np.column_stack([alpha, fz, p, d, t, np.zeros_like(p)])
    fy = model_lateral_force(tree, arr)
    if grid.noise_fraction > 0:
        rng = np.random.default_rng(seed)
        sigma = grid.noise_fraction * np.abs(fy) + grid.noise_floor
        fy = fy + sigma * rng.standard_normal(fy.size)
    arr[:, 5] = fy
    return from_array(arr)


def sensitivities(tree: AdaptedMfCoefficients, nominal_load: float | None = None) -> dict[str, float]:
    """Relative changes of stiffness and grip for the standard condition steps."""
    ref = tree.reference
    fn = ref.normal_load if nominal_load is None else nominal_load
    p0, d0, t0 = ref.pressure, ref.tread_depth, ref.surface_temperature

    def cs(p=p0, d=d0, t=t0, fz=fn):
        return float(tree.stiffness(p, d, t, fz))

    def mu(d=d0, t=t0, fz=fn):
        return float(tree.peak_friction(d, t, fz))

    dp = 1e-3 * p0
    return {
        "cs_pressure": cs(p=1.2 * p0, fz=1.5 * fn) / cs(fz=1.5 * fn) - 1,
        "cs_pressure_low_load": cs(p=1.2 * p0, fz=0.33 * fn) / cs(fz=0.33 * fn) - 1,
        "cs_tread": cs(d=0.4 * d0) / cs() - 1,
        "cs_temperature": cs(t=HOT_TEMPERATURE_C) / cs(t=t0) - 1,
        "grip_tread": mu(d=0.4 * d0) / mu() - 1,
        "grip_temperature": mu(t=HOT_TEMPERATURE_C) / mu(t=t0) - 1,
        "dcs_dp_low_load": (cs(p=p0 + dp, fz=0.33 * fn) - cs(p=p0 - dp, fz=0.33 * fn)) / (2 * dp),
        "dcs_dp_high_load": (cs(p=p0 + dp, fz=1.5 * fn) - cs(p=p0 - dp, fz=1.5 * fn)) / (2 * dp),
        "mu_reference": mu(),
    }


# -- CSV ---------------------------------------------------------------------


def write_sweep_csv(observations: Iterable[SweepObservation], path: str | Path) -> None:
    path = Path(path)
    try:
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(CSV_HEADER)
            for obs in observations:
                writer.writerow([repr(float(np.rad2deg(obs.slip_angle)))] + [repr(float(v)) for v in obs[1:]])
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror}") from exc


def read_sweep_csv(path: str | Path) -> list[SweepObservation]:
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != CSV_HEADER:
            raise ValueError(f"{path}: expected header {','.join(CSV_HEADER)}")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                values = [float(v) for v in row]
            except ValueError:
                raise ValueError(f"{path}:{lineno}: non-numeric value") from None
            if len(values) != 6:
                raise ValueError(f"{path}:{lineno}: expected 6 columns")
            values[0] = float(np.deg2rad(values[0]))
            rows.append(SweepObservation(*values))
    if rows:
        as_array(rows)  # validates finiteness and loads
    return rows
