"""Condition-adapted cornering stiffness and peak grip.

Cornering stiffness is a nested polynomial in inflation pressure (x) and tread
depth (y), multiplied by a quadratic temperature factor (z)::

    BCD = amp(x, y) * sin(2 * arctan(Fz / load(x, y))) * tstiff(z)
    amp(x, y)  = (a311 y^2 + a312 y + a313) x^2 + (a321 y^2 + ...) x + (a331 y^2 + ...)
    load(x, y) = (a411 y^2 + a412 y + a413) x + (a421 y^2 + a422 y + a423)

and the peak friction coefficient is::

    mu = [(a11 y^2 + a12 y + a13) Fz + (a21 y + a22)] * tgrip(z)

The temperature factor multiplies the whole bracket. The polynomial arguments
are normalised deviations from the reference conditions,
``x = (p - p_ref) / p_ref``, ``y = (d - d_ref) / d_ref`` and
``z = (T - T_ref) / temperature_span``, so all scaling factors equal one at the
reference point when the constant temperature terms are one.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import kvfile
from .exceptions import CoefficientError
from .mf_core import DEFAULT_CURVATURE_E, DEFAULT_SHAPE_C, BaseMfCoefficients, stiffness_load_shape

PRESSURE_RANGE_KPA = (100.0, 450.0)
TREAD_RANGE_MM = (0.0, 12.0)
TEMPERATURE_RANGE_C = (-20.0, 150.0)

STIFFNESS_AMPLITUDE_NAMES = tuple(f"a3{i}{j}" for i in (1, 2, 3) for j in (1, 2, 3))
STIFFNESS_LOAD_NAMES = tuple(f"a4{i}{j}" for i in (1, 2) for j in (1, 2, 3))
TEMPERATURE_NAMES = ("b11", "b12", "b13")
GRIP_LOAD_NAMES = ("a11", "a12", "a13")
GRIP_LEVEL_NAMES = ("a21", "a22")


class ConditionClampWarning(UserWarning):
    """Tire conditions were outside the valid box and have been clamped."""


@dataclass(frozen=True)
class TireConditions:
    pressure: float  # kPa
    tread_depth: float  # mm
    surface_temperature: float  # degC
    normal_load: float = 4000.0  # N

    def __post_init__(self) -> None:
        values = (self.pressure, self.tread_depth, self.surface_temperature, self.normal_load)
        if not all(np.isfinite(v) for v in values):
            raise ValueError("tire conditions must be finite")
        if self.normal_load <= 0:
            raise ValueError("normal load must be positive")

    def in_box(self) -> bool:
        return (
            PRESSURE_RANGE_KPA[0] <= self.pressure <= PRESSURE_RANGE_KPA[1]
            and TREAD_RANGE_MM[0] <= self.tread_depth <= TREAD_RANGE_MM[1]
            and TEMPERATURE_RANGE_C[0] <= self.surface_temperature <= TEMPERATURE_RANGE_C[1]
        )

    def clamped(self) -> TireConditions:
        if self.in_box():
            return self
        warnings.warn(f"clamping out-of-range tire conditions {self}", ConditionClampWarning, stacklevel=3)
        return replace(
            self,
            pressure=float(np.clip(self.pressure, *PRESSURE_RANGE_KPA)),
            tread_depth=float(np.clip(self.tread_depth, *TREAD_RANGE_MM)),
            surface_temperature=float(np.clip(self.surface_temperature, *TEMPERATURE_RANGE_C)),
        )

    def with_load(self, normal_load: float) -> TireConditions:
        return replace(self, normal_load=float(normal_load))


def clamp_arrays(pressure, tread_depth, temperature):
    p = np.asarray(pressure, dtype=np.float64)
    d = np.asarray(tread_depth, dtype=np.float64)
    t = np.asarray(temperature, dtype=np.float64)
    pc = np.clip(p, *PRESSURE_RANGE_KPA)
    dc = np.clip(d, *TREAD_RANGE_MM)
    tc = np.clip(t, *TEMPERATURE_RANGE_C)
    if np.any(pc != p) or np.any(dc != d) or np.any(tc != t):
        warnings.warn("clamping out-of-range tire conditions", ConditionClampWarning, stacklevel=3)
    return pc, dc, tc


@dataclass(frozen=True)
class AdaptedMfCoefficients:
    """The full adaptation tree plus the reference point it is normalised to.

    ``stiffness_amplitude`` is the 3x3 block ``a3ij`` (row i: x^2, x, 1; column j:
    y^2, y, 1), ``stiffness_load`` the 2x3 block ``a4ij`` (row: x, 1). The grip
    branch has ``grip_load`` (a11..a13), ``grip_level`` (a21, a22) and its own
    temperature polynomial.
    """

    stiffness_amplitude: tuple[float, ...]
    stiffness_load: tuple[float, ...]
    stiffness_temperature: tuple[float, float, float]
    grip_load: tuple[float, float, float]
    grip_level: tuple[float, float]
    grip_temperature: tuple[float, float, float]
    reference: TireConditions
    temperature_span: float = 65.0
    shape_c: float = DEFAULT_SHAPE_C
    curvature_e: float = DEFAULT_CURVATURE_E
    offset_sv: float = 0.0

    def __post_init__(self) -> None:
        sizes = {
            "stiffness_amplitude": 9,
            "stiffness_load": 6,
            "stiffness_temperature": 3,
            "grip_load": 3,
            "grip_level": 2,
            "grip_temperature": 3,
        }
        for name, size in sizes.items():
            values = tuple(float(v) for v in getattr(self, name))
            if len(values) != size:
                raise ValueError(f"{name} needs {size} coefficients, got {len(values)}")
            if not all(np.isfinite(values)):
                raise ValueError(f"{name} must be finite")
            object.__setattr__(self, name, values)
        if self.temperature_span <= 0:
            raise ValueError("temperature_span must be positive")

    # -- named access ---------------------------------------------------------

    def named(self) -> dict[str, dict[str, float]]:
        return {
            "stiffness": dict(
                zip(
                    STIFFNESS_AMPLITUDE_NAMES + STIFFNESS_LOAD_NAMES + TEMPERATURE_NAMES,
                    self.stiffness_amplitude + self.stiffness_load + self.stiffness_temperature,
                )
            ),
            "grip": dict(
                zip(
                    GRIP_LOAD_NAMES + GRIP_LEVEL_NAMES + TEMPERATURE_NAMES,
                    self.grip_load + self.grip_level + self.grip_temperature,
                )
            ),
        }

    # -- normalised coordinates -----------------------------------------------

    def normalise(self, pressure, tread_depth, temperature):
        ref = self.reference
        x = (np.asarray(pressure, dtype=np.float64) - ref.pressure) / ref.pressure
        y = (np.asarray(tread_depth, dtype=np.float64) - ref.tread_depth) / ref.tread_depth
        z = (np.asarray(temperature, dtype=np.float64) - ref.surface_temperature) / self.temperature_span
        return x, y, z

    # -- branch evaluations on normalised arguments -----------------------------

    def amplitude(self, x, y):
        a = np.reshape(self.stiffness_amplitude, (3, 3))
        yy = _quad(a, y)
        return yy[0] * x * x + yy[1] * x + yy[2]

    def load_term(self, x, y):
        a = np.reshape(self.stiffness_load, (2, 3))
        yy = _quad(a, y)
        return yy[0] * x + yy[1]

    def stiffness_temperature_factor(self, z):
        b = self.stiffness_temperature
        return (b[0] * z + b[1]) * z + b[2]

    def grip_temperature_factor(self, z):
        b = self.grip_temperature
        return (b[0] * z + b[1]) * z + b[2]

    def grip_load_sensitivity(self, y):
        g = self.grip_load
        return (g[0] * y + g[1]) * y + g[2]

    def grip_level_term(self, y):
        g = self.grip_level
        return g[0] * y + g[1]

    # -- arrays of raw conditions -----------------------------------------------

    def stiffness(self, pressure, tread_depth, temperature, normal_load, clamp: bool = True):
        """Adapted cornering stiffness (N/rad) over broadcastable raw conditions."""
        if clamp:
            pressure, tread_depth, temperature = clamp_arrays(pressure, tread_depth, temperature)
        x, y, z = self.normalise(pressure, tread_depth, temperature)
        load = self.load_term(x, y)
        temp = self.stiffness_temperature_factor(z)
        if np.any(load <= 0):
            raise CoefficientError("cornering stiffness load term is not positive")
        if np.any(temp <= 0):
            raise CoefficientError("cornering stiffness temperature factor is not positive")
        fz = np.asarray(normal_load, dtype=np.float64)
        return self.amplitude(x, y) * stiffness_load_shape(fz, load) * temp

    def peak_friction(self, tread_depth, temperature, normal_load, clamp: bool = True):
        """Adapted peak friction coefficient over broadcastable raw conditions."""
        if clamp:
            _, tread_depth, temperature = clamp_arrays(self.reference.pressure, tread_depth, temperature)
        _, y, z = self.normalise(self.reference.pressure, tread_depth, temperature)
        fz = np.asarray(normal_load, dtype=np.float64)
        mu = (self.grip_load_sensitivity(y) * fz + self.grip_level_term(y)) * self.grip_temperature_factor(z)
        if np.any(mu <= 0):
            raise CoefficientError("adapted peak friction is not positive")
        return mu

    def check_box(self, n: int = 9) -> None:
        """Raise CoefficientError unless every branch is positive on the valid box."""
        p = np.linspace(*PRESSURE_RANGE_KPA, n)
        d = np.linspace(*TREAD_RANGE_MM, n)
        t = np.linspace(*TEMPERATURE_RANGE_C, 2 * n)
        x, y, _ = self.normalise(p[:, None], d[None, :], 0.0)
        if np.any(self.amplitude(x, y) <= 0):
            raise CoefficientError("stiffness amplitude not positive over the valid box")
        if np.any(self.load_term(x, y) <= 0):
            raise CoefficientError("stiffness load term not positive over the valid box")
        _, _, z = self.normalise(0.0, 1.0, t)
        if np.any(self.stiffness_temperature_factor(z) <= 0) or np.any(self.grip_temperature_factor(z) <= 0):
            raise CoefficientError("temperature factor not positive over the valid range")


def _quad(block: np.ndarray, y):
    """Evaluate each row of ``block`` as a quadratic in y (coefficients y^2, y, 1)."""
    y = np.asarray(y, dtype=np.float64)
    return [(row[0] * y + row[1]) * y + row[2] for row in block]


def adapted_cornering_stiffness(coeffs: AdaptedMfCoefficients, cond: TireConditions) -> float:
    cond = cond.clamped()
    return float(coeffs.stiffness(cond.pressure, cond.tread_depth, cond.surface_temperature, cond.normal_load, clamp=False))


def adapted_peak_friction(coeffs: AdaptedMfCoefficients, cond: TireConditions) -> float:
    cond = cond.clamped()
    return float(coeffs.peak_friction(cond.tread_depth, cond.surface_temperature, cond.normal_load, clamp=False))


def to_base_coefficients(coeffs: AdaptedMfCoefficients, cond: TireConditions) -> BaseMfCoefficients:
    """Collapse the tree to the plain MF coefficient set valid at ``cond``.

    The normal load of ``cond`` only enters the validity checks; the returned set
    reproduces the adapted stiffness and grip at every load.
    """
    cond = cond.clamped()
    # run the adapted evaluators for their validity checks
    adapted_cornering_stiffness(coeffs, cond)
    adapted_peak_friction(coeffs, cond)
    x, y, z = coeffs.normalise(cond.pressure, cond.tread_depth, cond.surface_temperature)
    t_stiff = coeffs.stiffness_temperature_factor(z)
    t_grip = coeffs.grip_temperature_factor(z)
    return BaseMfCoefficients(
        a1=float(coeffs.grip_load_sensitivity(y) * t_grip),
        a2=float(coeffs.grip_level_term(y) * t_grip),
        a3=float(coeffs.amplitude(x, y) * t_stiff),
        a4=float(coeffs.load_term(x, y)),
        shape_c=coeffs.shape_c,
        curvature_e=coeffs.curvature_e,
        offset_sv=coeffs.offset_sv,
    )


def from_base(base: BaseMfCoefficients, reference: TireConditions, temperature_span: float = 65.0) -> AdaptedMfCoefficients:
    """A tree with adaptation switched off, reproducing ``base`` everywhere."""
    return AdaptedMfCoefficients(
        stiffness_amplitude=(0, 0, 0, 0, 0, 0, 0, 0, base.a3),
        stiffness_load=(0, 0, 0, 0, 0, base.a4),
        stiffness_temperature=(0.0, 0.0, 1.0),
        grip_load=(0.0, 0.0, base.a1),
        grip_level=(0.0, base.a2),
        grip_temperature=(0.0, 0.0, 1.0),
        reference=reference,
        temperature_span=temperature_span,
        shape_c=base.shape_c,
        curvature_e=base.curvature_e,
        offset_sv=base.offset_sv,
    )


# -- serialisation -----------------------------------------------------------


def dumps_tree(coeffs: AdaptedMfCoefficients) -> str:
    ref = coeffs.reference
    named = coeffs.named()
    sections = {
        "reference": {
            "pressure_kpa": ref.pressure,
            "tread_depth_mm": ref.tread_depth,
            "surface_temp_c": ref.surface_temperature,
            "normal_load_n": ref.normal_load,
            "temperature_span_c": coeffs.temperature_span,
        },
        "stiffness": named["stiffness"],
        "grip": named["grip"],
        "shape": {"shape_c": coeffs.shape_c, "curvature_e": coeffs.curvature_e, "offset_sv": coeffs.offset_sv},
    }
    return kvfile.dumps(sections, header="adapted Magic Formula coefficient tree")


def loads_tree(text: str) -> AdaptedMfCoefficients:
    data = kvfile.loads(text)
    try:
        ref = data["reference"]
        st = {k: float(v) for k, v in data["stiffness"].items()}
        gr = {k: float(v) for k, v in data["grip"].items()}
        shape = {k: float(v) for k, v in data.get("shape", {}).items()}
        return AdaptedMfCoefficients(
            stiffness_amplitude=tuple(st[n] for n in STIFFNESS_AMPLITUDE_NAMES),
            stiffness_load=tuple(st[n] for n in STIFFNESS_LOAD_NAMES),
            stiffness_temperature=tuple(st[n] for n in TEMPERATURE_NAMES),
            grip_load=tuple(gr[n] for n in GRIP_LOAD_NAMES),
            grip_level=tuple(gr[n] for n in GRIP_LEVEL_NAMES),
            grip_temperature=tuple(gr[n] for n in TEMPERATURE_NAMES),
            reference=TireConditions(
                pressure=float(ref["pressure_kpa"]),
                tread_depth=float(ref["tread_depth_mm"]),
                surface_temperature=float(ref["surface_temp_c"]),
                normal_load=float(ref["normal_load_n"]),
            ),
            temperature_span=float(ref.get("temperature_span_c", 65.0)),
            shape_c=shape.get("shape_c", DEFAULT_SHAPE_C),
            curvature_e=shape.get("curvature_e", DEFAULT_CURVATURE_E),
            offset_sv=shape.get("offset_sv", 0.0),
        )
    except KeyError as exc:
        raise ValueError(f"coefficient tree missing entry {exc.args[0]!r}") from None


def save_tree(coeffs: AdaptedMfCoefficients, path: str | Path) -> None:
    Path(path).write_text(dumps_tree(coeffs))


def load_tree(path: str | Path) -> AdaptedMfCoefficients:
    return loads_tree(Path(path).read_text())
