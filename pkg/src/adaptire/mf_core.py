"""Baseline Magic Formula lateral force model without condition adaptation.

Cornering stiffness follows the classic load shape ``a3 * sin(2 * arctan(Fz / a4))``
and the peak friction coefficient is linear in load, ``mu = a1 * Fz + a2``. The
curve itself is the Pacejka '89 skeleton::

    Fy = D * sin(C * arctan(B*a - E*(B*a - arctan(B*a)))) + Sv

with ``D = mu * Fz`` and ``B = BCD / (C * D)``. Angles are in radians.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import TypeAlias

import numpy as np
import numpy.typing as npt

from .exceptions import CoefficientError

FloatArray: TypeAlias = npt.NDArray[np.float64]
ArrayLike: TypeAlias = float | FloatArray

DEFAULT_SHAPE_C = 1.30
DEFAULT_CURVATURE_E = -1.0


def _finite(name: str, value: ArrayLike) -> FloatArray:
    arr = np.asarray(value, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must be finite")
    return arr


def _out(value: FloatArray, *inputs: ArrayLike) -> ArrayLike:
    if all(np.ndim(x) == 0 for x in inputs):
        return float(value)
    return value


@dataclass(frozen=True)
class BaseMfCoefficients:
    """Coefficients of the unadapted lateral Magic Formula.

    Attributes:
        a1: Load sensitivity of the lateral friction coefficient (1/N), <= 0.
        a2: Nominal lateral friction level (-), > 0.
        a3: Maximum cornering stiffness (N/rad).
        a4: Load at which cornering stiffness peaks (N).
        shape_c: Shape factor C, within [1, 2].
        curvature_e: Curvature factor E, <= 1.
        offset_sv: Vertical shift Sv (N).
    """

    a1: float
    a2: float
    a3: float
    a4: float
    shape_c: float = DEFAULT_SHAPE_C
    curvature_e: float = DEFAULT_CURVATURE_E
    offset_sv: float = 0.0

    def __post_init__(self) -> None:
        for name in ("a1", "a2", "a3", "a4", "shape_c", "curvature_e", "offset_sv"):
            if not np.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if self.a3 <= 0 or self.a4 <= 0:
            raise CoefficientError("a3 and a4 must be positive")
        if self.a2 <= 0:
            raise CoefficientError("a2 must be positive")
        if self.a1 > 0:
            raise CoefficientError("a1 must be <= 0 (friction falls with load)")
        if not 1.0 <= self.shape_c <= 2.0:
            raise CoefficientError(f"shape factor C={self.shape_c} outside [1, 2]")
        if self.curvature_e > 1.0:
            raise CoefficientError(f"curvature factor E={self.curvature_e} exceeds 1")


@dataclass(frozen=True)
class TireForceState:
    slip_angle: float
    normal_load: float

    def __post_init__(self) -> None:
        if not (np.isfinite(self.slip_angle) and np.isfinite(self.normal_load)):
            raise ValueError("tire state must be finite")
        if self.normal_load <= 0:
            raise ValueError("normal load must be positive")
        if abs(self.slip_angle) > np.pi / 2:
            raise ValueError("|slip angle| must not exceed pi/2")


def stiffness_load_shape(normal_load: ArrayLike, load_at_max: ArrayLike) -> ArrayLike:
    """``sin(2 * arctan(Fz / a4))``, written as ``2x / (1 + x**2)``."""
    x = np.asarray(normal_load, dtype=np.float64) / np.asarray(load_at_max, dtype=np.float64)
    return 2.0 * x / (1.0 + x * x)


def cornering_stiffness(coeffs: BaseMfCoefficients, normal_load: ArrayLike) -> ArrayLike:
    fz = _finite("normal_load", normal_load)
    if np.any(fz < 0):
        raise ValueError("normal load must be >= 0")
    return _out(coeffs.a3 * stiffness_load_shape(fz, coeffs.a4), normal_load)


def peak_friction(coeffs: BaseMfCoefficients, normal_load: ArrayLike) -> ArrayLike:
    fz = _finite("normal_load", normal_load)
    if np.any(fz <= 0):
        raise ValueError("normal load must be positive")
    mu = coeffs.a1 * fz + coeffs.a2
    if np.any(mu <= 0):
        raise CoefficientError("peak friction is not positive at this load")
    return _out(mu, normal_load)


def magic_formula(
    slip_angle: ArrayLike,
    stiffness_bcd: ArrayLike,
    shape_c: ArrayLike,
    peak_d: ArrayLike,
    curvature_e: ArrayLike,
    offset_sv: ArrayLike = 0.0,
) -> FloatArray:
    """Evaluate the MF curve from its factors; ``peak_d`` must be nonzero."""
    b = np.asarray(stiffness_bcd) / (np.asarray(shape_c) * np.asarray(peak_d))
    ba = b * np.asarray(slip_angle)
    phi = ba - np.asarray(curvature_e) * (ba - np.arctan(ba))
    return np.asarray(peak_d) * np.sin(np.asarray(shape_c) * np.arctan(phi)) + offset_sv


def lateral_force_array(coeffs: BaseMfCoefficients, slip_angle: ArrayLike, normal_load: ArrayLike) -> ArrayLike:
    """Vectorised lateral force over broadcastable slip angles and loads."""
    alpha = _finite("slip_angle", slip_angle)
    fz = _finite("normal_load", normal_load)
    if np.any(fz <= 0):
        if np.any((fz <= 0) & (alpha != 0)):
            raise CoefficientError("peak force D is zero with nonzero slip")
        raise ValueError("normal load must be positive")
    bcd = coeffs.a3 * stiffness_load_shape(fz, coeffs.a4)
    d = peak_friction(coeffs, fz) * fz
    fy = magic_formula(alpha, bcd, coeffs.shape_c, d, coeffs.curvature_e, coeffs.offset_sv)
    return _out(np.asarray(fy, dtype=np.float64), slip_angle, normal_load)


def lateral_force(coeffs: BaseMfCoefficients, state: TireForceState) -> float:
    return float(lateral_force_array(coeffs, state.slip_angle, state.normal_load))


def slope_at_origin(coeffs: BaseMfCoefficients, normal_load: float, step: float = 1e-7) -> float:
    """Central finite-difference slope of the curve at zero slip."""
    if normal_load == 0:
        return 0.0
    up = lateral_force_array(coeffs, step, normal_load)
    down = lateral_force_array(coeffs, -step, normal_load)
    return float((up - down) / (2.0 * step))


def peak_slip_angle(coeffs: BaseMfCoefficients, normal_load: float, n: int = 20001) -> float:
    """Smallest positive slip angle maximising the curve, found on a dense grid."""
    alpha = np.linspace(0.0, np.pi / 2, n)
    fy = lateral_force_array(coeffs, alpha, normal_load)
    rising = np.diff(fy) > 0
    if rising.all():
        return float(alpha[-1])
    return float(alpha[int(np.argmin(rising))])
