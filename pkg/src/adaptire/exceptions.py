class AdaptireError(Exception):
    """Base class for errors raised by this package."""


class CoefficientError(AdaptireError, ValueError):
    """Coefficients produce a physically invalid value at the requested point."""


class FitError(AdaptireError, RuntimeError):
    """A least-squares problem could not be set up or solved."""


class UnderSampledError(FitError):
    """Observations do not span enough levels of one condition axis."""

    def __init__(self, axis: str, found: int, needed: int):
        self.axis = axis
        self.found = found
        self.needed = needed
        super().__init__(f"{axis} axis under-sampled: {found} distinct levels, need >= {needed}")


class TrainingDivergedError(AdaptireError, RuntimeError):
    def __init__(self, epoch: int):
        self.epoch = epoch
        super().__init__(f"training loss became non-finite at epoch {epoch}")


class StabilityBoundError(AdaptireError, ValueError):
    """An explicit integration step exceeds its stability limit."""


class WheelLiftError(AdaptireError, RuntimeError):
    def __init__(self, wheel: str, load: float, time: float | None = None):
        self.wheel = wheel
        self.load = load
        self.time = time
        when = "" if time is None else f" at t={time:.3f} s"
        super().__init__(f"wheel lift on {wheel}{when}: vertical load {load:.1f} N")
