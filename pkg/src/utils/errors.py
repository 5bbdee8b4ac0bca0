"""
Exception hierarchy shared by the numerical modules and the CLI
"""


class MWError(Exception):
    """Base class for all toolkit errors"""


class ShapeMismatchError(MWError, ValueError):
    """Two objects do not share one IndexShape"""


class DegeneratePairError(MWError, ValueError):
    """A pair of points has some group with x_n = y_n"""


class OrderError(MWError, ValueError):
    """Box corners violate a ⪯ b"""


class OutsideTileError(MWError, ValueError):
    """A point lies outside the tile T"""


class UnsupportedDifferentiationError(MWError, ValueError):
    """A mixed partial cannot be computed to double precision"""


class ConfigurationError(MWError, ValueError):
    """Experiment configuration is malformed"""


class BudgetExceededError(MWError, RuntimeError):
    """A computation would exceed its configured size budget"""

    def __init__(self, what: str, requested: int, allowed: int):
        self.what = what
        self.requested = requested
        self.allowed = allowed
        super().__init__(f"{what}: {requested} exceeds budget {allowed}")


class ZeroMeasureTileError(MWError, ValueError):
    """An average over T was requested but mu(T) = 0"""
