"""Exception types shared across the package."""


class CapacityError(ValueError):
    """Register or grid size exceeds what dense simulation can hold."""


class ShapeError(ValueError):
    """Operands have mutually inconsistent dimensions."""


class DivergenceError(RuntimeError):
    """A model trajectory or optimization produced non-finite values."""


class ConfigValidationError(ValueError):
    """A config file failed validation; carries every violation found."""

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__(
            "invalid config:\n" + "\n".join(f"  - {v}" for v in self.violations)
        )
