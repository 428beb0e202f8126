"""Exception types shared across the package."""


class RejectedInput(ValueError):
    """An argument violates an operation's preconditions."""


class InfeasibleError(ValueError):
    """A request cannot be satisfied (e.g. more permutations than exist)."""


class ParseError(ValueError):
    """A file could not be decoded."""


class ValidationError(ValueError):
    """A file decoded fine but its contents break an invariant."""


class NonFiniteGradient(FloatingPointError):
    def __init__(self, tensor: str, step: int):
        super().__init__(f"non-finite gradient in tensor {tensor!r} at update {step}")
        self.tensor = tensor
        self.step = step


class ConfigError(ValueError):
    """Run configuration rejected before any compute; carries every violation."""

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("invalid configuration:\n  - " + "\n  - ".join(self.violations))
