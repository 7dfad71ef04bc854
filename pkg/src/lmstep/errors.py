"""Exception types shared across the estimation modules."""


class LmStepError(Exception):
    """Base class for estimation failures."""


class DegenerateLikelihoodError(LmStepError):
    """Every latent state assigns probability zero to some observed occasion."""

    def __init__(self, unit, occasion, message=None):
        self.unit = int(unit)
        self.occasion = int(occasion)
        if message is None:
            message = (f"degenerate likelihood at unit {self.unit}, "
                       f"occasion {self.occasion}: all states have zero emission probability")
        super().__init__(message)


class NumericalError(LmStepError):
    """A numeric quantity left its valid range (non-finite likelihood, ...)."""


class SeparationError(LmStepError):
    """Weighted logit likelihood is unbounded (quasi-separated data)."""


class ConvergenceError(LmStepError):
    """An iterative solver stopped before reaching its tolerance."""

    def __init__(self, message, grad_norm=None):
        self.grad_norm = grad_norm
        super().__init__(message)


class DataFormatError(ValueError):
    """Malformed input file; carries the offending line number when known."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
