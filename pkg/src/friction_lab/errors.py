"""Exception hierarchy shared by every friction_lab module."""


class FrictionLabError(Exception):
    """Base class for all library errors."""

    kind = "error"


class ParameterError(FrictionLabError, ValueError):
    """An argument is outside its declared range."""

    kind = "parameter"


class DegenerateInputError(ParameterError):
    """Input is structurally valid but carries no usable information (zero norm, empty)."""

    kind = "degenerate_input"


class SizeError(ParameterError):
    """Instance too large for an exhaustive method."""

    kind = "size"


class DivergenceError(FrictionLabError, ArithmeticError):
    """Evaluation hit a pole, e.g. alignment exactly -1 in the friction function."""

    kind = "divergence"

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class UndefinedError(FrictionLabError, ArithmeticError):
    """Quantity undefined for this input (zero total stake, zero denominator)."""

    kind = "undefined"


class NumericError(FrictionLabError, ArithmeticError):
    """Non-finite value produced during an iterative computation."""

    kind = "numeric"

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class TrainingError(NumericError):
    """Learning diverged; ``step`` holds the episode index."""

    kind = "training"


class ErgodicityError(FrictionLabError):
    """Mutation kernel is reducible or periodic."""

    kind = "ergodicity"


class ConvergenceError(FrictionLabError):
    """Iteration budget exhausted before reaching tolerance."""

    kind = "convergence"

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class LumpabilityError(FrictionLabError):
    """Partition fails the lumpability check; ``report`` holds the details."""

    kind = "lumpability"

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class SingularDesignError(FrictionLabError):
    """Regression design matrix is rank deficient."""

    kind = "singular_design"


class GridError(FrictionLabError):
    """Records do not cover a complete factor grid."""

    kind = "grid"

    def __init__(self, message, missing=()):
        super().__init__(message)
        self.missing = list(missing)


class TableError(FrictionLabError):
    """Malformed CSV input; ``row`` is the 1-based line number in the file."""

    kind = "table"

    def __init__(self, message, row=None, path=None):
        super().__init__(message)
        self.row = row
        self.path = path


class ConfigError(FrictionLabError):
    """Run configuration is missing or violates its schema."""

    kind = "config"

    def __init__(self, message, path=None):
        super().__init__(message)
        self.path = path
