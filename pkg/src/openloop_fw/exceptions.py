EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERICAL = 3


class FrankWolfeError(Exception):
    """Base class for every error raised by openloop_fw.

    Extra keyword arguments are kept as attributes so callers can inspect the
    context of a failure (``exc.rank``, ``exc.residual``, ``exc.line``...).
    """

    exit_code = EXIT_USAGE
    default_detail = "Frank-Wolfe error."
    default_code = "error"

    def __init__(self, detail=None, code=None, **context):
        self.detail = detail if detail is not None else self.default_detail
        self.code = code if code is not None else self.default_code
        self.context = context
        for key, value in context.items():
            setattr(self, key, value)
        super().__init__(self.detail)

    def __str__(self):
        if not self.context:
            return str(self.detail)
        extra = ", ".join(f"{key}={value!r}" for key, value in self.context.items())
        return f"{self.detail} ({extra})"


class UsageError(FrankWolfeError):
    exit_code = EXIT_USAGE
    default_detail = "Invalid usage."
    default_code = "usage"


class InvalidParameter(UsageError):
    default_detail = "A parameter is outside its admissible range."
    default_code = "invalid_parameter"


class InvalidSchedule(UsageError):
    default_detail = "The step-size schedule is invalid: g(t) must be finite and at least 2."
    default_code = "invalid_schedule"


class DimensionMismatch(UsageError):
    default_detail = "Operand shapes do not match."
    default_code = "dimension_mismatch"


class ImproperlyConfigured(UsageError):
    default_detail = "The configuration is invalid."
    default_code = "improperly_configured"


class DataError(FrankWolfeError):
    exit_code = EXIT_DATA
    default_detail = "The input data could not be used."
    default_code = "data"


class DatasetNotFound(DataError):
    default_detail = "The dataset file does not exist."
    default_code = "dataset_not_found"


class ParseError(DataError):
    default_detail = "The dataset file could not be parsed."
    default_code = "parse_error"


class ZScoreDegenerate(DataError):
    default_detail = "A column has zero standard deviation and cannot be Z-scored."
    default_code = "zscore_degenerate"


class NumericalError(FrankWolfeError):
    exit_code = EXIT_NUMERICAL
    default_detail = "Numerical failure."
    default_code = "numerical"


class RankDeficiency(NumericalError):
    default_detail = "The design matrix is numerically rank deficient."
    default_code = "rank_deficiency"


class ZeroMatrix(NumericalError):
    default_detail = "The matrix is identically zero; it has no top singular pair."
    default_code = "zero_matrix"


class ConvergenceFailure(NumericalError):
    default_detail = "The iteration did not converge within its budget."
    default_code = "convergence_failure"


class NumericalInconsistency(NumericalError):
    default_detail = "An identity that must hold exactly was violated beyond tolerance."
    default_code = "numerical_inconsistency"


class DegenerateInstance(NumericalError):
    default_detail = "Every sampled point is stationary; nothing can be certified."
    default_code = "degenerate_instance"


class InsufficientData(NumericalError):
    default_detail = "Not enough positive samples in the window to fit a rate."
    default_code = "insufficient_data"
