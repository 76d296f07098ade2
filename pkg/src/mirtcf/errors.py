"""Exception hierarchy. Every error carries a short category ``code`` used by the CLI."""


class MirtError(Exception):
    code = "error"
    exit_status = 1


class InvalidArgumentError(MirtError, ValueError):
    code = "invalid-argument"
    exit_status = 2


class UndefinedDifficultyError(MirtError, ValueError):
    code = "undefined-difficulty"


class UndefinedAUCError(MirtError, ValueError):
    code = "undefined-auc"


class ValidationDegenerateError(UndefinedAUCError):
    code = "validation-degenerate"


class SplitDegenerateError(MirtError, ValueError):
    code = "split-degenerate"
    exit_status = 3


class MaskInfeasibleError(MirtError, ValueError):
    code = "mask-infeasible"
    exit_status = 3


class InvalidDensityError(MirtError, ValueError):
    code = "invalid-density"


class CovarianceError(MirtError, ValueError):
    code = "covariance"


class RankDeficiencyError(MirtError, ValueError):
    code = "rank-deficiency"

    def __init__(self, message, deficient):
        super().__init__(message)
        self.deficient = deficient


class ParseError(MirtError, ValueError):
    code = "parse"
    exit_status = 4

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class EmptyDataError(ParseError):
    code = "empty-data"
