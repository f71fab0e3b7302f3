"""Exception hierarchy.

Every error raised on purpose by the toolkit derives from ``ClusterValError``;
the CLI maps these to exit code 1 and a JSON error record.
"""


class ClusterValError(Exception):
    """Base class for domain errors."""

    code = "domain-error"

    def to_dict(self):
        return {"error": self.code, "message": str(self)}


class InvalidDataError(ClusterValError):
    code = "invalid-data"


class ConstantVariableError(InvalidDataError):
    code = "constant-variable"

    def __init__(self, column):
        self.column = column
        super().__init__(f"variable {column!r} has zero variance")


class MismatchedObjectsError(ClusterValError):
    code = "mismatched-objects"


class SchemaMismatchError(ClusterValError):
    code = "schema-mismatch"

    def __init__(self, message, offending=()):
        self.offending = list(offending)
        if self.offending:
            message = f"{message}: {', '.join(map(str, self.offending))}"
        super().__init__(message)


class PartTooSmallError(ClusterValError):
    code = "part-too-small"


class UnsupportedModeError(ClusterValError):
    code = "unsupported-mode"


class InvalidKError(ClusterValError):
    code = "invalid-k"


class InvalidMethodError(ClusterValError):
    code = "invalid-method"


class InsufficientDissimilarityError(ClusterValError):
    code = "insufficient-dissimilarity"


class RuleModeMismatchError(ClusterValError):
    code = "rule-mode-mismatch"


class UndefinedIndexError(ClusterValError):
    code = "undefined-index"


class UndefinedTestError(UndefinedIndexError):
    code = "undefined-test"


class ReplicateFailedError(ClusterValError):
    code = "replicate-failed"


class NoMethodError(ClusterValError):
    code = "no-method"


class SealViolationError(ClusterValError):
    code = "seal-violation"


class MeaninglessCombinationError(ClusterValError):
    code = "meaningless-combination"


class ConfigError(ClusterValError):
    code = "config-error"
