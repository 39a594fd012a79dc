"""Exception hierarchy.

Every error carries a short ``kind`` tag that the CLI echoes in its
machine-readable error document.
"""


class TFExplainError(Exception):
    kind = "error"


class InvalidArgumentError(TFExplainError, ValueError):
    kind = "invalid-argument"


class UnsupportedConfigurationError(TFExplainError, ValueError):
    kind = "unsupported-configuration"


class ReconstructionContractError(TFExplainError, ValueError):
    kind = "reconstruction-contract"


class GeometryMismatchError(TFExplainError, ValueError):
    kind = "geometry-mismatch"


class FormatError(TFExplainError, ValueError):
    kind = "format-error"


class DatasetNotFoundError(TFExplainError, FileNotFoundError):
    kind = "dataset-not-found"


class TrainingDivergedError(TFExplainError, RuntimeError):
    kind = "training-diverged"


class CoverageError(TFExplainError, RuntimeError):
    kind = "coverage"


class ExternalClassifierError(TFExplainError, RuntimeError):
    kind = "external-classifier"

    def __init__(self, message, stderr=""):
        if stderr:
            message = f"{message}\n--- child stderr ---\n{stderr.rstrip()}"
        super().__init__(message)
        self.stderr = stderr
