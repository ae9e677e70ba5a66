"""Exception hierarchy.

Every error raised on purpose by the package derives from
:class:`ForensicBenchError`, so callers (and the CLI exit-code mapping) can
branch on the failure class without string matching.
"""


class ForensicBenchError(Exception):
    """Base class for all package errors."""


class InputError(ForensicBenchError, ValueError):
    """Bad input data or configuration (CLI exit code 2)."""


class EvaluationError(ForensicBenchError):
    """Failure while evaluating predictions (CLI exit code 3)."""


# core / ingest
class InvalidLabel(InputError):
    pass


class EmptyId(InputError):
    pass


class ManifestError(InputError):
    pass


class LayoutMismatch(InputError):
    pass


class DanglingMask(InputError):
    pass


class DomainMismatch(InputError):
    pass


# preprocess
class DimensionMismatch(InputError):
    pass


class NotBlockAligned(InputError):
    pass


class DegenerateKernel(InputError):
    pass


class DeclarationOnly(InputError):
    pass


# metrics
class EmptyInput(InputError):
    pass


class SingleClass(InputError):
    pass


class NoPositives(InputError):
    pass


# protocols
class UnknownProtocol(InputError):
    pass


class EmptyPool(InputError):
    pass


class EmptyMask(InputError):
    pass


class MissingDataset(InputError):
    def __init__(self, name: str):
        super().__init__(f"dataset {name!r} is not available")
        self.name = name


class MissingSplit(InputError):
    def __init__(self, name: str, split: str):
        super().__init__(f"dataset {name!r} has no {split!r} records")
        self.name = name
        self.split = split


# runner
class MissingPrediction(InputError):
    def __init__(self, sample_id: str):
        super().__init__(f"no prediction for sample {sample_id!r}")
        self.sample_id = sample_id


class DuplicatePrediction(InputError):
    def __init__(self, sample_id: str):
        super().__init__(f"sample {sample_id!r} predicted more than once")
        self.sample_id = sample_id


class UnknownPrediction(InputError):
    def __init__(self, sample_id: str):
        super().__init__(f"prediction for {sample_id!r} matches no sample")
        self.sample_id = sample_id


class ScoreOutOfRange(InputError):
    pass


class MissingMask(EvaluationError):
    pass


class ChildExit(EvaluationError):
    def __init__(self, code, detail: str = ""):
        msg = f"model process exited with code {code}"
        super().__init__(f"{msg}: {detail}" if detail else msg)
        self.code = code


class ChildTimeout(EvaluationError):
    def __init__(self, sample_id: str, seconds: float):
        super().__init__(f"no answer for {sample_id!r} within {seconds:g}s")
        self.sample_id = sample_id


class ProtocolViolation(EvaluationError):
    def __init__(self, line_no: int, detail: str):
        super().__init__(f"line {line_no}: {detail}")
        self.line_no = line_no


class GroupEvaluationError(EvaluationError):
    """One or more evaluation groups failed; ``failures`` maps group -> error."""

    def __init__(self, failures: dict):
        self.failures = dict(failures)
        parts = [f"{g}: {e}" for g, e in self.failures.items()]
        super().__init__("evaluation failed for " + "; ".join(parts))


# report
class MissingGroup(InputError):
    pass


class IoFailure(ForensicBenchError, OSError):
    pass


class ConfigError(InputError):
    pass
