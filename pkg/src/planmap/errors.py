"""Exception hierarchy shared by all planmap modules."""


class PlanMapError(Exception):
    """Base class for every error raised by planmap."""


# hint codec
class HintParseError(PlanMapError, ValueError):
    pass


class WrongLength(HintParseError):
    pass


class NonBinaryCharacter(HintParseError):
    pass


class EmptyCandidateSet(PlanMapError, ValueError):
    pass


# plan documents
class SchemaViolation(PlanMapError, ValueError):
    pass


class UnknownOperator(SchemaViolation):
    pass


class ArityViolation(SchemaViolation):
    pass


# embeddings and distances
class DimensionMismatch(PlanMapError, ValueError):
    pass


class EmptyText(PlanMapError, ValueError):
    pass


class RemoteUnavailable(PlanMapError):
    pass


class RemoteSchemaError(PlanMapError):
    pass


# reference store
class EmptyStore(PlanMapError):
    pass


class InvariantViolation(PlanMapError, ValueError):
    pass


class CorruptRecord(PlanMapError):
    def __init__(self, path, line_no: int, reason: str):
        super().__init__(f"{path}:{line_no}: {reason}")
        self.path = path
        self.line_no = line_no
        self.reason = reason


# synthetic engine
class PlanningImpossible(PlanMapError):
    pass


class InvalidParams(PlanMapError, ValueError):
    pass


# search
class SearchAborted(PlanMapError):
    """Planner or executor failed mid-search; ``outcomes`` holds the partial ledger."""

    def __init__(self, message: str, outcomes: dict, cause: BaseException | None = None):
        super().__init__(message)
        self.outcomes = outcomes
        self.cause = cause


class PlannerFailure(SearchAborted):
    pass


class ExecutorFailure(SearchAborted):
    pass


# evaluation
class InvalidFoldCount(PlanMapError, ValueError):
    pass


class DegenerateCovariance(UserWarning):
    pass
