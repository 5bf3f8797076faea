"""Exception types shared across the package."""


class MafigError(Exception):
    """Base class for all package errors."""


class ParseError(MafigError):
    def __init__(self, message: str, line: int = 0, col: int = 0):
        super().__init__(f"{line}:{col}: {message}" if line else message)
        self.message = message
        self.line = line
        self.col = col


class UnresolvedReferenceError(ParseError):
    pass


class BannedConstructError(ParseError):
    pass


class EvalError(MafigError):
    """Runtime failure inside the interpreter (never a crash)."""


class DslTypeError(EvalError):
    pass


class StepBudgetExceeded(EvalError):
    pass


class CapabilityError(EvalError):
    pass


class LibraryError(MafigError):
    pass


class CommitRejected(LibraryError):
    pass


class ScenarioError(MafigError):
    pass


class PerceptionError(MafigError):
    pass


class DecisionError(MafigError):
    pass


class NoApplicableTemplate(DecisionError):
    pass


class SflError(MafigError):
    pass


class IdenticalSequencesError(SflError):
    """diff requested for two equal token sequences."""


class RemoteError(MafigError):
    pass


class RemoteTimeout(RemoteError):
    pass


class RemoteStatusError(RemoteError):
    def __init__(self, status: int, body: str = ""):
        super().__init__(f"remote endpoint returned status {status}")
        self.status = status
        self.body = body


class RemoteMalformedResponse(RemoteError):
    pass
