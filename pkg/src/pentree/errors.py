"""Exception types shared across the engine.

Everything raised on purpose derives from EngineError so callers (CLI,
service) can map failures to exit codes or HTTP statuses in one place.
"""
from __future__ import annotations


class EngineError(Exception):
    """Base class for all errors raised by this package."""


# graph loading and validation

class ParseError(EngineError):
    """The graph document is not syntactically valid."""


class ValidationError(EngineError):
    """The graph document parsed but violates the schema.

    Collects every problem found, not just the first one.
    """

    def __init__(self, problems: list[str]):
        self.problems = list(problems)
        super().__init__("; ".join(problems))


class GraphHashMismatch(EngineError):
    """A session state file references a different graph than the one loaded."""


# task state transitions

class IllegalTransition(EngineError):
    pass


class SecondInProgress(EngineError):
    """Only one task may be in-progress at a time."""


class TaskNotStarted(EngineError):
    """Findings can only be recorded on a task that has been started."""


class UnknownTask(EngineError):
    pass


class NoAnchor(EngineError):
    """No completed task is available to select next tasks from."""


class NotACandidate(EngineError):
    """The requested task is not in the current candidate set."""


class NothingInProgress(EngineError):
    pass


# pipeline

class InvalidTarget(EngineError):
    pass


class WrongPhase(EngineError):
    pass


class WrongMode(EngineError):
    pass


class SelectionUnrecognized(EngineError):
    """The LLM response named no task from the candidate list."""


class NoCandidates(EngineError):
    pass


# llm gateway

class GatewayError(EngineError):
    """Base for provider failures. Carries the query record when one exists."""

    def __init__(self, message: str, record=None):
        super().__init__(message)
        self.record = record


class CredentialMissing(GatewayError):
    pass


class ProviderTimeout(GatewayError):
    pass


class ProviderError(GatewayError):
    def __init__(self, message: str, status_code: int | None = None, record=None):
        super().__init__(message, record)
        self.status_code = status_code


class ScriptExhausted(GatewayError):
    """The scripted provider had no entry matching the prompt."""


class ProviderUnavailable(EngineError):
    """Raised by the runner when a provider call failed mid-chain.

    Carries the step to re-run so an interactive session can resume
    instead of dying.
    """

    def __init__(self, message: str, step=None, cause: Exception | None = None):
        super().__init__(message)
        self.step = step
        self.cause = cause


# session store

class SequenceGap(EngineError):
    pass


class StorageFailure(EngineError):
    pass


class OutOfOrderCheckpoint(EngineError):
    pass


class SessionStillLive(EngineError):
    pass


class EmptyInput(EngineError):
    pass


# fixtures

class FixtureInvalid(EngineError):
    pass
