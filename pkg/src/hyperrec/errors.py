"""Exception hierarchy shared across the engine.

The CLI maps these onto exit codes: InputError -> 2, DomainError -> 3,
InvariantError -> 4.
"""


class EngineError(Exception):
    """Base class for every error raised by this package."""


class InputError(EngineError):
    """Malformed input data or configuration."""


class DomainError(EngineError):
    """A request referenced an unknown entity or an empty domain."""


class InvariantError(EngineError):
    """An internal invariant was violated; indicates a bug."""


class MalformedRow(InputError):
    """A log row failed to parse; carries the 1-based line number."""

    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


class EmptyLog(InputError):
    """The ingested file contained no interactions."""


class ConfigError(InputError):
    """Invalid or unknown configuration key/value."""


class UnknownUser(DomainError):
    """The requested user does not exist in the log."""


class UnknownRule(DomainError):
    """A rule id was referenced that is not in the rule set."""


class NoOccurrences(DomainError):
    """Base-level activation was requested for an item with no history."""


class EmptyCandidates(DomainError):
    """Scoring was requested over an empty candidate set."""


class NoCandidates(DomainError):
    """No candidate items exist for this user (empty history, no eligible rules)."""


class NoTestCases(DomainError):
    """The temporal split produced no qualifying test cases."""
