class KgnavError(Exception):
    """Base class for package errors."""


class DataValidationError(KgnavError, ValueError):
    """Input data failed validation (corpus, annotations, questions, snapshots)."""


class NotFoundError(KgnavError, KeyError):
    """An entity or chunk identifier is not present in the graph."""

    def __str__(self):
        return str(self.args[0]) if self.args else "not found"


class GatewayError(KgnavError, RuntimeError):
    """The LLM gateway could not produce a response.

    ``retriable`` errors (network, timeout) count as a failed turn; others
    abort the exploration loop.
    """

    def __init__(self, message: str, retriable: bool = False):
        super().__init__(message)
        self.retriable = retriable
