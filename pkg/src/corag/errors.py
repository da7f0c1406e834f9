"""Exception hierarchy shared across the package."""

from __future__ import annotations


class CoragError(Exception):
    """Base class for all errors raised by this package."""


class GatewayError(CoragError):
    """A language-model backend call failed."""


class TransportFailure(GatewayError):
    """The backend could not be reached after retrying."""

    def __init__(self, message: str, attempts: int):
        super().__init__(f"{message} (after {attempts} attempt(s))")
        self.attempts = attempts


class CapabilityError(GatewayError):
    """The backend lacks a feature the request depends on."""

    def __init__(self, feature: str, detail: str = ""):
        msg = f"backend does not support {feature}"
        if detail:
            msg += f": {detail}"
        super().__init__(msg)
        self.feature = feature


class RetrievalError(CoragError):
    pass


class DuplicateDocumentError(RetrievalError):
    def __init__(self, doc_id: str, line: int | None = None):
        where = f" at line {line}" if line is not None else ""
        super().__init__(f"duplicate doc_id {doc_id!r}{where}")
        self.doc_id = doc_id
        self.line = line


class ChainError(CoragError):
    pass


class ChainFrozenError(ChainError):
    def __init__(self) -> None:
        super().__init__("chain already has a final answer; no further actions allowed")


class ChainLengthError(ChainError):
    pass


class DegenerateGenerationError(ChainError):
    """Sub-query generation kept repeating an earlier sub-query."""

    def __init__(self, sub_query: str, attempts: int):
        super().__init__(
            f"degenerate generation: sub-query {sub_query!r} repeated after {attempts} attempt(s)"
        )
        self.sub_query = sub_query
        self.attempts = attempts


class DecodeError(CoragError):
    """Every candidate chain of a decode failed."""

    def __init__(self, causes: list[BaseException]):
        joined = "; ".join(f"[{i}] {type(c).__name__}: {c}" for i, c in enumerate(causes))
        super().__init__(f"all {len(causes)} candidate chain(s) failed: {joined}")
        self.causes = causes


class SamplingError(CoragError):
    pass
