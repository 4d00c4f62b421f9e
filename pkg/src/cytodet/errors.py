"""Exception types shared across the toolkit.

The CLI maps these onto exit codes: usage problems exit 2 (argparse),
any :class:`CytodetError` exits 1, success exits 0.
"""

from __future__ import annotations


class CytodetError(Exception):
    """Base class for all toolkit errors."""


class ParseError(CytodetError):
    """A document could not be parsed at all.

    Carries the position of the failure when the underlying parser
    provides one (JSON line/column, CSV row index).
    """

    def __init__(self, message: str, *, line: int | None = None,
                 column: int | None = None, pos: int | None = None):
        self.line = line
        self.column = column
        self.pos = pos
        where = []
        if line is not None:
            where.append(f"line {line}")
        if column is not None:
            where.append(f"column {column}")
        if pos is not None:
            where.append(f"byte {pos}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)


class ValidationError(CytodetError):
    """A document parsed but violates a structural invariant."""


class ConfigurationError(CytodetError):
    """A config object or flag combination is unusable."""


class EvaluationError(CytodetError):
    """Evaluation cannot proceed (e.g. no class has any ground truth)."""
