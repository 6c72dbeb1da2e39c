"""
errors.py

Purpose
- One exception hierarchy for the package.
- The CLI maps each family to an exit code (see the EXIT_* constants in cli); library code
  only raises.
"""
from __future__ import annotations

from typing import Any, List, Optional


class NsKgeError(Exception):
    """Base class for every error raised by nskge."""


class DimensionError(NsKgeError, ValueError):
    """Operands whose shapes do not line up."""


class ConfigError(NsKgeError, ValueError):
    """Invalid configuration value or flag combination."""


class GuardError(NsKgeError):
    """An oracle was asked to run above its size guard."""


class DataError(NsKgeError):
    """Malformed or inconsistent dataset / checkpoint input.

    `path` and `line` locate the problem when known; the message is rendered
    as `path:line: reason`.
    """

    def __init__(self, reason: str, path: Optional[Any] = None, line: Optional[int] = None) -> None:
        self.reason = reason
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}:{line}: " if line is not None else f"{path}: "
        super().__init__(f"{where}{reason}")


class NumericError(NsKgeError, ArithmeticError):
    """A non-finite value showed up in a loss, gradient or parameter table."""

    def __init__(
        self,
        reason: str,
        *,
        table: Optional[str] = None,
        epoch: Optional[int] = None,
        term: Optional[int] = None,
        max_abs_param: Optional[float] = None,
        history: Optional[List[Any]] = None,
    ) -> None:
        self.reason = reason
        self.table = table
        self.epoch = epoch
        self.term = term
        self.max_abs_param = max_abs_param
        self.history = history if history is not None else []
        super().__init__(reason)

    def __str__(self) -> str:
        parts = [self.reason]
        table, epoch, term, max_abs_param = self.table, self.epoch, self.term, self.max_abs_param
        if table is not None:
            parts.append(f"table={table}")
        if epoch is not None:
            parts.append(f"epoch={epoch}")
        if term is not None:
            parts.append(f"term={term}")
        if max_abs_param is not None:
            parts.append(f"max|param|={max_abs_param:.6g}")
        return " ".join(parts)
