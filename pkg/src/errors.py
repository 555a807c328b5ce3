"""
Exception hierarchy for ghartree-lab.

Report-only checks (regime validators) never raise; everything else
raises one of these.
"""

from typing import List, Optional, Sequence


class GHartreeError(Exception):
    """Root of all package errors"""


class ParameterError(GHartreeError, ValueError):
    """Structurally invalid or non-finite parameters"""


class PreconditionError(GHartreeError, ValueError):
    """One or more named preconditions failed"""

    def __init__(self, failed: Sequence[str], context: str = ""):
        self.failed: List[str] = list(failed)
        prefix = f"{context}: " if context else ""
        super().__init__(prefix + "; ".join(self.failed))


class GridMismatchError(GHartreeError, ValueError):
    """Fields live on different grids"""


class ConfigError(GHartreeError):
    """Run-config parse or validation failure"""

    def __init__(
        self,
        message: str,
        lines: Optional[Sequence[int]] = None,
        condition_ids: Optional[Sequence[str]] = None,
    ):
        self.lines: List[int] = list(lines or [])
        self.condition_ids: List[str] = list(condition_ids or [])
        where = ""
        if self.lines:
            where = "line " + ", ".join(str(n) for n in self.lines) + ": "
        super().__init__(where + message)


class SnapshotFormatError(GHartreeError):
    """Snapshot file does not match the GHRT layout"""


class NonFiniteStateError(GHartreeError, ArithmeticError):
    """A time step produced non-finite samples"""
