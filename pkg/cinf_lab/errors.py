#!/usr/bin/env python3
"""
Errors - Exception hierarchy
Part of the CINF Lab outlier-noise mitigation infrastructure

Every failure raised on purpose by the lab derives from CinfError. Argument
errors also derive from ValueError so callers that only know the standard
library still catch them.
"""

from typing import Any, List, Optional


class CinfError(Exception):
    """Base class for all lab errors."""


class SignalMismatchError(CinfError, ValueError):
    """Two signals (or a signal and a design) disagree on length or sample rate."""


class FilterDesignError(CinfError, ValueError):
    """Invalid design parameters, unstable sections, or a kernel of the wrong kind."""


class DiscretizationError(CinfError, ValueError):
    """Time step too coarse for the forward-Euler update (dt/tau > 1)."""


class AlignmentError(CinfError, ValueError):
    """Cross-correlation peak fell outside the permitted lag window."""


class ConfigError(CinfError):
    """Scenario file missing, unparsable or failing validation."""


class StageError(CinfError):
    """A digital front end stage rejected its input."""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause


class InvariantViolation(CinfError):
    """One or more hard report checks failed."""

    def __init__(self, experiment: str, failed: Optional[List[Any]] = None):
        self.experiment = experiment
        self.failed = list(failed or [])
        names = ", ".join(getattr(check, "name", str(check)) for check in self.failed)
        super().__init__(f"{experiment}: invariant check(s) failed: {names}")
