"""Shared exception types."""

from __future__ import annotations


class DecoynetError(Exception):
    """Base class for all package errors."""


class ConfigError(DecoynetError, ValueError):
    """Invalid configuration value; message names the offending field."""


class InvalidActionError(DecoynetError, ValueError):
    """Malformed or out-of-range action; the acted-on state is unchanged."""


class EpisodeFinishedError(DecoynetError, RuntimeError):
    """step() called on an episode that already terminated."""


class ProgramError(DecoynetError, RuntimeError):
    """Malformed generative program (bad pmf, blown horizon, bad args)."""


class DegeneratePosteriorError(DecoynetError, RuntimeError):
    """Every sampled trace scored zero likelihood against the observation."""


class ContractViolationError(DecoynetError, RuntimeError):
    """An internal exchange broke its contract (e.g. outcome/action mismatch)."""


class NumericError(DecoynetError, ValueError):
    """Non-finite value where a finite one is required."""
