"""Exception hierarchy and CLI exit codes."""

from __future__ import annotations

EXIT_OK = 0
EXIT_INVALID_INPUT = 2
EXIT_TOPOLOGY_REPAIR_FAILED = 3
EXIT_FIT_STALLED = 4
EXIT_IO = 5


class CortexForgeError(Exception):
    """Base class for all errors raised by this package."""

    exit_code = EXIT_INVALID_INPUT


class InvalidInputError(CortexForgeError):
    """Bad arguments, mismatched geometry, out-of-range parameters."""

    exit_code = EXIT_INVALID_INPUT


class TopologyError(InvalidInputError):
    """Mesh fails a topological precondition (open, non-manifold, wrong genus)."""


class TopologyRepairError(CortexForgeError):
    """Genus-0 repair loop exhausted its rounds.

    Carries the Euler characteristic of the final failed attempt.
    """

    exit_code = EXIT_TOPOLOGY_REPAIR_FAILED

    def __init__(self, message: str, euler_characteristic: int):
        super().__init__(message)
        self.euler_characteristic = euler_characteristic


class FitStalledError(CortexForgeError):
    """Surface fit hit the minimum step size while still self-intersecting.

    ``partial_mesh`` and ``trace`` hold the last intersection-free state.
    """

    exit_code = EXIT_FIT_STALLED

    def __init__(self, message: str, partial_mesh=None, trace=None):
        super().__init__(message)
        self.partial_mesh = partial_mesh
        self.trace = trace if trace is not None else []


class FileFormatError(CortexForgeError):
    """Unreadable or unsupported on-disk data."""

    exit_code = EXIT_IO
