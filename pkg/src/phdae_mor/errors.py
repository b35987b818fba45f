"""Exception hierarchy."""


class PHDAEError(Exception):
    """Base class for all errors raised by this package."""


class StructuralError(PHDAEError):
    """Block dimensions or the staircase zero pattern are inconsistent."""


class InvertibilityError(PHDAEError):
    """A block that has to be invertible is (numerically) singular."""

    def __init__(self, block, message=None):
        self.block = block
        super().__init__(message or f'block {block} is numerically singular')


class ConsistencyError(PHDAEError):
    """Internal consistency check of the block algebra failed."""


class NotPortHamiltonianError(PHDAEError):
    """A matrix that must be positive semi-definite or skew is not."""


class ShiftSingularityError(PHDAEError):
    """A shifted system ``sigma*E - A`` could not be solved reliably."""

    def __init__(self, shift, residual=None):
        self.shift = complex(shift)
        self.residual = residual
        msg = f'shifted system is (nearly) singular at sigma={self.shift}'
        if residual is not None:
            msg += f' (relative residual {residual:.2e})'
        super().__init__(msg)


class EmptyBasisError(PHDAEError):
    """The projection basis has no component in the proper (second) block."""


class UnsupportedCaseError(PHDAEError):
    """The requested computation is outside of the supported setting."""


class StageError(PHDAEError):
    """Wraps an error raised in one stage of a multi-stage algorithm."""

    def __init__(self, stage, cause):
        self.stage = stage
        self.cause = cause
        super().__init__(f'[{stage}] {type(cause).__name__}: {cause}')


class ModelIOError(PHDAEError):
    """A model bundle on disk is missing, corrupt or inconsistent."""

    def __init__(self, message, block=None):
        self.block = block
        super().__init__(message)
