"""Exception hierarchy shared by every lncm module.

Everything derives from :class:`LncmError` so callers can catch the whole
family at once.  Shape/size problems additionally derive from the matching
builtin (``ValueError`` / ``IndexError``) so code written against plain
numpy conventions keeps working.
"""


class LncmError(Exception):
    """Base class for all lncm errors."""


class DimensionError(LncmError, ValueError):
    """Operand shapes are incompatible (matmul chain, channel chain, ...)."""


class BoundsError(LncmError, IndexError):
    """A block or pixel index lies outside its frame or map."""


class DataError(LncmError, ValueError):
    """A dataset is empty, incomplete or inconsistent."""


class SingularError(LncmError, ValueError):
    """A normal-equations system is singular (try ridge_lambda > 0)."""


class ParamError(LncmError, ValueError):
    """A numeric parameter is outside its legal range."""


class OverlapError(LncmError, ValueError):
    """Two RD curves share no PSNR interval."""


class FitError(LncmError, ValueError):
    """An RD curve cannot be fitted (duplicate PSNR values)."""


class ParseError(LncmError, ValueError):
    """A model/config/CSV/PGM file is malformed.

    ``line`` carries the 1-based offending line number when known.
    """

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class IoError(LncmError, OSError):
    """A required file is missing or unreadable."""


class VerificationFailure(LncmError):
    """An equivalence check did not pass at the requested tolerance."""
