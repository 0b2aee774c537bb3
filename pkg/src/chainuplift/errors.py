"""Exception hierarchy shared across the package."""


class UpliftError(Exception):
    """Base class for every error raised by chainuplift."""


class SchemaError(UpliftError):
    pass


class MissingColumn(UpliftError):
    pass


class ChainViolation(UpliftError):
    """A row has a conversion without a click (z=1, y=0)."""


class CodeOutOfRange(UpliftError):
    pass


class ParseError(UpliftError):
    pass


class InvalidSpec(UpliftError):
    pass


class EmptyGroup(UpliftError):
    """A treated or control group needed for an uplift estimate is empty."""


class ShapeMismatch(UpliftError):
    pass


class NonFinite(UpliftError):
    """A NaN or Inf appeared in a forward value or gradient."""


class DegenerateGain(UpliftError):
    """Terminal uplift gain is not positive, so normalized AUUC is undefined."""


class Divergence(UpliftError):
    def __init__(self, message, step=None, epoch=None):
        super().__init__(message)
        self.step = step
        self.epoch = epoch


class FingerprintMismatch(UpliftError):
    """Checkpoint was produced for a different feature schema."""
