"""Exception types raised across the package."""


class MelcodeError(Exception):
    pass


class FormatError(MelcodeError, ValueError):
    """A file does not follow the expected binary layout."""


class TruncatedFileError(FormatError):
    pass


class UnsupportedVersionError(FormatError):
    pass


class MalformedWavError(FormatError):
    code = "malformed-header"


class UnsupportedEncodingError(FormatError):
    code = "unsupported-encoding"


class EmptyInputError(MelcodeError, ValueError):
    pass


class NonFiniteError(MelcodeError, ValueError):
    pass


class DimensionError(MelcodeError, ValueError):
    pass


class DivergenceError(MelcodeError, ArithmeticError):
    def __init__(self, epoch, loss):
        super().__init__(f"training diverged in epoch {epoch} (loss={loss})")
        self.epoch = epoch
        self.loss = loss


class AmbiguousBottleneckError(MelcodeError, ValueError):
    pass
