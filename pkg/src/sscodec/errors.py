"""Exception types shared across the package."""


class WeightFileError(Exception):
    """A weight file could not be turned into a valid model."""


class WeightChecksumError(WeightFileError):
    pass


class UnknownVersionError(WeightFileError):
    pass


class MissingParameterError(WeightFileError):
    def __init__(self, name: str):
        super().__init__(f"missing parameter {name!r}")
        self.name = name


class UnexpectedParameterError(WeightFileError):
    def __init__(self, name: str):
        super().__init__(f"unknown parameter {name!r}")
        self.name = name


class CodecError(Exception):
    """Base class for bitstream and coding failures."""


class BitstreamError(CodecError):
    pass


class TruncatedStreamError(BitstreamError):
    pass


class BitstreamVersionError(BitstreamError):
    pass


class WeightMismatchError(CodecError):
    """The bitstream was produced with different model weights."""
