"""Exception hierarchy shared by every module."""


class ShrunkEmbedError(ValueError):
    """Base class for domain errors raised by this package."""


class InvalidInput(ShrunkEmbedError):
    pass


class NotPositiveDefinite(ShrunkEmbedError):
    pass


class InvalidDimension(ShrunkEmbedError):
    pass


class InvalidK(ShrunkEmbedError):
    pass


class InvalidSigma(ShrunkEmbedError):
    pass


class InvalidAffinity(ShrunkEmbedError):
    pass


class InvalidLabels(ShrunkEmbedError):
    pass


class InsufficientSamples(ShrunkEmbedError):
    pass


class InvalidCovariance(ShrunkEmbedError):
    pass


class EmptyDataset(ShrunkEmbedError):
    pass


class ParseError(ShrunkEmbedError):
    """Malformed dataset file. ``line`` is 1-based."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
