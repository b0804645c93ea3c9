"""Exception types shared across the package."""


class TexrecError(Exception):
    """Base class for all texrec errors."""


class ParamError(TexrecError):
    """A configuration or parameter value violates its constraints."""


class ConfigError(TexrecError):
    """A config file could not be parsed; message carries line/field context."""


class DatasetEmpty(TexrecError):
    """Dataset root is missing or contains no fabric directories."""


class FabricEmpty(TexrecError):
    """A fabric directory contains no readable images."""


class DecodeError(TexrecError):
    """An image file could not be decoded."""


class UnknownFabric(TexrecError):
    """A fabric id is not present in the dataset."""


class InputShapeError(TexrecError):
    """An input image does not match the classifier's configured shape."""


class ShapeError(TexrecError):
    """Array arguments have inconsistent or ragged shapes."""


class NumericalDivergence(TexrecError):
    """Training produced a non-finite loss; the classifier is invalid."""


class EmptyReference(TexrecError):
    """A reference set with no images was supplied."""


class StrategyMisuse(TexrecError):
    """A strategy was used in a phase where it cannot act."""


class InternalError(TexrecError):
    """An internal contract was violated (bug guard)."""


class DistributionError(TexrecError):
    """A vector expected to be a probability distribution is not."""


class EmptyProfile(TexrecError):
    """No touches or visits to build an exploration profile from."""


class AlignmentError(TexrecError):
    """Paired trial collections are misaligned."""


class ManifestError(TexrecError):
    """A run manifest is missing or corrupt."""


class LogParseError(TexrecError):
    """A human study log line is malformed."""

    def __init__(self, line_number, message):
        super().__init__(f"line {line_number}: {message}")
        self.line_number = line_number
