"""Exception taxonomy shared by all modules.

Every error carries a ``category`` used by the CLI to pick an exit code:
``usage`` -> 2, ``data`` -> 3, ``numeric`` -> 4.
"""


class ViewReidError(Exception):
    category = "data"


class DimensionMismatch(ViewReidError):
    pass


class NonFiniteValue(ViewReidError):
    pass


class MaskOutOfRange(ViewReidError):
    pass


class NonDivisibleDims(ViewReidError):
    pass


class NegativeVisibility(ViewReidError):
    pass


class EmptyInput(ViewReidError):
    pass


class LabelOutOfRange(ViewReidError):
    pass


class NoValidTriplet(ViewReidError):
    pass


class InsufficientIdentities(ViewReidError):
    pass


class NonFiniteLoss(ViewReidError):
    category = "numeric"


class NoRelevantItems(ViewReidError):
    pass


class ManifestMismatch(ViewReidError):
    pass


class IoError(ViewReidError):
    pass


class BadMagic(IoError):
    pass


class UnsupportedVersion(IoError):
    pass


class TruncatedPayload(IoError):
    pass


class ParseError(IoError):
    pass


class DuplicateImageId(IoError):
    pass
