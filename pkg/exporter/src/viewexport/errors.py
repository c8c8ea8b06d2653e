"""Exception taxonomy for the exporter.

Every error carries a ``category`` used by the CLI to pick an exit code:
``usage`` -> 2, ``data`` -> 3, ``checkpoint`` -> 4.
"""


class ExportError(Exception):
    category = "data"


class IoError(ExportError):
    pass


class NoImages(ExportError):
    pass


class ImageUnreadable(ExportError):
    """A single image failed to load; the export loop logs and skips it."""


class CheckpointIncompatible(ExportError):
    category = "checkpoint"
