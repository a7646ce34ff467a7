"""Exception types raised across the package."""


class MillreachError(Exception):
    """Base class for all millreach errors."""


class ParseError(MillreachError):
    """A mesh file is malformed or uses an unsupported construct."""


class EmptyMesh(MillreachError):
    """A mesh file contains no usable triangles."""


class DegenerateBBox(MillreachError):
    """The mesh bounding box has a zero-extent axis."""


class NotWatertight(MillreachError):
    """An operation requires a watertight mesh."""


class InvalidCount(MillreachError):
    """A sample or direction count is out of range."""


class EmptyInput(MillreachError):
    """An analysis was invoked with no sites or no directions."""


class EmptyInputDir(MillreachError):
    """The pipeline input directory contains no mesh files."""


class LengthMismatch(MillreachError):
    """Ground-truth and prediction label vectors differ in length."""


class FormatError(MillreachError):
    """A dataset record or prediction file cannot be parsed."""
