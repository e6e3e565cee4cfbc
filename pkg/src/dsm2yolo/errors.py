"""Exception types raised across the toolkit."""


class Dsm2YoloError(Exception):
    """Base class for every error raised by this package."""


# ingest
class MalformedDocument(Dsm2YoloError, ValueError):
    pass


class UnsupportedSegmentation(Dsm2YoloError, ValueError):
    pass


class DanglingReference(Dsm2YoloError, ValueError):
    pass


class DegeneratePolygon(Dsm2YoloError, ValueError):
    pass


# raster / geometry
class UnknownFormat(Dsm2YoloError, ValueError):
    pass


class HeaderMismatch(Dsm2YoloError, ValueError):
    pass


class NonFiniteHeader(Dsm2YoloError, ValueError):
    pass


class DimensionMismatch(Dsm2YoloError, ValueError):
    pass


class ZeroDimension(Dsm2YoloError, ValueError):
    pass


# heightclass
class NoValidSamples(Dsm2YoloError, ValueError):
    pass


class NegativeHeight(Dsm2YoloError, ValueError):
    pass


class EmptyMask(Dsm2YoloError, ValueError):
    pass


# labels
class IoFailure(Dsm2YoloError, OSError):
    pass


class MixedKinds(Dsm2YoloError, ValueError):
    pass


class LabelParseError(Dsm2YoloError, ValueError):
    """A label line could not be parsed; message carries file and line context."""

    def __init__(self, message, path=None, line_no=None):
        self.path = path
        self.line_no = line_no
        where = ""
        if path is not None:
            where = f"{path}:{line_no}: " if line_no is not None else f"{path}: "
        super().__init__(where + message)


class TokenCountMismatch(LabelParseError):
    pass


class OutOfRangeClass(LabelParseError):
    pass


class OutOfRangeCoordinate(LabelParseError):
    pass


# balance / eval
class EmptyDataset(Dsm2YoloError, ValueError):
    pass


class DomainError(Dsm2YoloError, ValueError):
    pass


class DimensionUnknown(Dsm2YoloError, KeyError):
    def __str__(self):
        return str(self.args[0]) if self.args else "dimension unknown"
