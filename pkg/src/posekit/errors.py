"""Exception types raised across posekit."""


class PosekitError(Exception):
    """Base class; the CLI maps these to exit code 2."""


class DegenerateSixD(PosekitError, ValueError):
    pass


class InvalidBinCount(PosekitError, ValueError):
    pass


class BinIndexOutOfRange(PosekitError, IndexError):
    pass


class InvalidRange(PosekitError, ValueError):
    pass


class MalformedHeader(PosekitError, ValueError):
    pass


class TruncatedRLEPayload(PosekitError, ValueError):
    pass


class DimensionMismatch(PosekitError, ValueError):
    pass


class DegenerateMesh(PosekitError, ValueError):
    pass


class InvalidParams(PosekitError, ValueError):
    pass


class EmptyDatabase(PosekitError, ValueError):
    pass


class DuplicateId(PosekitError, ValueError):
    pass


class ParseError(PosekitError, ValueError):
    pass


class ClassOutOfRange(PosekitError, IndexError):
    pass


class ShapeMismatch(PosekitError, ValueError):
    pass


class ConfigError(PosekitError, ValueError):
    pass


class EmptyAfterFilter(PosekitError, ValueError):
    pass
