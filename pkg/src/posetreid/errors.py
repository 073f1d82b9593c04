"""Exception hierarchy. DataError subclasses map to CLI exit code 2."""


class PoseTReIDError(Exception):
    pass


class DataError(PoseTReIDError):
    """Bad input data: malformed files, inconsistent streams, invalid specs."""


class NoVisibleKeypoints(DataError):
    pass


class DegenerateBox(DataError):
    pass


class ZeroVector(DataError):
    pass


class DimMismatch(DataError):
    pass


class SingleClass(DataError):
    pass


class EmptyGallery(DataError):
    pass


class OutOfOrderFrame(DataError):
    pass


class FrameRangeMismatch(DataError):
    pass


class InvalidSpec(DataError):
    pass


class UnknownPreset(DataError):
    pass


class ParseError(DataError):
    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}"
            if line is not None:
                where += f":{line}"
            where += ": "
        super().__init__(where + message)


class NonMonotonicFrame(ParseError):
    pass


class EmbeddingDimMismatch(ParseError):
    pass


class DuplicateLabelInFrame(ParseError):
    pass


class VersionMismatch(ParseError):
    pass


class ConfigError(ParseError):
    pass
