"""Exception types raised across the package."""


class LSMError(Exception):
    """Base class for all package errors."""


class DimensionMismatch(LSMError, ValueError):
    pass


class NonFinite(LSMError, FloatingPointError):
    """Objective became NaN or infinite during optimization."""


class RankDeficient(LSMError, UserWarning):
    """Fewer informative eigen-directions than the requested latent dimension."""


class EmptyTransferSet(LSMError, ValueError):
    pass


class EmptyGrid(LSMError, ValueError):
    pass


class EmptyHoldout(LSMError, ValueError):
    pass


class ZeroDenominator(LSMError, ZeroDivisionError):
    pass


class ParseError(LSMError, ValueError):
    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}:{line}: " if line is not None else f"{path}: "
        super().__init__(where + message)


class DuplicateNode(LSMError, ValueError):
    pass


class SelfLoop(LSMError, ValueError):
    pass


class MissingNode(LSMError, KeyError):
    def __init__(self, label, source):
        self.label = label
        self.source = source
        super().__init__(f"target node {label!r} not found in source {source!r}")

    def __str__(self):
        return self.args[0]


class AmbiguousAlignment(LSMError, ValueError):
    pass
