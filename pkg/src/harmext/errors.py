"""Exception hierarchy shared by every module."""


class HarmextError(Exception):
    """Base class for all errors raised by harmext."""


class InvalidParameter(HarmextError, ValueError):
    pass


class InvalidBoundary(InvalidParameter):
    pass


class InvalidInput(HarmextError, ValueError):
    pass


class DegenerateInput(HarmextError, ValueError):
    pass


class DegenerateBandwidth(DegenerateInput):
    pass


class IllPosedExtension(HarmextError):
    """Some connected component of the weight graph carries no constraint."""


class OutOfSupport(HarmextError):
    """Query point too far from the samples for the kernel to see it."""


class SolverError(HarmextError, RuntimeError):
    pass


class ParseError(HarmextError, ValueError):
    """Malformed input file; ``where`` is a line number or byte offset."""

    def __init__(self, message, path=None, where=None):
        self.path = path
        self.where = where
        loc = ""
        if path is not None:
            loc = str(path)
            if where is not None:
                loc += f":{where}"
            loc += ": "
        super().__init__(loc + message)
