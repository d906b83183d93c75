"""Exception types shared across the simulator."""


class G2CError(Exception):
    """Base class for all simulator errors."""


class ShapeMismatch(G2CError, ValueError):
    pass


class UnsupportedKind(G2CError, ValueError):
    pass


class IndexOutOfRange(G2CError, IndexError):
    pass


class CapacityExceeded(G2CError):
    """A layer or program does not fit the configured memory regions."""


class FieldRangeError(G2CError, ValueError):
    """An instruction field value does not fit its bit width."""


class BufferOverflow(G2CError):
    pass


class WindowNotFull(G2CError):
    pass


class InvalidRate(G2CError, ValueError):
    pass


class ConfigError(G2CError, ValueError):
    pass


class Fault(G2CError):
    """Precise, halting simulation fault.

    ``pc`` is the index of the offending instruction word (or the word count
    when execution ran off the end of the program).
    """

    def __init__(self, pc, cause):
        super().__init__(f"fault at pc={pc}: {cause}")
        self.pc = pc
        self.cause = cause
