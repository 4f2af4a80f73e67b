"""Exception and warning types raised by clockdyn."""


class ClockDynError(Exception):
    """Base class for all clockdyn errors."""


class PulseUnresolvable(ClockDynError, ValueError):
    pass


class PulseTooWide(ClockDynError, ValueError):
    pass


class NotHermitian(ClockDynError, ValueError):
    pass


class NonConvergent(ClockDynError, RuntimeError):
    pass


class WindowGridMisaligned(ClockDynError, ValueError):
    pass


class WraparoundDetected(ClockDynError, RuntimeError):
    pass


class TooLarge(ClockDynError, ValueError):
    pass


class InsufficientRecords(ClockDynError, ValueError):
    pass


class StationaryState(ClockDynError, ValueError):
    """The clock state is an eigenstate of the clock Hamiltonian."""


class ConfigError(ClockDynError, ValueError):
    """Invalid configuration; the message names the offending field."""


class QuasimonochromaticWarning(UserWarning):
    pass


class WraparoundWarning(UserWarning):
    pass
