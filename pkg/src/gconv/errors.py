"""Exception hierarchy shared by all modules.

Each class carries the CLI exit code it maps to.
"""


class GconvError(Exception):
    exit_code = 1


class InvalidDimensionError(GconvError, ValueError):
    exit_code = 2


class InvalidSpecError(GconvError, ValueError):
    exit_code = 2


class InvalidInputError(GconvError, ValueError):
    exit_code = 2


class DimensionMismatchError(GconvError, ValueError):
    exit_code = 2


class BracketError(GconvError, ValueError):
    exit_code = 2


class TruncationError(GconvError):
    exit_code = 3


class GuardBandError(GconvError):
    exit_code = 3


class RejectedChannelError(GconvError, ValueError):
    exit_code = 2


class ConventionError(GconvError):
    exit_code = 4
