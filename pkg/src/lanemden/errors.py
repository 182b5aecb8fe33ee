"""Exception hierarchy shared by every module.

Each class carries an ``exit_code`` used by the command line front end so that
distinct failure modes map to distinct process statuses.
"""


class LaneEmdenError(Exception):
    exit_code = 1


class Inadmissible(LaneEmdenError, ValueError):
    exit_code = 10


class NoBracket(LaneEmdenError):
    exit_code = 11


class Unresolved(LaneEmdenError):
    exit_code = 12


class BadFit(LaneEmdenError):
    exit_code = 13


class Divergent(LaneEmdenError):
    exit_code = 14


class Coincident(LaneEmdenError, ValueError):
    exit_code = 20


class NotConverged(LaneEmdenError):
    exit_code = 21


class Unsupported(LaneEmdenError, ValueError):
    exit_code = 22


class SingularOverlap(LaneEmdenError, ValueError):
    exit_code = 23


class ResolutionTooCoarse(LaneEmdenError, ValueError):
    exit_code = 24


class OutOfRange(LaneEmdenError, ValueError):
    exit_code = 30


class Boundary(LaneEmdenError):
    exit_code = 31


class Diverged(LaneEmdenError):
    exit_code = 40


class InsufficientRange(LaneEmdenError, ValueError):
    exit_code = 41


class ConfigError(LaneEmdenError, ValueError):
    exit_code = 2

    def __init__(self, field, message):
        self.field = field
        super().__init__(f"{field}: {message}")


class VerificationFailed(LaneEmdenError):
    exit_code = 3


class RemainderDominates(LaneEmdenError):
    exit_code = 32
