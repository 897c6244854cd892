"""Exception types raised across the package."""


class ExploreError(Exception):
    """Base class for all package errors."""


class WorldParseError(ExploreError):
    pass


class WorldValidationError(ExploreError):
    """A world file parsed but violates an invariant.

    ``element`` names the offending part, e.g. ``"spawn"`` or ``"walls[3]"``.
    """

    def __init__(self, element, message):
        super().__init__(f"{element}: {message}")
        self.element = element


class CollisionError(ExploreError):
    pass


class OutOfExtentError(ExploreError):
    pass


class NoPathError(ExploreError):
    pass


class EmptyFrontierError(ExploreError):
    pass


class StallError(ExploreError):
    """No reachable frontier remains while the exploration target is unmet.

    The partial result is attached so callers can still export it.
    """

    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result
