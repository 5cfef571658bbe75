"""Custom exceptions for the FARMap exploration engine."""

class FarmapError(Exception):
    """Base exception for exploration engine errors."""
    pass

class ConfigError(FarmapError):
    """Raised when configuration is invalid or missing."""
    pass

class EnvironmentLoadError(FarmapError):
    """Raised when a map file cannot be read or decoded."""
    pass

class InvalidPoseError(FarmapError):
    """Raised when a pose does not sit on an EMPTY cell."""
    pass

class MapShapeError(FarmapError):
    """Raised when observation layers do not match the local map bounds."""
    pass

class PlanningError(FarmapError):
    """Base class for planner failures."""
    pass

class InvalidStartError(PlanningError):
    """Raised when the plan start is not a known EMPTY cell."""
    pass

class UnreachableGoalError(PlanningError):
    """Raised when no path to the goal exists in the local map."""
    pass

class NoFrontierError(FarmapError):
    """Raised when a frontier subgoal is requested from a map without frontiers."""
    pass

class FragmentStoreError(FarmapError):
    """Raised when fragment storage or recall fails."""
    pass

class RenderError(FarmapError):
    """Raised when episode artifacts cannot be rendered."""
    pass
