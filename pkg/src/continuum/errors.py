class ContinuumError(Exception):
    """Base error; `module` names the component that raised it."""

    module = "continuum"


# -------- formation --------

class FormationError(ContinuumError):
    module = "formation"

class CollinearLeaders(FormationError):
    pass

class CollinearNeighbors(FormationError):
    pass

class InvalidFormation(FormationError):
    pass

class DegenerateTransform(FormationError):
    pass


# -------- safety --------

class SafetyError(ContinuumError):
    module = "safety"

class FollowerOutsideTriangle(SafetyError):
    pass

class InfeasibleMargins(SafetyError):
    pass

class SingularTransform(SafetyError):
    pass

class UncertifiedPlan(SafetyError):
    """Run refused because the plan failed certification and was not forced."""


# -------- guidance --------

class GuidanceError(ContinuumError):
    module = "guidance"

class DegenerateDuration(GuidanceError):
    pass

class TimeOutOfRange(GuidanceError):
    pass


# -------- vehicle --------

class VehicleError(ContinuumError):
    module = "vehicle"

class InsufficientSamples(VehicleError):
    pass

class BufferUnderrun(VehicleError):
    pass


# -------- netsim --------

class NetworkError(ContinuumError):
    module = "netsim"

class EmptyLog(NetworkError):
    pass


# -------- monitor --------

class MonitorError(ContinuumError):
    module = "monitor"

class MisalignedTrace(MonitorError):
    pass

class EmptyTrace(MonitorError):
    pass


# -------- scenario / cli --------

class ScenarioError(ContinuumError):
    """Scenario could not be parsed or violates a module invariant."""

    module = "cli"
