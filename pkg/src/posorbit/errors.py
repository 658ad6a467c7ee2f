"""Exception hierarchy shared by all modules."""


class PosOrbitError(Exception):
    """Base class for library errors."""


class ConfigError(PosOrbitError):
    pass


# weights
class WeightSpecError(PosOrbitError):
    pass


class NoPositivity(PosOrbitError):
    """The weight is nonpositive on the whole sampling grid."""


class DeltaOutOfRange(PosOrbitError):
    pass


# fields
class InverseOutOfRange(PosOrbitError):
    pass


class NoBracket(PosOrbitError):
    pass


# thresholds
class RTooSmall(PosOrbitError):
    pass


class EtaInfeasible(RTooSmall):
    """No eta satisfies the strict envelope inequalities for the given R."""


class NoRFound(PosOrbitError):
    def __init__(self, msg, margins=None):
        super().__init__(msg)
        self.margins = margins or {}


# flow
class IntegrationError(PosOrbitError):
    def __init__(self, msg, t=None, state=None):
        super().__init__(msg)
        self.t = t
        self.state = state


class StepUnderflow(IntegrationError):
    pass


class BlowUp(StepUnderflow):
    """State norm exceeded the blow-up guard."""


class NonFiniteState(IntegrationError):
    pass


# degree
class ZeroOnBoundary(PosOrbitError):
    def __init__(self, msg, s=None, point=None):
        super().__init__(msg)
        self.s = s
        self.point = point


class Uncertified(PosOrbitError):
    def __init__(self, msg, result=None):
        super().__init__(msg)
        self.result = result


class BoundaryBlowup(PosOrbitError):
    def __init__(self, msg, arc=None):
        super().__init__(msg)
        self.arc = arc


class NotNested(PosOrbitError):
    pass


# solver
class NoConvergence(PosOrbitError):
    def __init__(self, msg, z=None, residual=None):
        super().__init__(msg)
        self.z = z
        self.residual = residual


class SingularJacobian(PosOrbitError):
    def __init__(self, msg, jacobian=None, z=None):
        super().__init__(msg)
        self.jacobian = jacobian
        self.z = z


class SeedInvalid(PosOrbitError):
    pass
