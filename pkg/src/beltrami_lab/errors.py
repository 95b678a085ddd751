"""Exception hierarchy shared by all modules."""


class BeltramiLabError(Exception):
    """Base class for every error raised by the package."""


class InvalidParameterError(BeltramiLabError, ValueError):
    """A numeric argument violates an operation's precondition."""


class IntegrationError(BeltramiLabError, RuntimeError):
    """An ODE integration or quadrature failed."""


class NearCriticalPointError(BeltramiLabError, ValueError):
    """The energy-density gradient is too small for the requested quantity."""


class DegenerateCriticalPointError(BeltramiLabError, ValueError):
    """A stationary point has a singular Hessian."""


class NoCriticalPointsError(BeltramiLabError, ValueError):
    """The field is constant, so stationary points are not isolated."""


class TopologyError(BeltramiLabError, RuntimeError):
    """The separatrix graph is not a cellular embedding on the torus."""


class UnresolvedSeparatrixError(BeltramiLabError, RuntimeError):
    """A separatrix branch did not reach a critical point."""


class PhaseBlowupError(BeltramiLabError, FloatingPointError):
    """Spectral coefficients of the phase left the representable range."""

    def __init__(self, message, tau_reached):
        super().__init__(message)
        self.tau_reached = tau_reached


class GeometryError(BeltramiLabError, ValueError):
    """A sampling annulus contains another critical point."""


class CFLError(BeltramiLabError, ValueError):
    """A DNS step violates the advective stability bound."""

    def __init__(self, message, suggested_dt):
        super().__init__(message)
        self.suggested_dt = suggested_dt
