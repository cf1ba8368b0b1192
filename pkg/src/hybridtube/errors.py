"""Exception types shared across the toolbox."""


class TubeError(Exception):
    """Base class for all toolbox errors."""


class CertificateInfeasible(TubeError):
    """Raised when a verification run cannot produce a certificate at the
    requested scale.  Scale searches treat these as "not verified" rather
    than as hard failures."""


class CornerExplosion(TubeError):
    """Interval matrix has too many non-singleton entries to enumerate."""


class StepTooLarge(CertificateInfeasible):
    """Embedding step destroyed invertibility of the shape matrix."""


class DomainViolation(CertificateInfeasible):
    """Post-step set escaped the inclusion domain after max re-inflations."""


class MaxStepsExceeded(CertificateInfeasible):
    """Embedding flow hit the step budget before the stop predicate fired."""


class DegenerateSlice(TubeError):
    """The sliced shape matrix is rank deficient."""


class EnclosureFailure(CertificateInfeasible):
    """An interval enclosure is undefined over the requested domain."""


class NoWindow(CertificateInfeasible):
    """No fully-above / fully-below sample pair brackets the guard crossing."""


class NoVerifiableScale(TubeError):
    """Bisection failed to find any scale with a valid certificate."""


class NoImpact(TubeError):
    """Trajectory never reached the guard within the horizon."""


class NonTransversalCrossing(TubeError):
    """Guard reached with (numerically) vanishing normal velocity."""


class SingularAngle(TubeError):
    """Coordinate transform evaluated at or beyond its singularity."""


class Uncontrollable(TubeError):
    """Pole placement requested for modes the input cannot move."""


class SpectralRadiusTooLarge(TubeError):
    """Closed-loop step matrix is not Schur stable."""


class InfeasibleGait(TubeError):
    """Penalty trajectory optimization stalled above its residual target."""


class DivergentDescent(TubeError):
    """Gradient descent on the tracking gain kept increasing the cost."""
