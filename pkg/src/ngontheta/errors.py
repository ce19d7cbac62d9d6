"""Exception hierarchy for ngontheta.

Errors are grouped by the stage that raises them: angle/geometry validation,
rationality certification, cone/slicing construction, kernel evaluation, and
series evaluation.  Math-domain failures (poles, divergence) map to CLI exit
code 3, everything else to 4.
"""


class NgonError(Exception):
    """Base class for all ngontheta errors."""


# --- angle / polygon geometry ------------------------------------------------

class ZeroAngle(NgonError):
    """Some turning angle is exactly zero."""


class AngleOutOfRange(NgonError):
    """Some turning angle has |theta| >= pi."""


class DegenerateAngle(NgonError):
    """A sine that must be nonzero vanishes (e.g. sin(theta_N) = 0)."""


class DegenerateAngleSum(NgonError):
    """theta_k + theta_{k+1} is a multiple of pi where that is not allowed."""


class NotClosed(NgonError):
    """Side data does not close up to the configured tolerance."""


class AngleSumNotReducible(NgonError):
    """Triangle cut requested at k with theta_k + theta_{k+1} >= pi."""


class ParallelSidesDependence(NgonError):
    """Requested parameter subset is degenerate (parallel sides)."""


# --- rationality -------------------------------------------------------------

class NotRational(NgonError):
    """Relaxed rationality condition fails; no scaling certificate exists."""


# --- cones / slicing / deformation --------------------------------------------

class SingularGram(NgonError):
    """Gram matrix is singular; normal vectors are undefined."""


class NoRationalA(NgonError):
    """No admissible rational slicing parameter found below threshold."""


class BadT(NgonError):
    """Deformation parameter t fails the negative-definiteness check."""


class SingularSystem(NgonError):
    """Projection linear system is singular (treated as BadT upstream)."""


class DecompositionFailed(NgonError):
    """Cell validation failed after the allowed perturbation retries."""


class DegenerateInput(NgonError):
    """Input does not span the expected dimension."""


# --- error functions ----------------------------------------------------------

class NotNegDef(NgonError):
    """Subspace spanned by C is not negative definite."""


class OnWall(NgonError):
    """Argument lies on a wall where M_{Q,C} is undefined."""


# --- theta series -------------------------------------------------------------

class NotConvergent(NgonError):
    """Series prerequisites (positivity/rationality certificates) missing."""


class OnPole(NgonError):
    """(alpha, beta) lies on the pole locus of an isotropic ray."""


class NoRayLattice(NgonError):
    """Requested ray does not meet the shifted lattice."""


class IsotropicFace(NgonError):
    """Face restriction requested on an isotropic ray (divergent series)."""


class LatticeMismatch(NgonError):
    """Face restriction conditions on alpha/beta are not satisfied."""


class NotIntegral(NgonError):
    """Modularity check requested without an integral scaling certificate."""
