"""Exception hierarchy shared by all mtctrl modules."""


class MtctrlError(Exception):
    """Base class for every error raised by this package."""


class DimensionMismatch(MtctrlError, ValueError):
    """Matrix dimensions are inconsistent for the requested operation."""


class NotHurwitz(MtctrlError):
    """A matrix required to be Hurwitz has spectral abscissa >= 0."""


class SolveFailure(MtctrlError):
    """A linear solve was singular to working precision or inaccurate."""


class EigFailure(MtctrlError):
    """The eigenvalue computation did not converge."""


class DegenerateGramian(MtctrlError):
    """A Gramian is indefinite beyond tolerance."""


class BracketFailure(MtctrlError):
    """The upper bisection bracket fails the Hamiltonian eigenvalue test."""


class NotStabilizable(MtctrlError):
    """The Hamiltonian has no stable invariant subspace of full dimension."""


class NotSiso(MtctrlError, ValueError):
    """Operation requires a single-input single-output system."""


class NotScalar(MtctrlError, ValueError):
    """Operation requires one-dimensional (scalar) systems."""


class SignError(MtctrlError, ValueError):
    """Scalar-system parameters violate a sign precondition."""


class DomainError(MtctrlError, ValueError):
    """Argument lies outside the mathematical domain of the function."""


class NoConvergence(MtctrlError):
    """Iteration exhausted its budget; carries the last residual."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class NonFinite(MtctrlError):
    """A trajectory or iterate left the finite range (divergence signal)."""


class GenerationFailure(MtctrlError):
    """Random-system rejection sampling exceeded its retry budget."""
