"""Exception types shared across the solver."""


class NonPositiveJacobian(Exception):
    """Element geometry is inverted or degenerate at an integration point."""


class DegenerateCut(Exception):
    """Discontinuity line passes too close to an element node."""


class CrackOutsideElement(Exception):
    """Requested discontinuity anchor point is not inside the element."""


class NoConvergence(Exception):
    """Scalar return-mapping iteration failed."""

    def __init__(self, iterations, residual):
        self.iterations = iterations
        self.residual = residual
        super().__init__(f"no convergence after {iterations} iterations, residual {residual:g}")


class SingularLocalBlock(Exception):
    """Element-internal block is numerically singular during condensation."""


class SingularGlobalMatrix(Exception):
    """Assembled system cannot be factorized (missing constraints or total failure)."""


class IncrementDiverged(Exception):
    """Newton loop of a load/time increment did not converge."""

    def __init__(self, iterations, residual=None):
        self.iterations = iterations
        self.residual = residual
        super().__init__(f"increment diverged after {iterations} iterations")


class UnknownSetName(KeyError):
    """A boundary condition or load references a set the mesh does not define."""
