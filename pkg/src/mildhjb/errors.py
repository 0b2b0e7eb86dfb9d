"""Exception hierarchy.

Every numerical failure carries a short ``tag`` that the CLI prints on stderr,
so scripts can dispatch on the failure kind without parsing prose.
"""


class MildHJBError(Exception):
    tag = "ERROR"


class EllipticityError(MildHJBError, ValueError):
    tag = "ELLIPTICITY"


class CoefficientError(MildHJBError, ValueError):
    tag = "COEFFICIENTS"


class OutsideRange(MildHJBError):
    """Vector is not in the range of the covariance (infinite RKHS norm)."""

    tag = "OUTSIDE_RANGE"

    def __init__(self, residual, msg=None):
        self.residual = residual
        super().__init__(msg or f"vector outside covariance range (residual {residual:.3e})")


class NullControllabilityFailure(MildHJBError):
    tag = "NULL_CONTROLLABILITY"


class RankDeficiencyError(MildHJBError):
    tag = "RANK_DEFICIENT"

    def __init__(self, side, rank, dim):
        self.side = side
        self.rank = rank
        self.dim = dim
        super().__init__(f"Gramian {side} has rank {rank} < {dim}")


class DegenerateWindowError(MildHJBError, ValueError):
    tag = "DEGENERATE_WINDOW"


class FitSpanError(MildHJBError, ValueError):
    tag = "FIT_SPAN"


class NonContractionError(MildHJBError):
    tag = "NON_CONTRACTION"

    def __init__(self, report, msg=None):
        self.report = report
        super().__init__(msg or "gamma map failed to contract for 3 consecutive iterations")


class NotConvergedError(MildHJBError):
    tag = "NOT_CONVERGED"

    def __init__(self, report):
        self.report = report
        super().__init__(f"no convergence after {report.iterations} iterations")


class ConfigError(MildHJBError):
    tag = "CONFIG_INVALID"

    def __init__(self, msg, tag=None):
        if tag is not None:
            self.tag = tag
        super().__init__(msg)


class AssumptionError(MildHJBError):
    """A measured quantity violates a standing assumption (e.g. fitted alpha >= 1)."""

    tag = "ASSUMPTION"
