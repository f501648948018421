"""Exception hierarchy with stable string codes for scripted pipelines."""


class LatentRegError(Exception):
    """Base class; every subclass carries a stable machine-readable code."""

    code = "ER_ERROR"

    def __str__(self):
        msg = super().__str__()
        return f"{self.code}: {msg}" if msg else self.code


class ValidationError(LatentRegError):
    code = "ER_BAD_INPUT"


class EmptyPartition(LatentRegError):
    """No index was declared pure (delta too small/large or model violation)."""

    code = "ER_EMPTY_PARTITION"


class InvariantViolation(LatentRegError):
    code = "ER_INVARIANT_VIOLATION"


class AllGridFailed(LatentRegError):
    """Every cross-validation grid point scored +inf."""

    code = "ER_ALL_GRID_FAILED"


class GroupTooSmall(LatentRegError):
    code = "ER_GROUP_TOO_SMALL"

    def __init__(self, group_index, size=None):
        self.group_index = group_index
        self.size = size
        super().__init__(f"group {group_index} has fewer than 2 members")


class ZeroCovariance(LatentRegError):
    code = "ER_ZERO_COVARIANCE"

    def __init__(self, i, j):
        self.i, self.j = i, j
        super().__init__(f"sample covariance ({i},{j}) is exactly 0; sign undefined")


class SingularAfterRidge(LatentRegError):
    code = "ER_SINGULAR_AFTER_RIDGE"


class SingularInner(LatentRegError):
    code = "ER_SINGULAR_INNER"


class SingularSigmaZ(LatentRegError):
    code = "ER_SINGULAR_SIGMA_Z"


class SingularGram(LatentRegError):
    code = "ER_SINGULAR_GRAM"


class SingularMiddle(LatentRegError):
    code = "ER_SINGULAR_MIDDLE"


class LpInfeasible(LatentRegError):
    code = "ER_LP_INFEASIBLE"

    def __init__(self, j, detail=""):
        self.j = j
        super().__init__(f"l1 program infeasible for row {j} {detail}".rstrip())


class HeterogeneousInputs(LatentRegError):
    """Simplified variance formula requested on heterogeneous groups/noise."""

    code = "ER_HETEROGENEOUS_INPUTS"


class NonpositiveVariance(LatentRegError):
    code = "ER_NONPOSITIVE_VARIANCE"


class NoOverlap(LatentRegError):
    code = "ER_NO_OVERLAP"


class FormulaMismatch(LatentRegError):
    code = "ER_FORMULA_MISMATCH"
