"""Probability matrices over supervariables and tests for their rank.

The chi-square test treats the rows of the dataset as multinomial draws over
the cells of the matrix, projects the cells onto the trailing singular
subspaces and forms a Wald statistic for "rank <= k".
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import stats

from lccd.scm import Dataset
from lccd.tables import EmpiricalSource, UnderpopulatedStratum

PINV_RTOL = 1e-10


class DegenerateMatrixError(ValueError):
    pass


@dataclass(frozen=True)
class Coarsening:
    """Ordered vertex list treated as one variable (little-endian code)."""

    vertices: tuple

    def __post_init__(self):
        object.__setattr__(self, "vertices", tuple(int(v) for v in self.vertices))
        if len(set(self.vertices)) != len(self.vertices):
            raise ValueError("coarsening vertices must be distinct")

    @property
    def cardinality(self) -> int:
        return 2 ** len(self.vertices)

    def __iter__(self):
        return iter(self.vertices)

    def __len__(self):
        return len(self.vertices)


@dataclass
class ProbMatrix:
    matrix: np.ndarray
    count: float
    cond: tuple = ()
    c: int = 0
    total: Optional[int] = None

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.matrix, dtype=dtype)


@dataclass
class RankTestResult:
    statistic: float
    dof: int
    p_value: float
    sigma_kplus1: float
    dof_sigma: int = 0
    extra: dict = field(default_factory=dict)

    def accepts(self, alpha: float) -> bool:
        """True when the data are consistent with rank <= k at level alpha."""
        return self.p_value > alpha


def empirical_prob_matrix(data: Dataset, S: Sequence[int], S2: Sequence[int], C: Sequence[int] = (), c: int = 0,
                          min_count: int = 1) -> ProbMatrix:
    """Pr(S=x, S2=y | C=c) estimated by counting rows."""
    S, S2, C = tuple(S), tuple(S2), tuple(C)
    if set(S) & set(S2) or set(S) & set(C) or set(S2) & set(C):
        raise ValueError("S, S2 and C must be disjoint")
    counts = EmpiricalSource(data).joint_counts([S, S2], C)[c]
    n_c = counts.sum()
    if n_c < max(min_count, 1):
        raise UnderpopulatedStratum(f"stratum C={C}, c={c} has {int(n_c)} rows")
    return ProbMatrix(counts / n_c, float(n_c), C, c, len(data))


def entry_covariance(A) -> np.ndarray:
    """Single-draw multinomial covariance of the column-stacked cells of A."""
    a = np.asarray(A, dtype=float).flatten(order="F")
    return np.diag(a) - np.outer(a, a)


def _trailing_projection(A: np.ndarray, k: int):
    W, s, Xt = np.linalg.svd(A, full_matrices=True)
    left = W[:, k:]
    right = Xt[k:, :].T
    trailing = left.T @ A @ right
    # vec(left' A right) = (right' kron left') vec(A) for column stacking
    proj = np.kron(right.T, left.T)
    return s, trailing.flatten(order="F"), proj


def chi2_rank_test(A, k: int, N: Optional[float] = None, variant: str = "projected",
                   dof_rule: str = "projected") -> RankTestResult:
    """Wald test of H0: rank(A) <= k; large p-values are consistent with H0.

    ``variant="projected"`` inverts the covariance of the trailing block;
    ``variant="literal"`` sandwiches the pseudoinverse of the full cell
    covariance between the projections instead.
    """
    if isinstance(A, ProbMatrix):
        N = A.count if N is None else N
        A = A.matrix
    if N is None:
        raise ValueError("sample count N is required")
    A = np.asarray(A, dtype=float)
    r, c = A.shape
    if min(r, c) <= k:
        raise ValueError(f"matrix {r}x{c} too small to test rank <= {k}")
    if not np.any(A):
        raise DegenerateMatrixError("all-zero probability matrix")
    s, l_hat, proj = _trailing_projection(A, k)
    sigma = entry_covariance(A)
    dof_sigma = int(np.linalg.matrix_rank(sigma, tol=PINV_RTOL * max(np.abs(sigma).max(), 1e-300)))
    if variant == "projected":
        omega = proj @ sigma @ proj.T
        q_dag = np.linalg.pinv(omega, rcond=PINV_RTOL, hermitian=True)
        scale = np.abs(omega).max()
        dof = int(np.linalg.matrix_rank(omega, tol=PINV_RTOL * scale)) if scale > 0 else 0
    elif variant == "literal":
        q_dag = proj @ np.linalg.pinv(sigma, rcond=PINV_RTOL, hermitian=True) @ proj.T
        scale = np.abs(q_dag).max()
        dof = int(np.linalg.matrix_rank(q_dag, tol=PINV_RTOL * scale)) if scale > 0 else 0
    else:
        raise ValueError(f"unknown variant {variant!r}")
    if dof == 0:
        raise DegenerateMatrixError("projected covariance has rank zero")
    if dof_rule == "sigma":
        dof_used = dof_sigma
    elif dof_rule == "projected":
        dof_used = dof
    else:
        raise ValueError(f"unknown dof_rule {dof_rule!r}")
    stat = max(float(N * l_hat @ q_dag @ l_hat), 0.0)
    p = float(stats.chi2.sf(stat, dof_used))
    return RankTestResult(stat, dof_used, p, float(s[k]), dof_sigma, {"dof_projected": dof})


def threshold_rank_test(A, k: int, threshold: float) -> RankTestResult:
    """Baseline: rank <= k iff the (k+1)-th singular value is below threshold.

    The p-value field carries the decision as 1.0 (accept) or 0.0 (reject).
    """
    if isinstance(A, ProbMatrix):
        A = A.matrix
    A = np.asarray(A, dtype=float)
    if min(A.shape) <= k:
        raise ValueError(f"matrix {A.shape} too small to test rank <= {k}")
    s = np.linalg.svd(A, compute_uv=False)
    accept = bool(s[k] < threshold)
    return RankTestResult(float(s[k]), 0, 1.0 if accept else 0.0, float(s[k]), 0, {"threshold": threshold})
