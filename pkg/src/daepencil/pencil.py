"""Matrix pencils lam*A + B: rank, regular/singular classification, defects, index.

The rank of a pencil is the maximal rank of lam*A + B over lam; it drops only on
the zero set of finitely many minors, so sampling lam at a handful of generic
points and taking the maximum numerical rank recovers it with probability one.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import NotRegular, ShapeMismatch

DEFAULT_SEED = 1729

#: Marker returned by :func:`regular_index` when the index exceeds one.
INDEX_ABOVE_ONE = "index>1"


@dataclass(frozen=True)
class RankTolerance:
    """Policy for numerical rank decisions.

    rel: relative singular-value threshold (sigma > rel * sigma_max). ``None``
         selects eps * max(m, n).
    seed: seed for the deterministic lam sample draw.
    samples: number of lam samples; ``None`` selects min(m, n) + 2.
    """

    rel: float | None = None
    seed: int = DEFAULT_SEED
    samples: int | None = None

    def threshold(self, shape) -> float:
        if self.rel is not None:
            return self.rel
        return float(np.finfo(float).eps) * max(shape)


def numerical_rank(mat: np.ndarray, rel: float | None = None) -> int:
    """Rank of a matrix from its singular values.

    Threshold is rel * sigma_max with rel = eps * max(shape) by default.
    """
    mat = np.asarray(mat, dtype=float)
    if mat.size == 0:
        return 0
    svals = np.linalg.svd(mat, compute_uv=False)
    if svals.size == 0 or svals[0] == 0.0:
        return 0
    if rel is None:
        rel = float(np.finfo(float).eps) * max(mat.shape)
    return int(np.sum(svals > rel * svals[0]))


class PencilKind(Enum):
    REGULAR = "regular"
    SINGULAR = "singular"


class Pencil:
    """The pair (A, B) of m-by-n real matrices defining the pencil lam*A + B.

    Immutable: the stored arrays are read-only copies. Classification results
    are cached on first use.
    """

    def __init__(self, A, B):
        A = np.array(A, dtype=float)
        B = np.array(B, dtype=float)
        if A.ndim != 2 or B.ndim != 2:
            raise ShapeMismatch("A and B must be 2-d arrays")
        if A.shape != B.shape:
            raise ShapeMismatch(f"A has shape {A.shape}, B has shape {B.shape}")
        if not (np.all(np.isfinite(A)) and np.all(np.isfinite(B))):
            raise ShapeMismatch("pencil entries must be finite")
        A.setflags(write=False)
        B.setflags(write=False)
        self.A = A
        self.B = B
        self._class: PencilClass | None = None
        self._class_tol: RankTolerance | None = None

    @property
    def m(self) -> int:
        return self.A.shape[0]

    @property
    def n(self) -> int:
        return self.A.shape[1]

    @property
    def shape(self):
        return self.A.shape

    def scale(self) -> float:
        """Operator scale ||A|| + ||B|| + 1 used to normalize residuals."""
        return float(np.linalg.norm(self.A, 2) + np.linalg.norm(self.B, 2) + 1.0)

    def __repr__(self):
        return f"Pencil(m={self.m}, n={self.n})"


@dataclass(frozen=True)
class PencilClass:
    """Classification record: kind, rank, defects, and index of the regular part.

    ``index`` is an integer (0 or 1) for regular pencils, the string marker
    ``"index>1"`` when detection fails the index-1 criterion, and ``None`` for
    singular pencils (the regular-block index is determined during the
    decomposition, not here).
    """

    kind: PencilKind
    rank: int
    defect: int
    dual_defect: int
    total_defect: int
    index: int | str | None = None

    @property
    def is_regular(self) -> bool:
        return self.kind is PencilKind.REGULAR


def _sample_lambdas(p: Pencil, tol: RankTolerance) -> np.ndarray:
    count = tol.samples if tol.samples is not None else min(p.m, p.n) + 2
    count = max(count, 1)
    rng = np.random.default_rng(tol.seed)
    lams = rng.uniform(-10.0, 10.0, size=count)
    # Resample duplicates (measure zero, but keep the contract of distinct points).
    while len(np.unique(lams)) < count:
        lams = rng.uniform(-10.0, 10.0, size=count)
    return lams


def pencil_rank(p: Pencil, tol: RankTolerance | None = None) -> int:
    """max over lam of rank(lam*A + B), by sampling lam at seeded generic points."""
    tol = tol or RankTolerance()
    rel = tol.threshold(p.shape) if tol.rel is None else tol.rel
    best = 0
    for lam in _sample_lambdas(p, tol):
        best = max(best, numerical_rank(lam * p.A + p.B, rel))
        if best == min(p.m, p.n):
            break
    return best


def kernel_projector(mat: np.ndarray, rel: float | None = None) -> np.ndarray:
    """Orthogonal projector onto Ker(mat) (n x n for an m x n input)."""
    mat = np.asarray(mat, dtype=float)
    n = mat.shape[1]
    basis = kernel_basis(mat, rel)
    if basis.shape[1] == 0:
        return np.zeros((n, n))
    return basis @ basis.T


def kernel_basis(mat: np.ndarray, rel: float | None = None,
                 abs_tol: float = 0.0) -> np.ndarray:
    """Orthonormal basis of Ker(mat) as columns (n x k).

    abs_tol adds an absolute singular-value floor, needed when the matrix
    itself may be pure numerical noise relative to an outer operator scale.
    """
    mat = np.asarray(mat, dtype=float)
    m, n = mat.shape
    if mat.size == 0 or not np.any(mat):
        return np.eye(n)
    u, s, vt = np.linalg.svd(mat)
    if rel is None:
        rel = float(np.finfo(float).eps) * max(m, n)
    cut = max(rel * s[0], abs_tol) if s.size else abs_tol
    r = int(np.sum(s > cut)) if s.size else 0
    return vt[r:].T.copy()


def range_basis(mat: np.ndarray, rel: float | None = None,
                abs_tol: float = 0.0) -> np.ndarray:
    """Orthonormal basis of Range(mat) as columns (m x r)."""
    mat = np.asarray(mat, dtype=float)
    if mat.size == 0 or not np.any(mat):
        return np.zeros((mat.shape[0], 0))
    u, s, vt = np.linalg.svd(mat)
    if rel is None:
        rel = float(np.finfo(float).eps) * max(mat.shape)
    cut = max(rel * s[0], abs_tol) if s.size else abs_tol
    r = int(np.sum(s > cut)) if s.size else 0
    return u[:, :r].copy()


def invertibility_estimate(mat: np.ndarray) -> float:
    """Condition estimate sigma_max / sigma_min (inf when singular)."""
    svals = np.linalg.svd(np.asarray(mat, dtype=float), compute_uv=False)
    if svals.size == 0 or svals[-1] == 0.0:
        return float("inf")
    return float(svals[0] / svals[-1])


def regular_index(A_r: np.ndarray, B_r: np.ndarray,
                  tol: RankTolerance | None = None) -> int | str:
    """Index of a regular pencil: 0, 1, or the marker ``"index>1"``.

    Returns 0 iff A_r is invertible. Returns 1 iff A_r is singular and
    G = A_r + B_r @ P2 is invertible, where P2 is the orthogonal projector onto
    Ker(A_r); the invertibility of G does not depend on the choice of P2.
    The degenerate case A_r = 0 with B_r invertible counts as index 1.

    Raises NotRegular when the pencil lam*A_r + B_r is not regular.
    """
    A_r = np.asarray(A_r, dtype=float)
    B_r = np.asarray(B_r, dtype=float)
    if A_r.shape != B_r.shape or A_r.shape[0] != A_r.shape[1]:
        raise NotRegular("regular pencils are square")
    tol = tol or RankTolerance()
    d = A_r.shape[0]
    if d == 0:
        return 0
    p = Pencil(A_r, B_r)
    if pencil_rank(p, tol) < d:
        raise NotRegular("pencil has deficient rank over lam")
    eps_rank = tol.threshold(A_r.shape)
    cond_limit = 1.0 / (100.0 * eps_rank)
    if invertibility_estimate(A_r) < cond_limit:
        return 0
    P2 = kernel_projector(A_r, eps_rank)
    G = A_r + B_r @ P2
    if invertibility_estimate(G) < cond_limit:
        return 1
    return INDEX_ABOVE_ONE


def classify(p: Pencil, tol: RankTolerance | None = None) -> PencilClass:
    """Fill kind, rank, defects; for regular pencils also the index."""
    tol = tol or RankTolerance()
    if p._class is not None and p._class_tol == tol:
        return p._class
    r = pencil_rank(p, tol)
    defect = p.n - r
    dual_defect = p.m - r
    if p.n == p.m == r:
        kind = PencilKind.REGULAR
        index = regular_index(p.A, p.B, tol)
    else:
        kind = PencilKind.SINGULAR
        index = None
    result = PencilClass(kind=kind, rank=r, defect=defect, dual_defect=dual_defect,
                         total_defect=defect + dual_defect, index=index)
    p._class = result
    p._class_tol = tol
    return result
