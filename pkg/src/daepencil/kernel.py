"""Minimal-degree polynomial bases of Ker(lam*A + B) and Ker(lam*A^T + B^T).

A degree-k solution x(lam) = sum_i (-1)^i lam^i x_i of (lam*A + B) x(lam) = 0 is
stored through its chain vectors x_0..x_k, which satisfy

    B x_0 = 0,   B x_i = A x_{i-1}  (1 <= i <= k),   A x_k = 0.

The basis extraction sweeps degrees upward: at each degree d the nullspace of a
block band matrix M_d is computed and directions already explained by lam-shifts
of lower-degree solutions are projected out, so returned degrees are minimal.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import DegreeOverflow
from .pencil import Pencil, RankTolerance, classify, numerical_rank


class Side(Enum):
    PRIMAL = "primal"
    DUAL = "dual"


@dataclass(frozen=True)
class PolySolution:
    """One polynomial kernel solution: side, degree, and chain vectors.

    coeffs[i] is x_i in the convention x(lam) = sum_i (-1)^i lam^i x_i.
    The leading coefficient is normalized to unit norm with its first
    significantly-nonzero entry positive.
    """

    side: Side
    degree: int
    coeffs: tuple

    def stacked(self) -> np.ndarray:
        return np.concatenate(self.coeffs)


@dataclass(frozen=True)
class MinimalBasis:
    side: Side
    solutions: tuple

    @property
    def degrees(self) -> list:
        return [s.degree for s in self.solutions]

    def __len__(self):
        return len(self.solutions)


@dataclass(frozen=True)
class ChainReport:
    """Residuals of the chain equalities, relative to (||A||+||B||) * coeff scale."""

    residuals: tuple
    max_residual: float
    scale: float


def band_matrix(A: np.ndarray, B: np.ndarray, d: int) -> np.ndarray:
    """Block band matrix M_d of shape ((d+2) m, (d+1) n).

    Its nullspace vectors are the stacked chains (x_0, ..., x_d): row blocks
    enforce B x_0 = 0, then -A x_{i-1} + B x_i = 0 for i = 1..d, then A x_d = 0.
    """
    m, n = A.shape
    M = np.zeros(((d + 2) * m, (d + 1) * n))
    M[0:m, 0:n] = B
    for i in range(1, d + 1):
        M[i * m:(i + 1) * m, (i - 1) * n:i * n] = -A
        M[i * m:(i + 1) * m, i * n:(i + 1) * n] = B
    M[(d + 1) * m:, d * n:] = A
    return M


def _nullspace(mat: np.ndarray, rel: float) -> np.ndarray:
    if mat.size == 0:
        return np.eye(mat.shape[1])
    u, s, vt = np.linalg.svd(mat)
    if s.size == 0 or s[0] == 0.0:
        return np.eye(mat.shape[1])
    r = int(np.sum(s > rel * s[0]))
    return vt[r:].T.copy()


def _shift_stacks(solutions, d: int, n: int) -> np.ndarray:
    """Stacked coefficient vectors of lam^j * x_k(lam) for accepted x_k, degree <= d.

    In stacked coordinates a shift by lam^j moves the chain blocks down j slots
    (sign changes do not affect the span).
    """
    cols = []
    for sol in solutions:
        k = sol.degree
        for j in range(0, d - k + 1):
            v = np.zeros((d + 1) * n)
            for i, c in enumerate(sol.coeffs):
                v[(i + j) * n:(i + j + 1) * n] = c
            cols.append(v)
    if not cols:
        return np.zeros(((d + 1) * n, 0))
    return np.column_stack(cols)


def _canonical(vec_blocks, side: Side, d: int) -> PolySolution:
    """Normalize: unit leading-coefficient norm, first nonzero leading entry > 0."""
    lead = vec_blocks[-1]
    nrm = np.linalg.norm(lead)
    blocks = [b / nrm for b in vec_blocks]
    lead = blocks[-1]
    cut = 1e-12 * max(np.max(np.abs(lead)), 1e-300)
    sign = 1.0
    for entry in lead:
        if abs(entry) > cut:
            sign = 1.0 if entry > 0 else -1.0
            break
    blocks = [sign * b for b in blocks]
    return PolySolution(side=side, degree=d,
                        coeffs=tuple(np.array(b) for b in blocks))


def polynomial_kernel_basis(p: Pencil, side: Side,
                            tol: RankTolerance | None = None) -> MinimalBasis:
    """Minimal-degree polynomial basis of the requested kernel side.

    Empty basis when the side has zero defect. Raises DegreeOverflow when the
    sweep exceeds min(m, n) without reaching the defect count (inconsistent
    numerical ranks).
    """
    tol = tol or RankTolerance()
    cls = classify(p, tol)
    if side is Side.PRIMAL:
        A, B = p.A, p.B
        target = cls.defect
    else:
        A, B = p.A.T, p.B.T
        target = cls.dual_defect
    if target == 0:
        return MinimalBasis(side=side, solutions=())
    m, n = A.shape
    rel = tol.threshold((m, n))
    accepted: list[PolySolution] = []
    for d in range(0, min(m, n) + 1):
        M = band_matrix(A, B, d)
        null = _nullspace(M, rel)
        shifts = _shift_stacks(accepted, d, n)
        shift_rank = numerical_rank(shifts, rel) if shifts.size else 0
        n_new = null.shape[1] - shift_rank
        if n_new < 0:
            raise DegreeOverflow(
                f"degree {d}: nullity {null.shape[1]} below shift-module rank "
                f"{shift_rank}; numerical ranks inconsistent")
        if n_new == 0:
            continue
        if shifts.size:
            q, _ = np.linalg.qr(shifts)
            resid = null - q @ (q.T @ null)
        else:
            resid = null
        u, s, vt = np.linalg.svd(resid, full_matrices=False)
        new_vecs = u[:, :n_new]
        if s.size and n_new > 0 and s[min(n_new, s.size) - 1] < 1e-8:
            raise DegreeOverflow(
                f"degree {d}: projected nullspace directions nearly dependent "
                f"on the shift module (sigma={s[n_new - 1]:.2e})")
        for col in new_vecs.T:
            blocks = [col[i * n:(i + 1) * n] for i in range(d + 1)]
            accepted.append(_canonical(blocks, side, d))
            if len(accepted) == target:
                break
        if len(accepted) == target:
            break
    if len(accepted) != target:
        raise DegreeOverflow(
            f"sweep reached degree {min(m, n)} with {len(accepted)} of "
            f"{target} solutions")
    accepted.sort(key=lambda s: s.degree)
    return MinimalBasis(side=side, solutions=tuple(accepted))


def minimal_indices(p: Pencil, tol: RankTolerance | None = None):
    """Degree multisets (primal list, dual list), each nondecreasing."""
    prim = polynomial_kernel_basis(p, Side.PRIMAL, tol)
    dual = polynomial_kernel_basis(p, Side.DUAL, tol)
    return prim.degrees, dual.degrees


def validate_chain(s: PolySolution, p: Pencil) -> ChainReport:
    """Residuals of the chain equalities for one solution against the pencil."""
    if s.side is Side.PRIMAL:
        A, B = p.A, p.B
    else:
        A, B = p.A.T, p.B.T
    coeff_scale = max(np.linalg.norm(c) for c in s.coeffs)
    scale = (np.linalg.norm(A, 2) + np.linalg.norm(B, 2)) * max(coeff_scale, 1e-300)
    res = [np.linalg.norm(B @ s.coeffs[0])]
    for i in range(1, s.degree + 1):
        res.append(np.linalg.norm(B @ s.coeffs[i] - A @ s.coeffs[i - 1]))
    res.append(np.linalg.norm(A @ s.coeffs[s.degree]))
    res = [float(r / scale) for r in res]
    return ChainReport(residuals=tuple(res), max_residual=max(res), scale=float(scale))
