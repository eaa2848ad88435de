"""Synthesis of pencils with known block structure, for verification runs.

Assembles block-diagonal pencils from chain blocks of chosen minimal indices,
their transposes, and a regular part split into an invertible-A block and an
invertible-B block, then hides the structure behind well-conditioned
equivalence transforms. The returned ground truth carries the dimensions and
the canonical subspaces for span comparisons.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .pencil import Pencil


@dataclass
class GroundTruth:
    pencil: Pencil
    primal_degrees: list
    dual_degrees: list
    dims: dict                      # the eight subspace dimensions
    chain_span: np.ndarray          # span of all primal chain vectors
    leading_span: np.ndarray        # span of the leading chain vectors (Xs2)
    image_span: np.ndarray          # span of the chain images A x_ji, i < k_j
    x2_span: np.ndarray             # ground-truth algebraic subspace


def _chain_block(eps: int):
    """Chain block of degree eps: A = [I 0], B = [0 I] of shape eps x (eps+1)."""
    A = np.zeros((eps, eps + 1))
    B = np.zeros((eps, eps + 1))
    A[:, :eps] = np.eye(eps)
    B[:, 1:] = np.eye(eps)
    return A, B


def _well_conditioned(rng, k: int) -> np.ndarray:
    if k == 0:
        return np.zeros((0, 0))
    q1, _ = np.linalg.qr(rng.standard_normal((k, k)))
    q2, _ = np.linalg.qr(rng.standard_normal((k, k)))
    scales = rng.uniform(0.5, 2.0, size=k)
    return q1 @ np.diag(scales) @ q2


def assemble_pencil(rng, primal_degrees, dual_degrees, d1: int, d2: int,
                    transform: bool = True) -> GroundTruth:
    """Pencil with the given minimal indices and regular part sizes.

    primal_degrees: degrees of the underdetermined chain blocks.
    dual_degrees: degrees of the overdetermined (transposed) chain blocks.
    d1, d2: sizes of the invertible-A and invertible-B regular blocks.
    """
    blocks_A, blocks_B = [], []
    for eps in primal_degrees:
        blocks_A.append(_chain_block(eps)[0])
        blocks_B.append(_chain_block(eps)[1])
    for eta in dual_degrees:
        A, B = _chain_block(eta)
        blocks_A.append(A.T)
        blocks_B.append(B.T)
    if d1:
        A1 = _well_conditioned(rng, d1)
        blocks_A.append(A1)
        blocks_B.append(rng.standard_normal((d1, d1)))
    if d2:
        blocks_A.append(np.zeros((d2, d2)))
        blocks_B.append(_well_conditioned(rng, d2))

    m = sum(b.shape[0] for b in blocks_A)
    n = sum(b.shape[1] for b in blocks_A)
    A0 = np.zeros((m, n))
    B0 = np.zeros((m, n))
    r = c = 0
    col_ranges = []
    row_ranges = []
    for bA, bB in zip(blocks_A, blocks_B):
        h, w = bA.shape
        A0[r:r + h, c:c + w] = bA
        B0[r:r + h, c:c + w] = bB
        col_ranges.append(range(c, c + w))
        row_ranges.append(range(r, r + h))
        r += h
        c += w

    if transform:
        U = _well_conditioned(rng, m)
        V = _well_conditioned(rng, n)
    else:
        U, V = np.eye(m), np.eye(n)
    A = U @ A0 @ V
    B = U @ B0 @ V
    Vinv = np.linalg.inv(V)

    np_deg = len(primal_degrees)
    chain_cols, lead_cols, image_rows = [], [], []
    for j in range(np_deg):
        cols = list(col_ranges[j])
        chain_cols.extend(cols)
        lead_cols.append(cols[-1])
        image_rows.extend(list(row_ranges[j]))
    x2_cols = list(col_ranges[-1]) if d2 else []

    def col_span(cols):
        if not cols:
            return np.zeros((n, 0))
        E = np.zeros((n, len(cols)))
        for i, cidx in enumerate(cols):
            E[cidx, i] = 1.0
        return Vinv @ E

    def row_span(rows):
        if not rows:
            return np.zeros((m, 0))
        E = np.zeros((m, len(rows)))
        for i, ridx in enumerate(rows):
            E[ridx, i] = 1.0
        return U @ E

    kp = sum(primal_degrees)
    km = sum(dual_degrees)
    dims = {"Xs1": kp + km, "Xs2": np_deg, "X1": d1, "X2": d2,
            "Ys1": kp + km, "Ys2": len(dual_degrees), "Y1": d1, "Y2": d2}
    return GroundTruth(pencil=Pencil(A, B),
                       primal_degrees=sorted(primal_degrees),
                       dual_degrees=sorted(dual_degrees),
                       dims=dims,
                       chain_span=col_span(chain_cols),
                       leading_span=col_span(lead_cols),
                       image_span=row_span(image_rows),
                       x2_span=col_span(x2_cols))


def random_ground_truth(rng, max_pieces: int = 2, max_degree: int = 2,
                        max_regular: int = 3) -> GroundTruth:
    """Random structured pencil; always singular on at least one side and
    never degenerate to zero rows or columns."""
    while True:
        primal = [int(rng.integers(0, max_degree + 1))
                  for _ in range(rng.integers(0, max_pieces + 1))]
        dual = [int(rng.integers(0, max_degree + 1))
                for _ in range(rng.integers(0, max_pieces + 1))]
        if not (primal or dual):
            continue
        d1 = int(rng.integers(0, max_regular + 1))
        d2 = int(rng.integers(0, max_regular + 1))
        m = sum(primal) + sum(e + 1 for e in dual) + d1 + d2
        n = sum(e + 1 for e in primal) + sum(dual) + d1 + d2
        if m >= 1 and n >= 1:
            return assemble_pencil(rng, primal, dual, d1, d2)


def random_integer_pencil(rng, m: int, n: int, lo: int = -3, hi: int = 3) -> Pencil:
    A = rng.integers(lo, hi + 1, size=(m, n)).astype(float)
    B = rng.integers(lo, hi + 1, size=(m, n)).astype(float)
    return Pencil(A, B)
