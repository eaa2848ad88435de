"""Direct space decompositions and the projector system of a pencil.

Produces the eight subspaces

    R^n = Xs1 + Xs2 + X1 + X2,      R^m = Ys1 + Ys2 + Y1 + Y2

together with the projectors S1, S2, P1, P2 (domain side), F1, F2, Q1, Q2
(codomain side), the semi-inverses of the generic, differential and algebraic
blocks, and an identity report. The blocks of A and B are zero across the
splitting except

    A: Xs1 -> Ys1 (invertible),  X1 -> Y1 (invertible)
    B: Xs1 -> Ys1 + Ys2,  Xs2 -> Ys1,  X1 -> Y1,  X2 -> Y2 (invertible).

Construction: the span of all primal chain vectors and the span of their
A-images are split off first; the deflated pencil (full column rank) is
decomposed through its transpose, which has only primal chains; transposing
those projectors yields the deflated decomposition, which is lifted back with
least-squares corrections so the invariances hold in the original coordinates.
Correctness is gated on the identity suite, not on the construction path.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import (DecompositionInconsistent, IndexTooHigh, NotRegular,
                     ShapeMismatch, SingularBlock)
from .kernel import MinimalBasis, Side, polynomial_kernel_basis
from .pencil import (Pencil, RankTolerance, classify, invertibility_estimate,
                     kernel_basis, numerical_rank, range_basis)

X_NAMES = ("Xs1", "Xs2", "X1", "X2")
Y_NAMES = ("Ys1", "Ys2", "Y1", "Y2")


def _orth(cols: np.ndarray) -> np.ndarray:
    """Orthonormal basis of the column span (preserves the span exactly)."""
    if cols.size == 0:
        return cols.reshape(cols.shape[0], 0)
    return range_basis(cols)


def _empty(n: int) -> np.ndarray:
    return np.zeros((n, 0))


def max_principal_angle(U: np.ndarray, V: np.ndarray) -> float:
    """Largest principal angle (radians) between two column spans of equal dim.

    Uses the sine-based formula for small angles, which stays accurate where
    arccos of a near-unit cosine would not.
    """
    U = _orth(np.asarray(U, dtype=float))
    V = _orth(np.asarray(V, dtype=float))
    if U.shape[1] != V.shape[1]:
        return float(np.pi / 2)
    if U.shape[1] == 0:
        return 0.0
    cos_min = float(np.linalg.svd(U.T @ V, compute_uv=False).min())
    resid = V - U @ (U.T @ V)
    sin_max = float(np.linalg.svd(resid, compute_uv=False).max()) if resid.size else 0.0
    if cos_min ** 2 > 0.5:
        return float(np.arcsin(np.clip(sin_max, -1.0, 1.0)))
    return float(np.arccos(np.clip(cos_min, -1.0, 1.0)))


@dataclass
class IdentityReport:
    """Max residual per identity family (normalized by operator scale)."""

    families: dict
    conditions: dict = field(default_factory=dict)

    @property
    def max_residual(self) -> float:
        return max(self.families.values()) if self.families else 0.0

    def to_dict(self):
        return {"families": dict(self.families),
                "conditions": dict(self.conditions),
                "max_residual": self.max_residual}


@dataclass
class Decomposition:
    """Subspace bases, projector system, semi-inverses and restricted blocks."""

    pencil: Pencil
    bases: dict                    # name -> orthonormal basis columns
    S1: np.ndarray
    S2: np.ndarray
    P1: np.ndarray
    P2: np.ndarray
    F1: np.ndarray
    F2: np.ndarray
    Q1: np.ndarray
    Q2: np.ndarray
    coord_rows_x: dict             # name -> rows mapping R^n to basis coords
    coord_rows_y: dict
    semi_inverses: dict            # "Agen", "A1", "B2" -> n x m matrix
    blocks: dict                   # name -> (coord matrix, (domain, codomain))
    dims: dict
    report: IdentityReport | None = None

    @property
    def S(self):
        return self.S1 + self.S2

    @property
    def P(self):
        return self.P1 + self.P2

    @property
    def F(self):
        return self.F1 + self.F2

    @property
    def Q(self):
        return self.Q1 + self.Q2

    def basis(self, name: str) -> np.ndarray:
        return self.bases[name]

    def components(self, x: np.ndarray) -> dict:
        """Ambient component vectors of x for the four domain subspaces."""
        x = np.asarray(x, dtype=float)
        return {"xs1": self.S1 @ x, "xs2": self.S2 @ x,
                "xp1": self.P1 @ x, "xp2": self.P2 @ x}

    def coords(self, x: np.ndarray, name: str) -> np.ndarray:
        """Coordinates of the component of x in the named subspace basis."""
        return self.coord_rows_x[name] @ x

    def to_dict(self):
        out = {"dims": dict(self.dims)}
        for name, b in self.bases.items():
            out.setdefault("bases", {})[name] = {
                "rows": b.shape[0], "cols": b.shape[1],
                "data": [float(v) for v in b.flatten()]}
        for name in ("S1", "S2", "P1", "P2", "F1", "F2", "Q1", "Q2"):
            mat = getattr(self, name)
            out.setdefault("projectors", {})[name] = {
                "rows": mat.shape[0], "cols": mat.shape[1],
                "data": [float(v) for v in mat.flatten()]}
        if self.report is not None:
            out["residuals"] = self.report.to_dict()
        return out


def projectors_from_bases(blocks):
    """Projectors onto each block span along the others, plus coordinate rows.

    blocks: list of basis matrices whose columns jointly span the full space.
    """
    n = blocks[0].shape[0]
    T = np.hstack([b for b in blocks]) if blocks else np.eye(n)
    if T.shape != (n, n):
        raise DecompositionInconsistent(
            f"basis blocks stack to shape {T.shape}, expected square of size {n}")
    if invertibility_estimate(T) > 1e12:
        raise DecompositionInconsistent("combined subspace basis is ill conditioned")
    Tinv = np.linalg.inv(T)
    projectors, rows = [], []
    at = 0
    for b in blocks:
        d = b.shape[1]
        r = Tinv[at:at + d, :]
        projectors.append(b @ r if d else np.zeros((n, n)))
        rows.append(r)
        at += d
    return projectors, rows


def _sample_shift(rng) -> float:
    return float(rng.uniform(-10.0, 10.0))


def _regular_split_small(A_r, B_r, rel, rng, cond_limit, abs_tol=0.0):
    """Split a square regular index<=1 pencil into (X1, X2, Y1, Y2) bases.

    X2 = Ker(A_r), Y1 = Range(A_r), Y2 = B_r X2, X1 = (lam0 A_r + B_r)^{-1} Y1
    at a generic sampled lam0. Raises IndexTooHigh when Y1 and Y2 overlap.
    abs_tol floors the rank decisions when A_r may be noise relative to an
    outer operator scale.
    """
    d = A_r.shape[0]
    if d == 0:
        e = _empty(0)
        return e, e, e, e
    X2 = kernel_basis(A_r, rel, abs_tol)
    d2 = X2.shape[1]
    if d2 == 0:
        eye = np.eye(d)
        return eye, _empty(d), eye, _empty(d)
    Y1 = range_basis(A_r, rel, abs_tol)
    BX2 = B_r @ X2
    if numerical_rank(BX2, rel) < d2:
        raise NotRegular("B maps part of Ker(A) to zero: pencil is singular")
    Y2 = _orth(BX2)
    if numerical_rank(np.hstack([Y1, Y2]), rel) < d:
        raise IndexTooHigh("Range(A) and B*Ker(A) overlap: regular index exceeds 1")
    if Y1.shape[1] == 0:
        return _empty(d), X2, Y1, Y2
    X1 = None
    for _ in range(5):
        lam0 = _sample_shift(rng)
        T = lam0 * A_r + B_r
        if invertibility_estimate(T) < cond_limit:
            X1 = _orth(np.linalg.solve(T, Y1))
            break
    if X1 is None:
        raise IndexTooHigh("no generic shift lam0 makes lam0*A + B invertible")
    return X1, X2, Y1, Y2


def regular_split(A_r, B_r, mode: str = "KernelRange",
                  tol: RankTolerance | None = None):
    """Complementary projector pairs (P1, P2, Q1, Q2) of a regular pencil.

    mode "KernelRange" constructs the subspaces directly; mode "Residue"
    evaluates the residue formula at mu = 0 by trapezoidal contour quadrature.
    Both modes agree to about 1e-8 on index<=1 pencils.
    """
    A_r = np.asarray(A_r, dtype=float)
    B_r = np.asarray(B_r, dtype=float)
    tol = tol or RankTolerance()
    rel = tol.threshold(A_r.shape)
    cond_limit = 1.0 / (100.0 * rel)
    if mode == "Residue":
        return _residue_projectors(A_r, B_r)
    rng = np.random.default_rng(tol.seed + 11)
    abs_tol = 1e-9 * (np.linalg.norm(A_r, 2) + np.linalg.norm(B_r, 2) + 1.0)
    X1, X2, Y1, Y2 = _regular_split_small(A_r, B_r, rel, rng, cond_limit, abs_tol)
    (P1, P2), _ = projectors_from_bases([X1, X2])
    (Q1, Q2), _ = projectors_from_bases([Y1, Y2])
    return P1, P2, Q1, Q2


def _residue_projectors(A_r, B_r, nodes: int = 64):
    """Residue formula for the regular split via contour quadrature at mu = 0."""
    d = A_r.shape[0]
    if d == 0:
        z = np.zeros((0, 0))
        return z, z, z, z
    # Contour radius: safely inside the nearest nonzero pole of (A + mu B)^{-1}.
    try:
        poles = scipy.linalg.eigvals(A_r, -B_r)
        finite = poles[np.isfinite(poles)]
        nonzero = np.abs(finite)[np.abs(finite) > 1e-10]
        radius = 0.1 * float(nonzero.min()) if nonzero.size else 0.1
    except Exception:
        radius = 0.1
    theta = 2.0 * np.pi * np.arange(nodes) / nodes
    P1 = np.zeros((d, d), dtype=complex)
    Q1 = np.zeros((d, d), dtype=complex)
    for th in theta:
        mu = radius * np.exp(1j * th)
        R = np.linalg.inv(A_r + mu * B_r)
        P1 += R @ A_r
        Q1 += A_r @ R
    P1 = np.real(P1) / nodes
    Q1 = np.real(Q1) / nodes
    return P1, np.eye(d) - P1, Q1, np.eye(d) - Q1


def _chain_matrices(basis: MinimalBasis, n: int):
    """(leading, non_leading) coefficient column matrices of a chain basis."""
    lead, nonlead = [], []
    for sol in basis.solutions:
        lead.append(sol.coeffs[-1])
        nonlead.extend(sol.coeffs[:-1])
    lead_m = np.column_stack(lead) if lead else _empty(n)
    non_m = np.column_stack(nonlead) if nonlead else _empty(n)
    return lead_m, non_m


def _invariant_complement(A, B, Xs, Ys, rel):
    """Complement pair (Xr, Yr) of an invariant pair (Xs, Ys).

    With orthonormal starting complements (Xc, Yc), A and B are block upper
    triangular; tilting the complements by graph maps R and L removes the
    off-diagonal couplings iff the coupled generalized Sylvester system

        A11 R - L A22 = -A12,     B11 R - L B22 = -B12

    holds, which is solvable whenever a decomposition exists. Solved by
    least squares; the identity suite gates the result.
    """
    m, n = A.shape
    ds_x, ds_y = Xs.shape[1], Ys.shape[1]
    Xc = kernel_basis(Xs.T, rel) if ds_x else np.eye(n)
    Yc = kernel_basis(Ys.T, rel) if ds_y else np.eye(m)
    rho_x, rho_y = Xc.shape[1], Yc.shape[1]
    if rho_x != rho_y:
        raise DecompositionInconsistent(
            f"complement dims disagree: {rho_x} vs {rho_y}")
    if rho_x == 0 or ds_y == 0:
        return Xc, Yc
    A11 = Ys.T @ A @ Xs
    A12 = Ys.T @ A @ Xc
    A22 = Yc.T @ A @ Xc
    B11 = Ys.T @ B @ Xs
    B12 = Ys.T @ B @ Xc
    B22 = Yc.T @ B @ Xc
    rho = rho_x
    eye_r = np.eye(rho)
    eye_y = np.eye(ds_y)
    top = np.hstack([np.kron(eye_r, A11), -np.kron(A22.T, eye_y)])
    bot = np.hstack([np.kron(eye_r, B11), -np.kron(B22.T, eye_y)])
    Msys = np.vstack([top, bot])
    rhs = -np.concatenate([_vec(A12), _vec(B12)])
    sol, *_ = np.linalg.lstsq(Msys, rhs, rcond=None)
    R = sol[:ds_x * rho].reshape((ds_x, rho), order="F")
    L = sol[ds_x * rho:].reshape((ds_y, rho), order="F")
    return _orth(Xc + Xs @ R), _orth(Yc + Ys @ L)


def _coord_rows(parts):
    """Coordinate-extraction rows for each block of a basis partition."""
    _, rows = projectors_from_bases(parts)
    return rows


def _primal_only_split(A, B, chains: MinimalBasis, rel, rng, cond_limit,
                       abs_tol=0.0):
    """Eight subspace bases for a pencil whose dual defect is zero.

    The domain singular part is the span of all chain vectors, the codomain
    singular part the span of their A-images (Ys2 = {0}); a jointly tilted
    complement pair hosts the regular split.
    """
    m, n = A.shape
    lead, nonlead = _chain_matrices(chains, n)
    Xs2 = _orth(lead)
    Xs1 = _orth(nonlead)
    Xs_all = _orth(np.hstack([lead, nonlead])) if (lead.shape[1] +
                                                   nonlead.shape[1]) else _empty(n)
    Ys1 = _orth(A @ nonlead) if nonlead.shape[1] else _empty(m)
    if Ys1.shape[1] != Xs1.shape[1]:
        raise DecompositionInconsistent("chain images are rank deficient")
    rho = n - Xs_all.shape[1]
    Xr, Yr = _invariant_complement(A, B, Xs_all, Ys1, rel)
    if Xr.shape[1] != rho:
        raise DecompositionInconsistent(
            f"regular complement has dim {Xr.shape[1]}, expected {rho}")
    # Faithful coordinates of the regular block in the tilted complements.
    rows_y = _coord_rows([Ys1, Yr]) if m else [np.zeros((0, 0))] * 2
    C_yr = rows_y[1] if m else np.zeros((0, 0))
    A_rr = C_yr @ A @ Xr if rho else np.zeros((0, 0))
    B_rr = C_yr @ B @ Xr if rho else np.zeros((0, 0))
    x1c, x2c, y1c, y2c = _regular_split_small(A_rr, B_rr, rel, rng, cond_limit,
                                              abs_tol)
    return {"Xs1": Xs1, "Xs2": Xs2,
            "X1": Xr @ x1c if x1c.shape[1] else _empty(n),
            "X2": Xr @ x2c if x2c.shape[1] else _empty(n),
            "Ys1": Ys1, "Ys2": _empty(m),
            "Y1": Yr @ y1c if y1c.shape[1] else _empty(m),
            "Y2": Yr @ y2c if y2c.shape[1] else _empty(m)}


def _range_of_projector(proj: np.ndarray, expected: int) -> np.ndarray:
    if expected == 0:
        return _empty(proj.shape[0])
    basis = range_basis(proj, 1e-9)
    if basis.shape[1] != expected:
        raise DecompositionInconsistent(
            f"projector range has dim {basis.shape[1]}, expected {expected}")
    return basis


def _vec(mat: np.ndarray) -> np.ndarray:
    return mat.flatten(order="F")


def _solve_lift(R_A, R_B, C_A, C_B, rhs_A, rhs_B, ku, kp, d):
    """Solve R_A G - D C_A = rhs_A, R_B G - D C_B = rhs_B for (G, D)."""
    if d == 0:
        return np.zeros((ku, 0)), np.zeros((kp, 0))
    eye_d = np.eye(d)
    eye_p = np.eye(kp)
    top = np.hstack([np.kron(eye_d, R_A), -np.kron(C_A.T, eye_p)])
    bot = np.hstack([np.kron(eye_d, R_B), -np.kron(C_B.T, eye_p)])
    M = np.vstack([top, bot])
    rhs = np.concatenate([_vec(rhs_A), _vec(rhs_B)])
    sol, *_ = np.linalg.lstsq(M, rhs, rcond=None)
    G = sol[:ku * d].reshape((ku, d), order="F")
    D = sol[ku * d:].reshape((kp, d), order="F")
    return G, D


def _decompose_singular(p: Pencil, primal: MinimalBasis, dual: MinimalBasis,
                        tol: RankTolerance):
    A, B = p.A, p.B
    m, n = p.m, p.n
    rel = tol.threshold(p.shape)
    cond_limit = 1.0 / (100.0 * rel)
    rng = np.random.default_rng(tol.seed + 23)

    lead, nonlead = _chain_matrices(primal, n)
    N = lead.shape[1]
    Kp = nonlead.shape[1]
    Xs2 = _orth(lead)
    Xs1p = _orth(nonlead)
    U_u = _orth(np.hstack([lead, nonlead]))
    if U_u.shape[1] != N + Kp:
        raise DecompositionInconsistent("primal chain vectors are dependent")
    V_p = _orth(A @ nonlead) if Kp else _empty(m)
    if V_p.shape[1] != Kp:
        raise DecompositionInconsistent("primal chain images are dependent")

    X_c = kernel_basis(U_u.T, rel) if U_u.shape[1] else np.eye(n)
    Y_c = kernel_basis(V_p.T, rel) if V_p.shape[1] else np.eye(m)
    At = Y_c.T @ A @ X_c
    Bt = Y_c.T @ B @ X_c
    nt, mt = X_c.shape[1], Y_c.shape[1]

    # The transposed deflated pencil carries only primal chains (the duals of
    # the original); decompose it directly and transpose the projectors back.
    abs_tol = 1e-9 * (np.linalg.norm(A, 2) + np.linalg.norm(B, 2) + 1.0)
    if mt > 0:
        hat_pencil = Pencil(At.T, Bt.T)
        hat_chains = polynomial_kernel_basis(hat_pencil, Side.PRIMAL, tol)
        if len(hat_chains) != len(dual.solutions):
            raise DecompositionInconsistent(
                "deflated dual chain count disagrees with the dual defect")
        hat = _primal_only_split(At.T, Bt.T, hat_chains, rel, rng, cond_limit,
                                 abs_tol)
    else:
        hat = {k: _empty(mt) for k in X_NAMES} | {k: _empty(nt) for k in Y_NAMES}
    (hS1, hS2, hP1, hP2), _ = projectors_from_bases(
        [hat["Xs1"], hat["Xs2"], hat["X1"], hat["X2"]]) if mt else (
        (np.zeros((0, 0)),) * 4, None)
    (hF1, hF2, hQ1, hQ2), _ = projectors_from_bases(
        [hat["Ys1"], hat["Ys2"], hat["Y1"], hat["Y2"]]) if nt else (
        (np.zeros((0, 0)),) * 4, None)

    dims_hat = {k: hat[k].shape[1] for k in hat}
    Km = dims_hat["Xs1"]
    M_cnt = dims_hat["Xs2"]
    d1 = dims_hat["X1"]
    d2 = dims_hat["X2"]

    W_s1 = _range_of_projector(hF1.T, Km) if nt else _empty(0)
    W_1 = _range_of_projector(hQ1.T, d1) if nt else _empty(0)
    W_2 = _range_of_projector(hQ2.T, d2) if nt else _empty(0)
    Z_s1 = _range_of_projector(hS1.T, Km) if mt else _empty(0)
    Z_s2 = _range_of_projector(hS2.T, M_cnt) if mt else _empty(0)
    Z_1 = _range_of_projector(hP1.T, d1) if mt else _empty(0)
    Z_2 = _range_of_projector(hP2.T, d2) if mt else _empty(0)

    ku = N + Kp
    R_A = V_p.T @ A @ U_u if Kp else np.zeros((0, ku))
    R_B = V_p.T @ B @ U_u if Kp else np.zeros((0, ku))

    # X2 lift: enforce A X2 = 0 exactly via the chain-image coordinates.
    rhs2 = -(V_p.T @ A @ X_c @ W_2) if Kp else np.zeros((0, d2))
    G2, *_ = np.linalg.lstsq(R_A, rhs2, rcond=None) if Kp else (
        np.zeros((ku, d2)),)
    X2 = X_c @ W_2 + U_u @ G2 if d2 else _empty(n)

    # X1/Y1 lift: a coupled least-squares problem (consistent by construction).
    C_A1 = Z_1.T @ (At @ W_1) if d1 else np.zeros((0, 0))
    C_B1 = Z_1.T @ (Bt @ W_1) if d1 else np.zeros((0, 0))
    rhs_A1 = -(V_p.T @ A @ X_c @ W_1) if Kp else np.zeros((0, d1))
    rhs_B1 = -(V_p.T @ B @ X_c @ W_1) if Kp else np.zeros((0, d1))
    G1, D1 = _solve_lift(R_A, R_B, C_A1, C_B1, rhs_A1, rhs_B1, ku, Kp, d1)
    X1 = X_c @ W_1 + U_u @ G1 if d1 else _empty(n)
    Y1 = Y_c @ Z_1 + (V_p @ D1 if Kp else 0.0) if d1 else _empty(m)

    # Y2 lift: direct, since the algebraic block is invertible.
    if d2:
        C_B2 = Z_2.T @ (Bt @ W_2)
        if invertibility_estimate(C_B2) > cond_limit:
            raise SingularBlock("deflated algebraic block is singular")
        extra = (V_p.T @ B @ X_c @ W_2 + R_B @ G2) if Kp else np.zeros((0, d2))
        D2 = np.linalg.solve(C_B2.T, extra.T).T if Kp else np.zeros((0, d2))
        Y2 = Y_c @ Z_2 + (V_p @ D2 if Kp else 0.0)
    else:
        Y2 = _empty(m)

    Xs1 = np.hstack([Xs1p, X_c @ W_s1]) if (Kp + Km) else _empty(n)
    Ys1 = np.hstack([V_p, Y_c @ Z_s1]) if (Kp + Km) else _empty(m)
    Ys2 = Y_c @ Z_s2 if M_cnt else _empty(m)

    return {"Xs1": _orth(Xs1), "Xs2": Xs2,
            "X1": _orth(np.asarray(X1)), "X2": _orth(np.asarray(X2)),
            "Ys1": _orth(Ys1), "Ys2": _orth(Ys2),
            "Y1": _orth(np.asarray(Y1)), "Y2": _orth(np.asarray(Y2))}


def semi_inverse(which: str, d: Decomposition, p: Pencil | None = None) -> np.ndarray:
    """Semi-inverse n x m matrix of the named block ("Agen", "A1" or "B2").

    Defined by the projector triples (e.g. Agen_inv @ Agen = S1,
    Agen @ Agen_inv = F1, Agen_inv = S1 @ Agen_inv); raises SingularBlock when
    the restricted block is not invertible on its subspace.
    """
    p = p or d.pencil
    spec = {"Agen": ("Xs1", "Ys1", p.A),
            "A1": ("X1", "Y1", p.A),
            "B2": ("X2", "Y2", p.B)}
    if which not in spec:
        raise ShapeMismatch(f"unknown semi-inverse '{which}'")
    xname, yname, op = spec[which]
    bx = d.bases[xname]
    cy = d.coord_rows_y[yname]
    if bx.shape[1] == 0:
        return np.zeros((p.n, p.m))
    block = cy @ op @ bx
    if invertibility_estimate(block) > 1e12:
        raise SingularBlock(f"block {which} is singular on its subspace")
    return bx @ np.linalg.solve(block, cy)


def _family_residual(mats, scale):
    worst = 0.0
    for mat in mats:
        if mat.size:
            worst = max(worst, float(np.max(np.abs(mat))))
    return worst / scale


def verify_decomposition(d: Decomposition, p: Pencil | None = None) -> IdentityReport:
    """Residual per identity family; report-only, never raises."""
    p = p or d.pencil
    A, B = p.A, p.B
    n, m = p.n, p.m
    op_scale = float(np.linalg.norm(A, 2) + np.linalg.norm(B, 2) + 1.0)
    projs_x = [d.S1, d.S2, d.P1, d.P2]
    projs_y = [d.F1, d.F2, d.Q1, d.Q2]
    proj_scale = max([1.0] + [float(np.linalg.norm(P, 2)) for P in projs_x + projs_y])

    fam = {}
    fam["idempotence"] = _family_residual(
        [P @ P - P for P in projs_x + projs_y], proj_scale ** 2)
    cross = [projs_x[i] @ projs_x[j] for i in range(4) for j in range(4) if i != j]
    cross += [projs_y[i] @ projs_y[j] for i in range(4) for j in range(4) if i != j]
    fam["complementarity"] = _family_residual(
        [sum(projs_x) - np.eye(n), sum(projs_y) - np.eye(m)] + cross,
        proj_scale ** 2)
    S, P_, F, Q = d.S, d.P, d.F, d.Q
    fam["intertwining"] = _family_residual(
        [F @ A - A @ S, F @ B - B @ S, Q @ A - A @ P_, Q @ B - B @ P_,
         d.Q1 @ A - A @ d.P1, d.Q2 @ A - A @ d.P2,
         d.Q1 @ B - B @ d.P1, d.Q2 @ B - B @ d.P2],
        op_scale * proj_scale)
    fam["annihilation"] = _family_residual(
        [A @ d.S2, d.F2 @ A, d.F2 @ B @ d.S2, A @ d.P2],
        op_scale * proj_scale)
    fam["block_structure"] = _family_residual(
        [F @ A @ P_, Q @ A @ S, F @ B @ P_, Q @ B @ S,
         A @ d.bases["Xs2"],
         d.F2 @ B @ d.S2],
        op_scale * proj_scale ** 2)
    agen, a1, b2 = (d.semi_inverses[k] for k in ("Agen", "A1", "B2"))
    EAgen = d.F1 @ A
    EA1 = d.Q1 @ A
    EB2 = d.Q2 @ B
    fam["semi_inverse"] = _family_residual(
        [agen @ EAgen - d.S1, EAgen @ agen - d.F1, agen - d.S1 @ agen,
         a1 @ EA1 - d.P1, EA1 @ a1 - d.Q1, a1 - d.P1 @ a1,
         b2 @ EB2 - d.P2, EB2 @ b2 - d.Q2, b2 - d.P2 @ b2],
        max(op_scale * max(float(np.linalg.norm(M, 2)) for M in (agen, a1, b2, np.zeros((1, 1)))), 1.0))

    conds = {}
    for name, (block, _tags) in d.blocks.items():
        if name in ("A_gen", "A_1", "B_2") and block.size:
            conds[name] = invertibility_estimate(block)
    if n == m and d.bases["Xs1"].shape[1] == 0 and d.bases["Xs2"].shape[1] == 0:
        conds["G"] = invertibility_estimate(A + B @ d.P2)
    return IdentityReport(families=fam, conditions=conds)


def decompose(p: Pencil, bases=None, tol: RankTolerance | None = None,
              identity_tol: float = 1e-10) -> Decomposition:
    """Full decomposition of a pencil whose regular block has index <= 1.

    bases: optional precomputed (primal, dual) MinimalBasis pair.
    Raises IndexTooHigh when the regular block has index above one and
    DecompositionInconsistent when the identity residuals exceed identity_tol.
    """
    tol = tol or RankTolerance()
    cls = classify(p, tol)
    rel = tol.threshold(p.shape)
    cond_limit = 1.0 / (100.0 * rel)
    n, m = p.n, p.m

    if cls.is_regular:
        if cls.index == "index>1":
            raise IndexTooHigh("regular pencil has index above 1")
        rng = np.random.default_rng(tol.seed + 11)
        abs_tol = 1e-9 * p.scale()
        X1, X2, Y1, Y2 = _regular_split_small(p.A, p.B, rel, rng, cond_limit,
                                              abs_tol)
        sub = {"Xs1": _empty(n), "Xs2": _empty(n), "X1": X1, "X2": X2,
               "Ys1": _empty(m), "Ys2": _empty(m), "Y1": Y1, "Y2": Y2}
    else:
        if bases is not None:
            primal, dual = bases
        else:
            primal = polynomial_kernel_basis(p, Side.PRIMAL, tol)
            dual = polynomial_kernel_basis(p, Side.DUAL, tol)
        sub = _decompose_singular(p, primal, dual, tol)

    (S1, S2, P1, P2), rows_x = projectors_from_bases(
        [sub[k] for k in X_NAMES])
    (F1, F2, Q1, Q2), rows_y = projectors_from_bases(
        [sub[k] for k in Y_NAMES])
    coord_x = dict(zip(X_NAMES, rows_x))
    coord_y = dict(zip(Y_NAMES, rows_y))

    dec = Decomposition(
        pencil=p, bases=sub,
        S1=S1, S2=S2, P1=P1, P2=P2, F1=F1, F2=F2, Q1=Q1, Q2=Q2,
        coord_rows_x=coord_x, coord_rows_y=coord_y,
        semi_inverses={}, blocks={},
        dims={k: sub[k].shape[1] for k in list(X_NAMES) + list(Y_NAMES)})

    def block(op, xn, yn):
        bx, cy = sub[xn], coord_y[yn]
        if bx.shape[1] == 0 or cy.shape[0] == 0:
            return np.zeros((cy.shape[0], bx.shape[1]))
        return cy @ op @ bx

    dec.blocks = {
        "A_gen": (block(p.A, "Xs1", "Ys1"), ("Xs1", "Ys1")),
        "B_gen": (block(p.B, "Xs1", "Ys1"), ("Xs1", "Ys1")),
        "B_und": (block(p.B, "Xs2", "Ys1"), ("Xs2", "Ys1")),
        "B_ov": (block(p.B, "Xs1", "Ys2"), ("Xs1", "Ys2")),
        "A_1": (block(p.A, "X1", "Y1"), ("X1", "Y1")),
        "B_1": (block(p.B, "X1", "Y1"), ("X1", "Y1")),
        "B_2": (block(p.B, "X2", "Y2"), ("X2", "Y2")),
    }
    dec.semi_inverses = {k: semi_inverse(k, dec, p) for k in ("Agen", "A1", "B2")}
    dec.report = verify_decomposition(dec, p)
    if dec.report.max_residual > identity_tol:
        raise DecompositionInconsistent(
            f"identity residuals reach {dec.report.max_residual:.3e} "
            f"(tolerance {identity_tol:.1e}): "
            + ", ".join(f"{k}={v:.2e}" for k, v in dec.report.families.items()))
    return dec
