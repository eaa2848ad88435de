"""Reduction of a semilinear DAE to coupled differential + algebraic parts.

With the projector system in place the equation d/dt[A x] + B x = f(t, x)
splits into

    d/dt x_s1 = Agen_inv (F1 f - F1 B (S1+S2) x)        (generic part)
    d/dt x_p1 = A1_inv   (Q1 f - Q1 B P1 x)             (differential part)
    0         = B2_inv Q2 f - x_p2                       (algebraic part)
    0         = F2 f - F2 B S1 x                         (overdetermined part)

The right sides of the first two lines form the drift evaluated by
:meth:`ReducedSystem.upsilon`; :func:`consistency_project` resolves the
algebraic part for x_p2 by damped Newton with the constraint Jacobian
Phi = [d/dx (Q2 f) - B] P2 restricted to X2 -> Y2.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .decomposition import Decomposition
from .errors import NoConvergence, PhiSingular, ShapeMismatch
from .expr import compile_fn
from .problem import SemilinearDAE


class ConsistencyResiduals(NamedTuple):
    """Norms of the algebraic residual and the overdetermined residual.

    ae2 is None for regular pencils (there is no overdetermined part).
    """

    ae1: float
    ae2: float | None


@dataclass
class ConsistencyResult:
    x: np.ndarray          # full state with the resolved algebraic component
    x_p2: np.ndarray       # ambient component in X2
    iterations: int
    residual: float
    phi_condition: float


@dataclass
class ReducedSystem:
    """Evaluators for the split system attached to one decomposition."""

    dae: SemilinearDAE
    dec: Decomposition

    def __post_init__(self):
        if self.dec.pencil is not self.dae.pencil and \
                self.dec.pencil.shape != self.dae.pencil.shape:
            raise ShapeMismatch("decomposition does not match the problem pencil")
        d = self.dec
        p = self.dae.pencil
        self._agen_f = d.semi_inverses["Agen"] @ d.F1
        self._a1_f = d.semi_inverses["A1"] @ d.Q1
        self._b2_f = d.semi_inverses["B2"] @ d.Q2
        self._agen_b = d.semi_inverses["Agen"] @ (d.F1 @ p.B @ d.S)
        self._a1_b = d.semi_inverses["A1"] @ (d.Q1 @ p.B @ d.P1)
        self._f2 = d.F2
        self._bov = d.F2 @ p.B @ d.S1
        self._bx2 = d.bases["X2"]
        self._cy2 = d.coord_rows_y["Y2"]
        self._cy2_b_bx2 = self._cy2 @ p.B @ self._bx2
        self._fns = None

    @property
    def n(self) -> int:
        return self.dae.n

    @property
    def d2(self) -> int:
        return self._bx2.shape[1]

    @property
    def is_regular(self) -> bool:
        return self.dec.dims["Ys2"] == 0 and self.dec.dims["Xs2"] == 0 \
            and self.dec.dims["Xs1"] == 0

    # ------------------------------------------------------------- evaluators

    def upsilon(self, t: float, x) -> tuple[np.ndarray, np.ndarray]:
        """Drift components (d/dt x_s1, d/dt x_p1) as ambient vectors."""
        x = np.asarray(x, dtype=float)
        fv = self.dae.f_vec(t, x)
        u_s1 = self._agen_f @ fv - self._agen_b @ x
        u_p1 = self._a1_f @ fv - self._a1_b @ x
        return u_s1, u_p1

    def upsilon_total(self, t: float, x) -> np.ndarray:
        u_s1, u_p1 = self.upsilon(t, x)
        return u_s1 + u_p1

    def pi(self, t: float, x) -> np.ndarray:
        """Differential drift of the regular case (alias of the X1 component)."""
        x = np.asarray(x, dtype=float)
        fv = self.dae.f_vec(t, x)
        return self._a1_f @ fv - self._a1_b @ x

    def constraint_residuals(self, t: float, x) -> ConsistencyResiduals:
        x = np.asarray(x, dtype=float)
        fv = self.dae.f_vec(t, x)
        ae1 = float(np.linalg.norm(self._b2_f @ fv - self.dec.P2 @ x))
        if self.is_regular:
            return ConsistencyResiduals(ae1=ae1, ae2=None)
        ae2 = float(np.linalg.norm(self._f2 @ fv - self._bov @ x))
        return ConsistencyResiduals(ae1=ae1, ae2=ae2)

    def dae_residual(self, t: float, x) -> float:
        """Norm of A*(drift) + B x - f(t, x); zero on the consistency manifold."""
        x = np.asarray(x, dtype=float)
        drift = self.upsilon_total(t, x)
        return float(np.linalg.norm(
            self.dae.pencil.A @ drift + self.dae.pencil.B @ x - self.dae.f_vec(t, x)))

    # ---------------------------------------------------- vectorized plumbing

    def _compiled(self):
        if self._fns is None:
            n = self.n
            f_fns = [compile_fn(c, n) for c in self.dae.f]
            jac_fns = [[compile_fn(d, n) for d in row]
                       for row in self.dae.jac_exprs()]
            self._fns = (f_fns, jac_fns)
        return self._fns

    def f_many(self, t, X) -> np.ndarray:
        """f evaluated on a batch: t (k,), X (k, n) -> (k, m)."""
        f_fns, _ = self._compiled()
        return np.column_stack([fn(t, X) for fn in f_fns])

    def jac_many(self, t, X) -> np.ndarray:
        """State Jacobian on a batch -> (k, m, n)."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        k = X.shape[0]
        out = np.empty((k, self.dae.m, self.n))
        if self.dae.fd_jacobian:
            for j in range(self.n):
                h = 1e-6 * (1.0 + np.abs(X[:, j]))
                Xp = X.copy()
                Xm = X.copy()
                Xp[:, j] += h
                Xm[:, j] -= h
                out[:, :, j] = (self.f_many(t, Xp) - self.f_many(t, Xm)) \
                    / (2.0 * h[:, None])
            return out
        _, jac_fns = self._compiled()
        for i, row in enumerate(jac_fns):
            for j, fn in enumerate(row):
                out[:, i, j] = fn(t, X)
        return out


def build_reduced(dae: SemilinearDAE, dec: Decomposition) -> ReducedSystem:
    """Attach split-system evaluators to a decomposition of the problem pencil."""
    if dec.pencil.shape != dae.pencil.shape:
        raise ShapeMismatch("pencil shapes differ between problem and decomposition")
    return ReducedSystem(dae=dae, dec=dec)


def phi_operator(rs: ReducedSystem, t: float, x):
    """Constraint Jacobian Phi = [d/dx(Q2 f) - B] P2 restricted X2 -> Y2.

    Returns the coordinate matrix in the stored bases and its condition
    estimate (singularity is reported through the estimate, never raised).
    """
    x = np.asarray(x, dtype=float)
    d2 = rs.d2
    if d2 == 0:
        return np.zeros((0, 0)), 1.0
    jac = rs.dae.jac_mat(t, x)
    term = rs._cy2 @ (rs.dec.Q2 @ jac) @ rs._bx2
    phi = term - rs._cy2_b_bx2
    svals = np.linalg.svd(phi, compute_uv=False)
    # Reference the estimate to the scale of the terms before cancellation,
    # so a block that vanishes by cancellation is reported as singular.
    scale = max(float(svals[0]),
                float(np.linalg.norm(term) + np.linalg.norm(rs._cy2_b_bx2)),
                1e-300)
    cond = float("inf") if svals[-1] == 0 else float(scale / svals[-1])
    return phi, cond


def _phi_cond_limit(rs: ReducedSystem) -> float:
    eps_rank = float(np.finfo(float).eps) * max(rs.dae.pencil.shape)
    return 1.0 / eps_rank


def consistency_project(rs: ReducedSystem, t: float, x_guess,
                        newton_tol: float | None = None,
                        max_iter: int = 50) -> ConsistencyResult:
    """Resolve the algebraic component x_p2 at fixed (t, x_s1, x_s2, x_p1).

    Damped Newton on the X2 coordinates, refreshing Phi each iteration and
    halving the step (up to 8 times) whenever the residual grows. Raises
    PhiSingular when the constraint Jacobian is numerically singular and
    NoConvergence when the iteration leaves its contraction neighborhood.
    """
    x = np.array(x_guess, dtype=float)
    d2 = rs.d2
    fixed = x - rs.dec.P2 @ x
    xi = rs.dec.coords(x, "X2")
    cond_limit = _phi_cond_limit(rs)
    dec, dae = rs.dec, rs.dae
    bx2, cy2 = rs._bx2, rs._cy2

    def residual_vec(xi_val):
        xx = fixed + bx2 @ xi_val
        fv = dae.f_vec(t, xx)
        return cy2 @ (dec.Q2 @ (fv - dae.pencil.B @ xx)), xx

    if newton_tol is None:
        f0 = dae.f_vec(t, x)
        newton_tol = 1e-10 * (1.0 + float(np.linalg.norm(f0)))
    if d2 == 0:
        return ConsistencyResult(x=x, x_p2=np.zeros(rs.n), iterations=0,
                                 residual=0.0, phi_condition=1.0)

    res, xx = residual_vec(xi)
    rnorm = float(np.linalg.norm(res))
    cond = 1.0
    for it in range(1, max_iter + 1):
        if rnorm <= newton_tol:
            return ConsistencyResult(x=xx, x_p2=bx2 @ xi, iterations=it - 1,
                                     residual=rnorm, phi_condition=cond)
        phi, cond = phi_operator(rs, t, xx)
        if not np.isfinite(cond) or cond > cond_limit:
            raise PhiSingular(
                f"constraint Jacobian is numerically singular (condition "
                f"{cond:.2e} exceeds {cond_limit:.2e} at t={t}); the local "
                "invertibility hypothesis on the algebraic part fails here",
                condition=cond)
        step = np.linalg.solve(phi, res)
        scale = 1.0
        for _ in range(9):
            trial = xi - scale * step
            try:
                res_t, xx_t = residual_vec(trial)
            except Exception:
                scale *= 0.5
                continue
            rt = float(np.linalg.norm(res_t))
            if np.isfinite(rt) and (rt < rnorm or rnorm <= newton_tol):
                xi, res, rnorm, xx = trial, res_t, rt, xx_t
                break
            scale *= 0.5
        else:
            raise NoConvergence(
                f"damped Newton stalled at residual {rnorm:.3e} (t={t}); the "
                "iterate left the contraction neighborhood of the constraint")
    if rnorm <= newton_tol:
        return ConsistencyResult(x=xx, x_p2=bx2 @ xi, iterations=max_iter,
                                 residual=rnorm, phi_condition=cond)
    raise NoConvergence(
        f"no convergence in {max_iter} iterations (residual {rnorm:.3e}); the "
        "guess lies outside the contraction neighborhood of the constraint")


def check_consistency(rs: ReducedSystem, t: float, x) -> ConsistencyResiduals:
    """Residuals of the algebraic and overdetermined parts at (t, x)."""
    return rs.constraint_residuals(t, x)


def consistency_project_batch(rs: ReducedSystem, t_arr, X, newton_tol: float = 1e-10,
                              max_iter: int = 30):
    """Vectorized projection of many states onto the consistency manifold.

    Returns (X_proj, ok_mask); rows that fail to converge or hit a singular
    Jacobian are flagged out instead of raising.
    """
    X = np.array(np.atleast_2d(X), dtype=float)
    t_arr = np.broadcast_to(np.asarray(t_arr, dtype=float), (X.shape[0],)).copy()
    d2 = rs.d2
    k = X.shape[0]
    if d2 == 0:
        return X, np.ones(k, dtype=bool)
    dec = rs.dec
    bx2, cy2 = rs._bx2, rs._cy2
    B = rs.dae.pencil.B
    Q2 = dec.Q2
    fixed = X - X @ dec.P2.T
    xi = X @ dec.coord_rows_x["X2"].T          # (k, d2)
    ok = np.ones(k, dtype=bool)
    cond_limit = _phi_cond_limit(rs)
    M_b = cy2 @ B @ bx2

    def res_of(xi_val):
        XX = fixed + xi_val @ bx2.T
        F = rs.f_many(t_arr, XX)
        R = (F - XX @ B.T) @ (cy2 @ Q2).T
        return R, XX

    R, XX = res_of(xi)
    rnorm = np.linalg.norm(R, axis=1)
    ok &= np.isfinite(rnorm)
    for _ in range(max_iter):
        active = ok & (rnorm > newton_tol)
        if not active.any():
            break
        J = rs.jac_many(t_arr, XX)              # (k, m, n)
        term = np.einsum("ij,kjl,lp->kip", cy2 @ Q2, J, bx2)
        Phi = term - M_b
        with np.errstate(all="ignore"):
            sv = np.linalg.svd(Phi, compute_uv=False)
            scale = np.maximum(sv[:, 0],
                               np.linalg.norm(term, axis=(1, 2))
                               + np.linalg.norm(M_b))
            bad = ~np.isfinite(sv).all(axis=1) | \
                (sv[:, -1] * cond_limit <= scale)
        ok &= ~(bad & active)
        active &= ok
        if not active.any():
            break
        step = np.zeros_like(xi)
        step[active] = np.linalg.solve(Phi[active], R[active][..., None])[..., 0]
        scale = np.ones(k)
        improved = ~active
        for _ in range(9):
            trial = xi - (scale[:, None] * step)
            R_t, XX_t = res_of(trial)
            rt = np.linalg.norm(R_t, axis=1)
            good = active & ~improved & np.isfinite(rt) & (rt < rnorm)
            xi[good] = trial[good]
            R[good] = R_t[good]
            XX[good] = XX_t[good]
            rnorm[good] = rt[good]
            improved |= good
            if improved.all():
                break
            scale[~improved] *= 0.5
        ok &= improved | (rnorm <= newton_tol)
    ok &= rnorm <= newton_tol
    return XX, ok
