"""Adaptive integration of the reduced differential components.

An embedded Runge-Kutta 5(4) pair with PI step control advances the
coordinates of (x_s1, x_p1). At every stage the free component x_s2 is pinned
from the user-supplied curve and the algebraic component x_p2 is re-solved by
damped Newton, warm-started from the previous stage. Termination produces a
verdict: reached the horizon, finite-time blow-up (with an escape-time
estimate), left the declared domain, constraint failure, or a singular
constraint Jacobian.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (EvalDomainError, FitFailed, InconsistentStart,
                     NoConvergence, PhiSingular, ShapeMismatch)
from .expr import evaluate
from .reduction import ReducedSystem, consistency_project

# Dormand-Prince 5(4) tableau (FSAL).
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_B4 = np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640,
                -92097 / 339200, 187 / 2100, 1 / 40])
_ORDER = 5


@dataclass
class IntegratorOptions:
    rtol: float = 1e-8
    atol: float = 1e-10
    consistency_tol: float = 1e-9
    blowup_norm: float = 1e8
    h_min_scale: float = 1e-12
    h0: float | None = None
    max_steps: int = 200_000
    fixed_step: float | None = None
    newton_tol: float | None = None
    domain_bisect_tol: float = 1e-9


@dataclass
class Verdict:
    kind: str                      # global | blowup | left_domain |
    #                                constraint_failure | phi_singular
    t_end: float | None = None
    t_last: float | None = None
    T_est: float | None = None
    weak: bool = False
    witness: str | None = None
    residual: float | None = None

    def to_dict(self):
        return {k: v for k, v in self.__dict__.items() if v is not None or k == "kind"}


@dataclass
class Trajectory:
    times: list
    states: list                   # full state per accepted step
    res_ae1: list
    res_ae2: list                  # zeros for regular problems
    diff_norms: list               # ||(S1+P1) x|| per accepted step
    verdict: Verdict
    stats: dict = field(default_factory=dict)

    @property
    def t_last(self) -> float:
        return self.times[-1]

    def state_array(self) -> np.ndarray:
        return np.array(self.states)

    def sup_norm(self) -> float:
        return float(max(np.linalg.norm(x) for x in self.states))


@dataclass
class FreePin:
    """Pinning of the underdetermined component.

    curve: n expression components of a curve c(t), functions of t only.
    functionals: rows W (k x n) with W x(t) = W c(t) enforced; None selects
    the coordinate rows of the computed S2 projector. W must annihilate the
    algebraic subspace X2 and be invertible on the free subspace Xs2.
    """

    curve: list
    functionals: np.ndarray | None = None


def _curve_value(pin: FreePin, t: float, n: int) -> np.ndarray:
    return np.array([evaluate(c, t, []) for c in pin.curve])


class _Stepper:
    """Shared state for stage assembly during one integration run."""

    def __init__(self, rs: ReducedSystem, pin: FreePin | None,
                 opts: IntegratorOptions):
        self.rs = rs
        self.opts = opts
        dec = rs.dec
        self.bxs1 = dec.bases["Xs1"]
        self.bx1 = dec.bases["X1"]
        self.cxs1 = dec.coord_rows_x["Xs1"]
        self.cx1 = dec.coord_rows_x["X1"]
        self.ds1 = self.bxs1.shape[1]
        self.d1 = self.bx1.shape[1]
        self.n_free = dec.dims["Xs2"]
        self.pin = pin
        if self.n_free and pin is not None:
            W = pin.functionals
            if W is None:
                W = dec.coord_rows_x["Xs2"]
            W = np.atleast_2d(np.asarray(W, dtype=float))
            if W.shape != (self.n_free, rs.n):
                raise ShapeMismatch(
                    f"free-component pin needs {self.n_free} functionals of "
                    f"length {rs.n}")
            WB = W @ dec.bases["Xs2"]
            if np.linalg.cond(WB) > 1e8:
                raise InconsistentStart(
                    "pin functionals are nearly degenerate on the free subspace")
            leak = np.linalg.norm(W @ dec.bases["X2"]) if rs.d2 else 0.0
            if leak > 1e-8 * max(1.0, np.linalg.norm(W)):
                raise InconsistentStart(
                    "pin functionals must annihilate the algebraic subspace X2")
            self._W = W
            self._WB_inv = np.linalg.inv(WB)
        self.warm_p2 = None
        self.newton_iters_last = 0

    def free_component(self, t: float, x_fix: np.ndarray) -> np.ndarray:
        if not self.n_free:
            return np.zeros(self.rs.n)
        c = _curve_value(self.pin, t, self.rs.n)
        xi = self._WB_inv @ (self._W @ c - self._W @ x_fix)
        return self.rs.dec.bases["Xs2"] @ xi

    def assemble(self, t: float, z: np.ndarray) -> np.ndarray:
        """Full consistent state at (t, z); Newton warm start from the run."""
        x_fix = self.bxs1 @ z[:self.ds1] + self.bx1 @ z[self.ds1:]
        x_fix = x_fix + self.free_component(t, x_fix)
        guess = x_fix if self.warm_p2 is None else x_fix + self.warm_p2
        result = consistency_project(self.rs, t, guess,
                                     newton_tol=self.opts.newton_tol)
        self.warm_p2 = result.x_p2
        self.newton_iters_last = max(self.newton_iters_last, result.iterations)
        return result.x

    def rhs(self, t: float, z: np.ndarray):
        x = self.assemble(t, z)
        u_s1, u_p1 = self.rs.upsilon(t, x)
        dz = np.concatenate([self.cxs1 @ u_s1, self.cx1 @ u_p1])
        return dz, x

    def coords(self, x) -> np.ndarray:
        return np.concatenate([self.cxs1 @ x, self.cx1 @ x])


def integrate(rs: ReducedSystem, t0: float, x0, phi_s2=None,
              horizon: float = 10.0,
              opts: IntegratorOptions | None = None) -> Trajectory:
    """Integrate from a consistent initial point up to t0 + horizon.

    phi_s2: list of n t-expressions, a FreePin, or None. Required whenever the
    free subspace Xs2 is nontrivial: the underdetermined component is an
    explicit choice, never a silent default.
    """
    opts = opts or IntegratorOptions()
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (rs.n,):
        raise ShapeMismatch(f"x0 has shape {x0.shape}, expected ({rs.n},)")
    n_free = rs.dec.dims["Xs2"]
    if isinstance(phi_s2, FreePin):
        pin = phi_s2
    elif phi_s2:
        pin = FreePin(curve=list(phi_s2))
    else:
        pin = None
    if n_free and pin is None:
        raise InconsistentStart(
            f"the pencil has a {n_free}-dimensional free component (subspace "
            "Xs2); supply phi_s2 to pin it")
    stepper = _Stepper(rs, pin, opts)

    f_scale = 1.0 + float(np.linalg.norm(rs.dae.f_vec(t0, x0)))
    ctol = opts.consistency_tol * f_scale
    res0 = rs.constraint_residuals(t0, x0)
    if res0.ae1 > ctol or (res0.ae2 is not None and res0.ae2 > ctol):
        raise InconsistentStart(
            f"initial point violates the consistency condition: "
            f"ae1={res0.ae1:.3e}, ae2={res0.ae2 if res0.ae2 is not None else 0.0:.3e} "
            f"(tolerance {ctol:.1e})")
    if n_free:
        c0 = _curve_value(pin, t0, rs.n)
        W = stepper._W
        gap = float(np.linalg.norm(W @ x0 - W @ c0))
        if gap > 1e-7 * (1.0 + float(np.linalg.norm(x0))):
            raise InconsistentStart(
                f"pinned free component disagrees with x0 at t0 (gap {gap:.3e})")
    if not rs.dae.in_domain(t0, x0):
        raise InconsistentStart("x0 lies outside the declared domain")

    stepper.warm_p2 = rs.dec.P2 @ x0
    z = stepper.coords(x0)
    t = float(t0)
    t_end = t0 + horizon

    times = [t]
    states = [x0.copy()]
    res_ae1 = [res0.ae1]
    res_ae2 = [res0.ae2 if res0.ae2 is not None else 0.0]
    diff_norms = [float(np.linalg.norm((rs.dec.S1 + rs.dec.P1) @ x0))]
    newton_per_step = []
    stats = {"accepted": 0, "rejected": 0, "nfev": 0}

    if z.size == 0:
        # Nothing to evolve: track the constraints on a fixed grid.
        return _algebraic_march(rs, stepper, t, x0, t_end, opts, times, states,
                                res_ae1, res_ae2, diff_norms, stats)

    try:
        dz0, _ = stepper.rhs(t, z)
    except (PhiSingular, NoConvergence) as exc:
        raise InconsistentStart(f"cannot evaluate the drift at the start: {exc}")
    stats["nfev"] += 1
    if opts.fixed_step:
        h = float(opts.fixed_step)
    elif opts.h0:
        h = float(opts.h0)
    else:
        h = 0.01 * (1.0 + np.linalg.norm(z)) / (1.0 + np.linalg.norm(dz0))
        h = min(h, horizon / 10.0)

    err_prev = 1.0
    k1 = dz0
    norm_trigger = False
    hmin_trigger = False
    grace = 0
    newton_fail_streak = 0
    last_failure = ""
    verdict = None

    for _ in range(opts.max_steps):
        if t >= t_end - 1e-12 * (1.0 + abs(t_end)):
            verdict = Verdict(kind="global", t_end=t)
            break
        h = min(h, t_end - t)
        h_min = opts.h_min_scale * (1.0 + abs(t))
        if h < h_min and not opts.fixed_step:
            # Step size collapsed. Under error-controller pressure this is
            # blow-up evidence on its own (weak unless the norm trigger also
            # fired); a run of constraint-solver failures away from large
            # states is a constraint failure instead.
            hmin_trigger = True
            if newton_fail_streak >= 3 and not norm_trigger \
                    and diff_norms[-1] < 0.01 * opts.blowup_norm:
                verdict = Verdict(kind="constraint_failure", t_last=t,
                                  residual=res_ae1[-1], witness=last_failure)
            else:
                verdict = Verdict(kind="blowup", t_last=t, weak=not norm_trigger)
            break

        stepper.newton_iters_last = 0
        try:
            stages = [k1]
            for i in range(1, 7):
                zi = z + h * sum(_A[i][j] * stages[j] for j in range(i))
                dzi, _ = stepper.rhs(t + _C[i] * h, zi)
                stages.append(dzi)
            stats["nfev"] += 6
            z5 = z + h * sum(_B5[j] * stages[j] for j in range(7))
            z4 = z + h * sum(_B4[j] * stages[j] for j in range(7))
        except (PhiSingular,) as exc:
            if opts.fixed_step:
                verdict = Verdict(kind="phi_singular", t_last=t,
                                  witness=str(exc))
                break
            stats["rejected"] += 1
            h *= 0.5
            if h < h_min:
                verdict = Verdict(kind="phi_singular", t_last=t, witness=str(exc))
                break
            continue
        except (NoConvergence, EvalDomainError, FloatingPointError,
                OverflowError) as exc:
            if opts.fixed_step:
                verdict = Verdict(kind="constraint_failure", t_last=t,
                                  witness=str(exc), residual=res_ae1[-1])
                break
            stats["rejected"] += 1
            newton_fail_streak += 1
            last_failure = str(exc)
            h *= 0.5
            continue
        newton_fail_streak = 0

        if not np.all(np.isfinite(z5)):
            stats["rejected"] += 1
            h *= 0.5
            continue

        if opts.fixed_step:
            accept, factor = True, 1.0
        else:
            sc = opts.atol + opts.rtol * np.maximum(np.abs(z), np.abs(z5))
            err = float(np.sqrt(np.mean(((z5 - z4) / sc) ** 2)))
            accept = err <= 1.0
            err = max(err, 1e-10)
            factor = 0.9 * err ** (-0.7 / _ORDER) * err_prev ** (0.4 / _ORDER)
            factor = min(5.0, max(0.2, factor))
            if accept:
                err_prev = err

        if not accept:
            stats["rejected"] += 1
            h *= factor
            continue

        t_new = t + h
        try:
            x_new = stepper.assemble(t_new, z5)
            dz_new, _ = stepper.rhs(t_new, z5)
        except (PhiSingular, NoConvergence, EvalDomainError) as exc:
            if opts.fixed_step:
                verdict = Verdict(kind="constraint_failure", t_last=t,
                                  witness=str(exc), residual=res_ae1[-1])
                break
            stats["rejected"] += 1
            h *= 0.5
            continue
        stats["nfev"] += 1

        res = rs.constraint_residuals(t_new, x_new)
        f_scale = 1.0 + float(np.linalg.norm(rs.dae.f_vec(t_new, x_new)))
        if res.ae2 is not None and res.ae2 > opts.consistency_tol * f_scale:
            verdict = Verdict(kind="constraint_failure", t_last=t_new,
                              residual=res.ae2,
                              witness="overdetermined residual exceeded tolerance")
            break

        if not rs.dae.in_domain(t_new, x_new):
            t_cross, x_cross, pred = _bisect_domain_exit(
                rs, stepper, t, z, t_new, opts)
            times.append(t_cross)
            states.append(x_cross)
            rc = rs.constraint_residuals(t_cross, x_cross)
            res_ae1.append(rc.ae1)
            res_ae2.append(rc.ae2 if rc.ae2 is not None else 0.0)
            diff_norms.append(float(np.linalg.norm(
                (rs.dec.S1 + rs.dec.P1) @ x_cross)))
            verdict = Verdict(kind="left_domain", t_last=t_cross, witness=pred)
            break

        t, z, k1 = t_new, z5, dz_new
        stats["accepted"] += 1
        newton_per_step.append(stepper.newton_iters_last)
        times.append(t)
        states.append(x_new)
        res_ae1.append(res.ae1)
        res_ae2.append(res.ae2 if res.ae2 is not None else 0.0)
        diff_norms.append(float(np.linalg.norm((rs.dec.S1 + rs.dec.P1) @ x_new)))

        if diff_norms[-1] > opts.blowup_norm:
            norm_trigger = True
        if norm_trigger:
            grace += 1
            both = hmin_trigger or h * factor < h_min
            if both or grace > 200:
                verdict = Verdict(kind="blowup", t_last=t, weak=not both)
                break
        if not opts.fixed_step:
            h *= factor
    else:
        verdict = Verdict(kind="global", t_end=t,
                          witness="step budget exhausted before the horizon")

    if verdict is None:
        verdict = Verdict(kind="global", t_end=t)
    stats["newton_iters"] = newton_per_step
    traj = Trajectory(times=times, states=states, res_ae1=res_ae1,
                      res_ae2=res_ae2, diff_norms=diff_norms,
                      verdict=verdict, stats=stats)
    if verdict.kind == "blowup":
        try:
            verdict.T_est = estimate_escape_time(traj)
        except FitFailed:
            verdict.T_est = None
            verdict.witness = f"escape-fit failed; t_last={traj.t_last} is a lower bound"
    return traj


def _algebraic_march(rs, stepper, t, x, t_end, opts, times, states,
                     res_ae1, res_ae2, diff_norms, stats):
    steps = 100
    h = (t_end - t) / steps
    verdict = Verdict(kind="global", t_end=t_end)
    for _ in range(steps):
        t = t + h
        try:
            x = stepper.assemble(t, np.zeros(0))
        except (PhiSingular, NoConvergence) as exc:
            verdict = Verdict(kind="constraint_failure", t_last=t, witness=str(exc))
            break
        if not rs.dae.in_domain(t, x):
            verdict = Verdict(kind="left_domain", t_last=t)
            break
        res = rs.constraint_residuals(t, x)
        times.append(t)
        states.append(x)
        res_ae1.append(res.ae1)
        res_ae2.append(res.ae2 if res.ae2 is not None else 0.0)
        diff_norms.append(0.0)
        stats["accepted"] += 1
    return Trajectory(times=times, states=states, res_ae1=res_ae1,
                      res_ae2=res_ae2, diff_norms=diff_norms,
                      verdict=verdict, stats=stats)


def _bisect_domain_exit(rs, stepper, t_in, z_in, t_out, opts):
    """Localize the domain crossing in t by bisection with single RK5 steps."""

    def state_at(tau):
        if tau <= t_in:
            return stepper.assemble(t_in, z_in)
        h = tau - t_in
        stages = []
        z = z_in
        dz0, _ = stepper.rhs(t_in, z)
        stages.append(dz0)
        for i in range(1, 7):
            zi = z + h * sum(_A[i][j] * stages[j] for j in range(i))
            dzi, _ = stepper.rhs(t_in + _C[i] * h, zi)
            stages.append(dzi)
        z5 = z + h * sum(_B5[j] * stages[j] for j in range(7))
        return stepper.assemble(tau, z5)

    lo, hi = t_in, t_out
    x_hi = state_at(hi)
    while hi - lo > opts.domain_bisect_tol:
        mid = 0.5 * (lo + hi)
        x_mid = state_at(mid)
        if rs.dae.in_domain(mid, x_mid):
            lo = mid
        else:
            hi, x_hi = mid, x_mid
    preds = rs.dae.domain_violations(hi, x_hi)
    witness = preds[0].text if preds else ""
    return hi, x_hi, witness


def estimate_escape_time(traj: Trajectory) -> float:
    """Escape-time estimate from the tail of a blow-up trajectory.

    Fits y(t) = ||(x_s1, x_p1)(t)||^(-gamma) for gamma in {1/2, 1, 2} by least
    squares over the last 20 accepted steps, keeps the gamma with the best
    linear correlation, and returns the zero crossing of that line. Raises
    FitFailed when every branch has correlation below 0.9.
    """
    if traj.verdict.kind != "blowup":
        raise FitFailed("escape-time estimate needs a blow-up trajectory")
    ts = np.array(traj.times[-20:])
    ys = np.array(traj.diff_norms[-20:])
    keep = ys > 0
    ts, ys = ts[keep], ys[keep]
    if ts.size < 3:
        raise FitFailed("not enough points for the escape fit")
    best = None
    for gamma in (0.5, 1.0, 2.0):
        w = ys ** (-gamma)
        A = np.column_stack([np.ones_like(ts), ts])
        coef, *_ = np.linalg.lstsq(A, w, rcond=None)
        fit = A @ coef
        denom = float(np.linalg.norm(w - w.mean()))
        corr = 1.0 if denom == 0 else float(
            1.0 - np.linalg.norm(w - fit) ** 2 / denom ** 2)
        a, b = coef
        if b >= 0:
            continue
        T = -a / b
        if T <= traj.t_last:
            continue
        if best is None or corr > best[0]:
            best = (corr, T)
    if best is None or best[0] < 0.9:
        raise FitFailed(
            f"no escape branch fits with correlation >= 0.9; "
            f"t_last={traj.t_last} is a lower bound")
    return best[1]


def lagrange_report(traj: Trajectory, sup_bound: float | None = None) -> str:
    """"Stable", "Unstable", or "Undetermined" from a finished trajectory.

    Stable needs a horizon-long run inside a declared norm bound; evidence is
    horizon-limited, never a proof.
    """
    if traj.verdict.kind == "blowup":
        return "Unstable"
    if traj.verdict.kind == "global" and sup_bound is not None \
            and traj.sup_norm() <= sup_bound:
        return "Stable"
    return "Undetermined"


def write_csv(traj: Trajectory, path, n: int) -> None:
    """CSV emission: t, x1..xn, res_ae1, res_ae2; one row per accepted step."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        header = ["t"] + [f"x{i + 1}" for i in range(n)] + ["res_ae1", "res_ae2"]
        fh.write(",".join(header) + "\n")
        for t, x, r1, r2 in zip(traj.times, traj.states, traj.res_ae1,
                                traj.res_ae2):
            row = [repr(float(t))] + [repr(float(v)) for v in x] + \
                [repr(float(r1)), repr(float(r2))]
            fh.write(",".join(row) + "\n")
