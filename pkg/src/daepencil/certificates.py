"""Sampled verification of solvability and blow-up certificates.

All checks share the same honest vocabulary: VerifiedOnSamples (every sampled
point satisfied the inequalities), ViolatedAtPoint (a concrete witness with
both sides of the failed inequality), or Inconclusive (not enough evidence).
Sampling can refute or support a certificate, never prove it.

Samples are quasi-random (scrambled Sobol), drawn in a state box with t
log-uniform over [t_plus, t_plus + 1e3], and projected onto the consistency
manifold before region filtering, so every inequality is checked on-manifold
where the theory requires it.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.integrate
from scipy.stats import qmc

from .errors import NonpositiveU, ProblemFormatError
from .expr import (Bin, Call, Expr, Neg, Num, Var, compile_fn, differentiate,
                   evaluate, parse_expr, parse_predicate)
from .integrate import IntegratorOptions, Trajectory, Verdict, estimate_escape_time
from .pencil import DEFAULT_SEED
from .reduction import ReducedSystem, consistency_project_batch

_MARGIN_REL = 1e-9


@dataclass
class CertificateSpec:
    """One certificate check: regions, comparison data, and sampling policy."""

    kind: str                        # global | blowup | invariance | bounded_manifold
    name: str = ""
    m1: list = field(default_factory=list)      # predicates for M1 (or Ms1)
    m2: list = field(default_factory=list)      # predicates for M2
    ms2: list = field(default_factory=list)     # predicates for Ms2
    R: float = 10.0
    V: Expr | None = None
    chi: Expr | None = None
    k: Expr | None = None
    U: Expr | None = None
    W: Expr | None = None
    Kr: list = field(default_factory=list)      # predicates over x and margin r
    r_grid: tuple = (0.3, 0.1, 0.03)
    samples: int = 4096
    seed: int = DEFAULT_SEED
    box: np.ndarray | None = None               # (n, 2) sampling bounds
    M_bound: float | None = None
    v0_grid: tuple = (0.5, 1.0, 2.0, 10.0, 100.0)


@dataclass
class CertificateReport:
    name: str
    kind: str
    outcome: str                     # VerifiedOnSamples | ViolatedAtPoint | Inconclusive
    reason: str = ""
    witness: dict | None = None
    margins: dict = field(default_factory=dict)
    samples_used: int = 0
    notes: list = field(default_factory=list)

    def to_dict(self):
        return {"name": self.name, "kind": self.kind, "outcome": self.outcome,
                "reason": self.reason, "witness": self.witness,
                "margins": {k: float(v) for k, v in self.margins.items()},
                "samples_used": self.samples_used, "notes": list(self.notes)}


def parse_certificates(raw, n: int) -> list:
    """Parse the 'certificates' array of a problem file."""
    if not isinstance(raw, list):
        raise ProblemFormatError("'certificates' must be an array of checks")
    specs = []
    for i, obj in enumerate(raw):
        try:
            specs.append(_parse_one(obj, n, i))
        except ProblemFormatError:
            raise
        except Exception as exc:
            raise ProblemFormatError(f"certificate #{i}: {exc}")
    return specs


def _parse_one(obj, n, i) -> CertificateSpec:
    kind = obj.get("type")
    if kind not in ("global", "blowup", "invariance", "bounded_manifold"):
        raise ProblemFormatError(f"certificate #{i}: unknown type {kind!r}")
    regions = obj.get("regions", {})
    spec = CertificateSpec(
        kind=kind,
        name=obj.get("name", f"{kind}#{i}"),
        m1=[parse_predicate(s, n) for s in regions.get("m1", [])],
        m2=[parse_predicate(s, n) for s in regions.get("m2", [])],
        ms2=[parse_predicate(s, n) for s in regions.get("ms2", [])],
        R=float(obj.get("R", 10.0)),
        samples=int(obj.get("samples", 4096)),
        seed=int(obj.get("seed", DEFAULT_SEED)),
        M_bound=obj.get("M_bound"),
    )
    if "V" in obj:
        spec.V = parse_expr(obj["V"], n)
    if "chi" in obj:
        spec.chi = parse_expr(obj["chi"], 0, extra=("t", "v"))
    if "k" in obj:
        spec.k = parse_expr(obj["k"], 0, extra=("t",))
    if "U" in obj:
        spec.U = parse_expr(obj["U"], 0, extra=("v",))
    if "W" in obj:
        spec.W = parse_expr(obj["W"], n)
    if "Kr" in obj:
        spec.Kr = [parse_predicate(s, n, extra=("r",)) for s in obj["Kr"]]
    if "r_grid" in obj:
        spec.r_grid = tuple(float(v) for v in obj["r_grid"])
    if "v0_grid" in obj:
        spec.v0_grid = tuple(float(v) for v in obj["v0_grid"])
    if "box" in obj:
        box = np.asarray(obj["box"], dtype=float)
        if box.shape != (n, 2):
            raise ProblemFormatError(
                f"certificate #{i}: box must be {n} [lo, hi] pairs")
        spec.box = box
    return spec


# ------------------------------------------------------------------ sampling

def _draw(rs: ReducedSystem, spec: CertificateSpec, count: int, seed: int):
    n = rs.n
    if spec.box is not None:
        box = spec.box
    else:
        half = max(10.0, 4.0 * spec.R)
        box = np.column_stack([-half * np.ones(n), half * np.ones(n)])
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        sob = qmc.Sobol(d=n + 1, scramble=True, seed=seed)
        u = sob.random(count)
    t = rs.dae.t_plus + 10.0 ** (3.0 * u[:, 0]) - 1.0
    X = box[:, 0] + u[:, 1:] * (box[:, 1] - box[:, 0])
    return t, X


def _filter_preds(preds, t, X, n, r=None):
    mask = np.ones(X.shape[0], dtype=bool)
    extra = {} if r is None else {"r": r}
    for p in preds:
        mask &= p.holds_many(t, X, n, **extra)
    return mask


def _manifold_samples(rs, spec, preds, seed_shift=0, diff_gt=None, diff_le=None):
    """On-manifold samples filtered by predicates and a diff-norm window."""
    t, X = _draw(rs, spec, spec.samples, spec.seed + seed_shift)
    Xp, ok = consistency_project_batch(rs, t, X)
    t, Xp = t[ok], Xp[ok]
    mask = _filter_preds(preds, t, Xp, rs.n)
    mask &= np.all(np.isfinite(Xp), axis=1)
    if diff_gt is not None or diff_le is not None:
        dn = np.linalg.norm(Xp @ (rs.dec.S1 + rs.dec.P1).T, axis=1)
        if diff_gt is not None:
            mask &= dn > diff_gt
        if diff_le is not None:
            mask &= dn <= diff_le
    return t[mask], Xp[mask]


def _vdot_many(rs: ReducedSystem, V: Expr, t, X) -> np.ndarray:
    """Drift derivative of V, assembled from its symbolic partials and the
    sampled reduced-system drift."""
    n = rs.n
    Vt = compile_fn(differentiate(V, "t"), n)
    out = Vt(t, X)
    AG = rs._agen_f + rs._a1_f
    AB = rs._agen_b + rs._a1_b
    drift = rs.f_many(t, X) @ AG.T - X @ AB.T
    for j in range(n):
        dj = differentiate(V, "x", j + 1)
        if dj == Num(0.0):
            continue
        out = out + compile_fn(dj, n)(t, X) * drift[:, j]
    return out


def _chi_many(spec: CertificateSpec, t, v) -> np.ndarray:
    if spec.chi is not None:
        fn = compile_fn(spec.chi, 0, extra=("v",))
        return fn(t, np.zeros((len(v), 0)), v=v)
    kf = compile_fn(spec.k, 0) if spec.k is not None else None
    uf = compile_fn(spec.U, 0, extra=("v",))
    kv = kf(t, np.zeros((len(v), 0))) if kf is not None else np.ones(len(v))
    return kv * uf(t, np.zeros((len(v), 0)), v=v)


def _worst_witness(t, X, lhs, rhs, idx):
    return {"t": float(t[idx]), "x": [float(v) for v in X[idx]],
            "lhs": float(lhs[idx]), "rhs": float(rhs[idx])}


# ------------------------------------------------------------- scalar solver

@dataclass
class ComparisonResult:
    times: np.ndarray
    values: np.ndarray
    outcome: str                 # Global | FiniteEscape
    T: float | None = None


def comparison_solve(chi: Expr, v0: float, t0: float = 0.0,
                     horizon: float = 50.0,
                     opts: IntegratorOptions | None = None) -> ComparisonResult:
    """Integrate the scalar comparison equation dv/dt = chi(t, v).

    Finite-time escape is declared on step-size collapse (the signature of a
    genuine singularity), or on values beyond 1e100 reached with shrinking
    steps; merely exponential growth past any fixed norm stays Global.
    """
    if v0 <= 0:
        raise ProblemFormatError("comparison initial value must be positive")
    opts = opts or IntegratorOptions()

    def f(t, v):
        return evaluate(chi, t, [], v=v)

    from .integrate import _A, _B4, _B5, _C
    t, v = float(t0), float(v0)
    h = 0.01 * (1.0 + abs(v)) / (1.0 + abs(f(t, v)))
    ts, vs = [t], [v]
    err_prev = 1.0
    t_end = t0 + horizon
    escaped = False
    halvings = 0
    for _ in range(opts.max_steps):
        if t >= t_end:
            break
        h = min(h, t_end - t)
        h_min = opts.h_min_scale * (1.0 + abs(t))
        if h < h_min:
            escaped = True
            break
        try:
            ks = [f(t, v)]
            for i in range(1, 7):
                ks.append(f(t + _C[i] * h, v + h * sum(_A[i][j] * ks[j]
                                                       for j in range(i))))
            v5 = v + h * sum(_B5[j] * ks[j] for j in range(7))
            v4 = v + h * sum(_B4[j] * ks[j] for j in range(7))
        except (OverflowError, FloatingPointError):
            h *= 0.5
            halvings += 1
            if halvings > 2000:
                escaped = True
                break
            continue
        if not np.isfinite(v5):
            h *= 0.5
            halvings += 1
            if halvings > 2000:
                escaped = True
                break
            continue
        sc = opts.atol + opts.rtol * max(abs(v), abs(v5))
        err = max(abs(v5 - v4) / sc, 1e-10)
        if err > 1.0:
            h *= min(5.0, max(0.2, 0.9 * err ** (-0.2)))
            continue
        t, v = t + h, v5
        ts.append(t)
        vs.append(v)
        if abs(v) > 1e100:
            # Escape only with collapsing steps; otherwise the growth is at
            # most (doubly) exponential and the solution is treated as global
            # beyond representable range.
            escaped = h < 1e-6 * (1.0 + t - t0)
            break
        h *= min(5.0, max(0.2, 0.9 * err ** (-0.14) * err_prev ** 0.08))
        err_prev = err
    ts = np.array(ts)
    vs = np.array(vs)
    if not escaped:
        return ComparisonResult(times=ts, values=vs, outcome="Global")
    traj = Trajectory(times=list(ts), states=[np.array([w]) for w in vs],
                      res_ae1=[0.0] * len(ts), res_ae2=[0.0] * len(ts),
                      diff_norms=[abs(w) for w in vs],
                      verdict=Verdict(kind="blowup", t_last=float(ts[-1])))
    try:
        T = estimate_escape_time(traj)
    except Exception:
        T = float(ts[-1])
    return ComparisonResult(times=ts, values=vs, outcome="FiniteEscape", T=T)


# ----------------------------------------------------------------- osgood

@dataclass
class OsgoodResult:
    kind: str                    # Diverges | Converges | Inconclusive
    value: float | None = None
    reason: str = ""


def _as_power(e: Expr):
    """Match c * v^p; returns (c, p) or None."""
    if isinstance(e, Num):
        return (e.value, 0.0)
    if isinstance(e, Var) and e.name == "v":
        return (1.0, 1.0)
    if isinstance(e, Neg):
        m = _as_power(e.arg)
        return None if m is None else (-m[0], m[1])
    if isinstance(e, Call) and e.fn == "sqrt":
        m = _as_power(e.args[0])
        if m is not None and m[0] > 0:
            return (m[0] ** 0.5, m[1] / 2.0)
        return None
    if isinstance(e, Call) and e.fn == "pow":
        e = Bin("^", e.args[0], e.args[1])
    if isinstance(e, Bin):
        if e.op == "^":
            try:
                p = evaluate(e.right, 0.0, [])
            except Exception:
                return None
            m = _as_power(e.left)
            if m is None:
                return None
            c, q = m
            if c == 1.0:
                return (1.0, q * p)
            if q == 0.0 and c > 0:
                return (c ** p, 0.0)
            return None
        a = _as_power(e.left)
        b = _as_power(e.right)
        if a is None or b is None:
            return None
        if e.op == "*":
            return (a[0] * b[0], a[1] + b[1])
        if e.op == "/":
            if b[0] == 0.0:
                return None
            return (a[0] / b[0], a[1] - b[1])
    return None


def osgood_test(U: Expr, v0: float) -> OsgoodResult:
    """Divergence test for the integral of dv / U(v) from v0 to infinity.

    Power forms c * v^p are decided symbolically (Diverges iff p <= 1, with
    the exact value v0^(1-p) / (c (p-1)) otherwise); anything else goes
    through adaptive quadrature on [v0, 1e12] with tail-slope analysis.
    Raises NonpositiveU when U fails positivity on the sampled ray.
    """
    if v0 <= 0:
        raise ProblemFormatError("osgood test needs v0 > 0")
    m = _as_power(U)
    if m is not None:
        c, p = m
        if c <= 0:
            raise NonpositiveU(f"U = {c} * v^{p} is not positive", witness=v0)
        if p <= 1.0:
            return OsgoodResult(kind="Diverges")
        return OsgoodResult(kind="Converges",
                            value=v0 ** (1.0 - p) / (c * (p - 1.0)))
    grid = np.geomspace(v0, 1e12, 200)
    vals = np.array([evaluate(U, 0.0, [], v=float(v)) for v in grid])
    if np.any(vals <= 0) or not np.all(np.isfinite(vals)):
        bad = grid[np.argmin(vals)]
        raise NonpositiveU(f"U is not positive near v = {bad:.3e}",
                           witness=float(bad))
    # integrate 1/U on a log grid: dv/U = v d(log v)/U
    def g(s):
        v = np.exp(s)
        return v / evaluate(U, 0.0, [], v=float(v))

    total = 0.0
    s_edges = np.linspace(np.log(v0), np.log(1e12), 25)
    for a, b in zip(s_edges[:-1], s_edges[1:]):
        part, _ = scipy.integrate.quad(g, a, b, limit=100)
        total += part
    # tail slope of log U vs log v over the last decades
    s1, s2 = np.log(1e10), np.log(1e12)
    u1 = np.log(evaluate(U, 0.0, [], v=float(np.exp(s1))))
    u2 = np.log(evaluate(U, 0.0, [], v=float(np.exp(s2))))
    p_hat = (u2 - u1) / (s2 - s1)
    if p_hat <= 0.95:
        return OsgoodResult(kind="Diverges")
    if p_hat >= 1.05:
        vmax = 1e12
        tail = vmax / ((p_hat - 1.0) * evaluate(U, 0.0, [], v=vmax))
        return OsgoodResult(kind="Converges", value=total + tail)
    return OsgoodResult(kind="Inconclusive",
                        reason=f"tail slope {p_hat:.3f} too close to 1")


def _k_diverges(k: Expr, t_plus: float) -> bool:
    """Evidence that the integral of k over [t_plus, inf) diverges."""
    if isinstance(k, Num):
        return k.value > 0
    ts = np.geomspace(max(t_plus, 1e-3) + 1.0, 1e8, 60) - 1.0 + t_plus
    vals = np.array([evaluate(k, float(t), []) for t in ts])
    if np.any(~np.isfinite(vals)):
        return False
    if np.all(vals > 0) and vals[-1] * ts[-1] > 1e3:
        return True
    partial = np.cumsum(0.5 * (vals[1:] + vals[:-1]) * np.diff(ts))
    return bool(partial[-1] > 1e3 and partial[-1] > 2.0 * partial[len(partial) // 2])


# ------------------------------------------------------------------- checks

def _v0_candidates(spec, v_samples) -> list:
    pos = v_samples[v_samples > 0]
    grid = list(spec.v0_grid)
    if pos.size:
        grid += [max(float(np.min(pos)), 1e-4), float(np.median(pos)),
                 float(np.max(pos))]
    return sorted({round(float(g), 12) for g in grid if g > 0})


def _comparison_horizon(v0: float) -> float:
    # Escape from a small comparison value takes ~1/v0 for quadratic growth;
    # scale the evidence horizon accordingly.
    return max(50.0, min(1e7, 100.0 / v0))


def check_global_certificate(rs: ReducedSystem,
                             spec: CertificateSpec) -> CertificateReport:
    """Verify dV/dt <= chi(t, V) on on-manifold samples of the outer region
    and check that the comparison inequality has no finite-time escape."""
    rep = CertificateReport(name=spec.name, kind="global", outcome="Inconclusive")
    if spec.V is None or (spec.chi is None and spec.U is None):
        rep.reason = "spec needs V and chi (or k and U)"
        return rep
    preds = spec.m1 + spec.m2 + spec.ms2
    t, X = _manifold_samples(rs, spec, preds, diff_gt=spec.R)
    rep.samples_used = len(t)
    if len(t) == 0:
        rep.reason = "no on-manifold samples in the region (check box and R)"
        return rep
    Vv = compile_fn(spec.V, rs.n)(t, X)
    if np.any(Vv <= 0):
        idx = int(np.argmin(Vv))
        rep.outcome = "ViolatedAtPoint"
        rep.reason = "V is not positive on the sampled region"
        rep.witness = _worst_witness(t, X, Vv, np.zeros_like(Vv), idx)
        return rep
    vdot = _vdot_many(rs, spec.V, t, X)
    chiv = _chi_many(spec, t, Vv)
    margin = chiv - vdot
    tol = _MARGIN_REL * (1.0 + np.abs(vdot) + np.abs(chiv))
    rep.margins["min_drift_margin"] = float(np.min(margin))
    if np.any(margin < -tol):
        idx = int(np.argmin(margin + tol))
        rep.outcome = "ViolatedAtPoint"
        rep.reason = "dV/dt exceeds chi(t, V) at a sampled point"
        rep.witness = _worst_witness(t, X, vdot, chiv, idx)
        return rep
    if spec.U is not None and spec.chi is None:
        res = osgood_test(spec.U, min(_v0_candidates(spec, Vv)))
        if res.kind != "Diverges":
            rep.reason = f"integral test on U did not diverge ({res.kind})"
            return rep
        rep.notes.append("comparison side: integral of dv/U diverges")
    else:
        for v0 in _v0_candidates(spec, Vv):
            comp = comparison_solve(spec.chi, v0, rs.dae.t_plus,
                                    horizon=_comparison_horizon(v0))
            if comp.outcome != "Global":
                rep.reason = (f"comparison equation escapes in finite time "
                              f"from v0={v0:g}")
                return rep
        rep.notes.append("comparison trajectories stayed global to the horizon")
    rep.notes.append("t sampled on a finite grid; uniformity in t not certified")
    rep.outcome = "VerifiedOnSamples"
    return rep


def check_blowup_certificate(rs: ReducedSystem,
                             spec: CertificateSpec) -> CertificateReport:
    """Verify dV/dt >= chi(t, V) on on-manifold samples of the inner region
    plus divergence evidence on the comparison side."""
    rep = CertificateReport(name=spec.name, kind="blowup", outcome="Inconclusive")
    if spec.V is None or (spec.chi is None and spec.U is None):
        rep.reason = "spec needs V and chi (or k and U)"
        return rep
    preds = spec.m1 + spec.m2 + spec.ms2
    t, X = _manifold_samples(rs, spec, preds)
    rep.samples_used = len(t)
    if len(t) == 0:
        rep.reason = "no on-manifold samples in the region (check box)"
        return rep
    Vv = compile_fn(spec.V, rs.n)(t, X)
    if np.any(Vv <= 0):
        idx = int(np.argmin(Vv))
        rep.outcome = "ViolatedAtPoint"
        rep.reason = "V is not positive on the sampled region"
        rep.witness = _worst_witness(t, X, Vv, np.zeros_like(Vv), idx)
        return rep
    vdot = _vdot_many(rs, spec.V, t, X)
    chiv = _chi_many(spec, t, Vv)
    margin = vdot - chiv
    tol = _MARGIN_REL * (1.0 + np.abs(vdot) + np.abs(chiv))
    rep.margins["min_drift_margin"] = float(np.min(margin))
    if np.any(margin < -tol):
        idx = int(np.argmin(margin + tol))
        rep.outcome = "ViolatedAtPoint"
        rep.reason = "dV/dt fails to dominate chi(t, V) at a sampled point"
        rep.witness = _worst_witness(t, X, vdot, chiv, idx)
        return rep
    if spec.U is not None and spec.chi is None:
        res = osgood_test(spec.U, min(_v0_candidates(spec, Vv)))
        if res.kind != "Converges":
            rep.reason = f"integral of dv/U must converge, got {res.kind}"
            return rep
        if spec.k is not None and not _k_diverges(spec.k, rs.dae.t_plus):
            rep.reason = "no divergence evidence for the integral of k"
            return rep
        rep.notes.append(f"integral of dv/U = {res.value:.6g} (finite)")
    else:
        for v0 in _v0_candidates(spec, Vv):
            comp = comparison_solve(spec.chi, v0, rs.dae.t_plus,
                                    horizon=_comparison_horizon(v0))
            if comp.outcome != "FiniteEscape":
                rep.reason = (f"comparison equation stayed global from "
                              f"v0={v0:g}; no blow-up evidence")
                return rep
        rep.notes.append("every sampled comparison trajectory escaped")
    rep.notes.append("t sampled on a finite grid; uniformity in t not certified")
    rep.outcome = "VerifiedOnSamples"
    return rep


def check_invariance(rs: ReducedSystem, spec: CertificateSpec) -> CertificateReport:
    """Sampled check that trajectories cannot leave the region M1:
    (a) monotone separation of W between the closed core K_r and the
    complement of M1, and (b) dW/dt <= 0 outside the core, on-manifold."""
    rep = CertificateReport(name=spec.name, kind="invariance",
                            outcome="Inconclusive")
    if spec.W is None or not spec.Kr:
        rep.reason = "spec needs W and the K_r family"
        return rep
    n = rs.n
    Wfn = compile_fn(spec.W, n)
    worst_sep = np.inf
    worst_wdot = -np.inf
    used = 0
    for shift, r in enumerate(spec.r_grid):
        t, X = _draw(rs, spec, spec.samples, spec.seed + 101 + shift)
        in_m1 = _filter_preds(spec.m1, t, X, n)
        in_kr = in_m1 & _filter_preds(spec.Kr, t, X, n, r=r)
        out_m1 = ~in_m1
        used += int(in_kr.sum())
        if in_kr.any() and out_m1.any():
            w_core = Wfn(t[in_kr], X[in_kr])
            w_out = Wfn(t[out_m1], X[out_m1])
            sep = float(np.min(w_out) - np.max(w_core))
            worst_sep = min(worst_sep, sep)
            if sep <= 0:
                idx = int(np.argmax(w_core))
                rep.outcome = "ViolatedAtPoint"
                rep.reason = (f"W separation fails at margin r={r}: core max "
                              f"{np.max(w_core):.6g} >= outside min {np.min(w_out):.6g}")
                rep.witness = _worst_witness(t[in_kr], X[in_kr], w_core,
                                             np.full_like(w_core, np.min(w_out)),
                                             idx)
                return rep
        elif in_kr.any():
            rep.notes.append(f"r={r}: complement of M1 has no samples; "
                             "separation holds vacuously")
        tm, Xm = _manifold_samples(rs, spec, spec.m2 + spec.ms2,
                                   seed_shift=301 + shift)
        if len(tm) == 0:
            continue
        outside_core = ~_filter_preds(spec.Kr, tm, Xm, n, r=r)
        tm, Xm = tm[outside_core], Xm[outside_core]
        if len(tm) == 0:
            continue
        used += len(tm)
        wdot = _vdot_many(rs, spec.W, tm, Xm)
        tol = _MARGIN_REL * (1.0 + np.abs(wdot))
        worst_wdot = max(worst_wdot, float(np.max(wdot)))
        if np.any(wdot > tol):
            idx = int(np.argmax(wdot))
            rep.outcome = "ViolatedAtPoint"
            rep.reason = f"dW/dt is positive outside K_r at margin r={r}"
            rep.witness = _worst_witness(tm, Xm, wdot, np.zeros_like(wdot), idx)
            return rep
    rep.samples_used = used
    if used == 0:
        rep.reason = "no usable samples for any margin r"
        return rep
    if np.isfinite(worst_sep):
        rep.margins["min_separation"] = worst_sep
    if np.isfinite(worst_wdot):
        rep.margins["max_wdot_outside_core"] = worst_wdot
    rep.outcome = "VerifiedOnSamples"
    return rep


def check_bounded_manifold(rs: ReducedSystem,
                           spec: CertificateSpec) -> CertificateReport:
    """Evidence for a uniform bound of the algebraic component over states
    whose differential component stays inside a ball."""
    rep = CertificateReport(name=spec.name, kind="bounded_manifold",
                            outcome="Inconclusive")
    bound = spec.M_bound
    if bound is None:
        rep.reason = "spec needs M_bound"
        return rep
    preds = spec.m1 + spec.m2 + spec.ms2
    t, X = _manifold_samples(rs, spec, preds, diff_le=float(bound))
    rep.samples_used = len(t)
    if len(t) == 0:
        rep.reason = "bound excludes every sampled on-manifold point"
        return rep
    xp2 = X @ rs.dec.P2.T
    q2f = rs.f_many(t, X) @ rs.dec.Q2.T
    rep.margins["sup_xp2"] = float(np.max(np.linalg.norm(xp2, axis=1)))
    rep.margins["sup_q2f"] = float(np.max(np.linalg.norm(q2f, axis=1)))
    rep.outcome = "VerifiedOnSamples"
    rep.notes.append("finite-sample supremum; evidence, not a proof")
    return rep


def run_certificate(rs: ReducedSystem, spec: CertificateSpec) -> CertificateReport:
    runner = {"global": check_global_certificate,
              "blowup": check_blowup_certificate,
              "invariance": check_invariance,
              "bounded_manifold": check_bounded_manifold}[spec.kind]
    return runner(rs, spec)


def combined_verdict(reports) -> str:
    """GlobalCertified / BlowUpCertified / Mixed / Inconclusive (sampled)."""
    support_broken = any(r.kind in ("invariance", "bounded_manifold")
                         and r.outcome == "ViolatedAtPoint" for r in reports)
    if support_broken:
        return "Inconclusive"
    g = any(r.kind == "global" and r.outcome == "VerifiedOnSamples"
            for r in reports)
    b = any(r.kind == "blowup" and r.outcome == "VerifiedOnSamples"
            for r in reports)
    if g and b:
        return "Mixed"
    if g:
        return "GlobalCertified"
    if b:
        return "BlowUpCertified"
    return "Inconclusive"
