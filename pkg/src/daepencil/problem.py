"""Problem objects and the JSON problem-file format.

A problem file is a JSON document:

    {
      "A": {"rows": m, "cols": n, "data": [row-major numbers]},
      "B": {"rows": m, "cols": n, "data": [...]},
      "f": ["expr", ...],                  # m expression strings over t, x1..xn
      "domain": ["pred", ...],             # optional conjunction of predicates
      "t_plus": 0.0,
      "phi_s2": ["expr", ...],             # optional: n components, t only
      "initial": {"t0": 0.0, "x0": [...]},
      "certificates": [...],               # optional, see certificates module
      "integrator": {"rtol": ..., ...},    # optional overrides
      "bounds": {"sup_norm": ...}          # optional, for the Lagrange report
    }
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ProblemFormatError, ShapeMismatch
from .expr import evaluate, jacobian, parse_expr, parse_predicate
from .pencil import Pencil


@dataclass
class SemilinearDAE:
    """d/dt[A x] + B x = f(t, x) on the time ray [t_plus, inf).

    f components are expression trees over t, x1..xn; the domain is a
    conjunction of predicates (empty means all of R^n). fd_jacobian selects
    central finite differences for the state Jacobian, the fallback for
    expressions whose symbolic derivative is unreliable near sgn/abs kinks.
    """

    pencil: Pencil
    f: list
    domain: list = field(default_factory=list)
    t_plus: float = 0.0
    fd_jacobian: bool = False
    _jac: list | None = None

    def __post_init__(self):
        if len(self.f) != self.pencil.m:
            raise ShapeMismatch(
                f"f has {len(self.f)} components, pencil has m={self.pencil.m}")

    @property
    def n(self) -> int:
        return self.pencil.n

    @property
    def m(self) -> int:
        return self.pencil.m

    def f_vec(self, t: float, x) -> np.ndarray:
        return np.array([evaluate(c, t, x) for c in self.f])

    def jac_exprs(self):
        if self._jac is None:
            self._jac = jacobian(self.f, self.n)
        return self._jac

    def jac_mat(self, t: float, x) -> np.ndarray:
        if self.fd_jacobian:
            return self._jac_fd(t, np.asarray(x, dtype=float))
        rows = self.jac_exprs()
        return np.array([[evaluate(d, t, x) for d in row] for row in rows])

    def _jac_fd(self, t: float, x: np.ndarray) -> np.ndarray:
        out = np.empty((self.m, self.n))
        for j in range(self.n):
            h = 1e-6 * (1.0 + abs(float(x[j])))
            xp = x.copy()
            xm = x.copy()
            xp[j] += h
            xm[j] -= h
            out[:, j] = (self.f_vec(t, xp) - self.f_vec(t, xm)) / (2 * h)
        return out

    def in_domain(self, t: float, x) -> bool:
        return all(p.holds(t, x) for p in self.domain)

    def domain_violations(self, t: float, x):
        return [p for p in self.domain if not p.holds(t, x)]


def matrix_from_json(obj, key: str) -> np.ndarray:
    try:
        rows, cols = int(obj["rows"]), int(obj["cols"])
        data = [float(v) for v in obj["data"]]
    except (KeyError, TypeError, ValueError) as exc:
        raise ProblemFormatError(f"matrix {key!r} needs rows, cols, data: {exc}")
    if len(data) != rows * cols:
        raise ProblemFormatError(
            f"matrix {key!r}: {len(data)} entries for {rows}x{cols}")
    return np.array(data).reshape(rows, cols)


def matrix_to_json(mat: np.ndarray) -> dict:
    return {"rows": int(mat.shape[0]), "cols": int(mat.shape[1]),
            "data": [float(v) for v in mat.flatten()]}


@dataclass
class ProblemFile:
    """Validated problem file contents."""

    dae: SemilinearDAE
    t0: float | None = None
    x0: np.ndarray | None = None
    phi_s2: list | None = None
    phi_s2_pins: np.ndarray | None = None
    certificates: list | None = None
    integrator: dict = field(default_factory=dict)
    bounds: dict = field(default_factory=dict)
    raw: dict = field(default_factory=dict)


def load_problem(source) -> ProblemFile:
    """Parse and validate a problem document (path, file object, or dict)."""
    if isinstance(source, dict):
        doc = source
    else:
        try:
            if hasattr(source, "read"):
                doc = json.load(source)
            else:
                with open(source, "r", encoding="utf-8") as fh:
                    doc = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ProblemFormatError(f"cannot read problem file: {exc}")
    if not isinstance(doc, dict):
        raise ProblemFormatError("problem document must be a JSON object")
    for key in ("A", "B", "f"):
        if key not in doc:
            raise ProblemFormatError(f"problem file is missing {key!r}")
    A = matrix_from_json(doc["A"], "A")
    B = matrix_from_json(doc["B"], "B")
    try:
        pencil = Pencil(A, B)
    except ShapeMismatch as exc:
        raise ProblemFormatError(str(exc))
    m, n = pencil.m, pencil.n
    if not isinstance(doc["f"], list) or len(doc["f"]) != m:
        raise ProblemFormatError(f"'f' must list {m} expression strings")
    try:
        f = [parse_expr(s, n) for s in doc["f"]]
        domain = [parse_predicate(s, n) for s in doc.get("domain", [])]
    except Exception as exc:
        raise ProblemFormatError(f"bad expression: {exc}")
    t_plus = float(doc.get("t_plus", 0.0))
    dae = SemilinearDAE(pencil=pencil, f=f, domain=domain, t_plus=t_plus,
                        fd_jacobian=bool(doc.get("fd_jacobian", False)))

    t0 = x0 = None
    if "initial" in doc:
        ini = doc["initial"]
        try:
            t0 = float(ini["t0"])
            x0 = np.array([float(v) for v in ini["x0"]])
        except (KeyError, TypeError, ValueError) as exc:
            raise ProblemFormatError(f"bad 'initial' block: {exc}")
        if x0.shape != (n,):
            raise ProblemFormatError(f"x0 has {x0.size} entries, expected {n}")

    phi_s2 = None
    if "phi_s2" in doc and doc["phi_s2"] is not None:
        raw = doc["phi_s2"]
        if not isinstance(raw, list) or len(raw) != n:
            raise ProblemFormatError(
                f"'phi_s2' must list {n} expression strings (components of a "
                "curve in the free subspace, functions of t only)")
        try:
            phi_s2 = [parse_expr(s, 0) for s in raw]
        except Exception as exc:
            raise ProblemFormatError(f"bad phi_s2 expression: {exc}")

    pins = None
    if "phi_s2_pins" in doc and doc["phi_s2_pins"] is not None:
        try:
            pins = np.array(doc["phi_s2_pins"], dtype=float)
        except (TypeError, ValueError) as exc:
            raise ProblemFormatError(f"bad 'phi_s2_pins': {exc}")
        if pins.ndim != 2 or pins.shape[1] != n:
            raise ProblemFormatError(
                f"'phi_s2_pins' must be rows of length {n}")

    return ProblemFile(dae=dae, t0=t0, x0=x0, phi_s2=phi_s2, phi_s2_pins=pins,
                       certificates=doc.get("certificates"),
                       integrator=dict(doc.get("integrator", {})),
                       bounds=dict(doc.get("bounds", {})),
                       raw=doc)
