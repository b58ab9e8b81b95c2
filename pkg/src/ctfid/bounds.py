"""Partial identification on the bow graph (X -> Y, X <-> Y).

Analytic NTE intervals from observational, interventional and
counterfactual data, exact bounds by linear programming over the canonical
model, and the unit-selection decision built on top of them.

The canonical model has one probability per (natural X, response function
f) with ``f[x] = Y_x``; every data tier is a linear constraint on it.
"""
from __future__ import annotations

import csv
import itertools
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
from scipy.optimize import linprog

__all__ = [
    "BoundsError", "Interval", "BowData", "CanonicalModel", "LinearQuery",
    "nte_bounds_l1", "nte_bounds_l2", "nte_bounds_l25", "alpha_bounds",
    "nte_query", "type_query", "benefit_query", "polytope_bounds",
    "unit_selection", "bow_data_from_scm", "nte_truth", "read_table_csv",
    "write_table_csv", "intervals_svg", "TYPE_NAMES",
]

TOL = 1e-9


class BoundsError(ValueError):
    pass


@dataclass(frozen=True)
class Interval:
    lo: float
    hi: float
    note: str = ""

    def __post_init__(self):
        object.__setattr__(self, "lo", float(self.lo))
        object.__setattr__(self, "hi", float(self.hi))
        if self.lo > self.hi + TOL:
            raise BoundsError(f"empty interval [{self.lo}, {self.hi}]")

    def contains(self, v: float, tol: float = TOL) -> bool:
        return self.lo - tol <= v <= self.hi + tol

    def within(self, other: "Interval", tol: float = TOL) -> bool:
        return other.lo - tol <= self.lo and self.hi <= other.hi + tol

    @property
    def width(self) -> float:
        return self.hi - self.lo

    def to_json(self) -> dict:
        out = {"lo": self.lo, "hi": self.hi}
        if self.note:
            out["note"] = self.note
        return out

    def __iter__(self):
        return iter((self.lo, self.hi))

    def __repr__(self):
        return f"[{self.lo:.6g}, {self.hi:.6g}]"


@dataclass
class BowData:
    """Data tiers for the bow graph.

    ``obs[x, y] = P(X=x, Y=y)``; ``exp[x, y] = P(Y_x = y)``;
    ``ctf[a, x, y] = P(Y_x = y | X = a)``.
    """
    obs: np.ndarray | None = None
    exp: np.ndarray | None = None
    ctf: np.ndarray | None = None

    def __post_init__(self):
        for name in ("obs", "exp", "ctf"):
            v = getattr(self, name)
            if v is not None:
                setattr(self, name, np.asarray(v, dtype=float))
        if self.obs is not None and abs(self.obs.sum() - 1) > 1e-6:
            raise BoundsError("observational table does not sum to 1")
        if self.exp is not None and np.abs(self.exp.sum(axis=1) - 1).max() > 1e-6:
            raise BoundsError("each interventional row must sum to 1")
        if self.ctf is not None and np.abs(self.ctf.sum(axis=2) - 1).max() > 1e-6:
            raise BoundsError("each counterfactual row must sum to 1")

    @property
    def shape(self) -> tuple:
        for t in (self.obs, self.exp):
            if t is not None:
                return t.shape
        if self.ctf is not None:
            return self.ctf.shape[1:]
        raise BoundsError("no data")

    @property
    def tiers(self) -> list:
        return [n for n in ("obs", "exp", "ctf") if getattr(self, n) is not None]

    def subset(self, tiers: Sequence[str]) -> "BowData":
        return BowData(**{n: getattr(self, n) for n in ("obs", "exp", "ctf") if n in tiers})


# -- analytic intervals ------------------------------------------------

def nte_bounds_l1(d: BowData | None = None) -> Interval:
    """Observational data alone leave P(y_x | x', y') anywhere in [0, 1]."""
    return Interval(0.0, 1.0, "open interval (0, 1) under positivity")


def _obs_terms(d: BowData, xp: int, yp: int):
    if d.obs is None:
        raise BoundsError("observational data required")
    px = d.obs[xp].sum()
    if px <= 0:
        raise BoundsError(f"P(X={xp}) is zero")
    pyx = d.obs[xp, yp] / px
    if pyx <= 0:
        raise BoundsError(f"P(Y={yp} | X={xp}) is zero")
    return px, pyx


def alpha_bounds(d: BowData, x: int, xp: int, y: int) -> Interval:
    """Frechet-Hoeffding interval for P(y_x | x') from P(y_x) and P(x')."""
    if d.exp is None:
        raise BoundsError("interventional data required")
    px = d.obs[xp].sum() if d.obs is not None else None
    if not px:
        raise BoundsError(f"P(X={xp}) is zero")
    pyx = d.exp[x, y]
    return Interval(max(0.0, (pyx - (1 - px)) / px), min(1.0, pyx / px))


def _check_xx(x, xp):
    if x == xp:
        raise BoundsError("x and x' must differ")


def nte_bounds_l2(d: BowData, x: int, xp: int, y: int, yp: int) -> Interval:
    _check_xx(x, xp)
    _, pyx = _obs_terms(d, xp, yp)
    a = alpha_bounds(d, x, xp, y)
    lo = max(0.0, (a.lo - (1 - pyx)) / pyx)
    hi = min(1.0, a.hi / pyx)
    return Interval(lo, hi)


def nte_bounds_l25(d: BowData, x: int, xp: int, y: int, yp: int) -> Interval:
    _check_xx(x, xp)
    if d.ctf is None:
        raise BoundsError("counterfactual data required")
    _, pyx = _obs_terms(d, xp, yp)
    c = d.ctf[xp, x, y]
    return Interval(max(0.0, (c - (1 - pyx)) / pyx), min(1.0, c / pyx))


# -- canonical model and LP --------------------------------------------

@dataclass(frozen=True)
class CanonicalModel:
    """Index of the canonical parameters for |X| = m, |Y| = k."""
    m: int
    k: int

    @property
    def functions(self) -> list:
        return list(itertools.product(range(self.k), repeat=self.m))

    @property
    def size(self) -> int:
        return self.m * self.k ** self.m

    def index(self, a: int, f: Sequence[int]) -> int:
        j = 0
        for v in f:
            j = j * self.k + v
        return a * self.k ** self.m + j

    def vector(self, pred) -> np.ndarray:
        """0/1 vector over parameters where ``pred(a, f)`` holds."""
        out = np.zeros(self.size)
        for a in range(self.m):
            for f in self.functions:
                if pred(a, f):
                    out[self.index(a, f)] = 1.0
        return out

    def constraints(self, d: BowData):
        rows, rhs = [np.ones(self.size)], [1.0]
        if d.obs is not None:
            for a, b in itertools.product(range(self.m), range(self.k)):
                rows.append(self.vector(lambda a_, f, a=a, b=b: a_ == a and f[a] == b))
                rhs.append(float(d.obs[a, b]))
        if d.exp is not None:
            for x, b in itertools.product(range(self.m), range(self.k)):
                rows.append(self.vector(lambda a_, f, x=x, b=b: f[x] == b))
                rhs.append(float(d.exp[x, b]))
        if d.ctf is not None:
            if d.obs is None:
                raise BoundsError("counterfactual rows need P(X) from observational data")
            for a, x, b in itertools.product(range(self.m), range(self.m), range(self.k)):
                rows.append(self.vector(lambda a_, f, a=a, x=x, b=b: a_ == a and f[x] == b))
                rhs.append(float(d.ctf[a, x, b] * d.obs[a].sum()))
        return np.array(rows), np.array(rhs)


@dataclass(frozen=True)
class LinearQuery:
    """``num . q / den . q``; ``den`` None means the denominator is 1."""
    num: np.ndarray
    den: np.ndarray | None = None
    label: str = ""


def nte_query(cm: CanonicalModel, x: int, xp: int, y: int, yp: int) -> LinearQuery:
    num = cm.vector(lambda a, f: a == xp and f[x] == y and f[xp] == yp)
    den = cm.vector(lambda a, f: a == xp and f[xp] == yp)
    return LinearQuery(num, den, f"P(Y[X={x}]={y} | X={xp}, Y={yp})")


TYPE_NAMES = {(1, 1): "always-1", (0, 1): "helped", (1, 0): "hurt", (0, 0): "always-0"}


def type_query(cm: CanonicalModel, y0: int, y1: int, given_x: int | None = None) -> LinearQuery:
    """P(Y_0 = y0, Y_1 = y1 [| X = a]) on a binary treatment."""
    num = cm.vector(lambda a, f: f[0] == y0 and f[1] == y1 and (given_x is None or a == given_x))
    den = None if given_x is None else cm.vector(lambda a, f: a == given_x)
    return LinearQuery(num, den, f"P(Y[X=0]={y0}, Y[X=1]={y1}" + ("" if given_x is None else f" | X={given_x}") + ")")


def benefit_query(cm: CanonicalModel, params: Mapping, given_x: int | None = None) -> LinearQuery:
    """Expected treatment benefit; ``params`` maps (y0, y1) to the benefit of that type."""
    num = np.zeros(cm.size)
    den = None
    for (y0, y1), w in params.items():
        q = type_query(cm, y0, y1, given_x)
        num = num + float(w) * q.num
        den = q.den
    return LinearQuery(num, den, "benefit" + ("" if given_x is None else f" | X={given_x}"))


def _solve(c, A, b, sense):
    res = linprog(sense * c, A_eq=A, b_eq=b, bounds=(0, None), method="highs")
    if res.status == 2:
        raise BoundsError("constraints are infeasible (inconsistent data)")
    if res.status != 0:
        raise BoundsError(f"LP failed: {res.message}")
    return sense * res.fun, res.x


def polytope_bounds(d: BowData, query: LinearQuery, m: int | None = None, k: int | None = None) -> Interval:
    """Exact range of ``query`` over canonical models matching the data.

    A data-fixed denominator is divided out; otherwise the fractional
    program is solved by the Charnes-Cooper change of variables.
    """
    if m is None or k is None:
        m, k = d.shape
    cm = CanonicalModel(m, k)
    A, b = cm.constraints(d)
    out = []
    for sense in (1.0, -1.0):
        if query.den is None:
            val, q = _solve(query.num, A, b, sense)
        else:
            # fixed denominator: its value is the same at every feasible point
            lo_d, _ = _solve(query.den, A, b, 1.0)
            hi_d, _ = _solve(query.den, A, b, -1.0)
            if hi_d - lo_d <= TOL:
                if hi_d <= TOL:
                    raise BoundsError("query denominator is zero")
                val, q = _solve(query.num, A, b, sense)
                val /= hi_d
            else:
                # t >= 0 scales q; A z = b t, den . z = 1
                n = cm.size
                A2 = np.zeros((A.shape[0] + 1, n + 1))
                A2[:A.shape[0], :n] = A
                A2[:A.shape[0], n] = -b
                A2[-1, :n] = query.den
                b2 = np.zeros(A.shape[0] + 1)
                b2[-1] = 1.0
                c2 = np.concatenate([query.num, [0.0]])
                val, z = _solve(c2, A2, b2, sense)
                q = z[:n] / z[n] if z[n] > 0 else z[:n]
        resid = np.abs(A @ q - b).max()
        if resid > 1e-7:
            raise BoundsError(f"LP residual {resid:.2e} exceeds tolerance")
        out.append(val)
    lo, hi = out[0], out[1]
    return Interval(min(lo, hi), max(lo, hi), "exact LP over canonical models")


# -- oracle helpers ----------------------------------------------------

def bow_data_from_scm(M, x_var: str = "X", y_var: str = "Y") -> BowData:
    """All three data tiers of a bow-graph SCM, by enumeration."""
    from .expr import ev
    from .scm import l3_valuation
    m, k = M.cards[x_var], M.cards[y_var]
    obs = np.zeros((m, k))
    exp = np.zeros((m, k))
    ctf = np.zeros((m, m, k))
    for a, b in itertools.product(range(m), range(k)):
        obs[a, b] = l3_valuation(M, [ev(x_var, a), ev(y_var, b)])
        exp[a, b] = l3_valuation(M, [ev(y_var, b, **{x_var: a})])
    for a, x, b in itertools.product(range(m), range(m), range(k)):
        ctf[a, x, b] = l3_valuation(M, [ev(x_var, a), ev(y_var, b, **{x_var: x})]) / obs[a].sum()
    return BowData(obs, exp, ctf)


def nte_truth(M, x: int, xp: int, y: int, yp: int, x_var: str = "X", y_var: str = "Y") -> float:
    from .expr import ev
    from .scm import l3_valuation
    num = l3_valuation(M, [ev(y_var, y, **{x_var: x}), ev(x_var, xp), ev(y_var, yp)])
    den = l3_valuation(M, [ev(x_var, xp), ev(y_var, yp)])
    return num / den


# -- unit selection ----------------------------------------------------

def _decide(iv: Interval) -> str:
    if iv.lo > 0:
        return "treat"
    if iv.hi < 0:
        return "withhold"
    return "inconclusive"


def unit_selection(d: BowData, params: Mapping) -> dict:
    """Bound the average treatment benefit and pick a policy.

    ``params`` maps a unit type ``(y0, y1)`` to the benefit of treating it
    (no treatment is worth 0).  The population interval uses observational
    and interventional data; subgroup intervals (by natural X) add the
    counterfactual tier.  Each interval is one LP on the whole benefit.
    """
    if d.shape != (2, 2):
        raise BoundsError("unit selection is defined for binary X and Y")
    missing = set(TYPE_NAMES) - set(params)
    if missing:
        raise BoundsError(f"missing benefit for types {sorted(missing)}")
    cm = CanonicalModel(2, 2)
    l2 = d.subset(["obs", "exp"])
    report: dict = {"method": "exact LP over canonical models", "params": {TYPE_NAMES[t]: float(v) for t, v in params.items()}}
    pop = polytope_bounds(l2, benefit_query(cm, params))
    cells = {TYPE_NAMES[t]: polytope_bounds(l2, type_query(cm, *t)).to_json() for t in TYPE_NAMES}
    report["population"] = {"interval": pop.to_json(), "decision": _decide(pop),
                            "constraints": l2.tiers, "type_cells": cells}
    if d.ctf is None:
        return report
    sub = {}
    for a in range(2):
        iv = polytope_bounds(d, benefit_query(cm, params, a))
        cells = {TYPE_NAMES[t]: polytope_bounds(d, type_query(cm, *t, given_x=a)).to_json() for t in TYPE_NAMES}
        sub[a] = iv
        report[f"subgroup_x{a}"] = {"interval": iv.to_json(), "decision": _decide(iv),
                                    "constraints": d.tiers, "type_cells": cells}
    # worst case, over models matching all data, of (subgroup policy - each population policy)
    px = d.obs.sum(axis=1)
    treat = [a for a in range(2) if _decide(sub[a]) == "treat"]
    pol = np.zeros(cm.size)
    for a in treat:
        pol += benefit_query(cm, params, a).num  # P(X=a) * benefit(a), unnormalized
    total = benefit_query(cm, params).num
    A, b = cm.constraints(d)
    worst_vs_all, _ = _solve(pol - total, A, b, 1.0)
    worst_vs_none, _ = _solve(pol, A, b, 1.0)
    report["dominance"] = {
        "subgroup_policy": {str(a): ("treat" if a in treat else "withhold") for a in range(2)},
        "min_gain_vs_treat_all": worst_vs_all,
        "min_gain_vs_treat_none": worst_vs_none,
        "dominates": bool(worst_vs_all >= -TOL and worst_vs_none >= -TOL),
        "p_x": px.tolist(),
    }
    return report


# -- files -------------------------------------------------------------

_HEADERS = {"obs": ["x", "y", "p"], "exp": ["x", "y_x", "p"], "ctf": ["x_natural", "x_assigned", "y", "p"]}


def read_table_csv(path: str, kind: str, m: int | None = None, k: int | None = None) -> np.ndarray:
    """Read one data tier; the header selects the layout."""
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    cols = _HEADERS[kind]
    if not rows or list(rows[0].keys()) != cols:
        raise BoundsError(f"{path}: expected header {','.join(cols)}")
    keys = [tuple(int(r[c]) for c in cols[:-1]) for r in rows]
    xcols = 2 if kind == "ctf" else 1
    m = m or 1 + max(max(kk[:xcols]) for kk in keys)
    k = k or 1 + max(kk[-1] for kk in keys)
    shape = (m, k) if kind != "ctf" else (m, m, k)
    out = np.zeros(shape)
    for kk, r in zip(keys, rows):
        out[kk] = float(r["p"])
    return out


def write_table_csv(path: str, kind: str, table: np.ndarray) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(_HEADERS[kind])
        for idx in itertools.product(*(range(n) for n in table.shape)):
            w.writerow(list(idx) + [repr(float(table[idx]))])


def intervals_svg(items: Sequence[tuple], title: str = "") -> str:
    """Horizontal interval bars, one row per ``(label, Interval)``."""
    lo = min(min(iv.lo for _, iv in items), 0.0)
    hi = max(max(iv.hi for _, iv in items), 0.0)
    span = (hi - lo) or 1.0
    W, left, row = 560, 170, 34
    H = 50 + row * len(items) + 30

    def sx(v):
        return left + (v - lo) / span * (W - left - 30)

    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" font-family="sans-serif" font-size="12">',
             f'<text x="10" y="20" font-size="14">{title}</text>',
             f'<line x1="{sx(0):.1f}" y1="30" x2="{sx(0):.1f}" y2="{H - 25}" stroke="#888" stroke-dasharray="3,3"/>']
    colors = ["#d9822b", "#2b6cd9", "#2b9d4a", "#9d2b8a"]
    for i, (label, iv) in enumerate(items):
        y = 45 + i * row
        c = colors[i % len(colors)]
        parts.append(f'<text x="10" y="{y + 5}">{label}</text>')
        parts.append(f'<rect x="{sx(iv.lo):.1f}" y="{y - 8}" width="{max(sx(iv.hi) - sx(iv.lo), 1.5):.1f}" height="16" fill="{c}" opacity="0.8"/>')
        parts.append(f'<text x="{sx(iv.hi) + 4:.1f}" y="{y + 5}" font-size="10">[{iv.lo:.3g}, {iv.hi:.3g}]</text>')
    parts.append(f'<text x="{sx(lo):.1f}" y="{H - 8}" font-size="10">{lo:.3g}</text>')
    parts.append(f'<text x="{sx(hi) - 20:.1f}" y="{H - 8}" font-size="10">{hi:.3g}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
