"""Symbolic estimands: sums, products and quotients of input-table marginals.

An :class:`InputRef` names one regime template, the subset of its variables
that are kept (the rest are marginalized out) and a binding from template
symbols to terms.  Terms are ints, or :class:`~ctfid.expr.Sym` objects that
must be bound by an enclosing :class:`Sum` or by the caller's environment.

Evaluation is vectorized: each node evaluates to a small labelled array (one
axis per free symbol), combined with ``numpy.einsum``.
"""
from __future__ import annotations

import string
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .expr import Sym, render_event, subst_event
from .regime import Template

__all__ = [
    "Estimand", "InputRef", "Sum", "Product", "Quotient", "Const",
    "EstimandError", "make_sum", "make_product", "make_quotient",
    "free_syms", "substitute", "evaluate", "render", "to_json", "canonical",
    "structurally_equal",
]


class EstimandError(ValueError):
    pass


class Estimand:
    """Base class; nodes are immutable and hashable."""

    def __str__(self) -> str:
        return render(self)


@dataclass(frozen=True, eq=True)
class Const(Estimand):
    value: float

    def __str__(self):
        return render(self)


@dataclass(frozen=True, eq=False)
class InputRef(Estimand):
    template: Template
    retained: frozenset
    binding: tuple          # ((template Sym, term), ...) sorted by symbol name

    def __post_init__(self):
        object.__setattr__(self, "retained", frozenset(self.retained))
        b = dict(self.binding)
        object.__setattr__(self, "binding", tuple(sorted(b.items(), key=lambda kv: (kv[0].name, kv[0].var))))
        for v in self.retained:
            if self.template.natural.get(v) is None:
                raise EstimandError(f"{v} is not measured in regime {self.template.id}")
        # a summed-out variable must not be referenced by a kept event
        used = set()
        for e in self.template.factor:
            if e.var in self.retained:
                used.update(s for _, s in e.response.subscript)
        for v, s in self.template.natural.items():
            if v not in self.retained and s in used:
                raise EstimandError(f"kept events reference marginalized {v}")

    @property
    def bind(self) -> dict:
        return dict(self.binding)

    def events(self, form: str = "factor") -> tuple:
        src = self.template.factor if form == "factor" else self.template.events
        b = self.bind
        return tuple(subst_event(e, b) for e in src if e.var in self.retained)

    def _key(self):
        return (self.template.id, id(self.template.graph), self.retained, self.binding)

    def __eq__(self, other):
        return isinstance(other, InputRef) and self.template is other.template and \
            self.retained == other.retained and self.binding == other.binding

    def __hash__(self):
        return hash((self.template.id, self.retained, self.binding))

    def __str__(self):
        return render(self)


@dataclass(frozen=True)
class Sum(Estimand):
    syms: tuple
    child: Estimand

    def __str__(self):
        return render(self)


@dataclass(frozen=True)
class Product(Estimand):
    factors: tuple

    def __str__(self):
        return render(self)


@dataclass(frozen=True)
class Quotient(Estimand):
    num: Estimand
    den: Estimand

    def __str__(self):
        return render(self)


ZERO = Const(0.0)
ONE = Const(1.0)


# -- smart constructors ------------------------------------------------

def make_input(template: Template, retained: Iterable[str], binding: Mapping) -> Estimand:
    retained = frozenset(retained)
    if not retained:
        return ONE
    keep = {}
    for e in template.factor:
        if e.var in retained:
            for s in [e.value] + [t for _, t in e.response.subscript]:
                if isinstance(s, Sym) and s in binding:
                    keep[s] = binding[s]
    return InputRef(template, retained, tuple(keep.items()))


def make_sum(syms: Sequence[Sym], child: Estimand) -> Estimand:
    syms = tuple(dict.fromkeys(syms))
    if not syms:
        return child
    if isinstance(child, Const):
        if child.value == 0:
            return ZERO
    if isinstance(child, Sum):
        return Sum(syms + child.syms, child.child)
    return Sum(syms, child)


def make_product(factors: Iterable[Estimand]) -> Estimand:
    out = []
    for f in factors:
        if isinstance(f, Product):
            out.extend(f.factors)
        elif isinstance(f, Const):
            if f.value == 0:
                return ZERO
            if f.value != 1:
                out.append(f)
        else:
            out.append(f)
    if not out:
        return ONE
    if len(out) == 1:
        return out[0]
    return Product(tuple(out))


def make_quotient(num: Estimand, den: Estimand) -> Estimand:
    if isinstance(den, Const) and den.value == 1:
        return num
    if isinstance(num, Const) and num.value == 0:
        return ZERO
    return Quotient(num, den)


# -- symbols -----------------------------------------------------------

def free_syms(e: Estimand) -> list:
    """Symbols the value of ``e`` depends on, in first-appearance order."""
    out: list = []

    def add(s):
        if s not in out:
            out.append(s)

    def walk(n, bound):
        if isinstance(n, InputRef):
            for _, t in n.binding:
                if isinstance(t, Sym) and t not in bound:
                    add(t)
        elif isinstance(n, Sum):
            walk(n.child, bound | set(n.syms))
        elif isinstance(n, Product):
            for f in n.factors:
                walk(f, bound)
        elif isinstance(n, Quotient):
            walk(n.num, bound)
            walk(n.den, bound)

    walk(e, frozenset())
    return out


def substitute(e: Estimand, m: Mapping) -> Estimand:
    """Replace free symbols by terms (bound symbols are left alone)."""
    if not m:
        return e
    if isinstance(e, InputRef):
        b = tuple((k, m.get(t, t) if isinstance(t, Sym) else t) for k, t in e.binding)
        return InputRef(e.template, e.retained, b)
    if isinstance(e, Sum):
        inner = {k: v for k, v in m.items() if k not in e.syms}
        return make_sum(e.syms, substitute(e.child, inner))
    if isinstance(e, Product):
        return make_product(substitute(f, m) for f in e.factors)
    if isinstance(e, Quotient):
        return make_quotient(substitute(e.num, m), substitute(e.den, m))
    return e


# -- evaluation --------------------------------------------------------

@dataclass
class _Factor:
    syms: tuple
    array: np.ndarray


def _letters(syms: Sequence[Sym], table: dict) -> str:
    for s in syms:
        if s not in table:
            if len(table) >= 52:
                raise EstimandError("too many symbols in one einsum")
            table[s] = string.ascii_letters[len(table)]
    return "".join(table[s] for s in syms)


def _table_for(ref: InputRef, data: Mapping) -> np.ndarray:
    tab = data.get(ref.template.id)
    if tab is None:
        raise EstimandError(f"no data for regime {ref.template.id!r}")
    arr = getattr(tab, "array", tab)
    arr = np.asarray(arr, dtype=float)
    if arr.shape != tuple(s.card for s in ref.template.axes):
        raise EstimandError(f"table for {ref.template.id!r} has shape {arr.shape}")
    return arr


def _eval(e: Estimand, data: Mapping, env: Mapping, cache: dict) -> _Factor:
    if isinstance(e, Const):
        return _Factor((), np.asarray(float(e.value)))
    if isinstance(e, InputRef):
        arr = _table_for(e, data)
        b = e.bind
        tpl = e.template
        naturals = set(tpl.natural.values())
        index, labels = [], []
        for s in tpl.axes:
            if s in naturals and s.var not in e.retained:
                index.append(slice(None))
                labels.append(None)
                continue
            t = b.get(s)
            if t is None:
                if s in naturals:
                    raise EstimandError(f"kept variable {s.var} has no value")
                t = 0  # the kept marginal does not depend on this assignment
            if isinstance(t, Sym):
                t = env.get(t, t)
            if isinstance(t, Sym):
                index.append(slice(None))
                labels.append(t)
            else:
                index.append(int(t))
        sub = arr[tuple(index)]
        if None in labels:
            sub = sub.sum(axis=tuple(i for i, l in enumerate(labels) if l is None))
        axis_labels = [l for l in labels if l is not None]
        # repeated symbols take the diagonal
        uniq = tuple(dict.fromkeys(axis_labels))
        if len(uniq) != len(axis_labels):
            tab: dict = {}
            sub = np.einsum(_letters(axis_labels, tab) + "->" + _letters(uniq, tab), sub)
        return _Factor(uniq, sub)
    if isinstance(e, Sum):
        inner_env = {k: v for k, v in env.items() if k not in e.syms}
        f = _eval(e.child, data, inner_env, cache)
        arr, syms = f.array, list(f.syms)
        scale = 1.0
        for s in e.syms:
            if s in syms:
                i = syms.index(s)
                arr = arr.sum(axis=i)
                syms.pop(i)
            else:
                scale *= s.card
        return _Factor(tuple(syms), arr * scale)
    if isinstance(e, Product):
        parts = [_eval(f, data, env, cache) for f in e.factors]
        out_syms = tuple(dict.fromkeys(s for p in parts for s in p.syms))
        tab: dict = {}
        spec = ",".join(_letters(p.syms, tab) for p in parts) + "->" + _letters(out_syms, tab)
        return _Factor(out_syms, np.einsum(spec, *[p.array for p in parts]))
    if isinstance(e, Quotient):
        n = _eval(e.num, data, env, cache)
        d = _eval(e.den, data, env, cache)
        out_syms = tuple(dict.fromkeys(n.syms + d.syms))
        na = _align(n, out_syms)
        da = _align(d, out_syms)
        if np.any((da == 0) & (na != 0)):
            raise EstimandError("zero denominator")
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.where(da == 0, 0.0, na / np.where(da == 0, 1.0, da))
        return _Factor(out_syms, out)
    raise EstimandError(f"unknown node {type(e).__name__}")


def _align(f: _Factor, out_syms: Sequence[Sym]) -> np.ndarray:
    arr = f.array
    # order axes as in out_syms, then add singleton axes for missing ones
    perm = [f.syms.index(s) for s in out_syms if s in f.syms]
    arr = np.transpose(arr, perm) if perm else arr
    shape = [s.card if s in f.syms else 1 for s in out_syms]
    return arr.reshape(shape)


def evaluate(e: Estimand, data: Mapping, env: Mapping | None = None):
    """Evaluate ``e`` on regime tables.

    ``data`` maps regime id to a :class:`~ctfid.scm.RegimeTable` or array.
    Free symbols must be bound by ``env``; otherwise the result is an
    ``(syms, array)`` pair over the remaining free symbols.
    """
    env = dict(env or {})
    f = _eval(e, data, env, {})
    if f.syms:
        return f.syms, f.array
    return float(f.array)


# -- rendering ---------------------------------------------------------

class _Namer:
    """Per-variable names for bound symbols: x, x', x'' ..."""

    def __init__(self):
        self.names: dict = {}
        self.count: dict = {}

    def __call__(self, s: Sym) -> str:
        n = self.names.get(s)
        if n is None:
            k = self.count.get(s.var, 0)
            self.count[s.var] = k + 1
            n = s.var.lower() + "'" * k
            self.names[s] = n
        return n


def _ref_events(ref: InputRef) -> tuple:
    """Events to display: the compact form when it only mentions kept values."""
    kept_syms = {ref.template.natural[v] for v in ref.retained}
    compact = [e for e in ref.template.events if e.var in ref.retained]
    dropped = set(ref.template.natural.values()) - kept_syms
    for e in compact:
        for _, t in e.response.subscript:
            if t in dropped:
                return ref.events("factor")
    b = ref.bind
    return tuple(subst_event(e, b) for e in compact)


def _fmt_events(events, namer) -> str:
    return ", ".join(render_event(e, namer) for e in events)


def _regime_tag(ref: InputRef) -> str:
    return "" if ref.template.id == "observe" else "{" + ref.template.id + "}"


def _render(e: Estimand, namer, ctx: str = "top") -> str:
    if isinstance(e, Const):
        v = e.value
        return str(int(v)) if float(v).is_integer() else repr(v)
    if isinstance(e, InputRef):
        return f"P{_regime_tag(e)}({_fmt_events(_ref_events(e), namer)})"
    if isinstance(e, Quotient):
        n, d = e.num, e.den
        if isinstance(n, InputRef) and isinstance(d, InputRef) and n.template is d.template \
                and d.retained < n.retained and all(n.bind.get(k, k) == t for k, t in d.binding):
            ne = _ref_events(n)
            de = _ref_events(d)
            top = [x for x in ne if x.var not in d.retained]
            return f"P{_regime_tag(n)}({_fmt_events(top, namer)} | {_fmt_events(de, namer)})"
        return f"({_render(n, namer, 'q')}) / ({_render(d, namer, 'q')})"
    if isinstance(e, Sum):
        names = ",".join(namer(s) for s in e.syms)
        body = _render(e.child, namer, "sum")
        return f"Σ_{{{names}}} {body}"
    if isinstance(e, Product):
        parts = []
        for i, f in enumerate(e.factors):
            txt = _render(f, namer, "prod")
            if isinstance(f, Sum) and i < len(e.factors) - 1:
                txt = f"[{txt}]"
            parts.append(txt)
        return " ".join(parts)
    raise EstimandError(f"unknown node {type(e).__name__}")


def render(e: Estimand) -> str:
    return _render(e, _Namer())


def to_json(e: Estimand) -> dict:
    namer = _Namer()

    def term(t):
        return {"sym": namer(t), "var": t.var} if isinstance(t, Sym) else int(t)

    def go(n):
        if isinstance(n, Const):
            return {"type": "const", "value": n.value}
        if isinstance(n, InputRef):
            return {
                "type": "input",
                "regime": n.template.id,
                "kept": sorted(n.retained),
                "events": [render_event(x, namer) for x in n.events("factor")],
            }
        if isinstance(n, Sum):
            return {"type": "sum", "over": [term(s) for s in n.syms], "child": go(n.child)}
        if isinstance(n, Product):
            return {"type": "product", "factors": [go(f) for f in n.factors]}
        if isinstance(n, Quotient):
            return {"type": "quotient", "num": go(n.num), "den": go(n.den)}
        raise EstimandError(f"unknown node {type(n).__name__}")

    return go(e)


# -- structural comparison ---------------------------------------------

def canonical(e: Estimand) -> str:
    """A string equal for estimands that differ only in bound-symbol names
    and the order of product factors."""

    def go(n, ren, depth):
        if isinstance(n, Const):
            return f"C{n.value}"
        if isinstance(n, InputRef):
            evs = sorted(render_event(subst_event(x, ren)) for x in n.events("factor"))
            return f"P[{n.template.id}]({';'.join(evs)})"
        if isinstance(n, Sum):
            inner = dict(ren)
            seen: dict = {}
            for s in n.syms:
                k = seen.get(s.var, 0)
                seen[s.var] = k + 1
                inner[s] = Sym(f"#{depth}.{s.var}.{k}", s.var, s.card, "sum")
            over = ",".join(sorted(f"{s.var}" for s in n.syms))
            return f"S[{over}]{{{go(n.child, inner, depth + 1)}}}"
        if isinstance(n, Product):
            return "*(" + ",".join(sorted(go(f, ren, depth) for f in n.factors)) + ")"
        if isinstance(n, Quotient):
            return f"/({go(n.num, ren, depth)},{go(n.den, ren, depth)})"
        raise EstimandError(f"unknown node {type(n).__name__}")

    return go(e, {}, 0)


def structurally_equal(a: Estimand, b: Estimand) -> bool:
    return canonical(a) == canonical(b)
