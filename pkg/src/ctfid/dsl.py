"""Text formats for queries and regime sets.

Query grammar::

    query      := 'P(' conj ( '|' conj )? ')'
    conj       := event (',' event)*
    event      := var sub? '=' value
    sub        := '[' assignment (',' assignment)* ']'
    assignment := var '=' (value | var sub)

A value is an integer or a lower-case name with optional primes (``x``,
``x'``, ``x''``).  Names are scoped per variable and bind to the smallest
integers not written explicitly for that variable, in order of first
appearance, so ``x`` and ``x'`` always get different values.
"""
from __future__ import annotations

import re
from typing import Iterable

from .expr import CtfConjunction, CtfEvent, PotentialResponse, Query, render_events
from .graph import CausalDiagram
from .regime import CtfRand, Rand, RegimeSpec

__all__ = ["DSLError", "parse_query", "render_query", "parse_regimes", "parse_regime",
           "render_regimes", "parse_conjunction"]


class DSLError(ValueError):
    def __init__(self, msg: str, pos: int | None = None, text: str | None = None):
        self.pos = pos
        if pos is not None and text is not None:
            msg = f"{msg} at column {pos + 1}\n  {text}\n  {' ' * pos}^"
        super().__init__(msg)


_TOKEN = re.compile(r"\s*(?:(?P<num>\d+)|(?P<name>[A-Za-z_][A-Za-z0-9_]*'*)|(?P<op>->|[()\[\],=|{};]))")


def _tokenize(text: str) -> list:
    toks, i = [], 0
    while i < len(text):
        if text[i:].strip() == "":
            break
        m = _TOKEN.match(text, i)
        if not m:
            j = i
            while j < len(text) and text[j].isspace():
                j += 1
            raise DSLError(f"unexpected character {text[j]!r}", j, text)
        kind = m.lastgroup
        toks.append((kind, m.group(kind), m.start(kind)))
        i = m.end()
    toks.append(("end", "", len(text)))
    return toks


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.toks = _tokenize(text)
        self.i = 0

    def peek(self, k: int = 0):
        return self.toks[min(self.i + k, len(self.toks) - 1)]

    def next(self):
        t = self.toks[self.i]
        self.i += 1
        return t

    def error(self, msg: str, tok=None):
        tok = tok or self.peek()
        raise DSLError(msg, tok[2], self.text)

    def expect(self, value: str):
        t = self.peek()
        if t[1] != value or t[0] == "name":
            self.error(f"expected {value!r}, found {t[1] or 'end of input'!r}")
        return self.next()

    def name(self, what: str = "variable"):
        t = self.peek()
        if t[0] != "name":
            self.error(f"expected {what}, found {t[1] or 'end of input'!r}")
        return self.next()

    # grammar ---------------------------------------------------------

    def query(self):
        t = self.name("'P('")
        if t[1] != "P":
            self.error("a query starts with 'P('", t)
        self.expect("(")
        joint = self.conj()
        given = None
        if self.peek()[1] == "|":
            self.next()
            given = self.conj()
        self.expect(")")
        if self.peek()[0] != "end":
            self.error("trailing input after query")
        return joint, given

    def conj(self):
        out = [self.event()]
        while self.peek()[1] == ",":
            self.next()
            out.append(self.event())
        return out

    def event(self):
        var = self.name()
        sub = self.sub() if self.peek()[1] == "[" else []
        self.expect("=")
        return ("ev", var, sub, self.value())

    def sub(self):
        self.expect("[")
        out = [self.assignment()]
        while self.peek()[1] == ",":
            self.next()
            out.append(self.assignment())
        self.expect("]")
        return out

    def assignment(self):
        var = self.name()
        self.expect("=")
        t = self.peek()
        if t[0] == "name" and self.peek(1)[1] == "[":
            self.next()
            return (var, ("pr", t, self.sub()))
        return (var, self.value())

    def value(self):
        t = self.peek()
        if t[0] not in ("num", "name"):
            self.error(f"expected a value, found {t[1] or 'end of input'!r}")
        return self.next()


class _Binder:
    """Turns parse trees into expressions, binding value names per variable."""

    def __init__(self, G: CausalDiagram | None, text: str):
        self.G = G
        self.text = text
        self.explicit: dict = {}
        self.names: dict = {}

    def _var(self, tok) -> str:
        if self.G is not None and tok[1] not in self.G.variables:
            raise DSLError(f"unknown variable {tok[1]!r}", tok[2], self.text)
        return tok[1]

    def scan(self, node, var=None):
        """First pass: collect explicit integers and name order per variable."""
        if isinstance(node, list):
            for n in node:
                self.scan(n)
        elif node[0] == "ev":
            _, vt, sub, val = node
            v = self._var(vt)
            for k, t in sub:
                kv = self._var(k)
                if isinstance(t, tuple) and t[0] == "pr":
                    self._var(t[1])
                    if t[1][1] != kv:
                        raise DSLError(f"nested response for {kv} must be a response of {kv}",
                                       t[1][2], self.text)
                    self.scan(("ev", t[1], t[2], None))
                else:
                    self._value(kv, t)
            if val is not None:
                self._value(v, val)

    def _value(self, var: str, tok):
        if tok[0] == "num":
            self.explicit.setdefault(var, set()).add(int(tok[1]))
        else:
            order = self.names.setdefault(var, [])
            if tok[1] not in order:
                order.append(tok[1])

    def bind(self) -> dict:
        out = {}
        for var, order in self.names.items():
            used = set(self.explicit.get(var, ()))
            n = 0
            for name in order:
                while n in used:
                    n += 1
                out[(var, name)] = n
                used.add(n)
        return out

    def build(self, node, binding):
        _, vt, sub, val = node
        v = vt[1]
        items = []
        for k, t in sub:
            if isinstance(t, tuple) and t[0] == "pr":
                items.append((k[1], self.build(("ev", t[1], t[2], None), binding)))
            else:
                items.append((k[1], self._resolve(k[1], t, binding)))
            if k[1] == v:
                raise DSLError(f"{v} cannot appear in its own subscript", k[2], self.text)
        keys = [k for k, _ in items]
        if len(set(keys)) != len(keys):
            raise DSLError(f"repeated subscript variable in {v}", vt[2], self.text)
        r = PotentialResponse.make(v, items)
        if val is None:
            return r
        return CtfEvent(r, self._resolve(v, val, binding))

    def _resolve(self, var, tok, binding) -> int:
        x = int(tok[1]) if tok[0] == "num" else binding[(var, tok[1])]
        if self.G is not None and not 0 <= x < self.G.card(var):
            what = tok[1] if tok[0] == "num" else f"{tok[1]} (bound to {x})"
            raise DSLError(f"value {what} out of domain of {var} (card {self.G.card(var)})",
                           tok[2], self.text)
        return x


def parse_query(text: str, G: CausalDiagram | None = None) -> Query:
    """Parse ``P(joint | given)``; with ``G`` variables and values are checked."""
    p = _Parser(text.strip())
    joint, given = p.query()
    b = _Binder(G, p.text)
    b.scan(joint)
    if given:
        b.scan(given)
    binding = b.bind()
    j = CtfConjunction(b.build(n, binding) for n in joint)
    g = CtfConjunction(b.build(n, binding) for n in given) if given else None
    return Query(j, g)


def parse_conjunction(text: str, G: CausalDiagram | None = None) -> list:
    """A bare comma-separated event list, e.g. ``X=0, Y[X=1]=1``."""
    return list(parse_query(f"P({text})", G).joint)


def render_query(q: Query) -> str:
    s = "P(" + render_events(q.joint)
    if q.given is not None and len(q.given):
        s += " | " + render_events(q.given)
    return s + ")"


# -- regimes -----------------------------------------------------------

def parse_regime(text: str, G: CausalDiagram | None = None) -> RegimeSpec:
    """One regime: ``observe`` or ``;``-separated ``rand(X)`` / ``ctf-rand(X -> {Y,Z})``."""
    src = text.strip()
    actions = []
    pos = 0
    for part in src.split(";"):
        start = pos + len(part) - len(part.lstrip())
        pos += len(part) + 1
        a = part.strip()
        if not a:
            raise DSLError("empty action", start, src)
        if a == "observe":
            continue
        m = re.fullmatch(r"rand\(\s*([A-Za-z_]\w*)\s*\)", a)
        if m:
            actions.append(Rand(m.group(1)))
            continue
        m = re.fullmatch(r"ctf-rand\(\s*([A-Za-z_]\w*)\s*->\s*\{([^}]*)\}\s*\)", a)
        if m:
            kids = [c.strip() for c in m.group(2).split(",") if c.strip()]
            if not kids or not all(re.fullmatch(r"[A-Za-z_]\w*", c) for c in kids):
                raise DSLError("ctf-rand needs a non-empty set of child names", start, src)
            actions.append(CtfRand(m.group(1), kids))
            continue
        raise DSLError(f"unknown action {a!r}", start, src)
    spec = RegimeSpec(tuple(actions))
    if G is not None:
        try:
            spec.validate(G)
        except (KeyError, ValueError) as exc:
            raise DSLError(f"invalid regime {spec.id}: {exc}") from exc
    return spec


def parse_regimes(text: str, G: CausalDiagram | None = None) -> list:
    """One regime per non-blank line; ``#`` starts a comment."""
    out = []
    for line in text.splitlines():
        line = line.split("#", 1)[0].strip()
        if line:
            spec = parse_regime(line, G)
            if spec not in out:
                out.append(spec)
    if not out:
        raise DSLError("no regimes given")
    return out


def render_regimes(specs: Iterable[RegimeSpec]) -> str:
    return "\n".join(s.id for s in specs) + "\n"
