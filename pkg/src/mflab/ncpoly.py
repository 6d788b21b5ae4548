"""Noncommutative *-polynomials in X1..Xn and their adjoints.

Text syntax::

    expr   := ['+'|'-'] term (('+'|'-') term)*
    term   := factor ('*' factor)*        # a numeric factor may also be juxtaposed: 2X1
    factor := primary "'"*                # postfix ' is the adjoint
    primary:= 'X' int | number | number 'i' | 'i' | '(' expr ')'

Complex coefficients are written as ``3``, ``2.5i`` or ``(1+2i)``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from .matcore import MatTuple, as_cmatrix, dagger


class Letter(NamedTuple):
    index: int
    starred: bool = False

    def adjoint(self) -> "Letter":
        return Letter(self.index, not self.starred)

    def __str__(self):
        return f"X{self.index}" + ("'" if self.starred else "")


Word = tuple  # tuple[Letter, ...]


def word_key(word: Word):
    return (len(word), tuple((l.index, l.starred) for l in word))


def word_adjoint(word: Word) -> Word:
    return tuple(l.adjoint() for l in reversed(word))


class ParseError(ValueError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} at byte {offset}")
        self.offset = offset


@dataclass(frozen=True)
class NCPoly:
    """Canonical polynomial: terms sorted graded-lexicographically, no zero coefficients."""

    num_vars: int
    terms: tuple = ()

    @classmethod
    def from_terms(cls, num_vars: int, terms: Iterable) -> "NCPoly":
        acc: dict = {}
        for coeff, word in terms:
            word = tuple(Letter(int(l[0]), bool(l[1])) for l in word)
            for l in word:
                if l.index < 1 or l.index > num_vars:
                    raise ValueError(f"letter X{l.index} outside 1..{num_vars}")
            acc[word] = acc.get(word, 0j) + complex(coeff)
        return cls._from_dict(num_vars, acc)

    @classmethod
    def _from_dict(cls, num_vars: int, acc: dict) -> "NCPoly":
        items = sorted(((w, c) for w, c in acc.items() if c != 0), key=lambda t: word_key(t[0]))
        return cls(num_vars, tuple((c, w) for w, c in items))

    @classmethod
    def constant(cls, value, num_vars: int) -> "NCPoly":
        return cls._from_dict(num_vars, {(): complex(value)})

    @classmethod
    def var(cls, index: int, num_vars: int, starred: bool = False) -> "NCPoly":
        if not 1 <= index <= num_vars:
            raise ValueError(f"X{index} outside 1..{num_vars}")
        return cls(num_vars, ((1 + 0j, (Letter(index, starred),)),))

    def _dict(self) -> dict:
        return {w: c for c, w in self.terms}

    def _coerce(self, other) -> "NCPoly":
        if isinstance(other, NCPoly):
            return other
        if isinstance(other, (int, float, complex, np.number)):
            return NCPoly.constant(other, self.num_vars)
        return NotImplemented

    def __add__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        acc = self._dict()
        for c, w in other.terms:
            acc[w] = acc.get(w, 0j) + c
        return NCPoly._from_dict(max(self.num_vars, other.num_vars), acc)

    __radd__ = __add__

    def __neg__(self):
        return NCPoly(self.num_vars, tuple((-c, w) for c, w in self.terms))

    def __sub__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        acc: dict = {}
        for c1, w1 in self.terms:
            for c2, w2 in other.terms:
                w = w1 + w2
                acc[w] = acc.get(w, 0j) + c1 * c2
        return NCPoly._from_dict(max(self.num_vars, other.num_vars), acc)

    def __rmul__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return other * self

    @property
    def degree(self) -> int:
        return max((len(w) for _, w in self.terms), default=0)

    def is_zero(self) -> bool:
        return not self.terms

    def variables(self) -> set:
        return {l.index for _, w in self.terms for l in w}

    def __str__(self):
        return format_poly(self)


# ---------------------------------------------------------------- algebra

def adjoint(p: NCPoly) -> NCPoly:
    return NCPoly._from_dict(p.num_vars, {word_adjoint(w): c.conjugate() for c, w in p.terms})


def is_self_adjoint(p: NCPoly) -> bool:
    return adjoint(p) == p


def evaluate(p: NCPoly, model) -> np.ndarray:
    """Evaluate p on a matrix model (MatTuple or sequence of square matrices)."""
    mats = model.mats if isinstance(model, MatTuple) else tuple(as_cmatrix(m) for m in model)
    if len(mats) != p.num_vars:
        raise ValueError(f"model has {len(mats)} matrices, polynomial has {p.num_vars} variables")
    if not mats:
        raise ValueError("cannot evaluate on an empty model")
    d = mats[0].shape[0]
    for m in mats:
        if m.shape != (d, d):
            raise ValueError("model matrices must be square of equal size")
    letters = {}
    for i, m in enumerate(mats, start=1):
        letters[Letter(i, False)] = m
        letters[Letter(i, True)] = dagger(m)
    cache = {(): np.eye(d, dtype=complex)}

    def prod(word):
        if word not in cache:
            cache[word] = prod(word[:-1]) @ letters[word[-1]]
        return cache[word]

    out = np.zeros((d, d), dtype=complex)
    for c, w in p.terms:
        out += c * prod(w)
    return out


# ---------------------------------------------------------------- printing

def _num(x: float) -> str:
    if x.is_integer() and abs(x) < 2**53:
        return str(int(x))
    return repr(x)


def _format_term(c: complex, word: Word):
    """Return (negative, body) for one term."""
    wtxt = "*".join(str(l) for l in word)
    a, b = c.real, c.imag
    if b == 0:
        neg, mag = a < 0, abs(a)
        if wtxt and mag == 1:
            return neg, wtxt
        body = _num(mag)
    elif a == 0:
        neg = b < 0
        body = _num(abs(b)) + "i"
    else:
        neg = False
        body = "(" + _num(a) + ("-" if b < 0 else "+") + _num(abs(b)) + "i)"
    return neg, body + ("*" + wtxt if wtxt else "")


def format_poly(p: NCPoly) -> str:
    if not p.terms:
        return "0"
    parts = []
    for k, (c, w) in enumerate(p.terms):
        neg, body = _format_term(c, w)
        if k == 0:
            parts.append(("-" if neg else "") + body)
        else:
            parts.append((" - " if neg else " + ") + body)
    return "".join(parts)


# ---------------------------------------------------------------- parsing

_TOKEN = re.compile(
    r"(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)(?P<imag>i)?"
    r"|(?P<var>X(?P<vidx>\d+))|(?P<i>i)|(?P<op>[-+*'()]))"
)


class _Parser:
    def __init__(self, text: str, num_vars: int):
        self.text = text
        self.num_vars = num_vars
        self.toks = self._lex(text)
        self.k = 0

    def _offset(self, pos: int) -> int:
        return len(self.text[:pos].encode("utf-8"))

    def _lex(self, text):
        toks, pos = [], 0
        while True:
            while pos < len(text) and text[pos].isspace():
                pos += 1
            if pos == len(text):
                toks.append(("eof", None, pos))
                return toks
            m = _TOKEN.match(text, pos)
            if not m or m.end() == pos:
                raise ParseError(f"unexpected character {text[pos]!r}", self._offset(pos))
            start = pos
            if m.group("num") is not None:
                v = float(m.group("num"))
                if not np.isfinite(v):
                    raise ParseError("number out of range", self._offset(start))
                toks.append(("num", complex(0, v) if m.group("imag") else complex(v, 0), start))
            elif m.group("var") is not None:
                toks.append(("var", int(m.group("vidx")), start))
            elif m.group("i") is not None:
                toks.append(("num", 1j, start))
            else:
                toks.append((m.group("op"), None, start))
            pos = m.end()

    def peek(self):
        return self.toks[self.k]

    def take(self, kind=None):
        tok = self.toks[self.k]
        if kind is not None and tok[0] != kind:
            what = "end of input" if tok[0] == "eof" else repr(tok[0])
            raise ParseError(f"expected {kind!r}, found {what}", self._offset(tok[2]))
        self.k += 1
        return tok

    def parse(self) -> NCPoly:
        p = self.expr()
        self.take("eof")
        return p

    def expr(self) -> NCPoly:
        sign = 1
        if self.peek()[0] in ("+", "-"):
            sign = -1 if self.take()[0] == "-" else 1
        p = self.term()
        if sign < 0:
            p = -p
        while self.peek()[0] in ("+", "-"):
            op = self.take()[0]
            q = self.term()
            p = p + q if op == "+" else p - q
        return p

    def term(self) -> NCPoly:
        p, numeric = self.factor()
        while True:
            kind = self.peek()[0]
            if kind == "*":
                self.take()
                q, numeric = self.factor()
            elif numeric and kind in ("var", "("):
                q, numeric = self.factor()
            else:
                return p
            p = p * q

    def factor(self):
        kind, val, pos = self.peek()
        numeric = False
        if kind == "var":
            self.take()
            if val < 1 or val > self.num_vars:
                raise ParseError(f"variable X{val} outside 1..{self.num_vars}", self._offset(pos))
            p = NCPoly.var(val, self.num_vars)
        elif kind == "num":
            self.take()
            p = NCPoly.constant(val, self.num_vars)
            numeric = True
        elif kind == "(":
            self.take()
            p = self.expr()
            self.take(")")
        else:
            what = "end of input" if kind == "eof" else repr(kind)
            raise ParseError(f"expected a factor, found {what}", self._offset(pos))
        while self.peek()[0] == "'":
            self.take()
            p = adjoint(p)
            numeric = False
        return p, numeric


def parse(text: str, num_vars: int) -> NCPoly:
    """Parse polynomial text into canonical form."""
    if num_vars < 0:
        raise ValueError("num_vars must be nonnegative")
    return _Parser(text, num_vars).parse()


# ---------------------------------------------------------------- generators

def random_poly(rng: np.random.Generator, num_vars: int, max_degree: int = 4,
                max_terms: int = 6, complex_coeffs: bool = True) -> NCPoly:
    """Random polynomial with short dyadic-ish coefficients (for tests and fuzzing)."""
    terms = []
    for _ in range(int(rng.integers(1, max_terms + 1))):
        deg = int(rng.integers(0, max_degree + 1))
        word = tuple((int(rng.integers(1, num_vars + 1)), bool(rng.integers(0, 2))) for _ in range(deg))
        re_ = float(rng.integers(-40, 41)) / 8
        im_ = float(rng.integers(-40, 41)) / 8 if complex_coeffs else 0.0
        terms.append((complex(re_, im_), word))
    return NCPoly.from_terms(num_vars, terms)


def poly_family(texts: Sequence[str], num_vars: int) -> list:
    return [parse(t, num_vars) for t in texts]
