"""Words in free groups, F_n x| S_n, free products and coset decompositions.

Free-group words are stored run-length encoded as tuples of ``(gen, exp)``
runs with ``gen >= 1``, ``exp != 0`` and no two adjacent runs on the same
generator.  Permutations of {1..n} are tuples ``p`` with ``p[i-1] = sigma(i)``.
"""

from __future__ import annotations

import itertools
import re
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .matcore import parallel_map, task_rng


# ---------------------------------------------------------------- free words

def _push_run(out: list, gen: int, exp: int):
    if out and out[-1][0] == gen:
        e = out[-1][1] + exp
        out.pop()
        if e:
            out.append((gen, e))
    elif exp:
        out.append((gen, exp))


@dataclass(frozen=True)
class FWord:
    runs: tuple = ()

    @classmethod
    def gen(cls, i: int, exp: int = 1) -> "FWord":
        if i < 1:
            raise ValueError("generator indices start at 1")
        return cls(((i, exp),) if exp else ())

    def letters(self) -> list:
        """Expanded letter list of (gen, +1/-1)."""
        out = []
        for g, e in self.runs:
            out.extend([(g, 1 if e > 0 else -1)] * abs(e))
        return out

    def __len__(self):
        return sum(abs(e) for _, e in self.runs)

    @property
    def length(self) -> int:
        return len(self)

    def is_identity(self) -> bool:
        return not self.runs

    def __mul__(self, other: "FWord") -> "FWord":
        out = list(self.runs)
        for g, e in other.runs:
            _push_run(out, g, e)
        return FWord(tuple(out))

    def inverse(self) -> "FWord":
        return FWord(tuple((g, -e) for g, e in reversed(self.runs)))

    def __pow__(self, k: int) -> "FWord":
        base = self if k >= 0 else self.inverse()
        out = FWord()
        for _ in range(abs(k)):
            out = out * base
        return out

    def apply_perm(self, perm: Sequence[int]) -> "FWord":
        """Image under the automorphism g_i -> g_{perm(i)}."""
        return FWord(tuple((perm[g - 1], e) for g, e in self.runs))

    def max_gen(self) -> int:
        return max((g for g, _ in self.runs), default=0)

    def suffix(self, k: int) -> list:
        return self.letters()[-k:] if k else []

    def __str__(self):
        if not self.runs:
            return "e"
        return "*".join(f"g{g}" if e == 1 else f"g{g}^{e}" for g, e in self.runs)


def prepend_letter(runs: tuple, gen: int, sign: int) -> tuple:
    """Runs of g_gen^sign * w for a reduced run tuple w."""
    if runs and runs[0][0] == gen:
        e = runs[0][1] + sign
        return ((gen, e),) + runs[1:] if e else runs[1:]
    return ((gen, sign),) + runs


def reduce(letters) -> FWord:
    """Freely reduce a raw list of (gen, exponent) pairs."""
    out: list = []
    for g, e in letters:
        g, e = int(g), int(e)
        if g < 1:
            raise ValueError("generator indices start at 1")
        _push_run(out, g, e)
    return FWord(tuple(out))


_WORD_TOKEN = re.compile(r"\s*g(\d+)(?:\^(-?\d+))?\s*")


def parse_word(text: str) -> FWord:
    """Parse ``g1^2*g2^-1`` style text; ``e`` or empty is the identity."""
    text = text.strip()
    if text in ("", "e", "1"):
        return FWord()
    letters = []
    for part in text.split("*"):
        m = _WORD_TOKEN.fullmatch(part)
        if not m:
            raise ValueError(f"bad word factor {part!r}")
        letters.append((int(m.group(1)), int(m.group(2) or 1)))
    return reduce(letters)


# ---------------------------------------------------------------- permutations

def validate_perm(perm: Sequence[int], n: int | None = None) -> tuple:
    perm = tuple(int(x) for x in perm)
    if n is not None and len(perm) != n:
        raise ValueError(f"permutation {perm} is not on {{1..{n}}}")
    if sorted(perm) != list(range(1, len(perm) + 1)):
        raise ValueError(f"malformed permutation {perm}")
    return perm


def perm_identity(n: int) -> tuple:
    return tuple(range(1, n + 1))


def perm_compose(a: Sequence[int], b: Sequence[int]) -> tuple:
    """(a b)(i) = a(b(i))."""
    return tuple(a[b[i] - 1] for i in range(len(b)))


def perm_inverse(a: Sequence[int]) -> tuple:
    inv = [0] * len(a)
    for i, ai in enumerate(a, start=1):
        inv[ai - 1] = i
    return tuple(inv)


def random_perm(rng: np.random.Generator, n: int) -> tuple:
    return tuple(int(x) + 1 for x in rng.permutation(n))


# ---------------------------------------------------------------- F_n x| S_n

@dataclass(frozen=True)
class SemidirectElem:
    word: FWord
    perm: tuple

    @property
    def n(self) -> int:
        return len(self.perm)

    def __mul__(self, other: "SemidirectElem") -> "SemidirectElem":
        return semidirect_mul(self, other)

    def inverse(self) -> "SemidirectElem":
        pinv = perm_inverse(self.perm)
        return SemidirectElem(self.word.inverse().apply_perm(pinv), pinv)

    def __str__(self):
        return f"({self.word}, {''.join(map(str, self.perm)) if self.n < 10 else self.perm})"


def semidirect_mul(a: SemidirectElem, b: SemidirectElem) -> SemidirectElem:
    """(w1, s1)(w2, s2) = (w1 * alpha(s1)(w2), s1 s2)."""
    if a.n != b.n:
        raise ValueError("semidirect factors on different n")
    return SemidirectElem(a.word * b.word.apply_perm(a.perm), perm_compose(a.perm, b.perm))


def semidirect_identity(n: int) -> SemidirectElem:
    return SemidirectElem(FWord(), perm_identity(n))


# ---------------------------------------------------------------- freeness witness

@dataclass
class WitnessReport:
    n: int
    exponents: tuple
    betas: tuple
    base_exponent: int
    word: FWord
    nonidentity: bool
    expected_suffix: list
    suffix_ok: bool

    @property
    def length(self) -> int:
        return len(self.word)

    def to_json(self) -> dict:
        return {
            "n": self.n,
            "exponents": list(self.exponents),
            "betas": [list(b) for b in self.betas],
            "base_exponent": self.base_exponent,
            "word": str(self.word),
            "length": self.length,
            "nonidentity": self.nonidentity,
            "expected_suffix": [list(l) for l in self.expected_suffix],
            "suffix_ok": self.suffix_ok,
        }


def base_word(n: int, base_exponent: int = 3) -> FWord:
    """g = (g_1 g_2 ... g_n)^base_exponent."""
    return reduce([(i, 1) for i in range(1, n + 1)]) ** base_exponent


def freeness_witness(n: int, exponents: Sequence[int], perms: Sequence[Sequence[int]],
                     base_exponent: int = 3) -> WitnessReport:
    """Reduce g^{n_1} (beta_1 g)^{n_2} ... (beta_{m-1} g)^{n_m} in F_n.

    ``perms`` are the beta_j (one fewer than the exponents).  They must satisfy
    beta_1 != e and beta_j != beta_{j+1}.
    """
    exponents = tuple(int(e) for e in exponents)
    if not exponents:
        raise ValueError("need at least one exponent")
    if any(e == 0 for e in exponents):
        raise ValueError("exponents must be nonzero")
    betas = tuple(validate_perm(p, n) for p in perms)
    if len(betas) != len(exponents) - 1:
        raise ValueError("need exactly one permutation between consecutive exponents")
    ident = perm_identity(n)
    if betas and betas[0] == ident:
        raise ValueError("beta_1 must differ from the identity")
    for a, b in zip(betas, betas[1:]):
        if a == b:
            raise ValueError("consecutive betas must differ")
    g = base_word(n, base_exponent)
    word = g ** exponents[0]
    for beta, e in zip(betas, exponents[1:]):
        word = word * (g.apply_perm(beta) ** e)
    last = betas[-1] if betas else ident
    if exponents[-1] > 0:
        expected = [(last[i], 1) for i in range(n)]
    else:
        expected = [(last[i], -1) for i in reversed(range(n))]
    return WitnessReport(n, exponents, betas, base_exponent, word, not word.is_identity(),
                         expected, word.suffix(n) == expected)


def alternating_product(n: int, exponents: Sequence[int], sigmas: Sequence[Sequence[int]],
                        base_exponent: int = 3) -> SemidirectElem:
    """g^{n_1} s_1 g^{n_2} s_2 ... g^{n_m} evaluated in F_n x| S_n."""
    g = base_word(n, base_exponent)
    out = SemidirectElem(g ** exponents[0], perm_identity(n))
    for s, e in zip(sigmas, exponents[1:]):
        out = out * SemidirectElem(FWord(), validate_perm(s, n))
        out = out * SemidirectElem(g ** e, perm_identity(n))
    return out


def betas_from_sigmas(sigmas: Sequence[Sequence[int]]) -> list:
    """beta_j = s_1 s_2 ... s_j."""
    out, acc = [], None
    for s in sigmas:
        acc = tuple(s) if acc is None else perm_compose(acc, s)
        out.append(acc)
    return out


def random_witness_instance(rng: np.random.Generator, n: int, m: int, exp_max: int = 3):
    """Random exponents and betas built from nonidentity sigmas."""
    exps = [int(x) for x in rng.integers(1, exp_max + 1, size=m) * rng.choice([-1, 1], size=m)]
    ident = perm_identity(n)
    sigmas = []
    for _ in range(m - 1):
        s = ident
        while s == ident:
            s = random_perm(rng, n)
        sigmas.append(s)
    return exps, betas_from_sigmas(sigmas)


@dataclass
class FuzzReport:
    trials: int
    seed: int
    base_exponent: int
    failures: list = field(default_factory=list)
    suffix_checked: int = 0
    suffix_matched: int = 0
    nonidentity: int = 0
    max_length: int = 0

    def to_json(self) -> dict:
        return {
            "trials": self.trials,
            "seed": self.seed,
            "base_exponent": self.base_exponent,
            "failures": self.failures,
            "suffix_checked": self.suffix_checked,
            "suffix_matched": self.suffix_matched,
            "nonidentity": self.nonidentity,
            "max_length": self.max_length,
        }


def fuzz_freeness(trials: int, seed: int, n: int | Sequence[int] = (2, 3, 4),
                  m: int | Sequence[int] = (1, 2, 3, 4), exp_max: int = 3,
                  base_exponent: int = 3) -> FuzzReport:
    """Random freeness witnesses.

    A failure is an identity word, or (for base exponent 3 and m >= 2) a
    suffix mismatch.  For other base exponents suffix behaviour is only counted.
    """
    ns = [n] if isinstance(n, int) else list(n)
    ms = [m] if isinstance(m, int) else list(m)

    def one(i):
        rng = task_rng(seed, i)
        nn = int(rng.choice(ns))
        mm = int(rng.choice(ms))
        if nn == 1:
            mm = 1
        exps, betas = random_witness_instance(rng, nn, mm, exp_max)
        return freeness_witness(nn, exps, betas, base_exponent)

    report = FuzzReport(trials, seed, base_exponent)
    for rep in parallel_map(one, range(trials)):
        report.max_length = max(report.max_length, rep.length)
        report.nonidentity += rep.nonidentity
        bad = not rep.nonidentity
        if len(rep.exponents) >= 2:
            report.suffix_checked += 1
            report.suffix_matched += rep.suffix_ok
            bad = bad or (base_exponent == 3 and not rep.suffix_ok)
        if bad:
            report.failures.append(rep.to_json())
    return report


# ---------------------------------------------------------------- group handles

class GroupHandle:
    """A built-in group family with a normal form."""

    family = "abstract"

    def normal(self, x):
        return x

    def mul(self, a, b):
        raise NotImplementedError

    def inv(self, a):
        raise NotImplementedError

    @property
    def identity(self):
        raise NotImplementedError

    def is_identity(self, x) -> bool:
        return self.normal(x) == self.identity

    def eq(self, a, b) -> bool:
        return self.normal(a) == self.normal(b)

    def prod(self, *xs):
        out = self.identity
        for x in xs:
            out = self.mul(out, x)
        return out

    def random(self, rng: np.random.Generator):
        raise NotImplementedError

    def encode(self, x):
        return str(x)


class IntegerGroup(GroupHandle):
    """Z = <t>, elements are ints (t^k <-> k)."""

    family = "Z"

    def normal(self, x):
        return int(x)

    def mul(self, a, b):
        return int(a) + int(b)

    def inv(self, a):
        return -int(a)

    @property
    def identity(self):
        return 0

    def random(self, rng, size: int = 50):
        return int(rng.integers(-size, size + 1))

    def encode(self, x):
        return f"t^{int(x)}"

    @staticmethod
    def parse(text: str) -> int:
        text = text.strip()
        if text in ("e", "1"):
            return 0
        m = re.fullmatch(r"t(?:\^(-?\d+))?", text)
        if m:
            return int(m.group(1) or 1)
        return int(text)


class CyclicGroup(GroupHandle):
    family = "Z_p"

    def __init__(self, p: int):
        if p < 1:
            raise ValueError("order must be positive")
        self.p = p

    def normal(self, x):
        return int(x) % self.p

    def mul(self, a, b):
        return (int(a) + int(b)) % self.p

    def inv(self, a):
        return (-int(a)) % self.p

    @property
    def identity(self):
        return 0

    def random(self, rng):
        return int(rng.integers(0, self.p))

    def elements(self):
        return list(range(self.p))


class SymmetricGroup(GroupHandle):
    family = "S_n"

    def __init__(self, n: int):
        self.n = n

    def normal(self, x):
        return validate_perm(x, self.n)

    def mul(self, a, b):
        return perm_compose(a, b)

    def inv(self, a):
        return perm_inverse(a)

    @property
    def identity(self):
        return perm_identity(self.n)

    def random(self, rng):
        return random_perm(rng, self.n)

    def elements(self):
        return [tuple(p) for p in itertools.permutations(range(1, self.n + 1))]

    def encode(self, x):
        return list(x)


class FreeGroup(GroupHandle):
    family = "F_n"

    def __init__(self, n: int):
        self.n = n

    def normal(self, x):
        w = x if isinstance(x, FWord) else reduce(x)
        if w.max_gen() > self.n:
            raise ValueError(f"generator outside F_{self.n}")
        return w

    def mul(self, a, b):
        return a * b

    def inv(self, a):
        return a.inverse()

    @property
    def identity(self):
        return FWord()

    def random(self, rng, max_len: int = 8):
        k = int(rng.integers(0, max_len + 1))
        return reduce([(int(rng.integers(1, self.n + 1)), int(rng.choice([-1, 1]))) for _ in range(k)])


class SemidirectGroup(GroupHandle):
    family = "F_n x| S_n"

    def __init__(self, n: int):
        self.n = n
        self.free = FreeGroup(n)

    def normal(self, x):
        return SemidirectElem(self.free.normal(x.word), validate_perm(x.perm, self.n))

    def mul(self, a, b):
        return semidirect_mul(a, b)

    def inv(self, a):
        return a.inverse()

    @property
    def identity(self):
        return semidirect_identity(self.n)

    def random(self, rng, max_len: int = 8):
        return SemidirectElem(self.free.random(rng, max_len), random_perm(rng, self.n))

    def encode(self, x):
        return {"word": str(x.word), "perm": list(x.perm)}

    def parse(self, text: str) -> SemidirectElem:
        """``<word>;<perm digits>``, e.g. ``g1*g2^-1;21``."""
        word, _, perm = text.partition(";")
        perm = perm.strip() or "".join(map(str, perm_identity(self.n)))
        digits = perm.split(",") if "," in perm else list(perm)
        return SemidirectElem(parse_word(word), validate_perm([int(d) for d in digits], self.n))


class FreeProductGroup(GroupHandle):
    family = "free product"

    def __init__(self, factors: Sequence[GroupHandle]):
        self.factors = list(factors)

    def normal(self, x):
        return free_product_nf(self.factors, x)

    def mul(self, a, b):
        return free_product_nf(self.factors, tuple(a) + tuple(b))

    def inv(self, a):
        return tuple((i, self.factors[i].inv(x)) for i, x in reversed(a))

    @property
    def identity(self):
        return ()

    def random(self, rng, max_syllables: int = 6):
        k = int(rng.integers(0, max_syllables + 1))
        sylls = []
        for _ in range(k):
            i = int(rng.integers(0, len(self.factors)))
            sylls.append((i, self.factors[i].random(rng)))
        return free_product_nf(self.factors, sylls)

    def encode(self, x):
        return [[i, self.factors[i].encode(e)] for i, e in x]


def free_product_nf(handles: Sequence[GroupHandle], syllables) -> tuple:
    """Alternating normal form of a syllable sequence in a free product."""
    out: list = []
    for idx, elem in syllables:
        if not 0 <= idx < len(handles):
            raise IndexError(f"unknown factor index {idx}")
        h = handles[idx]
        elem = h.normal(elem)
        if h.is_identity(elem):
            continue
        if out and out[-1][0] == idx:
            merged = h.mul(out.pop()[1], elem)
            if not h.is_identity(merged):
                out.append((idx, merged))
        else:
            out.append((idx, elem))
    return tuple(out)


# ---------------------------------------------------------------- finite groups

@dataclass
class FiniteGroup:
    """A finite group given by a handle and its element list (identity first)."""

    handle: GroupHandle
    elements: list
    name: str = ""

    def __post_init__(self):
        if not self.elements:
            raise ValueError("empty group")
        self.elements = [self.handle.normal(g) for g in self.elements]
        ident = self.handle.identity
        if self.elements[0] != ident:
            self.elements.remove(ident)
            self.elements.insert(0, ident)
        self._index = {g: i for i, g in enumerate(self.elements)}

    @property
    def order(self) -> int:
        return len(self.elements)

    def index(self, g) -> int:
        return self._index[self.handle.normal(g)]

    def mul(self, a, b):
        return self.handle.mul(a, b)

    def inv(self, a):
        return self.handle.inv(a)


def cyclic_group(p: int) -> FiniteGroup:
    h = CyclicGroup(p)
    return FiniteGroup(h, h.elements(), f"Z{p}")


def symmetric_group(n: int) -> FiniteGroup:
    h = SymmetricGroup(n)
    return FiniteGroup(h, h.elements(), f"S{n}")


# ---------------------------------------------------------------- cosets

@dataclass
class CosetSystem:
    group: GroupHandle
    member: Callable
    reps: list
    name: str = ""

    @property
    def index(self) -> int:
        return len(self.reps)

    def validate(self):
        g = self.group
        if not g.is_identity(self.reps[0]):
            raise ValueError("first coset representative must be the identity")
        for a, b in itertools.combinations(self.reps, 2):
            if self.member(g.mul(g.inv(a), b)):
                raise ValueError("coset representatives share a coset")
        return self


@dataclass
class CosetDecomposition:
    sigma: tuple
    hs: list


def coset_decompose(sys: CosetSystem, g) -> CosetDecomposition:
    """sigma with g g_i H = g_{sigma(i)} H and h_i = g_{sigma(i)}^{-1} g g_i."""
    G = sys.group
    g = G.normal(g)
    sigma, hs = [], []
    for gi in sys.reps:
        ggi = G.mul(g, gi)
        hits = [j for j, gj in enumerate(sys.reps) if sys.member(G.mul(G.inv(gj), ggi))]
        if len(hits) != 1:
            raise ValueError(f"element lies in {len(hits)} cosets; invalid coset system")
        j = hits[0]
        sigma.append(j + 1)
        hs.append(G.mul(G.inv(sys.reps[j]), ggi))
    if sorted(sigma) != list(range(1, sys.index + 1)):
        raise ValueError("coset action is not a permutation; invalid coset system")
    return CosetDecomposition(tuple(sigma), hs)


def reconstruct(sys: CosetSystem, dec: CosetDecomposition, i: int):
    """g_{sigma(i)} h_i g_i^{-1} for 1-based i."""
    G = sys.group
    return G.prod(sys.reps[dec.sigma[i - 1] - 1], dec.hs[i - 1], G.inv(sys.reps[i - 1]))


def z_mod_2z() -> CosetSystem:
    """2Z inside Z = <t>, reps (e, t)."""
    return CosetSystem(IntegerGroup(), lambda k: int(k) % 2 == 0, [0, 1], "z-2z").validate()


def fn_in_semidirect(n: int = 2) -> CosetSystem:
    """F_n inside F_n x| S_n, reps (e, sigma) for every sigma in S_n."""
    G = SemidirectGroup(n)
    ident = perm_identity(n)
    perms = [ident] + [p for p in SymmetricGroup(n).elements() if p != ident]
    reps = [SemidirectElem(FWord(), p) for p in perms]
    return CosetSystem(G, lambda x: tuple(x.perm) == ident, reps, f"f{n}-s{n}").validate()


BUILTIN_COSETS = {"z-2z": z_mod_2z, "f2-s2": lambda: fn_in_semidirect(2),
                  "f3-s3": lambda: fn_in_semidirect(3)}
