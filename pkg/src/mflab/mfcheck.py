"""Norm oracles, microstate reports, compression comparisons and certificates."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.sparse as sp
from scipy.optimize import minimize

from .groups import prepend_letter
from .matcore import (MatTuple, as_cmatrix, dagger, op_norm, parallel_map,
                      projection_residual, range_basis, sparse_norm_bracket, unitarity_residual)
from .ncpoly import NCPoly, evaluate, format_poly

CIRCLE_GRID = 2**16
TORUS_GRID = 256
BALL_CAP = 2_000_000


# ---------------------------------------------------------------- abelian symbols

def laurent_exponents(p: NCPoly, m: int) -> dict:
    """Map exponent vectors to coefficients for words in commuting unitary letters.

    A word is accepted when its letters are sorted by index and each index
    appears only starred or only unstarred (X1*X1*X2', not X2*X1 or X1*X1').
    """
    out: dict = {}
    for c, w in p.terms:
        exps = [0] * m
        seen = {}
        last = 0
        for l in w:
            if l.index > m:
                raise ValueError(f"letter X{l.index} outside 1..{m}")
            if l.index < last or seen.get(l.index, l.starred) != l.starred:
                raise ValueError(f"word {'*'.join(map(str, w))} is not in commuting normal form")
            seen[l.index] = l.starred
            last = l.index
            exps[l.index - 1] += -1 if l.starred else 1
        key = tuple(exps)
        out[key] = out.get(key, 0j) + c
    return {k: v for k, v in out.items() if v != 0}


@dataclass(frozen=True)
class SupBracket:
    value: float   # attained |p| at a refined point (lower bound on the sup)
    upper: float   # certified upper bound on the sup

    @property
    def width(self) -> float:
        return self.upper - self.value


def _torus_sup(coeffs: dict, m: int, grid: int) -> SupBracket:
    if not coeffs:
        return SupBracket(0.0, 0.0)
    ks = np.array(list(coeffs.keys()), dtype=float).reshape(len(coeffs), m)
    cs = np.array(list(coeffs.values()), dtype=complex)
    if m == 0 or not np.any(ks):
        v = float(abs(cs.sum()))
        return SupBracket(v, v)
    kmin = ks.min(axis=0).astype(int)
    span = (ks.max(axis=0) - kmin).astype(int)
    n = max(grid, int(2 ** np.ceil(np.log2(2 * span.max() + 2))))
    h = 2 * np.pi / n
    small = np.zeros(tuple(span + 1), dtype=complex)
    for k, c in zip(ks.astype(int), cs):
        small[tuple(k - kmin)] += c
    # |sum_k c_k e^{i k theta}| on the grid theta_j = 2 pi j / n; the kmin phase drops out
    if m < 3:
        arr = np.zeros((n,) * m, dtype=complex)
        arr[tuple(slice(0, s + 1) for s in span)] = small
        vals = np.abs(np.fft.ifftn(arr) * n**m)
        flat = vals.ravel()
        top = np.argsort(flat)[-8:]
        cands = [(float(flat[i]), np.array(np.unravel_index(i, vals.shape), dtype=float) * h) for i in top]
    else:
        # one 2-d transform per value of the last angle keeps memory at n^2
        phases = np.exp(1j * np.outer(np.arange(n) * h, np.arange(span[2] + 1)))
        cands = []
        plane = np.zeros((n, n), dtype=complex)
        for j in range(n):
            plane[: span[0] + 1, : span[1] + 1] = small @ phases[j]
            vals = np.abs(np.fft.ifft2(plane) * n * n).ravel()
            top = np.argpartition(vals, -2)[-2:]
            cands += [(float(vals[i]), np.array(np.unravel_index(i, (n, n)) + (j,), dtype=float) * h)
                      for i in top]
        cands = sorted(cands, key=lambda t: t[0])[-8:]
    absc = np.abs(cs)
    # |d^2/dtheta_i^2 |f|^2| <= sum_{k,l} |c_k||c_l| (k_i - l_i)^2
    s0 = absc.sum()
    curv = sum(2 * s0 * np.sum(absc * ks[:, i] ** 2) - 2 * np.sum(absc * ks[:, i]) ** 2 for i in range(m))
    gmax = max(v for v, _ in cands) ** 2
    upper = float(np.sqrt(gmax + h * h / 8 * curv))

    def f(theta):
        return np.sum(cs * np.exp(1j * ks @ theta))

    def negg(theta):
        z = cs * np.exp(1j * ks @ theta)
        fv = z.sum()
        grad = 2 * np.real(np.conj(fv) * (1j * ks.T @ z))
        return -abs(fv) ** 2, -grad

    best = max(v for v, _ in cands)
    for _, theta0 in cands:
        res = minimize(negg, theta0, jac=True, method="BFGS", options={"gtol": 1e-14})
        best = max(best, float(abs(f(res.x))), float(abs(f(theta0))))
    return SupBracket(best, max(upper, best))


def circle_bracket(p: NCPoly) -> SupBracket:
    if p.variables() - {1}:
        raise ValueError("circle oracle needs a polynomial in X1 only")
    coeffs = {k[:1]: c for k, c in laurent_exponents(p, max(1, p.num_vars)).items()}
    return _torus_sup(coeffs, 1, CIRCLE_GRID)


def circle_norm(p: NCPoly) -> float:
    """sup_{|z|=1} |p(z)| for a Laurent polynomial in X1 (X1' = z^-1)."""
    return circle_bracket(p).value


def torus_bracket(p: NCPoly, m: int) -> SupBracket:
    if m > 3:
        raise ValueError("torus oracle supports m <= 3")
    if m < 1:
        raise ValueError("m must be positive")
    if p.variables() - set(range(1, m + 1)):
        raise ValueError(f"polynomial uses letters beyond X{m}")
    return _torus_sup(laurent_exponents(p, m), m, TORUS_GRID)


def torus_norm(p: NCPoly, m: int) -> float:
    """sup over the m-torus of |p| for commuting unitary letters."""
    return torus_bracket(p, m).value


# ---------------------------------------------------------------- Cayley balls

def ball_size(n: int, radius: int) -> int:
    if radius == 0:
        return 1
    if n == 1:
        return 2 * radius + 1
    return 1 + 2 * n * ((2 * n - 1) ** radius - 1) // (2 * n - 2)


def ball_words(n: int, radius: int) -> list:
    """Reduced words of F_n of length <= radius in breadth-first order (run tuples)."""
    words = [()]
    frontier = [()]
    letters = [(g, s) for g in range(1, n + 1) for s in (1, -1)]
    for _ in range(radius):
        nxt = []
        for w in frontier:
            for g, s in letters:
                if w and w[0][0] == g and (w[0][1] > 0) != (s > 0):
                    continue
                nxt.append(prepend_letter(w, g, s))
        words.extend(nxt)
        frontier = nxt
    return words


def ball_operator(p: NCPoly, radius: int, n: int | None = None) -> sp.csr_matrix:
    """Compression of lambda(p) to l^2 of the radius ball (BFS order)."""
    n = p.num_vars if n is None else n
    if p.variables() - set(range(1, n + 1)):
        raise ValueError("polynomial uses letters beyond the free generators")
    size = ball_size(n, radius)
    if size > BALL_CAP:
        raise ValueError(f"ball of radius {radius} in F_{n} has {size} vertices > cap {BALL_CAP}")
    words = ball_words(n, radius)
    index = {w: i for i, w in enumerate(words)}
    rows, cols, vals = [], [], []
    for c, word in p.terms:
        # lambda(X_i) delta_y = delta_{g_i y}; apply the last letter first
        seq = [(l.index, -1 if l.starred else 1) for l in reversed(word)]
        for j, y in enumerate(words):
            x = y
            for g, s in seq:
                x = prepend_letter(x, g, s)
            i = index.get(x)
            if i is not None:
                rows.append(i)
                cols.append(j)
                vals.append(c)
    return sp.csr_matrix((np.array(vals, dtype=complex), (rows, cols)), shape=(size, size))


@dataclass(frozen=True)
class BallBound:
    radius: int
    vertices: int
    lower: float
    upper: float

    def to_json(self) -> dict:
        return {"radius": self.radius, "vertices": self.vertices, "lower_bound": self.lower,
                "compression_upper": self.upper, "direction": "lower"}


def ball_bounds(p: NCPoly, radii: Sequence[int], n: int | None = None) -> list:
    """Lower bounds for the reduced norm of p at several radii (one enumeration)."""
    n = p.num_vars if n is None else n
    radii = sorted(set(int(r) for r in radii))
    for r in radii:
        if r < p.degree:
            raise ValueError(f"radius {r} below polynomial degree {p.degree}")
    big = ball_operator(p, radii[-1], n)

    def one(r):
        k = ball_size(n, r)
        br = sparse_norm_bracket(big[:k, :k])
        return BallBound(r, k, br.lower, br.upper)

    return parallel_map(one, radii)


def ball_lower_bound(p: NCPoly, radius: int, n: int | None = None) -> float:
    """Norm of the ball compression of lambda(p): a lower bound for ||p|| in C*_r(F_n)."""
    return ball_bounds(p, [radius], n)[0].lower


# ---------------------------------------------------------------- oracles

@dataclass(frozen=True)
class OracleValue:
    value: float
    direction: str  # "exact" or "lower"
    upper: float | None = None


@dataclass(frozen=True)
class NormOracle:
    kind: str
    m: int = 1
    target: MatTuple | None = None
    radius: int = 0
    values: tuple = ()

    KINDS = ("circle", "torus", "exact-matrix", "ball-lower-bound", "user-constant")

    @classmethod
    def circle(cls):
        return cls("circle", 1)

    @classmethod
    def torus(cls, m: int):
        if m > 3:
            raise ValueError("torus oracle supports m <= 3")
        return cls("torus", m)

    @classmethod
    def exact_matrix(cls, target: MatTuple):
        return cls("exact-matrix", target.count, target=target)

    @classmethod
    def ball(cls, n: int, radius: int):
        return cls("ball-lower-bound", n, radius=radius)

    @classmethod
    def user_constant(cls, values: dict):
        return cls("user-constant", 0, values=tuple(sorted(values.items())))

    @property
    def exact(self) -> bool:
        return self.kind != "ball-lower-bound"

    def __call__(self, p: NCPoly) -> OracleValue:
        if self.kind == "circle":
            b = circle_bracket(p)
            return OracleValue(b.value, "exact", b.upper)
        if self.kind == "torus":
            b = torus_bracket(p, self.m)
            return OracleValue(b.value, "exact", b.upper)
        if self.kind == "exact-matrix":
            if p.num_vars != self.target.count:
                raise ValueError("polynomial arity does not match the target tuple")
            return OracleValue(op_norm(evaluate(p, self.target)), "exact")
        if self.kind == "ball-lower-bound":
            b = ball_bounds(p, [self.radius], self.m)[0]
            return OracleValue(b.lower, "lower", b.upper)
        if self.kind == "user-constant":
            key = format_poly(p)
            table = dict(self.values)
            if key not in table:
                raise ValueError(f"no reference value for {key}")
            return OracleValue(float(table[key]), "exact")
        raise ValueError(f"unknown oracle kind {self.kind!r}")

    def to_json(self) -> dict:
        out = {"kind": self.kind}
        if self.kind == "torus":
            out["m"] = self.m
        if self.kind == "ball-lower-bound":
            out["n"] = self.m
            out["radius"] = self.radius
        return out


# ---------------------------------------------------------------- reports

@dataclass
class MicrostateReport:
    rows: list
    max_deviation: float | None
    trend: list
    oracle: dict
    params: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {"rows": self.rows, "max_deviation": self.max_deviation, "trend": self.trend,
                "oracle": self.oracle, "params": self.params}


def microstate_report(models: Sequence[MatTuple], polys: Sequence[NCPoly], oracle: NormOracle,
                      params: dict | None = None) -> MicrostateReport:
    """Compare ||P_j(model_k)|| with the oracle for every model and polynomial."""
    for p in polys:
        for k, mt in enumerate(models):
            if mt.count != p.num_vars:
                raise ValueError(f"model {k} has {mt.count} matrices, polynomial has {p.num_vars} variables")
    refs = [oracle(p) for p in polys]

    def per_model(k):
        out = []
        for p, ref in zip(polys, refs):
            val = op_norm(evaluate(p, models[k]))
            row = {"model": k, "poly": format_poly(p), "model_norm": val,
                   "direction": ref.direction, "dim": models[k].dim}
            if ref.direction == "exact":
                row["oracle_norm"] = ref.value
                row["deviation"] = abs(val - ref.value)
            else:
                row["lower_bound"] = ref.value
                row["slack"] = val - ref.value
            out.append(row)
        return out

    rows = [r for block in parallel_map(per_model, range(len(models))) for r in block]
    exact = [r["deviation"] for r in rows if "deviation" in r]
    trend = []
    for k in range(len(models)):
        devs = [r["deviation"] for r in rows if r["model"] == k and "deviation" in r]
        trend.append(max(devs) if devs else None)
    return MicrostateReport(rows, max(exact) if exact else None, trend, oracle.to_json(), dict(params or {}))


@dataclass
class CompressRow:
    poly: str
    vector_discrepancy: float
    norm_discrepancy: float
    compressed_norm: float
    ambient_norm: float


def compress_compare(model: MatTuple, proj, polys: Sequence[NCPoly], vectors: Sequence) -> list:
    """Discrepancies between P(pxp) and P(x).

    The vector discrepancy max_j ||P(pxp) xi_j - P(x) xi_j|| uses the unit of
    the ambient space; the norm discrepancy compares ||P(x)|| with the norm of
    P evaluated on the compressions E* x E acting on range(p).
    """
    p = as_cmatrix(proj)
    if p.shape != (model.dim, model.dim) or projection_residual(p) > 1e-10:
        raise ValueError("invalid projection")
    e = range_basis(p)
    vecs = [np.asarray(v, dtype=complex).ravel() for v in vectors]
    for v in vecs:
        if v.size != model.dim:
            raise ValueError("vector dimension does not match the model")
    pxp = model.map(lambda x: p @ x @ p)
    small = model.map(lambda x: dagger(e) @ x @ e) if e.shape[1] else None
    rows = []
    for P in polys:
        full = evaluate(P, model)
        comp = evaluate(P, pxp)
        vd = max((float(np.linalg.norm(comp @ v - full @ v)) for v in vecs), default=0.0)
        cn = op_norm(evaluate(P, small)) if small is not None else 0.0
        an = op_norm(full)
        rows.append(CompressRow(format_poly(P), vd, abs(cn - an), cn, an))
    return rows


# ---------------------------------------------------------------- certificates

@dataclass
class Condition:
    name: str
    measured: float
    threshold: float
    strict: bool = False

    @property
    def passed(self) -> bool:
        if self.strict:
            return bool(self.measured < self.threshold)
        return bool(self.measured <= self.threshold)

    @property
    def slack(self) -> float:
        return self.threshold - self.measured

    def to_json(self) -> dict:
        return {"name": self.name, "measured": self.measured, "threshold": self.threshold,
                "slack": self.slack, "strict": self.strict, "passed": self.passed}


@dataclass
class Certificate:
    kind: str
    r1: int
    conditions: list

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.conditions)

    def to_json(self) -> dict:
        return {"kind": self.kind, "r1": self.r1, "passed": self.passed,
                "conditions": [c.to_json() for c in self.conditions]}


def _exact_ref(oracle: NormOracle, p: NCPoly) -> float:
    ref = oracle(p)
    if ref.direction != "exact":
        raise ValueError("certificates need an exact oracle, not a one-sided bound")
    return ref.value


def certify_commuting_conditions(U: MatTuple, V: MatTuple, polys_Q: Sequence[NCPoly],
                                 oracle_Q: NormOracle, r1: int, unitary_tol: float = 1e-8) -> Certificate:
    """||U_i V_j - V_j U_i|| <= 1/r1 and |‖Q_j(V)‖ - ‖Q_j(v)‖| <= 1/r1 for j <= r1."""
    if r1 < 1:
        raise ValueError("r1 must be >= 1")
    thr = 1.0 / r1
    comm = max((op_norm(a @ b - b @ a) for a in U for b in V), default=0.0)
    conds = [Condition("unitary", max((unitarity_residual(a) for a in U), default=0.0), unitary_tol),
             Condition("commutator", comm, thr)]
    for j, Q in enumerate(polys_Q[:r1], 1):
        val = op_norm(evaluate(Q, V))
        conds.append(Condition(f"norm Q{j}: {format_poly(Q)}", abs(val - _exact_ref(oracle_Q, Q)), thr))
    return Certificate("commuting", r1, conds)


def certify_crossed_conditions(model, polys_G: Sequence[NCPoly], polys_H: Sequence[NCPoly],
                               oracle_G: NormOracle, refs_H: Sequence[float], r1: int) -> Certificate:
    """Intertwining, circle-norm and reference-norm conditions at threshold 1/r1."""
    from .pvcrossed import intertwine_defect

    if r1 < 1:
        raise ValueError("r1 must be >= 1")
    if len(refs_H) != len(polys_H):
        raise ValueError("need one reference per H polynomial")
    thr = 1.0 / r1
    conds = [Condition("intertwine", intertwine_defect(model.A, model.B, model.U), thr)]
    for i, G in enumerate(polys_G[:r1], 1):
        val = op_norm(evaluate(G, [model.U]))
        conds.append(Condition(f"circle G{i}: {format_poly(G)}", abs(val - _exact_ref(oracle_G, G)), thr))
    AB = MatTuple(model.A.mats + model.B.mats)
    for i, (H, ref) in enumerate(list(zip(polys_H, refs_H))[:r1], 1):
        val = op_norm(evaluate(H, AB))
        conds.append(Condition(f"reference H{i}: {format_poly(H)}", abs(val - float(ref)), thr))
    return Certificate("crossed", r1, conds)
