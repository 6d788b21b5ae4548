"""Polynomial square-root approximation, Halmos dilations and commuting dilations.

The commuting dilation takes unitaries u_i, v_j (u_i v_j = v_j u_i), a
projection p and a partial isometry w from p onto an orthogonal projection q,
and returns unitaries U_i and operators V_j on range(p + q) whose commutators
are bounded by 4t + 2 t D + delta with t = max_j ||p v_j - v_j p||.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Sequence

import numpy as np
import scipy.linalg as sla
from numpy.polynomial import chebyshev as cheb
from scipy.optimize import linprog

from .matcore import (MatTuple, as_cmatrix, blockwise_sum, dagger, haar_unitary, op_norm,
                      projection_residual, psd_sqrt, range_basis, unitarity_residual)
from .ncpoly import NCPoly, evaluate, format_poly

DEGREE_CAP = 512
CERT_GRID = 10**6
CONTRACTION_CLAMP = 1e-6
INPUT_TOL = 1e-10

# minimax error of the best degree-d fit with P(0) = 0 is about 0.2255 / d
_MINIMAX_CONST = 0.2255


# ---------------------------------------------------------------- sqrt approximation

@dataclass(frozen=True)
class SqrtApprox:
    """P(t) = sum_j cheb[j] T_j(2t - 1) - shift, with P(0) = 0 exactly.

    ``coeffs`` are the monomial coefficients (coeffs[0] == 0) rounded to float;
    ``exact`` keeps them as Fractions for the Leibniz constant.
    """

    delta: float
    degree: int
    cheb: tuple
    shift: float
    coeffs: tuple
    exact: tuple = field(repr=False)
    certified_error: float = 0.0
    lp_error: float = 0.0

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        return cheb.chebval(2 * t - 1, np.asarray(self.cheb)) - self.shift

    @property
    def leibniz_sum(self) -> Fraction:
        return sum((k * abs(c) for k, c in enumerate(self.exact)), Fraction(0))

    @property
    def D_delta(self) -> float:
        """3 * sum_k k |c_k| over the monomial coefficients."""
        return float(3 * self.leibniz_sum)


def _minimax_lp(d: int):
    """Best sup-norm fit of sqrt(t) on a Chebyshev grid in [0, 1] with P(0) = 0."""
    n = max(2000, 40 * d)
    x = (1 - np.cos(np.linspace(0, np.pi, n))) / 2
    T = cheb.chebvander(2 * x - 1, d)
    ones = np.ones((n, 1))
    a_ub = np.vstack([np.hstack([T, -ones]), np.hstack([-T, -ones])])
    b = np.sqrt(x)
    b_ub = np.concatenate([b, -b])
    a_eq = np.concatenate([(-1.0) ** np.arange(d + 1), [0.0]])[None, :]
    c = np.zeros(d + 2)
    c[-1] = 1.0
    res = linprog(c, A_ub=a_ub, b_ub=b_ub, A_eq=a_eq, b_eq=[0.0],
                  bounds=[(None, None)] * (d + 1) + [(0, None)], method="highs")
    if res.status != 0:
        raise RuntimeError(f"minimax LP failed at degree {d}: {res.message}")
    return res.x[:-1], float(res.x[-1])


def _shifted_cheb_monomials(d: int) -> list:
    """Exact monomial coefficients of T_j(2t - 1), j = 0..d."""
    rows = [[Fraction(1)], [Fraction(-1), Fraction(2)]]
    for j in range(2, d + 1):
        prev, prev2 = rows[-1], rows[-2]
        new = [Fraction(0)] * (j + 1)
        for k, v in enumerate(prev):
            new[k] -= 2 * v
            new[k + 1] += 4 * v
        for k, v in enumerate(prev2):
            new[k] -= v
        rows.append(new)
    return rows[: d + 1]


def _monomials(a: Sequence[float]) -> list:
    d = len(a) - 1
    out = [Fraction(0)] * (d + 1)
    for j, row in enumerate(_shifted_cheb_monomials(d)):
        aj = Fraction(float(a[j]))
        if aj:
            for k, v in enumerate(row):
                out[k] += aj * v
    return out


def certify_sqrt(a: Sequence[float], shift: float, grid: int = CERT_GRID) -> float:
    """Rigorous-in-exact-arithmetic bound on sup_{[0,1]} |sqrt(t) - P(t)|.

    On each cell [s, t] of a Chebyshev-spaced grid the error is at most the
    endpoint error plus sqrt(t) - sqrt(s) plus (t - s) times a derivative bound
    from |T_j'(u)| <= min(j^2, j / sqrt(1 - u^2)).
    """
    a = np.asarray(a, dtype=float)
    j = np.arange(len(a))
    s1 = float(np.sum(j * np.abs(a)))
    s2 = float(np.sum(j * j * np.abs(a)))
    x = (1 - np.cos(np.pi * np.arange(grid + 1) / grid)) / 2
    x[0], x[-1] = 0.0, 1.0
    err = np.abs(np.sqrt(x) - (cheb.chebval(2 * x - 1, a) - shift))
    lo, hi = x[:-1], x[1:]
    # the endpoint with the larger |u| has the smaller 1 - u^2 = 4 x (1 - x)
    w = np.minimum(4 * lo * (1 - lo), 4 * hi * (1 - hi))
    with np.errstate(divide="ignore"):
        dbound = 2 * np.minimum(s2, s1 / np.sqrt(w))
    cell = np.minimum(err[:-1], err[1:]) + (np.sqrt(hi) - np.sqrt(lo)) + (hi - lo) * dbound
    rounding = 64 * np.finfo(float).eps * (1 + float(np.sum(np.abs(a)))) * len(a)
    return float(cell.max() + rounding)


@lru_cache(maxsize=64)
def sqrt_poly_approx(delta: float, degree_cap: int = DEGREE_CAP) -> SqrtApprox:
    """Polynomial P with P(0) = 0 and certified sup_{[0,1]} |sqrt(t) - P(t)| <= delta.

    The coefficients solve a discretised minimax LP at 95% of delta; the
    smallest feasible degree is used and then certified on a 10^6-point grid.
    """
    delta = float(delta)
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")
    target = 0.95 * delta
    d = max(1, math.ceil(_MINIMAX_CONST / target))
    if d > degree_cap:
        raise ValueError(f"delta={delta} needs degree about {d} > cap {degree_cap}")
    fits = {}

    def fit(k):
        if k not in fits:
            fits[k] = _minimax_lp(k)
        return fits[k]

    while d > 1 and fit(d - 1)[1] <= target:
        d -= 1
    while fit(d)[1] > target:
        d += 1
        if d > degree_cap:
            raise ValueError(f"delta={delta} needs degree > cap {degree_cap}")
    for _ in range(4):
        a, lp_err = fit(d)
        exact = _monomials(a)
        shift = exact[0]
        exact[0] = Fraction(0)
        cert = certify_sqrt(a, float(shift)) + float(abs(Fraction(float(shift)) - shift))
        if cert <= delta:
            return SqrtApprox(delta, d, tuple(float(v) for v in a), float(shift),
                              tuple(float(v) for v in exact), tuple(exact), cert, lp_err)
        d += 1
        if d > degree_cap:
            break
    raise ValueError(f"could not certify delta={delta} below degree cap {degree_cap}")


# ---------------------------------------------------------------- Halmos dilation

def halmos_dilate(A) -> np.ndarray:
    """[[A, (I - AA*)^(1/2)], [(I - A*A)^(1/2), -A*]] for a contraction A.

    Singular values in (1, 1 + 1e-6] are clamped to 1; larger ones raise.
    """
    a = as_cmatrix(A)
    if a.shape[0] != a.shape[1]:
        raise ValueError("halmos_dilate needs a square matrix")
    wl, s, vh = np.linalg.svd(a)
    if s.size and s[0] > 1 + CONTRACTION_CLAMP:
        raise ValueError(f"not a contraction: norm {s[0]:.12g}")
    if s.size and s[0] > 1:
        s = np.minimum(s, 1.0)
        a = (wl * s) @ vh
    defect = np.sqrt(np.clip(1 - s * s, 0.0, None))
    left = (wl * defect) @ dagger(wl)
    right = (dagger(vh) * defect) @ vh
    return np.block([[a, left], [right, -dagger(a)]])


# ---------------------------------------------------------------- commuting dilation

@dataclass(frozen=True)
class DilationInput:
    us: MatTuple
    vs: MatTuple
    p: np.ndarray
    w: np.ndarray

    def __post_init__(self):
        for name in ("us", "vs"):
            val = getattr(self, name)
            if not isinstance(val, MatTuple):
                object.__setattr__(self, name, MatTuple(tuple(val)))
        object.__setattr__(self, "p", as_cmatrix(self.p))
        object.__setattr__(self, "w", as_cmatrix(self.w))

    @property
    def dim(self) -> int:
        return self.p.shape[0]

    def validate(self, tol: float = INPUT_TOL) -> "DilationInput":
        d = self.dim
        for t in (self.us, self.vs):
            if t.count and t.dim != d:
                raise ValueError("unitaries and projection have different dimensions")
        for i, u in enumerate(self.us, 1):
            if unitarity_residual(u) > tol:
                raise ValueError(f"u_{i} is not unitary")
        for j, v in enumerate(self.vs, 1):
            if unitarity_residual(v) > tol:
                raise ValueError(f"v_{j} is not unitary")
        if projection_residual(self.p) > tol:
            raise ValueError("p is not an orthogonal projection")
        if self.w.shape != (d, d):
            raise ValueError("w has the wrong shape")
        if op_norm(dagger(self.w) @ self.w - self.p) > tol:
            raise ValueError("w*w differs from p")
        if op_norm(self.p @ self.w @ dagger(self.w)) > tol:
            raise ValueError("ww* is not orthogonal to p")
        for i, u in enumerate(self.us, 1):
            for j, v in enumerate(self.vs, 1):
                if op_norm(u @ v - v @ u) > tol:
                    raise ValueError(f"u_{i} and v_{j} do not commute")
        if range_basis(self.p).shape[1] == 0:
            raise ValueError("p has rank zero")
        return self

    def to_json(self) -> dict:
        from .matcore import matrix_to_json
        return {"us": self.us.to_json(), "vs": self.vs.to_json(),
                "p": matrix_to_json(self.p), "w": matrix_to_json(self.w)}

    @classmethod
    def from_json(cls, obj: dict) -> "DilationInput":
        from .matcore import matrix_from_json
        return cls(MatTuple.from_json(obj["us"]), MatTuple.from_json(obj["vs"]),
                   matrix_from_json(obj["p"]), matrix_from_json(obj["w"]))


@dataclass
class DilationResult:
    Us: MatTuple
    Vs: MatTuple
    t_measured: float
    delta: float
    D_delta: float
    bound: float
    commutators: np.ndarray
    sqrt_degree: int
    sqrt_error: float
    unitarity: float
    witnesses: list = field(default_factory=list)

    @property
    def max_commutator(self) -> float:
        return float(self.commutators.max()) if self.commutators.size else 0.0

    @property
    def certified(self) -> bool:
        return bool(np.all(self.commutators <= self.bound))

    def to_json(self, include_matrices: bool = False) -> dict:
        out = {
            "t_measured": self.t_measured,
            "delta": self.delta,
            "D_delta": self.D_delta,
            "bound": self.bound,
            "commutators": self.commutators.tolist(),
            "max_commutator": self.max_commutator,
            "sqrt_degree": self.sqrt_degree,
            "sqrt_error": self.sqrt_error,
            "unitarity_residual": self.unitarity,
            "certified": self.certified,
            "dim": self.Us.dim if self.Us.count else self.Vs.dim,
            "witnesses": [{"poly": s, "norm": v} for s, v in self.witnesses],
        }
        if include_matrices:
            out["Us"] = self.Us.to_json()
            out["Vs"] = self.Vs.to_json()
        return out


def dilation_basis(p, w) -> np.ndarray:
    """Columns [E, wE] with E an orthonormal basis of range(p)."""
    e = range_basis(p)
    return np.hstack([e, as_cmatrix(w) @ e])


def dilate_unitary(u, p, w) -> np.ndarray:
    """Ambient pup + (p - pupu*p)^(1/2) w* + w (p - pu*pup)^(1/2) - w pu*p w*."""
    pup = p @ u @ p
    left = psd_sqrt(p - pup @ dagger(pup))
    right = psd_sqrt(p - dagger(pup) @ pup)
    return pup + left @ dagger(w) + w @ right - w @ dagger(pup) @ dagger(w)


def commuting_pair(inp: DilationInput, delta: float) -> DilationResult:
    inp.validate()
    p, w = inp.p, inp.w
    basis = dilation_basis(p, w)
    t = max((op_norm(p @ v - v @ p) for v in inp.vs), default=0.0)
    Us = MatTuple(tuple(dagger(basis) @ dilate_unitary(u, p, w) @ basis for u in inp.us))
    Vs = MatTuple(tuple(dagger(basis) @ (p @ v @ p + w @ v @ dagger(w)) @ basis for v in inp.vs))
    comm = np.array([[op_norm(U @ V - V @ U) for V in Vs] for U in Us]).reshape(len(Us), len(Vs))
    approx = sqrt_poly_approx(delta / 4)
    D = approx.D_delta
    if not math.isfinite(D):
        raise ValueError(f"D_delta overflows for delta={delta}")
    bound = 4 * t + 2 * t * D + delta
    unit = max((unitarity_residual(U) for U in Us), default=0.0)
    return DilationResult(Us, Vs, float(t), float(delta), D, float(bound), comm,
                          approx.degree, approx.certified_error, unit)


def partial_isometry(p, q) -> np.ndarray:
    """w with w*w = p and ww* = q for orthogonal projections of equal rank."""
    p, q = as_cmatrix(p), as_cmatrix(q)
    r = int(round(np.trace(p).real))
    if r != int(round(np.trace(q).real)):
        raise ValueError("projections have different ranks")
    if op_norm(p @ q) > INPUT_TOL:
        raise ValueError("projections are not orthogonal")
    ep = sla.qr(p, pivoting=True)[0][:, :r]
    eq = sla.qr(q, pivoting=True)[0][:, :r]
    return eq @ dagger(ep)


def tail_direct_sum(models: Sequence[MatTuple], N1: int, M: int) -> MatTuple:
    """Componentwise direct sum of models N1..M (1-based, inclusive)."""
    if not 1 <= N1 <= M <= len(models):
        raise IndexError(f"need 1 <= N1 <= M <= {len(models)}")
    return blockwise_sum(list(models[N1 - 1:M]))


def tensor_microstate(us: MatTuple, zs: MatTuple, p, w, delta: float,
                      polys: Sequence[NCPoly] = ()) -> DilationResult:
    """Commuting dilation of (u_i (x) 1, 1 (x) z_j) plus witness norms ||P(U, V)||.

    Witness polynomials use X1..Xn for the U_i and X(n+1)..X(n+m) for the V_j.
    """
    res = commuting_pair(DilationInput(us, zs, p, w), delta)
    model = MatTuple(res.Us.mats + res.Vs.mats)
    res.witnesses = [(format_poly(P), op_norm(evaluate(P, model))) for P in polys]
    return res


def random_dilation_input(dim: int, n: int = 1, m: int = 1, seed: int = 0,
                          inner: int | None = None, rank: int | None = None,
                          perturb: float = 0.01) -> DilationInput:
    """Random input on C^a (x) C^b with u_i = U (x) 1, v_j = 1 (x) V.

    p starts as (rank-r coordinate projection) (x) 1, so it commutes with the
    v_j, then is rotated by exp(i perturb K) for a random Hermitian K.  The
    whole configuration is conjugated by a Haar unitary.
    """
    b = inner or (2 if dim % 2 == 0 and dim > 2 else 1)
    if dim % b:
        raise ValueError("inner factor must divide dim")
    a = dim // b
    r = rank if rank is not None else a // 2
    if not 1 <= r or 2 * r > a:
        raise ValueError("need 1 <= rank <= outer dim / 2")
    rng = np.random.default_rng(seed)
    g = haar_unitary(dim, rng)
    ib, ia = np.eye(b), np.eye(a)
    us = [g @ np.kron(haar_unitary(a, rng), ib) @ dagger(g) for _ in range(n)]
    vs = [g @ np.kron(ia, haar_unitary(b, rng)) @ dagger(g) for _ in range(m)]
    p0 = g @ np.kron(np.diag([1.0] * r + [0.0] * (a - r)), ib) @ dagger(g)
    k = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    k = (k + dagger(k)) / (2 * np.sqrt(2 * dim))
    rot = sla.expm(1j * perturb * k)
    p = rot @ p0 @ dagger(rot)
    p = (p + dagger(p)) / 2
    wv, vv = np.linalg.eigh(p)
    e = vv[:, wv > 0.5]
    comp = vv[:, wv <= 0.5]
    rr = e.shape[1]
    f = comp @ haar_unitary(comp.shape[1], rng)[:, :rr]
    p = e @ dagger(e)
    w = f @ dagger(e)
    return DilationInput(MatTuple(tuple(us)), MatTuple(tuple(vs)), p, w)
