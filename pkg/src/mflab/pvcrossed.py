"""Shift truncations, almost-invariant frames and crossed-product matrix models.

The bilateral shift on l^2(Z) is truncated to indices -L..L.  A frame of
size n spans f_k = cos(k pi / 2n) e_k + sin(k pi / 2n) e_{k-n}, k = 0..n-1,
and its projection q almost commutes with the shift.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from typing import Callable, Mapping, Sequence

import numpy as np

from .groups import FiniteGroup
from .matcore import MatTuple, as_cmatrix, dagger, is_unitary, op_norm, unitarity_residual
from .ncpoly import NCPoly, evaluate, format_poly


def truncated_shift(N: int) -> np.ndarray:
    """N x N compression of the unilateral shift: e_k -> e_{k+1}, e_{N-1} -> 0."""
    return np.eye(N, k=-1, dtype=complex)


@dataclass(frozen=True)
class ShiftTruncation:
    L: int

    @property
    def dim(self) -> int:
        return 2 * self.L + 1

    def pos(self, n: int) -> int:
        """Array position of basis vector e_n."""
        if abs(n) > self.L:
            raise IndexError(f"e_{n} outside -{self.L}..{self.L}")
        return n + self.L

    @cached_property
    def matrix(self) -> np.ndarray:
        return truncated_shift(self.dim)


@dataclass
class PVFrame:
    n_j: int
    ambient: ShiftTruncation
    vectors: np.ndarray  # (2L+1) x n_j, column k is f_k
    commutator_norm: float

    @cached_property
    def q(self) -> np.ndarray:
        return (self.vectors @ self.vectors.T).astype(complex)

    def compressed_shift(self) -> np.ndarray:
        """Matrix of q u q on range(q) in the f-basis."""
        f = self.vectors
        tf = np.zeros_like(f)
        tf[1:] = f[:-1]
        return f.T @ tf + 0j


def frame_vectors(n: int, L: int) -> np.ndarray:
    amb = ShiftTruncation(L)
    f = np.zeros((amb.dim, n))
    for k in range(n):
        ang = k * np.pi / (2 * n)
        f[amb.pos(k), k] = np.cos(ang)
        if k > 0:
            f[amb.pos(k - n), k] = np.sin(ang)
    return f


def pv_frame(n_j: int, L: int | None = None) -> PVFrame:
    """Frame of size n_j on the (2L+1)-dimensional truncation (default L = 4 n_j).

    The commutator ||T q - q T|| is measured on the compression to indices
    [-2 n_j, 2 n_j] so the cut-off end of the truncated shift plays no role.
    """
    if n_j < 1:
        raise ValueError("n_j must be >= 1")
    L = 4 * n_j if L is None else L
    if L < n_j:
        raise ValueError(f"L={L} < n_j={n_j}")
    amb = ShiftTruncation(L)
    f = frame_vectors(n_j, L)
    h = min(2 * n_j, L)
    lo, hi = amb.pos(-h), amb.pos(h) + 1
    # the compression of T_L to a window is again a truncated shift
    t = np.eye(hi - lo, k=-1)
    fw = f[lo:hi]
    q = fw @ fw.T
    comm = op_norm(t @ q - q @ t)
    return PVFrame(n_j, amb, f, comm)


# ---------------------------------------------------------------- actions

@dataclass(frozen=True)
class GroupAction:
    """Action of Z on matrix tuples: apply(n, x) is alpha(n) applied generator-wise."""

    kind: str
    theta: float = 0.0
    W: np.ndarray | None = None
    perm: tuple | None = None
    which: tuple | None = None

    KINDS = ("trivial", "gauge", "conjugation", "permutation")

    def apply(self, n: int, x: MatTuple) -> MatTuple:
        if self.kind == "trivial":
            return x
        if self.kind == "gauge":
            phase = gauge_phase(self.theta, n)
            idx = set(self.which) if self.which is not None else set(range(1, x.count + 1))
            return MatTuple(tuple(phase * m if i in idx else m for i, m in enumerate(x, 1)))
        if self.kind == "conjugation":
            w = np.linalg.matrix_power(self.W if n >= 0 else dagger(self.W), abs(n))
            return x.map(lambda m: w @ m @ dagger(w))
        if self.kind == "permutation":
            k = len(self.perm)
            img = list(range(1, k + 1))
            step = self.perm if n >= 0 else tuple(np.argsort(self.perm) + 1)
            for _ in range(abs(n)):
                img = [step[i - 1] for i in img]
            return MatTuple(tuple(x[img[i] - 1] for i in range(k)))
        raise ValueError(f"unsupported action kind {self.kind!r}")

    def to_json(self) -> dict:
        out = {"kind": self.kind}
        if self.kind == "gauge":
            out["theta"] = self.theta
        if self.kind == "permutation":
            out["perm"] = list(self.perm)
        return out


def trivial_action() -> GroupAction:
    return GroupAction("trivial")


def conjugation_action(W) -> GroupAction:
    W = as_cmatrix(W)
    if not is_unitary(W):
        raise ValueError("conjugation action needs a unitary")
    return GroupAction("conjugation", W=W)


def permutation_action(perm: Sequence[int]) -> GroupAction:
    perm = tuple(int(p) for p in perm)
    if sorted(perm) != list(range(1, len(perm) + 1)):
        raise ValueError("malformed permutation")
    return GroupAction("permutation", perm=perm)


def gauge_action(theta: float, generators: MatTuple, which: Sequence[int] | None = None) -> GroupAction:
    """alpha(n)(u_i) = exp(2 pi i n theta) u_i on the chosen generators (default all)."""
    for i, u in enumerate(generators, 1):
        if unitarity_residual(u) > 1e-10:
            raise ValueError(f"generator {i} is not unitary")
    return GroupAction("gauge", theta=float(theta), which=tuple(which) if which is not None else None)


def gauge_phase(theta: float, n: int) -> complex:
    """exp(2 pi i n theta), with n theta reduced mod 1 in exact arithmetic.

    Reducing first keeps the phase accurate when n is a large convergent denominator.
    """
    frac = float((Fraction(theta) * int(n)) % 1)
    if frac == 0:
        return 1 + 0j
    return complex(np.exp(2j * np.pi * frac))


def gauge_defect(theta: float, n: int) -> float:
    """|exp(2 pi i n theta) - 1| = 2 |sin(pi n theta)|."""
    frac = float((Fraction(theta) * int(n)) % 1)
    return float(2 * abs(np.sin(np.pi * frac)))


# ---------------------------------------------------------------- orbit models

@dataclass
class OrbitModel:
    base: MatTuple
    action: GroupAction
    range_k: int
    shifted_models: dict = field(default_factory=dict)

    @property
    def m(self) -> int:
        return self.base.count

    def shifted(self, k: int) -> MatTuple:
        """Model of x_{k,i} = alpha(-k) x_i."""
        if abs(k) > self.range_k:
            raise IndexError(f"|k|={abs(k)} exceeds range {self.range_k}")
        return self.shifted_models[k]

    def y(self, k: int) -> MatTuple:
        """y_{k,i} = alpha(-k) y_i with y_i = alpha(-1) x_i, i.e. x_{k+1,i}."""
        return self.shifted(k + 1)

    def near_periodicity(self, n: int) -> float:
        """max_i,k ||x_{k+n,i} - x_{k,i}|| over the stored range."""
        out = 0.0
        for k in range(-self.range_k, self.range_k + 1):
            if abs(k + n) <= self.range_k:
                a, b = self.shifted(k + n), self.shifted(k)
                out = max(out, max(op_norm(x - y) for x, y in zip(a, b)))
        return out


def orbit_model(base: MatTuple, action: GroupAction, range_k: int) -> OrbitModel:
    if action.kind not in GroupAction.KINDS:
        raise ValueError(f"unsupported action kind {action.kind!r}")
    models = {k: action.apply(-k, base) for k in range(-range_k, range_k + 1)}
    models[0] = base
    return OrbitModel(base, action, range_k, models)


# ---------------------------------------------------------------- crossed model

@dataclass
class CrossedModel:
    A: MatTuple
    B: MatTuple
    U: np.ndarray
    frame: PVFrame
    p_rank: int
    epsilon_report: dict

    @property
    def intertwine(self) -> float:
        return self.epsilon_report["intertwine"]


def intertwine_defect(A: MatTuple, B: MatTuple, U) -> float:
    """max_i ||U* A_i - B_i U*||."""
    ud = dagger(as_cmatrix(U))
    return max((op_norm(ud @ a - b @ ud) for a, b in zip(A, B)), default=0.0)


def build_crossed_model(orbit: OrbitModel, frame: PVFrame, p_rank: int | None = None,
                        polys_G: Sequence[NCPoly] = (), polys_H: Sequence[NCPoly] = (),
                        refs_H: Sequence[float] = (), polys_P: Sequence[NCPoly] = ()) -> CrossedModel:
    """Matrix model A_i = sum_k p x_{k,i} p (x) q_k, B_i = sum_k p x_{k+1,i} p (x) q_k, U = 1 (x) q u q.

    The tensor factor range(q) uses the f-basis, so q_k is the k-th diagonal unit.
    G polynomials are in one variable (U), H in 2m variables (A then B) and
    P in m + 1 variables (A then U).
    """
    from .mfcheck import circle_norm

    n = frame.n_j
    if n > orbit.range_k:
        raise ValueError(f"frame size {n} exceeds orbit range {orbit.range_k}")
    d = orbit.base.dim
    r = d if p_rank is None else int(p_rank)
    if not 1 <= r <= d:
        raise ValueError(f"p_rank {r} outside 1..{d}")
    if len(refs_H) != len(polys_H):
        raise ValueError("need one reference norm per H polynomial")
    e = np.eye(d, dtype=complex)[:, :r]
    units = [np.diag(np.eye(n)[k]).astype(complex) for k in range(n)]
    m = orbit.m

    def assemble(get):
        mats = []
        for i in range(m):
            acc = np.zeros((r * n, r * n), dtype=complex)
            for k in range(n):
                acc += np.kron(dagger(e) @ get(k)[i] @ e, units[k])
            mats.append(acc)
        return MatTuple(tuple(mats))

    A = assemble(orbit.shifted)
    B = assemble(orbit.y)
    uc = frame.compressed_shift()
    U = np.kron(np.eye(r), uc)
    report = {"intertwine": intertwine_defect(A, B, U), "n_j": n, "p_rank": r,
              "frame_commutator": frame.commutator_norm}
    rows = []
    for G in polys_G:
        model_norm = op_norm(evaluate(G, [uc]))
        ref = circle_norm(G)
        rows.append({"poly": format_poly(G), "model_norm": model_norm, "oracle_norm": ref,
                     "deviation": abs(model_norm - ref)})
    report["circle"] = rows
    rows = []
    for H, ref in zip(polys_H, refs_H):
        val = op_norm(evaluate(H, MatTuple(A.mats + B.mats)))
        rows.append({"poly": format_poly(H), "model_norm": val, "reference": float(ref),
                     "deviation": abs(val - float(ref))})
    report["H"] = rows
    report["witnesses"] = [{"poly": format_poly(P), "norm": op_norm(evaluate(P, MatTuple(A.mats + (U,))))}
                           for P in polys_P]
    return CrossedModel(A, B, U, frame, r, report)


# ---------------------------------------------------------------- finite groups

@dataclass
class CovariantRep:
    """Regular covariant pair on C^d (x) l^2(G): pi(a) = (+)_g alpha_{g^-1}(a), lam_h e_g = e_{hg}."""

    group: FiniteGroup
    base_dim: int
    conjugators: list
    lam: MatTuple

    def alpha(self, g, a) -> np.ndarray:
        w = self.conjugators[self.group.index(g)]
        return w @ a @ dagger(w)

    def pi(self, a) -> np.ndarray:
        a = as_cmatrix(a)
        G = self.group
        blocks = [self.alpha(G.inv(g), a) for g in G.elements]
        d = self.base_dim
        out = np.zeros((d * G.order, d * G.order), dtype=complex)
        for i, b in enumerate(blocks):
            out[i * d:(i + 1) * d, i * d:(i + 1) * d] = b
        return out

    def covariance_residual(self, a) -> float:
        """max_h ||lam_h pi(a) lam_h* - pi(alpha_h(a))||."""
        pa = self.pi(a)
        out = 0.0
        for h, lam in zip(self.group.elements, self.lam):
            out = max(out, op_norm(lam @ pa @ dagger(lam) - self.pi(self.alpha(h, a))))
        return out

    def homomorphism_residual(self) -> float:
        """max_{g,h} ||lam_g lam_h - lam_{gh}||."""
        G = self.group
        out = 0.0
        for g, lg in zip(G.elements, self.lam):
            for h, lh in zip(G.elements, self.lam):
                out = max(out, op_norm(lg @ lh - self.lam[G.index(G.mul(g, h))]))
        return out


def finite_group_crossed(base_dim: int, group: FiniteGroup, action) -> CovariantRep:
    """Regular covariant representation for alpha_g = Ad(W_g) on M_{base_dim}.

    ``action`` maps group elements to unitary conjugators (callable or mapping).
    """
    G = group
    if G.order == 0:
        raise ValueError("empty group")
    get = action if callable(action) else (lambda g: action[g])
    ws = [as_cmatrix(get(g)) for g in G.elements]
    d = base_dim
    for g, w in zip(G.elements, ws):
        if w.shape != (d, d) or unitarity_residual(w) > 1e-10:
            raise ValueError(f"conjugator for {g} is not a {d}x{d} unitary")
    # Ad(W) is a homomorphism iff W_g W_h = c W_gh with |c| = 1
    for g, wg in zip(G.elements, ws):
        for h, wh in zip(G.elements, ws):
            wgh = ws[G.index(G.mul(g, h))]
            prod = dagger(wgh) @ wg @ wh
            c = np.trace(prod) / d
            if abs(abs(c) - 1) > 1e-10 or op_norm(prod - c * np.eye(d)) > 1e-10:
                raise ValueError("action is not a homomorphism")
    n = G.order
    lams = []
    for h in G.elements:
        lam = np.zeros((d * n, d * n), dtype=complex)
        for j, g in enumerate(G.elements):
            i = G.index(G.mul(h, g))
            lam[i * d:(i + 1) * d, j * d:(j + 1) * d] = np.eye(d)
        lams.append(lam)
    return CovariantRep(G, d, ws, MatTuple(tuple(lams)))


def permutation_matrix(perm: Sequence[int]) -> np.ndarray:
    """P e_i = e_{perm(i)} for a 1-based permutation tuple."""
    n = len(perm)
    out = np.zeros((n, n), dtype=complex)
    for i, pi in enumerate(perm):
        out[pi - 1, i] = 1
    return out


def standard_conjugators(n: int) -> Callable:
    """S_n acting on the (n-1)-dim sum-zero subspace of C^n by permuting coordinates."""
    basis = np.linalg.qr(np.eye(n)[:, :-1] - np.eye(n)[:, [-1]])[0]
    return lambda perm: dagger(basis) @ permutation_matrix(perm) @ basis


def phase_conjugators(p: int, diag: Sequence[complex]) -> Mapping:
    """Z_p acting by Ad(D^g) for a diagonal unitary D."""
    D = np.diag(np.asarray(diag, dtype=complex))
    return {g: np.linalg.matrix_power(D, g) for g in range(p)}
