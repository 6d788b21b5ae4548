"""Command-line driver: ``mflab <subcommand> [options]``.

Exit status is 0 on success, 1 on usage or input errors and 2 when a
certificate in the report failed.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import time

import numpy as np

from . import __version__
from .dilation import DilationInput, commuting_pair, random_dilation_input
from .groups import (BUILTIN_COSETS, IntegerGroup, SemidirectGroup, coset_decompose, cyclic_group,
                     fuzz_freeness, reconstruct, symmetric_group)
from .matcore import MatTuple, haar_unitary, matrix_from_json
from .mfcheck import (Certificate, Condition, NormOracle, ball_bounds, certify_commuting_conditions,
                      certify_crossed_conditions, circle_bracket, microstate_report, torus_bracket)
from .ncpoly import parse
from .pvcrossed import (build_crossed_model, finite_group_crossed, gauge_action, orbit_model,
                        permutation_matrix, pv_frame, standard_conjugators, trivial_action)
from .report import SCHEMA_TAG, canonical_dumps


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(1)


def _int_list(text: str) -> list:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _positive(text: str) -> float:
    v = float(text)
    if not v > 0:
        raise argparse.ArgumentTypeError("must be positive")
    return v


def _kv(text: str) -> dict:
    out = {}
    for part in text.split(","):
        if not part.strip():
            continue
        key, sep, val = part.partition("=")
        if not sep:
            raise argparse.ArgumentTypeError(f"expected key=value, got {part!r}")
        out[key.strip()] = val.strip()
    return out


# ---------------------------------------------------------------- scenarios

def run_dilate(args):
    if args.input and args.random:
        raise UsageError("give either --input or --random")
    if args.random:
        opts = dict(args.random)
        if "seed" not in opts or "dim" not in opts:
            raise UsageError("--random needs dim=... and seed=...")
        allowed = {"dim", "n", "m", "seed", "inner", "rank", "perturb"}
        if set(opts) - allowed:
            raise UsageError(f"unknown --random keys {sorted(set(opts) - allowed)}")
        kw = {k: int(v) for k, v in opts.items() if k in ("dim", "n", "m", "seed", "inner", "rank")}
        if "perturb" in opts:
            kw["perturb"] = float(opts["perturb"])
        inp = random_dilation_input(**kw)
        source = {"random": {k: kw[k] for k in sorted(kw)}}
    elif args.input:
        with open(args.input, encoding="utf-8") as fh:
            inp = DilationInput.from_json(json.load(fh))
        source = {"input": args.input}
    else:
        raise UsageError("give --input FILE or --random dim=...,seed=...")
    res = commuting_pair(inp, args.delta)
    payload = res.to_json(include_matrices=args.include_matrices)
    certs = [Certificate("dilation-bound", 0, [Condition("max commutator <= bound",
                                                         res.max_commutator, res.bound)])]
    if args.r1:
        certs.append(certify_commuting_conditions(res.Us, res.Vs, [], NormOracle.circle(), args.r1))
    config = {"delta": args.delta, "source": source, "r1": args.r1}
    return config, payload, certs


def run_pv(args):
    nj = sorted(set(args.nj))
    frames = [pv_frame(n, args.l_factor * n) for n in nj]
    rows = [{"n_j": f.n_j, "L": f.ambient.L, "commutator_norm": f.commutator_norm,
             "pi_over_n": math.pi / f.n_j, "closed_form": math.sin(math.pi / (2 * f.n_j))}
            for f in frames]
    norms = [r["commutator_norm"] for r in rows]
    conds = [Condition("commutator_norm * n_j / pi", max(c * n / math.pi for c, n in zip(norms, nj)), 1.0)]
    if len(norms) > 1:
        conds.append(Condition("max successive difference", max(b - a for a, b in zip(norms, norms[1:])),
                               0.0, strict=True))
    return {"nj": nj, "l_factor": args.l_factor}, {"table": rows}, [Certificate("pv-decay", 0, conds)]


def run_crossed(args):
    nj = sorted(set(args.nj))
    rng = np.random.default_rng(args.seed)
    base = MatTuple(tuple(haar_unitary(args.dim, rng) for _ in range(args.m)))
    if args.action == "gauge":
        action = gauge_action(args.theta, base)
    else:
        action = trivial_action()
    orbit = orbit_model(base, action, max(nj))
    polys_G = [parse(t, 1) for t in args.g_poly]
    polys_P = [parse(t, args.m + 1) for t in args.p_poly]
    rows, certs = [], []
    for n in nj:
        model = build_crossed_model(orbit, pv_frame(n), args.p_rank, polys_G=polys_G, polys_P=polys_P)
        rep = dict(model.epsilon_report)
        rep["near_periodicity"] = orbit.near_periodicity(n)
        rows.append(rep)
        if args.r1:
            certs.append(certify_crossed_conditions(model, polys_G, [], NormOracle.circle(), [], args.r1))
    config = {"theta": args.theta, "nj": nj, "dim": args.dim, "m": args.m, "seed": args.seed,
              "action": args.action, "p_rank": args.p_rank, "g_poly": args.g_poly,
              "p_poly": args.p_poly, "r1": args.r1}
    return config, {"reports": rows}, certs


def run_finite_crossed(args):
    name = args.group.upper()
    if name.startswith("S"):
        n = int(name[1:])
        group = symmetric_group(n)
        d = args.base_dim or n - 1
        if d == n:
            conj = permutation_matrix
        elif d == n - 1:
            conj = standard_conjugators(n)
        else:
            raise UsageError(f"S{n} acts on base dim {n - 1} or {n}")
    elif name.startswith("Z"):
        p = int(name[1:])
        group = cyclic_group(p)
        d = args.base_dim or 2
        diag = np.exp(2j * np.pi * np.arange(d) / p)
        conj = lambda g: np.diag(diag ** g)
    else:
        raise UsageError(f"unknown group {args.group!r}")
    rep = finite_group_crossed(d, group, conj)
    rng = np.random.default_rng(args.seed)
    worst = 0.0
    for _ in range(args.samples):
        a = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
        worst = max(worst, rep.covariance_residual(a))
    hom = rep.homomorphism_residual()
    payload = {"group": group.name, "order": group.order, "base_dim": d, "dim": d * group.order,
               "samples": args.samples, "covariance_residual": worst, "homomorphism_residual": hom}
    cert = Certificate("covariance", 0, [Condition("covariance residual", worst, args.tol),
                                         Condition("lambda homomorphism residual", hom, args.tol)])
    config = {"group": group.name, "base_dim": d, "samples": args.samples, "seed": args.seed, "tol": args.tol}
    return config, payload, [cert]


def run_freeness(args):
    rep = fuzz_freeness(args.trials, args.seed, n=args.n, m=args.m, exp_max=args.exp_max,
                        base_exponent=args.base_exponent)
    payload = rep.to_json()
    cert = Certificate("freeness", 0, [Condition("failures", float(len(rep.failures)), 0.0)])
    config = {"n": args.n, "m": args.m, "trials": args.trials, "seed": args.seed,
              "exp_max": args.exp_max, "base_exponent": args.base_exponent}
    return config, payload, [cert]


def run_coset(args):
    if args.example not in BUILTIN_COSETS:
        raise UsageError(f"unknown example {args.example!r}; choose from {sorted(BUILTIN_COSETS)}")
    sys_ = BUILTIN_COSETS[args.example]()
    G = sys_.group
    g = G.parse(args.g) if hasattr(G, "parse") else None
    dec = coset_decompose(sys_, g)
    bad = sum(not G.eq(reconstruct(sys_, dec, i), g) for i in range(1, sys_.index + 1))
    payload = {"g": G.encode(g), "index": sys_.index, "reps": [G.encode(r) for r in sys_.reps],
               "sigma": list(dec.sigma), "h": [G.encode(h) for h in dec.hs],
               "h_in_subgroup": [bool(sys_.member(h)) for h in dec.hs]}
    conds = [Condition("reconstruction mismatches", float(bad), 0.0),
             Condition("h outside subgroup", float(sum(not x for x in payload["h_in_subgroup"])), 0.0)]
    return {"example": args.example, "g": args.g}, payload, [Certificate("coset", 0, conds)]


def run_norm(args):
    if args.oracle == "circle":
        p = parse(args.poly, 1)
        b = circle_bracket(p)
    else:
        p = parse(args.poly, args.m)
        b = torus_bracket(p, args.m)
    payload = {"poly": str(p), "value": b.value, "upper": b.upper, "width": b.width, "direction": "exact"}
    return {"oracle": args.oracle, "m": args.m, "poly": args.poly}, payload, []


def run_ball(args):
    p = parse(args.poly, args.n)
    lo = max(1, p.degree)
    if args.radius < lo:
        raise UsageError(f"radius must be >= polynomial degree {p.degree}")
    bounds = ball_bounds(p, range(lo, args.radius + 1), args.n)
    rows = [b.to_json() for b in bounds]
    vals = [b.lower for b in bounds]
    drop = max((a - b for a, b in zip(vals, vals[1:])), default=0.0)
    total = sum(abs(c) for c, _ in p.terms)
    conds = [Condition("monotonicity drop", drop, 1e-12),
             Condition("bound minus sum of |coefficients|", max(vals) - total, 0.0)]
    payload = {"poly": str(p), "n": args.n, "bounds": rows, "value": vals[-1]}
    return {"n": args.n, "poly": args.poly, "radius": args.radius}, payload, [Certificate("ball", 0, conds)]


def _load_models(path: str) -> list:
    with open(path, encoding="utf-8") as fh:
        obj = json.load(fh)
    items = obj["models"] if isinstance(obj, dict) else obj
    return [MatTuple.from_json(x) for x in items]


def _oracle(text: str) -> NormOracle:
    kind, _, rest = text.partition(":")
    if kind == "circle":
        return NormOracle.circle()
    if kind == "torus":
        return NormOracle.torus(int(rest or 1))
    if kind == "exact":
        with open(rest, encoding="utf-8") as fh:
            return NormOracle.exact_matrix(MatTuple.from_json(json.load(fh)))
    if kind == "ball":
        n, _, r = rest.partition(":")
        return NormOracle.ball(int(n), int(r))
    if kind == "const":
        with open(rest, encoding="utf-8") as fh:
            return NormOracle.user_constant({k: float(v) for k, v in json.load(fh).items()})
    raise UsageError(f"unknown oracle {text!r}")


def run_report(args):
    models = _load_models(args.models)
    if not models:
        raise UsageError("no models given")
    with open(args.polys, encoding="utf-8") as fh:
        lines = [ln.strip() for ln in fh if ln.strip() and not ln.lstrip().startswith("#")]
    nv = args.num_vars or models[0].count
    polys = [parse(t, nv) for t in lines]
    oracle = _oracle(args.oracle)
    rep = microstate_report(models, polys, oracle, {"dims": [m.dim for m in models]})
    return {"models": args.models, "polys": args.polys, "oracle": args.oracle}, rep.to_json(), []


# ---------------------------------------------------------------- argument parsing

def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="mflab", description="Matrix models, dilations and norm certificates.")
    ap.add_argument("--version", action="version", version=f"mflab {__version__}")
    sub = ap.add_subparsers(dest="subcommand", required=True, parser_class=_Parser)

    def common(p):
        p.add_argument("-o", "--output", default="-", help="output path, '-' for stdout")
        p.add_argument("--timing", action="store_true", help="record wall-clock seconds")
        return p

    p = common(sub.add_parser("dilate", help="commuting dilation with certified bound"))
    p.add_argument("--input", help="DilationInput JSON file")
    p.add_argument("--random", type=_kv, help="dim=..,n=..,m=..,seed=..[,rank=..,inner=..,perturb=..]")
    p.add_argument("--delta", type=_positive, default=0.1)
    p.add_argument("--r1", type=int, default=0)
    p.add_argument("--include-matrices", action="store_true")
    p.set_defaults(func=run_dilate)

    p = common(sub.add_parser("pv", help="frame commutator decay table"))
    p.add_argument("--nj", type=_int_list, required=True)
    p.add_argument("--l-factor", type=int, default=4)
    p.set_defaults(func=run_pv)

    p = common(sub.add_parser("crossed", help="crossed-product matrix model report"))
    p.add_argument("--theta", type=float, default=0.3)
    p.add_argument("--nj", type=_int_list, required=True)
    p.add_argument("--dim", type=int, default=8)
    p.add_argument("--m", type=int, default=1)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--action", choices=["gauge", "trivial"], default="gauge")
    p.add_argument("--p-rank", type=int, default=None)
    p.add_argument("--g-poly", action="append", default=None)
    p.add_argument("--p-poly", action="append", default=None)
    p.add_argument("--r1", type=int, default=0)
    p.set_defaults(func=run_crossed)

    p = common(sub.add_parser("finite-crossed", help="finite-group covariant representation"))
    p.add_argument("--group", required=True, help="Z<p> or S<n>")
    p.add_argument("--base-dim", type=int, default=0)
    p.add_argument("--samples", type=int, default=100)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--tol", type=_positive, default=1e-12)
    p.set_defaults(func=run_finite_crossed)

    p = common(sub.add_parser("freeness", help="fuzz the freeness witness"))
    p.add_argument("--n", type=int, default=2)
    p.add_argument("--m", type=int, default=3)
    p.add_argument("--trials", type=int, default=1000)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--exp-max", type=int, default=3)
    p.add_argument("--base-exponent", type=int, default=3)
    p.set_defaults(func=run_freeness)

    p = common(sub.add_parser("coset", help="coset decomposition of one element"))
    p.add_argument("--example", required=True)
    p.add_argument("--g", required=True, help="t^k for z-2z; 'word;perm' for f<n>-s<n>")
    p.set_defaults(func=run_coset)

    p = common(sub.add_parser("norm", help="circle or torus sup norm"))
    p.add_argument("--oracle", choices=["circle", "torus"], default="circle")
    p.add_argument("--poly", required=True)
    p.add_argument("--m", type=int, default=1)
    p.set_defaults(func=run_norm)

    p = common(sub.add_parser("ball", help="Cayley-ball lower bounds"))
    p.add_argument("--n", type=int, default=2)
    p.add_argument("--poly", required=True)
    p.add_argument("--radius", type=int, required=True)
    p.set_defaults(func=run_ball)

    p = common(sub.add_parser("report", help="microstate deviation report"))
    p.add_argument("--models", required=True)
    p.add_argument("--polys", required=True)
    p.add_argument("--oracle", required=True,
                   help="circle | torus:m | exact:FILE | ball:n:radius | const:FILE")
    p.add_argument("--num-vars", type=int, default=0)
    p.set_defaults(func=run_report)
    return ap


def run(argv=None) -> tuple:
    """Parse arguments and build the report; returns (report, exit_code)."""
    args = build_parser().parse_args(argv)
    if getattr(args, "g_poly", "unset") is None:
        args.g_poly = ["X1 + X1'"]
    if getattr(args, "p_poly", "unset") is None:
        args.p_poly = []
    start = time.perf_counter()
    config, payload, certs = args.func(args)
    report = {
        "schema": SCHEMA_TAG,
        "subcommand": args.subcommand,
        "config": config,
        "payload": payload,
        "certificates": [c.to_json() for c in certs],
        "passed": all(c.passed for c in certs),
    }
    if args.timing:
        report["wall_clock_s"] = time.perf_counter() - start
    return report, args, (0 if report["passed"] else 2)


def main(argv=None) -> int:
    try:
        report, args, code = run(argv)
        text = canonical_dumps(report)
    except SystemExit as exc:
        return int(exc.code or 0)
    except (UsageError, ValueError, KeyError, IndexError, OSError, json.JSONDecodeError) as exc:
        sys.stderr.write(f"mflab: error: {exc}\n")
        return 1
    if args.output == "-":
        sys.stdout.write(text)
        sys.stdout.flush()
    else:
        with open(args.output, "w", encoding="utf-8") as fh:
            fh.write(text)
    return code


if __name__ == "__main__":
    sys.exit(main())
