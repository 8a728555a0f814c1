"""Command-line front end.

Usage examples::

    stein-rotations estimate --family vmf --gen "vmf:F=I3" --n 500 --seed 7
    stein-rotations gof --gen "cayley:kappa=1.0" --n 500 --beta 0.05 --seed 1
    stein-rotations sample --gen "rn:sigma=0.3" --n 100 --out draws.txt
    stein-rotations experiment table1 --trials 20 --out table1.csv

Exit status is 0 on success, 1 on a runtime failure and 2 on a usage error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import re
import sys
import time
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .errors import SteinRotationsError
from .estimators import mksde_rn, mksde_vmf, mle_vmf_numeric, mle_vmf_smallF
from .experiments import (
    FIG1_COLUMNS, FIG1_METHODS, TABLE1_BETAS, TABLE1_COLUMNS, TABLE1_KAPPAS, run_fig1, run_table1,
)
from .gof import gof_test
from .kernels import KernelConfig, RnParams, VmfParams
from .lie import haar_sample, is_rotation, renormalize_batch
from .samplers import CayleyParams, sample_cayley, sample_rn, sample_vmf

log = logging.getLogger("stein_rotations")

SEED_ENV = "STEIN_ROTATIONS_SEED"
LOAD_TOL = 1e-6
METHODS = {"mksde": "mksde", "mle-smallF": "mle_smallF", "mle-numeric": "mle_numeric"}


class UsageError(Exception):
    """Bad arguments detected after parsing; mapped to exit status 2."""


# generator specs ---------------------------------------------------------------

def _split_top(s: str) -> list[str]:
    """Split on commas that are not inside parentheses or brackets."""
    parts, depth, cur = [], 0, []
    for ch in s:
        if ch in "([":
            depth += 1
        elif ch in ")]":
            depth -= 1
        if ch == "," and depth == 0:
            parts.append("".join(cur))
            cur = []
        else:
            cur.append(ch)
    parts.append("".join(cur))
    return [p.strip() for p in parts if p.strip()]


def parse_matrix(text: str) -> np.ndarray:
    """``I3``, ``5*I3``, ``diag(0.1,0.2,0.3)``, ``zeros3`` or a JSON nested list."""
    t = text.replace(" ", "")
    m = re.fullmatch(r"(?:([-+0-9.eE]+)\*)?I(\d+)", t)
    if m:
        return float(m.group(1) or 1.0) * np.eye(int(m.group(2)))
    m = re.fullmatch(r"(?:([-+0-9.eE]+)\*)?diag\(([^)]*)\)", t)
    if m:
        return float(m.group(1) or 1.0) * np.diag([float(v) for v in m.group(2).split(",")])
    m = re.fullmatch(r"zeros(\d+)", t)
    if m:
        return np.zeros((int(m.group(1)),) * 2)
    if t.startswith("["):
        a = np.asarray(json.loads(t), dtype=float)
        if a.ndim == 2 and a.shape[0] == a.shape[1]:
            return a
    raise UsageError(f"cannot parse matrix {text!r}")


def parse_gen(spec: str, dim: Optional[int] = None):
    """Turn a generator spec into ``(family, params, draw)``.

    ``draw(count, rng)`` returns a stack of rotations. Recognized forms::

        vmf:F=I3 | vmf:F=5*I3 | vmf:F=diag(0.1,0.2,0.3)
        cayley:kappa=1.0[,dim=3][,M=I3]
        rn:sigma=0.3[,dim=3][,mu=I3]  (or varsigma=...)
        haar:dim=3
    """
    name, _, rest = spec.partition(":")
    name = name.strip().lower()
    kv = {}
    for part in _split_top(rest):
        key, eq, val = part.partition("=")
        if not eq:
            raise UsageError(f"bad generator field {part!r} in {spec!r}")
        kv[key.strip()] = val.strip()
    try:
        d = int(kv.pop("dim", dim or 3))
        if name == "vmf":
            p = VmfParams(parse_matrix(kv.pop("F")))
            draw = lambda c, rng: sample_vmf(p, c, rng)  # noqa: E731
        elif name == "cayley":
            m = parse_matrix(kv.pop("M")) if "M" in kv else np.eye(d)
            p = CayleyParams(m, float(kv.pop("kappa")))
            draw = lambda c, rng: sample_cayley(p, c, rng)  # noqa: E731
        elif name == "rn":
            mu = parse_matrix(kv.pop("mu")) if "mu" in kv else np.eye(d)
            if "sigma" in kv:
                p = RnParams.from_sigma(mu, float(kv.pop("sigma")))
            else:
                p = RnParams(mu, float(kv.pop("varsigma")))
            draw = lambda c, rng: sample_rn(p, c, rng)  # noqa: E731
        elif name == "haar":
            p = None
            draw = lambda c, rng: haar_sample(d, c, rng)  # noqa: E731
        else:
            raise UsageError(f"unknown generator {name!r}")
    except KeyError as exc:
        raise UsageError(f"generator {spec!r} is missing {exc.args[0]!r}") from None
    except (ValueError, SteinRotationsError) as exc:
        raise UsageError(f"invalid generator {spec!r}: {exc}") from None
    if kv:
        raise UsageError(f"unknown generator fields {sorted(kv)} in {spec!r}")
    return name, p, draw


# rotation files ----------------------------------------------------------------

def load_rotations(path: str) -> np.ndarray:
    """Read one rotation per line (N^2 row-major floats); ``#`` lines are skipped.

    Entries within ``LOAD_TOL`` of SO(N) are projected back onto it; anything
    further away is an error.
    """
    rows = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            s = line.strip()
            if not s or s.startswith("#"):
                continue
            try:
                rows.append([float(v) for v in s.split()])
            except ValueError:
                raise SteinRotationsError(f"{path}:{lineno}: non-numeric entry") from None
    if not rows:
        raise SteinRotationsError(f"{path}: no rotations found")
    width = {len(r) for r in rows}
    if len(width) != 1:
        raise SteinRotationsError(f"{path}: rows have differing lengths {sorted(width)}")
    w = width.pop()
    n = math.isqrt(w)
    if n * n != w or n < 2:
        raise SteinRotationsError(f"{path}: row length {w} is not N^2 for N >= 2")
    xs = np.asarray(rows).reshape(-1, n, n)
    for i, x in enumerate(xs):
        if not is_rotation(x, tol=LOAD_TOL):
            raise SteinRotationsError(f"{path}: sample {i} is not within {LOAD_TOL:g} of SO({n})")
    return renormalize_batch(xs)


def dump_rotations(xs: np.ndarray, meta: dict) -> str:
    buf = io.StringIO()
    for line in json.dumps(meta, sort_keys=True, indent=1).splitlines():
        buf.write(f"# {line}\n")
    for x in xs:
        buf.write(" ".join(repr(float(v)) for v in x.ravel()) + "\n")
    return buf.getvalue()


# output helpers ----------------------------------------------------------------

def _emit(text: str, out: Optional[str]):
    if out is None or out == "-":
        sys.stdout.write(text)
    else:
        with open(out, "w", newline="") as fh:
            fh.write(text)


def _json(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2, allow_nan=True) + "\n"


def _csv(rows: list[dict], columns: Sequence[str], meta: dict) -> str:
    buf = io.StringIO()
    for line in json.dumps(meta, sort_keys=True).splitlines():
        buf.write(f"# {line}\n")
    wr = csv.DictWriter(buf, fieldnames=list(columns), extrasaction="ignore", lineterminator="\n")
    wr.writeheader()
    for r in rows:
        wr.writerow({k: (repr(float(v)) if isinstance(v, (float, np.floating)) else v) for k, v in r.items()})
    return buf.getvalue()


def _meta(args, seed: int) -> dict:
    cfg = {k: v for k, v in vars(args).items() if k not in ("func",)}
    return {"version": __version__, "seed": seed, "tau": args.tau, "config": cfg}


def resolve_seed(seed: Optional[int]) -> int:
    if seed is not None:
        return seed
    env = os.environ.get(SEED_ENV)
    if env is None or env.strip() == "":
        return 0
    try:
        return int(env)
    except ValueError:
        raise UsageError(f"{SEED_ENV} must be an integer, got {env!r}") from None


def _load_samples(args, rng) -> np.ndarray:
    if (args.input is None) == (args.gen is None):
        raise UsageError("give exactly one of --in and --gen")
    if args.input is not None:
        return load_rotations(args.input)
    if args.n is None or args.n < 1:
        raise UsageError("--gen needs --n >= 1")
    _, _, draw = parse_gen(args.gen, args.dim)
    return draw(args.n, rng)


def _params_json(p) -> dict:
    if isinstance(p, VmfParams):
        return {"F": p.f.tolist()}
    return {"mu": p.mu.tolist(), "varsigma": p.varsigma, "sigma": p.sigma}


# commands ----------------------------------------------------------------------

def cmd_estimate(args) -> int:
    seed = resolve_seed(args.seed)
    rng = np.random.default_rng(seed)
    xs = _load_samples(args, rng)
    cfg = KernelConfig(args.tau)
    method = METHODS[args.method]
    if args.family == "rn" and method != "mksde":
        raise UsageError("only --method mksde is available for the rn family")
    t0 = time.perf_counter()
    if args.family == "rn":
        rep = mksde_rn(xs, cfg)
    elif method == "mksde":
        rep = mksde_vmf(xs, cfg)
    elif method == "mle_smallF":
        rep = mle_vmf_smallF(xs)
    else:
        rep = mle_vmf_numeric(xs, rng=rng)
    ms = 1000.0 * (time.perf_counter() - t0)
    out = {
        "family": args.family,
        "params_estimate": _params_json(rep.params),
        "objective": rep.objective,
        "method": args.method,
        "seed": seed,
        "runtime_ms": ms,
        "n": int(len(xs)),
        "converged": rep.converged,
        "flags": list(rep.flags),
        "metadata": _meta(args, seed),
    }
    _emit(_json(out), args.out)
    return 0


def cmd_gof(args) -> int:
    seed = resolve_seed(args.seed)
    rng = np.random.default_rng(seed)
    xs = _load_samples(args, rng)
    t0 = time.perf_counter()
    res = gof_test(xs, args.family, KernelConfig(args.tau), args.beta, args.m, rng, workers=args.workers)
    out = res.to_dict()
    eig = res.eigenvalues
    out["eigenvalue_summary"] = {
        "count": int(eig.size), "sum": float(eig.sum()), "max": float(eig.max()),
        "top": eig[:10].tolist(),
    }
    out.update(n=int(len(xs)), seed=seed, runtime_ms=1000.0 * (time.perf_counter() - t0),
               metadata=_meta(args, seed))
    _emit(_json(out), args.out)
    return 0


def cmd_sample(args) -> int:
    seed = resolve_seed(args.seed)
    if args.gen is None or args.n is None or args.n < 1:
        raise UsageError("sample needs --gen and --n >= 1")
    _, _, draw = parse_gen(args.gen, args.dim)
    xs = draw(args.n, np.random.default_rng(seed))
    _emit(dump_rotations(xs, _meta(args, seed)), args.out)
    return 0


def _check_trials(args):
    if args.trials < 1:
        raise UsageError("--trials must be >= 1")
    if args.workers < 1:
        raise UsageError("--workers must be >= 1")


def cmd_fig1(args) -> int:
    _check_trials(args)
    seed = resolve_seed(args.seed)
    methods = list(FIG1_METHODS) if args.method is None else [METHODS[args.method]]
    rows = run_fig1(ns=args.ns, trials=args.trials, seed=seed, labels=args.labels, methods=methods,
                    tau=args.tau, mc_size=args.mc_size, workers=args.workers)
    _emit(_csv(rows, FIG1_COLUMNS, _meta(args, seed)), args.out)
    failed = sum("error" in r for r in rows)
    if failed:
        log.warning("%d of %d fig1 rows failed", failed, len(rows))
    return 0


def cmd_table1(args) -> int:
    _check_trials(args)
    seed = resolve_seed(args.seed)
    rows = run_table1(kappas=args.kappas, trials=args.trials, n=args.n or 500, m=args.m, seed=seed,
                      tau=args.tau, betas=TABLE1_BETAS, workers=args.workers)
    _emit(_csv(rows, TABLE1_COLUMNS, _meta(args, seed)), args.out)
    return 0


# parser ------------------------------------------------------------------------

def _beta(text: str) -> float:
    try:
        b = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not 0 < b < 1:
        raise argparse.ArgumentTypeError(f"beta must lie in (0, 1), got {text}")
    return b


def _tau(text: str) -> float:
    t = float(text)
    if not (np.isfinite(t) and t > 0):
        raise argparse.ArgumentTypeError(f"tau must be positive, got {text}")
    return t


def _floats(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v.strip()]


def _ints(text: str) -> list[int]:
    return [int(v) for v in text.split(",") if v.strip()]


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None,
                        help=f"master seed (falls back to ${SEED_ENV}, then 0)")
    common.add_argument("--tau", type=_tau, default=1.0, help="kernel scale (default 1)")
    common.add_argument("--out", default=None, help="output file (default stdout)")
    common.add_argument("--workers", type=int, default=1)
    common.add_argument("-v", "--verbose", action="store_true")

    data = argparse.ArgumentParser(add_help=False)
    data.add_argument("--in", dest="input", default=None, help="rotation file, one sample per line")
    data.add_argument("--gen", default=None, help='generator spec, e.g. "vmf:F=I3" or "rn:sigma=0.3"')
    data.add_argument("--n", type=int, default=None, help="number of generated samples")
    data.add_argument("--dim", type=int, default=None, help="dimension N for generators that need it")

    p = argparse.ArgumentParser(prog="stein-rotations", description="Kernel Stein discrepancy on SO(N).")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    e = sub.add_parser("estimate", parents=[common, data], help="fit a family by minimum KSD or MLE")
    e.add_argument("--family", choices=("vmf", "rn"), default="vmf")
    e.add_argument("--method", choices=tuple(METHODS), default="mksde")
    e.set_defaults(func=cmd_estimate)

    g = sub.add_parser("gof", parents=[common, data], help="goodness-of-fit test against a family")
    g.add_argument("--family", choices=("vmf", "rn"), default="vmf")
    g.add_argument("--beta", type=_beta, default=0.05)
    g.add_argument("--m", type=int, default=10_000, help="null draws (default 10000)")
    g.set_defaults(func=cmd_gof)

    s = sub.add_parser("sample", parents=[common], help="draw samples to a rotation file")
    s.add_argument("--gen", default=None)
    s.add_argument("--n", type=int, default=None)
    s.add_argument("--dim", type=int, default=None)
    s.set_defaults(func=cmd_sample)

    x = sub.add_parser("experiment", help="seeded experiment harness (CSV output)")
    xs = x.add_subparsers(dest="experiment", required=True)
    f1 = xs.add_parser("fig1", parents=[common], help="estimator error against ground truth")
    f1.add_argument("--trials", type=int, default=20)
    f1.add_argument("--ns", type=_ints, default=[100, 200, 500, 1000], help="comma-separated sample sizes")
    f1.add_argument("--n", type=int, dest="ns_single", default=None, help="single sample size")
    f1.add_argument("--labels", type=lambda t: [v for v in t.split(";") if v], default=None,
                    help="semicolon-separated subset of ground-truth labels")
    f1.add_argument("--method", choices=tuple(METHODS), default=None, help="restrict to one method")
    f1.add_argument("--mc-size", type=int, default=10_000, help="Monte Carlo size for mle-numeric")
    f1.set_defaults(func=cmd_fig1)
    t1 = xs.add_parser("table1", parents=[common], help="Cayley samples tested against vMF")
    t1.add_argument("--trials", type=int, default=20)
    t1.add_argument("--n", type=int, default=500)
    t1.add_argument("--m", type=int, default=10_000)
    t1.add_argument("--kappas", type=_floats, default=list(TABLE1_KAPPAS), help="comma-separated kappas")
    t1.set_defaults(func=cmd_table1)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "ns_single", None) is not None:
        args.ns = [args.ns_single]
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"{parser.prog}: error: {exc}", file=sys.stderr)
        return 2
    except (SteinRotationsError, ValueError, ArithmeticError, RuntimeError, OSError) as exc:
        print(f"{parser.prog}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
