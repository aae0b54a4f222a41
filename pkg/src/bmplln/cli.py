"""Command-line entry point.

Every run writes ``manifest.json`` (all resolved knobs) plus its reports
into ``--out``.  Exit status: 0 when every enabled check passes, 1 when a
check fails, 2 on any error, with an ``error.json`` record.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from . import simulator as sim
from . import verify
from ._backend import DEFAULT as KERNEL
from .combinatorics import verify_lemma
from .errors import BmpError
from .model import load_model, mean_generator, state_index, to_vector
from .spectral import compute_eigendata

EXIT_OK, EXIT_FAIL, EXIT_ERROR = 0, 1, 2


@dataclass
class RunConfig:
    subcommand: str
    model: str | None
    seed: int
    out: str
    knobs: dict = field(default_factory=dict)

    def manifest(self) -> dict:
        doc = asdict(self)
        doc["version"] = __version__
        doc["kernel"] = KERNEL
        return doc


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


def write_json(path: Path, doc) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_clean(doc), indent=2, sort_keys=True) + "\n")


def write_csv(path: Path, header, rows) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([repr(v) if isinstance(v, float) else v for v in row])
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(buf.getvalue())


def _floats(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v.strip()]


def _function(args, model):
    if args.f is None:
        return np.ones(model.n)
    return to_vector(args.f, model.n)


# subcommand bodies: (args, model, out) -> report dict with "pass"


def cmd_spectral(args, model, out: Path) -> dict:
    rep = verify.spectral_report(model, args.tmax, args.points)
    write_json(out / "spectral.json", rep)
    return rep


def cmd_moments(args, model, out: Path) -> dict:
    rep = verify.moments_report(model, args.kmax)
    write_json(out / "moments.json", rep)
    return rep


def cmd_simulate(args, model, out: Path) -> dict:
    sd = compute_eigendata(mean_generator(model))
    x0 = state_index(model, args.x0)
    f = _function(args, model)
    res = sim.mc_moment(model, sd, x0, f, args.k, args.T, args.reps, args.seed)
    rep = {**res.to_dict(), "x0": x0, "f": f.tolist(), "lambda": sd.lam, "pass": True}
    write_json(out / "simulate.json", rep)
    if args.per_rep_csv:
        batch = sim.sample_replicates(model, x0, args.T, args.reps, args.seed)
        scale = math.exp(-sd.lam * args.T)
        rows = zip(range(batch.reps), (batch.counts @ f).tolist(),
                   (scale * (batch.counts @ f)).tolist(), (batch.integrals @ f).tolist())
        write_csv(out / "replicates.csv", ["rep", "X_T_f", "scaled_X_T_f", "integral_f"], rows)
    return rep


def cmd_verify_lemma(args, model, out: Path) -> dict:
    report = verify_lemma(args.nmax, args.kmax, args.kcheck)
    (out / "lemma.csv").parent.mkdir(parents=True, exist_ok=True)
    (out / "lemma.csv").write_text(report.to_csv())
    rep = report.summary()
    write_json(out / "lemma.json", rep)
    return rep


def cmd_verify_delta(args, model, out: Path) -> dict:
    f = None if args.f is None else to_vector(args.f, model.n)
    rep = verify.delta_report(model, args.l, args.tmax, args.points, f, args.seed)
    write_csv(out / "delta.csv", ["t", "delta"], rep["curve"])
    write_json(out / "delta.json", rep)
    return rep


def cmd_verify_lln(args, model, out: Path) -> dict:
    rep = verify.lln_report(model, state_index(model, args.x0), _function(args, model),
                            _floats(args.T), args.reps, args.seed)
    write_json(out / "lln.json", rep)
    return rep


def cmd_verify_corollary(args, model, out: Path) -> dict:
    rep = verify.running_integral_report(model, state_index(model, args.x0), _function(args, model),
                                  args.T, args.reps, args.seed)
    write_json(out / "corollary.json", rep)
    return rep


def cmd_verify_laplace(args, model, out: Path) -> dict:
    rep = verify.laplace_report(model, state_index(model, args.x0), _function(args, model),
                                args.T, args.reps, args.seed)
    write_json(out / "laplace.json", rep)
    return rep


FULL_CHECK = {
    "spectral": dict(tmax=10.0, points=11),
    "moments": dict(kmax=10),
    "verify-lemma": dict(nmax=8, kmax=20, kcheck=15),
    "verify-lln": dict(x0="0", f=None, T="2,8", reps=10_000),
    "verify-delta": dict(l=2, tmax=10.0, points=11, f=None),
    "verify-corollary": dict(x0="0", f=None, T=8.0, reps=10_000),
    "verify-laplace": dict(x0="0", f=None, T=8.0, reps=10_000),
}


def cmd_full_check(args, model, out: Path) -> dict:
    results = {}
    for name, knobs in FULL_CHECK.items():
        sub = argparse.Namespace(**{**knobs, "seed": args.seed})
        rep = COMMANDS[name](sub, model, out / name)
        results[name] = bool(rep["pass"])
        print(f"  {name:<17} {'PASS' if rep['pass'] else 'FAIL'}")
    rep = {"checks": results, "pass": all(results.values())}
    write_json(out / "summary.json", rep)
    return rep


COMMANDS = {
    "spectral": cmd_spectral,
    "moments": cmd_moments,
    "simulate": cmd_simulate,
    "verify-lemma": cmd_verify_lemma,
    "verify-delta": cmd_verify_delta,
    "verify-lln": cmd_verify_lln,
    "verify-corollary": cmd_verify_corollary,
    "verify-laplace": cmd_verify_laplace,
    "paper-check": cmd_full_check,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bmplln", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    subs = parser.add_subparsers(dest="subcommand", required=True)

    def add(name, help, model=True):
        p = subs.add_parser(name, help=help)
        if model:
            p.add_argument("--model", required=True, help="model JSON file")
        p.add_argument("--seed", type=int, default=42)
        p.add_argument("--out", default=f"bmplln-out/{name}", help="report directory")
        return p

    def mc(p, T, horizon_type=float):
        p.add_argument("--x0", default="0", help="start state, label or index")
        p.add_argument("--f", default=None, help='test function, e.g. "1,0" (default all ones)')
        p.add_argument("--T", type=horizon_type, default=T)
        p.add_argument("--reps", type=int, default=10_000)

    p = add("spectral", "leading eigendata and uniform-convergence gap")
    p.add_argument("--tmax", type=float, default=10.0)
    p.add_argument("--points", type=int, default=11)

    p = add("moments", "limit-moment table, moment bound and Carleman report")
    p.add_argument("--kmax", type=int, default=10)

    p = add("simulate", "Monte Carlo moment of exp(-lambda T) X_T[f]")
    mc(p, 4.0)
    p.add_argument("--k", type=int, default=1, help="moment order")
    p.add_argument("--per-rep-csv", action="store_true", help="also write replicates.csv")

    p = add("verify-lemma", "brute-force inverse-multinomial bound", model=False)
    p.add_argument("--nmax", type=int, default=8)
    p.add_argument("--kmax", type=int, default=20)
    p.add_argument("--kcheck", type=int, default=15)

    p = add("verify-delta", "finite-time moment convergence curve")
    p.add_argument("--l", type=int, default=2)
    p.add_argument("--tmax", type=float, default=10.0)
    p.add_argument("--points", type=int, default=11)
    p.add_argument("--f", default=None, help="single test function (default: probe family)")

    p = add("verify-lln", "martingale, moments and L2 residual by simulation")
    mc(p, "2,8", horizon_type=str)

    p = add("verify-corollary", "running-integral limit constant")
    mc(p, 8.0)

    p = add("verify-laplace", "Laplace functional gap")
    mc(p, 8.0)

    add("paper-check", "run every check with default knobs")
    return parser


def run(config: RunConfig, args) -> int:
    out = Path(config.out)
    out.mkdir(parents=True, exist_ok=True)
    write_json(out / "manifest.json", config.manifest())
    try:
        model = load_model(config.model) if config.model is not None else None
        report = COMMANDS[config.subcommand](args, model, out)
    except (BmpError, OSError, ValueError) as exc:
        kind = "io" if isinstance(exc, OSError) else getattr(exc, "kind", "value")
        record = {"kind": kind, "error": type(exc).__name__, "message": str(exc)}
        for attr in ("state", "field", "safe_horizon"):
            if getattr(exc, attr, None) is not None:
                record[attr] = getattr(exc, attr)
        write_json(out / "error.json", record)
        print(json.dumps(record, sort_keys=True), file=sys.stderr)
        return EXIT_ERROR
    status = "PASS" if report["pass"] else "FAIL"
    print(f"{config.subcommand}: {status} (reports in {out})")
    return EXIT_OK if report["pass"] else EXIT_FAIL


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    knobs = {k: v for k, v in vars(args).items() if k not in ("subcommand", "model", "seed", "out")}
    config = RunConfig(args.subcommand, getattr(args, "model", None), args.seed, args.out, knobs)
    return run(config, args)


if __name__ == "__main__":
    sys.exit(main())
