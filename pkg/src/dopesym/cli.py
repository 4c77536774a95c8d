"""Command-line entry point ``dopesym``.

Every run that writes files also writes a JSON run manifest (command,
arguments, seed, version and SHA-256 of each output). ``dopesym replay``
re-runs a manifest into a scratch directory and compares the hashes.

Exit codes: 0 success, 2 invalid input or failed validation, 3 numerical
accuracy failure, 64 usage error.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import os
import shutil
import sys
import tempfile
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .errors import DopeError, NumericalError

EXIT_USAGE = 64
EXIT_VALIDATION = 2
EXIT_NUMERICAL = 3

OUTPUT_FLAGS = ("--out", "--state-out", "--manifest")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def __init__(self, *a, **kw):
        kw.setdefault("allow_abbrev", False)
        super().__init__(*a, **kw)

    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(EXIT_USAGE)


# ---- manifests -------------------------------------------------------------


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(args, argv, outputs, path=None):
    """RunManifest JSON next to the first output (or at ``path``)."""
    outputs = [str(p) for p in outputs if p]
    if not outputs:
        return None
    path = path or outputs[0] + ".manifest.json"
    params = {k: v for k, v in vars(args).items() if k not in ("func",)}
    doc = {
        "command": [args.command] + ([args.action] if getattr(args, "action", None) else []),
        "argv": list(argv),
        "params": params,
        "seed": params.get("seed"),
        "version": __version__,
        "outputs": {p: sha256_file(p) for p in outputs},
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True, default=str)
        fh.write("\n")
    return path


def _emit(args, argv, outputs):
    if args.out or getattr(args, "state_out", None):
        write_manifest(args, argv, outputs, args.manifest)


def _write_text(path, text):
    if path is None:
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)


# ---- shared arguments ------------------------------------------------------


def _add_ensemble_args(p):
    p.add_argument("--family", choices=("uniform", "hahn", "associated_hahn", "halfhex", "custom"),
                   default="hahn")
    p.add_argument("--N", type=int, help="number of nodes (uniform, hahn, associated_hahn)")
    p.add_argument("--P", type=float, default=1.0)
    p.add_argument("--Q", type=float, default=None, help="defaults to P")
    p.add_argument("--k", type=int, required=True, help="particle count (halfhex: number of paths)")
    p.add_argument("--mode", choices=("standard", "wall"), default="standard")
    p.add_argument("--R", type=int, help="halfhex: half-width R")
    p.add_argument("--m", type=int, help="halfhex: even column")
    p.add_argument("--weights", help="custom: CSV with header node,log_weight")


def _add_output(p, required=False):
    p.add_argument("--out", required=required, help="output file (stdout when omitted)")
    p.add_argument("--manifest", help="manifest path (default: <out>.manifest.json)")


def _ensemble(args):
    from .ensembles import (
        Ensemble,
        Mode,
        associated_hahn_ensemble,
        build_equispaced_nodes,
        hahn_ensemble,
        make_ensemble,
        read_weight_csv,
        uniform_weight,
    )
    from .errors import InvalidArgument
    from .halfhex import HexSpec, line_ensemble

    mode = Mode.WALL if args.mode == "wall" else Mode.STANDARD
    fam = args.family
    if fam == "halfhex":
        if args.R is None or args.m is None:
            raise InvalidArgument("halfhex needs --R and --m")
        return line_ensemble(HexSpec(args.k, args.R), args.m)
    if fam == "custom":
        if not args.weights:
            raise InvalidArgument("custom family needs --weights")
        nodes, w = read_weight_csv(args.weights)
        return make_ensemble(nodes, w, args.k, mode)
    if args.N is None:
        raise InvalidArgument(f"{fam} needs --N")
    Q = args.P if args.Q is None else args.Q
    if fam == "uniform":
        nodes = build_equispaced_nodes(args.N)
        return Ensemble(nodes, uniform_weight(nodes), args.k, mode)
    if fam == "hahn":
        return hahn_ensemble(args.N, args.P, Q, args.k, mode)
    return associated_hahn_ensemble(args.N, args.P, Q, args.k, mode)


def _kernel_for(e, self_check=False):
    from .ensembles import Mode
    from .orthopoly import cd_kernel, sym_kernel

    if e.mode is Mode.WALL:
        return sym_kernel(e, self_check=self_check)
    return cd_kernel(e, self_check=self_check)


# ---- commands --------------------------------------------------------------


def cmd_kernel(args, argv):
    e = _ensemble(args)
    km = _kernel_for(e, args.self_check)
    if args.out is None:
        sys.stdout.write(km.to_csv())
        return 0
    side = str(args.out).rsplit(".", 1)[0] + ".json"
    km.write(args.out, side)
    _emit(args, argv, [args.out, side])
    return 0


def cmd_sample(args, argv):
    from .dpp import sample_batch

    km = _kernel_for(_ensemble(args))
    batch = sample_batch(km, args.n, args.seed, jobs=args.jobs)
    _write_text(args.out, batch.to_csv())
    _emit(args, argv, [args.out])
    return 0


def cmd_oracle(args, argv):
    from .dpp import enumerate_oracle

    orc = enumerate_oracle(_ensemble(args), bits=args.bits)
    doc = {
        "nodes": [float(v) for v in orc.nodes],
        "mode": orc.mode.value,
        "log_Z": orc.log_Z,
        "configurations": [[float(orc.nodes[i]) for i in c] for c in orc.configs],
        "probabilities": [float(p) for p in orc.probs],
        "one_point": [float(p) for p in orc.one_point()],
    }
    _write_text(args.out, json.dumps(doc, indent=1) + "\n")
    _emit(args, argv, [args.out])
    return 0


def cmd_equilibrium(args, argv):
    from .ensembles import Ensemble, Mode, build_nodes, extract_potential, read_weight_csv
    from .equilibrium import HahnEquilibrium, build_field, hahn_field, solve_equilibrium

    if args.weights:
        # equispaced nodes are mapped affinely onto cells of total length 1
        nodes, w = read_weight_csv(args.weights)
        x = nodes.values
        d = float(np.median(np.diff(x)))
        a0 = float(x[0]) - d / 2
        scale = len(x) * d
        y = (x - a0) / scale - 0.5
        e = Ensemble(build_nodes(y), w, 1, Mode.STANDARD)
        phi = build_field((y, extract_potential(e)), -0.5, 0.5, 1.0)
    else:
        phi = hahn_field(args.A, args.family).as_field()
    em = solve_equilibrium(phi, c=args.c, gridsize=args.gridsize, tol=args.tol)
    sys.stdout.write(f"{'kind':<10} {'lo':>10} {'hi':>10}\n")
    for r in em.regions:
        sys.stdout.write(f"{r.kind:<10} {r.lo:>10.5f} {r.hi:>10.5f}\n")
    sys.stdout.write(f"l_c = {em.multiplier:.10g}  residual = {em.residual:.3g}  iterations = {em.iterations}\n")
    if not args.weights:
        he = HahnEquilibrium(args.A, args.c, args.family)
        sys.stdout.write(f"closed form: beta = {he.beta:.10g}, outer regions: {he.gap}\n")
    if args.out:
        em.to_json(args.out)
        _emit(args, argv, [args.out])
    return 0


def _s_values(args):
    if args.s is not None:
        return [float(s) for s in args.s]
    lo, hi, step = args.s_range
    n = int(round((hi - lo) / step)) + 1
    return [lo + i * step for i in range(n)]


def cmd_limits(args, argv):
    from .asymptotics import WallFamily, convergence_suite, tracy_widom, wall_cdf

    if args.action == "tw":
        rows = ["s,value,order"]
        for s in _s_values(args):
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                r = tracy_widom(s, args.order)
            rows.append(f"{s!r},{r.value!r},{args.order}")
        _write_text(args.out, "\n".join(rows) + "\n")
    elif args.action == "wall":
        rows = ["s,value"]
        for s in _s_values(args):
            rows.append(f"{s!r},{wall_cdf(s, args.delta0, args.rho0, args.offset)!r}")
        _write_text(args.out, "\n".join(rows) + "\n")
    else:
        fam = WallFamily.with_equilibrium(args.A, args.c, args.family)
        rep = convergence_suite(fam, args.regime, args.N, jobs=args.jobs)
        _write_text(args.out, rep.to_json() + "\n")
        sys.stderr.write(f"{args.regime}: slope {rep.slope:.3f} ({rep.criterion}) -> {'pass' if rep.passed else 'FAIL'}\n")
        if not rep.passed:
            _emit(args, argv, [args.out])
            return EXIT_NUMERICAL
    _emit(args, argv, [args.out])
    return 0


def cmd_halfhex(args, argv):
    from .halfhex import HexSpec, TilingState, arctic_profile, mcmc_tile, render_svg, sample_line

    h = HexSpec(args.k, args.R)
    if args.action == "line":
        batch = sample_line(h, args.m, args.n, args.seed, args.jobs)
        _write_text(args.out, batch.to_csv())
        _emit(args, argv, [args.out])
        return 0
    if args.action == "tile":
        if args.sweeps > 0 and args.seed is None:
            raise _usage("--seed is required when --sweeps > 0")
        start = TilingState.from_json(args.state) if args.state else None
        st = mcmc_tile(h, args.sweeps, 0 if args.seed is None else args.seed, start)
        svg = render_svg(st)
        _write_text(args.out, svg)
        if args.state_out:
            st.to_json(args.state_out)
        _emit(args, argv, [args.out, args.state_out])
        return 0
    prof = arctic_profile(h, args.m, args.n, args.seed, args.jobs)
    _write_text(args.out, prof.to_csv())
    sys.stderr.write(json.dumps(prof.summary()) + "\n")
    _emit(args, argv, [args.out])
    return 0


def cmd_verify(args, argv):
    from .acceptance import run

    results = run(args.suite, echo=print)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            json.dump([r.to_dict() for r in results], fh, indent=2)
            fh.write("\n")
    return 0 if all(r.passed for r in results) else EXIT_NUMERICAL


def _rewrite_argv(argv, mapping):
    out = list(argv)
    for i, tok in enumerate(out[:-1]):
        if tok in OUTPUT_FLAGS and out[i + 1] in mapping:
            out[i + 1] = mapping[out[i + 1]]
    return out


def cmd_replay(args, argv):
    with open(args.manifest, encoding="utf-8") as fh:
        doc = json.load(fh)
    tmp = tempfile.mkdtemp(prefix="dopesym-replay-")
    try:
        # outputs keep their file names so derived files (kernel sidecars) line up
        mapping = {p: os.path.join(tmp, Path(p).name) for p in doc["outputs"]}
        new_argv = _rewrite_argv(doc["argv"], mapping)
        replay_manifest = os.path.join(tmp, "replay.manifest.json.tmp")
        if "--manifest" in new_argv:
            new_argv[new_argv.index("--manifest") + 1] = replay_manifest
        else:
            new_argv += ["--manifest", replay_manifest]
        code = main(new_argv)
        if code != 0:
            return code
        bad = []
        for p, digest in doc["outputs"].items():
            q = mapping[p]
            if not os.path.exists(q) or sha256_file(q) != digest:
                bad.append(p)
            print(f"{'MISMATCH' if p in bad else 'ok':<8} {p}")
        return 0 if not bad else EXIT_VALIDATION
    finally:
        shutil.rmtree(tmp, ignore_errors=True)


def _usage(msg):
    return UsageError(msg)


# ---- parser ----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="dopesym", description="Discrete orthogonal polynomial ensembles with a wall.")
    p.add_argument("--version", action="version", version=f"dopesym {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    k = sub.add_parser("kernel", help="build and export a correlation kernel")
    _add_ensemble_args(k)
    k.add_argument("--self-check", action="store_true", help="verify against the alternative construction")
    _add_output(k)
    k.set_defaults(func=cmd_kernel)

    s = sub.add_parser("sample", help="exact DPP sample batch")
    _add_ensemble_args(s)
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--jobs", type=int, default=1)
    _add_output(s)
    s.set_defaults(func=cmd_sample)

    o = sub.add_parser("oracle", help="exact law by enumeration")
    _add_ensemble_args(o)
    o.add_argument("--bits", type=int, default=256)
    _add_output(o)
    o.set_defaults(func=cmd_oracle)

    e = sub.add_parser("equilibrium", help="constrained equilibrium measure")
    e.add_argument("--family", choices=("hahn", "associated_hahn"), default="hahn")
    e.add_argument("--A", type=float, default=1.0)
    e.add_argument("--c", type=float, required=True)
    e.add_argument("--weights", help="solve for the field extracted from a weight CSV instead")
    e.add_argument("--gridsize", type=int, default=512)
    e.add_argument("--tol", type=float, default=1e-8)
    _add_output(e)
    e.set_defaults(func=cmd_equilibrium)

    lim = sub.add_parser("limits", help="limit kernels, Tracy-Widom, wall law, convergence suites")
    lsub = lim.add_subparsers(dest="action", required=True, parser_class=_Parser)
    for name in ("tw", "wall"):
        q = lsub.add_parser(name)
        g = q.add_mutually_exclusive_group(required=True)
        g.add_argument("--s", type=float, nargs="+")
        g.add_argument("--s-range", type=float, nargs=3, metavar=("LO", "HI", "STEP"))
        if name == "tw":
            q.add_argument("--order", type=int, default=60)
        else:
            q.add_argument("--delta0", type=float, required=True)
            q.add_argument("--rho0", type=float, default=1.0)
            q.add_argument("--offset", type=float, default=0.5)
        _add_output(q)
        q.set_defaults(func=cmd_limits)
    q = lsub.add_parser("suite")
    q.add_argument("--family", choices=("hahn", "associated_hahn"), default="hahn")
    q.add_argument("--A", type=float, default=1.0)
    q.add_argument("--c", type=float, default=0.5)
    q.add_argument("--regime", required=True,
                   choices=("band", "wall", "gap_void", "gap_saturated", "edge", "cross_term"))
    q.add_argument("--N", type=int, nargs="+", default=[50, 100, 200, 400])
    q.add_argument("--jobs", type=int, default=1)
    _add_output(q)
    q.set_defaults(func=cmd_limits)

    hh = sub.add_parser("halfhex", help="half-hexagon tilings")
    hsub = hh.add_subparsers(dest="action", required=True, parser_class=_Parser)
    for name in ("line", "profile"):
        q = hsub.add_parser(name)
        q.add_argument("--k", type=int, required=True)
        q.add_argument("--R", type=int, required=True)
        q.add_argument("--m", type=int, required=True)
        q.add_argument("--n", type=int, required=True)
        q.add_argument("--seed", type=int, required=True)
        q.add_argument("--jobs", type=int, default=1)
        _add_output(q)
        q.set_defaults(func=cmd_halfhex)
    q = hsub.add_parser("tile")
    q.add_argument("--k", type=int, required=True)
    q.add_argument("--R", type=int, required=True)
    q.add_argument("--sweeps", type=int, required=True)
    q.add_argument("--seed", type=int, help="required when --sweeps > 0")
    q.add_argument("--state", help="start from this tiling JSON instead of the minimal state")
    q.add_argument("--state-out", help="write the final tiling as JSON")
    _add_output(q)
    q.set_defaults(func=cmd_halfhex)

    v = sub.add_parser("verify", help="run acceptance suites")
    v.add_argument("--suite", default="fast",
                   choices=("oracle", "kernel", "anchors", "equilibrium", "band", "cross", "gap", "edge",
                            "wall", "arctic", "mcmc", "fast", "all"))
    v.add_argument("--out", help="JSON report")
    v.set_defaults(func=cmd_verify, manifest=None)

    r = sub.add_parser("replay", help="re-run a manifest and compare output hashes")
    r.add_argument("--manifest", required=True)
    r.set_defaults(func=cmd_replay, out=None)
    return p


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else 0
    if not hasattr(args, "action"):
        args.action = None
    try:
        return int(args.func(args, argv))
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        sys.stderr.write(f"dopesym: error: {exc}\n")
        return EXIT_USAGE
    except NumericalError as exc:
        sys.stderr.write(f"dopesym: numerical failure: {exc}\n")
        return EXIT_NUMERICAL
    except DopeError as exc:
        sys.stderr.write(f"dopesym: {type(exc).__name__}: {exc}\n")
        return EXIT_VALIDATION
    except OSError as exc:
        sys.stderr.write(f"dopesym: I/O error: {exc}\n")
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
