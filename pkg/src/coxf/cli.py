"""Command-line front end.

Subcommands: gen-code, encode, decode, mc-rank, audit, simulate, gd, compare.
Every subcommand is a pure function of (flags, input files, seed): outputs
are canonical JSON / fixed-column CSV with no timestamps, so reruns are byte
identical. COXF_SEED overrides the default --seed.

Exit codes: 0 success, 2 flag validation error, 3 decode infeasible,
4 subset enumeration guard exceeded.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from .analysis import (EnumerationGuardError, lower_bound_audit,
                       probabilistic_threshold_estimate, verify_resists)
from .blocks import DataMatrix, load_matrix, load_vector, partition, save_matrix, save_vector
from .codes import (CodeGenerationError, CodeSpec, CodingMatrix, build_code,
                    encode, regenerate_until_valid)
from .decoder import DecodeError, ReceivedSet, diagonal_decode, hybrid_decode, inverse_decode
from .seeding import rng_from
from .simulator import (CompareConfig, InsufficientResultsError, SchemeSpec,
                        StragglerModel, compare_schemes, run_coded_gd, run_transform)

_DATA_TAG = 0xD47A


def _default_seed() -> int:
    return int(os.environ.get("COXF_SEED", "0"))


def _add_code_flags(p: argparse.ArgumentParser, required: bool = True) -> None:
    g = p.add_argument_group("code spec")
    g.add_argument("--family", choices=("s-diagonal", "one-diagonal", "p-bernoulli", "cross"),
                   required=required)
    g.add_argument("--n", type=int, help="number of data blocks")
    g.add_argument("--m", type=int, help="number of workers (defaults per family)")
    g.add_argument("--s", type=int, help="straggler count (diagonal families)")
    g.add_argument("--p", type=float, help="cell probability (p-bernoulli)")
    g.add_argument("--d1", type=float, help="picks per row (cross)")
    g.add_argument("--d2", type=float, help="picks per column (cross)")
    g.add_argument("--coeff-set-size", type=int, default=None,
                   help="coefficient set {1..S}; default 2^31-1")


def _spec_from_flags(parser: argparse.ArgumentParser, args) -> CodeSpec:
    if args.family is None:
        parser.error("--family is required")
    if args.n is None:
        parser.error("--n is required")
    m = args.m
    if m is None:
        if args.family == "s-diagonal":
            if args.s is None:
                parser.error("s-diagonal needs --s")
            m = args.n + args.s
        elif args.family == "one-diagonal":
            m = args.n + 1
        else:
            parser.error(f"{args.family} needs --m")
    kwargs = dict(family=args.family, n=args.n, m=m, s=args.s, p=args.p,
                  d1=args.d1, d2=args.d2, seed=args.seed)
    if args.coeff_set_size is not None:
        kwargs["coeff_set_size"] = args.coeff_set_size
    try:
        return CodeSpec(**kwargs)
    except ValueError as err:
        parser.error(str(err))


def _parse_stragglers(parser, text: str, base_rate: float, slow_factor: float,
                      seed: int) -> StragglerModel:
    """fixed:1,2  |  bernoulli:0.1  |  delay:0.05  |  none"""
    kw = dict(base_rate=base_rate, slow_factor=slow_factor, seed=seed)
    try:
        if text == "none":
            return StragglerModel.delay(0.0, **kw)
        kind, _, arg = text.partition(":")
        if kind == "fixed":
            return StragglerModel.fixed_set([int(v) for v in arg.split(",") if v], **kw)
        if kind == "bernoulli":
            return StragglerModel.bernoulli(float(arg), **kw)
        if kind == "delay":
            return StragglerModel.delay(float(arg), **kw)
    except ValueError as err:
        parser.error(f"bad --stragglers {text!r}: {err}")
    parser.error(f"bad --stragglers {text!r} (want fixed:ids | bernoulli:q | delay:p | none)")


def _write(path: str | None, text: str) -> None:
    if path is None or path == "-":
        sys.stdout.write(text if text.endswith("\n") else text + "\n")
    else:
        Path(path).write_text(text if text.endswith("\n") else text + "\n", encoding="ascii")


def _load_code(path: str) -> CodingMatrix:
    return CodingMatrix.from_json(Path(path).read_text(encoding="ascii"))


def _synthetic_data(rows: int, cols: int, seed: int) -> tuple[DataMatrix, np.ndarray]:
    rng = rng_from(seed, _DATA_TAG)
    return DataMatrix(rng.standard_normal((rows, cols))), rng.standard_normal(cols)


# -- subcommands ---------------------------------------------------------------


def cmd_gen_code(parser, args) -> int:
    spec = _spec_from_flags(parser, args)
    if args.verify:
        if spec.family != "s-diagonal":
            parser.error("--verify applies to the s-diagonal family only")
        code, trials = regenerate_until_valid(spec, max_trials=args.max_trials)
        print(f"verified: trials_used={trials}", file=sys.stderr)
    else:
        code = build_code(spec)
    _write(args.output, code.to_json())
    return 0


def cmd_encode(parser, args) -> int:
    code = _load_code(args.code)
    a = load_matrix(args.input)
    part = partition(a, code.n)
    assignments = encode(part, code)
    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    ext = ".mtx" if a.is_sparse else ".csv"
    files = []
    for asg in assignments:
        name = f"worker_{asg.worker_id:03d}{ext}"
        save_matrix(outdir / name, asg.coded_block)
        files.append({"worker": asg.worker_id, "file": name,
                      "support": list(asg.support)})
    manifest = {
        "source_rows": part.source_rows,
        "cols": part.cols,
        "block_rows": part.block_rows,
        "blocks": part.block_count,
        "pad_rows": part.pad_rows,
        "workers": files,
    }
    (outdir / "manifest.json").write_text(
        json.dumps(manifest, sort_keys=True, separators=(",", ":")) + "\n", encoding="ascii")
    return 0


def cmd_decode(parser, args) -> int:
    code = _load_code(args.code)
    subset = tuple(int(v) for v in args.subset.split(","))
    rows = np.loadtxt(args.results, delimiter=",", ndmin=2)
    if rows.shape[0] != len(subset):
        parser.error(f"results file has {rows.shape[0]} rows, subset names {len(subset)}")
    received = ReceivedSet(code=code, subset=subset,
                           results=tuple(rows[k] for k in range(rows.shape[0])),
                           pad_rows=args.pad_rows)
    if args.method == "hybrid":
        report = hybrid_decode(received)
    elif args.method == "diagonal":
        report = diagonal_decode(received)
    else:
        report = inverse_decode(received)
    save_vector(args.output, report.output)
    if args.report:
        _write(args.report, report.to_json())
    return 0


def cmd_mc_rank(parser, args) -> int:
    if args.code and args.family:
        parser.error("--code and --family are mutually exclusive")
    if args.code:
        target = _load_code(args.code)
    else:
        target = _spec_from_flags(parser, args)
    report = probabilistic_threshold_estimate(target, args.trials, args.seed, jobs=args.jobs)
    if args.format == "csv":
        _write(args.output, report.CSV_HEADER + "\n" + report.to_csv_row())
    else:
        _write(args.output, report.to_json())
    return 0


def cmd_audit(parser, args) -> int:
    code = _load_code(args.code)
    s = args.s if args.s is not None else code.m - code.n
    ok, witness = verify_resists(code, s)
    if not ok:
        doc = {"resists": False, "s": s, "witness": list(witness)}
        _write(args.output, json.dumps(doc, sort_keys=True, separators=(",", ":")))
        return 3
    record = lower_bound_audit(code, s)
    doc = json.loads(record.to_json())
    doc["resists"] = True
    _write(args.output, json.dumps(doc, sort_keys=True, separators=(",", ":")))
    return 0


def _code_for_sim(parser, args) -> CodingMatrix:
    if args.uncoded:
        n = args.n
        if n is None:
            parser.error("--uncoded needs --n")
        return build_code(CodeSpec(family="s-diagonal", n=n, m=n, s=0,
                                   coeff_set_size=1, seed=args.seed))
    if args.code:
        return _load_code(args.code)
    return build_code(_spec_from_flags(parser, args))


def cmd_simulate(parser, args) -> int:
    code = _code_for_sim(parser, args)
    model = _parse_stragglers(parser, args.stragglers, args.rate, args.slow_factor, args.seed)
    if args.input:
        a = load_matrix(args.input)
        x = load_vector(args.x) if args.x else rng_from(args.seed, _DATA_TAG).standard_normal(a.cols)
    else:
        a, x = _synthetic_data(args.rows, args.cols, args.seed)
    trace = run_transform(a, x, code, model, args.seed, wait_for_all=args.uncoded)
    _write(args.output, trace.to_json())
    if args.csv:
        _write(args.csv, "\n".join(trace.csv_rows()))
    if args.out_vector:
        save_vector(args.out_vector, trace.decode_report.output)
    return 0


def cmd_gd(parser, args) -> int:
    if args.uncoded:
        if args.n is None:
            parser.error("--uncoded needs --n")
        code = build_code(CodeSpec(family="s-diagonal", n=args.n, m=args.n, s=0,
                                   coeff_set_size=1, seed=args.seed))
    elif args.code:
        code = _load_code(args.code)
    else:
        code = build_code(_spec_from_flags(parser, args))
    model = _parse_stragglers(parser, args.stragglers, args.rate, args.slow_factor, args.seed)
    if args.input:
        a = load_matrix(args.input)
        b = load_vector(args.labels)
    else:
        rng = rng_from(args.seed, _DATA_TAG)
        a = DataMatrix(rng.standard_normal((args.rows, args.cols)))
        x_star = rng.standard_normal(args.cols)
        b = a.matvec(x_star)
    trace = run_coded_gd(a, b, code, args.eta, args.iters, model, args.seed,
                         wait_for_all=args.uncoded)
    _write(args.output, trace.to_json())
    if args.csv:
        _write(args.csv, "\n".join(trace.csv_rows()))
    return 0


def _load_config(parser, path: str) -> dict:
    text = Path(path).read_bytes()
    if path.endswith(".toml"):
        try:
            import tomllib
        except ModuleNotFoundError:
            import tomli as tomllib
        return tomllib.loads(text.decode("utf-8"))
    return json.loads(text)


def cmd_compare(parser, args) -> int:
    doc = _load_config(parser, args.config)
    try:
        schemes = []
        for entry in doc["schemes"]:
            if entry.get("family") == "uncoded" or entry.get("uncoded"):
                schemes.append(SchemeSpec(name=entry["name"], code=None))
            else:
                params = {k: entry[k] for k in
                          ("family", "n", "m", "s", "p", "d1", "d2", "coeff_set_size", "seed")
                          if k in entry}
                params.setdefault("n", doc["n"])
                params.setdefault("seed", args.seed)
                if "m" not in params:
                    if params["family"] == "s-diagonal":
                        params["m"] = params["n"] + params["s"]
                    elif params["family"] == "one-diagonal":
                        params["m"] = params["n"] + 1
                schemes.append(SchemeSpec(name=entry["name"], code=CodeSpec(**params)))
        model_doc = doc.get("model", {})
        model = _parse_stragglers(
            parser, model_doc.get("stragglers", "none"),
            model_doc.get("rate", 1e-6), model_doc.get("slow_factor", 10.0), args.seed)
        config = CompareConfig(
            n=doc["n"], rows=doc.get("rows", 8 * doc["n"]), cols=doc.get("cols", 16),
            schemes=tuple(schemes), model=model,
            trials=doc.get("trials", 20), seed=args.seed)
    except (KeyError, TypeError, ValueError) as err:
        parser.error(f"bad config: {err!r}")
    report = compare_schemes(config)
    if args.format == "csv":
        _write(args.output, "\n".join(report.csv_rows()))
    else:
        _write(args.output, report.to_json())
    return 0


# -- wiring --------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="coxf",
        description="Coded distributed linear transforms: construction, decoding, "
                    "verification and virtual-time simulation.",
        epilog="CSV columns are fixed per subcommand; mc-rank: "
               "protocol,family,n,m,trials,seed,full_rank_fraction,"
               "mean_load_per_worker,load_std,sz_misses; compare: "
               "scheme,trial,job_time,retries,rooting_steps,peeling_steps,"
               "decode_scalar_ops; gd: iteration,time,grad_norm_sq.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--seed", type=int, default=_default_seed(),
                       help="master seed (env COXF_SEED overrides the default)")
        p.add_argument("-o", "--output", default="-", help="output path, - for stdout")

    p = sub.add_parser("gen-code", help="construct a coding matrix and write its JSON")
    common(p)
    _add_code_flags(p)
    p.add_argument("--verify", action="store_true",
                   help="redraw until every n-subset is full rank (s-diagonal)")
    p.add_argument("--max-trials", type=int, default=8)
    p.set_defaults(func=cmd_gen_code)

    p = sub.add_parser("encode", help="write per-worker coded blocks and a manifest")
    common(p)
    p.add_argument("--code", required=True, help="coding matrix JSON")
    p.add_argument("--input", required=True, help="matrix file (.mtx/.mm or CSV)")
    p.add_argument("--outdir", required=True)
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("decode", help="recover y from a subset of worker results")
    common(p)
    p.add_argument("--code", required=True)
    p.add_argument("--subset", required=True, help="comma-separated worker ids")
    p.add_argument("--results", required=True,
                   help="CSV, one row per worker in subset order")
    p.add_argument("--method", choices=("hybrid", "diagonal", "inverse"), default="hybrid")
    p.add_argument("--pad-rows", type=int, default=0)
    p.add_argument("--report", help="also write the decode report JSON here")
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("mc-rank", help="Monte Carlo full-rank fraction and load")
    common(p)
    _add_code_flags(p, required=False)
    p.add_argument("--code", help="fixed coding matrix JSON instead of family flags")
    p.add_argument("--trials", type=int, default=1000)
    p.add_argument("--jobs", type=int, default=1, help="parallel trial workers")
    p.add_argument("--format", choices=("json", "csv"), default="json")
    p.set_defaults(func=cmd_mc_rank)

    p = sub.add_parser("audit", help="resistance check plus lower-bound audit")
    common(p)
    p.add_argument("--code", required=True)
    p.add_argument("--s", type=int, help="straggler count; default m - n")
    p.set_defaults(func=cmd_audit)

    p = sub.add_parser("simulate", help="virtual-time coded transform job")
    common(p)
    _add_code_flags(p, required=False)
    p.add_argument("--code", help="coding matrix JSON (instead of family flags)")
    p.add_argument("--uncoded", action="store_true",
                   help="identity code, master waits for every worker")
    p.add_argument("--stragglers", default="none")
    p.add_argument("--slow-factor", type=float, default=10.0)
    p.add_argument("--rate", type=float, default=1e-6, help="virtual seconds per scalar op")
    p.add_argument("--rows", type=int, default=64)
    p.add_argument("--cols", type=int, default=16)
    p.add_argument("--input", help="matrix file instead of synthetic data")
    p.add_argument("--x", help="input vector CSV (with --input)")
    p.add_argument("--csv", help="write a one-row job summary CSV here")
    p.add_argument("--out-vector", help="write the decoded vector CSV here")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("gd", help="virtual-time coded gradient descent")
    common(p)
    _add_code_flags(p, required=False)
    p.add_argument("--code")
    p.add_argument("--uncoded", action="store_true")
    p.add_argument("--stragglers", default="none")
    p.add_argument("--slow-factor", type=float, default=10.0)
    p.add_argument("--rate", type=float, default=1e-6)
    p.add_argument("--rows", type=int, default=256)
    p.add_argument("--cols", type=int, default=32)
    p.add_argument("--input", help="data matrix file")
    p.add_argument("--labels", help="label vector CSV (with --input)")
    p.add_argument("--eta", type=float, default=None, help="step size; default 1/lambda_max")
    p.add_argument("--iters", type=int, default=50)
    p.add_argument("--csv", help="write iteration,time,grad_norm_sq CSV here")
    p.set_defaults(func=cmd_gd)

    p = sub.add_parser("compare", help="run several schemes over the same jobs")
    common(p)
    p.add_argument("--config", required=True, help="JSON or TOML experiment config")
    p.add_argument("--format", choices=("json", "csv"), default="csv")
    p.set_defaults(func=cmd_compare)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(parser, args)
    except (DecodeError, InsufficientResultsError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 3
    except EnumerationGuardError as err:
        print(f"error: {err}", file=sys.stderr)
        return 4
    except CodeGenerationError as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    except (ValueError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
