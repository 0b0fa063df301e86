"""``parafac`` command line: gen, verify, oracle, sweep, report.

Exit codes: 0 success, 2 invalid configuration or input, 3 verification
failure, 4 resource guard.  ``PARAFAC_SEED`` overrides ``--seed``.
"""
from __future__ import annotations

import argparse
import csv
import glob
import io
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .convops import (
    CSV_FIELDS,
    ConvSpec,
    build_orthogonal,
    check_constraints,
    circulant_oracle,
    load_spec,
    rko_project,
    save_spec,
    svcm_project,
    verify_orthogonality,
)
from .errors import InvalidInputError, ParafacError, ResourceError
from .polymat import MatrixSeq

EXIT_OK, EXIT_INVALID, EXIT_VERIFY, EXIT_RESOURCE = 0, 2, 3, 4

GEN_KINDS = ("standard", "dilated", "strided_down", "strided_up", "group")
CONSTRUCTIONS = ("scfac", "svcm", "svcm_masked", "rko")
SWEEP_DILATIONS = (1, 2, 4)
SWEEP_STRIDES = (("strided_down", 2), ("strided_down", 4), ("strided_up", 2), ("strided_up", 4))
SWEEP_GROUPS = (1, 4, 16)


def _seed(args) -> int:
    env = os.environ.get("PARAFAC_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise InvalidInputError(f"PARAFAC_SEED must be an integer, got {env!r}") from None
    return args.seed


def _degrees(text: str) -> tuple[int, int]:
    parts = [p for p in text.replace(":", ",").split(",") if p.strip()]
    try:
        vals = [int(p) for p in parts]
    except ValueError:
        raise InvalidInputError(f"degree must be 'L' or 'Lm,Lp', got {text!r}") from None
    if len(vals) == 1:
        vals = vals * 2
    if len(vals) != 2 or min(vals) < 0:
        raise InvalidInputError(f"degree must be 'L' or 'Lm,Lp' with L >= 0, got {text!r}")
    return vals[0], vals[1]


def _dump(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2)


# -- gen -------------------------------------------------------------------

def _baseline(construction, in_ch, out_ch, groups, degrees, n_freq, rng) -> ConvSpec:
    lo, hi = degrees
    s_g, t_g = in_ch // groups, out_ch // groups
    filters = []
    for _ in range(groups):
        taps = rng.standard_normal((lo + hi + 1, t_g, s_g)) / np.sqrt(s_g * (lo + hi + 1))
        raw = MatrixSeq.from_taps(taps, start=-lo, trim=None)
        if construction == "rko":
            filters.append(rko_project(raw))
        else:
            filters.append(svcm_project(raw, n_freq, construction == "svcm_masked"))
    return ConvSpec("standard", tuple(filters), 1, None, construction)


def cmd_gen(args) -> int:
    kind = "standard" if args.kind == "group" else args.kind
    in_ch = args.in_channels if args.in_channels is not None else args.channels
    if in_ch is None:
        raise InvalidInputError("give --channels or --in")
    degrees = _degrees(args.degree)
    out_ch = check_constraints(kind, in_ch, args.out_channels, args.rate, args.groups)
    rng = np.random.default_rng(_seed(args))
    if args.construction == "scfac":
        spec = build_orthogonal(kind, in_ch, out_ch, args.rate, args.groups, degrees,
                                args.init, rng)
    else:
        if kind != "standard":
            raise InvalidInputError(f"construction {args.construction!r} supports standard/group kinds only")
        spec = _baseline(args.construction, in_ch, out_ch, args.groups, degrees, args.n_freq, rng)
    save_spec(args.output, spec)
    summary = {"output": args.output, "kind": spec.kind, "rate": spec.rate, "groups": spec.groups,
               "in_channels": spec.in_channels, "out_channels": spec.out_channels,
               "construction": spec.construction, "support": [-spec.filters[0].lo, spec.filters[0].hi]}
    print(_dump(summary))
    return EXIT_OK


# -- verify / oracle -------------------------------------------------------

def _load(path) -> ConvSpec:
    if not os.path.isfile(path):
        raise InvalidInputError(f"no such spec file: {path}")
    try:
        return load_spec(path)
    except (KeyError, ValueError, TypeError) as exc:
        raise InvalidInputError(f"malformed spec file {path}: {exc}") from None


def cmd_verify(args) -> int:
    spec = _load(args.spec)
    report = verify_orthogonality(spec, args.n, args.trials, _seed(args), args.dtype,
                                  oracle=args.oracle, tol=args.tol)
    print(report.to_json())
    if args.csv:
        with open(args.csv, "w", encoding="utf-8", newline="") as fh:
            fh.write(report.to_csv())
    return EXIT_OK if report.orthogonal else EXIT_VERIFY


def cmd_oracle(args) -> int:
    spec = _load(args.spec)
    _, residual = circulant_oracle(spec, args.n)
    ok = residual <= args.tol
    print(_dump({"n": args.n, "oracle_residual": residual, "tol": args.tol, "orthogonal": ok}))
    return EXIT_OK if ok else EXIT_VERIFY


# -- sweep -----------------------------------------------------------------

def sweep_cells(dilations=SWEEP_DILATIONS, strides=SWEEP_STRIDES, groups=SWEEP_GROUPS):
    """Default grid: (family, nominal rate, groups)."""
    cells = [("dilated", r, g) for r in dilations for g in groups]
    cells += [(kind, r, g) for kind, r in strides for g in groups]
    return cells


def run_cell(family, nominal, groups, channels, degrees, n, trials, seed, dtype, analog="2d"):
    """Build and verify one sweep cell; infeasible cells return the violation.

    With ``analog='2d'`` a stride ``R`` stands for an ``R x R`` stride on an
    image, which moves ``R**2`` samples per output; the 1D layer then uses
    rate ``R**2`` and carries the matching channel counts.
    """
    rate = nominal ** 2 if analog == "2d" and family != "dilated" else nominal
    cell = {"family": family, "nominal_rate": nominal, "groups": groups, "rate": rate,
            "analog": analog if family != "dilated" else "1d"}
    family_id = ("dilated", "strided_down", "strided_up").index(family)
    rng = np.random.default_rng(np.random.SeedSequence([seed, family_id, nominal, groups]))
    try:
        out_ch = check_constraints(family, channels, None, rate, groups)
    except InvalidInputError as exc:
        cell.update(feasible=False, violation=str(exc))
        return cell
    spec = build_orthogonal(family, channels, out_ch, rate, groups, degrees, "uniform", rng)
    report = verify_orthogonality(spec, n, trials, rng, dtype)
    cell.update(feasible=True, report=report.to_dict())
    return cell


def cmd_sweep(args) -> int:
    os.makedirs(args.out_dir, exist_ok=True)
    degrees = _degrees(args.degree)
    seed = _seed(args)
    cells = sweep_cells()
    if args.n % 16:
        raise InvalidInputError("sweep needs N divisible by 16")

    def task(c):
        return run_cell(c[0], c[1], c[2], args.channels, degrees, args.n, args.trials, seed,
                        args.dtype, args.analog)

    with ThreadPoolExecutor(max_workers=max(args.jobs, 1)) as pool:
        results = list(pool.map(task, cells))
    failed = 0
    for res in results:
        name = f"{res['family']}_R{res['nominal_rate']}_G{res['groups']}_{args.dtype}.json"
        with open(os.path.join(args.out_dir, name), "w", encoding="utf-8") as fh:
            fh.write(_dump(res))
        if res["feasible"] and not res["report"]["orthogonal"]:
            failed += 1
        status = "infeasible: " + res["violation"] if not res["feasible"] else \
            f"mean_dev {res['report']['ratio_dev_mean']:+.3e}"
        print(f"{res['family']:>12} R={res['nominal_rate']} G={res['groups']:>2}  {status}")
    return EXIT_VERIFY if failed else EXIT_OK


# -- report ----------------------------------------------------------------

def _records(paths):
    recs = []
    for path in paths:
        with open(path, encoding="utf-8") as fh:
            d = json.load(fh)
        if "family" in d:
            rep = d.get("report")
            recs.append({"family": d["family"], "R": d["nominal_rate"], "G": d["groups"],
                         "dtype": rep["dtype"] if rep else d.get("dtype", "f64"),
                         "report": rep, "violation": d.get("violation")})
        elif "ratio_dev_mean" in d:
            family = "dilated" if d["kind"] == "standard" else d["kind"]
            recs.append({"family": family, "R": d["rate"], "G": d["groups"], "dtype": d["dtype"],
                         "report": d, "violation": None})
    return recs


_ROW_LABEL = {"dilated": "{R}-dilated", "strided_down": "↓{R}-strided", "strided_up": "↑{R}-strided"}


def _cell_text(rec):
    if rec is None:
        return ""
    if rec["report"] is None:
        return "N/A"
    r = rec["report"]
    return f"{r['ratio_dev_mean']:+.2e} ± {r['ratio_dev_std']:.2e}"


def render_markdown(recs) -> str:
    out = []
    for dtype in sorted({r["dtype"] for r in recs}):
        sub = [r for r in recs if r["dtype"] == dtype]
        out.append(f"## {dtype}\n")
        for title, fams in (("Dilated", ("dilated",)), ("Strided", ("strided_down", "strided_up"))):
            block = [r for r in sub if r["family"] in fams]
            if not block:
                continue
            groups = sorted({r["G"] for r in block})
            rows = sorted({(fams.index(r["family"]), r["R"]) for r in block})
            out.append(f"### {title}\n")
            out.append("| | " + " | ".join(f"G={g}" for g in groups) + " |")
            out.append("|---|" + "---|" * len(groups))
            for fi, rate in rows:
                fam = fams[fi]
                cells = []
                for g in groups:
                    match = [r for r in block if r["family"] == fam and r["R"] == rate and r["G"] == g]
                    cells.append(_cell_text(match[0] if match else None))
                out.append(f"| {_ROW_LABEL[fam].format(R=rate)} | " + " | ".join(cells) + " |")
            out.append("")
        notes = [r for r in sub if r["report"] is None and r["violation"]]
        for r in notes:
            out.append(f"- N/A {_ROW_LABEL[r['family']].format(R=r['R'])}, G={r['G']}: {r['violation']}")
        if notes:
            out.append("")
    return "\n".join(out)


def render_csv(recs) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=CSV_FIELDS, lineterminator="\n")
    writer.writeheader()
    for r in sorted(recs, key=lambda r: (r["dtype"], r["family"], r["R"], r["G"])):
        rep = r["report"]
        if rep is None:
            continue
        writer.writerow({"kind": r["family"], "R": r["R"], "G": r["G"], "dtype": r["dtype"],
                         "mean_dev": repr(rep["ratio_dev_mean"]),
                         "std_dev": repr(rep["ratio_dev_std"]),
                         "spectral_residual": repr(rep["spectral_residual"]),
                         "oracle_residual": "" if rep.get("oracle_residual") is None
                         else repr(rep["oracle_residual"])})
    return buf.getvalue()


def cmd_report(args) -> int:
    paths = []
    for item in args.inputs:
        if os.path.isdir(item):
            paths.extend(sorted(glob.glob(os.path.join(item, "*.json"))))
        elif os.path.isfile(item):
            paths.append(item)
    recs = _records(paths)
    if not recs:
        raise InvalidInputError("no verify outputs found")
    text = render_csv(recs) if args.format == "csv" else render_markdown(recs)
    if args.output:
        with open(args.output, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


# -- entry -----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="parafac", description="Orthogonal convolutions via paraunitary systems")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate a ConvSpec file")
    g.add_argument("--kind", choices=GEN_KINDS, default="standard")
    g.add_argument("--channels", type=int)
    g.add_argument("--in", dest="in_channels", type=int)
    g.add_argument("--out", dest="out_channels", type=int)
    g.add_argument("--rate", type=int, default=1)
    g.add_argument("--groups", type=int, default=1)
    g.add_argument("--degree", default="1", help="L or 'Lm,Lp'")
    g.add_argument("--init", choices=("uniform", "identity", "permutation", "torus"), default="uniform")
    g.add_argument("--construction", choices=CONSTRUCTIONS, default="scfac")
    g.add_argument("--n-freq", type=int, default=16, help="DFT grid for svcm constructions")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("-o", "--output", required=True)
    g.set_defaults(func=cmd_gen)

    v = sub.add_parser("verify", help="norm-ratio statistics on Gaussian inputs")
    v.add_argument("spec")
    v.add_argument("--n", type=int, default=256)
    v.add_argument("--trials", type=int, default=100)
    v.add_argument("--dtype", choices=("f64", "f32"), default="f64")
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--oracle", action="store_true", help="add the dense-operator residual when small enough")
    v.add_argument("--tol", type=float, default=None)
    v.add_argument("--csv")
    v.set_defaults(func=cmd_verify)

    o = sub.add_parser("oracle", help="dense block-circulant residual")
    o.add_argument("spec")
    o.add_argument("--n", type=int, default=8)
    o.add_argument("--tol", type=float, default=1e-10)
    o.set_defaults(func=cmd_oracle)

    s = sub.add_parser("sweep", help="verify the default dilation/stride x groups grid")
    s.add_argument("--out-dir", required=True)
    s.add_argument("--channels", type=int, default=64)
    s.add_argument("--degree", default="1")
    s.add_argument("--n", type=int, default=256)
    s.add_argument("--trials", type=int, default=100)
    s.add_argument("--dtype", choices=("f64", "f32"), default="f64")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--analog", choices=("2d", "1d"), default="2d",
                   help="2d: stride R acts as rate R**2 (image analog); 1d: rate R")
    s.add_argument("--jobs", type=int, default=1)
    s.set_defaults(func=cmd_sweep)

    r = sub.add_parser("report", help="tabulate verify/sweep outputs")
    r.add_argument("inputs", nargs="+")
    r.add_argument("--format", choices=("markdown", "csv"), default="markdown")
    r.add_argument("-o", "--output")
    r.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INVALID if exc.code else EXIT_OK
    try:
        return args.func(args)
    except ResourceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RESOURCE
    except (ParafacError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
