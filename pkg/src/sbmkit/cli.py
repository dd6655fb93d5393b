"""Command-line front door: specs in, CSV/JSON artifacts out.

Every run writes a ``manifest.json`` (command, parameters, seed, versions,
timings); timestamps live only there, so identical manifests reproduce
byte-identical artifact payloads.  Randomized commands either take an
explicit ``--seed`` or generate one and print it.  On failure the command
prints a machine-readable error JSON and exits nonzero without leaving
partial outputs behind.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .errors import ToolkitError
from .experiments import (
    figure_jratio_data,
    verify_bernoulli_even,
    verify_diagram_prop,
    verify_integral_lemma,
    verify_intermediate_jump,
    verify_levy_system,
    verify_preferred_side,
    Halfspace,
)
from .kernel import BoxRegion, KernelEvaluator
from .measure import SubordinatorSpec, spec_from_json, spec_to_json, validate
from .recipe import CATALOG_NAMES, RecipeReport, catalog, check_recipe
from .sim import Ball, RngStream, estimate_escape_probability


def _float_list(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v.strip()]


def _parse_n_range(text: str) -> list[int]:
    if ".." in text:
        a, b = text.split("..")
        return list(range(int(a), int(b) + 1))
    return [int(v) for v in text.split(",")]


class _Artifacts:
    """Buffers outputs and flushes them only after the command succeeds."""

    def __init__(self, outdir: Path):
        self.outdir = outdir
        self.pending: list[tuple[str, str]] = []

    def add_json(self, name: str, payload) -> None:
        self.pending.append((name, json.dumps(payload, indent=2, sort_keys=True) + "\n"))

    def add_text(self, name: str, text: str) -> None:
        self.pending.append((name, text))

    def flush(self) -> list[str]:
        self.outdir.mkdir(parents=True, exist_ok=True)
        written = []
        for name, text in self.pending:
            path = self.outdir / name
            tmp = path.with_suffix(path.suffix + ".tmp")
            tmp.write_text(text)
            os.replace(tmp, path)
            written.append(str(path))
        return written


def _resolve_spec(args, default_unit_atom: bool = False) -> SubordinatorSpec:
    if getattr(args, "example", None):
        return catalog(args.example).spec
    if getattr(args, "spec", None):
        return spec_from_json(json.loads(Path(args.spec).read_text()))
    if default_unit_atom:
        from .measure import AtomicSum

        return SubordinatorSpec(0.0, AtomicSum((1.0,), (1.0,)))
    raise ToolkitError("provide --example or --spec")


def _resolve_seed(args) -> int:
    if args.seed is not None:
        return args.seed
    seed = int(np.random.SeedSequence().entropy % (2 ** 63))
    print(f"generated seed: {seed}")
    return seed


def _csv_text(columns, rows) -> str:
    def cell(v):
        if isinstance(v, float):
            return repr(v)
        if isinstance(v, bool):
            return str(int(v))
        return str(v)

    lines = [",".join(columns)]
    lines.extend(",".join(cell(row[c]) for c in columns) for row in rows)
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# subcommands


def _cmd_validate(args, art: _Artifacts) -> dict:
    doc = json.loads(Path(args.specfile).read_text())
    spec = spec_from_json(doc)
    report = validate(spec)
    payload = {"valid": not report, "violations": report}
    try:
        payload["normalized_spec"] = spec_to_json(spec)
        art.add_json("spec.normalized.json", payload["normalized_spec"])
    except ToolkitError:
        payload["normalized_spec"] = None
    art.add_json("validate.json", payload)
    print(json.dumps(payload["violations"] or "valid"))
    return {"specfile": args.specfile}


def _cmd_kernel(args, art: _Artifacts) -> dict:
    spec = _resolve_spec(args)
    ev = KernelEvaluator.for_spec(spec, args.d)
    if args.r:
        rs = _float_list(args.r)
    else:
        lo, hi, count = args.r_grid.split(":")
        rs = list(np.geomspace(float(lo), float(hi), int(count)))
    rows = []
    for r in rs:
        kr = ev.ratio(r, args.c)
        rows.append({
            "r": float(r),
            "j": math.exp(kr.log_numerator) if kr.log_numerator > -745 else 0.0,
            "log_j": kr.log_numerator,
            "ratio": kr.value,
            "log_ratio": kr.log_value,
        })
    art.add_text("kernel.csv", _csv_text(("r", "j", "log_j", "ratio", "log_ratio"), rows))
    print(f"kernel evaluated at {len(rows)} radii (d={args.d}, c={args.c})")
    return {"example": args.example, "spec": args.spec, "d": args.d, "c": args.c,
            "r": [row["r"] for row in rows]}


def _cmd_recipe(args, art: _Artifacts) -> dict:
    ex = catalog(args.example)
    d = args.d if args.d is not None else ex.default_dimension
    ns = _parse_n_range(args.n)
    run = check_recipe(ex.recipe_input(d), ns, separation_threshold=args.threshold)
    rows = [r.as_row() for r in run.reports]
    art.add_text("recipe.csv", _csv_text(RecipeReport.CSV_COLUMNS, rows))
    art.add_json("recipe.json", {
        "example": args.example, "dimension": d, "rows": rows,
        "tail_moment_all_ok": run.tail_moment_all_ok,
        "ratio_large_increasing": run.ratio_large_increasing,
        "ratio_small_increasing": run.ratio_small_increasing,
        "separation_factor": run.separation_factor,
        "separation_ok": run.separation_ok,
        "separation_threshold": run.separation_threshold,
    })
    print(f"recipe rows: {len(rows)}; tail-moment flags all ok: {run.tail_moment_all_ok}")
    return {"example": args.example, "d": d, "n": ns, "threshold": args.threshold}


def _cmd_escape(args, art: _Artifacts) -> dict:
    seed = _resolve_seed(args)
    est = estimate_escape_probability(
        args.example, args.n, args.paths, RngStream(seed),
        alpha=args.alpha, dimension=args.d,
    )
    payload = {"mean": est.mean, "stderr": est.stderr, "n": est.count,
               "censored": est.censored, "seed": seed}
    art.add_json("escape.json", payload)
    print(json.dumps(payload))
    return {"example": args.example, "n": args.n, "alpha": args.alpha,
            "d": args.d, "paths": args.paths, "seed": seed}


def _cmd_verify(args, art: _Artifacts) -> dict:
    params: dict = {"lemma": args.lemma}
    seed = None
    if args.lemma == "bernoulli":
        result = verify_bernoulli_even(_float_list(args.weights))
        params["weights"] = args.weights
    elif args.lemma == "integral":
        result = verify_integral_lemma(tuple(_float_list(args.r)))
        params["r"] = args.r
    elif args.lemma == "levy-system":
        seed = _resolve_seed(args)
        spec = _resolve_spec(args, default_unit_atom=True)
        a, b = _float_list(args.domain)
        u1, u2 = _float_list(args.target)
        result = verify_levy_system(
            spec, 1, BoxRegion((a,), (b,)), BoxRegion((u1,), (u2,)),
            np.asarray([args.x]), args.paths, RngStream(seed),
        )
        params.update(domain=args.domain, target=args.target, x=args.x,
                      paths=args.paths)
    elif args.lemma == "intermediate-jump":
        seed = _resolve_seed(args)
        spec = _resolve_spec(args, default_unit_atom=True)
        e1 = Ball((0.0,), args.r1 / 2.0)
        e2 = BoxRegion((args.r1 * 1.5,), (args.r2 / 2.0,))
        result = verify_intermediate_jump(
            spec, 1, e1, e2, np.zeros(1), args.r1, args.r2,
            args.paths, RngStream(seed),
        )
        params.update(r1=args.r1, r2=args.r2, paths=args.paths)
    elif args.lemma == "preferred-side":
        seed = _resolve_seed(args)
        spec = _resolve_spec(args, default_unit_atom=True)
        result = verify_preferred_side(
            spec, 1, Halfspace((1.0,), 0.0), np.asarray([args.v]), args.t,
            args.paths, RngStream(seed),
        )
        params.update(v=args.v, t=args.t, paths=args.paths)
    elif args.lemma == "diagram":
        seed = _resolve_seed(args)
        result = verify_diagram_prop(
            args.example, args.n, args.paths, RngStream(seed),
            alpha=args.alpha, c=args.c, grid=args.grid,
        )
        params.update(example=args.example, n=args.n, alpha=args.alpha,
                      c=args.c, grid=args.grid, paths=args.paths)
    else:
        raise ToolkitError(f"unknown lemma {args.lemma!r}")
    art.add_json("verify.json", result.as_json())
    print(f"{result.name}: {'PASS' if result.passed else 'FAIL'} "
          f"(lhs={result.lhs:.6g}, rhs={result.rhs:.6g}, tol={result.tolerance:.3g})")
    if seed is not None:
        params["seed"] = seed
    return params


def _cmd_figure(args, art: _Artifacts) -> dict:
    table = figure_jratio_data(args.example, points_per_band=args.points_per_band,
                               m_max=args.m_max, c=args.c)
    rows = [{
        "r": row.r, "j_r": row.j_r, "j_half_r": row.j_half_r,
        "ratio": row.ratio, "log_ratio": row.log_ratio,
        "is_marker": row.is_marker, "m": row.m,
    } for row in table.rows]
    art.add_text(f"figure_{args.example}.csv", _csv_text(
        ("r", "j_r", "j_half_r", "ratio", "log_ratio", "is_marker", "m"), rows))
    print(f"figure data: {len(rows)} rows, "
          f"{sum(r['is_marker'] for r in rows)} markers")
    return {"example": args.example, "points_per_band": args.points_per_band,
            "m_max": args.m_max, "c": args.c}


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sbmkit", description=__doc__)
    p.add_argument("--out", default=None,
                   help="output directory (default: $SBMKIT_OUT or ./sbmkit-out)")
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("validate", help="validate a JSON subordinator spec")
    sp.add_argument("specfile")
    sp.set_defaults(func=_cmd_validate)

    sp = sub.add_parser("kernel", help="evaluate the jump kernel on radii")
    sp.add_argument("--example", choices=CATALOG_NAMES)
    sp.add_argument("--spec")
    sp.add_argument("--d", type=int, default=1)
    sp.add_argument("--r", help="comma-separated radii")
    sp.add_argument("--r-grid", help="LO:HI:COUNT geometric grid")
    sp.add_argument("--c", type=float, default=0.5)
    sp.set_defaults(func=_cmd_kernel)

    sp = sub.add_parser("recipe", help="run the criteria engine on a catalog example")
    sp.add_argument("--example", required=True, choices=CATALOG_NAMES)
    sp.add_argument("--n", required=True, help="index range, e.g. 1..4")
    sp.add_argument("--d", type=int, default=None)
    sp.add_argument("--threshold", type=float, default=10.0)
    sp.set_defaults(func=_cmd_recipe)

    sp = sub.add_parser("escape", help="escape-probability estimate")
    sp.add_argument("--example", required=True, choices=CATALOG_NAMES)
    sp.add_argument("--n", type=int, required=True)
    sp.add_argument("--alpha", type=float, default=1.0 / 20.0)
    sp.add_argument("--d", type=int, default=None)
    sp.add_argument("--paths", type=int, default=100_000)
    sp.add_argument("--seed", type=int, default=None)
    sp.set_defaults(func=_cmd_escape)

    sp = sub.add_parser("verify", help="run a named verification")
    sp.add_argument("lemma", choices=("bernoulli", "integral", "levy-system",
                                      "intermediate-jump", "preferred-side",
                                      "diagram"))
    sp.add_argument("--weights", default="0.3,0.2")
    sp.add_argument("--r", default="0,0.5,1,2")
    sp.add_argument("--example", default=None, choices=CATALOG_NAMES)
    sp.add_argument("--spec", default=None)
    sp.add_argument("--domain", default="-1,1")
    sp.add_argument("--target", default="2,3")
    sp.add_argument("--x", type=float, default=0.0)
    sp.add_argument("--v", type=float, default=1.0)
    sp.add_argument("--t", type=float, default=1.0)
    sp.add_argument("--r1", type=float, default=1.0)
    sp.add_argument("--r2", type=float, default=40.0)
    sp.add_argument("--n", type=int, default=2)
    sp.add_argument("--alpha", type=float, default=1.0 / 20.0)
    sp.add_argument("--c", type=float, default=0.5)
    sp.add_argument("--grid", type=int, default=9)
    sp.add_argument("--paths", type=int, default=100_000)
    sp.add_argument("--seed", type=int, default=None)
    sp.set_defaults(func=_cmd_verify)

    sp = sub.add_parser("figure", help="emit kernel-ratio figure data as CSV")
    sp.add_argument("--example", required=True,
                    choices=("large-scale-dirac", "continuous-expmix"))
    sp.add_argument("--points-per-band", type=int, default=48)
    sp.add_argument("--m-max", type=int, default=4)
    sp.add_argument("--c", type=float, default=0.5)
    sp.set_defaults(func=_cmd_figure)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    outdir = Path(args.out or os.environ.get("SBMKIT_OUT", "sbmkit-out"))
    art = _Artifacts(outdir)
    started = time.time()
    try:
        params = args.func(args, art)
    except (ToolkitError, ValueError, OSError, json.JSONDecodeError) as exc:
        print(json.dumps({"error": {"type": type(exc).__name__, "message": str(exc)}}))
        return 1
    art.add_json("manifest.json", {
        "command": args.command,
        "argv": sys.argv[1:] if argv is None else list(argv),
        "parameters": params,
        "versions": {
            "sbmkit": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "python": sys.version.split()[0],
        },
        "started_unix": started,
        "duration_s": time.time() - started,
    })
    for path in art.flush():
        print(f"wrote {path}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
