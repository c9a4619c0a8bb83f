"""Command-line front end.

Subcommands: run, reproduce, check-graph, design-gains, batch. The CLI is a
thin shell over the library; exit codes follow a CI-friendly contract:
0 = pass, 1 = a checked property failed, 2 = usage or input error.
AOI_SEED overrides the scenario seed for run/batch.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from .errors import AoiObserverError
from .gains import design_gain_set, save_gain_set
from .graphs import check_conditions, is_jointly_strongly_r_robust, load_sequence
from .lti import decompose, load_system
from .reproductions import REPRODUCTIONS
from .scenario import load_scenario
from .simulator import assert_online_invariants, run, summarize, write_trace_csv


def _seed_override() -> int | None:
    raw = os.environ.get("AOI_SEED")
    if raw is None:
        return None
    try:
        seed = int(raw)
    except ValueError as exc:
        raise AoiObserverError(f"AOI_SEED must be an integer, got {raw!r}") from exc
    if not (0 <= seed < 2**64):
        raise AoiObserverError("AOI_SEED must fit in 64 unsigned bits")
    return seed


def _execute_scenario(path: Path, outdir: Path, seed: int | None, horizon: int | None) -> dict:
    scenario = load_scenario(path, seed_override=seed)
    if horizon is not None:
        from dataclasses import replace

        scenario = replace(scenario, horizon=horizon)
    trace = run(scenario)
    violations = assert_online_invariants(trace, scenario)
    outdir.mkdir(parents=True, exist_ok=True)
    stem = path.stem
    write_trace_csv(trace, outdir / f"{stem}.csv")
    summary = summarize(trace, violations)
    with open(outdir / f"{stem}.json", "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
    return summary


def cmd_run(args) -> int:
    summary = _execute_scenario(
        Path(args.scenario), Path(args.out), _seed_override(), args.horizon
    )
    print(
        f"{summary['name']}: final max error {summary['final_max_error']:.3e}, "
        f"{len(summary['violations'])} violation(s)"
    )
    for v in summary["violations"][:20]:
        print(f"  violation: {v}")
    return 0 if not summary["violations"] else 1


def cmd_reproduce(args) -> int:
    fn = REPRODUCTIONS.get(args.id)
    if fn is None:
        print(
            f"unknown reproduction {args.id!r}; choose from "
            f"{', '.join(sorted(REPRODUCTIONS))}",
            file=sys.stderr,
        )
        return 2
    results = fn()
    all_ok = True
    for res in results:
        status = "PASS" if res.passed else "FAIL"
        all_ok = all_ok and res.passed
        print(f"[{status}] {res.criterion}: {res.detail}")
    return 0 if all_ok else 1


def cmd_check_graph(args) -> int:
    seq = load_sequence(args.schedule)
    report = check_conditions(seq)
    print(f"interval monotonicity (C1): {'ok' if report.c1_monotone else 'FAIL'}")
    print(
        f"growth cap (C2): {'ok' if report.c2_ok else 'FAIL'} "
        f"(delta_hat = {report.delta_hat:.4f})"
    )
    if report.c3_ok:
        print("per-interval strong connectivity (C3): ok")
    else:
        print(
            "per-interval strong connectivity (C3): FAIL "
            f"(first failing interval {report.first_failing_interval})"
        )
    ok = report.all_ok
    if args.robust is not None:
        r, T = args.robust
        sources = set(args.sources or [])
        if not sources:
            print("--robust requires --sources", file=sys.stderr)
            return 2
        rep = is_jointly_strongly_r_robust(seq, sources, r, T)
        if rep.ok:
            print(f"joint strong {r}-robustness over windows of {T}: ok")
        else:
            print(
                f"joint strong {r}-robustness over windows of {T}: FAIL "
                f"(window {rep.failing_window})"
            )
        ok = ok and rep.ok
    return 0 if ok else 1


def cmd_design_gains(args) -> int:
    system = load_system(args.system)
    dec = decompose(system)
    mode = "nilpotent" if args.nilpotent else "rate"
    gains = design_gain_set(
        dec, mode=mode, rho=args.rho, delta=args.delta, seed=args.seed
    )
    out = Path(args.out)
    save_gain_set(gains, dec, out)
    dims = ", ".join(str(d) for d in dec.block_dims)
    print(f"sub-state dimensions: [{dims}]")
    print(f"wrote {mode} gains for {len(gains.L)} source(s) to {out}")
    return 0


def _batch_one(job: tuple[str, str, int | None]) -> tuple[str, dict]:
    path, outdir, seed = job
    summary = _execute_scenario(Path(path), Path(outdir), seed, None)
    return path, summary


def cmd_batch(args) -> int:
    indir = Path(args.scenarios)
    files = sorted(indir.glob("*.json"))
    if not files:
        print(f"no scenario files in {indir}", file=sys.stderr)
        return 2
    seed = _seed_override()
    jobs = [(str(p), args.out, seed) for p in files]
    results: dict[str, dict] = {}
    with ProcessPoolExecutor(max_workers=args.jobs) as pool:
        for path, summary in pool.map(_batch_one, jobs):
            results[path] = summary
    manifest = []
    ok = True
    for p in files:
        summary = results[str(p)]
        manifest.append(
            {
                "scenario": p.name,
                "violations": len(summary["violations"]),
                "final_max_error": summary["final_max_error"],
            }
        )
        ok = ok and not summary["violations"]
        print(f"{p.name}: {len(summary['violations'])} violation(s)")
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    with open(outdir / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
    return 0 if ok else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="aoi-observer",
        description="Distributed observer simulation and verification toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run one scenario file")
    p.add_argument("scenario")
    p.add_argument("--out", default="out")
    p.add_argument("--horizon", type=int, default=None)
    p.set_defaults(fn=cmd_run)

    p = sub.add_parser("reproduce", help="run a canned demonstration")
    p.add_argument("id", choices=sorted(REPRODUCTIONS))
    p.set_defaults(fn=cmd_reproduce)

    p = sub.add_parser("check-graph", help="verify a schedule file")
    p.add_argument("--schedule", required=True)
    p.add_argument("--robust", nargs=2, type=int, metavar=("R", "T"), default=None)
    p.add_argument("--sources", nargs="*", type=int, default=None)
    p.set_defaults(fn=cmd_check_graph)

    p = sub.add_parser("design-gains", help="design observer gains for a system file")
    p.add_argument("--system", required=True)
    p.add_argument("--rho", type=float, default=0.7)
    p.add_argument("--delta", type=float, default=0.0)
    p.add_argument("--nilpotent", action="store_true")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="gains.json")
    p.set_defaults(fn=cmd_design_gains)

    p = sub.add_parser("batch", help="run every scenario in a directory")
    p.add_argument("scenarios")
    p.add_argument("--out", default="out")
    p.add_argument("--jobs", type=int, default=None)
    p.set_defaults(fn=cmd_batch)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (AoiObserverError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
