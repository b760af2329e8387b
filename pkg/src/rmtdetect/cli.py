"""Command-line entry point wiring the pipeline together.

Subcommands: simulate, analyze, theory, pca-baseline, mapframes. Every run
writes a run.json capturing the resolved parameters, the seed, and the
package version; two runs with identical run.json produce identical output
files. Exit codes: 0 success, 1 input/contract errors, 2 numerical
failures.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path
from typing import List, Optional

import numpy as np

from . import __version__
from .detect import (
    DetectorConfig,
    FunctionSeries,
    IndicatorSeries,
    extract_events,
    read_indicator_csv,
    regional_series,
    sweep,
    write_events_json,
    write_indicator_csv,
)
from .errors import ConfigurationError, ParameterError, RmtDetectError
from .ingest import WindowSpec, load_csv, load_partition, write_csv
from .les import COVARIANCE_FUNCTIONS, clt_variance, get_function, lln_expectation, msr_moments
from .mapgen import render_run
from .pca import residual_series, train
from .spectral import MarchenkoPastur
from .synth import generate, load_scenario, table3_partition, table3_scenario

ENV_SEED = "RMT_EED_SEED"


class _Parser(argparse.ArgumentParser):
    """argparse exits 2 on usage errors; the contract here is exit 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _build_parser() -> _Parser:
    p = _Parser(prog="rmtdetect", description=__doc__)
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", metavar="COMMAND")

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file supplying defaults for any flag")
    common.add_argument("--seed", type=int, default=None,
                        help=f"base RNG seed (falls back to ${ENV_SEED}, then 0)")

    sim = sub.add_parser("simulate", parents=[common], help="generate synthetic scenario data")
    sim.add_argument("--preset", choices=["table3"], help="bundled three-phase schedule")
    sim.add_argument("--scenario", help="custom scenario JSON file")
    sim.add_argument("--n", type=int, default=118)
    sim.add_argument("--t", type=int, default=1500)
    sim.add_argument("--noise-std", type=float, default=1.0)
    sim.add_argument("--out", required=True, help="output CSV path")

    an = sub.add_parser("analyze", parents=[common], help="moving-window detection sweep")
    an.add_argument("--input", required=True, help="measurement CSV")
    an.add_argument("--partition", help="region partition JSON")
    an.add_argument("--T", type=int, required=True, help="window length in samples")
    an.add_argument("--L", type=int, default=1, help="ring product depth")
    an.add_argument("--stride", type=int, default=1)
    an.add_argument("--functions", default="MSR", help="comma-separated test functions")
    an.add_argument("--k", type=float, default=3.0, help="flag threshold in sigmas")
    an.add_argument("--reference", default="theoretical",
                    help='"theoretical" or "calib:START:END" (window-end range, inclusive)')
    an.add_argument("--kappa4", type=float, default=0.0)
    an.add_argument("--mc-reps", type=int, default=200)
    an.add_argument("--missing", default="error", choices=["error", "forward-fill", "row-mean"])
    an.add_argument("--degenerate", default="error", choices=["error", "jitter"])
    an.add_argument("--jobs", type=int, default=1)
    an.add_argument("--out", required=True, help="output directory")

    th = sub.add_parser("theory", parents=[common],
                        help="print theoretical E, D, c_v for the named functions")
    th.add_argument("--N", type=int, required=True)
    th.add_argument("--T", type=int, required=True)
    th.add_argument("--L", type=int, default=1)
    th.add_argument("--kappa4", type=float, default=0.0)

    pc = sub.add_parser("pca-baseline", parents=[common],
                        help="pilot-regression baseline, same report schema as analyze")
    pc.add_argument("--input", required=True)
    pc.add_argument("--train", required=True, help="training sample range START:END (half-open)")
    pc.add_argument("--m-prime", type=int, default=3, help="number of pilot channels")
    pc.add_argument("--m", type=int, default=None, help="principal subspace dimension")
    pc.add_argument("--k", type=float, default=3.0)
    pc.add_argument("--missing", default="error", choices=["error", "forward-fill", "row-mean"])
    pc.add_argument("--out", required=True)

    mf = sub.add_parser("mapframes", parents=[common],
                        help="render indicator values as spatial grid frames")
    mf.add_argument("--report", required=True, help="analyze/pca-baseline output directory")
    mf.add_argument("--layout", required=True, help="partition or layout JSON")
    mf.add_argument("--grid", type=int, default=64)
    mf.add_argument("--stride", type=int, default=10, help="render every stride-th timestamp")
    mf.add_argument("--power", type=float, default=2.0)
    mf.add_argument("--function", default=None)
    mf.add_argument("--out", required=True, help="frame output directory")
    return p


def _apply_config_file(parser: _Parser, argv: List[str]) -> None:
    """--config file.json mirrors every flag: its entries become defaults."""
    if "--config" not in argv:
        return
    path = Path(argv[argv.index("--config") + 1])
    if not path.exists():
        raise ConfigurationError(f"cli: no such config file: {path}")
    try:
        cfg = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ConfigurationError(f"cli: config file is not valid JSON: {e}") from None
    if not isinstance(cfg, dict):
        raise ConfigurationError("cli: config file must hold a JSON object")
    subcommand = next((a for a in argv if not a.startswith("-")), None)
    actions = {}
    for sp in parser._subparsers._group_actions[0].choices.values():  # noqa: SLF001
        if sp.prog.endswith(str(subcommand)):
            actions = {a.dest: a for a in sp._actions}  # noqa: SLF001
            sp.set_defaults(**_checked_defaults(cfg, actions))
            return
    raise ConfigurationError("cli: --config requires a subcommand")


def _checked_defaults(cfg: dict, actions: dict) -> dict:
    out = {}
    for key, value in cfg.items():
        dest = key.replace("-", "_")
        if dest not in actions:
            raise ConfigurationError(f"cli: config key {key!r} matches no flag")
        actions[dest].required = False  # a config-supplied value satisfies the flag
        out[dest] = value
    return out


def _resolve_seed(args) -> int:
    if args.seed is not None:
        return args.seed
    env = os.environ.get(ENV_SEED)
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise ConfigurationError(f"cli: ${ENV_SEED} must be an integer, got {env!r}") from None
    return 0


def _write_run_json(directory: Path, command: str, args, seed: int) -> None:
    params = {k: v for k, v in vars(args).items() if k not in ("command", "config")}
    params["seed"] = seed
    directory.mkdir(parents=True, exist_ok=True)
    (directory / "run.json").write_text(
        json.dumps({"command": command, "version": __version__, "params": params},
                   indent=2, sort_keys=True),
        encoding="utf-8",
    )


# ---------------------------------------------------------------------------
# Subcommand bodies
# ---------------------------------------------------------------------------


def _cmd_simulate(args) -> int:
    seed = _resolve_seed(args)
    if bool(args.preset) == bool(args.scenario):
        raise ConfigurationError("cli: simulate needs exactly one of --preset / --scenario")
    out = Path(args.out)
    if args.preset:
        sc = table3_scenario(n=args.n, t=args.t, noise_std=args.noise_std)
        partition = table3_partition(n=args.n)
    else:
        sc = load_scenario(args.scenario)
        partition = None
    src = generate(sc, seed)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_csv(src, out)
    if partition is not None:
        payload = {name: list(nodes) for name, nodes in partition.regions.items()}
        payload["layout"] = {nid: list(xy) for nid, xy in partition.layout.items()}
        (out.parent / "partition.json").write_text(json.dumps(payload, indent=2), encoding="utf-8")
    _write_run_json(out.parent, "simulate", args, seed)
    print(f"wrote {src.n}x{src.t} source to {out}")
    return 0


def _parse_reference(text: str):
    if text == "theoretical":
        return "theoretical", None
    if text.startswith("calib:"):
        parts = text.split(":")
        if len(parts) != 3:
            raise ConfigurationError(f"cli: bad reference {text!r}; expected calib:START:END")
        try:
            return "calibration", (int(parts[1]), int(parts[2]))
        except ValueError:
            raise ConfigurationError(f"cli: bad calibration range in {text!r}") from None
    raise ConfigurationError(f"cli: unknown reference mode {text!r}")


def _cmd_analyze(args) -> int:
    seed = _resolve_seed(args)
    src = load_csv(args.input, policy=args.missing)
    partition = load_partition(args.partition) if args.partition else None
    mode, calib = _parse_reference(args.reference)
    cfg = DetectorConfig(
        window=WindowSpec(T=args.T, stride=args.stride, L=args.L),
        functions=tuple(f.strip() for f in args.functions.split(",") if f.strip()),
        threshold_k=args.k,
        reference=mode,
        calibration_range=calib,
        regions=partition,
        base_seed=seed,
        kappa4=args.kappa4,
        mc_reps=args.mc_reps,
        degenerate_policy=args.degenerate,
        jobs=args.jobs,
    )
    series = regional_series(src, cfg) if partition is not None else sweep(src, cfg)
    report = extract_events(series, cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_indicator_csv(series, out / "indicator.csv")
    write_events_json(report, out / "events.json")
    _write_run_json(out, "analyze", args, seed)
    print(f"{len(series.t)} windows, {len(report.events)} events -> {out}")
    return 0


def _cmd_theory(args) -> int:
    if args.T < args.N:
        raise ParameterError(f"cli: theory needs N <= T, got N={args.N}, T={args.T}")
    c = args.N / args.T
    mm = msr_moments(c, args.L)
    rows = [("MSR", mm.expectation, mm.variance)]
    law = MarchenkoPastur(kind="mp2", c=c, sigma2=1.0)
    for name in COVARIANCE_FUNCTIONS:
        f = get_function(name)
        e = lln_expectation(f, law, args.N)
        d = clt_variance(f, c, kappa4=args.kappa4)
        rows.append((name, e, d))
    print(f"N={args.N} T={args.T} c={c:.4f} L={args.L} kappa4={args.kappa4}")
    print(f"{'function':<10}{'E':>14}{'D':>14}{'c_v':>12}")
    for name, e, d in rows:
        cv = np.sqrt(d) / e if e != 0 else np.nan
        print(f"{name:<10}{e:>14.6g}{d:>14.6g}{cv:>12.4f}")
    return 0


def _cmd_pca(args) -> int:
    seed = _resolve_seed(args)
    src = load_csv(args.input, policy=args.missing)
    try:
        lo, hi = (int(x) for x in args.train.split(":"))
    except ValueError:
        raise ConfigurationError(f"cli: bad training range {args.train!r}; expected START:END") from None
    model = train(src, (lo, hi), m_prime=args.m_prime, m=args.m)
    ts, resid = residual_series(model, src)
    data = {}
    for j, nid in enumerate(model.nonpilot_ids):
        std = float(model.train_residual_std[j])
        scored = (ts < lo) | (ts >= hi)
        flag = scored & (resid[j] > args.k * std)
        data[(nid, "PCA")] = FunctionSeries(
            tau=resid[j],
            eta=resid[j] / std if std > 0 else np.full_like(resid[j], np.nan),
            flag=flag,
            scored=scored,
            e_eta=std,
            e_flag=0.0,
            d_flag=std**2,
            reference="pca-training",
        )
    series = IndicatorSeries(
        t=ts,
        data=data,
        meta={
            "pilots": list(model.pilot_ids),
            "train_range": [lo, hi],
            "m": model.subspace_dim,
            "m_prime": args.m_prime,
            "k": args.k,
            "condition_number": model.condition_number,
        },
    )
    cfg = DetectorConfig(window=WindowSpec(T=2), functions=("MSR",), base_seed=seed)
    report = extract_events(series, cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_indicator_csv(series, out / "indicator.csv")
    write_events_json(report, out / "events.json")
    _write_run_json(out, "pca-baseline", args, seed)
    print(f"pilots {list(model.pilot_ids)}, {len(report.events)} events -> {out}")
    return 0


def _cmd_mapframes(args) -> int:
    seed = _resolve_seed(args)
    report_dir = Path(args.report)
    series = read_indicator_csv(report_dir / "indicator.csv")
    carrier = load_partition(args.layout)
    if carrier.layout is None:
        raise ConfigurationError(f"cli: {args.layout} carries no layout coordinates")
    out = Path(args.out)
    manifest = render_run(
        series,
        carrier.layout,
        out,
        function=args.function,
        partition=carrier if carrier.regions else None,
        frame_stride=args.stride,
        grid_size=args.grid,
        power=args.power,
    )
    _write_run_json(out, "mapframes", args, seed)
    print(f"manifest -> {manifest}")
    return 0


_COMMANDS = {
    "simulate": _cmd_simulate,
    "analyze": _cmd_analyze,
    "theory": _cmd_theory,
    "pca-baseline": _cmd_pca,
    "mapframes": _cmd_mapframes,
}


def main(argv: Optional[List[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = _build_parser()
    if not argv:
        parser.print_usage(sys.stderr)
        return 1
    try:
        _apply_config_file(parser, argv)
        args = parser.parse_args(argv)
        if args.command is None:
            parser.print_usage(sys.stderr)
            return 1
        return _COMMANDS[args.command](args)
    except SystemExit as e:
        return int(e.code or 0)
    except RmtDetectError as e:
        print(f"error [{type(e).__name__}]: {e}", file=sys.stderr)
        return e.exit_code
    except np.linalg.LinAlgError as e:
        print(f"error [LinAlgError]: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
