"""Command-line interface: ``simulate``, ``report`` and ``compare``."""
from __future__ import annotations

import argparse
import logging
import sys
from concurrent.futures import ProcessPoolExecutor

from .harness import (CC_CHARGE, CUSTOM, NoiseConfig, ScenarioConfig, emit_plotdata,
                      format_comparison, read_csv, rmspe_report, run_scenario)
from .numerics import StepperConfig
from .observer import Mode
from .params import DriftSpec


def _profile(text: str) -> tuple[tuple[float, float], ...]:
    """Parse ``"0:1.0,600:0.5,1200:-1"`` into ((t_start, c_rate), ...)."""
    out = []
    try:
        for item in text.split(","):
            t, r = item.split(":")
            out.append((float(t), float(r)))
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad profile {text!r}; expected t:rate,t:rate,...")
    return tuple(out)


def _scenario_args(ap: argparse.ArgumentParser) -> None:
    ap.add_argument("--params", default=None, help="parameter JSON (default: bundled cell)")
    ap.add_argument("--scenario", choices=(CC_CHARGE, CUSTOM), default=CC_CHARGE)
    ap.add_argument("--profile", type=_profile, default=(),
                    help="piecewise-constant C-rate profile t:rate,... (scenario 'profile')")
    ap.add_argument("--c-rate", type=float, default=1.0)
    ap.add_argument("--duration", type=float, default=3600.0)
    ap.add_argument("--soc0", type=float, default=0.05, help="plant initial SOC")
    ap.add_argument("--obs-soc0", type=float, default=0.10, help="observer initial SOC")
    ap.add_argument("--drift-x100", type=float, default=1.0)
    ap.add_argument("--drift-y0", type=float, default=1.0)
    ap.add_argument("--drift-eps-neg", type=float, default=1.0)
    ap.add_argument("--sigma-v", type=float, default=1e-3, help="voltage noise std (V)")
    ap.add_argument("--sigma-dt", type=float, default=1e-6, help="expansion noise std (m)")
    ap.add_argument("--seed", type=int, default=42)
    ap.add_argument("--dt", type=float, default=0.5)
    ap.add_argument("--n-shells", type=int, default=16)
    ap.add_argument("--t-start", type=float, default=300.0, help="RMSPE window start (s)")


def _config(args, mode: str) -> ScenarioConfig:
    return ScenarioConfig(
        kind=args.scenario, c_rate=args.c_rate, duration=args.duration,
        soc0_plant=args.soc0, soc0_observer=args.obs_soc0,
        drift=DriftSpec(args.drift_x100, args.drift_y0, args.drift_eps_neg),
        mode=Mode(mode),
        noise=NoiseConfig(args.sigma_v, args.sigma_dt, args.seed),
        solver=StepperConfig(args.dt), n_shells=args.n_shells, profile=args.profile,
    )


def _simulate(args) -> int:
    cfg = _config(args, args.mode)
    res = run_scenario(cfg, args.params, args.out, args.t_start)
    if args.plotdata:
        emit_plotdata(res.records, args.plotdata)
    print(res.report.format(f"mode {cfg.mode.value}, {len(res.records)} records -> {args.out}"))
    return 0


def _report(args) -> int:
    records = read_csv(args.input)
    print(rmspe_report(records, args.t_start).format(str(args.input)))
    return 0


def _run_one(job):
    cfg, params, out, t_start = job
    return run_scenario(cfg, params, out, t_start)


def _compare(args) -> int:
    jobs = []
    for mode, tag in ((Mode.V_PLUS_EXP, "vexp"), (Mode.V_ONLY, "vonly")):
        out = f"{args.out_prefix}_{tag}.csv" if args.out_prefix else None
        jobs.append((_config(args, mode), args.params, out, args.t_start))
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=min(args.jobs, len(jobs))) as pool:
            results = list(pool.map(_run_one, jobs))
    else:
        results = [_run_one(j) for j in jobs]
    cfg = jobs[0][0]
    d = cfg.drift
    title = (f"drift x100 x{d.scale_x100:g}, y0 x{d.scale_y0:g}, eps_s_neg x{d.scale_eps_s_neg:g}; "
             f"seed {cfg.noise.seed}")
    print(format_comparison(dict(zip((Mode.V_PLUS_EXP, Mode.V_ONLY), results)), title))
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="spmexp", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run one plant + observer scenario")
    _scenario_args(sim)
    sim.add_argument("--mode", choices=[m.value for m in Mode], default=Mode.V_PLUS_EXP.value)
    sim.add_argument("--out", default="run.csv", help="time-series CSV path")
    sim.add_argument("--plotdata", default=None, help="optional JSON plot-data path")
    sim.set_defaults(func=_simulate)

    rep = sub.add_parser("report", help="RMSPE table of a simulate CSV")
    rep.add_argument("--in", dest="input", required=True)
    rep.add_argument("--t-start", type=float, default=300.0)
    rep.set_defaults(func=_report)

    cmp_ = sub.add_parser("compare", help="run both observer modes on one noise stream")
    _scenario_args(cmp_)
    cmp_.add_argument("--out-prefix", default=None,
                      help="write <prefix>_vexp.csv and <prefix>_vonly.csv")
    cmp_.add_argument("--jobs", type=int, default=1, help="worker processes (1 or 2)")
    cmp_.set_defaults(func=_compare)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except Exception as exc:  # every failure becomes a message and a nonzero exit
        if args.verbose:
            raise
        print(f"spmexp {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
