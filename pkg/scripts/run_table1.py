"""Fresh cell, stoichiometric drift and negative active-material loss in both observer modes.

Prints an RMSPE table (t >= 300 s) and, with --figure, plots the fresh-cell
V+EXP run panel by panel (needs matplotlib).

    python3 scripts/run_table1.py --seed 42 --jobs 3 --figure fresh.png
"""
import argparse
import dataclasses
from concurrent.futures import ProcessPoolExecutor

from spmexp.harness import METRICS, NoiseConfig, ScenarioConfig, run_scenario
from spmexp.observer import Mode
from spmexp.params import DriftSpec

SCENARIOS = {
    "fresh": DriftSpec(),
    "stoich": DriftSpec(0.95, 0.95, 1.0),
    "eps_loss": DriftSpec(1.0, 1.0, 0.95),
}


def _run(job):
    name, mode, cfg = job
    return name, mode, run_scenario(cfg)


def plot_fresh(result, path):
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    t = result.column("t_s") / 60
    fig, ax = plt.subplots(3, 2, figsize=(10, 9), sharex=True)
    ax = ax.ravel()
    ax[0].plot(t, result.column("I_A"))
    ax[0].set_ylabel("I (A)")
    for c, lab in (("V_meas_V", "measured"), ("V_hat_V", "estimate")):
        ax[1].plot(t, result.column(c), label=lab)
    ax[1].set_ylabel("V_t (V)")
    for c, lab in (("dt_b_meas_m", "measured"), ("dt_b_hat_m", "estimate")):
        ax[2].plot(t, 1e6 * result.column(c), label=lab)
    ax[2].set_ylabel("dt_b (um)")
    ax[3].plot(t, 1e3 * (result.column("V_hat_V") - result.column("V_t_V")), label="V (mV)")
    ax[3].plot(t, 1e6 * (result.column("dt_b_hat_m") - result.column("dt_b_m")), label="dt_b (um)")
    ax[3].set_ylabel("estimate error")
    for k, (col, lab) in enumerate((("ss", "surface"), ("avg", "average"))):
        a = ax[4 + k]
        for side in ("neg", "pos"):
            a.plot(t, result.column(f"c_{col}_{side}"), label=f"{side}")
            a.plot(t, result.column(f"chat_{col}_{side}"), "--", label=f"{side} est")
        a.set_ylabel(f"{lab} c (mol/m3)")
    for a in ax[1:]:
        a.legend(fontsize=7)
    for a in ax[-2:]:
        a.set_xlabel("t (min)")
    fig.tight_layout()
    fig.savefig(path, dpi=120)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seed", type=int, default=42)
    ap.add_argument("--duration", type=float, default=3600.0)
    ap.add_argument("--jobs", type=int, default=1)
    ap.add_argument("--figure", default=None, help="PNG path for the fresh-cell V+EXP panels")
    args = ap.parse_args()

    base = ScenarioConfig(duration=args.duration, noise=NoiseConfig(1e-3, 1e-6, args.seed))
    jobs = [(name, mode, dataclasses.replace(base, drift=drift, mode=mode))
            for name, drift in SCENARIOS.items() for mode in (Mode.V_PLUS_EXP, Mode.V_ONLY)]
    if args.jobs > 1:
        with ProcessPoolExecutor(args.jobs) as pool:
            done = list(pool.map(_run, jobs))
    else:
        done = [_run(j) for j in jobs]
    results = {(name, mode): res for name, mode, res in done}

    print(f"RMSPE (%) for t >= 300 s, seed {args.seed}")
    print(f"{'estimate':<10s}" + "".join(f"{n + ' ' + m.value:>18s}" for n in SCENARIOS
                                         for m in (Mode.V_PLUS_EXP, Mode.V_ONLY)))
    for k in METRICS:
        row = "".join(f"{getattr(results[n, m].report, k):18.3f}" for n in SCENARIOS
                      for m in (Mode.V_PLUS_EXP, Mode.V_ONLY))
        print(f"{k:<10s}{row}")

    if args.figure:
        plot_fresh(results["fresh", Mode.V_PLUS_EXP], args.figure)
        print(f"figure -> {args.figure}")


if __name__ == "__main__":
    main()
