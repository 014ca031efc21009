"""Scenario runs, measurement noise, RMSPE metrics and CSV / plot-data output."""
from __future__ import annotations

import csv
import dataclasses
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .numerics import StepperConfig
from .observer import (Measurement, Mode, ObserverState, initial_observer_state, make_gains,
                       observer_outputs, step_observer)
from .params import DriftSpec, apply_drift, load_params
from .plant import Cell, PlantOutputs, initial_plant_state, plant_outputs, step_plant

log = logging.getLogger(__name__)

CC_CHARGE = "cc"
CUSTOM = "profile"


class ScenarioError(RuntimeError):
    pass


@dataclass(frozen=True)
class NoiseConfig:
    sigma_v: float = 1e-3     # V
    sigma_dt: float = 1e-6    # m
    seed: int = 42

    def __post_init__(self):
        if self.sigma_v < 0 or self.sigma_dt < 0:
            raise ValueError("noise sigmas must be non-negative")


@dataclass(frozen=True)
class ScenarioConfig:
    kind: str = CC_CHARGE
    c_rate: float = 1.0
    duration: float = 3600.0
    soc0_plant: float = 0.05
    soc0_observer: float = 0.10
    drift: DriftSpec = DriftSpec()
    mode: Mode = Mode.V_PLUS_EXP
    noise: NoiseConfig = NoiseConfig()
    solver: StepperConfig = StepperConfig()
    n_shells: int = 16
    planar_nodes: tuple[int, int, int] = (10, 10, 10)
    # piecewise-constant C-rate profile: ((t_start, c_rate), ...), used when kind == "profile"
    profile: tuple[tuple[float, float], ...] = ()
    lam: float = -20.0
    gamma_v: float = 1e8
    gamma_e: float = 1e22
    k_neg: float = 0.01
    n_sub: int = 100

    def __post_init__(self):
        if not self.duration > 0:
            raise ValueError("duration must be positive")
        if self.kind not in (CC_CHARGE, CUSTOM):
            raise ValueError(f"unknown scenario kind {self.kind!r}")
        if self.kind == CUSTOM and not self.profile:
            raise ValueError("profile scenario needs at least one (t, c_rate) breakpoint")
        object.__setattr__(self, "mode", Mode(self.mode))

    def c_rate_at(self, t: float) -> float:
        if self.kind == CC_CHARGE:
            return self.c_rate
        rate = 0.0
        for t0, r in self.profile:
            if t >= t0:
                rate = r
        return rate


# Column order of the CSV; changing it is a format break.
COLUMNS = (
    "t_s", "I_A",
    "V_t_V", "T_b_K", "dt_b_m", "c_ss_neg", "c_ss_pos", "c_avg_neg", "c_avg_pos", "soc",
    "V_meas_V", "dt_b_meas_m",
    "V_hat_V", "dt_b_hat_m", "chat_ss_neg", "chat_ss_pos", "chat_avg_neg", "chat_avg_pos",
    "soc_hat", "check_css_pos", "check_csavg_neg",
    "clamp_v", "clamp_e",
)
CSV_HEADER = ",".join(COLUMNS)


@dataclass
class TimeseriesRecord:
    t_s: float
    I_A: float
    V_t_V: float
    T_b_K: float
    dt_b_m: float
    c_ss_neg: float
    c_ss_pos: float
    c_avg_neg: float
    c_avg_pos: float
    soc: float
    V_meas_V: float
    dt_b_meas_m: float
    V_hat_V: float
    dt_b_hat_m: float
    chat_ss_neg: float
    chat_ss_pos: float
    chat_avg_neg: float
    chat_avg_pos: float
    soc_hat: float
    check_css_pos: float
    check_csavg_neg: float
    clamp_v: int
    clamp_e: int


assert tuple(f.name for f in dataclasses.fields(TimeseriesRecord)) == COLUMNS


METRICS = ("c_ss_neg", "c_avg_neg", "c_ss_pos", "c_avg_pos")


@dataclass
class RmspeReport:
    c_ss_neg: float
    c_avg_neg: float
    c_ss_pos: float
    c_avg_pos: float
    t_start: float = 300.0

    def as_dict(self) -> dict[str, float]:
        return {k: getattr(self, k) for k in METRICS}

    def format(self, title: str = "") -> str:
        lines = [title] if title else []
        lines.append(f"RMSPE (%) for t >= {self.t_start:g} s")
        for k in METRICS:
            lines.append(f"  {k:<10s} {getattr(self, k):10.4f}")
        return "\n".join(lines)


@dataclass
class ScenarioResult:
    config: ScenarioConfig
    records: list[TimeseriesRecord]
    report: RmspeReport

    def column(self, name: str) -> np.ndarray:
        return column(self.records, name)


def column(records: Sequence[TimeseriesRecord], name: str) -> np.ndarray:
    return np.array([getattr(r, name) for r in records], dtype=float)


def add_noise(value: float, sigma: float, rng: np.random.Generator) -> tuple[float, np.random.Generator]:
    """Return ``value + sigma * z`` with z ~ N(0, 1) drawn from ``rng``.

    One standard-normal draw is consumed even when ``sigma`` is zero, so the
    stream position does not depend on the sigmas.
    """
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    z = float(rng.standard_normal())
    if sigma == 0:
        return value, rng
    return value + sigma * z, rng


def make_rng(seed: int) -> np.random.Generator:
    """The pinned noise generator: NumPy ``Generator(PCG64(seed))``."""
    return np.random.Generator(np.random.PCG64(seed))


def rmspe(estimates, truths, t=None, t_start: float = 0.0) -> float:
    """Root-mean-square percent error over samples with ``t >= t_start``."""
    est = np.asarray(estimates, dtype=float)
    tru = np.asarray(truths, dtype=float)
    if est.shape != tru.shape:
        raise ValueError("estimates and truths must be aligned")
    if t is not None:
        mask = np.asarray(t, dtype=float) >= t_start
        est, tru = est[mask], tru[mask]
    if est.size == 0:
        raise ValueError("empty RMSPE window")
    if np.any(tru == 0):
        raise ValueError("zero truth value in RMSPE window")
    return float(100.0 * math.sqrt(np.mean(((est - tru) / tru) ** 2)))


def rmspe_report(records: Sequence[TimeseriesRecord], t_start: float = 300.0) -> RmspeReport:
    t = column(records, "t_s")
    vals = {k: rmspe(column(records, "chat_" + k.replace("c_", "", 1)), column(records, k), t, t_start)
            for k in METRICS}
    return RmspeReport(t_start=t_start, **vals)


def _record(t, I, out: PlantOutputs, meas: Measurement, obs: ObserverState, cell_obs: Cell):
    est = observer_outputs(obs, I, meas.T_b, cell_obs)
    return TimeseriesRecord(
        t, I, out.V_t, out.T_b, out.dt_b, out.c_ss_neg, out.c_ss_pos, out.c_avg_neg,
        out.c_avg_pos, out.soc, meas.V_t, meas.dt_b, est.V_t, est.dt_b, est.c_ss_neg,
        est.c_ss_pos, est.c_avg_neg, est.c_avg_pos, est.soc, obs.check_css_pos,
        obs.check_csavg_neg, int(obs.clamped_v), int(obs.clamped_e))


def build_cells(cfg: ScenarioConfig, params_path=None) -> tuple[Cell, Cell]:
    """Plant cell (drift applied) and observer cell (nominal parameters)."""
    p, m = load_params(params_path)
    plant_cell = Cell.build(apply_drift(p, cfg.drift), m, cfg.n_shells, cfg.planar_nodes)
    obs_cell = Cell.build(p, m, cfg.n_shells, cfg.planar_nodes)
    plant_cell.check_stepper(cfg.solver)
    obs_cell.check_stepper(cfg.solver)
    return plant_cell, obs_cell


def run_scenario(cfg: ScenarioConfig, params_path=None, out: str | Path | None = None,
                 t_start: float = 300.0) -> ScenarioResult:
    """Run plant and observer in lockstep and score the observer.

    Per step: measure the plant (noise on V_t and dt_b only, V drawn before
    dt_b), advance the observer from that measurement, advance the plant.
    """
    plant_cell, obs_cell = build_cells(cfg, params_path)
    # 1C is the nominal (undrifted) capacity; plant and observer see the same current
    one_c = obs_cell.p.one_c_current()
    gains = make_gains(obs_cell, cfg.mode, cfg.lam, cfg.gamma_v, cfg.gamma_e, cfg.k_neg, cfg.n_sub)
    dt = cfg.solver.dt
    n_steps = int(round(cfg.duration / dt))
    rng = make_rng(cfg.noise.seed)

    plant = initial_plant_state(plant_cell, cfg.soc0_plant)
    obs = initial_observer_state(obs_cell, cfg.soc0_observer)

    def measure(t, I, out_):
        nonlocal rng
        v, rng = add_noise(out_.V_t, cfg.noise.sigma_v, rng)
        d, rng = add_noise(out_.dt_b, cfg.noise.sigma_dt, rng)
        return Measurement(v, out_.T_b, d, I, t)

    records: list[TimeseriesRecord] = []
    t = 0.0
    I = cfg.c_rate_at(0.0) * one_c
    try:
        po = plant_outputs(plant, I, plant_cell)
        meas = measure(t, I, po)
        records.append(_record(t, I, po, meas, obs, obs_cell))
        for k in range(n_steps):
            I = cfg.c_rate_at(t) * one_c
            meas = dataclasses.replace(meas, I=I)
            obs = step_observer(obs, meas, gains, obs_cell, dt)
            plant, po = step_plant(plant, I, dt, plant_cell, t)
            t = (k + 1) * dt
            meas = measure(t, I, po)
            records.append(_record(t, I, po, meas, obs, obs_cell))
    except Exception as exc:
        if out is not None and records:
            emit_csv(records, out)
        raise ScenarioError(f"scenario aborted at t = {t:g} s: {exc}") from exc

    if out is not None:
        emit_csv(records, out)
    n_clamp = sum(r.clamp_v + r.clamp_e for r in records)
    if n_clamp:
        log.info("%d inversion clamp events", n_clamp)
    return ScenarioResult(cfg, records, rmspe_report(records, t_start))


def compare_modes(cfg: ScenarioConfig, params_path=None, t_start: float = 300.0,
                  out_prefix: str | Path | None = None) -> dict[Mode, ScenarioResult]:
    """Run both observer modes against the same plant and measurement noise stream."""
    results = {}
    for mode in (Mode.V_PLUS_EXP, Mode.V_ONLY):
        out = None
        if out_prefix is not None:
            tag = "vexp" if mode is Mode.V_PLUS_EXP else "vonly"
            out = f"{out_prefix}_{tag}.csv"
        results[mode] = run_scenario(dataclasses.replace(cfg, mode=mode), params_path, out, t_start)
    return results


def format_comparison(results: dict[Mode, ScenarioResult], title: str = "") -> str:
    a, b = results[Mode.V_PLUS_EXP].report, results[Mode.V_ONLY].report
    lines = [title] if title else []
    lines.append(f"RMSPE (%) for t >= {a.t_start:g} s")
    lines.append(f"  {'estimate':<10s} {'V+EXP':>10s} {'V-only':>10s}")
    for k in METRICS:
        lines.append(f"  {k:<10s} {getattr(a, k):10.4f} {getattr(b, k):10.4f}")
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# Files


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    return "%.17g" % v


def emit_csv(records: Sequence[TimeseriesRecord], path) -> None:
    if not records:
        raise ValueError("no records to write")
    path = Path(path)
    try:
        with path.open("w", newline="") as fh:
            fh.write(CSV_HEADER + "\n")
            for r in records:
                fh.write(",".join(_fmt(getattr(r, c)) for c in COLUMNS) + "\n")
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc


def read_csv(path) -> list[TimeseriesRecord]:
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or ",".join(header) != CSV_HEADER:
            raise ValueError(f"{path}: header does not match the documented schema")
        out = []
        for row in reader:
            vals = [int(v) if c in ("clamp_v", "clamp_e") else float(v)
                    for c, v in zip(COLUMNS, row)]
            out.append(TimeseriesRecord(*vals))
    return out


# Figure panels: (a) current (b) voltage (c) expansion (d) voltage/expansion errors
# (e) surface concentrations (f) average concentrations.
PANELS = {
    "a_current": ("I_A",),
    "b_voltage": ("V_t_V", "V_meas_V", "V_hat_V"),
    "c_expansion": ("dt_b_m", "dt_b_meas_m", "dt_b_hat_m"),
    "d_errors": ("V_error_V", "dt_b_error_m"),
    "e_surface": ("c_ss_neg", "chat_ss_neg", "c_ss_pos", "chat_ss_pos"),
    "f_average": ("c_avg_neg", "chat_avg_neg", "c_avg_pos", "chat_avg_pos"),
}


def emit_plotdata(records: Sequence[TimeseriesRecord], path) -> None:
    """JSON document with the time axis and one object per figure panel."""
    if not records:
        raise ValueError("no records to write")
    cols = {c: column(records, c) for c in COLUMNS}
    cols["V_error_V"] = cols["V_hat_V"] - cols["V_t_V"]
    cols["dt_b_error_m"] = cols["dt_b_hat_m"] - cols["dt_b_m"]
    doc = {"t_s": cols["t_s"].tolist(),
           "panels": {k: {c: cols[c].tolist() for c in v} for k, v in PANELS.items()}}
    path = Path(path)
    try:
        path.write_text(json.dumps(doc))
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc
