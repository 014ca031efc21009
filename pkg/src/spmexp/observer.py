"""Voltage + expansion state observer for the single particle model.

One observer step runs, in order: voltage inversion, positive-electrode
backstepping observer, open-loop electrolyte observer, expansion inversion
(V+EXP mode only) and the negative-electrode observer. The inversion blocks read
estimates at the measurement timestamp; the PDE observers then integrate over
the step with their output-injection terms held constant.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace

import numpy as np

from .numerics import (RadialGrid, _electrolyte_rhs, _sphere_rhs, bessel_I,
                       _bessel_scaled_series, rk4_step, volume_average)
from .params import NEG, POS, initial_concentrations
from .plant import (Cell, advance_electrolyte, intercalation_flux, region_means,
                    voltage_parts, expansion_outputs, PlantState)


class Mode(str, enum.Enum):
    V_ONLY = "v-only"
    V_PLUS_EXP = "v+exp"


class ObserverError(ValueError):
    pass


@dataclass
class ObserverState:
    chat_s_pos: np.ndarray
    chat_s_neg: np.ndarray
    chat_e: np.ndarray
    check_css_pos: float
    check_csavg_neg: float
    # lithium reference for the V-only conservation law (observer's own initial state)
    c_ref_neg: float
    c_ref_pos: float
    clamped_v: bool = False
    clamped_e: bool = False

    def copy(self) -> "ObserverState":
        return replace(self, chat_s_pos=self.chat_s_pos.copy(),
                       chat_s_neg=self.chat_s_neg.copy(), chat_e=self.chat_e.copy())


@dataclass(frozen=True, eq=False)
class ObserverGains:
    lam: float
    gamma_v: float
    gamma_e: float
    k_neg: float
    p_bar: np.ndarray
    p0: float
    mode: Mode = Mode.V_PLUS_EXP
    n_sub: int = 100


@dataclass(frozen=True)
class Measurement:
    V_t: float
    T_b: float
    dt_b: float
    I: float
    t: float = 0.0


def compute_backstepping_gains(lam: float, grid: RadialGrid, D_s_pos: float) -> tuple[np.ndarray, float]:
    """Output-injection gains of the positive-electrode observer.

    Returns the distributed gain p_bar(r_i) (1/s) and the boundary gain p0 (1/m).
    The kernel is written in the normalized radius, so the distributed gain
    carries D / R_p^2. Evaluating through I_nu(z)/z^nu as a series in z^2 covers
    r = R_p (z = 0) and 0 <= lam < 1/4 (imaginary z) without special cases.
    """
    if not lam < 0.25:
        raise ObserverError(f"lambda must be < 1/4 (got {lam!r})")
    R = grid.R_p
    pref = -lam * D_s_pos / (2.0 * R * R)
    p_bar = np.empty(grid.n_nodes)
    for i, r in enumerate(grid.r):
        w = lam * (r * r / (R * R) - 1.0)
        if w > 0:
            z = math.sqrt(w)
            bracket = bessel_I(1, z) / z - 2.0 * lam * bessel_I(2, z) / (z * z)
        else:
            bracket = _bessel_scaled_series(1, w) - 2.0 * lam * _bessel_scaled_series(2, w)
        p_bar[i] = pref * bracket
    p0 = (3.0 - lam) / (2.0 * R)
    return p_bar, p0


def make_gains(cell: Cell, mode: Mode | str = Mode.V_PLUS_EXP, lam: float = -20.0,
               gamma_v: float = 1e8, gamma_e: float = 1e22, k_neg: float = 0.01,
               n_sub: int = 100) -> ObserverGains:
    p_bar, p0 = compute_backstepping_gains(lam, cell.grid_pos, cell.p.D_s_pos)
    return ObserverGains(lam, gamma_v, gamma_e, k_neg, p_bar, p0, Mode(mode), n_sub)


def initial_observer_state(cell: Cell, soc0: float) -> ObserverState:
    c_pos, c_neg = initial_concentrations(cell.p, soc0)
    return ObserverState(
        chat_s_pos=np.full(cell.grid_pos.n_nodes, c_pos),
        chat_s_neg=np.full(cell.grid_neg.n_nodes, c_neg),
        chat_e=np.full(cell.grid_e.n_nodes, cell.p.c_e0),
        check_css_pos=c_pos, check_csavg_neg=c_neg,
        c_ref_neg=c_neg, c_ref_pos=c_pos,
    )


def observer_from_plant(cell: Cell, s: PlantState) -> ObserverState:
    """Observer initialized exactly at a plant state (consistency checks)."""
    c_avg_neg = volume_average(s.c_s_neg, cell.grid_neg)
    return ObserverState(
        chat_s_pos=s.c_s_pos.copy(), chat_s_neg=s.c_s_neg.copy(), chat_e=s.c_e.copy(),
        check_css_pos=float(s.c_s_pos[-1]), check_csavg_neg=c_avg_neg,
        c_ref_neg=c_avg_neg, c_ref_pos=volume_average(s.c_s_pos, cell.grid_pos),
    )


# ---------------------------------------------------------------------------
# Gradient inversion laws


def _fd_regressor(fn, c, delta, lo, hi):
    a = max(c - delta, lo)
    b = min(c + delta, hi)
    return (fn(b) - fn(a)) / (b - a)


def _gradient_law(c, target, fn, gamma, dt, n_sub, delta, lo, hi):
    """Sub-stepped forward Euler on dc/dt = gamma * dfn/dc * (target - fn(c)) with clamping."""
    h = dt / n_sub
    clamped = False
    for _ in range(n_sub):
        e = target - fn(c)
        if e == 0.0:
            continue
        phi = _fd_regressor(fn, c, delta, lo, hi)
        c = c + h * gamma * phi * e
        if c < lo:
            c, clamped = lo, True
        elif c > hi:
            c, clamped = hi, True
    return c, clamped


def voltage_map(obs: ObserverState, meas: Measurement, cell: Cell):
    """h_v as a function of the positive surface concentration alone.

    The negative surface concentration and electrolyte come from the observer,
    current and temperature from the measurement.
    """
    p, m = cell.p, cell.m
    rest = voltage_parts(0.5 * p.c_s_max_pos, float(obs.chat_s_neg[-1]), obs.chat_e,
                         meas.I, meas.T_b, cell)
    ce_pos = region_means(obs.chat_e, cell.e_op)[1]
    j_pos = intercalation_flux(meas.I, POS, p)
    eta_mid = rest.eta_pos
    offset = rest.V_t - m.U_pos.scalar(0.5) - eta_mid
    scale = p.R_gas * meas.T_b / (p.alpha * p.F)
    num = p.F * j_pos / 2.0
    k = p.k0_pos * ce_pos**p.alpha
    c_max, a = p.c_s_max_pos, p.alpha
    U = m.U_pos.scalar

    def h_v(c):
        i0 = k * ((c_max - c) * c) ** a
        return U(c / c_max) + scale * math.asinh(num / i0) + offset

    return h_v


def voltage_regressor(c: float, obs: ObserverState, meas: Measurement, cell: Cell) -> float:
    """phi_v = dh_v/dc_ss+ at ``c`` by central finite difference (step 1e-4 c_s,max+)."""
    c_max = cell.p.c_s_max_pos
    return _fd_regressor(voltage_map(obs, meas, cell), c, 1e-4 * c_max,
                         1e-6 * c_max, c_max - 1e-6 * c_max)


def voltage_inversion_step(check_css_pos: float, meas: Measurement, obs: ObserverState,
                           cell: Cell, gains: ObserverGains, dt: float) -> tuple[float, bool]:
    """Advance the inverted positive surface concentration; returns ``(value, clamped)``."""
    c_max = cell.p.c_s_max_pos
    eps = 1e-6 * c_max
    return _gradient_law(check_css_pos, meas.V_t, voltage_map(obs, meas, cell), gains.gamma_v,
                         dt, gains.n_sub, 1e-4 * c_max, eps, c_max - eps)


def inverted_negative_displacement(obs: ObserverState, meas: Measurement, cell: Cell) -> float:
    """Negative-particle surface displacement implied by the measured expansion and temperature."""
    p, m = cell.p, cell.m
    if p.kappa_b == 0:
        raise ObserverError("expansion inversion undefined for kappa_b = 0")
    dt_th = p.alpha_th * (meas.T_b - p.T0)
    u_pos = volume_strain_moment(obs.chat_s_pos, m.dV_pos, cell.grid_pos)
    dt_pos = p.a_s_pos * p.L_pos * u_pos
    dt_neg = (meas.dt_b - dt_th) / p.kappa_b - dt_pos
    return dt_neg / (p.a_s_neg * p.L_neg)


def volume_strain_moment(c_s: np.ndarray, strain, grid: RadialGrid) -> float:
    return float(np.dot(grid.volumes, strain(c_s))) / grid.R_p**2


def expansion_map(obs: ObserverState, cell: Cell):
    """h_e as a function of the negative average concentration, with the observer's zero-mean profile."""
    grid = cell.grid_neg
    c_avg = volume_average(obs.chat_s_neg, grid)
    profile = obs.chat_s_neg - c_avg
    w = grid.volumes / grid.R_p**2
    xs, ys = cell.m.dV_neg.x, cell.m.dV_neg.y

    def h_e(c):
        return float(np.dot(w, np.interp(profile + c, xs, ys)))

    return h_e


def expansion_regressor(c: float, obs: ObserverState, cell: Cell) -> float:
    """phi_e = dh_e/dc_s,avg- at ``c`` by central finite difference (step 1e-4 c_s,max-)."""
    c_max = cell.p.c_s_max_neg
    return _fd_regressor(expansion_map(obs, cell), c, 1e-4 * c_max, 1e-6 * c_max,
                         c_max - 1e-6 * c_max)


def expansion_gradient_law(check_csavg_neg: float, u_target: float, obs: ObserverState,
                           cell: Cell, gains: ObserverGains, dt: float) -> tuple[float, bool]:
    c_max = cell.p.c_s_max_neg
    eps = 1e-6 * c_max
    return _gradient_law(check_csavg_neg, u_target, expansion_map(obs, cell), gains.gamma_e,
                         dt, gains.n_sub, 1e-4 * c_max, eps, c_max - eps)


def expansion_inversion_step(obs: ObserverState, meas: Measurement, cell: Cell,
                             gains: ObserverGains, dt: float) -> tuple[float, bool]:
    """Advance the inverted negative average concentration from expansion and temperature."""
    if gains.mode is not Mode.V_PLUS_EXP:
        raise ObserverError("expansion inversion requires V+EXP mode")
    u_target = inverted_negative_displacement(obs, meas, cell)
    return expansion_gradient_law(obs.check_csavg_neg, u_target, obs, cell, gains, dt)


def conservation_estimate(obs: ObserverState, cell: Cell) -> float:
    """V-only negative average concentration from solid-phase lithium bookkeeping."""
    p = cell.p
    ratio = (p.eps_s_pos * p.L_pos) / (p.eps_s_neg * p.L_neg)
    c_avg_pos = volume_average(obs.chat_s_pos, cell.grid_pos)
    return obs.c_ref_neg + ratio * (obs.c_ref_pos - c_avg_pos)


# ---------------------------------------------------------------------------
# PDE observers


def positive_observer_rhs(chat_s_pos: np.ndarray, I: float, check_css_pos: float,
                          gains: ObserverGains, cell: Cell,
                          c_ss_hold: float | None = None) -> np.ndarray:
    """Plant diffusion plus backstepping output injection.

    ``c_ss_hold`` fixes the surface estimate used in the innovation (sample and
    hold over a step); by default the innovation uses ``chat_s_pos[-1]``.
    """
    p = cell.p
    c_ss = chat_s_pos[-1] if c_ss_hold is None else c_ss_hold
    innov = check_css_pos - c_ss
    # boundary: D dc/dr = -j + D p0 * innov
    flux = intercalation_flux(I, POS, p) - p.D_s_pos * gains.p0 * innov
    out = _sphere_rhs(chat_s_pos, cell.grid_pos, p.D_s_pos, flux)
    if innov != 0.0:
        out += gains.p_bar * innov
    return out


def electrolyte_observer_rhs(chat_e: np.ndarray, I: float, cell: Cell) -> np.ndarray:
    return _electrolyte_rhs(chat_e, I, cell.e_op)


def negative_observer_rhs(chat_s_neg: np.ndarray, I: float, check_csavg_neg: float,
                          k_neg: float, cell: Cell, c_avg_hold: float | None = None) -> np.ndarray:
    p = cell.p
    out = _sphere_rhs(chat_s_neg, cell.grid_neg, p.D_s_neg, intercalation_flux(I, NEG, p))
    c_avg = volume_average(chat_s_neg, cell.grid_neg) if c_avg_hold is None else c_avg_hold
    innov = check_csavg_neg - c_avg
    if innov != 0.0:
        out += k_neg * innov
    return out


def _clip(c, c_max):
    eps = 1e-6 * c_max
    return np.clip(c, eps, c_max - eps)


def step_observer(obs: ObserverState, meas: Measurement, gains: ObserverGains, cell: Cell,
                  dt: float) -> ObserverState:
    """Advance the full observer cascade from the measurement time by ``dt``."""
    p = cell.p
    I = meas.I
    check_pos, clamped_v = voltage_inversion_step(obs.check_css_pos, meas, obs, cell, gains, dt)

    c_ss_hold = float(obs.chat_s_pos[-1])
    chat_pos = rk4_step(obs.chat_s_pos,
                        lambda c: positive_observer_rhs(c, I, check_pos, gains, cell, c_ss_hold), dt)
    chat_e = advance_electrolyte(obs.chat_e, I, dt, cell)

    clamped_e = False
    if gains.mode is Mode.V_PLUS_EXP:
        check_neg, clamped_e = expansion_inversion_step(obs, meas, cell, gains, dt)
    else:
        check_neg = conservation_estimate(obs, cell)

    c_avg_hold = volume_average(obs.chat_s_neg, cell.grid_neg)
    chat_neg = rk4_step(obs.chat_s_neg,
                        lambda c: negative_observer_rhs(c, I, check_neg, gains.k_neg, cell,
                                                        c_avg_hold), dt)
    return ObserverState(
        chat_s_pos=_clip(chat_pos, p.c_s_max_pos), chat_s_neg=_clip(chat_neg, p.c_s_max_neg),
        chat_e=np.maximum(chat_e, 1e-6 * p.c_e0),
        check_css_pos=check_pos, check_csavg_neg=check_neg,
        c_ref_neg=obs.c_ref_neg, c_ref_pos=obs.c_ref_pos,
        clamped_v=clamped_v, clamped_e=clamped_e,
    )


@dataclass
class ObserverOutputs:
    V_t: float
    dt_b: float
    c_ss_neg: float
    c_ss_pos: float
    c_avg_neg: float
    c_avg_pos: float
    soc: float


def observer_outputs(obs: ObserverState, I: float, T_b: float, cell: Cell) -> ObserverOutputs:
    """Estimated voltage, expansion and concentrations (temperature is the measured one)."""
    from .params import soc_from_avg_concentration

    c_ss_pos = float(obs.chat_s_pos[-1])
    c_ss_neg = float(obs.chat_s_neg[-1])
    V = voltage_parts(c_ss_pos, c_ss_neg, obs.chat_e, I, T_b, cell).V_t
    s = PlantState(obs.chat_s_neg, obs.chat_s_pos, obs.chat_e, T_b)
    dt_b = expansion_outputs(s, cell)[3]
    c_avg_neg = volume_average(obs.chat_s_neg, cell.grid_neg)
    return ObserverOutputs(V, dt_b, c_ss_neg, c_ss_pos, c_avg_neg,
                           volume_average(obs.chat_s_pos, cell.grid_pos),
                           soc_from_avg_concentration(cell.p, c_avg_neg))
