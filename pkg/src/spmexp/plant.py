"""Single particle model with electrolyte, lumped thermal state and expansion outputs.

Sign convention: ``I > 0`` is charge. On charge lithium leaves the positive
particle (positive outward surface flux) and enters the negative particle.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .numerics import (ElectrolyteOperator, ElectrolytePropagator, PlanarGrid, RadialGrid,
                       StepperConfig, _sphere_rhs, electrolyte_operator, electrolyte_propagator,
                       radial_moment_integral, rk4_step, volume_average)
from .params import (NEG, POS, MaterialCurves, ParamSet, initial_concentrations,
                     soc_from_avg_concentration)


class KineticsError(ValueError):
    pass


class PlantRangeError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class Cell:
    """Parameters, material curves and the discretization shared by plant and observer."""

    p: ParamSet
    m: MaterialCurves
    grid_neg: RadialGrid
    grid_pos: RadialGrid
    grid_e: PlanarGrid
    e_op: ElectrolyteOperator
    _propagators: dict = field(default_factory=dict, repr=False)

    @classmethod
    def build(cls, p: ParamSet, m: MaterialCurves, n_shells: int = 16,
              planar_nodes: tuple[int, int, int] = (10, 10, 10)) -> "Cell":
        grid_e = PlanarGrid.for_params(p, *planar_nodes)
        return cls(p, m, RadialGrid(n_shells, p.R_p_neg), RadialGrid(n_shells, p.R_p_pos),
                   grid_e, electrolyte_operator(p, grid_e))

    def grid(self, which: str) -> RadialGrid:
        return self.grid_neg if which == NEG else self.grid_pos

    def check_stepper(self, cfg: StepperConfig) -> None:
        cfg.check((self.grid_neg, self.p.D_s_neg), (self.grid_pos, self.p.D_s_pos))

    def e_propagator(self, dt: float) -> ElectrolytePropagator:
        """One-step electrolyte map for ``dt``, built on first use and cached."""
        prop = self._propagators.get(dt)
        if prop is None:
            prop = self._propagators[dt] = electrolyte_propagator(dt, self.e_op)
        return prop


@dataclass
class PlantState:
    c_s_neg: np.ndarray
    c_s_pos: np.ndarray
    c_e: np.ndarray
    T_b: float

    def copy(self) -> "PlantState":
        return PlantState(self.c_s_neg.copy(), self.c_s_pos.copy(), self.c_e.copy(), self.T_b)


@dataclass
class PlantOutputs:
    V_t: float
    T_b: float
    dt_b: float
    c_ss_neg: float
    c_ss_pos: float
    c_avg_neg: float
    c_avg_pos: float
    eta_neg: float
    eta_pos: float
    phi_e: float
    dt_neg: float
    dt_pos: float
    dt_th: float
    soc: float


def initial_plant_state(cell: Cell, soc0: float, T_b: float | None = None) -> PlantState:
    c_pos, c_neg = initial_concentrations(cell.p, soc0)
    return PlantState(
        np.full(cell.grid_neg.n_nodes, c_neg),
        np.full(cell.grid_pos.n_nodes, c_pos),
        np.full(cell.grid_e.n_nodes, cell.p.c_e0),
        cell.p.T_a if T_b is None else T_b,
    )


# ---------------------------------------------------------------------------
# Kinetics and voltage


def intercalation_flux(I: float, electrode: str, p: ParamSet) -> float:
    """Outward molar surface flux j (mol/m^2/s) of ``electrode`` at cell current I."""
    e = p.electrode(electrode)
    j = I / (p.F * e.a_s * e.l * e.A)
    return -j if electrode == NEG else j


def exchange_current(c_e_bar: float, c_ss: float, electrode: str, p: ParamSet) -> float:
    c_max = p.electrode(electrode).c_s_max
    if not 0.0 < c_ss < c_max:
        raise KineticsError(f"kinetics singular: c_ss = {c_ss!r} outside (0, {c_max!r})")
    if not c_e_bar > 0:
        raise KineticsError(f"kinetics singular: c_e = {c_e_bar!r}")
    k0 = p.k0_neg if electrode == NEG else p.k0_pos
    a = p.alpha
    return k0 * c_e_bar**a * (c_max - c_ss) ** a * c_ss**a


def overpotential(j: float, i0: float, T: float, p: ParamSet) -> float:
    """Invert symmetric Butler-Volmer for the surface overpotential (V)."""
    if not i0 > 0:
        raise KineticsError(f"exchange current must be positive (got {i0!r})")
    return p.R_gas * T / (p.alpha * p.F) * math.asinh(p.F * j / (2.0 * i0))


def butler_volmer_flux(eta: float, i0: float, T: float, p: ParamSet) -> float:
    f = p.F / (p.R_gas * T)
    return i0 / p.F * (math.exp(p.alpha * f * eta) - math.exp(-p.alpha * f * eta))


def ohmic_factor(p: ParamSet) -> float:
    """Series electrolyte path length divided by effective porosity (m)."""
    b = p.brugg
    return (p.L_neg / (2 * p.eps_e_neg**b) + p.L_sep / p.eps_e_sep**b
            + p.L_pos / (2 * p.eps_e_pos**b))


def electrolyte_potential(c_e: np.ndarray, I: float, T: float, p: ParamSet) -> float:
    """Electrolyte potential at x = l^t relative to x = 0."""
    c0, cl = float(c_e[0]), float(c_e[-1])
    if not (c0 > 0 and cl > 0):
        raise KineticsError("electrolyte concentration must be positive")
    # charge drives ionic current from the positive to the negative electrode
    ohmic = ohmic_factor(p) * (I / p.A) / p.kappa
    diffusion = 2 * p.R_gas * T / p.F * (1 - p.t_plus0) * p.t_f * (math.log(cl) - math.log(c0))
    return ohmic + diffusion


def region_means(c_e: np.ndarray, op: ElectrolyteOperator) -> tuple[float, float]:
    return float(np.dot(op.weights_neg, c_e)), float(np.dot(op.weights_pos, c_e))


@dataclass
class VoltageParts:
    V_t: float
    eta_neg: float
    eta_pos: float
    phi_e: float


def voltage_parts(c_ss_pos: float, c_ss_neg: float, c_e: np.ndarray, I: float, T: float,
                  cell: Cell) -> VoltageParts:
    p, m = cell.p, cell.m
    ce_neg, ce_pos = region_means(c_e, cell.e_op)
    j_pos = intercalation_flux(I, POS, p)
    j_neg = intercalation_flux(I, NEG, p)
    eta_pos = overpotential(j_pos, exchange_current(ce_pos, c_ss_pos, POS, p), T, p)
    eta_neg = overpotential(j_neg, exchange_current(ce_neg, c_ss_neg, NEG, p), T, p)
    phi = electrolyte_potential(c_e, I, T, p)
    V = (m.U_pos.scalar(c_ss_pos / p.c_s_max_pos) + eta_pos + p.R_f_pos * p.F * j_pos
         - m.U_neg.scalar(c_ss_neg / p.c_s_max_neg) - eta_neg - p.R_f_neg * p.F * j_neg
         + phi)
    return VoltageParts(V, eta_neg, eta_pos, phi)


def terminal_voltage(s: PlantState, I: float, cell: Cell) -> float:
    return voltage_parts(float(s.c_s_pos[-1]), float(s.c_s_neg[-1]), s.c_e, I, s.T_b, cell).V_t


def open_circuit_voltage(c_ss_pos: float, c_ss_neg: float, cell: Cell) -> float:
    p, m = cell.p, cell.m
    return m.U_pos.scalar(c_ss_pos / p.c_s_max_pos) - m.U_neg.scalar(c_ss_neg / p.c_s_max_neg)


def thermal_rhs(T_b: float, I: float, V_t: float, s: PlantState, cell: Cell) -> float:
    """dT_b/dt from Newton cooling and joule heating ``I (V_t - OCV)`` (non-negative for either sign of I)."""
    p = cell.p
    ocv = open_circuit_voltage(float(s.c_s_pos[-1]), float(s.c_s_neg[-1]), cell)
    return (-p.h * (T_b - p.T_a) + I * (V_t - ocv)) / p.C_th


# ---------------------------------------------------------------------------
# Expansion


def particle_displacement(c_s: np.ndarray, strain, grid: RadialGrid) -> float:
    """Surface displacement u_R of a particle with volumetric strain function ``strain``."""
    return radial_moment_integral(strain(c_s), grid)


def expansion_outputs(s: PlantState, cell: Cell) -> tuple[float, float, float, float]:
    """Return ``(dt_neg, dt_pos, dt_th, dt_b)`` in metres."""
    p, m = cell.p, cell.m
    dt_neg = p.a_s_neg * p.L_neg * particle_displacement(s.c_s_neg, m.dV_neg, cell.grid_neg)
    dt_pos = p.a_s_pos * p.L_pos * particle_displacement(s.c_s_pos, m.dV_pos, cell.grid_pos)
    dt_th = p.alpha_th * (s.T_b - p.T0)
    dt_b = p.kappa_b * (dt_pos + dt_neg) + dt_th
    return dt_neg, dt_pos, dt_th, dt_b


def plant_outputs(s: PlantState, I: float, cell: Cell) -> PlantOutputs:
    vp = voltage_parts(float(s.c_s_pos[-1]), float(s.c_s_neg[-1]), s.c_e, I, s.T_b, cell)
    dt_neg, dt_pos, dt_th, dt_b = expansion_outputs(s, cell)
    c_avg_neg = volume_average(s.c_s_neg, cell.grid_neg)
    return PlantOutputs(
        V_t=vp.V_t, T_b=s.T_b, dt_b=dt_b,
        c_ss_neg=float(s.c_s_neg[-1]), c_ss_pos=float(s.c_s_pos[-1]),
        c_avg_neg=c_avg_neg, c_avg_pos=volume_average(s.c_s_pos, cell.grid_pos),
        eta_neg=vp.eta_neg, eta_pos=vp.eta_pos, phi_e=vp.phi_e,
        dt_neg=dt_neg, dt_pos=dt_pos, dt_th=dt_th,
        soc=soc_from_avg_concentration(cell.p, c_avg_neg),
    )


def solid_lithium(s: PlantState, cell: Cell) -> tuple[float, float]:
    """Moles of lithium in the negative and positive solid phases."""
    p = cell.p
    n_neg = p.eps_s_neg * p.L_neg * p.A * volume_average(s.c_s_neg, cell.grid_neg)
    n_pos = p.eps_s_pos * p.L_pos * p.A * volume_average(s.c_s_pos, cell.grid_pos)
    return n_neg, n_pos


# ---------------------------------------------------------------------------
# Time stepping


def advance_electrolyte(c_e: np.ndarray, I: float, dt: float, cell: Cell) -> np.ndarray:
    """Sub-cycled RK4 over ``dt`` at constant current, applied as its precomputed affine map."""
    return cell.e_propagator(dt)(c_e, I)


def check_plant_range(s: PlantState, cell: Cell, t: float | None = None) -> None:
    p = cell.p
    ok = (np.all(s.c_s_neg > 0) and np.all(s.c_s_neg < p.c_s_max_neg)
          and np.all(s.c_s_pos > 0) and np.all(s.c_s_pos < p.c_s_max_pos)
          and np.all(s.c_e > 0) and np.isfinite(s.T_b))
    if not ok:
        when = "" if t is None else f" at t = {t:.6g} s"
        raise PlantRangeError(f"plant state out of physical range{when}")


def step_plant(s: PlantState, I: float, dt: float, cell: Cell,
               t: float | None = None) -> tuple[PlantState, PlantOutputs]:
    """Advance the plant by ``dt`` at constant current and return the new state and its outputs.

    The electrolyte depends only on the current, so it is advanced first
    (sub-cycled RK4) and linearly interpolated inside the single RK4 step of
    the solid and thermal states.
    """
    p = cell.p
    nn = cell.grid_neg.n_nodes
    np_ = cell.grid_pos.n_nodes
    c_e0 = s.c_e
    c_e1 = advance_electrolyte(s.c_e, I, dt, cell)
    j_neg = intercalation_flux(I, NEG, p)
    j_pos = intercalation_flux(I, POS, p)

    def rhs(frac, y):
        c_neg, c_pos, T = y[:nn], y[nn:nn + np_], y[-1]
        c_e = c_e0 + frac * (c_e1 - c_e0)
        V = voltage_parts(c_pos[-1], c_neg[-1], c_e, I, T, cell).V_t
        ocv = open_circuit_voltage(c_pos[-1], c_neg[-1], cell)
        out = np.empty_like(y)
        out[:nn] = _sphere_rhs(c_neg, cell.grid_neg, p.D_s_neg, j_neg)
        out[nn:nn + np_] = _sphere_rhs(c_pos, cell.grid_pos, p.D_s_pos, j_pos)
        out[-1] = (-p.h * (T - p.T_a) + I * (V - ocv)) / p.C_th
        return out

    y0 = np.concatenate((s.c_s_neg, s.c_s_pos, [s.T_b]))
    try:
        y1 = rk4_step(y0, rhs, dt, stage_time=True)
    except KineticsError:
        when = "" if t is None else f" at t = {t:.6g} s"
        raise PlantRangeError(f"plant state out of physical range{when}") from None
    new = PlantState(y1[:nn], y1[nn:nn + np_], c_e1, float(y1[-1]))
    check_plant_range(new, cell, None if t is None else t + dt)
    return new, plant_outputs(new, I, cell)
