"""Method-of-lines grids, quadrature, Bessel series and explicit time stepping.

Both diffusion operators are vertex-centred finite volumes: every node owns a
control volume and fluxes are exchanged across the faces between nodes. The
discrete totals (shell-weighted for the sphere, porosity-weighted for the
electrolyte) therefore change only through the prescribed boundary fluxes and
source terms, to round-off.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np

from .params import ParamSet


class NonFiniteError(FloatingPointError):
    def __init__(self, msg: str, index: int | None = None):
        super().__init__(msg)
        self.index = index


class StabilityError(ValueError):
    pass


def _require_finite(x: np.ndarray, what: str) -> None:
    if not np.all(np.isfinite(x)):
        idx = int(np.flatnonzero(~np.isfinite(x))[0])
        raise NonFiniteError(f"non-finite {what} at component {idx}", idx)


@dataclass(frozen=True, eq=False)
class RadialGrid:
    """Uniform radial nodes r_i = i*dr, i = 0..n_shells, with spherical control volumes."""

    n_shells: int
    R_p: float
    r: np.ndarray = field(init=False, repr=False)
    dr: float = field(init=False)
    # \int rho^2 drho over each node's control volume (no 4*pi factor)
    volumes: np.ndarray = field(init=False, repr=False)
    # r_face^2 / dr for the n_shells interior faces
    face_coef: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.n_shells < 8:
            raise ValueError(f"n_shells must be >= 8 (got {self.n_shells})")
        if not self.R_p > 0:
            raise ValueError("R_p must be positive")
        n, R = self.n_shells, self.R_p
        dr = R / n
        r = np.arange(n + 1) * dr
        faces = (np.arange(n) + 0.5) * dr
        edges = np.concatenate(([0.0], faces, [R]))
        vol = (edges[1:] ** 3 - edges[:-1] ** 3) / 3.0
        object.__setattr__(self, "dr", dr)
        object.__setattr__(self, "r", r)
        object.__setattr__(self, "volumes", vol)
        object.__setattr__(self, "face_coef", faces**2 / dr)

    @property
    def n_nodes(self) -> int:
        return self.n_shells + 1


def spherical_diffusion_rhs(c: np.ndarray, grid: RadialGrid, D_s: float,
                            surface_flux: float) -> np.ndarray:
    """Time derivative of ``c`` for Fickian diffusion in a sphere.

    ``surface_flux`` is the outward molar flux at r = R_p, i.e. the boundary
    condition is ``D_s dc/dr(R_p) = -surface_flux``. The centre node reduces to
    the symmetric limit ``6 D_s (c_1 - c_0) / dr^2``.
    """
    c = np.asarray(c, dtype=float)
    if c.shape != (grid.n_nodes,):
        raise ValueError(f"expected {grid.n_nodes} nodes, got shape {c.shape}")
    _require_finite(c, "concentration")
    return _sphere_rhs(c, grid, D_s, surface_flux)


def _sphere_rhs(c, grid, D_s, surface_flux):
    q = (D_s * grid.face_coef) * np.diff(c)
    net = np.zeros_like(c)
    net[:-1] += q
    net[1:] -= q
    net[-1] -= grid.R_p**2 * surface_flux
    return net / grid.volumes


def radial_moment_integral(f: np.ndarray, grid: RadialGrid) -> float:
    """(1/R_p^2) * integral_0^R_p rho^2 f(rho) drho using the control-volume weights.

    The weights integrate rho^2 exactly, so a constant integrand returns
    ``f * R_p / 3`` to round-off; for smooth ``f`` the error is O(dr^2).
    """
    return float(np.dot(grid.volumes, f)) / grid.R_p**2


def volume_average(c: np.ndarray, grid: RadialGrid) -> float:
    return 3.0 * radial_moment_integral(c, grid) / grid.R_p


@dataclass(frozen=True, eq=False)
class PlanarGrid:
    """Three-region 1-D grid; the two interface nodes are shared by adjacent regions."""

    n_neg: int
    n_sep: int
    n_pos: int
    l_neg: float
    l_sep: float
    l_pos: float
    x: np.ndarray = field(init=False, repr=False)
    dx: np.ndarray = field(init=False, repr=False)        # per edge
    edge_region: np.ndarray = field(init=False, repr=False)  # 0/1/2 per edge

    def __post_init__(self):
        for name in ("n_neg", "n_sep", "n_pos"):
            if getattr(self, name) < 4:
                raise ValueError(f"{name} must be >= 4")
        xs, dxs, reg = [0.0], [], []
        x0 = 0.0
        for k, (n, l) in enumerate(((self.n_neg, self.l_neg), (self.n_sep, self.l_sep),
                                    (self.n_pos, self.l_pos))):
            h = l / (n - 1)
            for i in range(1, n):
                xs.append(x0 + i * h)
                dxs.append(h)
                reg.append(k)
            x0 += l
        object.__setattr__(self, "x", np.array(xs))
        object.__setattr__(self, "dx", np.array(dxs))
        object.__setattr__(self, "edge_region", np.array(reg))

    @classmethod
    def for_params(cls, p: ParamSet, n_neg=10, n_sep=10, n_pos=10) -> "PlanarGrid":
        return cls(n_neg, n_sep, n_pos, p.L_neg, p.L_sep, p.L_pos)

    @property
    def n_nodes(self) -> int:
        return self.n_neg + self.n_sep + self.n_pos - 2

    def region_slice(self, k: int) -> slice:
        """Nodes of region k (0 neg, 1 sep, 2 pos), including its interface nodes."""
        start = (0, self.n_neg - 1, self.n_neg + self.n_sep - 2)[k]
        n = (self.n_neg, self.n_sep, self.n_pos)[k]
        return slice(start, start + n)

    def region_lengths(self, k: int) -> np.ndarray:
        """Length of each node's control volume lying in region k."""
        out = np.zeros(self.n_nodes)
        half = np.where(self.edge_region == k, 0.5 * self.dx, 0.0)
        out[:-1] += half
        out[1:] += half
        return out


class ElectrolyteOperator(NamedTuple):
    cap: np.ndarray       # sum of eps_e * length over each control volume (m)
    g: np.ndarray         # effective diffusivity / dx per edge (m/s)
    src: np.ndarray       # source per ampere, mol/(m^2 s A)
    weights_neg: np.ndarray
    weights_pos: np.ndarray
    max_rate: float       # Gershgorin bound on the operator's spectral radius / 2


def electrolyte_operator(p: ParamSet, grid: PlanarGrid) -> ElectrolyteOperator:
    eps = np.array([p.eps_e_neg, p.eps_e_sep, p.eps_e_pos])
    # Each edge sits inside one region, so the face diffusivity is that region's value.
    D_eff = p.D_e * eps**p.brugg
    g = D_eff[grid.edge_region] / grid.dx
    lens = [grid.region_lengths(k) for k in range(3)]
    cap = sum(eps[k] * lens[k] for k in range(3))
    # I > 0 is charge: salt is consumed in the negative region and released in the positive.
    src = (1.0 - p.t_plus0) / (p.F * p.A) * (-lens[0] / p.L_neg + lens[2] / p.L_pos)
    conn = np.zeros(grid.n_nodes)
    conn[:-1] += g
    conn[1:] += g
    return ElectrolyteOperator(cap, g, src, lens[0] / lens[0].sum(),
                               lens[2] / lens[2].sum(), float(np.max(conn / cap)))


def _electrolyte_rhs(c_e, I, op: ElectrolyteOperator):
    q = op.g * np.diff(c_e)
    net = I * op.src
    net[:-1] += q
    net[1:] -= q
    return net / op.cap


def electrolyte_rhs(c_e: np.ndarray, I: float, p: ParamSet, grid: PlanarGrid,
                    op: ElectrolyteOperator | None = None) -> np.ndarray:
    """Time derivative of the electrolyte concentration on ``grid`` at current ``I`` (A, charge > 0)."""
    c_e = np.asarray(c_e, dtype=float)
    if c_e.shape != (grid.n_nodes,):
        raise ValueError(f"expected {grid.n_nodes} nodes, got shape {c_e.shape}")
    _require_finite(c_e, "electrolyte concentration")
    if op is None:
        op = electrolyte_operator(p, grid)
    return _electrolyte_rhs(c_e, I, op)


def electrolyte_total(c_e: np.ndarray, op: ElectrolyteOperator) -> float:
    """Salt per unit electrode area, sum of eps_e * c_e over control volumes (mol/m^2)."""
    return float(np.dot(op.cap, c_e))


def electrolyte_substeps(dt: float, op: ElectrolyteOperator, safety: float = 2.5) -> int:
    """RK4 sub-steps per ``dt`` that keep the electrolyte update inside the stability region."""
    return max(1, math.ceil(dt * 2.0 * op.max_rate / safety))


def subcycled_electrolyte(c_e: np.ndarray, I: float, dt: float, op: ElectrolyteOperator) -> np.ndarray:
    """Sub-cycled RK4 over ``dt`` at constant current."""
    n = electrolyte_substeps(dt, op)
    h = dt / n
    rhs = lambda c: _electrolyte_rhs(c, I, op)  # noqa: E731
    for _ in range(n):
        c_e = rk4_step(c_e, rhs, h)
    return c_e


class ElectrolytePropagator(NamedTuple):
    """The sub-cycled RK4 map over one step, c_e -> M c_e + I b (exact: the operator is affine)."""

    M: np.ndarray
    b: np.ndarray
    dt: float

    def __call__(self, c_e: np.ndarray, I: float) -> np.ndarray:
        out = self.M @ c_e + I * self.b
        _require_finite(out, "electrolyte concentration")
        return out


def electrolyte_propagator(dt: float, op: ElectrolyteOperator) -> ElectrolytePropagator:
    n = len(op.cap)
    eye = np.eye(n)
    M = np.column_stack([subcycled_electrolyte(eye[:, k], 0.0, dt, op) for k in range(n)])
    b = subcycled_electrolyte(np.zeros(n), 1.0, dt, op)
    return ElectrolytePropagator(M, b, dt)


# ---------------------------------------------------------------------------
# Modified Bessel functions of the first kind


def _bessel_scaled_series(order: int, w: float) -> float:
    """I_nu(z) / z^nu as a series in w = z^2 (valid for negative w as well)."""
    q = w / 4.0
    term = 1.0 / (2.0**order * math.factorial(order))
    total = term
    k = 0
    while True:
        k += 1
        term *= q / (k * (k + order))
        total += term
        if abs(term) < 1e-15 * abs(total) or k > 500:
            return total


def bessel_I(order: int, z: float) -> float:
    """Modified Bessel function I_1 or I_2 by its ascending series, for 0 <= z <= 50."""
    if order not in (1, 2):
        raise ValueError("order must be 1 or 2")
    if not 0.0 <= z <= 50.0:
        raise ValueError(f"z out of domain [0, 50]: {z!r}")
    return z**order * _bessel_scaled_series(order, z * z)


# ---------------------------------------------------------------------------
# Time stepping


@dataclass(frozen=True)
class StepperConfig:
    dt: float = 0.5
    method: str = "rk4"

    def __post_init__(self):
        if not self.dt > 0:
            raise StabilityError(f"dt must be positive (got {self.dt!r})")
        if self.method != "rk4":
            raise ValueError(f"unsupported method {self.method!r}")

    def check(self, *grids_and_diffusivities: tuple[RadialGrid, float]) -> None:
        """Raise StabilityError unless dt <= 0.2 dr^2 / D for every (grid, D) pair."""
        for grid, D in grids_and_diffusivities:
            bound = 0.2 * grid.dr**2 / D
            if self.dt > bound:
                raise StabilityError(
                    f"dt = {self.dt} s exceeds the diffusion stability bound "
                    f"{bound:.4g} s (dr = {grid.dr:.3g} m, D = {D:.3g} m^2/s)")


def rk4_step(y: np.ndarray, rhs: Callable, dt: float, stage_time: bool = False) -> np.ndarray:
    """One classical Runge-Kutta step.

    With ``stage_time`` the right-hand side is called as ``rhs(frac, y)`` where
    ``frac`` in {0, 1/2, 1} is the stage position within the step.
    """
    if stage_time:
        f = rhs
    else:
        f = lambda _frac, v: rhs(v)  # noqa: E731
    k1 = f(0.0, y)
    k2 = f(0.5, y + 0.5 * dt * k1)
    k3 = f(0.5, y + 0.5 * dt * k2)
    k4 = f(1.0, y + dt * k3)
    out = y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    _require_finite(np.atleast_1d(out), "state after RK4 step")
    return out
