"""Cell parameters, material curves, aging drift and initial conditions."""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import NamedTuple

import numpy as np


class ParamError(ValueError):
    """Raised when a parameter file or parameter set is invalid."""


NEG = "neg"
POS = "pos"
ELECTRODES = (NEG, POS)


class Electrode(NamedTuple):
    """Per-electrode view of a ParamSet (SI units)."""

    l: float
    A: float
    R_p: float
    eps_s: float
    eps_e: float
    a_s: float
    D_s: float
    k0: float
    R_f: float
    c_s_max: float


@dataclass(frozen=True)
class ParamSet:
    L_neg: float
    L_sep: float
    L_pos: float
    A: float
    R_p_neg: float
    R_p_pos: float
    eps_s_neg: float
    eps_s_pos: float
    eps_e_neg: float
    eps_e_sep: float
    eps_e_pos: float
    D_s_neg: float
    D_s_pos: float
    D_e: float
    t_plus0: float
    kappa: float
    k0_neg: float
    k0_pos: float
    R_f_neg: float
    R_f_pos: float
    c_s_max_neg: float
    c_s_max_pos: float
    c_e0: float
    x0: float
    x100: float
    y0: float
    y100: float
    C_th: float
    h: float
    alpha_th: float
    T0: float
    T_a: float
    kappa_b: float
    brugg: float = 1.5
    t_f: float = 1.0
    alpha: float = 0.5
    n_layers: int = 1
    F: float = 96485.33212
    R_gas: float = 8.314462618

    def __post_init__(self):
        validate(self)

    @property
    def a_s_neg(self) -> float:
        return 3.0 * self.eps_s_neg / self.R_p_neg

    @property
    def a_s_pos(self) -> float:
        return 3.0 * self.eps_s_pos / self.R_p_pos

    @property
    def L_total(self) -> float:
        return self.L_neg + self.L_sep + self.L_pos

    def electrode(self, which: str) -> Electrode:
        if which == NEG:
            return Electrode(self.L_neg, self.A, self.R_p_neg, self.eps_s_neg,
                             self.eps_e_neg, self.a_s_neg, self.D_s_neg,
                             self.k0_neg, self.R_f_neg, self.c_s_max_neg)
        if which == POS:
            return Electrode(self.L_pos, self.A, self.R_p_pos, self.eps_s_pos,
                             self.eps_e_pos, self.a_s_pos, self.D_s_pos,
                             self.k0_pos, self.R_f_pos, self.c_s_max_pos)
        raise ValueError(f"unknown electrode {which!r}")

    def capacity_Ah(self) -> float:
        """Nominal capacity from the negative-electrode stoichiometric window."""
        mol = self.eps_s_neg * self.L_neg * self.A * self.c_s_max_neg * (self.x100 - self.x0)
        return mol * self.F / 3600.0

    def one_c_current(self) -> float:
        return self.capacity_Ah()


def validate(p: ParamSet) -> None:
    """Check every ParamSet invariant, raising ParamError naming the first violation."""
    for name in ("L_neg", "L_sep", "L_pos", "A", "R_p_neg", "R_p_pos", "D_s_neg",
                 "D_s_pos", "D_e", "kappa", "k0_neg", "k0_pos", "c_s_max_neg",
                 "c_s_max_pos", "c_e0", "C_th", "h", "T0", "T_a", "F", "R_gas"):
        v = getattr(p, name)
        if not (np.isfinite(v) and v > 0):
            raise ParamError(f"{name} must be strictly positive (got {v!r})")
    for name in ("eps_s_neg", "eps_s_pos", "eps_e_neg", "eps_e_sep", "eps_e_pos",
                 "t_plus0"):
        v = getattr(p, name)
        if not 0.0 < v < 1.0:
            short = name.rsplit("_", 1)[0] if name.startswith("eps") else name
            raise ParamError(f"{short} out of (0,1): {name} = {v!r}")
    if not 0.0 < p.x0 < p.x100 <= 1.0:
        raise ParamError(f"stoichiometry window violates 0 < x0 < x100 <= 1 "
                         f"(x0={p.x0!r}, x100={p.x100!r})")
    if not 0.0 < p.y100 < p.y0 <= 1.0:
        raise ParamError(f"stoichiometry window violates 0 < y100 < y0 <= 1 "
                         f"(y100={p.y100!r}, y0={p.y0!r})")
    if p.R_f_neg < 0 or p.R_f_pos < 0:
        raise ParamError("film resistance must be non-negative")
    if not 0.0 < p.alpha < 1.0:
        raise ParamError(f"alpha out of (0,1): {p.alpha!r}")
    if p.kappa_b < 0 or p.alpha_th < 0:
        raise ParamError("kappa_b and alpha_th must be non-negative")
    if p.t_f <= 0 or p.brugg <= 0 or p.n_layers < 1:
        raise ParamError("t_f, brugg must be positive and n_layers >= 1")


class Curve:
    """Piecewise-linear sampled curve, clamped to the end values outside its range."""

    def __init__(self, x, y, name: str = "curve"):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        if x.ndim != 1 or x.shape != y.shape:
            raise ParamError(f"{name}: abscissae and ordinates must be 1-D and equal length")
        if len(x) < 8:
            raise ParamError(f"{name}: need at least 8 sample points (got {len(x)})")
        if not np.all(np.isfinite(x)) or not np.all(np.isfinite(y)):
            raise ParamError(f"{name}: non-finite sample")
        if not np.all(np.diff(x) > 0):
            raise ParamError(f"{name}: abscissae must be strictly increasing")
        self.x = x
        self.y = y
        self.name = name
        # Python-float copies for the scalar fast path.
        self._xl = x.tolist()
        self._yl = y.tolist()

    def __call__(self, v):
        return np.interp(v, self.x, self.y)

    def scalar(self, v: float) -> float:
        xl, yl = self._xl, self._yl
        if v <= xl[0]:
            return yl[0]
        if v >= xl[-1]:
            return yl[-1]
        lo, hi = 0, len(xl) - 1
        while hi - lo > 1:
            mid = (lo + hi) >> 1
            if xl[mid] <= v:
                lo = mid
            else:
                hi = mid
        w = (v - xl[lo]) / (xl[hi] - xl[lo])
        return yl[lo] + w * (yl[hi] - yl[lo])

    def is_monotone(self, lo=None, hi=None) -> int:
        """Return -1 / +1 if non-increasing / non-decreasing on the sampled points in [lo, hi], else 0."""
        mask = np.ones_like(self.x, dtype=bool)
        if lo is not None:
            mask &= self.x >= lo
        if hi is not None:
            mask &= self.x <= hi
        d = np.diff(self.y[mask])
        if np.all(d <= 0):
            return -1
        if np.all(d >= 0):
            return 1
        return 0

    def to_pairs(self) -> list[list[float]]:
        return [[a, b] for a, b in zip(self._xl, self._yl)]


@dataclass(frozen=True)
class MaterialCurves:
    U_pos: Curve    # stoichiometry -> V
    U_neg: Curve    # stoichiometry -> V
    dV_pos: Curve   # concentration (mol/m^3) -> volumetric strain
    dV_neg: Curve


@dataclass(frozen=True)
class DriftSpec:
    scale_x100: float = 1.0
    scale_y0: float = 1.0
    scale_eps_s_neg: float = 1.0

    def __post_init__(self):
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if not 0.0 < v <= 1.5:
                raise ParamError(f"drift multiplier {f.name} out of (0, 1.5]: {v!r}")

    @property
    def is_identity(self) -> bool:
        return self.scale_x100 == 1.0 and self.scale_y0 == 1.0 and self.scale_eps_s_neg == 1.0


# JSON key -> ParamSet field. Units live in the key names.
_KEYS = {
    "L_neg_m": "L_neg", "L_sep_m": "L_sep", "L_pos_m": "L_pos", "A_m2": "A",
    "R_p_neg_m": "R_p_neg", "R_p_pos_m": "R_p_pos",
    "eps_s_neg": "eps_s_neg", "eps_s_pos": "eps_s_pos",
    "eps_e_neg": "eps_e_neg", "eps_e_sep": "eps_e_sep", "eps_e_pos": "eps_e_pos",
    "brugg": "brugg",
    "D_s_neg_m2_s": "D_s_neg", "D_s_pos_m2_s": "D_s_pos", "D_e_m2_s": "D_e",
    "t_plus0": "t_plus0", "t_f": "t_f", "kappa_S_m": "kappa",
    "k0_neg": "k0_neg", "k0_pos": "k0_pos", "alpha": "alpha",
    "R_f_neg_ohm_m2": "R_f_neg", "R_f_pos_ohm_m2": "R_f_pos",
    "c_s_max_neg_mol_m3": "c_s_max_neg", "c_s_max_pos_mol_m3": "c_s_max_pos",
    "c_e0_mol_m3": "c_e0",
    "x0": "x0", "x100": "x100", "y0": "y0", "y100": "y100",
    "C_th_J_K": "C_th", "h_W_K": "h", "alpha_th_m_K": "alpha_th",
    "T0_K": "T0", "T_a_K": "T_a",
    "kappa_b": "kappa_b", "n_layers": "n_layers",
    "F_C_mol": "F", "R_gas_J_mol_K": "R_gas",
}
_OPTIONAL = {"brugg", "t_f", "alpha", "n_layers", "F", "R_gas"}
_CURVES = ("U_pos_V", "U_neg_V", "dV_pos", "dV_neg")
_IGNORED = {"description"}


def default_params_path() -> Path:
    return Path(str(resources.files("spmexp") / "data" / "default_cell.json"))


def params_from_dict(doc: dict) -> tuple[ParamSet, MaterialCurves]:
    if not isinstance(doc, dict):
        raise ParamError("parameter file must contain a JSON object")
    unknown = set(doc) - set(_KEYS) - set(_CURVES) - _IGNORED
    if unknown:
        raise ParamError(f"unknown field(s): {', '.join(sorted(unknown))}")
    kwargs = {}
    for key, field in _KEYS.items():
        if key not in doc:
            if field in _OPTIONAL:
                continue
            raise ParamError(f"missing required field {key!r}")
        v = doc[key]
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ParamError(f"field {key!r} must be a number (got {type(v).__name__})")
        if field == "n_layers":
            if int(v) != v:
                raise ParamError(f"field {key!r} must be an integer")
            v = int(v)
        kwargs[field] = float(v) if field != "n_layers" else v
    curves = {}
    for key in _CURVES:
        if key not in doc:
            raise ParamError(f"missing required field {key!r}")
        pairs = doc[key]
        if (not isinstance(pairs, list)
                or not all(isinstance(q, list) and len(q) == 2 for q in pairs)):
            raise ParamError(f"field {key!r} must be an array of [abscissa, ordinate] pairs")
        arr = np.asarray(pairs, dtype=float)
        curves[key] = Curve(arr[:, 0], arr[:, 1], name=key)
    p = ParamSet(**kwargs)
    m = MaterialCurves(U_pos=curves["U_pos_V"], U_neg=curves["U_neg_V"],
                       dV_pos=curves["dV_pos"], dV_neg=curves["dV_neg"])
    return p, m


def load_params(path=None) -> tuple[ParamSet, MaterialCurves]:
    """Load and validate a parameter file; ``None`` loads the bundled default cell."""
    path = default_params_path() if path is None else Path(path)
    try:
        doc = json.loads(path.read_text())
    except FileNotFoundError:
        raise ParamError(f"parameter file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ParamError(f"{path}: invalid JSON ({exc})") from None
    return params_from_dict(doc)


def params_to_dict(p: ParamSet, m: MaterialCurves) -> dict:
    inv = {v: k for k, v in _KEYS.items()}
    doc = {inv[f.name]: getattr(p, f.name) for f in dataclasses.fields(p)}
    doc["U_pos_V"] = m.U_pos.to_pairs()
    doc["U_neg_V"] = m.U_neg.to_pairs()
    doc["dV_pos"] = m.dV_pos.to_pairs()
    doc["dV_neg"] = m.dV_neg.to_pairs()
    return doc


def apply_drift(p: ParamSet, d: DriftSpec) -> ParamSet:
    """Return an aged copy of ``p``; validation of the result happens on construction."""
    return dataclasses.replace(
        p,
        x100=p.x100 * d.scale_x100,
        y0=p.y0 * d.scale_y0,
        eps_s_neg=p.eps_s_neg * d.scale_eps_s_neg,
    )


def _check_soc(soc0):
    if not 0.0 <= soc0 <= 1.0:
        raise ParamError(f"soc0 outside [0, 1]: {soc0!r}")


def initial_concentrations(p: ParamSet, soc0: float) -> tuple[float, float]:
    """Uniform initial solid concentrations ``(c_s0_pos, c_s0_neg)`` for a given SOC."""
    _check_soc(soc0)
    c_pos = p.c_s_max_pos * (soc0 * (p.y100 - p.y0) + p.y0)
    c_neg = p.c_s_max_neg * (soc0 * (p.x100 - p.x0) + p.x0)
    return c_pos, c_neg


def soc_from_avg_concentration(p: ParamSet, c_avg_neg: float) -> float:
    # not clamped: transients may leave [0, 1]
    return (c_avg_neg / p.c_s_max_neg - p.x0) / (p.x100 - p.x0)
