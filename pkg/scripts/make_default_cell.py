"""Regenerate the bundled parameter file src/spmexp/data/default_cell.json.

The cell is an illustrative graphite / layered-oxide pouch cell. The negative
OCP is a published graphite fit; the positive OCP and both strain curves are
smooth literature-style stand-ins. The positive electrode thickness is chosen
so both electrodes cycle the same amount of lithium between 0 and 100 % SOC.
"""
import json
from pathlib import Path

import numpy as np

OUT = Path(__file__).resolve().parents[1] / "src" / "spmexp" / "data" / "default_cell.json"


def u_neg(x):
    return (1.9793 * np.exp(-39.3631 * x) + 0.2482 - 0.0909 * np.tanh(29.8538 * (x - 0.1234))
            - 0.04478 * np.tanh(14.9159 * (x - 0.2769)) - 0.0205 * np.tanh(30.4444 * (x - 0.6103)))


def u_pos(y):
    # steep enough over the cycling window for the voltage inversion to resolve c_ss+
    return 4.9 - 1.5 * y - 0.012 / (1.03 - y)


def main():
    c_max_neg, c_max_pos = 30555.0, 49000.0
    eps_neg, l_neg, x0, x100 = 0.6, 85e-6, 0.05, 0.85
    eps_pos, y0, y100 = 0.5, 0.90, 0.35
    l_pos = eps_neg * l_neg * c_max_neg * (x100 - x0) / (eps_pos * c_max_pos * (y0 - y100))

    xs = np.unique(np.round(np.concatenate(
        [np.linspace(0, 0.1, 11), np.linspace(0.1, 0.3, 11), np.linspace(0.3, 1, 15)]), 4))
    ys = np.round(np.linspace(0, 1, 41), 4)
    th = np.linspace(0, 1, 21)
    strain_neg = 0.105 * th**2 + 0.005 * th     # grows fastest late in lithiation
    th_pos = np.linspace(0, 1, 11)
    strain_pos = 0.02 * th_pos - 0.01 * th_pos**2

    d = dict(
        description="Illustrative graphite/layered-oxide pouch cell. Literature-style stand-in values, not a measured cell.",
        L_neg_m=l_neg, L_sep_m=25e-6, L_pos_m=l_pos, A_m2=0.15,
        R_p_neg_m=10e-6, R_p_pos_m=5e-6,
        eps_s_neg=eps_neg, eps_s_pos=eps_pos, eps_e_neg=0.3, eps_e_sep=0.45, eps_e_pos=0.3,
        brugg=1.5,
        D_s_neg_m2_s=3.9e-14, D_s_pos_m2_s=2e-14, D_e_m2_s=2.5e-10,
        t_plus0=0.38, t_f=1.0, kappa_S_m=1.0,
        k0_neg=6.48e-7, k0_pos=3.42e-6, alpha=0.5,
        R_f_neg_ohm_m2=1e-3, R_f_pos_ohm_m2=1e-3,
        c_s_max_neg_mol_m3=c_max_neg, c_s_max_pos_mol_m3=c_max_pos, c_e0_mol_m3=1000.0,
        x0=x0, x100=x100, y0=y0, y100=y100,
        C_th_J_K=100.0, h_W_K=0.5, alpha_th_m_K=1e-6, T0_K=298.15, T_a_K=298.15,
        kappa_b=20.0, n_layers=20,
        F_C_mol=96485.33212, R_gas_J_mol_K=8.314462618,
        U_pos_V=[[float(a), round(float(b), 6)] for a, b in zip(ys, u_pos(ys))],
        U_neg_V=[[float(a), round(float(b), 6)] for a, b in zip(xs, u_neg(xs))],
        dV_pos=[[round(float(a * c_max_pos), 6), round(float(b), 8)] for a, b in zip(th_pos, strain_pos)],
        dV_neg=[[round(float(a * c_max_neg), 6), round(float(b), 8)] for a, b in zip(th, strain_neg)],
    )
    OUT.write_text(json.dumps(d, indent=1) + "\n")
    print(f"wrote {OUT}")


if __name__ == "__main__":
    main()
