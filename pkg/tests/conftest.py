import numpy as np
import pytest

from spmexp.params import load_params
from spmexp.plant import Cell, initial_plant_state, solid_lithium, step_plant
from spmexp.numerics import electrolyte_total


@pytest.fixture(scope="session")
def params():
    return load_params()


@pytest.fixture(scope="session")
def cell(params):
    p, m = params
    return Cell.build(p, m)


@pytest.fixture(scope="session")
def cc_run(cell):
    """1C charge from SOC 0.05 for 3600 s at dt = 0.5 s, plant only."""
    p = cell.p
    I = p.one_c_current()
    s = initial_plant_state(cell, 0.05)
    n0 = solid_lithium(s, cell)
    salt0 = electrolyte_total(s.c_e, cell.e_op)
    V, c_neg, c_pos, salt = [], [], [], []
    for _ in range(7200):
        s, o = step_plant(s, I, 0.5, cell)
        V.append(o.V_t)
        c_neg.append(o.c_avg_neg)
        c_pos.append(o.c_avg_pos)
        salt.append(electrolyte_total(s.c_e, cell.e_op))
    return dict(I=I, state=s, out=o, n0=n0, salt0=salt0, V=np.array(V),
                c_avg_neg=np.array(c_neg), c_avg_pos=np.array(c_pos), salt=np.array(salt))


def pytest_terminal_summary(terminalreporter):
    from tests import _acceptance_log

    if _acceptance_log.LINES:
        terminalreporter.section("acceptance criteria")
        for line in _acceptance_log.LINES:
            terminalreporter.write_line(line)
