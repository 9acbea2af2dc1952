import warnings

import numpy as np
import pytest

from petcor.engine import Scenario
from petcor.exosys import Exosystem
from petcor.observer import ObserverParams
from petcor.plant import FollowerPlant, make_nonlinearity
from petcor.predictor import ControllerConfig
from petcor.topology import CommGraph

# Filled by test_acceptance.py: criterion number -> (passed, detail)
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")


def single_follower(t_end=1.0, h=1e-3, f=None, K=-2.0, D=0.1, D_hat=None, X0=1.0,
                    S=((0.0,),), v0=(0.0,), Nx=20, period=0.01):
    """One follower pinned to a leader; defaults give a static zero leader."""
    f = f or make_nonlinearity("zero")
    exo = Exosystem(np.array(S, dtype=float), np.array(v0, dtype=float))
    g = CommGraph.from_edges(1, [(0, 1, 1.0, period)], {1: period})
    plant = FollowerPlant(f, D, [X0])
    ctrl = ControllerConfig(K, D if D_hat is None else D_hat, Nx, ell=f.lipschitz)
    obs = ObserverParams(3.0, 3.0, 0.05, 0.05, 0.2, 0.2)
    return Scenario(exo, g, [plant], [ctrl], obs, t_end, h)


@pytest.fixture
def quiet_warnings():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        yield
