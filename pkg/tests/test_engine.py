import dataclasses
import math

import numpy as np
import pytest

from conftest import single_follower
from petcor.diagnostics import DiagnosticsConfig
from petcor.engine import run
from petcor.errors import ContractViolation, SimulationFault
from petcor.exosys import expm
from petcor.observer import ObserverParams
from petcor.petfilter import FilterParams
from petcor.plant import make_nonlinearity
from petcor.predictor import ControllerConfig, residual_R

ROT = ((0.0, 1.0), (-1.0, 0.0))


def test_zero_horizon_gives_one_row():
    tr = run(single_follower(t_end=0.0))
    assert tr.t.shape == (1,) and tr.X.shape == (1, 1, 1)
    assert tr.X[0, 0, 0] == 1.0


def test_rest_stays_at_rest():
    tr = run(single_follower(t_end=0.5, X0=0.0, f=make_nonlinearity("paper_f"), K=-3.0))
    assert np.all(tr.X == 0.0) and np.all(tr.U == 0.0)


def test_scalar_closed_form():
    # zero leader, exact delay: x stays put for t < D, then decays at rate K.
    # The start-up jump of U sits inside one prediction cell while t < D, so
    # the grid is refined to keep that cell's error below the tolerance.
    K, D, x0 = -2.0, 0.2, 1.0
    tr = run(single_follower(t_end=2.0, K=K, D=D, X0=x0, Nx=200))
    x = tr.X[:, 0, 0]
    exact = np.where(tr.t < D, x0, x0 * np.exp(K * (tr.t - D)))
    assert np.abs(x - exact).max() < 1e-4


def test_state_is_frozen_until_the_first_input_arrives():
    tr = run(single_follower(t_end=0.5, K=-2.0, D=0.2, X0=1.0))
    assert np.all(tr.X[tr.t <= 0.2 + 1e-12, 0, 0] == 1.0)


def test_repeat_runs_are_identical():
    sc = single_follower(t_end=1.0, f=make_nonlinearity("paper_f"), K=-4.0, S=ROT, v0=(1.0, 0.0))
    a, b = run(sc), run(sc)
    assert np.array_equal(a.X, b.X) and np.array_equal(a.U, b.U)
    assert a.net_events == b.net_events


def test_events_lie_on_their_grids():
    sc = single_follower(t_end=1.0, f=make_nonlinearity("paper_f"), K=-4.0, S=ROT, v0=(1.0, 0.0),
                         period=0.02)
    sc = dataclasses.replace(sc, filters=[FilterParams(-5.0, 0.01, 0.05, 0.1)])
    tr = run(sc)
    assert tr.net_events and tr.sensor_events
    for ev in tr.net_events:
        assert ev.tick % 20 == 0
    for ev in tr.sensor_events:
        assert ev.tick % 10 == 0
    init = [ev for ev in tr.net_events if ev.kind == "init"]
    assert {(ev.sender, ev.receiver) for ev in init} == {(0, 1), (1, 1)}
    assert all(ev.t == 0.0 for ev in init)


def test_prediction_cancels_delay_with_exact_leader_information():
    # with a near-continuous observer, U(t - D) minus the residual equals
    # K times the regulated state once transients are gone
    K, D = -4.0, 0.15
    f = make_nonlinearity("paper_f")
    sc = single_follower(t_end=8.0, f=f, K=K, D=D, S=ROT, v0=(1.0, 0.0), X0=0.5)
    tr = run(dataclasses.replace(sc, observer=ObserverParams(3.0, 3.0, 1e-8, 1e-8, 0.2, 0.2)))
    lag = int(round(D / tr.h))
    worst = 0.0
    for k in range(int(4.0 / tr.h), len(tr.t), 50):
        S_lag = tr.S_hat[k - lag, 0].reshape(2, 2)
        u_hat0 = tr.U[k - lag, 0] - residual_R(expm(S_lag, D) @ tr.v_hat[k - lag, 0], S_lag, f)
        X_bar = tr.X[k, 0, 0] - tr.v[k, 0]
        worst = max(worst, abs(u_hat0 - K * X_bar))
    assert worst < 1e-3


def test_fast_sensor_matches_direct_feedback():
    # 1 ms sensor period, negligible trigger threshold and a filter gain fast
    # enough that its own transient stays small
    base = single_follower(t_end=3.0, h=5e-4, f=make_nonlinearity("paper_f"), K=-4.0, S=ROT,
                           v0=(1.0, 0.0))
    direct = run(base)
    filtered = run(dataclasses.replace(base, filters=[FilterParams(-100.0, 0.001, 1e-6, 0.1)]))
    assert np.abs(direct.X - filtered.X).max() < 5e-2


def test_diagnostics_columns_present():
    sc = single_follower(t_end=0.5, f=make_nonlinearity("paper_f"), K=-4.0, S=ROT, v0=(1.0, 0.0))
    tr = run(dataclasses.replace(sc, diagnostics=DiagnosticsConfig(stride=5)))
    sampled = tr.V[::5, 0]
    assert np.all(np.isfinite(sampled)) and np.all(sampled >= 0)
    assert np.isnan(tr.V[1, 0])
    assert np.abs(tr.w_end[::5, 0]).max() < 1e-12


def test_scenario_validation():
    with pytest.raises(ContractViolation, match="period"):
        single_follower(h=0.003, period=0.01)
    with pytest.raises(ContractViolation, match="multiple of h"):
        single_follower(t_end=0.0105)
    sc = single_follower()
    with pytest.raises(ContractViolation):
        dataclasses.replace(sc, plants=sc.plants * 2)
    with pytest.raises(ContractViolation, match="first-order"):
        chain = make_nonlinearity("chain_linear", coeffs=[0.0, 0.0])
        from petcor.plant import FollowerPlant
        dataclasses.replace(sc, plants=[FollowerPlant(chain, 0.1, [0.0, 0.0])],
                            controllers=[ControllerConfig([-1.0, -2.0], 0.1)],
                            filters=[FilterParams(-5.0, 0.01, 0.05, 0.1)])


def test_fault_carries_time_and_agent():
    # understated Lipschitz constant lets an unstable plant through until the
    # prediction overflows
    f = make_nonlinearity("linear", a=1e6)
    sc = single_follower(t_end=0.1, f=f, K=-2e6, D=1.0)
    with pytest.raises(SimulationFault) as info:
        run(sc)
    assert info.value.agent == 1
    assert math.isfinite(info.value.t) and 0.0 <= info.value.t <= 0.1
