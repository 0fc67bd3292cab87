import csv
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hlfszo.core import HlfszoError, NonFiniteError
from hlfszo.es_sim import (EsParams, EsState, average_dynamics, discretization_bridge, es_rhs,
                           integrate_es, write_trajectory_csv)
from hlfszo.objectives import RidgeObjective, gen_ridge
from hlfszo.optimizers import FeasibilityError
from hlfszo.sampling import RngStream
from hlfszo.verify import rk4_orders, tracking_error


def test_unfiltered_rhs_constant_f():
    p = EsParams(a=0.1, omega=3.0)
    t = 0.4
    d = es_rhs(EsState(x=2.0, t=t), p, lambda x: 5.0 + 0 * x)
    assert d.x == pytest.approx(-(2 * 5.0 / 0.1) * math.sin(3.0 * t), rel=1e-15)
    assert d.t == 1.0


def test_unfiltered_constant_f_returns_after_one_period():
    p = EsParams(a=0.1, omega=2.0)
    tr = integrate_es(1.0, p, lambda x: 5.0 + 0 * x, p.period, p.period / 200)
    assert abs(tr.x[-1] - 1.0) <= 1e-9
    assert tr.t[-1] == p.period


def test_filtered_rhs_without_high_pass_passes_measurement():
    p = EsParams(a=0.5, omega=1.0, omega_H=0.0, omega_L=2.0, use_filters=True)
    t = 1.1
    v = 7.0
    d = es_rhs(EsState(x=0.0, xi=123.0, y=0.25, t=t), p, lambda x: v + 0 * x)
    g = (2 / 0.5) * v * math.sin(t)
    assert d.y == pytest.approx(2.0 * (g - 0.25), rel=1e-14)
    assert d.x == -0.25


def test_high_pass_rejects_constant_input():
    c, wH = 3.0, 5.0
    p = EsParams(a=0.1, omega=200.0, omega_H=wH, omega_L=1e-9, use_filters=True)
    tr = integrate_es(0.0, p, lambda x: c + 0 * x, 2.0, p.period / 40)
    z = c - wH * tr.xi
    bound = abs(z[0]) * np.exp(-wH * tr.t) + 1e-6
    assert np.all(np.abs(z) <= bound)


def test_integrate_horizon_zero():
    tr = integrate_es(0.7, EsParams(a=0.1, omega=10.0), lambda x: x * x, 0.0, 0.01)
    assert len(tr) == 1 and tr.x[0] == 0.7 and tr.evaluations == 0


def test_integrate_rejects_coarse_step():
    p = EsParams(a=0.1, omega=10.0)
    with pytest.raises(HlfszoError):
        integrate_es(1.0, p, lambda x: x * x, 1.0, p.period / 10)


def test_integrate_lands_on_horizon_and_samples():
    p = EsParams(a=0.1, omega=10.0)
    tr = integrate_es(1.0, p, lambda x: x * x, 1.0, 0.03, sample_every=5)
    assert tr.t[-1] == 1.0 and tr.step[-1] == 34
    assert tr.evaluations == 4 * 34
    assert list(tr.step[:3]) == [0, 5, 10]


def test_integrate_flags_divergence():
    p = EsParams(a=0.1, omega=10.0)
    tr = integrate_es(1.0, p, lambda x: -np.exp(np.minimum(x, 700.0)) * 1e30, 10.0, 0.01)
    assert tr.diverged and tr.t[-1] < 10.0


def test_state_rejects_non_finite():
    with pytest.raises(NonFiniteError):
        EsState(x=float("nan"))


def test_tracking_averaged_gradient_flow():
    assert tracking_error() <= 0.05


def test_rk4_order():
    assert all(3.5 <= o <= 4.5 for o in rk4_orders())


def test_average_dynamics_examples():
    for a in (1e-3, 0.1, 2.0):
        assert abs(average_dynamics(lambda x: x * x, 1.0, a, 50.0) - 2.0) <= 1e-10
    assert abs(average_dynamics(lambda x: 4.0 + 0 * x, 0.3, 0.01, 1.0)) <= 1e-10
    e1 = abs(average_dynamics(lambda x: x ** 4, 1.0, 0.01, 1.0) - 4)
    e2 = abs(average_dynamics(lambda x: x ** 4, 1.0, 0.005, 1.0) - 4)
    assert 3.0 <= e1 / e2 <= 5.0


def test_average_dynamics_rejects_bad_input():
    with pytest.raises(ValueError):
        average_dynamics(lambda x: x, 0.0, 0.0, 1.0)
    with pytest.raises(ValueError):
        average_dynamics(lambda x: x, 0.0, 0.1, 1.0, panels=10, order=10)


@settings(max_examples=20, deadline=None)
@given(p=st.floats(-3, 3), q=st.floats(-3, 3), s=st.floats(-3, 3), x=st.floats(-3, 3),
       a=st.floats(1e-3, 1.0), w=st.floats(0.5, 100))
def test_average_dynamics_exact_on_quadratics(p, q, s, x, a, w):
    h = average_dynamics(lambda t: p * t * t + q * t + s, x, a, w)
    assert abs(h - (2 * p * x + q)) <= 1e-10


@pytest.mark.parametrize("delta,wH,wL", [(0.02, 30.0, 20.0), (0.005, 100.0, 50.0), (0.01, 50.0, 100.0)])
def test_bridge_exact(delta, wH, wL):
    p = EsParams(a=0.1, omega=1.0, omega_H=wH, omega_L=wL, use_filters=True)
    rep = discretization_bridge(p, delta, steps=3000)
    assert not rep.diverged and rep.steps == 3000
    assert rep.max_rel_deviation <= 1e-12
    assert rep.hyperparams.beta == pytest.approx(delta * wH)


def test_bridge_on_ridge():
    obj = RidgeObjective(gen_ridge(4, 30, np.ones(4), 0.1, 0.3, RngStream(1)))
    p = EsParams(a=0.1, omega=1.0, omega_H=1000.0, omega_L=100.0, use_filters=True)
    rep = discretization_bridge(p, 1e-3, oracle=obj.oracle(), x0=np.zeros(4), steps=2000)
    assert not rep.diverged and rep.max_rel_deviation <= 1e-12


def test_bridge_infeasible():
    p = EsParams(a=0.1, omega=1.0, omega_H=1.0, omega_L=200.0, use_filters=True)
    with pytest.raises(FeasibilityError):
        discretization_bridge(p, 0.01)


def test_trajectory_csv(tmp_path):
    p = EsParams(a=0.1, omega=10.0)
    tr = integrate_es(1.0, p, lambda x: x * x, 0.1, 0.01)
    path = tmp_path / "es.csv"
    write_trajectory_csv(path, tr, lambda x: x * x)
    rows = list(csv.reader(open(path)))
    assert rows[0] == ["method", "trial", "t", "f_value", "gap", "queries"]
    assert len(rows) == len(tr) + 1
    assert rows[1][3] == "1.0" and rows[-1][5] == str(4 * tr.step[-1])
