import json
import math

import numpy as np
import pytest

from rharvest.ivp import HarvestRHS, Status, distance_to, harvest_rhs, integrate_ivp


def logistic(z0, t):
    return z0 * math.exp(t) / (1 - z0 + z0 * math.exp(t))


def test_logistic_closed_form():
    traj = integrate_ivp(harvest_rhs("1"), 0.5, 0.0, 1.0)
    assert traj.completed
    assert traj(1.0) == pytest.approx(math.e / (1 + math.e), abs=1e-7)


def test_separated_solution_constant_harvest():
    traj = integrate_ivp(harvest_rhs("1", "1/4", 1.0), 1.5, 0.0, 50.0)
    assert traj(1.0) == pytest.approx(1.0, abs=1e-7)
    assert distance_to(traj, lambda t: 0.5 + 1 / (t + 1)) <= 1e-6


def test_blowdown_past_critical_harvest():
    traj = integrate_ivp(harvest_rhs("1", "1/4", 2.0), 0.5, 0.0, 50.0)
    assert traj.status is Status.BLOWDOWN
    assert traj.t_est == pytest.approx(math.pi, abs=1e-3)
    assert traj.values[-1] <= -1e9


def test_dense_output_between_steps():
    traj = integrate_ivp(harvest_rhs("1"), 0.5, 0.0, 6.0)
    ts = np.linspace(0, 6, 997)
    err = max(abs(traj(t) - logistic(0.5, t)) for t in ts)
    assert err < 1e-8
    # derivative of the interpolant agrees with the vector field
    for t in ts[1:-1:50]:
        z = traj(t)
        assert traj.derivative(t) == pytest.approx(z - z * z, abs=1e-7)


def test_integral_of_trajectory():
    traj = integrate_ivp(harvest_rhs("1"), 0.5, 0.0, 5.0)
    # ∫ logistic = ln(1 - z0 + z0 e^t)
    assert traj.integral() == pytest.approx(math.log(0.5 + 0.5 * math.exp(5.0)), abs=1e-8)
    assert traj.integral(1.3, 2.71) == pytest.approx(
        math.log(0.5 + 0.5 * math.exp(2.71)) - math.log(0.5 + 0.5 * math.exp(1.3)), abs=1e-8)


def test_order_check_halving_step():
    # error against the closed form drops >= 8x per halving of the step
    errs = []
    for h in (0.2, 0.1, 0.05):
        traj = integrate_ivp(harvest_rhs("1"), 0.1, 0.0, 4.0, fixed_step=h)
        errs.append(abs(traj.values[-1] - logistic(0.1, 4.0)))
    assert errs[0] / errs[1] >= 8
    assert errs[1] / errs[2] >= 8


def test_tightening_tolerance_reduces_error():
    errs = []
    for tol in (1e-6, 1e-8, 1e-10):
        traj = integrate_ivp(harvest_rhs("1"), 0.1, 0.0, 4.0, rel_tol=tol, abs_tol=tol * 1e-2)
        errs.append(abs(traj.values[-1] - logistic(0.1, 4.0)))
    assert errs[0] > errs[1] > errs[2]


def test_non_crossing_random_pairs():
    rng = np.random.default_rng(11)
    rhs = harvest_rhs("1 + 0.5*sin(2*pi*t)", "1/4", 0.9)
    for _ in range(30):
        za, zb = np.sort(rng.uniform(-0.2, 2.0, size=2))
        if zb - za < 1e-6:
            continue
        ta = integrate_ivp(rhs, za, 0.0, 8.0)
        tb = integrate_ivp(rhs, zb, 0.0, 8.0)
        end = min(ta.t_end, tb.t_end)
        for t in np.linspace(0, end, 400):
            assert ta(t) < tb(t)


def test_distance_to_identity_and_norms():
    traj = integrate_ivp(harvest_rhs("1"), 1.0, 0.0, 10.0)
    assert distance_to(traj, lambda t: 1.0) == 0.0
    assert distance_to(traj, lambda t: 1.0, "final") == 0.0
    with pytest.raises(ValueError):
        distance_to(traj, lambda t: 1.0, "l2")


def test_decaying_harvest_boundary_orbit():
    # z0 = 3/10 is exactly p1 = 1/2 - 1/(t+5); its gap to p = 1/2 + 2/(t+5) is 3/(t+5)
    rhs = harvest_rhs("1", "1/4 - 2/(t+5)^2", 1.0)
    traj = integrate_ivp(rhs, 0.3, 0.0, 100.0)
    assert traj.completed
    assert distance_to(traj, lambda t: 0.5 - 1 / (t + 5)) < 1e-8
    assert distance_to(traj, lambda t: 0.5 + 2 / (t + 5), "final") == pytest.approx(3 / 105, abs=1e-8)
    below = integrate_ivp(rhs, 0.29, 0.0, 100.0)
    assert below.status is Status.BLOWDOWN and 0 < below.t_est < 100


def test_rhs_validation_and_coercion():
    with pytest.raises(ValueError):
        HarvestRHS("1", "1", -0.5)
    rhs = HarvestRHS("1", 0.25, 1.0, "2")
    assert rhs(0.0, 1.0) == pytest.approx(1 - 2 - 0.25)


def test_csv_and_sidecar():
    traj = integrate_ivp(harvest_rhs("1"), 0.5, 0.0, 1.0)
    text = traj.to_csv([0.0, 0.5, 1.0])
    lines = text.strip().splitlines()
    assert lines[0] == "t,z"
    assert float(lines[-1].split(",")[1]) == traj(1.0)
    side = json.loads(traj.to_json())
    assert side["status"] == "CompletedHorizon" and side["t_est"] is None


def test_interval_validation():
    with pytest.raises(ValueError):
        integrate_ivp(harvest_rhs("1"), 0.5, 1.0, 1.0)
    traj = integrate_ivp(harvest_rhs("1"), 0.5, 0.0, 1.0)
    with pytest.raises(ValueError):
        traj(1.5)
