import numpy as np
import pytest

from cclinf.calculus import get_map
from cclinf.flow import (DegenerateDirectionError, FlowError, affinity_report, flow_velocity, integrate_flow)
from cclinf.frames import euclidean, heisenberg

E2 = euclidean(2)
UNIT = ([-1, -1], [1, 1])


def test_velocity_examples():
    np.testing.assert_allclose(flow_velocity(get_map("coord:0").jet([0.2, 0.3]), np.eye(2), [1]), [1, 0])
    np.testing.assert_allclose(flow_velocity(get_map("affine:1,1").jet([0.2, 0.3]), np.eye(2), [1]), [1, 1])
    with pytest.raises(DegenerateDirectionError):
        flow_velocity(get_map("affine:1,0;0,0").jet([0.2, 0.3]), np.eye(2), [0, 1])
    with pytest.raises(FlowError):
        flow_velocity(get_map("coord:0").jet([0.2, 0.3]), np.eye(2), [0])


def test_velocity_reverses_with_xi_for_scalar_maps(rng):
    amap = get_map("wave")
    for x in rng.uniform(-1, 1, size=(10, 2)):
        jet = amap.jet(x)
        np.testing.assert_allclose(flow_velocity(jet, np.eye(2), [-1]), -flow_velocity(jet, np.eye(2), [1]))


def test_affine_trajectory():
    traj = integrate_flow(get_map("affine:1,1"), E2, [0, 0], [1], 0.01, UNIT)
    np.testing.assert_allclose(traj.points[:, 0], traj.points[:, 1], atol=1e-14)
    np.testing.assert_allclose(traj.projections, 2 * traj.times, atol=1e-12)
    # velocity (1, 1) reaches the face x = 1 at t = 1
    assert traj.exit_time == pytest.approx(1.0, abs=1e-4)
    assert traj.truncated is None
    assert np.linalg.norm(traj.xi) == pytest.approx(1, abs=1e-12)
    lo, hi = map(np.asarray, UNIT)
    assert np.all((traj.points >= lo) & (traj.points <= hi))

    rep = affinity_report(traj)
    assert rep.slope == pytest.approx(2, abs=1e-8)
    assert rep.linear_fit_residual <= 1e-8
    assert rep.hnorm_drift <= 1e-8


def test_coordinate_trajectory_is_exact():
    traj = integrate_flow(get_map("coord:0"), E2, [-0.5, 0.2], [1], 0.05, UNIT)
    np.testing.assert_allclose(traj.projections - traj.projections[0], traj.times, atol=1e-14)
    assert np.all(traj.hnorms == 1)
    rep = affinity_report(traj)
    assert rep.slope == pytest.approx(1, abs=1e-12)
    assert rep.hnorm_drift == 0


def test_trig_map_conserves_norm():
    traj = integrate_flow(get_map("paper_exp"), E2, [0.5, 0.1], [0, 1], 0.01, ([0, -0.6], [1, 0.6]))
    assert traj.times.size > 10
    assert affinity_report(traj).hnorm_drift < 1e-6


def test_rk4_order_on_curved_trajectory():
    """The affine defect of xi.u along the trigonometric-map flow shrinks about 16x per dt halving."""
    box = ([0, -0.6], [1, 0.6])
    defects = []
    for dt in (0.04, 0.02, 0.01):
        traj = integrate_flow(get_map("paper_exp"), E2, [0.5, 0.1], [0, 1], dt, box)
        defects.append(affinity_report(traj).affine_defect)
    for a, b in zip(defects, defects[1:]):
        assert a / b >= 12


def test_non_solution_drifts():
    traj = integrate_flow(get_map("square:0"), E2, [1, 0], [1], 0.01, ([0, -1], [2, 1]))
    assert affinity_report(traj).hnorm_drift > 0.1


def test_projection_slope_matches_norm_pointwise():
    """Central differences of xi.u(r(t)) reproduce |Xu|^2 to second order in dt."""
    errs = []
    for dt in (0.02, 0.01):
        traj = integrate_flow(get_map("square:0"), E2, [1, 0], [1], dt, ([0, -1], [3, 1]))
        t, q, hn = traj.times[:-1], traj.projections[:-1], traj.hnorms[:-1]
        k = np.searchsorted(t, 0.3)
        errs.append(abs((q[k + 1] - q[k - 1]) / (2 * dt) - hn[k]) / hn[k])
    assert errs[1] < 1e-3
    assert errs[0] / errs[1] > 3


def test_heisenberg_flow_exits():
    traj = integrate_flow(get_map("coord:0", n=3), heisenberg(), [0, 0.2, 0], [1], 0.05,
                          ([-1, -1, -1], [1, 1, 1]))
    assert traj.exit_time == pytest.approx(1.0, abs=1e-4)
    np.testing.assert_allclose(traj.points[-1], [1, 0.2, -0.1], atol=1e-4)


def test_degenerate_step_truncates():
    # x' = -2x: the second RK4 stage of a unit step lands on x = 0 where Du vanishes
    traj = integrate_flow(get_map("square:0"), E2, [0.5, 0], [-1], 1.0, UNIT)
    assert traj.truncated and "degenerate" in traj.truncated
    assert traj.exit_time is None


def test_max_steps_truncates():
    traj = integrate_flow(get_map("coord:0"), E2, [0, 0], [1], 0.01, UNIT, max_steps=5)
    assert traj.times.size == 6 and "max_steps" in traj.truncated


def test_input_errors():
    u = get_map("coord:0")
    with pytest.raises(FlowError):
        integrate_flow(u, E2, [2, 0], [1], 0.01, UNIT)
    with pytest.raises(FlowError):
        integrate_flow(u, E2, [0, 0], [1], 0.0, UNIT)
    with pytest.raises(FlowError):
        integrate_flow(u, E2, [0, 0], [0], 0.01, UNIT)
    with pytest.raises(DegenerateDirectionError):
        integrate_flow(get_map("square:0"), E2, [0, 0], [1], 0.01, UNIT)
    traj = integrate_flow(u, E2, [0, 0], [1], 0.01, UNIT, max_steps=1)
    with pytest.raises(FlowError):
        affinity_report(traj)


def test_csv_layout():
    traj = integrate_flow(get_map("affine:1,1"), E2, [0, 0], [1], 0.25, UNIT)
    lines = traj.to_csv().splitlines()
    assert lines[0] == "t,r0,r1,hnorm_sq,xi_dot_u"
    assert len(lines) == traj.times.size + 1
