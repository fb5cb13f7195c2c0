import json

import numpy as np
import pytest
from scipy.integrate import quad

from threelp import ModelParams, gait_residual, nominal, solve_periodic
from threelp.gait import (
    PeriodicGait,
    next_phase_start,
    sample_trajectory,
    write_gait_json,
)
from threelp.model import SEL


@pytest.mark.parametrize("v", [0.0, 0.1, 0.2])
def test_residual_and_invariants(params, v):
    gait = solve_periodic(params, (v, 0.0), T=0.4)
    assert gait_residual(gait) < 1e-10
    assert np.max(np.abs(SEL.N @ gait.Qbar)) < 1e-12
    qT = nominal(gait, gait.T)
    assert abs(qT[2] - gait.Qbar[2] - v * gait.T) < 1e-9


def test_in_place_gait_has_no_sagittal_motion(gait0):
    _, qs = sample_trajectory(gait0, 201)
    assert not qs[:, 0::2].any()
    assert not gait0.Ubar[0::2].any()


def test_forward_step_length_by_integration(params):
    gait = solve_periodic(params, (0.2, 0.0))
    travel, _ = quad(lambda t: nominal(gait, t)[8], 0.0, gait.T, epsabs=1e-12)
    assert travel == pytest.approx(0.08, abs=1e-9)


def test_lateral_pelvis_sway_is_centimetres(gait0):
    _, qs = sample_trajectory(gait0, 401)
    sway = np.ptp(qs[:, 3])
    assert 0.011 <= sway <= 0.033


def test_nominal_endpoints(gait0):
    assert np.array_equal(nominal(gait0, 0.0), gait0.Qbar)
    end = SEL.O @ SEL.M @ SEL.S @ nominal(gait0, gait0.T)
    assert np.max(np.abs(end - SEL.M @ gait0.Qbar)) < 1e-10
    with pytest.raises(ValueError):
        nominal(gait0, 0.5)


def test_residual_detects_perturbation(gait0):
    bad = PeriodicGait(gait0.Qbar + 1e-3, gait0.Ubar, gait0.Dbar, gait0.T, gait0.v_des,
                       gait0.params)
    assert gait_residual(bad) > 1e-5


def test_zero_gait_of_symmetric_model():
    p = ModelParams(w_pelvis=1e-300)
    gait = PeriodicGait(np.zeros(12), np.zeros(4), 1.0, p.T, np.zeros(2), p)
    # the only non-zero term is the vanishing hip-offset bias
    assert gait_residual(gait) < 1e-250


def test_affine_in_speed(params):
    g = [solve_periodic(params, (v, 0.0)) for v in (0.0, 0.1, 0.2)]
    assert np.max(np.abs(g[2].Qbar - 2 * g[1].Qbar + g[0].Qbar)) < 1e-12
    assert np.max(np.abs(g[2].Ubar - 2 * g[1].Ubar + g[0].Ubar)) < 1e-9


def test_mirror_symmetry(params):
    right = solve_periodic(params, (0.1, 0.0), D=1.0)
    left = solve_periodic(params, (0.1, 0.0), D=-1.0)
    assert np.max(np.abs(left.Qbar - right.mirrored().Qbar)) < 1e-12
    assert np.max(np.abs(left.Ubar - right.mirrored().Ubar)) < 1e-9


def test_consecutive_steps_mirror(params):
    gait = solve_periodic(params, (0.1, 0.0))
    start = next_phase_start(gait)
    start[0:6] -= np.tile(start[4:6], 3)  # re-centre on the new stance foot
    other = gait.mirrored()
    assert np.max(np.abs(start - other.Qbar)) < 1e-10
    step_a = nominal(gait, gait.T)[0:2] - gait.Qbar[4:6]
    step_b = nominal(other, other.T)[0:2] - other.Qbar[4:6]
    assert step_a[0] == pytest.approx(step_b[0], abs=1e-12)
    assert step_a[1] == pytest.approx(-step_b[1], abs=1e-12)


def test_step_time_changes_gait(params):
    slow = solve_periodic(params, (0.1, 0.0), T=0.5)
    assert gait_residual(slow) < 1e-10
    with pytest.raises(ValueError):
        solve_periodic(params, (0.1, 0.0), T=0.0)


def test_implausible_speed_warns(params):
    with pytest.warns(UserWarning):
        solve_periodic(params, (1.0, 0.0))


def test_json_round_trip(gait0, tmp_path):
    path = tmp_path / "gait.json"
    write_gait_json(gait0, path)
    back = PeriodicGait.from_dict(json.loads(path.read_text()))
    assert np.array_equal(back.Qbar, gait0.Qbar) and back.params == gait0.params
