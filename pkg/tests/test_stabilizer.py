from functools import lru_cache

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.linalg import null_space, solve_discrete_are

from threelp import ModelParams, evolve, footstep_adjustment, time_project
from threelp.model import SEL
from threelp.stabilizer import (
    Controller,
    GainTable,
    SingularProjection,
    constrained_spectral_radius,
    export_gain_table,
    final_error,
    project,
    truncate_step,
)


def random_errors(rng, n=1, scale=0.02):
    return rng.normal(0.0, scale, (n, 8))


def test_error_dynamics_match_simulation(ctrl, gait0, dyn, rng):
    ed = ctrl.ed
    e = random_errors(rng)[0]
    dU = rng.normal(0, 0.5, 4)
    q = evolve(dyn, gait0.Qbar + SEL.Mhat @ e, gait0.Ubar + dU, gait0.Dbar, ed.T)
    nxt = SEL.O @ SEL.M @ SEL.S @ q - SEL.M @ gait0.Qbar
    assert np.max(np.abs(nxt - ed.step(e, dU))) < 1e-12


def test_riccati_converges(ctrl):
    assert ctrl.gain.riccati_residual < 1e-12


def test_gain_matches_scipy_dare(ctrl):
    A, B, C = ctrl.ed.Ahat, ctrl.ed.Bhat, ctrl.ed.Chat
    Q, R = ctrl.gain.Qw, ctrl.gain.Rw
    CB = C @ B
    L = -np.linalg.pinv(CB) @ C @ A
    Nb = null_space(CB)
    free = np.flatnonzero(~np.any(C, axis=0))
    Ps = np.eye(8)[:, free]
    Ar = Ps.T @ (A + B @ L) @ Ps
    Br = Ps.T @ B @ Nb
    Qr = Ps.T @ (Q + L.T @ R @ L) @ Ps
    Sr = Ps.T @ L.T @ R @ Nb
    Rr = Nb.T @ R @ Nb
    P = solve_discrete_are(Ar, Br, Qr, Rr, s=Sr)
    Kr = np.linalg.solve(Rr + Br.T @ P @ Br, Br.T @ P @ Ar + Sr.T)
    K_ref = -(L @ Ps - Nb @ Kr)
    K = ctrl.K @ Ps
    assert np.max(np.abs(K - K_ref)) < 1e-7 * np.abs(K_ref).max()


def test_closed_loop_is_stable(ctrl):
    assert constrained_spectral_radius(ctrl.ed, ctrl.gain) < 1.0


def test_rollouts_respect_constraint(ctrl, rng):
    for E in random_errors(rng, 10):
        scale = np.abs(E).max()
        for _ in range(20):
            E = ctrl.ed.step(E, -ctrl.K @ E)
            assert np.max(np.abs(ctrl.ed.Chat @ E)) < 1e-9 * scale
        assert np.abs(E).max() < 1e-3 * scale


def test_projection_identities(ctrl, rng):
    e = random_errors(rng)[0]
    assert not time_project(ctrl.ed, None, ctrl.K, np.zeros(8), 0.17).any()
    du0 = time_project(ctrl.ed, None, ctrl.K, e, 0.0)
    assert np.max(np.abs(du0 + ctrl.K @ e)) < 1e-14 * max(1.0, np.abs(du0).max())


def test_projection_constant_along_closed_loop(ctrl, rng):
    ed = ctrl.ed
    E = random_errors(rng)[0]
    dU = -ctrl.K @ E
    for tau in np.linspace(0.0, ed.T, 50, endpoint=False):
        At, Bt = ed.intra_phase(tau)
        got = time_project(ed, None, ctrl.K, At @ E + Bt @ dU, tau)
        assert np.max(np.abs(got - dU)) < 1e-9 * max(1.0, np.abs(dU).max())


@settings(max_examples=30, deadline=None)
@given(st.floats(0.0, 0.35), st.floats(-3, 3), st.integers(0, 2**31))
def test_projection_is_linear(tau, alpha, seed):
    ctrl = _default_controller()
    rng = np.random.default_rng(seed)
    a, b = random_errors(rng, 2)
    lhs = time_project(ctrl.ed, None, ctrl.K, a + alpha * b, tau)
    rhs = (time_project(ctrl.ed, None, ctrl.K, a, tau)
           + alpha * time_project(ctrl.ed, None, ctrl.K, b, tau))
    assert np.max(np.abs(lhs - rhs)) < 1e-9 * max(1.0, np.abs(lhs).max())


@lru_cache(maxsize=1)
def _default_controller():
    return Controller.synthesize(ModelParams())


def test_projection_singular_at_phase_end(ctrl):
    with pytest.raises(SingularProjection):
        project(ctrl.ed, ctrl.K, np.ones(8), ctrl.ed.T)


def test_final_error_limits(ctrl, rng):
    e = random_errors(rng)[0]
    assert np.array_equal(final_error(ctrl.ed, ctrl.K, e, ctrl.ed.T), e)
    ed = ctrl.ed
    At, Bt = ed.intra_phase(ed.T)
    assert np.allclose(final_error(ed, ctrl.K, e, 0.0), At @ e - Bt @ ctrl.K @ e, atol=1e-14)
    near = final_error(ed, ctrl.K, e, ed.T * (1 - 1e-6))
    assert np.max(np.abs(near[:2] - e[:2])) < 1e-4


def test_final_swing_velocity_is_zero(ctrl, rng):
    for tau in (0.0, 0.1, 0.3):
        fin = final_error(ctrl.ed, ctrl.K, random_errors(rng)[0], tau)
        assert np.max(np.abs(fin[4:6])) < 1e-12


def test_footstep_adjustment_is_final_swing_error(ctrl, params, rng):
    e = random_errors(rng, scale=0.005)[0]
    adj = footstep_adjustment(ctrl.ed, None, ctrl.K, e, 0.12, params.z_pelvis)
    assert np.array_equal(adj.dp, final_error(ctrl.ed, ctrl.K, e, 0.12)[:2])
    assert not adj.truncated.any()


def test_truncation_and_attack_angle():
    adj = truncate_step([0.30, -0.05], z=0.4286)
    assert adj.dp[0] == 0.15 and adj.dp[1] == -0.05
    assert adj.truncated.tolist() == [True, False]
    assert adj.dtheta[0] == pytest.approx(0.35, abs=5e-4)


def test_gain_table_nodes(ctrl, rng):
    table = export_gain_table(ctrl.ed, None, ctrl.gain, 40)
    assert np.max(np.abs(table.Gu[0] - ctrl.K)) < 1e-12 * np.abs(ctrl.K).max()
    e = random_errors(rng)[0]
    for i in (0, 7, 39):
        tau = table.tau_grid[i]
        assert np.allclose(table.du(e, tau), time_project(ctrl.ed, None, ctrl.K, e, tau),
                           rtol=1e-10, atol=1e-12)
        fin = final_error(ctrl.ed, ctrl.K, e, tau)[:2]
        assert np.allclose(table.dp(e, tau), fin, rtol=1e-10, atol=1e-14)


def test_gain_table_refinement(ctrl, rng):
    """Interpolation error shrinks about fourfold per grid doubling away from the end."""
    e = random_errors(rng)[0]
    taus = np.linspace(0.0, 0.9 * ctrl.ed.T, 37)
    exact = np.array([time_project(ctrl.ed, None, ctrl.K, e, t) for t in taus])
    errs = []
    for n in (25, 50, 100):
        table = export_gain_table(ctrl.ed, None, ctrl.gain, n)
        errs.append(np.abs(np.array([table.du(e, t) for t in taus]) - exact).max())
    assert errs[1] < errs[0] / 3 and errs[2] < errs[1] / 3


def test_gains_approach_foot_limit(ctrl):
    table = export_gain_table(ctrl.ed, None, ctrl.gain, 2000)
    expected = np.zeros((2, 8))
    expected[:, :2] = -np.eye(2)
    assert np.abs(table.Gp[-1] - expected).max() < 1e-2
    assert np.abs(table.Gu[-1]).max() > 10 * np.abs(table.Gu[0]).max()


def test_gain_table_round_trip(ctrl, tmp_path):
    table = export_gain_table(ctrl.ed, None, ctrl.gain, 32)
    table.write(tmp_path / "g.csv", tmp_path / "g.json")
    back = GainTable.read(tmp_path / "g.csv", tmp_path / "g.json")
    assert np.array_equal(back.tau_grid, table.tau_grid)
    assert np.array_equal(back.Gu, table.Gu) and np.array_equal(back.Gp, table.Gp)
    assert back.T == table.T and np.array_equal(back.Qw, table.Qw)
    bare = GainTable.read(tmp_path / "g.csv")
    assert bare.T == pytest.approx(table.T, rel=1e-15)


def test_gain_table_rejects_bad_input(ctrl):
    with pytest.raises(ValueError):
        export_gain_table(ctrl.ed, None, ctrl.gain, 1)
    table = export_gain_table(ctrl.ed, None, ctrl.gain, 8)
    with pytest.raises(ValueError):
        table.du(np.zeros(8), 0.5)
