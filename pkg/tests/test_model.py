import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import momentum_balance, rk4_batch, swing_leg_balance
from threelp import ModelParams, build_continuous_dynamics, evolve, swap_support, transition
from threelp.model import SEL, export_matrices_csv, mirror_lateral

SAG_COLS = [0, 2, 4]
LAT_COLS = [1, 3, 5]


def random_states(rng, n):
    q0 = rng.normal(0.0, 0.05, (n, 12))
    q0[:, 10:12] = 0.0
    return q0


def test_stance_rows_are_zero(dyn):
    for name in ("C_x", "C_u", "C_d", "C_f"):
        assert np.all(getattr(dyn, name)[4:6] == 0.0)


def test_axes_decouple(dyn):
    assert np.all(dyn.C_x[np.ix_(SAG_COLS, LAT_COLS)] == 0.0)
    assert np.all(dyn.C_x[np.ix_(LAT_COLS, SAG_COLS)] == 0.0)
    assert np.all(dyn.C_d[SAG_COLS] == 0.0)
    assert dyn.C_u[0, 1] == dyn.C_u[1, 0] == 0.0


def test_rejects_bad_params():
    with pytest.raises(ValueError):
        ModelParams(m_leg=-1.0)
    with pytest.raises(ValueError):
        ModelParams(z_pelvis=0.0)
    with pytest.raises(ValueError):
        ModelParams(r_leg_com=1.0)


def test_lip_limit():
    p = ModelParams(m_leg=1e-9, I_leg=1e-12, h_torso_com=1e-9)
    dyn = build_continuous_dynamics(p)
    lip = p.g / p.z_pelvis
    expected = np.array([lip, -lip])  # pelvis row, columns (pelvis, stance)
    for ax in (0, 1):
        got = dyn.C_x[2 + ax, [2 + ax, 4 + ax]]
        assert np.max(np.abs(got - expected) / lip) < 1e-6
        assert abs(dyn.C_x[2 + ax, ax]) / lip < 1e-6


def test_transition_at_zero_is_identity(dyn):
    tr = transition(dyn, 0.0)
    assert np.array_equal(tr.A, np.eye(12))
    assert not tr.B.any() and not tr.C.any() and not tr.F.any()


def test_transition_rejects_negative_time(dyn):
    with pytest.raises(ValueError):
        transition(dyn, -0.1)


@settings(max_examples=25, deadline=None)
@given(st.floats(0.0, 0.4), st.floats(0.0, 0.4))
def test_semigroup(t1, t2):
    dyn = build_continuous_dynamics(ModelParams())
    lhs = transition(dyn, t1 + t2).A
    rhs = transition(dyn, t2).A @ transition(dyn, t1).A
    assert np.max(np.abs(lhs - rhs)) < 1e-12 * max(1.0, np.abs(lhs).max())


def test_stance_rows_of_transition(dyn):
    t = 0.37
    tr = transition(dyn, t)
    for row in (4, 5, 10, 11):
        expected = np.eye(12)[row] + (t * np.eye(12)[row + 6] if row < 6 else 0.0)
        assert np.array_equal(tr.A[row], expected)
        assert not tr.B[row].any() and not tr.C[row].any() and not tr.F[row].any()


def test_transition_matches_rk4(dyn, rng):
    n = 20
    q0 = random_states(rng, n)
    u = rng.normal(0, 1, (n, 4))
    d = rng.choice([-1.0, 1.0], n)
    f = rng.normal(0, 5, (n, 2))
    ref = rk4_batch(dyn, q0, u, d, f, 0.4, h=1e-4)
    tr = transition(dyn, 0.4)
    got = np.array([tr.apply(q0[i], u[i], d[i], f[i]) for i in range(n)])
    assert np.max(np.abs(got - ref)) < 1e-9


def test_momentum_balance_along_trajectory(params, dyn, rng):
    q0 = random_states(rng, 1)[0]
    u = rng.normal(0, 1, 4)
    push = np.array([4.0, -3.0])
    for d in (1.0, -1.0):
        for t in np.linspace(0.0, 0.4, 9):
            q = evolve(dyn, q0, u, d, t, push)
            torque = u[:2] + t * u[2:]
            acc = dyn.accel(q[:6], torque, d, push)
            rate, moment = momentum_balance(params, q[:6], q[6:], acc, d, push)
            assert np.max(np.abs(rate - moment)) <= 1e-8 * np.max(np.abs(moment))
            assert np.max(np.abs(swing_leg_balance(params, q[:6], acc, torque, d))) < 1e-10


def test_positive_torque_swings_foot_forward(dyn):
    acc = dyn.accel(np.zeros(6), [1.0, 1.0], 0.0)
    assert acc[0] > 0 and acc[1] > 0


def test_sagittal_equilibrium_at_rest(dyn):
    q = evolve(dyn, np.zeros(12), np.zeros(4), 1.0, 0.4)
    assert np.max(np.abs(q[0::2])) < 1e-12


def test_evolve_rejects_moving_stance(dyn):
    q0 = np.zeros(12)
    q0[10] = 1e-6
    with pytest.raises(ValueError):
        evolve(dyn, q0, np.zeros(4), 1.0, 0.1)


def test_superposition(dyn, rng):
    qa, qb = random_states(rng, 2)
    ua, ub = rng.normal(0, 1, (2, 4))
    t = 0.31
    combined = evolve(dyn, qa + qb, ua + ub, 1.0, t)
    parts = evolve(dyn, qa, ua, 1.0, t) + evolve(dyn, qb, ub, 1.0, t)
    zero = evolve(dyn, np.zeros(12), np.zeros(4), 1.0, t)
    assert np.max(np.abs(combined - parts + zero)) < 1e-13


def test_decoupled_evolution(dyn, rng):
    q0 = np.zeros(12)
    q0[[0, 2, 6, 8]] = rng.normal(0, 0.05, 4)
    u = np.array([0.3, 0.0, -0.2, 0.0])
    base = evolve(dyn, np.zeros(12), np.zeros(4), 1.0, 0.4)
    q = evolve(dyn, q0, u, 1.0, 0.4)
    assert np.max(np.abs((q - base)[1::2])) < 1e-12


def test_swap_support(rng):
    q = rng.normal(size=12)
    assert np.array_equal(swap_support(swap_support(q)), q)
    x = np.zeros(12)
    x[0:2], x[2:4], x[4:6] = (1, 2), (3, 4), (5, 6)
    swapped = swap_support(x)
    assert swapped[0:2].tolist() == [5, 6]
    assert swapped[2:4].tolist() == [3, 4]
    assert swapped[4:6].tolist() == [1, 2]


def test_selector_identities():
    assert np.array_equal(SEL.M @ SEL.Mhat, np.eye(8))
    assert np.array_equal(SEL.S @ SEL.S, np.eye(12))
    assert np.array_equal(SEL.O @ SEL.O, np.eye(8))


def test_mirror_flips_lateral_only(rng):
    q = rng.normal(size=12)
    m = mirror_lateral(q)
    assert np.array_equal(m[0::2], q[0::2]) and np.array_equal(m[1::2], -q[1::2])


def test_params_json_round_trip():
    p = ModelParams(m_leg=7.1, T=0.35)
    assert ModelParams.from_json(p.to_json()) == p
    with pytest.raises(ValueError):
        ModelParams.from_dict({"mass": 1.0})


def test_matrix_csv_export(dyn, tmp_path):
    for path in export_matrices_csv(dyn, tmp_path):
        data = np.loadtxt(path, delimiter=",", ndmin=2)
        assert np.array_equal(data, getattr(dyn, path.stem).reshape(data.shape))
