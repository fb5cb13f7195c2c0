"""Deterministic closed-loop 3LP push-recovery simulation."""

from __future__ import annotations

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from functools import lru_cache
from pathlib import Path

import numpy as np

from . import augment
from .filters import ErrorFilterBank, calibrate_thresholds, reanchor
from .gait import PeriodicGait, nominal, solve_periodic
from .model import SEL, ModelParams, dynamics_for, transition
from .stabilizer import Controller, GainTable, export_gain_table, truncate_step

CONTROLLER_MODES = ("open_loop", "closed_loop", "closed_loop_no_deadzone")
ADJUSTMENT_MODES = ("torque", "step")
ESTIMATORS = ("filtered", "ideal")
# position (m) and velocity (m/s) floors for the recovery test
RECOVERY_FLOOR = np.array([2e-3] * 4 + [1e-2] * 4)
NO_RECOVERY = -1

TRACE_COLUMNS = (
    ["t", "phase", "tau"]
    + [f"q{i}" for i in range(12)]
    + [f"e_raw{i}" for i in range(8)]
    + [f"e_filt{i}" for i in range(8)]
    + [f"e_dz{i}" for i in range(8)]
    + [f"du{i}" for i in range(4)]
    + ["dp0", "dp1", "trunc", "fx", "fy"]
)
AUGMENT_COLUMNS = ["t", "dz_fixed", "roll", "dz_adaptive", "theta_hat", "pitch_comp",
                   "knee_left", "knee_right", "hip_rate"]



class ScenarioError(ValueError):
    pass


def _vec(value, n, name):
    arr = np.broadcast_to(np.asarray(value, float), (n,)).copy()
    if np.any(arr < 0):
        raise ScenarioError(f"{name} must be non-negative")
    return arr


@dataclass(frozen=True)
class PushEvent:
    t_start: float
    t_end: float
    force: tuple = (0.0, 0.0)
    kind: str = "impulse"

    def __post_init__(self):
        if not self.t_end > self.t_start:
            raise ScenarioError("push must end after it starts")
        if self.kind not in ("impulse", "continuous"):
            raise ScenarioError(f"unknown push kind {self.kind!r}")
        object.__setattr__(self, "force", tuple(float(f) for f in self.force))

    def active(self, t: float) -> bool:
        return self.t_start <= t < self.t_end


@dataclass(frozen=True)
class SensorModel:
    """Position sensing of ``[swing, pelvis]`` relative to the stance foot.

    ``side_bias`` is a systematic error whose sign follows the support side, the way an
    asymmetric spring deflection shows up on a real robot.
    """
    noise_sigma: tuple = (0.0,) * 4
    bias: tuple = (0.0,) * 4
    quantization: float = 0.0
    side_bias: tuple = (0.0,) * 4

    def __post_init__(self):
        object.__setattr__(self, "noise_sigma",
                           tuple(_vec(self.noise_sigma, 4, "noise_sigma").tolist()))
        for name in ("bias", "side_bias"):
            object.__setattr__(self, name, tuple(np.broadcast_to(
                np.asarray(getattr(self, name), float), (4,)).tolist()))
        if self.quantization < 0:
            raise ScenarioError("quantization must be non-negative")

    @property
    def biased(self) -> bool:
        return any(self.bias) or any(self.side_bias)

    def measure(self, pos, rng, d: float = 1.0) -> np.ndarray:
        out = (pos + np.asarray(self.bias) + d * np.asarray(self.side_bias)
               + np.asarray(self.noise_sigma) * rng.standard_normal(4))
        if self.quantization > 0:
            out = np.round(out / self.quantization) * self.quantization
        return out


@dataclass(frozen=True)
class Scenario:
    params: ModelParams = field(default_factory=ModelParams)
    v_des: tuple = (0.0, 0.0)
    duration: float = 4.0
    control_dt: float = 0.002
    pushes: tuple = ()
    sensor: SensorModel = field(default_factory=SensorModel)
    controller_mode: str = "closed_loop"
    adjustment_mode: str = "torque"
    trunc: float = 0.15
    seed: int = 0
    v_init: tuple | None = None
    estimator: str = "filtered"
    zeta: float = 0.1
    window: int = 30
    thresholds: tuple | None = None
    recovery_threshold: tuple | None = None
    plant_mass_scale: float = 1.0
    Qw_diag: tuple | None = None
    Rw_diag: tuple | None = None
    actuator: bool = False
    lift: augment.LiftConfig | None = None
    actuator_model: augment.ActuatorModel = field(default_factory=augment.ActuatorModel)
    sea: augment.SeaComp = field(default_factory=augment.SeaComp)

    def __post_init__(self):
        if not self.duration > 0:
            raise ScenarioError("duration must be positive")
        if not self.control_dt > 0:
            raise ScenarioError("control_dt must be positive")
        if not self.trunc > 0:
            raise ScenarioError("trunc must be positive")
        if self.controller_mode not in CONTROLLER_MODES:
            raise ScenarioError(f"controller_mode must be one of {CONTROLLER_MODES}")
        if self.adjustment_mode not in ADJUSTMENT_MODES:
            raise ScenarioError(f"adjustment_mode must be one of {ADJUSTMENT_MODES}")
        if self.estimator not in ESTIMATORS:
            raise ScenarioError(f"estimator must be one of {ESTIMATORS}")
        ticks = self.params.T / self.control_dt
        if abs(ticks - round(ticks)) > 1e-9 * ticks:
            raise ScenarioError("step time must be an integer number of control ticks")
        if self.plant_mass_scale <= 0:
            raise ScenarioError("plant_mass_scale must be positive")
        object.__setattr__(self, "v_des", tuple(float(v) for v in self.v_des))
        object.__setattr__(self, "pushes", tuple(self.pushes))
        if self.thresholds is not None:
            object.__setattr__(self, "thresholds", tuple(_vec(self.thresholds, 8, "thresholds").tolist()))
        if self.recovery_threshold is not None:
            object.__setattr__(self, "recovery_threshold",
                               tuple(_vec(self.recovery_threshold, 8, "recovery_threshold").tolist()))

    @property
    def ticks_per_phase(self) -> int:
        return int(round(self.params.T / self.control_dt))

    def to_dict(self) -> dict:
        data = asdict(self)
        data["pushes"] = [asdict(p) for p in self.pushes]
        return data

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_dict(cls, data: dict) -> "Scenario":
        data = dict(data)
        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known - {"augment"}
        if unknown:
            raise ScenarioError(f"unknown scenario fields: {sorted(unknown)}")
        if "params" in data:
            data["params"] = ModelParams.from_dict(data["params"])
        if "pushes" in data:
            data["pushes"] = tuple(PushEvent(**p) for p in data["pushes"])
        if "sensor" in data:
            data["sensor"] = SensorModel(**data["sensor"])
        aug = data.pop("augment", {}) or {}
        for key, kind in (("lift", augment.LiftConfig), ("actuator_model", augment.ActuatorModel),
                          ("sea", augment.SeaComp)):
            section = aug.get(key, data.get(key))
            if isinstance(section, dict):
                data[key] = kind(**section)
        if "actuator" in aug:
            data["actuator"] = bool(aug["actuator"])
        for key in ("v_des", "v_init", "thresholds", "recovery_threshold", "Qw_diag", "Rw_diag"):
            if data.get(key) is not None and not isinstance(data[key], (int, float)):
                data[key] = tuple(data[key])
        try:
            return cls(**data)
        except TypeError as exc:
            raise ScenarioError(str(exc)) from exc

    @classmethod
    def from_json(cls, text: str) -> "Scenario":
        return cls.from_dict(json.loads(text))

    @classmethod
    def load(cls, path) -> "Scenario":
        return cls.from_json(Path(path).read_text())


@dataclass
class Metrics:
    steps_to_recover: int
    max_abs_dp: float
    captured: bool
    fell: bool
    final_velocity_error: float
    dp_spread_after_push: float
    final_dp_after_push: float
    phases: int

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class Trace:
    rows: np.ndarray
    augment: np.ndarray
    fell: bool
    ticks_per_phase: int

    def column(self, name: str) -> np.ndarray:
        return self.rows[:, TRACE_COLUMNS.index(name)]

    def block(self, prefix: str, n: int) -> np.ndarray:
        start = TRACE_COLUMNS.index(f"{prefix}0")
        return self.rows[:, start:start + n]

    def write_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(",".join(TRACE_COLUMNS) + "\n")
            for row in self.rows:
                fh.write(",".join(_fmt(v, i) for i, v in enumerate(row)) + "\n")

    def write_columns(self, directory) -> None:
        """Whitespace-separated copies for plotting tools."""
        directory = Path(directory)
        np.savetxt(directory / "trace.dat", self.rows, fmt="%.10g",
                   header=" ".join(TRACE_COLUMNS))
        np.savetxt(directory / "augment.dat", self.augment, fmt="%.10g",
                   header=" ".join(AUGMENT_COLUMNS))


_INT_COLUMNS = {TRACE_COLUMNS.index("phase"), TRACE_COLUMNS.index("trunc")}


def _fmt(value, index) -> str:
    if index in _INT_COLUMNS:
        return str(int(value))
    return repr(float(value))


@lru_cache(maxsize=32)
def _controller(params: ModelParams, Qw_diag, Rw_diag) -> Controller:
    Qw = None if Qw_diag is None else np.diag(Qw_diag)
    Rw = None if Rw_diag is None else np.diag(Rw_diag)
    return Controller.synthesize(params, Qw, Rw)


@lru_cache(maxsize=32)
def _tick_gains(params: ModelParams, Qw_diag, Rw_diag, n: int) -> GainTable:
    """Projection gains at every control tick of a phase (the online look-up table)."""
    ctrl = _controller(params, Qw_diag, Rw_diag)
    return export_gain_table(ctrl.ed, None, ctrl.gain, n)


@lru_cache(maxsize=32)
def _step_tables(params: ModelParams, dt: float, n: int):
    """Per-tick maps for steering the swing foot to a target over the rest of the phase."""
    rows = [0, 1, 6, 7]  # final swing position and velocity
    out = []
    for k in range(n):
        tr = transition(dynamics_for(params), params.T - k * dt)
        out.append((tr.A[rows], tr.C[rows, 0], np.linalg.inv(tr.B[rows])))
    return out


@lru_cache(maxsize=32)
def _gait(params: ModelParams, v: tuple) -> PeriodicGait:
    return solve_periodic(params, v)


@lru_cache(maxsize=64)
def _tick_transition(params: ModelParams, dt: float):
    return transition(dynamics_for(params), dt)


@lru_cache(maxsize=64)
def _phase_nominal(params: ModelParams, v: tuple, dt: float, n: int):
    """Nominal relative states M qbar(tau) for tau = i dt, i = 0..n, support +1."""
    gait = _gait(params, v)
    return np.array([SEL.M @ nominal(gait, min(i * dt, gait.T)) for i in range(n + 1)])


def _mirror8(e, d):
    return e if d > 0 else SEL.O @ e


def _mirror_u(u, d):
    if d > 0:
        return u
    out = np.array(u, float)
    out[1::2] *= -1.0
    return out


def _step_mode_input(table, q_rel, target_rel, d):
    """Piecewise-linear hip torque reaching a swing target with zero velocity.

    ``q_rel`` is the plant state shifted so the stance foot sits at the origin.
    Returns ``(w0, rate)`` with the time origin at the current tick.
    """
    A_rows, C_rows, B_inv = table
    want = np.concatenate([target_rel, np.zeros(2)])
    sol = B_inv @ (want - A_rows @ q_rel - C_rows * d)
    return sol[:2], sol[2:]


def auto_thresholds(s: Scenario) -> np.ndarray:
    """Dead-zone thresholds from an open-loop in-place run with the same sensor."""
    calib = replace(s, controller_mode="open_loop", pushes=(), v_des=(0.0, 0.0), v_init=None,
                    thresholds=tuple([0.0] * 8),
                    duration=max(2.0, s.params.T * 5), seed=s.seed + 7919,
                    plant_mass_scale=1.0)
    trace, _ = run_scenario(calib)
    burn = calib.ticks_per_phase // 2
    return calibrate_thresholds(trace.block("e_filt", 8)[burn:])


def resolve_thresholds(s: Scenario) -> np.ndarray:
    if s.thresholds is not None:
        return np.asarray(s.thresholds)
    if any(s.sensor.noise_sigma) or s.sensor.biased or s.sensor.quantization:
        return auto_thresholds(s)
    return np.zeros(8)


def run_scenario(s: Scenario):
    """Simulate; returns ``(Trace, Metrics)``. Falls end the run without raising."""
    thresholds = resolve_thresholds(s)
    params = s.params
    plant_params = params if s.plant_mass_scale == 1.0 else params.scaled_masses(s.plant_mass_scale)
    n = s.ticks_per_phase
    gains = _tick_gains(params, s.Qw_diag, s.Rw_diag, n)
    steer = _step_tables(params, s.control_dt, n) if s.adjustment_mode == "step" else None
    dt = s.control_dt
    T = params.T
    z = params.z_pelvis
    v_des = tuple(s.v_des)
    nominal_rel = _phase_nominal(params, v_des, dt, n)
    gait = _gait(params, v_des)
    final_rel = nominal_rel[n]
    tick = _tick_transition(plant_params, dt)
    rng = np.random.default_rng(s.seed)
    lift_cfg = s.lift or augment.LiftConfig(T=T)
    act = s.actuator_model
    rate_limit = act.no_load_speed * z * dt

    start_gait = gait if s.v_init is None else _gait(params, tuple(s.v_init))
    q = start_gait.Qbar.copy()
    d = 1.0
    bank = ErrorFilterBank(s.zeta, s.window, dt, thresholds)
    prev_meas = None
    total_ticks = int(round(s.duration / dt))
    rows = []
    aug_rows = []
    fell = False
    target_cmd = None
    step_input = None

    for i in range(total_ticks):
        t = i * dt
        phase, k = divmod(i, n)
        tau = k * dt
        nom = _mirror8(nominal_rel[k], d)
        s_true = SEL.M @ q

        meas = s.sensor.measure(s_true[:4], rng, d) - nom[:4]
        raw_vel = np.zeros(4) if prev_meas is None else (meas - prev_meas) / dt
        prev_meas = meas
        e_raw = np.concatenate([meas, raw_vel])
        if s.estimator == "ideal":
            bank.step(meas)
            e_filt = np.concatenate([meas, s_true[4:] - nom[4:]])
        else:
            e_filt = bank.step(meas)
        e_dz = bank.suppress(e_filt) if s.controller_mode == "closed_loop" else e_filt.copy()

        e_can = _mirror8(e_dz, d)
        du = np.zeros(4)
        dp = np.zeros(2)
        trunc = False
        hip_rate = 0.0
        Ubar = _mirror_u(gait.Ubar, d)
        w0 = Ubar[:2] + tau * Ubar[2:]
        rate = Ubar[2:].copy()
        if s.controller_mode != "open_loop":
            dU = -gains.Gu[k] @ e_can
            adj = truncate_step(-gains.Gp[k] @ e_can, z, s.trunc)
            dp = _mirror_u(adj.dp, d)
            trunc = bool(np.any(adj.truncated))
            if s.adjustment_mode == "torque":
                du = _mirror_u(dU, d)
                w0 = w0 + du[:2] + tau * du[2:]
                rate = rate + du[2:]
            else:
                desired = _mirror8(final_rel, d)[0:2] + dp
                if target_cmd is None:
                    target_cmd = _mirror8(final_rel, d)[0:2].copy()
                if s.actuator:
                    move = np.clip(desired - target_cmd, -rate_limit, rate_limit)
                else:
                    move = desired - target_cmd
                hip_rate = float(np.max(np.abs(move)) / (z * dt))
                target_cmd = target_cmd + move
                if step_input is None or (T - tau) > 0.05 * T:
                    # swing tracking uses joint-level sensing, not the filtered error
                    q_rel = q.copy()
                    q_rel[0:6] -= np.tile(q[4:6], 3)
                    step_input = _step_mode_input(steer[k], q_rel, target_cmd, d)
                    step_w0, step_rate = step_input
                    step_origin = tau
                else:
                    step_w0, step_rate = step_input
                w0 = step_w0 + (tau - step_origin) * step_rate
                rate = step_rate
                du = np.concatenate([w0 - (Ubar[:2] + tau * Ubar[2:]), rate - Ubar[2:]])

        force = np.zeros(2)
        for push in s.pushes:
            if push.active(t):
                force += push.force

        rows.append(np.concatenate([[t, phase, tau], q, e_raw, e_filt, e_dz, du, dp,
                                    [float(trunc)], force]))
        aug_rows.append(_augment_row(t, tau, T, d, e_filt, z, lift_cfg, s.sea, hip_rate))

        q = tick.A @ q + tick.B @ np.concatenate([w0, rate]) + tick.C[:, 0] * d + tick.F @ force
        if np.linalg.norm(q[2:4] - q[4:6]) > 5 * z or not np.all(np.isfinite(q)):
            fell = True
            break
        if k == n - 1:
            q = SEL.S @ q
            q[10:12] = 0.0  # impact-less touchdown: the new stance foot stops
            d = -d
            bank.touchdown(meas[:2])
            if prev_meas is not None:
                prev_meas = reanchor(prev_meas, meas[:2])
            target_cmd = None
            step_input = None

    trace = Trace(np.array(rows), np.array(aug_rows), fell, n)
    recovery = (np.maximum(np.asarray(s.recovery_threshold), 0.0) if s.recovery_threshold
                else np.maximum(thresholds, RECOVERY_FLOOR))
    return trace, compute_metrics(trace, s, recovery)


def _augment_row(t, tau, T, d, e_filt, z, lift_cfg, sea, hip_rate):
    dz_adapt, theta_hat = augment.adaptive_lift(e_filt[0], e_filt[2], z, tau, T)
    left_stance = d > 0
    f_left = augment.synthesized_contact(tau, T, sea.mg, stance=left_stance)
    f_right = augment.synthesized_contact(tau, T, sea.mg, stance=not left_stance)
    knee_l, knee_r = augment.sea_knee_comp(f_left, f_right, sea)
    return [t, augment.fixed_lift(tau, T, lift_cfg), augment.pelvis_roll(tau, T, lift_cfg),
            dz_adapt, theta_hat, augment.foot_pitch_comp(theta_hat), knee_l, knee_r, hip_rate]


def detect_recovery(trace: Trace, thresholds, last_push_end: float = 0.0) -> int:
    """Corrective steps after the last push until two consecutive quiet phase starts."""
    if trace.fell:
        return NO_RECOVERY
    tau = trace.column("tau")
    t = trace.column("t")
    e = trace.block("e_filt", 8)
    starts = np.flatnonzero((tau == 0.0) & (t >= last_push_end) & (t > 0.0))
    quiet = [bool(np.all(np.abs(e[i]) < thresholds)) for i in starts]
    for j in range(len(quiet) - 1):
        if quiet[j] and quiet[j + 1]:
            return j
    return NO_RECOVERY


def compute_metrics(trace: Trace, s: Scenario, thresholds) -> Metrics:
    rows = trace.rows
    last_end = max((p.t_end for p in s.pushes), default=0.0)
    steps = detect_recovery(trace, thresholds, last_end)
    dp = trace.block("dp", 2)
    t = trace.column("t")
    phase = trace.column("phase")

    spread, final_dp = 0.0, 0.0
    if s.pushes:
        end_tick = int(math.ceil(last_end / s.control_dt - 1e-9))
        if end_tick < len(rows):
            push_phase = phase[end_tick]
            sel = (phase == push_phase) & (t >= last_end - 1e-12)
            if np.any(sel):
                spread = float(np.ptp(dp[sel, 0]))
                final_dp = float(dp[sel, 0][-1])

    vel_err = float("nan")
    starts = np.flatnonzero(trace.column("tau") == 0.0)
    if not trace.fell and len(starts) >= 2:
        # pelvis travel between the last two phase starts (world frame)
        a, b = starts[-2], starts[-1]
        pelvis_x = trace.column("q2")
        vel_err = float((pelvis_x[b] - pelvis_x[a]) / ((b - a) * s.control_dt) - s.v_des[0])

    return Metrics(
        steps_to_recover=steps,
        max_abs_dp=float(np.max(np.abs(dp))) if len(dp) else 0.0,
        captured=(not trace.fell) and steps != NO_RECOVERY,
        fell=trace.fell,
        final_velocity_error=vel_err,
        dp_spread_after_push=spread,
        final_dp_after_push=final_dp,
        phases=int(phase[-1]) + 1 if len(rows) else 0,
    )


def write_outputs(trace: Trace, metrics: Metrics, out_dir, columns: bool = False) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    trace.write_csv(out / "trace.csv")
    (out / "metrics.json").write_text(json.dumps(metrics.to_dict(), indent=2))
    if columns:
        trace.write_columns(out)


# ---------------------------------------------------------------- sweeps

SWEEP_AXES = ("push_magnitude", "push_time_in_phase", "v_des")


def _first_push(base: Scenario) -> PushEvent:
    if base.pushes:
        return base.pushes[0]
    T = base.params.T
    return PushEvent(2 * T + 0.1 * T, 2 * T + 0.1 * T + 0.1, (1.0, 0.0))


def sweep_point(base: Scenario, axis: str, value: float) -> Scenario:
    if axis == "push_magnitude":
        push = _first_push(base)
        direction = np.asarray(push.force, float)
        norm = np.linalg.norm(direction)
        direction = direction / norm if norm > 0 else np.array([1.0, 0.0])
        new = replace(push, force=tuple(direction * value))
        return replace(base, pushes=(new,) + tuple(base.pushes[1:]))
    if axis == "push_time_in_phase":
        push = _first_push(base)
        T = base.params.T
        phase_start = math.floor(push.t_start / T + 1e-9) * T
        width = push.t_end - push.t_start
        start = phase_start + value
        new = replace(push, t_start=start, t_end=start + width)
        return replace(base, pushes=(new,) + tuple(base.pushes[1:]))
    if axis == "v_des":
        return replace(base, v_des=(float(value), 0.0))
    raise ScenarioError(f"unknown sweep axis {axis!r}; expected one of {SWEEP_AXES}")


def _run_point(args):
    base, axis, value = args
    _, metrics = run_scenario(sweep_point(base, axis, value))
    return {"axis": axis, "value": float(value), **metrics.to_dict()}


def sweep(base: Scenario, axis: str, grid, workers: int = 1) -> list[dict]:
    """One metrics row per grid point, sorted by grid value."""
    if axis not in SWEEP_AXES:
        raise ScenarioError(f"unknown sweep axis {axis!r}; expected one of {SWEEP_AXES}")
    grid = sorted(float(g) for g in grid)
    jobs = [(base, axis, g) for g in grid]
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            rows = list(pool.map(_run_point, jobs))
    else:
        rows = [_run_point(j) for j in jobs]
    return sorted(rows, key=lambda r: r["value"])


def _bisect_magnitude(base: Scenario, accept, lo: float, hi: float, tol: float) -> float:
    """Largest magnitude in ``[lo, hi]`` with ``accept(metrics)``, assuming monotonicity."""
    def ok(mag):
        _, m = run_scenario(sweep_point(base, "push_magnitude", mag))
        return accept(m)

    if not ok(lo):
        raise ScenarioError(f"criterion fails already at the lower bound {lo}")
    if ok(hi):
        return hi
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if ok(mid):
            lo = mid
        else:
            hi = mid
    return lo


def capture_boundary(base: Scenario, lo: float = 0.0, hi: float = 200.0,
                     tol: float = 0.25) -> float:
    """Largest push magnitude (N) along the base push direction that is still captured."""
    return _bisect_magnitude(base, lambda m: m.captured, lo, hi, tol)


def recovery_boundary(base: Scenario, max_steps: int = 3, lo: float = 0.0,
                      hi: float = 200.0, tol: float = 0.25) -> float:
    """Largest push magnitude recovered within ``max_steps`` corrective steps."""
    return _bisect_magnitude(base, lambda m: 0 <= m.steps_to_recover <= max_steps, lo, hi, tol)
