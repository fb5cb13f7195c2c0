"""Symmetric periodic 3LP gaits and their nominal open-loop trajectories."""

from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.linalg import null_space

from .model import (
    SEL,
    ModelParams,
    dynamics_for,
    mirror_lateral,
    swap_support,
    transition,
)

# walking faster than this at COMAN scale is not physically meaningful for 3LP
PLAUSIBLE_SPEED = 0.6


class GaitError(RuntimeError):
    pass


class DegenerateModelError(GaitError):
    """The periodicity constraints lose rank for these parameters."""


class InfeasibleGaitError(GaitError):
    """No periodic gait reaches the requested average velocity."""


@dataclass(frozen=True)
class PeriodicGait:
    Qbar: np.ndarray
    Ubar: np.ndarray
    Dbar: float
    T: float
    v_des: np.ndarray
    params: ModelParams

    def mirrored(self) -> "PeriodicGait":
        """Same gait for the opposite support side."""
        U = self.Ubar.copy()
        U[1::2] *= -1.0
        v = self.v_des * np.array([1.0, -1.0])
        return PeriodicGait(mirror_lateral(self.Qbar), U, -self.Dbar, self.T, v, self.params)

    def for_support(self, d: float) -> "PeriodicGait":
        return self if d == self.Dbar else self.mirrored()

    def to_dict(self) -> dict:
        return {
            "Qbar": self.Qbar.tolist(),
            "Ubar": self.Ubar.tolist(),
            "Dbar": self.Dbar,
            "T": self.T,
            "v_des": self.v_des.tolist(),
            "params": json.loads(self.params.to_json()),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "PeriodicGait":
        return cls(np.array(data["Qbar"], float), np.array(data["Ubar"], float),
                   float(data["Dbar"]), float(data["T"]), np.array(data["v_des"], float),
                   ModelParams.from_dict(data["params"]))


def _periodicity_rows(params: ModelParams, T: float, D: float):
    """Rows of ``[G_Q, G_U] z = h`` for the symmetry and foot-velocity conditions."""
    tr = transition(dynamics_for(params), T)
    OMS = SEL.O @ SEL.M @ SEL.S
    G = np.zeros((12, 16))
    h = np.zeros(12)
    G[:8, :12] = SEL.M - OMS @ tr.A
    G[:8, 12:] = -OMS @ tr.B
    h[:8] = OMS @ tr.C[:, 0] * D
    G[8:, :12] = SEL.N
    return G, h, tr


def _axis_columns(G: np.ndarray) -> list[list[int]]:
    """Unknown indices per axis when the constraint rows split cleanly, else all at once."""
    sag = list(range(0, 16, 2))
    lat = list(range(1, 16, 2))
    mixed = np.any(G[:, sag] != 0.0, axis=1) & np.any(G[:, lat] != 0.0, axis=1)
    return [list(range(16))] if np.any(mixed) else [sag, lat]


def _min_torque_solution(G, h, w_inputs):
    """Solution of ``G z = h`` with least ``||diag(w) U||``; the last ``len(w)`` unknowns are U."""
    z, *_ = np.linalg.lstsq(G, h, rcond=None)
    null = null_space(G, rcond=1e-10)
    if null.shape[1]:
        m = len(w_inputs)
        W = np.diag(w_inputs)
        step, *_ = np.linalg.lstsq(W @ null[-m:], -W @ z[-m:], rcond=None)
        z = z + null @ step
    return z


def solve_periodic(params: ModelParams, v_des=(0.0, 0.0), T: float | None = None,
                   D: float = 1.0, input_weights=None) -> PeriodicGait:
    """Periodic gait with pelvis displacement ``v_des * T`` per step and least torque.

    The stance foot is pinned at the origin to remove the translation freedom.
    Any freedom left after the velocity constraint is spent minimising
    ``||W Ubar||`` with ``W = diag(input_weights)`` (identity by default).
    """
    T = params.T if T is None else float(T)
    if T <= 0:
        raise ValueError("step time must be positive")
    if D not in (1.0, -1.0):
        raise ValueError("support indicator must be +1 or -1")
    v_des = np.asarray(v_des, float).reshape(2)
    if np.linalg.norm(v_des) > PLAUSIBLE_SPEED:
        warnings.warn(f"|v_des| = {np.linalg.norm(v_des):.3f} m/s is outside the "
                      f"plausible range (<= {PLAUSIBLE_SPEED} m/s)", stacklevel=2)

    G_per, h_per, tr = _periodicity_rows(params, T, D)
    pin = np.zeros((2, 16))
    pin[:, 4:6] = np.eye(2)
    base = np.vstack([G_per, pin])
    base_h = np.concatenate([h_per, np.zeros(2)])
    tol = 1e-9 * max(1.0, np.abs(base).max())
    if np.linalg.matrix_rank(base, tol) < 14:
        raise DegenerateModelError("periodic-gait constraints are rank deficient")

    vel = np.zeros((2, 16))
    vel[:, :12] = tr.A[2:4] - np.eye(12)[2:4]
    vel[:, 12:] = tr.B[2:4]
    vel_h = v_des * T - tr.C[2:4, 0] * D

    G = np.vstack([base, vel])
    h = np.concatenate([base_h, vel_h])
    W = np.ones(4) if input_weights is None else np.asarray(input_weights, float)
    z0 = np.zeros(16)
    # the axes decouple, so each is solved on its own (an in-place gait then has
    # exactly zero sagittal motion rather than round-off)
    for cols in _axis_columns(G):
        rows = np.flatnonzero(np.any(G[:, cols] != 0.0, axis=1))
        z0[cols] = _min_torque_solution(G[np.ix_(rows, cols)], h[rows],
                                        W[np.asarray(cols)[np.asarray(cols) >= 12] - 12])
    if np.max(np.abs(G @ z0 - h)) > 1e-9 * max(1.0, np.abs(h).max()):
        raise InfeasibleGaitError(f"no periodic gait with average velocity {v_des}")

    gait = PeriodicGait(z0[:12].copy(), z0[12:].copy(), float(D), T, v_des, params)
    return gait


def nominal(gait: PeriodicGait, t: float) -> np.ndarray:
    if not 0.0 <= t <= gait.T * (1 + 1e-12):
        raise ValueError(f"phase time {t} outside [0, {gait.T}]")
    tr = transition(dynamics_for(gait.params), min(t, gait.T))
    return tr.apply(gait.Qbar, gait.Ubar, gait.Dbar)


def nominal_input(gait: PeriodicGait, t: float) -> np.ndarray:
    """Swing-hip torque of the nominal gait at phase time ``t``."""
    return gait.Ubar[:2] + t * gait.Ubar[2:]


def gait_residual(gait: PeriodicGait) -> float:
    """Max-norm of the periodicity, foot-velocity and average-velocity residuals."""
    G_per, h_per, tr = _periodicity_rows(gait.params, gait.T, gait.Dbar)
    z = np.concatenate([gait.Qbar, gait.Ubar])
    qT = tr.apply(gait.Qbar, gait.Ubar, gait.Dbar)
    vel_res = qT[2:4] - gait.Qbar[2:4] - gait.v_des * gait.T
    return float(max(np.max(np.abs(G_per @ z - h_per)), np.max(np.abs(vel_res))))


def sample_trajectory(gait: PeriodicGait, n: int = 101):
    ts = np.linspace(0.0, gait.T, n)
    return ts, np.array([nominal(gait, t) for t in ts])


TRAJ_COLUMNS = [
    "t",
    "x_swing_x", "x_swing_y", "x_pelvis_x", "x_pelvis_y", "x_stance_x", "x_stance_y",
    "v_swing_x", "v_swing_y", "v_pelvis_x", "v_pelvis_y", "v_stance_x", "v_stance_y",
]


def write_trajectory_csv(gait: PeriodicGait, path, n: int = 101) -> None:
    ts, qs = sample_trajectory(gait, n)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(TRAJ_COLUMNS)
        for t, q in zip(ts, qs):
            writer.writerow([repr(float(t))] + [repr(float(v)) for v in q])


def write_gait_json(gait: PeriodicGait, path) -> None:
    Path(path).write_text(json.dumps(gait.to_dict(), indent=2))


def next_phase_start(gait: PeriodicGait) -> np.ndarray:
    """Nominal end-of-phase state with the feet exchanged."""
    return swap_support(nominal(gait, gait.T))
