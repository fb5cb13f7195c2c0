"""Three-linear-pendulum (3LP) biped: continuous dynamics and exact transitions.

Coordinates are horizontal only. A position vector ``x`` stacks the swing foot,
pelvis and stance foot, each as a (sagittal, lateral) pair::

    x = [f_x, f_y, p_x, p_y, s_x, s_y]

and the full state is ``q = [x; xdot]`` (12 entries). The swing-hip torque is
``u = u_c + t * u_r`` with ``u_c, u_r`` in R^2; a positive component swings the
foot forward (sagittal) or towards +y (lateral). ``d = +1`` puts the stance hip
at ``p_y + w/2`` and the swing hip at ``p_y - w/2``; ``d = -1`` mirrors this.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields
from functools import lru_cache
from pathlib import Path

import numpy as np
from scipy.linalg import expm

SWING = slice(0, 2)
PELVIS = slice(2, 4)
STANCE = slice(4, 6)
SAG, LAT = 0, 1


@dataclass(frozen=True)
class ModelParams:
    """Physical parameters; defaults approximate COMAN (30 kg, 22.5% per leg)."""

    m_leg: float = 6.75
    m_torso: float = 16.5
    z_pelvis: float = 0.15 / 0.35
    r_leg_com: float = 0.5
    h_torso_com: float = 0.3
    w_pelvis: float = 0.14
    I_leg: float = 6.75 * (0.15 / 0.35) ** 2 / 12.0
    I_torso: float = 16.5 * 0.6**2 / 12.0
    g: float = 9.81
    T: float = 0.4

    def __post_init__(self):
        for name in ("m_leg", "m_torso", "z_pelvis", "h_torso_com", "w_pelvis",
                     "I_leg", "I_torso", "g", "T"):
            value = getattr(self, name)
            if not np.isfinite(value) or value <= 0:
                raise ValueError(f"{name} must be positive, got {value}")
        if not 0.0 < self.r_leg_com < 1.0:
            raise ValueError(f"r_leg_com must lie in (0, 1), got {self.r_leg_com}")

    @property
    def m_total(self) -> float:
        return 2.0 * self.m_leg + self.m_torso

    @property
    def h_leg(self) -> float:
        """Height of the leg masses above ground."""
        return self.r_leg_com * self.z_pelvis

    @property
    def h_torso(self) -> float:
        """Height of the torso mass above ground (push application point)."""
        return self.z_pelvis + self.h_torso_com

    def replace(self, **changes) -> "ModelParams":
        data = asdict(self)
        data.update(changes)
        return ModelParams(**data)

    def scaled_masses(self, factor: float) -> "ModelParams":
        """Masses and inertias scaled together, geometry unchanged."""
        return self.replace(m_leg=self.m_leg * factor, m_torso=self.m_torso * factor,
                            I_leg=self.I_leg * factor, I_torso=self.I_torso * factor)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2)

    @classmethod
    def from_dict(cls, data: dict) -> "ModelParams":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown ModelParams fields: {sorted(unknown)}")
        return cls(**{k: float(v) for k, v in data.items()})

    @classmethod
    def from_json(cls, text: str) -> "ModelParams":
        return cls.from_dict(json.loads(text))

    @classmethod
    def load(cls, path) -> "ModelParams":
        return cls.from_json(Path(path).read_text())


@dataclass(frozen=True)
class ContinuousDynamics:
    """``xddot = C_x x + C_u u + C_d d + C_f f_ext`` with f_ext applied at the torso mass."""

    C_x: np.ndarray
    C_u: np.ndarray
    C_d: np.ndarray
    C_f: np.ndarray
    params: ModelParams

    def accel(self, x, u, d, f_ext=(0.0, 0.0)) -> np.ndarray:
        return (self.C_x @ np.asarray(x, float) + self.C_u @ np.asarray(u, float)
                + self.C_d[:, 0] * d + self.C_f @ np.asarray(f_ext, float))


def _axis_dynamics(p: ModelParams, lateral: bool):
    """Per-axis 2-DOF dynamics of (swing foot, pelvis) with the stance foot fixed.

    Returns ``(K, b_d, b_u, b_f)`` such that
    ``[f'', p''] = K @ [f, p, s] + b_d * d + b_u * u + b_f * F``.

    Rows come from two balance laws written for masses on constant-height
    planes: total angular momentum about the stance foot (free ankle, internal
    hip torques cancel) and swing-leg angular momentum about the swing hip.
    Leg rotations are linearised as (hip - foot) / z.
    """
    z, r, g = p.z_pelvis, p.r_leg_com, p.g
    ml, mt, Il = p.m_leg, p.m_torso, p.I_leg
    Ht = p.h_torso
    # swing-hip offset from pelvis per unit d (stance hip is at +w/2 * d)
    o_sw = -0.5 * p.w_pelvis if lateral else 0.0

    mass = np.array([
        [ml * r * (1 - r) * z - Il / z, 2 * ml * r * r * z + mt * Ht + 2 * Il / z],
        [-ml * (1 - r) ** 2 * z - Il / z, -ml * (1 - r) * r * z + Il / z],
    ])
    stiff = np.array([
        [ml * g * (1 - r), 2 * ml * g * r + mt * g, -(ml * g * (1 + r) + mt * g)],
        [ml * g * (1 - r), -ml * g * (1 - r), 0.0],
    ])
    rhs_d = np.array([0.0, -ml * g * (1 - r) * o_sw])
    rhs_u = np.array([0.0, -1.0])
    rhs_f = np.array([Ht, 0.0])
    inv = np.linalg.inv(mass)
    return inv @ stiff, inv @ rhs_d, inv @ rhs_u, inv @ rhs_f


def build_continuous_dynamics(params: ModelParams) -> ContinuousDynamics:
    C_x = np.zeros((6, 6))
    C_u = np.zeros((6, 2))
    C_d = np.zeros((6, 1))
    C_f = np.zeros((6, 2))
    for axis in (SAG, LAT):
        K, b_d, b_u, b_f = _axis_dynamics(params, lateral=axis == LAT)
        rows = [0 + axis, 2 + axis]
        cols = [0 + axis, 2 + axis, 4 + axis]
        C_x[np.ix_(rows, cols)] = K
        C_u[rows, axis] = b_u
        C_d[rows, 0] = C_d[rows, 0] + b_d
        C_f[rows, axis] = b_f
    return ContinuousDynamics(C_x, C_u, C_d, C_f, params)


@dataclass(frozen=True)
class Transition:
    """``q(t) = A q0 + B [u_c; u_r] + C d + F f`` over a duration ``t``."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    F: np.ndarray

    def apply(self, q0, u=np.zeros(4), d=1.0, f_ext=(0.0, 0.0)) -> np.ndarray:
        return (self.A @ np.asarray(q0, float) + self.B @ np.asarray(u, float)
                + self.C[:, 0] * d + self.F @ np.asarray(f_ext, float))


def _augmented_generator(dyn: ContinuousDynamics) -> np.ndarray:
    # z = [x(6), xdot(6), w(2), u_r(2), d(1), f(2)] where w = u_c + t u_r
    n = 19
    G = np.zeros((n, n))
    G[0:6, 6:12] = np.eye(6)
    G[6:12, 0:6] = dyn.C_x
    G[6:12, 12:14] = dyn.C_u
    G[6:12, 16:17] = dyn.C_d
    G[6:12, 17:19] = dyn.C_f
    G[12:14, 14:16] = np.eye(2)
    return G


def transition(dyn: ContinuousDynamics, t: float) -> Transition:
    if not np.isfinite(t) or t < 0:
        raise ValueError(f"duration must be finite and non-negative, got {t}")
    Phi = expm(_augmented_generator(dyn) * t)
    return Transition(A=Phi[0:12, 0:12], B=Phi[0:12, 12:16],
                      C=Phi[0:12, 16:17], F=Phi[0:12, 17:19])


@lru_cache(maxsize=None)
def _cached(params: ModelParams):
    return build_continuous_dynamics(params)


def dynamics_for(params: ModelParams) -> ContinuousDynamics:
    """Memoised ``build_continuous_dynamics`` (params are hashable and frozen)."""
    return _cached(params)


def check_stance_at_rest(q0, tol: float = 1e-12) -> None:
    q0 = np.asarray(q0, float)
    if np.max(np.abs(q0[10:12])) > tol:
        raise ValueError("stance-foot velocity must be zero at phase start")


def evolve(dyn: ContinuousDynamics, q0, u, d: float, t: float,
           f_ext=(0.0, 0.0)) -> np.ndarray:
    """Closed-form state after ``t`` seconds of single support."""
    check_stance_at_rest(q0)
    return transition(dyn, t).apply(q0, u, d, f_ext)


# ---------------------------------------------------------------- selectors

_I2 = np.eye(2)
_Z2 = np.zeros((2, 2))

S_x = np.block([[_Z2, _Z2, _I2], [_Z2, _I2, _Z2], [_I2, _Z2, _Z2]])
M_x = np.block([[_I2, _Z2, -_I2], [_Z2, _I2, -_I2]])
Mhat_x = np.block([[_I2, _Z2], [_Z2, _I2], [_Z2, _Z2]])


@dataclass(frozen=True)
class SelectorMatrices:
    S: np.ndarray
    M: np.ndarray
    N: np.ndarray
    O: np.ndarray
    Mhat: np.ndarray
    Chat: np.ndarray


def _blockdiag(a, b):
    out = np.zeros((a.shape[0] + b.shape[0], a.shape[1] + b.shape[1]))
    out[: a.shape[0], : a.shape[1]] = a
    out[a.shape[0]:, a.shape[1]:] = b
    return out


def selector_matrices() -> SelectorMatrices:
    N = np.zeros((4, 12))
    N[0:2, 6:8] = _I2
    N[2:4, 10:12] = _I2
    Chat = np.zeros((2, 8))
    Chat[:, 4:6] = _I2
    return SelectorMatrices(
        S=_blockdiag(S_x, S_x),
        M=_blockdiag(M_x, M_x),
        N=N,
        O=np.diag([1.0, -1.0] * 4),
        Mhat=_blockdiag(Mhat_x, Mhat_x),
        Chat=Chat,
    )


SEL = selector_matrices()


def swap_support(q) -> np.ndarray:
    """Exchange swing and stance feet (positions and velocities)."""
    return SEL.S @ np.asarray(q, float)


def mirror_lateral(q) -> np.ndarray:
    """Negate every lateral component of a 12-state."""
    out = np.array(q, float)
    out[1::2] *= -1.0
    return out


# ---------------------------------------------------------------- export

def export_matrices_csv(dyn: ContinuousDynamics, directory) -> list[Path]:
    """Write C_x, C_u, C_d, C_f as row-major CSV with 17 significant digits."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    written = []
    for name in ("C_x", "C_u", "C_d", "C_f"):
        path = directory / f"{name}.csv"
        np.savetxt(path, getattr(dyn, name), delimiter=",", fmt="%.17g")
        written.append(path)
    return written
