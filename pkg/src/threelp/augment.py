"""Trajectory augmentations and actuator behaviour models.

Hip angles are mapped to Cartesian offsets through the pelvis height and knee
corrections through the shank length; there is no whole-robot kinematics here.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class LiftConfig:
    z_fixed_amp: float = 0.01
    roll_amp: float = 0.1
    T: float = 0.4

    def __post_init__(self):
        if self.z_fixed_amp < 0 or self.roll_amp < 0:
            raise ValueError("lift amplitudes must be non-negative")
        if self.T <= 0:
            raise ValueError("T must be positive")


def _half_sine(t, T):
    if not 0.0 <= t <= T * (1 + 1e-12):
        raise ValueError(f"phase time {t} outside [0, {T}]")
    return np.sin(np.pi * t / T)


def fixed_lift(t: float, T: float, cfg: LiftConfig = LiftConfig()) -> float:
    return cfg.z_fixed_amp * _half_sine(t, T)


def pelvis_roll(t: float, T: float, cfg: LiftConfig = LiftConfig()) -> float:
    return cfg.roll_amp * _half_sine(t, T)


def roll_lift(roll: float, w_pelvis: float) -> float:
    """Foot lift produced by rolling the pelvis about the stance hip."""
    return w_pelvis * np.sin(roll)


def adaptive_lift(e1: float, e2: float, z: float, t: float, T: float):
    """Extra swing lift and the estimated hip angle from sagittal errors (m)."""
    theta_hat = float(np.arctan((e2 - e1) / z))
    return z * (1.0 - np.cos(theta_hat)) * _half_sine(t, T), theta_hat


def foot_pitch_comp(theta_hat: float) -> float:
    return -theta_hat


def hip_gamma(t: float, phase: str, T: float) -> float:
    t1 = 0.2 * T
    decay = np.exp(-((t / t1) ** 2))
    if phase == "stance":
        return float(decay)
    if phase == "swing":
        return float(1.0 - decay)
    raise ValueError(f"phase must be 'swing' or 'stance', got {phase!r}")


def hip_blend(t, phase, theta_des, theta_act, theta_pitch, k_d, T) -> float:
    """Hip voltage blending joint tracking with torso (IMU pitch) regulation."""
    if not 0.0 <= t <= T * (1 + 1e-12):
        raise ValueError(f"phase time {t} outside [0, {T}]")
    gamma = hip_gamma(t, phase, T)
    return k_d * (gamma * (theta_des - theta_act) + (1.0 - gamma) * (-theta_pitch))


@dataclass(frozen=True)
class SeaComp:
    mu_left: float = 0.128
    mu_right: float = 0.056
    mg: float = 30.0 * 9.81
    shank: float = 0.25

    def __post_init__(self):
        if self.mu_left < 0 or self.mu_right < 0:
            raise ValueError("mean deflections must be non-negative")


def sea_knee_comp(F_left: float, F_right: float, comp: SeaComp = SeaComp()):
    if F_left < 0 or F_right < 0:
        raise ValueError("contact forces must be non-negative")
    return (-abs(F_left) / comp.mg * comp.mu_left,
            -abs(F_right) / comp.mg * comp.mu_right)


def knee_horizontal_effect(dtheta: float, shank: float) -> float:
    return abs(dtheta) * shank


def synthesized_contact(t: float, T: float, mg: float, stance: bool) -> float:
    """Vertical load of one foot, blended over the first 20% of the phase."""
    share = 1.0 - hip_gamma(t, "stance", T)
    return mg * (share if stance else 1.0 - share)


@dataclass(frozen=True)
class ActuatorModel:
    alpha: float = 5.42
    beta: float = 0.45
    J_m: float = 0.23
    A_c: float = 1.66
    v_max: float = 15.0

    def __post_init__(self):
        for name in ("alpha", "beta", "J_m", "A_c", "v_max"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")

    @property
    def no_load_speed(self) -> float:
        """Steady shaft speed at full voltage and zero load."""
        return self.v_max / (self.alpha + self.beta * self.A_c)

    @property
    def damping(self) -> float:
        return self.alpha / self.beta

    def position_stiffness(self, k_d: float) -> float:
        """Stiffness of a proportional voltage loop ``v = k_d (theta_des - theta)``."""
        return k_d / self.beta


def actuator_step(m: ActuatorModel, v_cmd: float, theta_dot: float, tau_out: float):
    """Shaft acceleration for a commanded voltage; returns ``(theta_ddot, saturated)``."""
    v = float(np.clip(v_cmd, -m.v_max, m.v_max))
    theta_ddot = ((v - m.alpha * theta_dot) / m.beta - tau_out
                  - m.A_c * abs(theta_dot)) / m.J_m
    return theta_ddot, abs(theta_dot) >= m.no_load_speed


def series_stiffness(*stiffnesses: float) -> float:
    return 1.0 / sum(1.0 / k for k in stiffnesses)
