"""Step-to-step error dynamics, constrained DLQR and continuous time-projection.

Errors live in relative coordinates ``e = M (q - qbar)``: swing-minus-stance and
pelvis-minus-stance positions followed by their velocities, each a
(sagittal, lateral) pair. Corrections are ``dU = [du_c; du_r]``.
"""

from __future__ import annotations

import csv
import itertools
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .gait import PeriodicGait
from .model import SEL, ContinuousDynamics, SelectorMatrices, dynamics_for, transition

MAX_STEP = 0.15


class RiccatiNotConverged(RuntimeError):
    pass


class SingularConstraint(RuntimeError):
    pass


class SingularProjection(RuntimeError):
    pass


@dataclass(frozen=True)
class ErrorDynamics:
    Ahat: np.ndarray
    Bhat: np.ndarray
    Chat: np.ndarray
    T: float
    dyn: ContinuousDynamics

    def step(self, E, dU=np.zeros(4)) -> np.ndarray:
        return self.Ahat @ E + self.Bhat @ dU

    def intra_phase(self, tau: float):
        """Error propagation inside a phase (no foot exchange)."""
        tr = transition(self.dyn, tau)
        return SEL.M @ tr.A @ SEL.Mhat, SEL.M @ tr.B


def build_error_dynamics(dyn: ContinuousDynamics, sel: SelectorMatrices = SEL,
                         T: float | None = None) -> ErrorDynamics:
    T = dyn.params.T if T is None else T
    tr = transition(dyn, T)
    OMS = sel.O @ sel.M @ sel.S
    return ErrorDynamics(OMS @ tr.A @ sel.Mhat, OMS @ tr.B, sel.Chat.copy(), T, dyn)


def default_weights(T: float):
    """Per-unit weights: velocities scaled by T, torque rates by T as well."""
    Qw = np.diag([1.0] * 4 + [T**2] * 4)
    Rw = np.diag([1e-4, 1e-4, 1e-4 * T**2, 1e-4 * T**2])
    return Qw, Rw


@dataclass(frozen=True)
class DlqrGain:
    K: np.ndarray
    Qw: np.ndarray
    Rw: np.ndarray
    riccati_residual: float
    P: np.ndarray = field(repr=False)
    iterations: int = 0
    eliminated: tuple = (0, 1)

    def closed_loop(self, ed: ErrorDynamics) -> np.ndarray:
        return ed.Ahat - ed.Bhat @ self.K


def riccati_iterate(A, B, Q, R, N=None, tol=1e-13, max_iter=100_000):
    """Fixed point of the DARE with cross term by value iteration.

    Returns ``(P, K, iterations)`` with ``u = -K x``. Stops once the relative
    change between successive iterates falls below ``tol``.
    """
    n, m = B.shape
    N = np.zeros((n, m)) if N is None else N
    P = Q.copy()
    for it in range(1, max_iter + 1):
        S = R + B.T @ P @ B
        K = np.linalg.solve(S, B.T @ P @ A + N.T)
        P_next = A.T @ P @ A - (A.T @ P @ B + N) @ K + Q
        P_next = 0.5 * (P_next + P_next.T)
        delta = np.linalg.norm(P_next - P) / max(1.0, np.linalg.norm(P_next))
        P = P_next
        if delta < tol:
            K = np.linalg.solve(R + B.T @ P @ B, B.T @ P @ A + N.T)
            return P, K, it
    raise RiccatiNotConverged(f"Riccati iteration did not converge in {max_iter} steps")


def dare_residual(P, A, B, Q, R, N=None) -> float:
    """Relative residual of the discrete algebraic Riccati equation."""
    N = np.zeros(B.shape) if N is None else N
    K = np.linalg.solve(R + B.T @ P @ B, B.T @ P @ A + N.T)
    res = A.T @ P @ A - (A.T @ P @ B + N) @ K + Q - P
    return float(np.linalg.norm(res) / max(1.0, np.linalg.norm(P)))


def _pick_pair(CB: np.ndarray):
    best, best_cond = None, np.inf
    for pair in itertools.combinations(range(CB.shape[1]), CB.shape[0]):
        cond = np.linalg.cond(CB[:, pair])
        if cond < best_cond - 1e-9:
            best, best_cond = pair, cond
    if best is None or not np.isfinite(best_cond) or best_cond > 1e12:
        raise SingularConstraint("Chat @ Bhat has no invertible column pair")
    return best


def solve_constrained_dlqr(ed: ErrorDynamics, Qw=None, Rw=None, tol=1e-13,
                           max_iter=100_000) -> DlqrGain:
    """DLQR gain ``dU = -K E`` that also enforces ``Chat E[k+1] = 0``.

    Two inputs are solved from the constraint and eliminated; Riccati runs on
    the remaining inputs and the six states left free by the constraint.
    """
    dQ, dR = default_weights(ed.T)
    Qw = dQ if Qw is None else np.asarray(Qw, float)
    Rw = dR if Rw is None else np.asarray(Rw, float)
    A, B, C = ed.Ahat, ed.Bhat, ed.Chat
    CB = C @ B
    a = _pick_pair(CB)
    b = tuple(i for i in range(B.shape[1]) if i not in a)
    inv = np.linalg.inv(CB[:, a])
    # dU_a = La_E E + La_b dU_b
    La_E = -inv @ C @ A
    La_b = -inv @ CB[:, b]
    # dU = L_E E + L_b dU_b, in the original input order
    L_E = np.zeros((B.shape[1], A.shape[0]))
    L_b = np.zeros((B.shape[1], len(b)))
    L_E[list(a)] = La_E
    L_b[list(a)] = La_b
    L_b[list(b)] = np.eye(len(b))
    Abar = A + B @ L_E
    Bbar = B @ L_b
    # basis of the constraint-consistent subspace
    free = [i for i in range(A.shape[0]) if not np.any(C[:, i])]
    P_sel = np.eye(A.shape[0])[:, free]
    Ar = P_sel.T @ Abar @ P_sel
    Br = P_sel.T @ Bbar
    Qr = P_sel.T @ (Qw + L_E.T @ Rw @ L_E) @ P_sel
    Nr = P_sel.T @ L_E.T @ Rw @ L_b
    Rr = L_b.T @ Rw @ L_b
    Pr, Kr, its = riccati_iterate(Ar, Br, Qr, Rr, Nr, tol=tol, max_iter=max_iter)
    residual = dare_residual(Pr, Ar, Br, Qr, Rr, Nr)
    K = -(L_E - L_b @ Kr @ P_sel.T)
    return DlqrGain(K=K, Qw=Qw, Rw=Rw, riccati_residual=residual, P=Pr,
                    iterations=its, eliminated=a)


def constrained_spectral_radius(ed: ErrorDynamics, gain: DlqrGain) -> float:
    """Spectral radius of the closed loop restricted to ``Chat E = 0``."""
    free = [i for i in range(ed.Ahat.shape[0]) if not np.any(ed.Chat[:, i])]
    P_sel = np.eye(ed.Ahat.shape[0])[:, free]
    Acl = P_sel.T @ gain.closed_loop(ed) @ P_sel
    return float(np.max(np.abs(np.linalg.eigvals(Acl))))


# ---------------------------------------------------------------- projection

def projection_system(ed: ErrorDynamics, K: np.ndarray, tau: float) -> np.ndarray:
    if not 0.0 <= tau <= ed.T * (1 + 1e-12):
        raise ValueError(f"phase time {tau} outside [0, {ed.T}]")
    At, Bt = ed.intra_phase(min(tau, ed.T))
    n, m = Bt.shape
    return np.block([[At, Bt], [K, np.eye(m)]])


def _solve_projection(ed, K, tau, rhs):
    system = projection_system(ed, K, tau)
    if np.linalg.cond(system) > 1e12:
        raise SingularProjection(f"projection system singular at tau={tau}")
    return np.linalg.solve(system, rhs)


def project(ed: ErrorDynamics, K, e, tau: float):
    """Equivalent phase-start error and correction ``(E, dU)`` for error ``e`` at ``tau``."""
    e = np.asarray(e, float)
    sol = _solve_projection(ed, K, tau, np.concatenate([e, np.zeros(K.shape[0])]))
    return sol[:8], sol[8:]


def time_project(ed: ErrorDynamics, gait: PeriodicGait | None, K, e, tau: float) -> np.ndarray:
    """Swing-hip torque correction ``[du_c; du_r]`` for error ``e`` at phase time ``tau``."""
    return project(ed, K, e, tau)[1]


def final_error(ed: ErrorDynamics, K, e, tau: float) -> np.ndarray:
    """Error at the end of the phase under the projected constant correction."""
    if tau >= ed.T * (1 - 1e-12):
        # nothing left to project; the projection system itself is singular here
        return np.asarray(e, float).copy()
    E, dU = project(ed, K, e, tau)
    At, Bt = ed.intra_phase(ed.T)
    return At @ E + Bt @ dU


@dataclass(frozen=True)
class FootstepAdjustment:
    dp: np.ndarray
    dtheta: np.ndarray
    truncated: np.ndarray
    dp_raw: np.ndarray


def truncate_step(dp_raw, z: float, limit: float = MAX_STEP) -> FootstepAdjustment:
    dp_raw = np.asarray(dp_raw, float)
    dp = np.clip(dp_raw, -limit, limit)
    return FootstepAdjustment(dp=dp, dtheta=dp / z, truncated=np.abs(dp_raw) > limit,
                              dp_raw=dp_raw)


def footstep_adjustment(ed: ErrorDynamics, gait, K, e, tau: float, z: float,
                        limit: float = MAX_STEP) -> FootstepAdjustment:
    """Final swing-foot deviation from nominal (sagittal, lateral), clamped per axis."""
    return truncate_step(final_error(ed, K, e, tau)[0:2], z, limit)


# ---------------------------------------------------------------- gain table

@dataclass(frozen=True)
class GainTable:
    tau_grid: np.ndarray
    Gu: np.ndarray  # (n, 4, 8): du = -Gu(tau) e
    Gp: np.ndarray  # (n, 2, 8): dp = -Gp(tau) e
    T: float
    Qw: np.ndarray | None = None
    Rw: np.ndarray | None = None

    def _interp(self, table, tau):
        if not 0.0 <= tau <= self.T * (1 + 1e-12):
            raise ValueError(f"phase time {tau} outside [0, {self.T}]")
        n = len(self.tau_grid)
        pos = tau / self.T * n
        i = int(pos)
        if i >= n - 1:
            return table[-1].copy()  # beyond the last node the gains are held
        w = pos - i
        return (1 - w) * table[i] + w * table[i + 1]

    def gu(self, tau):
        return self._interp(self.Gu, tau)

    def gp(self, tau):
        return self._interp(self.Gp, tau)

    def du(self, e, tau):
        return -self.gu(tau) @ np.asarray(e, float)

    def dp(self, e, tau):
        return -self.gp(tau) @ np.asarray(e, float)

    def header(self) -> dict:
        return {
            "grid": len(self.tau_grid),
            "T": self.T,
            "Qw": None if self.Qw is None else self.Qw.tolist(),
            "Rw": None if self.Rw is None else self.Rw.tolist(),
        }

    def write(self, csv_path, json_path=None) -> None:
        with open(csv_path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["tau"] + [f"Gu{i}{j}" for i in range(4) for j in range(8)]
                            + [f"Gp{i}{j}" for i in range(2) for j in range(8)])
            for tau, gu, gp in zip(self.tau_grid, self.Gu, self.Gp):
                writer.writerow([repr(float(v)) for v in
                                 np.concatenate([[tau], gu.ravel(), gp.ravel()])])
        if json_path is not None:
            Path(json_path).write_text(json.dumps(self.header(), indent=2))

    @classmethod
    def read(cls, csv_path, json_path=None) -> "GainTable":
        with open(csv_path, newline="") as fh:
            rows = list(csv.reader(fh))[1:]
        data = np.array([[float(v) for v in row] for row in rows])
        header = json.loads(Path(json_path).read_text()) if json_path else {}
        T = header.get("T", float(data[1, 0] * len(data)) if len(data) > 1 else None)
        if T is None:
            raise ValueError("gain table period unknown: provide the JSON header")
        Qw = header.get("Qw")
        Rw = header.get("Rw")
        return cls(data[:, 0], data[:, 1:33].reshape(-1, 4, 8),
                   data[:, 33:49].reshape(-1, 2, 8), T,
                   None if Qw is None else np.array(Qw), None if Rw is None else np.array(Rw))


def export_gain_table(ed: ErrorDynamics, gait, gain, grid_size: int) -> GainTable:
    """Tabulate the linear maps e -> du and e -> dp at ``tau_i = i T / grid_size``.

    The grid stops one spacing short of ``T``: there the foot-velocity constraint makes
    the projection singular and the torque gains grow like ``1 / (T - tau)``.
    """
    if grid_size < 2:
        raise ValueError("grid_size must be at least 2")
    K = gain.K if isinstance(gain, DlqrGain) else np.asarray(gain)
    taus = np.arange(grid_size) * (ed.T / grid_size)
    At_end, Bt_end = ed.intra_phase(ed.T)
    Gu = np.empty((grid_size, 4, 8))
    Gp = np.empty((grid_size, 2, 8))
    rhs = np.vstack([np.eye(8), np.zeros((4, 8))])
    for i, tau in enumerate(taus):
        sol = _solve_projection(ed, K, tau, rhs)
        E, dU = sol[:8], sol[8:]
        Gu[i] = -dU
        Gp[i] = -(At_end @ E + Bt_end @ dU)[0:2]
    Qw = gain.Qw if isinstance(gain, DlqrGain) else None
    Rw = gain.Rw if isinstance(gain, DlqrGain) else None
    return GainTable(taus, Gu, Gp, ed.T, Qw, Rw)


@dataclass(frozen=True)
class Controller:
    """Everything the online loop needs, synthesised once per model."""

    ed: ErrorDynamics
    gain: DlqrGain

    @property
    def K(self):
        return self.gain.K

    @classmethod
    def synthesize(cls, params, Qw=None, Rw=None) -> "Controller":
        ed = build_error_dynamics(dynamics_for(params))
        return cls(ed, solve_constrained_dlqr(ed, Qw, Rw))
