"""Schroedinger propagation of a subspace frame on a uniform grid."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from . import linalg
from .errors import DegeneracyError, DimensionError, PropagationError
from .linalg import Frame, PartialIsometry, dagger
from .models import HamiltonianModel, ModelConfig, hamiltonians, initial_frame

log = logging.getLogger(__name__)

INTEGRATOR_ORDER = 2


@dataclass(eq=False)
class Trajectory:
    """Node-wise record of an evolved frame and derived operators.

    Arrays are stacked along the first axis: node arrays have ``M + 1``
    entries, half-step arrays (``mid_*``) have ``M``. ``mid_frames[k]`` is
    ``frames[k]`` advanced by half a step, ``mid_H[k] = H(t_k + dt/2)``.
    """

    model: HamiltonianModel
    times: np.ndarray
    frames: np.ndarray
    H: np.ndarray
    P: np.ndarray
    Pdot: np.ndarray
    F: np.ndarray
    F_embedding: np.ndarray
    mid_frames: np.ndarray
    mid_H: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in ("times", "frames", "H", "P", "Pdot", "F", "F_embedding", "mid_frames", "mid_H"):
            getattr(self, name).setflags(write=False)

    @property
    def steps(self) -> int:
        return len(self.times) - 1

    @property
    def dt(self) -> float:
        return self.meta["dt"]

    @property
    def dim(self) -> int:
        return self.frames.shape[1]

    @property
    def rank(self) -> int:
        return self.frames.shape[2]

    def frame(self, k) -> Frame:
        return Frame(self.frames[k])

    def U(self, k=None):
        """U(t_k, 0) = frame(t_k) frame(0)^dagger; all nodes if ``k`` is None."""
        f0h = dagger(self.frames[0])
        if k is None:
            return self.frames @ f0h
        return self.frames[k] @ f0h

    def mid_U(self):
        return self.mid_frames @ dagger(self.frames[0])


def projector(f):
    """P = f f^dagger for a frame (or raw orthonormal columns)."""
    cols = f.columns if isinstance(f, Frame) else np.asarray(f, dtype=complex)
    return linalg.hermitian_part(cols @ dagger(cols))


def projector_derivative_commutator(H, P):
    """Pdot = -i [H, P]; works on stacks."""
    H = np.asarray(H, dtype=complex)
    P = np.asarray(P, dtype=complex)
    if H.shape != P.shape or H.shape[-1] != H.shape[-2]:
        raise DimensionError(f"H {H.shape} and P {P.shape} do not conform")
    return linalg.hermitian_part(-1j * (H @ P - P @ H))


def coupling(frames, H):
    """F_jk = -i <psi_j| H |psi_k> for (stacks of) frames."""
    frames = np.asarray(frames, dtype=complex)
    H = np.asarray(H, dtype=complex)
    if H.shape[-1] != frames.shape[-2] or H.shape[-2] != H.shape[-1]:
        raise DimensionError(f"H {H.shape} does not act on frame {frames.shape}")
    F = -1j * (dagger(frames) @ H @ frames)
    return 0.5 * (F - dagger(F))


def evolve_frames(model: HamiltonianModel, config: ModelConfig, frame: Frame | None = None) -> Trajectory:
    """Integrate i d/dt psi_j = H(t) psi_j with the exponential midpoint rule.

    ``frame(t + dt) = exp(-i H(t + dt/2) dt) frame(t)``. Every
    ``flags['reorthonormalize_every']`` steps the frame is Loewdin
    orthonormalized and the Gram drift removed is logged.
    """
    if frame is None:
        frame = initial_frame(model)
    if frame.dim != model.dim:
        raise DimensionError(f"frame dimension {frame.dim} != model dimension {model.dim}")
    steps = config.steps
    dt = config.dt
    cadence = int(config.flags.get("reorthonormalize_every", 50))
    times = np.linspace(0.0, config.t_final, steps + 1)

    H = hamiltonians(model, times)
    scale = np.maximum(1.0, linalg.frobenius_norms(H))
    if np.any(linalg.frobenius_norms(H - dagger(H)) > 1e-12 * scale):
        raise PropagationError(f"model {model.name!r} produced a non-Hermitian H")
    H = linalg.hermitian_part(H)
    mid_H = linalg.hermitian_part(hamiltonians(model, times[:-1] + 0.5 * dt))
    quarter_H = linalg.hermitian_part(hamiltonians(model, times[:-1] + 0.25 * dt))
    step_ops = linalg.matrix_exponential(-1j * dt * mid_H)
    half_ops = linalg.matrix_exponential(-0.5j * dt * quarter_H)

    frames = np.empty((steps + 1,) + frame.columns.shape, dtype=complex)
    frames[0] = frame.columns
    drift_log = []
    max_norm_drift = 0.0
    for k in range(steps):
        nxt = step_ops[k] @ frames[k]
        norms = np.linalg.norm(nxt, axis=0)
        max_norm_drift = max(max_norm_drift, float(np.max(np.abs(norms - 1.0))))
        if (k + 1) % cadence == 0:
            drift = linalg.gram_defect(nxt)
            try:
                nxt = linalg.lowdin(nxt)
            except DegeneracyError as exc:
                raise PropagationError(f"reorthonormalization failed: {exc}", times[k + 1]) from exc
            drift_log.append((float(times[k + 1]), drift))
            log.debug("reorthonormalized at t=%.6g, Gram drift %.3e", times[k + 1], drift)
        frames[k + 1] = nxt

    mid_frames = half_ops @ frames[:-1]
    P = projector(frames)
    Pdot = projector_derivative_commutator(H, P)
    F = coupling(frames, H)
    f0 = frames[0]
    F_embedding = f0 @ F @ dagger(f0)
    meta = {
        "model": model.name,
        "dt": dt,
        "t_final": config.t_final,
        "integrator_order": INTEGRATOR_ORDER,
        "reorthonormalize_every": cadence,
        "max_norm_drift": max_norm_drift,
        "max_gram_drift": max((d for _, d in drift_log), default=0.0),
        "drift_log": drift_log,
        "flags": dict(config.flags),
    }
    return Trajectory(model, times, frames, H, P, Pdot, F, F_embedding, mid_frames, mid_H, meta)


def _check_index(traj: Trajectory, k: int):
    if not 0 <= k <= traj.steps:
        raise IndexError(f"node index {k} outside [0, {traj.steps}]")


def evolution_operator(traj: Trajectory, k: int) -> PartialIsometry:
    """U(t_k, 0) = sum_j |psi_j(t_k)><psi_j(0)| with its source/target projectors."""
    _check_index(traj, k)
    return PartialIsometry(traj.U(k), traj.P[0], traj.P[k])


class FiniteDifference(NamedTuple):
    matrix: np.ndarray
    one_sided: bool


def projector_derivative_fd(traj: Trajectory, k: int) -> FiniteDifference:
    """Central difference of P at node k; one-sided (first order) at the ends."""
    _check_index(traj, k)
    if traj.steps < 1:
        raise IndexError("finite difference needs at least two nodes")
    P, dt = traj.P, traj.dt
    if k == 0:
        return FiniteDifference((P[1] - P[0]) / dt, True)
    if k == traj.steps:
        return FiniteDifference((P[k] - P[k - 1]) / dt, True)
    return FiniteDifference((P[k + 1] - P[k - 1]) / (2 * dt), False)
