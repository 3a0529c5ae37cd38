"""Holonomy and dynamic factors of U(t,0) and the identities linking them.

The subspace evolution operator obeys dU/dt = Pdot U + U F with
F(t,0) = sum_jk F_jk(t) |psi_j(0)><psi_k(0)|, F_jk = -i <psi_j(t)|H|psi_k(t)>.
Its formal solution is the product W D of

* the holonomy factor W = Pexp(int Pdot) P(0), later times to the LEFT, and
* the dynamic factor D = P(0) Tbar-exp(int F), later times to the RIGHT.

Because F(t,0) equals -i U^dagger H U, the dynamic factor is itself a
functional of U. ``circularity_equivalence`` builds D through both
expressions and reports the difference.

Ordered exponentials are discretized with one exponential per step of the
generator sampled at the half-step, which is second order in dt.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import linalg
from .errors import DegeneracyError, DecompositionError, DimensionError, InsufficientGridError
from .linalg import Frame, PartialIsometry, dagger, frobenius_norm, frobenius_norms
from .propagation import Trajectory, coupling, projector, projector_derivative_commutator


@dataclass(frozen=True, eq=False)
class SubspaceGenerator:
    """F(t,0): ``matrix`` holds F_jk (None when built from U directly)."""

    embedding: np.ndarray
    matrix: np.ndarray | None = None

    @property
    def rank(self):
        return None if self.matrix is None else self.matrix.shape[0]

    @property
    def antihermitian_defect(self) -> float:
        m = self.embedding if self.matrix is None else self.matrix
        return frobenius_norm(m + dagger(m))


@dataclass(frozen=True, eq=False)
class DecompositionResult:
    holonomy: PartialIsometry
    dynamic: np.ndarray
    product: np.ndarray
    residual_factorization: float
    residual_ode: np.ndarray
    residual_identity_eq3: np.ndarray
    residual_circularity_eq4: float
    isometry_defect_holonomy: tuple


def _frame_columns(f):
    return f.columns if isinstance(f, Frame) else np.asarray(f, dtype=complex)


def coupling_matrix(frame_t, H):
    """F_jk = -i (column_j)^dagger H (column_k) as an l x l matrix."""
    cols = _frame_columns(frame_t)
    H = np.asarray(H, dtype=complex)
    if H.ndim != 2 or H.shape != (cols.shape[0], cols.shape[0]):
        raise DimensionError(f"H {H.shape} does not act on frame {cols.shape}")
    return coupling(cols, H)


def embed_generator(matrix, frame_0) -> SubspaceGenerator:
    """Embedding sum_jk F_jk |psi_j(0)><psi_k(0)| = f0 F f0^dagger."""
    cols = _frame_columns(frame_0)
    matrix = np.asarray(matrix, dtype=complex)
    if matrix.shape != (cols.shape[1], cols.shape[1]):
        raise DimensionError(f"generator {matrix.shape} does not match frame rank {cols.shape[1]}")
    return SubspaceGenerator(cols @ matrix @ dagger(cols), matrix)


def generator_from_U(U, H) -> SubspaceGenerator:
    """F(t,0) evaluated as -i U^dagger H U."""
    u = U.matrix if isinstance(U, PartialIsometry) else np.asarray(U, dtype=complex)
    H = np.asarray(H, dtype=complex)
    if u.shape[-1] != H.shape[-1] or u.shape[-2] != H.shape[-1]:
        raise DimensionError(f"U {u.shape} and H {H.shape} do not conform")
    return SubspaceGenerator(-1j * (dagger(u) @ H @ u))


def _flag(traj, name, override):
    if override is not None:
        return bool(override)
    return bool(traj.meta.get("flags", {}).get(name, False))


def midpoint_projector_derivative(traj: Trajectory):
    """-i [H(t_k + dt/2), P~_k] with P~_k the half-step projector."""
    return projector_derivative_commutator(traj.mid_H, projector(traj.mid_frames))


def midpoint_generators(traj: Trajectory, route="coupling"):
    """Half-step F(t,0) embeddings.

    ``route='coupling'`` embeds F_jk of the half-step frame;
    ``route='evolution'`` evaluates -i U^dagger H U with the half-step U.
    """
    if route == "coupling":
        f0 = traj.frames[0]
        return f0 @ coupling(traj.mid_frames, traj.mid_H) @ dagger(f0)
    if route == "evolution":
        return generator_from_U(traj.mid_U(), traj.mid_H).embedding
    raise ValueError(f"unknown route {route!r}")


def holonomy_products(traj: Trajectory, reverse=None, repolarize=None):
    """Partial products W_k at every node (each including the trailing P(0)).

    Default ordering puts the latest step exponential on the LEFT.
    ``reverse=True`` puts it on the right (negative control only).
    """
    reverse = _flag(traj, "reverse_holonomy_order", reverse)
    repolarize = _flag(traj, "repolarize_holonomy", repolarize)
    P0 = traj.P[0]
    steps = linalg.matrix_exponential(traj.dt * midpoint_projector_derivative(traj))
    out = np.empty((traj.steps + 1,) + P0.shape, dtype=complex)
    out[0] = P0
    acc = np.eye(P0.shape[0], dtype=complex)
    for k, step in enumerate(steps):
        if reverse:
            acc = acc @ step
            w = acc @ P0
        else:
            w = step @ out[k]
        if repolarize:
            try:
                w = linalg.polar_isometry(w, traj.rank)
            except DegeneracyError as exc:
                raise DecompositionError(f"holonomy product lost rank at t = {traj.times[k + 1]:.6g}") from exc
        out[k + 1] = w
    return out


def dynamic_products(traj: Trajectory, reverse=None, route="coupling"):
    """Partial products D_k = P(0) exp(F_{1/2} dt) ... exp(F_{k-1/2} dt).

    Later times go to the RIGHT; ``reverse=True`` flips that (negative
    control only).
    """
    reverse = _flag(traj, "reverse_dynamic_order", reverse)
    steps = linalg.matrix_exponential(traj.dt * midpoint_generators(traj, route))
    P0 = traj.P[0]
    out = np.empty((traj.steps + 1,) + P0.shape, dtype=complex)
    out[0] = P0
    acc = np.eye(P0.shape[0], dtype=complex)
    for k, step in enumerate(steps):
        if reverse:
            acc = step @ acc
            out[k + 1] = P0 @ acc
        else:
            out[k + 1] = out[k] @ step
    return out


def holonomy_factor(traj: Trajectory, reverse=None, repolarize=None) -> PartialIsometry:
    W = holonomy_products(traj, reverse, repolarize)[-1]
    return PartialIsometry(W, traj.P[0], traj.P[-1])


def dynamic_factor(traj: Trajectory, reverse=None, route="coupling"):
    return dynamic_products(traj, reverse, route)[-1]


def _central(stack, dt):
    return (stack[2:] - stack[:-2]) / (2 * dt)


def _require_grid(traj):
    if traj.steps < 2:
        raise InsufficientGridError(f"need at least 2 steps, got {traj.steps}")


def verify_ode(traj: Trajectory):
    """||dU/dt - Pdot U - U F||_F at interior nodes (central differences)."""
    _require_grid(traj)
    U = traj.U()
    Uc = U[1:-1]
    lhs = _central(U, traj.dt)
    rhs = traj.Pdot[1:-1] @ Uc + Uc @ traj.F_embedding[1:-1]
    return frobenius_norms(lhs - rhs)


def holonomy_ode_residuals(traj: Trajectory, reverse=None):
    """||dW/dt - Pdot W||_F at interior nodes for the partial products."""
    _require_grid(traj)
    W = holonomy_products(traj, reverse, repolarize=False)
    return frobenius_norms(_central(W, traj.dt) - traj.Pdot[1:-1] @ W[1:-1])


def dynamic_ode_residuals(traj: Trajectory, reverse=None):
    """||dD/dt - D F||_F at interior nodes for the partial products."""
    _require_grid(traj)
    D = dynamic_products(traj, reverse)
    return frobenius_norms(_central(D, traj.dt) - D[1:-1] @ traj.F_embedding[1:-1])


def identity_residuals(traj: Trajectory):
    """||-i U^dagger H U - embed(F_jk)||_F at every node."""
    from_u = generator_from_U(traj.U(), traj.H).embedding
    return frobenius_norms(from_u - traj.F_embedding)


def circularity_equivalence(traj: Trajectory) -> float:
    """||D_coupling - D_evolution||_F at the final time.

    Both dynamic factors use the same ordering and step rule; they differ
    only in whether F(t,0) is assembled from F_jk or from -i U^dagger H U.
    """
    d_a = dynamic_factor(traj, route="coupling")
    d_b = dynamic_factor(traj, route="evolution")
    return frobenius_norm(d_a - d_b)


def verify_factorization(traj: Trajectory) -> DecompositionResult:
    """Compare U(t_M, 0) with the product W D and collect every residual."""
    holonomy = holonomy_factor(traj)
    dynamic = dynamic_factor(traj)
    product = holonomy.matrix @ dynamic
    residual = frobenius_norm(traj.U(traj.steps) - product)
    ode = verify_ode(traj) if traj.steps >= 2 else np.zeros(0)
    return DecompositionResult(
        holonomy=holonomy,
        dynamic=dynamic,
        product=product,
        residual_factorization=residual,
        residual_ode=ode,
        residual_identity_eq3=identity_residuals(traj),
        residual_circularity_eq4=circularity_equivalence(traj),
        isometry_defect_holonomy=holonomy.defect,
    )
