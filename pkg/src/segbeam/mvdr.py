"""
MVDR weight computation, direct and by recursive rank-1 (Woodbury) updates.

Everything is complex-valued with conjugate transposes; real-valued data is
handled by passing arrays with zero imaginary part. Covariances are the
unnormalized diagonally loaded sums ``delta * I + sum(x x^H)``, which leaves
the MVDR weights unchanged with respect to the 1/K normalized estimate.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, NumericalBreakdown, ParameterError, ShapeError

__all__ = [
    "CovarianceState", "init_state", "rank1_update", "batch_mvdr_weights",
    "mvdr_from_covariance", "default_loading", "check_steering",
    "woodbury_step", "SYMMETRIZE_EVERY", "REINVERT_EVERY"
]

SYMMETRIZE_EVERY = 64
REINVERT_EVERY = 4096
MIN_STEERING_NORM = 1e-12
LOADING_SCALE = 1e-2
LOADING_FLOOR = 1e-6


def check_steering(nu):
    """Validate a steering vector (or a stack of them, last axis = sensors)."""
    nu = np.asarray(nu, dtype=np.complex128)
    if nu.ndim < 1 or nu.shape[-1] < 1:
        raise ShapeError(f"steering vector must have at least one entry, got shape {nu.shape}")
    if not np.all(np.isfinite(nu)):
        raise ParameterError("steering vector contains non-finite entries")
    if np.any(np.linalg.norm(nu, axis=-1) < MIN_STEERING_NORM):
        raise ParameterError("steering vector is (numerically) zero")
    return nu


def _check_delta(delta):
    delta = np.asarray(delta, dtype=np.float64)
    if not np.all(np.isfinite(delta)) or np.any(delta <= 0):
        raise ParameterError(f"diagonal loading must be positive and finite, got {delta}")
    return delta


def default_loading(x, scale=LOADING_SCALE, floor=LOADING_FLOOR):
    """
    Scale-relative diagonal loading from a first frame of snapshots.

    Returns ``max(scale * ||x||^2 / p, floor)`` along the last axis, so a
    stack of per-bin snapshots yields one loading value per bin.
    """
    x = np.asarray(x)
    power = np.sum(np.abs(x) ** 2, axis=-1) / x.shape[-1]
    return np.maximum(scale * power, floor)


def mvdr_from_covariance(scm, nu):
    """
    Return ``S^-1 nu / (nu^H S^-1 nu)`` for a (stack of) Hermitian
    positive definite matrices ``scm`` of shape (..., p, p).
    """
    z = np.linalg.solve(scm, np.broadcast_to(nu, scm.shape[:-1])[..., None])[..., 0]
    return z / np.sum(np.conj(nu) * z, axis=-1, keepdims=True)


def batch_mvdr_weights(snapshots, nu, delta):
    """
    Closed-form MVDR weights from the loaded sample covariance.

    Arguments:
        snapshots: shape (K, p) or (..., K, p); K may be zero
        nu: steering vector, shape (p,) or broadcastable to (..., p)
        delta: positive diagonal loading
    Return:
        weights, shape (p,) or (..., p), satisfying w^H nu = 1
    """
    nu = check_steering(nu)
    delta = _check_delta(delta)
    x = np.asarray(snapshots, dtype=np.complex128)
    p = nu.shape[-1]
    if x.ndim < 2 or x.shape[-1] != p:
        raise ShapeError(f"snapshots must have shape (..., K, {p}), got {x.shape}")
    if not np.all(np.isfinite(x)):
        raise DataError("snapshots contain non-finite values")
    scm = np.einsum("...ki,...kj->...ij", x, np.conj(x))
    scm = scm + delta[..., None, None] * np.eye(p)
    return mvdr_from_covariance(scm, nu)


def woodbury_step(s_inv, u, nu, x):
    """
    One rank-1 update of the inverse loaded covariance and the MVDR
    numerator state, vectorized over any leading axes.

    Arguments:
        s_inv: (..., p, p) inverse covariances, updated in place
        u: (..., p) numerator states S^-1 nu, updated in place
        nu: (..., p) steering vectors (broadcastable)
        x: (..., p) snapshots (broadcastable)
    Return:
        rho: (...,) complex denominators nu^H u after the update
    """
    sx = np.matmul(s_inv, x[..., None])[..., 0]
    gamma = 1.0 + np.real(np.sum(np.conj(x) * sx, axis=-1))
    if np.any(gamma <= 0):
        raise NumericalBreakdown("1 + x^H S^-1 x is not positive; inverse covariance lost definiteness")
    k = sx / gamma[..., None]
    # x^H S^-1 = (S^-1 x)^H because S^-1 is kept Hermitian
    xs = np.conj(sx)
    s_inv -= k[..., :, None] * xs[..., None, :]
    u -= k * np.sum(xs * nu, axis=-1)[..., None]
    return np.sum(np.conj(nu) * u, axis=-1)


def symmetrize(s_inv):
    return 0.5 * (s_inv + np.conj(np.swapaxes(s_inv, -1, -2)))


@dataclass
class CovarianceState:
    """
    Recursive MVDR state for one hypothesized segment start.

    ``s_inv`` is the inverse of ``delta*I + sum(x x^H)``, ``u`` tracks
    ``s_inv @ nu``, ``w = u / rho`` and ``j_cost`` accumulates the
    a-posteriori output power ``|w^H x|^2``.
    """
    nu: np.ndarray
    delta: float
    s_inv: np.ndarray
    u: np.ndarray
    rho_c: complex
    w: np.ndarray
    j_cost: float = 0.0
    start_index: int = 0
    count: int = 0
    symmetrize_every: int = SYMMETRIZE_EVERY
    reinvert_every: int = REINVERT_EVERY
    scm: np.ndarray = field(default=None, repr=False)

    @property
    def p(self):
        return self.nu.shape[0]

    @property
    def rho(self):
        return float(np.real(self.rho_c))

    def constraint_error(self):
        return abs(np.vdot(self.w, self.nu) - 1.0)


def init_state(nu, delta, start_index=0, symmetrize_every=SYMMETRIZE_EVERY,
               reinvert_every=REINVERT_EVERY):
    """Fresh state: S^-1 = I/delta, u = nu/delta, w = nu/||nu||^2, J = 0."""
    nu = check_steering(nu)
    if nu.ndim != 1:
        raise ShapeError("init_state expects a single steering vector")
    delta = float(_check_delta(delta))
    p = nu.shape[0]
    u = nu / delta
    rho = np.vdot(nu, u)
    scm = delta * np.eye(p, dtype=np.complex128) if reinvert_every else None
    return CovarianceState(nu=nu, delta=delta, s_inv=np.eye(p, dtype=np.complex128) / delta,
                           u=u, rho_c=rho, w=u / rho, start_index=int(start_index),
                           symmetrize_every=symmetrize_every, reinvert_every=reinvert_every,
                           scm=scm)


def rank1_update(state, x):
    """
    Advance ``state`` in place by one snapshot and return the a-posteriori
    output ``y = w^H x`` computed with the already updated weights.
    """
    x = np.asarray(x, dtype=np.complex128)
    if x.shape != (state.p,):
        raise ShapeError(f"snapshot shape {x.shape} does not match p={state.p}")
    if not np.all(np.isfinite(x)):
        raise DataError("snapshot contains non-finite values")
    state.rho_c = complex(woodbury_step(state.s_inv, state.u, state.nu, x))
    state.count += 1
    if state.scm is not None:
        state.scm += np.outer(x, np.conj(x))
    if state.reinvert_every and state.count % state.reinvert_every == 0:
        state.s_inv = symmetrize(np.linalg.inv(state.scm))
        state.u = state.s_inv @ state.nu
        state.rho_c = complex(np.vdot(state.nu, state.u))
    elif state.symmetrize_every and state.count % state.symmetrize_every == 0:
        state.s_inv = symmetrize(state.s_inv)
    state.w = state.u / state.rho_c
    y = np.vdot(state.w, x)
    state.j_cost += abs(y) ** 2
    return y
