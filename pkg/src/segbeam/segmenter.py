"""
Online segmented MVDR beamformer, its offline dynamic-programming reference
and fixed sliding-window MPDR baselines.

The online beamformer keeps a bank of recursive MVDR candidates, one per
hypothesized start of the current stationary segment. At every snapshot each
candidate is advanced by a Woodbury update, scored with

    E_total(i) = E[i-1] + C + J[i]

and the beamformer switches to the best candidate once it lies more than
``tau`` snapshots past the active segment start. ``E[i-1]`` is frozen into
each candidate when it is created, so no cost history lookup is needed.

All routines accept a single stream of snapshots ``(T, p)`` or a stack of
independent streams ``(B, T, p)`` (one per STFT bin); streams never interact.
"""

import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .errors import DataError, ParameterError, ShapeError
from .mvdr import (REINVERT_EVERY, SYMMETRIZE_EVERY, check_steering,
                   default_loading, symmetrize, woodbury_step)

__all__ = [
    "SegmenterConfig", "SegmenterState", "StepOutput", "step", "run_online",
    "offline_dp_segment", "fixed_window_mpdr", "calibrate_penalty",
    "segment_power", "resolve_parameters"
]

PENALTY_FRAMES = 50
_UNBOUNDED_INITIAL_CAPACITY = 32


@dataclass(frozen=True)
class SegmenterConfig:
    """
    Hyperparameters of the online segmented beamformer.

    ``penalty_c`` and ``delta`` may be left as None, in which case
    :func:`resolve_parameters` derives them from the data (C from the median
    output power of the first 50 snapshots scaled by ``c_rel * 50``, delta
    from the power of the first snapshot).
    """
    penalty_c: Optional[float] = None
    delta: Optional[float] = None
    tau: int = 8
    max_window: Optional[int] = None
    c_rel: float = 2.0
    symmetrize_every: int = SYMMETRIZE_EVERY
    reinvert_every: int = REINVERT_EVERY

    def __post_init__(self):
        if self.penalty_c is not None and not self.penalty_c >= 0:
            raise ParameterError(f"penalty_c must be >= 0, got {self.penalty_c}")
        if self.delta is not None and not (self.delta > 0 and math.isfinite(self.delta)):
            raise ParameterError(f"delta must be positive, got {self.delta}")
        if int(self.tau) != self.tau or self.tau < 0:
            raise ParameterError(f"tau must be a non-negative integer, got {self.tau}")
        if self.max_window is not None:
            if int(self.max_window) != self.max_window or self.max_window < 1:
                raise ParameterError(f"max_window must be a positive integer, got {self.max_window}")
            if self.tau >= self.max_window:
                raise ParameterError(f"tau ({self.tau}) must be smaller than max_window ({self.max_window})")
        if not self.c_rel >= 0:
            raise ParameterError(f"c_rel must be >= 0, got {self.c_rel}")
        if self.symmetrize_every < 0 or self.reinvert_every < 0:
            raise ParameterError("symmetrize_every and reinvert_every must be >= 0")


@dataclass
class StepOutput:
    """Result of one :func:`step`; arrays carry one entry per stream."""
    y: np.ndarray
    switched: np.ndarray
    new_start: np.ndarray
    active_weights: np.ndarray


def _as_streams(snapshots, nu):
    """Normalize to (B, T, p) snapshots and (B, p) steering."""
    x = np.asarray(snapshots, dtype=np.complex128)
    nu = check_steering(nu)
    single = x.ndim == 2
    if single:
        x = x[None]
    if x.ndim != 3:
        raise ShapeError(f"snapshots must have shape (T, p) or (B, T, p), got {np.shape(snapshots)}")
    p = x.shape[-1]
    if nu.shape[-1] != p:
        raise ShapeError(f"steering has {nu.shape[-1]} entries, snapshots have p={p}")
    nu = np.broadcast_to(nu, (x.shape[0], p)).copy()
    if not np.all(np.isfinite(x)):
        raise DataError("snapshots contain non-finite values")
    return x, nu, single


class SegmenterState:
    """
    Candidate bank for ``B`` independent streams.

    Candidates live in a fixed number of slots per stream; ``start == -1``
    marks an empty slot. With ``max_window`` unbounded the slot arrays grow
    by doubling.
    """

    def __init__(self, nu, penalty_c, delta=None, tau=8, max_window=None,
                 symmetrize_every=SYMMETRIZE_EVERY, reinvert_every=REINVERT_EVERY):
        nu = check_steering(nu)
        self.single = nu.ndim == 1
        self.nu = np.atleast_2d(nu).copy()
        B, p = self.nu.shape
        self.penalty_c = np.broadcast_to(np.asarray(penalty_c, dtype=np.float64), (B,)).copy()
        if np.any(np.isnan(self.penalty_c)) or np.any(self.penalty_c < 0):
            raise ParameterError("penalty_c must be >= 0")
        if delta is None:
            self.delta = None
        else:
            self.delta = np.broadcast_to(np.asarray(delta, dtype=np.float64), (B,)).copy()
            if np.any(~np.isfinite(self.delta)) or np.any(self.delta <= 0):
                raise ParameterError("delta must be positive")
        self.tau = int(tau)
        self.max_window = max_window
        self.symmetrize_every = symmetrize_every
        self.reinvert_every = reinvert_every

        M = max_window if max_window is not None else _UNBOUNDED_INITIAL_CAPACITY
        self.s_inv = np.zeros((B, M, p, p), dtype=np.complex128)
        self.s_inv[...] = np.eye(p)
        self.u = np.zeros((B, M, p), dtype=np.complex128)
        self.u[...] = self.nu[:, None, :]
        self.rho = np.ones((B, M), dtype=np.complex128)
        self.w = self.u.copy()
        self.j_cost = np.zeros((B, M))
        self.e_prev = np.zeros((B, M))
        self.start = np.full((B, M), -1, dtype=np.int64)
        self.count = np.zeros((B, M), dtype=np.int64)
        self.scm = np.zeros((B, M, p, p), dtype=np.complex128) if reinvert_every else None

        self.n = 0
        self.cur = np.zeros(B, dtype=np.int64)
        self.cur_slot = np.zeros(B, dtype=np.int64)
        self.e_hist = []
        self.partition = [[0] for _ in range(B)]
        self.max_constraint_error = 0.0
        self.n_updates = 0

    @classmethod
    def from_config(cls, nu, config, penalty_c=None, delta=None):
        penalty_c = config.penalty_c if penalty_c is None else penalty_c
        if penalty_c is None:
            raise ParameterError("penalty_c is unresolved; pass it explicitly or use calibrate_penalty")
        return cls(nu, penalty_c, delta=config.delta if delta is None else delta,
                   tau=config.tau, max_window=config.max_window,
                   symmetrize_every=config.symmetrize_every,
                   reinvert_every=config.reinvert_every)

    @property
    def n_streams(self):
        return self.nu.shape[0]

    @property
    def p(self):
        return self.nu.shape[1]

    @property
    def capacity(self):
        return self.start.shape[1]

    def candidate_starts(self, stream=0):
        s = self.start[stream]
        return sorted(int(v) for v in s[s >= 0])

    def active_weights(self):
        return self.w[np.arange(self.n_streams), self.cur_slot]

    def _grow(self):
        M = self.capacity

        def pad(a, fill):
            extra = np.empty((a.shape[0], M) + a.shape[2:], dtype=a.dtype)
            extra[...] = fill
            return np.concatenate([a, extra], axis=1)

        p = self.p
        self.s_inv = pad(self.s_inv, np.eye(p))
        self.u = pad(self.u, self.nu[:, None, :])
        self.rho = pad(self.rho, 1.0)
        self.w = pad(self.w, self.nu[:, None, :])
        self.j_cost = pad(self.j_cost, 0.0)
        self.e_prev = pad(self.e_prev, 0.0)
        self.start = pad(self.start, -1)
        self.count = pad(self.count, 0)
        if self.scm is not None:
            self.scm = pad(self.scm, 0.0)

    def _insert_candidate(self):
        B, p = self.nu.shape
        rows = np.arange(B)
        valid = self.start >= 0
        full = valid.all(axis=1)
        if self.max_window is None:
            if full.any():
                self._grow()
                valid = self.start >= 0
        elif self.max_window == 1 and self.n > 0:
            # only the active candidate fits; no new hypotheses possible
            return
        elif full.any():
            # evict the oldest non-active candidate
            keyed = np.where(valid & (self.start != self.cur[:, None]), self.start,
                             np.iinfo(np.int64).max)
            victim = np.argmin(keyed, axis=1)
            self.start[rows[full], victim[full]] = -1
            valid = self.start >= 0
        slot = np.argmax(~valid, axis=1)

        delta = self.delta
        inv_d = (1.0 / delta)[:, None]
        self.s_inv[rows, slot] = np.eye(p) * inv_d[:, :, None]
        self.u[rows, slot] = self.nu * inv_d
        rho = np.sum(np.conj(self.nu) * self.u[rows, slot], axis=-1)
        self.rho[rows, slot] = rho
        self.w[rows, slot] = self.u[rows, slot] / rho[:, None]
        self.j_cost[rows, slot] = 0.0
        self.e_prev[rows, slot] = self.e_hist[-1] if self.e_hist else 0.0
        self.start[rows, slot] = self.n
        self.count[rows, slot] = 0
        if self.scm is not None:
            self.scm[rows, slot] = np.eye(p) * delta[:, None, None]
        if self.n == 0:
            self.cur_slot[:] = slot

    def step(self, x):
        """
        Process one snapshot per stream.

        Arguments:
            x: shape (p,) for a single stream, else (B, p)
        Return:
            StepOutput with the a-priori output of the active candidate
        """
        x = np.asarray(x, dtype=np.complex128)
        x2 = np.atleast_2d(x)
        if x2.shape != self.nu.shape:
            raise ShapeError(f"snapshot shape {x.shape} does not match {self.nu.shape}")
        if not np.all(np.isfinite(x2)):
            raise DataError(f"non-finite snapshot at index {self.n}")
        if self.delta is None:
            self.delta = default_loading(x2)
        B = self.n_streams
        rows = np.arange(B)

        self._insert_candidate()
        y = np.sum(np.conj(self.w[rows, self.cur_slot]) * x2, axis=-1)

        occupied = np.flatnonzero((self.start >= 0).any(axis=0))
        hi = int(occupied[-1]) + 1
        sl = np.s_[:, :hi]
        valid = self.start[sl] >= 0
        xb = x2[:, None, :]
        nub = self.nu[:, None, :]
        s_inv, u = self.s_inv[sl], self.u[sl]
        rho = woodbury_step(s_inv, u, nub, xb)
        count = self.count[sl]
        count += valid
        if self.scm is not None:
            self.scm[sl] += xb[..., :, None] * np.conj(xb)[..., None, :]
        if self.reinvert_every:
            redo = valid & (count % self.reinvert_every == 0)
            if redo.any():
                fresh = symmetrize(np.linalg.inv(self.scm[sl][redo]))
                nu_r = np.broadcast_to(nub, u.shape)[redo]
                s_inv[redo] = fresh
                u[redo] = np.matmul(fresh, nu_r[..., None])[..., 0]
                rho[redo] = np.sum(np.conj(nu_r) * u[redo], axis=-1)
        if self.symmetrize_every:
            sym = valid & (count % self.symmetrize_every == 0)
            if self.reinvert_every:
                sym &= count % self.reinvert_every != 0
            if sym.any():
                s_inv[sym] = symmetrize(s_inv[sym])
        self.rho[sl] = rho
        w = u / rho[..., None]
        self.w[sl] = w
        y_post = np.sum(np.conj(w) * xb, axis=-1)
        j_cost = self.j_cost[sl]
        j_cost += np.where(valid, np.abs(y_post) ** 2, 0.0)
        self.n_updates += int(valid.sum())

        err = np.abs(np.sum(np.conj(w) * nub, axis=-1) - 1.0)
        err = float(np.max(np.where(valid, err, 0.0)))
        self.max_constraint_error = max(self.max_constraint_error, err)

        e_total = np.where(valid, self.e_prev[sl] + self.penalty_c[:, None] + j_cost, np.inf)
        e_min = e_total.min(axis=1)
        tied = (e_total == e_min[:, None]) & valid
        keyed = np.where(tied, self.start[sl], np.iinfo(np.int64).max)
        best_slot = np.argmin(keyed, axis=1)
        best = self.start[rows, best_slot]
        self.e_hist.append(e_min)

        switched = best - self.cur > self.tau
        new_start = np.where(switched, best, -1)
        if switched.any():
            for b in np.flatnonzero(switched):
                self.partition[b].append(int(best[b]))
            self.cur = np.where(switched, best, self.cur)
            self.cur_slot = np.where(switched, best_slot, self.cur_slot)
            stale = switched[:, None] & (self.start >= 0) & (self.start < self.cur[:, None])
            self.start[stale] = -1

        self.n += 1
        out = StepOutput(y=y, switched=switched, new_start=new_start,
                         active_weights=self.active_weights())
        if self.single:
            return StepOutput(y=complex(y[0]), switched=bool(switched[0]),
                              new_start=int(best[0]) if switched[0] else None,
                              active_weights=out.active_weights[0])
        return out

    def cost_history(self):
        """E[n] per stream, shape (B, n) (or (n,) for a single stream)."""
        e = np.array(self.e_hist).T if self.e_hist else np.zeros((self.n_streams, 0))
        return e[0] if self.single else e


def step(state, x):
    """Advance ``state`` by one snapshot; see :meth:`SegmenterState.step`."""
    return state.step(x)


def fixed_window_mpdr(snapshots, nu, window_k, delta):
    """
    Sliding-window MPDR output with strictly causal weights.

    ``out[t] = w[t]^H x[t]`` where ``w[t]`` is the loaded MVDR weight of
    snapshots ``t-K .. t-1``. ``delta`` may be a scalar or one value per
    stream.
    """
    if int(window_k) != window_k or window_k < 1:
        raise ParameterError(f"window_k must be a positive integer, got {window_k}")
    window_k = int(window_k)
    x, nu, single = _as_streams(snapshots, nu)
    B, T, p = x.shape
    delta = np.broadcast_to(np.asarray(delta, dtype=np.float64), (B,))
    if np.any(~np.isfinite(delta)) or np.any(delta <= 0):
        raise ParameterError("delta must be positive")
    out = np.zeros((B, T), dtype=np.complex128)
    scm = np.zeros((B, p, p), dtype=np.complex128)
    scm[...] = np.eye(p) * delta[:, None, None]
    base = scm.copy()
    for t in range(T):
        if t > 0:
            xo = x[:, t - 1]
            scm += xo[:, :, None] * np.conj(xo)[:, None, :]
            if t - 1 - window_k >= 0:
                xd = x[:, t - 1 - window_k]
                scm -= xd[:, :, None] * np.conj(xd)[:, None, :]
            # periodic exact rebuild bounds add/subtract drift
            if t % 1024 == 0:
                win = x[:, max(0, t - window_k):t]
                scm = base + np.einsum("bki,bkj->bij", win, np.conj(win))
        z = np.linalg.solve(scm, nu[..., None])[..., 0]
        w = z / np.sum(np.conj(nu) * z, axis=-1, keepdims=True)
        out[:, t] = np.sum(np.conj(w) * x[:, t], axis=-1)
    return out[0] if single else out


def calibrate_penalty(snapshots, nu, delta, c_rel=2.0, n_frames=PENALTY_FRAMES):
    """
    Default segment penalty: ``c_rel * median(|y|^2) * 50`` where ``y`` is the
    growing-window MVDR output over the first ``n_frames`` snapshots.
    """
    x, nu, single = _as_streams(snapshots, nu)
    head = x[:, :n_frames]
    if head.shape[1] == 0:
        c = np.zeros(x.shape[0])
    else:
        y = fixed_window_mpdr(head, nu, head.shape[1], delta)
        c = c_rel * np.median(np.abs(y) ** 2, axis=-1) * PENALTY_FRAMES
    return float(c[0]) if single else c


def resolve_parameters(snapshots, nu, config):
    """Return per-stream ``(penalty_c, delta)`` with data-driven defaults filled in."""
    x, nu, single = _as_streams(snapshots, nu)
    B, T, p = x.shape
    if config.delta is not None:
        delta = np.full(B, float(config.delta))
    elif T:
        delta = default_loading(x[:, 0])
    else:
        delta = np.ones(B)
    if config.penalty_c is not None:
        c = np.full(B, float(config.penalty_c))
    else:
        c = calibrate_penalty(x, nu, delta, c_rel=config.c_rel)
    if single:
        return float(c[0]), float(delta[0])
    return c, delta


def run_online(snapshots, nu, config, return_state=False):
    """
    Run the online segmented beamformer over whole streams.

    Return:
        outputs: (T,) or (B, T) complex a-priori outputs of the active model
        partition: list of segment starts (list of lists for B streams)
        state: the final SegmenterState, only if ``return_state``
    """
    x, nu, single = _as_streams(snapshots, nu)
    B, T, p = x.shape
    c, delta = resolve_parameters(x, nu, config)
    state = SegmenterState.from_config(nu, config, penalty_c=c, delta=delta)
    out = np.zeros((B, T), dtype=np.complex128)
    for t in range(T):
        out[:, t] = state.step(x[:, t]).y
    state.single = single
    outputs, partition = (out[0], state.partition[0]) if single else (out, state.partition)
    if return_state:
        return outputs, partition, state
    return outputs, partition


def segment_power(snapshots, nu, delta):
    """
    Minimum loaded output power of one constant MVDR weight over a block,
    ``w^H (delta I + sum x x^H) w = 1 / (nu^H S^-1 nu)``, via direct solve.
    """
    nu = check_steering(nu)
    x = np.asarray(snapshots, dtype=np.complex128).reshape(-1, nu.shape[-1])
    scm = delta * np.eye(nu.shape[-1]) + x.T @ np.conj(x)
    return 1.0 / np.real(np.vdot(nu, np.linalg.solve(scm, nu)))


def offline_dp_segment(snapshots, nu, config):
    """
    Exact penalized segmentation minimizing ``sum(E(i, j) + C)`` over all
    partitions, with ``E(i, j)`` the loaded MVDR output power of block i..j.

    When ``config.tau > 0`` every segment must span at least ``tau + 1``
    snapshots (a single segment is always admissible). Ties favour the
    earliest start of the last segment.

    Return:
        (partition, total_cost)
    """
    x, nu, single = _as_streams(snapshots, nu)
    if not single:
        raise ShapeError("offline_dp_segment handles one stream")
    x, nu = x[0], nu[0]
    T, p = x.shape
    if T < 1:
        raise ShapeError("offline_dp_segment needs at least one snapshot")
    c, delta = resolve_parameters(x, nu, config)
    min_len = config.tau + 1 if config.tau > 0 else 1

    # bank of all starts; column t yields E(i, t) for i <= t
    s_inv = np.zeros((T, p, p), dtype=np.complex128)
    s_inv[...] = np.eye(p) / delta
    u = np.tile(nu / delta, (T, 1))
    e = np.full(T + 1, np.inf)  # e[t + 1] = E(t), e[0] = E(-1) = 0
    e[0] = 0.0
    back = np.zeros(T, dtype=np.int64)
    for t in range(T):
        rho = woodbury_step(s_inv[:t + 1], u[:t + 1], nu, x[t])
        seg_cost = 1.0 / np.real(rho)
        total = e[:t + 1] + c + seg_cost
        if min_len > 1:
            total[max(0, t - min_len + 2):] = np.inf
            if t == T - 1 and not np.isfinite(total).any():
                total[0] = c + seg_cost[0]
        i = int(np.argmin(total))
        e[t + 1] = total[i]
        back[t] = i
        if t % SYMMETRIZE_EVERY == SYMMETRIZE_EVERY - 1:
            s_inv[:t + 1] = symmetrize(s_inv[:t + 1])

    partition = []
    t = T - 1
    while t >= 0:
        i = int(back[t])
        partition.append(i)
        t = i - 1
    return partition[::-1], float(e[T])
