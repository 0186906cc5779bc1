"""
Relative transfer function estimation by covariance whitening.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DataError, ParameterError, ShapeError

__all__ = ["RtfEstimate", "estimate_rtf_cw", "angle_error_deg"]

NOISE_LOADING = 1e-6
GAP_THRESHOLD = 0.1


@dataclass
class RtfEstimate:
    """
    ``nu_per_bin`` is (bins, p) with entry ``reference_index`` equal to 1;
    ``condition_flags[b]`` marks an unreliable bin.
    """
    nu_per_bin: np.ndarray
    reference_index: int
    condition_flags: np.ndarray


def _snapshots(spec):
    data = getattr(spec, "data", spec)
    data = np.asarray(data, dtype=np.complex128)
    if data.ndim != 3:
        raise ShapeError(f"expected (bins, frames, channels) data, got shape {data.shape}")
    if not np.all(np.isfinite(data)):
        raise DataError("spectrogram contains non-finite values")
    return data


def estimate_rtf_cw(noisy_spec, noise_spec, reference_index=0, gap_threshold=GAP_THRESHOLD):
    """
    Per-bin RTF from a target-active and a target-free interval.

    The noise covariance is Cholesky factored, ``Rn = L L^H``; the principal
    eigenvector ``q`` of the whitened noisy covariance ``L^-1 Rx L^-H`` is
    mapped back as ``g = L q`` and normalized at the reference channel. Bins
    whose relative eigengap ``(l1 - l2) / l1`` is below ``gap_threshold``, or
    whose noise covariance cannot be factored, are flagged; the latter fall
    back to the unit vector at the reference.

    Arguments:
        noisy_spec, noise_spec: Spectrogram or (bins, frames, p) arrays
    """
    x = _snapshots(noisy_spec)
    n = _snapshots(noise_spec)
    bins, _, p = x.shape
    if n.shape[0] != bins or n.shape[2] != p:
        raise ShapeError(f"noisy {x.shape} and noise {n.shape} segments disagree in bins or channels")
    if x.shape[1] < p or n.shape[1] < p:
        raise DataError(f"need at least {p} frames per segment, got {x.shape[1]} noisy and {n.shape[1]} noise")
    if not 0 <= reference_index < p:
        raise ParameterError(f"reference_index {reference_index} out of range for {p} channels")

    rx = np.einsum("bti,btj->bij", x, np.conj(x)) / x.shape[1]
    rn = np.einsum("bti,btj->bij", n, np.conj(n)) / n.shape[1]
    load = NOISE_LOADING * np.real(np.trace(rn, axis1=1, axis2=2)) / p
    rn = rn + load[:, None, None] * np.eye(p)

    nu = np.zeros((bins, p), dtype=np.complex128)
    nu[:, reference_index] = 1.0
    flags = np.ones(bins, dtype=bool)
    for b in range(bins):
        try:
            if not load[b] > 0:
                raise np.linalg.LinAlgError("zero noise covariance")
            chol = np.linalg.cholesky(rn[b])
        except np.linalg.LinAlgError:
            continue
        a = np.linalg.solve(chol, rx[b])
        q = np.linalg.solve(chol, np.conj(a.T))
        q = 0.5 * (q + np.conj(q.T))
        lam, vec = np.linalg.eigh(q)
        g = chol @ vec[:, -1]
        if abs(g[reference_index]) == 0 or not lam[-1] > 0:
            continue
        nu[b] = g / g[reference_index]
        nu[b, reference_index] = 1.0
        gap = (lam[-1] - lam[-2]) / lam[-1] if p > 1 else 1.0
        flags[b] = gap < gap_threshold
    return RtfEstimate(nu, reference_index, flags)


def angle_error_deg(nu_est, nu_true):
    """Angle between two complex vectors (per row), invariant to complex scale."""
    a = np.asarray(nu_est, dtype=np.complex128)
    b = np.asarray(nu_true, dtype=np.complex128)
    c = np.abs(np.sum(np.conj(a) * b, axis=-1)) / (np.linalg.norm(a, axis=-1) * np.linalg.norm(b, axis=-1))
    return np.degrees(np.arccos(np.clip(c, 0.0, 1.0)))
