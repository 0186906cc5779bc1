"""
Objective evaluation: SI-SDR, output power traces and change-point scores.
"""

import csv
import math
from dataclasses import asdict, dataclass, fields

import numpy as np

from .errors import DataError, ParameterError, ShapeError

__all__ = ["si_sdr", "change_point_score", "output_power_trace", "MetricsReport",
           "CSV_HEADER", "append_csv_rows", "format_value"]

RESIDUAL_FLOOR = 1e-30
POWER_FLOOR_DB = -120.0


def si_sdr(estimate, reference):
    """
    Scale-invariant SDR in dB. Returns ``inf`` when the residual after the
    optimal scaling is below 1e-30 of the reference energy.
    """
    est = np.asarray(estimate, dtype=np.float64).ravel()
    ref = np.asarray(reference, dtype=np.float64).ravel()
    if est.shape != ref.shape or est.size < 1:
        raise ShapeError(f"estimate and reference must have equal non-zero length, got {est.size} and {ref.size}")
    ref_energy = np.dot(ref, ref)
    if ref_energy == 0:
        raise DataError("reference signal is all zeros")
    alpha = np.dot(est, ref) / ref_energy
    target = alpha * ref
    residual = est - target
    res_energy = np.dot(residual, residual)
    if res_energy <= RESIDUAL_FLOOR * ref_energy:
        return math.inf
    return float(10 * np.log10(np.dot(target, target) / res_energy))


def change_point_score(detected, truth, tolerance_frames):
    """
    Greedy one-to-one matching of detected to true change points.

    Each true change (in ascending order) takes the closest unmatched
    detection within ``tolerance_frames``. Empty lists score vacuously 1.0.

    Return:
        (precision, recall, mean signed latency detected - truth); latency is
        nan when nothing matched
    """
    detected = list(detected)
    truth = list(truth)
    used = set()
    lags = []
    for t in truth:
        best = None
        for k, d in enumerate(detected):
            if k in used or abs(d - t) > tolerance_frames:
                continue
            if best is None or abs(d - t) < abs(detected[best] - t):
                best = k
        if best is not None:
            used.add(best)
            lags.append(detected[best] - t)
    precision = len(lags) / len(detected) if detected else 1.0
    recall = len(lags) / len(truth) if truth else 1.0
    latency = float(np.mean(lags)) if lags else math.nan
    return precision, recall, latency


def output_power_trace(outputs, smoothing_frames):
    """Causal moving average of ``|y|^2`` in dB, floored at -120 dB."""
    if int(smoothing_frames) != smoothing_frames or smoothing_frames < 1:
        raise ParameterError(f"smoothing_frames must be a positive integer, got {smoothing_frames}")
    power = np.abs(np.asarray(outputs)) ** 2
    csum = np.concatenate([[0.0], np.cumsum(power)])
    n = np.arange(1, power.size + 1)
    lo = np.maximum(n - int(smoothing_frames), 0)
    avg = (csum[n] - csum[lo]) / (n - lo)
    with np.errstate(divide="ignore"):
        db = 10 * np.log10(avg)
    return np.maximum(db, POWER_FLOOR_DB)


@dataclass
class MetricsReport:
    """One row of the metrics table; change-point fields are nan for baselines."""
    method: str
    si_sdr_db: float
    si_sdr_gain_db: float
    mean_output_power_db: float
    cp_precision: float = math.nan
    cp_recall: float = math.nan
    cp_mean_latency_frames: float = math.nan
    max_constraint_error: float = math.nan
    candidate_updates: int = 0


CSV_HEADER = [f.name for f in fields(MetricsReport)]


def format_value(v):
    if isinstance(v, float):
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return repr(v)
    return str(v)


def append_csv_rows(path, rows, extra=None):
    """
    Append rows to a CSV with the fixed header (written when the file is new).
    ``extra`` is an optional ordered dict of leading key columns shared by all
    rows, used by parameter sweeps.
    """
    extra = extra or {}
    header = list(extra) + CSV_HEADER
    try:
        new = path.stat().st_size == 0
    except FileNotFoundError:
        new = True
    with open(path, "a", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        if new:
            writer.writerow(header)
        for row in rows:
            values = list(extra.values()) + [asdict(row)[k] for k in CSV_HEADER]
            writer.writerow([format_value(v) for v in values])
