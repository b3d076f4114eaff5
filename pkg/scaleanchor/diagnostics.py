"""Frequency-domain diagnostics of learned predictors.

Predictors are passed as a ``PredictorCheckpoint``, a ``Forecaster`` or any
callable mapping a field (or a stack of fields) to its one-step prediction, so
exact solvers and other test doubles can stand in for trained models.
"""

import json
import math
import time
import logging
from collections import namedtuple
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from scipy import fft as spfft

from .spectral import Spectrum2D, radial_wavenumber, nyquist, band_split
from .solver import downsample_dataset, split_indices
from .model import PredictorCheckpoint
from .errors import DiagnosticError, RolloutDivergenceError

FREQ_RESPONSE_COLUMNS = ["f", "H_mag", "stddev", "n_repeats"]
EVAL_REPORT_COLUMNS = ["resolution", "rmse", "mae", "rel_err", "error_ratio", "f_oob"]
BAND_ENERGY_COLUMNS = ["step", "band_lo", "band_hi", "energy"]
FLOAT_FORMAT = "%.9g"
BANDWIDTH_LEVEL = 0.707
DIVERGENCE_LIMIT = 1e6


def sig9(value):
    return float(FLOAT_FORMAT % value)


class Bandwidth(namedtuple("Bandwidth", ["value", "exceeds"])):
    """Bandwidth estimate; ``exceeds`` marks a curve that never crossed the level."""

    def __str__(self):
        return (">" if self.exceeds else "") + f"{self.value:.2f}"


@dataclass
class FrequencyResponseCurve:
    freqs: np.ndarray
    h_mag: np.ndarray
    stddev: np.ndarray
    n_repeats: np.ndarray
    probe_resolution: int = None
    train_nyquist: float = None

    def scaled(self, c):
        return FrequencyResponseCurve(
            self.freqs, c * self.h_mag, c * self.stddev, self.n_repeats,
            self.probe_resolution, self.train_nyquist,
        )

    def to_frame(self):
        return pd.DataFrame(
            {
                "f": self.freqs,
                "H_mag": self.h_mag,
                "stddev": self.stddev,
                "n_repeats": np.asarray(self.n_repeats, dtype=int),
            },
            columns=FREQ_RESPONSE_COLUMNS,
        )


@dataclass
class EvalReport:
    rows: pd.DataFrame
    rmse_ratio: float
    provenance: dict = field(default_factory=dict)

    @property
    def rmse_ratio_label(self):
        return "exact" if math.isnan(self.rmse_ratio) else self.rmse_ratio


def as_stepper(predictor):
    if isinstance(predictor, PredictorCheckpoint):
        from .frl import Forecaster

        return Forecaster(predictor).step
    if hasattr(predictor, "step"):
        return predictor.step
    if callable(predictor):
        return predictor
    raise DiagnosticError(f"cannot use {type(predictor).__name__} as a predictor")


def _rollout(stepper, u0, n_steps):
    u = np.asarray(u0, dtype=np.float64)
    states = []
    for step in range(n_steps):
        u = np.asarray(stepper(u), dtype=np.float64)
        if not np.all(np.isfinite(u)) or np.max(np.abs(u)) > DIVERGENCE_LIMIT:
            raise RolloutDivergenceError(f"rollout diverged at step {step}", step=step)
        states.append(u)
    return states


def probe_frequency_response(
    predictor, probe_res, freqs, amplitude=1.0, repeats=10, steps=1, train_nyquist=None
):
    """Measures ``H(f) = A_out / A_in`` with sinusoids ``A sin(2 pi f x + phase)``.

    The output amplitude is read from the probe mode's FFT coefficient,
    ``2 |u_hat(f, 0)| / (H W)``; repeats shift the phase by ``2 pi r / repeats``.
    """
    stepper = as_stepper(predictor)
    freqs = np.asarray(freqs, dtype=np.float64)
    if amplitude <= 0:
        raise DiagnosticError(f"probe amplitude must be positive, got {amplitude}")
    if len(freqs) == 0 or np.any(np.diff(freqs) <= 0):
        raise DiagnosticError("probe frequencies must be non-empty and strictly increasing")
    if np.any(freqs < 0) or np.any(freqs >= probe_res / 2):
        raise DiagnosticError(
            f"probe frequencies must lie in [0, {probe_res / 2}) for a {probe_res} grid"
        )
    if not np.all(np.equal(np.mod(freqs, 1), 0)):
        raise DiagnosticError("probe frequencies must be integer cycles per unit length")

    H = W = int(probe_res)
    x = np.arange(W) / W
    phases = 2.0 * np.pi * np.arange(repeats) / repeats

    h_mag, stddev = [], []
    for f in freqs:
        f_int = int(f)
        if f_int == 0:
            probes = np.full((repeats, H, W), float(amplitude))
        else:
            rows = amplitude * np.sin(2.0 * np.pi * f * x[None, :] + phases[:, None])
            probes = np.broadcast_to(rows[:, None, :], (repeats, H, W)).copy()

        out = _rollout(stepper, probes, steps)[-1]
        coeffs = spfft.fft2(out, axes=(-2, -1))
        if f_int == 0:
            a_out = np.abs(coeffs[:, 0, 0]) / (H * W)
        else:
            a_out = 2.0 * np.abs(coeffs[:, 0, f_int]) / (H * W)
        ratio = a_out / amplitude
        h_mag.append(sig9(ratio.mean()))
        stddev.append(sig9(ratio.std()))
        logging.debug(f"f={f:g}: H={ratio.mean():.4f} +/- {ratio.std():.4f}")

    return FrequencyResponseCurve(
        freqs,
        np.array(h_mag),
        np.array(stddev),
        np.full(len(freqs), repeats),
        probe_res,
        train_nyquist,
    )


def bandwidth(curve):
    """First frequency where H falls below 0.707 of its low-frequency reference."""
    f = np.asarray(curve.freqs, dtype=np.float64)
    h = np.asarray(curve.h_mag, dtype=np.float64)
    if len(f) < 3:
        raise DiagnosticError("bandwidth needs at least three samples")

    n_ref = max(1, int(math.ceil(0.1 * len(f))))
    reference = float(np.mean(h[:n_ref]))
    if reference <= 0:
        raise DiagnosticError("degenerate frequency response: low-frequency reference is 0")

    level = BANDWIDTH_LEVEL * reference
    below = np.nonzero(h < level)[0]
    if len(below) == 0:
        return Bandwidth(float(f[-1]), True)
    i = below[0]
    if i == 0:
        return Bandwidth(float(f[0]), False)
    f0, f1, h0, h1 = f[i - 1], f[i], h[i - 1], h[i]
    return Bandwidth(float(f0 + (f1 - f0) * (h0 - level) / (h0 - h1)), False)


def anchoring_ratio(curve, f_nyq, delta=4.0):
    """``H(f_Nyq - delta) / H(f_Nyq + delta)`` with linear interpolation in f."""
    f = np.asarray(curve.freqs, dtype=np.float64)
    h = np.asarray(curve.h_mag, dtype=np.float64)
    lo, hi = f_nyq - delta, f_nyq + delta
    if lo < f[0] or hi > f[-1]:
        raise DiagnosticError(
            f"anchoring ratio needs samples covering [{lo:g}, {hi:g}], probed [{f[0]:g}, {f[-1]:g}]"
        )
    h_lo = float(np.interp(lo, f, h))
    h_hi = float(np.interp(hi, f, h))
    if h_hi == 0:
        logging.warning(f"H({hi:g}) is zero, anchoring ratio is infinite")
        return math.inf
    return h_lo / h_hi


def _power(field_or_spectrum):
    if isinstance(field_or_spectrum, Spectrum2D):
        coeffs = field_or_spectrum.coeffs
    else:
        coeffs = spfft.fft2(np.asarray(field_or_spectrum, dtype=np.float64), axes=(-2, -1))
    H, W = coeffs.shape[-2:]
    power = np.abs(coeffs) ** 2 / (H * W) ** 2
    if power.ndim > 2:
        power = power.reshape(-1, H, W).sum(axis=0)
    return power


def compute_f_oob(field_or_spectrum, rho_ratio):
    """Fraction of non-DC spectral energy at ``xi = |k| / k_Nyq > rho_ratio``.

    Accepts a field, a stack of fields (energies are pooled) or a ``Spectrum2D``.
    """
    if not 0 < rho_ratio < 1:
        raise DiagnosticError(f"rho_ratio must lie in (0, 1), got {rho_ratio}")
    power = _power(field_or_spectrum)
    xi = radial_wavenumber(power.shape) / nyquist(power.shape)

    total = float(np.sum(power[xi > 0]))
    if total <= 0:
        raise DiagnosticError("field has no non-DC spectral energy")
    return float(np.sum(power[xi > rho_ratio])) / total


def mse_ratio_bound(f_oob, delta):
    """Leading-order bound ``1 - (1 - delta**2) f_oob`` on MSE_FRL / MSE_anchored.

    The aleatoric floor and O(epsilon) terms of the bound cannot be estimated
    from data and are omitted.
    """
    if not 0 <= delta < 1:
        raise DiagnosticError(f"delta must lie in [0, 1), got {delta}")
    if not 0 <= f_oob <= 1:
        raise DiagnosticError(f"f_oob must lie in [0, 1], got {f_oob}")
    return 1.0 - (1.0 - delta**2) * f_oob


def expected_solver_error_ratio(order, alpha):
    """Error ratio ``alpha**-order`` of an order-p solver refined by ``alpha``."""
    return float(alpha) ** (-float(order))


def error_table(
    predictor, truth, test_resolutions, horizon, train_res, cutoff=None, indices=None
):
    """Equal physical-time rollout errors at every test resolution.

    ``truth`` is the reference-resolution dataset; by default its test split is
    used. Rows hold RMSE, MAE, relative L2 error, Error Ratio (band-limited over
    wideband error at ``cutoff``) and f_OOB of the truth at that resolution.
    """
    stepper = as_stepper(predictor)
    test_resolutions = sorted(int(r) for r in test_resolutions)
    ref_res = truth.resolution[0]
    if train_res not in test_resolutions:
        raise DiagnosticError(
            f"test resolutions {test_resolutions} must include the training resolution {train_res}"
        )
    if max(test_resolutions) > ref_res:
        raise DiagnosticError(
            f"reference resolution {ref_res} is below the highest test resolution {max(test_resolutions)}"
        )
    if not 1 <= horizon <= truth.n_snapshots - 1:
        raise DiagnosticError(
            f"horizon {horizon} must lie in [1, {truth.n_snapshots - 1}] snapshots"
        )
    cutoff = train_res / 2 if cutoff is None else cutoff
    if indices is None:
        indices = split_indices(truth.n_traj)[2]
    subset = truth.subset(indices)

    rows = []
    rmse_by_res = {}
    for rho in test_resolutions:
        data = np.asarray(downsample_dataset(subset, rho).data, dtype=np.float64)
        targets = data[:, 1:horizon + 1]
        preds = np.stack(_rollout(stepper, data[:, 0], horizon), axis=1)

        diff = preds - targets
        rmse = float(np.sqrt(np.mean(diff**2)))
        mae = float(np.mean(np.abs(diff)))
        norm = float(np.sqrt(np.sum(targets**2)))
        rel_err = float(np.sqrt(np.sum(diff**2)) / norm) if norm > 0 else math.nan

        low_sq, wide_sq = 0.0, 0.0
        for p, t in zip(preds.reshape(-1, rho, rho), targets.reshape(-1, rho, rho)):
            low, wide = band_split(p, t, cutoff)
            low_sq += low**2
            wide_sq += wide**2
        error_ratio = math.sqrt(low_sq / wide_sq) if wide_sq > 0 else math.nan

        f_oob = compute_f_oob(targets, train_res / rho) if rho > train_res else 0.0

        rmse_by_res[rho] = rmse
        rows.append([rho, rmse, mae, rel_err, error_ratio, f_oob])
        logging.info(
            f"{rho}x{rho}: RMSE {rmse:.6g}, MAE {mae:.6g}, ER {error_ratio:.4g}, f_OOB {f_oob:.4g}"
        )

    frame = pd.DataFrame(rows, columns=EVAL_REPORT_COLUMNS)
    for col in EVAL_REPORT_COLUMNS[1:]:
        frame[col] = frame[col].map(sig9)

    high, low = rmse_by_res[max(test_resolutions)], rmse_by_res[train_res]
    if low == 0:
        rmse_ratio = math.nan if high == 0 else math.inf
    else:
        rmse_ratio = sig9(high / low)

    provenance = {
        "train_res": train_res,
        "reference_res": ref_res,
        "horizon": horizon,
        "cutoff": cutoff,
        "n_trajectories": len(indices),
    }
    return EvalReport(frame, rmse_ratio, provenance)


def rollout_band_energy(predictor, u0, n_steps, bands):
    """Radial band energies of a rollout, one row per (step, band); step 0 is ``u0``."""
    stepper = as_stepper(predictor)
    u0 = np.asarray(u0, dtype=np.float64)
    k_nyq = nyquist(u0.shape)
    for lo, hi in bands:
        if not 0 <= lo < hi <= k_nyq:
            raise DiagnosticError(f"band [{lo:g}, {hi:g}) is not within the Nyquist {k_nyq:g}")

    radial = radial_wavenumber(u0.shape)
    masks = [(lo, hi, (radial >= lo) & (radial < hi)) for lo, hi in bands]
    rows = []
    for step, u in enumerate([u0] + _rollout(stepper, u0, n_steps)):
        power = _power(u)
        for lo, hi, mask in masks:
            rows.append([step, lo, hi, sig9(np.sum(power[mask]))])
    return pd.DataFrame(rows, columns=BAND_ENERGY_COLUMNS)


def measure_overhead(train_baseline, train_frl, infer_baseline, infer_frl, repeats=3):
    """Median wall-clock ratios FRL / baseline for training and inference closures."""

    def median_time(fn):
        times = []
        for _ in range(repeats):
            start = time.perf_counter()
            fn()
            times.append(time.perf_counter() - start)
        return float(np.median(times))

    t_train_base = median_time(train_baseline)
    t_train_frl = median_time(train_frl)
    t_infer_base = median_time(infer_baseline)
    t_infer_frl = median_time(infer_frl)
    logging.info(
        f"training {t_train_base:.3f}s vs {t_train_frl:.3f}s, "
        f"inference {t_infer_base:.3f}s vs {t_infer_frl:.3f}s"
    )
    return {
        "train_time_ratio": t_train_frl / t_train_base,
        "infer_time_ratio": t_infer_frl / t_infer_base,
    }


def write_freq_response(curve, path):
    curve.to_frame().to_csv(path, index=False, float_format=FLOAT_FORMAT)
    return path


def read_freq_response(path):
    df = pd.read_csv(path)
    if list(df.columns) != FREQ_RESPONSE_COLUMNS:
        raise DiagnosticError(f"{path} does not follow the frequency response schema")
    return FrequencyResponseCurve(
        df["f"].to_numpy(float),
        df["H_mag"].to_numpy(float),
        df["stddev"].to_numpy(float),
        df["n_repeats"].to_numpy(int),
    )


def write_eval_report(report, path):
    report.rows.to_csv(path, index=False, float_format=FLOAT_FORMAT)
    return path


def read_eval_report(path):
    df = pd.read_csv(path)
    if list(df.columns) != EVAL_REPORT_COLUMNS:
        raise DiagnosticError(f"{path} does not follow the eval report schema")
    return df


def write_band_energy(frame, path):
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT)
    return path


def read_band_energy(path):
    df = pd.read_csv(path)
    if list(df.columns) != BAND_ENERGY_COLUMNS:
        raise DiagnosticError(f"{path} does not follow the band energy schema")
    return df


def _json_value(value):
    if isinstance(value, float):
        if math.isnan(value):
            return "exact"
        if math.isinf(value):
            return "inf"
        return sig9(value)
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.floating,)):
        return _json_value(float(value))
    if isinstance(value, Bandwidth):
        return str(value)
    return value


def write_summary(summary, path):
    with open(path, "w", encoding="utf8") as outfile:
        json.dump({k: _json_value(v) for k, v in summary.items()}, outfile, indent=2, sort_keys=True)
        outfile.write("\n")
    return path
