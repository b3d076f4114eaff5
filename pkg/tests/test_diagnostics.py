import math
import time
import tempfile

import numpy as np
import pandas as pd
import pytest
import torch

from scaleanchor.spectral import Spectrum2D, fft2
from scaleanchor.solver import SolverConfig, analytic_stepper, generate_dataset, downsample_dataset
from scaleanchor.model import PredictorConfig, make_predictor, checkpoint_from_model
from scaleanchor.frl import FrlConfig, Forecaster
from scaleanchor.diagnostics import (
    FrequencyResponseCurve,
    Bandwidth,
    probe_frequency_response,
    bandwidth,
    anchoring_ratio,
    error_table,
    rollout_band_energy,
    compute_f_oob,
    mse_ratio_bound,
    expected_solver_error_ratio,
    measure_overhead,
    write_freq_response,
    read_freq_response,
    write_eval_report,
    read_eval_report,
    write_band_energy,
    read_band_energy,
    FREQ_RESPONSE_COLUMNS,
    EVAL_REPORT_COLUMNS,
    BAND_ENERGY_COLUMNS,
)
from scaleanchor.errors import DiagnosticError


def identity(u):
    return np.array(u, dtype=np.float64)


def curve(freqs, h):
    freqs = np.asarray(freqs, dtype=float)
    h = np.asarray(h, dtype=float)
    return FrequencyResponseCurve(freqs, h, np.zeros_like(h), np.ones(len(h), dtype=int))


class Replay:
    """Returns the stored next snapshot of whichever truth state it is given."""

    def __init__(self, ds, resolutions):
        self.data = {
            r: np.asarray(downsample_dataset(ds, r).data, dtype=np.float64) for r in resolutions
        }

    def __call__(self, u):
        data = self.data[u.shape[-1]]
        for s in range(data.shape[1] - 1):
            if np.array_equal(data[:, s], u):
                return data[:, s + 1]
        raise AssertionError("state not found in truth")


def test_identity_response_is_flat():
    freqs = np.arange(0, 21)
    result = probe_frequency_response(identity, 64, freqs, amplitude=0.7, repeats=4)
    assert np.max(np.abs(result.h_mag - 1)) < 1e-10
    assert list(result.n_repeats) == [4] * 21

    ckpt = checkpoint_from_model(
        make_predictor(PredictorConfig()), {"train_res": 32, "frl": FrlConfig().to_dict()}
    )
    result = probe_frequency_response(Forecaster(ckpt, dtype=torch.float64), 64, freqs)
    assert np.max(np.abs(result.h_mag - 1)) < 1e-10

    return


def test_exact_evolution_response():
    cfg = SolverConfig()
    freqs = np.arange(0, 31)
    result = probe_frequency_response(analytic_stepper(cfg), 64, freqs, repeats=3)
    expected = np.exp(-cfg.nu * (2 * np.pi * freqs) ** 2 * cfg.dt_snapshot)
    assert np.max(np.abs(result.h_mag - expected)) < 1e-6

    two_steps = probe_frequency_response(analytic_stepper(cfg), 64, freqs, repeats=3, steps=2)
    assert np.max(np.abs(two_steps.h_mag - expected**2)) < 1e-6

    return


def test_probe_preconditions():
    with pytest.raises(DiagnosticError):
        probe_frequency_response(identity, 32, [4, 16])
    with pytest.raises(DiagnosticError):
        probe_frequency_response(identity, 32, [4, 3])
    with pytest.raises(DiagnosticError):
        probe_frequency_response(identity, 32, [1.5, 3])
    with pytest.raises(DiagnosticError):
        probe_frequency_response(identity, 32, [1, 3], amplitude=0)

    return


def test_bandwidth():
    flat = curve(np.arange(26), np.ones(26))
    bw = bandwidth(flat)
    assert bw == Bandwidth(25.0, True)
    assert str(bw) == ">25.00"

    freqs = np.arange(0, 21, 2)
    step = curve(freqs, np.where(freqs <= 10, 1.0, 0.5))
    bw = bandwidth(step)
    assert not bw.exceeds
    assert abs(bw.value - (10 + 2 * (1 - 0.707) / (1 - 0.5))) < 1e-12
    assert abs(bw.value - 11.17) < 0.01
    assert bandwidth(step.scaled(3.0)).value == pytest.approx(bw.value, abs=1e-12)

    with pytest.raises(DiagnosticError):
        bandwidth(curve(freqs, np.zeros(len(freqs))))
    with pytest.raises(DiagnosticError):
        bandwidth(curve([1, 2], [1, 1]))

    return


def test_anchoring_ratio():
    freqs = np.arange(32)
    assert anchoring_ratio(curve(freqs, np.full(32, 0.3)), 16) == pytest.approx(1.0)

    cliff = curve(freqs, np.where(freqs < 16, 1.0, 0.25))
    assert anchoring_ratio(cliff, 16, 4) == pytest.approx(4.0)
    assert anchoring_ratio(cliff, 16, 2) == pytest.approx(4.0)
    assert anchoring_ratio(cliff.scaled(5.0), 16) == pytest.approx(4.0)

    assert anchoring_ratio(curve(freqs, np.where(freqs < 16, 1.0, 0.0)), 16) == math.inf

    with pytest.raises(DiagnosticError):
        anchoring_ratio(cliff, 30, 4)

    return


def brute_force_f_oob(u, rho_ratio):
    H, W = u.shape
    coeffs = np.fft.fft2(u)
    oob, total = 0.0, 0.0
    for i in range(H):
        for j in range(W):
            ky = i if i <= H // 2 else i - H
            kx = j if j <= W // 2 else j - W
            xi = math.sqrt(kx * kx + ky * ky) / (min(H, W) / 2)
            if xi == 0:
                continue
            power = abs(coeffs[i, j]) ** 2
            total += power
            if xi > rho_ratio:
                oob += power
    return oob / total


def test_f_oob_examples():
    n = 32
    x = np.arange(n)[None, :] / n
    assert compute_f_oob(np.sin(2 * np.pi * 4 * x) * np.ones((n, 1)), 0.5) == pytest.approx(0.0, abs=1e-12)
    assert compute_f_oob(np.sin(2 * np.pi * 12 * x) * np.ones((n, 1)), 0.5) == pytest.approx(1.0, abs=1e-12)

    # a delta has a flat spectrum, f_oob is the share of modes above the ratio
    delta = np.zeros((n, n))
    delta[0, 0] = 1.0
    ky = np.fft.fftfreq(n, 1.0 / n)
    xi = np.sqrt(ky[:, None] ** 2 + ky[None, :] ** 2) / (n / 2)
    expected = np.sum(xi > 0.5) / np.sum(xi > 0)
    assert abs(compute_f_oob(delta, 0.5) - expected) < 1e-12
    assert abs(compute_f_oob(fft2(delta), 0.5) - expected) < 1e-12

    with pytest.raises(DiagnosticError):
        compute_f_oob(np.zeros((n, n)), 0.5)
    with pytest.raises(DiagnosticError):
        compute_f_oob(delta, 1.0)

    return


def test_f_oob_matches_enumeration():
    rng = np.random.default_rng(0)
    for _ in range(50):
        n = int(2 * rng.integers(2, 9))
        u = rng.standard_normal((n, n))
        rho_ratio = rng.uniform(0.05, 0.95)
        assert abs(compute_f_oob(u, rho_ratio) - brute_force_f_oob(u, rho_ratio)) < 1e-12

    u = rng.standard_normal((32, 32))
    values = [compute_f_oob(u, r) for r in np.linspace(0.05, 0.95, 19)]
    assert all(a >= b for a, b in zip(values, values[1:]))

    return


def test_mse_ratio_bound():
    assert mse_ratio_bound(0.0, 0.5) == 1.0
    assert abs(mse_ratio_bound(0.6, 0.0) - 0.4) < 1e-12
    assert abs(mse_ratio_bound(0.5, 0.3) - 0.545) < 1e-12

    rng = np.random.default_rng(1)
    for _ in range(50):
        f, d = rng.uniform(), rng.uniform(0, 0.999)
        assert abs(mse_ratio_bound(f, d) - (1 - (1 - d * d) * f)) < 1e-12

    with pytest.raises(DiagnosticError):
        mse_ratio_bound(0.5, 1.0)
    with pytest.raises(DiagnosticError):
        mse_ratio_bound(1.5, 0.1)

    return


def test_expected_solver_error_ratio():
    assert expected_solver_error_ratio(2, 4) == 1 / 16
    assert expected_solver_error_ratio(4, 1) == 1.0

    return


def reference_dataset():
    cfg = SolverConfig(resolution=(32, 32), n_snapshots=4)
    return generate_dataset(cfg, 4)


def test_error_table_perfect_predictor():
    ds = reference_dataset()
    indices = np.arange(ds.n_traj)
    report = error_table(Replay(ds, [8, 16, 32]), ds, [8, 16, 32], 3, 8, indices=indices)

    assert list(report.rows.columns) == EVAL_REPORT_COLUMNS
    assert list(report.rows["resolution"]) == [8, 16, 32]
    assert np.all(report.rows["rmse"] == 0)
    assert np.all(report.rows["mae"] == 0)
    assert math.isnan(report.rmse_ratio)
    assert report.rmse_ratio_label == "exact"
    assert report.rows["f_oob"].iloc[0] == 0.0
    assert np.all((report.rows["f_oob"] >= 0) & (report.rows["f_oob"] <= 1))
    assert report.provenance["horizon"] == 3

    return


def test_error_table_identity_predictor():
    ds = reference_dataset()
    report = error_table(identity, ds, [16, 32], 2, 16)

    rows = report.rows
    assert np.all(rows[["rmse", "mae", "rel_err", "error_ratio"]] > 0)
    assert np.all(rows["error_ratio"] <= 1 + 1e-12)
    assert report.rmse_ratio > 0
    assert report.provenance["cutoff"] == 8

    with pytest.raises(DiagnosticError):
        error_table(identity, ds, [16, 32], 2, 8)
    with pytest.raises(DiagnosticError):
        error_table(identity, ds, [16, 64], 2, 16)
    with pytest.raises(DiagnosticError):
        error_table(identity, ds, [16, 32], 4, 16)

    return


def test_rollout_band_energy():
    n = 32
    x = np.arange(n)[None, :] / n
    u0 = np.cos(2 * np.pi * 5 * x) * np.ones((n, 1)) + 0.5 * np.cos(2 * np.pi * 11 * x)
    bands = [(4.0, 6.0), (10.0, 12.0)]

    flat = rollout_band_energy(identity, u0, 3, bands)
    assert list(flat.columns) == BAND_ENERGY_COLUMNS
    assert len(flat) == 4 * 2
    for lo, _ in bands:
        energies = flat.loc[flat["band_lo"] == lo, "energy"].to_numpy()
        assert np.all(energies == energies[0])

    cfg = SolverConfig()
    decay = rollout_band_energy(analytic_stepper(cfg), u0, 3, bands)
    for (lo, _), f, amplitude in zip(bands, (5, 11), (1.0, 0.5)):
        energies = decay.loc[decay["band_lo"] == lo, "energy"].to_numpy()
        rate = np.exp(-2 * cfg.nu * (2 * np.pi * f) ** 2 * cfg.dt_snapshot)
        expected = amplitude**2 / 2 * rate ** np.arange(4)
        assert np.max(np.abs(energies - expected) / expected) < 1e-8

    with pytest.raises(DiagnosticError):
        rollout_band_energy(identity, u0, 1, [(10.0, 20.0)])

    return


def test_measure_overhead():
    def work():
        time.sleep(0.05)

    ratios = measure_overhead(work, work, work, work, repeats=3)
    assert 0.9 <= ratios["train_time_ratio"] <= 1.1
    assert 0.9 <= ratios["infer_time_ratio"] <= 1.1

    return


def test_reports_roundtrip_through_csv():
    cfg = SolverConfig()
    result = probe_frequency_response(analytic_stepper(cfg), 64, np.arange(0, 20, 3), repeats=2)
    ds = reference_dataset()
    report = error_table(identity, ds, [16, 32], 2, 16)
    u0 = ds.data[0, 0]
    energies = rollout_band_energy(identity, u0, 2, [(1.0, 4.0), (4.0, 16.0)])

    with tempfile.TemporaryDirectory() as tmpoutdir:
        write_freq_response(result, tmpoutdir + "/freq_response.csv")
        write_eval_report(report, tmpoutdir + "/eval_report.csv")
        write_band_energy(energies, tmpoutdir + "/band_energy.csv")

        with open(tmpoutdir + "/freq_response.csv") as infile:
            assert next(infile).strip() == ",".join(FREQ_RESPONSE_COLUMNS)
        back = read_freq_response(tmpoutdir + "/freq_response.csv")
        assert np.array_equal(back.freqs, result.freqs)
        assert np.array_equal(back.h_mag, result.h_mag)
        assert np.array_equal(back.stddev, result.stddev)
        assert np.array_equal(back.n_repeats, result.n_repeats)

        pd.testing.assert_frame_equal(
            read_eval_report(tmpoutdir + "/eval_report.csv"), report.rows, check_dtype=False
        )
        pd.testing.assert_frame_equal(
            read_band_energy(tmpoutdir + "/band_energy.csv"), energies, check_dtype=False
        )

    return
