import logging
import tempfile

import numpy as np
import pytest

from scaleanchor.solver import (
    SolverConfig,
    TrajectoryDataset,
    step_rk4,
    analytic_stepper,
    convective_number,
    make_initial_condition,
    generate_trajectory,
    generate_dataset,
    split_indices,
    downsample_dataset,
    write_dataset,
    read_dataset,
)
from scaleanchor.spectral import downsample_lowpass
from scaleanchor.errors import StabilityError, FormatError, UnsupportedVersionError


def single_mode(cfg, kx, ky, t):
    H, W = cfg.resolution
    x = np.arange(W)[None, :] / W
    y = np.arange(H)[:, None] / H
    decay = np.exp(-cfg.nu * (2 * np.pi) ** 2 * (kx**2 + ky**2) * t)
    return decay * np.cos(2 * np.pi * (kx * (x - cfg.vx * t) + ky * (y - cfg.vy * t)))


def test_single_mode_matches_closed_form():
    cfg = SolverConfig(resolution=(16, 16))
    for kx, ky in ((1, 0), (0, 1), (1, 1)):
        u = single_mode(cfg, kx, ky, 0.0)
        worst = 0.0
        for snapshot in range(1, 101):
            for _ in range(10):
                u = step_rk4(u, cfg)
            exact = single_mode(cfg, kx, ky, snapshot * cfg.dt_snapshot)
            worst = max(worst, np.max(np.abs(u - exact)) / np.max(np.abs(exact)))
        assert worst <= 1e-8

    return


def test_rk4_is_fourth_order():
    T = 0.5
    errors = []
    for dt in (0.01, 0.005):
        cfg = SolverConfig(dt=dt, resolution=(16, 16))
        u = single_mode(cfg, 3, 2, 0.0)
        for _ in range(int(round(T / dt))):
            u = step_rk4(u, cfg)
        errors.append(np.max(np.abs(u - single_mode(cfg, 3, 2, T))))

    assert 12 <= errors[0] / errors[1] <= 20

    return


def test_cfl_limits(caplog):
    with pytest.raises(StabilityError):
        SolverConfig(dt=0.02).validate()

    with caplog.at_level(logging.WARNING):
        SolverConfig(dt=0.01).validate()
    assert "CFL" in caplog.text
    assert "RK4 limit" in caplog.text

    return


def test_reference_defaults_are_stable(caplog):
    cfg = SolverConfig(n_snapshots=3)
    assert cfg.resolution == (128, 128)
    with caplog.at_level(logging.WARNING):
        cfg.validate()
    assert caplog.text == ""
    assert convective_number(cfg) < 1.0

    ds = generate_dataset(cfg, 1)
    assert ds.data.shape == (1, 3, 128, 128)
    assert np.all(np.isfinite(ds.data))
    assert np.max(np.abs(ds.data)) < 10

    return


def test_reference_evolution_downsamples_to_exact_truth():
    for dt, steps, tol in ((1e-4, 100, 1e-8), (1e-3, 10, 1e-4)):
        cfg = SolverConfig(dt=dt, steps_per_snapshot=steps, n_snapshots=2)
        traj = generate_trajectory(cfg, 0)

        exact = analytic_stepper(cfg)
        low = downsample_lowpass(traj[1], 4)
        expected = exact(downsample_lowpass(traj[0], 4))
        assert low.shape == (32, 32)
        assert np.max(np.abs(low - expected)) <= tol

    return


def test_nyquist_modes_stay_real():
    cfg = SolverConfig(resolution=(16, 16))
    x = np.arange(16)
    u = np.cos(np.pi * x)[None, :] + 0.5 * np.cos(np.pi * x)[:, None]
    decay = np.exp(-cfg.nu * (2 * np.pi) ** 2 * 64 * cfg.dt)
    after = step_rk4(u, cfg)
    assert np.max(np.abs(after - decay * u)) < 1e-12

    return


def test_mean_is_conserved():
    cfg = SolverConfig(resolution=(16, 16))
    u = make_initial_condition(cfg, np.random.default_rng(3)) + 0.3
    mean0 = np.mean(u)
    for _ in range(1000):
        u = step_rk4(u, cfg)
    assert abs(np.mean(u) - mean0) <= 1e-12

    return


def test_energy_never_increases():
    cfg = SolverConfig(resolution=(64, 64), n_snapshots=100)
    traj = generate_trajectory(cfg, 0)
    energy = np.sum(np.abs(np.fft.fft2(traj)) ** 2, axis=(-2, -1))
    assert np.all(np.diff(energy) <= 1e-12 * energy[0])
    assert energy[-1] < energy[0]

    return


def test_initial_condition():
    cfg = SolverConfig(resolution=(64, 64))
    u = make_initial_condition(cfg, np.random.default_rng(0))
    assert u.shape == (64, 64)
    assert abs(np.sqrt(np.mean(u**2)) - 1) < 1e-12
    assert abs(np.mean(u)) < 1e-12

    return


def test_initial_condition_energy_is_low_frequency():
    cfg = SolverConfig(resolution=(64, 64))
    k = np.hypot(*np.meshgrid(np.fft.fftfreq(64, 1 / 64), np.fft.fftfreq(64, 1 / 64)))
    for seed in range(100):
        power = np.abs(np.fft.fft2(make_initial_condition(cfg, np.random.default_rng(seed)))) ** 2
        assert np.sum(power[k > 16]) < 0.15 * np.sum(power)

    return


def test_trajectories_are_deterministic():
    cfg = SolverConfig(resolution=(16, 16), n_snapshots=3)
    a = generate_trajectory(cfg, 0)
    b = generate_trajectory(cfg, 0)
    c = generate_trajectory(cfg, 1)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)

    ds = generate_dataset(cfg, 3, n_jobs=2)
    assert ds.data.shape == (3, 3, 16, 16)
    assert abs(ds.dt_snapshot - 0.01) < 1e-15
    assert np.array_equal(ds.data[1], c)
    # snapshot 0 is the initial condition
    u0 = make_initial_condition(cfg, np.random.default_rng([cfg.seed, 0]))
    assert np.array_equal(ds.data[0, 0], u0)

    return


def test_snapshots_follow_exact_evolution():
    cfg = SolverConfig(resolution=(16, 16), n_snapshots=4)
    traj = generate_trajectory(cfg, 0)
    exact = analytic_stepper(cfg)
    for s in range(3):
        assert np.max(np.abs(exact(traj[s]) - traj[s + 1])) < 1e-6

    return


def test_exact_evolution_commutes_with_downsampling():
    cfg = SolverConfig(resolution=(32, 32), forcing="lowmode")
    u = make_initial_condition(cfg, np.random.default_rng(5))
    exact = analytic_stepper(cfg)

    a = downsample_lowpass(exact(u), 2)
    b = exact(downsample_lowpass(u, 2))
    assert np.max(np.abs(a - b)) < 1e-12

    return


def test_split_indices():
    train, val, test = split_indices(10)
    assert list(train) == list(range(8))
    assert list(val) == [8]
    assert list(test) == [9]

    train, val, test = split_indices(1)
    assert list(train) == [0] and list(val) == [0] and list(test) == [0]

    return


def test_downsample_dataset():
    cfg = SolverConfig(resolution=(32, 32), n_snapshots=2)
    ds = generate_dataset(cfg, 2)
    low = downsample_dataset(ds, 16)
    assert low.resolution == (16, 16)
    assert np.allclose(low.data[1, 1], downsample_lowpass(ds.data[1, 1], 2), atol=1e-14)

    return


def test_dataset_file_roundtrip():
    cfg = SolverConfig(resolution=(8, 8), n_snapshots=3, forcing="lowmode")
    ds = generate_dataset(cfg, 2)

    with tempfile.TemporaryDirectory() as tmpoutdir:
        path = tmpoutdir + "/data.salb"
        write_dataset(ds, path)
        back = read_dataset(path)

    assert back.data.dtype == np.float32
    assert np.array_equal(back.data, ds.data.astype(np.float32))
    assert back.config == cfg
    assert back.config.nu == 0.01
    assert (back.config.vx, back.config.vy) == (1.0, 0.5)
    assert back.dt_snapshot == ds.dt_snapshot

    return


def test_dataset_format_errors():
    cfg = SolverConfig(resolution=(8, 8), n_snapshots=2)
    ds = TrajectoryDataset(np.zeros((1, 2, 8, 8)), cfg.dt_snapshot, cfg)

    with tempfile.TemporaryDirectory() as tmpoutdir:
        path = tmpoutdir + "/data.salb"
        write_dataset(ds, path)
        with open(path, "rb") as infile:
            buf = infile.read()

        def check(content, error, match):
            with open(path, "wb") as outfile:
                outfile.write(content)
            with pytest.raises(error, match=match):
                read_dataset(path)

        check(b"XXXX" + buf[4:], FormatError, "offset 0")
        check(buf[:4] + b"\x02\x00" + buf[6:], UnsupportedVersionError, "offset 4")
        check(buf[:-10], FormatError, "truncated")
        check(buf + b"\x00", FormatError, "trailing")
        check(buf[:10], FormatError, "truncated")

        with pytest.raises(FormatError):
            read_dataset(tmpoutdir + "/missing.salb")

    return
