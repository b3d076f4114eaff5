"""Pseudo-spectral ground truth for 2D convection-diffusion on the periodic unit square.

    du/dt + v . grad(u) = nu * laplacian(u) + f

In Fourier space every mode evolves independently,

    du_k/dt = (-i 2 pi (k . v) - nu (2 pi |k|)**2) u_k + f_k,

and is advanced with an integrating-factor RK4: diffusion is applied exactly through
exp(-nu (2 pi |k|)**2 dt), classic RK4 handles convection and forcing. The equation is
linear in u, so no de-aliasing is applied. Convection is not applied on the Nyquist row
and column, whose modes are their own conjugates on an even grid.
"""

import json
import struct
import logging
from dataclasses import dataclass, asdict, field

import numpy as np
from scipy import fft as spfft
from joblib import Parallel, delayed
from tqdm import tqdm

from .spectral import check_field, wavenumbers, downsample_lowpass
from .errors import (
    DataValidityError,
    ShapeError,
    StabilityError,
    FormatError,
    UnsupportedVersionError,
)

DATASET_MAGIC = b"SALB"
DATASET_VERSION = 1
FLAG_FORCING = 1
BLOWUP_LIMIT = 1e6
RK4_IMAGINARY_LIMIT = 2.0 * np.sqrt(2.0)

# magic, version, flags, H, W, n_traj, n_snap, dt_snapshot
_HEADER = struct.Struct("<4sHHIIIId")


@dataclass
class SolverConfig:
    nu: float = 0.01
    vx: float = 1.0
    vy: float = 0.5
    dt: float = 0.001
    steps_per_snapshot: int = 10
    n_snapshots: int = 50
    forcing: str = "none"
    resolution: tuple = (128, 128)
    seed: int = 42

    def __post_init__(self):
        self.resolution = tuple(int(r) for r in self.resolution)

    @property
    def dt_snapshot(self):
        return self.dt * self.steps_per_snapshot

    def cfl_number(self):
        return max(abs(self.vx), abs(self.vy)) * self.dt * max(self.resolution)

    def validate(self, warn=True):
        if self.nu < 0:
            raise DataValidityError(f"nu must be >= 0, got {self.nu}")
        if not self.dt > 0:
            raise DataValidityError(f"dt must be > 0, got {self.dt}")
        if self.steps_per_snapshot < 1 or self.n_snapshots < 1:
            raise DataValidityError("steps_per_snapshot and n_snapshots must be >= 1")
        if self.forcing not in ("none", "lowmode"):
            raise DataValidityError(f"unknown forcing '{self.forcing}'")
        H, W = self.resolution
        if H < 4 or W < 4 or H % 2 != 0 or W % 2 != 0:
            raise ShapeError(f"resolution must be even and >= 4, got {H}x{W}")
        cfl = self.cfl_number()
        if cfl > 2:
            raise StabilityError(f"CFL number {cfl:.3f} exceeds the hard limit of 2")
        if cfl >= 1 and warn:
            logging.warning(f"CFL number {cfl:.3f} is >= 1, results may be inaccurate")
        conv = convective_number(self)
        if conv > RK4_IMAGINARY_LIMIT and warn:
            logging.warning(
                f"convective number {conv:.3f} exceeds the RK4 limit {RK4_IMAGINARY_LIMIT:.3f}, "
                "only diffusion keeps the highest modes bounded"
            )
        return self

    def to_dict(self):
        d = asdict(self)
        d["resolution"] = list(self.resolution)
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


@dataclass
class TrajectoryDataset:
    """Trajectories stored as one array of shape ``(n_traj, n_snap, H, W)``."""

    data: np.ndarray
    dt_snapshot: float
    config: SolverConfig = field(default_factory=SolverConfig)

    @property
    def trajectories(self):
        return self.data

    @property
    def resolution(self):
        return tuple(self.data.shape[2:])

    @property
    def n_traj(self):
        return self.data.shape[0]

    @property
    def n_snapshots(self):
        return self.data.shape[1]

    def validate(self):
        if self.data.ndim != 4:
            raise ShapeError(
                f"trajectory data must have shape (n_traj, n_snap, H, W), got {self.data.shape}"
            )
        if not np.all(np.isfinite(self.data)):
            raise DataValidityError("trajectory data contains non-finite values")
        return self

    def subset(self, indices):
        return TrajectoryDataset(self.data[np.asarray(indices)], self.dt_snapshot, self.config)


def _split_operator(cfg, shape):
    """Convection and diffusion multipliers per mode, ``(C, D)``."""
    H, W = shape
    ky, kx = wavenumbers(shape)
    two_pi = 2.0 * np.pi
    kx_conv = np.where(np.abs(kx) == W // 2, 0.0, kx)
    ky_conv = np.where(np.abs(ky) == H // 2, 0.0, ky)
    C = -1j * two_pi * (kx_conv * cfg.vx + ky_conv * cfg.vy)
    D = -cfg.nu * (two_pi**2) * (kx**2 + ky**2)
    return C, D


def spectral_operator(cfg, shape):
    C, D = _split_operator(cfg, shape)
    return C + D


def convective_number(cfg, shape=None):
    """Largest ``|2 pi (k . v)| dt`` on the grid; RK4 is stable up to 2 sqrt(2)."""
    C, _ = _split_operator(cfg, cfg.resolution if shape is None else shape)
    return float(np.max(np.abs(C))) * cfg.dt


def forcing_field(cfg, shape):
    H, W = shape
    if cfg.forcing == "none":
        return np.zeros((H, W))
    # single low mode k = (1, 1), zero mean
    y = np.arange(H)[:, None] / H
    x = np.arange(W)[None, :] / W
    return 0.1 * np.sin(2.0 * np.pi * (x + y))


def _rk4_spectral(uhat, C, D, fhat, dt, n_steps):
    E = np.exp(D * dt)
    Eh = np.exp(D * dt / 2.0)

    def rhs(v):
        return C * v + fhat

    for _ in range(n_steps):
        k1 = rhs(uhat)
        k2 = rhs(Eh * (uhat + 0.5 * dt * k1))
        k3 = rhs(Eh * uhat + 0.5 * dt * k2)
        k4 = rhs(E * uhat + dt * Eh * k3)
        uhat = E * uhat + (dt / 6.0) * (E * k1 + 2.0 * Eh * (k2 + k3) + k4)
    return uhat


def step_rk4(field, cfg, step=None):
    """Advances a field by one timestep ``cfg.dt``."""
    field = check_field(field)
    if field.shape != cfg.resolution:
        raise ShapeError(
            f"field resolution {field.shape} does not match solver resolution {cfg.resolution}"
        )
    C, D = _split_operator(cfg, field.shape)
    fhat = spfft.fft2(forcing_field(cfg, field.shape))
    uhat = _rk4_spectral(spfft.fft2(field), C, D, fhat, cfg.dt, 1)
    out = spfft.ifft2(uhat).real

    if not np.all(np.isfinite(out)) or np.max(np.abs(out)) > BLOWUP_LIMIT:
        where = "" if step is None else f" at step {step}"
        raise StabilityError(f"solution blew up{where}", step=step)
    return out


def analytic_stepper(cfg, interval=None):
    """Exact evolution over one snapshot interval, usable at any resolution.

    Each mode is advanced with the closed form
    ``u_k(t + T) = exp(L_k T) u_k + (exp(L_k T) - 1) / L_k * f_k``.
    """
    T = cfg.dt_snapshot if interval is None else interval
    cache = {}

    def stepper(field):
        field = np.asarray(field, dtype=np.float64)
        shape = field.shape[-2:]
        if shape not in cache:
            L = spectral_operator(cfg, shape)
            growth = np.exp(L * T)
            with np.errstate(divide="ignore", invalid="ignore"):
                drive = np.where(L == 0, T, (growth - 1.0) / L)
            cache[shape] = (growth, drive * spfft.fft2(forcing_field(cfg, shape)))
        growth, drive = cache[shape]
        uhat = spfft.fft2(field, axes=(-2, -1))
        return spfft.ifft2(growth * uhat + drive, axes=(-2, -1)).real

    return stepper


def make_initial_condition(cfg, rng):
    """Band-limited Gaussian random field plus three low x-sinusoids, unit RMS."""
    H, W = cfg.resolution
    ky, kx = wavenumbers((H, W))
    sigma = (min(H, W) / 2) / 4

    noise = rng.standard_normal((H, W))
    phases = np.angle(spfft.fft2(noise))
    envelope = np.exp(-(kx**2 + ky**2) / (2.0 * sigma**2))
    envelope[0, 0] = 0.0
    grf = spfft.ifft2(envelope * np.exp(1j * phases)).real
    grf /= np.sqrt(np.mean(grf**2))

    x = np.arange(W) / W
    amplitudes = rng.uniform(0.2, 0.5, size=3)
    shifts = rng.uniform(0.0, 2.0 * np.pi, size=3)
    sines = sum(
        a * np.sin(2.0 * np.pi * m * x + phi)
        for m, a, phi in zip(range(1, 4), amplitudes, shifts)
    )

    u = grf + sines[None, :]
    return u / np.sqrt(np.mean(u**2))


def generate_trajectory(cfg, index):
    rng = np.random.default_rng([cfg.seed, index])
    u0 = make_initial_condition(cfg, rng)

    C, D = _split_operator(cfg, cfg.resolution)
    fhat = spfft.fft2(forcing_field(cfg, cfg.resolution))

    snapshots = np.empty((cfg.n_snapshots,) + cfg.resolution)
    snapshots[0] = u0
    uhat = spfft.fft2(u0)
    for s in range(1, cfg.n_snapshots):
        uhat = _rk4_spectral(uhat, C, D, fhat, cfg.dt, cfg.steps_per_snapshot)
        snapshots[s] = spfft.ifft2(uhat).real
        if not np.all(np.isfinite(snapshots[s])) or np.max(np.abs(snapshots[s])) > BLOWUP_LIMIT:
            step = s * cfg.steps_per_snapshot
            raise StabilityError(
                f"trajectory {index} blew up at step {step}", step=step
            )
    return snapshots


def generate_dataset(cfg, n_traj, n_jobs=1):
    if int(n_traj) < 1:
        raise DataValidityError(f"n_traj must be >= 1, got {n_traj}")
    cfg.validate()

    logging.info(
        f"Generating {n_traj} trajectories of {cfg.n_snapshots} snapshots at "
        f"{cfg.resolution[0]}x{cfg.resolution[1]}..."
    )
    trajectories = Parallel(n_jobs=n_jobs)(
        delayed(generate_trajectory)(cfg, i) for i in tqdm(range(n_traj), disable=None)
    )

    return TrajectoryDataset(np.stack(trajectories), cfg.dt_snapshot, cfg)


def split_indices(n_traj):
    """80/10/10 split by trajectory index into (train, val, test)."""
    n_train = max(1, int(round(0.8 * n_traj)))
    n_val = int(round(0.1 * n_traj))
    train = np.arange(0, min(n_train, n_traj))
    val = np.arange(n_train, min(n_train + n_val, n_traj))
    test = np.arange(n_train + n_val, n_traj)
    if len(val) == 0:
        val = np.array([n_traj - 1])
    if len(test) == 0:
        test = np.array([n_traj - 1])
    return train, val, test


def downsample_dataset(ds, resolution):
    """Snapshot-wise ``downsample_lowpass`` of a whole dataset to a square resolution."""
    H, W = ds.resolution
    if H % resolution != 0 or W % resolution != 0 or H // resolution != W // resolution:
        raise ShapeError(
            f"cannot downsample {H}x{W} data to {resolution}x{resolution}"
        )
    factor = H // resolution
    if factor == 1:
        return ds
    data = np.stack(
        [
            np.stack([downsample_lowpass(snap, factor) for snap in traj])
            for traj in ds.data
        ]
    )
    return TrajectoryDataset(data, ds.dt_snapshot, ds.config)


def write_dataset(ds, path):
    ds.validate()
    n_traj, n_snap, H, W = ds.data.shape
    flags = FLAG_FORCING if ds.config.forcing != "none" else 0
    blob = json.dumps(ds.config.to_dict(), sort_keys=True).encode("utf8")

    with open(path, "wb") as outfile:
        outfile.write(
            _HEADER.pack(
                DATASET_MAGIC, DATASET_VERSION, flags, H, W, n_traj, n_snap, ds.dt_snapshot
            )
        )
        outfile.write(struct.pack("<I", len(blob)))
        outfile.write(blob)
        outfile.write(np.ascontiguousarray(ds.data, dtype="<f4").tobytes())

    return path


def read_dataset(path):
    try:
        with open(path, "rb") as infile:
            buf = infile.read()
    except OSError as e:
        raise FormatError(f"could not read dataset {path}: {e}")

    if len(buf) < _HEADER.size:
        raise FormatError("truncated dataset header", offset=len(buf))
    magic, version, flags, H, W, n_traj, n_snap, dt_snapshot = _HEADER.unpack_from(buf, 0)
    if magic != DATASET_MAGIC:
        raise FormatError(f"bad magic {magic!r}, not a dataset file", offset=0)
    if version != DATASET_VERSION:
        raise UnsupportedVersionError(f"unsupported dataset version {version}", offset=4)

    offset = _HEADER.size
    if len(buf) < offset + 4:
        raise FormatError("truncated config length", offset=len(buf))
    (blob_len,) = struct.unpack_from("<I", buf, offset)
    offset += 4
    if len(buf) < offset + blob_len:
        raise FormatError("truncated config blob", offset=len(buf))
    try:
        config = SolverConfig.from_dict(json.loads(buf[offset:offset + blob_len].decode("utf8")))
    except (ValueError, TypeError) as e:
        raise FormatError(f"invalid config blob: {e}", offset=offset)
    offset += blob_len

    n_values = n_traj * n_snap * H * W
    expected = offset + 4 * n_values
    if len(buf) < expected:
        raise FormatError(
            f"truncated data: expected {expected} bytes, found {len(buf)}", offset=len(buf)
        )
    if len(buf) > expected:
        raise FormatError("trailing bytes after data", offset=expected)

    data = np.frombuffer(buf, dtype="<f4", count=n_values, offset=offset)
    data = data.reshape(n_traj, n_snap, H, W).astype(np.float32)

    return TrajectoryDataset(data, dt_snapshot, config).validate()
