"""Frequency Representation Learning: multi-resolution data, Nyquist-normalised
frequency encoding, frequency-weighted spectral loss, training and rollout.

Baseline training is the same loop with all three components switched off,
so an all-ablated FRL run and a baseline run follow identical code paths.
"""

import copy
import math
import logging
from dataclasses import dataclass, asdict, replace, field
from functools import lru_cache

import numpy as np
import torch
from tqdm import tqdm

from .solver import TrajectoryDataset, split_indices, downsample_dataset
from .spectral import check_field, downsample_lowpass, upsample_spectral
from .model import (
    PredictorConfig,
    PredictorCheckpoint,
    OptimizerConfig,
    make_predictor,
    make_optimizer,
    optimizer_step,
    backward,
    build_predictor,
    checkpoint_from_model,
)
from .errors import (
    DataValidityError,
    ShapeError,
    TrainingError,
    RolloutDivergenceError,
    UsageError,
)

MODES = ("baseline", "frl")
DEPLOY_MODES = ("auto", "direct", "training-grid")
DIVERGENCE_LIMIT = 1e6
ZERO_AMPLITUDE = 1e-12


@dataclass
class FrlConfig:
    levels: int = 3
    level_sampling: tuple = None
    level_weights: tuple = None
    n_freq: int = 8
    lam: float = 0.1
    warmup_epochs: int = 5
    alpha_radial: float = 1.0
    mu_phys: float = 0.0
    use_multires: bool = True
    use_freq_enc: bool = True
    use_freq_loss: bool = True

    def __post_init__(self):
        if self.level_sampling is None:
            # per-batch sampling over {rho0, rho1}, deeper levels built but unused
            probs = [1.0] if self.levels == 1 else [0.5, 0.5] + [0.0] * (self.levels - 2)
            self.level_sampling = tuple(probs)
        if self.level_weights is None:
            self.level_weights = tuple([1.0] * self.levels)
        self.level_sampling = tuple(float(p) for p in self.level_sampling)
        self.level_weights = tuple(float(w) for w in self.level_weights)

    @property
    def in_channels(self):
        return 1 + 4 * self.n_freq

    def validate(self, rho0=None):
        if self.levels < 1:
            raise DataValidityError(f"levels must be >= 1, got {self.levels}")
        if len(self.level_sampling) != self.levels or len(self.level_weights) != self.levels:
            raise DataValidityError("level_sampling and level_weights need one entry per level")
        if any(p < 0 for p in self.level_sampling) or not math.isclose(
            sum(self.level_sampling), 1.0, abs_tol=1e-9
        ):
            raise DataValidityError(
                f"level_sampling must be non-negative and sum to 1, got {self.level_sampling}"
            )
        if self.lam < 0 or self.mu_phys < 0:
            raise DataValidityError("lambda and mu must be >= 0")
        if self.n_freq < 1:
            raise DataValidityError(f"n_freq must be >= 1, got {self.n_freq}")
        if rho0 is not None and self.use_multires:
            coarsest = rho0 // 2 ** (self.levels - 1)
            if rho0 % 2 ** (self.levels - 1) != 0 or coarsest < 4 or coarsest % 2 != 0:
                raise ShapeError(
                    f"resolution {rho0} is not divisible into {self.levels} levels"
                )
        return self

    def to_dict(self):
        d = asdict(self)
        d["level_sampling"] = list(self.level_sampling)
        d["level_weights"] = list(self.level_weights)
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(**d)

    def as_baseline(self):
        return replace(
            self, use_multires=False, use_freq_enc=False, use_freq_loss=False, mu_phys=0.0
        )


@dataclass
class TrainConfig:
    epochs: int = 100
    batch_size: int = 8
    patience: int = 10
    seed: int = 42
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    show_progress: bool = False


def pe_freq(x, k, rho, kind="sin"):
    """Nyquist-normalised encoding ``sin(2 pi k x / (rho / 2))`` (or cos).

    ``x`` is a grid coordinate, so
    ``pe_freq(x, k, rho1) == pe_freq(x * rho2 / rho1, k, rho2)`` encodes the same
    physical point identically on both grids.
    """
    if rho < 4 or rho % 2 != 0:
        raise DataValidityError(f"rho must be even and >= 4, got {rho}")
    if k < 1:
        raise DataValidityError(f"harmonic index k must be >= 1, got {k}")
    arg = 2.0 * np.pi * k * np.asarray(x, dtype=np.float64) / (rho / 2)
    return np.sin(arg) if kind == "sin" else np.cos(arg)


@lru_cache(maxsize=32)
def _positional_channels(shape, n_freq):
    H, W = shape
    # grid coordinates: channel k is the physical harmonic 2k on every grid
    x = np.arange(W, dtype=np.float64)
    y = np.arange(H, dtype=np.float64)
    channels = []
    for coord, rho, along_x in ((x, W, True), (y, H, False)):
        for kind in ("sin", "cos"):
            for k in range(1, n_freq + 1):
                values = pe_freq(coord, k, rho, kind)
                channels.append(
                    np.broadcast_to(values[None, :] if along_x else values[:, None], (H, W))
                )
    out = np.stack(channels)
    out.setflags(write=False)
    return out


def positional_channels(shape, n_freq):
    """PE channels ordered x-sin, x-cos, y-sin, y-cos, each over k = 1..n_freq."""
    return _positional_channels(tuple(int(s) for s in shape[-2:]), int(n_freq))


def build_encoded_input(u, cfg):
    """Stacks the field with its ``4 * n_freq`` PE channels, zeroed when ablated."""
    u = check_field(u, "u")
    encoded = np.zeros((cfg.in_channels,) + u.shape)
    encoded[0] = u
    if cfg.use_freq_enc:
        encoded[1:] = positional_channels(u.shape, cfg.n_freq)
    return encoded


def encode_batch(u, cfg, dtype=torch.float32):
    """Torch version of ``build_encoded_input`` for a batch ``(B, H, W)``."""
    u = torch.as_tensor(u, dtype=dtype)
    B, H, W = u.shape
    if cfg.use_freq_enc:
        pe = torch.from_numpy(np.array(positional_channels((H, W), cfg.n_freq))).to(dtype)
    else:
        pe = torch.zeros((4 * cfg.n_freq, H, W), dtype=dtype)
    return torch.cat([u[:, None], pe.expand(B, -1, -1, -1)], dim=1)


def build_multires_dataset(ds, cfg):
    """Level ``j`` holds the dataset low-pass downsampled by ``2**j``."""
    rho0 = ds.resolution[0]
    cfg.validate(rho0)
    if rho0 % 2 ** (cfg.levels - 1) != 0:
        raise ShapeError(f"resolution {rho0} is not divisible into {cfg.levels} levels")

    levels = {0: ds}
    for j in range(1, cfg.levels):
        levels[j] = downsample_dataset(ds, rho0 // 2**j)
        logging.debug(f"Built level {j} at {levels[j].resolution}")
    return levels


def frequency_weights(shape, alpha, dtype=torch.float64):
    """``w_k = (|k| / k_Nyq)**alpha`` on the FFT layout, DC excluded."""
    H, W = shape
    ky = torch.fft.fftfreq(H, d=1.0 / H, dtype=torch.float64)
    kx = torch.fft.fftfreq(W, d=1.0 / W, dtype=torch.float64)
    radial = torch.sqrt(ky[:, None] ** 2 + kx[None, :] ** 2)
    w = (radial / (min(H, W) / 2)) ** alpha
    w[0, 0] = 0.0
    return w.to(dtype)


def _amplitude(z):
    # d|z|/dz taken as 0 below ZERO_AMPLITUDE
    mag2 = z.real**2 + z.imag**2
    floor = ZERO_AMPLITUDE**2
    return torch.where(mag2 > floor, torch.sqrt(torch.clamp(mag2, min=floor)), torch.zeros_like(mag2))


def effective_lambda(cfg, epoch):
    if not cfg.use_freq_loss:
        return 0.0
    if cfg.warmup_epochs <= 0:
        return cfg.lam
    return cfg.lam * min(1.0, epoch / cfg.warmup_epochs)


def loss(pred, target, cfg, epoch, level_weight=1.0):
    """Composite loss ``L_space + lambda(epoch) L_freq + mu L_phys``.

    ``L_freq`` is the frequency-weighted amplitude MSE
    ``sum_k w_k (|P_k| - |T_k|)**2 / N_modes`` over the unnormalised FFT, with
    ``N_modes = H * W``. Returns the total as a tensor and the parts as floats.
    """
    pred = torch.as_tensor(pred)
    target = torch.as_tensor(target)
    if pred.shape != target.shape:
        raise ShapeError(f"shape mismatch: {tuple(pred.shape)} vs {tuple(target.shape)}")
    if pred.ndim == 2:
        pred, target = pred[None], target[None]
    pred = pred.to(torch.float64)
    target = target.to(torch.float64)
    H, W = pred.shape[-2:]

    l_space = torch.mean((pred - target) ** 2)
    total = l_space
    parts = {"space": l_space.item(), "freq": 0.0, "phys": 0.0, "lambda": 0.0}

    lam = effective_lambda(cfg, epoch)
    if cfg.use_freq_loss:
        w = frequency_weights((H, W), cfg.alpha_radial)
        diff = _amplitude(torch.fft.fft2(pred)) - _amplitude(torch.fft.fft2(target))
        l_freq = torch.mean(torch.sum(w * diff**2, dim=(-2, -1))) / (H * W)
        parts["freq"] = l_freq.item()
        parts["lambda"] = lam
        if lam > 0:
            total = total + lam * l_freq

    if cfg.mu_phys > 0:
        l_phys = torch.mean((pred.mean(dim=(-2, -1)) - target.mean(dim=(-2, -1))) ** 2)
        parts["phys"] = l_phys.item()
        total = total + cfg.mu_phys * l_phys

    if level_weight != 1.0:
        total = level_weight * total
    return total, parts


def _pairs(ds):
    data = np.asarray(ds.data, dtype=np.float64)
    n_traj, n_snap, H, W = data.shape
    if n_snap < 2:
        raise DataValidityError("trajectories need at least two snapshots to form pairs")
    inputs = data[:, :-1].reshape(-1, H, W)
    targets = data[:, 1:].reshape(-1, H, W)
    return torch.from_numpy(inputs), torch.from_numpy(targets)


def _validation_loss(model, inputs, targets, cfg, batch_size, dtype):
    model.eval()
    total = 0.0
    with torch.no_grad():
        for start in range(0, len(inputs), batch_size):
            x = encode_batch(inputs[start:start + batch_size], cfg, dtype)
            pred = model(x).to(torch.float64)
            total += float(torch.sum((pred - targets[start:start + batch_size]) ** 2))
    model.train()
    return total / targets.numel()


def train(ds, mode, cfg, train_cfg=None, model_cfg=None, dtype=torch.float32):
    """Trains a predictor on one-step pairs and returns the best checkpoint.

    ``ds`` is the dataset at the training resolution rho0. Baseline mode trains
    on rho0 pairs with L_space only and zeroed PE channels.
    """
    if mode not in MODES:
        raise UsageError(f"unknown training mode '{mode}'")
    train_cfg = TrainConfig() if train_cfg is None else train_cfg
    cfg = cfg.as_baseline() if mode == "baseline" else cfg
    rho0 = ds.resolution[0]
    cfg.validate(rho0)
    ds.validate()

    model_cfg = PredictorConfig() if model_cfg is None else model_cfg
    model_cfg = replace(model_cfg, in_channels=cfg.in_channels)

    train_idx, val_idx, _ = split_indices(ds.n_traj)
    train_ds = ds.subset(train_idx)
    levels = build_multires_dataset(train_ds, cfg) if cfg.use_multires else {0: train_ds}
    level_pairs = {j: _pairs(levels[j]) for j in sorted(levels)}
    val_inputs, val_targets = _pairs(ds.subset(val_idx))

    torch.manual_seed(train_cfg.seed)
    model = make_predictor(model_cfg, seed=train_cfg.seed, dtype=dtype)
    optimizer = make_optimizer(model, train_cfg.optimizer)

    pair_rng = np.random.default_rng(train_cfg.seed)
    level_rng = np.random.default_rng([train_cfg.seed, 1])
    sampling = np.array(cfg.level_sampling)
    n0 = len(level_pairs[0][0])
    batch_size = train_cfg.batch_size
    n_batches = math.ceil(n0 / batch_size)

    logging.info(
        f"Training {mode} predictor at {rho0}x{rho0}: {n0} pairs, "
        f"levels {[levels[j].resolution[0] for j in sorted(levels)]}"
    )

    best_val = math.inf
    best_state = copy.deepcopy(model.state_dict())
    best_epoch = 0
    wait = 0
    history = {"train_loss": [], "val_space": []}

    model.train()
    epochs = tqdm(range(train_cfg.epochs), disable=not train_cfg.show_progress)
    for epoch in epochs:
        perms = {j: pair_rng.permutation(len(level_pairs[j][0])) for j in sorted(level_pairs)}
        cursors = {j: 0 for j in perms}
        epoch_loss = 0.0

        for step in range(n_batches):
            j = 0
            if cfg.use_multires and cfg.levels > 1:
                j = int(level_rng.choice(cfg.levels, p=sampling))
            idx = np.take(perms[j], range(cursors[j], cursors[j] + batch_size), mode="wrap")
            cursors[j] += batch_size
            inputs, targets = level_pairs[j]

            optimizer.zero_grad()
            pred = model(encode_batch(inputs[idx], cfg, dtype))
            total, parts = loss(pred, targets[idx], cfg, epoch, cfg.level_weights[j])
            if not torch.isfinite(total):
                raise TrainingError(
                    f"training diverged at epoch {epoch} step {step} (loss {total.item()})",
                    epoch=epoch,
                    step=step,
                )
            backward(model, total)
            optimizer_step(model, optimizer, train_cfg.optimizer.max_norm)
            epoch_loss += total.item()

        val = _validation_loss(model, val_inputs, val_targets, cfg, 64, dtype)
        history["train_loss"].append(epoch_loss / n_batches)
        history["val_space"].append(val)
        logging.debug(
            f"epoch {epoch}: train loss {epoch_loss / n_batches:.6e}, val L_space {val:.6e}"
        )

        if val < best_val:
            best_val = val
            best_state = copy.deepcopy(model.state_dict())
            best_epoch = epoch
            wait = 0
        else:
            wait += 1
            if wait >= train_cfg.patience:
                logging.info(f"Early stopping at epoch {epoch} (best epoch {best_epoch})")
                break

    model.load_state_dict(best_state)
    logging.info(f"Best validation L_space {best_val:.6e} at epoch {best_epoch}")

    metadata = {
        "mode": mode,
        "train_res": rho0,
        "epoch": best_epoch,
        "epochs_run": len(history["val_space"]),
        "seed": train_cfg.seed,
        "dt_snapshot": ds.dt_snapshot,
        "frl": cfg.to_dict(),
        "history": history,
    }
    return checkpoint_from_model(model, metadata)


class Forecaster:
    """Numpy-in/numpy-out one-step predictor.

    Checkpoints trained with the frequency encoding run directly on any grid, with
    the PE rebuilt for it. Without the encoding a network only knows the grid
    spacing it was trained on, so under ``deploy="auto"`` it sees a finer grid
    through its training grid: the input is low-pass downsampled to ``train_res``,
    stepped, and spectrally upsampled back. ``"direct"`` and ``"training-grid"``
    force either path.
    """

    def __init__(self, ckpt, cfg=None, dtype=torch.float32, deploy="auto"):
        if deploy not in DEPLOY_MODES:
            raise UsageError(f"unknown deployment '{deploy}', expected one of {DEPLOY_MODES}")
        self.train_res = None
        if isinstance(ckpt, PredictorCheckpoint):
            self.model = build_predictor(ckpt, dtype)
            self.cfg = cfg or FrlConfig.from_dict(ckpt.metadata.get("frl", {}))
            self.train_res = ckpt.metadata.get("train_res")
        else:
            self.model = ckpt.eval()
            self.cfg = cfg or FrlConfig()
        if deploy == "training-grid" and self.train_res is None:
            raise UsageError("training-grid deployment needs a checkpoint with a training resolution")
        self.deploy = deploy
        self.dtype = dtype

    def deploy_factor(self, shape):
        """Downsampling factor between a grid of ``shape`` and the grid the network sees."""
        H, W = shape
        if self.deploy == "direct" or self.train_res is None:
            return 1
        if self.deploy == "auto" and self.cfg.use_freq_enc:
            return 1
        rho0 = int(self.train_res)
        if H <= rho0 and W <= rho0:
            return 1
        if H != W or H % rho0 != 0:
            raise ShapeError(
                f"{H}x{W} grid cannot be deployed through the {rho0}x{rho0} training grid"
            )
        return H // rho0

    def step(self, u):
        u = np.asarray(u, dtype=np.float64)
        single = u.ndim == 2
        batch = u[None] if single else u
        factor = self.deploy_factor(batch.shape[-2:])
        if factor > 1:
            batch = np.stack([downsample_lowpass(b, factor) for b in batch])
        with torch.no_grad():
            out = self.model(encode_batch(batch, self.cfg, self.dtype))
        out = out.to(torch.float64).numpy()
        if factor > 1:
            out = np.stack([upsample_spectral(o, factor) for o in out])
        return out[0] if single else out

    __call__ = step

    def rollout(self, u0, n_steps):
        states = []
        u = np.asarray(u0, dtype=np.float64)
        for step in range(n_steps):
            u = self.step(u)
            if not np.all(np.isfinite(u)) or np.max(np.abs(u)) > DIVERGENCE_LIMIT:
                raise RolloutDivergenceError(f"rollout diverged at step {step}", step=step)
            states.append(u)
        return states


def predict_rollout(ckpt, u0, n_steps, cfg=None, deploy="auto"):
    """Zero-shot rollout at the resolution of ``u0``; returns predictions only."""
    u0 = check_field(u0, "u0")
    return Forecaster(ckpt, cfg, deploy=deploy).rollout(u0, int(n_steps))
