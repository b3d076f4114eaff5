"""Resolution-agnostic convolutional predictor, optimisation step and checkpoints.

The predictor is fully convolutional with circular padding, so the same
parameters run on any grid and commute with periodic shifts. It only reads the
grid size through tensor shapes.
"""

import json
import struct
import logging
from collections import OrderedDict
from dataclasses import dataclass, asdict, field

import numpy as np
import torch
import torch.nn as nn

from .errors import (
    ShapeError,
    UsageError,
    TrainingError,
    FormatError,
    UnsupportedVersionError,
    ConfigMismatchError,
    DataValidityError,
)

CHECKPOINT_MAGIC = b"SACK"
CHECKPOINT_VERSION = 1

ACTIVATIONS = {"tanh": nn.Tanh, "gelu": nn.GELU, "silu": nn.SiLU}


@dataclass
class PredictorConfig:
    in_channels: int = 33
    hidden_channels: int = 32
    n_blocks: int = 4
    kernel: int = 3
    activation: str = "tanh"
    residual: bool = True

    def validate(self):
        if self.kernel % 2 != 1:
            raise DataValidityError(f"kernel size must be odd, got {self.kernel}")
        if self.activation not in ACTIVATIONS:
            raise DataValidityError(f"unknown activation '{self.activation}'")
        if min(self.in_channels, self.hidden_channels) < 1 or self.n_blocks < 0:
            raise DataValidityError("channel counts must be positive")
        return self

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


@dataclass
class OptimizerConfig:
    lr: float = 1e-3
    weight_decay: float = 1e-5
    betas: tuple = (0.9, 0.999)
    eps: float = 1e-8
    max_norm: float = 1.0


@dataclass
class PredictorCheckpoint:
    state: OrderedDict
    config: PredictorConfig
    metadata: dict = field(default_factory=dict)


def _conv(in_channels, out_channels, kernel):
    return nn.Conv2d(
        in_channels, out_channels, kernel, padding=kernel // 2, padding_mode="circular"
    )


class Predictor(nn.Module):
    """Lift, residual tanh conv blocks, 1x1 projection; optional residual output.

    Input ``(B, C, H, W)`` with the field in channel 0, output ``(B, H, W)``.
    """

    def __init__(self, config):
        super().__init__()
        self.config = config.validate()
        k = config.kernel
        self.lift = _conv(config.in_channels, config.hidden_channels, k)
        self.blocks = nn.ModuleList(
            [_conv(config.hidden_channels, config.hidden_channels, k) for _ in range(config.n_blocks)]
        )
        self.project = nn.Conv2d(config.hidden_channels, 1, 1)
        self.activation = ACTIVATIONS[config.activation]()

    def reset_parameters(self, seed):
        gen = torch.Generator().manual_seed(int(seed))
        with torch.no_grad():
            for conv in [self.lift] + list(self.blocks):
                fan_in = conv.weight[0].numel()
                std = nn.init.calculate_gain("tanh") / np.sqrt(fan_in)
                conv.weight.copy_(torch.randn(conv.weight.shape, generator=gen) * std)
                conv.bias.zero_()
            # start at the identity map
            self.project.weight.zero_()
            self.project.bias.zero_()
        return self

    def forward(self, x):
        if x.ndim != 4 or x.shape[1] != self.config.in_channels:
            raise ShapeError(
                f"expected input of shape (B, {self.config.in_channels}, H, W), got {tuple(x.shape)}"
            )
        h = self.activation(self.lift(x))
        for block in self.blocks:
            h = h + self.activation(block(h))
        out = self.project(h)[:, 0]
        if self.config.residual:
            out = out + x[:, 0]
        return out


def make_predictor(config, seed=42, dtype=torch.float32):
    return Predictor(config).reset_parameters(seed).to(dtype)


def backward(model, loss):
    """Runs reverse mode on a recorded loss and returns the gradients by name."""
    if not isinstance(loss, torch.Tensor) or loss.grad_fn is None:
        raise UsageError("backward called without a recorded forward pass")
    loss.backward()
    return OrderedDict(
        (name, p.grad.detach().clone() if p.grad is not None else torch.zeros_like(p))
        for name, p in model.named_parameters()
    )


def make_optimizer(model, cfg=None):
    cfg = OptimizerConfig() if cfg is None else cfg
    return torch.optim.AdamW(
        model.parameters(),
        lr=cfg.lr,
        betas=tuple(cfg.betas),
        eps=cfg.eps,
        weight_decay=cfg.weight_decay,
    )


def optimizer_step(model, optimizer, max_norm=1.0):
    """Global-norm clipping followed by a decoupled weight decay AdamW update."""
    for name, p in model.named_parameters():
        if p.grad is not None and not torch.isfinite(p.grad).all():
            raise TrainingError(f"non-finite gradient in parameter '{name}'", parameter=name)
    norm = torch.nn.utils.clip_grad_norm_(model.parameters(), max_norm)
    optimizer.step()
    return float(norm)


def checkpoint_from_model(model, metadata=None):
    state = OrderedDict(
        (name, t.detach().cpu().numpy().astype(np.float32))
        for name, t in model.state_dict().items()
    )
    return PredictorCheckpoint(state, model.config, dict(metadata or {}))


def build_predictor(ckpt, dtype=torch.float32):
    model = Predictor(ckpt.config)
    try:
        model.load_state_dict(
            OrderedDict((k, torch.from_numpy(np.array(v))) for k, v in ckpt.state.items())
        )
    except RuntimeError as e:
        raise ConfigMismatchError(f"checkpoint tensors do not match the declared config: {e}")
    return model.to(dtype).eval()


def save_checkpoint(ckpt, path):
    blob = json.dumps(
        {"config": ckpt.config.to_dict(), "metadata": ckpt.metadata}, sort_keys=True
    ).encode("utf8")

    with open(path, "wb") as outfile:
        outfile.write(struct.pack("<4sH", CHECKPOINT_MAGIC, CHECKPOINT_VERSION))
        outfile.write(struct.pack("<I", len(blob)))
        outfile.write(blob)
        outfile.write(struct.pack("<I", len(ckpt.state)))
        for name, tensor in ckpt.state.items():
            tensor = np.asarray(tensor, dtype="<f4")
            if not np.all(np.isfinite(tensor)):
                raise DataValidityError(f"tensor '{name}' contains non-finite values")
            encoded = name.encode("utf8")
            outfile.write(struct.pack("<H", len(encoded)))
            outfile.write(encoded)
            outfile.write(struct.pack("<I", tensor.ndim))
            outfile.write(struct.pack(f"<{tensor.ndim}I", *tensor.shape))
            outfile.write(np.ascontiguousarray(tensor).tobytes())

    return path


class _Reader:
    def __init__(self, buf):
        self.buf = buf
        self.offset = 0

    def unpack(self, fmt, what):
        size = struct.calcsize(fmt)
        if self.offset + size > len(self.buf):
            raise FormatError(f"truncated checkpoint reading {what}", offset=self.offset)
        values = struct.unpack_from(fmt, self.buf, self.offset)
        self.offset += size
        return values

    def take(self, n, what):
        if self.offset + n > len(self.buf):
            raise FormatError(f"truncated checkpoint reading {what}", offset=self.offset)
        out = self.buf[self.offset:self.offset + n]
        self.offset += n
        return out


def load_checkpoint(path, expected_config=None):
    try:
        with open(path, "rb") as infile:
            reader = _Reader(infile.read())
    except OSError as e:
        raise FormatError(f"could not read checkpoint {path}: {e}")

    magic, version = reader.unpack("<4sH", "header")
    if magic != CHECKPOINT_MAGIC:
        raise FormatError(f"bad magic {magic!r}, not a checkpoint file", offset=0)
    if version != CHECKPOINT_VERSION:
        raise UnsupportedVersionError(f"unsupported checkpoint version {version}", offset=4)

    (blob_len,) = reader.unpack("<I", "config length")
    blob_offset = reader.offset
    try:
        header = json.loads(reader.take(blob_len, "config").decode("utf8"))
        config = PredictorConfig.from_dict(header["config"])
        metadata = header.get("metadata", {})
    except (ValueError, TypeError, KeyError) as e:
        raise FormatError(f"invalid config blob: {e}", offset=blob_offset)

    (n_tensors,) = reader.unpack("<I", "tensor count")
    state = OrderedDict()
    for _ in range(n_tensors):
        (name_len,) = reader.unpack("<H", "tensor name length")
        name = reader.take(name_len, "tensor name").decode("utf8")
        (rank,) = reader.unpack("<I", f"rank of '{name}'")
        dims = reader.unpack(f"<{rank}I", f"dims of '{name}'")
        count = int(np.prod(dims)) if rank > 0 else 1
        data = reader.take(4 * count, f"data of '{name}'")
        state[name] = np.frombuffer(data, dtype="<f4").reshape(dims).astype(np.float32)
        if not np.all(np.isfinite(state[name])):
            raise DataValidityError(f"tensor '{name}' contains non-finite values")
    if reader.offset != len(reader.buf):
        raise FormatError("trailing bytes after last tensor", offset=reader.offset)

    if expected_config is not None and expected_config != config:
        raise ConfigMismatchError(
            f"checkpoint config {config} does not match expected {expected_config}"
        )

    expected = Predictor(config).state_dict()
    if list(expected) != list(state) or any(
        tuple(expected[k].shape) != state[k].shape for k in state
    ):
        raise ConfigMismatchError(
            "checkpoint tensors do not match the architecture of the declared config"
        )

    logging.debug(f"Loaded checkpoint {path} with {n_tensors} tensors")
    return PredictorCheckpoint(state, config, metadata)
