import tempfile

import numpy as np
import pytest
import torch

from scaleanchor.model import (
    PredictorConfig,
    OptimizerConfig,
    make_predictor,
    make_optimizer,
    optimizer_step,
    backward,
    checkpoint_from_model,
    build_predictor,
    save_checkpoint,
    load_checkpoint,
)
from scaleanchor.frl import FrlConfig, encode_batch, loss
from scaleanchor.errors import (
    ShapeError,
    UsageError,
    TrainingError,
    FormatError,
    UnsupportedVersionError,
    ConfigMismatchError,
)

SMALL = PredictorConfig(in_channels=5, hidden_channels=4, n_blocks=1)


def randomised(config, seed=0, dtype=torch.float64):
    model = make_predictor(config, seed=seed, dtype=dtype)
    gen = torch.Generator().manual_seed(seed + 1)
    with torch.no_grad():
        model.project.weight.copy_(0.5 * torch.randn(model.project.weight.shape, generator=gen))
        model.project.bias.fill_(0.1)
    return model


def test_fresh_predictor_is_identity():
    model = make_predictor(SMALL, dtype=torch.float64)
    x = torch.randn(2, 5, 16, 16, dtype=torch.float64)
    assert torch.equal(model(x), x[:, 0])

    return


def test_predictor_is_translation_equivariant():
    model = randomised(SMALL)
    x = torch.randn(1, 5, 16, 16, dtype=torch.float64)
    shifted = model(torch.roll(x, shifts=(3, 5), dims=(-2, -1)))
    assert torch.max(torch.abs(shifted - torch.roll(model(x), shifts=(3, 5), dims=(-2, -1)))) < 1e-12

    return


def test_predictor_runs_at_any_resolution():
    model = randomised(SMALL)
    for n in (8, 16, 32):
        assert model(torch.zeros(1, 5, n, n, dtype=torch.float64)).shape == (1, n, n)
    with pytest.raises(ShapeError):
        model(torch.zeros(1, 3, 8, 8, dtype=torch.float64))

    return


def test_gradients_match_finite_differences():
    cfg = FrlConfig(n_freq=1, lam=0.5, warmup_epochs=0, mu_phys=0.2)
    model = randomised(SMALL)
    rng = np.random.default_rng(0)
    u = rng.standard_normal((2, 16, 16))
    target = torch.from_numpy(rng.standard_normal((2, 16, 16)))
    x = encode_batch(u, cfg, torch.float64)

    def objective():
        return loss(model(x), target, cfg, epoch=0)[0]

    model.zero_grad()
    grads = backward(model, objective())

    checked = 0
    eps = 1e-6
    for name, p in model.named_parameters():
        flat = p.data.view(-1)
        for i in range(min(6, flat.numel())):
            old = flat[i].item()
            with torch.no_grad():
                flat[i] = old + eps
                plus = objective().item()
                flat[i] = old - eps
                minus = objective().item()
                flat[i] = old
            fd = (plus - minus) / (2 * eps)
            analytic = grads[name].view(-1)[i].item()
            assert abs(fd - analytic) <= 1e-4 * max(abs(fd), abs(analytic), 1e-3)
            checked += 1
    assert checked >= 20

    return


def test_backward_needs_a_forward_pass():
    model = make_predictor(SMALL)
    with pytest.raises(UsageError):
        backward(model, torch.tensor(1.0))

    return


def test_adamw_first_step():
    model = randomised(SMALL)
    opt_cfg = OptimizerConfig(lr=1e-2, weight_decay=0.1)
    optimizer = make_optimizer(model, opt_cfg)
    before = {n: p.detach().clone() for n, p in model.named_parameters()}

    g = 1e-3
    for p in model.parameters():
        p.grad = torch.full_like(p, g)
    optimizer_step(model, optimizer, opt_cfg.max_norm)

    for n, p in model.named_parameters():
        expected = before[n] * (1 - opt_cfg.lr * opt_cfg.weight_decay) - opt_cfg.lr * g / (g + opt_cfg.eps)
        assert torch.max(torch.abs(p.detach() - expected)) < 1e-12

    return


def test_zero_gradients_leave_parameters_unchanged():
    model = randomised(SMALL)
    opt_cfg = OptimizerConfig(weight_decay=0.0)
    optimizer = make_optimizer(model, opt_cfg)
    before = {n: p.detach().clone() for n, p in model.named_parameters()}

    for _ in range(3):
        for p in model.parameters():
            p.grad = torch.zeros_like(p)
        assert optimizer_step(model, optimizer, opt_cfg.max_norm) == 0.0

    for n, p in model.named_parameters():
        assert torch.equal(p.detach(), before[n])

    return


def test_gradient_clipping():
    model = randomised(SMALL)
    optimizer = make_optimizer(model)
    n_params = sum(p.numel() for p in model.parameters())
    for p in model.parameters():
        p.grad = torch.full_like(p, 10.0)

    norm = optimizer_step(model, optimizer, max_norm=1.0)
    assert abs(norm - 10.0 * np.sqrt(n_params)) < 1e-6 * norm
    clipped = np.sqrt(sum(float(torch.sum(p.grad**2)) for p in model.parameters()))
    assert abs(clipped - 1.0) < 1e-6

    return


def test_non_finite_gradient_names_parameter():
    model = randomised(SMALL)
    optimizer = make_optimizer(model)
    for p in model.parameters():
        p.grad = torch.zeros_like(p)
    model.lift.weight.grad[0, 0, 0, 0] = float("nan")

    with pytest.raises(TrainingError) as excinfo:
        optimizer_step(model, optimizer)
    assert excinfo.value.parameter == "lift.weight"

    return


def test_checkpoint_roundtrip():
    model = randomised(SMALL, dtype=torch.float32)
    ckpt = checkpoint_from_model(model, {"train_res": 16, "mode": "frl"})

    with tempfile.TemporaryDirectory() as tmpoutdir:
        path = tmpoutdir + "/model.ckpt"
        save_checkpoint(ckpt, path)
        back = load_checkpoint(path, expected_config=SMALL)

    assert back.config == SMALL
    assert back.metadata == {"train_res": 16, "mode": "frl"}
    assert list(back.state) == list(ckpt.state)
    for name in ckpt.state:
        assert np.array_equal(back.state[name], ckpt.state[name])

    x = torch.randn(1, 5, 8, 8)
    with torch.no_grad():
        assert torch.equal(build_predictor(back)(x), model(x))

    return


def test_checkpoint_format_errors():
    ckpt = checkpoint_from_model(make_predictor(SMALL))

    with tempfile.TemporaryDirectory() as tmpoutdir:
        path = tmpoutdir + "/model.ckpt"
        save_checkpoint(ckpt, path)
        with open(path, "rb") as infile:
            buf = infile.read()

        with pytest.raises(ConfigMismatchError):
            load_checkpoint(path, expected_config=PredictorConfig(in_channels=5, hidden_channels=8))

        def check(content, error, match):
            with open(path, "wb") as outfile:
                outfile.write(content)
            with pytest.raises(error, match=match):
                load_checkpoint(path)

        check(b"XXXX" + buf[4:], FormatError, "offset 0")
        check(buf[:4] + b"\x07\x00" + buf[6:], UnsupportedVersionError, "offset 4")
        check(buf[:-3], FormatError, "truncated")
        check(buf + b"\x00", FormatError, "trailing")

    return
