"""Field and spectral algebra on periodic 2D grids.

A grid field is a real ``(H, W)`` numpy array sampling the periodic unit square:
row ``i`` is ``y = i / H`` and column ``j`` is ``x = j / W``. Wavenumbers are
integer cycles per unit length, ``k_x`` along axis 1 and ``k_y`` along axis 0.

FFT convention: unnormalized forward transform, ``1 / (H * W)`` on the inverse,
so Parseval reads ``sum(u**2) / (H*W) == sum(|u_hat|**2) / (H*W)**2``.
"""

from collections import namedtuple
from dataclasses import dataclass

import numpy as np
from scipy import fft as spfft

from .errors import DataValidityError, ShapeError, SpectralIntegrityError

HERMITIAN_TOL = 1e-8

RadialPSD = namedtuple("RadialPSD", ["xi", "power", "mode_count", "dc"])


@dataclass(frozen=True)
class Spectrum2D:
    coeffs: np.ndarray

    @property
    def resolution(self):
        return self.coeffs.shape

    @property
    def nyquist(self):
        return min(self.coeffs.shape) / 2


def check_field(field, name="field"):
    field = np.asarray(field, dtype=np.float64)
    if field.ndim != 2:
        raise ShapeError(f"{name} must be a 2D array, got shape {field.shape}")
    H, W = field.shape
    if H < 4 or W < 4:
        raise ShapeError(f"{name} must be at least 4x4, got {H}x{W}")
    if H % 2 != 0 or W % 2 != 0:
        raise ShapeError(f"{name} must have even dimensions, got {H}x{W}")
    if not np.all(np.isfinite(field)):
        raise DataValidityError(f"{name} contains non-finite values")
    return field


def nyquist(shape):
    return min(shape[-2:]) / 2


def wavenumbers(shape):
    """Integer wavenumber grids ``(k_y, k_x)`` in the two-sided FFT layout."""
    H, W = shape[-2:]
    ky = np.fft.fftfreq(H, d=1.0 / H)
    kx = np.fft.fftfreq(W, d=1.0 / W)
    return np.meshgrid(ky, kx, indexing="ij")


def radial_wavenumber(shape):
    ky, kx = wavenumbers(shape)
    return np.sqrt(kx**2 + ky**2)


def fft2(field):
    field = check_field(field)
    return Spectrum2D(spfft.fft2(field))


def hermitian_flip(coeffs):
    # coeffs[(-i) % H, (-j) % W]
    return np.roll(np.flip(coeffs, axis=(-2, -1)), 1, axis=(-2, -1))


def ifft2(spec):
    coeffs = np.asarray(spec.coeffs if isinstance(spec, Spectrum2D) else spec)
    if coeffs.ndim != 2:
        raise ShapeError(f"spectrum must be 2D, got shape {coeffs.shape}")

    mirror = np.conj(hermitian_flip(coeffs))
    asymmetry = np.max(np.abs(coeffs - mirror))
    scale = max(1.0, float(np.max(np.abs(coeffs))))
    if asymmetry > HERMITIAN_TOL * scale:
        raise SpectralIntegrityError(
            f"spectrum is not Hermitian symmetric (max asymmetry {asymmetry:.3e})"
        )

    field = spfft.ifft2(0.5 * (coeffs + mirror))
    return np.ascontiguousarray(field.real)


def _crop_axis(coeffs, n_out):
    # keep |k| < n_out / 2 along axis 0, new Nyquist stays empty
    n_in = coeffs.shape[0]
    h = n_out // 2
    out = np.zeros((n_out,) + coeffs.shape[1:], dtype=coeffs.dtype)
    out[:h] = coeffs[:h]
    out[n_out - (h - 1):] = coeffs[n_in - (h - 1):]
    return out


def _pad_axis(coeffs, n_out):
    n_in = coeffs.shape[0]
    h = n_in // 2
    out = np.zeros((n_out,) + coeffs.shape[1:], dtype=coeffs.dtype)
    out[:h] = coeffs[:h]
    out[n_out - (h - 1):] = coeffs[h + 1:]
    # split the old Nyquist mode between +h and -h
    out[h] = 0.5 * coeffs[h]
    out[n_out - h] += 0.5 * coeffs[h]
    return out


def _resample_spectrum(coeffs, shape_out, axis_op):
    H, W = coeffs.shape
    H2, W2 = shape_out
    c = axis_op(coeffs, H2)
    c = np.moveaxis(axis_op(np.moveaxis(c, 1, 0), W2), 0, 1)
    return c * (H2 * W2) / (H * W)


def downsample_lowpass(field, factor):
    """Low-pass downsampling by frequency center-crop.

    Retained coefficients are rescaled by ``(H'*W') / (H*W)`` so a retained sine
    keeps its real-space amplitude; everything at or above the new Nyquist is
    removed.
    """
    field = check_field(field)
    factor = int(factor)
    if factor < 1:
        raise ShapeError(f"downsample factor must be a positive integer, got {factor}")
    H, W = field.shape
    if H % factor != 0 or W % factor != 0:
        raise ShapeError(f"{H}x{W} grid is not divisible by factor {factor}")
    H2, W2 = H // factor, W // factor
    if H2 < 4 or W2 < 4 or H2 % 2 != 0 or W2 % 2 != 0:
        raise ShapeError(
            f"downsampling {H}x{W} by {factor} gives invalid grid {H2}x{W2}"
        )
    if factor == 1:
        return field.copy()

    coeffs = _resample_spectrum(spfft.fft2(field), (H2, W2), _crop_axis)
    return np.ascontiguousarray(spfft.ifft2(coeffs).real)


def upsample_spectral(field, factor):
    """Spectral interpolation onto a finer grid by zero-padding the spectrum."""
    field = check_field(field)
    factor = int(factor)
    if factor < 1:
        raise ShapeError(f"upsample factor must be a positive integer, got {factor}")
    if factor == 1:
        return field.copy()
    H, W = field.shape
    coeffs = _resample_spectrum(
        spfft.fft2(field), (H * factor, W * factor), _pad_axis
    )
    return np.ascontiguousarray(spfft.ifft2(coeffs).real)


def lowpass_radial(field, cutoff):
    """Keeps modes with ``sqrt(k_x**2 + k_y**2) < cutoff``."""
    field = check_field(field)
    mask = radial_wavenumber(field.shape) < cutoff
    if mask.all():
        return field.copy()
    coeffs = spfft.fft2(field) * mask
    return np.ascontiguousarray(spfft.ifft2(coeffs).real)


def rmse(a, b):
    return float(np.sqrt(np.mean((np.asarray(a) - np.asarray(b)) ** 2)))


def band_split(field_pred, field_true, cutoff):
    """Returns ``(low_err, wide_err)``: RMSE below a radial cutoff and over all modes."""
    field_pred = check_field(field_pred, "field_pred")
    field_true = check_field(field_true, "field_true")
    if field_pred.shape != field_true.shape:
        raise ShapeError(
            f"resolution mismatch: {field_pred.shape} vs {field_true.shape}"
        )
    if not cutoff > 0:
        raise DataValidityError(f"cutoff must be positive, got {cutoff}")

    diff = field_pred - field_true
    wide_err = float(np.sqrt(np.mean(diff**2)))
    if (radial_wavenumber(diff.shape) < cutoff).all():
        return wide_err, wide_err
    low_err = float(np.sqrt(np.mean(lowpass_radial(diff, cutoff) ** 2)))

    return low_err, wide_err


def spectral_power(field):
    """Per-mode power ``|u_hat|**2 / (H*W)**2``; sums to the mean square of the field."""
    field = check_field(field)
    H, W = field.shape
    return np.abs(spfft.fft2(field)) ** 2 / (H * W) ** 2


def psd_radial(field, n_bins):
    """Radially binned power spectrum on normalized frequency ``xi = |k| / k_Nyq``.

    Bins cover ``[0, xi_max]`` where ``xi_max`` is the largest radial frequency on
    the grid (corner modes exceed 1), so the binned total equals the total non-DC
    power. The DC power is returned separately.
    """
    if int(n_bins) < 2:
        raise DataValidityError(f"n_bins must be >= 2, got {n_bins}")
    power = spectral_power(field)
    xi = radial_wavenumber(power.shape) / nyquist(power.shape)

    dc = float(power[0, 0])
    keep = xi > 0
    edges = np.linspace(0.0, xi.max(), int(n_bins) + 1)
    binned, _ = np.histogram(xi[keep], bins=edges, weights=power[keep])
    counts, _ = np.histogram(xi[keep], bins=edges)
    centers = 0.5 * (edges[:-1] + edges[1:])

    return RadialPSD(centers, binned, counts, dc)
