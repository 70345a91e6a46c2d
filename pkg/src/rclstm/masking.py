"""Oracle masks (IBM, IRM, SMM, CRM), tanh bounding of the CRM, and mask application."""

from dataclasses import dataclass

import numpy as np

from rclstm.dsp import ComplexSpectrogram
from rclstm.errors import ContractError, InputError

# Default denominator floor, as a fraction of the utterance's peak |X|.
RELATIVE_FLOOR = 1e-8
DEFAULT_CLIP = 0.999


@dataclass
class ComplexMask:
    values: np.ndarray
    bounded: bool = False

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.complex128)
        if not np.all(np.isfinite(self.values)):
            raise InputError("mask contains non-finite values")

    @property
    def shape(self):
        return self.values.shape


@dataclass
class RealMask:
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)

    @property
    def shape(self):
        return self.values.shape


def _check_pair(a, b):
    if a.shape != b.shape:
        raise InputError(f"shape mismatch: {a.shape} vs {b.shape}")


def absolute_floor(noisy, relative=RELATIVE_FLOOR):
    """Turn a floor relative to the peak noisy magnitude into an absolute one."""
    peak = float(np.max(np.abs(noisy.values))) if noisy.values.size else 0.0
    return relative * peak


def crm(clean, noisy, floor=None):
    """Complex ratio mask S/X, with |X|^2 floored at ``floor**2``.

    ``floor=None`` uses ``RELATIVE_FLOOR`` times the peak |X| of ``noisy``.
    """
    _check_pair(clean, noisy)
    if floor is None:
        floor = absolute_floor(noisy)
    s, x = clean.values, noisy.values
    xr, xi = x.real, x.imag
    sr, si = s.real, s.imag
    denom = np.maximum(xr**2 + xi**2, floor**2)
    num_r = xr * sr + xi * si
    num_i = xr * si - xi * sr
    safe = denom > 0
    mr = np.divide(num_r, denom, out=np.zeros_like(num_r), where=safe)
    mi = np.divide(num_i, denom, out=np.zeros_like(num_i), where=safe)
    return ComplexMask(mr + 1j * mi, bounded=False)


def bound_mask(mask):
    """Compress real and imaginary parts separately with tanh."""
    if mask.bounded:
        raise ContractError("mask is already bounded")
    v = mask.values
    return ComplexMask(np.tanh(v.real) + 1j * np.tanh(v.imag), bounded=True)


def unbound_mask(mask, clip=DEFAULT_CLIP):
    """Inverse of :func:`bound_mask`; components are clamped to ``[-clip, clip]`` first."""
    if not mask.bounded:
        raise ContractError("mask is not bounded")
    if not 0.0 < clip < 1.0:
        raise InputError(f"clip must lie in (0, 1), got {clip}")
    v = mask.values
    re = np.arctanh(np.clip(v.real, -clip, clip))
    im = np.arctanh(np.clip(v.imag, -clip, clip))
    return ComplexMask(re + 1j * im, bounded=False)


def apply_mask(mask, noisy):
    """Elementwise product of a mask with the noisy spectrogram.

    Complex masks must be unbounded; real masks scale magnitude and keep the noisy phase.
    """
    _check_pair(mask, noisy)
    if isinstance(mask, ComplexMask) and mask.bounded:
        raise ContractError("apply_mask expects an unbounded mask; call unbound_mask first")
    return ComplexSpectrogram(mask.values * noisy.values, noisy.config)


def ibm(clean, noise):
    """1 where |S|^2 > |V|^2, else 0 (ties are suppressed)."""
    _check_pair(clean, noise)
    ps = np.abs(clean.values) ** 2
    pv = np.abs(noise.values) ** 2
    return RealMask((ps > pv).astype(np.float64))


def irm(clean, noise):
    _check_pair(clean, noise)
    ps = np.abs(clean.values) ** 2
    pv = np.abs(noise.values) ** 2
    total = ps + pv
    ratio = np.divide(ps, total, out=np.zeros_like(ps), where=total > 0)
    return RealMask(np.sqrt(ratio))


def smm(clean, noisy, floor=None):
    """|S| / max(|X|, floor); unbounded above."""
    _check_pair(clean, noisy)
    if floor is None:
        floor = absolute_floor(noisy)
    mag_s = np.abs(clean.values)
    mag_x = np.maximum(np.abs(noisy.values), floor)
    return RealMask(np.divide(mag_s, mag_x, out=np.zeros_like(mag_s), where=mag_x > 0))
