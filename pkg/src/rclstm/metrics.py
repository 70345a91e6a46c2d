"""Objective quality measures: segmental SNR, global SNR and log-spectral distance."""

from dataclasses import dataclass

import numpy as np

from rclstm.dsp import StftConfig, Waveform, stft
from rclstm.errors import ConfigurationError, InputError

SNR_SENTINEL = 99.0
LSD_EPS = 1e-10


@dataclass(frozen=True)
class SsnrConfig:
    segment_length: int = 512
    overlap: float = 0.5
    clamp_min: float = -10.0
    clamp_max: float = 35.0

    def __post_init__(self):
        if self.segment_length <= 0 or not 0.0 <= self.overlap < 1.0 or self.clamp_min >= self.clamp_max:
            raise ConfigurationError(f"invalid segmental SNR config: {self}")

    @property
    def hop(self):
        return max(1, int(round(self.segment_length * (1.0 - self.overlap))))


def _samples(x):
    return x.samples if isinstance(x, Waveform) else np.asarray(x, dtype=np.float64)


def _pair(reference, estimate):
    ref, est = _samples(reference), _samples(estimate)
    if ref.shape != est.shape:
        raise InputError(f"length mismatch: {ref.shape[0]} vs {est.shape[0]} samples")
    if isinstance(reference, Waveform) and isinstance(estimate, Waveform) \
            and reference.sample_rate != estimate.sample_rate:
        raise InputError("sample rates differ")
    return ref, est


def ssnr(reference, estimate, config=None):
    """Mean clamped per-segment SNR in dB, skipping segments with silent reference."""
    config = config or SsnrConfig()
    ref, est = _pair(reference, estimate)
    seg = config.segment_length
    if len(ref) < seg:
        starts = [0]
    else:
        starts = range(0, len(ref) - seg + 1, config.hop)
    values = []
    for s in starts:
        r = ref[s:s + seg]
        e = r - est[s:s + seg]
        sig, err = float(np.dot(r, r)), float(np.dot(e, e))
        if sig == 0.0:
            continue
        db = config.clamp_max if err == 0.0 else 10.0 * np.log10(sig / err)
        values.append(min(max(db, config.clamp_min), config.clamp_max))
    if not values:
        raise InputError("reference is silent in every segment")
    return float(np.mean(values))


def global_snr(reference, estimate):
    """Whole-signal SNR in dB; 99 dB when the error energy is below 1e-20."""
    ref, est = _pair(reference, estimate)
    sig = float(np.dot(ref, ref))
    if sig == 0.0:
        raise InputError("reference is silent")
    e = ref - est
    err = float(np.dot(e, e))
    if err < 1e-20:
        return SNR_SENTINEL
    return float(10.0 * np.log10(sig / err))


def log_spectral_distance(reference, estimate, stft_config=None):
    """RMS over all TF bins of the dB magnitude ratio."""
    ref, est = _pair(reference, estimate)
    cfg = stft_config or StftConfig()
    a = np.maximum(np.abs(stft(ref, cfg).values), LSD_EPS)
    b = np.maximum(np.abs(stft(est, cfg).values), LSD_EPS)
    return float(np.sqrt(np.mean((20.0 * np.log10(a / b)) ** 2)))
