"""Time/frequency conversion: Hann framing, real FFT, STFT and weighted overlap-add."""

from dataclasses import dataclass, field

import numpy as np

from rclstm.errors import ConfigurationError, InputError

# Synthesis positions whose summed squared window falls below this fraction of
# its maximum are left at zero (only the first/last few samples of a signal).
WOLA_FLOOR = 1e-3


def _is_power_of_two(n):
    return n >= 1 and (n & (n - 1)) == 0


@dataclass
class Waveform:
    """Mono real-valued audio."""

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1:
            raise InputError(f"waveform must be 1-D, got shape {self.samples.shape}")
        if self.sample_rate <= 0:
            raise ConfigurationError(f"sample_rate must be positive, got {self.sample_rate}")
        if not np.all(np.isfinite(self.samples)):
            raise InputError("waveform contains non-finite samples")

    def __len__(self):
        return len(self.samples)


@dataclass(frozen=True)
class StftConfig:
    frame_size: int = 512
    hop_size: int = 256
    window: str = "hann"

    def __post_init__(self):
        if self.frame_size < 2 or not _is_power_of_two(self.frame_size):
            raise ConfigurationError(f"frame_size must be a power of two >= 2, got {self.frame_size}")
        if not 0 < self.hop_size <= self.frame_size:
            raise ConfigurationError(
                f"hop_size must be in (0, frame_size={self.frame_size}], got {self.hop_size}"
            )
        if self.window != "hann":
            raise ConfigurationError(f"unsupported window {self.window!r}")

    @property
    def num_bins(self):
        return self.frame_size // 2 + 1


@dataclass
class ComplexSpectrogram:
    """N frames by K non-negative frequency bins."""

    values: np.ndarray
    config: StftConfig = field(default_factory=StftConfig)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.complex128)
        if self.values.ndim != 2 or self.values.shape[1] != self.config.num_bins:
            raise InputError(
                f"spectrogram shape {self.values.shape} does not match "
                f"{self.config.num_bins} bins for frame_size {self.config.frame_size}"
            )
        if not np.all(np.isfinite(self.values)):
            raise InputError("spectrogram contains non-finite values")

    @property
    def num_frames(self):
        return self.values.shape[0]

    @property
    def num_bins(self):
        return self.values.shape[1]

    @property
    def shape(self):
        return self.values.shape


def hann_window(frame_size):
    """Periodic Hann window ``0.5 * (1 - cos(2 pi m / frame_size))``."""
    if frame_size < 2 or not _is_power_of_two(frame_size):
        raise ConfigurationError(f"window size must be a power of two >= 2, got {frame_size}")
    m = np.arange(frame_size)
    return 0.5 * (1.0 - np.cos(2.0 * np.pi * m / frame_size))


def fft_forward(frame):
    """Non-negative-frequency half (L/2 + 1 bins) of the L-point DFT of a real frame.

    Works on the last axis, so a stack of frames can be transformed at once.
    """
    frame = np.asarray(frame, dtype=np.float64)
    n = frame.shape[-1]
    if not _is_power_of_two(n):
        raise ConfigurationError(f"FFT length must be a power of two, got {n}")
    return np.fft.rfft(frame, axis=-1)


def fft_inverse(bins):
    """Real frame of length L from its L/2 + 1 non-negative bins (Hermitian extension).

    The imaginary parts of the DC and Nyquist bins are dropped so the output is real.
    """
    bins = np.array(bins, dtype=np.complex128)
    k = bins.shape[-1]
    n = 2 * (k - 1)
    if k < 2 or not _is_power_of_two(n):
        raise ConfigurationError(f"{k} bins do not correspond to a power-of-two frame")
    bins[..., 0] = bins[..., 0].real
    bins[..., -1] = bins[..., -1].real
    return np.fft.irfft(bins, n=n, axis=-1)


def _frames(samples, config):
    n_frames = (len(samples) - config.frame_size) // config.hop_size + 1
    starts = np.arange(n_frames) * config.hop_size
    idx = starts[:, None] + np.arange(config.frame_size)[None, :]
    return samples[idx]


def stft(wave, config=None):
    """Short-time Fourier transform without edge padding.

    Frame ``n`` covers samples ``[n*hop, n*hop + frame_size)``.
    """
    config = config or StftConfig()
    samples = wave.samples if isinstance(wave, Waveform) else np.asarray(wave, dtype=np.float64)
    if len(samples) < config.frame_size:
        raise InputError(
            f"signal of {len(samples)} samples is shorter than one frame ({config.frame_size})"
        )
    frames = _frames(samples, config) * hann_window(config.frame_size)
    return ComplexSpectrogram(fft_forward(frames), config)


def istft(spec, sample_rate=16000, length=None):
    """Weighted overlap-add resynthesis.

    Each inverse-transformed frame is multiplied by the analysis window again and
    the sum is divided by the summed squared window. If ``length`` is given the
    output is zero-padded or truncated to it.
    """
    cfg = spec.config
    n_frames = spec.num_frames
    if n_frames == 0:
        raise InputError("cannot invert a spectrogram with zero frames")
    window = hann_window(cfg.frame_size)
    frames = fft_inverse(spec.values) * window
    total = (n_frames - 1) * cfg.hop_size + cfg.frame_size
    out = np.zeros(total)
    norm = np.zeros(total)
    w2 = window**2
    for n in range(n_frames):
        start = n * cfg.hop_size
        out[start:start + cfg.frame_size] += frames[n]
        norm[start:start + cfg.frame_size] += w2
    valid = norm > WOLA_FLOOR * norm.max()
    out[valid] /= norm[valid]
    out[~valid] = 0.0
    if length is not None:
        if length <= total:
            out = out[:length]
        else:
            out = np.concatenate([out, np.zeros(length - total)])
    return Waveform(out, sample_rate)
