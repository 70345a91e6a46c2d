"""WAV I/O, SNR-controlled mixing, a synthetic harmonic corpus, and training-example extraction."""

import csv
import wave
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from rclstm.dsp import StftConfig, Waveform, stft
from rclstm.errors import AudioIOError, ConfigurationError, InputError
from rclstm.masking import RELATIVE_FLOOR, bound_mask, crm

PCM_SCALE = 32768.0
TRAIN_SNRS = (0.0, 5.0, 10.0, 15.0)
MANIFEST_FIELDS = ("id", "clean", "noisy", "snr_db")


@dataclass
class Utterance:
    clean: Waveform
    noisy: Waveform
    noise: Waveform | None = None
    id: str = ""

    def __post_init__(self):
        parts = [self.clean, self.noisy] + ([self.noise] if self.noise is not None else [])
        if len({len(w) for w in parts}) != 1 or len({w.sample_rate for w in parts}) != 1:
            raise InputError(f"utterance {self.id!r}: components differ in length or sample rate")


@dataclass
class TrainingExample:
    context: np.ndarray  # (2r+1, K) complex, normalized noisy STFT
    target: np.ndarray   # (K,) complex bounded CRM of the centre frame
    utterance_id: str
    frame_index: int


# ---------------------------------------------------------------------------
# WAV
# ---------------------------------------------------------------------------

def read_wav(path, expected_rate=None):
    """Decode a 16-bit mono PCM WAV to floats in [-1, 1)."""
    path = Path(path)
    try:
        with wave.open(str(path), "rb") as w:
            channels, width, rate = w.getnchannels(), w.getsampwidth(), w.getframerate()
            raw = w.readframes(w.getnframes())
    except (OSError, EOFError, wave.Error) as exc:
        raise AudioIOError(f"{path}: cannot read WAV ({exc})") from exc
    if channels != 1:
        raise AudioIOError(f"{path}: {channels} channels, only mono is supported")
    if width != 2:
        raise AudioIOError(f"{path}: {8 * width}-bit samples, only 16-bit PCM is supported")
    data = np.frombuffer(raw, dtype="<i2")
    if data.size == 0:
        raise AudioIOError(f"{path}: WAV contains no samples")
    if expected_rate is not None and rate != expected_rate:
        raise ConfigurationError(f"{path}: sample rate {rate} Hz, expected {expected_rate} Hz")
    return Waveform(data.astype(np.float64) / PCM_SCALE, rate)


def to_pcm16(samples):
    """Clamp to [-1, 1 - 2**-15], scale by 32768 and round half away from zero."""
    x = np.clip(np.asarray(samples, dtype=np.float64), -1.0, 1.0 - 1.0 / PCM_SCALE) * PCM_SCALE
    return (np.sign(x) * np.floor(np.abs(x) + 0.5)).astype("<i2")


def write_wav(wave_, path):
    path = Path(path)
    if not np.all(np.isfinite(wave_.samples)):
        raise InputError(f"{path}: refusing to write non-finite samples")
    try:
        with open(path, "wb") as fh, wave.open(fh, "wb") as w:
            w.setnchannels(1)
            w.setsampwidth(2)
            w.setframerate(int(wave_.sample_rate))
            w.writeframes(to_pcm16(wave_.samples).tobytes())
    except OSError as exc:
        raise AudioIOError(f"{path}: cannot write WAV ({exc})") from exc


# ---------------------------------------------------------------------------
# Mixing and synthetic data
# ---------------------------------------------------------------------------

def energy(x):
    return float(np.dot(x, x))


def mix_at_snr(clean, noise, snr_db, offset=0, utterance_id=""):
    """Scale ``noise[offset:offset+len(clean)]`` so the mixture has the requested SNR."""
    if clean.sample_rate != noise.sample_rate:
        raise InputError(f"sample rates differ: {clean.sample_rate} vs {noise.sample_rate}")
    n = len(clean)
    if offset < 0 or offset + n > len(noise):
        raise InputError(f"noise of {len(noise)} samples cannot cover {n} samples at offset {offset}")
    v = noise.samples[offset:offset + n]
    es, ev = energy(clean.samples), energy(v)
    if es == 0.0 or ev == 0.0:
        raise InputError("SNR is undefined for a silent clean or noise signal")
    gain = np.sqrt(es / (ev * 10.0 ** (snr_db / 10.0)))
    scaled = Waveform(gain * v, clean.sample_rate)
    noisy = Waveform(clean.samples + scaled.samples, clean.sample_rate)
    return Utterance(clean=clean, noisy=noisy, noise=scaled, id=utterance_id)


def measured_snr(utt):
    return 10.0 * np.log10(energy(utt.clean.samples) / energy(utt.noisy.samples - utt.clean.samples))


def synth_clean(rng, sample_rate, num_samples, f0_range=(110.0, 260.0)):
    """Sum of 2-4 harmonics of a random fundamental with slow amplitude envelopes."""
    t = np.arange(num_samples) / sample_rate
    f0 = rng.uniform(*f0_range)
    n_harm = int(rng.integers(2, 5))
    out = np.zeros(num_samples)
    for h in range(1, n_harm + 1):
        amp = rng.uniform(0.3, 1.0) / h
        env_rate = rng.uniform(1.0, 4.0)
        env = 0.6 + 0.4 * np.sin(2 * np.pi * env_rate * t + rng.uniform(0, 2 * np.pi))
        out += amp * env * np.sin(2 * np.pi * h * f0 * t + rng.uniform(0, 2 * np.pi))
    return 0.3 * out / np.max(np.abs(out)), f0, n_harm


def synth_noise(rng, num_samples, sample_rate):
    """White Gaussian noise, optionally amplitude-modulated by a slow sinusoid."""
    v = rng.normal(0.0, 1.0, num_samples)
    if rng.random() < 0.5:
        t = np.arange(num_samples) / sample_rate
        v *= 1.0 + 0.8 * np.sin(2 * np.pi * rng.uniform(0.5, 3.0) * t)
    return v


def synth_corpus(seed, count, sample_rate=16000, duration=2.0, snrs=TRAIN_SNRS):
    """Deterministic list of synthetic harmonic-plus-noise utterances."""
    if count < 1:
        raise InputError("count must be at least 1")
    rng = np.random.default_rng(seed)
    n = int(round(duration * sample_rate))
    corpus = []
    for k in range(count):
        clean, _, _ = synth_clean(rng, sample_rate, n)
        noise = synth_noise(rng, n, sample_rate)
        snr = float(snrs[int(rng.integers(len(snrs)))])
        corpus.append(mix_at_snr(Waveform(clean, sample_rate), Waveform(noise, sample_rate), snr,
                                 utterance_id=f"synth{seed}_{k:03d}_snr{snr:g}"))
    return corpus


# ---------------------------------------------------------------------------
# Examples
# ---------------------------------------------------------------------------

def context_windows(values, radius):
    """(N, 2r+1, K) windows centred on each frame, zero-padded at the edges."""
    n, k = values.shape
    padded = np.zeros((n + 2 * radius, k), dtype=values.dtype)
    padded[radius:radius + n] = values
    idx = np.arange(n)[:, None] + np.arange(2 * radius + 1)[None, :]
    return padded[idx]


def normalized_features(noisy_spec):
    """Noisy STFT divided by its peak magnitude, plus that peak."""
    peak = float(np.max(np.abs(noisy_spec.values)))
    if peak == 0.0:
        return noisy_spec.values.copy(), 1.0
    return noisy_spec.values / peak, peak


def example_arrays(utt, stft_config=None, context_radius=10, mask_floor=RELATIVE_FLOOR):
    """(contexts, targets) arrays for every frame of an utterance."""
    cfg = stft_config or StftConfig()
    if len(utt.noisy) < cfg.frame_size:
        raise InputError(f"utterance {utt.id!r} is shorter than one frame ({cfg.frame_size} samples)")
    x = stft(utt.noisy, cfg)
    s = stft(utt.clean, cfg)
    feats, peak = normalized_features(x)
    target = bound_mask(crm(s, x, floor=mask_floor * peak)).values
    return context_windows(feats, context_radius), target


def make_examples(utt, stft_config=None, context_radius=10, mask_floor=RELATIVE_FLOOR):
    contexts, targets = example_arrays(utt, stft_config, context_radius, mask_floor)
    return [TrainingExample(contexts[n], targets[n], utt.id, n) for n in range(len(targets))]


def corpus_arrays(utterances, stft_config=None, context_radius=10, mask_floor=RELATIVE_FLOOR):
    """Concatenated (contexts, targets) for a list of utterances."""
    parts = [example_arrays(u, stft_config, context_radius, mask_floor) for u in utterances]
    if not parts:
        raise InputError("no utterances given")
    return np.concatenate([p[0] for p in parts]), np.concatenate([p[1] for p in parts])


# ---------------------------------------------------------------------------
# Manifests
# ---------------------------------------------------------------------------

def write_manifest(rows, path):
    """CSV with columns id, clean, noisy, snr_db (plus any extra keys present in rows)."""
    path = Path(path)
    extra = [k for k in (rows[0].keys() if rows else []) if k not in MANIFEST_FIELDS]
    try:
        with open(path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=list(MANIFEST_FIELDS) + extra)
            writer.writeheader()
            for row in rows:
                writer.writerow(row)
    except OSError as exc:
        raise AudioIOError(f"{path}: cannot write manifest ({exc})") from exc


def read_manifest(path):
    """Rows of a manifest; relative paths are resolved against the manifest's directory."""
    path = Path(path)
    try:
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
    except OSError as exc:
        raise AudioIOError(f"{path}: cannot read manifest ({exc})") from exc
    for row in rows:
        for key in ("clean", "noisy", "reference", "estimate"):
            if row.get(key):
                p = Path(row[key])
                row[key] = str(p if p.is_absolute() else path.parent / p)
    return rows


def load_utterances(manifest_path, expected_rate=None):
    utts = []
    for row in read_manifest(manifest_path):
        clean = read_wav(row["clean"], expected_rate)
        noisy = read_wav(row["noisy"], expected_rate)
        utts.append(Utterance(clean=clean, noisy=noisy, id=row["id"]))
    return utts
