"""End-to-end enhancement: network-estimated and oracle masks applied to a noisy waveform."""

import numpy as np

from rclstm.dataset import context_windows, normalized_features
from rclstm.dsp import StftConfig, istft, stft
from rclstm.errors import ConfigurationError, InputError
from rclstm.masking import (
    DEFAULT_CLIP,
    ComplexMask,
    apply_mask,
    bound_mask,
    crm,
    ibm,
    irm,
    smm,
    unbound_mask,
)
from rclstm.neuralnet import predict

MASK_TYPES = ("ibm", "irm", "smm", "crm", "crm-bounded")


def enhance(net, noisy, stft_config=None, context_radius=10, clip=DEFAULT_CLIP, batch_size=256):
    """Estimate the bounded mask frame by frame, unbound it, apply it and resynthesise.

    The mask is scale invariant, so it is applied to the unnormalised noisy STFT.
    The output has the same length as the input.
    """
    cfg = stft_config or StftConfig()
    if net.num_bins != cfg.num_bins:
        raise ConfigurationError(
            f"network expects {net.num_bins} bins but frame_size {cfg.frame_size} gives {cfg.num_bins}"
        )
    x = stft(noisy, cfg)
    feats, _ = normalized_features(x)
    bounded = predict(net, context_windows(feats, context_radius), batch_size=batch_size)
    mask = unbound_mask(ComplexMask(bounded, bounded=True), clip)
    return istft(apply_mask(mask, x), noisy.sample_rate, length=len(noisy))


def oracle_mask(kind, clean_spec, noisy_spec, clip=DEFAULT_CLIP):
    """Oracle mask of the given kind, ready for :func:`apply_mask`."""
    if kind == "crm":
        return crm(clean_spec, noisy_spec)
    if kind == "crm-bounded":
        return unbound_mask(bound_mask(crm(clean_spec, noisy_spec)), clip)
    if kind == "smm":
        return smm(clean_spec, noisy_spec)
    noise_spec = type(noisy_spec)(noisy_spec.values - clean_spec.values, noisy_spec.config)
    if kind == "ibm":
        return ibm(clean_spec, noise_spec)
    if kind == "irm":
        return irm(clean_spec, noise_spec)
    raise ConfigurationError(f"unknown mask type {kind!r}; choose from {', '.join(MASK_TYPES)}")


def oracle_enhance(clean, noisy, kind, stft_config=None, clip=DEFAULT_CLIP):
    if len(clean) != len(noisy):
        raise InputError(f"clean has {len(clean)} samples but noisy has {len(noisy)}")
    cfg = stft_config or StftConfig()
    s, x = stft(clean, cfg), stft(noisy, cfg)
    mask = oracle_mask(kind, s, x, clip)
    return istft(apply_mask(mask, x), noisy.sample_rate, length=len(noisy))


def noisy_vs_enhanced(clean, noisy, enhanced, metric):
    """Metric of the noisy input and of the enhanced output against the clean reference."""
    return metric(clean, noisy), metric(clean, enhanced)


def interior(samples, frame_size):
    return np.asarray(samples)[frame_size:len(samples) - frame_size]
