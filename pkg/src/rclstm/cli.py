"""Command-line interface: synth, mix, train, enhance, oracle-enhance, evaluate, gradcheck."""

import argparse
import csv
import io
import json
import logging
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from rclstm import dataset, metrics
from rclstm.checkpoint import load_checkpoint, save_checkpoint
from rclstm.dsp import StftConfig, Waveform
from rclstm.enhance import MASK_TYPES, enhance, oracle_enhance
from rclstm.errors import AudioIOError, ConfigurationError, InputError, NumericalError, RclstmError
from rclstm.gradcheck import check_gradients, tiny_problem
from rclstm.masking import DEFAULT_CLIP
from rclstm.neuralnet import RclstmNetworkParams, TrainConfig, train

log = logging.getLogger("rclstm")

DEFAULTS = {
    "frame_size": 512,
    "hop": 256,
    "context_radius": 10,
    "layer1_units": 64,
    "layer2_units": None,
    "seed": 0,
    "epochs": 10,
    "batch_size": 32,
    "lr": 1e-3,
    "sample_rate": 16000,
    "clip_norm": 5.0,
}


# ---------------------------------------------------------------------------
# Output helpers
# ---------------------------------------------------------------------------

def format_table(header, rows):
    """Plain aligned-column text; floats are printed with 4 decimals."""
    cells = [list(header)] + [[f"{v:.4f}" if isinstance(v, float) else str(v) for v in r] for r in rows]
    widths = [max(len(r[i]) for r in cells) for i in range(len(header))]
    lines = ["  ".join(c.ljust(w) if i == 0 else c.rjust(w) for i, (c, w) in enumerate(zip(r, widths)))
             for r in cells]
    return "\n".join(line.rstrip() for line in lines) + "\n"


def format_csv(header, rows):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for r in rows:
        writer.writerow([repr(v) if isinstance(v, float) else v for v in r])
    return buf.getvalue()


def _write_text(path, text):
    try:
        Path(path).write_text(text)
    except OSError as exc:
        raise AudioIOError(f"{path}: cannot write ({exc})") from exc


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------

def resolve(args):
    """Merge built-in defaults, an optional JSON config file, and explicit flags (flags win)."""
    settings = dict(DEFAULTS)
    if getattr(args, "config", None):
        try:
            loaded = json.loads(Path(args.config).read_text())
        except OSError as exc:
            raise AudioIOError(f"{args.config}: cannot read config ({exc})") from exc
        except ValueError as exc:
            raise ConfigurationError(f"{args.config}: invalid JSON ({exc})") from exc
        unknown = set(loaded) - set(DEFAULTS)
        if unknown:
            raise ConfigurationError(f"{args.config}: unknown keys {sorted(unknown)}")
        settings.update(loaded)
    for key in DEFAULTS:
        value = getattr(args, key, None)
        if value is not None:
            settings[key] = value
    return settings


def stft_config(settings):
    return StftConfig(settings["frame_size"], settings["hop"])


def train_config(settings):
    return TrainConfig(
        epochs=settings["epochs"],
        batch_size=settings["batch_size"],
        learning_rate=settings["lr"],
        context_radius=settings["context_radius"],
        seed=settings["seed"],
        clip_norm=settings["clip_norm"],
    )


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def _wav_files(directory):
    d = Path(directory)
    if not d.is_dir():
        raise AudioIOError(f"{d}: not a directory")
    files = sorted(d.glob("*.wav"))
    if not files:
        raise AudioIOError(f"{d}: no .wav files found")
    return files


def cmd_synth(args):
    s = resolve(args)
    out = Path(args.out_dir)
    (out / "clean").mkdir(parents=True, exist_ok=True)
    (out / "noise").mkdir(parents=True, exist_ok=True)
    corpus = dataset.synth_corpus(s["seed"], args.count, s["sample_rate"], args.duration)
    for k, utt in enumerate(corpus):
        dataset.write_wav(utt.clean, out / "clean" / f"clean_{k:03d}.wav")
        # Peak 0.5 leaves 16-bit headroom; mix rescales noise to the requested SNR anyway.
        noise = utt.noise.samples / np.max(np.abs(utt.noise.samples)) * 0.5
        dataset.write_wav(Waveform(noise, utt.noise.sample_rate), out / "noise" / f"noise_{k:03d}.wav")
    print(f"wrote {len(corpus)} clean and {len(corpus)} noise files to {out}")
    return 0


def cmd_mix(args):
    s = resolve(args)
    rate = s["sample_rate"]
    out = Path(args.out_dir)
    (out / "noisy").mkdir(parents=True, exist_ok=True)
    snrs = [float(x) for x in args.snrs.split(",") if x.strip()]
    if not snrs:
        raise ConfigurationError("at least one SNR is required")
    cleans = _wav_files(args.clean_dir)
    noises = _wav_files(args.noise_dir)

    def load(path):
        w = dataset.read_wav(path)
        if w.sample_rate != rate:
            raise AudioIOError(f"{path}: sample rate {w.sample_rate} Hz, expected {rate} Hz")
        return w

    noise_waves = [(p, load(p)) for p in noises]
    rng = np.random.default_rng(s["seed"])
    rows = []
    for cpath in cleans:
        clean = load(cpath)
        for npath, noise in noise_waves:
            if len(noise) < len(clean):
                raise InputError(f"{npath}: noise shorter than {cpath}")
            for snr in snrs:
                offset = int(rng.integers(0, len(noise) - len(clean) + 1))
                uid = f"{cpath.stem}__{npath.stem}__snr{snr:g}"
                utt = dataset.mix_at_snr(clean, noise, snr, offset=offset, utterance_id=uid)
                if np.max(np.abs(utt.noisy.samples)) >= 1.0:
                    log.warning("%s clips at 16-bit full scale", uid)
                noisy_path = out / "noisy" / f"{uid}.wav"
                dataset.write_wav(utt.noisy, noisy_path)
                written = dataset.read_wav(noisy_path)
                rows.append({
                    "id": uid,
                    "clean": str(Path(cpath).resolve()),
                    "noisy": str(noisy_path.resolve()),
                    "snr_db": f"{snr:g}",
                    "measured_snr_db": repr(metrics.global_snr(clean, written)),
                    "noise_offset": str(offset),
                })
    manifest = out / "manifest.csv"
    dataset.write_manifest(rows, manifest)
    print(f"wrote {len(rows)} mixtures and {manifest}")
    return 0


def cmd_train(args):
    s = resolve(args)
    cfg = stft_config(s)
    tcfg = train_config(s)
    utts = dataset.load_utterances(args.manifest, expected_rate=s["sample_rate"])
    if not utts:
        raise InputError(f"{args.manifest}: manifest lists no utterances")
    net = RclstmNetworkParams.initialize(cfg.num_bins, s["layer1_units"], s["layer2_units"], seed=s["seed"])
    history = []
    if tcfg.epochs > 0:
        examples = dataset.corpus_arrays(utts, cfg, tcfg.context_radius)
        log.info("training on %d frames from %d utterances", len(examples[1]), len(utts))
        net, history = train(net, examples, tcfg)
    meta = {
        "frame_size": cfg.frame_size,
        "hop_size": cfg.hop_size,
        "window": cfg.window,
        "sample_rate": s["sample_rate"],
        "context_radius": tcfg.context_radius,
        "train": asdict(tcfg),
    }
    save_checkpoint(args.checkpoint, net, meta)
    rows = [(i + 1, v) for i, v in enumerate(history)]
    base = Path(args.history) if args.history else Path(str(args.checkpoint) + ".loss")
    _write_text(base.with_suffix(".txt"), format_table(("epoch", "loss"), rows))
    _write_text(base.with_suffix(".csv"), format_csv(("epoch", "loss"), rows))
    print(f"saved {args.checkpoint} ({net.num_parameters} parameters, {len(history)} epochs)")
    for epoch, value in rows:
        print(f"epoch {epoch:4d}  loss {value:.6f}")
    return 0


def cmd_enhance(args):
    net, header = load_checkpoint(args.checkpoint)
    cfg = StftConfig(header["frame_size"], header["hop_size"])
    if args.frame_size is not None and args.frame_size != cfg.frame_size:
        raise ConfigurationError(
            f"--frame-size {args.frame_size} conflicts with checkpoint frame size {cfg.frame_size}")
    if args.hop is not None and args.hop != cfg.hop_size:
        raise ConfigurationError(f"--hop {args.hop} conflicts with checkpoint hop {cfg.hop_size}")
    radius = header["context_radius"]
    if args.context_radius is not None and args.context_radius != radius:
        raise ConfigurationError(
            f"--context-radius {args.context_radius} conflicts with checkpoint radius {radius}")
    noisy = dataset.read_wav(args.input)
    if noisy.sample_rate != header.get("sample_rate", noisy.sample_rate):
        raise ConfigurationError(
            f"{args.input}: {noisy.sample_rate} Hz but checkpoint was trained at {header['sample_rate']} Hz")
    out = enhance(net, noisy, cfg, radius, clip=args.clip)
    dataset.write_wav(out, args.output)
    print(f"wrote {args.output}")
    return 0


def cmd_oracle_enhance(args):
    s = resolve(args)
    clean = dataset.read_wav(args.clean)
    noisy = dataset.read_wav(args.noisy)
    if clean.sample_rate != noisy.sample_rate:
        raise InputError("clean and noisy sample rates differ")
    out = oracle_enhance(clean, noisy, args.mask, stft_config(s), clip=args.clip)
    dataset.write_wav(out, args.output)
    print(f"wrote {args.output}")
    return 0


EVAL_HEADER = ("id", "ssnr_db", "global_snr_db", "lsd_db")


def evaluate_rows(manifest_rows, cfg):
    rows = []
    for row in sorted(manifest_rows, key=lambda r: r["id"]):
        ref_path = row.get("reference") or row.get("clean")
        est_path = row.get("estimate") or row.get("enhanced") or row.get("noisy")
        if not ref_path or not est_path:
            raise InputError(f"manifest row {row.get('id')!r} lacks reference/estimate columns")
        ref = dataset.read_wav(ref_path)
        est = dataset.read_wav(est_path)
        rows.append((row["id"], metrics.ssnr(ref, est), metrics.global_snr(ref, est),
                     metrics.log_spectral_distance(ref, est, cfg)))
    if rows:
        means = np.mean(np.array([r[1:] for r in rows], dtype=np.float64), axis=0)
        rows.append(("mean",) + tuple(float(m) for m in means))
    return rows


def cmd_evaluate(args):
    s = resolve(args)
    rows = evaluate_rows(dataset.read_manifest(args.manifest), stft_config(s))
    sys.stdout.write(format_table(EVAL_HEADER, rows))
    if args.csv:
        _write_text(args.csv, format_csv(EVAL_HEADER, rows))
    return 0


def cmd_gradcheck(args):
    s = resolve(args)
    net, contexts, targets = tiny_problem(
        seed=s["seed"], num_bins=args.bins, layer1_units=args.q1, layer2_units=args.q2,
        context_len=args.context_len, batch=args.batch, zero_residual=args.zero_residual)
    report = check_gradients(net, contexts, targets, delta=args.delta, tolerance=args.tolerance)
    print(f"parameters checked:   {report.num_parameters}")
    print(f"max |analytic grad|:  {report.max_abs_gradient:.6e}")
    print(f"worst relative error: {report.worst_relative_error:.6e} ({report.worst_parameter or '-'})")
    print("PASS" if report.passed else "FAIL")
    return 0 if report.passed else NumericalError.exit_code


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--frame-size", dest="frame_size", type=int)
    common.add_argument("--hop", type=int)
    common.add_argument("--context-radius", dest="context_radius", type=int)
    common.add_argument("--layer1-units", dest="layer1_units", type=int)
    common.add_argument("--layer2-units", dest="layer2_units", type=int,
                        help="defaults to the number of frequency bins")
    common.add_argument("--seed", type=int)
    common.add_argument("--epochs", type=int)
    common.add_argument("--batch-size", dest="batch_size", type=int)
    common.add_argument("--lr", type=float)
    common.add_argument("--sample-rate", dest="sample_rate", type=int)
    common.add_argument("--config", help="JSON file with any of the above settings")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="rclstm", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("synth", parents=[common], help="write a synthetic clean/noise corpus")
    sp.add_argument("--out-dir", required=True)
    sp.add_argument("--count", type=int, default=16)
    sp.add_argument("--duration", type=float, default=2.0)
    sp.set_defaults(func=cmd_synth)

    sp = sub.add_parser("mix", parents=[common], help="mix clean and noise WAVs at given SNRs")
    sp.add_argument("--clean-dir", required=True)
    sp.add_argument("--noise-dir", required=True)
    sp.add_argument("--snrs", default="0,5,10,15", help="comma-separated SNRs in dB")
    sp.add_argument("--out-dir", required=True)
    sp.set_defaults(func=cmd_mix)

    sp = sub.add_parser("train", parents=[common], help="train a network from a manifest")
    sp.add_argument("--manifest", required=True)
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--history", help="loss history path stem (.txt and .csv are written)")
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("enhance", parents=[common], help="enhance a noisy WAV with a checkpoint")
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--input", required=True)
    sp.add_argument("--output", required=True)
    sp.add_argument("--clip", type=float, default=DEFAULT_CLIP)
    sp.set_defaults(func=cmd_enhance)

    sp = sub.add_parser("oracle-enhance", parents=[common], help="apply an oracle mask")
    sp.add_argument("--clean", required=True)
    sp.add_argument("--noisy", required=True)
    sp.add_argument("--mask", choices=MASK_TYPES, default="crm")
    sp.add_argument("--output", required=True)
    sp.add_argument("--clip", type=float, default=DEFAULT_CLIP)
    sp.set_defaults(func=cmd_oracle_enhance)

    sp = sub.add_parser("evaluate", parents=[common], help="SSNR / SNR / LSD table for a manifest")
    sp.add_argument("--manifest", required=True)
    sp.add_argument("--csv", help="also write the table as CSV")
    sp.set_defaults(func=cmd_evaluate)

    sp = sub.add_parser("gradcheck", parents=[common], help="finite-difference gradient check")
    sp.add_argument("--bins", type=int, default=4)
    sp.add_argument("--q1", type=int, default=2)
    sp.add_argument("--q2", type=int, default=4)
    sp.add_argument("--context-len", dest="context_len", type=int, default=3)
    sp.add_argument("--batch", type=int, default=2)
    sp.add_argument("--delta", type=float, default=1e-5)
    sp.add_argument("--tolerance", type=float, default=1e-4)
    sp.add_argument("--zero-residual", dest="zero_residual", action="store_true")
    sp.set_defaults(func=cmd_gradcheck)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except RclstmError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
