import csv
import json

import numpy as np
import pytest

from rclstm.checkpoint import load_checkpoint, save_checkpoint
from rclstm.cli import format_table, main
from rclstm.dataset import read_manifest, read_wav, synth_corpus, write_manifest, write_wav
from rclstm.dsp import StftConfig, Waveform, stft
from rclstm.enhance import oracle_enhance, oracle_mask
from rclstm.metrics import global_snr, ssnr
from rclstm.neuralnet import RclstmNetworkParams

SMALL = ["--frame-size", "128", "--hop", "64", "--context-radius", "2", "--layer1-units", "4"]


@pytest.fixture
def corpus_dir(tmp_path):
    assert main(["synth", "--out-dir", str(tmp_path / "src"), "--count", "2", "--duration", "0.5"]) == 0
    return tmp_path / "src"


@pytest.fixture
def mixed(tmp_path, corpus_dir):
    noise_dir = tmp_path / "one_noise"
    noise_dir.mkdir()
    (noise_dir / "n.wav").write_bytes((corpus_dir / "noise" / "noise_000.wav").read_bytes())
    out = tmp_path / "mix"
    rc = main(["mix", "--clean-dir", str(corpus_dir / "clean"), "--noise-dir", str(noise_dir),
               "--snrs", "0,5", "--out-dir", str(out), "--seed", "3"])
    assert rc == 0
    return out


class TestMix:
    def test_cartesian_count(self, mixed):
        rows = read_manifest(mixed / "manifest.csv")
        assert len(rows) == 4
        assert len(list((mixed / "noisy").glob("*.wav"))) == 4
        assert sorted(r["snr_db"] for r in rows) == ["0", "0", "5", "5"]

    def test_measured_snr(self, mixed):
        for row in read_manifest(mixed / "manifest.csv"):
            got = global_snr(read_wav(row["clean"]), read_wav(row["noisy"]))
            assert abs(got - float(row["measured_snr_db"])) < 1e-6
            # 16-bit quantisation of the mixture is the only source of drift
            assert abs(got - float(row["snr_db"])) < 1e-3

    def test_deterministic(self, tmp_path, corpus_dir):
        clean = tmp_path / "clean"
        clean.mkdir()
        write_wav(Waveform(read_wav(corpus_dir / "clean" / "clean_000.wav").samples[:2000], 16000),
                  clean / "c.wav")
        manifests = []
        for run in ("a", "b"):
            main(["mix", "--clean-dir", str(clean), "--noise-dir", str(corpus_dir / "noise"),
                  "--snrs", "0", "--out-dir", str(tmp_path / run), "--seed", "9"])
            manifests.append([r["noise_offset"] for r in read_manifest(tmp_path / run / "manifest.csv")])
        assert manifests[0] == manifests[1]
        assert any(o != "0" for o in manifests[0])

    def test_rate_mismatch(self, tmp_path, corpus_dir):
        noise = tmp_path / "n48"
        noise.mkdir()
        write_wav(Waveform(np.ones(20000) * 0.1, 48000), noise / "n.wav")
        rc = main(["mix", "--clean-dir", str(corpus_dir / "clean"), "--noise-dir", str(noise),
                   "--out-dir", str(tmp_path / "o")])
        assert rc == 6

    def test_empty_dir(self, tmp_path, corpus_dir):
        (tmp_path / "empty").mkdir()
        rc = main(["mix", "--clean-dir", str(tmp_path / "empty"), "--noise-dir", str(corpus_dir / "noise"),
                   "--out-dir", str(tmp_path / "o")])
        assert rc == 6


class TestTrain:
    def test_zero_epochs_is_init(self, tmp_path, mixed):
        ck = tmp_path / "c.ckpt"
        assert main(["train", "--manifest", str(mixed / "manifest.csv"), "--checkpoint", str(ck),
                     "--epochs", "0", "--seed", "4"] + SMALL) == 0
        net, header = load_checkpoint(ck)
        init = RclstmNetworkParams.initialize(65, 4, seed=4)
        for a, b in zip(net.arrays(), init.arrays()):
            np.testing.assert_array_equal(a, b)
        assert header["context_radius"] == 2 and header["frame_size"] == 128

    def test_history_files(self, tmp_path, mixed, capsys):
        ck = tmp_path / "c.ckpt"
        assert main(["train", "--manifest", str(mixed / "manifest.csv"), "--checkpoint", str(ck),
                     "--epochs", "2", "--history", str(tmp_path / "hist")] + SMALL) == 0
        rows = list(csv.DictReader(open(tmp_path / "hist.csv")))
        assert [r["epoch"] for r in rows] == ["1", "2"]
        text = (tmp_path / "hist.txt").read_text().splitlines()
        assert text[0].split() == ["epoch", "loss"] and len(text) == 3
        assert "epoch    2" in capsys.readouterr().out

    def test_config_file_and_flag_precedence(self, tmp_path, mixed):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"frame_size": 128, "hop": 64, "layer1_units": 3, "epochs": 0,
                                   "context_radius": 1}))
        ck = tmp_path / "c.ckpt"
        assert main(["train", "--manifest", str(mixed / "manifest.csv"), "--checkpoint", str(ck),
                     "--config", str(cfg), "--layer1-units", "5"]) == 0
        _, header = load_checkpoint(ck)
        assert header["layer1_units"] == 5 and header["context_radius"] == 1

    def test_bad_config_key(self, tmp_path, mixed):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"nope": 1}))
        assert main(["train", "--manifest", str(mixed / "manifest.csv"), "--checkpoint",
                     str(tmp_path / "c"), "--config", str(cfg)]) == 3

    def test_missing_manifest(self, tmp_path):
        assert main(["train", "--manifest", str(tmp_path / "none.csv"), "--checkpoint", str(tmp_path / "c")]) == 6


class TestEnhance:
    def test_zero_checkpoint_is_silent(self, tmp_path, mixed):
        net = RclstmNetworkParams.zeros(65, 4)
        save_checkpoint(tmp_path / "z.ckpt", net, {"frame_size": 128, "hop_size": 64, "context_radius": 2,
                                                   "sample_rate": 16000})
        noisy = read_manifest(mixed / "manifest.csv")[0]["noisy"]
        assert main(["enhance", "--checkpoint", str(tmp_path / "z.ckpt"), "--input", noisy,
                     "--output", str(tmp_path / "o.wav")]) == 0
        out, inp = read_wav(tmp_path / "o.wav"), read_wav(noisy)
        assert not out.samples.any()
        assert abs(len(out) - len(inp)) < 128

    def test_dim_mismatch(self, tmp_path, mixed):
        save_checkpoint(tmp_path / "z.ckpt", RclstmNetworkParams.zeros(65, 4),
                        {"frame_size": 128, "hop_size": 64, "context_radius": 2, "sample_rate": 16000})
        noisy = read_manifest(mixed / "manifest.csv")[0]["noisy"]
        rc = main(["enhance", "--checkpoint", str(tmp_path / "z.ckpt"), "--input", noisy,
                   "--output", str(tmp_path / "o.wav"), "--frame-size", "256"])
        assert rc == 3

    def test_trained_round_trip(self, tmp_path, mixed):
        ck = tmp_path / "c.ckpt"
        main(["train", "--manifest", str(mixed / "manifest.csv"), "--checkpoint", str(ck), "--epochs", "1"]
             + SMALL)
        noisy = read_manifest(mixed / "manifest.csv")[0]["noisy"]
        assert main(["enhance", "--checkpoint", str(ck), "--input", noisy, "--output", str(tmp_path / "e.wav")]) == 0
        assert len(read_wav(tmp_path / "e.wav")) == len(read_wav(noisy))


class TestOracle:
    def test_crm_recovers_clean(self, tmp_path, mixed):
        row = read_manifest(mixed / "manifest.csv")[0]
        assert main(["oracle-enhance", "--clean", row["clean"], "--noisy", row["noisy"], "--mask", "crm",
                     "--output", str(tmp_path / "o.wav")]) == 0
        out, clean = read_wav(tmp_path / "o.wav").samples, read_wav(row["clean"]).samples
        np.testing.assert_allclose(out[512:-512], clean[512:-512], atol=1e-6)

    @pytest.mark.parametrize("kind", ["ibm", "irm", "smm"])
    def test_real_masks_keep_noisy_phase(self, kind):
        utt = synth_corpus(5, 1, duration=0.5)[0]
        s, x = stft(utt.clean), stft(utt.noisy)
        mask = oracle_mask(kind, s, x)
        assert np.isrealobj(mask.values)
        out = mask.values * x.values
        keep = np.abs(out) > 1e-9
        np.testing.assert_allclose(np.angle(out[keep]), np.angle(x.values[keep]), atol=1e-9)

    def test_ssnr_ordering(self):
        for utt in synth_corpus(11, 4):
            noisy = ssnr(utt.clean, utt.noisy)
            irm_ = ssnr(utt.clean, oracle_enhance(utt.clean, utt.noisy, "irm"))
            crm_ = ssnr(utt.clean, oracle_enhance(utt.clean, utt.noisy, "crm"))
            assert crm_ >= irm_ >= noisy

    def test_length_mismatch(self, tmp_path):
        write_wav(Waveform(np.ones(1000) * 0.1, 16000), tmp_path / "a.wav")
        write_wav(Waveform(np.ones(1200) * 0.1, 16000), tmp_path / "b.wav")
        rc = main(["oracle-enhance", "--clean", str(tmp_path / "a.wav"), "--noisy", str(tmp_path / "b.wav"),
                   "--output", str(tmp_path / "o.wav")])
        assert rc == 4


class TestEvaluate:
    def test_identical_pairs(self, tmp_path, mixed, capsys):
        rows = read_manifest(mixed / "manifest.csv")
        pairs = [{"id": r["id"], "clean": r["clean"], "noisy": r["clean"], "snr_db": ""} for r in rows]
        write_manifest(pairs, tmp_path / "p.csv")
        assert main(["evaluate", "--manifest", str(tmp_path / "p.csv"), "--csv", str(tmp_path / "t.csv")]) == 0
        table = list(csv.DictReader(open(tmp_path / "t.csv")))
        assert [float(r["ssnr_db"]) for r in table] == [35.0] * 5
        assert table[-1]["id"] == "mean"
        assert "ssnr_db" in capsys.readouterr().out

    def test_mean_row_and_order(self, tmp_path, mixed):
        main(["evaluate", "--manifest", str(mixed / "manifest.csv"), "--csv", str(tmp_path / "t.csv")])
        table = list(csv.DictReader(open(tmp_path / "t.csv")))
        ids = [r["id"] for r in table[:-1]]
        assert ids == sorted(ids)
        for col in ("ssnr_db", "global_snr_db", "lsd_db"):
            vals = [float(r[col]) for r in table[:-1]]
            assert abs(float(table[-1][col]) - np.mean(vals)) < 1e-12

    def test_empty_manifest(self, tmp_path, capsys):
        write_manifest([], tmp_path / "e.csv")
        assert main(["evaluate", "--manifest", str(tmp_path / "e.csv")]) == 0
        out = capsys.readouterr().out.strip().splitlines()
        assert out == ["id  ssnr_db  global_snr_db  lsd_db"]

    def test_missing_file(self, tmp_path, capsys):
        write_manifest([{"id": "x", "clean": "gone.wav", "noisy": "gone2.wav", "snr_db": "0"}],
                       tmp_path / "m.csv")
        assert main(["evaluate", "--manifest", str(tmp_path / "m.csv")]) == 6
        assert "gone.wav" in capsys.readouterr().err


class TestGradcheck:
    def test_passes(self, capsys):
        assert main(["gradcheck", "--seed", "5"]) == 0
        out = capsys.readouterr().out
        assert "PASS" in out
        worst = float(out.split("worst relative error:")[1].split()[0])
        assert worst < 1e-4

    def test_zero_residual(self, capsys):
        assert main(["gradcheck", "--zero-residual"]) == 0
        assert "max |analytic grad|:  0.000000e+00" in capsys.readouterr().out

    def test_deterministic(self, capsys):
        main(["gradcheck", "--seed", "2"])
        a = capsys.readouterr().out
        main(["gradcheck", "--seed", "2"])
        assert capsys.readouterr().out == a


def test_format_table_alignment():
    text = format_table(("id", "x"), [("a", 1.0), ("long_id", 22.5)])
    lines = text.splitlines()
    assert len({len(line) for line in lines}) == 1
