import json
import subprocess
import sys

import numpy as np
import pytest

from earhr import cli
from earhr.checkpoint import MAGIC
from earhr.errors import ConfigError
from earhr.hr import HrSeries

TINY = ["--unet_depth", "2", "--unet-base-filters", "4", "--train_epochs", "1",
        "--train_batch_size", "16", "--train_stride_s", "1"]


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    root = tmp_path_factory.mktemp("data")
    assert cli.main(["synth", str(root), "--subjects", "2", "--duration", "30",
                     "--activities", "stationary,walking", "--reference", "15"]) == 0
    return root


@pytest.fixture(scope="module")
def checkpoint(corpus, tmp_path_factory):
    path = tmp_path_factory.mktemp("ck") / "model.bin"
    log = path.with_suffix(".csv")
    assert cli.main(["train", str(corpus), "--out", str(path), "--loss-log", str(log)] + TINY) == 0
    return path


class TestConfigPrecedence:
    def test_split_forms(self):
        got = cli.split_overrides(["--hr-window-s", "8", "--method=sp", "--ma_window", "3"])
        assert got == {"hr_window_s": "8", "method": "sp", "ma_window": "3"}

    @pytest.mark.parametrize("extra", [["--gl_iters", "3", "--gl-iters", "4"], ["--method"],
                                       ["stray"]])
    def test_split_errors(self, extra):
        with pytest.raises(ConfigError):
            cli.split_overrides(extra)

    def test_cli_beats_file_beats_default(self, tmp_path):
        f = tmp_path / "c.cfg"
        f.write_text("hr_window_s = 12\nma_window = 3\n")
        cfg = cli.load_config(f, {"ma_window": "7"})
        assert cfg.hr_window_s == 12.0 and cfg.ma_window == 7 and cfg.gl_iters == 32

    def test_missing_config_file(self, tmp_path):
        with pytest.raises(ConfigError):
            cli.load_config(tmp_path / "none.cfg", {})


class TestExitCodes:
    def test_unknown_key(self, corpus, capsys):
        assert cli.main(["ingest-check", str(corpus), "--not_a_key", "1"]) == 2
        assert "not_a_key" in capsys.readouterr().err

    def test_dl_without_checkpoint(self, corpus):
        run = corpus / "subject_01" / "stationary"
        assert cli.main(["estimate", str(run), "--method", "dl"]) == 2

    def test_missing_data(self, tmp_path):
        assert cli.main(["ingest-check", str(tmp_path / "nope")]) == 3

    def test_console_script(self, tmp_path):
        p = subprocess.run([sys.executable, "-m", "earhr.cli", "ingest-check", str(tmp_path / "x")],
                           capture_output=True, text=True)
        assert p.returncode == 3 and p.stderr.startswith("error:")


class TestVerbs:
    def test_ingest_check(self, corpus, capsys):
        assert cli.main(["ingest-check", str(corpus)]) == 0
        rows = json.loads(capsys.readouterr().out)
        assert len(rows) == 4
        assert all(abs(r["audio_s"] - 30) < 0.15 and r["channels"] == 2 for r in rows)

    def test_spectrogram_dump(self, corpus, tmp_path):
        run = corpus / "subject_02" / "walking"
        assert cli.main(["spectrogram", "dump", str(run), "--out", str(tmp_path), "--window", "3",
                         "--all"]) == 0
        for name in ["02_walking_w3_audio0.csv", "02_walking_w3_audio1.csv", "02_walking_w3_ecg.csv"]:
            assert np.loadtxt(tmp_path / name, delimiter=",").shape == (64, 64)
        assert np.load(tmp_path / "02_walking_audio.npy").shape[1:] == (2, 64, 64)

    def test_spectrogram_window_out_of_range(self, corpus, tmp_path):
        run = corpus / "subject_02" / "walking"
        assert cli.main(["spectrogram", "dump", str(run), "--out", str(tmp_path),
                         "--window", "999"]) == 2

    def test_estimate_sp(self, corpus, tmp_path):
        out = tmp_path / "hr.csv"
        run = corpus / "subject_01" / "stationary"
        assert cli.main(["estimate", str(run), "--method", "sp", "--out", str(out)]) == 0
        hr = HrSeries.from_csv(out.read_text())
        assert len(hr) == 5 and np.all((hr.bpm >= 40) & (hr.bpm <= 200))

    def test_evaluate_baseline(self, corpus, tmp_path, capsys):
        assert cli.main(["evaluate", str(corpus), "--method", "baseline", "--out", str(tmp_path),
                         "--subjects", "01"]) == 0
        assert "baseline: MAE" in capsys.readouterr().out
        rep = json.loads((tmp_path / "report.json").read_text())
        assert len(rep["runs"]) == 2 and rep["n_windows"] == 10
        assert (tmp_path / "residuals.csv").is_file()

    def test_train_writes_checkpoint_and_log(self, checkpoint):
        assert checkpoint.read_bytes()[:4] == MAGIC
        lines = checkpoint.with_suffix(".csv").read_text().splitlines()
        assert lines[0] == "epoch,loss" and len(lines) == 2

    def test_estimate_dl(self, corpus, checkpoint, tmp_path):
        run = corpus / "subject_01" / "walking"
        dump = tmp_path / "dump"
        assert cli.main(["estimate", str(run), "--checkpoint", str(checkpoint), "--out",
                         str(tmp_path / "hr.csv"), "--dump-dir", str(dump)] + TINY) == 0
        assert (dump / "denoised.npy").is_file()

    def test_bench(self, corpus, checkpoint, capsys):
        run = corpus / "subject_01" / "stationary"
        assert cli.main(["bench", str(run), "--checkpoint", str(checkpoint),
                         "--repetitions", "3"]) == 0
        rep = json.loads(capsys.readouterr().out)
        assert list(rep["per_10s_window_ms"]) == ["Preprocessing", "Denoising", "Reconstruction",
                                                  "HR extraction"]

    def test_bench_needs_checkpoint(self, corpus):
        assert cli.main(["bench", str(corpus / "subject_01" / "stationary")]) == 2
