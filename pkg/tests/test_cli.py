import json
import subprocess
import sys

import pytest

from noisysplit.cli import main, parse_overrides
from noisysplit.errors import ConfigError

SMALL = ["--dataset.n", "400", "--dataset.d", "10", "--dataset.k", "4", "--dataset.cluster_std", "0.2",
         "--dataset.n_test", "100", "--model.hidden", "8", "--train.epochs", "2", "--trials", "1", "--quiet"]


def test_parse_overrides_forms():
    assert parse_overrides(["--noise.rate", "0.2", "--optim.lr=0.1"]) == {"noise.rate": "0.2", "optim.lr": "0.1"}
    for bad in (["--noise.rate"], ["stray"], ["--nope.key", "1"]):
        with pytest.raises(ConfigError):
            parse_overrides(bad)


def test_train_and_flags_win_over_file(tmp_path):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("experiment.seed=7\ntrain.mode=pd-only\n")
    out = tmp_path / "o"
    assert main(["train", "--config", str(cfg), "--seed", "3", "--out", str(out)] + SMALL) == 0
    s = json.loads((out / "summary.json").read_text())
    assert s["seeds"] == [3] and s["mode"] == "pd-only"


def test_global_flags_before_subcommand(tmp_path):
    assert main(["--out", str(tmp_path / "g"), "--seed", "2", "gen-noise"] + SMALL) == 0
    assert (tmp_path / "g" / "seed-2.audit.json").exists()


def test_exit_codes(tmp_path, capsys):
    assert main(["train", "--noise.kind", "cosmic"] + SMALL) == 2
    assert main(["train", "--trials", "0", "--out", str(tmp_path)]) == 2
    assert main(["dump-features", "--checkpoint", str(tmp_path / "missing.npz"), "--out", str(tmp_path)]
                + SMALL) == 3
    assert main(["schedules", "--families", "cosine", "--out", str(tmp_path)] + SMALL) == 2
    assert "error:" in capsys.readouterr().err


def test_audit_failure_exit_code(tmp_path, monkeypatch):
    from noisysplit import experiments as ex

    monkeypatch.setattr(ex, "audit", lambda o, c, s=None: {"flip_fraction": 0.0, "structure_ok": False,
                                                           "violations": ["x"]})
    assert main(["gen-noise", "--out", str(tmp_path)] + SMALL) == 4


def test_subcommands_end_to_end(tmp_path):
    out = str(tmp_path)
    assert main(["ablate", "--out", out + "/ab"] + SMALL) == 0
    assert main(["sweep-c2", "--grid", "0.2,1", "--out", out + "/sw"] + SMALL) == 0
    assert main(["schedules", "--families", "constant", "--out", out + "/sc"] + SMALL) == 0
    assert main(["train", "--out", out + "/tr"] + SMALL) == 0
    assert main(["dump-features", "--checkpoint", out + "/tr/seed-0.best.npz", "--out", out] + SMALL) == 0
    assert (tmp_path / "features.csv").read_text().startswith("index,label,f0,")


def test_console_script_runs(tmp_path):
    r = subprocess.run([sys.executable, "-m", "noisysplit.cli", "train", "--out", str(tmp_path)] + SMALL,
                       capture_output=True, text=True)
    assert r.returncode == 0, r.stderr
    r = subprocess.run([sys.executable, "-m", "noisysplit.cli", "train", "--bogus.key", "1"],
                       capture_output=True, text=True)
    assert r.returncode == 2
