import json
import os
import subprocess
import sys

import numpy as np
import pytest

from dlresnet.cli import main

SMALL_CFG = """\
data.d = 3
data.k = 3
data.n = 40
model.m = 8
model.L = 2
train.T = 50
"""


@pytest.fixture
def cfg_path(tmp_path):
    p = tmp_path / "small.cfg"
    p.write_text(SMALL_CFG)
    return str(p)


def test_gen_data(tmp_path, cfg_path, capsys):
    out = str(tmp_path / "d")
    assert main(["gen-data", "--config", cfg_path, "--out", out, "--seed-data", "4"]) == 0
    X = np.loadtxt(out + ".X.csv", delimiter=",")
    Y = np.loadtxt(out + ".Y.csv", delimiter=",")
    assert X.shape == (3, 40) and Y.shape == (3, 40)


def test_train_twice_identical(tmp_path, cfg_path):
    a, b = str(tmp_path / "a"), str(tmp_path / "b")
    assert main(["train", "--config", cfg_path, "--out", a]) == 0
    assert main(["train", "--config", cfg_path, "--out", b]) == 0
    assert open(a + ".csv", "rb").read() == open(b + ".csv", "rb").read()


def test_train_json(tmp_path, cfg_path):
    out = str(tmp_path / "j")
    assert main(["train", "--config", cfg_path, "--out", out, "--format", "json"]) == 0
    assert json.load(open(out + ".json"))["status"] == "horizon"


def test_check_exit_codes(tmp_path, cfg_path, capsys):
    # Gaussian transforms on this task miss the condition
    assert main(["check", "--config", cfg_path]) == 2
    out = json.loads(capsys.readouterr().out)
    assert out["condition"]["satisfied"] is False
    good = tmp_path / "good.cfg"
    good.write_text(SMALL_CFG + "transform.variant = modified_identity\n"
                    "transform.alpha = auto\n")
    assert main(["check", "--config", str(good)]) == 0


def test_require_condition_refuses(tmp_path, cfg_path):
    p = tmp_path / "strict.cfg"
    p.write_text(SMALL_CFG + "checks.require_condition = true\nout.prefix = "
                 + str(tmp_path / "x") + "\n")
    assert main(["train", "--config", str(p)]) == 2
    assert not os.path.exists(str(tmp_path / "x.csv"))


def test_divergence_exit(tmp_path):
    p = tmp_path / "div.cfg"
    p.write_text(SMALL_CFG + "train.eta = 5.0\n")
    assert main(["train", "--config", str(p), "--out", str(tmp_path / "d")]) == 3


def test_verify(cfg_path, capsys):
    assert main(["verify", "--config", cfg_path, "--trials", "3"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert len(lines) == 6 and all(line.startswith("PASS") for line in lines)


def test_sweep(tmp_path, cfg_path, capsys):
    out = str(tmp_path / "s")
    assert main(["sweep", "--config", cfg_path, "--out", out, "--axis", "L",
                 "--values", "1,2"]) == 0
    assert "iters_to_0.01" in capsys.readouterr().out


def test_bad_config(tmp_path, capsys):
    p = tmp_path / "bad.cfg"
    p.write_text("model.X = 1\n")
    assert main(["train", "--config", str(p)]) == 1
    assert "unknown key" in capsys.readouterr().err


def test_bad_seed():
    with pytest.raises(SystemExit):
        main(["train", "--seed-train", "-3"])


def test_module_entry_point(tmp_path, cfg_path):
    r = subprocess.run([sys.executable, "-m", "dlresnet", "train", "--config", cfg_path,
                        "--out", str(tmp_path / "m")], capture_output=True, text=True)
    assert r.returncode == 0, r.stderr
    assert os.path.exists(str(tmp_path / "m.csv"))
