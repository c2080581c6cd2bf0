"""Tests for the experiment runner: exit codes, schemas, reproducibility."""

import numpy as np
import pytest

from mvlab.cli import main


def write_config(path, text):
    path.write_text(text)
    return str(path)


SIMULATE = """
experiment = "simulate"
seed = 7

[model]
id = "zero"

[x0]
kind = "constant"
value = 1.0

[solver]
scheme = "frozen"
T = 1.0
n = 10
M = 4
"""


def test_simulate_zero_model_constant_csv(tmp_path):
    cfg = write_config(tmp_path / "cfg.toml", SIMULATE)
    out = tmp_path / "out"
    assert main(["--config", cfg, "--out", str(out)]) == 0
    lines = (out / "results.csv").read_text().splitlines()
    assert lines[0] == "time,particle,x0"
    assert all(row.endswith(",1.0") for row in lines[1:])
    assert (out / "metadata.toml").exists()


def test_missing_seed_exit_2_names_the_key(tmp_path, capsys):
    cfg = write_config(tmp_path / "cfg.toml",
                       SIMULATE.replace("seed = 7\n", ""))
    assert main(["--config", cfg, "--out", str(tmp_path / "o")]) == 2
    assert "seed" in capsys.readouterr().err


def test_unknown_key_exit_2(tmp_path, capsys):
    cfg = write_config(tmp_path / "cfg.toml", SIMULATE + "\nbogus_key = 1\n")
    assert main(["--config", cfg, "--out", str(tmp_path / "o")]) == 2
    assert "bogus_key" in capsys.readouterr().err


def test_unknown_model_param_exit_2(tmp_path, capsys):
    cfg = write_config(tmp_path / "cfg.toml", SIMULATE.replace(
        '[model]\nid = "zero"', '[model]\nid = "zero"\n[model.params]\nwhat = 3'))
    assert main(["--config", cfg, "--out", str(tmp_path / "o")]) == 2
    assert "what" in capsys.readouterr().err


def test_parse_error_exit_2(tmp_path):
    cfg = write_config(tmp_path / "cfg.toml", "experiment = [unterminated")
    assert main(["--config", cfg, "--out", str(tmp_path / "o")]) == 2


def test_blowup_exit_3(tmp_path, capsys):
    text = """
experiment = "spde"
seed = 1

[spde]
K = 32
r = 2.0
T = 1.0
n = 12
M = 2
inner_steps = 1

[spde.x0]
kind = "single_mode"
mode = 32
amplitude = 5.0
"""
    cfg = write_config(tmp_path / "cfg.toml", text)
    assert main(["--config", cfg, "--out", str(tmp_path / "o")]) == 3
    assert "category=blowup" in capsys.readouterr().err


def test_byte_identical_across_runs_and_thread_counts(tmp_path):
    text = """
experiment = "simulate"
seed = 99

[model]
id = "linear_meanfield"
[model.params]
a = -1.0
c = 0.5
s = 0.3

[x0]
kind = "gaussian"
mean = 0.0
std = 1.0

[solver]
scheme = "interacting"
T = 0.5
n = 20
N = 32
"""
    cfg = write_config(tmp_path / "cfg.toml", text)
    blobs = []
    for threads in (1, 2, 8):
        out = tmp_path / f"out{threads}"
        assert main(["--config", cfg, "--out", str(out),
                     "--threads", str(threads)]) == 0
        blobs.append((out / "results.csv").read_bytes())
    assert blobs[0] == blobs[1] == blobs[2]


def test_metadata_sidecar_reproduces_results(tmp_path):
    text = """
experiment = "holder"
seed = 5

[model]
id = "granular_curie_weiss"
[model.params]
beta = 1.0
K = 1.0

[x0]
kind = "gaussian"
std = 0.5

[solver]
T = 1.0
n = 100
N = 64

[holder]
q = 2.0
lags = [0.05, 0.1, 0.2]
"""
    cfg = write_config(tmp_path / "cfg.toml", text)
    out1 = tmp_path / "a"
    assert main(["--config", cfg, "--out", str(out1)]) == 0
    # re-run straight from the sidecar
    out2 = tmp_path / "b"
    assert main(["--config", str(out1 / "metadata.toml"), "--out", str(out2)]) == 0
    assert (out1 / "results.csv").read_bytes() == (out2 / "results.csv").read_bytes()


def test_set_override_changes_seed(tmp_path):
    cfg = write_config(tmp_path / "cfg.toml", SIMULATE.replace(
        'id = "zero"', 'id = "brownian"'))
    a, b, c = tmp_path / "a", tmp_path / "b", tmp_path / "c"
    assert main(["--config", cfg, "--out", str(a)]) == 0
    assert main(["--config", cfg, "--out", str(b), "--set", "seed=8"]) == 0
    assert main(["--config", cfg, "--out", str(c), "--seed", "8"]) == 0
    assert (a / "results.csv").read_bytes() != (b / "results.csv").read_bytes()
    assert (b / "results.csv").read_bytes() == (c / "results.csv").read_bytes()


def test_ldp_experiment_rows(tmp_path):
    text = """
experiment = "ldp"
seed = 3

[model]
id = "brownian"

[x0]
value = 0.0

[solver]
T = 1.0
n = 100

[ldp]
epsilons = [0.2, 0.1, 0.05]
trials = 500
delta = 0.5
"""
    cfg = write_config(tmp_path / "cfg.toml", text)
    out = tmp_path / "out"
    assert main(["--config", cfg, "--out", str(out)]) == 0
    lines = (out / "results.csv").read_text().splitlines()
    assert lines[0] == "epsilon,p_hat,se,eps_log_p"
    assert len(lines) == 4
    assert (out / "plot.gp").exists()


def test_chaos_compare_and_assumptions_and_spde(tmp_path):
    chaos = """
experiment = "chaos-compare"
seed = 11

[model]
id = "granular_curie_weiss"

[x0]
kind = "gaussian"
std = 0.5

[solver]
T = 0.5
n = 50
M = 256
N = 256

[output]
times = [0.25, 0.5]
"""
    cfg = write_config(tmp_path / "chaos.toml", chaos)
    out = tmp_path / "chaos"
    assert main(["--config", cfg, "--out", str(out)]) == 0
    lines = (out / "results.csv").read_text().splitlines()
    assert len(lines) == 3
    header = lines[0].split(",")
    assert header[:3] == ["time", "mean_frozen", "se_frozen"]
    for row in lines[1:]:
        vals = dict(zip(header, map(float, row.split(","))))
        assert vals["gap"] <= 4 * vals["combined_se"]

    assumptions = """
experiment = "assumptions"
seed = 2

[model]
id = "cubic"
[model.params]
p = 2.0

[assumptions]
conditions = ["A3", "A4"]
points_per_radius = 16
"""
    cfg2 = write_config(tmp_path / "assume.toml", assumptions)
    out2 = tmp_path / "assume"
    assert main(["--config", cfg2, "--out", str(out2)]) == 0
    lines2 = (out2 / "results.csv").read_text().splitlines()
    assert lines2[0] == "condition,radius,constant,violations"
    assert all(row.endswith(",0") for row in lines2[1:])

    spde = """
experiment = "spde"
seed = 4

[spde]
K = 8
K_noise = 4
q_scale = 0.5
r = 2.0
T = 0.05
n = 10
inner_steps = 20
M = 3
"""
    cfg3 = write_config(tmp_path / "spde.toml", spde)
    out3 = tmp_path / "spde"
    assert main(["--config", cfg3, "--out", str(out3)]) == 0
    lines3 = (out3 / "results.csv").read_text().splitlines()
    assert lines3[0] == "field,sup_h2,int_lr,sup_hp"
    assert lines3[-1].startswith("mean,")
