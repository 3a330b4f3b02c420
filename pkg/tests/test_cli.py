"""End-to-end command-line behavior: artifacts, determinism, exit codes."""

import json
import os

import numpy as np
import pytest

from evodiff.cli import build_parser, main


def run_cli(*argv):
    return main(list(argv))


def test_help_lists_subcommands(capsys):
    with pytest.raises(SystemExit) as exc:
        build_parser().parse_args(["--help"])
    assert exc.value.code == 0
    out = capsys.readouterr().out
    for cmd in ("train", "sample", "experiment", "eval", "plot"):
        assert cmd in out


def _write_prior(tmp_path, dim=2):
    path = tmp_path / "prior.json"
    path.write_text(json.dumps({
        "weights": [0.5, 0.5],
        "means": [[1.5] * dim, [-1.5] * dim],
        "variances": [[0.05] * dim, [0.05] * dim],
    }))
    return str(path)


def test_sample_unguided_writes_designs_and_manifest(tmp_path, capsys):
    prior = _write_prior(tmp_path)
    out = str(tmp_path / "designs")
    code = run_cli("sample", "--denoiser", prior, "--n", "3",
                   "--schedule", "20,1e-4,0.02", "--seed", "7", "--out", out)
    assert code == 0
    summary = json.loads(capsys.readouterr().out)
    assert summary["n"] == 3
    for k in range(3):
        doc = json.loads(open(os.path.join(out, f"design_{k:04d}.json")).read())
        assert len(doc["values"]) == 2
    manifest = json.loads(open(os.path.join(out, "manifest.json")).read())
    assert manifest["command"] == "sample" and manifest["seed"] == 7
    assert len(manifest["outputs"]) == 3


def test_sample_guided_and_deterministic(tmp_path, capsys):
    prior = _write_prior(tmp_path)
    gcfg = tmp_path / "guidance.json"
    gcfg.write_text(json.dumps({"alpha": 2.0, "n_samples": 6, "window": [10, 1]}))
    outs = []
    for name in ("a", "b"):
        out = str(tmp_path / name)
        code = run_cli("sample", "--denoiser", prior, "--n", "2",
                       "--guidance", str(gcfg), "--fitness", "gmm_toy",
                       "--schedule", "20,1e-4,0.02", "--seed", "3", "--out", out)
        assert code == 0
        capsys.readouterr()
        outs.append(json.loads(open(os.path.join(out, "design_0000.json")).read()))
    assert outs[0]["values"] == outs[1]["values"]


def test_sample_guidance_requires_fitness(tmp_path, capsys):
    prior = _write_prior(tmp_path)
    gcfg = tmp_path / "guidance.json"
    gcfg.write_text(json.dumps({"alpha": 1.0}))
    code = run_cli("sample", "--denoiser", prior, "--guidance", str(gcfg),
                   "--out", str(tmp_path / "x"))
    assert code == 2


def test_unknown_guidance_key_is_config_error(tmp_path):
    prior = _write_prior(tmp_path)
    gcfg = tmp_path / "guidance.json"
    gcfg.write_text(json.dumps({"alpha": 1.0, "turbo": True}))
    code = run_cli("sample", "--denoiser", prior, "--guidance", str(gcfg),
                   "--fitness", "gmm_toy", "--out", str(tmp_path / "x"))
    assert code == 2


def test_missing_denoiser_file_is_io_error(tmp_path):
    code = run_cli("sample", "--denoiser", str(tmp_path / "nope.json"),
                   "--out", str(tmp_path / "x"))
    assert code == 5


def test_unknown_fitness_is_config_error(tmp_path):
    prior = _write_prior(tmp_path)
    code = run_cli("sample", "--denoiser", prior, "--fitness", "warp_drive",
                   "--out", str(tmp_path / "x"))
    assert code == 2


def test_train_then_sample_with_mlp(tmp_path, capsys):
    model = str(tmp_path / "model.json")
    code = run_cli("train", "--synth", "6,6,16", "--schedule", "10,1e-3,0.2",
                   "--epochs", "2", "--batch", "8", "--seed", "1", "--out", model)
    assert code == 0
    report = json.loads(capsys.readouterr().out)
    assert report["epochs"] == 2 and np.isfinite(report["final_loss"])
    out = str(tmp_path / "mlp_designs")
    code = run_cli("sample", "--denoiser", model, "--n", "1",
                   "--schedule", "10,1e-3,0.2", "--out", out)
    assert code == 0
    doc = json.loads(open(os.path.join(out, "design_0000.json")).read())
    assert len(doc["values"]) == 36


def test_train_requires_data_or_synth(tmp_path):
    assert run_cli("train", "--out", str(tmp_path / "m.json")) == 2


@pytest.mark.filterwarnings("ignore:overflow:RuntimeWarning",
                            "ignore:invalid value:RuntimeWarning")
def test_train_divergence_is_numeric_failure(tmp_path):
    code = run_cli("train", "--synth", "4,4,8", "--epochs", "40", "--lr", "1e6",
                   "--out", str(tmp_path / "m.json"))
    assert code == 3


def test_experiment_writes_results_and_summaries(tmp_path, capsys):
    cfg = tmp_path / "exp.json"
    cfg.write_text(json.dumps({
        "task": "gmm_toy", "n_runs": 3, "base_seed": 5, "T": 15,
        "denoiser": {"kind": "gmm", "weights": [0.5, 0.5],
                     "means": [[1.5, -1.5], [-1.5, 1.5]],
                     "variances": [[0.05, 0.05], [0.05, 0.05]]},
        "arms": [{"name": "UD-0"},
                 {"name": "CD-2", "alpha": 2.0, "window": [8, 1], "n_samples": 6}],
    }))
    out = str(tmp_path / "exp_out")
    code = run_cli("experiment", "--config", str(cfg), "--out", out, "--bins", "5")
    assert code == 0
    report = json.loads(capsys.readouterr().out)
    assert report["failures"] == 0
    assert "CD-2_vs_UD-0" in report["summaries"]
    for name in ("results.csv", "timings.csv", "manifest.json",
                 "summary_CD-2_vs_UD-0.json", "summary_CD-2_vs_UD-0.svg"):
        assert os.path.exists(os.path.join(out, name)), name


def test_experiment_identical_rerun_byte_identical_results(tmp_path, capsys):
    cfg = tmp_path / "exp.json"
    cfg.write_text(json.dumps({
        "task": "gmm_toy", "n_runs": 2, "base_seed": 9, "T": 10,
        "denoiser": {"kind": "standard_normal", "dim": 2},
        "arms": [{"name": "UD-0"},
                 {"name": "CD-1", "alpha": 1.0, "window": [5, 1], "n_samples": 4}],
    }))
    blobs = []
    for name, threads in (("r1", "1"), ("r2", "3")):
        out = str(tmp_path / name)
        assert run_cli("experiment", "--config", str(cfg), "--out", out,
                       "--threads", threads) == 0
        capsys.readouterr()
        blobs.append(open(os.path.join(out, "results.csv"), "rb").read())
    assert blobs[0] == blobs[1]


def test_experiment_all_failed_exit_code(tmp_path, capsys):
    cfg = tmp_path / "exp.json"
    cfg.write_text(json.dumps({
        "task": "flow", "n_runs": 1, "base_seed": 0, "T": 5,
        "denoiser": {"kind": "standard_normal", "dim": 2},  # dim mismatch
        "task_params": {"W": 4, "H": 4},
        "arms": [{"name": "UD-0"}],
    }))
    code = run_cli("experiment", "--config", str(cfg), "--out", str(tmp_path / "o"))
    capsys.readouterr()
    assert code == 3


def test_eval_prints_csv(tmp_path, capsys):
    prior = _write_prior(tmp_path)
    out = str(tmp_path / "designs")
    run_cli("sample", "--denoiser", prior, "--n", "2",
            "--schedule", "10,1e-4,0.02", "--out", out)
    capsys.readouterr()
    code = run_cli("eval", "--fitness", "gmm_toy", "--designs", out)
    assert code == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines[0] == "design,objective"
    assert len(lines) == 3
    name, value = lines[1].split(",")
    assert name == "design_0000.json"
    float(value)


def test_plot_rebuilds_svg_from_summary(tmp_path, capsys):
    cfg = tmp_path / "exp.json"
    cfg.write_text(json.dumps({
        "task": "gmm_toy", "n_runs": 2, "base_seed": 1, "T": 10,
        "denoiser": {"kind": "standard_normal", "dim": 2},
        "arms": [{"name": "UD-0"},
                 {"name": "CD-1", "alpha": 1.0, "window": [5, 1], "n_samples": 4}],
    }))
    out = str(tmp_path / "exp_out")
    run_cli("experiment", "--config", str(cfg), "--out", out)
    capsys.readouterr()
    svg = str(tmp_path / "replot.svg")
    code = run_cli("plot", "--summary",
                   os.path.join(out, "summary_CD-1_vs_UD-0.json"),
                   "--out", svg, "--width", "400", "--height", "300")
    assert code == 0
    text = open(svg).read()
    assert 'width="400"' in text and "data-count" in text
