"""Command-line interface: subcommands, exit codes, config echo."""

from pathlib import Path

import numpy as np
import pytest

from dpcnet import cli
from dpcnet.data import load_png, save_png
from dpcnet.tensor import Tensor

CORPUS = Path(__file__).resolve().parents[1] / "data" / "corpus"


def run_cli(argv, capsys):
    code = cli.main(argv)
    captured = capsys.readouterr()
    return code, captured.out, captured.err


@pytest.fixture(scope="module")
def trained(tmp_path_factory):
    """A 2-step toy training run shared by the CLI tests."""
    out = tmp_path_factory.mktemp("cliout")
    code = cli.main([
        "train",
        "--set", "model.base_channels=8",
        "--set", "model.blocks=1,1,1",
        "--set", "model.heads=1,2,2",
        "--set", "model.window=2",
        "--set", "train.steps=2",
        "--set", "train.stages=0:16:2",
        "--set", f"data.root={CORPUS / 'train'}",
        "--set", f"out.dir={out}",
    ])
    assert code == 0
    return out


TOY_SETS = [
    "--set", "model.base_channels=8",
    "--set", "model.blocks=1,1,1",
    "--set", "model.heads=1,2,2",
    "--set", "model.window=2",
]


def test_train_writes_checkpoint_and_log(trained):
    assert (trained / "checkpoint_final.ckpt").exists()
    log = (trained / "train.log").read_text().splitlines()
    assert len(log) == 2
    assert log[0].startswith("step=0 lr=")


def test_train_echoes_resolved_config(capsys, tmp_path):
    code, out, _ = run_cli([
        "train", *TOY_SETS,
        "--set", "train.steps=1",
        "--set", "train.stages=0:16:1",
        "--set", f"data.root={CORPUS / 'train'}",
        "--set", f"out.dir={tmp_path}",
    ], capsys)
    assert code == 0
    assert "# resolved configuration" in out
    assert "model.base_channels=8" in out
    assert "train.steps=1" in out


def test_unknown_key_exit_2(capsys):
    code, _, err = run_cli(["train", "--set", "no.such.key=1"], capsys)
    assert code == 2
    assert "config error" in err


def test_missing_corpus_exit_3(capsys, tmp_path):
    code, _, err = run_cli([
        "train", "--set", f"data.root={tmp_path / 'missing'}",
        "--set", f"out.dir={tmp_path}",
    ], capsys)
    assert code == 3
    assert "data error" in err


def test_infer_writes_derained_outputs(trained, tmp_path, capsys):
    code, out, _ = run_cli([
        "infer", *TOY_SETS,
        "--checkpoint", str(trained / "checkpoint_final.ckpt"),
        "--input", str(CORPUS / "test" / "rainy" / "test_000.png"),
        "--output", str(tmp_path),
    ], capsys)
    assert code == 0
    result = tmp_path / "test_000_derained.png"
    assert result.exists()
    img = load_png(result).data
    assert img.shape == (1, 3, 64, 64)
    assert img.min() >= 0.0 and img.max() <= 1.0


def test_infer_pads_non_pow2_input(trained, tmp_path, capsys):
    src = load_png(CORPUS / "test" / "rainy" / "test_000.png").data[:, :, :50, :60]
    odd = tmp_path / "odd.png"
    save_png(Tensor(src), odd)
    out_dir = tmp_path / "out"
    code, _, _ = run_cli([
        "infer", *TOY_SETS,
        "--checkpoint", str(trained / "checkpoint_final.ckpt"),
        "--input", str(odd),
        "--output", str(out_dir),
    ], capsys)
    assert code == 0
    assert load_png(out_dir / "odd_derained.png").shape == (1, 3, 50, 60)


def test_infer_checkpoint_model_mismatch_exit_2(trained, tmp_path, capsys):
    # default (full-size) model vs toy checkpoint
    code, _, err = run_cli([
        "infer",
        "--checkpoint", str(trained / "checkpoint_final.ckpt"),
        "--input", str(CORPUS / "test" / "rainy" / "test_000.png"),
        "--output", str(tmp_path),
    ], capsys)
    assert code == 2
    assert "checkpoint" in err


def test_infer_missing_input_exit_3(trained, tmp_path, capsys):
    code, _, err = run_cli([
        "infer", *TOY_SETS,
        "--checkpoint", str(trained / "checkpoint_final.ckpt"),
        "--input", str(tmp_path / "ghost.png"),
        "--output", str(tmp_path),
    ], capsys)
    assert code == 3


def test_eval_prints_per_image_and_means(capsys):
    code, out, _ = run_cli([
        "eval",
        "--pred", str(CORPUS / "test" / "rainy"),
        "--gt", str(CORPUS / "test" / "clean"),
    ], capsys)
    assert code == 0
    lines = out.strip().splitlines()
    assert len(lines) == 9  # 8 per-image lines + summary
    assert lines[-1].startswith("mean_psnr=")
    assert "mean_ssim=" in lines[-1]


def test_eval_unmatched_ids_exit_3(tmp_path, capsys):
    (tmp_path / "pred").mkdir()
    (tmp_path / "gt").mkdir()
    save_png(Tensor(np.zeros((1, 3, 16, 16), dtype=np.float32)), tmp_path / "pred" / "x.png")
    save_png(Tensor(np.zeros((1, 3, 16, 16), dtype=np.float32)), tmp_path / "gt" / "y.png")
    code, _, err = run_cli([
        "eval", "--pred", str(tmp_path / "pred"), "--gt", str(tmp_path / "gt"),
    ], capsys)
    assert code == 3
    assert "x" in err and "y" in err


def test_gradcheck_exit_codes(capsys, monkeypatch):
    from dpcnet.gradcheck import GradCheckReport

    good = [GradCheckReport(op="fake_op", max_rel_error=1e-7, checked_coords=4, tol=1e-4)]
    bad = [GradCheckReport(op="fake_op", max_rel_error=0.5, checked_coords=4, tol=1e-4)]

    monkeypatch.setattr(cli, "run_gradcheck_suite", lambda: good)
    code, out, _ = run_cli(["gradcheck"], capsys)
    assert code == 0
    assert "gradcheck passed" in out

    monkeypatch.setattr(cli, "run_gradcheck_suite", lambda: bad)
    code, _, err = run_cli(["gradcheck"], capsys)
    assert code == 5
    assert "fake_op" in err


def test_dpcnet_seed_env_override(capsys, monkeypatch, tmp_path):
    monkeypatch.setenv("DPCNET_SEED", "123")
    code, out, _ = run_cli([
        "train", *TOY_SETS,
        "--set", "train.steps=1",
        "--set", "train.stages=0:16:1",
        "--set", f"data.root={CORPUS / 'train'}",
        "--set", f"out.dir={tmp_path}",
    ], capsys)
    assert code == 0
    assert "train.seed=123" in out
