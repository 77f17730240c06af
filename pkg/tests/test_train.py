"""Training loop: determinism, logging, NaN abort, checkpointing."""

from pathlib import Path

import numpy as np
import pytest

from dpcnet.checkpoint import load_checkpoint
from dpcnet.data import ImagePair, PairedCorpus
from dpcnet.losses import LossWeights
from dpcnet.model import DPCNet, ModelConfig
from dpcnet.optim import Schedule, Stage
from dpcnet.tensor import Tensor
from dpcnet.train import LogEntry, NaNLossError, evaluate, train_loop

TOY = ModelConfig(base_channels=8, blocks=(1, 1, 1), heads=(1, 2, 2), window=2)
CORPUS = Path(__file__).resolve().parents[1] / "data" / "corpus"


def tiny_sched(steps=3):
    return Schedule(total_steps=steps, lr_max=1e-3, stages=(Stage(0, 16, 2),))


@pytest.fixture(scope="module")
def pairs():
    return PairedCorpus(CORPUS / "train").pairs()[:2]


def test_loss_decreases_over_short_run(pairs):
    net = DPCNet(TOY)
    log = train_loop(net, pairs, tiny_sched(steps=25), seed=0, sink=None, eval_every=0)
    assert len(log) == 25
    first5 = np.mean([e.loss for e in log[:5]])
    last5 = np.mean([e.loss for e in log[-5:]])
    assert last5 < first5


def test_determinism_same_seed_bit_identical(pairs, tmp_path):
    states = []
    for run in ("a", "b"):
        net = DPCNet(TOY)
        out = tmp_path / run
        train_loop(net, pairs, tiny_sched(), seed=7, sink=None, eval_every=0, out_dir=out)
        states.append((out / "checkpoint_final.ckpt").read_bytes())
    assert states[0] == states[1]


def test_different_seed_different_trajectory(pairs):
    logs = []
    for seed in (1, 2):
        net = DPCNet(TOY)
        logs.append(train_loop(net, pairs, tiny_sched(), seed=seed, sink=None, eval_every=0))
    assert [e.loss for e in logs[0]] != [e.loss for e in logs[1]]


def test_log_line_format(pairs):
    entry = LogEntry(step=3, lr=1.5e-4, loss=0.25, psnr=21.5)
    line = entry.line()
    assert line.startswith("step=3 lr=")
    assert "loss=0.25" in line and "psnr=21.5000" in line
    assert LogEntry(step=0, lr=1e-4, loss=1.0).line().count("psnr") == 0


def test_sink_receives_every_step(pairs):
    lines = []
    net = DPCNet(TOY)
    train_loop(net, pairs, tiny_sched(), seed=0, sink=lines.append, eval_every=2)
    assert len(lines) == 3
    assert all(l.startswith("step=") for l in lines)
    assert "psnr=" in lines[0]  # eval at step 0 and the final step
    assert "psnr=" in lines[-1]


def test_nan_abort_reports_step(pairs):
    net = DPCNet(TOY)
    # poison a parameter so the first forward pass goes non-finite
    net.stem.weight.data[0, 0, 0, 0] = np.nan
    with pytest.raises(NaNLossError) as err:
        train_loop(net, pairs, tiny_sched(), seed=0, sink=None, eval_every=0)
    assert err.value.step == 0


def test_periodic_and_final_checkpoints(pairs, tmp_path):
    net = DPCNet(TOY)
    train_loop(net, pairs, tiny_sched(steps=4), seed=0, sink=None, eval_every=0,
               checkpoint_every=2, out_dir=tmp_path)
    assert (tmp_path / "checkpoint_000002.ckpt").exists()
    assert (tmp_path / "checkpoint_000004.ckpt").exists()
    final = load_checkpoint(tmp_path / "checkpoint_final.ckpt")
    for name, p in net.named_parameters():
        assert np.array_equal(final[name].reshape(p.data.shape), p.data)


def test_empty_corpus_rejected():
    net = DPCNet(TOY)
    with pytest.raises(ValueError):
        train_loop(net, [], tiny_sched(), sink=None)


def test_evaluate_reports_both_baselines(pairs):
    net = DPCNet(TOY)
    result = evaluate(net, pairs)
    assert set(result) == {"mean_psnr_derained", "mean_psnr_rainy"}
    assert np.isfinite(result["mean_psnr_rainy"])


def test_l1_only_weights_run(pairs):
    net = DPCNet(TOY)
    log = train_loop(net, pairs, tiny_sched(), seed=0,
                     weights=LossWeights(l1=1.0, perceptual=0.0, fft=0.0),
                     sink=None, eval_every=0)
    assert all(np.isfinite(e.loss) for e in log)
