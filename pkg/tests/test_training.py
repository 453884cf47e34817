import csv
import io
import math

import numpy as np
import pytest
import torch
import torch.nn.functional as F
from hypothesis import given, settings
from hypothesis import strategies as st

from swingseq.complexity import ABLATION_GRID, grid_model_config
from swingseq.dataset import ConfigurationError, generate_splits
from swingseq.model import ModelConfig, build_model
from swingseq.preprocess import MemoryFrameSource
from swingseq.synthetic import CorpusRanges, generate_corpus
from swingseq.training import (DEFAULT_CLASS_WEIGHTS, EPS, TrainConfig, ablation_csv, learning_rate, run_ablation,
                               train, weighted_cross_entropy, weighted_cross_entropy_logits)

UNIFORM = np.full((1, 9), 1 / 9)


@pytest.mark.parametrize("label, expected", [(8, 0.1 * math.log(9)), (5, math.log(9))])
def test_closed_form_uniform(label, expected):
    assert weighted_cross_entropy(UNIFORM, [label]) == pytest.approx(expected, abs=1e-6)
    t = weighted_cross_entropy(torch.tensor(UNIFORM), torch.tensor([label]))
    assert float(t) == pytest.approx(expected, abs=1e-6)


def test_one_hot_correct_is_zero():
    probs = np.eye(9)
    assert weighted_cross_entropy(probs, np.arange(9)) == pytest.approx(0.0, abs=1e-12)


def test_zero_probability_is_clamped():
    probs = np.zeros((1, 9))
    probs[0, 0] = 1.0
    assert weighted_cross_entropy(probs, [3]) == pytest.approx(-math.log(EPS))


def test_all_ones_equals_unweighted(rng):
    for _ in range(20):
        logits = torch.from_numpy(rng.standard_normal((4, 32, 9)))
        labels = torch.from_numpy(rng.integers(0, 9, (4, 32)))
        ref = F.cross_entropy(logits.reshape(-1, 9), labels.reshape(-1))
        ones = [1.0] * 9
        assert float(weighted_cross_entropy_logits(logits, labels, ones)) == pytest.approx(float(ref), abs=1e-6)
        probs = torch.softmax(logits, -1).numpy()
        assert weighted_cross_entropy(probs, labels.numpy(), ones) == pytest.approx(float(ref), abs=1e-6)


def test_logit_and_probability_forms_agree(rng):
    logits = torch.from_numpy(rng.standard_normal((2, 16, 9)))
    labels = torch.from_numpy(rng.integers(0, 9, (2, 16)))
    a = float(weighted_cross_entropy_logits(logits, labels, DEFAULT_CLASS_WEIGHTS))
    b = weighted_cross_entropy(torch.softmax(logits, -1).numpy(), labels.numpy())
    assert a == pytest.approx(b, abs=1e-9)


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=50, deadline=None)
def test_loss_permutation_equivariant(seed):
    rng = np.random.default_rng(seed)
    probs = rng.dirichlet(np.ones(9), size=24)
    labels = rng.integers(0, 9, 24)
    perm = rng.permutation(24)
    assert weighted_cross_entropy(probs, labels) == pytest.approx(weighted_cross_entropy(probs[perm], labels[perm]),
                                                                  rel=1e-12)


def test_learning_rate_schedule():
    cfg = TrainConfig(lr_drop_iteration=5000)
    assert learning_rate(cfg, 5001) == pytest.approx(1e-4)
    assert learning_rate(cfg, 5000) == pytest.approx(1e-3)
    assert learning_rate(TrainConfig(), 10**6) == pytest.approx(1e-3)


def test_train_config_errors():
    with pytest.raises(ConfigurationError):
        TrainConfig(class_weights=(1.0,) * 8)
    with pytest.raises(ConfigurationError):
        TrainConfig(batch_size=0)


@pytest.fixture(scope="module")
def micro_corpus():
    anns, clips = generate_corpus(8, seed=5, n_sources=4, ranges=CorpusRanges(backswing=(20, 26), image_size=32))
    return anns, MemoryFrameSource(clips)


def micro_model(**kw):
    torch.manual_seed(0)
    return build_model(ModelConfig(d=32, T=8, lstm_hidden=16, width_multiplier=0.25, **kw))


def test_zero_iterations_is_identity(micro_corpus):
    anns, frames = micro_corpus
    model = micro_model()
    before = {k: v.clone() for k, v in model.state_dict().items()}
    report = train(model, anns, frames, TrainConfig(iterations=0))
    assert report.loss_curve == []
    for k, v in model.state_dict().items():
        assert torch.equal(v, before[k])


def test_training_is_deterministic(micro_corpus):
    anns, frames = micro_corpus
    cfg = TrainConfig(batch_size=2, iterations=4, seed=3)
    a = train(micro_model(), anns, frames, cfg).loss_curve
    b = train(micro_model(), anns, frames, cfg).loss_curve
    assert a == b and len(a) == 4


@pytest.mark.slow
def test_two_hundred_iterations_halve_the_loss(micro_corpus):
    anns, frames = micro_corpus
    torch.manual_seed(0)
    model = build_model(ModelConfig(d=48, T=8, lstm_hidden=32, width_multiplier=0.5))
    report = train(model, anns, frames, TrainConfig(batch_size=4, iterations=200, seed=0))
    smooth = report.smoothed(20)
    assert len(report.loss_curve) == 200
    assert smooth[-1] <= 0.5 * smooth[0]
    assert report.curve_csv().splitlines()[0] == "iteration,loss"


def test_training_restricted_to_sample_ids(micro_corpus):
    anns, frames = micro_corpus
    seen = []

    class Recording:
        def load(self, sid):
            seen.append(sid)
            return frames.load(sid)

    keep = [anns[0].sample_id, anns[1].sample_id]
    train(micro_model(), anns, Recording(), TrainConfig(batch_size=2, iterations=3), sample_ids=keep)
    assert set(seen) <= set(keep)
    with pytest.raises(ConfigurationError):
        train(micro_model(), anns, frames, TrainConfig(iterations=1), sample_ids=["nope"])


def test_io_failure_reports_iteration(micro_corpus):
    anns, _ = micro_corpus

    class Broken:
        def load(self, sid):
            raise OSError("disk gone")

    with pytest.raises(OSError, match="iteration 1"):
        train(micro_model(), anns, Broken(), TrainConfig(iterations=2))


# -- ablation ----------------------------------------------------------------------

def test_dry_run_params_column_matches_reference():
    grid = [(grid_model_config(r), TrainConfig()) for r in ABLATION_GRID]
    rows = run_ablation(grid, train_models=False)
    text = ablation_csv(rows)
    parsed = list(csv.DictReader(io.StringIO(text)))
    assert len(parsed) == 11
    for row, ref in zip(parsed, ABLATION_GRID):
        assert float(row["params_1e6"]) == pytest.approx(ref["ref_params"], rel=0.01)
        assert row["pce"] == ""


def test_ablation_rows_and_failures(micro_corpus):
    anns, frames = micro_corpus
    split = generate_splits(anns, 2, seed=0)
    small = ModelConfig(d=32, T=8, lstm_hidden=8, width_multiplier=0.25)
    tcfg = TrainConfig(batch_size=2, iterations=2, seed=1)
    needs_weights = ModelConfig(d=32, T=8, lstm_hidden=8, pretrained=True)
    rows = run_ablation([(small, tcfg), (needs_weights, tcfg), (small, tcfg)], anns, frames, split)
    assert len(rows) == 3
    assert rows[0]["pce"] is not None and rows[0]["pce"] == rows[2]["pce"]
    assert rows[1]["pce"] is None and "pretrained" in rows[1]["error"]
    single = run_ablation([(small, tcfg)], anns, frames, split)
    assert len(single) == 1
    with pytest.raises(ConfigurationError):
        run_ablation([])
