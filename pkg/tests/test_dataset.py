import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from swingseq.dataset import (ConfigurationError, DegenerateSwingError, SwingAnnotation, corpus_stats,
                              generate_splits, load_corpus, save_corpus, tempo, validate_annotation)

from conftest import make_annotation


def test_valid_annotation_has_no_violations(annotation):
    assert validate_annotation(annotation) == []


def test_out_of_order_events_give_one_ordering_violation():
    ann = make_annotation(events=[5, 4, 30, 45, 52, 60, 70, 90])
    v = validate_annotation(ann)
    assert len(v) == 1
    assert "ordering" in v[0].reason


def test_bbox_past_right_edge():
    v = validate_annotation(make_annotation(bbox=(0.9, 0.1, 0.2, 0.3)))
    assert len(v) == 1
    assert v[0].field == "bbox" and "exceeds frame" in v[0].reason


@pytest.mark.parametrize("kw, field", [
    (dict(num_frames=8, events=[0, 1, 2, 3, 4, 5, 6, 7]), "num_frames"),
    (dict(events=[10, 20, 30, 45, 52, 60, 70, 200]), "event_frames"),
    (dict(events=[-1, 20, 30, 45, 52, 60, 70, 90]), "event_frames"),
    (dict(club="putter"), "club"),
    (dict(view="overhead"), "view"),
    (dict(sex="x"), "sex"),
    (dict(bbox=(0.1, 0.1, 0.0, 0.5)), "bbox"),
])
def test_individual_violations(kw, field):
    assert [v.field for v in validate_annotation(make_annotation(**kw))] == [field]


annotations = st.builds(
    lambda n, ev, bbox: (n, ev, bbox),
    st.integers(1, 200),
    st.lists(st.integers(-5, 210), min_size=8, max_size=8),
    st.tuples(*[st.floats(-0.2, 1.2, allow_nan=False)] * 4),
)


@given(annotations)
@settings(max_examples=300, deadline=None)
def test_validator_agrees_with_invariants(params):
    n, ev, bbox = params
    ann = make_annotation(num_frames=n, events=ev, bbox=bbox)
    x, y, w, h = bbox
    expected_ok = (
        n >= 9
        and all(b > a for a, b in zip(ev, ev[1:]))
        and ev[0] >= 0 and ev[-1] <= n - 1
        and all(0 <= v <= 1 for v in bbox) and x + w <= 1 + 1e-9 and y + h <= 1 + 1e-9 and w > 0 and h > 0
    )
    assert (validate_annotation(ann) == []) == expected_ok


def test_corpus_roundtrip_and_trimming(tmp_path):
    anns = [make_annotation(f"s{i}", f"v{i % 2}") for i in range(3)]
    path = tmp_path / "corpus.json"
    save_corpus(path, anns)
    assert load_corpus(path) == anns

    rec = anns[0].to_record()
    rec.update(start_frame=5, end_frame=124, event_frames=[e + 5 for e in rec["event_frames"]])
    path.write_text(json.dumps([rec]))
    loaded = load_corpus(path)[0]
    assert loaded.start_frame == 0
    assert loaded.event_frames == anns[0].event_frames
    assert loaded.num_frames == 120 and loaded.end_frame == 119


# -- splits --------------------------------------------------------------------

def test_splits_keep_sources_together():
    sources = ["a", "a", "a", "b", "b", "c", "c", "c"]
    anns = [make_annotation(f"s{i}", src) for i, src in enumerate(sources)]
    split = generate_splits(anns, n_folds=2, seed=3)
    for a in anns:
        for b in anns:
            if a.source_video_id == b.source_video_id:
                assert split.fold_of_sample[a.sample_id] == split.fold_of_sample[b.sample_id]


def test_splits_deterministic():
    anns = [make_annotation(f"s{i}", f"v{i % 3}") for i in range(8)]
    assert generate_splits(anns, 2, seed=11) == generate_splits(anns, 2, seed=11)


def test_single_sample_sources_balance_exactly():
    anns = [make_annotation(f"s{i}", f"v{i}") for i in range(100)]
    split = generate_splits(anns, 4, seed=0)
    assert split.fold_sizes() == [25, 25, 25, 25]
    # greedy smallest-fold assignment of size-1 groups is round-robin over the shuffled order
    order = np.random.default_rng(0).permutation(100)
    keys = sorted(a.source_video_id for a in anns)
    expected = {keys[i].replace("v", "s"): k % 4 for k, i in enumerate(order)}
    assert split.fold_of_sample == expected


def test_split_errors():
    anns = [make_annotation(f"s{i}", "same") for i in range(5)]
    with pytest.raises(ConfigurationError):
        generate_splits(anns, 2)
    with pytest.raises(ConfigurationError):
        generate_splits(anns, 1)


def test_train_and_validation_ids_partition():
    anns = [make_annotation(f"s{i}", f"v{i % 7}") for i in range(30)]
    split = generate_splits(anns, 4, seed=2)
    for k in range(4):
        assert sorted(split.training_ids(k) + split.validation_ids(k)) == sorted(a.sample_id for a in anns)


# -- tempo & stats ---------------------------------------------------------------

@pytest.mark.parametrize("address, top, impact, expected", [(10, 40, 50, 3.0), (0, 15, 30, 1.0)])
def test_tempo(address, top, impact, expected):
    ev = [address, address + 1, address + 2, top, top + 1, impact, impact + 1, impact + 2]
    assert tempo(make_annotation(events=ev)) == expected


def test_tempo_degenerate():
    ann = make_annotation()
    ann.event_frames[5] = ann.event_frames[3]
    with pytest.raises(DegenerateSwingError):
        tempo(ann)


@given(st.integers(0, 500))
def test_tempo_shift_invariant(shift):
    a = make_annotation()
    b = make_annotation(events=[e + shift for e in a.event_frames], num_frames=a.num_frames + shift)
    assert tempo(a) == tempo(b)


def test_density_examples():
    assert corpus_stats([make_annotation(num_frames=260)]).events_per_frame == pytest.approx(8 / 260)
    two = [make_annotation("a", num_frames=100), make_annotation("b", num_frames=300)]
    assert corpus_stats(two).events_per_frame == pytest.approx(0.04)


def test_stats_counts_and_density_match_brute_force(rng):
    anns = []
    for i in range(50):
        n = int(rng.integers(100, 400))
        anns.append(make_annotation(f"s{i}", num_frames=n, slow_motion=bool(rng.random() < 0.5),
                                    club=["driver", "iron", "wedge"][i % 3], sex=["male", "female"][i % 2]))
    stats = corpus_stats(anns)
    total = 0
    for a in anns:
        total += a.num_frames
    assert stats.total_frames == total
    assert stats.events_per_frame == 8 * len(anns) / total
    for counts in (stats.club_counts, stats.view_counts, stats.sex_counts, stats.slow_motion_counts):
        assert sum(counts.values()) == len(anns)
    slow = [a for a in anns if a.slow_motion]
    assert stats.density_by_speed["slow-motion"] == pytest.approx(8 * len(slow) / sum(a.num_frames for a in slow))


def test_stats_empty():
    with pytest.raises(ConfigurationError):
        corpus_stats([])


def test_annotation_record_fields():
    rec = make_annotation().to_record()
    assert set(rec) == {"sample_id", "source_video_id", "num_frames", "event_frames", "bbox", "slow_motion",
                        "club", "view", "player_name", "sex", "fps", "start_frame", "end_frame"}
    assert SwingAnnotation.from_record(rec) == make_annotation()
