import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from swingseq.preprocess import (IMAGENET_MEAN, AugmentParams, DegenerateInputError, FrameSequence,
                                 MemoryFrameSource, DirectoryFrameSource, augment, crop_resize_normalize, hflip,
                                 label_frames, looped_indices, read_frame_dir, sample_training_window, window_rng,
                                 write_frame_dir)

from conftest import make_annotation

FULL = (0.0, 0.0, 1.0, 1.0)


def mean_colored(h, w):
    return np.broadcast_to(IMAGENET_MEAN, (h, w, 3)).astype(np.float32).copy()


def test_wide_frame_pads_35_rows_each_side(rng):
    frame = rng.integers(1, 255, (720, 1280, 3), dtype=np.uint8)
    out = crop_resize_normalize(frame, FULL, 160)
    assert out.shape == (3, 160, 160)
    assert np.all(out[:, :35] == 0) and np.all(out[:, 125:] == 0)
    assert np.any(out[:, 35] != 0) and np.any(out[:, 124] != 0)


def test_square_crop_needs_no_padding(rng):
    frame = rng.integers(1, 255, (50, 50, 3), dtype=np.uint8)
    out = crop_resize_normalize(frame, FULL, 96)
    assert not np.any(np.all(out == 0, axis=(0, 2)))


def test_mean_color_normalizes_to_zero():
    out = crop_resize_normalize(mean_colored(30, 70), FULL, 64)
    np.testing.assert_allclose(out, 0.0, atol=1e-6)


def test_degenerate_bbox_and_small_d(rng):
    frame = rng.integers(0, 255, (10, 10, 3), dtype=np.uint8)
    with pytest.raises(DegenerateInputError):
        crop_resize_normalize(frame, (0.5, 0.5, 0.01, 0.01), 64)
    with pytest.raises(ValueError):
        crop_resize_normalize(frame, FULL, 16)


@given(st.integers(4, 80), st.integers(4, 80), st.sampled_from([32, 64, 96]))
@settings(max_examples=40, deadline=None)
def test_output_shape_any_aspect(h, w, d):
    frame = np.full((h, w, 3), 128, np.uint8)
    out = crop_resize_normalize(frame, FULL, d)
    assert out.shape == (3, d, d) and np.isfinite(out).all()


def test_augment_disabled_is_identity(rng):
    x = torch.rand(4, 3, 16, 16)
    assert augment(x, AugmentParams(enabled=False), rng) is x


def test_flip_involution():
    x = torch.rand(4, 3, 16, 16)
    assert torch.equal(hflip(hflip(x)), x)


def test_augment_deterministic_for_seed():
    x = torch.rand(4, 3, 24, 24)
    p = AugmentParams()
    a = augment(x, p, np.random.default_rng(7))
    b = augment(x, p, np.random.default_rng(7))
    assert a.numpy().tobytes() == b.numpy().tobytes()


def test_augment_same_transform_for_every_frame():
    frame = torch.rand(1, 3, 24, 24)
    x = frame.repeat(5, 1, 1, 1)
    out = augment(x, AugmentParams(horizontal_flip_prob=1.0), np.random.default_rng(3))
    for t in range(1, 5):
        assert torch.equal(out[t], out[0])
    assert not torch.allclose(out[0], frame[0])


def test_affine_fill_is_mean_for_raw_crops():
    x = torch.from_numpy(mean_colored(20, 20)).permute(2, 0, 1)[None].repeat(2, 1, 1, 1)
    out = augment(x, AugmentParams(horizontal_flip_prob=0.0, max_rotation_deg=5, max_shear_deg=5),
                  np.random.default_rng(0))
    np.testing.assert_allclose(out.numpy(), x.numpy(), atol=1e-6)


def test_label_frames_examples():
    ann = make_annotation(events=[10, 20, 30, 40, 45, 60, 70, 90])
    idx = list(range(48, 64))
    labels = label_frames(ann, idx)
    assert labels[12] == 5 and (np.delete(labels, 12) == 8).all()
    assert (label_frames(ann, range(100, 110)) == 8).all()
    full = label_frames(ann, range(120))
    assert [int(v) for v in full if v != 8] == list(range(8))


def test_event_to_background_ratio_per_clip():
    for n in (100, 280, 333):
        ann = make_annotation(num_frames=n)
        full = label_frames(ann, range(n))
        assert (full == 8).sum() == n - 8 and (full != 8).sum() == 8


def test_looped_indices_examples():
    assert looped_indices(100, 50, 64).tolist() == list(range(50, 100)) + list(range(14))
    assert looped_indices(10, 0, 32).tolist() == (list(range(10)) * 4)[:32]


def small_clip(n=30, h=24, w=32):
    rng = np.random.default_rng(5)
    return FrameSequence(rng.integers(0, 256, (n, h, w, 3), dtype=np.uint8))


def test_training_window_contract():
    ann = make_annotation(num_frames=30, events=[2, 5, 8, 11, 14, 17, 20, 25])
    clip = small_clip()
    win = sample_training_window(ann, clip, 40, np.random.default_rng(0), d=32, start=20)
    assert win.pixels.shape == (40, 3, 32, 32) and win.pixels.dtype == np.float32
    idx = looped_indices(30, 20, 40)
    assert win.labels.tolist() == label_frames(ann, idx).tolist()
    assert win.window_start == 20 and win.source_sample_id == ann.sample_id


def test_flip_keeps_labels():
    ann = make_annotation(num_frames=30, events=[2, 5, 8, 11, 14, 17, 20, 25])
    clip = small_clip()
    plain = sample_training_window(ann, clip, 16, np.random.default_rng(0), d=32, start=3)
    flipped = sample_training_window(ann, clip, 16, np.random.default_rng(0), d=32, start=3,
                                     augment_params=AugmentParams(1.0, 0.0, 0.0))
    assert plain.labels.tolist() == flipped.labels.tolist()
    np.testing.assert_allclose(flipped.pixels, plain.pixels[..., ::-1], atol=1e-5)


def test_start_frames_are_uniform():
    from scipy.stats import chi2

    n, draws = 50, 10_000
    ann = make_annotation(num_frames=n, events=[1, 5, 9, 13, 17, 21, 25, 29])
    clip = FrameSequence(np.zeros((n, 4, 4, 3), np.uint8))
    rng = np.random.default_rng(99)
    counts = np.zeros(n)
    for _ in range(draws):
        counts[sample_training_window(ann, clip, 1, rng, d=32).window_start] += 1
    expected = draws / n
    sigma = np.sqrt(draws * (1 / n) * (1 - 1 / n))
    assert np.all(np.abs(counts - expected) <= 3 * sigma)
    stat = ((counts - expected) ** 2 / expected).sum()
    assert stat < chi2.ppf(0.999, n - 1)


def test_window_rng_stable():
    a = window_rng(3, "clip_7", 2).random(4)
    b = window_rng(3, "clip_7", 2).random(4)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, window_rng(3, "clip_7", 3).random(4))


def test_frame_dir_roundtrip(tmp_path):
    clip = small_clip(5)
    write_frame_dir(tmp_path / "c1", clip)
    assert np.array_equal(read_frame_dir(tmp_path / "c1").frames, clip.frames)
    assert np.array_equal(DirectoryFrameSource(tmp_path).load("c1").frames, clip.frames)
    assert MemoryFrameSource({"c1": clip}).load("c1") is clip


def test_frame_sequence_validation():
    with pytest.raises(ValueError):
        FrameSequence(np.zeros((0, 4, 4, 3), np.uint8))
    with pytest.raises(ValueError):
        FrameSequence(np.zeros((2, 4, 4), np.uint8))
    with pytest.raises(ValueError):
        AugmentParams(horizontal_flip_prob=1.5)


def test_corrupt_frame_reports_index(tmp_path):
    write_frame_dir(tmp_path / "c", small_clip(3))
    (tmp_path / "c" / "000001.png").write_bytes(b"not a png")
    with pytest.raises(OSError, match="frame 1"):
        read_frame_dir(tmp_path / "c")
    with pytest.raises(FileNotFoundError):
        read_frame_dir(tmp_path / "c" / "..")  # no image files at this level
