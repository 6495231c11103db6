import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from londn.neighbors import knn
from londn.phantom import (
    MaskSpec,
    PhantomSpec,
    center_columns,
    default_center_lines,
    gen_dataset,
    gen_heldout,
    gen_mask,
    gen_member,
    gen_smaps,
    load_dataset,
    save_dataset,
)


def center_run(cols, width):
    """Length of the run of sampled columns containing the center column."""
    c = width // 2
    lo = c
    while lo > 0 and cols[lo - 1]:
        lo -= 1
    hi = c
    while hi < width - 1 and cols[hi + 1]:
        hi += 1
    return lo, hi + 1


@pytest.mark.parametrize("accel,center,count", [(4, 31, 64), (8, 15, 32)])
def test_reference_width_masks(accel, center, count):
    assert default_center_lines(256, accel) == center
    mask = gen_mask(MaskSpec(accel=accel, center_lines=center, width=256, seed=1))
    cols = mask.columns
    assert cols.sum() == count
    block = center_columns(256, center)
    assert np.all(cols[block] == 1)
    assert block[-1] - block[0] + 1 == center


def test_desk_width_center_lines():
    assert default_center_lines(64, 4) == 8
    assert default_center_lines(64, 8) == 4


def test_accel_one_full():
    mask = gen_mask(MaskSpec(accel=1, center_lines=0, width=12))
    assert mask.grid.all()


def test_infeasible_spec():
    with pytest.raises(ValueError):
        MaskSpec(accel=4, center_lines=16, width=64)


@settings(max_examples=40, deadline=None)
@given(st.sampled_from([2, 4, 8]), st.integers(16, 128), st.integers(0, 10**6))
def test_mask_properties(accel, width, seed):
    center = default_center_lines(width, accel)
    if not center < width / accel:
        center = 0
    spec = MaskSpec(accel=accel, center_lines=center, width=width, seed=seed)
    mask = gen_mask(spec, height=5)
    assert mask.columns.sum() == round(width / accel)
    assert mask.grid.shape == (5, width)
    if center:
        assert np.all(mask.columns[center_columns(width, center)] == 1)


def test_mask_seeded():
    a = gen_mask(MaskSpec(seed=3))
    b = gen_mask(MaskSpec(seed=3))
    c = gen_mask(MaskSpec(seed=4))
    assert a == b and a != c


def test_smaps_examples():
    one = gen_smaps(1, 8, 10)
    np.testing.assert_allclose(np.abs(one), 1.0, atol=1e-12)
    four = gen_smaps(4, 16, 12, rotation=0.3)
    np.testing.assert_allclose(np.sum(np.abs(four) ** 2, axis=0), 1.0, atol=1e-6)
    two = np.abs(gen_smaps(2, 9, 11))
    np.testing.assert_allclose(two[0], two[1][:, ::-1], atol=1e-8)


@pytest.fixture(scope="module")
def dataset():
    spec = PhantomSpec(size=32, n_clusters=4, per_cluster=6, n_coils=2)
    samples, labels = gen_dataset(spec, 0)
    return spec, samples, labels


def test_dataset_shape_and_normalization(dataset):
    spec, samples, labels = dataset
    assert len(samples) == spec.n_samples
    assert labels == sorted(labels)
    for gt, smaps in samples:
        assert np.abs(gt).max() == pytest.approx(1.0, abs=1e-12)
        assert smaps.shape == (2, 32, 32)


def test_cluster_separation():
    spec = PhantomSpec()
    samples, labels = gen_dataset(spec, 0)
    g = np.array([s[0] for s in samples]).reshape(len(samples), -1)
    labels = np.array(labels)
    sq = np.sum(np.abs(g) ** 2, 1)
    d2 = sq[:, None] + sq[None, :] - 2 * np.real(g @ g.conj().T)
    d = np.sqrt(np.maximum(d2, 0))
    same = labels[:, None] == labels[None, :]
    off = ~np.eye(len(g), dtype=bool)
    within = d[same & off].mean()
    between = d[~same].mean()
    assert between >= 2 * within


def test_zero_jitter_identical():
    spec = PhantomSpec(size=16, n_clusters=2, per_cluster=3, jitter=0.0)
    samples, _ = gen_dataset(spec, 5)
    for i in range(1, 3):
        np.testing.assert_array_equal(samples[0][0], samples[i][0])


@pytest.mark.parametrize("metric", ["L1", "L2", "NCC"])
def test_knn_retrieves_cluster(metric):
    spec = PhantomSpec(size=32, n_clusters=8, per_cluster=10, n_coils=1)
    samples, labels = gen_dataset(spec, 1)
    held, hl = gen_heldout(spec, 1, 8)
    gallery = np.array([s[0] for s in samples])
    k = 5
    hits = []
    for (gt, _), c in zip(held, hl):
        ns = knn(gt, gallery, k, metric)
        hits.append(np.mean([labels[i] == c for i in ns.indices]))
    assert 100 * np.mean(hits) >= 95


def test_member_independent_of_order():
    spec = PhantomSpec(size=16, n_clusters=3, per_cluster=4)
    samples, _ = gen_dataset(spec, 9)
    gt, smaps = gen_member(spec, 9, 2, 1)
    np.testing.assert_array_equal(samples[2 * 4 + 1][0], gt)
    np.testing.assert_array_equal(samples[2 * 4 + 1][1], smaps)


def test_save_load_roundtrip(tmp_path, dataset):
    spec, samples, labels = dataset
    held, hl = gen_heldout(spec, 0, 3)
    meta = save_dataset(tmp_path / "ds", spec, 0, samples, labels, held, hl)
    assert (tmp_path / "ds" / "sample_00000" / "gt.hdr").exists()
    assert (tmp_path / "ds" / "meta.json").exists()
    meta2, train, heldout = load_dataset(tmp_path / "ds")
    assert meta2 == meta
    assert len(train) == len(samples) and len(heldout) == 3
    np.testing.assert_allclose(train[5][0], samples[5][0], atol=1e-6)
    np.testing.assert_allclose(np.sum(np.abs(train[5][1]) ** 2, 0), 1.0, atol=1e-12)
