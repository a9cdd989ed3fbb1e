"""Tests for IDX parsing, image/label transforms, and scenario construction."""

import gzip
import os
import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from flicsim.data import (
    KIND_IID,
    KIND_LABEL_SWAP,
    KIND_REGRESSION_TOY,
    KIND_ROTATION,
    ClientDataset,
    ScenarioSpec,
    build_scenario,
    load_idx,
    parse_idx,
    rotate90,
    swap_labels,
)
from flicsim.errors import CapacityError, FormatError, ShapeError

from oracles import lstsq_slope


def encode_idx(arr: np.ndarray) -> bytes:
    """Independent IDX encoder used only by the tests."""
    arr = np.asarray(arr, dtype=np.uint8)
    header = struct.pack(">BBBB", 0, 0, 0x08, arr.ndim)
    header += struct.pack(f">{arr.ndim}I", *arr.shape)
    return header + arr.tobytes()


# ---------------------------------------------------------------------------
# IDX container
# ---------------------------------------------------------------------------

def test_parse_idx_images_example():
    imgs = np.arange(2 * 3 * 3, dtype=np.uint8).reshape(2, 3, 3)
    out = parse_idx(encode_idx(imgs))
    assert out.shape == (2, 3, 3)
    assert out.dtype == np.uint8
    assert np.array_equal(out, imgs)


def test_parse_idx_labels_example():
    labels = np.array([5, 0, 4, 1, 9], dtype=np.uint8)
    out = parse_idx(encode_idx(labels))
    assert out.shape == (5,)
    assert np.array_equal(out, labels)


def test_parse_idx_short_header():
    with pytest.raises(FormatError):
        parse_idx(b"\x00\x00")


def test_parse_idx_bad_magic():
    blob = b"\x01\x00\x08\x01" + struct.pack(">I", 1) + b"\x07"
    with pytest.raises(FormatError):
        parse_idx(blob)


def test_parse_idx_bad_type_code():
    blob = b"\x00\x00\x0d\x01" + struct.pack(">I", 1) + b"\x07"
    with pytest.raises(FormatError, match="0x0d"):
        parse_idx(blob)


def test_parse_idx_truncated_dims():
    blob = b"\x00\x00\x08\x03" + struct.pack(">I", 1)
    with pytest.raises(FormatError, match="truncated"):
        parse_idx(blob)


def test_parse_idx_payload_size_mismatch():
    imgs = np.zeros((2, 3, 3), dtype=np.uint8)
    blob = encode_idx(imgs)[:-1]
    with pytest.raises(FormatError, match="17"):
        parse_idx(blob)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 3), st.data())
def test_parse_idx_roundtrip(ndim, data):
    shape = tuple(data.draw(st.integers(1, 5)) for _ in range(ndim))
    flat = data.draw(st.lists(st.integers(0, 255),
                              min_size=int(np.prod(shape)),
                              max_size=int(np.prod(shape))))
    arr = np.array(flat, dtype=np.uint8).reshape(shape)
    assert np.array_equal(parse_idx(encode_idx(arr)), arr)


def test_load_idx_gzip(tmp_path):
    arr = np.arange(12, dtype=np.uint8).reshape(3, 2, 2)
    plain = tmp_path / "imgs.idx"
    plain.write_bytes(encode_idx(arr))
    zipped = tmp_path / "imgs.idx.gz"
    zipped.write_bytes(gzip.compress(encode_idx(arr)))
    assert np.array_equal(load_idx(plain), arr)
    assert np.array_equal(load_idx(zipped), arr)


# ---------------------------------------------------------------------------
# Transforms
# ---------------------------------------------------------------------------

def test_rotate90_quarter_turn():
    img = np.array([[1, 2], [3, 4]])
    assert np.array_equal(rotate90(img, 1), np.array([[2, 4], [1, 3]]))


def test_rotate90_full_turn_is_identity():
    rng = np.random.default_rng(0)
    img = rng.normal(size=(5, 5))
    assert np.array_equal(rotate90(img, 4), img)


def test_rotate90_rejects_non_square():
    with pytest.raises(ShapeError):
        rotate90(np.zeros((2, 3)), 1)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 6), st.integers(0, 7), st.integers(0, 2 ** 31 - 1))
def test_rotate90_matches_repeated_single_turns(side, turns, seed):
    img = np.random.default_rng(seed).normal(size=(side, side))
    expected = img
    for _ in range(turns % 4):
        expected = rotate90(expected, 1)
    assert np.array_equal(rotate90(img, turns), expected)


def test_swap_labels_example():
    labels = np.array([0, 1, 2, 3, 1, 0])
    out = swap_labels(labels, (0, 1))
    assert np.array_equal(out, np.array([1, 0, 2, 3, 0, 1]))
    assert np.array_equal(labels, np.array([0, 1, 2, 3, 1, 0]))


@settings(max_examples=30, deadline=None)
@given(st.lists(st.integers(0, 9), min_size=1, max_size=50),
       st.integers(0, 9), st.integers(0, 9))
def test_swap_labels_is_involution(raw, a, b):
    labels = np.array(raw)
    twice = swap_labels(swap_labels(labels, (a, b)), (a, b))
    assert np.array_equal(twice, labels)


def test_swap_labels_leaves_other_classes_alone():
    labels = np.arange(10)
    out = swap_labels(labels, (4, 7))
    untouched = [i for i in range(10) if i not in (4, 7)]
    assert np.array_equal(out[untouched], labels[untouched])
    assert out[4] == 7 and out[7] == 4


# ---------------------------------------------------------------------------
# ScenarioSpec validation
# ---------------------------------------------------------------------------

def test_spec_rejects_unknown_kind():
    with pytest.raises(ShapeError):
        ScenarioSpec("mystery", 4, 2, 10, 5, seed=0)


def test_spec_rejects_too_many_swap_groups():
    with pytest.raises(ShapeError):
        ScenarioSpec(KIND_LABEL_SWAP, 20, 6, 10, 5, seed=0, num_classes=10)


def test_spec_rejects_five_rotation_groups():
    with pytest.raises(ShapeError):
        ScenarioSpec(KIND_ROTATION, 20, 5, 10, 5, seed=0)


def test_spec_rejects_slope_count_mismatch():
    with pytest.raises(ShapeError):
        ScenarioSpec(KIND_REGRESSION_TOY, 2, 2, 25, 25, seed=0, slopes=(45.0,))


def test_group_assignment_round_robin():
    spec = ScenarioSpec(KIND_LABEL_SWAP, 20, 5, 10, 5, seed=0)
    groups = [spec.group_of(cid) for cid in range(20)]
    assert groups == [cid % 5 for cid in range(20)]
    counts = np.bincount(groups)
    assert counts.max() - counts.min() <= 1


# ---------------------------------------------------------------------------
# Scenario construction
# ---------------------------------------------------------------------------

def _row_keys(x: np.ndarray) -> set:
    return {row.tobytes() for row in np.asarray(x, dtype=np.float64)}


def test_scenario_shapes_and_disjointness():
    spec = ScenarioSpec(KIND_LABEL_SWAP, 8, 4, 30, 12, seed=3)
    clients = build_scenario(spec)
    assert len(clients) == 8
    seen = set()
    for client in clients:
        assert isinstance(client, ClientDataset)
        assert client.train[0].shape == (30, spec.feature_dim)
        assert client.train[1].shape == (30,)
        assert client.test[0].shape == (12, spec.feature_dim)
        assert client.group_id == client.client_id % 4
        keys = _row_keys(client.train[0]) | _row_keys(client.test[0])
        assert len(keys) == 42
        assert not (keys & seen), "clients must not share samples"
        seen |= keys


def test_scenario_is_deterministic():
    spec = ScenarioSpec(KIND_ROTATION, 6, 3, 20, 8, seed=11)
    a = build_scenario(spec)
    b = build_scenario(spec)
    for ca, cb in zip(a, b):
        assert np.array_equal(ca.train[0], cb.train[0])
        assert np.array_equal(ca.train[1], cb.train[1])
        assert np.array_equal(ca.test[0], cb.test[0])


def test_scenario_seed_changes_data():
    base = dict(kind=KIND_IID, num_clients=4, num_groups=1,
                train_per_client=20, test_per_client=8)
    a = build_scenario(ScenarioSpec(seed=0, **base))
    b = build_scenario(ScenarioSpec(seed=1, **base))
    assert not np.array_equal(a[0].train[0], b[0].train[0])


def test_nonneg_features_clip_inputs_at_zero():
    base = dict(kind=KIND_IID, num_clients=4, num_groups=1,
                train_per_client=20, test_per_client=8, seed=3)
    clipped = build_scenario(ScenarioSpec(nonneg_features=True, **base))
    plain = build_scenario(ScenarioSpec(**base))
    for ds in clipped:
        assert np.all(ds.train[0] >= 0.0)
        assert np.all(ds.test[0] >= 0.0)
    assert np.any(plain[0].train[0] < 0.0)


def test_label_swap_only_touches_the_groups_pair():
    """Same seed, swap scenario vs plain sharing: inputs equal, labels swapped."""
    common = dict(num_clients=10, num_groups=5, train_per_client=25,
                  test_per_client=10, seed=7, num_classes=10)
    swapped = build_scenario(ScenarioSpec(KIND_LABEL_SWAP, **common))
    plain = build_scenario(ScenarioSpec(KIND_IID, **common))
    for cs, cp in zip(swapped, plain):
        g = cs.group_id
        pair = {2 * g, 2 * g + 1}
        assert np.array_equal(cs.train[0], cp.train[0])
        for y_s, y_p in ((cs.train[1], cp.train[1]), (cs.test[1], cp.test[1])):
            moved = y_s != y_p
            assert set(np.unique(y_p[moved])) <= pair
            assert np.array_equal(y_s, swap_labels(y_p, (2 * g, 2 * g + 1)))


def test_rotation_groups_rotate_the_shared_pool():
    common = dict(num_clients=8, train_per_client=20, test_per_client=8,
                  seed=5, num_classes=8, image_side=6)
    rotated = build_scenario(ScenarioSpec(KIND_ROTATION, num_groups=4, **common))
    flat = build_scenario(ScenarioSpec(KIND_ROTATION, num_groups=1, **common))
    side = 6
    for cr, cf in zip(rotated, flat):
        g = cr.client_id % 4
        imgs = cf.train[0].reshape(-1, side, side)
        expect = np.rot90(imgs, g, axes=(1, 2)).reshape(cf.train[0].shape)
        assert np.allclose(cr.train[0], expect)
        assert np.array_equal(cr.train[1], cf.train[1])


def test_regression_toy_matches_least_squares():
    spec = ScenarioSpec(KIND_REGRESSION_TOY, 2, 2, 25, 25, seed=0,
                        slopes=(20.0, 70.0))
    clients = build_scenario(spec)
    for client, slope in zip(clients, (20.0, 70.0)):
        x = client.train[0][:, 0]
        assert lstsq_slope(x, client.train[1]) == pytest.approx(slope)
        assert client.train[0].shape == (25, 1)


def test_raw_pool_is_scaled_and_sliced():
    rng = np.random.default_rng(0)
    pool_x = rng.integers(0, 256, size=(200, 4, 4), dtype=np.uint8)
    pool_y = rng.integers(0, 10, size=200)
    spec = ScenarioSpec(KIND_IID, 4, 1, 30, 10, seed=2, image_side=4)
    clients = build_scenario(spec, raw=(pool_x, pool_y))
    for client in clients:
        assert client.train[0].shape == (30, 16)
        assert client.train[0].max() <= 1.0
        assert client.train[0].min() >= 0.0


def test_raw_pool_too_small_raises_capacity_error():
    pool_x = np.zeros((50, 4, 4), dtype=np.uint8)
    pool_y = np.zeros(50, dtype=np.int64)
    spec = ScenarioSpec(KIND_IID, 4, 1, 30, 10, seed=2, image_side=4)
    with pytest.raises(CapacityError, match="50"):
        build_scenario(spec, raw=(pool_x, pool_y))


def test_raw_pool_length_mismatch_raises():
    pool_x = np.zeros((50, 4, 4), dtype=np.uint8)
    pool_y = np.zeros(49, dtype=np.int64)
    spec = ScenarioSpec(KIND_IID, 1, 1, 10, 5, seed=2)
    with pytest.raises(ShapeError):
        build_scenario(spec, raw=(pool_x, pool_y))


@pytest.mark.skipif("FLICSIM_MNIST_DIR" not in os.environ,
                    reason="set FLICSIM_MNIST_DIR to run against real IDX files")
def test_scenario_from_real_idx_files():
    root = os.environ["FLICSIM_MNIST_DIR"]
    imgs = load_idx(os.path.join(root, "train-images-idx3-ubyte.gz"))
    labels = load_idx(os.path.join(root, "train-labels-idx1-ubyte.gz"))
    spec = ScenarioSpec(KIND_LABEL_SWAP, 20, 5, 100, 40, seed=0,
                        image_side=imgs.shape[1])
    clients = build_scenario(spec, raw=(imgs, labels))
    assert len(clients) == 20
    assert clients[0].train[0].shape == (100, imgs.shape[1] * imgs.shape[2])
