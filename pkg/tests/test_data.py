import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from noisysplit.data import (
    Dataset, blob_centers, decode_idx, encode_idx, load_idx_dataset, make_blobs, parse_idx,
    split_train_val, write_idx,
)
from noisysplit.errors import ConfigError, DataError, FormatError
from noisysplit.tensor import SeededRng


def softmax_regression_accuracy(x, y, k, epochs=200, lr=0.5):
    # independent full-batch linear oracle, plain numpy
    n, d = x.shape
    xb = np.hstack([x, np.ones((n, 1))])
    w = np.zeros((d + 1, k))
    onehot = np.eye(k)[y]
    for _ in range(epochs):
        z = xb @ w
        z -= z.max(axis=1, keepdims=True)
        p = np.exp(z)
        p /= p.sum(axis=1, keepdims=True)
        w -= lr * xb.T @ (p - onehot) / n
    return float(np.mean(np.argmax(xb @ w, axis=1) == y))


def test_blobs_balanced_and_standardized(rng):
    ds = make_blobs(1000, 20, 10, 0.2, rng)
    assert np.all(np.bincount(ds.clean_labels) == 100)
    np.testing.assert_allclose(ds.features.mean(axis=0), 0, atol=1e-12)
    np.testing.assert_allclose(ds.features.std(axis=0), 1, atol=1e-12)
    assert "zscore" in ds.provenance
    assert np.array_equal(ds.noisy_labels, ds.clean_labels)


def test_blobs_uneven_counts_differ_by_at_most_one(rng):
    c = np.bincount(make_blobs(1003, 12, 10, 0.2, rng).clean_labels)
    assert c.max() - c.min() <= 1


def test_blobs_linear_oracle(rng):
    ds = make_blobs(2000, 20, 10, 0.1, rng)
    assert softmax_regression_accuracy(ds.features, ds.clean_labels, 10) >= 0.99


def test_blobs_deterministic():
    a = make_blobs(300, 10, 3, 0.2, SeededRng(5))
    b = make_blobs(300, 10, 3, 0.2, SeededRng(5))
    assert np.array_equal(a.features, b.features) and np.array_equal(a.clean_labels, b.clean_labels)


def test_test_set_reuses_train_normalization(rng):
    tr = make_blobs(500, 10, 5, 0.2, rng.substream("a"))
    te = make_blobs(400, 10, 5, 0.2, rng.substream("b"), normalize_with=(tr.norm_mean, tr.norm_std))
    assert np.array_equal(te.norm_mean, tr.norm_mean)
    assert np.abs(te.features.mean(axis=0)).max() < 0.3


@pytest.mark.parametrize("arr", ["simplex", "circle"])
def test_centers_respect_separation(arr):
    c = blob_centers(12, 8, 1.0, arr)
    dist = np.linalg.norm(c[:, None] - c[None], axis=-1)
    assert dist[~np.eye(8, dtype=bool)].min() >= 1.0 - 1e-12


def test_blob_errors(rng):
    with pytest.raises(ConfigError):
        make_blobs(5, 10, 10, 0.1, rng)
    with pytest.raises(ConfigError):
        make_blobs(100, 10, 10, 0.3, rng)  # separation 1 < 4 * 0.3
    with pytest.raises(ConfigError):
        make_blobs(100, 5, 10, 0.1, rng)  # simplex needs d >= k
    with pytest.raises(ConfigError):
        make_blobs(100, 10, 10, 0.1, rng, arrangement="grid")


def test_dataset_validation():
    with pytest.raises(DataError):
        Dataset(np.ones((3, 2)), np.array([0, 1, 2]), 2)
    with pytest.raises(DataError):
        Dataset(np.array([[np.nan, 1.0]]), np.array([0]), 2)
    ds = Dataset(np.ones((2, 2)), np.array([0, 1]), 2)
    with pytest.raises(DataError):
        ds.labels("clean")
    assert ds.flip_mask is None


# splits

def test_split_sizes_and_partition(rng):
    s = split_train_val(100, 0.1, rng)
    assert len(s.train) == 90 and len(s.val) == 10
    assert not set(s.train) & set(s.val)
    assert sorted(np.concatenate([s.train, s.val]).tolist()) == list(range(100))


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 500), st.floats(0.01, 0.99), st.integers(0, 1000))
def test_split_is_partition_property(n, f, seed):
    if not 1 <= round(n * f) < n:
        return
    s = split_train_val(n, f, SeededRng(seed))
    assert len(s.val) == round(n * f)
    assert np.array_equal(np.sort(np.concatenate([s.train, s.val])), np.arange(n))


def test_split_deterministic_and_errors():
    a = split_train_val(50, 0.2, SeededRng(1))
    b = split_train_val(50, 0.2, SeededRng(1))
    assert np.array_equal(a.val, b.val)
    for f in (0.0, 1.0, 0.001):
        with pytest.raises(ConfigError):
            split_train_val(50, f, SeededRng(1))


# IDX

FIXTURE = bytes([0, 0, 0x08, 3, 0, 0, 0, 2, 0, 0, 0, 2, 0, 0, 0, 2, 0, 51, 102, 153, 204, 255, 1, 2])


def test_idx_hand_fixture():
    t = decode_idx(FIXTURE)
    assert t.shape == (2, 2, 2)
    expected = np.array([0, 51, 102, 153, 204, 255, 1, 2], dtype=float).reshape(2, 2, 2) / 255.0
    assert np.array_equal(t, expected)
    assert t[1, 0, 1] == 1.0


def test_idx_label_file_and_magic():
    raw = encode_idx(np.array([3, 1, 4, 1, 5], dtype=np.uint8))
    assert raw[2] == 0x08 and raw[3] == 1
    assert decode_idx(raw).tolist() == [3, 1, 4, 1, 5]
    img = encode_idx(np.zeros((2, 3, 3), dtype=np.uint8))
    assert img[2] == 0x08 and img[3] == 3


@pytest.mark.parametrize("dtype", [">u1", ">i2", ">i4", ">f4", ">f8"])
def test_idx_roundtrip(dtype, rng):
    arr = (rng.uniform(0, 100, size=(3, 4, 2))).astype(dtype)
    out = decode_idx(encode_idx(arr, dtype), rescale=False)
    assert np.array_equal(out, arr.astype(out.dtype))


@pytest.mark.parametrize("buf,offset", [
    (b"\x00", 1),
    (b"\x01\x00\x08\x01", 0),
    (b"\x00\x00\x07\x01\x00\x00\x00\x01\x00", 2),
    (b"\x00\x00\x08\x02\x00\x00", 6),
    (FIXTURE[:-1], len(FIXTURE) - 1),
    (FIXTURE + b"\x00", len(FIXTURE)),
])
def test_idx_format_errors_report_offset(buf, offset):
    with pytest.raises(FormatError) as e:
        decode_idx(buf)
    assert e.value.offset == offset
    assert f"byte offset {offset}" in str(e.value)


def test_idx_files_and_loader(tmp_path, rng):
    root = tmp_path / "toy"
    root.mkdir()
    xtr = rng.integers(0, 256, size=(30, 4, 4)).astype(np.uint8)
    ytr = (np.arange(30) % 3).astype(np.uint8)
    write_idx(root / "train-images", xtr)
    write_idx(root / "train-labels", ytr)
    write_idx(root / "t10k-images-idx3-ubyte", xtr[:10])
    write_idx(root / "t10k-labels-idx1-ubyte", ytr[:10])
    assert np.array_equal(parse_idx(root / "train-labels"), ytr)
    tr, te = load_idx_dataset(tmp_path, "toy", subset=12, rng=SeededRng(0))
    assert tr.features.shape == (12, 16) and te.features.shape == (10, 16)
    assert tr.num_classes == 3 and 0.0 <= tr.features.min() and tr.features.max() <= 1.0
    with pytest.raises(DataError):
        load_idx_dataset(tmp_path, "missing")
