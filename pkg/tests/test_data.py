import gzip
import struct

import numpy as np
import pytest

from qnnstab.data import (
    BUNDLED_IMAGES,
    BUNDLED_LABELS,
    DATA_DIR_ENV,
    corrupt_labels,
    load_dataset_dir,
    load_idx,
    pool_features,
    pooling_grid,
    prepare_binary,
    read_prepared,
    write_idx,
    write_prepared,
)
from qnnstab.exceptions import (
    BadMagicError,
    ConfigurationError,
    CountMismatchError,
    InsufficientDataError,
    TruncatedFileError,
)
from qnnstab.train import Dataset


@pytest.fixture
def idx_pair(tmp_path, rng):
    images = rng.integers(0, 256, (10, 28, 28), dtype=np.uint8)
    labels = np.array([0, 1] * 5, dtype=np.uint8)
    write_idx(tmp_path / "train-images-idx3-ubyte.gz", images)
    write_idx(tmp_path / "train-labels-idx1-ubyte", labels)
    return tmp_path, images, labels


class TestIdx:
    def test_header_bytes(self, tmp_path):
        write_idx(tmp_path / "x", np.zeros((2, 3, 4), dtype=np.uint8))
        blob = (tmp_path / "x").read_bytes()
        assert blob[:4] == b"\x00\x00\x08\x03"
        assert struct.unpack(">III", blob[4:16]) == (2, 3, 4)

    def test_round_trip(self, idx_pair):
        path, images, labels = idx_pair
        raw = load_dataset_dir(path)
        np.testing.assert_array_equal(raw.images, images)
        np.testing.assert_array_equal(raw.labels, labels)

    def test_env_var(self, idx_pair, monkeypatch):
        path, images, _ = idx_pair
        monkeypatch.setenv(DATA_DIR_ENV, str(path))
        assert len(load_dataset_dir()) == 10

    def test_bundled_sample(self):
        raw = load_idx(BUNDLED_IMAGES, BUNDLED_LABELS)
        assert raw.images.shape == (5000, 28, 28)
        assert np.bincount(raw.labels).tolist() == [500] * 10

    def test_bad_magic_names_file(self, idx_pair):
        path, _, _ = idx_pair
        # an image file passed as labels is reported under its own name
        with pytest.raises(BadMagicError, match="train-images"):
            load_idx(path / "train-images-idx3-ubyte.gz", path / "train-images-idx3-ubyte.gz")
        with pytest.raises(BadMagicError, match="train-labels"):
            load_idx(path / "train-labels-idx1-ubyte", path / "train-labels-idx1-ubyte")

    def test_empty_file(self, tmp_path, idx_pair):
        path, _, _ = idx_pair
        (tmp_path / "empty").write_bytes(b"")
        with pytest.raises(TruncatedFileError):
            load_idx(tmp_path / "empty", path / "train-labels-idx1-ubyte")

    def test_truncated_data(self, tmp_path, idx_pair):
        path, _, _ = idx_pair
        blob = gzip.decompress((path / "train-images-idx3-ubyte.gz").read_bytes())
        (tmp_path / "short").write_bytes(blob[:-5])
        with pytest.raises(TruncatedFileError):
            load_idx(tmp_path / "short", path / "train-labels-idx1-ubyte")

    def test_count_mismatch(self, tmp_path, idx_pair):
        path, _, labels = idx_pair
        write_idx(tmp_path / "labels", labels[:7])
        with pytest.raises(CountMismatchError):
            load_idx(path / "train-images-idx3-ubyte.gz", tmp_path / "labels")

    def test_deterministic(self):
        a = load_idx(BUNDLED_IMAGES, BUNDLED_LABELS)
        b = load_idx(BUNDLED_IMAGES, BUNDLED_LABELS)
        assert a.images.tobytes() == b.images.tobytes()


class TestPooling:
    def test_grid(self):
        assert pooling_grid(4) == (2, 2)
        assert pooling_grid(1) == (1, 1)
        with pytest.raises(ConfigurationError):
            pooling_grid(5)

    def test_quadrant_means(self):
        img = np.zeros((1, 28, 28))
        img[0, :14, 14:] = 255
        img[0, 14:, :14] = 51
        np.testing.assert_allclose(pool_features(img, 4), [[0, np.pi, np.pi * 0.2, 0]])

    def test_all_zero(self):
        np.testing.assert_array_equal(pool_features(np.zeros((2, 28, 28)), 4), 0.0)


class TestPrepareBinary:
    def test_labels_balance_and_disjoint(self):
        raw = load_idx(BUNDLED_IMAGES, BUNDLED_LABELS)
        train, test = prepare_binary(raw, 0, 1, 4, 64, 256, seed=3)
        assert train.m == 64 and test.m == 256
        assert np.sum(train.y == 1) == 32 and np.sum(test.y == 1) == 128
        assert np.all((train.X >= 0) & (train.X <= np.pi))
        train_rows = {r.tobytes() for r in train.X}
        assert not train_rows & {r.tobytes() for r in test.X}

    def test_deterministic(self):
        raw = load_idx(BUNDLED_IMAGES, BUNDLED_LABELS)
        a, _ = prepare_binary(raw, 0, 1, 4, 10, 10, seed=5)
        b, _ = prepare_binary(raw, 0, 1, 4, 10, 10, seed=5)
        assert a.X.tobytes() == b.X.tobytes() and a.y.tobytes() == b.y.tobytes()

    def test_class_mapping(self, idx_pair):
        path, images, labels = idx_pair
        raw = load_dataset_dir(path)
        train, _ = prepare_binary(raw, 1, 0, 4, 4, 4, seed=0)
        expected = {tuple(pool_features(images[i : i + 1], 4)[0]): 1.0 if labels[i] == 1 else -1.0 for i in range(10)}
        for x, y in zip(train.X, train.y):
            assert expected[tuple(x)] == y

    def test_insufficient(self, idx_pair):
        raw = load_dataset_dir(idx_pair[0])
        with pytest.raises(InsufficientDataError):
            prepare_binary(raw, 0, 1, 4, 6, 6, seed=0)

    def test_prepared_file_round_trip(self, tmp_path):
        raw = load_idx(BUNDLED_IMAGES, BUNDLED_LABELS)
        train, test = prepare_binary(raw, 0, 1, 4, 8, 6, seed=1)
        write_prepared(tmp_path / "p.csv", train, test)
        a, b = read_prepared(tmp_path / "p.csv")
        assert a.X.tobytes() == train.X.tobytes() and b.y.tobytes() == test.y.tobytes()


class TestCorruptLabels:
    def data(self, m=20000):
        return Dataset(np.zeros((m, 1)), np.ones(m))

    def test_zero_rate(self):
        d = self.data(50)
        assert corrupt_labels(d, 0.0, 1).y.tobytes() == d.y.tobytes()

    def test_full_rate_uniform(self):
        y = corrupt_labels(self.data(), 1.0, 2).y
        assert abs(np.mean(y == 1) - 0.5) < 3 * np.sqrt(0.25 / len(y))

    @pytest.mark.parametrize("r", [0.1, 0.3, 0.5])
    def test_flip_fraction(self, r):
        y = corrupt_labels(self.data(), r, 4).y
        assert abs(np.mean(y == -1) - r / 2) < 3 * np.sqrt(r / 2 * (1 - r / 2) / len(y))

    def test_nested(self):
        d = self.data(2000)
        low, high = corrupt_labels(d, 0.2, 7).y, corrupt_labels(d, 0.4, 7).y
        changed = low != d.y
        assert np.all(high[changed] == low[changed])

    def test_range(self):
        with pytest.raises(ConfigurationError):
            corrupt_labels(self.data(5), 1.2, 0)
