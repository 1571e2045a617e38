import struct

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from klrr import data
from klrr.data import CorruptionSpec, ImageSet
from klrr.errors import FormatError, InvalidArgumentError
from klrr.spectral import psd_eigendecompose


def idx_bytes(images):
    images = np.asarray(images, dtype=np.uint8)
    return b"\x00\x00\x08" + bytes([images.ndim]) + struct.pack(f">{images.ndim}I", *images.shape) + images.tobytes()


class TestIdx:
    def test_fixture(self, tmp_path):
        # two 2x2 images, bytes laid out by hand
        raw = bytes([0, 0, 8, 3, 0, 0, 0, 2, 0, 0, 0, 2, 0, 0, 0, 2,
                     0, 255, 51, 102,
                     204, 0, 1, 254])
        p = tmp_path / "img.idx"
        p.write_bytes(raw)
        s = data.load_idx(p)
        assert len(s) == 2 and s.shape == (2, 2)
        np.testing.assert_array_equal(s.images[0], [[0.0, 1.0], [0.2, 0.4]])
        np.testing.assert_array_equal(s.images[1], [[0.8, 0.0], [1 / 255, 254 / 255]])

    def test_labels(self, tmp_path):
        (tmp_path / "i").write_bytes(idx_bytes(np.zeros((3, 2, 2))))
        (tmp_path / "l").write_bytes(b"\x00\x00\x08\x01" + struct.pack(">I", 3) + bytes([2, 3, 2]))
        s = data.load_idx(tmp_path / "i", tmp_path / "l")
        np.testing.assert_array_equal(s.labels, [2, 3, 2])

    def test_empty_file(self, tmp_path):
        p = tmp_path / "e"
        p.write_bytes(b"")
        with pytest.raises(FormatError, match="offset 0"):
            data.load_idx(p)

    def test_zero_images(self, tmp_path):
        p = tmp_path / "z"
        p.write_bytes(b"\x00\x00\x08\x03" + struct.pack(">3I", 0, 28, 28))
        s = data.load_idx(p)
        assert len(s) == 0 and s.shape == (28, 28)

    def test_bad_magic(self, tmp_path):
        p = tmp_path / "b"
        p.write_bytes(b"\x01\x00\x08\x03" + b"\x00" * 12)
        with pytest.raises(FormatError, match="offset 0"):
            data.load_idx(p)

    def test_truncated(self, tmp_path):
        p = tmp_path / "t"
        p.write_bytes(idx_bytes(np.ones((2, 2, 2)))[:-3])
        with pytest.raises(FormatError, match="truncated"):
            data.load_idx(p)

    def test_roundtrip(self, tmp_path, rng):
        imgs = rng.integers(0, 256, size=(4, 3, 5)).astype(np.uint8)
        data.write_idx(tmp_path / "r", imgs, tmp_path / "rl", np.arange(4))
        s = data.load_idx(tmp_path / "r", tmp_path / "rl")
        np.testing.assert_array_equal(np.rint(s.images * 255), imgs)


class TestPgm:
    def test_ascii(self, tmp_path):
        (tmp_path / "a.pgm").write_bytes(b"P2\n# comment\n2 2\n255\n0 255\n128 64\n")
        img = data.read_pgm(tmp_path / "a.pgm")
        np.testing.assert_allclose(img, [[0, 1], [128 / 255, 64 / 255]])

    def test_binary_matches_ascii(self, tmp_path):
        (tmp_path / "a.pgm").write_bytes(b"P2 2 2 255 0 255 128 64")
        (tmp_path / "b.pgm").write_bytes(b"P5\n2 2\n255\n" + bytes([0, 255, 128, 64]))
        np.testing.assert_array_equal(data.read_pgm(tmp_path / "a.pgm"), data.read_pgm(tmp_path / "b.pgm"))

    def test_sixteen_bit(self, tmp_path):
        (tmp_path / "c.pgm").write_bytes(b"P5 1 2 65535\n" + struct.pack(">2H", 65535, 0))
        np.testing.assert_array_equal(data.read_pgm(tmp_path / "c.pgm"), [[1.0], [0.0]])

    def test_dir_and_mixed_sizes(self, tmp_path):
        data.write_pgm(tmp_path / "x1.pgm", np.zeros((2, 2)))
        data.write_pgm(tmp_path / "x2.pgm", np.ones((2, 2)), binary=False)
        s = data.load_pgm_dir(tmp_path)
        assert len(s) == 2 and np.all(s.images[1] == 1.0)
        data.write_pgm(tmp_path / "x3.pgm", np.ones((3, 2)))
        with pytest.raises(FormatError, match="x3.pgm"):
            data.load_pgm_dir(tmp_path)

    def test_bad_file(self, tmp_path):
        (tmp_path / "bad.pgm").write_bytes(b"P7 1 1 255\n\x00")
        with pytest.raises(FormatError):
            data.read_pgm(tmp_path / "bad.pgm")

    def test_truncated_raster(self, tmp_path):
        (tmp_path / "t.pgm").write_bytes(b"P5 4 4 255\n\x00\x00")
        with pytest.raises(FormatError, match="truncated"):
            data.read_pgm(tmp_path / "t.pgm")


class TestRotation:
    def test_zero_range_identity(self, rng):
        s = ImageSet(rng.uniform(size=(3, 5, 5)))
        np.testing.assert_array_equal(data.rotate_images(s, (0.0, 0.0), 1).images, s.images)

    def test_quarter_turn_fixture(self):
        img = np.array([[0.1, 0.2, 0.3],
                        [0.4, 0.5, 0.6],
                        [0.7, 0.8, 0.9]])
        # counter-clockwise quarter turn: first row becomes first column read upwards
        expected = np.array([[0.3, 0.6, 0.9],
                             [0.2, 0.5, 0.8],
                             [0.1, 0.4, 0.7]])
        np.testing.assert_allclose(data.rotate_image(img, 90.0), expected, atol=1e-12)

    def test_deterministic_and_clamped(self, rng):
        s = ImageSet(rng.uniform(size=(4, 6, 6)))
        a = data.rotate_images(s, (-90, 90), 7).images
        b = data.rotate_images(s, (-90, 90), 7).images
        assert np.array_equal(a, b) and a.min() >= 0 and a.max() <= 1

    def test_rotate_copies_even(self):
        s = ImageSet(np.ones((2, 4, 4)), np.array([5, 6]))
        out = data.rotate_copies(s, copies=5)
        assert len(out) == 10 and list(out.labels[:5]) == [5] * 5
        np.testing.assert_allclose(data.rotation_angles(5, mode="even"), [-90, -45, 0, 45, 90])


class TestCorrupt:
    def test_fraction_zero(self, rng):
        X = rng.normal(size=(4, 10))
        Y, mask = data.corrupt(X, CorruptionSpec(fraction=0.0))
        assert np.array_equal(X, Y) and not mask.any()

    def test_fraction_one_scale_zero(self, rng):
        X = rng.normal(size=(4, 10))
        Y, mask = data.corrupt(X, CorruptionSpec(fraction=1.0, scale=0.0))
        assert np.array_equal(X, Y) and mask.all()

    def test_count_and_noise_std(self):
        d = 20000
        X = np.full((d, 100), 1.0 / np.sqrt(d)) * 1.3
        Y, mask = data.corrupt(X, CorruptionSpec(seed=11))
        assert mask.sum() == 10
        target = 0.5 * 1.3**2
        for j in np.flatnonzero(mask):
            assert abs(np.std(Y[:, j] - X[:, j]) / target - 1) < 0.05
        assert np.array_equal(X[:, ~mask], Y[:, ~mask])

    def test_non_squared_reading(self):
        d = 20000
        X = np.full((d, 10), 2.0 / np.sqrt(d))
        Y, mask = data.corrupt(X, CorruptionSpec(fraction=0.1, squared_norm=False, seed=3))
        j = np.flatnonzero(mask)[0]
        assert abs(np.std(Y[:, j] - X[:, j]) / 1.0 - 1) < 0.05

    def test_occlusion(self, rng):
        s = ImageSet(np.zeros((10, 8, 8)))
        out, mask = data.corrupt(s, CorruptionSpec(kind="occlusion", seed=2))
        assert isinstance(out, ImageSet) and mask.sum() == 1
        j = np.flatnonzero(mask)[0]
        assert 16 <= out.images[j].sum() <= 48 and set(np.unique(out.images[j])) <= {0.0, 1.0}

    def test_occlusion_needs_shape(self):
        with pytest.raises(InvalidArgumentError):
            data.corrupt(np.zeros((64, 10)), CorruptionSpec(kind="occlusion", fraction=0.5))

    def test_block_too_large(self):
        with pytest.raises(InvalidArgumentError):
            data.corrupt(ImageSet(np.zeros((2, 3, 3))), CorruptionSpec(kind="occlusion", fraction=1.0))


@given(arrays(np.float64, (5, 8), elements=st.floats(-10, 10)), st.integers(0, 2**32 - 1),
       st.floats(0, 1))
def test_corrupt_untouched_columns(X, seed, frac):
    Y, mask = data.corrupt(X, CorruptionSpec(fraction=frac, seed=seed))
    assert mask.sum() == int(np.floor(frac * 8 + 1e-9))
    assert np.array_equal(X[:, ~mask], Y[:, ~mask])
    Y2, mask2 = data.corrupt(X, CorruptionSpec(fraction=frac, seed=seed))
    assert np.array_equal(Y, Y2) and np.array_equal(mask, mask2)


class TestCircle:
    def test_clean(self):
        X, T, mask = data.synth_circle(50, 0.0, 0.5, 1)
        assert np.array_equal(X, T) and not mask.any()
        np.testing.assert_allclose(np.linalg.norm(X, axis=0), 1.0, atol=1e-12)

    def test_outliers(self):
        X, T, mask = data.synth_circle(100, 0.1, 0.5, 1)
        assert mask.sum() == 10
        assert np.array_equal(X[:, ~mask], T[:, ~mask])

    def test_seeded(self):
        a = data.synth_circle(20, 0.1, 0.5, 9)
        b = data.synth_circle(20, 0.1, 0.5, 9)
        assert all(np.array_equal(u, v) for u, v in zip(a, b))


class TestNormalize:
    def test_simple(self):
        np.testing.assert_allclose(data.normalize_columns([[3.0], [4.0]]), [[0.6], [0.8]])

    def test_zero_column(self):
        np.testing.assert_array_equal(data.normalize_columns(np.zeros((3, 2))), 0.0)


@given(arrays(np.float64, (4, 6), elements=st.floats(-1e3, 1e3)))
def test_normalize_unit_norms(X):
    Y = data.normalize_columns(X)
    n = np.linalg.norm(Y, axis=0)
    nz = np.linalg.norm(X, axis=0) > 0
    np.testing.assert_allclose(n[nz], 1.0, atol=1e-12)


class TestKnn:
    def test_two_points(self):
        X = np.array([[0.0, 1.0], [0.0, 1.0]])
        K = data.knn_graph(X, 1, heat_sigma=0.7)
        np.testing.assert_allclose(K, [[1, np.exp(-2 / (2 * 0.49))], [np.exp(-2 / (2 * 0.49)), 1]])

    def test_identical_points(self):
        K = data.knn_graph(np.zeros((2, 4)), 2)
        np.testing.assert_allclose(K, np.ones((4, 4)), atol=1e-12)

    def test_neighbours_brute_force(self):
        X, _, _ = data.synth_circle(20, 0.0, 0.5, 3)
        nbr, _ = data.knn_indices(X, 5)
        for i in range(20):
            d = sorted((float(np.sum((X[:, i] - X[:, j]) ** 2)), j) for j in range(20) if j != i)
            assert set(np.flatnonzero(nbr[i])) == {j for _, j in d[:5]}

    def test_psd_and_symmetric(self, rng):
        K = data.knn_graph(rng.normal(size=(3, 30)), 5)
        assert np.array_equal(K, K.T)
        psd_eigendecompose(K)

    def test_k_too_large(self):
        with pytest.raises(InvalidArgumentError):
            data.knn_graph(np.zeros((2, 3)), 3)


class TestMatrixIO:
    def test_csv_roundtrip(self, tmp_path, rng):
        X = rng.normal(size=(3, 4))
        data.save_matrix_csv(tmp_path / "m.csv", X)
        assert np.array_equal(data.load_matrix(tmp_path / "m.csv"), X)
        assert (tmp_path / "m.csv").read_text().splitlines()[0] == "3,4"

    def test_bin_roundtrip(self, tmp_path, rng):
        X = rng.normal(size=(5, 2))
        data.save_matrix_bin(tmp_path / "m.bin", X)
        raw = (tmp_path / "m.bin").read_bytes()
        assert struct.unpack("<II", raw[:8]) == (5, 2) and len(raw) == 8 + 80
        assert np.array_equal(data.load_matrix(tmp_path / "m.bin"), X)

    def test_bad_csv(self, tmp_path):
        (tmp_path / "b.csv").write_text("2,2\n1,2\n3\n")
        with pytest.raises(FormatError):
            data.load_matrix(tmp_path / "b.csv")

    def test_short_bin(self, tmp_path):
        (tmp_path / "s.bin").write_bytes(b"\x02\x00")
        with pytest.raises(FormatError, match="offset"):
            data.load_matrix(tmp_path / "s.bin")


def test_digits_subset():
    s = data.load_digits_subset(40, (2, 3), seed=1)
    assert len(s) == 40 and s.shape == (8, 8)
    assert set(np.unique(s.labels)) <= {2, 3}
    assert s.images.min() >= 0 and s.images.max() <= 1


def test_imageset_matrix_roundtrip(rng):
    s = ImageSet(rng.uniform(size=(3, 4, 5)))
    X = s.to_matrix()
    assert X.shape == (20, 3)
    np.testing.assert_array_equal(X[:, 1], s.images[1].ravel())
    np.testing.assert_array_equal(ImageSet.from_matrix(X, (4, 5)).images, s.images)
