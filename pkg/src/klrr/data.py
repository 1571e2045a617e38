"""Datasets, corruption protocols, k-NN graphs and matrix persistence."""
import csv
import io
import os
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.spatial.distance import pdist, squareform

from .errors import FormatError, InvalidArgumentError
from .kernel import as_data_matrix
from .spectral import psd_eigendecompose


@dataclass
class ImageSet:
    """Grayscale images as an ``(n, height, width)`` array with pixels in ``[0, 1]``."""

    images: np.ndarray
    labels: np.ndarray | None = None

    def __post_init__(self):
        self.images = np.asarray(self.images, dtype=np.float64)
        if self.images.ndim != 3:
            raise InvalidArgumentError(f"images must be (n, h, w), got {self.images.shape}")

    def __len__(self):
        return self.images.shape[0]

    @property
    def shape(self):
        return self.images.shape[1:]

    def to_matrix(self):
        """``d x n`` data matrix, one row-major flattened image per column."""
        n = len(self)
        return np.ascontiguousarray(self.images.reshape(n, -1).T)

    @classmethod
    def from_matrix(cls, X, shape, labels=None):
        X = np.asarray(X, dtype=np.float64)
        return cls(X.T.reshape((X.shape[1],) + tuple(shape)), labels)

    def subset(self, idx):
        return ImageSet(self.images[idx], None if self.labels is None else self.labels[idx])


@dataclass(frozen=True)
class CorruptionSpec:
    """How outlier columns are injected.

    ``kind`` is ``"gaussian"`` (i.i.d. noise of std ``scale * ||x||^2`` on every
    entry of a chosen column; ``squared_norm=False`` uses ``scale * ||x||``) or
    ``"occlusion"`` (``blocks`` white ``block_size`` patches per chosen image).
    """

    fraction: float = 0.10
    kind: str = "gaussian"
    scale: float = 0.5
    squared_norm: bool = True
    blocks: int = 3
    block_size: tuple = (4, 4)
    rotation_range_deg: tuple = (-90.0, 90.0)
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.fraction <= 1.0:
            raise InvalidArgumentError(f"fraction must be in [0, 1], got {self.fraction}")
        if self.kind not in ("gaussian", "occlusion"):
            raise InvalidArgumentError(f"unknown corruption kind {self.kind!r}")


# -- IDX ------------------------------------------------------------------

_IDX_DTYPES = {
    0x08: (">u1", 1), 0x09: (">i1", 1), 0x0B: (">i2", 2),
    0x0C: (">i4", 4), 0x0D: (">f4", 4), 0x0E: (">f8", 8),
}


def read_idx_array(path):
    """Parse any IDX file into a numpy array (native byte order)."""
    data = Path(path).read_bytes()
    if len(data) < 4:
        raise FormatError("file too short for IDX magic", offset=len(data), path=path)
    if data[0] != 0 or data[1] != 0:
        raise FormatError(f"bad IDX magic {data[:4].hex()}", offset=0, path=path)
    code, ndim = data[2], data[3]
    if code not in _IDX_DTYPES:
        raise FormatError(f"unknown IDX type code 0x{code:02x}", offset=2, path=path)
    if ndim < 1:
        raise FormatError("IDX file declares zero dimensions", offset=3, path=path)
    header = 4 + 4 * ndim
    if len(data) < header:
        raise FormatError("truncated IDX dimension header", offset=len(data), path=path)
    dims = struct.unpack(f">{ndim}I", data[4:header])
    dtype, size = _IDX_DTYPES[code]
    count = int(np.prod(dims, dtype=np.int64))
    need = header + count * size
    if len(data) < need:
        raise FormatError(f"truncated IDX payload: need {need} bytes, have {len(data)}",
                          offset=len(data), path=path)
    arr = np.frombuffer(data, dtype=dtype, count=count, offset=header).reshape(dims)
    return arr.astype(arr.dtype.newbyteorder("="))


def load_idx(path, labels_path=None):
    """Load an IDX image file (magic ``0x00000803``), pixels scaled to ``[0, 1]``."""
    data = Path(path).read_bytes()
    if len(data) >= 4 and data[:4] != b"\x00\x00\x08\x03":
        raise FormatError(f"expected image magic 00000803, got {data[:4].hex()}", offset=0, path=path)
    images = read_idx_array(path).astype(np.float64) / 255.0
    labels = None
    if labels_path is not None:
        raw = Path(labels_path).read_bytes()
        if len(raw) >= 4 and raw[:4] != b"\x00\x00\x08\x01":
            raise FormatError(f"expected label magic 00000801, got {raw[:4].hex()}",
                              offset=0, path=labels_path)
        labels = read_idx_array(labels_path).astype(np.int64)
        if labels.shape[0] != images.shape[0]:
            raise FormatError(f"{labels.shape[0]} labels for {images.shape[0]} images", path=labels_path)
    return ImageSet(images, labels)


def write_idx(path, images, labels_path=None, labels=None):
    """Write ``uint8`` images (values in ``[0, 1]`` are rescaled to ``0..255``)."""
    images = np.asarray(images)
    if images.dtype != np.uint8:
        images = np.clip(np.rint(np.asarray(images, dtype=np.float64) * 255.0), 0, 255).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(b"\x00\x00\x08" + bytes([images.ndim]))
        fh.write(struct.pack(f">{images.ndim}I", *images.shape))
        fh.write(images.tobytes())
    if labels_path is not None:
        labels = np.asarray(labels, dtype=np.uint8)
        with open(labels_path, "wb") as fh:
            fh.write(b"\x00\x00\x08\x01" + struct.pack(">I", labels.shape[0]) + labels.tobytes())


# -- PGM ------------------------------------------------------------------

def _pgm_tokens(data, count, pos):
    """Read ``count`` whitespace-separated header tokens, skipping ``#`` comments."""
    tokens = []
    n = len(data)
    while len(tokens) < count:
        while pos < n and data[pos:pos + 1].isspace():
            pos += 1
        if pos < n and data[pos:pos + 1] == b"#":
            while pos < n and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < n and not data[pos:pos + 1].isspace() and data[pos:pos + 1] != b"#":
            pos += 1
        if start == pos:
            raise FormatError("unexpected end of PGM header", offset=pos)
        tokens.append(data[start:pos])
    return tokens, pos


def read_pgm(path):
    """Read a binary (P5) or ASCII (P2) PGM image scaled to ``[0, 1]``."""
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise FormatError(f"cannot read: {exc}", path=path) from exc
    try:
        magic = data[:2]
        if magic not in (b"P2", b"P5"):
            raise FormatError(f"not a PGM file (magic {magic!r})", offset=0)
        toks, pos = _pgm_tokens(data, 3, 2)
        try:
            width, height, maxval = (int(t) for t in toks)
        except ValueError:
            raise FormatError(f"non-integer PGM header field in {toks!r}", offset=pos) from None
        if width < 1 or height < 1 or not 0 < maxval < 65536:
            raise FormatError(f"invalid PGM header {width}x{height} maxval {maxval}", offset=pos)
        count = width * height
        if magic == b"P5":
            pos += 1  # single whitespace byte after maxval
            dtype = ">u1" if maxval < 256 else ">u2"
            nbytes = count * np.dtype(dtype).itemsize
            if len(data) < pos + nbytes:
                raise FormatError(f"truncated P5 raster: need {nbytes} bytes", offset=len(data))
            pix = np.frombuffer(data, dtype=dtype, count=count, offset=pos).astype(np.float64)
        else:
            vals, _ = _pgm_tokens(data, count, pos) if count else ([], pos)
            try:
                pix = np.array([int(v) for v in vals], dtype=np.float64)
            except ValueError:
                raise FormatError("non-integer P2 pixel value", offset=pos) from None
        if np.any(pix > maxval):
            raise FormatError(f"pixel exceeds maxval {maxval}", offset=pos)
    except FormatError as exc:
        if exc.path is None:
            raise FormatError(str(exc), path=path) from None
        raise
    return pix.reshape(height, width) / maxval


def write_pgm(path, image, binary=True, maxval=255):
    img = np.clip(np.rint(np.asarray(image, dtype=np.float64) * maxval), 0, maxval).astype(int)
    h, w = img.shape
    with open(path, "wb") as fh:
        if binary:
            fh.write(f"P5\n{w} {h}\n{maxval}\n".encode())
            fh.write(img.astype(">u1" if maxval < 256 else ">u2").tobytes())
        else:
            fh.write(f"P2\n{w} {h}\n{maxval}\n".encode())
            for row in img:
                fh.write((" ".join(str(v) for v in row) + "\n").encode())


def load_pgm_dir(path):
    """Load every ``*.pgm`` file of a directory (sorted by name) into one ImageSet."""
    files = sorted(p for p in Path(path).iterdir() if p.suffix.lower() == ".pgm")
    if not files:
        raise FormatError("no .pgm files found", path=path)
    images = [read_pgm(p) for p in files]
    shapes = {}
    for p, img in zip(files, images):
        shapes.setdefault(img.shape, []).append(p.name)
    if len(shapes) > 1:
        common = max(shapes, key=lambda s: len(shapes[s]))
        bad = sorted(name for s, names in shapes.items() if s != common for name in names)
        raise FormatError(f"mixed image sizes; expected {common[0]}x{common[1]}, offending files: "
                          + ", ".join(bad), path=path)
    return ImageSet(np.stack(images))


# -- transforms -------------------------------------------------------------

def rotate_image(img, angle_deg):
    """Rotate counter-clockwise about the centre; bilinear, zero fill, clamped to [0, 1]."""
    img = np.asarray(img, dtype=np.float64)
    h, w = img.shape
    th = np.deg2rad(angle_deg)
    c, s = np.cos(th), np.sin(th)
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    # output (row, col) -> source via the inverse rotation, with rows pointing down
    dx, dy = xx - cx, cy - yy
    sx = c * dx + s * dy
    sy = -s * dx + c * dy
    src_c = sx + cx
    src_r = cy - sy
    # snap coordinates within round-off of the grid so right angles are exact
    for arr in (src_c, src_r):
        near = np.rint(arr)
        snap = np.abs(arr - near) < 1e-9
        arr[snap] = near[snap]
    r0 = np.floor(src_r).astype(int)
    c0 = np.floor(src_c).astype(int)
    fr = src_r - r0
    fc = src_c - c0
    out = np.zeros_like(img)
    for dr, dc, wgt in ((0, 0, (1 - fr) * (1 - fc)), (0, 1, (1 - fr) * fc),
                        (1, 0, fr * (1 - fc)), (1, 1, fr * fc)):
        rr, cc = r0 + dr, c0 + dc
        ok = (rr >= 0) & (rr < h) & (cc >= 0) & (cc < w) & (wgt != 0)
        out[ok] += wgt[ok] * img[rr[ok], cc[ok]]
    return np.clip(out, 0.0, 1.0)


def rotation_angles(n, range_deg=(-90.0, 90.0), seed=0, mode="random"):
    """``n`` angles: uniform random draws, or evenly spaced over the closed range."""
    lo, hi = range_deg
    if mode == "random":
        return np.random.default_rng(seed).uniform(lo, hi, size=n)
    if mode == "even":
        return np.linspace(lo, hi, n) if n > 1 else np.array([0.5 * (lo + hi)])
    raise InvalidArgumentError(f"unknown rotation mode {mode!r}")


def rotate_images(images, range_deg=(-90.0, 90.0), seed=0):
    """Rotate each image by an angle drawn uniformly from ``range_deg``."""
    angles = rotation_angles(len(images), range_deg, seed)
    out = np.stack([rotate_image(img, a) for img, a in zip(images.images, angles)]) \
        if len(images) else images.images.copy()
    return ImageSet(out, images.labels)


def rotate_copies(images, copies=5, range_deg=(-90.0, 90.0), seed=0, mode="even"):
    """Each image rotated ``copies`` times; output holds ``copies`` rotations per input, in order."""
    out, labels = [], []
    for k, img in enumerate(images.images):
        for a in rotation_angles(copies, range_deg, seed + k, mode):
            out.append(rotate_image(img, a))
            if images.labels is not None:
                labels.append(images.labels[k])
    return ImageSet(np.stack(out), np.array(labels) if labels else None)


def normalize_columns(X):
    """Scale every nonzero column to unit Euclidean norm; zero columns stay zero."""
    X = np.array(X, dtype=np.float64)
    # divide by the max entry first so tiny columns do not underflow when squared
    peak = np.max(np.abs(X), axis=0, initial=0.0)
    nz = peak > 0
    X[:, nz] /= peak[nz]
    X[:, nz] /= np.linalg.norm(X[:, nz], axis=0)
    return X


def corrupt(X, spec, image_shape=None):
    """Corrupt ``floor(fraction * n)`` randomly chosen columns.

    ``X`` is a ``d x n`` matrix or an :class:`ImageSet`.  Occlusion needs the
    image geometry (taken from an ImageSet or ``image_shape``).  Returns
    ``(corrupted, mask)`` with the same container type as the input.
    """
    as_images = isinstance(X, ImageSet)
    if as_images:
        image_shape = X.shape
        M = X.to_matrix()
    else:
        M = as_data_matrix(X).copy()
    d, n = M.shape
    rng = np.random.default_rng(spec.seed)
    k = int(np.floor(spec.fraction * n + 1e-9))
    chosen = np.sort(rng.choice(n, size=k, replace=False)) if k else np.array([], dtype=int)
    mask = np.zeros(n, dtype=bool)
    mask[chosen] = True
    if spec.kind == "gaussian":
        for j in chosen:
            nrm = np.linalg.norm(M[:, j])
            std = spec.scale * (nrm * nrm if spec.squared_norm else nrm)
            noise = rng.normal(0.0, 1.0, size=d)
            if std != 0:
                M[:, j] = M[:, j] + std * noise
    else:
        if image_shape is None:
            raise InvalidArgumentError("occlusion needs image_shape")
        h, w = image_shape
        bh, bw = spec.block_size
        if bh > h or bw > w:
            raise InvalidArgumentError(f"block {bh}x{bw} does not fit a {h}x{w} image")
        for j in chosen:
            img = M[:, j].reshape(h, w)
            for _ in range(spec.blocks):
                r = rng.integers(0, h - bh + 1)
                c = rng.integers(0, w - bw + 1)
                img[r:r + bh, c:c + bw] = 1.0
            M[:, j] = img.ravel()
    if as_images:
        return ImageSet.from_matrix(M, image_shape, X.labels), mask
    return M, mask


def synth_circle(n=100, outlier_fraction=0.1, outlier_scale=0.5, seed=0):
    """Points uniform on the unit circle, a fraction displaced by Gaussian noise.

    Returns ``(X, ground_truth, mask)``; both matrices are ``2 x n``.
    """
    if n < 1:
        raise InvalidArgumentError("n must be >= 1")
    rng = np.random.default_rng(seed)
    theta = rng.uniform(0.0, 2.0 * np.pi, size=n)
    truth = np.vstack([np.cos(theta), np.sin(theta)])
    k = int(np.floor(outlier_fraction * n + 1e-9))
    mask = np.zeros(n, dtype=bool)
    if k:
        mask[rng.choice(n, size=k, replace=False)] = True
    X = truth.copy()
    X[:, mask] += rng.normal(0.0, outlier_scale, size=(2, k))
    return X, truth, mask


def knn_indices(X, k):
    """Neighbour sets (tie-inclusive): ``j`` is a neighbour of ``i`` when its distance
    is at most the ``k``-th smallest distance from ``i`` to the other points."""
    X = as_data_matrix(X)
    n = X.shape[1]
    D = squareform(pdist(X.T, "sqeuclidean")) if n > 1 else np.zeros((1, 1))
    np.fill_diagonal(D, np.inf)
    kth = np.partition(D, k - 1, axis=1)[:, k - 1]
    return D <= kth[:, None], D


def knn_graph(X, k=5, heat_sigma=None):
    """Symmetrised heat-kernel k-NN affinity with unit diagonal, projected onto the PSD cone.

    ``heat_sigma`` defaults to the median pairwise distance.
    """
    X = as_data_matrix(X)
    n = X.shape[1]
    if not 1 <= k < n:
        raise InvalidArgumentError(f"k must satisfy 1 <= k < n={n}, got {k}")
    nbr, D = knn_indices(X, k)
    if heat_sigma is None:
        heat_sigma = float(np.median(np.sqrt(pdist(X.T, "sqeuclidean"))))
        if heat_sigma <= 0:
            heat_sigma = 1.0
    if not heat_sigma > 0:
        raise InvalidArgumentError("heat_sigma must be > 0")
    adj = nbr | nbr.T
    np.fill_diagonal(D, 0.0)
    W = np.where(adj, np.exp(-D / (2.0 * heat_sigma**2)), 0.0)
    np.fill_diagonal(W, 1.0)
    w, V = psd_eigendecompose(W, strict=False)
    w = np.maximum(w, 0.0)
    K = (V * w) @ V.T
    return 0.5 * (K + K.T)


# -- matrix persistence ---------------------------------------------------

def save_matrix_csv(path, X):
    """CSV with a ``rows,cols`` header line followed by the rows."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    buf = io.StringIO()
    buf.write(f"{X.shape[0]},{X.shape[1]}\n")
    for row in X:
        buf.write(",".join(repr(float(v)) for v in row))
        buf.write("\n")
    Path(path).write_text(buf.getvalue())


def load_matrix_csv(path):
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise FormatError(f"cannot read: {exc}", path=path) from exc
    if not rows or len(rows[0]) != 2:
        raise FormatError("missing 'rows,cols' header", offset=0, path=path)
    try:
        r, c = int(rows[0][0]), int(rows[0][1])
        X = np.array([[float(v) for v in row] for row in rows[1:] if row], dtype=np.float64)
    except ValueError as exc:
        raise FormatError(f"bad numeric field: {exc}", path=path) from None
    if r == 0 or c == 0:
        return np.zeros((r, c))
    if X.shape != (r, c):
        raise FormatError(f"header says {r}x{c}, body is {X.shape}", path=path)
    return X


def save_matrix_bin(path, X):
    """Little-endian ``uint32 rows, uint32 cols`` header, then row-major float64."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    with open(path, "wb") as fh:
        fh.write(struct.pack("<II", *X.shape))
        fh.write(X.astype("<f8").tobytes())


def load_matrix_bin(path):
    data = Path(path).read_bytes()
    if len(data) < 8:
        raise FormatError("missing 8-byte dims header", offset=len(data), path=path)
    r, c = struct.unpack("<II", data[:8])
    need = 8 + 8 * r * c
    if len(data) != need:
        raise FormatError(f"expected {need} bytes for {r}x{c}, got {len(data)}",
                          offset=len(data), path=path)
    return np.frombuffer(data, dtype="<f8", offset=8).reshape(r, c).astype(np.float64)


def load_matrix(path):
    """Dispatch on extension: ``.bin`` is raw binary, anything else CSV."""
    return load_matrix_bin(path) if os.fspath(path).endswith(".bin") else load_matrix_csv(path)


def load_digits_subset(n=100, digits=(2, 3), seed=0):
    """Random ``n``-image subset of the 8x8 digit corpus bundled with scikit-learn."""
    from sklearn.datasets import load_digits

    bunch = load_digits()
    keep = np.flatnonzero(np.isin(bunch.target, digits))
    rng = np.random.default_rng(seed)
    idx = np.sort(rng.choice(keep, size=min(n, keep.size), replace=False))
    return ImageSet(bunch.images[idx] / 16.0, bunch.target[idx])
