"""Datasets, masks, column sampling and image I/O."""

import csv
import io
import logging
import os
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .linalg import ContractViolation, as_matrix
from .model import Observation

__all__ = [
    "ParseError",
    "MaskedDataset",
    "SamplerState",
    "load_matrix_csv",
    "save_matrix_csv",
    "load_pgm",
    "save_pgm",
    "vectorise_images",
    "devectorise_images",
    "make_block_mask",
    "make_bernoulli_mask",
    "next_index",
    "sample_order",
    "synthetic_lowrank",
    "synthetic_faces",
    "load_dataset",
]

logger = logging.getLogger(__name__)


class ParseError(ValueError):
    def __init__(self, message, line=None, col=None):
        self.line = line
        self.col = col
        where = []
        if line is not None:
            where.append(f"line {line}")
        if col is not None:
            where.append(f"column {col}")
        super().__init__(f"{message} ({', '.join(where)})" if where else message)


@dataclass(frozen=True)
class MaskedDataset:
    """Data matrix ``Y`` (m x n, one item per column) with a binary mask ``M``.

    ``M[i, j] == 1`` marks ``Y[i, j]`` as observed. ``image_shape`` is kept
    when columns are vectorised images so results can be written back out.
    """

    Y: np.ndarray
    M: np.ndarray | None = None
    names: tuple | None = None
    image_shape: tuple | None = None

    def __post_init__(self):
        Y = as_matrix(self.Y, "Y")
        M = np.ones_like(Y) if self.M is None else as_matrix(self.M, "M")
        if M.shape != Y.shape:
            raise ContractViolation(f"mask shape {M.shape} != data shape {Y.shape}")
        if not np.all((M == 0) | (M == 1)):
            raise ContractViolation("mask entries must be 0 or 1")
        if self.names is not None and len(self.names) != Y.shape[1]:
            raise ContractViolation("one name per column is required")
        object.__setattr__(self, "Y", Y)
        object.__setattr__(self, "M", M)
        object.__setattr__(self, "_full", bool(np.all(M == 1)))

    @property
    def shape(self):
        return self.Y.shape

    @property
    def m(self):
        return self.Y.shape[0]

    @property
    def n(self):
        return self.Y.shape[1]

    @property
    def fully_observed(self):
        return self._full

    def observation(self, j):
        mask = None if self.fully_observed else self.M[:, j]
        return Observation(self.Y[:, j], mask, j)

    def masked(self):
        """Observed data with missing entries set to zero."""
        return self.M * self.Y

    def with_mask(self, M):
        return replace(self, M=M)


# -- CSV ---------------------------------------------------------------------

def _parse_row(row, lineno):
    out = []
    for col, cell in enumerate(row, start=1):
        try:
            v = float(cell)
        except ValueError:
            raise ParseError(f"non-numeric cell {cell!r}", lineno, col) from None
        if not np.isfinite(v):
            raise ParseError(f"non-finite cell {cell!r}", lineno, col)
        out.append(v)
    return out


def load_matrix_csv(path):
    """Read a rectangular numeric CSV; a non-numeric first row is a header."""
    with open(path, newline="") as fh:
        rows = [(i, r) for i, r in enumerate(csv.reader(fh), start=1) if r]
    if not rows:
        raise ParseError("empty file")
    first_line, first = rows[0]
    try:
        _parse_row(first, first_line)
    except ParseError:
        rows = rows[1:]
    if not rows:
        raise ParseError("no data rows")
    width = len(rows[0][1])
    data = []
    for lineno, row in rows:
        if len(row) != width:
            raise ParseError(f"expected {width} fields, got {len(row)}", lineno)
        data.append(_parse_row(row, lineno))
    return np.array(data, dtype=float)


def save_matrix_csv(path, A, header=None, digits=17):
    A = as_matrix(A)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if header is not None:
            w.writerow(header)
        for row in A:
            w.writerow([f"{v:.{digits}g}" for v in row])


# -- PGM ---------------------------------------------------------------------

def _pgm_tokens(data):
    """Yield (token, end_offset) for header fields, skipping comments."""
    pos = 0
    n = len(data)
    while pos < n:
        c = data[pos:pos + 1]
        if c.isspace():
            pos += 1
        elif c == b"#":
            while pos < n and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
        else:
            start = pos
            while pos < n and not data[pos:pos + 1].isspace() and data[pos:pos + 1] != b"#":
                pos += 1
            yield data[start:pos], pos


def load_pgm(path):
    """Read a P2 (ASCII) or P5 (binary) greymap, scaled to [0, 1]."""
    data = Path(path).read_bytes()
    tokens = _pgm_tokens(data)
    header = []
    end = 0
    try:
        for _ in range(4):
            tok, end = next(tokens)
            header.append(tok)
    except StopIteration:
        raise ParseError("truncated PGM header") from None
    magic = header[0]
    if magic not in (b"P2", b"P5"):
        raise ParseError(f"unsupported magic {magic!r}")
    try:
        width, height, maxval = (int(t) for t in header[1:])
    except ValueError:
        raise ParseError("non-integer PGM header field") from None
    if width < 1 or height < 1:
        raise ParseError(f"bad image size {width}x{height}")
    if not 1 <= maxval <= 65535:
        raise ParseError(f"maxval {maxval} outside [1, 65535]")
    count = width * height

    if magic == b"P5":
        body = data[end + 1:]
        dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
        if len(body) < count * dtype.itemsize:
            raise ParseError("truncated PGM pixel data")
        pixels = np.frombuffer(body, dtype=dtype, count=count).astype(float)
    else:
        values = []
        for tok, _ in tokens:
            values.append(tok)
            if len(values) == count:
                break
        if len(values) != count:
            raise ParseError("truncated PGM pixel data")
        try:
            pixels = np.array([int(v) for v in values], dtype=float)
        except ValueError:
            raise ParseError("non-integer PGM pixel") from None
    if np.any(pixels > maxval):
        raise ParseError("pixel value exceeds maxval")
    return pixels.reshape(height, width) / maxval


def save_pgm(path, A, vmin=0.0, vmax=1.0, maxval=255, binary=True):
    """Write ``A`` as a greymap, mapping ``[vmin, vmax]`` onto ``[0, maxval]``."""
    A = as_matrix(A)
    if not vmax > vmin:
        raise ContractViolation("vmax must exceed vmin")
    if not 1 <= maxval <= 65535:
        raise ContractViolation("maxval must lie in [1, 65535]")
    scaled = (np.clip(A, vmin, vmax) - vmin) / (vmax - vmin)
    q = np.rint(scaled * maxval).astype(np.int64)
    h, w = A.shape
    if binary:
        dtype = ">u2" if maxval > 255 else "u1"
        payload = f"P5\n{w} {h}\n{maxval}\n".encode() + q.astype(dtype).tobytes()
    else:
        buf = io.StringIO()
        buf.write(f"P2\n{w} {h}\n{maxval}\n")
        for row in q:
            buf.write(" ".join(str(v) for v in row) + "\n")
        payload = buf.getvalue().encode()
    Path(path).write_bytes(payload)


# -- images <-> columns --------------------------------------------------------

def vectorise_images(images):
    """Stack same-shaped images as column-major vectorised columns."""
    images = [np.asarray(im, dtype=float) for im in images]
    if not images:
        raise ContractViolation("no images given")
    shape = images[0].shape
    if any(im.shape != shape or im.ndim != 2 for im in images):
        raise ContractViolation("all images must be 2-D and share one shape")
    return np.stack([im.reshape(-1, order="F") for im in images], axis=1)


def devectorise_images(Y, shape):
    Y = as_matrix(Y)
    h, w = shape
    if Y.shape[0] != h * w:
        raise ContractViolation(f"{Y.shape[0]} rows cannot form {h}x{w} images")
    return [Y[:, j].reshape((h, w), order="F") for j in range(Y.shape[1])]


# -- masks ----------------------------------------------------------------------

def make_block_mask(m, n, fraction=0.25, block_len=None, seed=0):
    """Per-column occlusion by contiguous runs of zeros.

    Each column gets ``ceil(fraction * m / block_len)`` runs of length
    ``block_len`` (the last one trimmed so the count of zeros is exactly
    ``ceil(fraction * m)`` when that fits), placed at random start offsets.
    With the default ``block_len = ceil(m / 4)`` and ``fraction = 0.25`` every
    column loses one contiguous quarter.
    """
    if not 0 <= fraction <= 1:
        raise ContractViolation("fraction must lie in [0, 1]")
    if block_len is None:
        block_len = max(1, -(-m // 4))
    if block_len < 1:
        raise ContractViolation("block_len must be >= 1")
    block_len = min(block_len, m)
    rng = np.random.default_rng(seed)
    M = np.ones((m, n))
    target = int(np.ceil(fraction * m - 1e-9))
    if target == 0:
        return M
    for j in range(n):
        col = M[:, j]
        removed = 0
        # bounded retries: overlapping runs remove fewer entries than asked
        for _ in range(100 * m):
            if removed >= target:
                break
            length = min(block_len, target - removed)
            start = rng.integers(0, m - length + 1)
            seg = col[start:start + length]
            removed += int(seg.sum())
            seg[:] = 0
        if removed < target:
            col[np.flatnonzero(col)[: target - removed]] = 0
    return M


def make_bernoulli_mask(m, n, fraction=0.25, seed=0):
    """Entries dropped independently with probability ``fraction``."""
    if not 0 <= fraction <= 1:
        raise ContractViolation("fraction must lie in [0, 1]")
    rng = np.random.default_rng(seed)
    return (rng.random((m, n)) >= fraction).astype(float)


# -- sampling ------------------------------------------------------------------

@dataclass(frozen=True)
class SamplerState:
    """Column sampler as a value.

    ``mode`` is ``"epoch"`` (a fresh seeded permutation of all columns per
    pass) or ``"replacement"`` (independent uniform draws).
    """

    mode: str = "epoch"
    seed: int = 0
    position: int = 0

    def __post_init__(self):
        if self.mode not in ("epoch", "replacement"):
            raise ContractViolation(f"unknown sampler mode {self.mode!r}")


def _epoch_perm(seed, n, epoch):
    return np.random.default_rng([seed, epoch]).permutation(n)


def next_index(sampler, n):
    """Draw the next column index; returns ``(index, new_sampler)``."""
    if n < 1:
        raise ContractViolation("n must be >= 1")
    k = sampler.position
    if sampler.mode == "epoch":
        idx = int(_epoch_perm(sampler.seed, n, k // n)[k % n])
    else:
        idx = int(np.random.default_rng([sampler.seed, k]).integers(n))
    return idx, replace(sampler, position=k + 1)


def sample_order(n, count, mode="epoch", seed=0, start=0):
    """``count`` consecutive draws of :func:`next_index` as one array."""
    if mode == "epoch" and n >= 1:
        first, last = start // n, (start + count) // n + 1
        perms = np.concatenate([_epoch_perm(seed, n, e) for e in range(first, last)])
        off = start - first * n
        return perms[off:off + count].astype(np.int64)
    sampler = SamplerState(mode, seed, start)
    out = np.empty(count, dtype=np.int64)
    for t in range(count):
        out[t], sampler = next_index(sampler, n)
    return out


# -- synthetic data -------------------------------------------------------------

def synthetic_lowrank(m, n, rank, seed=0, nonnegative=False):
    """Exact low-rank data ``Y = C X``; returns ``(Y, C, X)``.

    Gaussian factors by default; ``nonnegative=True`` draws half-normal
    dictionary columns and uniform coefficients so NMF applies.
    """
    rng = np.random.default_rng(seed)
    if nonnegative:
        C = np.abs(rng.standard_normal((m, rank)))
        X = rng.random((rank, n))
    else:
        C = rng.standard_normal((m, rank))
        X = rng.standard_normal((rank, n))
    return C @ X, C, X


def synthetic_faces(n, height=64, width=64, rank=8, seed=0):
    """Smooth non-negative low-rank images standing in for a face dataset.

    Each basis image is a sum of a few Gaussian blobs; each item mixes the
    bases with uniform weights. Values lie in [0, 1]. Returns a
    :class:`MaskedDataset` with ``image_shape`` set.
    """
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:height, 0:width]
    bases = []
    for _ in range(rank):
        img = np.zeros((height, width))
        for _ in range(3):
            cy, cx = rng.uniform(0, height), rng.uniform(0, width)
            s = rng.uniform(0.08, 0.25) * min(height, width)
            img += np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2 * s * s))
        bases.append(img)
    B = vectorise_images(bases)
    W = rng.random((rank, n))
    Y = B @ W
    Y /= Y.max()
    return MaskedDataset(Y, image_shape=(height, width))


def load_dataset(path):
    """Load a CSV matrix or a directory of PGM images (one image per column)."""
    path = Path(path)
    if path.is_dir():
        files = sorted(p for p in path.rglob("*.pgm"))
        if not files:
            raise FileNotFoundError(f"no .pgm files under {path}")
        images = [load_pgm(p) for p in files]
        names = tuple(os.path.relpath(p, path) for p in files)
        return MaskedDataset(vectorise_images(images), names=names,
                             image_shape=images[0].shape)
    if not path.exists():
        raise FileNotFoundError(path)
    if path.suffix.lower() == ".pgm":
        img = load_pgm(path)
        return MaskedDataset(vectorise_images([img]), image_shape=img.shape)
    return MaskedDataset(load_matrix_csv(path))
