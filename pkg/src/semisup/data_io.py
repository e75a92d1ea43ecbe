"""Dataset ingestion, synthetic generators and result persistence.

IDX layout (big-endian): two zero bytes, an element-type code, the rank, then
``rank`` 4-byte dimensions followed by the row-major payload. The payload
length must match the declared shape exactly.

Results are written as CSV with a header row, comma separator, ``\\n`` line
endings, no quoting, and floats formatted with 17 significant digits so that
reading them back recovers the same doubles.
"""

from __future__ import annotations

import csv
import io
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import mixture as mx
from .errors import IdxFormatError, IdxLengthError, IdxUnsupportedTypeError, InvalidParameterError

IDX_TYPES = {
    0x08: np.dtype(">u1"),
    0x09: np.dtype(">i1"),
    0x0B: np.dtype(">i2"),
    0x0C: np.dtype(">i4"),
    0x0D: np.dtype(">f4"),
    0x0E: np.dtype(">f8"),
}
_CODE_FOR_KIND = {np.dtype(v).str[1:]: k for k, v in IDX_TYPES.items()}


@dataclass(frozen=True)
class IdxTensor:
    element_type: int
    shape: tuple[int, ...]
    data: np.ndarray  # native-endian copy, shaped

    def normalized(self) -> np.ndarray:
        """Pixel values scaled to [0, 1] (unsigned-byte tensors only)."""
        if self.element_type != 0x08:
            raise IdxUnsupportedTypeError("normalization applies to unsigned-byte tensors")
        return self.data.astype(float) / 255.0


def read_idx(raw: bytes) -> IdxTensor:
    raw = bytes(raw)
    if len(raw) < 4:
        raise IdxLengthError("IDX stream shorter than its 4-byte magic")
    if raw[0] != 0 or raw[1] != 0:
        raise IdxFormatError(f"bad IDX magic bytes {raw[0]:#04x} {raw[1]:#04x}")
    code, rank = raw[2], raw[3]
    if code not in IDX_TYPES:
        raise IdxUnsupportedTypeError(f"unknown IDX element type {code:#04x}")
    header = 4 + 4 * rank
    if len(raw) < header:
        raise IdxLengthError(f"IDX header declares rank {rank} but the stream ends early")
    shape = struct.unpack(f">{rank}I", raw[4:header]) if rank else ()
    dt = IDX_TYPES[code]
    expected = math.prod(shape) * dt.itemsize
    if len(raw) - header != expected:
        raise IdxLengthError(f"IDX payload has {len(raw) - header} bytes, expected {expected}")
    data = np.frombuffer(raw, dtype=dt, offset=header).reshape(shape)
    return IdxTensor(code, tuple(int(s) for s in shape), data.astype(dt.newbyteorder("=")))


def write_idx(array, element_type: int | None = None) -> bytes:
    arr = np.asarray(array)
    if element_type is None:
        element_type = _CODE_FOR_KIND.get(arr.dtype.str[1:])
        if element_type is None:
            raise IdxUnsupportedTypeError(f"no IDX element type for dtype {arr.dtype}")
    if element_type not in IDX_TYPES:
        raise IdxUnsupportedTypeError(f"unknown IDX element type {element_type:#04x}")
    head = bytes([0, 0, element_type, arr.ndim]) + struct.pack(f">{arr.ndim}I", *arr.shape)
    return head + arr.astype(IDX_TYPES[element_type]).tobytes()


def load_idx(path) -> IdxTensor:
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise OSError(f"cannot read IDX file {path}: {exc}") from exc
    return read_idx(raw)


def load_idx_pair(images_path, labels_path) -> tuple[np.ndarray, np.ndarray]:
    """Images flattened to rows with pixels in [0, 1], and integer labels."""
    images = load_idx(images_path)
    labels = load_idx(labels_path)
    if images.shape[0] != labels.shape[0]:
        raise IdxFormatError("image and label files hold different numbers of items")
    x = images.normalized().reshape(images.shape[0], -1)
    return x, labels.data.astype(int).reshape(-1)


# --------------------------------------------------------------------------
# Tabular data


@dataclass(frozen=True)
class TabularDataset:
    features: np.ndarray
    labels: np.ndarray | None = None
    labeled_mask: np.ndarray | None = None

    def __post_init__(self):
        x = np.atleast_2d(np.asarray(self.features, dtype=float))
        object.__setattr__(self, "features", x)
        if self.labels is not None:
            y = np.asarray(self.labels).reshape(-1)
            if len(y) != len(x):
                raise InvalidParameterError("label column length differs from the row count")
            object.__setattr__(self, "labels", y)
        if self.labeled_mask is not None:
            m = np.asarray(self.labeled_mask, dtype=bool).reshape(-1)
            if len(m) != len(x):
                raise InvalidParameterError("mask length differs from the row count")
            object.__setattr__(self, "labeled_mask", m)


def read_delimited(path, label_column: str | None = None) -> TabularDataset:
    """Read a numeric CSV with a header; ``label_column`` is split off when given."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise InvalidParameterError(f"{path} is empty")
    header, body = rows[0], rows[1:]
    data = np.array([[float(v) for v in r] for r in body]) if body else np.empty((0, len(header)))
    if label_column is None:
        return TabularDataset(data)
    j = header.index(label_column)
    keep = [i for i in range(len(header)) if i != j]
    return TabularDataset(data[:, keep], data[:, j])


# --------------------------------------------------------------------------
# Generators


@dataclass(frozen=True)
class MixtureScene:
    data: mx.SemiSupDataset
    params: mx.MixtureParams
    rows: np.ndarray
    components: np.ndarray
    labeled_mask: np.ndarray = field(repr=False)

    @property
    def full(self) -> mx.SemiSupDataset:
        """The same rows with every response observed."""
        return mx.SemiSupDataset(self.rows[:, 0], self.rows[:, 1:])


def generate_mixture_scene(prior: mx.NIWMixturePrior, n: int = 175, labeled_x_range=(-1.0, 1.0),
                           rng=None) -> MixtureScene:
    """Draw parameters from the prior, then ``n`` rows ``(y, x)``.

    Rows whose (scalar) x lies in the closed range keep their response; pass
    ``None`` for an empty range. Multivariate x uses the first coordinate.
    """
    if n < 1:
        raise InvalidParameterError("n must be at least 1")
    params = prior.sample(rng)
    rows, comp = mx.simulate_mixture(params, n, rng)
    x0 = rows[:, 1]
    if labeled_x_range is None:
        mask = np.zeros(n, dtype=bool)
    else:
        lo, hi = labeled_x_range
        mask = (x0 >= lo) & (x0 <= hi)
    data = mx.SemiSupDataset(rows[mask, 0], rows[mask, 1:], rows[~mask, 1:])
    return MixtureScene(data, params, rows, comp, mask)


def generate_two_cluster_2d(n: int = 50, noise: float = 0.1, rng=None) -> TabularDataset:
    """Two interleaved half-moons in the plane.

    Class 0 sits on the upper unit semicircle centered at the origin, class 1
    on the lower semicircle centered at ``(1, 0.5)``; angles are uniform on
    ``[0, pi]`` and isotropic Gaussian noise of SD ``noise`` is added. Class
    sizes are ``ceil(n/2)`` and ``floor(n/2)``. The arcs do not intersect, so
    at ``noise = 0`` the classes are separable but not linearly.
    """
    if n < 2:
        raise InvalidParameterError("n must be at least 2")
    if not noise >= 0:
        raise InvalidParameterError("noise must be nonnegative")
    n0 = (n + 1) // 2
    n1 = n - n0
    t0 = rng.uniform(0.0, np.pi, n0)
    t1 = rng.uniform(0.0, np.pi, n1)
    c0 = np.column_stack([np.cos(t0), np.sin(t0)])
    c1 = np.column_stack([1.0 - np.cos(t1), 0.5 - np.sin(t1)])
    x = np.vstack([c0, c1]) + noise * rng.standard_normal((n, 2))
    y = np.concatenate([np.zeros(n0, dtype=int), np.ones(n1, dtype=int)])
    order = rng.permutation(n)
    return TabularDataset(x[order], y[order])


# --------------------------------------------------------------------------
# Results


def _format(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        v = float(value)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return format(v, ".17g")
    return str(value)


def format_results(records: Sequence[Mapping], columns: Sequence[str] | None = None) -> str:
    """CSV text for ``records``; column order is ``columns`` or the first record's key order."""
    if columns is None:
        columns = list(records[0].keys()) if records else []
    out = io.StringIO()
    out.write(",".join(columns) + "\n")
    for rec in records:
        out.write(",".join(_format(rec[c]) for c in columns) + "\n")
    return out.getvalue()


def write_results(records: Sequence[Mapping], path, columns: Sequence[str] | None = None) -> None:
    path = Path(path)
    text = format_results(list(records), columns)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise OSError(f"cannot write results to {path}: {exc}") from exc


def _parse(value: str):
    try:
        return int(value)
    except ValueError:
        pass
    try:
        return float(value)
    except ValueError:
        return value


def read_results(path) -> list[dict]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, [])
        return [dict(zip(header, (_parse(v) for v in row))) for row in reader]


def records_from_columns(**columns: Iterable) -> list[dict]:
    keys = list(columns)
    cols = [list(v) for v in columns.values()]
    return [dict(zip(keys, vals)) for vals in zip(*cols)]
