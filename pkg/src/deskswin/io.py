"""Checkpoints, PNG output and the metrics CSV. All writes are atomic."""
from __future__ import annotations

import csv
import hashlib
import io as _io
import json
import math
import os
import struct
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

MAGIC = b"DSWCKPT\x00"
FORMAT_VERSION = 1
DIGEST_SIZE = 32

METRIC_COLUMNS = ["iter", "loss_d", "loss_g", "r1", "bcr", "tv", "lr_g", "lr_d",
                  "grad_norm_g", "grad_norm_d", "blocking_score", "proxy_distance"]


class CheckpointError(Exception):
    pass


class CheckpointIntegrityError(CheckpointError):
    """Truncated, corrupt or malformed checkpoint file."""


class CheckpointVersionError(CheckpointError):
    pass


def atomic_write_bytes(path, data: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# -- checkpoints -------------------------------------------------------------

@dataclass
class Checkpoint:
    iteration: int
    tensors: dict = field(default_factory=dict)
    rng_state: dict = field(default_factory=dict)
    config: dict = field(default_factory=dict)
    version: int = FORMAT_VERSION


def _pack_tensor(name: str, arr: np.ndarray) -> bytes:
    arr = np.asarray(arr, order="C")
    le = arr.astype(arr.dtype.newbyteorder("<"), copy=False)
    key = name.encode()
    dtype = le.dtype.str.encode()
    head = struct.pack("<I", len(key)) + key + struct.pack("<B", len(dtype)) + dtype
    head += struct.pack("<B", le.ndim) + struct.pack(f"<{le.ndim}Q", *le.shape)
    raw = le.tobytes()
    return head + struct.pack("<Q", len(raw)) + raw


def encode_checkpoint(ckpt: Checkpoint) -> bytes:
    header = json.dumps({"iteration": ckpt.iteration, "rng_state": ckpt.rng_state,
                         "config": ckpt.config}, sort_keys=True).encode()
    parts = [MAGIC, struct.pack("<I", ckpt.version), struct.pack("<Q", len(header)), header,
             struct.pack("<Q", len(ckpt.tensors))]
    parts += [_pack_tensor(k, ckpt.tensors[k]) for k in sorted(ckpt.tensors)]
    body = b"".join(parts)
    return body + hashlib.sha256(body).digest()


class _Reader:
    def __init__(self, buf: bytes):
        self.buf, self.pos = buf, 0

    def take(self, n: int) -> bytes:
        if n < 0 or self.pos + n > len(self.buf):
            raise CheckpointIntegrityError("checkpoint ends early")
        out = self.buf[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def decode_checkpoint(blob: bytes) -> Checkpoint:
    if len(blob) < len(MAGIC) + 4 + DIGEST_SIZE or not blob.startswith(MAGIC):
        raise CheckpointIntegrityError("not a checkpoint file (bad magic or too short)")
    (version,) = struct.unpack("<I", blob[len(MAGIC):len(MAGIC) + 4])
    if version != FORMAT_VERSION:
        raise CheckpointVersionError(
            f"checkpoint format version {version}, this build reads {FORMAT_VERSION}")
    body, digest = blob[:-DIGEST_SIZE], blob[-DIGEST_SIZE:]
    if hashlib.sha256(body).digest() != digest:
        raise CheckpointIntegrityError("checksum mismatch")
    r = _Reader(body)
    r.take(len(MAGIC) + 4)
    (hlen,) = r.unpack("<Q")
    try:
        header = json.loads(r.take(hlen))
    except ValueError as exc:
        raise CheckpointIntegrityError(f"bad header: {exc}") from exc
    (count,) = r.unpack("<Q")
    tensors = {}
    for _ in range(count):
        (klen,) = r.unpack("<I")
        name = r.take(klen).decode()
        (dlen,) = r.unpack("<B")
        dtype = np.dtype(r.take(dlen).decode())
        (ndim,) = r.unpack("<B")
        shape = r.unpack(f"<{ndim}Q")
        (nbytes,) = r.unpack("<Q")
        if nbytes != dtype.itemsize * math.prod(shape):
            raise CheckpointIntegrityError(f"tensor {name}: size does not match shape")
        arr = np.frombuffer(r.take(nbytes), dtype=dtype).reshape(shape)
        tensors[name] = arr.astype(dtype.newbyteorder("="))
    if r.pos != len(body):
        raise CheckpointIntegrityError("trailing bytes after tensors")
    return Checkpoint(header["iteration"], tensors, header["rng_state"], header["config"], version)


def save_checkpoint(path, ckpt: Checkpoint) -> None:
    atomic_write_bytes(path, encode_checkpoint(ckpt))


def load_checkpoint(path) -> Checkpoint:
    return decode_checkpoint(Path(path).read_bytes())


# -- images ------------------------------------------------------------------

def to_uint8(images) -> np.ndarray:
    """[-1, 1] -> {0..255} by round-half-up of (x + 1) / 2 * 255; no tanh."""
    a = np.asarray(images, dtype=np.float64)
    return np.clip(np.floor((a + 1.0) * 127.5 + 0.5), 0, 255).astype(np.uint8)


def tile_grid(images: np.ndarray, ncols: int | None = None) -> np.ndarray:
    """[N, H, W, C] -> [rows*H, ncols*W, C]; empty cells stay 0."""
    n, h, w, c = images.shape
    ncols = ncols or int(math.ceil(math.sqrt(n)))
    rows = int(math.ceil(n / ncols))
    grid = np.zeros((rows * h, ncols * w, c), dtype=images.dtype)
    for i, im in enumerate(images):
        r, q = divmod(i, ncols)
        grid[r * h:(r + 1) * h, q * w:(q + 1) * w] = im
    return grid


def _write_png(arr: np.ndarray, path) -> None:
    from PIL import Image

    buf = _io.BytesIO()
    mode = "L" if arr.ndim == 2 else "RGB"
    Image.fromarray(arr, mode=mode).save(buf, format="PNG")
    try:
        atomic_write_bytes(path, buf.getvalue())
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror or exc}") from exc


def write_sample_grid(images, path, ncols: int | None = None) -> None:
    arr = np.asarray(getattr(images, "data", images))
    if arr.ndim == 3:
        arr = arr[None]
    _write_png(tile_grid(to_uint8(arr), ncols), path)


def write_heatmap(values, path) -> None:
    """Min-max scaled 8-bit grayscale PNG of a 2D array."""
    a = np.asarray(values, dtype=np.float64)
    span = a.max() - a.min()
    scaled = (a - a.min()) / span if span > 0 else np.zeros_like(a)
    _write_png(np.floor(scaled * 255 + 0.5).astype(np.uint8), path)


def read_png(path) -> np.ndarray:
    from PIL import Image

    with Image.open(path) as im:
        return np.asarray(im).copy()


# -- metrics -----------------------------------------------------------------

def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


class MetricsLog:
    """The metrics CSV, rewritten atomically on every flush."""

    def __init__(self, path):
        self.path = Path(path)
        self.rows: list[dict] = []

    def append(self, row) -> None:
        d = row.as_dict() if hasattr(row, "as_dict") else dict(row)
        self.rows.append({k: d.get(k) for k in METRIC_COLUMNS})

    def truncate(self, before_iter: int) -> None:
        self.rows = [r for r in self.rows if int(r["iter"]) < before_iter]

    def flush(self) -> None:
        buf = _io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(METRIC_COLUMNS)
        for r in self.rows:
            w.writerow([_fmt(r[k]) for k in METRIC_COLUMNS])
        atomic_write_bytes(self.path, buf.getvalue().encode())

    @classmethod
    def load(cls, path) -> "MetricsLog":
        log = cls(path)
        log.rows = read_metrics(path)
        return log


def read_metrics(path) -> list[dict]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != METRIC_COLUMNS:
            raise ValueError(f"{path}: unexpected columns {reader.fieldnames}")
        out = []
        for rec in reader:
            row = {}
            for k in METRIC_COLUMNS:
                v = rec[k]
                row[k] = None if v == "" else (int(v) if k == "iter" else float(v))
            out.append(row)
    return out
