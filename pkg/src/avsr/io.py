"""Readers and writers for the on-disk formats.

All binary formats are little-endian:

* FEAT  ``b"FEAT" u32 version=1, u32 T, u32 d, T*d f32``
* MODL  ``b"MODL" u32 version, u32 n_blocks, then per block
  u32 name_len, name (utf-8), u32 rows, u32 cols, rows*cols f32``
* FLAB  ``b"FLAB" u32 T, T*u16``
* PRIO  ``b"PRIO" u32 K, K*f64``
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np


class FormatError(ValueError):
    pass


FEAT_VERSION = 1
MODL_VERSION = 1


def _read_magic(buf: bytes, magic: bytes, path, header: int) -> None:
    if buf[:4] != magic:
        raise FormatError(f"{path}: bad magic {buf[:4]!r}, expected {magic!r}")
    if len(buf) < header:
        raise FormatError(f"{path}: truncated header")


def write_feat(path, frames) -> None:
    x = np.ascontiguousarray(frames, dtype="<f4")
    if x.ndim != 2:
        raise ValueError("feature matrix must be 2-d")
    with open(path, "wb") as fh:
        fh.write(b"FEAT" + struct.pack("<III", FEAT_VERSION, *x.shape))
        fh.write(x.tobytes())


def read_feat(path) -> np.ndarray:
    buf = Path(path).read_bytes()
    _read_magic(buf, b"FEAT", path, 16)
    if len(buf) < 16:
        raise FormatError(f"{path}: truncated header")
    version, T, d = struct.unpack_from("<III", buf, 4)
    if version != FEAT_VERSION:
        raise FormatError(f"{path}: unsupported FEAT version {version}")
    if len(buf) != 16 + 4 * T * d:
        raise FormatError(f"{path}: expected {T}x{d} frames, file size {len(buf)}")
    return np.frombuffer(buf, dtype="<f4", offset=16).reshape(T, d).astype(np.float64)


def write_blocks(path, blocks: dict, meta: dict | None = None) -> None:
    """Write named 1-d/2-d arrays as a MODL file.

    ``meta`` integers are stored as 1x1 blocks prefixed with ``meta.``.
    """
    items = [(f"meta.{k}", np.array([[v]])) for k, v in (meta or {}).items()]
    items += list(blocks.items())
    with open(path, "wb") as fh:
        fh.write(b"MODL" + struct.pack("<II", MODL_VERSION, len(items)))
        for name, arr in items:
            a = np.asarray(arr)
            a2 = a.reshape(1, -1) if a.ndim == 1 else a
            raw = name.encode("utf-8")
            fh.write(struct.pack("<I", len(raw)) + raw)
            fh.write(struct.pack("<II", *a2.shape))
            fh.write(np.ascontiguousarray(a2, dtype="<f4").tobytes())


def read_blocks(path):
    """Return ``(blocks, meta)``; 1-row blocks named ``*.b`` come back 1-d."""
    buf = Path(path).read_bytes()
    _read_magic(buf, b"MODL", path, 12)
    version, n = struct.unpack_from("<II", buf, 4)
    if version != MODL_VERSION:
        raise FormatError(f"{path}: unsupported MODL version {version}")
    off = 12
    blocks, meta = {}, {}
    try:
        for _ in range(n):
            (ln,) = struct.unpack_from("<I", buf, off)
            off += 4
            name = buf[off : off + ln].decode("utf-8")
            off += ln
            rows, cols = struct.unpack_from("<II", buf, off)
            off += 8
            a = np.frombuffer(buf, dtype="<f4", count=rows * cols, offset=off).reshape(rows, cols)
            off += 4 * rows * cols
            if name.startswith("meta."):
                meta[name[5:]] = int(a[0, 0])
            elif name.endswith(".b") and rows == 1:
                blocks[name] = a[0].astype(np.float64)
            else:
                blocks[name] = a.astype(np.float64)
    except (struct.error, ValueError) as exc:
        raise FormatError(f"{path}: truncated MODL file ({exc})") from None
    if off != len(buf):
        raise FormatError(f"{path}: {len(buf) - off} trailing bytes")
    return blocks, meta


def write_flab(path, labels) -> None:
    lab = np.asarray(labels)
    if lab.ndim != 1 or (lab.size and (lab.min() < 0 or lab.max() > 0xFFFF)):
        raise ValueError("frame labels must be a 1-d array of u16 values")
    with open(path, "wb") as fh:
        fh.write(b"FLAB" + struct.pack("<I", lab.size))
        fh.write(lab.astype("<u2").tobytes())


def read_flab(path) -> np.ndarray:
    buf = Path(path).read_bytes()
    _read_magic(buf, b"FLAB", path, 8)
    (T,) = struct.unpack_from("<I", buf, 4)
    if len(buf) != 8 + 2 * T:
        raise FormatError(f"{path}: expected {T} labels")
    return np.frombuffer(buf, dtype="<u2", offset=8).astype(np.int64)


def write_priors(path, priors) -> None:
    p = np.asarray(priors, dtype="<f8")
    with open(path, "wb") as fh:
        fh.write(b"PRIO" + struct.pack("<I", p.size))
        fh.write(p.tobytes())


def read_priors(path) -> np.ndarray:
    buf = Path(path).read_bytes()
    _read_magic(buf, b"PRIO", path, 8)
    (K,) = struct.unpack_from("<I", buf, 4)
    if len(buf) != 8 + 8 * K:
        raise FormatError(f"{path}: expected {K} prior entries")
    return np.frombuffer(buf, dtype="<f8", offset=8).copy()


@dataclass(frozen=True)
class UtteranceRecord:
    id: str
    audio_path: str
    video_path: str
    transcript: str


def write_manifest(path, records) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for r in records:
            fh.write(f"{r.id}\t{r.audio_path}\t{r.video_path}\t{r.transcript}\n")


def read_manifest(path) -> list:
    records = []
    with open(path, encoding="utf-8") as fh:
        for n, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 4:
                raise FormatError(f"{path}:{n}: expected 4 tab-separated fields, got {len(parts)}")
            records.append(UtteranceRecord(*parts))
    return records


def write_decodes(path, rows) -> None:
    """``rows`` are ``(id, hypothesis, score)`` triples."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for uid, hyp, score in rows:
            fh.write(f"{uid}\t{hyp}\t{score:.6f}\n")


def read_decodes(path) -> list:
    rows = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            uid, hyp, score = line.rstrip("\n").split("\t")
            rows.append((uid, hyp, float(score)))
    return rows
