"""Checkpoint serialisation and binary PPM image files.

Checkpoint layout (all integers unsigned 32-bit little-endian):

    b"GOLF" | version | entry count
    per entry: name length | UTF-8 name | rank | dims... | float64 LE payload
    CRC-32 of every preceding byte

Metadata (config, optimiser step, RNG state) travels as an entry whose name
starts with ``__`` and whose payload holds UTF-8 JSON bytes, one byte per float.
"""
from __future__ import annotations

import json
import struct
import zlib
from pathlib import Path

import numpy as np

MAGIC = b"GOLF"
FORMAT_VERSION = 1
META_PREFIX = "__"


class CheckpointError(Exception):
    pass


class BadMagicError(CheckpointError):
    pass


class VersionMismatchError(CheckpointError):
    pass


class ChecksumError(CheckpointError):
    pass


class TruncatedCheckpointError(CheckpointError):
    pass


class PPMFormatError(ValueError):
    pass


def _encode_meta(meta: dict) -> np.ndarray:
    raw = json.dumps(meta, sort_keys=True).encode("utf-8")
    return np.frombuffer(raw, dtype=np.uint8).astype(np.float64)


def _decode_meta(payload: np.ndarray) -> dict:
    return json.loads(payload.astype(np.uint8).tobytes().decode("utf-8"))


def encode_checkpoint(tensors: dict[str, np.ndarray], meta: dict[str, dict] | None = None) -> bytes:
    entries = {name: np.asarray(arr, dtype=np.float64) for name, arr in tensors.items()}
    for key, value in (meta or {}).items():
        entries[META_PREFIX + key] = _encode_meta(value)
    parts = [MAGIC, struct.pack("<II", FORMAT_VERSION, len(entries))]
    for name, arr in entries.items():
        encoded = name.encode("utf-8")
        parts.append(struct.pack("<I", len(encoded)))
        parts.append(encoded)
        parts.append(struct.pack(f"<I{arr.ndim}I", arr.ndim, *arr.shape))
        parts.append(arr.astype("<f8").tobytes())
    body = b"".join(parts)
    return body + struct.pack("<I", zlib.crc32(body) & 0xFFFFFFFF)


def decode_checkpoint(blob: bytes) -> tuple[dict[str, np.ndarray], dict[str, dict]]:
    if len(blob) < 4 or blob[:4] != MAGIC:
        raise BadMagicError("not a GOLF checkpoint (bad magic)")
    pos = 4

    def take(n: int) -> bytes:
        nonlocal pos
        if pos + n > len(blob) - 4:
            raise TruncatedCheckpointError(f"checkpoint truncated at byte {pos} (needed {n} more)")
        chunk = blob[pos : pos + n]
        pos += n
        return chunk

    (version,) = struct.unpack("<I", take(4))
    if version != FORMAT_VERSION:
        raise VersionMismatchError(f"checkpoint version {version}, expected {FORMAT_VERSION}")
    (count,) = struct.unpack("<I", take(4))
    tensors: dict[str, np.ndarray] = {}
    meta: dict[str, dict] = {}
    for _ in range(count):
        (name_len,) = struct.unpack("<I", take(4))
        name = take(name_len).decode("utf-8")
        (rank,) = struct.unpack("<I", take(4))
        dims = struct.unpack(f"<{rank}I", take(4 * rank))
        n = int(np.prod(dims)) if rank else 1
        arr = np.frombuffer(take(8 * n), dtype="<f8").astype(np.float64).reshape(dims)
        if name in tensors or name[len(META_PREFIX):] in meta:
            raise CheckpointError(f"duplicate entry name {name!r}")
        if name.startswith(META_PREFIX):
            meta[name[len(META_PREFIX):]] = _decode_meta(arr)
        else:
            tensors[name] = arr
    if pos != len(blob) - 4:
        raise TruncatedCheckpointError(f"{len(blob) - 4 - pos} unexpected bytes before checksum")
    (stored,) = struct.unpack("<I", blob[-4:])
    if zlib.crc32(blob[:-4]) & 0xFFFFFFFF != stored:
        raise ChecksumError("checkpoint CRC-32 mismatch")
    return tensors, meta


def save_checkpoint(path, tensors: dict[str, np.ndarray], meta: dict[str, dict] | None = None) -> None:
    Path(path).write_bytes(encode_checkpoint(tensors, meta))


def load_checkpoint(path) -> tuple[dict[str, np.ndarray], dict[str, dict]]:
    return decode_checkpoint(Path(path).read_bytes())


# -- PPM ---------------------------------------------------------------------
def _read_token(data: bytes, pos: int) -> tuple[bytes, int]:
    n = len(data)
    while pos < n:
        if data[pos : pos + 1] == b"#":
            while pos < n and data[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
        elif data[pos : pos + 1].isspace():
            pos += 1
        else:
            break
    start = pos
    while pos < n and not data[pos : pos + 1].isspace() and data[pos : pos + 1] != b"#":
        pos += 1
    if start == pos:
        raise PPMFormatError("malformed PPM header: unexpected end of data")
    return data[start:pos], pos


def decode_ppm(data: bytes) -> np.ndarray:
    """Binary P6 (maxval 255) to an (H, W, 3) float array in [0, 1]."""
    magic, pos = _read_token(data, 0)
    if magic != b"P6":
        raise PPMFormatError(f"unsupported PPM magic {magic!r}; only binary P6 is supported")
    fields = []
    for label in ("width", "height", "maxval"):
        tok, pos = _read_token(data, pos)
        if not tok.isdigit():
            raise PPMFormatError(f"malformed PPM header: {label} is {tok!r}")
        fields.append(int(tok))
    width, height, maxval = fields
    if maxval != 255:
        raise PPMFormatError(f"unsupported PPM maxval {maxval}; only 255 is supported")
    if width < 1 or height < 1:
        raise PPMFormatError(f"malformed PPM header: size {width}x{height}")
    pos += 1  # single whitespace byte before the raster
    need = width * height * 3
    raster = data[pos : pos + need]
    if len(raster) < need:
        raise PPMFormatError(f"truncated PPM pixel data: {len(raster)} of {need} bytes")
    return np.frombuffer(raster, dtype=np.uint8).reshape(height, width, 3).astype(np.float64) / 255.0


def encode_ppm(image: np.ndarray) -> bytes:
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 3 or image.shape[2] != 3:
        raise ValueError(f"expected an (H, W, 3) image, got shape {image.shape}")
    pixels = np.round(np.clip(image, 0.0, 1.0) * 255.0).astype(np.uint8)
    h, w = image.shape[:2]
    return f"P6\n{w} {h}\n255\n".encode("ascii") + pixels.tobytes()


def read_ppm(path) -> np.ndarray:
    path = Path(path)
    try:
        return decode_ppm(path.read_bytes())
    except PPMFormatError as exc:
        raise PPMFormatError(f"{path.name}: {exc}") from None


def write_ppm(image: np.ndarray, path) -> None:
    Path(path).write_bytes(encode_ppm(image))
