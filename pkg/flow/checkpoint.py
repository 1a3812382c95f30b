"""Binary checkpoint container.

Layout (all integers little-endian):

    magic        4 bytes   b"NFVC"
    version      uint32
    meta_len     uint32
    metadata     meta_len bytes of UTF-8 JSON
    count        uint32
    directory    count entries of
                   name_len uint16, name (UTF-8), ndim uint8,
                   dims ndim x uint32, offset uint64, nbytes uint64
    blobs        raw little-endian float32 data; offsets are relative to
                 the first byte after the directory
"""
import json
import logging
import os
import struct
from typing import Dict, Tuple

import numpy as np

from config import LOG_DIR
from errors import FormatError

os.makedirs(LOG_DIR, exist_ok=True)
logging.basicConfig(
    level=logging.INFO,
    format='%(asctime)s - %(levelname)s - %(message)s',
    handlers=[
        logging.FileHandler(os.path.join(LOG_DIR, "checkpoint.log"), mode='a'),
    ]
)
logger = logging.getLogger(__name__)

CHECKPOINT_MAGIC = b"NFVC"
CHECKPOINT_VERSION = 1
BLOB_DTYPE = np.dtype("<f4")


def encode_checkpoint(metadata: Dict[str, object], tensors: Dict[str, np.ndarray]) -> bytes:
    meta_bytes = json.dumps(metadata, sort_keys=True).encode("utf-8")
    header = [CHECKPOINT_MAGIC, struct.pack("<II", CHECKPOINT_VERSION, len(meta_bytes)), meta_bytes,
              struct.pack("<I", len(tensors))]
    blobs = []
    offset = 0
    for name in sorted(tensors):
        array = np.ascontiguousarray(tensors[name], dtype=BLOB_DTYPE)
        if not np.all(np.isfinite(array)):
            raise FormatError(f"Tensor '{name}' contains non-finite values")
        name_bytes = name.encode("utf-8")
        entry = struct.pack("<H", len(name_bytes)) + name_bytes + struct.pack("<B", array.ndim)
        entry += struct.pack(f"<{array.ndim}I", *array.shape)
        entry += struct.pack("<QQ", offset, array.nbytes)
        header.append(entry)
        blobs.append(array.tobytes())
        offset += array.nbytes
    return b"".join(header + blobs)


def _read(payload: bytes, cursor: int, fmt: str) -> Tuple[tuple, int]:
    size = struct.calcsize(fmt)
    if cursor + size > len(payload):
        raise FormatError("Checkpoint is truncated")
    return struct.unpack_from(fmt, payload, cursor), cursor + size


def decode_checkpoint(payload: bytes) -> Tuple[Dict[str, object], Dict[str, np.ndarray]]:
    if payload[:4] != CHECKPOINT_MAGIC:
        raise FormatError(f"Not a checkpoint: bad magic bytes {payload[:4]!r}")
    (version, meta_len), cursor = _read(payload, 4, "<II")
    if version != CHECKPOINT_VERSION:
        raise FormatError(f"Unsupported checkpoint version {version} (expected {CHECKPOINT_VERSION})")
    if cursor + meta_len > len(payload):
        raise FormatError("Checkpoint is truncated")
    try:
        metadata = json.loads(payload[cursor:cursor + meta_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise FormatError(f"Checkpoint metadata is not valid JSON: {e}") from e
    cursor += meta_len

    (count,), cursor = _read(payload, cursor, "<I")
    directory = []
    for _ in range(count):
        (name_len,), cursor = _read(payload, cursor, "<H")
        if cursor + name_len > len(payload):
            raise FormatError("Checkpoint is truncated")
        name = payload[cursor:cursor + name_len].decode("utf-8")
        cursor += name_len
        (ndim,), cursor = _read(payload, cursor, "<B")
        shape, cursor = _read(payload, cursor, f"<{ndim}I")
        (offset, nbytes), cursor = _read(payload, cursor, "<QQ")
        directory.append((name, shape, offset, nbytes))

    tensors = {}
    for name, shape, offset, nbytes in directory:
        start = cursor + offset
        expected = int(np.prod(shape)) * BLOB_DTYPE.itemsize
        if nbytes != expected or start + nbytes > len(payload):
            raise FormatError(f"Tensor '{name}' is truncated or has an inconsistent size")
        tensors[name] = np.frombuffer(payload, dtype=BLOB_DTYPE, count=int(np.prod(shape)), offset=start).reshape(shape).copy()
    return metadata, tensors


def save_checkpoint(path: str, metadata: Dict[str, object], tensors: Dict[str, np.ndarray]) -> str:
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    payload = encode_checkpoint(metadata, tensors)
    with open(path, "wb") as f:
        f.write(payload)
    logger.info(f"Saved checkpoint with {len(tensors)} tensors to {path} ({len(payload)} bytes)")
    return path


def load_checkpoint(path: str) -> Tuple[Dict[str, object], Dict[str, np.ndarray]]:
    if not os.path.exists(path):
        raise FormatError(f"Checkpoint not found: {path}")
    with open(path, "rb") as f:
        payload = f.read()
    metadata, tensors = decode_checkpoint(payload)
    logger.info(f"Loaded checkpoint with {len(tensors)} tensors from {path}")
    return metadata, tensors


def split_section(tensors: Dict[str, np.ndarray], prefix: str) -> Dict[str, np.ndarray]:
    """Tensors under `prefix/`, with the prefix stripped."""
    marker = prefix.rstrip("/") + "/"
    return {name[len(marker):]: value for name, value in tensors.items() if name.startswith(marker)}


def with_prefix(tensors: Dict[str, np.ndarray], prefix: str) -> Dict[str, np.ndarray]:
    return {f"{prefix}/{name}": value for name, value in tensors.items()}
