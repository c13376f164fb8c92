import struct
from pathlib import Path

import numpy as np

from fastrpe.shared.errors import CodecError
from fastrpe.shared.protocol import (
    CHUNK_SIZE, TATT_DTYPE_F64, TATT_HEADER_FMT, TATT_HEADER_SIZE, TATT_MAGIC, TATT_VERSION,
)


def encode_header(rows: int, cols: int) -> bytes:
    return struct.pack(TATT_HEADER_FMT, TATT_MAGIC, TATT_VERSION, TATT_DTYPE_F64, rows, cols)


def decode_header(head: bytes) -> tuple[int, int]:
    if len(head) < TATT_HEADER_SIZE:
        raise CodecError(f"TATT header needs {TATT_HEADER_SIZE} bytes, got {len(head)}")
    magic, version, dtype, rows, cols = struct.unpack(TATT_HEADER_FMT, head[:TATT_HEADER_SIZE])
    if magic != TATT_MAGIC:
        raise CodecError(f"bad magic {magic!r}")
    if version != TATT_VERSION:
        raise CodecError(f"unsupported TATT version {version}")
    if dtype != TATT_DTYPE_F64:
        raise CodecError(f"unsupported TATT dtype {dtype}")
    return rows, cols


def _payload(mat) -> tuple[int, int, bytes]:
    arr = np.asarray(mat, dtype="<f8")
    if arr.ndim != 2:
        raise CodecError(f"only 2-D matrices are encodable, got shape {arr.shape}")
    return arr.shape[0], arr.shape[1], np.ascontiguousarray(arr).tobytes(order="C")


def encode_mat(mat) -> bytes:
    rows, cols, payload = _payload(mat)
    return encode_header(rows, cols) + payload


def decode_mat(blob: bytes) -> np.ndarray:
    rows, cols = decode_header(blob)
    expected = rows * cols * 8
    body = blob[TATT_HEADER_SIZE:]
    if len(body) != expected:
        raise CodecError(f"payload is {len(body)} bytes, header announces {expected}")
    return np.frombuffer(body, dtype="<f8").reshape(rows, cols).astype(np.float64)


def write_mat(path, mat) -> int:
    rows, cols, payload = _payload(mat)
    with open(Path(path), "wb") as f:
        f.write(encode_header(rows, cols))
        for i in range(0, len(payload), CHUNK_SIZE):
            f.write(payload[i:i + CHUNK_SIZE])
    return TATT_HEADER_SIZE + len(payload)


def read_mat(path) -> np.ndarray:
    with open(Path(path), "rb") as f:
        head = f.read(TATT_HEADER_SIZE)
        decode_header(head)
        chunks = []
        for chunk in iter(lambda: f.read(CHUNK_SIZE), b""):
            chunks.append(chunk)
    return decode_mat(head + b"".join(chunks))
