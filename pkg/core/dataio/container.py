"""Single-file MGIK container.

Layout, little-endian::

    magic "MGIK" | version u16 (major << 8 | minor) | section count u32
    section table, one entry per section:
        name length u16 | name utf-8 | dtype code u8 | ndim u8 | shape u64 * ndim
        | offset u64 | nbytes u64 | crc32 u32
    section payloads, contiguous, in table order

Metadata travels as a JSON section named ``__meta__``.
"""

import json
import os
import struct
import zlib
from pathlib import Path
from typing import Any, Dict, Tuple, Union

import numpy as np
from loguru import logger

from core.errors import ContainerChecksumError, ContainerFormatError, ContainerTruncatedError, ContainerVersionError

MAGIC = b"MGIK"
FORMAT_VERSION: Tuple[int, int] = (1, 1)
META_SECTION = "__meta__"

_HEADER = struct.Struct("<4sHI")
_DTYPES = {
    1: np.dtype("<f4"),
    2: np.dtype("<f8"),
    3: np.dtype("<i4"),
    4: np.dtype("<i8"),
    5: np.dtype("u1"),
    6: np.dtype("i1"),
}

PathLike = Union[str, Path]


def _pack_version(version: Tuple[int, int]) -> int:
    major, minor = version
    return (major << 8) | minor


def _dtype_code(array: np.ndarray) -> int:
    for code, dtype in _DTYPES.items():
        if array.dtype.kind == dtype.kind and array.dtype.itemsize == dtype.itemsize:
            return code
    raise ContainerFormatError(f"Unsupported array dtype {array.dtype}")


def write_container(
    path: PathLike,
    sections: Dict[str, np.ndarray],
    meta: Dict[str, Any],
    version: Tuple[int, int] = FORMAT_VERSION,
) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)

    payloads = []
    entries = []
    items = list(sections.items())
    items.append((META_SECTION, np.frombuffer(json.dumps(meta, sort_keys=True).encode("utf-8"), dtype=np.uint8)))
    for name, array in items:
        array = np.asarray(array)
        code = _dtype_code(array)
        data = np.ascontiguousarray(array, dtype=_DTYPES[code]).tobytes()
        entries.append((name.encode("utf-8"), code, array.shape, len(data), zlib.crc32(data) & 0xFFFFFFFF))
        payloads.append(data)

    table_size = sum(2 + len(name) + 2 + 8 * len(shape) + 8 + 8 + 4 for name, _, shape, _, _ in entries)
    offset = _HEADER.size + table_size
    table = bytearray()
    for (name, code, shape, nbytes, crc), data in zip(entries, payloads):
        table += struct.pack("<H", len(name)) + name
        table += struct.pack("<BB", code, len(shape))
        table += struct.pack(f"<{len(shape)}Q", *shape)
        table += struct.pack("<QQI", offset, nbytes, crc)
        offset += nbytes

    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "wb") as f:
        f.write(_HEADER.pack(MAGIC, _pack_version(version), len(entries)))
        f.write(bytes(table))
        for data in payloads:
            f.write(data)
    os.replace(tmp, path)
    logger.debug(f"wrote container {path} ({len(entries)} sections, v{version[0]}.{version[1]})")
    return path


def read_container(path: PathLike) -> Tuple[Dict[str, np.ndarray], Dict[str, Any], Tuple[int, int]]:
    """Read a container written by any 1.x writer.

    Returns:
        (sections, meta, version)
    """
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) >= len(MAGIC) and raw[:len(MAGIC)] != MAGIC:
        raise ContainerFormatError(f"{path} is not an MGIK container (magic {raw[:len(MAGIC)]!r})")
    if len(raw) < _HEADER.size:
        raise ContainerTruncatedError(f"{path} is shorter than the container header")
    _, packed, count = _HEADER.unpack_from(raw, 0)

    version = (packed >> 8, packed & 0xFF)
    if version[0] != FORMAT_VERSION[0]:
        raise ContainerVersionError(
            f"{path} has format v{version[0]}.{version[1]}, this reader supports v{FORMAT_VERSION[0]}.x",
            found=version,
            supported=FORMAT_VERSION,
        )
    if version != FORMAT_VERSION:
        logger.warning(
            f"{path} has format v{version[0]}.{version[1]}, reading with v{FORMAT_VERSION[0]}.{FORMAT_VERSION[1]} reader"
        )

    pos = _HEADER.size
    sections: Dict[str, np.ndarray] = {}
    meta: Dict[str, Any] = {}
    try:
        for _ in range(count):
            (name_len,) = struct.unpack_from("<H", raw, pos)
            pos += 2
            try:
                name = raw[pos:pos + name_len].decode("utf-8")
            except UnicodeDecodeError:
                raise ContainerFormatError(f"{path}: section name at byte {pos} is not utf-8") from None
            pos += name_len
            code, ndim = struct.unpack_from("<BB", raw, pos)
            pos += 2
            shape = struct.unpack_from(f"<{ndim}Q", raw, pos)
            pos += 8 * ndim
            offset, nbytes, crc = struct.unpack_from("<QQI", raw, pos)
            pos += 20
            if code not in _DTYPES:
                raise ContainerFormatError(f"{path}: section '{name}' has unknown dtype code {code}")
            if offset + nbytes > len(raw):
                raise ContainerTruncatedError(f"{path}: section '{name}' runs past the end of the file")
            data = raw[offset:offset + nbytes]
            if zlib.crc32(data) & 0xFFFFFFFF != crc:
                raise ContainerChecksumError(f"{path}: checksum mismatch in section '{name}'", section=name)
            try:
                array = np.frombuffer(data, dtype=_DTYPES[code]).reshape(shape).copy()
            except ValueError as e:
                raise ContainerFormatError(f"{path}: section '{name}' holds {nbytes} bytes, not shape {tuple(shape)} ({e})") from None
            if name == META_SECTION:
                try:
                    meta = json.loads(array.tobytes().decode("utf-8"))
                except ValueError as e:
                    raise ContainerFormatError(f"{path}: metadata is not valid JSON ({e})") from None
            else:
                sections[name] = array
            logger.debug(f"read section {name} {tuple(shape)}")
    except struct.error as e:
        raise ContainerTruncatedError(f"{path}: section table is truncated ({e})")
    return sections, meta, version
