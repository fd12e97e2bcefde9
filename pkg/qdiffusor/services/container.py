"""
QMAP1 tensor container.

    b"QMAP1" | header length (uint32, little-endian) | UTF-8 JSON header | payloads

The header is {"entries": [{"name", "dtype": "f32", "shape", "units"}], "meta": {...}}; payloads
are little-endian float32, row-major, concatenated in header order.
"""

import json
import logging
import os
import struct
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from qdiffusor.utils.errors import ContainerError, HeaderDecodeError, MagicMismatchError, TruncatedPayloadError

log = logging.getLogger("qdiffusor.io")

MAGIC = b"QMAP1"
_LENGTH = struct.Struct("<I")
_DTYPE = np.dtype("<f4")


@dataclass
class Container:
    entries: dict[str, np.ndarray] = field(default_factory=dict)
    units: dict[str, str] = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    def __getitem__(self, name: str) -> np.ndarray:
        return self.entries[name]

    def __contains__(self, name: str) -> bool:
        return name in self.entries


def encode(entries: dict[str, np.ndarray], meta: dict | None = None, units: dict[str, str] | None = None) -> bytes:
    units = units or {}
    arrays = {name: np.ascontiguousarray(value, dtype=_DTYPE) for name, value in entries.items()}
    header = {
        "entries": [
            {"name": name, "dtype": "f32", "shape": list(array.shape), "units": units.get(name, "")}
            for name, array in arrays.items()
        ],
        "meta": meta or {},
    }
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    payload = b"".join(array.tobytes() for array in arrays.values())
    return MAGIC + _LENGTH.pack(len(header_bytes)) + header_bytes + payload


def _parse_header(data: bytes, source) -> tuple[dict, int]:
    if data[: len(MAGIC)] != MAGIC:
        raise MagicMismatchError(source, f"expected magic {MAGIC!r}, found {bytes(data[: len(MAGIC)])!r}")
    start = len(MAGIC) + _LENGTH.size
    if len(data) < start:
        raise TruncatedPayloadError(source, "file ends inside the header length field")
    (length,) = _LENGTH.unpack_from(data, len(MAGIC))
    if len(data) < start + length:
        raise TruncatedPayloadError(source, f"header declares {length} bytes, only {len(data) - start} present")
    try:
        header = json.loads(bytes(data[start : start + length]).decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as err:
        raise HeaderDecodeError(source, f"header is not valid UTF-8 JSON: {err}") from err
    if not isinstance(header, dict) or not isinstance(header.get("entries"), list):
        raise HeaderDecodeError(source, "header needs an 'entries' list")
    for entry in header["entries"]:
        if not isinstance(entry, dict) or not {"name", "dtype", "shape"} <= set(entry):
            raise HeaderDecodeError(source, f"malformed entry {entry!r}")
        if entry["dtype"] != "f32":
            raise HeaderDecodeError(source, f"entry {entry['name']!r} has unsupported dtype {entry['dtype']!r}")
        if not all(isinstance(d, int) and d >= 0 for d in entry["shape"]):
            raise HeaderDecodeError(source, f"entry {entry['name']!r} has invalid shape {entry['shape']!r}")
    return header, start + length


def decode(data: bytes, source="<memory>") -> Container:
    header, offset = _parse_header(data, source)
    container = Container(meta=header.get("meta", {}))
    for entry in header["entries"]:
        count = int(np.prod(entry["shape"], dtype=np.int64))
        end = offset + count * _DTYPE.itemsize
        if end > len(data):
            raise TruncatedPayloadError(source, f"payload of {entry['name']!r} needs {end} bytes, file has {len(data)}")
        if count:
            array = np.frombuffer(data, dtype=_DTYPE, count=count, offset=offset).astype(np.float32)
        else:
            array = np.zeros(0, dtype=np.float32)
        container.entries[entry["name"]] = array.reshape(entry["shape"])
        container.units[entry["name"]] = entry.get("units", "")
        offset = end
    if offset != len(data):
        raise ContainerError(source, f"{len(data) - offset} trailing bytes after the last payload")
    return container


def write_container(
    path: str | Path, entries: dict[str, np.ndarray], meta: dict | None = None, units: dict[str, str] | None = None
) -> Path:
    """Write atomically: a temp file in the target directory renamed over the destination."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    data = encode(entries, meta, units)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "wb") as handle:
            handle.write(data)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise
    log.debug(f"Wrote {len(entries)} entries ({len(data)} bytes) to {path}.")
    return path


def read_container(path: str | Path) -> Container:
    path = Path(path)
    container = decode(path.read_bytes(), path)
    log.debug(f"Read {len(container.entries)} entries from {path}.")
    return container


def read_header(path: str | Path) -> dict:
    """Header only; payloads are not touched beyond what the header declares."""
    path = Path(path)
    with path.open("rb") as handle:
        prefix = handle.read(len(MAGIC) + _LENGTH.size)
        if prefix[: len(MAGIC)] != MAGIC or len(prefix) < len(MAGIC) + _LENGTH.size:
            _parse_header(prefix, path)
        (length,) = _LENGTH.unpack_from(prefix, len(MAGIC))
        header, _ = _parse_header(prefix + handle.read(length), path)
    return header
