"""Binary parameter container.

Layout (all integers little-endian)::

    magic      8 bytes   b"FFCAPARM"
    version    uint32    currently 1
    meta_len   uint32    length of the UTF-8 metadata text that follows
    meta       bytes     free-form text, JSON by convention (may be empty)
    count      uint32    number of named arrays
    count x {
        name_len  uint16
        name      bytes (UTF-8)
        ndim      uint8
        dims      ndim x uint32
    }
    payload    float64 little-endian, arrays concatenated in header order (C order)

Complex arrays are stored as two entries, ``<name>.re`` and ``<name>.im``.
"""
import struct

import numpy as np

from ..exceptions import FastFCAError

MAGIC = b"FFCAPARM"
VERSION = 1


class CheckpointError(FastFCAError, ValueError):
    pass


def _split_complex(arrays):
    out = {}
    for name, arr in arrays.items():
        arr = np.asarray(arr)
        if np.iscomplexobj(arr):
            out[f"{name}.re"] = arr.real
            out[f"{name}.im"] = arr.imag
        else:
            out[name] = arr
    return out


def save_arrays(path, arrays, metadata=""):
    """Write a mapping name -> array (real or complex) to ``path``."""
    arrays = _split_complex(arrays)
    meta = metadata.encode("utf-8")
    header = [MAGIC, struct.pack("<II", VERSION, len(meta)), meta, struct.pack("<I", len(arrays))]
    payload = []
    for name, arr in arrays.items():
        arr = np.ascontiguousarray(arr, dtype="<f8")
        raw = name.encode("utf-8")
        header.append(struct.pack("<H", len(raw)) + raw)
        header.append(struct.pack("<B", arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape))
        payload.append(arr.tobytes())
    with open(path, "wb") as fh:
        fh.write(b"".join(header))
        fh.write(b"".join(payload))


def load_arrays(path, merge_complex=True):
    """Read a container; returns ``(arrays, metadata)``."""
    with open(path, "rb") as fh:
        buf = fh.read()
    if buf[:8] != MAGIC:
        raise CheckpointError(f"{path}: not a parameter container")
    pos = 8
    try:
        version, meta_len = struct.unpack_from("<II", buf, pos)
        pos += 8
        if version != VERSION:
            raise CheckpointError(f"{path}: unsupported container version {version}")
        metadata = buf[pos:pos + meta_len].decode("utf-8")
        pos += meta_len
        (count,) = struct.unpack_from("<I", buf, pos)
        pos += 4
        entries = []
        for _ in range(count):
            (nlen,) = struct.unpack_from("<H", buf, pos)
            pos += 2
            name = buf[pos:pos + nlen].decode("utf-8")
            pos += nlen
            (ndim,) = struct.unpack_from("<B", buf, pos)
            pos += 1
            dims = struct.unpack_from(f"<{ndim}I", buf, pos)
            pos += 4 * ndim
            entries.append((name, tuple(dims)))
    except struct.error as exc:
        raise CheckpointError(f"{path}: truncated header") from exc
    arrays = {}
    for name, dims in entries:
        n = int(np.prod(dims, dtype=np.int64))
        if pos + 8 * n > len(buf):
            raise CheckpointError(f"{path}: truncated payload for '{name}'")
        arrays[name] = np.frombuffer(buf, dtype="<f8", count=n, offset=pos).reshape(dims).copy()
        pos += 8 * n
    if merge_complex:
        for key in [k for k in arrays if k.endswith(".re")]:
            base = key[:-3]
            if base + ".im" in arrays:
                arrays[base] = arrays.pop(key) + 1j * arrays.pop(base + ".im")
    return arrays, metadata
