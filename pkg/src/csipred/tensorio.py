"""Binary tensor containers and key=value text files.

Single-tensor encoding (used for dataset splits and for each record of the
named-tensor weights container):

    magic   7 bytes  b"SCACSI\\0"
    version u32 LE   (currently 1)
    rank    u32 LE
    dims    rank x u64 LE
    payload row-major little-endian IEEE-754 float32; complex tensors are
            stored interleaved (re, im), i.e. numpy '<c8'; real tensors are
            plain '<f4'

Whether a payload is complex or real is fixed by the container type: dataset
split files hold one complex CSI tensor, weight containers hold real tensors.
"""

import struct

import numpy as np

MAGIC = b"SCACSI\0"
VERSION = 1

_HEADER_FMT = "<II"  # version, rank


def _write_header(f, shape):
    f.write(MAGIC)
    f.write(struct.pack(_HEADER_FMT, VERSION, len(shape)))
    f.write(struct.pack("<%dQ" % len(shape), *shape))


def _read_header(f):
    magic = f.read(len(MAGIC))
    if magic != MAGIC:
        raise ValueError("bad magic %r, not a csipred tensor stream" % magic)
    version, rank = struct.unpack(_HEADER_FMT, f.read(struct.calcsize(_HEADER_FMT)))
    if version != VERSION:
        raise ValueError("unsupported tensor container version %d" % version)
    dims = struct.unpack("<%dQ" % rank, f.read(8 * rank))
    return tuple(int(d) for d in dims)


def write_complex_tensor(f, arr):
    """Append one complex tensor (stored as complex64) to a binary stream."""
    arr = np.ascontiguousarray(arr, dtype="<c8")
    _write_header(f, arr.shape)
    f.write(arr.tobytes())


def read_complex_tensor(f):
    shape = _read_header(f)
    count = int(np.prod(shape)) if shape else 1
    data = np.frombuffer(f.read(8 * count), dtype="<c8", count=count)
    return data.reshape(shape).copy()


def write_real_tensor(f, arr):
    """Append one real tensor (stored as float32) to a binary stream."""
    arr = np.ascontiguousarray(arr, dtype="<f4")
    _write_header(f, arr.shape)
    f.write(arr.tobytes())


def read_real_tensor(f):
    shape = _read_header(f)
    count = int(np.prod(shape)) if shape else 1
    data = np.frombuffer(f.read(4 * count), dtype="<f4", count=count)
    return data.reshape(shape).copy()


def save_complex_tensor(path, arr):
    with open(path, "wb") as f:
        write_complex_tensor(f, arr)


def load_complex_tensor(path):
    with open(path, "rb") as f:
        return read_complex_tensor(f)


def save_named_tensors(path, tensors):
    """Write an ordered {name: real array} mapping as one container file."""
    with open(path, "wb") as f:
        f.write(struct.pack("<I", len(tensors)))
        for name, arr in tensors.items():
            encoded = name.encode("utf-8")
            f.write(struct.pack("<I", len(encoded)))
            f.write(encoded)
            write_real_tensor(f, arr)


def load_named_tensors(path):
    out = {}
    with open(path, "rb") as f:
        (count,) = struct.unpack("<I", f.read(4))
        for _ in range(count):
            (name_len,) = struct.unpack("<I", f.read(4))
            name = f.read(name_len).decode("utf-8")
            out[name] = read_real_tensor(f)
    return out


def write_kv(path, pairs):
    """Write key=value text (str() on values, one pair per line)."""
    with open(path, "w", encoding="utf-8") as f:
        for key, value in pairs.items():
            f.write("%s=%s\n" % (key, value))


def read_kv(path):
    """Parse key=value text; '#' starts a comment, blank lines are skipped."""
    out = {}
    with open(path, "r", encoding="utf-8") as f:
        for lineno, raw in enumerate(f, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError("%s:%d: expected key=value, got %r" % (path, lineno, raw.rstrip()))
            key, value = line.split("=", 1)
            out[key.strip()] = value.strip()
    return out
