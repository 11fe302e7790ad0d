"""Length-prefixed binary container shared by datasets, hypothesis sets and
checkpoints.

Layout (all integers little-endian)::

    magic      4 bytes
    version    uint8
    header     uint32 length + bytes   (UTF-8 key=value text)
    count      uint64
    records    count x (uint32 length + payload)

Floating point payloads are stored as little-endian float64, so a file is a
pure function of its contents and byte-identical across platforms.
"""

import struct

import numpy as np

from .errors import CorruptFile, IOFailure, VersionMismatch

_U32 = struct.Struct("<I")
_U64 = struct.Struct("<Q")


class Packer:
    def __init__(self):
        self._parts = []

    def u8(self, x):
        self._parts.append(struct.pack("<B", x))
        return self

    def u16(self, x):
        self._parts.append(struct.pack("<H", x))
        return self

    def u32(self, x):
        self._parts.append(_U32.pack(x))
        return self

    def i32(self, x):
        self._parts.append(struct.pack("<i", x))
        return self

    def u64(self, x):
        self._parts.append(_U64.pack(x))
        return self

    def f64(self, x):
        self._parts.append(struct.pack("<d", x))
        return self

    def array(self, a):
        """Shape-prefixed float64 array."""
        a = np.asarray(a, dtype="<f8")
        self.u8(a.ndim)
        for s in a.shape:
            self.u32(s)
        self._parts.append(a.tobytes(order="C"))
        return self

    def string(self, s):
        b = s.encode("utf-8")
        self.u32(len(b))
        self._parts.append(b)
        return self

    def bytes(self):
        return b"".join(self._parts)


class Unpacker:
    def __init__(self, buf):
        self.buf = memoryview(buf)
        self.pos = 0

    def _take(self, n):
        if self.pos + n > len(self.buf):
            raise CorruptFile("record payload truncated")
        out = self.buf[self.pos:self.pos + n]
        self.pos += n
        return out

    def u8(self):
        return struct.unpack("<B", self._take(1))[0]

    def u16(self):
        return struct.unpack("<H", self._take(2))[0]

    def u32(self):
        return _U32.unpack(self._take(4))[0]

    def i32(self):
        return struct.unpack("<i", self._take(4))[0]

    def u64(self):
        return _U64.unpack(self._take(8))[0]

    def f64(self):
        return struct.unpack("<d", self._take(8))[0]

    def array(self):
        ndim = self.u8()
        shape = tuple(self.u32() for _ in range(ndim))
        n = int(np.prod(shape, dtype=np.int64)) if ndim else 1
        raw = self._take(8 * n)
        return np.frombuffer(raw, dtype="<f8").reshape(shape).astype(np.float64)

    def string(self):
        n = self.u32()
        return bytes(self._take(n)).decode("utf-8")

    def done(self):
        if self.pos != len(self.buf):
            raise CorruptFile("trailing bytes in record payload")


def encode_header(mapping):
    return "".join(f"{k}={v}\n" for k, v in mapping.items()).encode("utf-8")


def decode_header(raw):
    out = {}
    for line in raw.decode("utf-8").splitlines():
        if line:
            k, _, v = line.partition("=")
            out[k] = v
    return out


def write_container(path, magic, version, header, records):
    if len(magic) != 4:
        raise ValueError("magic must be 4 bytes")
    records = list(records)
    parts = [magic, struct.pack("<B", version), _U32.pack(len(header)), header, _U64.pack(len(records))]
    for r in records:
        parts.append(_U32.pack(len(r)))
        parts.append(r)
    try:
        with open(path, "wb") as f:
            f.write(b"".join(parts))
    except OSError as e:
        raise IOFailure(f"cannot write {path}: {e}") from e


def read_container(path, magic, versions):
    """Return ``(version, header_bytes, [payload, ...])``."""
    try:
        with open(path, "rb") as f:
            data = f.read()
    except OSError as e:
        raise IOFailure(f"cannot read {path}: {e}") from e
    if len(data) < 5 or data[:4] != magic:
        raise CorruptFile(f"{path}: bad magic")
    version = data[4]
    if version not in versions:
        raise VersionMismatch(f"{path}: unsupported version {version}")
    u = Unpacker(data)
    u.pos = 5
    header = bytes(u._take(u.u32()))
    count = u.u64()
    records = []
    for _ in range(count):
        n = u.u32()
        records.append(bytes(u._take(n)))
    u.done()
    return version, header, records
