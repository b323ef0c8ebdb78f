"""Binary sample (``GLS1``) and model (``FHT1``) files.

All integers are unsigned 64-bit and all reals IEEE-754 doubles, little
endian.

Sample file::

    b"GLS1" | d | count | flags | count*d values (row-major) | [count weights]

``flags & 1`` marks the trailing weight block.

Model file::

    b"FHT1" | d | levels | n | half_width (f64) | site_order
    | one rank per non-root node, level order, left to right
    | per node in the same order starting at the root:
      shape triple | row-major values

Leaf cores are stored as ``(n, r, 1)`` and the root as ``(r_left, r_right, 1)``.
"""

from __future__ import annotations

import struct

import numpy as np

from .errors import FormatError
from .fht import FhtModel, FourierBasis, SiteOrder, build_tree

SAMPLE_MAGIC = b"GLS1"
MODEL_MAGIC = b"FHT1"
FLAG_WEIGHTS = 1

_U64 = struct.Struct("<Q")
_F64 = struct.Struct("<d")


class _Reader:
    def __init__(self, data, what):
        self.data = memoryview(data)
        self.pos = 0
        self.what = what

    def take(self, size, field):
        if self.pos + size > len(self.data):
            raise FormatError(
                f"{self.what}: truncated while reading {field} at byte offset {self.pos} "
                f"(need {size} bytes, {len(self.data) - self.pos} left)"
            )
        chunk = self.data[self.pos:self.pos + size]
        self.pos += size
        return chunk

    def u64(self, field):
        return _U64.unpack(self.take(8, field))[0]

    def f64(self, field):
        return _F64.unpack(self.take(8, field))[0]

    def array(self, count, field):
        raw = self.take(8 * count, field)
        return np.frombuffer(raw, dtype="<f8").astype(float)

    def finish(self):
        if self.pos != len(self.data):
            raise FormatError(
                f"{self.what}: {len(self.data) - self.pos} trailing bytes at offset {self.pos}"
            )


def _magic(reader, expected):
    got = bytes(reader.take(4, "magic"))
    if got != expected:
        raise FormatError(f"{reader.what}: bad magic field {got!r}, expected {expected!r}")


def encode_samples(samples, weights=None) -> bytes:
    x = np.ascontiguousarray(samples, dtype="<f8")
    if x.ndim != 2:
        raise ValueError("samples must be a (count, d) array")
    count, d = x.shape
    flags = FLAG_WEIGHTS if weights is not None else 0
    parts = [SAMPLE_MAGIC, _U64.pack(d), _U64.pack(count), _U64.pack(flags), x.tobytes()]
    if weights is not None:
        w = np.ascontiguousarray(weights, dtype="<f8")
        if w.shape != (count,):
            raise ValueError("weights need one entry per sample")
        parts.append(w.tobytes())
    return b"".join(parts)


def decode_samples(data):
    """Returns ``(samples, weights_or_None)``."""
    r = _Reader(data, "sample file")
    _magic(r, SAMPLE_MAGIC)
    d, count, flags = r.u64("d"), r.u64("count"), r.u64("flags")
    if flags & ~FLAG_WEIGHTS:
        raise FormatError(f"sample file: unknown flags {flags:#x}")
    x = r.array(count * d, "sample values").reshape(count, d)
    w = r.array(count, "weights") if flags & FLAG_WEIGHTS else None
    r.finish()
    return x, w


def write_samples(path, samples, weights=None):
    with open(path, "wb") as fh:
        fh.write(encode_samples(samples, weights))


def read_samples(path):
    with open(path, "rb") as fh:
        return decode_samples(fh.read())


def serialize_model(model: FhtModel) -> bytes:
    tree = model.tree
    parts = [
        MODEL_MAGIC,
        _U64.pack(tree.d),
        _U64.pack(tree.levels),
        _U64.pack(model.basis.n),
        _F64.pack(model.basis.half_width),
        _U64.pack(int(tree.site_order)),
    ]
    nodes = tree.all_nodes()
    parts += [_U64.pack(model.rank(node)) for node in nodes[1:]]
    for node in nodes:
        core = np.asarray(model.cores[node], dtype="<f8")
        shape = core.shape + (1,) * (3 - core.ndim)
        parts += [_U64.pack(s) for s in shape]
        parts.append(np.ascontiguousarray(core).tobytes())
    return b"".join(parts)


def deserialize_model(data) -> FhtModel:
    r = _Reader(data, "model file")
    _magic(r, MODEL_MAGIC)
    d, levels, n = r.u64("d"), r.u64("levels"), r.u64("n")
    half_width = r.f64("half_width")
    tag = r.u64("site_order")
    if d != 1 << levels or levels < 1:
        raise FormatError(f"model file: d={d} inconsistent with levels={levels}")
    if n % 2 != 1:
        raise FormatError(f"model file: basis size n={n} must be odd")
    if not half_width > 0:
        raise FormatError(f"model file: half_width={half_width} must be positive")
    try:
        tree = build_tree(d, SiteOrder(tag))
    except ValueError as exc:
        raise FormatError(f"model file: site_order field: {exc}") from None
    nodes = tree.all_nodes()
    ranks = {node: r.u64(f"rank of node {node}") for node in nodes[1:]}
    cores = {}
    for node in nodes:
        shape = tuple(r.u64(f"shape of core {node}") for _ in range(3))
        if tree.is_leaf(node):
            expect = (n, ranks[node], 1)
        else:
            left, right = tree.children(node)
            expect = (ranks[left], ranks[right], 1 if node == (0, 0) else ranks[node])
        if shape != expect:
            raise FormatError(f"model file: core {node} shape {shape}, expected {expect}")
        values = r.array(int(np.prod(shape)), f"values of core {node}")
        keep = shape[:2] if tree.is_leaf(node) or node == (0, 0) else shape
        cores[node] = values.reshape(keep)
    r.finish()
    return FhtModel(tree, FourierBasis((n - 1) // 2, half_width), cores)


def write_model(path, model):
    with open(path, "wb") as fh:
        fh.write(serialize_model(model))


def read_model(path):
    with open(path, "rb") as fh:
        return deserialize_model(fh.read())
