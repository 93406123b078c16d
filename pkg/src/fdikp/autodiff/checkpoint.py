"""FDKC checkpoint files.

Layout (little endian):
    b"FDKC" | u8 version | u32 entry count
    per entry: u32 name length | name bytes (utf-8) | u8 rank | u32 extents... | f32 data
Parameters come first; Adam state follows as entries named ``adam.m/<name>``,
``adam.v/<name>`` and the scalar ``adam.t``.
"""

import struct
from pathlib import Path

import numpy as np

from .optim import ParamStore

FDKC_MAGIC = b"FDKC"
FDKC_VERSION = 1


def _write_entry(fh, name, arr):
    arr = np.asarray(arr, dtype="<f4", order="C")
    raw = name.encode("utf-8")
    fh.write(struct.pack("<I", len(raw)))
    fh.write(raw)
    fh.write(struct.pack("<B", arr.ndim))
    if arr.ndim:
        fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
    fh.write(arr.tobytes())


def save_checkpoint(path, store, with_optimizer=True):
    entries = [(k, p) for k, p in store.items()]
    if with_optimizer:
        entries += [(f"adam.m/{k}", store.m[k]) for k in store.names()]
        entries += [(f"adam.v/{k}", store.v[k]) for k in store.names()]
        entries.append(("adam.t", np.array(store.t, dtype=np.float32)))
    with open(path, "wb") as fh:
        fh.write(FDKC_MAGIC)
        fh.write(struct.pack("<BI", FDKC_VERSION, len(entries)))
        for name, arr in entries:
            _write_entry(fh, name, arr)


def load_checkpoint(path, dtype=np.float32):
    data = Path(path).read_bytes()
    if data[:4] != FDKC_MAGIC:
        raise ValueError(f"{path}: not an FDKC checkpoint")
    version, count = struct.unpack_from("<BI", data, 4)
    if version != FDKC_VERSION:
        raise ValueError(f"{path}: unsupported FDKC version {version}")
    off = 9
    entries = {}
    order = []
    for _ in range(count):
        (n,) = struct.unpack_from("<I", data, off)
        off += 4
        name = data[off:off + n].decode("utf-8")
        off += n
        (rank,) = struct.unpack_from("<B", data, off)
        off += 1
        shape = struct.unpack_from(f"<{rank}I", data, off) if rank else ()
        off += 4 * rank
        size = int(np.prod(shape)) if rank else 1
        arr = np.frombuffer(data, dtype="<f4", count=size, offset=off).reshape(shape)
        off += 4 * size
        entries[name] = arr
        order.append(name)
    store = ParamStore(dtype)
    for name in order:
        if name.startswith("adam."):
            continue
        store.add(name, entries[name])
    for name in store.names():
        if f"adam.m/{name}" in entries:
            store.m[name] = entries[f"adam.m/{name}"].astype(dtype)
            store.v[name] = entries[f"adam.v/{name}"].astype(dtype)
    if "adam.t" in entries:
        store.t = int(entries["adam.t"].item())
    return store
