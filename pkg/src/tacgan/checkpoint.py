"""Versioned binary checkpoint container.

Layout (all integers little-endian):

    magic   8 bytes  b"TACGANCK"
    version u32
    step    u64
    cfg_len u32, then cfg_len bytes of UTF-8 ``key = value`` lines
    n_arr   u32, then per array:
        name_len u16, name UTF-8
        dtype_len u8, dtype string (numpy little-endian spec, e.g. "<f4")
        ndim u8, ndim x u64 dims
        raw little-endian payload

The config block carries the run configuration plus optimizer hyperparameters
and step counters, so a checkpoint is self-describing: loading one recovers
the exact training state (weights, batch-norm statistics, both optimizer
moment sets) needed to resume bit-exactly.
"""

from __future__ import annotations

import io
import os
import struct
from dataclasses import dataclass

import numpy as np

from .config import RunConfig, config_to_kv, parse_config_text, run_config_from_kv
from .errors import FormatError
from .network import NetworkParams
from .optim import OptimizerState

MAGIC = b"TACGANCK"
VERSION = 1

_PREFIXES = ("g/", "d/", "gs/", "ds/", "odm/", "odv/", "ogm/", "ogv/")


@dataclass
class TrainingState:
    """Everything needed to resume a run."""

    params: NetworkParams
    opt_d: OptimizerState
    opt_g: OptimizerState
    run: RunConfig
    step: int


def _write_array(buf: io.BytesIO, name: str, arr: np.ndarray):
    arr = np.ascontiguousarray(arr)
    dtype = arr.dtype.newbyteorder("<")
    arr = arr.astype(dtype, copy=False)
    name_b = name.encode("utf-8")
    dtype_b = dtype.str.encode("ascii")
    buf.write(struct.pack("<H", len(name_b)))
    buf.write(name_b)
    buf.write(struct.pack("<B", len(dtype_b)))
    buf.write(dtype_b)
    buf.write(struct.pack("<B", arr.ndim))
    for dim in arr.shape:
        buf.write(struct.pack("<Q", dim))
    buf.write(arr.tobytes())


class _Reader:
    def __init__(self, data: bytes, source: str):
        self.data = data
        self.pos = 0
        self.source = source

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise FormatError(
                f"{self.source}: truncated checkpoint (needed {n} bytes at "
                f"offset {self.pos}, have {len(self.data) - self.pos})"
            )
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def _read_array(r: _Reader) -> tuple[str, np.ndarray]:
    (name_len,) = r.unpack("<H")
    name = r.take(name_len).decode("utf-8")
    (dtype_len,) = r.unpack("<B")
    dtype = np.dtype(r.take(dtype_len).decode("ascii"))
    (ndim,) = r.unpack("<B")
    shape = tuple(r.unpack("<" + "Q" * ndim)) if ndim else ()
    count = int(np.prod(shape)) if shape else 1
    payload = r.take(count * dtype.itemsize)
    arr = np.frombuffer(payload, dtype=dtype).reshape(shape).copy()
    return name, arr


def save_checkpoint(path: str, state: TrainingState) -> None:
    """Serialize a training state; the file is written atomically."""
    kv = config_to_kv(state.run)
    kv["opt_d_step"] = str(state.opt_d.step)
    kv["opt_g_step"] = str(state.opt_g.step)
    kv["adam_lr"] = repr(state.opt_d.learning_rate)
    kv["adam_beta1"] = repr(state.opt_d.beta1)
    kv["adam_beta2"] = repr(state.opt_d.beta2)
    kv["adam_eps"] = repr(state.opt_d.epsilon)
    cfg_text = "".join(f"{k} = {v}\n" for k, v in sorted(kv.items()))
    cfg_bytes = cfg_text.encode("utf-8")

    arrays: list[tuple[str, np.ndarray]] = []
    p = state.params
    for prefix, table in (
        ("g/", p.g),
        ("d/", p.d),
        ("gs/", p.g_stats),
        ("ds/", p.d_stats),
        ("odm/", state.opt_d.m),
        ("odv/", state.opt_d.v),
        ("ogm/", state.opt_g.m),
        ("ogv/", state.opt_g.v),
    ):
        for key in sorted(table):
            arrays.append((prefix + key, table[key]))

    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<I", VERSION))
    buf.write(struct.pack("<Q", state.step))
    buf.write(struct.pack("<I", len(cfg_bytes)))
    buf.write(cfg_bytes)
    buf.write(struct.pack("<I", len(arrays)))
    for name, arr in arrays:
        _write_array(buf, name, arr)

    tmp = path + ".tmp"
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(tmp, "wb") as fh:
        fh.write(buf.getvalue())
    os.replace(tmp, path)


def load_checkpoint(path: str) -> TrainingState:
    if not os.path.exists(path):
        raise FormatError(f"checkpoint not found: {path}")
    with open(path, "rb") as fh:
        data = fh.read()
    r = _Reader(data, path)
    if r.take(len(MAGIC)) != MAGIC:
        raise FormatError(f"{path}: not a checkpoint file (bad magic)")
    (version,) = r.unpack("<I")
    if version != VERSION:
        raise FormatError(
            f"{path}: unsupported checkpoint version {version} (reader supports {VERSION})"
        )
    (step,) = r.unpack("<Q")
    (cfg_len,) = r.unpack("<I")
    kv = parse_config_text(r.take(cfg_len).decode("utf-8"), source=path)
    (n_arrays,) = r.unpack("<I")

    tables: dict[str, dict[str, np.ndarray]] = {p: {} for p in _PREFIXES}
    for _ in range(n_arrays):
        name, arr = _read_array(r)
        for prefix in _PREFIXES:
            if name.startswith(prefix):
                tables[prefix][name[len(prefix):]] = arr
                break
        else:
            raise FormatError(f"{path}: unknown array group for {name!r}")

    opt_kv = {
        k: kv.pop(k)
        for k in ("opt_d_step", "opt_g_step", "adam_lr", "adam_beta1", "adam_beta2", "adam_eps")
        if k in kv
    }
    run = run_config_from_kv(kv)
    params = NetworkParams(
        g=tables["g/"], d=tables["d/"], g_stats=tables["gs/"], d_stats=tables["ds/"]
    )
    hyper = dict(
        learning_rate=float(opt_kv.get("adam_lr", "0.0002")),
        beta1=float(opt_kv.get("adam_beta1", "0.5")),
        beta2=float(opt_kv.get("adam_beta2", "0.999")),
        epsilon=float(opt_kv.get("adam_eps", "1e-08")),
    )
    opt_d = OptimizerState(
        m=tables["odm/"], v=tables["odv/"], step=int(opt_kv.get("opt_d_step", "0")), **hyper
    )
    opt_g = OptimizerState(
        m=tables["ogm/"], v=tables["ogv/"], step=int(opt_kv.get("opt_g_step", "0")), **hyper
    )
    return TrainingState(params=params, opt_d=opt_d, opt_g=opt_g, run=run, step=step)
