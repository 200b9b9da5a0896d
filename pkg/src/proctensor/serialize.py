"""Binary container formats for process tensors and datasets.

One container family: an 8-byte magic, a u32 format version, and a u32
record kind, followed by a kind-specific little-endian payload.  Complex
tensors are stored as contiguous (real, imaginary) float64 pairs, so a
write/read cycle is bit-exact.  All writers go through a temp file in the
target directory followed by an atomic rename.
"""

from __future__ import annotations

import os
import struct
import tempfile

import numpy as np

from proctensor import tn
from proctensor.datagen import Dataset
from proctensor.exceptions import ValidationError
from proctensor.model import ModelParams
from proctensor.learn import TrainReport
from proctensor.process import ProcessMPO

__all__ = [
    "save_process",
    "load_process",
    "save_dataset",
    "load_dataset",
    "write_train_report",
]

MAGIC = b"PROCTENS"
FORMAT_VERSION = 1
KIND_PROCESS = 1
KIND_DATASET = 2

_PROVENANCE_CODE = {"exact": 0, "trained": 1}
_PROVENANCE_NAME = {v: k for k, v in _PROVENANCE_CODE.items()}


def _atomic_write(path: str, data: bytes) -> None:
    """Write via a temp file in the same directory, then rename over."""
    dirname = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=dirname, prefix=".tmp-", suffix=".part")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


class _Cursor:
    """Sequential reader with overrun checking."""

    def __init__(self, buf: bytes, path: str):
        self.buf = buf
        self.off = 0
        self.path = path

    def take(self, n: int) -> bytes:
        if self.off + n > len(self.buf):
            raise ValidationError(
                f"{self.path}: truncated container "
                f"(wanted {n} bytes at offset {self.off}, have {len(self.buf)})"
            )
        out = self.buf[self.off : self.off + n]
        self.off += n
        return out

    def unpack(self, fmt: str) -> tuple:
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def _header(kind: int) -> bytes:
    return MAGIC + struct.pack("<II", FORMAT_VERSION, kind)


def _check_header(cur: _Cursor, kind: int) -> None:
    magic = cur.take(8)
    if magic != MAGIC:
        raise ValidationError(f"{cur.path}: bad magic {magic!r}")
    version, got_kind = cur.unpack("<II")
    if version != FORMAT_VERSION:
        raise ValidationError(
            f"{cur.path}: unsupported format version {version}"
        )
    if got_kind != kind:
        raise ValidationError(
            f"{cur.path}: record kind {got_kind}, expected {kind}"
        )


def _pack_tensor(t: np.ndarray) -> bytes:
    t = np.ascontiguousarray(t, dtype=np.complex128)
    shape = struct.pack("<I", t.ndim) + struct.pack(f"<{t.ndim}I", *t.shape)
    return shape + t.astype("<c16", copy=False).tobytes()


def _unpack_tensor(cur: _Cursor) -> np.ndarray:
    (ndim,) = cur.unpack("<I")
    if ndim > 8:
        raise ValidationError(f"{cur.path}: implausible tensor rank {ndim}")
    shape = cur.unpack(f"<{ndim}I")
    count = int(np.prod(shape)) if ndim else 1
    raw = cur.take(16 * count)
    return np.frombuffer(raw, dtype="<c16", count=count).reshape(shape).copy()


def save_process(path: str, u: ProcessMPO) -> None:
    """Serialize a ProcessMPO; bit-exact round-trip with load_process."""
    parts = [_header(KIND_PROCESS)]
    parts.append(
        struct.pack(
            "<IdBd",
            u.n_steps,
            u.dt,
            _PROVENANCE_CODE[u.provenance],
            u.discarded_weight,
        )
    )
    for site in u.mpo.sites:
        parts.append(_pack_tensor(site))
    _atomic_write(path, b"".join(parts))


def load_process(path: str) -> ProcessMPO:
    with open(path, "rb") as f:
        cur = _Cursor(f.read(), path)
    _check_header(cur, KIND_PROCESS)
    n_steps, dt, prov_code, discarded = cur.unpack("<IdBd")
    if prov_code not in _PROVENANCE_NAME:
        raise ValidationError(f"{path}: unknown provenance code {prov_code}")
    sites = [_unpack_tensor(cur) for _ in range(n_steps)]
    return ProcessMPO(
        mpo=tn.MPO(sites),
        n_steps=n_steps,
        dt=dt,
        provenance=_PROVENANCE_NAME[prov_code],
        discarded_weight=discarded,
    )


def save_dataset(path: str, ds: Dataset) -> None:
    """Serialize a Dataset; bit-exact round-trip with load_dataset."""
    p = ds.params
    parts = [_header(KIND_DATASET)]
    parts.append(
        struct.pack(
            "<Iddddddd", p.L, p.J, p.h, p.Delta, p.gamma, p.r, p.dt, p.J_E
        )
    )
    parts.append(struct.pack("<IQq", ds.n_steps, ds.n_samples, ds.seed))
    parts.append(
        np.ascontiguousarray(ds.inputs).astype("<c16", copy=False).tobytes()
    )
    for y in ds.outputs:
        parts.append(struct.pack("<I", len(y)))
        for site in y.sites:
            parts.append(_pack_tensor(site))
    _atomic_write(path, b"".join(parts))


def load_dataset(path: str) -> Dataset:
    with open(path, "rb") as f:
        cur = _Cursor(f.read(), path)
    _check_header(cur, KIND_DATASET)
    l_sites, j, h, delta, gamma, r, dt, j_e = cur.unpack("<Iddddddd")
    params = ModelParams(
        L=l_sites, J=j, h=h, Delta=delta, gamma=gamma, r=r, dt=dt, J_E=j_e
    )
    n_steps, n_samples, seed = cur.unpack("<IQq")
    count = n_samples * n_steps * 4
    raw = cur.take(16 * count)
    inputs = (
        np.frombuffer(raw, dtype="<c16", count=count)
        .reshape(n_samples, n_steps, 2, 2)
        .copy()
    )
    outputs = []
    for _ in range(n_samples):
        (n_sites,) = cur.unpack("<I")
        outputs.append(tn.MPS([_unpack_tensor(cur) for _ in range(n_sites)]))
    return Dataset(
        inputs=inputs,
        outputs=outputs,
        params=params,
        n_steps=n_steps,
        seed=seed,
    )


def write_train_report(path: str, report: TrainReport) -> None:
    """Key-value text file with the loss history and solver diagnostics."""
    lines = [
        f"final_loss = {report.final_loss!r}",
        f"n_sweeps = {report.n_sweeps}",
        f"wall_time_s = {report.wall_time_s!r}",
        f"mu = {report.mu!r}",
        f"bond_dims = {','.join(str(d) for d in report.bond_dims)}",
        f"bond_dim_cap = {report.config.bond_dim}",
        f"seed = {report.config.seed}",
        "loss_history = " + ",".join(repr(v) for v in report.loss_history),
        "site_conditions = "
        + ";".join(f"{s}:{c!r}" for s, c in report.site_conditions),
        "jitter_events = "
        + ";".join(f"{s}:{j!r}" for s, j in report.jitter_events),
    ]
    _atomic_write(path, ("\n".join(lines) + "\n").encode("utf-8"))
