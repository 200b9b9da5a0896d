"""Matrix product states and operators on a line.

Axis conventions: MPS site tensors are (left bond, physical, right bond);
MPO site tensors are (left bond, input, output, right bond).  Boundary
bonds have dimension 1.  Dense expansions flatten physical indices with
the first site slowest, matching the package-wide C-order convention.

Structures are treated as immutable: operations return new objects and
never modify site tensors in place.
"""

from __future__ import annotations

import numpy as np

from proctensor import linalg
from proctensor.exceptions import ValidationError

__all__ = [
    "MPS",
    "MPO",
    "mps_inner",
    "mpo_apply",
    "compress",
    "mps_from_product",
    "mps_from_dense",
    "left_canonicalize",
    "right_canonicalize",
]


def _check_chain(sites: list[np.ndarray], rank: int, kind: str) -> None:
    if len(sites) == 0:
        raise ValidationError(f"{kind}: need at least one site")
    for i, t in enumerate(sites):
        if t.ndim != rank:
            raise ValidationError(
                f"{kind}: site {i} has rank {t.ndim}, expected {rank}"
            )
    if sites[0].shape[0] != 1 or sites[-1].shape[-1] != 1:
        raise ValidationError(f"{kind}: boundary bonds must have dimension 1")
    for i in range(len(sites) - 1):
        if sites[i].shape[-1] != sites[i + 1].shape[0]:
            raise ValidationError(
                f"{kind}: bond mismatch between sites {i} and {i + 1}: "
                f"{sites[i].shape[-1]} != {sites[i + 1].shape[0]}"
            )


class MPS:
    """Matrix product state: a chain of (left bond, physical, right bond) tensors."""

    def __init__(self, sites: list[np.ndarray]):
        sites = [np.asarray(t, dtype=np.complex128) for t in sites]
        _check_chain(sites, 3, "MPS")
        self.sites = sites

    def __len__(self) -> int:
        return len(self.sites)

    @property
    def phys_dims(self) -> list[int]:
        return [t.shape[1] for t in self.sites]

    def bond_dims(self) -> list[int]:
        """All bond dimensions including the two unit boundary bonds."""
        return [self.sites[0].shape[0]] + [t.shape[2] for t in self.sites]

    def max_bond(self) -> int:
        return max(self.bond_dims())

    def copy(self) -> "MPS":
        return MPS([t.copy() for t in self.sites])

    def dense(self) -> np.ndarray:
        """Expand to a vector over the physical indices, first site slowest."""
        t = self.sites[0][0]  # (p, r)
        for site in self.sites[1:]:
            t = np.tensordot(t, site, axes=([-1], [0]))  # (p..., p_i, r_i)
        return np.ascontiguousarray(t[..., 0]).reshape(-1)

    def norm(self) -> float:
        return float(np.sqrt(abs(mps_inner(self, self))))


class MPO:
    """Matrix product operator: a chain of (left bond, input, output, right bond) tensors."""

    def __init__(self, sites: list[np.ndarray]):
        sites = [np.asarray(t, dtype=np.complex128) for t in sites]
        _check_chain(sites, 4, "MPO")
        self.sites = sites

    def __len__(self) -> int:
        return len(self.sites)

    @property
    def in_dims(self) -> list[int]:
        return [t.shape[1] for t in self.sites]

    @property
    def out_dims(self) -> list[int]:
        return [t.shape[2] for t in self.sites]

    def bond_dims(self) -> list[int]:
        return [self.sites[0].shape[0]] + [t.shape[3] for t in self.sites]

    def max_bond(self) -> int:
        return max(self.bond_dims())

    def copy(self) -> "MPO":
        return MPO([t.copy() for t in self.sites])

    def fuse_legs(self) -> MPS:
        """View as an MPS by fusing (input, output) into one physical leg."""
        fused = []
        for t in self.sites:
            dl, dx, dy, dr = t.shape
            fused.append(t.reshape(dl, dx * dy, dr))
        return MPS(fused)

    def dense_vector(self) -> np.ndarray:
        """Expansion as a vector over fused per-site (input, output) indices."""
        return self.fuse_legs().dense()

    def dense(self) -> np.ndarray:
        """Expand to a matrix (all outputs) x (all inputs), first site slowest."""
        n = len(self.sites)
        vec = self.dense_vector()
        dims = []
        for t in self.sites:
            dims.extend([t.shape[1], t.shape[2]])
        t = vec.reshape(dims)
        # regroup (x_1, y_1, ..., x_n, y_n) -> (y_1..y_n, x_1..x_n)
        perm = [2 * i + 1 for i in range(n)] + [2 * i for i in range(n)]
        t = t.transpose(perm)
        d_out = int(np.prod(self.out_dims))
        d_in = int(np.prod(self.in_dims))
        return np.ascontiguousarray(t).reshape(d_out, d_in)

    def frobenius_norm(self) -> float:
        """2-norm of the dense expansion, computed by transfer contraction."""
        env = np.ones((1, 1), dtype=np.complex128)
        for t in self.sites:
            env = np.einsum("ab,axyc,bxyd->cd", env, t.conj(), t, optimize=True)
        return float(np.sqrt(abs(env[0, 0])))

    def scaled(self, c: complex) -> "MPO":
        """New MPO whose dense expansion is c times this one."""
        sites = [t.copy() for t in self.sites]
        sites[0] = sites[0] * c
        return MPO(sites)


def mps_inner(a: MPS, b: MPS) -> complex:
    """Inner product <a|b>, conjugate-linear in ``a``."""
    if len(a) != len(b) or a.phys_dims != b.phys_dims:
        raise ValidationError(
            f"mps_inner: incompatible chains, physical dims {a.phys_dims} vs {b.phys_dims}"
        )
    env = np.ones((1, 1), dtype=np.complex128)
    for ta, tb in zip(a.sites, b.sites):
        env = np.einsum("ab,apc,bpd->cd", env, ta.conj(), tb, optimize=True)
    return complex(env[0, 0])


def mpo_apply(o: MPO, s: MPS) -> MPS:
    """Apply an MPO to an MPS; bond dimensions multiply."""
    if len(o) != len(s) or o.in_dims != s.phys_dims:
        raise ValidationError(
            f"mpo_apply: input dims {o.in_dims} do not match state dims {s.phys_dims}"
        )
    out = []
    for w, t in zip(o.sites, s.sites):
        # (a x y b), (c x d) -> (a c y b d)
        new = np.einsum("axyb,cxd->acybd", w, t, optimize=True)
        da, dc, dy, db, dd = new.shape
        out.append(new.reshape(da * dc, dy, db * dd))
    return MPS(out)


def mps_from_product(states: list[np.ndarray]) -> MPS:
    """Bond-1 MPS whose dense expansion is the Kronecker product of the vectors."""
    if len(states) == 0:
        raise ValidationError("mps_from_product: need at least one vector")
    sites = []
    for v in states:
        v = np.asarray(v, dtype=np.complex128).reshape(-1)
        if v.size == 0:
            raise ValidationError("mps_from_product: empty vector")
        sites.append(v.reshape(1, v.size, 1))
    return MPS(sites)


def mps_from_dense(
    vec: np.ndarray,
    phys_dims: list[int],
    max_bond: int | None = None,
    cutoff: float = 0.0,
) -> tuple[MPS, float]:
    """Split a dense vector into an MPS by successive truncated SVDs.

    Returns the MPS and the accumulated discarded weight.
    """
    vec = np.asarray(vec, dtype=np.complex128).reshape(-1)
    total = int(np.prod(phys_dims))
    if vec.size != total:
        raise ValidationError(
            f"mps_from_dense: vector length {vec.size} != product of dims {total}"
        )
    sites = []
    discarded = 0.0
    rest = vec
    left = 1
    for d in phys_dims[:-1]:
        mat = rest.reshape(left * d, -1)
        res = linalg.svd_truncate(mat, max_bond, cutoff)
        discarded += res.discarded_weight
        sites.append(res.u.reshape(left, d, res.rank))
        rest = res.s[:, None] * res.v.conj().T
        left = res.rank
    sites.append(rest.reshape(left, phys_dims[-1], 1))
    return MPS(sites), discarded


def left_canonicalize(s: MPS) -> MPS:
    """QR sweep making every site except the last left-orthonormal.

    The state is unchanged; the norm accumulates in the final site.
    """
    sites = [t.copy() for t in s.sites]
    for i in range(len(sites) - 1):
        dl, d, dr = sites[i].shape
        q, r = np.linalg.qr(sites[i].reshape(dl * d, dr))
        k = q.shape[1]
        sites[i] = q.reshape(dl, d, k)
        sites[i + 1] = np.tensordot(r, sites[i + 1], axes=([1], [0]))
    return MPS(sites)


def right_canonicalize(s: MPS) -> MPS:
    """Mirror of left_canonicalize; the norm accumulates in the first site."""
    sites = [t.copy() for t in s.sites]
    for i in range(len(sites) - 1, 0, -1):
        dl, d, dr = sites[i].shape
        # LQ via QR of the transpose
        q, r = np.linalg.qr(sites[i].reshape(dl, d * dr).T)
        k = q.shape[1]
        sites[i] = q.T.reshape(k, d, dr)
        sites[i - 1] = np.tensordot(sites[i - 1], r.T, axes=([2], [0]))
    return MPS(sites)


def _compress_mps(s: MPS, max_bond: int | None, cutoff: float) -> tuple[MPS, float]:
    sites = left_canonicalize(s).sites
    discarded = 0.0
    for i in range(len(sites) - 1, 0, -1):
        dl, d, dr = sites[i].shape
        res = linalg.svd_truncate(sites[i].reshape(dl, d * dr), max_bond, cutoff)
        discarded += res.discarded_weight
        sites[i] = res.v.conj().T.reshape(res.rank, d, dr)
        us = res.u * res.s[None, :]
        sites[i - 1] = np.tensordot(sites[i - 1], us, axes=([2], [0]))
    return MPS(sites), discarded


def compress(
    s: "MPS | MPO", max_bond: int | None, cutoff: float
) -> tuple["MPS | MPO", float]:
    """Two-pass compression: left canonicalization, then truncated right sweep.

    Args:
        s: MPS or MPO (compressed through its fused-leg MPS view).
        max_bond: bond cap, or None for cutoff-only truncation.
        cutoff: relative singular-value cutoff.

    Returns:
        (compressed object of the same type, accumulated discarded weight).
        The squared 2-norm error of the dense expansion is bounded by the
        discarded weight.
    """
    if max_bond is not None and max_bond < 1:
        raise ValidationError(f"compress: max_bond must be >= 1, got {max_bond}")
    if isinstance(s, MPO):
        shapes = [t.shape for t in s.sites]
        fused, discarded = _compress_mps(s.fuse_legs(), max_bond, cutoff)
        out = []
        for t, (dl_, dx, dy, dr_) in zip(fused.sites, shapes):
            dl, _, dr = t.shape
            out.append(t.reshape(dl, dx, dy, dr))
        return MPO(out), discarded
    if isinstance(s, MPS):
        return _compress_mps(s, max_bond, cutoff)
    raise ValidationError(f"compress: unsupported type {type(s).__name__}")
