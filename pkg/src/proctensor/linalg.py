"""Dense complex tensor kernels used by every other module.

Conventions, fixed once for the whole package:

* Tensors are ``numpy.complex128`` arrays in C order, so the first axis is
  the slowest.  Reshapes therefore never move data, and flattening a
  multi-index ``(i_1, ..., i_k)`` produces the index ``i_1``-slowest order
  assumed everywhere else (vectorized operators, dense expansions of
  tensor networks, serialized blobs).
* Matrices factor as ``m = u @ diag(s) @ v.conj().T`` with orthonormal
  columns in both ``u`` and ``v``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from proctensor.exceptions import NumericalError, ValidationError

__all__ = ["SvdResult", "contract", "svd_truncate", "herm_eig", "expm"]


@dataclass
class SvdResult:
    """Truncated singular value decomposition ``m ~ u @ diag(s) @ v†``.

    Attributes:
        u: Left singular vectors, orthonormal columns, shape (rows, k).
        s: Kept singular values, descending, real nonnegative, shape (k,).
        v: Right singular vectors, orthonormal columns, shape (cols, k).
        discarded_weight: Sum of the squares of the dropped singular values.
    """

    u: np.ndarray
    s: np.ndarray
    v: np.ndarray
    discarded_weight: float

    @property
    def rank(self) -> int:
        return self.s.shape[0]


def contract(a: np.ndarray, b: np.ndarray, pairs: list[tuple[int, int]]) -> np.ndarray:
    """Contract two dense tensors over the given axis pairs.

    Args:
        a, b: Arbitrary-rank arrays.
        pairs: List of (axis of a, axis of b) pairs to sum over.  Each axis
            may appear at most once and paired axes must have equal length.

    Returns:
        Array whose axes are the uncontracted axes of ``a`` in order,
        followed by the uncontracted axes of ``b`` in order.
    """
    a = np.asarray(a)
    b = np.asarray(b)
    ax_a = [p[0] for p in pairs]
    ax_b = [p[1] for p in pairs]
    if len(set(ax_a)) != len(ax_a) or len(set(ax_b)) != len(ax_b):
        raise ValidationError("contract: an axis appears in more than one pair")
    for i, j in pairs:
        if not (-a.ndim <= i < a.ndim) or not (-b.ndim <= j < b.ndim):
            raise ValidationError(
                f"contract: axis pair ({i}, {j}) out of range for shapes "
                f"{a.shape} and {b.shape}"
            )
        if a.shape[i] != b.shape[j]:
            raise ValidationError(
                f"contract: paired axes ({i}, {j}) have lengths "
                f"{a.shape[i]} != {b.shape[j]}"
            )
    return np.tensordot(a, b, axes=(ax_a, ax_b))


def svd_truncate(m: np.ndarray, max_rank: int | None, cutoff: float) -> SvdResult:
    """SVD of a matrix, truncated by rank cap and relative singular-value cutoff.

    Keeps at most ``max_rank`` singular values and drops every value smaller
    than ``cutoff`` times the largest one.  At least one value is always
    kept so downstream tensor factors never acquire a zero-length bond.

    Args:
        m: Complex matrix, both dimensions >= 1.
        max_rank: Rank cap, or None for no cap.
        cutoff: Nonnegative relative threshold.

    Returns:
        SvdResult with ``discarded_weight`` equal to the sum of squares of
        the dropped singular values.
    """
    m = np.asarray(m, dtype=np.complex128)
    if m.ndim != 2 or m.shape[0] < 1 or m.shape[1] < 1:
        raise ValidationError(f"svd_truncate: need a matrix, got shape {m.shape}")
    if cutoff < 0:
        raise ValidationError(f"svd_truncate: cutoff must be nonnegative, got {cutoff}")
    if max_rank is not None and max_rank < 1:
        raise ValidationError(f"svd_truncate: max_rank must be >= 1, got {max_rank}")
    try:
        u, s, vh = np.linalg.svd(m, full_matrices=False)
    except np.linalg.LinAlgError as err:
        raise NumericalError(
            f"svd_truncate: SVD failed to converge on a {m.shape[0]}x{m.shape[1]} matrix"
        ) from err
    keep = s.shape[0]
    if s[0] > 0.0:
        keep = int(np.count_nonzero(s >= cutoff * s[0]))
    keep = max(1, keep)
    if max_rank is not None:
        keep = min(keep, max_rank)
    discarded = float(np.sum(s[keep:] ** 2))
    return SvdResult(
        u=np.ascontiguousarray(u[:, :keep]),
        s=s[:keep].copy(),
        v=np.ascontiguousarray(vh[:keep].conj().T),
        discarded_weight=discarded,
    )


def herm_eig(m: np.ndarray, tol: float = 1e-8) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition of a Hermitian matrix.

    Args:
        m: Square matrix with ``||m - m†||_F <= tol * max(1, ||m||_F)``.
        tol: Relative Hermiticity tolerance.

    Returns:
        (w, v): real eigenvalues in ascending order and the unitary matrix
        of eigenvectors, ``m = v @ diag(w) @ v†``.
    """
    m = np.asarray(m, dtype=np.complex128)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValidationError(f"herm_eig: need a square matrix, got shape {m.shape}")
    defect = np.linalg.norm(m - m.conj().T)
    if defect > tol * max(1.0, np.linalg.norm(m)):
        raise ValidationError(
            f"herm_eig: matrix is not Hermitian (defect {defect:.3e})"
        )
    w, v = np.linalg.eigh(0.5 * (m + m.conj().T))
    return w, v


def expm(m: np.ndarray) -> np.ndarray:
    """Matrix exponential by scaling-and-squaring with a truncated series.

    The matrix is scaled by ``2**-s`` until its 1-norm is at most 1/2, the
    exponential of the scaled matrix is summed as a Taylor series until the
    terms fall below machine precision relative to the partial sum, and the
    result is squared ``s`` times.

    Args:
        m: Square complex matrix.

    Returns:
        ``exp(m)`` as a dense matrix.
    """
    m = np.asarray(m, dtype=np.complex128)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValidationError(f"expm: need a square matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValidationError("expm: matrix contains non-finite entries")
    d = m.shape[0]
    norm = np.linalg.norm(m, 1)
    squarings = 0
    if norm > 0.5:
        squarings = int(np.ceil(np.log2(norm / 0.5)))
    scaled = m / (2.0**squarings)
    result = np.eye(d, dtype=np.complex128)
    term = np.eye(d, dtype=np.complex128)
    for k in range(1, 60):
        term = term @ scaled / k
        result = result + term
        if np.linalg.norm(term, 1) <= 1e-18 * np.linalg.norm(result, 1):
            break
    else:
        raise NumericalError("expm: series did not converge within 60 terms")
    for _ in range(squarings):
        result = result @ result
    return result
