"""Dissipative central-spin model: Hamiltonian, Liouvillian, step channel.

A single system qubit (site 0) couples with XX+YY star terms to L
environment spins forming an open XXZ chain in a uniform field.  Each
environment spin is additionally pumped by raising/lowering jump
operators with rates gamma*r and gamma*(1-r), whose unique single-spin
fixed point is diag(r, 1-r).

Vectorization convention (used by the whole package): density matrices
are flattened in C order, vec(rho)[i*d + j] = rho[i, j].  Under this
convention A.rho.B -> kron(A, B^T) vec(rho), so the unitary part of the
Liouvillian is -i(kron(H, I) - kron(I, H^T)).

Ladder operators in the dissipator are normalized as (sx +/- i sy)/sqrt(2),
which calibrates the excited-state population decay of a lone spin at
r=0 to exp(-4*gamma*t).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import reduce

import numpy as np

from proctensor import linalg
from proctensor.exceptions import CapabilityError, NumericalError, ValidationError

__all__ = [
    "ModelParams",
    "Superoperator",
    "build_hamiltonian",
    "build_liouvillian",
    "channel_superop",
    "env_steady_state",
    "vec",
    "unvec",
    "trace_covector",
]

SX = np.array([[0, 1], [1, 0]], dtype=np.complex128)
SY = np.array([[0, -1j], [1j, 0]], dtype=np.complex128)
SZ = np.array([[1, 0], [0, -1]], dtype=np.complex128)
ID2 = np.eye(2, dtype=np.complex128)

# raising toward |0> (the sigma_z = +1 state); sqrt(2) normalization, see module docstring
SP = (SX + 1j * SY) / np.sqrt(2.0)
SM = (SX - 1j * SY) / np.sqrt(2.0)

DENSE_ENV_CAP = 5  # largest L for which the dense Liouvillian is built


def vec(m: np.ndarray) -> np.ndarray:
    """Flatten a matrix to a vector in the package's C-order convention."""
    return np.asarray(m, dtype=np.complex128).reshape(-1)


def unvec(v: np.ndarray) -> np.ndarray:
    """Inverse of vec for square matrices."""
    v = np.asarray(v, dtype=np.complex128).reshape(-1)
    d = int(round(np.sqrt(v.size)))
    if d * d != v.size:
        raise ValidationError(f"unvec: length {v.size} is not a perfect square")
    return v.reshape(d, d)


def trace_covector(d: int) -> np.ndarray:
    """Row vector t with t @ vec(rho) = tr(rho) for d-dimensional rho."""
    return np.eye(d, dtype=np.complex128).reshape(-1)


@dataclass(frozen=True)
class ModelParams:
    """Couplings and rates of the dissipative spin-star model.

    Attributes:
        L: number of environment spins (>= 1).
        J: system-environment XX+YY coupling, in units of J_E.
        h: field strength on every spin.
        Delta: environment ZZ anisotropy.
        gamma: dissipation rate (>= 0).
        r: pump asymmetry in [0, 1]; the single-spin fixed point is diag(r, 1-r).
        dt: step duration (> 0), hbar = 1.
        J_E: environment chain coupling, fixed to 1 in the experiments.
    """

    L: int
    J: float
    h: float
    Delta: float
    gamma: float
    r: float
    dt: float
    J_E: float = 1.0

    def __post_init__(self):
        if self.L < 1:
            raise ValidationError(f"ModelParams: L must be >= 1, got {self.L}")
        if not 0.0 <= self.r <= 1.0:
            raise ValidationError(f"ModelParams: r must be in [0, 1], got {self.r}")
        if self.gamma < 0.0:
            raise ValidationError(f"ModelParams: gamma must be >= 0, got {self.gamma}")
        if self.dt <= 0.0:
            raise ValidationError(f"ModelParams: dt must be > 0, got {self.dt}")

    @property
    def nu_plus(self) -> float:
        return self.r

    @property
    def nu_minus(self) -> float:
        return 1.0 - self.r

    @property
    def n_sites(self) -> int:
        return self.L + 1

    @property
    def hilbert_dim(self) -> int:
        return 2 ** (self.L + 1)


@dataclass
class Superoperator:
    """Dense superoperator on vec'd density matrices of Hilbert dimension dim."""

    dim: int
    matrix: np.ndarray

    def __post_init__(self):
        d2 = self.dim * self.dim
        if self.matrix.shape != (d2, d2):
            raise ValidationError(
                f"Superoperator: matrix shape {self.matrix.shape} != ({d2}, {d2})"
            )

    def __call__(self, rho: np.ndarray) -> np.ndarray:
        """Apply to a density matrix, returning a matrix."""
        return unvec(self.matrix @ vec(rho))

    def choi(self) -> np.ndarray:
        """Choi matrix; positive semidefinite iff the map is completely positive."""
        d = self.dim
        t = self.matrix.reshape(d, d, d, d)  # [(k,l), (i,j)] output row/col, input row/col
        return np.ascontiguousarray(t.transpose(2, 0, 3, 1)).reshape(d * d, d * d)

    def is_trace_annihilating(self, tol: float = 1e-10) -> bool:
        t = trace_covector(self.dim)
        return bool(np.linalg.norm(t @ self.matrix) <= tol * np.linalg.norm(self.matrix))

    def is_trace_preserving(self, tol: float = 1e-10) -> bool:
        t = trace_covector(self.dim)
        return bool(np.linalg.norm(t @ self.matrix - t) <= tol * np.sqrt(self.dim))


def _embed(op: np.ndarray, site: int, n_sites: int) -> np.ndarray:
    ops = [ID2] * n_sites
    ops[site] = op
    return reduce(np.kron, ops)


def build_hamiltonian(p: ModelParams) -> np.ndarray:
    """Dense Hamiltonian on the system (site 0) plus L environment spins.

    H = h*sz_0 + J*sum_l (sx_0 sx_l + sy_0 sy_l)
      + h*sum_l sz_l + J_E*sum_{l<L} (sx_l sx_{l+1} + sy_l sy_{l+1} + Delta sz_l sz_{l+1})
    with open boundary conditions on the environment chain.
    """
    n = p.n_sites
    d = p.hilbert_dim
    h_mat = np.zeros((d, d), dtype=np.complex128)
    h_mat += p.h * _embed(SZ, 0, n)
    for l in range(1, n):
        h_mat += p.J * (_embed(SX, 0, n) @ _embed(SX, l, n))
        h_mat += p.J * (_embed(SY, 0, n) @ _embed(SY, l, n))
        h_mat += p.h * _embed(SZ, l, n)
    for l in range(1, n - 1):
        h_mat += p.J_E * (_embed(SX, l, n) @ _embed(SX, l + 1, n))
        h_mat += p.J_E * (_embed(SY, l, n) @ _embed(SY, l + 1, n))
        h_mat += p.J_E * p.Delta * (_embed(SZ, l, n) @ _embed(SZ, l + 1, n))
    return h_mat


def build_liouvillian(p: ModelParams) -> Superoperator:
    """Dense generator of the master equation, acting on vec'd SE states.

    The unitary part covers all spins; jump operators act on environment
    spins only, with the factor-2 dissipator convention
    D(rho) = gamma * sum_l sum_j nu_j (2 A rho A† - {A†A, rho}).
    """
    if p.L > DENSE_ENV_CAP:
        raise CapabilityError(
            f"build_liouvillian: L={p.L} exceeds the dense cap of {DENSE_ENV_CAP}"
        )
    n = p.n_sites
    d = p.hilbert_dim
    ident = np.eye(d, dtype=np.complex128)
    h_mat = build_hamiltonian(p)
    liou = -1j * (np.kron(h_mat, ident) - np.kron(ident, h_mat.T))
    for l in range(1, n):
        for op, nu in ((SP, p.nu_plus), (SM, p.nu_minus)):
            rate = p.gamma * nu
            if rate == 0.0:
                continue
            a = _embed(op, l, n)
            aa = a.conj().T @ a
            liou += rate * (
                2.0 * np.kron(a, a.conj())
                - np.kron(aa, ident)
                - np.kron(ident, aa.T)
            )
    return Superoperator(dim=d, matrix=liou)


def channel_superop(p: ModelParams) -> Superoperator:
    """One-step channel exp(L * dt); validated trace-preserving and CP."""
    liou = build_liouvillian(p)
    s = Superoperator(dim=liou.dim, matrix=linalg.expm(liou.matrix * p.dt))
    if not s.is_trace_preserving(1e-10):
        raise NumericalError("channel_superop: channel is not trace preserving")
    choi = s.choi()
    w = np.linalg.eigvalsh(0.5 * (choi + choi.conj().T))
    if w[0] < -1e-8:
        raise NumericalError(
            f"channel_superop: Choi matrix has eigenvalue {w[0]:.3e} < -1e-8"
        )
    return s


def env_steady_state(p: ModelParams) -> np.ndarray:
    """Product state diag(r, 1-r)^(x L): the dissipator's fixed point."""
    single = np.diag([p.r, 1.0 - p.r]).astype(np.complex128)
    return reduce(np.kron, [single] * p.L)
