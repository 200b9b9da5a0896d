"""Exact process tensors as MPOs, their application, and Born-rule contraction.

The N-step process tensor of the model is an MPO with one site per time
step.  Site n carries an input leg x_{n-1} (the vectorized state fed into
step n), an output leg y_n (the vectorized system state after step n), and
bond legs that carry the vectorized environment between steps.  The left
boundary is contracted with vec of the environment steady state, the right
boundary with the environment trace covector, both before any compression.

Dense oracles (`apply_process_dense`, `probability_oracle_dense`) simulate
the same physics by direct density-matrix evolution and superoperator
composition, sharing no tensor-network code with the MPO path.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from proctensor import tn
from proctensor.exceptions import CapabilityError, ValidationError
from proctensor.model import (
    ModelParams,
    Superoperator,
    channel_superop,
    env_steady_state,
    trace_covector,
    vec,
)

__all__ = [
    "ProcessMPO",
    "InstrumentElement",
    "validate_qubit_state",
    "build_exact_process_mpo",
    "apply_process",
    "apply_process_dense",
    "expectation_born",
    "probability_oracle_dense",
]

DENSE_PROCESS_CAP = 4096  # largest 2^(N+L) for the dense sequential oracle


def validate_qubit_state(m: np.ndarray, tol: float = 1e-8) -> np.ndarray:
    """Check Hermiticity, unit trace, and positivity; return as complex array."""
    m = np.asarray(m, dtype=np.complex128)
    if m.shape != (2, 2):
        raise ValidationError(f"expected a 2x2 density matrix, got shape {m.shape}")
    if np.linalg.norm(m - m.conj().T) > tol:
        raise ValidationError("density matrix is not Hermitian")
    if abs(np.trace(m) - 1.0) > tol:
        raise ValidationError(f"density matrix has trace {np.trace(m):.6f}, not 1")
    w = np.linalg.eigvalsh(0.5 * (m + m.conj().T))
    if w[0] < -tol:
        raise ValidationError(f"density matrix has eigenvalue {w[0]:.3e} < 0")
    return m


@dataclass
class ProcessMPO:
    """A process tensor in MPO form.

    Attributes:
        mpo: MPO over n_steps sites, all physical dims 4.
        n_steps: number of time steps N.
        dt: step duration.
        provenance: "exact" (built from the model) or "trained" (learned).
        discarded_weight: compression weight discarded at construction.
    """

    mpo: tn.MPO
    n_steps: int
    dt: float
    provenance: str
    discarded_weight: float = field(default=0.0)

    def __post_init__(self):
        if self.provenance not in ("exact", "trained"):
            raise ValidationError(
                f"ProcessMPO: provenance must be 'exact' or 'trained', got {self.provenance!r}"
            )
        if len(self.mpo) != self.n_steps:
            raise ValidationError(
                f"ProcessMPO: {len(self.mpo)} sites != n_steps {self.n_steps}"
            )
        if any(d != 4 for d in self.mpo.in_dims) or any(d != 4 for d in self.mpo.out_dims):
            raise ValidationError("ProcessMPO: all physical dims must equal 4")

    def bond_dims(self) -> list[int]:
        return self.mpo.bond_dims()

    def max_bond(self) -> int:
        return self.mpo.max_bond()


@dataclass
class InstrumentElement:
    """One CP map of an instrument, as a qubit superoperator.

    The 4x4 matrix acts on vec'd qubit states in the package convention.
    A complete instrument is a set of elements whose superoperators sum to
    a trace-preserving map.
    """

    superop: np.ndarray
    label: str = ""

    def __post_init__(self):
        self.superop = np.asarray(self.superop, dtype=np.complex128)
        if self.superop.shape != (4, 4):
            raise ValidationError(
                f"InstrumentElement: superoperator shape {self.superop.shape} != (4, 4)"
            )

    def choi(self) -> np.ndarray:
        return Superoperator(dim=2, matrix=self.superop).choi()

    def is_cp(self, tol: float = 1e-10) -> bool:
        c = self.choi()
        w = np.linalg.eigvalsh(0.5 * (c + c.conj().T))
        return bool(w[0] >= -tol)

    @classmethod
    def from_kraus(cls, k: np.ndarray, label: str = "") -> "InstrumentElement":
        """Element rho -> k rho k† for a single Kraus operator k."""
        k = np.asarray(k, dtype=np.complex128)
        return cls(superop=np.kron(k, k.conj()), label=label)

    @classmethod
    def projector(cls, v: np.ndarray, label: str = "") -> "InstrumentElement":
        """Projective element rho -> |v><v| rho |v><v| (v normalized here)."""
        v = np.asarray(v, dtype=np.complex128).reshape(-1)
        if v.shape != (2,) or np.linalg.norm(v) == 0.0:
            raise ValidationError("projector: need a nonzero length-2 vector")
        v = v / np.linalg.norm(v)
        return cls.from_kraus(np.outer(v, v.conj()), label=label)

    @classmethod
    def identity(cls, label: str = "id") -> "InstrumentElement":
        return cls(superop=np.eye(4, dtype=np.complex128), label=label)


def is_complete_instrument(elements: list[InstrumentElement], tol: float = 1e-10) -> bool:
    """True if the elements sum to a trace-preserving map."""
    total = sum(e.superop for e in elements)
    return Superoperator(dim=2, matrix=total).is_trace_preserving(tol)


def _channel_site_tensor(p: ModelParams) -> np.ndarray:
    """The step channel as an MPO site (env-in, x, y, env-out).

    The SE channel superoperator is reshaped so the system's vectorized
    legs become the physical legs and the environment's become the bonds.
    """
    de = 2**p.L
    c = channel_superop(p).matrix
    t = c.reshape(2, de, 2, de, 2, de, 2, de)  # out (s,e,s',e'), in (t,f,t',f')
    # group to (y, env-out, x, env-in) with y=(s,s'), x=(t,t')
    t = t.transpose(0, 2, 1, 3, 4, 6, 5, 7).reshape(4, de * de, 4, de * de)
    # site axes (env-in, x, y, env-out)
    return np.ascontiguousarray(t.transpose(3, 2, 0, 1))


def build_exact_process_mpo(
    p: ModelParams,
    n_steps: int,
    max_bond: int | None = None,
    cutoff: float = 0.0,
) -> ProcessMPO:
    """Contract the environment out of N channel applications into an MPO.

    Args:
        p: model parameters (L within the dense cap).
        n_steps: number of time steps N >= 1.
        max_bond: bond cap for the final compression, or None.
        cutoff: relative singular-value cutoff for the final compression.

    Returns:
        Exact ProcessMPO.  Before compression every internal bond has
        dimension 4^L (the vectorized environment).
    """
    if n_steps < 1:
        raise ValidationError(f"build_exact_process_mpo: n_steps must be >= 1, got {n_steps}")
    w = _channel_site_tensor(p)
    rho_env = vec(env_steady_state(p))
    tr_env = trace_covector(2**p.L)
    if n_steps == 1:
        site = np.einsum("a,axyb,b->xy", rho_env, w, tr_env)
        sites = [site[None, :, :, None]]
    else:
        first = np.einsum("a,axyb->xyb", rho_env, w)[None, :, :, :]
        last = np.einsum("axyb,b->axy", w, tr_env)[:, :, :, None]
        sites = [first] + [w.copy() for _ in range(n_steps - 2)] + [last]
    mpo = tn.MPO(sites)
    discarded = 0.0
    if max_bond is not None or cutoff > 0.0:
        mpo, discarded = tn.compress(mpo, max_bond, cutoff)
    return ProcessMPO(
        mpo=mpo,
        n_steps=n_steps,
        dt=p.dt,
        provenance="exact",
        discarded_weight=discarded,
    )


def apply_process(u: ProcessMPO, inputs: list[np.ndarray]) -> tn.MPS:
    """Contract input states into the input legs, leaving the output MPS.

    Args:
        u: process tensor.
        inputs: N qubit density matrices X_0 ... X_{N-1}.

    Returns:
        MPS over N sites of physical dim 4 holding the correlated
        vectorized outputs of steps 1 ... N.
    """
    if len(inputs) != u.n_steps:
        raise ValidationError(
            f"apply_process: got {len(inputs)} inputs for {u.n_steps} steps"
        )
    states = [vec(validate_qubit_state(x)) for x in inputs]
    sites = [
        np.einsum("axyb,x->ayb", w, v)
        for w, v in zip(u.mpo.sites, states)
    ]
    return tn.MPS(sites)


def apply_process_dense(p: ModelParams, inputs: list[np.ndarray]) -> np.ndarray:
    """Dense sequential oracle for the multi-time output state.

    Evolves the joint density matrix of (past output slots, system,
    environment) step by step: after each step the system becomes the next
    output slot and a fresh input is installed.  Returns the joint output
    of slots 1..N, vectorized slot-major: the flat index is built from
    per-slot (row, column) pairs, slot 1 slowest, matching the dense
    expansion of the MPS that `apply_process` produces.

    Args:
        p: model parameters.
        inputs: N qubit density matrices.

    Returns:
        Complex vector of length 4^N.
    """
    n_steps = len(inputs)
    if n_steps < 1:
        raise ValidationError("apply_process_dense: need at least one input")
    if 2 ** (n_steps + p.L) > DENSE_PROCESS_CAP:
        raise CapabilityError(
            f"apply_process_dense: 2^(N+L) = {2 ** (n_steps + p.L)} exceeds "
            f"the dense cap of {DENSE_PROCESS_CAP}"
        )
    states = [validate_qubit_state(x) for x in inputs]
    de = 2**p.L
    chan = channel_superop(p).matrix.reshape(2, de, 2, de, 2, de, 2, de)
    # state tensor axes: (slots..., s, e | slots'..., s', e')
    rho = np.einsum("ab,cd->acbd", states[0], env_steady_state(p))
    for n in range(1, n_steps + 1):
        k = n - 1  # number of completed output slots
        rho = np.tensordot(
            chan, rho, axes=([4, 5, 6, 7], [k, k + 1, 2 * k + 2, 2 * k + 3])
        )
        # tensordot leaves (s, e, s', e', slots..., slots'...); restore order
        order = (
            list(range(4, 4 + k)) + [0, 1] + list(range(4 + k, 4 + 2 * k)) + [2, 3]
        )
        rho = rho.transpose(order)
        if n < n_steps:
            rho = np.tensordot(rho, states[n], axes=0)
            # new system legs arrive last; slot them in before each env leg
            rho = np.moveaxis(rho, 2 * k + 4, k + 1)  # ket row of the fresh input
            rho = np.moveaxis(rho, 2 * k + 5, 2 * k + 4)  # bra column
    # trace out the environment
    rho = np.trace(rho, axis1=n_steps, axis2=2 * n_steps + 1)
    # interleave ket/bra slot legs to the slot-major layout
    perm = []
    for i in range(n_steps):
        perm.extend([i, n_steps + i])
    return np.ascontiguousarray(rho.transpose(perm)).reshape(-1)


def expectation_born(
    u: ProcessMPO, prep: np.ndarray, elements: list[InstrumentElement]
) -> complex:
    """Born-rule contraction: preparation, one element per step, final trace.

    The preparation enters the slot-0 input leg as vec(prep).  Element n
    connects output slot n to input slot n for n < N; the last element is
    applied to the final output and its result traced.

    Args:
        u: process tensor (exact or trained).
        prep: initial qubit density matrix.
        elements: exactly N instrument elements.

    Returns:
        Complex scalar; a probability in [0, 1] (up to tolerance) when u is
        exact and the elements belong to trace-preserving instruments.
    """
    if len(elements) != u.n_steps:
        raise ValidationError(
            f"expectation_born: got {len(elements)} elements for {u.n_steps} steps"
        )
    prep = validate_qubit_state(prep)
    t = np.einsum("x,xyb->yb", vec(prep), u.mpo.sites[0][0])
    for n in range(1, u.n_steps):
        fed = elements[n - 1].superop @ t  # (x, b)
        t = np.einsum("xb,bxyc->yc", fed, u.mpo.sites[n])
    out = elements[-1].superop @ t[:, 0]
    return complex(trace_covector(2) @ out)


def probability_oracle_dense(
    p: ModelParams, prep: np.ndarray, elements: list[InstrumentElement]
) -> float:
    """Dense sequence probability: alternate channel and instrument superoperators.

    Composes Tr[ Lam_N E ... Lam_1 E (prep x env steady state) ] directly on
    the full SE superoperator space, independent of any MPO machinery.
    """
    if len(elements) < 1:
        raise ValidationError("probability_oracle_dense: need at least one element")
    prep = validate_qubit_state(prep)
    de = 2**p.L
    d = 2 * de
    chan = channel_superop(p).matrix
    v = vec(np.kron(prep, env_steady_state(p)))
    for e in elements:
        v = chan @ v
        s4 = e.superop.reshape(2, 2, 2, 2)
        v4 = v.reshape(2, de, 2, de)
        v = np.einsum("klij,iejf->kelf", s4, v4).reshape(-1)
    val = complex(trace_covector(d) @ v)
    return float(val.real)
