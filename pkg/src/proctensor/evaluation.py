"""Evaluation metrics: fidelity, physical projection, medians with bootstrap
bands, and the two distance measures between processes and their outputs.

Predicted local states need not be physical (training imposes no positivity
or Hermiticity), so every prediction is projected to the closest physical
state before any fidelity is computed; exact references are used as-is.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from proctensor import linalg, tn
from proctensor.datagen import Dataset, make_rng
from proctensor.exceptions import CapabilityError, ValidationError
from proctensor.model import SX, SY, SZ, unvec
from proctensor.process import ProcessMPO, apply_process

__all__ = [
    "EvalReport",
    "fidelity",
    "project_physical",
    "local_outputs",
    "infidelity_stats",
    "process_distance",
    "output_distance",
    "evaluate_model",
]

DENSE_DISTANCE_CAP = 6  # largest N for dense 16^N process expansion
BOOTSTRAP_RESAMPLES = 1000
TRACE_COVECTOR_4 = np.array([1.0, 0.0, 0.0, 1.0], dtype=np.complex128)


@dataclass
class EvalReport:
    """Metrics for one trained model against one test set.

    step_ci and overall_ci are 95% bootstrap bands (percentile method),
    widened if necessary to contain the point estimate.  delta_process is
    None when no exact reference was available.
    """

    median_infidelity: float
    step_medians: list[float]
    step_ci: list[tuple[float, float]]
    overall_ci: tuple[float, float]
    delta_process: float | None
    delta_output: float | None
    m_test: int
    n_steps: int
    bond_dim: int | None
    seed: int


def _validate_state(m: np.ndarray, name: str, tol: float = 1e-8) -> np.ndarray:
    m = np.asarray(m, dtype=np.complex128)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValidationError(f"fidelity: {name} is not square, shape {m.shape}")
    if np.linalg.norm(m - m.conj().T) > tol:
        raise ValidationError(f"fidelity: {name} is not Hermitian within {tol}")
    if abs(np.trace(m) - 1.0) > tol:
        raise ValidationError(
            f"fidelity: {name} has trace {np.trace(m):.6f}, not 1 within {tol}"
        )
    if np.linalg.eigvalsh(0.5 * (m + m.conj().T))[0] < -tol:
        raise ValidationError(f"fidelity: {name} has an eigenvalue below -{tol}")
    return m


def fidelity(a: np.ndarray, b: np.ndarray) -> float:
    """Quantum fidelity [tr sqrt(sqrt(a) b sqrt(a))]^2 of two states.

    Eigenvalues within numerical drift below zero are clipped to zero
    before the square roots.
    """
    a = _validate_state(a, "first state")
    b = _validate_state(b, "second state")
    if a.shape != b.shape:
        raise ValidationError(
            f"fidelity: dimension mismatch {a.shape} vs {b.shape}"
        )
    wa, va = linalg.herm_eig(a)
    sqrt_a = (va * np.sqrt(np.clip(wa, 0.0, None))) @ va.conj().T
    w, _ = linalg.herm_eig(sqrt_a @ b @ sqrt_a)
    return float(np.sum(np.sqrt(np.clip(w, 0.0, None))) ** 2)


def project_physical(m: np.ndarray) -> np.ndarray:
    """Closest physical qubit state in 2-norm, via the Bloch ball.

    Hermitize, rescale to unit trace, then pull the Bloch vector back to
    length 1 if it pokes out of the ball.  For Hermitian unit-trace input
    this is the exact 2-norm projection onto valid states.
    """
    m = np.asarray(m, dtype=np.complex128)
    if m.shape != (2, 2):
        raise ValidationError(f"project_physical: expected 2x2, got {m.shape}")
    h = 0.5 * (m + m.conj().T)
    t = np.trace(h).real
    if abs(t) < 1e-12:
        raise ValidationError(
            "project_physical: trace magnitude below 1e-12, direction undefined"
        )
    h = h / t
    v = np.array(
        [np.trace(h @ SX).real, np.trace(h @ SY).real, np.trace(h @ SZ).real]
    )
    v = v / max(1.0, float(np.linalg.norm(v)))
    return 0.5 * (
        np.eye(2, dtype=np.complex128) + v[0] * SX + v[1] * SY + v[2] * SZ
    )


def local_outputs(y: tn.MPS, n: int) -> np.ndarray:
    """Reduced state of output slot n (1-based), all other slots traced."""
    n_steps = len(y)
    if not 1 <= n <= n_steps:
        raise ValidationError(
            f"local_outputs: slot {n} out of range 1..{n_steps}"
        )
    if y.phys_dims != [4] * n_steps:
        raise ValidationError(
            f"local_outputs: expected physical dims 4, got {y.phys_dims}"
        )
    left = np.ones(1, dtype=np.complex128)
    for k in range(n - 1):
        left = left @ np.einsum("apb,p->ab", y.sites[k], TRACE_COVECTOR_4)
    open_slot = np.einsum("a,apb->pb", left, y.sites[n - 1])
    for k in range(n, n_steps):
        open_slot = open_slot @ np.einsum(
            "apb,p->ab", y.sites[k], TRACE_COVECTOR_4
        )
    return unvec(open_slot[:, 0], 2)


def _infidelity_matrix(pred: list[tn.MPS], truth: list[tn.MPS]) -> np.ndarray:
    """(M, N) matrix of 1 - F(projected prediction, reference)."""
    m_test = len(pred)
    n_steps = len(pred[0])
    r = np.empty((m_test, n_steps))
    for m in range(m_test):
        for n in range(1, n_steps + 1):
            guess = project_physical(local_outputs(pred[m], n))
            r[m, n - 1] = 1.0 - fidelity(guess, local_outputs(truth[m], n))
    return r


def infidelity_stats(
    pred: list[tn.MPS],
    truth: "Dataset | list[tn.MPS]",
    n_resamples: int = BOOTSTRAP_RESAMPLES,
    seed: int = 0,
) -> EvalReport:
    """Median infidelity per step and overall, with 95% bootstrap bands.

    Per-step medians resample the test samples; the overall median
    additionally resamples the steps.  Predictions are projected to
    physical states slot-wise before each fidelity.
    """
    truth_list = truth.outputs if isinstance(truth, Dataset) else truth
    if len(pred) == 0:
        raise ValidationError("infidelity_stats: empty test set")
    if len(pred) != len(truth_list):
        raise ValidationError(
            f"infidelity_stats: {len(pred)} predictions vs "
            f"{len(truth_list)} references"
        )
    r = _infidelity_matrix(pred, truth_list)
    m_test, n_steps = r.shape
    step_medians = np.median(r, axis=0)
    point = float(np.median(step_medians))
    rng = make_rng(seed)
    boot_steps = np.empty((n_resamples, n_steps))
    boot_overall = np.empty(n_resamples)
    for b in range(n_resamples):
        rows = rng.integers(0, m_test, size=m_test)
        med_n = np.median(r[rows], axis=0)
        boot_steps[b] = med_n
        cols = rng.integers(0, n_steps, size=n_steps)
        boot_overall[b] = np.median(med_n[cols])
    step_ci = []
    for n in range(n_steps):
        lo, hi = np.percentile(boot_steps[:, n], [2.5, 97.5])
        p = float(step_medians[n])
        step_ci.append((min(float(lo), p), max(float(hi), p)))
    lo, hi = np.percentile(boot_overall, [2.5, 97.5])
    return EvalReport(
        median_infidelity=point,
        step_medians=[float(v) for v in step_medians],
        step_ci=step_ci,
        overall_ci=(min(float(lo), point), max(float(hi), point)),
        delta_process=None,
        delta_output=None,
        m_test=m_test,
        n_steps=n_steps,
        bond_dim=None,
        seed=seed,
    )


def process_distance(approx: ProcessMPO, exact: ProcessMPO) -> float:
    """Relative 2-norm distance of the dense process expansions."""
    if approx.n_steps != exact.n_steps:
        raise ValidationError(
            f"process_distance: step counts differ, "
            f"{approx.n_steps} vs {exact.n_steps}"
        )
    if approx.n_steps > DENSE_DISTANCE_CAP:
        raise CapabilityError(
            f"process_distance: N = {approx.n_steps} exceeds the dense "
            f"cap of {DENSE_DISTANCE_CAP}"
        )
    ref = exact.mpo.dense_vector()
    ref_norm = np.linalg.norm(ref)
    if ref_norm == 0.0:
        raise ValidationError("process_distance: zero reference process")
    return float(np.linalg.norm(approx.mpo.dense_vector() - ref) / ref_norm)


def output_distance(
    pred: list[tn.MPS], truth: "Dataset | list[tn.MPS]"
) -> float:
    """Mean squared 2-norm of the multi-time residuals."""
    truth_list = truth.outputs if isinstance(truth, Dataset) else truth
    if len(pred) == 0:
        raise ValidationError("output_distance: empty test set")
    if len(pred) != len(truth_list):
        raise ValidationError(
            f"output_distance: {len(pred)} predictions vs "
            f"{len(truth_list)} references"
        )
    total = 0.0
    for yh, y in zip(pred, truth_list):
        total += (
            tn.mps_inner(yh, yh).real
            + tn.mps_inner(y, y).real
            - 2.0 * tn.mps_inner(yh, y).real
        )
    return float(total / len(pred))


def evaluate_model(
    model: ProcessMPO,
    test_data: Dataset,
    exact: ProcessMPO | None = None,
    n_resamples: int = BOOTSTRAP_RESAMPLES,
    seed: int = 0,
    bond_dim: int | None = None,
) -> EvalReport:
    """Full evaluation of a trained model on held-out data.

    Computes predictions for every test input sequence, then the median
    infidelities with bootstrap bands, the mean output distance, and (when
    an exact reference is given and N allows dense expansion) the process
    distance.
    """
    if model.n_steps != test_data.n_steps:
        raise ValidationError(
            f"evaluate_model: model has {model.n_steps} steps, "
            f"data has {test_data.n_steps}"
        )
    pred = [
        apply_process(model, list(test_data.inputs[m]))
        for m in range(test_data.n_samples)
    ]
    report = infidelity_stats(pred, test_data, n_resamples=n_resamples, seed=seed)
    report.delta_output = output_distance(pred, test_data)
    if exact is not None:
        report.delta_process = process_distance(model, exact)
    report.bond_dim = bond_dim if bond_dim is not None else model.mpo.max_bond()
    return report
