"""Training data: random product inputs and their correlated multi-time outputs.

Inputs are drawn from the Hilbert-Schmidt ensemble (normalized Ginibre).
Outputs come from the dense sequential oracle, not the MPO path, so learned
process tensors are fit to data produced by independent code.  The RNG is
counter-based (Philox) so datasets are reproducible from the seed alone.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from proctensor import tn
from proctensor.exceptions import ValidationError
from proctensor.model import ModelParams
from proctensor.process import apply_process_dense

__all__ = ["Dataset", "sample_input_state", "generate_dataset", "make_rng"]

MPS_CONVERSION_CUTOFF = 1e-12  # relative SVD cutoff when densifying outputs


def make_rng(seed: int) -> np.random.Generator:
    """Counter-based generator; identical streams across platforms."""
    return np.random.Generator(np.random.Philox(seed))


def sample_input_state(rng: np.random.Generator) -> np.ndarray:
    """One Hilbert-Schmidt random qubit state: G G† / tr(G G†), G Ginibre."""
    g = rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2))
    m = g @ g.conj().T
    return m / np.trace(m).real


@dataclass
class Dataset:
    """Input sequences and their multi-time outputs.

    Attributes:
        inputs: (n_samples, n_steps, 2, 2) complex array of density matrices.
        outputs: one MPS per sample, phys dims all 4, holding the vectorized
            joint output of the N steps.
        params: model parameters the data was generated from.
        n_steps: number of time steps N.
        seed: RNG seed used.
    """

    inputs: np.ndarray
    outputs: list[tn.MPS]
    params: ModelParams
    n_steps: int
    seed: int

    def __post_init__(self):
        self.inputs = np.asarray(self.inputs, dtype=np.complex128)
        if self.inputs.ndim != 4 or self.inputs.shape[1:] != (self.n_steps, 2, 2):
            raise ValidationError(
                f"Dataset: inputs shape {self.inputs.shape} does not match "
                f"(n_samples, {self.n_steps}, 2, 2)"
            )
        if len(self.outputs) != self.inputs.shape[0]:
            raise ValidationError(
                f"Dataset: {len(self.outputs)} outputs for "
                f"{self.inputs.shape[0]} input rows"
            )

    @property
    def n_samples(self) -> int:
        return self.inputs.shape[0]

    def __len__(self) -> int:
        return self.n_samples

    def subset(self, idx: np.ndarray | list[int]) -> "Dataset":
        """New Dataset restricted to the given sample indices."""
        idx = np.asarray(idx, dtype=np.intp)
        return Dataset(
            inputs=self.inputs[idx].copy(),
            outputs=[self.outputs[i].copy() for i in idx],
            params=self.params,
            n_steps=self.n_steps,
            seed=self.seed,
        )


def generate_dataset(
    params: ModelParams,
    n_steps: int,
    n_samples: int,
    seed: int,
    cutoff: float = MPS_CONVERSION_CUTOFF,
) -> Dataset:
    """Sample input sequences and compute their outputs with the dense oracle.

    Args:
        params: model parameters (N + L within the dense cap).
        n_steps: time steps per sample.
        n_samples: number of samples M.
        seed: Philox seed; the whole dataset is a pure function of it.
        cutoff: SVD cutoff when converting dense outputs to MPS.

    Returns:
        Dataset with inputs (M, N, 2, 2) and M output MPS.
    """
    if n_samples < 0 or n_steps < 1:
        raise ValidationError(
            f"generate_dataset: need n_samples >= 0 and n_steps >= 1, "
            f"got {n_samples}, {n_steps}"
        )
    rng = make_rng(seed)
    inputs = np.empty((n_samples, n_steps, 2, 2), dtype=np.complex128)
    for m in range(n_samples):
        for n in range(n_steps):
            inputs[m, n] = sample_input_state(rng)
    outputs = []
    for m in range(n_samples):
        dense = apply_process_dense(params, list(inputs[m]))
        mps, _ = tn.mps_from_dense(dense, [4] * n_steps, max_bond=None, cutoff=cutoff)
        outputs.append(mps)
    return Dataset(
        inputs=inputs,
        outputs=outputs,
        params=params,
        n_steps=n_steps,
        seed=seed,
    )
