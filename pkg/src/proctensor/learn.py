"""Alternating least squares fit of a process MPO to input/output data.

The model predicts, for an input sequence (X_0 ... X_{N-1}), the output MPS
obtained by feeding vec(X_n) into the input leg of site n.  The objective is

    sum_m || predict(x_m) - y_m ||^2  +  mu * ||W||_F^2

which is quadratic in any one site tensor, so each site visit solves a
linear system exactly and the loss never increases.  The sweep engine keeps
the MPO in mixed-canonical form with the gauge center at the site being
solved: the ridge term is then exactly mu * ||site||^2 and the normal
matrix stays well conditioned.  The output leg does not couple across the
normal equations, so one factorization serves all four right-hand sides.

Left/right environments (both the data-data and data-target kinds) are
cached and updated incrementally, one bond at a time, as the center moves.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from scipy.linalg import lapack as _lapack

from proctensor import tn
from proctensor.datagen import Dataset, make_rng
from proctensor.exceptions import NumericalError, ValidationError
from proctensor.process import ProcessMPO

__all__ = [
    "TrainConfig",
    "TrainReport",
    "init_mpo",
    "loss",
    "local_update",
    "train",
]

DEFAULT_MU_PER_SAMPLE = 1e-6  # mu defaults to this times the sample count


@dataclass(frozen=True)
class TrainConfig:
    """Training hyperparameters.

    Attributes:
        bond_dim: bond dimension cap D of the learned MPO.
        sweeps: number of unidirectional passes; directions alternate.  No
            early stopping: exactly this many passes run.
        mu: ridge weight on the squared Frobenius norm; None means
            DEFAULT_MU_PER_SAMPLE times the training-set size.
        seed: Philox seed for the random initial MPO.
        jitter: base relative jitter for the solver fallback, applied as
            jitter * trace(A) / dim(A) and escalated on repeated failure.
    """

    bond_dim: int
    sweeps: int = 10
    mu: float | None = None
    seed: int = 0
    jitter: float = 1e-12

    def __post_init__(self):
        if self.bond_dim < 1:
            raise ValidationError(f"TrainConfig: bond_dim must be >= 1, got {self.bond_dim}")
        if self.sweeps < 1:
            raise ValidationError(f"TrainConfig: sweeps must be >= 1, got {self.sweeps}")
        if self.mu is not None and self.mu < 0.0:
            raise ValidationError(f"TrainConfig: mu must be >= 0, got {self.mu}")
        if self.jitter < 0.0:
            raise ValidationError(f"TrainConfig: jitter must be >= 0, got {self.jitter}")

    def resolve_mu(self, n_samples: int) -> float:
        if self.mu is not None:
            return self.mu
        return DEFAULT_MU_PER_SAMPLE * n_samples


@dataclass
class TrainReport:
    """What happened during a fit.

    loss_history holds the objective before any solve and after every site
    visit, so it is non-increasing up to solver tolerance.  site_conditions
    pairs each visit with a cheap reciprocal-condition estimate of its
    normal matrix; jitter_events records (site, jitter) for every solve
    that needed the fallback.
    """

    loss_history: list[float]
    site_conditions: list[tuple[int, float]]
    jitter_events: list[tuple[int, float]]
    n_sweeps: int
    wall_time_s: float
    bond_dims: list[int]
    mu: float
    config: TrainConfig

    @property
    def final_loss(self) -> float:
        return self.loss_history[-1]


def init_mpo(n_steps: int, bond_dim: int, seed: int) -> tn.MPO:
    """Random complex-Gaussian MPO, unit Frobenius norm, capped bond profile.

    Bonds never exceed the exact rank cap of a (left block | right block)
    split: each site contributes 16 local degrees of freedom (input leg
    times output leg), so the cap at a cut is 16^(sites on the short side)
    and capping there loses nothing.
    """
    if n_steps < 1:
        raise ValidationError(f"init_mpo: n_steps must be >= 1, got {n_steps}")
    if bond_dim < 1:
        raise ValidationError(f"init_mpo: bond_dim must be >= 1, got {bond_dim}")
    rng = make_rng(seed)
    bonds = [1]
    for i in range(1, n_steps):
        bonds.append(int(min(bond_dim, 16 ** min(i, n_steps - i))))
    bonds.append(1)
    sites = []
    for i in range(n_steps):
        shape = (bonds[i], 4, 4, bonds[i + 1])
        sites.append(
            (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))
            / np.sqrt(2.0)
        )
    mpo = tn.MPO(sites)
    norm = mpo.frobenius_norm()
    if norm == 0.0:
        raise NumericalError("init_mpo: zero-norm initialization")
    scale = norm ** (-1.0 / n_steps)
    return tn.MPO([s * scale for s in sites])


def _predict_sites(sites: list[np.ndarray], xrow: np.ndarray) -> tn.MPS:
    """Feed one vectorized input sequence (N, 4) into the input legs."""
    return tn.MPS(
        [np.einsum("axyb,x->ayb", w, x) for w, x in zip(sites, xrow)]
    )


def _loss_sites(
    sites: list[np.ndarray],
    xmat: np.ndarray,
    ysites: list[tn.MPS],
    mu: float,
) -> float:
    """Direct evaluation of the objective; no cached environments."""
    total = 0.0
    for m, y in enumerate(ysites):
        yh = _predict_sites(sites, xmat[m])
        total += (
            tn.mps_inner(yh, yh).real
            + tn.mps_inner(y, y).real
            - 2.0 * tn.mps_inner(yh, y).real
        )
    if mu > 0.0:
        total += mu * tn.MPO(sites).frobenius_norm() ** 2
    return float(total)


def _as_sites(u: "ProcessMPO | tn.MPO") -> list[np.ndarray]:
    return (u.mpo if isinstance(u, ProcessMPO) else u).sites


def loss(u: "ProcessMPO | tn.MPO", data: Dataset, mu: float = 0.0) -> float:
    """Summed squared output residual over the dataset plus the ridge term."""
    sites = _as_sites(u)
    if len(sites) != data.n_steps:
        raise ValidationError(
            f"loss: model has {len(sites)} steps, data has {data.n_steps}"
        )
    xmat = data.inputs.reshape(data.n_samples, data.n_steps, 4)
    return _loss_sites(sites, xmat, data.outputs, mu)


def _solve_psd(
    a: np.ndarray, rhs: np.ndarray, base_jitter: float
) -> tuple[np.ndarray, float, float]:
    """Cholesky solve with escalating jitter on factorization failure.

    Returns (solution, reciprocal condition estimate, jitter used).
    """
    base = base_jitter * max(np.trace(a).real, 0.0) / a.shape[0]
    anorm = np.linalg.norm(a, 1)
    for jitter in (0.0, base, 1e2 * base, 1e4 * base):
        try:
            c = cho_factor(a + jitter * np.eye(a.shape[0]), lower=True)
        except np.linalg.LinAlgError:
            continue
        rcond, info = _lapack.zpocon(c[0], anorm, lower=1)
        if info != 0:
            rcond = 0.0
        return cho_solve(c, rhs), float(rcond), jitter
    raise NumericalError(
        f"local solve failed: normal matrix of size {a.shape[0]} stayed "
        "indefinite through jitter escalation"
    )


class _Engine:
    """Mutable sweep state: site tensors, cached environments, diagnostics.

    Environment index conventions, for sample m:
        ww envs (data-data):  env[m, p, q] with p the conjugated-side bond.
        wy envs (data-target): env[p, alpha] with alpha the target MPS bond.
    Requires mixed-canonical gauge at the solved site (the ridge term is
    applied as mu times the identity).
    """

    def __init__(self, sites: list[np.ndarray], xmat: np.ndarray,
                 ysites: list[tn.MPS], mu: float, jitter: float):
        self.w = [np.ascontiguousarray(s) for s in sites]
        self.x = xmat  # (M, N, 4)
        self.y = [list(y.sites) for y in ysites]
        self.mu = mu
        self.jitter = jitter
        self.m = xmat.shape[0]
        self.n = len(sites)
        self.y2 = float(sum(tn.mps_inner(y, y).real for y in ysites))
        eye = np.ones((self.m, 1, 1), dtype=np.complex128)
        self.lww: list = [eye] * self.n
        self.rww: list = [eye] * self.n
        one = np.ones((1, 1), dtype=np.complex128)
        self.lwy: list = [[one] * self.m for _ in range(self.n)]
        self.rwy: list = [[one] * self.m for _ in range(self.n)]
        self.history: list[float] = []
        self.conds: list[tuple[int, float]] = []
        self.jitters: list[tuple[int, float]] = []

    def theta(self, n: int) -> np.ndarray:
        """(M, a, y, b): site n with every sample's input fed in."""
        return np.einsum("axyb,mx->mayb", self.w[n], self.x[:, n], optimize=True)

    def refresh_right_envs(self) -> None:
        """Rebuild all right environments from the current site tensors."""
        for n in range(self.n - 1, 0, -1):
            self.advance_right(n)

    def advance_left(self, n: int) -> None:
        """Absorb site n (just gauged) into the left environments."""
        th = self.theta(n)
        self.lww[n + 1] = np.einsum(
            "mpq,mpyc,mqyd->mcd", self.lww[n], th.conj(), th, optimize=True
        )
        thc = th.conj()
        self.lwy[n + 1] = [
            np.einsum("pA,pyc,AyG->cG", self.lwy[n][m], thc[m], self.y[m][n])
            for m in range(self.m)
        ]

    def advance_right(self, n: int) -> None:
        """Absorb site n (just gauged) into the right environments."""
        th = self.theta(n)
        self.rww[n - 1] = np.einsum(
            "mpyc,mqyd,mcd->mpq", th.conj(), th, self.rww[n], optimize=True
        )
        thc = th.conj()
        self.rwy[n - 1] = [
            np.einsum("pyc,AyG,cG->pA", thc[m], self.y[m][n], self.rwy[n][m])
            for m in range(self.m)
        ]

    def solve_site(self, n: int) -> None:
        """Replace site n with the local least-squares optimum."""
        dl = self.w[n].shape[0]
        dr = self.w[n].shape[3]
        xn = self.x[:, n]
        p = xn.conj()[:, :, None] * xn[:, None, :]  # (M, 4, 4), row side conj
        a = np.einsum(
            "mxu,mpq,mcd->xpcuqd", p, self.lww[n], self.rww[n], optimize=True
        ).reshape(4 * dl * dr, 4 * dl * dr)
        c = np.empty((self.m, dl, 4, dr), dtype=np.complex128)
        for m in range(self.m):
            c[m] = np.einsum(
                "pA,AyG,cG->pyc", self.lwy[n][m], self.y[m][n], self.rwy[n][m]
            )
        b = np.einsum("mx,mpyc->xpcy", xn.conj(), c, optimize=True)
        rhs = b.reshape(4 * dl * dr, 4)
        if self.mu > 0.0:
            a = a + self.mu * np.eye(a.shape[0])
        sol, rcond, jitter = _solve_psd(a, rhs, self.jitter)
        self.conds.append((n, rcond))
        if jitter > 0.0:
            self.jitters.append((n, jitter))
        val = self.y2 - float(np.vdot(sol, rhs).real)
        if not np.isfinite(val):
            raise NumericalError(f"loss became non-finite at site {n}")
        self.history.append(val)
        self.w[n] = sol.reshape(4, dl, dr, 4).transpose(1, 0, 3, 2)

    def shift_right(self, n: int) -> None:
        """QR-gauge site n and absorb the factor into site n + 1."""
        dl, _, _, dr = self.w[n].shape
        q, r = np.linalg.qr(self.w[n].reshape(dl * 16, dr))
        self.w[n] = q.reshape(dl, 4, 4, q.shape[1])
        self.w[n + 1] = np.einsum("kb,bxyc->kxyc", r, self.w[n + 1])
        self.advance_left(n)

    def shift_left(self, n: int) -> None:
        """LQ-gauge site n and absorb the factor into site n - 1."""
        dl, _, _, dr = self.w[n].shape
        qt, rt = np.linalg.qr(self.w[n].reshape(dl, 16 * dr).conj().T)
        self.w[n] = qt.conj().T.reshape(qt.shape[1], 4, 4, dr)
        self.w[n - 1] = np.einsum("axyb,bk->axyk", self.w[n - 1], rt.conj().T)
        self.advance_right(n)

    def sweep(self, leftward: bool) -> None:
        if leftward:
            for n in range(self.n - 1, -1, -1):
                self.solve_site(n)
                if n > 0:
                    self.shift_left(n)
        else:
            for n in range(self.n):
                self.solve_site(n)
                if n < self.n - 1:
                    self.shift_right(n)


def _pure_gram(sites: list[np.ndarray], skip: int) -> tuple[np.ndarray, np.ndarray]:
    """Left and right W-W Grams around ``skip``, no data contraction."""
    left = np.ones((1, 1), dtype=np.complex128)
    for k in range(skip):
        t = sites[k]
        left = np.einsum("pq,pxyc,qxyd->cd", left, t.conj(), t, optimize=True)
    right = np.ones((1, 1), dtype=np.complex128)
    for k in range(len(sites) - 1, skip, -1):
        t = sites[k]
        right = np.einsum("pxyc,qxyd,cd->pq", t.conj(), t, right, optimize=True)
    return left, right


def local_update(
    u: "ProcessMPO | tn.MPO",
    site: int,
    data: Dataset,
    mu: float = 0.0,
    jitter: float = 1e-12,
) -> tuple[np.ndarray, float]:
    """One exact normal-equation solve for a single site, all others fixed.

    Works in whatever gauge the MPO is in: the ridge term enters as mu
    times the Gram matrix of the frozen sites rather than mu times the
    identity.  Returns the optimal site tensor and the loss of the MPO
    with that tensor installed.
    """
    sites = [s.copy() for s in _as_sites(u)]
    n = len(sites)
    if not 0 <= site < n:
        raise ValidationError(f"local_update: site {site} out of range for {n} sites")
    if len(sites) != data.n_steps:
        raise ValidationError(
            f"local_update: model has {n} steps, data has {data.n_steps}"
        )
    if data.n_samples < 1:
        raise ValidationError("local_update: empty dataset")
    xmat = data.inputs.reshape(data.n_samples, data.n_steps, 4)
    eng = _Engine(sites, xmat, data.outputs, mu, jitter)
    eng.refresh_right_envs()
    for k in range(site):
        eng.advance_left(k)
    dl = sites[site].shape[0]
    dr = sites[site].shape[3]
    xn = xmat[:, site]
    p = xn.conj()[:, :, None] * xn[:, None, :]
    a = np.einsum(
        "mxu,mpq,mcd->xpcuqd", p, eng.lww[site], eng.rww[site], optimize=True
    ).reshape(4 * dl * dr, 4 * dl * dr)
    cdat = np.empty((data.n_samples, dl, 4, dr), dtype=np.complex128)
    for m in range(data.n_samples):
        cdat[m] = np.einsum(
            "pA,AyG,cG->pyc", eng.lwy[site][m], eng.y[m][site], eng.rwy[site][m]
        )
    b = np.einsum("mx,mpyc->xpcy", xn.conj(), cdat, optimize=True)
    if mu > 0.0:
        gl, gr = _pure_gram(sites, site)
        gram = np.einsum(
            "xu,pq,cd->xpcuqd", np.eye(4), gl, gr, optimize=True
        ).reshape(a.shape)
        a = a + mu * gram
    sol, _, _ = _solve_psd(a, b.reshape(4 * dl * dr, 4), jitter)
    new_site = sol.reshape(4, dl, dr, 4).transpose(1, 0, 3, 2)
    sites[site] = new_site
    return new_site, _loss_sites(sites, xmat, data.outputs, mu)


def train(data: Dataset, config: TrainConfig) -> tuple[ProcessMPO, TrainReport]:
    """Fit a process MPO to the dataset by alternating least squares.

    Runs exactly config.sweeps unidirectional passes, alternating direction
    and starting left to right.  The loss history records the objective
    before training and after every site visit.

    Returns:
        The trained ProcessMPO and its TrainReport.
    """
    if data.n_samples < 1:
        raise ValidationError("train: empty dataset")
    t0 = time.perf_counter()
    mu = config.resolve_mu(data.n_samples)
    xmat = data.inputs.reshape(data.n_samples, data.n_steps, 4)
    w0 = _right_canonical_mpo(init_mpo(data.n_steps, config.bond_dim, config.seed))
    eng = _Engine(w0.sites, xmat, data.outputs, mu, config.jitter)
    eng.history.append(_loss_sites(eng.w, xmat, data.outputs, mu))
    eng.refresh_right_envs()
    for s in range(config.sweeps):
        eng.sweep(leftward=(s % 2 == 1))
    mpo = tn.MPO(eng.w)
    report = TrainReport(
        loss_history=eng.history,
        site_conditions=eng.conds,
        jitter_events=eng.jitters,
        n_sweeps=config.sweeps,
        wall_time_s=time.perf_counter() - t0,
        bond_dims=mpo.bond_dims(),
        mu=mu,
        config=config,
    )
    model = ProcessMPO(
        mpo=mpo,
        n_steps=data.n_steps,
        dt=data.params.dt,
        provenance="trained",
    )
    return model, report


def _right_canonical_mpo(mpo: tn.MPO) -> tn.MPO:
    """Right-canonicalize by fusing the physical legs, then unfuse."""
    fused = tn.right_canonicalize(mpo.fuse_legs())
    return tn.MPO(
        [s.reshape(s.shape[0], 4, 4, s.shape[2]) for s in fused.sites]
    )
