"""Matrix-variate recursive linear filter for streaming matrix factorisation.

The dictionary ``C`` (m x r) carries a Gaussian posterior whose covariance
over ``vec(C)`` is ``kron(V, I_m)``. Only the r x r factor ``V`` is stored,
so one measurement update costs O(m r + r^2) instead of O((m r)^3).

Each step picks a data column ``y``, fits coefficients ``x`` by least
squares against the current dictionary, then applies the rank-one mean and
covariance updates::

    C <- C + (y - C x) (V x)^T / (x^T V x + lam)
    V <- V - (V x)(V x)^T / (x^T V x + lam)

An optional process-noise term ``V <- V + QV`` before each update turns the
recursion into a Kalman filter with a slowly drifting dictionary.
"""

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .linalg import ContractViolation, SingularSystem, as_matrix, as_vector, solve_spd

__all__ = [
    "ModelConfig",
    "DictionaryState",
    "Observation",
    "StepRecord",
    "PassTrace",
    "NotPositiveSemidefinite",
    "init_state",
    "gram_ridge",
    "estimate_coefficients",
    "estimate_coefficients_masked",
    "coefficients_for",
    "residual_for",
    "mean_update",
    "covariance_update",
    "predict",
    "step",
    "run_pass",
    "reconstruct",
]

logger = logging.getLogger(__name__)

# min eigenvalue of V below -PSD_RTOL * trace(V) is an error, not drift
PSD_RTOL = 1e-8


class NotPositiveSemidefinite(ArithmeticError):
    """V lost positive semidefiniteness beyond round-off."""


@dataclass(frozen=True)
class ModelConfig:
    """Hyper-parameters of the filter.

    ``ridge`` is relative: the Gram matrix ``G = C^T C`` gets
    ``ridge * trace(G) / r`` added to its diagonal. Set it to 0 for the exact
    pseudoinverse. ``init_scale=None`` means ``1 / sqrt(rank)``.
    ``freeze_covariance`` keeps ``V`` at its initial value, which with
    ``V0_scale=1`` reduces the mean update to Broyden's rule.
    """

    rank: int
    lam: float = 2.0
    V0_scale: float = 1.0
    ridge: float = 1e-8
    QV: np.ndarray | None = None
    init_seed: int = 0
    init_scale: float | None = None
    freeze_covariance: bool = False

    def __post_init__(self):
        if self.rank < 1:
            raise ContractViolation("rank must be >= 1")
        if not self.lam > 0:
            raise ContractViolation("lam must be > 0")
        if not self.V0_scale > 0:
            raise ContractViolation("V0_scale must be > 0")
        if self.ridge < 0:
            raise ContractViolation("ridge must be >= 0")
        if self.init_scale is not None and not self.init_scale > 0:
            raise ContractViolation("init_scale must be > 0")
        if self.QV is not None:
            QV = as_matrix(self.QV, "QV")
            if QV.shape != (self.rank, self.rank):
                raise ContractViolation(
                    f"QV must be {self.rank}x{self.rank}, got {QV.shape}")
            _check_psd(QV, "QV")
            object.__setattr__(self, "QV", QV)


@dataclass(frozen=True)
class DictionaryState:
    """Posterior summary: mean dictionary ``C`` and covariance factor ``V``."""

    C: np.ndarray
    V: np.ndarray
    lam: float
    step: int = 0

    def __post_init__(self):
        C = as_matrix(self.C, "C")
        V = as_matrix(self.V, "V")
        if V.shape != (C.shape[1], C.shape[1]):
            raise ContractViolation(
                f"V must be {C.shape[1]}x{C.shape[1]}, got {V.shape}")
        if not self.lam > 0:
            raise ContractViolation("lam must be > 0")
        object.__setattr__(self, "C", C)
        object.__setattr__(self, "V", V)

    @property
    def m(self):
        return self.C.shape[0]

    @property
    def r(self):
        return self.C.shape[1]


@dataclass(frozen=True)
class Observation:
    y: np.ndarray
    mask: np.ndarray | None = None
    source_index: int = -1

    def __post_init__(self):
        y = as_vector(self.y, "y")
        object.__setattr__(self, "y", y)
        if self.mask is not None:
            mask = as_vector(self.mask, "mask")
            if mask.shape != y.shape:
                raise ContractViolation("mask and y lengths differ")
            if not np.all((mask == 0) | (mask == 1)):
                raise ContractViolation("mask entries must be 0 or 1")
            object.__setattr__(self, "mask", mask)


@dataclass(frozen=True)
class StepRecord:
    index: int
    residual_norm: float
    skipped: bool = False
    error: str | None = None


@dataclass
class PassTrace:
    records: list = field(default_factory=list)

    @property
    def residual_norms(self):
        return np.array([r.residual_norm for r in self.records if not r.skipped])

    @property
    def skipped(self):
        return [r for r in self.records if r.skipped]

    def __len__(self):
        return len(self.records)


def _check_psd(A, name):
    if np.max(np.abs(A - A.T), initial=0.0) > 1e-10 * max(1.0, np.max(np.abs(A))):
        raise ContractViolation(f"{name} must be symmetric")
    lo = np.linalg.eigvalsh(A)[0] if A.size else 0.0
    if lo < -1e-10 * max(1.0, np.trace(A)):
        raise ContractViolation(f"{name} must be positive semidefinite")


def init_state(cfg, m):
    """Random dictionary ``C0 ~ N(0, init_scale^2)`` and ``V0 = V0_scale * I``."""
    if m < 1:
        raise ContractViolation("m must be >= 1")
    scale = cfg.init_scale if cfg.init_scale is not None else 1.0 / np.sqrt(cfg.rank)
    rng = np.random.default_rng(cfg.init_seed)
    C = scale * rng.standard_normal((m, cfg.rank))
    V = cfg.V0_scale * np.eye(cfg.rank)
    return DictionaryState(C=C, V=V, lam=cfg.lam, step=0)


def gram_ridge(G, ridge):
    """Absolute diagonal load for a Gram matrix given the relative ``ridge``."""
    if ridge == 0:
        return 0.0
    return ridge * np.trace(G) / G.shape[0]


def _solve_normal(A, rhs, ridge):
    G = A.T @ A
    load = gram_ridge(G, ridge)
    if load:
        G = G + load * np.eye(G.shape[0])
    return solve_spd(G, A.T @ rhs)


def estimate_coefficients(state, y, ridge=0.0):
    """Least-squares coefficients ``x = (C^T C + ridge I)^-1 C^T y``."""
    y = as_vector(y, "y")
    if y.shape[0] != state.m:
        raise ContractViolation(f"y has length {y.shape[0]}, expected {state.m}")
    return _solve_normal(state.C, y, ridge)


def estimate_coefficients_masked(state, obs, ridge=0.0):
    """Coefficients fitted on the observed entries of ``obs.y`` only.

    Rows of ``C`` at unobserved positions are zeroed before forming the
    normal equations, so the fit ignores missing pixels entirely.
    """
    if obs.mask is None:
        raise ContractViolation("observation has no mask")
    if obs.y.shape[0] != state.m:
        raise ContractViolation(f"y has length {obs.y.shape[0]}, expected {state.m}")
    Cm = obs.mask[:, None] * state.C
    return _solve_normal(Cm, obs.mask * obs.y, ridge)


def coefficients_for(state, obs, ridge=0.0):
    if obs.mask is None:
        return estimate_coefficients(state, obs.y, ridge)
    return estimate_coefficients_masked(state, obs, ridge)


def residual_for(state, obs, x):
    res = obs.y - state.C @ x
    if obs.mask is not None:
        res = obs.mask * res
    return res


def mean_update(state, x, residual):
    """Posterior mean of the dictionary after absorbing one column.

    Parameters
    ----------
    state : DictionaryState
        Prior state (``C``, ``V``, ``lam``).
    x : array_like, shape (r,)
        Coefficients of the column.
    residual : array_like, shape (m,)
        ``y - C x``, already masked when entries are missing.

    Returns
    -------
    C_new : ndarray, shape (m, r)
    """
    x = as_vector(x, "x")
    residual = as_vector(residual, "residual")
    if x.shape[0] != state.r or residual.shape[0] != state.m:
        raise ContractViolation("x or residual has the wrong length")
    Vx = state.V @ x
    denom = x @ Vx + state.lam
    return state.C + np.outer(residual, Vx / denom)


def covariance_update(state, x):
    """Rank-one Schur-complement shrink of ``V`` along ``x``.

    The result is symmetrised explicitly. Tiny negative eigenvalues from
    round-off are floored to zero; anything below ``-1e-8 * trace(V)``
    raises :class:`NotPositiveSemidefinite`.
    """
    x = as_vector(x, "x")
    if x.shape[0] != state.r:
        raise ContractViolation("x has the wrong length")
    V = state.V
    Vx = V @ x
    denom = x @ Vx + state.lam
    Vn = V - np.outer(Vx, Vx) / denom
    Vn = 0.5 * (Vn + Vn.T)

    w, Q = np.linalg.eigh(Vn)
    if w[0] < 0:
        if w[0] < -PSD_RTOL * max(np.trace(V), np.finfo(float).tiny):
            raise NotPositiveSemidefinite(
                f"covariance factor has eigenvalue {w[0]:.3e}")
        Vn = (Q * np.maximum(w, 0.0)) @ Q.T
        Vn = 0.5 * (Vn + Vn.T)
    return Vn


def predict(state, QV):
    """Kalman time update: inflate ``V`` by the process noise ``QV``."""
    QV = as_matrix(QV, "QV")
    if QV.shape != state.V.shape:
        raise ContractViolation(f"QV must be {state.V.shape}, got {QV.shape}")
    _check_psd(QV, "QV")
    return replace(state, V=state.V + QV)


def _advance(state, obs, cfg):
    prior = predict(state, cfg.QV) if cfg.QV is not None else state
    x = coefficients_for(prior, obs, cfg.ridge)
    res = residual_for(prior, obs, x)
    C = mean_update(prior, x, res)
    V = prior.V if cfg.freeze_covariance else covariance_update(prior, x)
    return DictionaryState(C=C, V=V, lam=prior.lam, step=state.step + 1), res


def step(state, obs, cfg=None):
    """One filter step on a single observation.

    Runs the optional predict, the (masked) coefficient fit, then the mean
    and covariance updates. Raises :class:`SingularSystem` if the
    coefficients cannot be fitted; ``state`` itself is never modified.
    """
    if cfg is None:
        cfg = ModelConfig(rank=state.r, lam=state.lam, ridge=0.0)
    if obs.y.shape[0] != state.m:
        raise ContractViolation(f"y has length {obs.y.shape[0]}, expected {state.m}")
    return _advance(state, obs, cfg)[0]


def run_pass(state, data, cfg, order, trace=None):
    """Apply :func:`step` to the data columns listed in ``order``.

    Columns whose coefficients cannot be fitted are skipped and logged in
    the trace. Returns ``(state, trace)``.
    """
    if trace is None:
        trace = PassTrace()
    n = data.n
    for i in order:
        i = int(i)
        if not 0 <= i < n:
            raise ContractViolation(f"column index {i} outside [0, {n})")
        try:
            state, res = _advance(state, data.observation(i), cfg)
        except SingularSystem as exc:
            logger.debug("skipping column %d: %s", i, exc)
            trace.records.append(StepRecord(i, float("nan"), True, str(exc)))
            continue
        trace.records.append(StepRecord(i, float(np.linalg.norm(res))))
    return state, trace


def reconstruct(state, data, ridge=0.0):
    """Fill every column of ``data`` from the dictionary.

    Coefficients use only observed entries; the output column is the full
    ``C x``. Returns ``(Y_hat, failed)`` where ``failed`` lists columns whose
    fit was singular (left as zeros).
    """
    m, n = data.shape
    if m != state.m:
        raise ContractViolation(f"data has {m} rows, dictionary has {state.m}")
    out = np.zeros((m, n))
    failed = []
    for j in range(n):
        try:
            x = coefficients_for(state, data.observation(j), ridge)
        except SingularSystem:
            failed.append(j)
            continue
        out[:, j] = state.C @ x
    return out, failed
