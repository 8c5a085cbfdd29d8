"""Comparison methods: stochastic-gradient factorisation and batch NMF."""

import logging
from dataclasses import dataclass

import numpy as np

from .linalg import ContractViolation, SingularSystem, as_matrix, as_vector
from .model import DictionaryState, PassTrace, StepRecord, coefficients_for, init_state, residual_for

__all__ = [
    "SgdConfig",
    "NmfConfig",
    "NmfResult",
    "sgd_update",
    "broyden_gamma",
    "sgd_gamma",
    "sgd_run",
    "nmf_objective",
    "nmf_multiplicative",
]

logger = logging.getLogger(__name__)

STEP_MODES = ("constant", "broyden", "decay")


@dataclass(frozen=True)
class SgdConfig:
    """Step-size schedule for :func:`sgd_run`.

    ``broyden`` uses ``1 / (lam + |x|^2)``, ``constant`` uses ``gamma0`` and
    ``decay`` uses ``gamma0 / k`` at the k-th update (k starts at 1).
    """

    step_size_mode: str = "broyden"
    gamma0: float = 0.01
    lam: float = 2.0

    def __post_init__(self):
        if self.step_size_mode not in STEP_MODES:
            raise ContractViolation(f"step_size_mode must be one of {STEP_MODES}")
        if not self.gamma0 > 0:
            raise ContractViolation("gamma0 must be > 0")
        if not self.lam > 0:
            raise ContractViolation("lam must be > 0")


@dataclass(frozen=True)
class NmfConfig:
    rank: int
    iterations: int = 1000
    epsilon: float = 1e-12

    def __post_init__(self):
        if self.rank < 1:
            raise ContractViolation("rank must be >= 1")
        if self.iterations < 1:
            raise ContractViolation("iterations must be >= 1")
        if not self.epsilon > 0:
            raise ContractViolation("epsilon must be > 0")


def sgd_update(C, x, y, gamma):
    """``C + gamma * (y - C x) x^T``."""
    C = as_matrix(C, "C")
    x = as_vector(x, "x")
    y = as_vector(y, "y")
    if gamma < 0:
        raise ContractViolation("gamma must be >= 0")
    return C + gamma * np.outer(y - C @ x, x)


def broyden_gamma(x, lam):
    if not lam > 0:
        raise ContractViolation("lam must be > 0")
    x = as_vector(x, "x")
    return 1.0 / (lam + x @ x)


def sgd_gamma(cfg, x, k):
    if cfg.step_size_mode == "broyden":
        return broyden_gamma(x, cfg.lam)
    if cfg.step_size_mode == "constant":
        return cfg.gamma0
    return cfg.gamma0 / max(k, 1)


def sgd_run(data, sgd, model, order, C=None, start_step=0, trace=None):
    """Column-wise SGD factorisation over ``order``.

    Coefficients come from the same (masked) least-squares fit as the
    filter, then the dictionary takes one gradient step on the masked
    residual. ``C`` defaults to the filter's random initial dictionary, so
    both methods start from the same point. Returns ``(C, trace)``; the
    trace's step count continues from ``start_step``.
    """
    if C is None:
        C = init_state(model, data.m).C
    C = as_matrix(C, "C")
    eye = np.eye(C.shape[1])
    state = DictionaryState(C, eye, sgd.lam)
    if trace is None:
        trace = PassTrace()
    k = start_step
    for i in order:
        i = int(i)
        if not 0 <= i < data.n:
            raise ContractViolation(f"column index {i} outside [0, {data.n})")
        obs = data.observation(i)
        try:
            x = coefficients_for(state, obs, model.ridge)
        except SingularSystem as exc:
            logger.debug("skipping column %d: %s", i, exc)
            trace.records.append(StepRecord(i, float("nan"), True, str(exc)))
            continue
        k += 1
        res = residual_for(state, obs, x)
        gamma = sgd_gamma(sgd, x, k)
        state = DictionaryState(state.C + gamma * np.outer(res, x), eye, sgd.lam)
        trace.records.append(StepRecord(i, float(np.linalg.norm(res))))
    return state.C, trace


# -- NMF ------------------------------------------------------------------------

@dataclass(frozen=True)
class NmfResult:
    W: np.ndarray
    H: np.ndarray
    objective: np.ndarray


def nmf_objective(Y, W, H, M=None):
    R = Y - W @ H
    if M is not None:
        R = M * R
    return float(np.sum(R * R))


def nmf_multiplicative(Y, cfg, seed=0, M=None, W=None, H=None):
    """Weighted Euclidean NMF by multiplicative updates.

    Minimises ``|M * (Y - W H)|_F^2`` over non-negative ``W`` (m x r) and
    ``H`` (r x n). With ``M=None`` every entry counts. The objective after
    each sweep is recorded in ``NmfResult.objective``.
    """
    Y = as_matrix(Y, "Y")
    if np.any(Y < 0):
        raise ContractViolation(
            "NMF needs non-negative data; shift or clip the input first")
    m, n = Y.shape
    M = np.ones_like(Y) if M is None else as_matrix(M, "M")
    if M.shape != Y.shape:
        raise ContractViolation("mask shape differs from data shape")
    rng = np.random.default_rng(seed)
    scale = np.sqrt(max(np.mean(Y[M > 0]), 0.0) / cfg.rank) if np.any(M > 0) else 1.0
    scale = scale or 1.0
    W = scale * rng.random((m, cfg.rank)) if W is None else as_matrix(W, "W").copy()
    H = scale * rng.random((cfg.rank, n)) if H is None else as_matrix(H, "H").copy()
    if np.any(W < 0) or np.any(H < 0):
        raise ContractViolation("initial factors must be non-negative")

    eps = cfg.epsilon
    MY = M * Y
    obj = np.empty(cfg.iterations)
    for t in range(cfg.iterations):
        W *= (MY @ H.T) / ((M * (W @ H)) @ H.T + eps)
        H *= (W.T @ MY) / (W.T @ (M * (W @ H)) + eps)
        obj[t] = nmf_objective(Y, W, H, M)
    return NmfResult(W, H, obj)
