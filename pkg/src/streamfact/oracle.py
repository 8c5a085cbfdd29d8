"""Full-dimensional recursive least-squares filter over ``c = vec(C)``.

This is the textbook measurement update with a dense ``(m r) x (m r)``
covariance and observation matrix ``H = kron(x^T, I_m)``. It is far too
expensive for real data and exists to check the structured recursion in
:mod:`streamfact.model` on small problems.
"""

from dataclasses import dataclass

import numpy as np

from .linalg import ContractViolation, as_matrix, as_vector, kron, solve_spd, unvec, vec
from .model import DictionaryState

__all__ = [
    "StructureBroken",
    "FullFilterState",
    "DEFAULT_ORACLE_CAP",
    "observation_matrix",
    "full_step",
    "from_dictionary",
    "to_dictionary",
    "as_dictionary_state",
]

# per-product entry cap; allows m * r up to 64
DEFAULT_ORACLE_CAP = 64 * 64


class StructureBroken(ArithmeticError):
    """The full covariance is no longer of the form ``kron(V, I_m)``."""


@dataclass(frozen=True)
class FullFilterState:
    c: np.ndarray
    P: np.ndarray
    m: int
    r: int
    lam: float

    def __post_init__(self):
        c = as_vector(self.c, "c")
        P = as_matrix(self.P, "P")
        d = self.m * self.r
        if c.shape != (d,) or P.shape != (d, d):
            raise ContractViolation(
                f"state sizes {c.shape}, {P.shape} do not match m*r = {d}")
        if not self.lam > 0:
            raise ContractViolation("lam must be > 0")
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "P", P)


def observation_matrix(x, m, cap=DEFAULT_ORACLE_CAP):
    """``H = kron(x^T, I_m)`` so that ``H @ vec(C) == C @ x``."""
    x = as_vector(x, "x")
    return kron(x[None, :], np.eye(m), cap=cap)


def full_step(state, x, y, cap=DEFAULT_ORACLE_CAP):
    x = as_vector(x, "x")
    y = as_vector(y, "y")
    if x.shape[0] != state.r or y.shape[0] != state.m:
        raise ContractViolation("x or y does not match the state dimensions")
    H = observation_matrix(x, state.m, cap=cap)
    PHt = state.P @ H.T
    S = H @ PHt + state.lam * np.eye(state.m)
    # S is SPD whenever lam > 0, so solve_spd cannot fail here
    K = solve_spd(S, PHt.T).T
    c = state.c + K @ (y - H @ state.c)
    P = state.P - K @ PHt.T
    P = 0.5 * (P + P.T)
    return FullFilterState(c=c, P=P, m=state.m, r=state.r, lam=state.lam)


def from_dictionary(state, cap=DEFAULT_ORACLE_CAP):
    m, r = state.C.shape
    return FullFilterState(c=vec(state.C), P=kron(state.V, np.eye(m), cap=cap),
                           m=m, r=r, lam=state.lam)


def to_dictionary(fs, rtol=1e-8):
    """Recover ``(C, V)`` from a full state, checking the Kronecker structure.

    ``V[i, j]`` is the mean diagonal of the ``(i, j)`` block of ``P``. Raises
    :class:`StructureBroken` if ``P`` differs from ``kron(V, I_m)`` by more
    than ``rtol`` in relative Frobenius norm.
    """
    m, r = fs.m, fs.r
    blocks = fs.P.reshape(r, m, r, m)
    V = np.einsum("iaja->ij", blocks) / m
    err = np.linalg.norm(fs.P - np.kron(V, np.eye(m)))
    scale = np.linalg.norm(fs.P)
    if err > rtol * scale:
        raise StructureBroken(
            f"covariance deviates from kron(V, I) by {err / max(scale, 1e-300):.3e}")
    return unvec(fs.c, m, r), V


def as_dictionary_state(fs, step=0):
    C, V = to_dictionary(fs)
    return DictionaryState(C=C, V=V, lam=fs.lam, step=step)
