"""Pure superposition states over a :class:`GramBasis`."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .basis import DEFAULT_TOL, GramBasis, build_basis, gram_inner, independence_range, sub_basis
from .errors import BadShape, NotNormalized, OutOfRange, Unsupported, ZeroVector


@dataclass(frozen=True, eq=False)
class PureState:
    basis: GramBasis
    coeffs: np.ndarray

    @property
    def d(self) -> int:
        return self.basis.d

    def to_dict(self) -> dict:
        return {"coeffs": self.coeffs.tolist(), "normalize": False}


@dataclass(frozen=True, eq=False)
class TildeVector:
    """Tilde coefficients in state order plus the permutation that sorts them."""

    values: np.ndarray
    order: tuple[int, ...]

    def sorted_values(self) -> np.ndarray:
        return self.values[list(self.order)]


@dataclass(frozen=True)
class QubitPhaseCase:
    alpha2: float
    beta2: float

    def __post_init__(self):
        object.__setattr__(self, "alpha2", float(self.alpha2) % (2 * math.pi))
        object.__setattr__(self, "beta2", float(self.beta2) % (2 * math.pi))


def make_state(basis: GramBasis, coeffs, normalize: bool = False, tol: float | None = None) -> PureState:
    tol = basis.tol if tol is None else tol
    arr = np.asarray(coeffs)
    if np.iscomplexobj(arr):
        raise BadShape("coefficients must be real")
    arr = arr.astype(float)
    if arr.shape != (basis.d,):
        raise BadShape(f"expected {basis.d} coefficients, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise BadShape("coefficients must be finite")
    norm2 = gram_inner(basis, arr, arr)
    if not np.any(arr) or norm2 <= 0.0:
        raise ZeroVector("state vector is zero")
    if normalize:
        arr = arr / math.sqrt(norm2)
    elif abs(norm2 - 1.0) > tol:
        raise NotNormalized(f"<psi|psi> = {norm2!r}, expected 1")
    return PureState(basis, arr)


def _descending_order(values: np.ndarray, tol: float) -> tuple[int, ...]:
    # Values within tol of each other count as tied and keep their original order.
    keys = np.round(values / tol) if tol > 0 else values
    return tuple(sorted(range(len(values)), key=lambda i: (-keys[i], i)))


def tilde(state: PureState) -> TildeVector:
    """psi_i * (G psi)_i for every i; these sum to one for a normalized state."""
    values = state.coeffs * (state.basis.gram @ state.coeffs)
    return TildeVector(values, _descending_order(values, state.basis.tol))


def l1_norm(state: PureState) -> float:
    a = np.abs(state.coeffs)
    return float(a.sum() ** 2 - (a * a).sum())


def superposition_rank(state: PureState, tol: float | None = None) -> int:
    tol = state.basis.tol if tol is None else tol
    return int(np.count_nonzero(np.abs(state.coeffs) > tol))


def relabel(state: PureState, perm) -> PureState:
    """Move coefficient perm[i] to slot i.

    When the permutation leaves the Gram matrix unchanged it is a free flip and
    the state stays on the same basis; otherwise the basis is relabeled too.
    """
    perm = list(perm)
    basis = state.basis
    g = basis.gram
    if np.max(np.abs(g[np.ix_(perm, perm)] - g)) > basis.tol:
        basis = sub_basis(basis, perm)
    return PureState(basis, state.coeffs[perm])


def canonical_order(state: PureState) -> tuple[PureState, tuple[int, ...]]:
    order = tilde(state).order
    if order == tuple(range(state.d)):
        return state, order
    return relabel(state, order), order


def maximal_range(d: int, sign: str) -> tuple[float, float]:
    """Closed-at-the-right interval (lo, hi] of mu on which the maximal state is defined."""
    if sign == "plus":
        return (independence_range(d)[0], 0.0)
    if sign == "minus":
        if d != 2:
            raise Unsupported("the alternating maximal state is defined for qubits only")
        return (0.0, 1.0)
    raise BadShape(f"sign must be 'plus' or 'minus', got {sign!r}")


def check_maximal_mu(d: int, mu: float, sign: str, tol: float = DEFAULT_TOL) -> None:
    lo, hi = maximal_range(d, sign)
    if sign == "plus":
        ok = lo < mu <= hi + tol
    else:
        ok = lo - tol <= mu < hi
    if not ok:
        interval = f"({lo:g}, {hi:g}]" if sign == "plus" else f"[{lo:g}, {hi:g})"
        raise OutOfRange(f"mu={mu!r} outside {interval} for sign={sign}")


def maximal_state(basis: GramBasis, sign: str = "plus") -> PureState:
    """Equal-weight (plus) or sign-alternating qubit (minus) superposition."""
    mu = basis.equal_mu
    if mu is None:
        raise OutOfRange("maximal states need equal scalar products")
    check_maximal_mu(basis.d, mu, sign, basis.tol)
    if sign == "plus":
        coeffs = np.ones(basis.d)
    else:
        coeffs = np.array([1.0, -1.0])
    return make_state(basis, coeffs, normalize=True)


def maximal_state_for(d: int, mu: float, sign: str = "plus", tol: float = DEFAULT_TOL) -> PureState:
    # Range check first so an out-of-range mu reports OutOfRange, not a basis error.
    check_maximal_mu(d, mu, sign, tol)
    return maximal_state(build_basis(d, mu, tol), sign)
