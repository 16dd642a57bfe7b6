"""Convertibility conditions and the region classification built on them."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .basis import DEFAULT_TOL, independence_range
from .errors import (
    BadPermutation,
    BadShape,
    Indeterminate,
    NotOrdered,
    NotStochastic,
    RankMismatch,
    Unsupported,
)
from .state import PureState, QubitPhaseCase, TildeVector, canonical_order

# Boolean triple (majorization, coc, l1_monotone) -> region label.  The R3
# entry is the triple obtained from the exact evaluation of the reference R3
# pair; see tests/test_conditions.py.
REGION_TRIPLES = {
    (True, True, True): "R1",
    (True, False, False): "R2",
    (False, False, False): "R3",
    (True, False, True): "R4",
    (False, False, True): "R5",
}


def region_label(majorization: bool, coc: bool, l1_monotone: bool) -> str:
    triple = (bool(majorization), bool(coc), bool(l1_monotone))
    label = REGION_TRIPLES.get(triple)
    if label is None:
        label = "Other(" + ",".join("T" if t else "F" for t in triple) + ")"
    return label


@dataclass(frozen=True)
class ConvertibilityReport:
    majorization: bool
    coc: bool
    l1_monotone: bool
    region: str
    margins: dict
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "majorization": self.majorization,
            "coc": self.coc,
            "l1_monotone": self.l1_monotone,
            "region": self.region,
            "margins": dict(self.margins),
            "diagnostics": dict(self.diagnostics),
        }


@dataclass(frozen=True, eq=False)
class OmegaMatrix:
    entries: np.ndarray


@dataclass(frozen=True, eq=False)
class StochasticForm:
    dmatrix: np.ndarray


def _ordered_values(t, tol: float) -> np.ndarray:
    values = np.asarray(t.values if isinstance(t, TildeVector) else t, dtype=float)
    if values.size > 1 and np.max(values[1:] - values[:-1]) > tol:
        raise NotOrdered("tilde values must be non-increasing; canonically order the state first")
    return values


def check_majorization(psi: TildeVector, phi: TildeVector, tol: float = DEFAULT_TOL):
    """Partial sums of the source tilde values must stay below the target's.

    Returns ``(holds, slack)`` where ``slack[k]`` is the target partial sum
    minus the source partial sum over the first k+1 entries.  The last entry
    compares the totals and must vanish.
    """
    x = _ordered_values(psi, tol)
    y = _ordered_values(phi, tol)
    if x.shape != y.shape:
        raise BadShape("tilde vectors differ in length")
    slack = np.cumsum(y) - np.cumsum(x)
    holds = bool(np.all(slack[:-1] >= -tol) and abs(slack[-1]) <= tol)
    return holds, slack


def _as_permutations(index_functions, d: int) -> list[tuple[int, ...]]:
    fns = getattr(index_functions, "fns", index_functions)
    perms = []
    for f in fns:
        f = tuple(int(v) for v in f)
        if sorted(f) != list(range(d)):
            raise BadPermutation(f"{f} is not a permutation of 0..{d - 1}")
        perms.append(f)
    if not perms or perms[0] != tuple(range(d)):
        raise BadPermutation("the first index function must be the identity")
    return perms


def build_omega(phi: PureState, index_functions) -> OmegaMatrix:
    """Row n holds the squared target coefficients permuted by f_n."""
    sq = phi.coeffs**2
    perms = _as_permutations(index_functions, phi.d)
    return OmegaMatrix(np.array([sq[list(f)] for f in perms]))


def check_coc(psi: PureState, phi: PureState, probs, omega: OmegaMatrix, tol: float = DEFAULT_TOL):
    """sum_n p_n omega[n, j] <= psi_j^2 for every j after the first.

    Returns ``(holds, slack)`` with one slack per j = 2..d.
    """
    p = np.asarray(probs, dtype=float)
    w = np.asarray(omega.entries, dtype=float)
    d = psi.d
    if phi.d != d or p.shape != (w.shape[0],) or w.shape[1] != d:
        raise BadShape("probabilities, omega and states disagree in size")
    slack = psi.coeffs[1:] ** 2 - p @ w[:, 1:]
    return bool(np.all(slack >= -tol)), slack


def classify_region(psi: PureState, phi: PureState, tol: float = DEFAULT_TOL) -> ConvertibilityReport:
    """Evaluate majorization, completeness and l1 monotonicity for a pair."""
    from .kraus import analyse  # the planner supplies the probabilities

    return analyse(psi, phi, tol).report


def stochastic_form(psi: TildeVector, phi: TildeVector, probs, index_functions, tol: float = DEFAULT_TOL) -> StochasticForm:
    x = np.asarray(psi.values if isinstance(psi, TildeVector) else psi, dtype=float)
    y = np.asarray(phi.values if isinstance(phi, TildeVector) else phi, dtype=float)
    d = len(x)
    p = np.asarray(probs, dtype=float)
    perms = _as_permutations(index_functions, d)
    if p.shape != (len(perms),):
        raise BadShape("one probability per index function expected")
    dm = np.zeros((d, d))
    for pn, f in zip(p, perms):
        dm[np.arange(d), list(f)] += pn
    if np.min(dm) < -tol:
        raise NotStochastic("negative entry")
    if np.max(np.abs(dm.sum(axis=0) - 1)) > tol or np.max(np.abs(dm.sum(axis=1) - 1)) > tol:
        raise NotStochastic("row or column sums differ from one")
    if np.max(np.abs(dm @ y - x)) > tol:
        raise NotStochastic("matrix does not map the target tilde vector onto the source one")
    return StochasticForm(dm)


@dataclass(frozen=True)
class MuInterval:
    lo: float
    hi: float
    lo_closed: bool
    hi_closed: bool

    def contains(self, mu: float) -> bool:
        above = mu >= self.lo if self.lo_closed else mu > self.lo
        below = mu <= self.hi if self.hi_closed else mu < self.hi
        return above and below


def qubit_closed_form(psi: PureState, phi: PureState, tol: float = DEFAULT_TOL):
    """Closed-form mu interval for a deterministic qubit conversion.

    With lam = psi_1/psi_2 and kap = phi_1/phi_2 (both canonically ordered),
    the conversion works on [0, b) for lam < 0 and on (b, 0] for lam > 0,
    where b = -(kap + lam)/(1 + kap*lam), clipped to (-1, 1).  Returns
    ``(feasible, interval)`` for the basis scalar product.
    """
    if psi.d != 2 or phi.d != 2:
        raise BadShape("closed form applies to qubits only")
    mu = psi.basis.equal_mu
    psi, _ = canonical_order(psi)
    phi, _ = canonical_order(phi)
    full = MuInterval(*independence_range(2), False, False)
    if abs(psi.coeffs[1]) <= tol:
        if abs(phi.coeffs[1]) > tol:
            raise RankMismatch("free source cannot reach a superposed target")
        return full.contains(mu), full
    lam = psi.coeffs[0] / psi.coeffs[1]
    if abs(phi.coeffs[1]) <= tol:
        bound = -1.0 / lam
    else:
        kap = phi.coeffs[0] / phi.coeffs[1]
        if abs(kap - lam) <= tol:
            # Identity map: always realizable.
            return full.contains(mu), full
        if abs(kap) < abs(lam):
            raise Indeterminate("closed form needs |kappa| >= |lambda|")
        bound = -(kap + lam) / (1 + kap * lam)
    if lam < 0:
        interval = MuInterval(0.0, min(bound, 1.0), True, False)
    else:
        interval = MuInterval(max(bound, -1.0), 0.0, False, True)
    return interval.contains(mu), interval


@dataclass(frozen=True)
class PhaseVerdict:
    kind: str
    possible: bool | None

    def to_dict(self) -> dict:
        return {"kind": self.kind, "possible": self.possible}


def _is_zero_angle(angle: float, tol: float) -> bool:
    return min(angle, 2 * math.pi - angle) <= tol


def qubit_phase_case(case: QubitPhaseCase, psi: PureState, tol: float = DEFAULT_TOL) -> PhaseVerdict:
    """Classify a qubit conversion with local phases on the second component.

    ``possible`` is None for the phase-free case (run the full pipeline);
    otherwise it says whether a deterministic conversion is not ruled out.
    """
    if psi.d != 2:
        raise BadShape("phase classification applies to qubits only")
    initial_zero = _is_zero_angle(case.alpha2, tol)
    final_zero = _is_zero_angle(case.beta2, tol)
    if initial_zero and final_zero:
        return PhaseVerdict("General", None)
    if initial_zero:
        a, b = np.abs(psi.coeffs)
        return PhaseVerdict("FinalPhaseOnly", bool(abs(a - b) <= tol))
    if final_zero:
        return PhaseVerdict("InitialPhaseOnly", bool(abs(psi.basis.gram[0, 1]) <= tol))
    raise Unsupported("both states carry a local phase; no classification available")
