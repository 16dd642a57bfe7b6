"""Synthesis of deterministic conversion plans.

A plan consists of d free Kraus operators K_n.  Operator n sends basis state
k to basis state f_n(k), where f_1 is the identity and every other f_n swaps
one pair of labels.  The weights are chosen so that K_n|psi> = sqrt(p_n)|phi>,
and the outcome probabilities p_n solve

    sum_n p_n * phi_tilde[f_n(k)] = psi_tilde[k]   for every k.

The operators only become a valid instrument when the leftover
I - sum K_n^dagger K_n can be written with further free operators that
annihilate psi.  Two routes to that check live here:

* :func:`completion_gram` evaluates the leftover in coefficient space
  directly (its diagonal gives the familiar completeness inequalities);
* :func:`leftover_entries` recovers the same entries from the
  off-diagonal completeness equations only, which is what the explicit
  completion for d = 2, 3 is assembled from.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog

from .basis import DEFAULT_TOL, GramBasis, build_basis, sub_basis
from .conditions import (
    ConvertibilityReport,
    _ordered_values,
    build_omega,
    check_coc,
    check_majorization,
    region_label,
)
from .errors import (
    BadShape,
    BasisMismatch,
    ConversionRefused,
    Degenerate,
    DivisionByZero,
    Incomplete,
    Infeasible,
    NotFlipSymmetric,
    RankIncrease,
    UnsupportedCase,
    UnsupportedDimension,
)
from .state import PureState, canonical_order, l1_norm, superposition_rank, tilde

# Swap pairs (0-based) for the tabulated dimensions, keyed by table row.
_TABLE = {
    1: [(0, 1)],
    2: [(0, 2), (0, 1)],
    3: [(0, 2), (1, 2)],
    4: [(0, 3), (0, 1), (0, 2)],
    5: [(0, 3), (0, 1), (2, 3)],
    6: [(0, 3), (1, 3), (2, 3)],
    7: [(0, 3), (1, 3), (1, 2)],
    8: [(0, 3), (0, 2), (1, 2)],
}


@dataclass(frozen=True)
class IndexFunctionSet:
    """Index functions as 0-based permutations; ``fns[0]`` is the identity."""

    fns: tuple[tuple[int, ...], ...]
    swap_pairs: tuple[tuple[int, int], ...]
    table_row: int | None = None
    pattern: str = "table"

    @classmethod
    def from_swaps(cls, d: int, swaps, table_row=None, pattern="table") -> "IndexFunctionSet":
        fns = [tuple(range(d))]
        for a, b in swaps:
            f = list(range(d))
            f[a], f[b] = b, a
            fns.append(tuple(f))
        return cls(tuple(fns), tuple((int(a), int(b)) for a, b in swaps), table_row, pattern)

    @property
    def d(self) -> int:
        return len(self.fns[0])

    def to_dict(self) -> dict:
        return {
            "fns": [[v + 1 for v in f] for f in self.fns],
            "swap_pairs": [[a + 1, b + 1] for a, b in self.swap_pairs],
            "table_row": self.table_row,
            "pattern": self.pattern,
        }


def case_signature(psi_tilde, phi_tilde, tol: float = DEFAULT_TOL) -> tuple[str, ...]:
    """'>=' or '<=' for psi_tilde[k] - phi_tilde[k], k = 2..d-1 (ties read as '>=')."""
    x = _ordered_values(psi_tilde, tol)
    y = _ordered_values(phi_tilde, tol)
    return tuple(">=" if x[k] - y[k] >= -tol else "<=" for k in range(1, len(x) - 1))


def select_index_functions(psi_tilde, phi_tilde, tol: float = DEFAULT_TOL) -> IndexFunctionSet:
    x = _ordered_values(psi_tilde, tol)
    y = _ordered_values(phi_tilde, tol)
    d = len(x)
    if len(y) != d:
        raise BadShape("tilde vectors differ in length")
    sig = case_signature(x, y, tol)
    if d == 2:
        row = 1
    elif d == 3:
        row = 2 if sig[0] == ">=" else 3
    elif d == 4:
        row = {(">=", ">="): 4, (">=", "<="): 5, ("<=", "<="): 6}.get(sig)
        if row is None:
            # Mixed (<=, >=): the two remaining rows cover complementary halves,
            # split by the partial sum over slots 2 and 3.
            row = 7 if x[1] + x[2] <= y[1] + y[2] + tol else 8
    else:
        if all(s == ">=" for s in sig):
            swaps = [(0, k) for k in range(1, d)]
            return IndexFunctionSet.from_swaps(d, swaps, None, "first-slot swaps")
        if all(s == "<=" for s in sig):
            swaps = [(k, d - 1) for k in range(d - 1)]
            return IndexFunctionSet.from_swaps(d, swaps, None, "last-slot swaps")
        raise UnsupportedCase(f"no index functions for mixed sign pattern {''.join(s[0] for s in sig)} at d={d}")
    return IndexFunctionSet.from_swaps(d, _TABLE[row], row)


def probability_system(phi_tilde: np.ndarray, fns: IndexFunctionSet) -> np.ndarray:
    """Matrix A with A[k, n] = phi_tilde[f_n(k)], so that A p = psi_tilde."""
    y = np.asarray(phi_tilde, dtype=float)
    return np.column_stack([y[list(f)] for f in fns.fns])


def _solve(x: np.ndarray, y: np.ndarray, fns: IndexFunctionSet, tol: float):
    """Return (p, status) with status 'ok', 'infeasible' or 'degenerate'."""
    a = probability_system(y, fns)
    sv = np.linalg.svd(a, compute_uv=False)
    if sv[-1] > 1e-12 * sv[0]:
        p = np.linalg.solve(a, x)
        if np.min(p) < -tol:
            return p, "infeasible"
        return np.where(p < 0, 0.0, p), "ok"
    # Singular system: look for any non-negative solution, preferring weight on
    # the identity outcome so the choice is deterministic.
    d = len(x)
    cost = np.zeros(d)
    cost[0] = -1.0
    a_eq = np.vstack([a, np.ones(d)])
    b_eq = np.append(x, 1.0)
    res = linprog(cost, A_eq=a_eq, b_eq=b_eq, bounds=[(0, None)] * d, method="highs")
    if res.status == 0 and np.max(np.abs(a_eq @ res.x - b_eq)) <= tol:
        return np.asarray(res.x), "ok"
    p, *_ = np.linalg.lstsq(a_eq, b_eq, rcond=None)
    if np.max(np.abs(a_eq @ p - b_eq)) > tol:
        return None, "degenerate"
    return p, "infeasible"


def solve_probabilities(psi_tilde, phi_tilde, fns: IndexFunctionSet, tol: float = DEFAULT_TOL) -> np.ndarray:
    x = _ordered_values(psi_tilde, tol)
    y = _ordered_values(phi_tilde, tol)
    p, status = _solve(x, y, fns, tol)
    if status == "degenerate":
        raise Degenerate("singular probability system without a consistent solution")
    if status == "infeasible":
        raise Infeasible(f"probability system needs negative weights: {p}", probs=p)
    return p


def _kraus_weights(psi: PureState, phi: PureState, f, pn: float, tol: float) -> np.ndarray:
    w = np.zeros(psi.d)
    for k, fk in enumerate(f):
        target = phi.coeffs[fk]
        if abs(psi.coeffs[k]) <= tol:
            if pn > 0 and abs(target) > tol:
                raise DivisionByZero(f"source coefficient {k + 1} vanishes but the target needs weight there")
            continue
        w[k] = np.sqrt(pn) * target / psi.coeffs[k]
    return w


def free_operator(basis: GramBasis, targets, weights) -> np.ndarray:
    """sum_k weights[k] |c_targets[k]><c_k_perp| / zeta_k as a matrix."""
    w = np.asarray(weights, dtype=complex) / basis.zeta
    return basis.embedding[:, list(targets)] @ (w[:, None] * basis.dual.conj().T)


def build_kraus(basis: GramBasis, psi: PureState, phi: PureState, fns: IndexFunctionSet, probs, tol: float | None = None) -> list[np.ndarray]:
    tol = basis.tol if tol is None else tol
    p = np.asarray(probs, dtype=float)
    if p.shape != (len(fns.fns),):
        raise BadShape("one probability per index function expected")
    return [free_operator(basis, f, _kraus_weights(psi, phi, f, pn, tol)) for f, pn in zip(fns.fns, p)]


def residual_certificate(kraus_ops, tol: float = DEFAULT_TOL):
    """R = I - sum K^dagger K together with its PSD verdict and smallest eigenvalue."""
    d = kraus_ops[0].shape[0]
    r = np.eye(d, dtype=complex) - sum(k.conj().T @ k for k in kraus_ops)
    r = 0.5 * (r + r.conj().T)
    min_eig = float(np.min(np.linalg.eigvalsh(r)))
    return r, min_eig >= -tol, min_eig


def completion_gram(basis: GramBasis, psi: PureState, phi: PureState, probs, fns: IndexFunctionSet) -> np.ndarray:
    """Leftover of the Kraus family in coefficient space, rescaled by psi.

    Entry (j, l) is psi_j psi_l G_jl - sum_n p_n phi_f(j) phi_f(l) G_f(j)f(l).
    This is diag(psi) B^dagger R B diag(psi); its diagonal holds the
    completeness slacks and it always annihilates the all-ones vector when
    p solves the probability system.
    """
    g = basis.gram
    out = np.outer(psi.coeffs, psi.coeffs) * g
    for pn, f in zip(probs, fns.fns):
        f = list(f)
        v = phi.coeffs[f]
        out -= pn * np.outer(v, v) * g[f][:, f]
    return 0.5 * (out + out.T)


@dataclass(frozen=True, eq=False)
class LeftoverEntries:
    """Leftover entries in unscaled coefficient form.

    ``X[j - 2]`` is the diagonal entry for basis index j (1-based, j >= 2) and
    ``Y[(j, l)]`` the off-diagonal entry for 2 <= j < l.
    """

    X: np.ndarray
    Y: dict

    def to_dict(self) -> dict:
        return {
            "X": {str(j + 2): float(v) for j, v in enumerate(self.X)},
            "Y": {f"{j},{l}": float(v) for (j, l), v in sorted(self.Y.items())},
        }


def leftover_entries(basis: GramBasis, psi: PureState, phi: PureState, probs, fns: IndexFunctionSet) -> LeftoverEntries:
    """Leftover entries obtained from the off-diagonal completeness equations.

    The diagonal entries X_j are never read off directly: they follow from
    the requirement that the leftover annihilates psi, using only entries
    (j, l) with j != l.  Compare with the diagonal of :func:`completion_gram`.
    """
    d = basis.d
    if d not in (2, 3):
        raise UnsupportedDimension("explicit leftover entries are available for d = 2 and 3 only")
    g = basis.gram
    c = psi.coeffs
    off = np.zeros((d, d))
    for j in range(d):
        for l in range(j + 1, d):
            acc = g[j, l] * c[j] * c[l]
            for pn, f in zip(probs, fns.fns):
                acc -= pn * phi.coeffs[f[j]] * phi.coeffs[f[l]] * g[f[j], f[l]]
            off[j, l] = off[l, j] = acc / (c[j] * c[l])
    x = np.array([-(off[j] @ c) / c[j] for j in range(1, d)])
    y = {(j + 1, l + 1): float(off[j, l]) for j in range(1, d) for l in range(j + 1, d)}
    return LeftoverEntries(x, y)


def _semidefinite_factor(n: np.ndarray, tol: float) -> np.ndarray:
    """Lower factor L with L L^T = n for a PSD matrix, zero columns on null pivots."""
    m = n.shape[0]
    low = np.zeros_like(n)
    for i in range(m):
        piv = n[i, i] - low[i, :i] @ low[i, :i]
        if piv < -tol:
            raise Incomplete(f"leftover has a negative pivot {piv:.3e}")
        rest = n[i + 1 :, i] - low[i + 1 :, :i] @ low[i, :i]
        if piv <= tol:
            if rest.size and np.max(np.abs(rest)) > np.sqrt(tol):
                raise Incomplete("leftover is not positive semidefinite")
            continue
        low[i, i] = np.sqrt(piv)
        low[i + 1 :, i] = rest / low[i, i]
    return low


def complete_free_operators(basis: GramBasis, psi: PureState, quantities: LeftoverEntries, kraus_ops=None, tol: float | None = None):
    """Minimal free completion for d = 2, 3.

    Returns ``(operators, targets)``: operator m maps every basis state onto
    basis state ``targets[m]`` and annihilates psi.  Columns that vanish are
    dropped, so the orthonormal limit gives an empty list.  When
    ``kraus_ops`` is given the full completeness relation is checked.
    """
    tol = basis.tol if tol is None else tol
    d = basis.d
    if d not in (2, 3):
        raise UnsupportedDimension("explicit completion is available for d = 2 and 3 only")
    c = psi.coeffs
    n = np.diag(np.asarray(quantities.X, dtype=float))
    for (j, l), v in quantities.Y.items():
        n[j - 2, l - 2] = n[l - 2, j - 2] = v
    low = _semidefinite_factor(n, tol)
    ops, targets = [], []
    for col in range(d - 1):
        if not np.any(low[:, col]):
            continue
        a = np.empty(d)
        a[1:] = -low[:, col]
        a[0] = -(a[1:] @ c[1:]) / c[0]
        ops.append(free_operator(basis, [col] * d, a))
        targets.append(col)
    if kraus_ops is not None:
        total = sum(k.conj().T @ k for k in list(kraus_ops) + ops)
        dev = float(np.max(np.abs(total - np.eye(d))))
        if dev > tol:
            raise Incomplete(f"completeness relation off by {dev:.3e}")
    return ops, targets


@dataclass(frozen=True, eq=False)
class TransformPlan:
    """Everything needed to run, and independently check, one conversion.

    The operators act on the working space spanned by the source support.
    ``source_map[i]`` is the original label of working slot i; the same for
    ``target_map``, where -1 marks a padded zero slot.
    """

    index_functions: IndexFunctionSet
    probs: np.ndarray
    kraus_ops: tuple
    residual: np.ndarray
    residual_min_eig: float
    residual_psd: bool
    completion: tuple | None
    completion_targets: tuple
    case_signature: tuple
    gram: np.ndarray
    embedding: np.ndarray
    source: np.ndarray
    target: np.ndarray
    source_map: tuple
    target_map: tuple
    report: ConvertibilityReport | None = None

    @property
    def d(self) -> int:
        return self.gram.shape[0]


@dataclass(frozen=True, eq=False)
class Analysis:
    report: ConvertibilityReport
    basis: GramBasis | None = None
    source: PureState | None = None
    target: PureState | None = None
    source_map: tuple = ()
    target_map: tuple = ()
    fns: IndexFunctionSet | None = None
    probs: np.ndarray | None = None
    signature: tuple = ()
    extras: dict = field(default_factory=dict)


def _prepare(psi: PureState, phi: PureState, tol: float):
    """Restrict to the source support and bring both states to canonical order."""
    basis = psi.basis
    d = basis.d
    src_idx = [i for i in range(d) if abs(psi.coeffs[i]) > tol]
    tgt_idx = [i for i in range(d) if abs(phi.coeffs[i]) > tol]
    if len(tgt_idx) > len(src_idx):
        raise RankIncrease(f"target rank {len(tgt_idx)} exceeds source rank {len(src_idx)}")
    r = len(src_idx)
    if r < 2:
        raise UnsupportedCase("the source state is free; nothing to plan")
    mu = basis.equal_mu
    if mu is not None:
        work = basis if r == d else build_basis(r, mu, basis.tol)
        tgt_coeffs = np.zeros(r)
        tgt_coeffs[: len(tgt_idx)] = phi.coeffs[tgt_idx]
        tgt_map = tgt_idx + [-1] * (r - len(tgt_idx))
        src, s_perm = canonical_order(PureState(work, psi.coeffs[src_idx]))
        tgt, t_perm = canonical_order(PureState(work, tgt_coeffs))
        src_map = tuple(src_idx[i] for i in s_perm)
        tgt_map = tuple(tgt_map[i] for i in t_perm)
        return work, src, tgt, src_map, tgt_map
    if not set(tgt_idx) <= set(src_idx):
        raise RankIncrease("target support is not contained in the source support")
    work = basis if r == d else sub_basis(basis, src_idx)
    src = PureState(work, psi.coeffs[src_idx])
    tgt = PureState(work, phi.coeffs[src_idx])
    ident = tuple(range(r))
    if tilde(src).order != ident or tilde(tgt).order != ident:
        raise NotFlipSymmetric("states are not in canonical order and the basis is not flip symmetric")
    return work, src, tgt, tuple(src_idx), tuple(src_idx)


def _sorted_tilde(state: PureState) -> np.ndarray:
    return tilde(state).sorted_values()


def _margin(values) -> float | None:
    values = [v for v in values if v is not None]
    return float(min(values)) if values else None


def analyse(psi: PureState, phi: PureState, tol: float = DEFAULT_TOL) -> Analysis:
    """Run the condition checks shared by classification and planning."""
    if psi.d != phi.d or not psi.basis.same_as(phi.basis, tol):
        raise BasisMismatch("states live on different bases")
    l1_margin = l1_norm(psi) - l1_norm(phi)
    l1_ok = l1_margin >= -tol
    try:
        work, src, tgt, src_map, tgt_map = _prepare(psi, phi, tol)
    except (RankIncrease, NotFlipSymmetric) as exc:
        maj, slack = check_majorization(_sorted_tilde(psi), _sorted_tilde(phi), tol)
        margins = {
            "majorization": _margin([np.min(slack[:-1]), -abs(slack[-1])]),
            "coc": None,
            "l1": float(l1_margin),
        }
        report = ConvertibilityReport(maj, False, l1_ok, region_label(maj, False, l1_ok), margins, {"note": str(exc)})
        return Analysis(report)

    x = tilde(src).values
    y = tilde(tgt).values
    maj, maj_slack = check_majorization(x, y, tol)
    fns = select_index_functions(x, y, tol)
    sig = case_signature(x, y, tol)
    p, status = _solve(x, y, fns, tol)
    feasible = status == "ok"
    coc_ineq, coc_slack, min_eig = None, None, None
    if p is not None:
        coc_ineq, coc_slack = check_coc(src, tgt, p, build_omega(tgt, fns), tol)
    if feasible:
        min_eig = float(np.min(np.linalg.eigvalsh(completion_gram(work, src, tgt, p, fns))))
    coc = bool(feasible and coc_ineq and min_eig >= -tol)
    margins = {
        "majorization": _margin([np.min(maj_slack[:-1]), -abs(maj_slack[-1])]),
        "coc": _margin(
            [np.min(p) if p is not None else None, np.min(coc_slack) if coc_slack is not None else None, min_eig]
        )
        if p is not None
        else None,
        "l1": float(l1_margin),
    }
    diagnostics = {
        "probabilities": p.tolist() if p is not None else None,
        "probability_status": status,
        "index_functions": fns.to_dict(),
        "case_signature": list(sig),
        "coc_inequalities": coc_ineq,
        "coc_slacks": coc_slack.tolist() if coc_slack is not None else None,
        "completion_min_eig": min_eig,
        "source_map": [i + 1 for i in src_map],
        "target_map": [i + 1 if i >= 0 else 0 for i in tgt_map],
    }
    report = ConvertibilityReport(maj, coc, l1_ok, region_label(maj, coc, l1_ok), margins, diagnostics)
    probs = p if feasible else None
    return Analysis(report, work, src, tgt, src_map, tgt_map, fns, probs, sig)


def synthesize(analysis: Analysis, tol: float = DEFAULT_TOL, strict: bool = True) -> TransformPlan:
    """Build operators for an analysed pair with feasible probabilities.

    With ``strict`` unset, a failing explicit completion is recorded as
    missing instead of raising, which lets callers hand the result to the
    oracle regardless.
    """
    if analysis.probs is None:
        raise Infeasible("no feasible probabilities for this pair")
    work, src, tgt = analysis.basis, analysis.source, analysis.target
    fns, p = analysis.fns, analysis.probs
    kraus_ops = build_kraus(work, src, tgt, fns, p, tol)
    residual, psd, min_eig = residual_certificate(kraus_ops, tol)
    completion, targets = None, ()
    if work.d in (2, 3):
        try:
            quantities = leftover_entries(work, src, tgt, p, fns)
            ops, targets = complete_free_operators(work, src, quantities, kraus_ops, tol)
            completion, targets = tuple(ops), tuple(targets)
        except Incomplete:
            if strict:
                raise
            completion, targets = None, ()
    return TransformPlan(
        index_functions=fns,
        probs=np.asarray(p, dtype=float),
        kraus_ops=tuple(kraus_ops),
        residual=residual,
        residual_min_eig=min_eig,
        residual_psd=psd,
        completion=completion,
        completion_targets=targets,
        case_signature=analysis.signature,
        gram=work.gram.copy(),
        embedding=work.embedding.copy(),
        source=src.coeffs.copy(),
        target=tgt.coeffs.copy(),
        source_map=tuple(analysis.source_map),
        target_map=tuple(analysis.target_map),
        report=analysis.report,
    )


def plan(basis: GramBasis, psi: PureState, phi: PureState, tol: float = DEFAULT_TOL) -> TransformPlan:
    """Certify and synthesize a deterministic conversion, or refuse with a report."""
    if not psi.basis.same_as(basis, tol):
        raise BasisMismatch("source state does not live on the given basis")
    if superposition_rank(phi, tol) > superposition_rank(psi, tol):
        raise RankIncrease("free operations cannot raise the superposition rank")
    analysis = analyse(psi, phi, tol)
    if analysis.report.region != "R1":
        raise ConversionRefused(analysis.report)
    return synthesize(analysis, tol)
