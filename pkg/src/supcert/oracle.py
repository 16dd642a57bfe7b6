"""Independent verification of emitted plans, plus exhaustive grid scans.

:func:`verify_plan` touches nothing but raw matrices and numbers: the
original Gram matrix and coefficients, and what the plan carries (working
Gram matrix, embedding, coefficient vectors, relabelings, probabilities and
operators).  It does not import the planner.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .basis import DEFAULT_TOL
from .errors import GridTooLarge, UnsupportedCase

MAX_PAIRS = 10**6


@dataclass(frozen=True)
class Check:
    name: str
    deviation: float
    passed: bool

    def to_dict(self) -> dict:
        return {"name": self.name, "deviation": self.deviation, "passed": self.passed}


@dataclass(frozen=True)
class VerificationReport:
    checks: tuple

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def failures(self) -> list[str]:
        return [c.name for c in self.checks if not c.passed]

    def deviation(self, name: str) -> float:
        return next(c.deviation for c in self.checks if c.name == name)

    def to_dict(self) -> dict:
        return {"passed": self.passed, "checks": [c.to_dict() for c in self.checks]}


def _freeness_defect(embedding: np.ndarray, op: np.ndarray) -> float:
    """How far op is from sending every basis vector onto a single basis vector."""
    coeff = np.linalg.solve(embedding, op @ embedding)
    mags = np.sort(np.abs(coeff), axis=0)
    return float(np.max(mags[:-1].sum(axis=0))) if len(mags) > 1 else 0.0


def _l1(coeffs: np.ndarray) -> float:
    a = np.abs(coeffs)
    return float(a.sum() ** 2 - (a * a).sum())


def _relabel_defect(original: np.ndarray, working: np.ndarray, mapping) -> float:
    dev = 0.0
    used = set()
    for i, src in enumerate(mapping):
        if src < 0:
            dev = max(dev, abs(working[i]))
        else:
            dev = max(dev, abs(working[i] - original[src]))
            used.add(src)
    rest = [original[j] for j in range(len(original)) if j not in used]
    if rest:
        dev = max(dev, float(np.max(np.abs(rest))))
    return float(dev)


def _isometry_defect(gram: np.ndarray, work_gram: np.ndarray, mapping) -> float:
    idx = [i for i, m in enumerate(mapping) if m >= 0]
    src = [mapping[i] for i in idx]
    if not idx:
        return 0.0
    return float(np.max(np.abs(work_gram[np.ix_(idx, idx)] - gram[np.ix_(src, src)])))


def verify_plan(basis, psi, phi, plan, tol: float = DEFAULT_TOL) -> VerificationReport:
    """Re-derive every claim of ``plan`` from matrix arithmetic in its embedding."""
    checks: list[Check] = []

    def add(name, deviation):
        deviation = float(deviation)
        checks.append(Check(name, deviation, bool(np.isfinite(deviation) and deviation <= tol)))

    gram = np.asarray(basis.gram, dtype=float)
    psi_c = np.asarray(getattr(psi, "coeffs", psi), dtype=float)
    phi_c = np.asarray(getattr(phi, "coeffs", phi), dtype=float)
    work_gram = np.asarray(plan.gram, dtype=float)
    emb = np.asarray(plan.embedding, dtype=complex)
    r = work_gram.shape[0]
    shapes_ok = (
        emb.shape == (r, r)
        and len(plan.source) == r
        and len(plan.target) == r
        and len(plan.source_map) == r
        and len(plan.target_map) == r
        and all(k.shape == (r, r) for k in plan.kraus_ops)
        and all(f.shape == (r, r) for f in (plan.completion or ()))
        and len(plan.probs) == len(plan.kraus_ops)
        and r <= gram.shape[0]
        and psi_c.shape == phi_c.shape == (gram.shape[0],)
        and all(-1 <= m < gram.shape[0] for m in plan.source_map + plan.target_map)
        and min(plan.source_map) >= 0
    )
    add("shapes", 0.0 if shapes_ok else np.inf)
    if not shapes_ok:
        return VerificationReport(tuple(checks))

    src = np.asarray(plan.source, dtype=float)
    tgt = np.asarray(plan.target, dtype=float)
    p = np.asarray(plan.probs, dtype=float)

    add("embedding_gram", np.max(np.abs(emb.conj().T @ emb - work_gram)))
    add("source_relabel", _relabel_defect(psi_c, src, plan.source_map))
    add("target_relabel", _relabel_defect(phi_c, tgt, plan.target_map))
    iso = max(
        _isometry_defect(gram, work_gram, plan.source_map),
        _isometry_defect(gram, work_gram, plan.target_map),
    )
    if tuple(plan.source_map) != tuple(plan.target_map):
        # Different relabelings of source and target are only free when every
        # permutation of the basis preserves the Gram matrix.
        off = gram[~np.eye(gram.shape[0], dtype=bool)]
        iso = max(iso, float(np.max(off) - np.min(off)))
    add("relabel_isometry", iso)

    psi_e = emb @ src
    phi_e = emb @ tgt
    add("normalization", max(abs(np.vdot(psi_e, psi_e).real - 1), abs(np.vdot(phi_e, phi_e).real - 1)))
    add("probability_sum", abs(p.sum() - 1))
    add("probability_sign", max(0.0, -float(np.min(p))))

    for n, (k, pn) in enumerate(zip(plan.kraus_ops, p), start=1):
        out = k @ psi_e
        add(f"output[K{n}]", np.linalg.norm(out - np.sqrt(max(pn, 0.0)) * phi_e))
        add(f"probability[K{n}]", abs(np.vdot(out, out).real - pn))
        add(f"free[K{n}]", _freeness_defect(emb, k))

    total = sum(k.conj().T @ k for k in plan.kraus_ops)
    if plan.completion is not None:
        for m, f in enumerate(plan.completion, start=1):
            add(f"annihilates[F{m}]", np.linalg.norm(f @ psi_e))
            add(f"free[F{m}]", _freeness_defect(emb, f))
            total = total + f.conj().T @ f
        add("completeness", np.max(np.abs(total - np.eye(r))))
    else:
        leftover = np.eye(r) - total
        leftover = 0.5 * (leftover + leftover.conj().T)
        add("residual_psd", max(0.0, -float(np.min(np.linalg.eigvalsh(leftover)))))

    add("l1_monotone", max(0.0, _l1(phi_c) - _l1(psi_c)))
    return VerificationReport(tuple(checks))


# --------------------------------------------------------------------------
# Grid scans


@dataclass(frozen=True)
class GridSpec:
    """Angle grid over normalized real states, offset by half a step.

    d=2 uses one angle on (0, pi); d=3 uses a polar angle on (0, pi) with
    ``n`` steps and an azimuth on (0, 2 pi) with ``2 n`` steps.  ``extra``
    appends explicit coefficient vectors (normalized on the fly).
    """

    n: int
    extra: tuple = ()

    def coefficient_vectors(self, d: int) -> list[np.ndarray]:
        n = self.n
        if d == 2:
            angles = np.pi * (np.arange(n) + 0.5) / n
            vecs = [np.array([np.cos(t), np.sin(t)]) for t in angles]
        elif d == 3:
            polar = np.pi * (np.arange(n) + 0.5) / n
            azimuth = np.pi * (np.arange(2 * n) + 0.5) / n
            vecs = [
                np.array([np.sin(t) * np.cos(a), np.sin(t) * np.sin(a), np.cos(t)])
                for t in polar
                for a in azimuth
            ]
        else:
            raise UnsupportedCase("grid scans cover d = 2 and 3")
        return vecs + [np.asarray(v, dtype=float) for v in self.extra]


@dataclass
class Census:
    counts: dict
    pairs: int
    disagreements: list
    verified: int
    inequality_overclaims: int
    states: list = field(default_factory=list)
    rows: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "counts": dict(sorted(self.counts.items())),
            "pairs": self.pairs,
            "verified": self.verified,
            "disagreements": [list(p) for p in self.disagreements],
            "inequality_overclaims": self.inequality_overclaims,
        }


def _scan_rows(args):
    d, gram, tol, states, rows = args
    from .basis import build_basis
    from .kraus import analyse, synthesize
    from .state import PureState

    basis = build_basis(d, gram, tol)
    pure = [PureState(basis, s) for s in states]
    counts: dict = {}
    out_rows, disagreements = [], []
    verified_total = overclaims = 0
    for i in rows:
        for j in range(len(pure)):
            try:
                a = analyse(pure[i], pure[j], tol)
            except UnsupportedCase:
                counts["unsupported"] = counts.get("unsupported", 0) + 1
                out_rows.append((i, j, "unsupported", False))
                continue
            rep = a.report
            verified = False
            if a.probs is not None:
                pl = synthesize(a, tol, strict=False)
                verified = verify_plan(basis, pure[i], pure[j], pl, tol).passed
            counts[rep.region] = counts.get(rep.region, 0) + 1
            verified_total += verified
            if (rep.region == "R1") != verified:
                disagreements.append((i, j))
            ineq = rep.diagnostics.get("coc_inequalities")
            if rep.majorization and rep.l1_monotone and ineq and a.probs is not None and not verified:
                overclaims += 1
            out_rows.append((i, j, rep.region, verified))
    return counts, disagreements, verified_total, overclaims, out_rows


def exhaustive_condition_scan(basis, grid: GridSpec, tol: float = DEFAULT_TOL, workers: int = 1) -> Census:
    """Classify every ordered pair of grid states and cross-check by verification.

    A disagreement is a pair labeled R1 whose synthesized plan fails the
    oracle, or a pair not labeled R1 whose raw operator family passes it.
    ``inequality_overclaims`` counts pairs that satisfy majorization, l1 and
    the diagonal completeness inequalities yet fail verification.
    """
    from .state import make_state

    vecs = grid.coefficient_vectors(basis.d)
    states = [make_state(basis, v, normalize=True).coeffs for v in vecs]
    n = len(states)
    if n * n > MAX_PAIRS:
        raise GridTooLarge(f"{n * n} pairs exceed the limit of {MAX_PAIRS}")
    chunks = [list(range(k, n, max(workers, 1))) for k in range(max(workers, 1))]
    jobs = [(basis.d, basis.gram, tol, states, rows) for rows in chunks if rows]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_scan_rows, jobs))
    else:
        results = [_scan_rows(job) for job in jobs]
    counts: dict = {}
    disagreements, rows = [], []
    verified = overclaims = 0
    for c, dis, ver, over, out in results:
        for key, val in c.items():
            counts[key] = counts.get(key, 0) + val
        disagreements.extend(dis)
        verified += ver
        overclaims += over
        rows.extend(out)
    rows.sort()
    return Census(
        counts=counts,
        pairs=n * n,
        disagreements=sorted(disagreements),
        verified=verified,
        inequality_overclaims=overclaims,
        states=[s.tolist() for s in states],
        rows=rows,
    )


def census_csv_lines(census: Census) -> list[str]:
    lines = ["source,target,region,verified"]
    lines.extend(f"{i},{j},{region},{int(ok)}" for i, j, region, ok in census.rows)
    return lines

