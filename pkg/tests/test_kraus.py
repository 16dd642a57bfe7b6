import math

import numpy as np
import pytest
from hypothesis import HealthCheck, assume, given, settings
from hypothesis import strategies as st

from supcert.basis import build_basis, independence_range
from supcert.conditions import build_omega, check_coc, check_majorization
from supcert.errors import (
    ConversionRefused,
    Degenerate,
    DivisionByZero,
    Incomplete,
    Infeasible,
    RankIncrease,
    UnsupportedCase,
    UnsupportedDimension,
)
from supcert.kraus import (
    IndexFunctionSet,
    leftover_entries,
    build_kraus,
    case_signature,
    complete_free_operators,
    completion_gram,
    plan,
    residual_certificate,
    select_index_functions,
    solve_probabilities,
)
from supcert.oracle import verify_plan
from supcert.state import canonical_order, make_state, maximal_state, tilde


def ordered_pair(d, mu, a, b):
    basis = build_basis(d, mu)
    psi, _ = canonical_order(make_state(basis, a, normalize=True))
    phi, _ = canonical_order(make_state(basis, b, normalize=True))
    return basis, psi, phi


def projector_term(basis, target, source):
    """|c_target><c_source_perp| / zeta_source."""
    return np.outer(basis.embedding[:, target], basis.dual[:, source].conj()) / basis.zeta[source]


# --------------------------------------------------------------------------
# index functions


def test_table_rows():
    fns = select_index_functions([0.6, 0.4], [0.9, 0.1])
    assert [list(f) for f in fns.fns] == [[0, 1], [1, 0]]
    fns = select_index_functions([0.5, 0.3, 0.2], [0.6, 0.25, 0.15])
    assert [list(f) for f in fns.fns] == [[0, 1, 2], [2, 1, 0], [1, 0, 2]]
    assert fns.table_row == 2
    fns = select_index_functions([0.4, 0.3, 0.2, 0.1], [0.7, 0.2, 0.05, 0.05])
    assert [[v + 1 for v in f] for f in fns.fns] == [[1, 2, 3, 4], [4, 2, 3, 1], [2, 1, 3, 4], [3, 2, 1, 4]]
    assert fns.table_row == 4


@pytest.mark.parametrize(
    "x, y, row",
    [
        ([0.4, 0.3, 0.2, 0.1], [0.5, 0.2, 0.2, 0.1], 4),
        ([0.4, 0.3, 0.2, 0.1], [0.45, 0.25, 0.25, 0.05], 5),
        ([0.3, 0.3, 0.2, 0.2], [0.4, 0.35, 0.25, 0.0], 6),
        ([0.4, 0.2, 0.2, 0.2], [0.5, 0.3, 0.1, 0.1], 7),
        ([0.4, 0.3, 0.2, 0.1], [0.45, 0.35, 0.1, 0.1], 8),
    ],
)
def test_four_dimensional_rows(x, y, row):
    assert select_index_functions(x, y).table_row == row


def test_general_patterns():
    fns = select_index_functions([0.3, 0.2, 0.2, 0.2, 0.1], [0.6, 0.1, 0.1, 0.1, 0.1])
    assert fns.swap_pairs == ((0, 1), (0, 2), (0, 3), (0, 4))
    fns = select_index_functions([0.2] * 5, [0.26, 0.25, 0.25, 0.24, 0.0])
    assert fns.swap_pairs == ((0, 4), (1, 4), (2, 4), (3, 4))
    with pytest.raises(UnsupportedCase):
        select_index_functions([0.3, 0.2, 0.2, 0.2, 0.1], [0.4, 0.3, 0.1, 0.1, 0.1])


def test_index_functions_are_transpositions():
    for d in range(2, 7):
        x = np.full(d, 1 / d)
        y = np.r_[1.0, np.zeros(d - 1)]
        fns = select_index_functions(x, y)
        assert fns.fns[0] == tuple(range(d))
        for f, (a, b) in zip(fns.fns[1:], fns.swap_pairs):
            moved = [k for k in range(d) if f[k] != k]
            assert moved == sorted([a, b]) and f[a] == b and f[b] == a


# --------------------------------------------------------------------------
# probabilities


def test_reference_probabilities():
    _, psi, phi = ordered_pair(2, 0.5, [3, -1], [4, -1])
    fns = select_index_functions(tilde(psi), tilde(phi))
    np.testing.assert_allclose(solve_probabilities(tilde(psi), tilde(phi), fns), [209 / 210, 1 / 210], atol=1e-12)

    _, psi, phi = ordered_pair(3, -0.25, [3, 2, 1], [4, 2, 1])
    fns = select_index_functions(tilde(psi), tilde(phi))
    expected = [2947 / 3519, 1 / 153, 61 / 391]
    np.testing.assert_allclose(solve_probabilities(tilde(psi), tilde(phi), fns), expected, atol=1e-12)

    basis = build_basis(3, -9 / 19)
    psi = maximal_state(basis)
    phi = make_state(basis, [5 / 3, 4 / 3, 2 / 3])
    fns = select_index_functions(tilde(psi), tilde(phi))
    expected = [7063 / 14841, 143 / 291, 5 / 153]
    np.testing.assert_allclose(solve_probabilities(tilde(psi), tilde(phi), fns), expected, atol=1e-12)


@st.composite
def tilde_pairs(draw, d):
    lo, hi = independence_range(d)
    mu = lo + (hi - lo) * draw(st.floats(0.05, 0.95))
    a = draw(st.lists(st.floats(-3, 3), min_size=d, max_size=d))
    b = draw(st.lists(st.floats(-3, 3), min_size=d, max_size=d))
    assume(min(map(abs, a)) > 0.05 and min(map(abs, b)) > 0.05)
    basis, psi, phi = ordered_pair(d, mu, a, b)
    x, y = tilde(psi).values, tilde(phi).values
    assume(np.min(np.abs(y[:, None] - y[None, :]) + np.eye(d)) > 1e-3)
    return x, y


@settings(max_examples=150, deadline=None, suppress_health_check=[HealthCheck.filter_too_much])
@given(tilde_pairs(2))
def test_qubit_closed_form_probabilities(pair):
    x, y = pair
    fns = select_index_functions(x, y)
    try:
        p = solve_probabilities(x, y, fns)
    except Infeasible as exc:
        p = exc.probs
    p1 = (y[0] - x[1]) / (y[0] - y[1])
    p2 = (x[1] - y[1]) / (y[0] - y[1])
    np.testing.assert_allclose(p, [p1, p2], atol=1e-9)


@settings(max_examples=150, deadline=None, suppress_health_check=[HealthCheck.filter_too_much])
@given(tilde_pairs(3))
def test_three_dimensional_closed_form_probabilities(pair):
    x, y = pair
    fns = select_index_functions(x, y)
    try:
        p = solve_probabilities(x, y, fns)
    except Infeasible as exc:
        p = exc.probs
    if fns.table_row == 2:
        p2 = (x[2] - y[2]) / (y[0] - y[2])
        p3 = (x[1] - y[1]) / (y[0] - y[1])
    else:
        p2 = (y[0] - x[0]) / (y[0] - y[2])
        p3 = (y[1] - x[1]) / (y[1] - y[2])
    np.testing.assert_allclose(p, [1 - p2 - p3, p2, p3], atol=1e-8)


def test_general_pattern_closed_forms(rng):
    for d in (5, 6, 7):
        for _ in range(40):
            y = np.sort(rng.dirichlet(np.ones(d)))[::-1]
            # All-'>=' pattern: move weight from the first slot to the others.
            x = y.copy()
            extra = rng.uniform(0, 1, size=d - 1) * 0.5 * (y[0] - y[1:]) / d
            x[1:] += extra
            x[0] -= extra.sum()
            x = np.sort(x)[::-1]
            if set(case_signature(x, y)) != {">="}:
                continue
            fns = select_index_functions(x, y)
            assert fns.pattern == "first-slot swaps"
            p = solve_probabilities(x, y, fns)
            expected = [(x[k] - y[k]) / (y[0] - y[k]) for k in range(1, d)]
            np.testing.assert_allclose(p[1:], expected, atol=1e-9)

            # All-'<=' pattern: the target pulls weight out of the last slot.
            x = np.sort(rng.dirichlet(np.full(d, 5.0)))[::-1]
            y = x.copy()
            extra = rng.uniform(0, 1, size=d - 1) * x[-1] / d
            y[:-1] += extra
            y[-1] -= extra.sum()
            y = np.sort(y)[::-1]
            if set(case_signature(x, y)) != {"<="}:
                continue
            fns = select_index_functions(x, y)
            assert fns.pattern == "last-slot swaps"
            p = solve_probabilities(x, y, fns)
            expected = [(y[k - 1] - x[k - 1]) / (y[k - 1] - y[-1]) for k in range(1, d)]
            np.testing.assert_allclose(p[1:], expected, atol=1e-9)


def test_infeasible_and_degenerate_systems():
    fns = IndexFunctionSet.from_swaps(2, [(0, 1)])
    with pytest.raises(Infeasible) as info:
        solve_probabilities([0.9, 0.1], [0.6, 0.4], fns)
    assert np.min(info.value.probs) < 0
    with pytest.raises(Degenerate):
        solve_probabilities([0.7, 0.3], [0.5, 0.5], fns)
    np.testing.assert_allclose(solve_probabilities([0.5, 0.5], [0.5, 0.5], fns), [1, 0])


def test_majorization_gives_nonnegative_probabilities(rng):
    for _ in range(600):
        d = int(rng.integers(2, 5))
        lo, hi = independence_range(d)
        _, psi, phi = ordered_pair(d, rng.uniform(lo + 0.02, hi - 0.02), rng.normal(size=d), rng.normal(size=d))
        x, y = tilde(psi), tilde(phi)
        if not check_majorization(x, y)[0]:
            continue
        fns = select_index_functions(x, y)
        assert np.min(solve_probabilities(x, y, fns)) >= -1e-9


# --------------------------------------------------------------------------
# operators


def test_reference_kraus_operators():
    basis, psi, phi = ordered_pair(2, 0.5, [3, -1], [4, -1])
    fns = select_index_functions(tilde(psi), tilde(phi))
    k1, k2 = build_kraus(basis, psi, phi, fns, [209 / 210, 1 / 210])
    pre1 = math.sqrt(209 / 210) * math.sqrt(7 / 13)
    expected1 = pre1 * (4 / 3 * projector_term(basis, 0, 0) + projector_term(basis, 1, 1))
    pre2 = -math.sqrt(1 / 210) * math.sqrt(7 / 13)
    expected2 = pre2 * (1 / 3 * projector_term(basis, 1, 0) + 4 * projector_term(basis, 0, 1))
    np.testing.assert_allclose(k1, expected1, atol=1e-12)
    np.testing.assert_allclose(k2, expected2, atol=1e-12)


def test_identity_conversion():
    basis, psi, _ = ordered_pair(3, 0.3, [3, 2, 1], [3, 2, 1])
    fns = select_index_functions(tilde(psi), tilde(psi))
    ops = build_kraus(basis, psi, psi, fns, [1, 0, 0])
    np.testing.assert_allclose(ops[0], np.eye(3), atol=1e-12)
    for op in ops[1:]:
        assert not np.any(op)


def test_maximal_example_weights():
    basis = build_basis(3, -9 / 19)
    psi = maximal_state(basis)
    phi = make_state(basis, [5 / 3, 4 / 3, 2 / 3])
    fns = select_index_functions(tilde(psi), tilde(phi))
    p = solve_probabilities(tilde(psi), tilde(phi), fns)
    k1 = build_kraus(basis, psi, phi, fns, p)[0]
    weights = math.sqrt(p[0]) * np.array([5, 4, 2]) / math.sqrt(57)
    expected = sum(w * projector_term(basis, k, k) for k, w in enumerate(weights))
    np.testing.assert_allclose(k1, expected, atol=1e-12)


def test_zero_source_coefficient_is_rejected():
    basis = build_basis(2, 0.2)
    psi = make_state(basis, [1, 0])
    phi = make_state(basis, [3, 1], normalize=True)
    fns = IndexFunctionSet.from_swaps(2, [(0, 1)])
    with pytest.raises(DivisionByZero):
        build_kraus(basis, psi, phi, fns, [0.5, 0.5])


def test_residual_certificates():
    basis, psi, phi = ordered_pair(3, 0.0, [1, 1, 1], [3, 2, 1])
    fns = select_index_functions(tilde(psi), tilde(phi))
    ops = build_kraus(basis, psi, phi, fns, solve_probabilities(tilde(psi), tilde(phi), fns))
    r, psd, _ = residual_certificate(ops)
    assert psd
    np.testing.assert_allclose(r, 0, atol=1e-12)

    basis, psi, phi = ordered_pair(2, 0.5, [3, -1], [4, -1])
    fns = select_index_functions(tilde(psi), tilde(phi))
    ops = build_kraus(basis, psi, phi, fns, [209 / 210, 1 / 210])
    _, psd, min_eig = residual_certificate(ops)
    assert psd and min_eig >= -1e-12
    _, psd, _ = residual_certificate([1.5 * ops[0], ops[1]])
    assert not psd


# --------------------------------------------------------------------------
# completion


def test_qubit_leftover_formula():
    basis, psi, phi = ordered_pair(2, 0.5, [3, -1], [4, -1])
    fns = select_index_functions(tilde(psi), tilde(phi))
    q = leftover_entries(basis, psi, phi, [209 / 210, 1 / 210], fns)
    (p1, p2), (f1, f2) = psi.coeffs, phi.coeffs
    assert q.X[0] == pytest.approx(0.5 / p2**2 * (f1 * f2 - p1 * p2))
    assert q.X[0] == pytest.approx(11 / 26)

    basis, psi, phi = ordered_pair(2, 0.0, [3, -1], [4, -1])
    p = solve_probabilities(tilde(psi), tilde(phi), fns)
    assert abs(leftover_entries(basis, psi, phi, p, fns).X[0]) < 1e-12


def _case_one_formulas(mu, psi, phi, p):
    (a1, a2, a3), (b1, b2, b3), (p1, p2, p3) = psi, phi, p
    x2 = mu / a2**2 * (p1 * (b1 * b2 + b2 * b3) + p2 * (b1 * b2 + b2 * b3) + p3 * (b1 * b2 + b1 * b3) - (a1 * a2 + a2 * a3))
    x3 = mu / a3**2 * (p1 * (b1 * b3 + b2 * b3) + p2 * (b1 * b2 + b1 * b3) + p3 * (b1 * b3 + b2 * b3) - (a1 * a3 + a2 * a3))
    y23 = mu / (a2 * a3) * (a2 * a3 - p1 * b2 * b3 - p2 * b1 * b2 - p3 * b1 * b3)
    return x2, x3, y23


def test_three_dimensional_leftover_formulas(rng):
    seen = 0
    while seen < 100:
        mu = rng.uniform(-0.45, 0.9)
        basis, psi, phi = ordered_pair(3, mu, rng.normal(size=3), rng.normal(size=3))
        if np.min(np.abs(psi.coeffs)) < 0.05:
            continue
        x, y = tilde(psi), tilde(phi)
        fns = select_index_functions(x, y)
        if fns.table_row != 2:
            continue
        try:
            p = solve_probabilities(x, y, fns)
        except (Infeasible, Degenerate):
            continue
        q = leftover_entries(basis, psi, phi, p, fns)
        x2, x3, y23 = _case_one_formulas(mu, psi.coeffs, phi.coeffs, p)
        np.testing.assert_allclose([q.X[0], q.X[1], q.Y[(2, 3)]], [x2, x3, y23], rtol=1e-7, atol=1e-9)
        seen += 1


def test_maximal_example_leftover_is_nonnegative():
    basis = build_basis(3, -9 / 19)
    psi, phi = maximal_state(basis), make_state(basis, [5 / 3, 4 / 3, 2 / 3])
    fns = select_index_functions(tilde(psi), tilde(phi))
    p = solve_probabilities(tilde(psi), tilde(phi), fns)
    q = leftover_entries(basis, psi, phi, p, fns)
    assert np.all(q.X >= 0)
    assert check_coc(psi, phi, p, build_omega(phi, fns))[0]


def test_leftover_routes_agree(rng):
    """Diagonal route (completion_gram) versus off-diagonal route (leftover_entries)."""
    for _ in range(300):
        d = int(rng.integers(2, 4))
        lo, hi = independence_range(d)
        basis, psi, phi = ordered_pair(d, rng.uniform(lo + 0.02, hi - 0.02), rng.normal(size=d), rng.normal(size=d))
        if np.min(np.abs(psi.coeffs)) < 0.05:
            continue
        x, y = tilde(psi), tilde(phi)
        fns = select_index_functions(x, y)
        try:
            p = solve_probabilities(x, y, fns)
        except (Infeasible, Degenerate) as exc:
            p = getattr(exc, "probs", None)
            if p is None:
                continue
        scaled = completion_gram(basis, psi, phi, p, fns)
        q = leftover_entries(basis, psi, phi, p, fns)
        c = psi.coeffs
        np.testing.assert_allclose(np.diag(scaled)[1:] / c[1:] ** 2, q.X, rtol=1e-7, atol=1e-8)
        for (j, l), v in q.Y.items():
            assert scaled[j - 1, l - 1] / (c[j - 1] * c[l - 1]) == pytest.approx(v, rel=1e-7, abs=1e-8)
        np.testing.assert_allclose(scaled.sum(axis=1), 0, atol=1e-10)


def test_reference_completion():
    basis, psi, phi = ordered_pair(2, 0.5, [3, -1], [4, -1])
    fns = select_index_functions(tilde(psi), tilde(phi))
    p = [209 / 210, 1 / 210]
    ops = build_kraus(basis, psi, phi, fns, p)
    q = leftover_entries(basis, psi, phi, p, fns)
    (f3,), targets = complete_free_operators(basis, psi, q, ops)
    assert targets == [0]
    expected = -math.sqrt(11 / 26) * (1 / 3 * projector_term(basis, 0, 0) + projector_term(basis, 0, 1))
    np.testing.assert_allclose(f3, expected, atol=1e-12)


def test_orthonormal_completion_is_empty():
    basis, psi, phi = ordered_pair(3, 0.0, [1, 1, 1], [3, 2, 1])
    fns = select_index_functions(tilde(psi), tilde(phi))
    p = solve_probabilities(tilde(psi), tilde(phi), fns)
    ops = build_kraus(basis, psi, phi, fns, p)
    assert complete_free_operators(basis, psi, leftover_entries(basis, psi, phi, p, fns), ops)[0] == []


def test_three_dimensional_completion():
    basis, psi, phi = ordered_pair(3, -0.25, [3, 2, 1], [4, 2, 1])
    fns = select_index_functions(tilde(psi), tilde(phi))
    p = solve_probabilities(tilde(psi), tilde(phi), fns)
    ops = build_kraus(basis, psi, phi, fns, p)
    completion, _ = complete_free_operators(basis, psi, leftover_entries(basis, psi, phi, p, fns), ops)
    assert 1 <= len(completion) <= 3
    r, _, _ = residual_certificate(ops)
    np.testing.assert_allclose(sum(f.conj().T @ f for f in completion), r, atol=1e-9)


def test_completion_fails_when_leftover_is_negative():
    basis, psi, phi = ordered_pair(2, 0.5, [3, 1], [4, 1])
    fns = select_index_functions(tilde(psi), tilde(phi))
    p = solve_probabilities(tilde(psi), tilde(phi), fns)
    with pytest.raises(Incomplete):
        complete_free_operators(basis, psi, leftover_entries(basis, psi, phi, p, fns))


def test_explicit_leftover_limited_to_small_dimensions():
    basis = build_basis(4, -0.1)
    psi = maximal_state(basis)
    fns = IndexFunctionSet.from_swaps(4, [(0, 3), (0, 1), (0, 2)])
    with pytest.raises(UnsupportedDimension):
        leftover_entries(basis, psi, psi, [1, 0, 0, 0], fns)


# --------------------------------------------------------------------------
# planner


def test_plan_reference_pairs():
    basis = build_basis(2, 0.5)
    psi = make_state(basis, [3, -1], normalize=True)
    result = plan(basis, psi, make_state(basis, [4, -1], normalize=True))
    np.testing.assert_allclose(result.probs, [209 / 210, 1 / 210], atol=1e-12)
    assert len(result.completion) == 1

    with pytest.raises(ConversionRefused) as info:
        plan(basis, make_state(basis, [4, -1], normalize=True), make_state(basis, [3, 1], normalize=True))
    assert info.value.report.region == "R5"


def test_plan_four_dimensional_example():
    mu = -0.2
    basis = build_basis(4, mu)
    phi = make_state(basis, np.array([9, 4, 3, 2]) / math.sqrt(110 + 214 * mu))
    result = plan(basis, maximal_state(basis), phi)
    assert result.index_functions.table_row == 4
    assert result.completion is None and result.residual_psd
    assert verify_plan(basis, maximal_state(basis), phi, result).passed


def test_plan_refusals():
    basis = build_basis(3, 0.2)
    with pytest.raises(RankIncrease):
        plan(basis, make_state(basis, [1, 1, 0], normalize=True), make_state(basis, [3, 2, 1], normalize=True))
    basis = build_basis(5, -0.1)
    psi = make_state(basis, np.sqrt([0.3, 0.2, 0.2, 0.2, 0.1]), normalize=True)
    phi = make_state(basis, np.sqrt([0.4, 0.3, 0.12, 0.1, 0.08]), normalize=True)
    with pytest.raises(UnsupportedCase):
        plan(basis, psi, phi)


def test_plan_on_source_support():
    basis = build_basis(4, -0.2)
    psi = make_state(basis, [1, 0, 1, 1], normalize=True)
    phi = make_state(basis, [0, 3, 0, 1], normalize=True)
    result = plan(basis, psi, phi)
    assert result.d == 3
    assert result.source_map == (0, 2, 3)
    assert verify_plan(basis, psi, phi, result).passed


def test_plan_on_non_symmetric_basis():
    mu = [[1, 0.1, -0.05], [0.1, 1, 0.2], [-0.05, 0.2, 1]]
    basis = build_basis(3, mu)
    psi = make_state(basis, [-1.2, 1.11, -0.89], normalize=True)
    phi = make_state(basis, [0.67, 0.59, 0.26], normalize=True)
    assert canonical_order(psi)[1] == (0, 1, 2) and canonical_order(phi)[1] == (0, 1, 2)
    result = plan(basis, psi, phi)
    assert verify_plan(basis, psi, phi, result).passed
