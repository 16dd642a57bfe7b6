"""Deterministic conversion of pure superposition states over non-orthogonal bases.

Typical use::

    from supcert import build_basis, make_state, plan, verify_plan

    basis = build_basis(2, 0.5)
    psi = make_state(basis, [3, -1], normalize=True)
    phi = make_state(basis, [4, -1], normalize=True)
    p = plan(basis, psi, phi)
    assert verify_plan(basis, psi, phi, p).passed
"""

from .basis import DEFAULT_TOL, GramBasis, build_basis, det_gram, gram_inner, independence_range
from .conditions import (
    ConvertibilityReport,
    OmegaMatrix,
    StochasticForm,
    build_omega,
    check_coc,
    check_majorization,
    classify_region,
    qubit_closed_form,
    qubit_phase_case,
    stochastic_form,
)
from .kraus import (
    LeftoverEntries,
    IndexFunctionSet,
    TransformPlan,
    leftover_entries,
    build_kraus,
    complete_free_operators,
    plan,
    residual_certificate,
    select_index_functions,
    solve_probabilities,
)
from .oracle import GridSpec, exhaustive_condition_scan, verify_plan
from .state import (
    PureState,
    QubitPhaseCase,
    TildeVector,
    canonical_order,
    l1_norm,
    make_state,
    maximal_state,
    superposition_rank,
    tilde,
)

__all__ = [name for name in dir() if not name.startswith("_")]
