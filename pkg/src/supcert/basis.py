"""Non-orthogonal bases described by their Gram matrix.

A basis {|c_i>} is fixed by the pairwise scalar products mu_ij.  Everything
downstream needs three concrete objects derived from it:

* the Gram matrix G, which acts as the metric on real coefficient vectors,
* an embedding, i.e. explicit column vectors c_i with c_i^dagger c_j = G_ij,
* the dual (perpendicular) basis: unit vectors c_k_perp orthogonal to every
  c_j with j != k, together with the overlaps zeta_k = <c_k_perp|c_k>.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import BadDimension, BadShape, NotPositiveDefinite

DEFAULT_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class GramBasis:
    d: int
    mu: np.ndarray
    gram: np.ndarray
    embedding: np.ndarray
    dual: np.ndarray
    zeta: np.ndarray
    tol: float = DEFAULT_TOL

    @property
    def equal_mu(self) -> float | None:
        """The common off-diagonal scalar product, or None if they differ."""
        off = self.gram[~np.eye(self.d, dtype=bool)]
        if np.all(np.abs(off - off[0]) <= self.tol):
            return float(off[0])
        return None

    def same_as(self, other: "GramBasis", tol: float | None = None) -> bool:
        tol = self.tol if tol is None else tol
        return self.d == other.d and bool(np.max(np.abs(self.gram - other.gram)) <= tol)

    def to_dict(self) -> dict:
        mu = self.equal_mu
        return {"d": self.d, "mu": mu if mu is not None else self.gram.tolist()}


def _gram_from_mu(d: int, mu, tol: float) -> np.ndarray:
    if np.ndim(mu) == 0:
        if np.iscomplexobj(mu):
            raise BadShape("scalar products must be real")
        g = np.full((d, d), float(mu))
        np.fill_diagonal(g, 1.0)
        return g
    g = np.asarray(mu)
    if np.iscomplexobj(g):
        raise BadShape("scalar products must be real")
    g = g.astype(float)
    if g.shape != (d, d):
        raise BadShape(f"mu must be {d}x{d}, got shape {g.shape}")
    if np.max(np.abs(g - g.T)) > tol:
        raise BadShape("mu must be symmetric")
    if np.max(np.abs(np.diag(g) - 1.0)) > tol:
        raise BadShape("mu must have a unit diagonal")
    g = 0.5 * (g + g.T)
    np.fill_diagonal(g, 1.0)
    return g


def build_basis(d: int, mu, tol: float = DEFAULT_TOL) -> GramBasis:
    """Validate the scalar products and derive the embedding and dual basis.

    ``mu`` is either one scalar (all off-diagonal products equal) or a full
    symmetric matrix with unit diagonal.  The basis is accepted when the
    smallest eigenvalue of G exceeds ``tol``.
    """
    if int(d) != d or d < 2:
        raise BadDimension(f"dimension must be an integer >= 2, got {d}")
    d = int(d)
    gram = _gram_from_mu(d, mu, tol)
    if not np.all(np.isfinite(gram)):
        raise BadShape("mu entries must be finite")
    if np.min(np.linalg.eigvalsh(gram)) <= tol:
        raise NotPositiveDefinite("Gram matrix is not positive definite: basis is linearly dependent")
    try:
        lower = np.linalg.cholesky(gram)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite(str(exc)) from exc

    # G = L L^T = U^T U with U = L^T upper triangular; column i of U is c_i.
    embedding = lower.T.astype(complex)
    raw_dual = embedding @ np.linalg.inv(gram)
    # <raw_k|c_j> = delta_kj, so normalizing raw_k leaves zeta_k = 1/|raw_k|.
    norms = np.linalg.norm(raw_dual, axis=0)
    dual = raw_dual / norms
    zeta = np.einsum("ik,ik->k", dual.conj(), embedding)
    return GramBasis(d=d, mu=gram.copy(), gram=gram, embedding=embedding, dual=dual, zeta=zeta, tol=tol)


def independence_range(d: int) -> tuple[float, float]:
    """Open interval of equal scalar products for which d states stay independent."""
    if int(d) != d or d < 2:
        raise BadDimension(f"dimension must be an integer >= 2, got {d}")
    return (1.0 / (1 - d), 1.0)


def det_gram(basis: GramBasis) -> float:
    return float(np.linalg.det(basis.gram))


def gram_inner(basis: GramBasis, x, y) -> float:
    """Metric inner product sum_ij G_ij x_i y_j of two real coefficient vectors."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != (basis.d,) or y.shape != (basis.d,):
        raise BadShape(f"coefficient vectors must have length {basis.d}")
    return float(x @ basis.gram @ y)


def sub_basis(basis: GramBasis, indices) -> GramBasis:
    """Basis spanned by the selected states, relabeled in the given order."""
    idx = list(indices)
    return build_basis(len(idx), basis.gram[np.ix_(idx, idx)], basis.tol)
