"""Variation of ``P Ricci`` and the test for Ricci being a gradient field.

``Q(h) = D_(g,h)(P_g Ricci_g)`` is computed by central differences in the
metric.  Its adjoint in the integrated inner product is obtained by
assembling the matrix of ``Q`` column by column, which is feasible on
small grids only.  Both the exterior-derivative identity and the
gradient condition are then evaluated from ``Q`` and ``Q*``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .fd import DEFAULT_EPS, fd_step
from .grid import GridError, TensorField
from .operators import OperatorSpec, op_apply
from .tensors import Geometry, _geom

__all__ = [
    "ASSEMBLY_LIMIT",
    "p_ricci",
    "q_apply",
    "q_matrix",
    "q_adjoint",
    "curl_residual",
    "CurlReport",
    "gradient_condition_residual",
]

# largest number of grid points for which Q is assembled
ASSEMBLY_LIMIT = 24 * 24
MAX_SHRINK = 6


def p_ricci(P: OperatorSpec, g) -> TensorField:
    """``P_g Ricci_g``."""
    geo = _geom(g)
    return op_apply(P, geo, geo.ricci)


def _central(F, g: TensorField, m: TensorField, eps: float):
    # central difference with Richardson extrapolation; the step shrinks
    # when a probe metric fails to be positive definite
    e = fd_step(g, m, eps)
    for _ in range(MAX_SHRINK):
        try:
            d1 = (F(g + m * e) - F(g - m * e)) * (0.5 / e)
            d2 = (F(g + m * (0.5 * e)) - F(g - m * (0.5 * e))) * (1.0 / e)
        except (ValueError, FloatingPointError):
            e *= 0.1
            continue
        return (d2 * 4.0 - d1) * (1.0 / 3.0)
    raise ValueError("probe metrics are not positive definite at any step")


def q_apply(P: OperatorSpec, g, h: TensorField,
            eps: float = DEFAULT_EPS) -> TensorField:
    """``Q_g(h)``, the derivative of ``P Ricci`` at ``g`` in direction ``h``."""
    g = g.g if isinstance(g, Geometry) else g
    if not np.any(h.data):
        return h * 0.0
    return _central(lambda x: p_ricci(P, x), g, h, eps).sym()


def _basis(grid):
    n = grid.dim
    pairs = [(a, b) for a in range(n) for b in range(a, n)]
    return pairs


def _to_coords(h: TensorField, pairs) -> np.ndarray:
    return np.concatenate([h.data[a, b].ravel() for a, b in pairs])


def _from_coords(grid, c: np.ndarray, pairs) -> TensorField:
    n, M = grid.dim, grid.size
    data = np.zeros((n, n) + grid.shape)
    for i, (a, b) in enumerate(pairs):
        block = c[i * M:(i + 1) * M].reshape(grid.shape)
        data[a, b] = block
        data[b, a] = block
    return TensorField(grid, data, "dd")


def _gram(geo: Geometry, pairs) -> np.ndarray:
    """Matrix of the integrated inner product in the coordinate basis."""
    M = geo.grid.size
    gi = geo.ginv.data.reshape(geo.n, geo.n, M)
    w = geo.vol.data.ravel() * geo.grid.cell_volume
    k = len(pairs)
    G = np.zeros((k * M, k * M))
    idx = np.arange(M)
    for i, (a, b) in enumerate(pairs):
        for j, (c, d) in enumerate(pairs):
            # g(E_ab, E_cd) summed over both orderings of each pair
            val = np.zeros(M)
            for p, q in {(a, b), (b, a)}:
                for r, s in {(c, d), (d, c)}:
                    val += gi[p, r] * gi[q, s]
            G[i * M + idx, j * M + idx] = val * w
    return G


def _check_size(grid) -> None:
    if grid.size > ASSEMBLY_LIMIT:
        raise GridError(f"grid of {grid.size} points is too large to assemble Q "
                        f"(limit {ASSEMBLY_LIMIT})")


def q_matrix(P: OperatorSpec, g, eps: float = DEFAULT_EPS) -> np.ndarray:
    """Matrix of ``Q_g`` acting on the independent components ``h_ab``, ``a <= b``."""
    g = g.g if isinstance(g, Geometry) else g
    grid = g.grid
    _check_size(grid)
    pairs = _basis(grid)
    size = len(pairs) * grid.size
    cols = np.empty((size, size))
    for j in range(size):
        e = np.zeros(size)
        e[j] = 1.0
        cols[:, j] = _to_coords(q_apply(P, g, _from_coords(grid, e, pairs), eps),
                                pairs)
    return cols


def q_adjoint(P: OperatorSpec, g, k: TensorField, matrix: np.ndarray | None = None,
              eps: float = DEFAULT_EPS) -> TensorField:
    """``Q*_g(k)``, the adjoint of :func:`q_apply` in the integrated inner product.

    ``matrix`` may be a precomputed :func:`q_matrix` at the same ``g``.
    """
    geo = _geom(g)
    _check_size(geo.grid)
    pairs = _basis(geo.grid)
    Q = q_matrix(P, geo.g, eps) if matrix is None else matrix
    G = _gram(geo, pairs)
    c = np.linalg.solve(G, Q.T @ (G @ _to_coords(k.sym(), pairs)))
    return _from_coords(geo.grid, c, pairs)


@dataclass
class CurlReport:
    lhs: float
    rhs: float

    @property
    def abs_diff(self) -> float:
        return abs(self.lhs - self.rhs)

    @property
    def rel_diff(self) -> float:
        return self.abs_diff / max(abs(self.lhs), 1e-12)

    def to_dict(self) -> dict:
        return {"lhs": self.lhs, "rhs": self.rhs, "abs_diff": self.abs_diff}


def _trace_terms(geo: Geometry, PR: TensorField, h: TensorField) -> TensorField:
    # (P Ricci) Tr(g^-1 h) - g g(P Ricci, h)
    return PR * geo.trace_g(h) - geo.g * geo.inner(PR, h)


def curl_residual(P: OperatorSpec, g, h: TensorField, k: TensorField,
                  matrix: np.ndarray | None = None,
                  eps: float = DEFAULT_EPS) -> CurlReport:
    """Both sides of the exterior-derivative identity for ``Ricci``.

    ``lhs = h(G^P(Ricci, k)) - k(G^P(Ricci, h))`` by central differences of
    ``g -> int g(P_g Ricci_g, k) vol(g)`` with ``h`` and ``k`` held fixed;
    ``rhs = int g(Q(h) - Q*(h) + 1/2 (P Ricci) Tr(g^-1 h)
    - 1/2 g g(P Ricci, h), k) vol``.
    """
    geo = _geom(g)
    g0 = geo.g

    def pairing(x, fixed):
        gx = Geometry(x)
        return gx.integrate(p_ricci(P, gx), fixed)

    lhs = (_central(lambda x: pairing(x, k), g0, h, eps)
           - _central(lambda x: pairing(x, h), g0, k, eps))
    PR = p_ricci(P, geo)
    body = (q_apply(P, g0, h, eps) - q_adjoint(P, geo, h, matrix, eps)
            + _trace_terms(geo, PR, h) * 0.5)
    rhs = geo.integrate(body, k)
    return CurlReport(float(lhs), float(rhs))


def gradient_condition_residual(P: OperatorSpec, g, h: TensorField,
                                matrix: np.ndarray | None = None,
                                eps: float = DEFAULT_EPS) -> float:
    """Integrated norm of ``2(Q(h) - Q*(h)) + (P Ricci) Tr(g^-1 h) - g g(P Ricci, h)``.

    Zero for every ``h`` exactly when ``Ricci`` is locally a gradient field
    for ``G^P``.
    """
    geo = _geom(g)
    PR = p_ricci(P, geo)
    body = ((q_apply(P, geo.g, h, eps) - q_adjoint(P, geo, h, matrix, eps)) * 2.0
            + _trace_terms(geo, PR, h))
    return math.sqrt(max(geo.integrate(body, body), 0.0))
