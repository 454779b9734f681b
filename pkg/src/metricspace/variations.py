"""First variations of geometric quantities with respect to the metric.

All functions take the base metric ``g`` (a ``(0,2)`` field or a
:class:`~metricspace.tensors.Geometry`) and a direction ``m``.
"""

from __future__ import annotations

import itertools

import numpy as np

from .grid import GridError, TensorField
from .tensors import _LETTERS, Geometry, _geom, connection_action, matmul, slot_apply

__all__ = [
    "d_volume_density",
    "d_scal",
    "connection_variation",
    "n_apply",
    "d_laplacian",
    "d_laplacian_adjoint",
    "weight_variation",
    "weight_gradient",
    "n_transpose",
    "sigma_n_apply",
    "sigma_basis",
    "n_adjoint",
    "fundamental_vector_field",
]


def d_volume_density(g, m: TensorField) -> TensorField:
    """Variation of ``vol(g)``: ``1/2 Tr(g^-1 m) vol(g)``."""
    geo = _geom(g)
    return geo.trace_g(m) * geo.vol * 0.5


def d_scal(g, m: TensorField) -> TensorField:
    """Variation of the scalar curvature in direction ``m``."""
    geo = _geom(g)
    tr = geo.trace_g(m)
    return (geo.laplacian(tr) + geo.nabla_star(geo.nabla_star(m))
            - geo.inner(geo.ricci, m))


def connection_variation(g, m: TensorField) -> np.ndarray:
    """``C[i, j, k] = 1/2 g^il ((nabla m)_jkl + (nabla m)_kjl - (nabla m)_ljk)``."""
    geo = _geom(g)
    dm = geo.nabla(m).data  # dm[j, k, l] = (nabla_j m)_kl
    lowered = (dm + np.einsum("kjl...->jkl...", dm)
               - np.einsum("ljk...->jkl...", dm))
    return 0.5 * np.einsum("il...,jkl...->ijk...", geo.ginv.data, lowered)


def n_apply(g, m: TensorField, T: TensorField) -> TensorField:
    """Variation of the covariant derivative applied to ``T``.

    Derivative slot first; contravariant slots pick up ``+C`` and covariant
    slots ``-C``.
    """
    geo = _geom(g)
    C = connection_variation(geo, m)
    return TensorField(geo.grid, connection_action(C, T.data, T.slots),
                       "d" + T.slots)


def weight_variation(g, m: TensorField, B: TensorField) -> TensorField:
    """Pointwise ``B'`` with ``(D_(g,m) W)(A, B) = W(A, B')``.

    ``W(A, B) = int g(A, B) vol`` on fully covariant fields of equal rank.
    """
    geo = _geom(g)
    mg = matmul(m.data, geo.ginv.data)
    out = 0.5 * geo.trace_g(m).data * B.data
    for s in range(B.rank):
        out = out - slot_apply(mg, B.data, s, B.rank)
    return B.like(out)


def weight_gradient(g, A: TensorField, B: TensorField) -> TensorField:
    """Symmetric ``X`` with ``int g(m, X) vol = (D_(g,m) W)(A, B)`` for all ``m``."""
    geo = _geom(g)
    r = A.rank
    if A.slots != B.slots or set(A.slots) - {"d"}:
        raise GridError("weight_gradient needs fully covariant fields of equal rank")
    out = 0.5 * geo.inner(A, B).data * geo.g.data
    idx = _LETTERS[:r]
    for s in range(r):
        Ar = A.data
        for t in range(r):
            if t != s:
                Ar = slot_apply(geo.ginv.data, Ar, t, r)
        a_idx = idx[:s] + "y" + idx[s + 1:]
        b_idx = idx[:s] + "z" + idx[s + 1:]
        out = out - np.einsum(f"{a_idx}...,{b_idx}...->yz...", Ar, B.data)
    return TensorField(geo.grid, out, "dd").sym()


def n_transpose(g, m: TensorField, B: TensorField) -> TensorField:
    """Pointwise adjoint of ``k -> n_apply(g, m, k)`` applied to ``B``.

    ``int g(n_apply(m, k), B) vol = int g(k, n_transpose(m, B)) vol``.
    """
    geo = _geom(g)
    C = connection_variation(geo, m)
    r = B.rank - 1
    Bs = geo.raise_all(B)
    idx = _LETTERS[:r]
    Y = np.zeros((geo.n,) * r + geo.grid.shape)
    for s in range(r):
        tin = idx[:s] + "y" + idx[s + 1:]
        Y = Y - np.einsum(f"{idx[s]}zy...,z{tin}...->{idx}...", C, Bs)
    out = TensorField(geo.grid, Y, "u" * r)
    return TensorField(geo.grid, geo.raise_all(out), B.slots[1:])


def d_nabla_star(g, m: TensorField, B: TensorField) -> TensorField:
    """Variation of ``nabla_star B`` for fixed ``B``, exact on the grid."""
    geo = _geom(g)
    return (geo.nabla_star(weight_variation(geo, m, B))
            + n_transpose(geo, m, B)
            - weight_variation(geo, m, geo.nabla_star(B)))


def d_laplacian(g, m: TensorField, h: TensorField) -> TensorField:
    """Variation of the Bochner Laplacian ``Delta h`` in direction ``m``.

    Exact derivative of the discrete operator, so finite differences of
    ``laplacian`` in ``g`` agree with it up to the differencing error.
    """
    geo = _geom(g)
    return (d_nabla_star(geo, m, geo.nabla(h))
            + geo.nabla_star(n_apply(geo, m, h)))


def d_laplacian_adjoint(g, h: TensorField, k: TensorField) -> TensorField:
    """Symmetric ``X`` with ``int g((D_(g,m) Delta) h, k) vol = int g(m, X) vol``.

    Follows from ``int g(Delta h, k) vol = int g(nabla h, nabla k) vol``,
    which holds exactly on the grid.
    """
    geo = _geom(g)
    dh, dk = geo.nabla(h), geo.nabla(k)
    return (weight_gradient(geo, dh, dk)
            + n_adjoint(geo, h, dk) + n_adjoint(geo, k, dh)
            - weight_gradient(geo, geo.laplacian(h), k)).sym()


def _cycle_sum(mt: np.ndarray) -> np.ndarray:
    # tau acts on arguments as (tau m)(X, Y, Z) = m(Z, X, Y)
    tau1 = np.einsum("zxy...->xyz...", mt)
    tau2 = np.einsum("yzx...->xyz...", mt)
    return mt - tau1 + tau2


def _sigma_data(gi: np.ndarray, mt: np.ndarray, h: TensorField) -> np.ndarray:
    A = _cycle_sum(mt)                       # A[x0, xj, l]
    sharp = np.einsum("il...,xjl...->ixj...", gi, A)
    return connection_action(0.5 * sharp, h.data, h.slots)


def sigma_n_apply(g, mt: TensorField, h: TensorField) -> TensorField:
    """Total symbol of ``N^0_q`` evaluated on ``mt`` and applied to ``h``.

    ``mt`` is a ``(0,3)`` field symmetric in its last two slots; with
    ``mt = nabla m`` the result equals :func:`n_apply` ``(g, m, h)``.
    """
    if mt.slots != "ddd":
        raise GridError("mt must be a (0,3) field")
    if set(h.slots) - {"d"}:
        raise GridError("h must be fully covariant")
    geo = _geom(g)
    return TensorField(geo.grid, _sigma_data(geo.ginv.data, mt.data, h),
                       "d" + h.slots)


def sigma_basis(n: int) -> np.ndarray:
    """Basis of ``T*M (x) S^2 T*M`` as an array ``(dim, n, n, n)``."""
    out = []
    for a in range(n):
        for p, q in itertools.combinations_with_replacement(range(n), 2):
            e = np.zeros((n, n, n))
            e[a, p, q] = e[a, q, p] = 1.0
            out.append(e)
    return np.array(out)


def _pointwise_adjoint(geo: Geometry, h: TensorField, k: TensorField) -> TensorField:
    """``S`` with ``g(mt, S) = g(sigma(mt) h, k)`` for every admissible ``mt``."""
    n, grid = geo.n, geo.grid
    basis = sigma_basis(n)
    dim = len(basis)
    shape1 = (1,) * grid.dim
    kr = geo.raise_all(k)
    ell = np.empty((dim,) + grid.shape)
    fields = []
    for b, e in enumerate(basis):
        eb = np.broadcast_to(e.reshape(e.shape + shape1), e.shape + grid.shape)
        fields.append(eb)
        sb = _sigma_data(geo.ginv.data, eb, h)
        ell[b] = (sb * kr).reshape((-1,) + grid.shape).sum(axis=0)
    gi = geo.ginv.data
    gram = np.empty((dim, dim) + grid.shape)
    for b in range(dim):
        raised = fields[b]
        for s in range(3):
            raised = slot_apply(gi, raised, s, 3)
        for c in range(dim):
            gram[b, c] = np.einsum("ijk...,ijk...->...", fields[c], raised)
    A = np.moveaxis(gram, (0, 1), (-2, -1))
    coef = np.linalg.solve(A, np.moveaxis(ell, 0, -1)[..., None])[..., 0]
    coef = np.moveaxis(coef, -1, 0)
    S = np.einsum("b...,bijk->ijk...", coef, basis)
    return TensorField(grid, S, "ddd")


def n_adjoint(g, h: TensorField, k: TensorField) -> TensorField:
    """Adjoint of ``m -> N^0_q(m) h`` in the integrated metric, applied to ``k``.

    ``h`` is ``(0,q)`` and ``k`` is ``(0,q+1)``; the result is a symmetric
    ``(0,2)`` field ``X`` with ``int g(N(m) h, k) vol = int g(m, X) vol``.
    """
    if set(h.slots) - {"d"} or k.slots != "d" + h.slots:
        raise GridError("n_adjoint expects h of type (0,q) and k of type (0,q+1)")
    geo = _geom(g)
    S = _pointwise_adjoint(geo, h, k)
    return geo.nabla_star(S).sym()


def fundamental_vector_field(g, X: TensorField) -> TensorField:
    """Lie derivative of ``g`` along ``X``: ``2 Sym nabla(g(X))``."""
    if X.slots != "u":
        raise GridError("X must be a vector field")
    geo = _geom(g)
    lowered = TensorField(geo.grid, slot_apply(geo.g.data, X.data, 0, 1), "d")
    return geo.nabla(lowered).sym() * 2.0
