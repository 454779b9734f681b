"""Pointwise and differential tensor calculus for a metric on a flat torus.

:class:`Geometry` caches the inverse metric, volume density and
Christoffel symbols of one metric field; the module-level functions are
thin wrappers that build a fresh :class:`Geometry` per call.

Conventions
-----------
* ``Gamma.data[i, j, k]`` is the Christoffel symbol with upper index ``i``.
* ``nabla(T).data[j, ...]`` is the covariant derivative in direction ``j``;
  the derivative slot is slot 0.
* ``Riemann.data[i, j, k, l]`` holds the component of ``R(d_k, d_l) d_j``
  along ``d_i``; ``Ricci[j, l] = Riemann[k, j, k, l]``.
"""

from __future__ import annotations

from functools import cached_property

import numpy as np

from .grid import (GridError, TensorField, gradient_data, integrate_density,
                   spectral_gradient_data)

__all__ = [
    "Geometry",
    "metric_inverse",
    "pointwise_inner",
    "trace_first_two",
    "trace_g",
    "volume_density",
    "total_volume",
    "christoffel",
    "covariant_derivative",
    "nabla_star",
    "bochner_laplacian",
    "curvature",
    "integrated_inner",
    "matmul",
    "slot_apply",
    "connection_action",
]

_LETTERS = "abcdefghijklmnop"
CONDITION_LIMIT = 1e12


def matmul(*mats: np.ndarray) -> np.ndarray:
    """Pointwise product of ``(n, n, *grid)`` matrix arrays."""
    out = mats[0]
    for m in mats[1:]:
        out = np.einsum("ab...,bc...->ac...", out, m)
    return out


def slot_apply(M: np.ndarray, T: np.ndarray, slot: int, rank: int) -> np.ndarray:
    """Contract matrix field ``M[a, b]`` into slot ``slot`` of ``T`` (index b)."""
    idx = _LETTERS[:rank]
    out = idx[:slot] + "z" + idx[slot + 1:]
    return np.einsum(f"z{idx[slot]}...,{idx}...->{out}...", M, T)


def connection_action(C: np.ndarray, T: np.ndarray, slots: str) -> np.ndarray:
    """Derivation action of a connection-like ``C[i, j, k]`` on ``T``.

    Returns ``out[j, ...] = sum_u C[a, j, m] T[..m..] - sum_d C[m, j, a] T[..m..]``
    where the sums run over contravariant and covariant slots respectively.
    """
    rank = len(slots)
    idx = _LETTERS[:rank]
    out = np.zeros((C.shape[0],) + T.shape)
    for s, kind in enumerate(slots):
        tin = idx[:s] + "y" + idx[s + 1:]
        if kind == "u":
            out += np.einsum(f"{idx[s]}zy...,{tin}...->z{idx}...", C, T)
        else:
            out -= np.einsum(f"yz{idx[s]}...,{tin}...->z{idx}...", C, T)
    return out


def _inverse_and_det(g: np.ndarray, n: int):
    if n == 1:
        return 1.0 / g, g[0, 0]
    if n == 2:
        det = g[0, 0] * g[1, 1] - g[0, 1] * g[1, 0]
        inv = np.empty_like(g)
        inv[0, 0] = g[1, 1] / det
        inv[1, 1] = g[0, 0] / det
        inv[0, 1] = -g[0, 1] / det
        inv[1, 0] = -g[1, 0] / det
        return inv, det
    mats = np.moveaxis(g, (0, 1), (-2, -1))
    return (np.moveaxis(np.linalg.inv(mats), (-2, -1), (0, 1)),
            np.linalg.det(mats))


_DERIVATIVES = {"fd": gradient_data, "spectral": spectral_gradient_data}


class Geometry:
    """Cached differential geometry of one metric field ``g``.

    Partial derivatives use the fourth-order periodic stencil unless
    ``derivative='spectral'``, which differentiates in Fourier space.
    """

    def __init__(self, g: TensorField, check: bool = True, derivative: str = "fd"):
        if g.slots != "dd":
            raise GridError("a metric must be a (0,2) field")
        if derivative not in _DERIVATIVES:
            raise ValueError(f"unknown derivative {derivative!r}")
        self.g = g
        self.grid = g.grid
        self.n = g.grid.dim
        self._grad = _DERIVATIVES[derivative]
        if check:
            self._check_conditioning()

    def _check_conditioning(self) -> None:
        mats = np.moveaxis(self.g.data, (0, 1), (-2, -1))
        lam = np.linalg.eigvalsh(mats)
        lo, hi = lam[..., 0], lam[..., -1]
        if np.any(lo <= 0):
            where = np.unravel_index(int(np.argmin(lo)), lo.shape)
            raise ValueError(f"metric not positive definite at {where}")
        cond = hi / lo
        if np.any(cond > CONDITION_LIMIT):
            where = np.unravel_index(int(np.argmax(cond)), cond.shape)
            raise ValueError(
                f"metric near-singular at {where}: condition {cond.max():.3e}")

    @cached_property
    def _inv_det(self):
        return _inverse_and_det(self.g.data, self.n)

    @cached_property
    def ginv(self) -> TensorField:
        return TensorField(self.grid, self._inv_det[0], "uu")

    @cached_property
    def vol(self) -> TensorField:
        return TensorField(self.grid, np.sqrt(self._inv_det[1]), "")

    @cached_property
    def christoffel(self) -> TensorField:
        gi = self.ginv.data
        dg = self._grad(self.g.data, self.grid, 2)  # dg[l, j, k] = d_l g_jk
        lowered = 0.5 * (np.einsum("jlk...->ljk...", dg)
                         + np.einsum("klj...->ljk...", dg) - dg)
        # lowered[l, j, k] = 1/2 (d_j g_lk + d_k g_lj - d_l g_jk)
        return TensorField(self.grid, np.einsum("il...,ljk...->ijk...",
                                                gi, lowered), "udd")

    # -- algebra ---------------------------------------------------------
    def raise_all(self, T: TensorField) -> np.ndarray:
        """Components of ``T`` with every slot type flipped by the metric."""
        out = T.data
        for s, kind in enumerate(T.slots):
            M = self.ginv.data if kind == "d" else self.g.data
            out = slot_apply(M, out, s, T.rank)
        return out

    def inner(self, A: TensorField, B: TensorField) -> TensorField:
        if A.slots != B.slots or A.grid != B.grid:
            raise GridError(f"rank mismatch: {A.slots!r} vs {B.slots!r}")
        prod = A.data * self.raise_all(B)
        return TensorField(self.grid, prod.reshape((-1,) + self.grid.shape)
                           .sum(axis=0), "")

    def integrate(self, A: TensorField, B: TensorField) -> float:
        return integrate_density(self.inner(A, B) * self.vol)

    def trace_g(self, T: TensorField) -> TensorField:
        if T.slots[:2] != "dd":
            raise GridError("trace_g needs two covariant leading slots")
        rest = T.data.shape[2:]
        flat = T.data.reshape((self.n, self.n, -1) + self.grid.shape)
        out = np.einsum("ab...,abc...->c...", self.ginv.data, flat)
        return TensorField(self.grid, out.reshape(rest), T.slots[2:])

    def trace_with(self, M: np.ndarray, T: TensorField) -> TensorField:
        """Contract the two leading slots of ``T`` with matrix field ``M``."""
        rest = T.data.shape[2:]
        flat = T.data.reshape((self.n, self.n, -1) + self.grid.shape)
        out = np.einsum("ab...,abc...->c...", M, flat)
        return TensorField(self.grid, out.reshape(rest), T.slots[2:])

    # -- calculus --------------------------------------------------------
    def nabla(self, T: TensorField) -> TensorField:
        d = self._grad(T.data, self.grid, T.rank)
        d += connection_action(self.christoffel.data, T.data, T.slots)
        return TensorField(self.grid, d, "d" + T.slots)

    def nabla_star(self, B: TensorField) -> TensorField:
        """Formal adjoint of :meth:`nabla` on fully covariant fields.

        Written in divergence form, ``-(1/vol) d_j (vol B^{j...})`` plus
        connection terms, so that because the periodic central difference
        is exactly skew the discrete identity
        ``integrate(nabla T, B) == integrate(T, nabla_star B)`` holds to
        round-off.  In particular the Bochner Laplacian is symmetric and
        positive semi-definite in the integrated inner product.
        """
        if not B.slots or set(B.slots) != {"d"}:
            raise GridError("nabla_star needs a fully covariant field")
        r = B.rank
        C = self.raise_all(B) * self.vol.data
        d = self._grad(C, self.grid, r)       # d[k, j, ...] = d_k C^{j...}
        Z = -np.einsum("jj...->...", d) if r == 1 else \
            -np.einsum("jj" + _LETTERS[:r - 1] + "...->" + _LETTERS[:r - 1] + "...", d)
        G = self.christoffel.data
        idx = _LETTERS[:r - 1]
        for s in range(r - 1):
            tin = idx[:s] + "y" + idx[s + 1:]
            Z = Z - np.einsum(f"{idx[s]}zy...,z{tin}...->{idx}...", G, C)
        out = TensorField(self.grid, Z / self.vol.data, "u" * (r - 1))
        return TensorField(self.grid, self.raise_all(out), B.slots[1:])

    def laplacian(self, T: TensorField) -> TensorField:
        return self.nabla_star(self.nabla(T))

    def hessian(self, f: TensorField) -> TensorField:
        return self.nabla(self.nabla(f))

    @cached_property
    def curvature(self):
        G = self.christoffel.data
        dG = self._grad(G, self.grid, 3)  # dG[k, i, l, j] = d_k G^i_lj
        riem = (np.einsum("kilj...->ijkl...", dG)
                - np.einsum("likj...->ijkl...", dG)
                + np.einsum("ikm...,mlj...->ijkl...", G, G)
                - np.einsum("ilm...,mkj...->ijkl...", G, G))
        ric = np.einsum("kjkl...->jl...", riem)
        ric = 0.5 * (ric + ric.swapaxes(0, 1))
        R = TensorField(self.grid, riem, "uddd")
        Ric = TensorField(self.grid, ric, "dd")
        return R, Ric, self.trace_g(Ric)

    @property
    def ricci(self) -> TensorField:
        return self.curvature[1]

    @property
    def scal(self) -> TensorField:
        return self.curvature[2]


def _geom(g) -> Geometry:
    return g if isinstance(g, Geometry) else Geometry(g)


def metric_inverse(g: TensorField) -> TensorField:
    """Pointwise inverse metric, a ``(2,0)`` field."""
    return _geom(g).ginv


def pointwise_inner(g, A: TensorField, B: TensorField) -> TensorField:
    """Full contraction ``g^r_s(A, B)`` at every grid point."""
    return _geom(g).inner(A, B)


def trace_first_two(T: TensorField) -> TensorField:
    """Contract slot 0 with slot 1; they must have opposite types."""
    if len(T.slots) < 2 or set(T.slots[:2]) != {"u", "d"}:
        raise GridError("trace_first_two needs one 'u' and one 'd' slot first")
    return TensorField(T.grid, np.trace(T.data, axis1=0, axis2=1), T.slots[2:])


def trace_g(g, T: TensorField) -> TensorField:
    return _geom(g).trace_g(T)


def volume_density(g) -> TensorField:
    return _geom(g).vol


def total_volume(g) -> float:
    return integrate_density(_geom(g).vol)


def christoffel(g) -> TensorField:
    return _geom(g).christoffel


def covariant_derivative(g, T: TensorField) -> TensorField:
    return _geom(g).nabla(T)


def nabla_star(g, B: TensorField) -> TensorField:
    """Formal adjoint of the covariant derivative; see :meth:`Geometry.nabla_star`."""
    return _geom(g).nabla_star(B)


def bochner_laplacian(g, h: TensorField) -> TensorField:
    return _geom(g).laplacian(h)


def curvature(g):
    """``(Riemann, Ricci, Scal)`` of the metric ``g``."""
    return _geom(g).curvature


def integrated_inner(g, A: TensorField, B: TensorField) -> float:
    """``int_M g^r_s(A, B) vol(g)``."""
    return _geom(g).integrate(A, B)
