"""Operator families ``P_g`` defining the metrics ``G^P_g(h,k) = int g(P_g h, k) vol``.

Four families are provided: ``identity`` (the L2 metric), ``conformal``
(``Phi(Vol) h``), ``curvature`` (``Phi(Scal) h``) and ``sobolev``
(``(1 + Delta)^p h`` with the Bochner Laplacian).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import LinearOperator, gmres, splu

from .grid import TensorField, integrate_density
from .tensors import Geometry, _geom
from .variations import d_laplacian, d_laplacian_adjoint, d_scal

__all__ = [
    "PhiFunction",
    "OperatorSpec",
    "SolverError",
    "op_apply",
    "op_solve",
    "sobolev_matrix",
    "SolveContext",
    "op_derivative",
    "op_derivative_adjoint",
    "d_laplacian_adjoint",
    "gp_inner",
]

FAMILIES = ("identity", "conformal", "curvature", "sobolev")


class SolverError(RuntimeError):
    """An operator could not be inverted."""


@dataclass(frozen=True)
class PhiFunction:
    """A positive weight function with its first derivative.

    ``power``:       ``u**k``
    ``affine_exp``:  ``a + b*exp(u)``
    ``polynomial``:  ``sum_i coeffs[i] * u**i``
    """

    kind: str
    k: float = 1.0
    a: float = 1.0
    b: float = 0.0
    coeffs: tuple = ()

    def __post_init__(self):
        if self.kind not in ("power", "affine_exp", "polynomial"):
            raise ValueError(f"unknown Phi kind {self.kind!r}")
        if self.kind == "polynomial" and not self.coeffs:
            raise ValueError("polynomial Phi needs coefficients")

    @classmethod
    def power(cls, k: float) -> "PhiFunction":
        return cls("power", k=float(k))

    @classmethod
    def affine_exp(cls, a: float, b: float) -> "PhiFunction":
        return cls("affine_exp", a=float(a), b=float(b))

    @classmethod
    def polynomial(cls, coeffs) -> "PhiFunction":
        return cls("polynomial", coeffs=tuple(float(c) for c in coeffs))

    @classmethod
    def from_dict(cls, d: dict) -> "PhiFunction":
        kind = d["kind"]
        if kind == "power":
            return cls.power(d["k"])
        if kind == "affine_exp":
            return cls.affine_exp(d["a"], d["b"])
        if kind == "polynomial":
            return cls.polynomial(d["coeffs"])
        raise ValueError(f"unknown Phi kind {kind!r}")

    def to_dict(self) -> dict:
        if self.kind == "power":
            return {"kind": "power", "k": self.k}
        if self.kind == "affine_exp":
            return {"kind": "affine_exp", "a": self.a, "b": self.b}
        return {"kind": "polynomial", "coeffs": list(self.coeffs)}

    def __call__(self, u):
        if self.kind == "power":
            return np.power(u, self.k)
        if self.kind == "affine_exp":
            return self.a + self.b * np.exp(u)
        return np.polynomial.polynomial.polyval(u, self.coeffs)

    def deriv(self, u):
        if self.kind == "power":
            return self.k * np.power(u, self.k - 1.0)
        if self.kind == "affine_exp":
            return self.b * np.exp(u)
        d = np.polynomial.polynomial.polyder(self.coeffs)
        return np.polynomial.polynomial.polyval(u, d) if len(d) else 0.0 * u

    @property
    def growth_bound(self):
        """Constants ``(C, k)`` with ``Phi(u) <= C (1 + |u|^(2k))``, or ``None``."""
        if self.kind == "polynomial":
            deg = len(np.trim_zeros(np.asarray(self.coeffs), "b")) - 1
            return float(np.sum(np.abs(self.coeffs))), max(deg, 0) / 2.0
        if self.kind == "power":
            return 1.0, self.k / 2.0
        if self.b == 0.0:
            return abs(self.a), 0.0
        return None


@dataclass(frozen=True)
class OperatorSpec:
    family: str = "identity"
    phi: PhiFunction | None = None
    p: int = 1
    cg_tol: float = 1e-10
    cg_maxiter: int = 1000
    # keep Phi'(Scal) outside the derivatives in the curvature adjoint
    literal_curvature_adjoint: bool = field(default=False, compare=False)

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}")
        if self.family in ("conformal", "curvature") and self.phi is None:
            raise ValueError(f"{self.family} family needs a Phi function")
        if self.family == "sobolev" and (int(self.p) != self.p or self.p < 1):
            raise ValueError("sobolev order p must be a positive integer")

    @classmethod
    def from_dict(cls, d: dict) -> "OperatorSpec":
        fam = d["family"]
        phi = PhiFunction.from_dict(d["phi"]) if "phi" in d else None
        return cls(family=fam, phi=phi, p=int(d.get("p", 1)),
                   cg_tol=float(d.get("cg_tol", 1e-10)),
                   cg_maxiter=int(d.get("cg_maxiter", 1000)))

    def to_dict(self) -> dict:
        d = {"family": self.family}
        if self.phi is not None:
            d["phi"] = self.phi.to_dict()
        if self.family == "sobolev":
            d["p"] = self.p
        return d


def _one_plus_laplacian(geo: Geometry, h: TensorField) -> TensorField:
    return (h + geo.laplacian(h)).sym()


def _scal_weight(P: OperatorSpec, geo: Geometry):
    return P.phi(geo.scal.data)


def op_apply(P: OperatorSpec, g, h: TensorField) -> TensorField:
    """``P_g h``."""
    geo = _geom(g)
    if P.family == "identity":
        return h
    if P.family == "conformal":
        return h * float(P.phi(integrate_density(geo.vol)))
    if P.family == "curvature":
        return h.like(h.data * _scal_weight(P, geo))
    out = h
    for _ in range(P.p):
        out = _one_plus_laplacian(geo, out)
    return out


def _stencil_symbol(grid, axis: int) -> np.ndarray:
    # i * s(k) is the Fourier symbol of the fourth-order first difference
    h = grid.spacing[axis]
    N = grid.shape[axis]
    k = 2.0 * np.pi * (np.fft.rfftfreq(N) if axis == grid.dim - 1
                       else np.fft.fftfreq(N))
    return (8.0 * np.sin(k) - np.sin(2.0 * k)) / (6.0 * h)


def _flat_symbol(geo: Geometry, p: int) -> np.ndarray:
    """Fourier symbol of ``(1 + Delta)^p`` for the averaged constant metric."""
    grid = geo.grid
    gbar = geo.ginv.data.mean(axis=tuple(range(-grid.dim, 0)))
    sym = [_stencil_symbol(grid, a) for a in range(grid.dim)]
    grids = np.meshgrid(*sym, indexing="ij")
    denom = 1.0 + sum(gbar[a, b] * grids[a] * grids[b]
                      for a in range(grid.dim) for b in range(grid.dim))
    return denom ** p


def _flat_preconditioner(geo: Geometry, denom: np.ndarray):
    grid = geo.grid
    axes = tuple(range(-grid.dim, 0))
    shape = (grid.dim, grid.dim) + grid.shape

    def apply(v: np.ndarray) -> np.ndarray:
        rh = np.fft.rfftn(v.reshape(shape), axes=axes)
        return np.fft.irfftn(rh / denom, s=grid.shape, axes=axes).ravel()

    return apply


def _difference_matrix(N: int, h: float) -> sp.csr_matrix:
    # periodic fourth-order first difference, same stencil as the grid module
    i = np.arange(N)
    rows = np.repeat(i, 4)
    offs = np.tile([-2, -1, 1, 2], N)
    vals = np.tile([1.0, -8.0, 8.0, -1.0], N) / (12.0 * h)
    return sp.csr_matrix((vals, (rows, (rows + offs) % N)), shape=(N, N))


def _gradient_matrices(grid) -> list:
    mats = []
    for ax in range(grid.dim):
        parts = [sp.identity(N, format="csr") for N in grid.shape]
        parts[ax] = _difference_matrix(grid.shape[ax], grid.spacing[ax])
        m = parts[0]
        for q in parts[1:]:
            m = sp.kron(m, q, format="csr")
        mats.append(m)
    return mats


def _nabla_matrix(geo: Geometry, rank: int, D: list) -> sp.csr_matrix:
    """Covariant derivative of fully covariant rank-``rank`` fields."""
    n, M = geo.n, geo.grid.size
    G = geo.christoffel.data.reshape(n, n, n, M)
    nr = n ** rank
    blocks = [[None] * nr for _ in range(n * nr)]
    for j in range(n):
        for I in np.ndindex(*(n,) * rank):
            iI = int(np.ravel_multi_index(I, (n,) * rank))
            coeff = {}
            for s in range(rank):
                for y in range(n):
                    J = list(I)
                    J[s] = y
                    iJ = int(np.ravel_multi_index(J, (n,) * rank))
                    coeff[iJ] = coeff.get(iJ, 0.0) - G[y, j, I[s]]
            row = blocks[j * nr + iI]
            for iJ, v in coeff.items():
                row[iJ] = sp.diags(v)
            row[iI] = D[j] + row[iI] if row[iI] is not None else D[j]
    return sp.bmat(blocks, format="csr")


def _mass_matrix(M: np.ndarray, vol: np.ndarray, rank: int,
                 scale: float = 1.0) -> sp.csr_matrix:
    # pointwise weight prod_s M[a_s, b_s] * vol**scale on rank-``rank`` arrays
    n = M.shape[0]
    npts = vol.size
    Mf = M.reshape(n, n, npts)
    w = vol.ravel() ** scale
    blocks = []
    for I in np.ndindex(*(n,) * rank):
        row = []
        for J in np.ndindex(*(n,) * rank):
            c = w.copy()
            for a, b in zip(I, J):
                c = c * Mf[a, b]
            row.append(sp.diags(c))
        blocks.append(row)
    return sp.bmat(blocks, format="csr")


def sobolev_matrix(P: OperatorSpec, g) -> sp.csr_matrix:
    """Sparse matrix of ``h -> P_g h`` for the Sobolev family.

    Acts on the flattened component array ``h.data.ravel()``; it reproduces
    :func:`op_apply` to round-off.
    """
    geo = _geom(g)
    n, M = geo.n, geo.grid.size
    D = _gradient_matrices(geo.grid)
    N1 = _nabla_matrix(geo, 2, D)
    gi, gm, vol = geo.ginv.data, geo.g.data, geo.vol.data
    # Delta = nabla^T nabla in the integrated inner product
    lap = (_mass_matrix(gm, vol, 2, -1.0) @ N1.T
           @ _mass_matrix(gi, vol, 3) @ N1)
    S = np.zeros((n * n, n * n))
    for a in range(n):
        for b in range(n):
            S[a * n + b, a * n + b] += 0.5
            S[a * n + b, b * n + a] += 0.5
    S = sp.kron(S, sp.identity(M), format="csr")
    A1 = S @ (sp.identity(n * n * M, format="csr") + lap)
    A = A1
    for _ in range(P.p - 1):
        A = A1 @ A
    return A.tocsr()


def _symmetric_embedding(n: int, M: int):
    # E maps upper-triangle components to the full symmetric array;
    # ``rows`` selects the upper-triangle rows of a full array
    pairs = [(a, b) for a in range(n) for b in range(a, n)]
    cols, rws = [], []
    for c, (a, b) in enumerate(pairs):
        for r in {a * n + b, b * n + a}:
            rws.append(r * M + np.arange(M))
            cols.append(c * M + np.arange(M))
    rws = np.concatenate(rws)
    cols = np.concatenate(cols)
    E = sp.csr_matrix((np.ones(rws.size), (rws, cols)),
                      shape=(n * n * M, len(pairs) * M))
    rows = np.concatenate([(a * n + b) * M + np.arange(M) for a, b in pairs])
    return E, rows


def _factored_preconditioner(P: OperatorSpec, geo: Geometry):
    n, M = geo.n, geo.grid.size
    E, rows = _symmetric_embedding(n, M)
    lu = splu((sobolev_matrix(P, geo) @ E)[rows].tocsc())

    def apply(v: np.ndarray) -> np.ndarray:
        return E @ lu.solve(v[rows])

    return apply


INNER_TOL = 1e-8
MAX_REFINEMENTS = 20
RESTART = 150
# largest number of symmetric unknowns for which a sparse LU factor is used
DIRECT_LIMIT = 1000
REFRESH_ITERATIONS = 12


class SolveContext:
    """Preconditioners shared by a sequence of Sobolev solves.

    Along a trajectory the metric changes slowly, so an exact factorisation
    of ``P`` at one metric is a good preconditioner at nearby ones.  Factors
    are stored under :attr:`key`; a caller that integrates many nearby
    trajectories can set the key to the time of each stage so that later
    trajectories reuse the factors of the first.  A factor is rebuilt when
    a solve using it needs more than ``REFRESH_ITERATIONS`` Krylov
    iterations.  Grids too large to factor fall back to the
    constant-coefficient Fourier preconditioner.
    """

    def __init__(self, P: OperatorSpec):
        self.P = P
        self.key = None
        self._factors: dict = {}
        self._stale: set = set()
        self.factorizations = 0

    def preconditioner(self, geo: Geometry, denom: np.ndarray):
        n = geo.n
        if n * (n + 1) // 2 * geo.grid.size > DIRECT_LIMIT:
            return _flat_preconditioner(geo, denom)
        key = self.key
        if key not in self._factors or key in self._stale:
            self._factors[key] = _factored_preconditioner(self.P, geo)
            self._stale.discard(key)
            self.factorizations += 1
        return self._factors[key]

    def record(self, iterations: int) -> None:
        if iterations > REFRESH_ITERATIONS:
            self._stale.add(self.key)


def _sobolev_solve(P: OperatorSpec, geo: Geometry, k: TensorField,
                   x0: TensorField | None = None,
                   context: SolveContext | None = None) -> TensorField:
    # GMRES with right preconditioning, wrapped in iterative refinement on
    # the true residual.  The discrete Laplacian is symmetric and positive
    # in the integrated inner product only up to discretisation error,
    # which is enough to break preconditioned CG.  Applying (1 + Delta)^p
    # amplifies round-off by its largest eigenvalue, so once refinement
    # stalls a residual below the resulting floor is accepted.
    shape = k.data.shape
    size = k.data.size

    def matvec(v):
        return op_apply(P, geo, k.like(v.reshape(shape))).data.ravel()

    denom = _flat_symbol(geo, P.p)
    if context is None:
        precond = _flat_preconditioner(geo, denom)
    else:
        precond = context.preconditioner(geo, denom)
    AM = LinearOperator((size, size), matvec=lambda v: matvec(precond(v)))
    restart = min(RESTART, P.cg_maxiter)
    amplification = 1024.0 * np.finfo(float).eps * float(denom.max())

    knorm = math.sqrt(geo.integrate(k, k))
    if knorm == 0.0:
        return k * 0.0
    x = k * 0.0 if x0 is None else x0
    best = math.inf
    stalls = 0
    iterations = 0

    def count(_):
        nonlocal iterations
        iterations += 1

    for _ in range(MAX_REFINEMENTS):
        r = k - op_apply(P, geo, x)
        res = math.sqrt(geo.integrate(r, r)) / knorm
        if res <= P.cg_tol:
            break
        if res > 0.5 * best:
            stalls += 1
            if stalls >= 2:
                break
        best = min(best, res)
        y, _ = gmres(AM, r.data.ravel(), rtol=INNER_TOL, atol=0.0,
                     restart=restart, maxiter=1, callback=count,
                     callback_type="pr_norm")
        x = (x + k.like(precond(y).reshape(shape))).sym()
    if context is not None:
        context.record(iterations)
    # round-off in k - A x is of order eps |A| |x|, relative to |k|
    floor = max(P.cg_tol, amplification * math.sqrt(geo.integrate(x, x)) / knorm)
    if res <= floor:
        return x
    raise SolverError(f"linear solve did not converge: relative residual {res:.3e}")


def op_solve(P: OperatorSpec, g, k: TensorField,
             x0: TensorField | None = None,
             context: SolveContext | None = None) -> TensorField:
    """``h`` with ``P_g h = k``.

    ``x0`` is an optional starting guess and ``context`` an optional
    :class:`SolveContext`; both only affect the Sobolev family.
    """
    geo = _geom(g)
    if P.family == "identity":
        return k
    if P.family == "conformal":
        return k / float(P.phi(integrate_density(geo.vol)))
    if P.family == "curvature":
        w = _scal_weight(P, geo)
        if np.any(w <= 0):
            raise SolverError("Phi(Scal) is not positive everywhere")
        return k.like(k.data / w)
    return _sobolev_solve(P, geo, k, x0, context)


def op_derivative(P: OperatorSpec, g, m: TensorField, h: TensorField) -> TensorField:
    """``(D_(g,m) P) h``."""
    geo = _geom(g)
    if P.family == "identity":
        return h * 0.0
    if P.family == "conformal":
        vol = integrate_density(geo.vol)
        dvol = 0.5 * integrate_density(geo.trace_g(m) * geo.vol)
        return h * float(P.phi.deriv(vol) * dvol)
    if P.family == "curvature":
        w = P.phi.deriv(geo.scal.data) * d_scal(geo, m).data
        return h.like(h.data * w)
    p = P.p
    powers = [h]
    for _ in range(p - 1):
        powers.append(_one_plus_laplacian(geo, powers[-1]))
    total = None
    for i in range(1, p + 1):
        term = d_laplacian(geo, m, powers[p - i])
        for _ in range(i - 1):
            term = _one_plus_laplacian(geo, term)
        total = term if total is None else total + term
    return total.sym()


def op_derivative_adjoint(P: OperatorSpec, g, h: TensorField,
                          k: TensorField) -> TensorField:
    """``(D_(g,.) P h)^*(k)``: adjoint of ``m -> (D_(g,m) P) h`` applied to ``k``."""
    geo = _geom(g)
    if P.family == "identity":
        return h * 0.0
    if P.family == "conformal":
        vol = integrate_density(geo.vol)
        s = geo.integrate(h, k)
        return geo.g * float(0.5 * P.phi.deriv(vol) * s)
    if P.family == "curvature":
        ricci = geo.ricci
        s = geo.inner(h, k)
        dphi = TensorField(geo.grid, P.phi.deriv(geo.scal.data), "")
        if P.literal_curvature_adjoint:
            body = (geo.g * geo.laplacian(s) + geo.hessian(s).sym()
                    - ricci * s)
            return (body * dphi).sym()
        w = dphi * s
        return (geo.g * geo.laplacian(w) + geo.hessian(w) - ricci * w).sym()
    p = P.p
    hp = [h]
    kp = [k]
    for _ in range(p - 1):
        hp.append(_one_plus_laplacian(geo, hp[-1]))
        kp.append(_one_plus_laplacian(geo, kp[-1]))
    total = None
    for i in range(1, p + 1):
        term = d_laplacian_adjoint(geo, hp[p - i], kp[i - 1])
        total = term if total is None else total + term
    return total.sym()


def gp_inner(P: OperatorSpec, g, h: TensorField, k: TensorField) -> float:
    """``G^P_g(h, k)``."""
    geo = _geom(g)
    return geo.integrate(op_apply(P, geo, h), k)
