"""Central finite differences in the metric, used as independent oracles."""

from __future__ import annotations

import numpy as np

from .grid import TensorField

DEFAULT_EPS = 1e-5


def fd_step(g: TensorField, m: TensorField, eps: float = DEFAULT_EPS) -> float:
    """Step size ``eps`` relative to ``||g||_inf``, per unit of ``||m||_inf``."""
    mscale = m.norm_inf()
    if mscale == 0.0:
        return eps
    return eps * g.norm_inf() / mscale


def directional_fd(F, g: TensorField, m: TensorField, eps: float = DEFAULT_EPS,
                   richardson: bool = True):
    """Approximate ``d/dt F(g + t m)`` at ``t = 0``.

    ``F`` may return a float or a :class:`TensorField`.  With
    ``richardson`` the central differences at ``e`` and ``e/2`` are
    combined to cancel the ``O(e^2)`` term.
    """
    e = fd_step(g, m, eps)

    def central(step):
        return (F(g + m * step) - F(g - m * step)) * (0.5 / step)

    d1 = central(e)
    if not richardson:
        return d1
    d2 = central(0.5 * e)
    return (d2 * 4.0 - d1) * (1.0 / 3.0)


def rel_error(a, b) -> float:
    """``||a - b||_inf / ||b||_inf`` for arrays, fields or scalars."""
    a = a.data if isinstance(a, TensorField) else np.asarray(a, dtype=float)
    b = b.data if isinstance(b, TensorField) else np.asarray(b, dtype=float)
    scale = float(np.max(np.abs(b)))
    diff = float(np.max(np.abs(a - b)))
    return diff / scale if scale > 0 else diff


def observed_order(err_coarse: float, err_fine: float, ratio: float = 2.0) -> float:
    if err_fine == 0.0:
        return np.inf
    return float(np.log(err_coarse / err_fine) / np.log(ratio))
