"""Jacobian-free spectral radius estimate by a nonlinear power method.

The Jacobian is never formed: each iteration applies it implicitly through
a finite difference ``rhs(t, v) - rhs(t, y)`` with ``v`` a small
perturbation of ``y``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .errors import InvalidShape
from .problem import OdeProblem

MAX_ITERATIONS = 50
SAFETY_FACTOR = 1.2
REL_CHANGE = 0.01


@njit(nogil=True)
def _power_method(rhs, t, y, g, F, h_max, v, uround):
    """Estimate the spectral radius of d(rhs)/dy at (t, y).

    ``v`` holds the warm-start direction on entry and is overwritten with the
    new direction (v - y). Returns (sigma, converged, iterations, rhs_evals).
    """
    n = y.size
    small = 1.0 / h_max
    ynrm = np.sqrt(np.sum(y * y))
    vnrm = np.sqrt(np.sum(v * v))

    if ynrm != 0.0 and vnrm != 0.0:
        dynrm = ynrm * np.sqrt(uround)
        w = y + v * (dynrm / vnrm)
    elif ynrm != 0.0:
        dynrm = ynrm * np.sqrt(uround)
        w = y * (1.0 + np.sqrt(uround))
    elif vnrm != 0.0:
        dynrm = uround
        w = v * (dynrm / vnrm)
    else:
        dynrm = uround
        w = np.full(n, uround)

    sigma = 0.0
    for it in range(1, MAX_ITERATIONS + 1):
        diff = rhs(t, w, g) - F
        dnrm = np.sqrt(np.sum(diff * diff))
        sigma_old = sigma
        sigma = dnrm / dynrm
        if it >= 2 and abs(sigma - sigma_old) <= max(sigma, small) * REL_CHANGE:
            v[:] = w - y
            return SAFETY_FACTOR * sigma, True, it, it
        if dnrm != 0.0:
            w = y + diff * (dynrm / dnrm)
        else:
            # zero response: flip one component to leave the null direction
            ind = it % n
            w[ind] = y[ind] - (w[ind] - y[ind])
    v[:] = w - y
    return SAFETY_FACTOR * sigma, False, MAX_ITERATIONS, MAX_ITERATIONS


@dataclass
class SpecRadResult:
    sigma: float
    eigenvector: np.ndarray
    converged: bool
    iterations: int


def power_method_spec_rad(problem: OdeProblem, t, y, g, F, h_max, v_warm, uround=2.22e-16):
    """Spectral radius estimate (already multiplied by the 1.2 safety factor).

    Inputs are not modified; the updated warm-start direction is returned in
    ``eigenvector``.
    """
    y = np.array(y, dtype=np.float64).reshape(-1)
    v = np.array(v_warm, dtype=np.float64).reshape(-1)
    if v.size != y.size:
        raise InvalidShape("warm-start vector length differs from state length")
    g = np.zeros(problem.param_dim) if g is None else np.array(g, dtype=np.float64)
    sigma, conv, iters, _ = _power_method(
        problem.rhs, float(t), y, g, np.array(F, dtype=np.float64), float(h_max), v, uround
    )
    return SpecRadResult(float(sigma), v, bool(conv), int(iters))


def gershgorin_bound(jacobian) -> float:
    """Maximum absolute row sum, an upper bound on the spectral radius."""
    J = np.asarray(jacobian, dtype=np.float64)
    if J.ndim != 2 or J.shape[0] != J.shape[1]:
        raise InvalidShape(f"expected a square matrix, got shape {J.shape}")
    return float(np.abs(J).sum(axis=1).max()) if J.size else 0.0


def numerical_jacobian(problem: OdeProblem, t, y, g=None, rel_step=1e-7) -> np.ndarray:
    """Central-difference Jacobian; used to feed gershgorin_bound in checks."""
    y = np.asarray(y, dtype=np.float64)
    g = np.zeros(problem.param_dim) if g is None else np.asarray(g, dtype=np.float64)
    J = np.empty((y.size, y.size))
    for k in range(y.size):
        dk = rel_step * max(1.0, abs(y[k]))
        e = np.zeros_like(y)
        e[k] = dk
        J[:, k] = (problem.rhs(t, y + e, g) - problem.rhs(t, y - e, g)) / (2 * dk)
    return J


__all__ = [
    "SpecRadResult",
    "power_method_spec_rad",
    "gershgorin_bound",
    "numerical_jacobian",
    "MAX_ITERATIONS",
]
