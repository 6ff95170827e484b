"""Fifth-order Runge-Kutta-Cash-Karp step with embedded fourth-order error
estimate, and the adaptive sub-stepping driver built on it."""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction as Fr

import numpy as np
from numba import njit

from .errors import InvalidInterval, StepSizeUnderflow
from .problem import IntegrationStats, OdeProblem, ToleranceSettings

# Exact rationals, rounded once to double.
A_EXACT = (Fr(0), Fr(1, 5), Fr(3, 10), Fr(3, 5), Fr(1), Fr(7, 8))
B_EXACT = (
    (),
    (Fr(1, 5),),
    (Fr(3, 40), Fr(9, 40)),
    (Fr(3, 10), Fr(-9, 10), Fr(6, 5)),
    (Fr(-11, 54), Fr(5, 2), Fr(-70, 27), Fr(35, 27)),
    (Fr(1631, 55296), Fr(175, 512), Fr(575, 13824), Fr(44275, 110592), Fr(253, 4096)),
)
C_EXACT = (Fr(37, 378), Fr(0), Fr(250, 621), Fr(125, 594), Fr(0), Fr(512, 1771))
CSTAR_EXACT = (
    Fr(2825, 27648),
    Fr(0),
    Fr(18575, 48384),
    Fr(13525, 55296),
    Fr(277, 14336),
    Fr(1, 4),
)


@dataclass(frozen=True)
class RkckTableau:
    a: np.ndarray
    b: np.ndarray  # 6 x 5, lower triangular
    c: np.ndarray
    cstar: np.ndarray

    @property
    def dc(self) -> np.ndarray:
        """Error weights c_i - c*_i, each rounded from the exact difference."""
        return np.array([float(c - cs) for c, cs in zip(C_EXACT, CSTAR_EXACT)])


def tableau() -> RkckTableau:
    b = np.zeros((6, 5))
    for i, row in enumerate(B_EXACT):
        b[i, : len(row)] = [float(x) for x in row]
    return RkckTableau(
        a=np.array([float(x) for x in A_EXACT]),
        b=b,
        c=np.array([float(x) for x in C_EXACT]),
        cstar=np.array([float(x) for x in CSTAR_EXACT]),
    )


_A2, _A3, _A4, _A5, _A6 = (float(x) for x in A_EXACT[1:])
_B21 = float(B_EXACT[1][0])
_B31, _B32 = (float(x) for x in B_EXACT[2])
_B41, _B42, _B43 = (float(x) for x in B_EXACT[3])
_B51, _B52, _B53, _B54 = (float(x) for x in B_EXACT[4])
_B61, _B62, _B63, _B64, _B65 = (float(x) for x in B_EXACT[5])
_C1, _C3, _C4, _C6 = (float(C_EXACT[i]) for i in (0, 2, 3, 5))
_DC1, _DC3, _DC4, _DC5, _DC6 = (float(C_EXACT[i] - CSTAR_EXACT[i]) for i in (0, 2, 3, 4, 5))


@njit(nogil=True)
def _rkck_step(rhs, t, y, g, F, h):
    k1 = h * F
    k2 = h * rhs(t + _A2 * h, y + _B21 * k1, g)
    k3 = h * rhs(t + _A3 * h, y + _B31 * k1 + _B32 * k2, g)
    k4 = h * rhs(t + _A4 * h, y + _B41 * k1 + _B42 * k2 + _B43 * k3, g)
    k5 = h * rhs(t + _A5 * h, y + _B51 * k1 + _B52 * k2 + _B53 * k3 + _B54 * k4, g)
    k6 = h * rhs(
        t + _A6 * h, y + _B61 * k1 + _B62 * k2 + _B63 * k3 + _B64 * k4 + _B65 * k5, g
    )
    y_next = y + (_C1 * k1 + _C3 * k3 + _C4 * k4 + _C6 * k6)
    y_err = _DC1 * k1 + _DC3 * k3 + _DC4 * k4 + _DC5 * k5 + _DC6 * k6
    return y_next, y_err


@njit(nogil=True)
def _rkck_error_norm(y, F, y_err, h, eps, tiny):
    err = 0.0
    nan_flag = False
    for i in range(y.size):
        if not np.isfinite(y_err[i]):
            nan_flag = True
        err = max(err, abs(y_err[i] / (abs(y[i]) + abs(h * F[i]) + tiny)))
    return err / eps, nan_flag


@njit(nogil=True)
def _rkck_adjust_step(h, err, nan_flag, h_min, h_max, tol):
    """Returns (accepted, h_new, underflow)."""
    bad = nan_flag or not np.isfinite(err)
    if bad or err > 1.0:
        if bad:
            h_new = tol.p1 * h
        else:
            h_new = max(tol.safety * h * err**tol.pshrnk, tol.p1 * h)
        return False, h_new, h_new < h_min
    if err > tol.errcon:
        h_new = tol.safety * h * err**tol.pgrow
    else:
        h_new = 5.0 * h
    return True, max(h_min, min(h_max, h_new)), False


@njit(nogil=True)
def _log_step(hist, k, t, h, err, y):
    hist[k, 0] = t
    hist[k, 1] = h
    hist[k, 2] = err
    hist[k, 3] = np.max(np.abs(y))


@njit(nogil=True)
def _rkck_driver(rhs, t, t_end, y, g, tol, hist):
    """Integrate one system from t to t_end.

    Returns (y, accepted, rejected, rhs_evals, h_min_seen, h_max_seen, underflow).
    On underflow y is the last accepted state. The first len(hist) accepted
    steps are logged to ``hist`` as rows (t, h, err, max|y|).
    """
    h_max = abs(t_end - t)
    h_min = tol.h_min_floor
    h = 0.5 * h_max
    y = y.copy()
    n_acc = 0
    n_rej = 0
    n_f = 0
    h_lo = np.inf
    h_hi = 0.0
    underflow = False
    F = rhs(t, y, g)
    n_f += 1
    # stop once the remainder is below one ulp of t_end
    while t_end - t > tol.uround * abs(t_end):
        h = min(t_end - t, h)
        y_tmp, y_err = _rkck_step(rhs, t, y, g, F, h)
        n_f += 5
        err, nan_flag = _rkck_error_norm(y, F, y_err, h, tol.eps, tol.tiny)
        accepted, h_new, under = _rkck_adjust_step(h, err, nan_flag, h_min, h_max, tol)
        if accepted:
            t += h
            y = y_tmp
            n_acc += 1
            h_lo = min(h_lo, h)
            h_hi = max(h_hi, h)
            if n_acc <= hist.shape[0]:
                _log_step(hist, n_acc - 1, t, h, err, y)
            if t_end - t > tol.uround * abs(t_end):
                F = rhs(t, y, g)
                n_f += 1
        else:
            n_rej += 1
            if under:
                underflow = True
                break
        h = h_new
    return y, n_acc, n_rej, n_f, h_lo, h_hi, underflow


@njit(nogil=True)
def _rkck_fixed(rhs, t, y, g, h, n_steps):
    y = y.copy()
    for _ in range(n_steps):
        F = rhs(t, y, g)
        y, _err = _rkck_step(rhs, t, y, g, F, h)
        t += h
    return y


# ---------------------------------------------------------------------------
# Python-facing wrappers


@dataclass
class RkckStepResult:
    y_next: np.ndarray
    y_err: np.ndarray


def _vec(x) -> np.ndarray:
    return np.ascontiguousarray(x, dtype=np.float64).reshape(-1)


def _params(problem: OdeProblem, g) -> np.ndarray:
    return np.zeros(problem.param_dim) if g is None else _vec(g)


def rkck_step(problem: OdeProblem, t, y, g, F, h) -> RkckStepResult:
    """One RKCK step of size ``h`` from (t, y); ``F`` must be rhs(t, y, g)."""
    y_next, y_err = _rkck_step(
        problem.rhs, float(t), _vec(y), _params(problem, g), _vec(F), float(h)
    )
    return RkckStepResult(y_next, y_err)


def rkck_error_norm(y, F, y_err, h, eps, tiny=1.0e-30) -> tuple[float, bool]:
    err, nan_flag = _rkck_error_norm(_vec(y), _vec(F), _vec(y_err), float(h), eps, tiny)
    return float(err), bool(nan_flag)


def rkck_adjust_step(
    h, err, nan_flag=False, h_min=0.0, h_max=math.inf, tol: ToleranceSettings = None
) -> tuple[bool, float]:
    """Accept/reject decision and next step size.

    Raises StepSizeUnderflow when a rejection would push h below ``h_min``.
    """
    tol = tol or ToleranceSettings()
    accepted, h_new, under = _rkck_adjust_step(
        float(h), float(err), bool(nan_flag), float(h_min), float(h_max), tol
    )
    if under:
        raise StepSizeUnderflow(f"step size {h_new:.3e} below minimum {h_min:.3e}")
    return bool(accepted), float(h_new)


def rkck_driver(
    problem: OdeProblem, t, t_end, y, g=None, tol: ToleranceSettings = None, history=None
) -> tuple[np.ndarray, IntegrationStats]:
    """Adaptive RKCK integration of one system over [t, t_end].

    ``history``, if given, is a float array of shape (cap, 4) that receives
    (t, h, err, max|y|) for the first ``cap`` accepted steps.
    """
    if not t_end > t:
        raise InvalidInterval(f"t_end ({t_end}) must exceed t ({t})")
    tol = (tol or ToleranceSettings()).validate()
    hist = np.empty((0, 4)) if history is None else history
    y_out, n_acc, n_rej, n_f, h_lo, h_hi, under = _rkck_driver(
        problem.rhs, float(t), float(t_end), _vec(y), _params(problem, g), tol, hist
    )
    stats = IntegrationStats(n_acc, n_rej, n_f, 0, h_lo, h_hi, under)
    return y_out, stats


def rkck_fixed(problem: OdeProblem, t0, t_end, y, g=None, *, n_steps: int) -> np.ndarray:
    """Integrate with ``n_steps`` equal steps and no error control."""
    h = (float(t_end) - float(t0)) / n_steps
    return _rkck_fixed(problem.rhs, float(t0), _vec(y), _params(problem, g), h, int(n_steps))
