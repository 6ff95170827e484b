"""Second-order Runge-Kutta-Chebyshev integration for moderately stiff systems.

An s-stage RKC step is explicit but its real stability interval grows like
s**2, so the stage count is chosen per step from the spectral radius
estimate instead of shrinking the step size.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .errors import InvalidInterval, InvalidStageCount
from .problem import IntegrationStats, OdeProblem, ToleranceSettings
from .rkck import _log_step
from .specrad import _power_method

STABILITY_CONST = 1.54
SPEC_RAD_INTERVAL = 25

# slots of the per-system work vector
ERR_OLD, H_OLD, H_CUR, SPEC_RAD, EIG = 0, 1, 2, 3, 4


@njit(nogil=True)
def _chebyshev(j, x):
    """T_j(x), T'_j(x), T''_j(x) by the three-term recurrence."""
    t0, t1 = 1.0, x
    d0, d1 = 0.0, 1.0
    dd0, dd1 = 0.0, 0.0
    if j == 0:
        return t0, d0, dd0
    for _ in range(2, j + 1):
        t2 = 2.0 * x * t1 - t0
        d2 = 2.0 * t1 + 2.0 * x * d1 - d0
        dd2 = 4.0 * d1 + 2.0 * x * dd1 - dd0
        t0, t1 = t1, t2
        d0, d1 = d1, d2
        dd0, dd1 = dd1, dd2
    return t1, d1, dd1


@njit(nogil=True)
def _coefficients(s, kappa):
    """Arrays indexed by stage j = 0..s: mu, nu, mu_t, gamma_t, c, b, a.

    Also returns omega0, omega1.
    """
    w0 = 1.0 + kappa / (s * s)
    T = np.empty(s + 1)
    dT = np.empty(s + 1)
    ddT = np.empty(s + 1)
    T[0], dT[0], ddT[0] = 1.0, 0.0, 0.0
    T[1], dT[1], ddT[1] = w0, 1.0, 0.0
    for j in range(2, s + 1):
        T[j] = 2.0 * w0 * T[j - 1] - T[j - 2]
        dT[j] = 2.0 * T[j - 1] + 2.0 * w0 * dT[j - 1] - dT[j - 2]
        ddT[j] = 4.0 * dT[j - 1] + 2.0 * w0 * ddT[j - 1] - ddT[j - 2]
    w1 = dT[s] / ddT[s]

    b = np.empty(s + 1)
    for j in range(2, s + 1):
        b[j] = ddT[j] / (dT[j] * dT[j])
    # b1 = b2 keeps stage 1 at the time c1 = c2 / T2'(w0) its increment implies
    b[0] = b[2]
    b[1] = b[2]
    a = 1.0 - b * T

    mu = np.zeros(s + 1)
    nu = np.zeros(s + 1)
    mu_t = np.zeros(s + 1)
    gamma_t = np.zeros(s + 1)
    mu_t[1] = b[1] * w1
    for j in range(2, s + 1):
        mu[j] = 2.0 * b[j] * w0 / b[j - 1]
        nu[j] = -b[j] / b[j - 2]
        mu_t[j] = 2.0 * b[j] * w1 / b[j - 1]
        gamma_t[j] = -a[j - 1] * mu_t[j]

    c = np.zeros(s + 1)
    for j in range(2, s):
        c[j] = w1 * ddT[j] / dT[j]
    c[2] = w1 * ddT[2] / dT[2]  # needed for c1 even when s = 2
    c[1] = c[2] / dT[2]
    c[s] = 1.0
    return mu, nu, mu_t, gamma_t, c, b, a, w0, w1


@njit(nogil=True)
def _rkc_step(rhs, t, y, g, F, h, s, mu, nu, mu_t, gamma_t, c):
    # live state-length arrays: y, F, w1, w2 and the current stage derivative
    n = y.size
    w1 = np.empty(n)
    w2 = np.empty(n)
    for i in range(n):
        w2[i] = y[i]
        w1[i] = y[i] + mu_t[1] * h * F[i]
    for j in range(2, s + 1):
        f = rhs(t + c[j - 1] * h, w1, g)
        # (1 - mu - nu) y + mu w1 + nu w2, written so that w1 = w2 = y stays exact
        for i in range(n):
            w2[i] = (
                y[i]
                + mu[j] * (w1[i] - y[i])
                + nu[j] * (w2[i] - y[i])
                + mu_t[j] * h * f[i]
                + gamma_t[j] * h * F[i]
            )
        w1, w2 = w2, w1
    return w1


@njit(nogil=True)
def _rkc_error_norm(y_old, y_new, f_old, f_new, h, abs_tol, rel_tol):
    acc = 0.0
    n = y_old.size
    for i in range(n):
        est = 0.8 * (y_old[i] - y_new[i]) + 0.4 * h * (f_old[i] + f_new[i])
        est /= abs_tol + rel_tol * max(abs(y_new[i]), abs(y_old[i]))
        acc += est * est
    return math.sqrt(acc / n)


@njit(nogil=True)
def _max_stages(rel_tol, uround):
    m = int(round(math.sqrt(rel_tol / (10.0 * uround))))
    return max(m, 2)


@njit(nogil=True)
def _rkc_stage_count(h, sigma, m_max):
    s = 1 + int(math.sqrt(STABILITY_CONST * h * sigma + 1.0))
    if s > m_max:
        s = m_max
        h = (s * s - 1) / (STABILITY_CONST * sigma)
    return s, h


@njit(nogil=True)
def _rkc_initial_step(rhs, t, y, g, F, sigma, h_max, h_min, abs_tol, rel_tol, p1):
    """Returns (h0, err of the tentative Euler probe)."""
    h = h_max
    if sigma * h > 1.0:
        h = 1.0 / sigma
    h = max(h, h_min)
    f_probe = rhs(t + h, y + h * F, g)
    acc = 0.0
    for i in range(y.size):
        est = (f_probe[i] - F[i]) / (abs_tol + rel_tol * abs(y[i]))
        acc += est * est
    err = h * math.sqrt(acc / y.size)
    if p1 * h < h_max * math.sqrt(err):
        h = max(p1 * h / math.sqrt(err), h_min)
    else:
        h = h_max
    return h, err


@njit(nogil=True)
def _rkc_next_step(err, err_old, h, h_old, first, h_min, h_max, uround, p1):
    """Returns (accepted, h_new)."""
    if not np.isfinite(err):
        return False, p1 * h
    if err > 1.0:
        return False, 0.8 * h / err ** (1.0 / 3.0)
    err = max(err, uround)
    fac = 10.0
    if first:
        temp2 = err ** (1.0 / 3.0)
        if 0.8 < fac * temp2:
            fac = 0.8 / temp2
    else:
        temp1 = 0.8 * h * err_old ** (1.0 / 3.0)
        temp2 = h_old * err ** (2.0 / 3.0)
        if temp1 < fac * temp2:
            fac = temp1 / temp2
    h_new = h * max(p1, fac)
    return True, max(h_min, min(h_max, h_new))


@njit(nogil=True)
def _rkc_driver(rhs, t, t_end, y, g, tol, work, hist):
    """Integrate one system; ``work`` is the 4 + dim controller state and
    ``hist`` logs accepted steps as in the RKCK driver.

    Returns (y, accepted, rejected, rhs_evals, spec_rad_evals, h_min_seen,
    h_max_seen, underflow).
    """
    uround = tol.uround
    m_max = _max_stages(tol.rel_tol, uround)
    h_max = abs(t_end - t)
    y_n = y.copy()
    F_n = rhs(t, y_n, g)
    n_f = 1
    n_sr = 0
    n_acc = 0
    n_rej = 0
    h_lo = np.inf
    h_hi = 0.0
    underflow = False
    eig = work[EIG:]
    if work[H_CUR] < uround:
        eig[:] = F_n

    need_sr = True
    s_cached = -1
    mu = nu = mu_t = gamma_t = c = np.empty(0)
    while t_end - t > uround * abs(t_end):
        h_min = 10.0 * uround * max(abs(t), h_max)
        if 1.1 * work[H_CUR] >= abs(t_end - t):
            work[H_CUR] = abs(t_end - t)
        if need_sr:
            sigma, _conv, _it, nfe = _power_method(rhs, t, y_n, g, F_n, h_max, eig, uround)
            work[SPEC_RAD] = sigma
            n_f += nfe
            n_sr += 1
            need_sr = False
        if work[H_CUR] < uround:
            h0, _err0 = _rkc_initial_step(
                rhs, t, y_n, g, F_n, work[SPEC_RAD], h_max, h_min, tol.abs_tol, tol.rel_tol, tol.p1
            )
            n_f += 1
            work[H_CUR] = h0

        s, h = _rkc_stage_count(work[H_CUR], work[SPEC_RAD], m_max)
        work[H_CUR] = h
        if s != s_cached:
            mu, nu, mu_t, gamma_t, c, _b, _a, _w0, _w1 = _coefficients(s, tol.kappa)
            s_cached = s
        y_new = _rkc_step(rhs, t, y_n, g, F_n, h, s, mu, nu, mu_t, gamma_t, c)
        F_new = rhs(t + h, y_new, g)
        n_f += s
        err = _rkc_error_norm(y_n, y_new, F_n, F_new, h, tol.abs_tol, tol.rel_tol)

        accepted, h_new = _rkc_next_step(
            err, work[ERR_OLD], h, work[H_OLD], work[H_OLD] < uround, h_min, h_max, uround, tol.p1
        )
        if not accepted:
            n_rej += 1
            if h_new < h_min:
                underflow = True
                break
            work[H_CUR] = h_new
            need_sr = True
            continue

        t += h
        n_acc += 1
        h_lo = min(h_lo, h)
        h_hi = max(h_hi, h)
        if n_acc <= hist.shape[0]:
            _log_step(hist, n_acc - 1, t, h, err, y_new)
        work[ERR_OLD] = max(err, uround)
        work[H_OLD] = h
        y_n = y_new
        F_n = F_new
        work[H_CUR] = h_new
        if n_acc % SPEC_RAD_INTERVAL == 0:
            need_sr = True
    return y_n, n_acc, n_rej, n_f, n_sr, h_lo, h_hi, underflow


@njit(nogil=True)
def _rkc_fixed(rhs, t, y, g, h, n_steps, s, kappa):
    mu, nu, mu_t, gamma_t, c, _b, _a, _w0, _w1 = _coefficients(s, kappa)
    y = y.copy()
    for _ in range(n_steps):
        F = rhs(t, y, g)
        y = _rkc_step(rhs, t, y, g, F, h, s, mu, nu, mu_t, gamma_t, c)
        t += h
    return y


# ---------------------------------------------------------------------------
# Python-facing wrappers


@dataclass(frozen=True)
class ChebyshevEval:
    T: float
    dT: float
    ddT: float


@dataclass(frozen=True)
class RkcCoefficients:
    """Per-stage coefficients of an s-stage RKC step.

    Arrays are indexed by stage number j = 0..s; entries a formula does not
    define (e.g. ``mu[0]``, ``mu[1]``) are zero.
    """

    s: int
    kappa: float
    omega0: float
    omega1: float
    mu: np.ndarray
    nu: np.ndarray
    mu_t: np.ndarray
    gamma_t: np.ndarray
    b: np.ndarray
    a: np.ndarray
    c: np.ndarray


@dataclass
class RkcWorkspace:
    """Named view of the per-system controller state vector."""

    err_old: float
    h_old: float
    h: float
    spec_rad: float
    eigenvector: np.ndarray

    @classmethod
    def from_array(cls, work: np.ndarray) -> "RkcWorkspace":
        return cls(
            float(work[ERR_OLD]),
            float(work[H_OLD]),
            float(work[H_CUR]),
            float(work[SPEC_RAD]),
            np.array(work[EIG:]),
        )

    def is_unset(self, uround: float = 2.22e-16) -> bool:
        return self.h < uround


def new_workspace(dim: int, num_systems: int | None = None) -> np.ndarray:
    """Zeroed ("unset") controller state, one row per system if requested."""
    if num_systems is None:
        return np.zeros(EIG + dim)
    return np.zeros((num_systems, EIG + dim))


def chebyshev_eval(j: int, x: float) -> ChebyshevEval:
    if j < 0:
        raise ValueError("degree must be nonnegative")
    return ChebyshevEval(*_chebyshev(int(j), float(x)))


def rkc_coefficients(s: int, kappa: float = 2.0 / 13.0) -> RkcCoefficients:
    if int(s) != s or s < 2:
        raise InvalidStageCount(f"RKC needs at least 2 stages, got {s}")
    if kappa < 0:
        raise ValueError("kappa must be nonnegative")
    mu, nu, mu_t, gamma_t, c, b, a, w0, w1 = _coefficients(int(s), float(kappa))
    return RkcCoefficients(int(s), float(kappa), w0, w1, mu, nu, mu_t, gamma_t, b, a, c)


def _vec(x) -> np.ndarray:
    return np.ascontiguousarray(x, dtype=np.float64).reshape(-1)


def _params(problem, g):
    return np.zeros(problem.param_dim) if g is None else _vec(g)


def rkc_step(problem: OdeProblem, t, y, g, F, h, s, kappa=2.0 / 13.0) -> np.ndarray:
    k = rkc_coefficients(s, kappa)
    return _rkc_step(
        problem.rhs, float(t), _vec(y), _params(problem, g), _vec(F), float(h),
        k.s, k.mu, k.nu, k.mu_t, k.gamma_t, k.c,
    )


def rkc_error_norm(y_old, y_new, f_old, f_new, h, abs_tol, rel_tol) -> float:
    return float(
        _rkc_error_norm(
            _vec(y_old), _vec(y_new), _vec(f_old), _vec(f_new), float(h), abs_tol, rel_tol
        )
    )


def max_stages(rel_tol: float, uround: float = 2.22e-16) -> int:
    return int(_max_stages(rel_tol, uround))


def rkc_stage_count(h, sigma, rel_tol, uround=2.22e-16) -> tuple[int, float]:
    """Stage count for step ``h`` and spectral radius ``sigma``.

    When the count would exceed the cap the cap is used and ``h`` is reduced
    to the largest step that cap can stabilise.
    """
    s, h = _rkc_stage_count(float(h), float(sigma), _max_stages(rel_tol, uround))
    return int(s), float(h)


def rkc_initial_step(
    problem: OdeProblem, t, y, g, F, sigma, h_max, h_min, tol: ToleranceSettings = None
) -> tuple[float, float]:
    tol = tol or ToleranceSettings()
    h, err = _rkc_initial_step(
        problem.rhs, float(t), _vec(y), _params(problem, g), _vec(F), float(sigma),
        float(h_max), float(h_min), tol.abs_tol, tol.rel_tol, tol.p1,
    )
    return float(h), float(err)


def rkc_next_step(
    err, err_old, h, h_old, first_accepted, h_min=0.0, h_max=math.inf, uround=2.22e-16, p1=0.1
) -> tuple[bool, float]:
    accepted, h_new = _rkc_next_step(
        float(err), float(err_old), float(h), float(h_old), bool(first_accepted),
        float(h_min), float(h_max), uround, p1,
    )
    return bool(accepted), float(h_new)


def rkc_driver(
    problem: OdeProblem,
    t,
    t_end,
    y,
    g=None,
    tol: ToleranceSettings = None,
    workspace=None,
    history=None,
) -> tuple[np.ndarray, IntegrationStats]:
    """Adaptive RKC integration of one system over [t, t_end].

    ``workspace`` defaults to a fresh (unset) state; pass an array from
    :func:`new_workspace` to inspect the controller state afterwards.
    ``history`` works as in :func:`batchode.rkck.rkck_driver`.
    """
    if not t_end > t:
        raise InvalidInterval(f"t_end ({t_end}) must exceed t ({t})")
    tol = (tol or ToleranceSettings()).validate()
    work = new_workspace(problem.dim) if workspace is None else workspace
    y_out, n_acc, n_rej, n_f, n_sr, h_lo, h_hi, under = _rkc_driver(
        problem.rhs, float(t), float(t_end), _vec(y), _params(problem, g), tol, work,
        np.empty((0, 4)) if history is None else history,
    )
    return y_out, IntegrationStats(n_acc, n_rej, n_f, n_sr, h_lo, h_hi, under)


def rkc_fixed(
    problem: OdeProblem, t0, t_end, y, g=None, *, n_steps: int, s: int, kappa=2.0 / 13.0
) -> np.ndarray:
    """Integrate with ``n_steps`` equal steps of a fixed ``s``-stage RKC."""
    if s < 2:
        raise InvalidStageCount(f"RKC needs at least 2 stages, got {s}")
    h = (float(t_end) - float(t0)) / n_steps
    return _rkc_fixed(
        problem.rhs, float(t0), _vec(y), _params(problem, g), h, int(n_steps), int(s), float(kappa)
    )
