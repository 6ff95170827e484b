"""Benchmark problems: Pleiades seven-body, 1-D heat equation, and two
calibration systems with closed-form solutions."""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from importlib import resources
from typing import Callable, Optional

import numpy as np
from numba import njit

from .layout import BatchStates, pack
from .problem import OdeProblem

PLEIADES_DIM = 28
PLEIADES_MASSES = np.arange(1.0, 8.0)
PLEIADES_DATA = "pleiades_initial.txt"
PLEIADES_SHA256 = "3fbac67249e72a0804e09cb09f67264cfb4c699cc880d84804d1b8c9be8a1086"


@njit(nogil=True)
def pleiades_rhs(t, z, g):
    # z = (x1..x7, y1..y7, x1'..x7', y1'..y7')
    out = np.empty(28)
    for i in range(14):
        out[i] = z[14 + i]
    for i in range(7):
        ax = 0.0
        ay = 0.0
        xi = z[i]
        yi = z[7 + i]
        for j in range(7):
            if j == i:
                continue
            dx = z[j] - xi
            dy = z[7 + j] - yi
            r2 = dx * dx + dy * dy
            rij = r2 * math.sqrt(r2)
            ax += (j + 1.0) * dx / rij
            ay += (j + 1.0) * dy / rij
        out[14 + i] = ax
        out[21 + i] = ay
    return out


@njit(nogil=True)
def exp_decay_rhs(t, y, g):
    return -g[0] * y


@njit(nogil=True)
def harmonic_rhs(t, y, g):
    out = np.empty(2)
    out[0] = y[1]
    out[1] = -y[0]
    return out


def pleiades_problem() -> OdeProblem:
    return OdeProblem(PLEIADES_DIM, pleiades_rhs, name="pleiades")


def exp_decay_problem() -> OdeProblem:
    return OdeProblem(1, exp_decay_rhs, param_dim=1, name="expdecay")


def harmonic_problem() -> OdeProblem:
    return OdeProblem(2, harmonic_rhs, name="harmonic")


def heat_spectral_radius(n: int) -> float:
    dx = 1.0 / (n + 1)
    return 4.0 / dx**2 * math.sin(n * math.pi / (2 * (n + 1))) ** 2


def heat_problem(n: int = 64) -> OdeProblem:
    """Method-of-lines heat equation u_t = u_xx on (0, 1), u = 0 at both ends,
    with ``n`` interior points."""
    if n < 2:
        raise ValueError("need at least 2 interior points")
    inv_dx2 = float((n + 1) ** 2)
    sigma = heat_spectral_radius(n)

    @njit(nogil=True)
    def heat_rhs(t, u, g):
        out = np.empty(n)
        for i in range(n):
            left = u[i - 1] if i > 0 else 0.0
            right = u[i + 1] if i < n - 1 else 0.0
            out[i] = (left - 2.0 * u[i] + right) * inv_dx2
        return out

    return OdeProblem(n, heat_rhs, spec_rad_hint=lambda t, y, g: sigma, name="heat")


def heat_grid(n: int) -> np.ndarray:
    return np.arange(1, n + 1) / (n + 1)


def heat_stencil_matrix(n: int) -> np.ndarray:
    inv_dx2 = float((n + 1) ** 2)
    return inv_dx2 * (
        np.diag(np.full(n, -2.0)) + np.diag(np.ones(n - 1), 1) + np.diag(np.ones(n - 1), -1)
    )


# ---------------------------------------------------------------------------
# Pleiades initial data and invariants


def pleiades_initial_state(verify: bool = True) -> np.ndarray:
    """The 28 canonical initial values, read from the bundled data file."""
    raw = resources.files("batchode").joinpath("data", PLEIADES_DATA).read_bytes()
    if verify:
        digest = hashlib.sha256(raw).hexdigest()
        if digest != PLEIADES_SHA256:
            raise ValueError(f"{PLEIADES_DATA} checksum mismatch: {digest}")
    values = np.array([float(line) for line in raw.decode("ascii").split()])
    if values.size != PLEIADES_DIM:
        raise ValueError(f"{PLEIADES_DATA} holds {values.size} values, expected 28")
    return values


def pleiades_momentum(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z)
    return np.array([PLEIADES_MASSES @ z[14:21], PLEIADES_MASSES @ z[21:28]])


def pleiades_energy(z: np.ndarray) -> float:
    z = np.asarray(z)
    x, y, vx, vy = z[0:7], z[7:14], z[14:21], z[21:28]
    m = PLEIADES_MASSES
    kinetic = 0.5 * float(np.sum(m * (vx**2 + vy**2)))
    potential = 0.0
    for i in range(7):
        for j in range(i + 1, 7):
            potential -= m[i] * m[j] / math.hypot(x[i] - x[j], y[i] - y[j])
    return kinetic + potential


# ---------------------------------------------------------------------------
# Perturbed batches


def uniform_pm1(seed: int, count: int) -> np.ndarray:
    """``count`` uniforms in [-1, 1) from Philox4x64 keyed by ``seed``.

    Each raw 64-bit output x maps to 2 * (x >> 11) * 2**-53 - 1, so the
    stream depends only on the Philox counter sequence.
    """
    bits = np.random.Philox(key=int(seed)).random_raw(int(count))
    return (bits >> np.uint64(11)).astype(np.float64) * (2.0 * 2.0**-53) - 1.0


def perturb_initial_conditions(
    base, magnitude: float = 0.01, seed: int = 0, count: int = 1, params=None
) -> BatchStates:
    """Batch of ``count`` copies of ``base``, component j of system i scaled
    by (1 + u_ij * magnitude). Draws are taken system by system."""
    if not 0.0 <= magnitude <= 0.1:
        raise ValueError(f"perturbation magnitude must lie in [0, 0.1], got {magnitude}")
    if count < 1:
        raise ValueError("count must be positive")
    base = np.asarray(base, dtype=np.float64).reshape(-1)
    u = uniform_pm1(seed, count * base.size).reshape(count, base.size)
    states = base * (1.0 + u * magnitude)
    plist = None if params is None else [np.asarray(params, dtype=np.float64)] * count
    return pack(list(states), plist)


# ---------------------------------------------------------------------------
# Registry used by the command-line harness


@dataclass(frozen=True)
class Benchmark:
    problem: OdeProblem
    initial: np.ndarray
    params: Optional[np.ndarray] = None
    exact: Optional[Callable[[float, np.ndarray], np.ndarray]] = None


def _exp_decay_exact(t, y0):
    return np.asarray(y0) * math.exp(-t)


def _harmonic_exact(t, y0):
    q, p = y0
    return np.array([q * math.cos(t) + p * math.sin(t), p * math.cos(t) - q * math.sin(t)])


def benchmark(name: str, heat_points: int = 64) -> Benchmark:
    if name == "pleiades":
        return Benchmark(pleiades_problem(), pleiades_initial_state())
    if name == "heat":
        x = heat_grid(heat_points)
        return Benchmark(heat_problem(heat_points), np.sin(math.pi * x))
    if name == "expdecay":
        # unit rate so the closed form is y0 * exp(-t)
        return Benchmark(exp_decay_problem(), np.array([1.0]), np.array([1.0]), _exp_decay_exact)
    if name == "harmonic":
        return Benchmark(harmonic_problem(), np.array([1.0, 0.0]), None, _harmonic_exact)
    raise KeyError(name)


BENCHMARKS = ("pleiades", "heat", "expdecay", "harmonic")
