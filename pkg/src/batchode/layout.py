"""System-major interleaved storage for many independent state vectors.

Variable ``j`` of system ``i`` lives at flat index ``i + num_systems * j``, so
the same unknown of consecutive systems is contiguous in memory.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidShape


@dataclass
class BatchStates:
    num_systems: int
    dim: int
    values: np.ndarray
    params: np.ndarray = None
    param_dim: int = 0

    def __post_init__(self):
        self.values = np.ascontiguousarray(self.values, dtype=np.float64).reshape(-1)
        if self.num_systems < 1 or self.dim < 1:
            raise InvalidShape("num_systems and dim must be positive")
        if self.values.size != self.num_systems * self.dim:
            raise InvalidShape(
                f"values has {self.values.size} entries, expected "
                f"{self.num_systems} x {self.dim}"
            )
        if self.params is None:
            self.params = np.zeros(self.num_systems * self.param_dim)
        self.params = np.ascontiguousarray(self.params, dtype=np.float64).reshape(-1)
        if self.params.size != self.num_systems * self.param_dim:
            raise InvalidShape(
                f"params has {self.params.size} entries, expected "
                f"{self.num_systems} x {self.param_dim}"
            )

    def get(self, i: int, j: int) -> float:
        return float(self.values[i + self.num_systems * j])

    def system(self, i: int) -> np.ndarray:
        return self.values[i :: self.num_systems].copy()

    def system_params(self, i: int) -> np.ndarray:
        return self.params[i :: self.num_systems].copy()

    def as_matrix(self) -> np.ndarray:
        """Row ``i`` is the state of system ``i`` (a copy)."""
        return self.values.reshape(self.dim, self.num_systems).T.copy()

    def copy(self) -> "BatchStates":
        return BatchStates(
            self.num_systems, self.dim, self.values.copy(), self.params.copy(), self.param_dim
        )


def _interleave(rows, what: str) -> tuple[int, int, np.ndarray]:
    rows = [np.asarray(r, dtype=np.float64).reshape(-1) for r in rows]
    if not rows:
        raise InvalidShape(f"need at least one {what} vector")
    width = rows[0].size
    if any(r.size != width for r in rows):
        raise InvalidShape(f"ragged {what} vectors")
    matrix = np.stack(rows) if width else np.zeros((len(rows), 0))
    # column-major flattening of the (systems x vars) matrix
    return len(rows), width, np.ascontiguousarray(matrix.T).reshape(-1)


def pack(vectors, params=None) -> BatchStates:
    """Pack per-system state vectors (and optional parameter vectors)."""
    n, dim, flat = _interleave(vectors, "state")
    if dim < 1:
        raise InvalidShape("state vectors must have length >= 1")
    if params is None:
        return BatchStates(n, dim, flat)
    n_p, pdim, pflat = _interleave(params, "parameter")
    if n_p != n:
        raise InvalidShape(f"{n_p} parameter vectors for {n} systems")
    return BatchStates(n, dim, flat, pflat, pdim)


def unpack(batch: BatchStates) -> list[np.ndarray]:
    if batch.values.size != batch.num_systems * batch.dim:
        raise InvalidShape("malformed batch")
    matrix = batch.values.reshape(batch.dim, batch.num_systems)
    return [matrix[:, i].copy() for i in range(batch.num_systems)]
