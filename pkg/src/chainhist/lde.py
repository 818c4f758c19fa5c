"""Discretized linear dynamics dx/dt = M x + c.

Two equivalent solution routes are provided: explicit forward-Euler stepping
(:func:`euler_step_history`) and assembly of the block lower-triangular
system A x = b followed by exact forward substitution
(:func:`assemble_system` / :func:`solve_history`).  The system route also
supports delayed-influence memory blocks and trailing copy rows that
replicate a chosen timestep's state (:func:`pad_for_time`).

Note on b: the forcing blocks are stored as h*c (not bare c) so that forward
substitution reproduces the Euler update x_{l+1} = x_l + h (M x_l + c)
exactly; the step-size scaling is part of the discretization.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .errors import NumericalError, ValidationError
from .models import RateMatrix


def _as_operator(matrix) -> sp.csr_array:
    if isinstance(matrix, RateMatrix):
        return sp.csr_array(matrix.matrix)
    if sp.issparse(matrix):
        return sp.csr_array(matrix).astype(np.float64)
    arr = np.asarray(matrix, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise ValidationError(f"matrix must be square, got shape {arr.shape}")
    return sp.csr_array(arr)


@dataclass(frozen=True)
class OdeProblem:
    """One discretization of dx/dt = M x + c over [0, t_max] in T steps.

    ``matrix`` may be a :class:`~chainhist.models.RateMatrix`, any scipy
    sparse matrix, or a dense square array.  ``t_offset`` only labels the
    time axis of the outputs (useful when the problem continues a warm-up
    run); the dynamics are unaffected.
    """

    matrix: object
    x0: np.ndarray
    t_max: float
    steps: int
    forcing: np.ndarray | None = None
    t_offset: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "x0", np.asarray(self.x0, dtype=np.float64))
        if self.forcing is not None:
            object.__setattr__(self, "forcing", np.asarray(self.forcing, dtype=np.float64))
        if self.steps < 1:
            raise ValidationError(f"steps must be >= 1, got {self.steps}")
        if not self.t_max > 0:
            raise ValidationError(f"t_max must be > 0, got {self.t_max}")
        op = self.operator
        if self.x0.shape != (op.shape[0],):
            raise ValidationError(
                f"x0 has shape {self.x0.shape}, expected ({op.shape[0]},) to match the matrix"
            )
        if self.forcing is not None and self.forcing.shape != self.x0.shape:
            raise ValidationError("forcing vector must match the state dimension")

    @cached_property
    def operator(self) -> sp.csr_array:
        return _as_operator(self.matrix)

    @property
    def h(self) -> float:
        return self.t_max / self.steps

    @property
    def dimension(self) -> int:
        return self.operator.shape[0]

    @property
    def model_hash(self) -> str | None:
        return self.matrix.content_hash() if isinstance(self.matrix, RateMatrix) else None


@dataclass
class HistoryMatrix:
    """N x (T+1) matrix whose column l is the state at time t_offset + l h."""

    data: np.ndarray
    h: float
    t_offset: float = 0.0
    model_hash: str | None = None

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.data.ndim != 2:
            raise ValidationError("history data must be two-dimensional")

    @property
    def n_states(self) -> int:
        return self.data.shape[0]

    @property
    def n_steps(self) -> int:
        return self.data.shape[1] - 1

    @property
    def times(self) -> np.ndarray:
        return self.t_offset + self.h * np.arange(self.data.shape[1])

    def column(self, step: int) -> np.ndarray:
        return self.data[:, step]


@dataclass
class NormalizedHistory:
    """Unit-Frobenius-norm history with per-timestep squared norms retained.

    ``timestep_square_norms[l]`` is Z_l = ||x_l||^2 of the *unnormalized*
    input, and ``norm`` its global flattened 2-norm, so the Z_l sum to
    ``norm**2`` exactly.
    """

    data: np.ndarray
    timestep_square_norms: np.ndarray
    norm: float
    h: float
    t_offset: float = 0.0
    model_hash: str | None = None


@dataclass
class LinearSystem:
    """Block lower-triangular one-step system with identity diagonal blocks.

    Rows 1..euler_steps carry ``step_block`` = -(I + h M) on the first
    subdiagonal (plus any memory blocks further left); ``pad_count`` trailing
    rows carry -I, each copying the previous block's state forward.  The full
    sparse matrix is available as :attr:`matrix`.
    """

    block_dim: int
    euler_steps: int
    step_block: sp.csr_array
    b: np.ndarray
    h: float
    memory_blocks: tuple[tuple[int, sp.csr_array], ...] = ()
    pad_count: int = 0
    t_offset: float = 0.0
    model_hash: str | None = None

    @property
    def n_blocks(self) -> int:
        return self.euler_steps + 1 + self.pad_count

    @property
    def shape(self) -> tuple[int, int]:
        size = self.n_blocks * self.block_dim
        return (size, size)

    def b_block(self, i: int) -> np.ndarray:
        return self.b[i * self.block_dim : (i + 1) * self.block_dim]

    @property
    def matrix(self) -> sp.csr_array:
        """Materialize the full sparse block matrix."""
        N, B = self.block_dim, self.n_blocks
        rows = [np.arange(B * N, dtype=np.int64)]
        cols = [np.arange(B * N, dtype=np.int64)]
        data = [np.ones(B * N)]

        def tile(block: sp.csr_array, row_blocks: np.ndarray, lag: int):
            coo = sp.coo_array(block)
            if coo.nnz == 0 or row_blocks.size == 0:
                return
            row_off = (row_blocks * N)[:, None]
            col_off = ((row_blocks - lag) * N)[:, None]
            rows.append((coo.row[None, :] + row_off).ravel())
            cols.append((coo.col[None, :] + col_off).ravel())
            data.append(np.tile(coo.data, row_blocks.size))

        tile(self.step_block, np.arange(1, self.euler_steps + 1), 1)
        for lag, block in self.memory_blocks:
            tile(block, np.arange(lag, self.euler_steps + 1), lag)
        if self.pad_count:
            pad_rows = np.arange(self.euler_steps + 1, B, dtype=np.int64)
            idx = (pad_rows * N)[:, None] + np.arange(N)[None, :]
            rows.append(idx.ravel())
            cols.append((idx - N).ravel())
            data.append(np.full(self.pad_count * N, -1.0))

        out = sp.csr_array(
            (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))),
            shape=self.shape,
        )
        out.eliminate_zeros()
        return out


def euler_step_history(problem: OdeProblem) -> HistoryMatrix:
    """Explicit stepping x_{l+1} = x_l + h (M x_l + c); returns T+1 columns."""
    op = problem.operator
    h = problem.h
    c = problem.forcing
    data = np.zeros((problem.dimension, problem.steps + 1), order="F")
    x = problem.x0.copy()
    data[:, 0] = x
    # overflow surfaces through the explicit finite check below, not warnings
    with np.errstate(over="ignore", invalid="ignore"):
        for step in range(problem.steps):
            if c is None:
                x = x + h * (op @ x)
            else:
                x = x + h * (op @ x + c)
            data[:, step + 1] = x
    _check_finite(data)
    return HistoryMatrix(data, h, problem.t_offset, problem.model_hash)


def _check_finite(data: np.ndarray):
    finite = np.isfinite(data)
    if not finite.all():
        step = int(np.argmax(~finite.all(axis=0)))
        raise NumericalError(f"non-finite values appeared at step {step}", step=step)


def assemble_system(problem: OdeProblem, memory=None) -> LinearSystem:
    """Build the one-step block system whose solution stacks the history.

    ``memory`` is an optional sequence of ``(lag, kernel)`` pairs adding
    delayed influence of x_{i-lag} on the update at block i, realized as a
    -h*kernel block on the lag-th subdiagonal.  Lag 1 is the Euler block
    itself, so lags must lie in [2, T]; kernels at the same lag add up.
    Zero kernels leave the system identical to the memoryless one.
    """
    op = problem.operator
    N = problem.dimension
    h = problem.h
    step_block = sp.csr_array(-(sp.identity(N, format="csr") + h * op))

    merged: dict[int, sp.csr_array] = {}
    for lag, kernel in memory or ():
        lag = int(lag)
        if lag < 2:
            raise ValidationError(f"memory lag must be >= 2 (lag 1 is the Euler block), got {lag}")
        if lag > problem.steps:
            raise ValidationError(f"memory lag {lag} exceeds the step count {problem.steps}")
        block = _as_operator(kernel)
        if block.shape != (N, N):
            raise ValidationError(f"memory kernel must be {N}x{N}, got {block.shape}")
        scaled = sp.csr_array(-h * block)
        merged[lag] = scaled if lag not in merged else sp.csr_array(merged[lag] + scaled)

    b = np.zeros((problem.steps + 1) * N)
    b[:N] = problem.x0
    if problem.forcing is not None:
        b[N:] = np.tile(h * problem.forcing, problem.steps)
    return LinearSystem(
        block_dim=N,
        euler_steps=problem.steps,
        step_block=step_block,
        b=b,
        h=h,
        memory_blocks=tuple(sorted(merged.items())),
        t_offset=problem.t_offset,
        model_hash=problem.model_hash,
    )


def solve_history(system: LinearSystem) -> HistoryMatrix:
    """Exact block forward substitution on the unit-lower-triangular system."""
    N = system.block_dim
    data = np.zeros((N, system.n_blocks), order="F")
    data[:, 0] = system.b_block(0)
    for i in range(1, system.euler_steps + 1):
        x = system.b_block(i) - system.step_block @ data[:, i - 1]
        for lag, block in system.memory_blocks:
            if i - lag >= 0:
                x = x - block @ data[:, i - lag]
        data[:, i] = x
    for i in range(system.euler_steps + 1, system.n_blocks):
        data[:, i] = system.b_block(i) + data[:, i - 1]
    _check_finite(data)
    return HistoryMatrix(data, system.h, system.t_offset, system.model_hash)


def pad_for_time(system: LinearSystem, pad_at: int, pad_count: int) -> LinearSystem:
    """Append copy rows so the solution repeats block ``pad_at`` forever after.

    Blocks after ``pad_at`` are replaced by ``pad_count`` rows of the form
    (-I, I), each with a zero right-hand side, so solving yields
    x_i = x_{pad_at} for every i > pad_at.  The share of the flattened
    squared norm carried by the copies is (P+1) Z_{pad_at} / new total.
    Padding an already padded system again at the same block accumulates
    the copy counts.
    """
    if pad_count < 0:
        raise ValidationError("pad_count must be >= 0")
    if not 0 <= pad_at <= system.euler_steps:
        raise ValidationError(
            f"pad_at must lie in [0, {system.euler_steps}] for this system, got {pad_at}"
        )
    if system.pad_count and pad_at != system.euler_steps:
        raise ValidationError(
            "system is already padded; additional padding must reuse the same block "
            f"({system.euler_steps})"
        )
    N = system.block_dim
    kept = system.b[: (pad_at + 1) * N]
    return LinearSystem(
        block_dim=N,
        euler_steps=pad_at,
        step_block=system.step_block,
        b=np.concatenate([kept, np.zeros((system.pad_count + pad_count) * N)]),
        h=system.h,
        memory_blocks=system.memory_blocks,
        pad_count=system.pad_count + pad_count,
        t_offset=system.t_offset,
        model_hash=system.model_hash,
    )


def normalize_history(history: HistoryMatrix) -> NormalizedHistory:
    """Scale the flattened history to unit 2-norm, recording per-step norms."""
    data = history.data
    z = np.einsum("ij,ij->j", data, data)
    total = float(z.sum())
    if total == 0.0:
        raise ValidationError("cannot normalize an all-zero history")
    norm = float(np.sqrt(total))
    return NormalizedHistory(
        data=data / norm,
        timestep_square_norms=z,
        norm=norm,
        h=history.h,
        t_offset=history.t_offset,
        model_hash=history.model_hash,
    )


def stability_margin(matrix, h: float) -> float:
    """h * max |diagonal|; values above 1 can produce negative entries."""
    op = _as_operator(matrix)
    diag = op.diagonal()
    return float(h * np.max(np.abs(diag))) if diag.size else 0.0
