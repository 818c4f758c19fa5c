"""Monte Carlo baselines: exact-event chain sampling, observable estimation,
and the pair-coincidence estimator of history Gram entries.

Reproducibility contract
------------------------
All randomness comes from keyed counter-based Philox streams.  Trajectory
``i`` of a run with seed ``s`` always consumes the stream with key
``(s, i)`` (functions sampling two chains per unit interleave with
offset/stride keys), and uniform doubles are derived one per 64-bit word as
``(word >> 11) * 2**-53``.  Results are therefore bitwise identical for a
fixed seed no matter how trajectories are batched or distributed, and
aggregates are always reduced in trajectory-index order.

Draw protocol per trajectory: the initial-state sampler consumes its fixed
number of uniforms, then each event attempt consumes one uniform for the
exponential holding time and, if the event lands inside the horizon, one
more for the jump target.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp
from numpy.random import Philox

from .errors import NumericalError, ValidationError
from .lde import HistoryMatrix
from .models import InitialSpec, ModelSpec, Network, RateMatrix, state_digits

_MASK64 = (1 << 64) - 1
_SHIFT = np.uint64(11)
_INV53 = 2.0**-53

# tabulated sampling keeps (N x max-degree) dense tables; beyond this use
# LocalDynamics or the sequential path
_TABLE_STATE_CAP = 1 << 16


def stream_key(seed: int, index: int) -> np.ndarray:
    """Philox key of trajectory ``index`` under ``seed``."""
    return np.array([seed & _MASK64, index & _MASK64], dtype=np.uint64)


# Philox-4x64-10 round and key-schedule constants (Random123 / numpy).
_PHILOX_M0 = np.uint64(0xD2E7470EE14C6C93)
_PHILOX_M1 = np.uint64(0xCA5A826395121157)
_PHILOX_W0 = np.uint64(0x9E3779B97F4A7C15)
_PHILOX_W1 = np.uint64(0xBB67AE8584CAA73B)
_M32 = np.uint64(0xFFFFFFFF)
_S32 = np.uint64(32)


def _mulhilo64(a: np.uint64, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    lo = a * b
    a_hi, a_lo = a >> _S32, a & _M32
    b_hi, b_lo = b >> _S32, b & _M32
    t1 = a_hi * b_lo + ((a_lo * b_lo) >> _S32)
    t2 = a_lo * b_hi + (t1 & _M32)
    hi = a_hi * b_hi + (t1 >> _S32) + (t2 >> _S32)
    return hi, lo


def _philox_block(counter0: int, key0: int, key1: np.ndarray) -> np.ndarray:
    """One 4-word Philox output block per stream, vectorized over key1."""
    size = key1.size
    x0 = np.full(size, counter0, dtype=np.uint64)
    x1 = np.zeros(size, dtype=np.uint64)
    x2 = np.zeros(size, dtype=np.uint64)
    x3 = np.zeros(size, dtype=np.uint64)
    k0 = np.full(size, key0 & _MASK64, dtype=np.uint64)
    k1 = key1.astype(np.uint64, copy=True)
    for bump in range(10):
        if bump:
            k0 = k0 + _PHILOX_W0
            k1 = k1 + _PHILOX_W1
        hi0, lo0 = _mulhilo64(_PHILOX_M0, x0)
        hi1, lo1 = _mulhilo64(_PHILOX_M1, x2)
        x0, x1, x2, x3 = hi1 ^ x1 ^ k0, lo1, hi0 ^ x3 ^ k1, lo0
    return np.stack([x0, x1, x2, x3], axis=1)


def stream_uniforms(seed: int, indices: np.ndarray, width: int) -> np.ndarray:
    """Leading ``width`` uniforms of each stream (seed, indices[i]), batched.

    Bitwise identical to what :class:`UniformStream` yields draw by draw;
    numpy's Philox emits output block b under counter b + 1, which is
    replicated here so the two paths share one stream definition.
    """
    indices = np.asarray(indices, dtype=np.uint64)
    n_blocks = (width + 3) // 4
    words = np.empty((indices.size, n_blocks * 4), dtype=np.uint64)
    with np.errstate(over="ignore"):
        for b in range(n_blocks):
            words[:, 4 * b : 4 * b + 4] = _philox_block(b + 1, seed, indices)
    return (words[:, :width] >> _SHIFT) * _INV53


def derive_seed(seed: int, *path: int) -> int:
    """Deterministic sub-seed for nested studies (replicates, grid points)."""
    ss = np.random.SeedSequence(seed, spawn_key=tuple(int(p) for p in path))
    return int(ss.generate_state(1, np.uint64)[0])


class UniformStream:
    """Uniform doubles from one keyed Philox stream (chunked, sequential)."""

    __slots__ = ("_bitgen", "_buf", "_pos", "_chunk")

    def __init__(self, seed: int, index: int, chunk: int = 128):
        self._bitgen = Philox(key=stream_key(seed, index))
        self._buf = None
        self._pos = 0
        self._chunk = chunk

    def draw(self) -> float:
        if self._buf is None or self._pos == len(self._buf):
            self._buf = self._bitgen.random_raw(self._chunk)
            self._pos = 0
        word = self._buf[self._pos]
        self._pos += 1
        return float((word >> _SHIFT) * _INV53)


def _drawer(rng) -> Callable[[], float]:
    if isinstance(rng, UniformStream):
        return rng.draw
    if hasattr(rng, "random"):
        return lambda: float(rng.random())
    raise ValidationError("rng must be a UniformStream or numpy Generator")


# ---------------------------------------------------------------------------
# dynamics access


class ChainSampler:
    """Tabulated jump dynamics from a rate matrix, for exact-event sampling.

    Per state: total exit rate, cumulative jump distribution, and jump
    targets in ascending target order (the canonical enumeration shared
    with :class:`LocalDynamics`).
    """

    def __init__(self, model):
        matrix = model.matrix if isinstance(model, RateMatrix) else model
        if not sp.issparse(matrix):
            matrix = sp.csc_array(np.asarray(matrix, dtype=np.float64))
        coo = sp.coo_array(matrix)
        n_states = coo.shape[0]
        off = (coo.row != coo.col) & (coo.data != 0.0)
        rows, cols, rates = coo.row[off], coo.col[off], coo.data[off]
        if np.any(rates < 0):
            raise ValidationError("off-diagonal rates must be nonnegative")
        order = np.lexsort((rows, cols))
        rows, cols, rates = rows[order], cols[order], rates[order]
        counts = np.bincount(cols, minlength=n_states)
        width = int(counts.max()) if counts.size else 0
        if n_states > _TABLE_STATE_CAP:
            raise ValidationError(
                f"{n_states} states is too large for tabulated sampling; "
                "use LocalDynamics built from the network instead"
            )
        width = max(width, 1)
        self.n_states = n_states
        self.targets = np.tile(np.arange(n_states, dtype=np.int64)[:, None], (1, width))
        rate_table = np.zeros((n_states, width))
        slot = np.arange(rates.size) - np.repeat(np.cumsum(counts) - counts, counts)
        self.targets[cols, slot] = rows
        rate_table[cols, slot] = rates
        self.exit = rate_table.sum(axis=1)
        with np.errstate(invalid="ignore", divide="ignore"):
            cum = np.cumsum(rate_table, axis=1) / self.exit[:, None]
        cum[self.exit == 0.0] = 1.0
        # pin the final real entry (and padding) to exactly 1 so a uniform
        # in [0, 1) can never select past the last target
        last = np.maximum(counts - 1, 0)
        for j in np.flatnonzero(counts):
            cum[j, last[j] :] = 1.0
        self.cum = cum
        self.max_exit_rate = float(self.exit.max()) if n_states else 0.0

    def transitions(self, state: int):
        return float(self.exit[state]), self.cum[state], self.targets[state]


class LocalDynamics:
    """Event rates enumerated from the network per state; no q**n tables.

    Cost per event is O(n * degree + n log n) regardless of the global state
    count.  Transition enumeration matches :class:`ChainSampler` (targets
    ascending), so both representations consume identical random draws.
    """

    def __init__(self, network: Network, spec: ModelSpec):
        self.network = network
        self.spec = spec
        self.n = network.n
        if spec.kind in ("sis", "sis_distancing") and network.q != 2:
            raise ValidationError("SIS dynamics needs q = 2")
        if spec.kind == "opinion" and network.q != 3:
            raise ValidationError("opinion dynamics needs q = 3")
        if spec.kind == "opinion" and spec.persuasion_rates is not None:
            nbrs: list[list[tuple[int, float]]] = [[] for _ in range(network.n)]
            for (u, v, _), rate in zip(network.edges, spec.persuasion_rates):
                nbrs[u].append((v, rate))
                nbrs[v].append((u, rate))
            self._adjacency = tuple(tuple(p) for p in nbrs)
        else:
            self._adjacency = network.adjacency
        # conservative per-state exit bound: each node contributes at most
        # max(recovery, total inbound edge rate)
        in_rate = [sum(r for _, r in self._adjacency[v]) for v in range(network.n)]
        self.max_exit_rate = float(
            sum(max(spec.recovery_rate, r) for r in in_rate)
        )

    def _transition_list(self, state: int) -> list[tuple[int, float]]:
        n, spec = self.n, self.spec
        out: list[tuple[int, float]] = []
        if spec.kind in ("sis", "sis_distancing"):
            slow = (
                spec.kind == "sis_distancing"
                and int(state).bit_count() >= spec.distancing.threshold
            )
            for v in range(n):
                bit = 1 << v
                if state & bit:
                    out.append((state - bit, spec.recovery_rate))
                else:
                    pressure = sum(r for u, r in self._adjacency[v] if state & (1 << u))
                    if slow:
                        pressure /= spec.distancing.factor
                    if pressure > 0:
                        out.append((state + bit, pressure))
        else:
            for v in range(n):
                step = 3**v
                local = (state // step) % 3
                if local == 0:
                    for opinion in (1, 2):
                        pull = sum(
                            r
                            for u, r in self._adjacency[v]
                            if (state // 3**u) % 3 == opinion
                        )
                        if pull > 0:
                            out.append((state + opinion * step, pull))
                elif spec.recovery_rate > 0:
                    out.append((state - local * step, spec.recovery_rate))
        out.sort(key=lambda pair: pair[0])
        return out

    def transitions(self, state: int):
        pairs = self._transition_list(state)
        if not pairs:
            return 0.0, np.ones(1), np.array([state], dtype=np.int64)
        targets = np.array([p[0] for p in pairs], dtype=np.int64)
        rates = np.array([p[1] for p in pairs])
        exit_rate = float(rates.sum())
        cum = np.cumsum(rates) / exit_rate
        cum[-1] = 1.0
        return exit_rate, cum, targets


def _as_dynamics(model):
    if isinstance(model, (ChainSampler, LocalDynamics)):
        return model
    return ChainSampler(model)


# ---------------------------------------------------------------------------
# initial states


class InitialStateSampler:
    """Draws global state indices distributed as make_initial_distribution.

    Per-kind draw protocol (identical in scalar and batched form):
    ``product`` consumes one uniform per node in node order; ``uniform``
    consumes one; ``point_mass`` none; ``table`` (explicit probability
    vector) one, located by binary search in the cumulative distribution.
    """

    def __init__(self, spec: InitialSpec | None, n: int, q: int = 2, distribution=None):
        self.n = n
        self.q = q
        self.n_states = q**n
        if distribution is not None:
            vec = np.asarray(distribution, dtype=np.float64)
            if vec.ndim != 1 or np.any(vec < 0):
                raise ValidationError("distribution must be a nonnegative vector")
            total = vec.sum()
            if not total > 0:
                raise ValidationError("distribution must have positive mass")
            self.kind = "table"
            self._cum = np.cumsum(vec / total)
            self._cum[-1] = 1.0
            self.n_states = vec.size
            self.n_draws = 1
            return
        if spec is None:
            raise ValidationError("need an InitialSpec or an explicit distribution")
        self.kind = spec.kind
        if spec.kind == "product":
            from .models import _product_weights

            weights = _product_weights(spec, n, q)
            self._cum_rows = np.cumsum(weights, axis=1)[:, :-1]  # heads; digit = count exceeded
            self._powers = q ** np.arange(n, dtype=np.int64)
            self.n_draws = n
        elif spec.kind == "uniform":
            self.n_draws = 1
        else:  # point_mass
            if not 0 <= spec.index < self.n_states:
                raise ValidationError(f"point_mass index {spec.index} outside [0, {self.n_states})")
            self._index = int(spec.index)
            self.n_draws = 0

    @classmethod
    def from_distribution(cls, vec) -> "InitialStateSampler":
        n = int(np.ceil(np.log2(max(len(vec), 2))))
        return cls(None, n, 2, distribution=vec)

    def sample(self, draw: Callable[[], float]) -> int:
        if self.kind == "point_mass":
            return self._index
        if self.kind == "uniform":
            return min(int(draw() * self.n_states), self.n_states - 1)
        if self.kind == "table":
            return int(np.searchsorted(self._cum, draw(), side="right"))
        state = 0
        for v in range(self.n):
            digit = int((draw() > self._cum_rows[v]).sum())
            state += digit * int(self._powers[v])
        return state

    def sample_batch(self, uniforms: np.ndarray) -> np.ndarray:
        size = uniforms.shape[0]
        if self.kind == "point_mass":
            return np.full(size, self._index, dtype=np.int64)
        if self.kind == "uniform":
            return np.minimum((uniforms[:, 0] * self.n_states).astype(np.int64), self.n_states - 1)
        if self.kind == "table":
            return np.searchsorted(self._cum, uniforms[:, 0], side="right").astype(np.int64)
        states = np.zeros(size, dtype=np.int64)
        for v in range(self.n):
            digit = (uniforms[:, v : v + 1] > self._cum_rows[v][None, :]).sum(axis=1)
            states += digit.astype(np.int64) * int(self._powers[v])
        return states


def _as_initial_sampler(x0_sampler, dyn) -> InitialStateSampler:
    if isinstance(x0_sampler, InitialStateSampler):
        return x0_sampler
    if isinstance(x0_sampler, (int, np.integer)):
        sampler = InitialStateSampler.__new__(InitialStateSampler)
        sampler.kind = "point_mass"
        sampler._index = int(x0_sampler)
        sampler.n_draws = 0
        sampler.n_states = getattr(dyn, "n_states", int(x0_sampler) + 1)
        return sampler
    raise ValidationError("x0_sampler must be an InitialStateSampler or a state index")


# ---------------------------------------------------------------------------
# trajectories


@dataclass(frozen=True)
class Trajectory:
    """One sampled path: initial state plus (time, new state) events."""

    initial_state: int
    events: tuple[tuple[float, int], ...]
    t_final: float

    @property
    def final_state(self) -> int:
        return self.events[-1][1] if self.events else self.initial_state

    def state_at(self, t: float) -> int:
        state = self.initial_state
        for when, new in self.events:
            if when > t:
                break
            state = new
        return state


def _advance_state(dyn, state: int, t_final: float, draw, record=None) -> int:
    elapsed = 0.0
    while True:
        exit_rate, cum, targets = dyn.transitions(state)
        u1 = draw()
        if exit_rate <= 0.0:
            return state
        dt = -float(np.log1p(-u1)) / exit_rate
        if elapsed + dt > t_final:
            return state
        elapsed = elapsed + dt
        u2 = draw()
        state = int(targets[int((u2 > cum).sum())])
        if record is not None:
            record.append((elapsed, state))


def gillespie_sample(model, x0_sampler, t: float, rng) -> int:
    """Exact-event sample of the chain state at time ``t``.

    Holding times are exponential with the state's total exit rate and the
    jump target is drawn proportionally to the individual rates; an
    absorbing state simply persists.  ``model`` may be a RateMatrix (or raw
    matrix), a prebuilt :class:`ChainSampler`, or a :class:`LocalDynamics`.
    """
    if t < 0:
        raise ValidationError("time must be nonnegative")
    dyn = _as_dynamics(model)
    sampler = _as_initial_sampler(x0_sampler, dyn)
    draw = _drawer(rng)
    state = sampler.sample(draw)
    return _advance_state(dyn, state, t, draw)


def simulate_trajectory(model, x0_sampler, t: float, rng) -> Trajectory:
    """Like :func:`gillespie_sample` but retaining the full event list."""
    if t < 0:
        raise ValidationError("time must be nonnegative")
    dyn = _as_dynamics(model)
    sampler = _as_initial_sampler(x0_sampler, dyn)
    draw = _drawer(rng)
    state = sampler.sample(draw)
    events: list[tuple[float, int]] = []
    _advance_state(dyn, state, t, draw, record=events)
    return Trajectory(state, tuple(events), t)


def fixed_step_sample(model, x0_sampler, t: float, h: float, rng) -> int:
    """Discrete-step sampler: per step of size h, jump i <- j with
    probability h * rate, stay otherwise.  Requires h * exit <= 1.

    Retained for cost-model correspondence (n * (t/h) * log q work); the
    exact-event path is the default for oracle comparisons.
    """
    if h <= 0 or t < 0:
        raise ValidationError("need h > 0 and t >= 0")
    dyn = _as_dynamics(model)
    sampler = _as_initial_sampler(x0_sampler, dyn)
    if dyn.max_exit_rate * h > 1.0:
        raise ValidationError(
            f"h * max exit rate = {dyn.max_exit_rate * h:.3g} > 1; decrease h"
        )
    draw = _drawer(rng)
    state = sampler.sample(draw)
    for _ in range(int(round(t / h))):
        exit_rate, cum, targets = dyn.transitions(state)
        u = draw()
        if u < h * exit_rate:
            share = u / (h * exit_rate)
            state = int(targets[int((share > cum).sum())])
    return state


# ---------------------------------------------------------------------------
# batched sampling (bitwise identical to the sequential path)


def sample_states_at(
    model,
    x0_sampler,
    t: float,
    size: int,
    seed: int,
    *,
    stream_offset: int = 0,
    stream_stride: int = 1,
) -> np.ndarray:
    """States of ``size`` independent trajectories at time ``t``.

    Trajectory ``i`` uses the stream keyed ``(seed, stream_offset +
    stream_stride * i)`` and yields exactly the state that
    :func:`gillespie_sample` produces from that stream.
    """
    if t < 0:
        raise ValidationError("time must be nonnegative")
    dyn = _as_dynamics(model)
    sampler = _as_initial_sampler(x0_sampler, dyn)
    if not isinstance(dyn, ChainSampler):
        out = np.empty(size, dtype=np.int64)
        for i in range(size):
            stream = UniformStream(seed, stream_offset + stream_stride * i)
            out[i] = _advance_state(dyn, sampler.sample(stream.draw), t, stream.draw)
        return out

    n0 = sampler.n_draws
    mean_events = dyn.max_exit_rate * t
    width = n0 + 2 * (int(np.ceil(mean_events + 6.0 * np.sqrt(mean_events + 4.0))) + 4) + 1
    width = min(max(width, n0 + 4), 512)
    with np.errstate(over="ignore"):
        indices = np.uint64(stream_offset) + np.uint64(stream_stride) * np.arange(
            size, dtype=np.uint64
        )
    uniforms = stream_uniforms(seed, indices, width)

    states = sampler.sample_batch(uniforms)
    pos = np.full(size, n0, dtype=np.int64)
    times = np.zeros(size)
    active = np.ones(size, dtype=bool)
    spilled: list[int] = []
    while True:
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        room = pos[idx] + 2 <= width
        if not room.all():
            overflow = idx[~room]
            spilled.extend(overflow.tolist())
            active[overflow] = False
            idx = idx[room]
            if idx.size == 0:
                continue
        u1 = uniforms[idx, pos[idx]]
        pos[idx] += 1
        rate = dyn.exit[states[idx]]
        with np.errstate(divide="ignore", invalid="ignore"):
            dt = np.where(rate > 0.0, -np.log1p(-u1) / np.where(rate > 0.0, rate, 1.0), np.inf)
        landed = times[idx] + dt
        finished = landed > t
        active[idx[finished]] = False
        moving = idx[~finished]
        if moving.size == 0:
            continue
        times[moving] = landed[~finished]
        u2 = uniforms[moving, pos[moving]]
        pos[moving] += 1
        cum_rows = dyn.cum[states[moving]]
        slot = (u2[:, None] > cum_rows).sum(axis=1)
        states[moving] = dyn.targets[states[moving], slot]
    for i in spilled:
        # rare long trajectories: redo sequentially from the same stream
        stream = UniformStream(seed, stream_offset + stream_stride * i)
        states[i] = _advance_state(dyn, sampler.sample(stream.draw), t, stream.draw)
    return states


# ---------------------------------------------------------------------------
# observables and estimators


@dataclass(frozen=True)
class ObservableSpec:
    """Real-valued function of the global state, vectorized over indices."""

    evaluate: Callable[[np.ndarray], np.ndarray]
    name: str = "observable"
    declared_range: tuple[float, float] | None = None

    def values(self, states) -> np.ndarray:
        return np.asarray(self.evaluate(np.asarray(states, dtype=np.int64)), dtype=np.float64)

    def unit_scaled(self, values: np.ndarray) -> np.ndarray:
        if self.declared_range is None:
            raise ValidationError("unit-range scaling needs a declared_range")
        lo, hi = self.declared_range
        if not hi > lo:
            raise ValidationError("declared_range must have hi > lo")
        return (values - lo) / (hi - lo)


def popcount_observable(n: int) -> ObservableSpec:
    """Number of infected nodes (q = 2 state encoding)."""
    return ObservableSpec(
        evaluate=lambda s: np.bitwise_count(s).astype(np.float64),
        name="popcount",
        declared_range=(0.0, float(n)),
    )


def indicator_observable(index: int) -> ObservableSpec:
    return ObservableSpec(
        evaluate=lambda s: (s == index).astype(np.float64),
        name=f"indicator:{index}",
        declared_range=(0.0, 1.0),
    )


def table_observable(values, name: str = "table") -> ObservableSpec:
    table = np.asarray(values, dtype=np.float64)
    return ObservableSpec(
        evaluate=lambda s: table[s],
        name=name,
        declared_range=(float(table.min()), float(table.max())),
    )


def node_count_observable(network: Network, local_state: int) -> ObservableSpec:
    """Number of nodes currently in ``local_state`` (any q)."""
    n, q = network.n, network.q

    def count(states):
        return (state_digits(states, n, q) == local_state).sum(axis=-1).astype(np.float64)

    return ObservableSpec(evaluate=count, name=f"count_state_{local_state}", declared_range=(0.0, float(n)))


@dataclass
class EstimateReport:
    """Point estimate with sampling error and full reproducibility metadata."""

    estimate: float
    stderr: float
    samples: int
    seed: int
    duration_s: float
    estimator: str = ""
    params: dict = field(default_factory=dict)

    def to_row(self) -> dict:
        row = {
            "estimator": self.estimator,
            "samples": self.samples,
            "estimate": self.estimate,
            "stderr": self.stderr,
            "seed": self.seed,
        }
        row.update(self.params)
        return row


def estimate_observable_mc(
    model,
    x0_sampler,
    observable: ObservableSpec,
    t: float,
    samples: int,
    seed: int,
    *,
    unit_range: bool = False,
) -> EstimateReport:
    """Mean of the observable over ``samples`` independent exact-event runs.

    ``unit_range=True`` first maps values onto [0, 1] via the observable's
    declared range (opt-in; raw values are the default).
    """
    if samples < 2:
        raise ValidationError("need at least 2 samples for a standard error")
    start = time.perf_counter()
    states = sample_states_at(model, x0_sampler, t, samples, seed)
    values = observable.values(states)
    if unit_range:
        values = observable.unit_scaled(values)
    estimate = float(values.mean())
    stderr = float(values.std(ddof=1) / math.sqrt(samples))
    return EstimateReport(
        estimate=estimate,
        stderr=stderr,
        samples=samples,
        seed=seed,
        duration_s=time.perf_counter() - start,
        estimator="observable_mc",
        params={"t": t, "observable": observable.name},
    )


def exact_observable(history: HistoryMatrix, observable: ObservableSpec, step: int) -> float:
    """<Q> at timestep ``step`` from the solved history: sum_k x_step(k) Q(k).

    The same value is recomputed through normalized vectors as
    sqrt(Z_step) * sqrt(Z_Q) * <q_hat | x_hat>, and the two routes are
    required to agree to 1e-10 (scaled by the value's magnitude); a
    disagreement indicates numerical corruption and raises.
    """
    if not 0 <= step <= history.n_steps:
        raise ValidationError(f"step {step} outside [0, {history.n_steps}]")
    column = history.data[:, step]
    q_values = observable.values(np.arange(history.n_states))
    direct = float(q_values @ column)
    z_step = float(column @ column)
    z_q = float(q_values @ q_values)
    if z_step > 0.0 and z_q > 0.0:
        overlap = float((q_values / math.sqrt(z_q)) @ (column / math.sqrt(z_step)))
        via_overlap = math.sqrt(z_step) * math.sqrt(z_q) * overlap
    else:
        via_overlap = 0.0
    if abs(direct - via_overlap) > 1e-10 * max(1.0, abs(direct)):
        raise NumericalError(
            f"observable overlap identity violated: direct={direct!r} overlap={via_overlap!r}",
            step=step,
        )
    return direct


def collision_gram_estimate(
    model, x0_sampler, j: int, j_prime: int, pairs: int, h: float, seed: int
) -> EstimateReport:
    """Gram entry (X^T X)_{j j'} as a pair-coincidence probability.

    Runs ``pairs`` independent chain pairs to times j h and j' h and counts
    how often the two states coincide; the hit fraction is an unbiased
    estimate of sum_k x_j(k) x_{j'}(k).  Also reports the implied expected
    number of pairs until a first coincidence (its reciprocal), which grows
    exponentially with node count for spread-out distributions.
    """
    if pairs < 1:
        raise ValidationError("need at least one pair")
    start = time.perf_counter()
    first = sample_states_at(model, x0_sampler, j * h, pairs, seed, stream_offset=0, stream_stride=2)
    second = sample_states_at(
        model, x0_sampler, j_prime * h, pairs, seed, stream_offset=1, stream_stride=2
    )
    hits = (first == second).astype(np.float64)
    estimate = float(hits.mean())
    stderr = float(hits.std(ddof=1) / math.sqrt(pairs)) if pairs > 1 else 0.0
    return EstimateReport(
        estimate=estimate,
        stderr=stderr,
        samples=pairs,
        seed=seed,
        duration_s=time.perf_counter() - start,
        estimator="collision_gram",
        params={
            "j": j,
            "j_prime": j_prime,
            "h": h,
            "expected_pairs_to_first_collision": math.inf if estimate == 0.0 else 1.0 / estimate,
        },
    )


def measure_pairs_to_first_collision(
    model,
    x0_sampler,
    j: int,
    j_prime: int,
    trials: int,
    h: float,
    seed: int,
    *,
    block: int = 512,
    max_pairs_per_trial: int = 10**7,
) -> EstimateReport:
    """Mean number of pair draws until the two chain states first coincide.

    Pairs are indexed globally across trials so stream keys never repeat:
    pair p uses keys (seed, 2p) and (seed, 2p + 1).
    """
    if trials < 1:
        raise ValidationError("need at least one trial")
    start = time.perf_counter()
    t1, t2 = j * h, j_prime * h
    counts = np.empty(trials)
    pair_base = 0
    for trial in range(trials):
        drawn = 0
        while True:
            if drawn >= max_pairs_per_trial:
                raise NumericalError(
                    f"no collision within {max_pairs_per_trial} pairs in trial {trial}"
                )
            first = sample_states_at(
                model, x0_sampler, t1, block, seed, stream_offset=2 * pair_base, stream_stride=2
            )
            second = sample_states_at(
                model, x0_sampler, t2, block, seed, stream_offset=2 * pair_base + 1, stream_stride=2
            )
            pair_base += block
            hits = first == second
            if hits.any():
                counts[trial] = drawn + int(np.argmax(hits)) + 1
                break
            drawn += block
    mean = float(counts.mean())
    stderr = float(counts.std(ddof=1) / math.sqrt(trials)) if trials > 1 else 0.0
    return EstimateReport(
        estimate=mean,
        stderr=stderr,
        samples=trials,
        seed=seed,
        duration_s=time.perf_counter() - start,
        estimator="pairs_to_first_collision",
        params={"j": j, "j_prime": j_prime, "h": h},
    )


def convergence_study(
    model,
    x0_sampler,
    observable: ObservableSpec,
    t: float,
    reference: float,
    sizes: Sequence[int],
    replicates: int | Sequence[int],
    seed: int,
) -> list[tuple[int, float]]:
    """RMSE of the Monte Carlo estimate against ``reference`` per sample size.

    Replicate r of grid point i runs with sub-seed derive_seed(seed, i, r),
    so the whole study is reproducible and embarrassingly parallel.
    """
    rows: list[tuple[int, float]] = []
    for i, size in enumerate(sizes):
        n_rep = replicates[i] if not isinstance(replicates, int) else replicates
        errors = np.empty(n_rep)
        for r in range(n_rep):
            report = estimate_observable_mc(
                model, x0_sampler, observable, t, size, derive_seed(seed, i, r)
            )
            errors[r] = report.estimate - reference
        rows.append((int(size), float(np.sqrt(np.mean(errors**2)))))
    return rows
