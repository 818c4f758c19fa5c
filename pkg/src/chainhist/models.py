"""Network Markov-chain generators and initial probability distributions.

A global chain state is an integer in ``[0, q**n)`` whose little-endian
base-``q`` digit ``v`` is the local state of node ``v``.  For ``q = 2``
(susceptible/infected dynamics) bit ``v`` set means node ``v`` is infected,
so state ``0`` is the all-susceptible configuration.  Labels rendered by
:func:`state_label` put node 0 in the leftmost character.

Generators follow the master-equation convention: ``Q[i, j]`` with
``i != j`` is the rate of jumping *from* state ``j`` *into* state ``i``,
and every column sums to zero.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .errors import CapacityError, ModelMismatchError, ValidationError

# Local state codes for the built-in models.
SUSCEPTIBLE, INFECTED = 0, 1
UNDECIDED, LIBERAL, CONSERVATIVE = 0, 1, 2

# Dense post-processing is O(N^2 T); refuse to build generators above this
# many state bits unless the caller explicitly opts in.
STATE_BIT_CAP = 24

MODEL_KINDS = ("sis", "sis_distancing", "opinion")


@dataclass(frozen=True)
class Network:
    """Undirected weighted contact network with ``q`` local states per node.

    Parameters
    ----------
    n : int
        Node count.
    q : int
        Local states per node (>= 2).
    edges : sequence of (u, v, rate)
        Undirected edges with strictly positive rates per unit time.
        Parallel edges are allowed and act additively.
    """

    n: int
    q: int
    edges: tuple[tuple[int, int, float], ...]

    def __post_init__(self):
        if self.n < 1:
            raise ValidationError("network needs at least one node")
        if self.q < 2:
            raise ValidationError(f"q must be at least 2, got {self.q}")
        edges = tuple((int(u), int(v), float(r)) for u, v, r in self.edges)
        object.__setattr__(self, "edges", edges)
        for u, v, r in edges:
            if u == v:
                raise ValidationError(f"self-loop on node {u} is not allowed")
            if not (0 <= u < self.n and 0 <= v < self.n):
                raise ValidationError(f"edge ({u}, {v}) references a node outside [0, {self.n})")
            if not r > 0:
                raise ValidationError(f"edge ({u}, {v}) has non-positive rate {r}")

    @cached_property
    def adjacency(self) -> tuple[tuple[tuple[int, float], ...], ...]:
        """Per-node tuple of ``(neighbor, edge rate)`` pairs."""
        nbrs: list[list[tuple[int, float]]] = [[] for _ in range(self.n)]
        for u, v, r in self.edges:
            nbrs[u].append((v, r))
            nbrs[v].append((u, r))
        return tuple(tuple(pairs) for pairs in nbrs)

    @property
    def n_states(self) -> int:
        return self.q**self.n


@dataclass(frozen=True)
class Distancing:
    """Slow-down rule: divide infection rates by ``factor`` once the source
    state has at least ``threshold`` infected nodes."""

    threshold: int
    factor: float

    def __post_init__(self):
        if self.threshold < 1:
            raise ValidationError("distancing threshold must be >= 1")
        if not self.factor > 0:
            raise ValidationError("distancing factor must be > 0")


@dataclass(frozen=True)
class ModelSpec:
    """Dynamics parameters attached to a network.

    ``recovery_rate`` is the infected -> susceptible rate for the SIS kinds;
    the opinion model reuses the same field as its decided -> undecided
    relaxation rate (a documented repurposing, since persuasion dynamics
    leave no natural second rate slot).  ``persuasion_rates`` optionally
    overrides the per-edge persuasion strengths of the opinion model; by
    default the edge rates themselves are used.
    """

    kind: str
    recovery_rate: float
    distancing: Distancing | None = None
    persuasion_rates: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.kind not in MODEL_KINDS:
            raise ValidationError(f"unknown model kind '{self.kind}', expected one of {MODEL_KINDS}")
        if self.kind in ("sis", "sis_distancing") and not self.recovery_rate > 0:
            raise ValidationError("recovery_rate must be > 0 for SIS models")
        if self.kind == "opinion" and self.recovery_rate < 0:
            raise ValidationError("relaxation rate must be >= 0 for the opinion model")
        if self.kind == "sis_distancing" and self.distancing is None:
            raise ValidationError("sis_distancing requires a distancing rule")
        if self.persuasion_rates is not None:
            rates = tuple(float(r) for r in self.persuasion_rates)
            object.__setattr__(self, "persuasion_rates", rates)
            if any(r < 0 for r in rates):
                raise ValidationError("persuasion rates must be nonnegative")


@dataclass(frozen=True)
class RateMatrix:
    """Sparse ``q**n x q**n`` chain generator with zero column sums."""

    matrix: sp.csc_array
    n: int
    q: int

    @property
    def dimension(self) -> int:
        return self.matrix.shape[0]

    @property
    def sparsity(self) -> int:
        """Maximum number of stored entries in any column."""
        indptr = self.matrix.indptr
        return int(np.diff(indptr).max()) if self.dimension else 0

    def exit_rates(self) -> np.ndarray:
        """Total outflow rate per state (``-Q[j, j]``)."""
        return -self.matrix.diagonal()

    def column_sums(self) -> np.ndarray:
        return np.asarray(self.matrix.sum(axis=0)).ravel()

    def content_hash(self) -> str:
        """Stable digest of the generator content, used to tag exports."""
        m = self.matrix
        digest = hashlib.sha256()
        digest.update(f"rate-matrix:{self.n}:{self.q}:{m.shape[0]}".encode())
        digest.update(np.ascontiguousarray(m.indptr).tobytes())
        digest.update(np.ascontiguousarray(m.indices).tobytes())
        digest.update(np.ascontiguousarray(m.data).tobytes())
        return digest.hexdigest()[:16]


@dataclass(frozen=True)
class InitialSpec:
    """How to build the day-zero probability vector.

    kind
        ``product``: independent nodes; give either ``p`` (per-node infection
        probability, q = 2 only; scalar broadcasts) or ``weights`` (one
        length-q weight row per node).
        ``point_mass``: all mass on global state ``index``.
        ``uniform``: equal mass on every global state.
    """

    kind: str
    p: float | tuple[float, ...] | None = None
    weights: tuple[tuple[float, ...], ...] | None = None
    index: int | None = None

    def __post_init__(self):
        if self.kind not in ("product", "point_mass", "uniform"):
            raise ValidationError(f"unknown initial-distribution kind '{self.kind}'")
        if self.kind == "product" and self.p is None and self.weights is None:
            raise ValidationError("product initial distribution needs p or weights")
        if self.kind == "point_mass" and self.index is None:
            raise ValidationError("point_mass initial distribution needs an index")
        if self.p is not None and not np.isscalar(self.p):
            object.__setattr__(self, "p", tuple(float(x) for x in self.p))
        if self.weights is not None:
            object.__setattr__(
                self, "weights", tuple(tuple(float(x) for x in row) for row in self.weights)
            )


# ---------------------------------------------------------------------------
# state indexing helpers


def state_digits(states, n: int, q: int) -> np.ndarray:
    """Base-q digits of global state indices; column v is node v's state."""
    states = np.asarray(states, dtype=np.int64)
    powers = q ** np.arange(n, dtype=np.int64)
    return (states[..., None] // powers) % q


def state_label(state: int, n: int, q: int) -> str:
    """Render a state as one character per node, node 0 leftmost."""
    digits = state_digits(np.int64(state), n, q)
    return "".join(str(int(d)) for d in digits)


def infected_counts(n: int) -> np.ndarray:
    """Number of infected nodes for every q = 2 state index in [0, 2**n)."""
    states = np.arange(1 << n, dtype=np.int64)
    return np.bitwise_count(states).astype(np.int64)


def _check_capacity(n: int, q: int, allow_large: bool) -> int:
    dimension = q**n
    if not allow_large and dimension > (1 << STATE_BIT_CAP):
        raise CapacityError(
            f"state space q**n = {q}**{n} = {dimension} exceeds the "
            f"{STATE_BIT_CAP}-bit cap; pass allow_large=True to override"
        )
    return dimension


# ---------------------------------------------------------------------------
# generator builders


def _close_columns(rows, cols, data, dimension: int) -> sp.csc_array:
    """Assemble off-diagonal triplets and add the column-closing diagonal."""
    rows = np.concatenate(rows) if rows else np.empty(0, dtype=np.int64)
    cols = np.concatenate(cols) if cols else np.empty(0, dtype=np.int64)
    data = np.concatenate(data) if data else np.empty(0, dtype=np.float64)
    outflow = np.bincount(cols, weights=data, minlength=dimension)
    diag_states = np.flatnonzero(outflow)
    rows = np.concatenate([rows, diag_states])
    cols = np.concatenate([cols, diag_states])
    data = np.concatenate([data, -outflow[diag_states]])
    return sp.csc_array((data, (rows, cols)), shape=(dimension, dimension))


def _sis_triplets(network: Network, recovery_rate: float, distancing: Distancing | None):
    n = network.n
    states = np.arange(1 << n, dtype=np.int64)
    rows, cols, data = [], [], []
    for v in range(n):
        bit = np.int64(1 << v)
        v_infected = (states & bit) != 0

        recovering = states[v_infected]
        rows.append(recovering - bit)
        cols.append(recovering)
        data.append(np.full(recovering.size, float(recovery_rate)))

        susceptible = states[~v_infected]
        pressure = np.zeros(susceptible.size)
        for u, rate in network.adjacency[v]:
            pressure += rate * ((susceptible >> np.int64(u)) & 1)
        if distancing is not None:
            slowed = np.bitwise_count(susceptible) >= distancing.threshold
            pressure = np.where(slowed, pressure / distancing.factor, pressure)
        hit = pressure > 0
        rows.append(susceptible[hit] + bit)
        cols.append(susceptible[hit])
        data.append(pressure[hit])
    return rows, cols, data


def build_sis_generator(network: Network, spec: ModelSpec, *, allow_large: bool = False) -> RateMatrix:
    """Exact master-equation generator of the susceptible-infected-susceptible model.

    For each global state, every infected node recovers at
    ``spec.recovery_rate`` and every susceptible node is infected at the sum
    of the edge rates to its currently infected neighbors.  All transitions
    flip exactly one node.
    """
    if spec.kind != "sis":
        raise ModelMismatchError(f"build_sis_generator needs kind 'sis', got '{spec.kind}'")
    if network.q != 2:
        raise ModelMismatchError(f"SIS dynamics needs q = 2, network has q = {network.q}")
    dimension = _check_capacity(network.n, 2, allow_large)
    triplets = _sis_triplets(network, spec.recovery_rate, None)
    return RateMatrix(_close_columns(*triplets, dimension), network.n, 2)


def build_distancing_generator(
    network: Network, spec: ModelSpec, *, allow_large: bool = False
) -> RateMatrix:
    """SIS generator with infection slowed out of heavily infected states.

    Identical to :func:`build_sis_generator` except that every
    susceptible -> infected rate leaving a state with at least
    ``threshold`` infected nodes is divided by ``factor``; recovery is
    untouched.
    """
    if spec.kind != "sis_distancing":
        raise ModelMismatchError(
            f"build_distancing_generator needs kind 'sis_distancing', got '{spec.kind}'"
        )
    if network.q != 2:
        raise ModelMismatchError(f"SIS dynamics needs q = 2, network has q = {network.q}")
    if spec.distancing is None:
        raise ValidationError("sis_distancing requires a distancing rule")
    # a threshold above n never fires and legitimately reduces to plain SIS
    dimension = _check_capacity(network.n, 2, allow_large)
    triplets = _sis_triplets(network, spec.recovery_rate, spec.distancing)
    return RateMatrix(_close_columns(*triplets, dimension), network.n, 2)


def build_opinion_generator(
    network: Network, spec: ModelSpec, *, allow_large: bool = False
) -> RateMatrix:
    """Three-state opinion dynamics: undecided nodes are persuaded by decided
    neighbors, decided nodes relax back to undecided.

    An undecided node v adopts opinion 1 (resp. 2) at the summed persuasion
    rate of its neighbors currently holding that opinion; decided nodes
    return to undecided at ``spec.recovery_rate``.  There is no direct
    transition between the two decided opinions.
    """
    if spec.kind != "opinion":
        raise ModelMismatchError(f"build_opinion_generator needs kind 'opinion', got '{spec.kind}'")
    if network.q != 3:
        raise ModelMismatchError(f"opinion dynamics needs q = 3, network has q = {network.q}")
    if spec.persuasion_rates is not None and len(spec.persuasion_rates) != len(network.edges):
        raise ValidationError("persuasion_rates must match the network edge list one-to-one")
    dimension = _check_capacity(network.n, 3, allow_large)

    if spec.persuasion_rates is None:
        adjacency = network.adjacency
    else:
        nbrs: list[list[tuple[int, float]]] = [[] for _ in range(network.n)]
        for (u, v, _), rate in zip(network.edges, spec.persuasion_rates):
            nbrs[u].append((v, rate))
            nbrs[v].append((u, rate))
        adjacency = tuple(tuple(pairs) for pairs in nbrs)

    n = network.n
    states = np.arange(dimension, dtype=np.int64)
    powers = 3 ** np.arange(n, dtype=np.int64)
    rows, cols, data = [], [], []
    for v in range(n):
        step = powers[v]
        local = (states // step) % 3

        undecided = states[local == UNDECIDED]
        if undecided.size:
            for opinion in (LIBERAL, CONSERVATIVE):
                pull = np.zeros(undecided.size)
                for u, rate in adjacency[v]:
                    pull += rate * (((undecided // powers[u]) % 3) == opinion)
                hit = pull > 0
                rows.append(undecided[hit] + opinion * step)
                cols.append(undecided[hit])
                data.append(pull[hit])

        if spec.recovery_rate > 0:
            for opinion in (LIBERAL, CONSERVATIVE):
                decided = states[local == opinion]
                rows.append(decided - opinion * step)
                cols.append(decided)
                data.append(np.full(decided.size, float(spec.recovery_rate)))
    return RateMatrix(_close_columns(rows, cols, data, dimension), network.n, 3)


def build_generator(network: Network, spec: ModelSpec, *, allow_large: bool = False) -> RateMatrix:
    """Dispatch to the builder matching ``spec.kind``."""
    builder = {
        "sis": build_sis_generator,
        "sis_distancing": build_distancing_generator,
        "opinion": build_opinion_generator,
    }[spec.kind]
    return builder(network, spec, allow_large=allow_large)


# ---------------------------------------------------------------------------
# initial distributions


def _product_weights(spec: InitialSpec, n: int, q: int) -> np.ndarray:
    if spec.weights is not None:
        w = np.asarray(spec.weights, dtype=np.float64)
        if w.shape != (n, q):
            raise ValidationError(f"weights must have shape ({n}, {q}), got {w.shape}")
    else:
        if q != 2:
            raise ValidationError("scalar/per-node p is only defined for q = 2; use weights")
        p = np.asarray(spec.p, dtype=np.float64)
        if p.ndim == 0:
            p = np.full(n, float(p))
        if p.shape != (n,):
            raise ValidationError(f"p must be a scalar or length-{n} sequence, got shape {p.shape}")
        w = np.stack([1.0 - p, p], axis=1)
    if np.any(w < 0) or np.any(w > 1):
        raise ValidationError("product weights must lie in [0, 1]")
    sums = w.sum(axis=1)
    if np.any(np.abs(sums - 1.0) > 1e-9):
        raise ValidationError("per-node weights must sum to 1")
    return w / sums[:, None]


def make_initial_distribution(
    spec: InitialSpec, n: int, q: int = 2, *, allow_large: bool = False
) -> np.ndarray:
    """Dense probability vector over the ``q**n`` global states.

    ``product`` entries factorize over nodes: entry ``j`` is the product of
    each node's weight for its digit in ``j``.  Entries are nonnegative and
    sum to 1 (within accumulated rounding, well below 1e-12 at desk scale).
    """
    dimension = _check_capacity(n, q, allow_large)
    if spec.kind == "uniform":
        return np.full(dimension, 1.0 / dimension)
    if spec.kind == "point_mass":
        if not 0 <= spec.index < dimension:
            raise ValidationError(f"point_mass index {spec.index} outside [0, {dimension})")
        vec = np.zeros(dimension)
        vec[spec.index] = 1.0
        return vec
    weights = _product_weights(spec, n, q)
    vec = np.ones(1)
    for v in range(n):
        # little-endian digit order: node v occupies the q**v place
        vec = np.kron(weights[v], vec)
    return vec
