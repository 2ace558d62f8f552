"""
Network Topologies and Consensus Matrices
=========================================

Builds the communication graph of the simulated network and the mixing
matrix W used for one synchronous consensus round.

Usage:
    from lib.topology import generate_graph, metropolis_weights, apply_consensus

    topo = generate_graph("erdos_renyi", n=10, seed=7, p_edge=0.5)
    cm = metropolis_weights(topo)
    x = apply_consensus(cm, y, rounds=3)
"""

import logging
import threading
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, Iterable, List, Optional, Tuple

import networkx as nx
import numpy as np
from scipy import linalg

logger = logging.getLogger(__name__)

GRAPH_KINDS = ("erdos_renyi", "path", "ring", "complete", "star")

# Erdos-Renyi samples are redrawn from fresh substreams until connected
MAX_RESAMPLES = 64

ROW_SUM_TOL = 1e-12

# Above this many rounds apply_consensus switches to a cached matrix power
DIRECT_ROUNDS = 8
POWER_CACHE_SIZE = 64


class GraphError(ValueError):
    """Invalid graph request or edge list."""


class DisconnectedGraphError(GraphError):
    """No connected sample could be produced."""


class WeightError(ValueError):
    """A mixing matrix violates the consensus-matrix requirements."""


class DimensionError(ValueError):
    """A stacked state does not match the network size."""


# =============================================================================
# Topology
# =============================================================================

@dataclass(frozen=True)
class Topology:
    """Undirected connected graph over agents 0..n-1.

    Edges are stored as (i, j) pairs with i < j. `resamples` is the number
    of rejected Erdos-Renyi draws that preceded this graph.
    """

    n: int
    edges: FrozenSet[Tuple[int, int]]
    kind: str = "custom"
    resamples: int = 0

    def __post_init__(self) -> None:
        if self.n < 1:
            raise GraphError(f"Topology requires n >= 1, got {self.n}")

        normalized = set()
        for edge in self.edges:
            i, j = (int(v) for v in edge)
            if i == j:
                raise GraphError(f"Self-loop on agent {i} is not allowed")
            if not (0 <= i < self.n and 0 <= j < self.n):
                raise GraphError(f"Edge ({i}, {j}) references an agent outside [0, {self.n})")
            normalized.add((min(i, j), max(i, j)))
        object.__setattr__(self, "edges", frozenset(normalized))

        if not nx.is_connected(self.to_networkx()):
            raise DisconnectedGraphError(f"Topology over {self.n} agents is not connected")

    @property
    def edge_count(self) -> int:
        return len(self.edges)

    def sorted_edges(self) -> List[Tuple[int, int]]:
        return sorted(self.edges)

    def to_networkx(self) -> nx.Graph:
        graph = nx.Graph()
        graph.add_nodes_from(range(self.n))
        graph.add_edges_from(self.edges)
        return graph

    def neighbors(self, agent: int) -> List[int]:
        """Neighbors of an agent in ascending index order."""
        if not 0 <= agent < self.n:
            raise GraphError(f"Agent {agent} outside [0, {self.n})")
        return sorted(j if i == agent else i for i, j in self.edges if agent in (i, j))

    def degrees(self) -> List[int]:
        deg = [0] * self.n
        for i, j in self.edges:
            deg[i] += 1
            deg[j] += 1
        return deg

    def to_edge_list(self) -> str:
        """Serialize as "n <count>" followed by one "i j" line per edge."""
        lines = [f"n {self.n}"]
        lines.extend(f"{i} {j}" for i, j in self.sorted_edges())
        return "\n".join(lines) + "\n"

    @classmethod
    def from_edge_list(cls, text: str) -> "Topology":
        n = None
        edges = []
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.strip()
            if not line:
                continue
            parts = line.split()
            if n is None:
                if len(parts) != 2 or parts[0] != "n":
                    raise GraphError(f"Line {lineno}: expected header 'n <count>', got {line!r}")
                try:
                    n = int(parts[1])
                except ValueError:
                    raise GraphError(f"Line {lineno}: agent count {parts[1]!r} is not an integer")
                continue
            if len(parts) != 2:
                raise GraphError(f"Line {lineno}: expected 'i j', got {line!r}")
            try:
                edges.append((int(parts[0]), int(parts[1])))
            except ValueError:
                raise GraphError(f"Line {lineno}: non-integer agent index in {line!r}")
        if n is None:
            raise GraphError("Edge list is empty")
        return cls(n=n, edges=frozenset(edges))


def _edges_of(graph: nx.Graph) -> FrozenSet[Tuple[int, int]]:
    return frozenset((min(u, v), max(u, v)) for u, v in graph.edges() if u != v)


def generate_graph(kind: str, n: int, seed: int = 0, p_edge: Optional[float] = None) -> Topology:
    """
    Build a connected topology of the requested kind.

    Args:
        kind: one of GRAPH_KINDS
        n: agent count
        seed: RNG seed (only used by erdos_renyi)
        p_edge: edge probability for erdos_renyi

    Returns:
        Topology; for erdos_renyi `resamples` counts the rejected draws.
    """
    if n < 1:
        raise GraphError(f"Graph requires n >= 1, got {n}")
    if kind not in GRAPH_KINDS:
        raise GraphError(f"Unknown graph kind {kind!r}; expected one of {', '.join(GRAPH_KINDS)}")

    if kind == "path":
        return Topology(n=n, edges=_edges_of(nx.path_graph(n)), kind=kind)
    if kind == "ring":
        # cycle_graph degenerates below three nodes
        graph = nx.cycle_graph(n) if n >= 3 else nx.path_graph(n)
        return Topology(n=n, edges=_edges_of(graph), kind=kind)
    if kind == "complete":
        return Topology(n=n, edges=_edges_of(nx.complete_graph(n)), kind=kind)
    if kind == "star":
        return Topology(n=n, edges=_edges_of(nx.star_graph(n - 1)), kind=kind)

    if p_edge is None or not (0.0 < p_edge <= 1.0):
        raise GraphError(f"erdos_renyi requires 0 < p_edge <= 1, got {p_edge}")

    substreams = np.random.SeedSequence(seed).spawn(MAX_RESAMPLES)
    for attempt, child in enumerate(substreams):
        graph_seed = int(child.generate_state(1)[0])
        graph = nx.gnp_random_graph(n, p_edge, seed=graph_seed)
        if nx.is_connected(graph):
            if attempt:
                logger.info(f"erdos_renyi(n={n}, p={p_edge}, seed={seed}) connected after {attempt} resamples")
            return Topology(n=n, edges=_edges_of(graph), kind=kind, resamples=attempt)

    raise DisconnectedGraphError(
        f"erdos_renyi(n={n}, p={p_edge}) stayed disconnected after {MAX_RESAMPLES} attempts; "
        f"likely disconnected regime"
    )


# =============================================================================
# Consensus matrix
# =============================================================================

@dataclass(frozen=True, eq=False)
class ConsensusMatrix:
    """Symmetric doubly stochastic mixing matrix with its mixing rate beta."""

    w: np.ndarray
    beta: float
    n: int
    _powers: Dict[int, np.ndarray] = field(default_factory=dict, repr=False)
    _powers_lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    def __post_init__(self) -> None:
        w = np.array(self.w, dtype=float)
        w.setflags(write=False)
        object.__setattr__(self, "w", w)

    def power(self, rounds: int) -> np.ndarray:
        """W^rounds, cached for repeated schedules; safe to call from worker threads."""
        with self._powers_lock:
            cached = self._powers.get(rounds)
        if cached is not None:
            return cached
        result = np.linalg.matrix_power(self.w, rounds)
        result.setflags(write=False)
        with self._powers_lock:
            if rounds not in self._powers and len(self._powers) >= POWER_CACHE_SIZE:
                del self._powers[next(iter(self._powers))]
            self._powers.setdefault(rounds, result)
            return self._powers[rounds]

    def to_csv(self) -> str:
        rows = (",".join(format(v, ".17g") for v in row) for row in self.w)
        return "\n".join(rows) + "\n"


def _second_singular_value(w: np.ndarray) -> float:
    if w.shape[0] < 2:
        return 0.0
    singular = linalg.svdvals(w)
    return float(np.sort(singular)[::-1][1])


def validate_weights(w: np.ndarray, topo: Optional[Topology] = None) -> None:
    """Raise WeightError unless w is a valid consensus matrix (for topo, if given)."""
    n = w.shape[0]
    if w.ndim != 2 or w.shape != (n, n):
        raise WeightError(f"Mixing matrix must be square, got shape {w.shape}")
    if not np.array_equal(w, w.T):
        raise WeightError("Mixing matrix is not symmetric")
    row_err = np.max(np.abs(w.sum(axis=1) - 1.0))
    if row_err > ROW_SUM_TOL:
        raise WeightError(f"Row sums deviate from 1 by {row_err:.3e}")
    if np.any(np.diag(w) <= 0.0):
        raise WeightError("Mixing matrix diagonal must be strictly positive")
    if np.any(w < 0.0):
        raise WeightError("Mixing matrix has negative weights")
    if topo is not None:
        if topo.n != n:
            raise WeightError(f"Mixing matrix has {n} rows but topology has {topo.n} agents")
        support = {(i, j) for i in range(n) for j in range(i + 1, n) if w[i, j] > 0.0}
        if support != set(topo.edges):
            raise WeightError("Off-diagonal support does not match the topology edges")


def consensus_matrix(w: Iterable, topo: Optional[Topology] = None) -> ConsensusMatrix:
    """Wrap a user-supplied mixing matrix after checking every requirement."""
    w = np.array(w, dtype=float)
    validate_weights(w, topo)
    beta = _second_singular_value(w)
    if beta >= 1.0:
        raise WeightError(f"beta = {beta} >= 1; the underlying graph is not connected")
    return ConsensusMatrix(w=w, beta=beta, n=w.shape[0])


def metropolis_weights(topo: Topology) -> ConsensusMatrix:
    """Metropolis-Hastings weights: w_ij = 1 / (1 + max(deg_i, deg_j)) on edges."""
    n = topo.n
    deg = topo.degrees()
    w = np.zeros((n, n))
    for i, j in topo.sorted_edges():
        weight = 1.0 / (1.0 + max(deg[i], deg[j]))
        w[i, j] = weight
        w[j, i] = weight
    for i in range(n):
        w[i, i] = 1.0 - np.sum(w[i])
    return consensus_matrix(w, topo)


def averaging_matrix(n: int) -> ConsensusMatrix:
    """Uniform weights 1/n: exact averaging in a single round (complete graph)."""
    if n < 1:
        raise GraphError(f"Averaging matrix requires n >= 1, got {n}")
    return consensus_matrix(np.full((n, n), 1.0 / n))


# =============================================================================
# Consensus rounds
# =============================================================================

def apply_consensus(cm: ConsensusMatrix, state: np.ndarray, rounds: int) -> np.ndarray:
    """
    Apply `rounds` synchronous mixing rounds to an (n, p) stack of agent blocks.

    Agent i's new block is sum_j w[i][j] * block_j; W (x) I_p is never formed.
    """
    state = np.asarray(state, dtype=float)
    if state.ndim != 2 or state.shape[0] != cm.n:
        raise DimensionError(f"State of shape {state.shape} does not have {cm.n} agent blocks")
    if rounds < 0:
        raise ValueError(f"rounds must be nonnegative, got {rounds}")
    if rounds == 0:
        return state.copy()
    if rounds > DIRECT_ROUNDS:
        return cm.power(rounds) @ state
    out = state
    for _ in range(rounds):
        out = cm.w @ out
    return out


@dataclass(frozen=True)
class SpectralReport:
    beta: float
    eigenvalues: List[float]


def spectral_report(cm: ConsensusMatrix) -> SpectralReport:
    """Mixing rate and the eigenvalues of W in descending order."""
    eigenvalues = np.sort(linalg.eigvalsh(cm.w))[::-1]
    return SpectralReport(beta=cm.beta, eigenvalues=[float(v) for v in eigenvalues])
