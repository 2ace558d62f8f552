"""
Decentralized Optimization Methods
==================================

Single-step state machines over stacked agent states (n blocks of length p):

- near_dgd: t(k) consensus rounds, then one local stochastic gradient step
- dgd: one mixing round plus a gradient step at the pre-mixing iterate
- extra: EXTRA recursion with W_bar = (I + W) / 2
- dsgt: gradient tracking with a tracker stack s
- centralized_sgd / centralized_minibatch: single-block references over the
  average objective

Every step is barrier-synchronized: all agents read the previous state, then
all write the next one.
"""

import logging
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, List, Optional

import numpy as np

from lib.analysis import MetricsRow, RunRecord, compute_metrics_row
from lib.objectives import ObjectiveSuite, StochasticOracle
from lib.topology import ConsensusMatrix, apply_consensus

logger = logging.getLogger(__name__)

METHOD_NAMES = ("near_dgd", "dgd", "extra", "dsgt", "centralized_sgd", "centralized_minibatch")
CENTRALIZED = ("centralized_sgd", "centralized_minibatch")
SCHEDULE_KINDS = ("constant", "increasing", "doubling")

# Any coordinate beyond this magnitude counts as divergence
DIVERGENCE_LIMIT = 1e12


class ScheduleError(ValueError):
    """Invalid consensus schedule or method specification."""


class DivergenceError(RuntimeError):
    """A method produced a nonfinite or exploding state."""

    def __init__(self, method: str, iteration: int, detail: str = ""):
        self.method = method
        self.iteration = iteration
        message = f"{method} diverged at iteration {iteration}"
        super().__init__(f"{message}: {detail}" if detail else message)


# =============================================================================
# Schedules and method specs
# =============================================================================

@dataclass(frozen=True)
class ConsensusSchedule:
    """
    Consensus rounds per iteration.

    constant(t): t every iteration; increasing(): k + 1 at iteration k
    (so iteration 0 already mixes once); doubling(a, b): a * 2^floor(k / b).
    """

    kind: str = "constant"
    t: int = 1
    a: int = 1
    b: int = 1

    def __post_init__(self) -> None:
        if self.kind not in SCHEDULE_KINDS:
            raise ScheduleError(f"Unknown schedule kind {self.kind!r}")
        if self.kind == "constant" and self.t < 1:
            raise ScheduleError(f"Constant schedule needs t >= 1, got {self.t}")
        if self.kind == "doubling" and (self.a < 1 or self.b < 1):
            raise ScheduleError(f"Doubling schedule needs a >= 1 and b >= 1, got a={self.a}, b={self.b}")

    @classmethod
    def constant(cls, t: int) -> "ConsensusSchedule":
        return cls(kind="constant", t=t)

    @classmethod
    def increasing(cls) -> "ConsensusSchedule":
        return cls(kind="increasing")

    @classmethod
    def doubling(cls, a: int, b: int) -> "ConsensusSchedule":
        return cls(kind="doubling", a=a, b=b)

    def rounds_at(self, k: int) -> int:
        if self.kind == "constant":
            return self.t
        if self.kind == "increasing":
            return k + 1
        return self.a * 2 ** (k // self.b)

    def total_rounds(self, iterations: int) -> int:
        return sum(self.rounds_at(k) for k in range(iterations))

    @property
    def label(self) -> str:
        if self.kind == "constant":
            return str(self.t)
        if self.kind == "increasing":
            return "plus"
        return f"{self.a}_{self.b}_x2"


@dataclass(frozen=True)
class MethodSpec:
    name: str
    schedule: Optional[ConsensusSchedule] = None
    label: Optional[str] = None

    def __post_init__(self) -> None:
        if self.name not in METHOD_NAMES:
            raise ScheduleError(f"Unknown method {self.name!r}; expected one of {', '.join(METHOD_NAMES)}")
        if self.name == "near_dgd" and self.schedule is None:
            object.__setattr__(self, "schedule", ConsensusSchedule.constant(1))
        if self.name != "near_dgd" and self.schedule is not None:
            raise ScheduleError(f"Method {self.name} does not take a consensus schedule")

    @property
    def centralized(self) -> bool:
        return self.name in CENTRALIZED

    @property
    def display_label(self) -> str:
        if self.label:
            return self.label
        if self.name == "near_dgd":
            return f"near_dgd_{self.schedule.label}"
        return self.name


@dataclass
class MethodState:
    """
    Iterates and cost counters of one method.

    `y` is the post-gradient stack and `x` the post-consensus stack; methods
    other than near_dgd keep x and y equal. `aux` holds EXTRA's previous
    iterate / gradients and DSGT's tracker. `init_grad_evals` is the one-off
    cost of DSGT's tracker initialization s_0 = g_0, kept out of the
    per-step totals.
    """

    method: MethodSpec
    x: np.ndarray
    y: np.ndarray
    alpha: float
    k: int = 0
    comm_rounds_total: int = 0
    grad_evals_total: int = 0
    grad_samples_total: int = 0
    init_grad_evals: int = 0
    last_rounds: int = 0
    last_gradient_mean: Optional[np.ndarray] = None
    aux: Dict[str, np.ndarray] = field(default_factory=dict)


def average_blocks(s: np.ndarray) -> np.ndarray:
    """Arithmetic mean of the agent blocks."""
    return np.mean(np.asarray(s, dtype=float), axis=0)


def init_state(spec: MethodSpec, suite: ObjectiveSuite, alpha: float, y0: Optional[np.ndarray] = None) -> MethodState:
    """Initial state with y0 = 0 unless a p-vector or (n, p) stack is given."""
    n = 1 if spec.centralized else suite.n
    if y0 is None:
        stack = np.zeros((n, suite.p))
    else:
        y0 = np.asarray(y0, dtype=float)
        if y0.ndim == 1:
            stack = np.tile(y0, (n, 1))
        elif spec.centralized:
            stack = average_blocks(y0)[None, :]
        else:
            stack = y0.copy()
    if stack.shape != (n, suite.p):
        raise ValueError(f"Initial state of shape {stack.shape} does not match ({n}, {suite.p})")
    return MethodState(method=spec, x=stack.copy(), y=stack.copy(), alpha=float(alpha))


# =============================================================================
# Steps
# =============================================================================

def _require(ms: MethodState, *names: str) -> None:
    if ms.method.name not in names:
        raise ScheduleError(f"Step for {', '.join(names)} called on a {ms.method.name} state")


def _draw_all(oracle: StochasticOracle, stack: np.ndarray, k: int) -> np.ndarray:
    return np.vstack([oracle.stochastic_gradient(i, stack[i], k) for i in range(stack.shape[0])])


def _guard(ms: MethodState) -> MethodState:
    for name in ("x", "y"):
        stack = getattr(ms, name)
        if not np.all(np.isfinite(stack)):
            raise DivergenceError(ms.method.display_label, ms.k - 1, f"nonfinite values in {name}")
        if np.max(np.abs(stack)) > DIVERGENCE_LIMIT:
            raise DivergenceError(ms.method.display_label, ms.k - 1, f"|{name}| exceeded {DIVERGENCE_LIMIT:g}")
    return ms


def _advance(ms: MethodState, oracle: StochasticOracle, rounds: int, evals: int, **changes) -> MethodState:
    return _guard(
        replace(
            ms,
            k=ms.k + 1,
            comm_rounds_total=ms.comm_rounds_total + rounds,
            grad_evals_total=ms.grad_evals_total + evals,
            grad_samples_total=ms.grad_samples_total + evals * oracle.samples_per_eval,
            last_rounds=rounds,
            **changes,
        )
    )


def near_dgd_step(ms: MethodState, cm: ConsensusMatrix, oracle: StochasticOracle, suite: ObjectiveSuite) -> MethodState:
    """x_k = Z^t(k) y_k, then y_{k+1} = x_k - alpha * g(x_k, xi_k)."""
    _require(ms, "near_dgd")
    t = ms.method.schedule.rounds_at(ms.k)
    x = apply_consensus(cm, ms.y, t)
    grads = _draw_all(oracle, x, ms.k)
    y = x - ms.alpha * grads
    return _advance(ms, oracle, t, suite.n, x=x, y=y, last_gradient_mean=average_blocks(grads))


def dgd_step(ms: MethodState, cm: ConsensusMatrix, oracle: StochasticOracle, suite: ObjectiveSuite) -> MethodState:
    """x_{k+1} = Z x_k - alpha * g(x_k, xi_k)."""
    _require(ms, "dgd")
    grads = _draw_all(oracle, ms.x, ms.k)
    x = apply_consensus(cm, ms.x, 1) - ms.alpha * grads
    return _advance(ms, oracle, 1, suite.n, x=x, y=x, last_gradient_mean=average_blocks(grads))


def extra_step(ms: MethodState, cm: ConsensusMatrix, oracle: StochasticOracle, suite: ObjectiveSuite) -> MethodState:
    """
    EXTRA: x_1 = W x_0 - alpha g_0, then
    x_{k+1} = x_k + W x_k - (x_{k-1} + W x_{k-1}) / 2 - alpha (g_k - g_{k-1}).

    W x_{k-1} is carried over from the previous iteration, so each
    iteration costs one communication round.
    """
    _require(ms, "extra")
    grads = _draw_all(oracle, ms.x, ms.k)
    mixed = apply_consensus(cm, ms.x, 1)
    if "x_prev" not in ms.aux:
        x = mixed - ms.alpha * grads
    else:
        x = (
            ms.x + mixed
            - 0.5 * (ms.aux["x_prev"] + ms.aux["mixed_prev"])
            - ms.alpha * (grads - ms.aux["g_prev"])
        )
    aux = {"x_prev": ms.x, "mixed_prev": mixed, "g_prev": grads}
    return _advance(ms, oracle, 1, suite.n, x=x, y=x, aux=aux, last_gradient_mean=average_blocks(grads))


def dsgt_step(ms: MethodState, cm: ConsensusMatrix, oracle: StochasticOracle, suite: ObjectiveSuite) -> MethodState:
    """
    Gradient tracking: x_{k+1} = W (x_k - alpha s_k), s_{k+1} = W s_k + g_{k+1} - g_k,
    with s_0 = g_0 drawn on the first step.

    Each step costs n gradient evaluations; the n draws for g_0 go to
    `init_grad_evals` instead of the per-step totals.
    """
    _require(ms, "dsgt")
    aux = dict(ms.aux)
    init_evals = ms.init_grad_evals
    if "s" not in aux:
        g0 = _draw_all(oracle, ms.x, ms.k)
        aux["s"] = g0
        aux["g_prev"] = g0
        init_evals += suite.n
    x = apply_consensus(cm, ms.x - ms.alpha * aux["s"], 1)
    grads = _draw_all(oracle, x, ms.k + 1)
    s = apply_consensus(cm, aux["s"], 1) + grads - aux["g_prev"]
    return _advance(
        ms, oracle, 2, suite.n,
        x=x, y=x, aux={"s": s, "g_prev": grads}, last_gradient_mean=average_blocks(grads),
        init_grad_evals=init_evals,
    )


def centralized_step(ms: MethodState, oracle: StochasticOracle, suite: ObjectiveSuite) -> MethodState:
    """
    x_{k+1} = x_k - alpha g over the average objective.

    centralized_sgd draws one aggregate stochastic gradient; centralized_minibatch
    averages one draw per agent (batch n*B at the sample level).
    """
    _require(ms, *CENTRALIZED)
    point = ms.x[0]
    if ms.method.name == "centralized_sgd":
        g = oracle.aggregate_gradient(point, ms.k)
        evals = 1
    else:
        g = average_blocks(np.vstack([oracle.stochastic_gradient(i, point, ms.k) for i in range(suite.n)]))
        evals = suite.n
    x = ms.x - ms.alpha * g[None, :]
    return _advance(ms, oracle, 0, evals, x=x, y=x, last_gradient_mean=g)


def step(ms: MethodState, cm: ConsensusMatrix, oracle: StochasticOracle, suite: ObjectiveSuite) -> MethodState:
    name = ms.method.name
    if name == "near_dgd":
        return near_dgd_step(ms, cm, oracle, suite)
    if name == "dgd":
        return dgd_step(ms, cm, oracle, suite)
    if name == "extra":
        return extra_step(ms, cm, oracle, suite)
    if name == "dsgt":
        return dsgt_step(ms, cm, oracle, suite)
    return centralized_step(ms, oracle, suite)


# =============================================================================
# Runs
# =============================================================================

def _row(ms: MethodState, suite: ObjectiveSuite, exact_diagnostics: bool) -> MetricsRow:
    return compute_metrics_row(
        ms.x,
        ms.y,
        suite,
        k=ms.k,
        t_k=ms.last_rounds,
        comm_total=ms.comm_rounds_total,
        evals_total=ms.grad_evals_total,
        samples_total=ms.grad_samples_total,
        exact_diagnostics=exact_diagnostics,
    )


def run(
    spec: MethodSpec,
    cm: ConsensusMatrix,
    oracle: StochasticOracle,
    suite: ObjectiveSuite,
    iterations: int,
    alpha: float,
    seed: Optional[int] = None,
    y0: Optional[np.ndarray] = None,
    exact_diagnostics: bool = False,
    on_row: Optional[Callable[[MetricsRow], None]] = None,
) -> RunRecord:
    """
    Execute `iterations` steps and record one metrics row per iteration.

    Row 0 is the initial state. With `seed` the oracle is re-keyed, so runs
    of different methods with the same seed share every (agent, k) draw.
    DivergenceError propagates with the method label and iteration.
    """
    if iterations < 0:
        raise ValueError(f"iterations must be nonnegative, got {iterations}")
    if not spec.centralized and cm.n != suite.n:
        raise ValueError(f"Consensus matrix has {cm.n} agents but the suite has {suite.n}")
    if seed is not None:
        oracle = oracle.with_seed(seed)

    ms = init_state(spec, suite, alpha, y0)
    rows: List[MetricsRow] = []

    def emit(row: MetricsRow) -> None:
        rows.append(row)
        if on_row is not None:
            on_row(row)

    emit(_row(ms, suite, exact_diagnostics))
    for _ in range(iterations):
        ms = step(ms, cm, oracle, suite)
        emit(_row(ms, suite, exact_diagnostics))

    return RunRecord(
        label=spec.display_label,
        seed=oracle.seed,
        n=ms.x.shape[0],
        rows=rows,
        final_x=ms.x,
        final_y=ms.y,
    )
