"""
Local Objectives and Stochastic Gradient Oracles
================================================

Local functions f_i (quadratic or regularized logistic loss), the global
reference solution x*, datasets in LIBSVM format, and the stochastic
gradient oracle every method draws from.

Usage:
    from lib.objectives import make_synthetic_classification, make_logistic_suite, StochasticOracle

    ds = make_synthetic_classification(M=2000, p=50, seed=1)
    suite = make_logistic_suite(ds, n=10)
    oracle = StochasticOracle(suite, mode="minibatch", batch=16, seed=0)
    g = oracle.stochastic_gradient(agent=3, x=suite.x_star, k=0)
"""

import logging
import math
import os
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from scipy import linalg
from scipy.special import expit

logger = logging.getLogger(__name__)

QUADRATIC_TOL = 1e-10
LOGISTIC_TOL = 1e-8
MAX_SOLVER_ITERS = 1_000_000
LABEL_FLIP_RATE = 0.05
CERTIFICATION_FACTOR = 2.0

ORACLE_MODES = ("exact", "additive_gaussian", "minibatch")


class DatasetFormatError(ValueError):
    """Malformed dataset file or inconsistent dataset arrays."""


class OracleError(ValueError):
    """Oracle mode incompatible with the objective suite."""


class SolverError(RuntimeError):
    """The reference solver did not reach its tolerance."""


class SuiteError(ValueError):
    """Local objectives violate the strong convexity / smoothness requirements."""


# =============================================================================
# Datasets
# =============================================================================

@dataclass(frozen=True, eq=False)
class Dataset:
    """Binary classification data: features A (M x p) and labels b in {-1, +1}."""

    features: np.ndarray
    labels: np.ndarray

    def __post_init__(self) -> None:
        features = np.atleast_2d(np.asarray(self.features, dtype=float))
        labels = np.asarray(self.labels, dtype=float).ravel()
        if features.shape[0] != labels.shape[0]:
            raise DatasetFormatError(f"{features.shape[0]} feature rows but {labels.shape[0]} labels")
        if not np.all(np.isin(labels, (-1.0, 1.0))):
            raise DatasetFormatError("Every label must be -1 or +1")
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "labels", labels)

    @property
    def M(self) -> int:
        return self.features.shape[0]

    @property
    def p(self) -> int:
        return self.features.shape[1]


def make_synthetic_classification(M: int, p: int, seed: int = 0) -> Dataset:
    """Gaussian features, labels from a planted separator with 5% label flips."""
    if M < 2 or p < 1:
        raise DatasetFormatError(f"Synthetic dataset needs M >= 2 and p >= 1, got M={M}, p={p}")
    rng = np.random.default_rng(seed)
    features = rng.normal(size=(M, p))
    planted = rng.normal(size=p)
    labels = np.where(features @ planted >= 0.0, 1.0, -1.0)
    flips = rng.random(M) < LABEL_FLIP_RATE
    labels[flips] = -labels[flips]
    return Dataset(features=features, labels=labels)


def partition_dataset(ds: Dataset, n: int, seed: int = 0) -> List[np.ndarray]:
    """
    Split sample indices into n contiguous blocks of a seeded shuffle.

    The first M mod n agents receive one extra sample.
    """
    if n < 1 or n > ds.M:
        raise DatasetFormatError(f"Cannot split {ds.M} samples across {n} agents")
    order = np.random.default_rng(seed).permutation(ds.M)
    base, extra = divmod(ds.M, n)
    blocks = []
    start = 0
    for i in range(n):
        size = base + (1 if i < extra else 0)
        blocks.append(np.sort(order[start:start + size]))
        start += size
    return blocks


# =========================
# LIBSVM text format
# =========================

_LABEL_MAP = {1.0: 1.0, -1.0: -1.0, 2.0: -1.0}


def parse_libsvm(text: str, n_features: Optional[int] = None, source: str = "<text>") -> Dataset:
    """
    Parse "label idx:val idx:val ..." lines with 1-based feature indices.

    Labels 1/2 (as shipped with mushrooms) map to +1/-1; -1/+1 are kept.
    Blank lines are ignored; anything malformed raises DatasetFormatError
    with the offending line number.
    """
    labels = []
    rows = []
    max_index = 0
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        try:
            label = float(parts[0])
        except ValueError:
            raise DatasetFormatError(f"{source}:{lineno}: label {parts[0]!r} is not a number")
        if label not in _LABEL_MAP:
            raise DatasetFormatError(f"{source}:{lineno}: unsupported label {parts[0]!r}")

        entries = []
        for token in parts[1:]:
            idx_text, sep, val_text = token.partition(":")
            if not sep:
                raise DatasetFormatError(f"{source}:{lineno}: expected idx:val, got {token!r}")
            try:
                idx = int(idx_text)
                val = float(val_text)
            except ValueError:
                raise DatasetFormatError(f"{source}:{lineno}: bad feature entry {token!r}")
            if idx < 1:
                raise DatasetFormatError(f"{source}:{lineno}: feature index {idx} must be >= 1")
            if n_features is not None and idx > n_features:
                raise DatasetFormatError(f"{source}:{lineno}: feature index {idx} exceeds p={n_features}")
            entries.append((idx - 1, val))
            max_index = max(max_index, idx)

        labels.append(_LABEL_MAP[label])
        rows.append(entries)

    if not rows:
        raise DatasetFormatError(f"{source}: no samples found")

    p = n_features if n_features is not None else max_index
    features = np.zeros((len(rows), max(p, 1)))
    for r, entries in enumerate(rows):
        for c, val in entries:
            features[r, c] = val

    positives = sum(1 for b in labels if b > 0)
    logger.info(f"Read {len(rows)} samples from {source}: {positives} positive, {len(rows) - positives} negative, p={p}")
    return Dataset(features=features, labels=np.array(labels))


def read_libsvm(path: str, n_features: Optional[int] = None) -> Dataset:
    with open(path, "r", encoding="utf-8") as f:
        return parse_libsvm(f.read(), n_features=n_features, source=path)


def dataset_to_libsvm(ds: Dataset) -> str:
    lines = []
    for row, label in zip(ds.features, ds.labels):
        entries = " ".join(f"{j + 1}:{format(v, '.17g')}" for j, v in enumerate(row) if v != 0.0)
        lines.append(f"{int(label):+d} {entries}".rstrip())
    return "\n".join(lines) + "\n"


def write_libsvm(ds: Dataset, path: str) -> None:
    tmp_path = f"{path}.tmp"
    with open(tmp_path, "w", encoding="utf-8") as f:
        f.write(dataset_to_libsvm(ds))
    os.replace(tmp_path, path)


# =============================================================================
# Local objectives
# =============================================================================

class LocalObjective:
    """Common interface of the local functions f_i."""

    kind: str = ""
    mu: float
    lip: float
    p: int

    def value(self, x: np.ndarray) -> float:
        raise NotImplementedError

    def gradient(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError


class QuadraticObjective(LocalObjective):
    """f_i(x) = 1/2 x'Ax - b'x with A symmetric positive definite."""

    kind = "quadratic"

    def __init__(self, a: np.ndarray, b: np.ndarray):
        a = np.atleast_2d(np.asarray(a, dtype=float))
        b = np.asarray(b, dtype=float).ravel()
        if a.shape != (b.shape[0], b.shape[0]):
            raise SuiteError(f"Quadratic A of shape {a.shape} does not match b of length {b.shape[0]}")
        if not np.array_equal(a, a.T):
            raise SuiteError("Quadratic A must be symmetric")
        eigenvalues = linalg.eigvalsh(a)
        self.a = a
        self.b = b
        self.p = b.shape[0]
        self.mu = float(eigenvalues[0])
        self.lip = float(eigenvalues[-1])

    def value(self, x: np.ndarray) -> float:
        return float(0.5 * x @ (self.a @ x) - self.b @ x)

    def gradient(self, x: np.ndarray) -> np.ndarray:
        return self.a @ x - self.b


class LogisticObjective(LocalObjective):
    """
    f_i(x) = (1/|S_i|) sum_s log(1 + exp(-b_s <A_s, x>)) + reg * ||x||^2.

    L_i uses the 1/4 bound on the sigmoid curvature with the spectral norm of
    the local feature block.
    """

    kind = "logistic"

    def __init__(self, features: np.ndarray, labels: np.ndarray, reg: float, samples: Optional[np.ndarray] = None):
        self.features = np.atleast_2d(np.asarray(features, dtype=float))
        self.labels = np.asarray(labels, dtype=float).ravel()
        if self.features.shape[0] != self.labels.shape[0] or self.labels.shape[0] == 0:
            raise SuiteError("Logistic objective needs a nonempty, consistent local sample set")
        if reg < 0:
            raise SuiteError(f"Regularization weight must be nonnegative, got {reg}")
        self.reg = float(reg)
        self.samples = None if samples is None else np.asarray(samples)
        self.p = self.features.shape[1]
        m = self.sample_count
        top_singular = float(linalg.svdvals(self.features)[0]) if self.features.size else 0.0
        self.mu = 2.0 * self.reg
        self.lip = 2.0 * self.reg + top_singular ** 2 / (4.0 * m)

    @property
    def sample_count(self) -> int:
        return self.labels.shape[0]

    def value(self, x: np.ndarray) -> float:
        margins = self.labels * (self.features @ x)
        return float(np.mean(np.logaddexp(0.0, -margins)) + self.reg * (x @ x))

    def _loss_gradient(self, features: np.ndarray, labels: np.ndarray, x: np.ndarray) -> np.ndarray:
        coef = -labels * expit(-labels * (features @ x))
        return features.T @ coef / labels.shape[0]

    def gradient(self, x: np.ndarray) -> np.ndarray:
        return self._loss_gradient(self.features, self.labels, x) + 2.0 * self.reg * x

    def batch_gradient(self, rows: np.ndarray, x: np.ndarray) -> np.ndarray:
        """Gradient of the regularized loss over the given local rows (repeats allowed)."""
        return self._loss_gradient(self.features[rows], self.labels[rows], x) + 2.0 * self.reg * x

    def per_sample_gradients(self, x: np.ndarray) -> np.ndarray:
        """Loss gradients of every local sample as rows (regularizer excluded)."""
        coef = -self.labels * expit(-self.labels * (self.features @ x))
        return coef[:, None] * self.features


# =============================================================================
# Objective suite and reference solution
# =============================================================================

@dataclass(frozen=True, eq=False)
class ObjectiveSuite:
    """Local functions with their constants, and the solution of min sum_i f_i."""

    locals: List[LocalObjective]
    x_star: np.ndarray
    f_star: float
    u_star_list: List[np.ndarray]

    @property
    def kind(self) -> str:
        return self.locals[0].kind

    @property
    def n(self) -> int:
        return len(self.locals)

    @property
    def p(self) -> int:
        return self.locals[0].p

    @property
    def mu_list(self) -> List[float]:
        return [obj.mu for obj in self.locals]

    @property
    def lip_list(self) -> List[float]:
        return [obj.lip for obj in self.locals]

    @property
    def mu_bar(self) -> float:
        return float(np.mean(self.mu_list))

    @property
    def lip_bar(self) -> float:
        return float(np.mean(self.lip_list))

    @property
    def lip_max(self) -> float:
        return float(max(self.lip_list))

    @property
    def u_star(self) -> np.ndarray:
        """Stacked local minimizers, shape (n, p)."""
        return np.vstack(self.u_star_list)


def gradient(suite: ObjectiveSuite, agent: int, x: np.ndarray) -> np.ndarray:
    """Exact gradient of f_agent at x."""
    if not 0 <= agent < suite.n:
        raise IndexError(f"Agent {agent} outside [0, {suite.n})")
    return suite.locals[agent].gradient(x)


def objective_value(suite: ObjectiveSuite, agent: int, x: np.ndarray) -> float:
    return suite.locals[agent].value(x)


def total_value(suite: ObjectiveSuite, x: np.ndarray) -> float:
    """f(x) = sum_i f_i(x)."""
    return float(sum(obj.value(x) for obj in suite.locals))


def average_gradient(suite: ObjectiveSuite, x: np.ndarray) -> np.ndarray:
    """Gradient of the average objective (1/n) sum_i f_i at x."""
    return np.mean(np.vstack([obj.gradient(x) for obj in suite.locals]), axis=0)


def _total_gradient(objectives: Sequence[LocalObjective], x: np.ndarray) -> np.ndarray:
    return np.sum(np.vstack([obj.gradient(x) for obj in objectives]), axis=0)


def _accelerated_descent(
    grad_fn: Callable[[np.ndarray], np.ndarray],
    x0: np.ndarray,
    mu: float,
    lip: float,
    tol: float,
    label: str,
) -> np.ndarray:
    """Nesterov descent for strongly convex functions with gradient restarts."""
    step = 1.0 / lip
    root_q = math.sqrt(mu / lip)
    momentum = (1.0 - root_q) / (1.0 + root_q)

    x = x0.copy()
    if np.linalg.norm(grad_fn(x)) <= tol:
        return x
    y = x.copy()
    for it in range(MAX_SOLVER_ITERS):
        x_new = y - step * grad_fn(y)
        g_new = grad_fn(x_new)
        if np.linalg.norm(g_new) <= tol:
            logger.debug(f"Reference solver for {label} converged in {it + 1} iterations")
            return x_new
        if g_new @ (x_new - x) > 0.0:
            y = x_new
        else:
            y = x_new + momentum * (x_new - x)
        x = x_new

    raise SolverError(
        f"Reference solver for {label} did not reach ||grad|| <= {tol:g} within {MAX_SOLVER_ITERS} iterations"
    )


@dataclass(frozen=True)
class ReferenceSolution:
    x_star: np.ndarray
    f_star: float
    u_star_list: List[np.ndarray]


def solve_reference(objectives: Sequence[LocalObjective]) -> ReferenceSolution:
    """
    Solve min sum_i f_i and every local problem min f_i.

    Quadratics use a direct linear solve; logistic objectives use accelerated
    full-gradient descent until ||grad|| <= 1e-8.
    """
    kind = objectives[0].kind
    p = objectives[0].p

    if kind == "quadratic":
        a_sum = np.sum([obj.a for obj in objectives], axis=0)
        b_sum = np.sum([obj.b for obj in objectives], axis=0)
        x_star = linalg.solve(a_sum, b_sum, assume_a="pos")
        u_star_list = [linalg.solve(obj.a, obj.b, assume_a="pos") for obj in objectives]
    else:
        x_star = _accelerated_descent(
            lambda x: _total_gradient(objectives, x),
            np.zeros(p),
            mu=sum(obj.mu for obj in objectives),
            lip=sum(obj.lip for obj in objectives),
            tol=LOGISTIC_TOL,
            label="global objective",
        )
        u_star_list = [
            _accelerated_descent(obj.gradient, np.zeros(p), obj.mu, obj.lip, LOGISTIC_TOL, f"agent {i}")
            for i, obj in enumerate(objectives)
        ]

    f_star = float(sum(obj.value(x_star) for obj in objectives))
    return ReferenceSolution(x_star=x_star, f_star=f_star, u_star_list=u_star_list)


def _stationarity_tol(kind: str, x: np.ndarray) -> float:
    if kind == "quadratic":
        return QUADRATIC_TOL * max(1.0, float(np.linalg.norm(x)))
    return LOGISTIC_TOL


def build_suite(objectives: Sequence[LocalObjective]) -> ObjectiveSuite:
    """Validate local constants, solve the reference problems and assemble the suite."""
    objectives = list(objectives)
    if not objectives:
        raise SuiteError("An objective suite needs at least one local objective")
    kinds = {obj.kind for obj in objectives}
    dims = {obj.p for obj in objectives}
    if len(kinds) != 1 or len(dims) != 1:
        raise SuiteError(f"Local objectives must share kind and dimension, got kinds={kinds}, dims={dims}")
    for i, obj in enumerate(objectives):
        if not obj.mu > 0.0:
            raise SuiteError(f"Agent {i}: strong convexity constant must be positive, got {obj.mu}")
        if obj.lip < obj.mu:
            raise SuiteError(f"Agent {i}: L_i={obj.lip} is smaller than mu_i={obj.mu}")

    ref = solve_reference(objectives)
    kind = objectives[0].kind

    residual = float(np.linalg.norm(_total_gradient(objectives, ref.x_star)))
    if residual > _stationarity_tol(kind, ref.x_star):
        raise SolverError(f"||grad f(x*)|| = {residual:.3e} exceeds the solver tolerance")
    for i, (obj, u) in enumerate(zip(objectives, ref.u_star_list)):
        local_residual = float(np.linalg.norm(obj.gradient(u)))
        if local_residual > _stationarity_tol(kind, u):
            raise SolverError(f"Agent {i}: ||grad f_i(u_i*)|| = {local_residual:.3e} exceeds the solver tolerance")

    return ObjectiveSuite(locals=objectives, x_star=ref.x_star, f_star=ref.f_star, u_star_list=ref.u_star_list)


def make_quadratic_suite(
    n: int,
    p: int,
    mu: float = 1.0,
    lip: float = 10.0,
    seed: int = 0,
    heterogeneous: bool = True,
) -> ObjectiveSuite:
    """
    Random quadratics whose Hessian spectra span [mu, lip].

    Each local minimizer is drawn around the all-ones vector; with
    heterogeneous=False every agent holds the same local function.
    """
    if not 0.0 < mu <= lip:
        raise SuiteError(f"Quadratic family needs 0 < mu <= lip, got mu={mu}, lip={lip}")
    if p == 1 and mu != lip:
        raise SuiteError(f"A one-dimensional quadratic has a single curvature; got mu={mu} != lip={lip}")
    rng = np.random.default_rng(seed)

    def draw() -> QuadraticObjective:
        q, _ = np.linalg.qr(rng.normal(size=(p, p)))
        if p == 1:
            spectrum = np.array([mu])
        else:
            spectrum = np.sort(rng.uniform(mu, lip, size=p))
            spectrum[0], spectrum[-1] = mu, lip
        a = (q * spectrum) @ q.T
        a = 0.5 * (a + a.T)
        center = 1.0 + rng.normal(size=p)
        return QuadraticObjective(a=a, b=a @ center)

    if heterogeneous:
        objectives = [draw() for _ in range(n)]
    else:
        shared = draw()
        objectives = [shared] * n
    return build_suite(objectives)


def make_logistic_suite(ds: Dataset, n: int, reg: Optional[float] = None, seed: int = 0) -> ObjectiveSuite:
    """Evenly partition a dataset over n agents; reg defaults to 1/M."""
    reg = 1.0 / ds.M if reg is None else reg
    blocks = partition_dataset(ds, n, seed=seed)
    objectives = [
        LogisticObjective(ds.features[rows], ds.labels[rows], reg=reg, samples=rows)
        for rows in blocks
    ]
    return build_suite(objectives)


def classification_accuracy(ds: Dataset, x: np.ndarray) -> float:
    predictions = np.where(ds.features @ x >= 0.0, 1.0, -1.0)
    return float(np.mean(predictions == ds.labels))


# =============================================================================
# Stochastic gradient oracle
# =============================================================================

class StochasticOracle:
    """
    Stochastic gradients g_i(x, xi) with per-agent, per-iteration substreams.

    Agent i's draw at iteration index k comes from a Philox generator keyed
    on (seed, i) with counter block k, so every method that asks for
    (i, k) sees the same samples no matter how often or in which order it
    calls. Stream slot n is reserved for the agent selector of the
    centralized SGD reference.
    """

    def __init__(
        self,
        suite: ObjectiveSuite,
        mode: str = "exact",
        seed: int = 0,
        batch: int = 16,
        with_replacement: bool = True,
        sigma: float = 0.0,
        log_draws: bool = False,
    ):
        if mode not in ORACLE_MODES:
            raise OracleError(f"Unknown oracle mode {mode!r}; expected one of {', '.join(ORACLE_MODES)}")
        if mode == "minibatch":
            if suite.kind != "logistic":
                raise OracleError("minibatch mode requires a logistic (sample-based) suite")
            if batch < 1:
                raise OracleError(f"Batch size must be >= 1, got {batch}")
            smallest = min(obj.sample_count for obj in suite.locals)
            if not with_replacement and batch > smallest:
                raise OracleError(f"Batch {batch} without replacement exceeds the smallest local set ({smallest})")
        if sigma < 0:
            raise OracleError(f"sigma must be nonnegative, got {sigma}")
        if seed < 0:
            raise OracleError(f"Oracle seed must be nonnegative, got {seed}")

        self.suite = suite
        self.mode = mode
        self.seed = int(seed)
        self.batch = int(batch)
        self.with_replacement = bool(with_replacement)
        self.sigma = float(sigma)
        self.log_draws = log_draws

        self.evaluations = [0] * suite.n
        self.aggregate_evaluations = 0
        self.draw_log: List[Tuple[int, int, Tuple[int, ...]]] = []
        self._keys = [
            np.random.SeedSequence(self.seed, spawn_key=(slot,)).generate_state(2, dtype=np.uint64)
            for slot in range(suite.n + 1)
        ]
        self.sigma_sq_bound, self.aggregate_sigma_sq_bound = self._certify_variance()

    def with_seed(self, seed: int) -> "StochasticOracle":
        return StochasticOracle(
            self.suite,
            mode=self.mode,
            seed=seed,
            batch=self.batch,
            with_replacement=self.with_replacement,
            sigma=self.sigma,
            log_draws=self.log_draws,
        )

    @property
    def samples_per_eval(self) -> int:
        return self.batch if self.mode == "minibatch" else 1

    def stream(self, slot: int, k: int) -> np.random.Generator:
        """Generator for stream slot (agent index, or n for the selector) at iteration k."""
        return np.random.Generator(np.random.Philox(key=self._keys[slot], counter=int(k) << 64))

    # -------------------------------------------------------------------------
    # Draws
    # -------------------------------------------------------------------------

    def _draw(self, agent: int, x: np.ndarray, k: int) -> np.ndarray:
        obj = self.suite.locals[agent]
        if self.mode == "exact":
            return obj.gradient(x)
        rng = self.stream(agent, k)
        if self.mode == "additive_gaussian":
            grad = obj.gradient(x)
            if self.sigma == 0.0:
                return grad
            return grad + rng.normal(0.0, self.sigma / math.sqrt(self.suite.p), size=self.suite.p)

        m = obj.sample_count
        if self.with_replacement:
            rows = rng.integers(0, m, size=self.batch)
        else:
            rows = rng.choice(m, size=self.batch, replace=False)
        if self.log_draws:
            self.draw_log.append((agent, int(k), tuple(int(r) for r in rows)))
        return obj.batch_gradient(rows, x)

    def stochastic_gradient(self, agent: int, x: np.ndarray, k: Optional[int] = None) -> np.ndarray:
        """
        One stochastic gradient of f_agent at x.

        When k is omitted the agent's own call count is used as the
        iteration index, giving a fresh substream per call.
        """
        if not 0 <= agent < self.suite.n:
            raise IndexError(f"Agent {agent} outside [0, {self.suite.n})")
        if k is None:
            k = self.evaluations[agent]
        self.evaluations[agent] += 1
        return self._draw(agent, x, k)

    def aggregate_gradient(self, x: np.ndarray, k: Optional[int] = None) -> np.ndarray:
        """Unbiased stochastic gradient of the average objective for centralized SGD."""
        if k is None:
            k = self.aggregate_evaluations
        self.aggregate_evaluations += 1
        n = self.suite.n
        if self.mode == "exact":
            return average_gradient(self.suite, x)
        if self.mode == "additive_gaussian":
            grad = average_gradient(self.suite, x)
            if self.sigma == 0.0:
                return grad
            rng = self.stream(0, k)
            return grad + rng.normal(0.0, self.sigma / math.sqrt(self.suite.p), size=self.suite.p)
        agent = 0 if n == 1 else int(self.stream(n, k).integers(0, n))
        return self._draw(agent, x, k)

    # -------------------------------------------------------------------------
    # Variance certification
    # -------------------------------------------------------------------------

    def _minibatch_variance(self, obj: LogisticObjective, x: np.ndarray) -> float:
        per_sample = obj.per_sample_gradients(x)
        spread = float(np.mean(np.sum((per_sample - per_sample.mean(axis=0)) ** 2, axis=1)))
        m = obj.sample_count
        variance = spread / self.batch
        if not self.with_replacement:
            variance *= (m - self.batch) / (m - 1) if m > 1 else 0.0
        return variance

    def _certify_variance(self) -> Tuple[float, float]:
        if self.mode == "exact":
            return 0.0, 0.0
        if self.mode == "additive_gaussian":
            return self.sigma ** 2, self.sigma ** 2

        points = [np.zeros(self.suite.p), self.suite.x_star] + list(self.suite.u_star_list)
        local_worst = 0.0
        aggregate_worst = 0.0
        for x in points:
            variances = [self._minibatch_variance(obj, x) for obj in self.suite.locals]
            grads = np.vstack([obj.gradient(x) for obj in self.suite.locals])
            heterogeneity = np.sum((grads - grads.mean(axis=0)) ** 2, axis=1)
            local_worst = max(local_worst, max(variances))
            aggregate_worst = max(aggregate_worst, float(np.mean(np.array(variances) + heterogeneity)))
        return CERTIFICATION_FACTOR * local_worst, CERTIFICATION_FACTOR * aggregate_worst


def stochastic_gradient(
    oracle: StochasticOracle,
    suite: ObjectiveSuite,
    agent: int,
    x: np.ndarray,
    k: Optional[int] = None,
) -> np.ndarray:
    """Module-level form of StochasticOracle.stochastic_gradient."""
    if oracle.mode == "minibatch" and suite.kind != "logistic":
        raise OracleError("minibatch mode requires a logistic (sample-based) suite")
    return oracle.stochastic_gradient(agent, x, k)
