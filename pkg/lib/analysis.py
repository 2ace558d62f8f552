"""
Convergence Constants, Bounds and Metrics
=========================================

Theoretical constants derived from a problem instance, the error bounds
built from them, and the per-iteration empirical metrics written to CSV.

Usage:
    from lib.analysis import compute_constants, theorem1_bound, plateau_estimate

    constants = compute_constants(suite, cm, oracle, alpha=0.05)
    bound = theorem1_bound(constants, k=1000, t=3)
    print(bound.total, bound.network)
"""

import csv
import io
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from lib.objectives import ObjectiveSuite, StochasticOracle, gradient, total_value
from lib.topology import ConsensusMatrix

logger = logging.getLogger(__name__)

CSV_HEADER = ("k", "t_k", "comm_total", "evals_total", "mean_err", "cons_dev", "y_cons_dev", "fgap")

# Trailing window for plateau estimates: last 2000 rows or 20%, whichever is smaller
DEFAULT_WINDOW = 2000
DEFAULT_WINDOW_FRACTION = 0.2

PSI_CAP = 0.1


class BoundError(ValueError):
    """The bound machinery does not apply to these constants."""


# =============================================================================
# Theoretical constants
# =============================================================================

@dataclass(frozen=True)
class TheoreticalConstants:
    n: int
    alpha: float
    beta: float
    sigma_sq: float
    gamma_i_list: List[float]
    gamma: float
    gamma_bar: float
    nu: float
    delta: float
    d_sq: float
    psi: float
    psi_upper: float
    c1: float
    c2_sq: float
    theta: float
    cap_c: float
    x0_err: float
    lip_max: float
    alpha_max: float
    alpha_admissible: bool

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


def default_psi(alpha: float, gamma_bar: float) -> float:
    """Half the admissible interval, capped at 0.1."""
    rate = 2.0 * alpha * gamma_bar
    if rate >= 1.0:
        return PSI_CAP
    return min(0.5 * rate / (1.0 - rate), PSI_CAP)


def deviation_radius_sq(nu: float, delta: float, y0_dist_sq: float, u_star_sq: float) -> float:
    """D^2 = 2|y0 - u*|^2 + (8 + 2 nu^3) / nu^3 |u*|^2 + (2 / nu^2) Delta."""
    return 2.0 * y0_dist_sq + (8.0 + 2.0 * nu ** 3) / nu ** 3 * u_star_sq + (2.0 / nu ** 2) * delta


def _initial_stack(suite: ObjectiveSuite, y0: Optional[np.ndarray]) -> np.ndarray:
    if y0 is None:
        return np.zeros((suite.n, suite.p))
    y0 = np.asarray(y0, dtype=float)
    if y0.ndim == 1:
        return np.tile(y0, (suite.n, 1))
    return y0


def compute_constants(
    suite: ObjectiveSuite,
    cm: ConsensusMatrix,
    oracle: Optional[StochasticOracle],
    alpha: float,
    psi: Optional[float] = None,
    y0: Optional[np.ndarray] = None,
    sigma_sq: Optional[float] = None,
) -> TheoreticalConstants:
    """
    Derive every constant of the convergence analysis.

    sigma^2 is the oracle's certified bound unless given explicitly. A
    steplength above alpha_max logs a warning and sets alpha_admissible to
    False; psi outside its open interval and nu >= 1 raise BoundError.
    """
    if alpha <= 0:
        raise BoundError(f"alpha must be positive, got {alpha}")
    if sigma_sq is None:
        sigma_sq = oracle.sigma_sq_bound if oracle is not None else 0.0

    mu = np.asarray(suite.mu_list, dtype=float)
    lip = np.asarray(suite.lip_list, dtype=float)
    gamma_i = mu * lip / (mu + lip)
    gamma = float(np.min(gamma_i))
    gamma_bar = suite.mu_bar * suite.lip_bar / (suite.mu_bar + suite.lip_bar)
    if gamma <= 0 or gamma_bar <= 0:
        raise BoundError(f"gamma={gamma} and gamma_bar={gamma_bar} must both be positive")

    alpha_max = float(np.min(2.0 / (mu + lip)))
    admissible = alpha <= alpha_max * (1.0 + 1e-12)
    if not admissible:
        logger.warning(f"alpha={alpha} exceeds alpha_max={alpha_max:.6g}; bounds are reported but not guaranteed")

    nu = 2.0 * alpha * gamma
    if nu >= 1.0:
        raise BoundError(f"nu = 2*alpha*gamma = {nu:.6g} >= 1; alpha={alpha} is too large for the bound machinery")

    n = suite.n
    delta = n * alpha ** 2 * sigma_sq
    stack = _initial_stack(suite, y0)
    u_star = suite.u_star
    y0_dist_sq = float(np.sum((stack - u_star) ** 2))
    u_star_sq = float(np.sum(u_star ** 2))
    d_sq = deviation_radius_sq(nu, delta, y0_dist_sq, u_star_sq)

    rate = 2.0 * alpha * gamma_bar
    psi_upper = rate / (1.0 - rate) if rate < 1.0 else math.inf
    if psi is None:
        psi = default_psi(alpha, gamma_bar)
    if not (0.0 < psi < psi_upper):
        raise BoundError(f"psi={psi} outside (0, {psi_upper:.6g})")

    c1 = (1.0 + psi) * (1.0 - rate)
    c2_sq = alpha ** 2 * (1.0 + 1.0 / psi) * suite.lip_max ** 2 * d_sq
    theta = max(cm.beta ** 2, (c1 + 1.0) / 2.0)
    x0_err = float(np.sum((np.mean(stack, axis=0) - suite.x_star) ** 2))
    cap_c = max(x0_err, 2.0 * c2_sq / (1.0 - c1)) if c1 < 1.0 else math.inf

    return TheoreticalConstants(
        n=n,
        alpha=float(alpha),
        beta=float(cm.beta),
        sigma_sq=float(sigma_sq),
        gamma_i_list=[float(g) for g in gamma_i],
        gamma=gamma,
        gamma_bar=float(gamma_bar),
        nu=nu,
        delta=delta,
        d_sq=d_sq,
        psi=float(psi),
        psi_upper=psi_upper,
        c1=c1,
        c2_sq=c2_sq,
        theta=theta,
        cap_c=cap_c,
        x0_err=x0_err,
        lip_max=float(suite.lip_max),
        alpha_max=alpha_max,
        alpha_admissible=admissible,
    )


def constants_to_json(constants: TheoreticalConstants) -> str:
    """Flat key-value JSON; infinite values are written as null."""

    def clean(value: Any) -> Any:
        if isinstance(value, float) and not math.isfinite(value):
            return None
        if isinstance(value, list):
            return [clean(v) for v in value]
        return value

    return json.dumps({k: clean(v) for k, v in constants.to_dict().items()}, indent=2, sort_keys=True) + "\n"


# =============================================================================
# Bounds
# =============================================================================

@dataclass(frozen=True)
class BoundTerms:
    transient: float
    network: float
    noise: float

    @property
    def total(self) -> float:
        return self.transient + self.network + self.noise


def _require_contraction(constants: TheoreticalConstants) -> float:
    if constants.c1 >= 1.0:
        raise BoundError(f"c1 = {constants.c1:.6g} >= 1; the bound does not contract")
    return 1.0 - constants.c1


def sgd_neighborhood(
    constants: Optional[TheoreticalConstants],
    alpha: float,
    sigma_sq: float,
    gamma: Optional[float] = None,
) -> float:
    """Limiting mean-square error of SGD: alpha * sigma^2 / (2 gamma)."""
    if gamma is None:
        gamma = constants.gamma_bar
    return alpha * sigma_sq / (2.0 * gamma)


def theorem1_bound(
    constants: TheoreticalConstants,
    k: float,
    t: float,
    x0_err: Optional[float] = None,
) -> BoundTerms:
    """
    Error bound after k iterations with t consensus rounds each:
    c1^k e0 + c2^2 beta^(2t) / (1 - c1) + alpha^2 sigma^2 / (n (1 - c1)).

    k may be math.inf for the limiting value.
    """
    gap = _require_contraction(constants)
    e0 = constants.x0_err if x0_err is None else x0_err
    transient = 0.0 if k == math.inf else abs(constants.c1) ** k * e0
    network = constants.c2_sq * constants.beta ** (2 * t) / gap
    return BoundTerms(transient=transient, network=network, noise=theorem2_neighborhood(constants))


def theorem2_neighborhood(constants: TheoreticalConstants) -> float:
    gap = _require_contraction(constants)
    return constants.alpha ** 2 * constants.sigma_sq / (constants.n * gap)


def theorem3_bound(constants: TheoreticalConstants, k: float) -> float:
    """Linear-rate bound for the increasing schedule: C theta^k + noise."""
    noise = theorem2_neighborhood(constants)
    if k == math.inf:
        return noise
    return constants.cap_c * constants.theta ** k + noise


def near_dgd_plus_bound(constants: TheoreticalConstants, k: float, x0_err: Optional[float] = None) -> float:
    return theorem1_bound(constants, k, t=k, x0_err=x0_err).total


def deviation_bound(constants: TheoreticalConstants, t: float) -> float:
    """Expected local deviation bound beta^(2t) D^2."""
    return constants.beta ** (2 * t) * constants.d_sq


def local_iterate_bounds(
    constants: TheoreticalConstants,
    k: float,
    t: float,
    x0_err: Optional[float] = None,
) -> Tuple[float, float]:
    """Bounds on E|x_i,k - x*|^2 and E|y_i,k - x*|^2 for any agent i."""
    terms = theorem1_bound(constants, k, t, x0_err)
    shared = 2.0 * terms.total
    dev = deviation_bound(constants, t)
    return shared + 2.0 * dev, shared + 4.0 * dev + 16.0 * constants.d_sq


# =============================================================================
# Metrics
# =============================================================================

@dataclass(frozen=True)
class MetricsRow:
    k: int
    t_k: int
    comm_total: int
    evals_total: int
    mean_err: float
    cons_dev: float
    y_cons_dev: float
    fgap: float
    samples_total: int = 0
    mean_norm: float = 0.0
    grad_avg_dev: Optional[float] = None

    def csv_fields(self) -> List[str]:
        return [
            str(self.k),
            str(self.t_k),
            str(self.comm_total),
            str(self.evals_total),
            format(self.mean_err, ".17g"),
            format(self.cons_dev, ".17g"),
            format(self.y_cons_dev, ".17g"),
            format(self.fgap, ".17g"),
        ]


def consensus_deviation(stack: np.ndarray) -> float:
    """(1/n) sum_i |s_i - mean(s)|^2."""
    stack = np.asarray(stack, dtype=float)
    return float(np.mean(np.sum((stack - stack.mean(axis=0)) ** 2, axis=1)))


def _gradient_average_deviation(x: np.ndarray, suite: ObjectiveSuite) -> float:
    if x.shape[0] != suite.n:
        x = np.broadcast_to(x[0], (suite.n, suite.p))
    center = x.mean(axis=0)
    h = np.mean([gradient(suite, i, x[i]) for i in range(suite.n)], axis=0)
    h_bar = np.mean([gradient(suite, i, center) for i in range(suite.n)], axis=0)
    return float(np.sum((h - h_bar) ** 2))


def compute_metrics_row(
    x: np.ndarray,
    y: np.ndarray,
    suite: ObjectiveSuite,
    k: int = 0,
    t_k: int = 0,
    comm_total: int = 0,
    evals_total: int = 0,
    samples_total: int = 0,
    exact_diagnostics: bool = False,
) -> MetricsRow:
    y_bar = np.mean(y, axis=0)
    gap = total_value(suite, y_bar) - suite.f_star
    return MetricsRow(
        k=k,
        t_k=t_k,
        comm_total=comm_total,
        evals_total=evals_total,
        mean_err=float(np.sum((y_bar - suite.x_star) ** 2)),
        cons_dev=consensus_deviation(x),
        y_cons_dev=consensus_deviation(y),
        # f* is computed to solver tolerance, so round-off can dip below zero
        fgap=max(0.0, float(gap)),
        samples_total=samples_total,
        mean_norm=float(np.linalg.norm(np.mean(x, axis=0))),
        grad_avg_dev=_gradient_average_deviation(x, suite) if exact_diagnostics else None,
    )


def final_normalized_deviation(row: MetricsRow) -> float:
    """sqrt(cons_dev) / |mean x|, 0 when the agents agree."""
    if row.cons_dev == 0.0:
        return 0.0
    if row.mean_norm == 0.0:
        return math.inf
    return math.sqrt(row.cons_dev) / row.mean_norm


# =============================================================================
# Run records
# =============================================================================

@dataclass
class RunRecord:
    label: str
    seed: Optional[int]
    n: int
    rows: List[MetricsRow] = field(default_factory=list)
    final_x: Optional[np.ndarray] = None
    final_y: Optional[np.ndarray] = None
    error: Optional[str] = None

    @property
    def diverged(self) -> bool:
        return self.error is not None

    @property
    def last(self) -> MetricsRow:
        return self.rows[-1]

    def errors(self) -> np.ndarray:
        return np.array([row.mean_err for row in self.rows])

    def to_csv(self) -> str:
        return record_to_csv(self)


def record_to_csv(record: RunRecord) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for row in record.rows:
        writer.writerow(row.csv_fields())
    return buffer.getvalue()


def _error_series(record: Union[RunRecord, Sequence]) -> np.ndarray:
    if isinstance(record, RunRecord):
        return record.errors()
    items = list(record)
    if items and isinstance(items[0], MetricsRow):
        return np.array([row.mean_err for row in items])
    return np.asarray(items, dtype=float)


def plateau_window(length: int, window_fraction: float = DEFAULT_WINDOW_FRACTION, cap: int = DEFAULT_WINDOW) -> int:
    return max(1, min(cap, int(length * window_fraction)))


def plateau_estimate(
    record: Union[RunRecord, Sequence],
    window_fraction: float = DEFAULT_WINDOW_FRACTION,
    window: Optional[int] = None,
) -> float:
    """Mean of mean_err over the trailing window of a record (or error series)."""
    series = _error_series(record)
    if series.size == 0:
        raise ValueError("Cannot estimate a plateau from an empty record")
    if window is None:
        window = plateau_window(series.size, window_fraction)
    if window < 1 or window > series.size:
        raise ValueError(f"Window {window} does not fit a record of {series.size} rows")
    return float(np.mean(series[-window:]))


def mean_and_stderr(values: Sequence[float]) -> Tuple[float, float]:
    """Sample mean and its standard error (0 for a single value)."""
    arr = np.asarray(list(values), dtype=float)
    if arr.size == 0:
        raise ValueError("mean_and_stderr needs at least one value")
    if arr.size == 1:
        return float(arr[0]), 0.0
    return float(arr.mean()), float(arr.std(ddof=1) / math.sqrt(arr.size))


# A measured neighborhood within this factor range of the predicted one counts as a match
NEIGHBORHOOD_BRACKET = (0.25, 4.0)


def in_neighborhood_bracket(ratio: float, bracket: Tuple[float, float] = NEIGHBORHOOD_BRACKET) -> bool:
    low, high = bracket
    return low <= ratio <= high


@dataclass
class DominanceReport:
    """Iterations where a seed-averaged error curve exceeds its bound.

    `violations` exceed the bound by more than `tolerance` standard errors;
    `flagged` exceed it by less and are reported rather than failed.
    """

    means: List[float]
    stderrs: List[float]
    bounds: List[float]
    violations: List[int] = field(default_factory=list)
    flagged: List[int] = field(default_factory=list)

    @property
    def dominated(self) -> bool:
        return not self.violations


def bound_dominance(
    errors_by_seed: Sequence[Sequence[float]],
    bounds: Sequence[float],
    tolerance: float = 2.0,
) -> DominanceReport:
    """
    Compare the across-seed mean of per-iteration errors against a bound.

    Args:
        errors_by_seed: one error series per seed, all of equal length
        bounds: bound value per iteration
        tolerance: standard errors of slack before an excess is a violation
    """
    errors = np.asarray(errors_by_seed, dtype=float)
    bounds = [float(b) for b in bounds]
    if errors.ndim != 2 or errors.shape[1] != len(bounds):
        raise ValueError(f"Expected (seeds, {len(bounds)}) errors, got shape {errors.shape}")
    report = DominanceReport(means=[], stderrs=[], bounds=bounds)
    for k, bound in enumerate(bounds):
        mean, stderr = mean_and_stderr(errors[:, k])
        report.means.append(mean)
        report.stderrs.append(stderr)
        if mean > bound + tolerance * stderr:
            report.violations.append(k)
        elif mean > bound:
            report.flagged.append(k)
    if report.flagged:
        logger.warning(f"{len(report.flagged)} iterations exceed the bound within {tolerance} standard errors")
    return report
