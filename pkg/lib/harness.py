"""
Experiment Harness
==================

Parses JSON experiment configurations, wires topology, objectives, oracle and
methods together, runs every (method, seed) pair and writes:

- `<label>__seed<seed>.csv`   one metrics record per run
- `constants.json`            theoretical constants of the problem instance
- `summary.json`              plateaus, final deviations, costs and bounds
- `plateau_ratios.json`       only for agent-count sweeps

Usage:
    from lib.harness import load_config, run_experiment

    cfg = load_config("quick")
    result = run_experiment(cfg, out_dir="results/quick")
"""

import argparse
import json
import logging
import math
import os
import sys
import tempfile
from dataclasses import dataclass, field
from typing import Annotated, Any, Dict, List, Literal, Optional, Sequence, Tuple, Union

import anyio
import numpy as np
from pydantic import AliasChoices, BaseModel, ConfigDict, Field, ValidationError, model_validator

from data import list_presets, preset_path
from lib import settings
from lib.analysis import (
    BoundError,
    RunRecord,
    TheoreticalConstants,
    compute_constants,
    constants_to_json,
    final_normalized_deviation,
    in_neighborhood_bracket,
    mean_and_stderr,
    plateau_estimate,
    plateau_window,
    sgd_neighborhood,
    theorem1_bound,
    theorem2_neighborhood,
)
from lib.methods import ConsensusSchedule, DivergenceError, MethodSpec, ScheduleError, run
from lib.objectives import (
    DatasetFormatError,
    ObjectiveSuite,
    OracleError,
    SolverError,
    StochasticOracle,
    SuiteError,
    make_logistic_suite,
    make_quadratic_suite,
    make_synthetic_classification,
    read_libsvm,
)
from lib.topology import ConsensusMatrix, GraphError, Topology, generate_graph, metropolis_weights

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_DIVERGED = 2
EXIT_IO = 3


class ConfigError(ValueError):
    """Invalid experiment configuration; `path` names the offending key."""

    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)


# =========================
# Config models
# =========================

class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class GraphConfig(_Strict):
    kind: Literal["erdos_renyi", "path", "ring", "complete", "star"] = "erdos_renyi"
    n: int = Field(..., ge=1)
    p_edge: Optional[float] = Field(None, gt=0, le=1)
    seed: int = Field(0, ge=0)

    @model_validator(mode="after")
    def _edge_probability(self) -> "GraphConfig":
        if self.kind == "erdos_renyi" and self.p_edge is None:
            raise ValueError("erdos_renyi graphs need p_edge")
        return self


class SyntheticProblem(_Strict):
    kind: Literal["synthetic"]
    M: int = Field(..., ge=1)
    p: int = Field(..., ge=1)
    seed: int = Field(0, ge=0)
    reg: Optional[float] = Field(None, gt=0)


class LibsvmProblem(_Strict):
    kind: Literal["libsvm"]
    path: str = Field(..., min_length=1)
    n_features: Optional[int] = Field(None, ge=1)
    seed: int = Field(0, ge=0)
    reg: Optional[float] = Field(None, gt=0)


class QuadraticProblem(_Strict):
    kind: Literal["quadratic"]
    p: int = Field(..., ge=1)
    # Optional restatement of the agent count; must match graph.n
    n: Optional[int] = Field(None, ge=1)
    mu: float = Field(1.0, gt=0)
    lip: float = Field(10.0, gt=0)
    seed: int = Field(0, ge=0)
    heterogeneous: bool = True

    @model_validator(mode="after")
    def _conditioning(self) -> "QuadraticProblem":
        if self.lip < self.mu:
            raise ValueError(f"lip={self.lip} must be >= mu={self.mu}")
        if self.p == 1 and self.lip != self.mu:
            raise ValueError(f"p=1 needs lip == mu, got mu={self.mu}, lip={self.lip}")
        return self


ProblemConfig = Annotated[Union[SyntheticProblem, LibsvmProblem, QuadraticProblem], Field(discriminator="kind")]
PROBLEM_KINDS = ("synthetic", "libsvm", "quadratic")


class OracleConfig(_Strict):
    mode: Literal["exact", "additive_gaussian", "minibatch"] = "exact"
    batch: int = Field(16, ge=1)
    sigma: float = Field(0.0, ge=0)
    with_replacement: bool = True


class ScheduleConfig(_Strict):
    kind: Literal["constant", "increasing", "doubling"] = "constant"
    t: int = Field(1, ge=1)
    a: int = Field(1, ge=1)
    b: int = Field(1, ge=1)

    def to_schedule(self) -> ConsensusSchedule:
        return ConsensusSchedule(kind=self.kind, t=self.t, a=self.a, b=self.b)


class MethodConfig(_Strict):
    name: Literal["near_dgd", "dgd", "extra", "dsgt", "centralized_sgd", "centralized_minibatch"]
    schedule: Optional[ScheduleConfig] = None
    label: Optional[str] = Field(None, min_length=1)

    @model_validator(mode="after")
    def _schedule_owner(self) -> "MethodConfig":
        if self.schedule is not None and self.name != "near_dgd":
            raise ValueError(f"{self.name} does not take a schedule")
        return self

    def to_spec(self) -> MethodSpec:
        schedule = self.schedule.to_schedule() if self.schedule is not None else None
        return MethodSpec(name=self.name, schedule=schedule, label=self.label)


class ExperimentConfig(_Strict):
    graph: GraphConfig
    # "dataset" is accepted as an alternative key
    problem: ProblemConfig = Field(..., validation_alias=AliasChoices("problem", "dataset"))
    oracle: OracleConfig = Field(default_factory=OracleConfig)
    methods: List[MethodConfig] = Field(..., min_length=1)
    alpha: float = Field(..., gt=0)
    iterations: int = Field(..., ge=1)
    seeds: List[int] = Field(..., min_length=1)
    psi: Optional[float] = Field(None, gt=0)
    window: int = Field(2000, ge=1)
    y0: Optional[List[float]] = None
    agent_counts: Optional[List[int]] = Field(None, min_length=1)
    output_dir: Optional[str] = None

    @model_validator(mode="after")
    def _consistency(self) -> "ExperimentConfig":
        labels = [m.to_spec().display_label for m in self.methods]
        duplicates = sorted({label for label in labels if labels.count(label) > 1})
        if duplicates:
            raise ValueError(f"duplicate method labels: {', '.join(duplicates)}")
        if any(s < 0 for s in self.seeds):
            raise ValueError("seeds must be nonnegative")
        if len(set(self.seeds)) != len(self.seeds):
            raise ValueError("seeds must be distinct")
        if self.agent_counts is not None and any(c < 1 for c in self.agent_counts):
            raise ValueError("agent_counts must be positive")
        p = getattr(self.problem, "p", None)
        if self.y0 is not None and p is not None and len(self.y0) != p:
            raise ValueError(f"y0 has {len(self.y0)} entries but the problem has p={p}")
        n = getattr(self.problem, "n", None)
        if n is not None and n != self.graph.n:
            raise ValueError(f"problem.n={n} does not match graph.n={self.graph.n}")
        if self.oracle.mode == "minibatch" and self.problem.kind == "quadratic":
            raise ValueError("minibatch oracles need a sample-based (logistic) problem")
        return self

    def method_specs(self) -> List[MethodSpec]:
        return [m.to_spec() for m in self.methods]


# =========================
# Parsing
# =========================

def _error_path(loc: Sequence[Any]) -> str:
    parts = []
    for i, item in enumerate(loc):
        # Discriminated unions insert the tag into the location
        if i > 0 and loc[i - 1] in ("problem", "dataset") and item in PROBLEM_KINDS:
            continue
        parts.append(str(item))
    return ".".join(parts)


def parse_config(text: str) -> ExperimentConfig:
    """Validate a JSON document into an ExperimentConfig; errors carry the key path."""
    try:
        payload = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError("", f"invalid JSON at line {e.lineno}: {e.msg}")
    if not isinstance(payload, dict):
        raise ConfigError("", "configuration must be a JSON object")
    try:
        return ExperimentConfig.model_validate(payload)
    except ValidationError as e:
        first = e.errors()[0]
        raise ConfigError(_error_path(first["loc"]), first["msg"])


def serialize_config(cfg: ExperimentConfig) -> str:
    return cfg.model_dump_json(indent=2) + "\n"


def load_config(source: str) -> ExperimentConfig:
    """Load a config from a file path or a bundled preset name."""
    path = source if os.path.exists(source) else preset_path(source)
    if path is None:
        raise ConfigError("", f"no config file or preset named {source!r}")
    with open(path, "r", encoding="utf-8") as f:
        return parse_config(f.read())


# =========================
# Problem wiring
# =========================

@dataclass
class ProblemInstance:
    topology: Topology
    cm: ConsensusMatrix
    suite: ObjectiveSuite
    oracle: StochasticOracle

    @property
    def n(self) -> int:
        return self.suite.n


def _build_suite(cfg: ExperimentConfig, n: int) -> ObjectiveSuite:
    problem = cfg.problem
    if problem.kind == "quadratic":
        return make_quadratic_suite(
            n, problem.p, mu=problem.mu, lip=problem.lip, seed=problem.seed, heterogeneous=problem.heterogeneous
        )
    if problem.kind == "synthetic":
        ds = make_synthetic_classification(problem.M, problem.p, seed=problem.seed)
    else:
        ds = read_libsvm(problem.path, n_features=problem.n_features)
    if ds.M < n:
        raise ConfigError("problem", f"dataset has {ds.M} samples, fewer than the {n} agents")
    return make_logistic_suite(ds, n, reg=problem.reg, seed=problem.seed)


def build_problem(cfg: ExperimentConfig, n: Optional[int] = None) -> ProblemInstance:
    """Topology, Metropolis weights, objective suite and oracle for n agents (default graph.n)."""
    n = cfg.graph.n if n is None else n
    topology = generate_graph(cfg.graph.kind, n, seed=cfg.graph.seed, p_edge=cfg.graph.p_edge)
    cm = metropolis_weights(topology)
    suite = _build_suite(cfg, n)
    if cfg.y0 is not None and len(cfg.y0) != suite.p:
        raise ConfigError("y0", f"has {len(cfg.y0)} entries but the problem has p={suite.p}")
    oracle = StochasticOracle(
        suite,
        mode=cfg.oracle.mode,
        seed=cfg.seeds[0],
        batch=cfg.oracle.batch,
        with_replacement=cfg.oracle.with_replacement,
        sigma=cfg.oracle.sigma,
    )
    logger.info(
        f"Built {suite.kind} problem: n={n}, p={suite.p}, graph={topology.kind} "
        f"({topology.edge_count} edges), beta={cm.beta:.4f}, sigma^2 bound={oracle.sigma_sq_bound:.4g}"
    )
    return ProblemInstance(topology=topology, cm=cm, suite=suite, oracle=oracle)


def _initial_point(cfg: ExperimentConfig) -> Optional[np.ndarray]:
    return None if cfg.y0 is None else np.asarray(cfg.y0, dtype=float)


def instance_constants(cfg: ExperimentConfig, instance: ProblemInstance) -> TheoreticalConstants:
    return compute_constants(
        instance.suite, instance.cm, instance.oracle, cfg.alpha, psi=cfg.psi, y0=_initial_point(cfg)
    )


# =========================
# Summary models
# =========================

class RunSummary(BaseModel):
    label: str
    method: str
    seed: int
    csv: str
    rows: int
    plateau: Optional[float] = None
    final_deviation: Optional[float] = None
    comm_rounds_total: int = 0
    grad_evals_total: int = 0
    grad_samples_total: int = 0
    diverged: bool = False
    error: Optional[str] = None


class MethodSummary(BaseModel):
    label: str
    method: str
    schedule: Optional[str] = None
    seeds: List[int]
    diverged_runs: int = 0
    plateau_mean: Optional[float] = None
    plateau_stderr: Optional[float] = None
    final_deviation_mean: Optional[float] = None
    comm_rounds_total: Optional[int] = None
    grad_evals_total: Optional[int] = None
    bound_kind: Optional[str] = None
    bound_value: Optional[float] = None
    plateau_within_bound: Optional[bool] = None
    # plateau_mean / bound_value; the bracket test applies to the stochastic NEAR-DGD neighborhood
    plateau_bound_ratio: Optional[float] = None
    plateau_in_bracket: Optional[bool] = None
    alpha_admissible: Optional[bool] = None


class SummaryReport(BaseModel):
    n: int
    alpha: float
    window: Optional[int] = None
    constants: Optional[Dict[str, Any]] = None
    constants_error: Optional[str] = None
    runs: List[RunSummary] = Field(default_factory=list)
    methods: List[MethodSummary] = Field(default_factory=list)

    @property
    def all_diverged(self) -> bool:
        return bool(self.runs) and all(r.diverged for r in self.runs)


def csv_name(label: str, seed: int) -> str:
    return f"{label}__seed{seed}.csv"


def _finite(value: Optional[float]) -> Optional[float]:
    if value is None or not math.isfinite(value):
        return None
    return float(value)


def method_bound(
    spec: MethodSpec,
    constants: Optional[TheoreticalConstants],
    aggregate_sigma_sq: Optional[float] = None,
) -> Tuple[Optional[str], Optional[float]]:
    """The limiting error bound the summary compares a method's plateau against."""
    if constants is None:
        return None, None
    try:
        if spec.name == "near_dgd":
            if spec.schedule.kind == "constant":
                return "theorem1_limit", theorem1_bound(constants, math.inf, spec.schedule.t).total
            return "theorem2_neighborhood", theorem2_neighborhood(constants)
        if spec.name == "centralized_sgd":
            sigma_sq = constants.sigma_sq if aggregate_sigma_sq is None else aggregate_sigma_sq
            return "sgd_neighborhood", sgd_neighborhood(constants, constants.alpha, sigma_sq)
        if spec.name == "centralized_minibatch":
            return "sgd_neighborhood", sgd_neighborhood(constants, constants.alpha, constants.sigma_sq / constants.n)
    except BoundError as e:
        logger.warning(f"No bound for {spec.display_label}: {e}")
    return None, None


def summarize(
    records: Sequence[RunRecord],
    specs: Optional[Dict[str, MethodSpec]] = None,
    constants: Optional[TheoreticalConstants] = None,
    window: Optional[int] = None,
    aggregate_sigma_sq: Optional[float] = None,
    constants_error: Optional[str] = None,
) -> SummaryReport:
    """
    One entry per run plus a cross-seed entry per method.

    Diverged runs keep their partial rows but are left out of plateau means.
    Completed runs of one method must all have the same length.
    """
    if not records:
        raise ValueError("summarize needs at least one record")
    specs = specs or {}
    cap = window if window is not None else 2000

    by_label: Dict[str, List[RunRecord]] = {}
    for record in records:
        by_label.setdefault(record.label, []).append(record)

    runs: List[RunSummary] = []
    methods: List[MethodSummary] = []
    for label, group in by_label.items():
        lengths = {len(r.rows) for r in group if not r.diverged}
        if len(lengths) > 1:
            raise ValueError(f"Records for {label} have mismatched lengths {sorted(lengths)}")
        spec = specs.get(label)
        method = spec.name if spec is not None else label

        plateaus: List[float] = []
        deviations: List[float] = []
        for record in group:
            entry = RunSummary(
                label=label,
                method=method,
                seed=record.seed if record.seed is not None else 0,
                csv=csv_name(label, record.seed if record.seed is not None else 0),
                rows=len(record.rows),
                diverged=record.diverged,
                error=record.error,
            )
            if record.rows:
                last = record.last
                entry.comm_rounds_total = last.comm_total
                entry.grad_evals_total = last.evals_total
                entry.grad_samples_total = last.samples_total
            if not record.diverged and record.rows:
                plateau = plateau_estimate(record, window=plateau_window(len(record.rows), cap=cap))
                deviation = final_normalized_deviation(record.last)
                entry.plateau = _finite(plateau)
                entry.final_deviation = _finite(deviation)
                plateaus.append(plateau)
                deviations.append(deviation)
            runs.append(entry)

        summary = MethodSummary(
            label=label,
            method=method,
            schedule=spec.schedule.label if spec is not None and spec.schedule is not None else None,
            seeds=[r.seed for r in group if r.seed is not None],
            diverged_runs=sum(1 for r in group if r.diverged),
            alpha_admissible=constants.alpha_admissible if constants is not None else None,
        )
        completed = [r for r in group if not r.diverged and r.rows]
        if completed:
            summary.comm_rounds_total = completed[0].last.comm_total
            summary.grad_evals_total = completed[0].last.evals_total
        if plateaus:
            mean, stderr = mean_and_stderr(plateaus)
            summary.plateau_mean = _finite(mean)
            summary.plateau_stderr = _finite(stderr)
            summary.final_deviation_mean = _finite(float(np.mean(deviations)))
        if spec is not None:
            kind, value = method_bound(spec, constants, aggregate_sigma_sq)
            summary.bound_kind = kind
            summary.bound_value = _finite(value)
            if value is not None and summary.plateau_mean is not None:
                summary.plateau_within_bound = summary.plateau_mean <= value
                if value > 0:
                    summary.plateau_bound_ratio = _finite(summary.plateau_mean / value)
                if kind == "theorem2_neighborhood" and summary.plateau_bound_ratio is not None:
                    summary.plateau_in_bracket = in_neighborhood_bracket(summary.plateau_bound_ratio)
        methods.append(summary)

    return SummaryReport(
        n=records[0].n if constants is None else constants.n,
        alpha=constants.alpha if constants is not None else 0.0,
        window=window,
        constants=json.loads(constants_to_json(constants)) if constants is not None else None,
        constants_error=constants_error,
        runs=runs,
        methods=methods,
    )


def plateau_ratios(summaries: Dict[int, SummaryReport]) -> Dict[str, Dict[str, Any]]:
    """Per method: cross-seed plateau for each agent count and its ratio to the smallest count."""
    counts = sorted(summaries)
    ratios: Dict[str, Dict[str, Any]] = {}
    for count in counts:
        for entry in summaries[count].methods:
            slot = ratios.setdefault(entry.label, {"plateau": {}, "ratio": {}})
            slot["plateau"][str(count)] = entry.plateau_mean
    for slot in ratios.values():
        base = slot["plateau"].get(str(counts[0]))
        for count in counts:
            value = slot["plateau"].get(str(count))
            slot["ratio"][str(count)] = value / base if value is not None and base else None
    return ratios


# =========================
# Running
# =========================

def _current_umask() -> int:
    mask = os.umask(0)
    os.umask(mask)
    return mask


def write_atomic(path: str, text: str) -> None:
    """Write through a temp file in the target directory, then rename."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as f:
            f.write(text)
        # mkstemp creates 0600 files; results get the usual umask-derived mode
        os.chmod(tmp, 0o666 & ~_current_umask())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.remove(tmp)
        raise


@dataclass
class RunJob:
    spec: MethodSpec
    seed: int
    instance: ProblemInstance
    alpha: float
    iterations: int
    y0: Optional[np.ndarray] = None


def execute_job(job: RunJob) -> RunRecord:
    """Run one (method, seed) pair; divergence becomes an error record with the rows so far."""
    rows = []
    label = job.spec.display_label
    logger.info(f"Starting {label} seed={job.seed} ({job.iterations} iterations)")
    try:
        record = run(
            job.spec,
            job.instance.cm,
            job.instance.oracle,
            job.instance.suite,
            job.iterations,
            job.alpha,
            seed=job.seed,
            y0=job.y0,
            on_row=rows.append,
        )
    except DivergenceError as e:
        logger.warning(f"{label} seed={job.seed}: {e}")
        n = 1 if job.spec.centralized else job.instance.n
        return RunRecord(label=label, seed=job.seed, n=n, rows=rows, error=str(e))
    logger.info(f"Finished {label} seed={job.seed}: final mean_err={record.last.mean_err:.4g}")
    return record


async def _run_jobs(jobs: List[RunJob], workers: int) -> List[RunRecord]:
    results: List[Optional[RunRecord]] = [None] * len(jobs)
    limiter = anyio.CapacityLimiter(max(1, workers))

    async def worker(index: int, job: RunJob) -> None:
        results[index] = await anyio.to_thread.run_sync(execute_job, job, limiter=limiter)

    async with anyio.create_task_group() as tg:
        for index, job in enumerate(jobs):
            tg.start_soon(worker, index, job)
    return results


def run_jobs(jobs: List[RunJob], workers: Optional[int] = None) -> List[RunRecord]:
    """Run jobs on worker threads; results come back in job order."""
    return anyio.run(_run_jobs, jobs, settings.WORKERS if workers is None else workers)


@dataclass
class ExperimentResult:
    out_dir: str
    summaries: Dict[int, SummaryReport] = field(default_factory=dict)
    ratios: Optional[Dict[str, Dict[str, Any]]] = None

    @property
    def all_diverged(self) -> bool:
        return all(s.all_diverged for s in self.summaries.values())


def _run_suite(cfg: ExperimentConfig, n: int, out_dir: str, workers: Optional[int]) -> SummaryReport:
    instance = build_problem(cfg, n)
    constants = None
    constants_error = None
    try:
        constants = instance_constants(cfg, instance)
    except BoundError as e:
        constants_error = str(e)
        logger.warning(f"Theoretical constants unavailable for n={n}: {e}")

    specs = cfg.method_specs()
    y0 = _initial_point(cfg)
    jobs = [
        RunJob(spec=spec, seed=seed, instance=instance, alpha=cfg.alpha, iterations=cfg.iterations, y0=y0)
        for spec in specs
        for seed in cfg.seeds
    ]
    records = run_jobs(jobs, workers)

    for record in records:
        write_atomic(os.path.join(out_dir, csv_name(record.label, record.seed)), record.to_csv())
    if constants is not None:
        write_atomic(os.path.join(out_dir, "constants.json"), constants_to_json(constants))

    report = summarize(
        records,
        specs={spec.display_label: spec for spec in specs},
        constants=constants,
        window=cfg.window,
        aggregate_sigma_sq=instance.oracle.aggregate_sigma_sq_bound,
        constants_error=constants_error,
    )
    report.n = n
    report.alpha = cfg.alpha
    write_atomic(os.path.join(out_dir, "summary.json"), report.model_dump_json(indent=2) + "\n")
    return report


def run_experiment(cfg: ExperimentConfig, out_dir: Optional[str] = None, workers: Optional[int] = None) -> ExperimentResult:
    """
    Run every configured (method, seed) pair and write CSV / JSON outputs.

    With agent_counts each count gets its own suite under `n<count>/` and a
    top-level plateau_ratios.json. Outputs are byte-identical across reruns
    and worker counts.
    """
    out_dir = out_dir or cfg.output_dir or settings.OUTPUT_DIR
    os.makedirs(out_dir, exist_ok=True)
    result = ExperimentResult(out_dir=out_dir)

    if cfg.agent_counts:
        for count in cfg.agent_counts:
            result.summaries[count] = _run_suite(cfg, count, os.path.join(out_dir, f"n{count}"), workers)
        result.ratios = plateau_ratios(result.summaries)
        write_atomic(
            os.path.join(out_dir, "plateau_ratios.json"),
            json.dumps(result.ratios, indent=2, sort_keys=True) + "\n",
        )
    else:
        result.summaries[cfg.graph.n] = _run_suite(cfg, cfg.graph.n, out_dir, workers)

    logger.info(f"Experiment finished; outputs in {out_dir}")
    return result


# =========================
# CLI
# =========================

def _parse_seeds(raw: str) -> List[int]:
    try:
        return [int(s) for s in raw.split(",") if s.strip()]
    except ValueError:
        raise ConfigError("seeds", f"cannot parse {raw!r} as comma-separated integers")


def apply_overrides(cfg: ExperimentConfig, seeds: Optional[str] = None, iterations: Optional[int] = None) -> ExperimentConfig:
    payload = cfg.model_dump()
    if seeds is not None:
        payload["seeds"] = _parse_seeds(seeds)
    if iterations is not None:
        payload["iterations"] = iterations
    return parse_config(json.dumps(payload))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="neardgd",
        description="Stochastic decentralized optimization experiments",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )
    parser.add_argument("--log-level", default=None, help="Override NEARDGD_LOG_LEVEL")
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="Run an experiment and write CSV/JSON outputs")
    run_p.add_argument("config", help="Config file path or bundled preset name")
    run_p.add_argument("--out", default=None, help="Output directory")
    run_p.add_argument("--seeds", default=None, help="Comma-separated seeds, e.g. 1,2,3")
    run_p.add_argument("--iterations", type=int, default=None, help="Iteration count N")
    run_p.add_argument("--workers", type=int, default=None, help="Worker threads (default NEARDGD_WORKERS)")

    const_p = sub.add_parser("constants", help="Print the theoretical constants as JSON")
    const_p.add_argument("config")

    val_p = sub.add_parser("validate", help="Parse and validate a config")
    val_p.add_argument("config")

    sub.add_parser("presets", help="List bundled presets")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    settings.configure_logging(args.log_level)

    if args.command == "presets":
        for name in list_presets():
            print(name)
        return EXIT_OK

    try:
        cfg = load_config(args.config)
        if args.command == "validate":
            print(f"{args.config}: ok")
            return EXIT_OK
        if args.command == "constants":
            instance = build_problem(cfg)
            sys.stdout.write(constants_to_json(instance_constants(cfg, instance)))
            return EXIT_OK

        cfg = apply_overrides(cfg, seeds=args.seeds, iterations=args.iterations)
        result = run_experiment(cfg, out_dir=args.out, workers=args.workers)
    except (ConfigError, GraphError, SuiteError, OracleError, ScheduleError, BoundError, DatasetFormatError, SolverError) as e:
        logger.error(f"Configuration error: {e}")
        return EXIT_CONFIG
    except OSError as e:
        logger.error(f"I/O error: {e}")
        return EXIT_IO

    if result.all_diverged:
        logger.error("Every run diverged")
        return EXIT_DIVERGED
    return EXIT_OK
