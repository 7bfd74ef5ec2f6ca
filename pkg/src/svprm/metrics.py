"""Distribution and roadmap quality metrics plus the benchmark trial loop."""

from __future__ import annotations

import csv
import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

from .geometry import ConfigSpace, sample_halton, sample_uniform
from .models import BoxBarrierPrior, FeasibilityModel
from .planner import PlanQuery, QueryRejected, plan_lazy
from .roadmap import Roadmap, build_roadmap, check_edge
from .svgd import KernelConfig, ParticleSet, SvgdConfig, run_inference

__all__ = [
    "MetricsError",
    "MmdConfig",
    "CoverageReport",
    "MixtureSpec",
    "TrialSuite",
    "TrialResult",
    "median_pairwise_distance",
    "mmd_squared",
    "reference_feasible_sample",
    "coverage",
    "initial_samples",
    "run_single_trial",
    "run_trial_suite",
    "aggregate_results",
    "write_report_csv",
    "REPORT_COLUMNS",
]

SAMPLER_BASES = ("uniform", "halton", "gauss-mix")


class MetricsError(ValueError):
    """Raised for invalid metric or trial configuration."""


# ---------------------------------------------------------------------------
# Maximum mean discrepancy
# ---------------------------------------------------------------------------


@dataclass
class MmdConfig:
    """RBF kernel bandwidth; None selects the pooled median heuristic."""

    bandwidth: float | None = None

    def __post_init__(self):
        if self.bandwidth is not None and self.bandwidth <= 0:
            raise MetricsError("bandwidth must be positive")


def median_pairwise_distance(X: np.ndarray) -> float:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    n = X.shape[0]
    if n < 2:
        return 1.0
    sq = np.sum((X[:, None, :] - X[None, :, :]) ** 2, axis=-1)
    off = sq[np.triu_indices(n, k=1)]
    return float(np.sqrt(np.median(off)))


def _rbf(sq: np.ndarray, bandwidth: float) -> np.ndarray:
    return np.exp(-sq / (2.0 * bandwidth**2))


def mmd_squared(A, B, cfg: MmdConfig | None = None) -> float:
    """Biased (V-statistic) squared maximum mean discrepancy between sample sets.

    mean k(A,A) + mean k(B,B) - 2 mean k(A,B) with an RBF kernel whose
    bandwidth defaults to the median pairwise distance of the pooled sample.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    if A.shape[0] == 0 or B.shape[0] == 0:
        raise MetricsError("mmd_squared requires nonempty sample sets")
    if A.ndim != 2 or B.ndim != 2 or A.shape[1] != B.shape[1]:
        raise MetricsError("sample sets must be 2-d with matching dimension")
    cfg = cfg or MmdConfig()
    bw = cfg.bandwidth
    if bw is None:
        bw = max(median_pairwise_distance(np.vstack([A, B])), 1e-12)

    def sq(P, Q):
        return np.sum((P[:, None, :] - Q[None, :, :]) ** 2, axis=-1)

    value = (
        _rbf(sq(A, A), bw).mean()
        + _rbf(sq(B, B), bw).mean()
        - 2.0 * _rbf(sq(A, B), bw).mean()
    )
    # the V-statistic is nonnegative; rounding may dip a hair below zero
    return max(float(value), 0.0)


# ---------------------------------------------------------------------------
# Feasible reference sampling and coverage
# ---------------------------------------------------------------------------


def reference_feasible_sample(
    model: FeasibilityModel,
    space: ConfigSpace,
    beta: float,
    n: int,
    seed,
    return_attempts: bool = False,
):
    """Rejection-sample n uniform box points satisfying p(free | x) >= beta."""
    if n < 0:
        raise MetricsError("sample count must be non-negative")
    rng = np.random.default_rng(seed) if not isinstance(seed, np.random.Generator) else seed
    accepted: list[np.ndarray] = []
    attempts = 0
    cap = max(1_000_000 * max(n, 1), 1)
    batch = max(4 * n, 2048)
    total = 0
    while total < n:
        if attempts >= cap:
            raise MetricsError(
                f"acceptance starvation: {attempts} attempts yielded {total}/{n} samples"
            )
        draw = rng.uniform(space.lower, space.upper, size=(batch, space.dim))
        attempts += batch
        keep = model.likelihood_many(draw) >= beta
        got = draw[keep]
        if got.shape[0]:
            accepted.append(got)
            total += got.shape[0]
    out = (
        np.vstack(accepted)[:n]
        if accepted
        else np.empty((0, space.dim))
    )
    if return_attempts:
        return out, attempts
    return out


@dataclass
class CoverageReport:
    probes: int
    connected: int

    def __post_init__(self):
        if self.probes < 0 or not (0 <= self.connected <= max(self.probes, 0)):
            raise MetricsError("connected must lie in [0, probes]")

    @property
    def coverage(self) -> float:
        return self.connected / self.probes if self.probes else 0.0


def coverage(
    rmap: Roadmap,
    model: FeasibilityModel,
    space: ConfigSpace,
    beta: float,
    probes: int,
    seed,
) -> CoverageReport:
    """Fraction of feasible probe states connectableized to some vertex.

    A probe counts as connected when at least one vertex within rho admits a
    feasible straight edge, nearest vertices tried first.
    """
    if probes < 1:
        raise MetricsError("probes must be >= 1")
    probe_points = reference_feasible_sample(model, space, beta, probes, seed)
    if rmap.n_vertices == 0:
        return CoverageReport(probes=probes, connected=0)
    tree = cKDTree(rmap.vertices)
    connected = 0
    for p in probe_points:
        idxs = tree.query_ball_point(p, rmap.rho)
        if not idxs:
            continue
        dists = np.linalg.norm(rmap.vertices[idxs] - p, axis=1)
        for v in np.asarray(idxs)[np.argsort(dists, kind="stable")]:
            ok, _ = check_edge(model, p, rmap.vertices[v], beta, rmap.edge_resolution)
            if ok:
                connected += 1
                break
    return CoverageReport(probes=probes, connected=connected)


# ---------------------------------------------------------------------------
# Initial vertex samplers
# ---------------------------------------------------------------------------


@dataclass
class MixtureSpec:
    """Equal-weight isotropic Gaussian proposal components."""

    means: np.ndarray
    stds: np.ndarray

    def __post_init__(self):
        self.means = np.atleast_2d(np.asarray(self.means, dtype=float))
        self.stds = np.broadcast_to(
            np.asarray(self.stds, dtype=float), (self.means.shape[0],)
        ).copy()
        if self.means.shape[0] < 1:
            raise MetricsError("mixture needs at least one component")
        if np.any(self.stds < 0):
            raise MetricsError("component stds must be non-negative")

    def sample(self, n: int, rng: np.random.Generator, space: ConfigSpace | None = None):
        comp = rng.integers(0, self.means.shape[0], size=n)
        draws = self.means[comp] + rng.standard_normal((n, self.means.shape[1])) * self.stds[
            comp, None
        ]
        if space is not None:
            draws = space.clamp(draws)
        return draws


def _parse_sampler(name: str) -> tuple[str, bool, bool]:
    refine = name.startswith("sv-")
    base = name[3:] if refine else name
    rejection = base.endswith("+rej")
    if rejection:
        base = base[: -len("+rej")]
    if base not in SAMPLER_BASES:
        raise MetricsError(f"unknown sampler {name!r}")
    return base, rejection, refine


def initial_samples(
    name: str,
    model: FeasibilityModel,
    space: ConfigSpace,
    beta: float,
    n: int,
    rng: np.random.Generator,
    mixture: MixtureSpec | None = None,
    halton_skip: int = 0,
) -> np.ndarray:
    """Draw n roadmap seed points with one of the baseline strategies.

    Names: uniform, halton, gauss-mix, each optionally suffixed with "+rej"
    for threshold rejection at beta. An "sv-" prefix is stripped here; the
    particle refinement itself happens in the trial loop.
    """
    base, rejection, _ = _parse_sampler(name)
    if n < 0:
        raise MetricsError("sample count must be non-negative")

    def draw(batch: int, offset: int) -> np.ndarray:
        if base == "uniform":
            return rng.uniform(space.lower, space.upper, size=(batch, space.dim))
        if base == "halton":
            return sample_halton(space, batch, skip=offset)
        if mixture is None:
            raise MetricsError("gauss-mix sampler needs mixture components")
        return mixture.sample(batch, rng, space)

    if not rejection:
        return draw(n, halton_skip)
    accepted: list[np.ndarray] = []
    total = 0
    offset = halton_skip
    attempts = 0
    cap = max(1_000_000 * max(n, 1), 1)
    batch = max(n, 512)
    while total < n:
        if attempts >= cap:
            raise MetricsError(
                f"acceptance starvation in sampler {name!r} after {attempts} attempts"
            )
        cand = draw(batch, offset)
        offset += batch
        attempts += batch
        keep = model.likelihood_many(cand) >= beta
        got = cand[keep]
        if got.shape[0]:
            accepted.append(got)
            total += got.shape[0]
    return np.vstack(accepted)[:n]


# ---------------------------------------------------------------------------
# Trial suite
# ---------------------------------------------------------------------------


@dataclass
class TrialSuite:
    """Everything one benchmark sweep needs, picklable for worker pools."""

    model: FeasibilityModel
    space: ConfigSpace
    samplers: list[str]
    n_list: list[int]
    seeds: list[int]
    beta: float
    rho: float
    edge_resolution: float
    svgd_cfg: SvgdConfig
    kernel: KernelConfig
    prior: BoxBarrierPrior | None = None
    query: tuple[np.ndarray, np.ndarray] | None = None
    reference_model: FeasibilityModel | None = None
    reference_beta: float | None = None
    reference_samples: int = 1000
    compute_mmd: bool = False
    coverage_probes: int = 0
    mixture: MixtureSpec | None = None
    master_seed: int = 0
    max_edge_evals: int | None = None


@dataclass
class TrialResult:
    sampler: str
    n: int
    seed: int
    status: str
    success: bool
    path_cost: float | None
    edges_evaluated: int
    n_vertices: int
    n_edges: int
    mmd_init: float | None
    mmd_final: float | None
    coverage: float | None
    wall_time: float


REPORT_COLUMNS = [
    "sampler",
    "n",
    "seed",
    "status",
    "success",
    "path_cost",
    "edges_evaluated",
    "n_vertices",
    "n_edges",
    "mmd_init",
    "mmd_final",
    "coverage",
]


def _trial_rng(master_seed: int, n: int, seed: int, salt: int) -> np.random.Generator:
    return np.random.default_rng(
        np.random.SeedSequence((int(master_seed), int(n), int(seed), int(salt)))
    )


def run_single_trial(
    suite: TrialSuite,
    sampler: str,
    n: int,
    seed: int,
    ref_sample: np.ndarray | None = None,
    capture: dict | None = None,
) -> TrialResult:
    """One (sampler, N, seed) benchmark trial.

    The initialization stream depends only on (master seed, N, seed), so the
    particle-refined variant of a sampler starts from exactly the draw its
    plain counterpart uses. Passing a dict as capture stores the trial's
    intermediate artifacts (init, final, trace, roadmap, result) in it.
    """
    t0 = time.perf_counter()
    _, _, refine = _parse_sampler(sampler)
    rng = _trial_rng(suite.master_seed, n, seed, 0)
    init = initial_samples(
        sampler, suite.model, suite.space, suite.beta, n, rng, mixture=suite.mixture
    )
    final = init
    trace = []
    if refine and n > 0:
        ps = ParticleSet(points=init, rng_seed=seed)
        ps, trace = run_inference(
            ps, suite.model, suite.prior, suite.kernel, suite.svgd_cfg
        )
        final = ps.points

    rmap = build_roadmap(
        final, suite.model, suite.beta, suite.rho, suite.edge_resolution, lazy=True
    )

    status = "no_query"
    success = False
    cost = None
    evaluated = 0
    result = None
    if suite.query is not None:
        start, goal = suite.query
        try:
            result = plan_lazy(
                rmap,
                suite.model,
                PlanQuery(start, goal, max_edge_evals=suite.max_edge_evals),
            )
            status = result.status
            success = result.solved
            cost = result.cost
            evaluated = result.edges_evaluated
        except QueryRejected:
            status = "rejected"
    if capture is not None:
        capture.update(
            init=init, final=final, trace=trace, roadmap=rmap, result=result
        )

    mmd_init = mmd_final = None
    if suite.compute_mmd and ref_sample is not None and init.shape[0]:
        mmd_init = mmd_squared(init, ref_sample)
        mmd_final = mmd_squared(final, ref_sample) if refine else mmd_init

    cov = None
    if suite.coverage_probes > 0:
        cov_model = suite.model
        report = coverage(
            rmap,
            cov_model,
            suite.space,
            suite.beta,
            suite.coverage_probes,
            _trial_rng(suite.master_seed, n, seed, 7),
        )
        cov = report.coverage

    return TrialResult(
        sampler=sampler,
        n=n,
        seed=seed,
        status=status,
        success=success,
        path_cost=cost,
        edges_evaluated=evaluated,
        n_vertices=rmap.n_vertices,
        n_edges=rmap.n_edges,
        mmd_init=mmd_init,
        mmd_final=mmd_final,
        coverage=cov,
        wall_time=time.perf_counter() - t0,
    )


def _reference_sample_for(suite: TrialSuite) -> np.ndarray | None:
    if not suite.compute_mmd:
        return None
    ref_model = suite.reference_model or suite.model
    ref_beta = suite.beta if suite.reference_beta is None else suite.reference_beta
    return reference_feasible_sample(
        ref_model,
        suite.space,
        ref_beta,
        suite.reference_samples,
        np.random.default_rng(np.random.SeedSequence((suite.master_seed, 101))),
    )


_WORKER_STATE: dict = {}


def _init_worker(suite: TrialSuite, ref_sample) -> None:
    _WORKER_STATE["suite"] = suite
    _WORKER_STATE["ref"] = ref_sample


def _worker_trial(task: tuple[str, int, int]) -> TrialResult:
    sampler, n, seed = task
    return run_single_trial(
        _WORKER_STATE["suite"], sampler, n, seed, _WORKER_STATE["ref"]
    )


def run_trial_suite(suite: TrialSuite, jobs: int = 1) -> list[TrialResult]:
    """Run the full sampler x N x seed grid; results are order-deterministic.

    Trials own independent RNG streams derived from (master seed, N, seed), so
    jobs > 1 produces results identical to a sequential run.
    """
    for s in suite.samplers:
        _parse_sampler(s)
    ref_sample = _reference_sample_for(suite)
    tasks = [
        (sampler, n, seed)
        for sampler in suite.samplers
        for n in suite.n_list
        for seed in suite.seeds
    ]
    if jobs <= 1 or len(tasks) <= 1:
        return [run_single_trial(suite, *task, ref_sample) for task in tasks]
    with ProcessPoolExecutor(
        max_workers=jobs, initializer=_init_worker, initargs=(suite, ref_sample)
    ) as pool:
        return list(pool.map(_worker_trial, tasks, chunksize=1))


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------


def _csv_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_report_csv(path, rows: list[TrialResult], config: dict | None = None) -> None:
    """One row per trial; volatile timing stays out so reruns are byte-identical."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        if config is not None:
            fh.write("# config: " + json.dumps(config, sort_keys=True) + "\n")
        writer = csv.writer(fh)
        writer.writerow(REPORT_COLUMNS)
        for r in rows:
            writer.writerow([_csv_cell(getattr(r, col)) for col in REPORT_COLUMNS])


def _mean_or_none(values: list[float]) -> float | None:
    return float(np.mean(values)) if values else None


def aggregate_results(rows: list[TrialResult]) -> list[dict]:
    """Per (sampler, N) success counts and means for tables and curves."""
    keys: list[tuple[str, int]] = []
    for r in rows:
        if (r.sampler, r.n) not in keys:
            keys.append((r.sampler, r.n))
    out = []
    for sampler, n in keys:
        group = [r for r in rows if r.sampler == sampler and r.n == n]
        solved = [r for r in group if r.success]
        out.append(
            {
                "sampler": sampler,
                "n": n,
                "trials": len(group),
                "successes": len(solved),
                "success_rate": len(solved) / len(group) if group else 0.0,
                "mean_cost_solved": _mean_or_none([r.path_cost for r in solved]),
                "mean_edges_evaluated": _mean_or_none(
                    [float(r.edges_evaluated) for r in group]
                ),
                "mean_mmd_init": _mean_or_none(
                    [r.mmd_init for r in group if r.mmd_init is not None]
                ),
                "mean_mmd_final": _mean_or_none(
                    [r.mmd_final for r in group if r.mmd_final is not None]
                ),
                "mean_coverage": _mean_or_none(
                    [r.coverage for r in group if r.coverage is not None]
                ),
            }
        )
    return out
