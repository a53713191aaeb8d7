"""Monte Carlo harness: independent replications with order-free seeding and exact summaries.

Replication r samples with the stream keyed by derive_seed(spec.seed, r) and
estimates with the one keyed by derive_seed(spec.seed, r, 1), so serial and
parallel runs produce the same bits. Summaries use ``math.fsum`` and are
therefore independent of summation order.
"""

import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np
import pandas as pd

from ..errors import VmmError
from ..numerics import CounterRng, derive_seed
from ..pipeline import EstimatorConfig, fit_estimator
from .dgp import DgpSpec, dgp_problem, sample_dgp, true_theta

logger = logging.getLogger(__name__)


@dataclass
class RepOutcome:
    rep: int
    theta: Optional[np.ndarray]
    lower: Optional[np.ndarray] = None
    upper: Optional[np.ndarray] = None
    objective: float = float('nan')
    runtime: float = 0.0
    error: Optional[str] = None

    @property
    def failed(self) -> bool:
        return self.error is not None


def run_rep(spec: DgpSpec, config: EstimatorConfig, n: int, rep: int) -> RepOutcome:
    """One replication; estimation errors are recorded, not raised"""
    started = time.perf_counter()
    try:
        data = sample_dgp(spec, n, CounterRng(derive_seed(spec.seed, rep)))
        fit = fit_estimator(dgp_problem(spec), data, config, CounterRng(derive_seed(spec.seed, rep, 1)))
    except (VmmError, np.linalg.LinAlgError, ArithmeticError) as e:
        logger.warning(f"⚠️ Replication {rep} failed: {type(e).__name__}: {e}")
        return RepOutcome(rep=rep, theta=None, runtime=time.perf_counter() - started,
                          error=f"{type(e).__name__}: {e}")
    lower = upper = None
    if fit.report is not None and fit.report.intervals.shape[0] == fit.theta.size:
        lower, upper = fit.report.intervals[:, 0], fit.report.intervals[:, 1]
    return RepOutcome(rep=rep, theta=fit.theta, lower=lower, upper=upper, objective=fit.objective,
                      runtime=time.perf_counter() - started)


def _run_rep_args(args) -> RepOutcome:
    return run_rep(*args)


def _mean(values: Sequence[float]) -> float:
    return math.fsum(values) / len(values)


def summarize(outcomes: Sequence[RepOutcome], theta0: np.ndarray, n: int) -> dict:
    """Per-coordinate bias, variance of sqrt(n)(theta^ - theta0), RMSE, median |error| and coverage"""
    done = [o for o in outcomes if not o.failed]
    summary = {'reps': len(outcomes), 'failed': len(outcomes) - len(done), 'n': n,
               'theta0': [float(t) for t in theta0]}
    if not done:
        return summary
    bias, variance, rmse, median_abs, coverage = [], [], [], [], []
    for j, t0 in enumerate(theta0):
        errors = [float(o.theta[j]) - float(t0) for o in done]
        mean_error = _mean(errors)
        bias.append(mean_error)
        variance.append(n * _mean([(e - mean_error) ** 2 for e in errors]))
        rmse.append(math.sqrt(_mean([e * e for e in errors])))
        median_abs.append(float(np.median(np.abs(errors))))
        covered = [float(o.lower[j] <= t0 <= o.upper[j]) for o in done if o.lower is not None]
        coverage.append(_mean(covered) if covered else None)
    summary.update(bias=bias, scaled_variance=variance, rmse=rmse, median_abs_error=median_abs,
                   coverage=coverage)
    return summary


def outcomes_from_frame(frame: pd.DataFrame, b: int) -> List[RepOutcome]:
    """Inverse of :meth:`MonteCarloResult.to_frame` up to runtimes"""
    outcomes = []
    for row in frame.to_dict('records'):
        failed = bool(row['failed'])
        theta = None if failed else np.array([row[f'theta_{j}'] for j in range(b)])
        lower = np.array([row[f'lower_{j}'] for j in range(b)])
        upper = np.array([row[f'upper_{j}'] for j in range(b)])
        has_interval = not failed and np.all(np.isfinite(lower))
        outcomes.append(RepOutcome(rep=int(row['rep']), theta=theta,
                                   lower=lower if has_interval else None,
                                   upper=upper if has_interval else None,
                                   objective=float(row['objective']),
                                   error=(str(row['error']) or 'failed') if failed else None))
    return outcomes


@dataclass
class MonteCarloResult:
    spec: DgpSpec
    config: EstimatorConfig
    n: int
    theta0: np.ndarray
    outcomes: List[RepOutcome]
    summary: dict

    @property
    def reps(self) -> int:
        return len(self.outcomes)

    @property
    def failed(self) -> int:
        return sum(o.failed for o in self.outcomes)

    @property
    def mean_runtime(self) -> float:
        return _mean([o.runtime for o in self.outcomes])

    def thetas(self) -> np.ndarray:
        return np.array([o.theta for o in self.outcomes if not o.failed])

    def to_frame(self) -> pd.DataFrame:
        """One row per replication, runtime excluded"""
        rows = []
        for o in self.outcomes:
            row = {'rep': o.rep, 'failed': o.failed, 'error': o.error or '', 'objective': o.objective}
            for j in range(len(self.theta0)):
                row[f'theta_{j}'] = np.nan if o.failed else float(o.theta[j])
                row[f'lower_{j}'] = np.nan if o.lower is None else float(o.lower[j])
                row[f'upper_{j}'] = np.nan if o.upper is None else float(o.upper[j])
            rows.append(row)
        return pd.DataFrame(rows)


def run_monte_carlo(spec: DgpSpec, config: EstimatorConfig, n: int, reps: int, parallel: bool = False,
                    max_workers: Optional[int] = None) -> MonteCarloResult:
    if reps < 1:
        raise ValueError("reps must be at least 1")
    jobs = [(spec, config, n, rep) for rep in range(reps)]
    logger.info(f"🎲 Monte Carlo: {config.display_name} on {spec.kind}, n={n}, reps={reps}, "
                f"{'parallel' if parallel else 'serial'}")
    if parallel and reps > 1:
        with ProcessPoolExecutor(max_workers=max_workers) as pool:
            # map yields in submission order
            outcomes = list(pool.map(_run_rep_args, jobs))
    else:
        outcomes = [_run_rep_args(job) for job in jobs]
    theta0 = true_theta(spec)
    result = MonteCarloResult(spec=spec, config=config, n=n, theta0=theta0, outcomes=outcomes,
                              summary=summarize(outcomes, theta0, n))
    if result.failed:
        logger.warning(f"⚠️ {result.failed}/{reps} replications failed")
    return result


@dataclass
class Comparison:
    results: List[MonteCarloResult]
    variance_ratios: List[List[float]] = field(default_factory=list)
    rmse_differences: List[List[float]] = field(default_factory=list)

    def to_frame(self) -> pd.DataFrame:
        rows = []
        for i, result in enumerate(self.results):
            for j in range(len(result.theta0)):
                rows.append({
                    'estimator': result.config.display_name, 'coordinate': j,
                    'rmse': result.summary.get('rmse', [np.nan] * (j + 1))[j],
                    'scaled_variance': result.summary.get('scaled_variance', [np.nan] * (j + 1))[j],
                    'variance_ratio': self.variance_ratios[i][j],
                    'paired_sq_error_difference': self.rmse_differences[i][j],
                })
        return pd.DataFrame(rows)


def compare_estimators(spec: DgpSpec, configs: Sequence[EstimatorConfig], n: int, reps: int,
                       parallel: bool = False, max_workers: Optional[int] = None) -> Comparison:
    """Common random numbers: every config sees the same datasets.

    Ratios and differences are relative to the first config and use the
    replications that succeeded under both.
    """
    if len(configs) < 2:
        raise ValueError("compare_estimators needs at least two configs")
    results = [run_monte_carlo(spec, c, n, reps, parallel, max_workers) for c in configs]
    base = results[0]
    comparison = Comparison(results=results)
    for result in results:
        ratios, diffs = [], []
        pairs = [(a, b) for a, b in zip(base.outcomes, result.outcomes) if not a.failed and not b.failed]
        for j, t0 in enumerate(base.theta0):
            if not pairs:
                ratios.append(float('nan'))
                diffs.append(float('nan'))
                continue
            own = [float(b.theta[j]) for _, b in pairs]
            ref = [float(a.theta[j]) for a, _ in pairs]
            ref_mean, own_mean = _mean(ref), _mean(own)
            ref_var = _mean([(x - ref_mean) ** 2 for x in ref])
            own_var = _mean([(x - own_mean) ** 2 for x in own])
            ratios.append(own_var / ref_var if ref_var > 0 else (1.0 if own_var == 0 else float('inf')))
            diffs.append(_mean([(b - t0) ** 2 - (a - t0) ** 2 for a, b in zip(ref, own)]))
        comparison.variance_ratios.append(ratios)
        comparison.rmse_differences.append(diffs)
    return comparison
