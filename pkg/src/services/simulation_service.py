import logging
import time
from pathlib import Path
from typing import List, Optional

import numpy as np
import pandas as pd

from .. import __version__
from ..config.run_config import RunConfig
from ..simulation import MonteCarloResult, compare_estimators, efficient_variance, run_monte_carlo
from .report_writer import write_csv, write_json

logger = logging.getLogger(__name__)

EFFICIENCY_BAND = 0.20
COVERAGE_RANGE = (0.90, 0.98)


def efficiency_check(result: MonteCarloResult) -> Optional[dict]:
    """Scaled Monte Carlo variance against the analytic bound, when the design has one"""
    try:
        bound = np.diag(efficient_variance(result.spec))
    except ValueError:
        return None
    variance = result.summary.get('scaled_variance')
    if variance is None:
        return {'name': 'efficiency_band', 'passed': False, 'detail': 'every replication failed'}
    ratios = [v / b for v, b in zip(variance, bound)]
    return {
        'name': 'efficiency_band', 'bound': bound.tolist(), 'scaled_variance': variance, 'ratio': ratios,
        'tolerance': EFFICIENCY_BAND, 'passed': all(abs(r - 1.0) <= EFFICIENCY_BAND for r in ratios),
    }


def coverage_check(result: MonteCarloResult) -> Optional[dict]:
    coverage = result.summary.get('coverage')
    if not coverage or any(c is None for c in coverage):
        return None
    low, high = COVERAGE_RANGE
    return {'name': 'coverage', 'coverage': coverage, 'range': list(COVERAGE_RANGE),
            'passed': all(low <= c <= high for c in coverage)}


class SimulationService:
    """Runs the configured Monte Carlo experiment and writes reps.csv, summary.json and timing.json"""

    def __init__(self, config: RunConfig, out_dir: Optional[str] = None, max_workers: Optional[int] = None):
        self.config = config
        self.out_dir = Path(out_dir or config.out or 'results')
        self.max_workers = max_workers

    def simulate(self) -> List[MonteCarloResult]:
        sim = self.config.simulation
        configs = self.config.estimator_configs()
        if len(configs) == 1:
            return [run_monte_carlo(self.config.dgp, configs[0], sim.n, sim.reps, sim.parallel, self.max_workers)]
        comparison = compare_estimators(self.config.dgp, configs, sim.n, sim.reps, sim.parallel, self.max_workers)
        self.comparison = comparison
        return comparison.results

    def run(self) -> dict:
        self.comparison = None
        started = time.perf_counter()
        results = self.simulate()
        wall = time.perf_counter() - started

        frames = []
        for result in results:
            frame = result.to_frame()
            frame.insert(0, 'estimator', result.config.display_name)
            frames.append(frame)
        write_csv(self.out_dir / 'reps.csv', pd.concat(frames, ignore_index=True))

        entries = []
        for result in results:
            checks = [c for c in (efficiency_check(result), coverage_check(result)) if c is not None]
            entries.append({'estimator': result.config.display_name, 'summary': result.summary, 'checks': checks})
        summary = {'config': self.config.to_dict(), 'results': entries, 'version': __version__}
        if self.comparison is not None:
            summary['comparison'] = {
                'variance_ratios': self.comparison.variance_ratios,
                'paired_sq_error_differences': self.comparison.rmse_differences,
            }
        write_json(self.out_dir / 'summary.json', summary)
        write_json(self.out_dir / 'timing.json', {
            'wall_seconds': wall,
            'mean_rep_seconds': {r.config.display_name: r.mean_runtime for r in results},
            'parallel': self.config.simulation.parallel,
        })
        for entry in entries:
            for check in entry['checks']:
                status = '✅' if check['passed'] else '❌'
                logger.info(f"{status} {entry['estimator']}: {check['name']}")
        return summary
