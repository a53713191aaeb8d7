import logging
from datetime import datetime, timezone
from typing import Dict, Optional, Tuple

import numpy as np
import pandas as pd

from .. import __version__
from ..config.run_config import ProblemSection, RunConfig
from ..errors import ConfigError, DataError
from ..moments import (
    Dataset,
    MomentProblem,
    PolynomialStateBasis,
    RecordLayout,
    SmoothingConfig,
    TabularPolicy,
    density_ratio_problem,
    linear_iv_problem,
    policy_surrogate_problem,
    quantile_iv_problem,
)
from ..numerics import CounterRng
from ..pipeline import FitResult, fit_estimator
from .report_writer import read_records, write_csv, write_json

logger = logging.getLogger(__name__)


def build_problem(section: ProblemSection, records: Optional[np.ndarray] = None,
                  widths: Optional[Dict[str, int]] = None) -> MomentProblem:
    """Moment problem whose record layout follows the section's column roles"""
    layout_names = section.resolved_layout()
    widths = widths or {role: len(names) for role, names in layout_names.items()}
    layout = RecordLayout.sequential(**widths)
    try:
        if section.kind in ('linear_iv', 'quantile_iv'):
            if widths.get('t') != section.b:
                raise ConfigError(f"problem.b is {section.b} but the layout maps {widths.get('t')} column(s) to 't'")
            if section.kind == 'linear_iv':
                return linear_iv_problem(section.b, layout=layout)
            if section.tau is not None:
                smoothing = SmoothingConfig(section.tau)
            elif records is not None:
                smoothing = SmoothingConfig.default_for(layout.column(records, 'y'))
            else:
                raise ConfigError("quantile_iv needs problem.tau when no data is given")
            return quantile_iv_problem(section.p, smoothing, b=section.b, layout=layout)
        if section.kind == 'density_ratio':
            return density_ratio_problem(TabularPolicy.from_action_one(section.pi_e),
                                         TabularPolicy.from_action_one(section.pi_b),
                                         basis=PolynomialStateBasis(section.basis_degree), layout=layout)
        return policy_surrogate_problem(section.b, layout=layout)
    except (KeyError, ValueError) as e:
        raise ConfigError(f"invalid problem settings: {e}") from e


class EstimationService:
    """Runs one estimator on a CSV dataset and writes the JSON report"""

    def __init__(self, config: RunConfig):
        self.config = config

    def load(self) -> Tuple[MomentProblem, Dataset]:
        if not self.config.data:
            raise ConfigError("estimate needs a data file (--data or 'data' in the config)")
        layout = self.config.problem.resolved_layout()
        records, widths, columns = read_records(self.config.data, layout)
        problem = build_problem(self.config.problem, records, widths)
        try:
            data = Dataset.from_records(problem, records, column_names=columns)
        except ValueError as e:
            raise DataError(str(e)) from e
        logger.info(f"📥 Loaded {data.n} records from {self.config.data} ({problem.name}, m={problem.m}, b={problem.b})")
        return problem, data

    def estimate(self, problem: MomentProblem, data: Dataset) -> FitResult:
        estimator = self.config.estimator_config()
        logger.info(f"🔍 Estimating with {estimator.display_name}")
        return fit_estimator(problem, data, estimator, CounterRng(self.config.seed))

    def build_report(self, problem: MomentProblem, fit: FitResult) -> dict:
        return {
            'config': self.config.to_dict(),
            'estimate': {
                'estimator': self.config.estimator.name,
                'problem': problem.describe(),
                'theta': fit.theta,
                'objective': fit.objective,
            },
            'inference': None if fit.report is None else fit.report.to_dict(),
            'diagnostics': fit.diagnostics,
            'version': __version__,
            'timestamp': datetime.now(timezone.utc).isoformat(),
        }

    def run(self) -> dict:
        problem, data = self.load()
        fit = self.estimate(problem, data)
        report = self.build_report(problem, fit)
        logger.info(f"✅ theta^ = {np.array2string(fit.theta, precision=6)}, objective = {fit.objective:.6e}")
        if self.config.out:
            write_json(self.config.out, report)
        if self.config.residuals:
            frame = pd.DataFrame(fit.residuals, columns=[f'rho_{k}' for k in range(fit.residuals.shape[1])])
            write_csv(self.config.residuals, frame)
        return report
