"""Executable checks of the estimator identities and of their Monte Carlo behavior.

Each suite draws fresh instances from streams derived from the run seed, so a
suite's report is a function of (seed, reps) alone.
"""

import logging
from dataclasses import asdict, dataclass, field
from typing import Callable, Dict, List, Optional

import numpy as np
from scipy import linalg

from .. import __version__
from ..errors import ConfigError
from ..estimators import (
    IVSample,
    MinimaxConfig,
    MlpNetwork,
    RegularizerChoice,
    VmmConfig,
    assemble,
    fit_adversary,
    gamma_matrix,
    k_step_estimate,
    kernel_iv_closed_form,
    kernel_iv_least_squares,
    kernel_iv_objective,
    mlp_backward,
    mlp_forward,
    nvmm_game_value,
    nvmm_gradients,
    objective,
    objective_gradient,
    owgmm_objective,
    random_cosine_basis,
    representer_supremum,
    vmm_span_supremum,
)
from ..estimators.kernel_vmm import AlphaSchedule
from ..kernels import KernelSpec, gram_matrix, median_bandwidth
from ..moments import (
    Dataset,
    SmoothingConfig,
    linear_iv_problem,
    quantile_iv_problem,
    stack_problems,
)
from ..numerics import CounterRng, central_difference, relative_error, variational_quadratic, variational_value
from ..pipeline import EstimatorConfig
from ..simulation import DgpSpec, compare_estimators, efficient_variance, run_monte_carlo

logger = logging.getLogger(__name__)

ORACLE_TOL = 1e-8
KERNEL_IV_TOL = 1e-5
VMM_GRADIENT_TOL = 1e-6
NEURAL_GRADIENT_TOL = 1e-4
KSTEP_RATIO = 1.05
EFFICIENCY_BAND = 0.20
COVERAGE_RANGE = (0.90, 0.98)
SURROGATE_REL, SURROGATE_ABS = 0.10, 1e-3
GRID_POINTS = 30
VARIATIONAL_ALPHAS = (1e-3, 1.0, 10.0)


@dataclass
class CheckResult:
    suite: str
    name: str
    passed: bool
    value: Optional[float] = None
    tolerance: Optional[float] = None
    detail: dict = field(default_factory=dict)


def _rel(a: float, b: float) -> float:
    return abs(a - b) / max(abs(b), 1e-12)


def _iv_data(rng: CounterRng, n: int, instrument_dim: int = 3, b: int = 1, problem=None):
    """Random confounded linear IV records with z in R^instrument_dim"""
    z = rng.normal((n, instrument_dim))
    u = rng.normal(n)
    t = z[:, :b] + 0.5 * u[:, None] + 0.5 * rng.normal((n, b))
    y = t @ rng.normal(b) + u + 0.5 * rng.normal(n)
    problem = problem or linear_iv_problem(b, instrument_dim=instrument_dim)
    return problem, Dataset.from_records(problem, np.column_stack([z, t, y]))


def _grid_iv_data(rng: CounterRng, n: int):
    """Confounded scalar linear IV records with the instrument on an even grid over [-2, 2]"""
    z = np.linspace(-2.0, 2.0, n)
    u = rng.normal(n)
    t = z + 0.5 * u + 0.5 * rng.normal(n)
    y = rng.normal() * t + u + 0.5 * rng.normal(n)
    problem = linear_iv_problem(1)
    return problem, Dataset.from_records(problem, np.column_stack([z, t, y]))


def _narrow_kernel(zs, factor: float = 0.5) -> KernelSpec:
    return KernelSpec(bandwidth=factor * median_bandwidth(zs))


class VerificationService:
    """Runs named suites; ``run`` returns the machine-readable report"""

    def __init__(self, seed: int, reps: Optional[int] = None, parallel: bool = True,
                 max_workers: Optional[int] = None):
        self.seed = seed
        self.reps = reps
        self.parallel = parallel
        self.max_workers = max_workers
        self._homoskedastic = None
        self.suites: Dict[str, Callable[[], List[CheckResult]]] = {
            'lemma1': self.owgmm_span_equivalence,
            'lemma6': self.representer_objective,
            'lemma7': self.kernel_iv_optimality,
            'variational-identity': self.variational_identity,
            'gradients': self.gradients,
            'kstep': self.kstep,
            'efficiency': self.efficiency,
            'coverage': self.coverage,
            'neural-dominance': self.neural_dominance,
            'consistency': self.consistency,
        }

    def _rng(self, suite: str) -> CounterRng:
        return CounterRng(self.seed).spawn(sorted(self.suites).index(suite))

    def _reps(self, default: int) -> int:
        return self.reps or default

    # -- closed-form identities -------------------------------------------------

    def owgmm_span_equivalence(self) -> List[CheckResult]:
        """OWGMM objective equals the span supremum of the variational game"""
        rng, results = self._rng('lemma1'), []
        for i in range(50):
            r = rng.spawn(i)
            n, k = r.integers(10, 51), r.integers(1, 5)
            problem, data = _iv_data(r, n, instrument_dim=2)
            basis = random_cosine_basis(r, k, 2)
            theta, prior = r.normal(1), r.normal(1)
            gmm = owgmm_objective(basis, problem, data, theta, gamma_matrix(basis, problem, data, prior))
            span = vmm_span_supremum(basis, problem, data, theta, prior)
            err = _rel(span, gmm)
            results.append(CheckResult('lemma1', f'instance-{i}', err <= ORACLE_TOL, err, ORACLE_TOL,
                                       {'n': n, 'k': k, 'owgmm': gmm, 'span_supremum': span}))
        return results

    def representer_objective(self) -> List[CheckResult]:
        """Closed-form J_n equals the representer supremum"""
        rng, results = self._rng('lemma6'), []
        for i in range(50):
            r = rng.spawn(i)
            n, m = r.integers(5, 41), r.integers(1, 3)
            problem = linear_iv_problem(1, instrument_dim=3)
            if m == 2:
                problem = stack_problems(problem, quantile_iv_problem(0.5, SmoothingConfig(1.0), b=1, instrument_dim=3))
            problem, data = _iv_data(r, n, problem=problem)
            asm = assemble(problem, data, _narrow_kernel(data.instruments), r.normal(1), AlphaSchedule()(n))
            theta = r.normal(1)
            closed, brute = objective(asm, problem, data, theta), representer_supremum(asm, problem, data, theta)
            err = _rel(brute, closed)
            results.append(CheckResult('lemma6', f'instance-{i}', err <= ORACLE_TOL and closed >= 0, err, ORACLE_TOL,
                                       {'n': n, 'm': m, 'closed_form': closed, 'representer': brute}))
        return results

    def kernel_iv_optimality(self) -> List[CheckResult]:
        """Kernel IV closed form equals the stacked least-squares minimizer"""
        rng, results = self._rng('lemma7'), []
        for i in range(20):
            r = rng.spawn(i)
            n = r.integers(10, 61)
            z = r.normal((n, 3))
            t = z + 0.5 * r.normal((n, 3))
            sample = IVSample.from_arrays(z, t, np.sin(t).sum(axis=1) + 0.3 * r.normal(n))
            solution = kernel_iv_closed_form(sample, _narrow_kernel(z), _narrow_kernel(t),
                                             alpha=AlphaSchedule()(n), lam=1e-3)
            beta_ls = kernel_iv_least_squares(sample, solution)
            fitted = solution.predict(sample.t)
            fitted_ls = gram_matrix(solution.kernel_g, sample.t) @ beta_ls
            err = relative_error(fitted, fitted_ls)
            value_err = _rel(kernel_iv_objective(solution, sample), kernel_iv_objective(solution, sample, beta_ls))
            worst = max(err, value_err)
            results.append(CheckResult('lemma7', f'instance-{i}', worst <= KERNEL_IV_TOL, worst, KERNEL_IV_TOL,
                                       {'n': n, 'fitted_error': err, 'objective_error': value_err}))
        r = rng.spawn(99)
        z = r.normal((20, 3))
        sample = IVSample.from_arrays(z, z[:, :1], r.normal(20))
        ridge = kernel_iv_closed_form(sample, KernelSpec(), KernelSpec(), alpha=0.1, lam=1e12)
        norm = float(np.linalg.norm(ridge.beta))
        results.append(CheckResult('lemma7', 'infinite-ridge', norm <= 1e-6, norm, 1e-6))
        return results

    def variational_identity(self) -> List[CheckResult]:
        """h^T (C + alpha I)^{-1} h equals the supremum of the quadratic game"""
        rng, results = self._rng('variational-identity'), []
        for i in range(100):
            r = rng.spawn(i)
            d = r.integers(1, 11)
            factor = r.normal((d, r.integers(1, d + 1)))
            c, alpha, h = factor @ factor.T, VARIATIONAL_ALPHAS[i % len(VARIATIONAL_ALPHAS)], r.normal(d)
            closed = variational_quadratic(c, alpha, h)
            v_star = 2.0 * linalg.solve(c + alpha * np.eye(d), h, assume_a='pos')
            at_star = variational_value(c, alpha, h, v_star)
            # any other v does no better
            dominated = all(variational_value(c, alpha, h, v_star + 0.1 * r.normal(d)) <= closed + 1e-12
                            for _ in range(3))
            err = _rel(at_star, closed)
            results.append(CheckResult('variational-identity', f'instance-{i}', err <= ORACLE_TOL and dominated,
                                       err, ORACLE_TOL, {'dim': d, 'alpha': alpha}))
        return results

    def gradients(self) -> List[CheckResult]:
        rng, results = self._rng('gradients'), []
        problem = quantile_iv_problem(0.3, SmoothingConfig(0.5), b=2, instrument_dim=3)
        problem, data = _iv_data(rng.spawn(0), 30, b=2, problem=problem)
        asm = assemble(problem, data, _narrow_kernel(data.instruments), np.zeros(2), AlphaSchedule()(data.n))
        for i in range(100):
            theta = rng.spawn(1, i).normal(2)
            numeric = central_difference(lambda th: objective(asm, problem, data, th), theta)
            err = relative_error(objective_gradient(asm, problem, data, theta), numeric)
            results.append(CheckResult('gradients', f'kernel-vmm-{i}', err <= VMM_GRADIENT_TOL, err, VMM_GRADIENT_TOL))

        iv, iv_data = _iv_data(rng.spawn(2), 15)
        for i in range(100):
            r = rng.spawn(3, i)
            net = MlpNetwork.initialize([3, 8, 8, 1], r)
            reg = RegularizerChoice('kernel', alpha=0.05, kernels=_narrow_kernel(iv_data.instruments, 0.3)) \
                if i % 2 == 0 else RegularizerChoice('frobenius', alpha=0.05)
            theta, prior = r.normal(1), r.normal(1)
            _, grad_theta, grad_net = nvmm_gradients(net, iv, iv_data, theta, prior, reg)
            numeric_theta = central_difference(lambda th: nvmm_game_value(net, iv, iv_data, th, prior, reg), theta)
            numeric_net = central_difference(
                lambda flat: nvmm_game_value(net.with_parameters(flat), iv, iv_data, theta, prior, reg),
                net.flatten(), step=1e-6)
            err = max(relative_error(grad_theta, numeric_theta), relative_error(grad_net.flatten(), numeric_net))
            results.append(CheckResult('gradients', f'neural-{reg.kind}-{i}', err <= NEURAL_GRADIENT_TOL, err,
                                       NEURAL_GRADIENT_TOL))
        return results

    # -- Monte Carlo ------------------------------------------------------------

    def kstep(self) -> List[CheckResult]:
        """Re-weighting at a first-stage estimate does not lose to a poor fixed prior"""
        rng, results = self._rng('kstep'), []
        problem, data = _iv_data(rng.spawn(0), 60)
        solution = k_step_estimate(problem, data, KernelSpec(), 3, np.zeros(1), VmmConfig())
        results.append(CheckResult('kstep', 'trace-length', len(solution.trace) == 3, len(solution.trace), 3))

        spec = DgpSpec(kind='linear_iv_heteroskedastic', seed=self.seed)
        poor = (spec.theta0[0] + 3.0,)
        one = EstimatorConfig(k=1, theta_init=poor, inference='none', label='1-step poor prior')
        two = EstimatorConfig(k=2, theta_init=poor, inference='none', label='2-step')
        comparison = compare_estimators(spec, [one, two], 400, self._reps(300), self.parallel, self.max_workers)
        ratio = comparison.variance_ratios[1][0]
        results.append(CheckResult('kstep', 'variance-ratio', bool(ratio <= KSTEP_RATIO), ratio, KSTEP_RATIO,
                                   {'failed_reps': [r.failed for r in comparison.results]}))
        return results

    def _homoskedastic_run(self):
        if self._homoskedastic is None:
            spec = DgpSpec(kind='linear_iv_homoskedastic', seed=self.seed)
            self._homoskedastic = run_monte_carlo(spec, EstimatorConfig(k=2), 1000, self._reps(500),
                                                  self.parallel, self.max_workers)
        return self._homoskedastic

    def efficiency(self) -> List[CheckResult]:
        result = self._homoskedastic_run()
        bound = float(efficient_variance(result.spec)[0, 0])
        variance = (result.summary.get('scaled_variance') or [float('nan')])[0]
        ratio = variance / bound
        return [CheckResult('efficiency', 'scaled-variance-band', bool(abs(ratio - 1.0) <= EFFICIENCY_BAND),
                            ratio, EFFICIENCY_BAND,
                            {'bound': bound, 'scaled_variance': variance, 'failed_reps': result.failed})]

    def coverage(self) -> List[CheckResult]:
        result = self._homoskedastic_run()
        coverage = (result.summary.get('coverage') or [None])[0]
        low, high = COVERAGE_RANGE
        passed = coverage is not None and low <= coverage <= high
        return [CheckResult('coverage', 'wald-95', passed, coverage, None, {'range': list(COVERAGE_RANGE)})]

    def consistency(self) -> List[CheckResult]:
        spec = DgpSpec(kind='linear_iv_homoskedastic', seed=self.seed)
        config = EstimatorConfig(k=2, inference='none')
        errors = []
        for n in (200, 800, 3200):
            result = run_monte_carlo(spec, config, n, self._reps(200), self.parallel, self.max_workers)
            errors.append((result.summary.get('median_abs_error') or [float('inf')])[0])
        decreasing = errors[0] > errors[1] > errors[2]
        return [
            CheckResult('consistency', 'median-error-decreasing', bool(decreasing), None, None, {'median_abs_error': errors}),
            CheckResult('consistency', 'median-error-at-3200', bool(errors[2] < 0.1), errors[2], 0.1),
        ]

    # -- neural adversary ---------------------------------------------------------

    def neural_dominance(self) -> List[CheckResult]:
        rng, results = self._rng('neural-dominance'), []
        for i in range(20):
            r = rng.spawn(0, i)
            problem, data = _iv_data(r, 20)
            kernel = _narrow_kernel(data.instruments, 0.3)
            alpha = AlphaSchedule()(data.n)
            prior, theta = r.normal(1), r.normal(1)
            closed = objective(assemble(problem, data, kernel, prior, alpha), problem, data, theta)
            reg = RegularizerChoice('kernel', alpha=alpha, kernels=kernel)
            net = MlpNetwork.initialize([3, 16, 16, 1], r)
            values = [nvmm_game_value(net, problem, data, theta, prior, reg)]
            values.append(fit_adversary(net, problem, data, theta, prior, reg, max_iter=200)[1])
            slack = 1e-8 * max(1.0, abs(closed))
            results.append(CheckResult('neural-dominance', f'dominance-{i}', max(values) <= closed + slack,
                                       max(values) - closed, slack))

        r = rng.spawn(1)
        problem, data = _grid_iv_data(r, GRID_POINTS)
        # one grid spacing keeps the Gram matrix well conditioned
        kernel = KernelSpec(bandwidth=4.0 / (GRID_POINTS - 1))
        alpha = AlphaSchedule()(data.n)
        prior = np.zeros(1)
        asm = assemble(problem, data, kernel, prior, alpha)
        reg = RegularizerChoice('kernel', alpha=alpha, kernels=kernel)
        net = MlpNetwork.initialize([1, 50, 50, 50, 1], r, zero_output=True)
        for theta in np.linspace(-2.0, 2.0, 11):
            net, value = fit_adversary(net, problem, data, [theta], prior, reg, max_iter=2000)
            closed = objective(asm, problem, data, [theta])
            gap = abs(value - closed)
            tolerance = max(SURROGATE_REL * abs(closed), SURROGATE_ABS)
            passed = gap <= tolerance and 0.0 <= value <= closed + 1e-8 * max(1.0, abs(closed))
            results.append(CheckResult('neural-dominance', f'uniform-approximation-theta={theta:+.1f}',
                                       bool(passed), gap, tolerance, {'neural': value, 'closed_form': closed}))
        return results

    # -- driver -------------------------------------------------------------------

    def run(self, selector: str) -> dict:
        if selector == 'all':
            names = list(self.suites)
        elif selector in self.suites:
            names = [selector]
        else:
            raise ConfigError(f"unknown suite '{selector}'; available: {', '.join(list(self.suites) + ['all'])}")
        checks: List[CheckResult] = []
        for name in names:
            logger.info(f"🧪 Running suite {name}")
            suite_checks = self.suites[name]()
            failed = [c for c in suite_checks if not c.passed]
            status = '✅' if not failed else '❌'
            logger.info(f"{status} {name}: {len(suite_checks) - len(failed)}/{len(suite_checks)} checks passed")
            for check in failed:
                logger.warning(f"⚠️ {name}/{check.name} failed: value={check.value} tolerance={check.tolerance}")
            checks.extend(suite_checks)
        return {
            'seed': self.seed, 'reps': self.reps, 'suites': names,
            'passed': all(c.passed for c in checks),
            'checks': [asdict(c) for c in checks],
            'version': __version__,
        }
