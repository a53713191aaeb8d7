"""Per-run configuration: one JSON document plus command-line overrides.

Every section rejects keys it does not know. ``RunConfig.to_dict`` emits the
fully resolved configuration and ``RunConfig.from_dict`` accepts it back
unchanged, so the echo embedded in reports reproduces the run.
"""

import copy
import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Dict, List, Optional

from ..errors import ConfigError
from ..estimators import MinimaxConfig, RegularizerChoice, VmmConfig
from ..estimators.kernel_vmm import AlphaSchedule
from ..estimators.optimizer import OptimizerConfig
from ..inference import ConditionalConfig
from ..kernels import KernelSpec
from ..pipeline import EstimatorConfig
from ..simulation import DgpSpec
from .settings import DEFAULT_SEED

COMMANDS = ('estimate', 'simulate', 'verify')
PROBLEM_KINDS = ('linear_iv', 'quantile_iv', 'density_ratio', 'policy_surrogate')


def _check_keys(data: Any, allowed, where: str) -> dict:
    if not isinstance(data, dict):
        raise ConfigError(f"'{where}' must be a JSON object")
    unknown = sorted(set(data) - set(allowed))
    if unknown:
        raise ConfigError(f"unknown key(s) in '{where}': {', '.join(unknown)}")
    return data


def _tuples(value):
    if isinstance(value, list):
        return tuple(_tuples(v) for v in value)
    return value


def _lists(value):
    if isinstance(value, (tuple, list)):
        return [_lists(v) for v in value]
    if isinstance(value, dict):
        return {k: _lists(v) for k, v in value.items()}
    return value


def _flat(cls, data: Optional[dict], where: str, **extra):
    """Builds a dataclass whose fields are all plain values"""
    data = _check_keys(data or {}, [f.name for f in fields(cls)], where)
    kwargs = {k: _tuples(v) for k, v in data.items()}
    kwargs.update(extra)
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"invalid '{where}': {e}") from e


def _kernel(data: Optional[dict], where: str, default: KernelSpec) -> KernelSpec:
    return default if data is None else _flat(KernelSpec, data, where)


def _kernels(data, where: str):
    if data is None or isinstance(data, dict):
        return _kernel(data, where, KernelSpec())
    if not isinstance(data, list):
        raise ConfigError(f"'{where}' must be an object or a list of objects")
    return tuple(_kernel(d, f"{where}[{i}]", KernelSpec()) for i, d in enumerate(data))


def _kernels_dict(kernels):
    if isinstance(kernels, KernelSpec):
        return kernels.to_dict()
    return [k.to_dict() for k in kernels]


@dataclass(frozen=True)
class ProblemSection:
    kind: str = 'linear_iv'
    b: int = 1
    # role -> CSV column names, in record order
    layout: Optional[Dict[str, List[str]]] = None
    p: float = 0.5
    tau: Optional[float] = None
    pi_e: Optional[tuple] = None
    pi_b: Optional[tuple] = None
    basis_degree: int = 1

    def __post_init__(self):
        if self.kind not in PROBLEM_KINDS:
            raise ConfigError(f"unknown problem kind '{self.kind}', expected one of {PROBLEM_KINDS}")
        if self.b < 1:
            raise ConfigError("problem.b must be at least 1")
        if self.kind == 'density_ratio' and (self.pi_e is None or self.pi_b is None):
            raise ConfigError("density_ratio needs pi_e and pi_b (P(a = 1 | s) per state)")

    @classmethod
    def from_dict(cls, data: Optional[dict]) -> 'ProblemSection':
        data = dict(_check_keys(data or {}, [f.name for f in fields(cls)], 'problem'))
        layout = data.pop('layout', None)
        if layout is not None:
            _check_keys(layout, list(layout), 'problem.layout')
            layout = {role: [cols] if isinstance(cols, str) else list(cols) for role, cols in layout.items()}
        return _flat(cls, data, 'problem', layout=layout)

    def resolved_layout(self) -> Dict[str, List[str]]:
        if self.layout is not None:
            return self.layout

        def names(prefix, width):
            return [prefix] if width == 1 else [f"{prefix}_{i}" for i in range(width)]

        if self.kind == 'density_ratio':
            return {'s': ['s'], 'a': ['a'], 's_next': ['s_next']}
        if self.kind == 'policy_surrogate':
            return {'x': names('x', self.b), 'psi': ['psi']}
        return {'z': names('z', self.b), 't': names('t', self.b), 'y': ['y']}

    def to_dict(self) -> dict:
        data = _lists(asdict(self))
        data['layout'] = self.resolved_layout()
        return data


@dataclass(frozen=True)
class EstimatorSection:
    name: str = 'kernel-vmm'
    k: int = 2
    alpha_scale: float = 0.1
    alpha_exponent: float = 0.4
    alpha: Optional[float] = None
    lam: float = 1e-6
    basis_degree: int = 1
    owgmm_steps: int = 2
    theta_init: Optional[tuple] = None
    pin: Optional[tuple] = None
    label: Optional[str] = None
    kernel: Any = field(default_factory=KernelSpec)
    kernel_g: KernelSpec = field(default_factory=lambda: KernelSpec(kind='linear'))
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    neural: MinimaxConfig = field(default_factory=MinimaxConfig)
    regularizer: RegularizerChoice = field(default_factory=RegularizerChoice)

    NESTED = ('kernel', 'kernel_g', 'optimizer', 'neural', 'regularizer')

    @classmethod
    def from_dict(cls, data: Optional[dict], where: str = 'estimator') -> 'EstimatorSection':
        data = dict(_check_keys(data or {}, [f.name for f in fields(cls)], where))
        nested = {key: data.pop(key, None) for key in cls.NESTED}
        neural = dict(nested['neural'] or {})
        if 'optimizer' in neural:
            neural['optimizer'] = _flat(OptimizerConfig, neural['optimizer'], f"{where}.neural.optimizer")
        regularizer = dict(_check_keys(nested['regularizer'] or {}, [f.name for f in fields(RegularizerChoice)],
                                       f"{where}.regularizer"))
        if regularizer.get('kernels') is not None:
            regularizer['kernels'] = _kernels(regularizer['kernels'], f"{where}.regularizer.kernels")
        return _flat(
            cls, data, where,
            kernel=_kernels(nested['kernel'], f"{where}.kernel"),
            kernel_g=_kernel(nested['kernel_g'], f"{where}.kernel_g", KernelSpec(kind='linear')),
            optimizer=_flat(OptimizerConfig, nested['optimizer'], f"{where}.optimizer"),
            neural=_flat(MinimaxConfig, neural, f"{where}.neural"),
            regularizer=_flat(RegularizerChoice, regularizer, f"{where}.regularizer"),
        )

    def to_dict(self) -> dict:
        data = {f.name: _lists(getattr(self, f.name)) for f in fields(self) if f.name not in self.NESTED}
        data.update(kernel=_kernels_dict(self.kernel), kernel_g=self.kernel_g.to_dict(),
                    optimizer=self.optimizer.to_dict(), neural=self.neural.to_dict(),
                    regularizer=self.regularizer.to_dict())
        return data

    def build(self, inference: 'InferenceSection') -> EstimatorConfig:
        try:
            vmm = VmmConfig(alpha_schedule=AlphaSchedule(self.alpha_scale, self.alpha_exponent),
                            optimizer=self.optimizer, alpha=self.alpha)
            return EstimatorConfig(
                name=self.name, k=self.k, kernel=self.kernel, vmm=vmm, kernel_g=self.kernel_g,
                lam=self.lam, basis_degree=self.basis_degree, owgmm_steps=self.owgmm_steps,
                minimax=self.neural, regularizer=self.regularizer, theta_init=self.theta_init,
                pin=self.pin, inference=inference.method, significance=1.0 - inference.level,
                conditional=inference.conditional(), label=self.label,
            )
        except ValueError as e:
            raise ConfigError(f"invalid estimator settings: {e}") from e


@dataclass(frozen=True)
class InferenceSection:
    method: str = 'sandwich'
    # confidence level of the Wald intervals
    level: float = 0.95
    ridge: float = 1e-8
    eigen_floor: float = 1e-6

    def __post_init__(self):
        if not 0 < self.level < 1:
            raise ConfigError("inference.level must lie in (0, 1)")

    def conditional(self) -> ConditionalConfig:
        return ConditionalConfig(ridge=self.ridge, eigen_floor=self.eigen_floor)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class SimulationSection:
    n: int = 1000
    reps: int = 100
    parallel: bool = False
    # extra estimator sections compared against the main one
    compare: tuple = ()

    def __post_init__(self):
        if self.n < 1 or self.reps < 1:
            raise ConfigError("simulation.n and simulation.reps must be at least 1")

    @classmethod
    def from_dict(cls, data: Optional[dict]) -> 'SimulationSection':
        data = dict(_check_keys(data or {}, [f.name for f in fields(cls)], 'simulation'))
        compare = data.pop('compare', None) or []
        if not isinstance(compare, list):
            raise ConfigError("'simulation.compare' must be a list of estimator sections")
        sections = tuple(EstimatorSection.from_dict(c, f"simulation.compare[{i}]") for i, c in enumerate(compare))
        return _flat(cls, data, 'simulation', compare=sections)

    def to_dict(self) -> dict:
        return {'n': self.n, 'reps': self.reps, 'parallel': self.parallel,
                'compare': [c.to_dict() for c in self.compare]}


@dataclass(frozen=True)
class RunConfig:
    command: str = 'estimate'
    seed: int = DEFAULT_SEED
    data: Optional[str] = None
    out: Optional[str] = None
    residuals: Optional[str] = None
    problem: ProblemSection = field(default_factory=ProblemSection)
    estimator: EstimatorSection = field(default_factory=EstimatorSection)
    inference: InferenceSection = field(default_factory=InferenceSection)
    dgp: DgpSpec = field(default_factory=DgpSpec)
    simulation: SimulationSection = field(default_factory=SimulationSection)

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise ConfigError(f"unknown command '{self.command}', expected one of {COMMANDS}")

    @classmethod
    def from_dict(cls, data: Optional[dict], command: Optional[str] = None,
                  default_seed: int = DEFAULT_SEED) -> 'RunConfig':
        data = dict(_check_keys(data or {}, [f.name for f in fields(cls)], 'config'))
        if command is not None:
            data['command'] = command
        dgp_data = dict(_check_keys(data.pop('dgp', None) or {}, [f.name for f in fields(DgpSpec)], 'dgp'))
        seed = data.get('seed', default_seed)
        # the design inherits the run seed unless it names its own
        dgp_data.setdefault('seed', seed)
        return _flat(
            cls, {k: v for k, v in data.items() if k not in ('problem', 'estimator', 'inference', 'simulation')},
            'config',
            seed=seed,
            problem=ProblemSection.from_dict(data.get('problem')),
            estimator=EstimatorSection.from_dict(data.get('estimator')),
            inference=_flat(InferenceSection, data.get('inference'), 'inference'),
            dgp=_flat(DgpSpec, dgp_data, 'dgp'),
            simulation=SimulationSection.from_dict(data.get('simulation')),
        )

    @classmethod
    def load(cls, path: Optional[str], command: str, default_seed: int = DEFAULT_SEED) -> 'RunConfig':
        if path is None:
            return cls.from_dict({}, command, default_seed)
        try:
            raw = json.loads(Path(path).read_text())
        except FileNotFoundError as e:
            raise ConfigError(f"config file not found: {path}") from e
        except json.JSONDecodeError as e:
            raise ConfigError(f"config file {path} is not valid JSON: {e}") from e
        return cls.from_dict(raw, command, default_seed)

    def to_dict(self) -> dict:
        return {
            'command': self.command, 'seed': self.seed, 'data': self.data, 'out': self.out,
            'residuals': self.residuals,
            'problem': self.problem.to_dict(), 'estimator': self.estimator.to_dict(),
            'inference': self.inference.to_dict(), 'dgp': self.dgp.to_dict(),
            'simulation': self.simulation.to_dict(),
        }

    def with_overrides(self, overrides: Dict[str, Any]) -> 'RunConfig':
        """Applies dotted-path overrides such as ``{'estimator.k': 3}``; None values are skipped"""
        data = copy.deepcopy(self.to_dict())
        for path, value in overrides.items():
            if value is None:
                continue
            node = data
            *parents, leaf = path.split('.')
            for key in parents:
                node = node[key]
            node[leaf] = value
        if 'seed' in overrides and overrides['seed'] is not None and 'dgp.seed' not in overrides:
            data['dgp']['seed'] = overrides['seed']
        return RunConfig.from_dict(data)

    def estimator_config(self, section: Optional[EstimatorSection] = None) -> EstimatorConfig:
        return (section or self.estimator).build(self.inference)

    def estimator_configs(self) -> List[EstimatorConfig]:
        return [self.estimator_config()] + [self.estimator_config(s) for s in self.simulation.compare]
