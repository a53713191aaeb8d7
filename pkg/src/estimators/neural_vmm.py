"""Neural VMM: a fully-connected ReLU adversary trained against theta.

The game value at evaluated adversary outputs F (n, m) is

    G(theta, F) = E_n[F_i . rho_i(theta)] - 1/4 E_n[(F_i . rho_i(theta~))^2] - R(F)

with R one of the kernel data-norm (alpha/4) sum_k f_k^T K_k^{-1} f_k, its
Frobenius approximation (alpha/4) sum_k sigma_k^{-1} |f_k|^2, or zero.
"""

import logging
from dataclasses import dataclass, field, replace
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy import linalg, optimize

from ..errors import ConfigError, DimensionMismatch, OptimizerDiverged
from ..kernels import KernelSpec, gram_matrix, per_dimension
from ..kernels.kernels import KernelChoice
from ..moments import Dataset, MomentProblem, residual_matrix
from ..numerics import CounterRng, SpdFactor, spd_factor, spd_solve
from .kernel_vmm import AlphaSchedule, VmmSolution
from .optimizer import OptimizerConfig, minimize_objective

logger = logging.getLogger(__name__)

REGULARIZER_KINDS = ('kernel', 'frobenius', 'none')


@dataclass(frozen=True)
class MlpNetwork:
    """Affine layers with ReLU between them; weights are (out, in)"""
    weights: Tuple[np.ndarray, ...]
    biases: Tuple[np.ndarray, ...]

    @classmethod
    def initialize(cls, widths: Sequence[int], rng: CounterRng, zero_output: bool = False) -> 'MlpNetwork':
        """He-style uniform weights and uniform biases in +-1/sqrt(fan_in).

        Nonzero biases spread the ReLU kinks over the input range and keep
        pre-activations away from exact zeros. ``zero_output`` starts the
        output layer at zero, where the game value is exactly 0.
        """
        if len(widths) < 2 or any(w < 1 for w in widths):
            raise ValueError(f"invalid layer widths {list(widths)}")
        weights, biases = [], []
        for fan_in, fan_out in zip(widths[:-1], widths[1:]):
            limit = np.sqrt(6.0 / fan_in)
            weights.append(rng.uniform((fan_out, fan_in), -limit, limit))
            biases.append(rng.uniform(fan_out, -1.0 / np.sqrt(fan_in), 1.0 / np.sqrt(fan_in)))
        net = cls(tuple(weights), tuple(biases))
        return net.with_output_layer(np.zeros_like(weights[-1]), np.zeros(widths[-1])) if zero_output else net

    @classmethod
    def zeros(cls, widths: Sequence[int]) -> 'MlpNetwork':
        return cls(tuple(np.zeros((o, i)) for i, o in zip(widths[:-1], widths[1:])),
                   tuple(np.zeros(o) for o in widths[1:]))

    @property
    def widths(self) -> List[int]:
        return [self.weights[0].shape[1]] + [w.shape[0] for w in self.weights]

    @property
    def parameter_count(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def flatten(self) -> np.ndarray:
        return np.concatenate([np.concatenate([w.ravel(), b]) for w, b in zip(self.weights, self.biases)])

    def with_parameters(self, flat) -> 'MlpNetwork':
        flat = np.asarray(flat, dtype=float)
        if flat.size != self.parameter_count:
            raise DimensionMismatch(f"{flat.size} parameters for a network with {self.parameter_count}")
        weights, biases, offset = [], [], 0
        for w, b in zip(self.weights, self.biases):
            weights.append(flat[offset:offset + w.size].reshape(w.shape))
            offset += w.size
            biases.append(flat[offset:offset + b.size].copy())
            offset += b.size
        return MlpNetwork(tuple(weights), tuple(biases))

    def with_output_layer(self, weight, bias) -> 'MlpNetwork':
        weight, bias = np.asarray(weight, dtype=float), np.asarray(bias, dtype=float)
        if weight.shape != self.weights[-1].shape or bias.shape != self.biases[-1].shape:
            raise DimensionMismatch(f"output layer of shape {weight.shape} for {self.weights[-1].shape}")
        return MlpNetwork(self.weights[:-1] + (weight,), self.biases[:-1] + (bias,))


def architecture(input_dim: int, output_dim: int, depth: int = 3, width: int = 50) -> List[int]:
    """[d_z, W, ..., W, m] with ``depth`` hidden layers"""
    return [input_dim] + [width] * depth + [output_dim]


@dataclass
class ForwardPass:
    output: np.ndarray
    inputs: List[np.ndarray]
    pre_activations: List[np.ndarray]


def mlp_forward(net: MlpNetwork, z) -> ForwardPass:
    z = np.asarray(z, dtype=float)
    if z.ndim == 1:
        z = z[:, None]
    if z.shape[1] != net.widths[0]:
        raise DimensionMismatch(f"network expects inputs of dimension {net.widths[0]}, got {z.shape[1]}")
    inputs, pre = [], []
    h = z
    last = len(net.weights) - 1
    for l, (w, b) in enumerate(zip(net.weights, net.biases)):
        inputs.append(h)
        a = h @ w.T + b
        pre.append(a)
        h = a if l == last else np.maximum(a, 0.0)
    return ForwardPass(output=h, inputs=inputs, pre_activations=pre)


def mlp_backward(net: MlpNetwork, forward: ForwardPass, upstream) -> MlpNetwork:
    """Gradient of sum(upstream * output) in the same layout as the network"""
    delta = np.asarray(upstream, dtype=float)
    if delta.shape != forward.output.shape:
        raise DimensionMismatch(f"upstream gradient of shape {delta.shape} for outputs {forward.output.shape}")
    grad_w, grad_b = [None] * len(net.weights), [None] * len(net.weights)
    for l in reversed(range(len(net.weights))):
        grad_w[l] = delta.T @ forward.inputs[l]
        grad_b[l] = delta.sum(axis=0)
        if l > 0:
            delta = (delta @ net.weights[l]) * (forward.pre_activations[l - 1] > 0.0)
    return MlpNetwork(tuple(grad_w), tuple(grad_b))


@dataclass(frozen=True)
class RegularizerChoice:
    kind: str = 'kernel'
    # None follows the default alpha_n schedule
    alpha: Optional[float] = None
    kernels: Optional[KernelChoice] = None
    weights: Optional[Tuple[float, ...]] = None

    def __post_init__(self):
        if self.kind not in REGULARIZER_KINDS:
            raise ValueError(f"unknown regularizer '{self.kind}', expected one of {REGULARIZER_KINDS}")
        if self.alpha is not None and self.alpha < 0:
            raise ValueError("alpha must be non-negative")
        if self.weights is not None and any(not s > 0 for s in self.weights):
            raise ValueError("frobenius weights must be positive")

    def alpha_for(self, n: int) -> float:
        return AlphaSchedule()(n) if self.alpha is None else self.alpha

    def prepare(self, problem: MomentProblem, data: Dataset) -> 'PreparedRegularizer':
        alpha = self.alpha_for(data.n)
        if self.kind == 'kernel':
            specs = [s.resolve(data.instruments) for s in per_dimension(self.kernels or KernelSpec(), problem.m)]
            factors = [spd_factor(gram_matrix(s, data.instruments)) for s in specs]
            return PreparedRegularizer(self.kind, alpha, factors=factors)
        if self.kind == 'frobenius':
            weights = np.ones(problem.m) if self.weights is None else np.broadcast_to(
                np.asarray(self.weights, dtype=float), (problem.m,))
            return PreparedRegularizer(self.kind, alpha, weights=np.array(weights))
        return PreparedRegularizer(self.kind, alpha)

    def to_dict(self) -> dict:
        kernels = None
        if isinstance(self.kernels, KernelSpec):
            kernels = self.kernels.to_dict()
        elif self.kernels is not None:
            kernels = [k.to_dict() for k in self.kernels]
        return {'kind': self.kind, 'alpha': self.alpha, 'kernels': kernels,
                'weights': None if self.weights is None else list(self.weights)}


@dataclass
class PreparedRegularizer:
    kind: str
    alpha: float
    factors: List[SpdFactor] = field(default_factory=list)
    weights: Optional[np.ndarray] = None

    def value(self, outputs: np.ndarray) -> float:
        if self.kind == 'kernel':
            return 0.25 * self.alpha * sum(float(outputs[:, k] @ spd_solve(f, outputs[:, k]))
                                           for k, f in enumerate(self.factors))
        if self.kind == 'frobenius':
            return 0.25 * self.alpha * float(np.sum(outputs ** 2 / self.weights[None, :]))
        return 0.0

    def gradient(self, outputs: np.ndarray) -> np.ndarray:
        if self.kind == 'kernel':
            return 0.5 * self.alpha * np.column_stack([spd_solve(f, outputs[:, k]) for k, f in enumerate(self.factors)])
        if self.kind == 'frobenius':
            return 0.5 * self.alpha * outputs / self.weights[None, :]
        return np.zeros_like(outputs)

    def curvature(self, features: np.ndarray, k: int) -> np.ndarray:
        """Hessian of the penalty on output k in the weights w of ``f_k = features @ w``"""
        if self.kind == 'kernel':
            return 0.5 * self.alpha * features.T @ spd_solve(self.factors[k], features)
        if self.kind == 'frobenius':
            return 0.5 * self.alpha * features.T @ features / self.weights[k]
        return np.zeros((features.shape[1], features.shape[1]))


@dataclass(frozen=True)
class MinimaxConfig:
    adversary_steps: int = 5
    adversary_lr: float = 0.01
    theta_lr: float = 0.05
    iterations: int = 2000
    # None trains on the full sample every step
    batch_size: Optional[int] = None
    seed: int = 0
    depth: int = 3
    width: int = 50
    # 'lbfgs' replaces the alternating updates by a best-response adversary and
    # a quasi-Newton search over theta
    solver: str = 'gradient'
    adversary_max_iter: int = 500
    optimizer: OptimizerConfig = field(default_factory=lambda: OptimizerConfig(restarts=0, tolerance=1e-6))

    def __post_init__(self):
        if not (self.adversary_lr > 0 and self.theta_lr > 0):
            raise ValueError("learning rates must be positive")
        if self.adversary_steps < 1 or self.iterations < 1 or self.adversary_max_iter < 1:
            raise ValueError("step counts must be positive")
        if self.batch_size is not None and self.batch_size < 1:
            raise ValueError("batch size must be positive")
        if self.solver not in ('gradient', 'lbfgs'):
            raise ValueError(f"unknown minimax solver '{self.solver}'")

    def to_dict(self) -> dict:
        return {
            'adversary_steps': self.adversary_steps, 'adversary_lr': self.adversary_lr,
            'theta_lr': self.theta_lr, 'iterations': self.iterations, 'batch_size': self.batch_size,
            'seed': self.seed, 'depth': self.depth, 'width': self.width, 'solver': self.solver,
            'adversary_max_iter': self.adversary_max_iter, 'optimizer': self.optimizer.to_dict(),
        }


@dataclass
class GameState:
    """Inputs of the game that do not depend on the adversary"""
    problem: MomentProblem
    data: Dataset
    prior_residuals: np.ndarray
    regularizer: PreparedRegularizer

    @classmethod
    def build(cls, problem: MomentProblem, data: Dataset, theta_prior, reg: RegularizerChoice) -> 'GameState':
        return cls(problem, data, residual_matrix(problem, data, theta_prior), reg.prepare(problem, data))


def _game(state: GameState, outputs: np.ndarray, theta):
    """Value, dG/dF and dG/dtheta at evaluated outputs"""
    problem, data = state.problem, state.data
    n = data.n
    residuals = residual_matrix(problem, data, theta)
    weighting = np.sum(outputs * state.prior_residuals, axis=1)
    value = (float(np.sum(outputs * residuals)) / n - 0.25 * float(np.mean(weighting ** 2))
             - state.regularizer.value(outputs))
    grad_outputs = residuals / n - 0.5 * weighting[:, None] * state.prior_residuals / n \
        - state.regularizer.gradient(outputs)
    jac = problem.jacobian(data.records, problem.check_theta(theta))
    grad_theta = np.einsum('ik,ikb->b', outputs, jac) / n
    return value, grad_outputs, grad_theta


def nvmm_game_value(net: MlpNetwork, problem: MomentProblem, data: Dataset, theta, theta_prior,
                    reg: RegularizerChoice) -> float:
    state = GameState.build(problem, data, theta_prior, reg)
    return _game(state, mlp_forward(net, data.instruments).output, theta)[0]


def nvmm_gradients(net: MlpNetwork, problem: MomentProblem, data: Dataset, theta, theta_prior,
                   reg: RegularizerChoice) -> Tuple[float, np.ndarray, MlpNetwork]:
    """Game value with its gradients in theta and in the network parameters"""
    state = GameState.build(problem, data, theta_prior, reg)
    forward = mlp_forward(net, data.instruments)
    value, grad_outputs, grad_theta = _game(state, forward.output, theta)
    return value, grad_theta, mlp_backward(net, forward, grad_outputs)


def output_layer_response(net: MlpNetwork, state: GameState, theta) -> MlpNetwork:
    """Maximizes the game over the output layer with the hidden layers held fixed.

    With f_k = H w_k for the last hidden activations H (plus a unit column)
    the game is c^T w - 1/2 w^T C w, so the maximizer solves C w = c.
    """
    n, m = state.data.n, net.widths[-1]
    features = np.column_stack([mlp_forward(net, state.data.instruments).inputs[-1], np.ones(n)])
    p = features.shape[1]
    residuals = residual_matrix(state.problem, state.data, theta)
    linear = (features.T @ residuals / n).T.ravel()
    weighted = np.hstack([state.prior_residuals[:, [k]] * features for k in range(m)])
    curvature = 0.5 * weighted.T @ weighted / n + linalg.block_diag(
        *[state.regularizer.curvature(features, k) for k in range(m)])
    # C is singular when the features outnumber the samples; any solution is a maximizer
    coefficients = linalg.lstsq(curvature, linear)[0].reshape(m, p)
    return net.with_output_layer(coefficients[:, :-1], coefficients[:, -1])


def _best_of(candidates, state: GameState, theta) -> Tuple[MlpNetwork, float]:
    best, best_value = None, -np.inf
    for candidate in candidates:
        value = _game(state, mlp_forward(candidate, state.data.instruments).output, theta)[0]
        if np.isfinite(value) and value > best_value:
            best, best_value = candidate, value
    return best, best_value


def _best_response(net: MlpNetwork, state: GameState, theta, max_iter: int) -> Tuple[MlpNetwork, float, bool]:
    """Output-layer solve, L-BFGS over every parameter, then a second output-layer solve.

    The result never scores below the network with a zero output layer (value 0).
    """
    def negated(flat):
        candidate = net.with_parameters(flat)
        forward = mlp_forward(candidate, state.data.instruments)
        value, grad_outputs, _ = _game(state, forward.output, theta)
        if not np.isfinite(value):
            raise OptimizerDiverged(f"non-finite game value at theta={theta}")
        return -value, -mlp_backward(candidate, forward, grad_outputs).flatten()

    def solved(candidate):
        try:
            return [candidate, output_layer_response(candidate, state, theta)]
        except linalg.LinAlgError as e:
            logger.debug(f"Output layer solve failed: {e}")
            return [candidate]

    zero = net.with_output_layer(np.zeros_like(net.weights[-1]), np.zeros_like(net.biases[-1]))
    start, _ = _best_of(solved(net) + [zero], state, theta)
    converged, candidates = False, [start, zero]
    try:
        res = optimize.minimize(negated, start.flatten(), jac=True, method='L-BFGS-B',
                                options={'maxiter': max_iter, 'gtol': 1e-10, 'ftol': 1e-14})
        converged = bool(res.success)
        if not converged:
            logger.debug(f"Adversary search stopped at theta={theta}: {res.message}")
        candidates.extend(solved(net.with_parameters(res.x)))
    except OptimizerDiverged as e:
        logger.debug(f"Adversary search diverged: {e}")
    best, value = _best_of(candidates, state, theta)
    return best, value, converged


def fit_adversary(net: MlpNetwork, problem: MomentProblem, data: Dataset, theta, theta_prior,
                  reg: RegularizerChoice, max_iter: int = 500) -> Tuple[MlpNetwork, float]:
    """Trains only the adversary at fixed theta; returns the network and its game value"""
    state = GameState.build(problem, data, theta_prior, reg)
    theta = problem.check_theta(theta)
    best, value, converged = _best_response(net, state, theta, max_iter)
    if not converged:
        logger.warning(f"⚠️ Adversary at theta={theta} did not converge in {max_iter} iterations; "
                       f"keeping the best network found (value {value:.6e})")
    return best, value


def _ascend(net: MlpNetwork, grads: MlpNetwork, rate: float) -> MlpNetwork:
    """Gradient ascent step"""
    return MlpNetwork(tuple(w + rate * g for w, g in zip(net.weights, grads.weights)),
                      tuple(b + rate * g for b, g in zip(net.biases, grads.biases)))


def _train_alternating(net, problem, data, theta, theta_prior, reg, config, rng, lower, upper):
    full_state = GameState.build(problem, data, theta_prior, reg)
    values: List[float] = []
    for it in range(config.iterations):
        state = full_state
        if config.batch_size is not None and config.batch_size < data.n:
            index = np.sort(rng.integers(0, data.n, config.batch_size))
            batch = data.take(index)
            state = GameState(problem, batch, full_state.prior_residuals[index], reg.prepare(problem, batch))
        for _ in range(config.adversary_steps):
            forward = mlp_forward(net, state.data.instruments)
            _, grad_outputs, _ = _game(state, forward.output, theta)
            net = _ascend(net, mlp_backward(net, forward, grad_outputs), config.adversary_lr)
        value, _, grad_theta = _game(state, mlp_forward(net, state.data.instruments).output, theta)
        if not np.isfinite(value) or not np.all(np.isfinite(grad_theta)):
            raise OptimizerDiverged(f"non-finite game value at outer iteration {it}")
        theta = np.clip(theta - config.theta_lr * grad_theta, lower, upper)
        values.append(value)
    return net, theta, values


def _train_best_response(net, problem, data, theta, theta_prior, reg, config, lower, upper):
    state = GameState.build(problem, data, theta_prior, reg)
    values: List[float] = []
    # warm start carries the adversary from one theta to the next
    holder = {'net': net}

    def fun(candidate):
        adversary, value, _ = _best_response(holder['net'], state, candidate, config.adversary_max_iter)
        holder['net'] = adversary
        _, _, grad_theta = _game(state, mlp_forward(adversary, data.instruments).output, candidate)
        values.append(value)
        return value, grad_theta

    result = minimize_objective(fun, theta, replace(config.optimizer, lower=tuple(lower), upper=tuple(upper)))
    return holder['net'], result.theta, values


def train_neural_vmm(problem: MomentProblem, data: Dataset, theta_init, theta_prior,
                     reg: RegularizerChoice, config: Optional[MinimaxConfig] = None,
                     widths: Optional[Sequence[int]] = None) -> VmmSolution:
    config = config or MinimaxConfig()
    if reg.kind == 'kernel' and config.batch_size is not None and config.batch_size < data.n:
        raise ConfigError("the kernel regularizer needs full-batch training")
    widths = list(widths or architecture(data.instrument_dim, problem.m, config.depth, config.width))
    if widths[0] != data.instrument_dim or widths[-1] != problem.m:
        raise DimensionMismatch(f"architecture {widths} does not map instruments to {problem.m} residuals")
    rng = CounterRng(config.seed)
    net = MlpNetwork.initialize(widths, rng.spawn(0), zero_output=True)
    theta = problem.check_theta(theta_init)
    theta_prior = problem.check_theta(theta_prior)
    lower, upper = config.optimizer.box(problem.b)

    if config.solver == 'lbfgs':
        net, theta, values = _train_best_response(net, problem, data, theta, theta_prior, reg, config, lower, upper)
    else:
        net, theta, values = _train_alternating(net, problem, data, theta, theta_prior, reg, config,
                                                rng.spawn(1), lower, upper)

    value, grad_theta, _ = nvmm_gradients(net, problem, data, theta, theta_prior, reg)
    grad_norm = float(np.max(np.abs(grad_theta)))
    logger.info(f"🧠 Neural VMM finished: theta={theta}, game value={value:.6e}")
    return VmmSolution(theta=theta, objective=value, grad_norm=grad_norm,
                       converged=grad_norm <= config.optimizer.tolerance,
                       steps=[len(values)], trace=[theta], stage_objectives=[value], game_values=values,
                       alpha=reg.alpha_for(data.n))


def k_step_neural_vmm(problem: MomentProblem, data: Dataset, k: int, theta0_init, reg: RegularizerChoice,
                      config: Optional[MinimaxConfig] = None,
                      widths: Optional[Sequence[int]] = None) -> VmmSolution:
    """Stage j trains against the weighting at stage j-1's estimate"""
    if k < 1:
        raise ValueError("k must be at least 1")
    prior = problem.check_theta(theta0_init)
    steps, trace, objectives, values, solution = [], [], [], [], None
    for stage in range(k):
        solution = train_neural_vmm(problem, data, prior, prior, reg, config, widths)
        steps.extend(solution.steps)
        trace.extend(solution.trace)
        objectives.extend(solution.stage_objectives)
        values.extend(solution.game_values)
        prior = solution.theta
    solution.steps, solution.trace, solution.stage_objectives, solution.game_values = steps, trace, objectives, values
    return solution
