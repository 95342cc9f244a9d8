"""Stiffness optimization: Adam gradient descent, AFPO, random search.

All optimizers treat the per-particle stiffness vector as the genome and
keep it inside STIFFNESS_BOUNDS by clipping after every update or mutation.
Randomness is drawn from named substreams of a single seed so every run is
exactly replayable.
"""

from dataclasses import dataclass, replace

import numpy as np
from scipy import stats

from .adjoint import loss_and_grad
from .engine import SimConfig
from .errors import ConfigError
from .losses import ExperimentSpec, evaluate_experiment

STIFFNESS_BOUNDS = (1.0, 10.0)

_STREAMS = {"init": 0, "mutation": 1, "search": 2}


def seeded_rng(seed: int, stream: str) -> np.random.Generator:
    """Independent generator for a named use of one experiment seed."""
    if stream not in _STREAMS:
        raise ValueError(f"unknown random stream {stream!r}")
    return np.random.default_rng(
        np.random.SeedSequence(entropy=seed, spawn_key=(_STREAMS[stream],)))


@dataclass(frozen=True)
class TrainConfig:
    """Adam schedule for gradient-based training."""

    epochs: int
    lr: float = 1e-3
    lr_milestones: tuple = ()
    lr_gamma: float = 0.1
    init: str = "fixed"
    init_value: float = 5.0
    seed: int = 0
    snapshot_epochs: tuple = ()
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8

    def __post_init__(self):
        if self.epochs < 0:
            raise ConfigError("epochs must be non-negative")
        if self.lr <= 0:
            raise ConfigError("learning rate must be positive")
        if self.init not in ("fixed", "uniform"):
            raise ConfigError("init must be 'fixed' or 'uniform'")

    def lr_at(self, epoch: int) -> float:
        decays = sum(1 for m in self.lr_milestones if epoch >= m)
        return self.lr * self.lr_gamma ** decays


@dataclass
class TrainResult:
    theta: np.ndarray
    history: list
    snapshots: dict
    initial_loss: float
    final_loss: float


def init_stiffness(config: TrainConfig, n: int) -> np.ndarray:
    """Starting stiffness vector: homogeneous or uniform within bounds."""
    lo, hi = STIFFNESS_BOUNDS
    if config.init == "fixed":
        if not lo <= config.init_value <= hi:
            raise ConfigError("init_value outside stiffness bounds")
        return np.full(n, float(config.init_value))
    rng = seeded_rng(config.seed, "init")
    return rng.uniform(lo, hi, n)


def train_gd(spec: ExperimentSpec, params, geometry, sim_config: SimConfig,
             train_config: TrainConfig, callback=None) -> TrainResult:
    """Adam on the experiment loss via the adjoint gradient.

    History has one row per epoch with the loss of the pre-update design,
    plus a final row (lr None) scoring the trained design.  Snapshots store
    the design at the start of the listed epochs.
    """
    lo, hi = STIFFNESS_BOUNDS
    theta = init_stiffness(train_config, params.n)
    m = np.zeros_like(theta)
    v = np.zeros_like(theta)
    history = []
    snapshots = {}
    for epoch in range(train_config.epochs):
        if epoch in train_config.snapshot_epochs:
            snapshots[epoch] = theta.copy()
        report, grad = loss_and_grad(spec, replace(params, stiffness=theta),
                                     geometry, sim_config)
        lr = train_config.lr_at(epoch)
        row = {"epoch": epoch, "total": report.total, "lr": lr,
               "grad_norm": float(np.linalg.norm(grad))}
        row.update({f"loss_{k}": v_ for k, v_ in report.partials.items()})
        history.append(row)
        if callback is not None:
            callback(epoch, row, theta)
        m = train_config.beta1 * m + (1.0 - train_config.beta1) * grad
        v = train_config.beta2 * v + (1.0 - train_config.beta2) * grad * grad
        mhat = m / (1.0 - train_config.beta1 ** (epoch + 1))
        vhat = v / (1.0 - train_config.beta2 ** (epoch + 1))
        theta = np.clip(theta - lr * mhat / (np.sqrt(vhat)
                                             + train_config.adam_eps), lo, hi)
    final = evaluate_experiment(spec, replace(params, stiffness=theta),
                                geometry, sim_config)
    row = {"epoch": train_config.epochs, "total": final.total, "lr": None,
           "grad_norm": None}
    row.update({f"loss_{k}": v_ for k, v_ in final.partials.items()})
    history.append(row)
    initial = history[0]["total"] if train_config.epochs else final.total
    return TrainResult(theta=theta, history=history, snapshots=snapshots,
                       initial_loss=initial, final_loss=final.total)


@dataclass(frozen=True)
class EvoConfig:
    """Age-fitness Pareto optimization schedule."""

    population: int = 100
    generations: int = 1000
    mutation_sigma: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.population < 2:
            raise ConfigError("population must be at least 2")
        if self.generations < 0:
            raise ConfigError("generations must be non-negative")
        if self.mutation_sigma <= 0:
            raise ConfigError("mutation_sigma must be positive")


@dataclass
class Individual:
    theta: np.ndarray
    age: int
    loss: float


def _pareto_front(population):
    """Indices of individuals not dominated in (loss, age), both minimized."""
    front = []
    for i, a in enumerate(population):
        dominated = any(
            (b.loss <= a.loss and b.age <= a.age)
            and (b.loss < a.loss or b.age < a.age)
            for b in population
        )
        if not dominated:
            front.append(i)
    return front


@dataclass
class EvoResult:
    theta: np.ndarray
    loss: float
    history: list
    evaluations: int


def afpo_evolve(loss_fn, n_genes: int, config: EvoConfig,
                callback=None) -> EvoResult:
    """Age-fitness Pareto optimization over bounded stiffness genomes.

    Each generation keeps the (loss, age) Pareto front, refills with
    mutated copies of front members (children inherit the parent's age),
    ages everyone by one, and injects one fresh random genome of age zero.
    The best loss ever seen never worsens because the lowest-loss member
    is never dominated.
    """
    lo, hi = STIFFNESS_BOUNDS
    init_rng = seeded_rng(config.seed, "init")
    mut_rng = seeded_rng(config.seed, "mutation")
    evaluations = 0

    def make(theta, age):
        nonlocal evaluations
        evaluations += 1
        return Individual(theta=theta, age=age, loss=float(loss_fn(theta)))

    population = [make(init_rng.uniform(lo, hi, n_genes), 0)
                  for _ in range(config.population)]
    history = []
    best = min(population, key=lambda ind: ind.loss)
    for gen in range(config.generations):
        front = _pareto_front(population)
        if len(front) > config.population - 1:
            front = sorted(front, key=lambda i: population[i].loss)
            front = front[:config.population - 1]
        survivors = [population[i] for i in front]
        next_pop = list(survivors)
        while len(next_pop) < config.population - 1:
            parent = survivors[mut_rng.integers(len(survivors))]
            theta = np.clip(
                parent.theta + mut_rng.normal(0.0, config.mutation_sigma,
                                              n_genes), lo, hi)
            next_pop.append(make(theta, parent.age))
        for ind in next_pop:
            ind.age += 1
        next_pop.append(make(init_rng.uniform(lo, hi, n_genes), 0))
        population = next_pop
        gen_best = min(population, key=lambda ind: ind.loss)
        if gen_best.loss < best.loss:
            best = gen_best
        history.append({"generation": gen, "best": best.loss,
                        "front_size": len(survivors),
                        "evaluations": evaluations})
        if callback is not None:
            callback(gen, history[-1], population)
    return EvoResult(theta=best.theta.copy(), loss=best.loss,
                     history=history, evaluations=evaluations)


def random_search(loss_fn, n_genes: int, n_trials: int, seed: int = 0):
    """Best of uniformly sampled genomes; returns (theta, loss, all losses)."""
    lo, hi = STIFFNESS_BOUNDS
    rng = seeded_rng(seed, "search")
    best_theta, best_loss, losses = None, np.inf, []
    for _ in range(n_trials):
        theta = rng.uniform(lo, hi, n_genes)
        loss = float(loss_fn(theta))
        losses.append(loss)
        if loss < best_loss:
            best_theta, best_loss = theta, loss
    return best_theta, best_loss, losses


def mann_whitney_u(a, b):
    """Two-sided Mann-Whitney U comparison; returns (statistic, p_value)."""
    res = stats.mannwhitneyu(a, b, alternative="two-sided")
    return float(res.statistic), float(res.pvalue)


def experiment_loss_fn(spec: ExperimentSpec, params, geometry,
                       sim_config: SimConfig):
    """Forward-only loss of a stiffness vector, for evolution and search."""
    def loss_fn(theta):
        return evaluate_experiment(spec, replace(params, stiffness=theta),
                                   geometry, sim_config).total
    return loss_fn
