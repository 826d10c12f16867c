import concurrent.futures
import dataclasses
import logging
from typing import Dict, FrozenSet, List, Mapping, Optional, Sequence

import numpy as np

from .cascade import (
    CascadeConfig,
    CascadeRisk,
    CouplingInputs,
    analyze_cascades,
    cascade_residual_risk,
    defense_gap,
    layer_coverage,
)
from .catalog import Catalog, LayerId
from .config import (
    DEFAULT_SEED,
    NOISE_MODES,
    NOISE_TARGETS_ALL,
    NOISE_TARGETS_INPUTS,
    DefaultConfig,
)
from .errors import DomainError, EmptySample, NoApplicableThreats, UnsupportedConfig
from .scoring import BoundAssessment, PlatformAssessment, ScoreBreakdown, bind, compute_breakdown, score_bound
from .serialize import RiskMapSerializeMixin

logger = logging.getLogger(__name__)

AGGREGATE_METRIC = "aggregate_percent"
SEED_LIMIT = 2 ** 64
SUMMARY_QUANTILES = (0.05, 0.5, 0.95)


@dataclasses.dataclass(frozen=True)
class NoiseSpec(RiskMapSerializeMixin):
    """
    i.i.d. uniform noise on the targeted inputs. multiplicative draws
    value * (1 + fraction * u), additive value + fraction * u, both clipped
    to [0, 1] with u uniform on [-1, 1].
    """

    fraction: float = DefaultConfig.NOISE_FRACTION
    targets: FrozenSet[str] = frozenset(NOISE_TARGETS_INPUTS)
    mode: str = DefaultConfig.NOISE_MODE

    __rm_convert_types__ = {"fraction": float, "targets": frozenset}

    def __post_init__(self):
        if not 0.0 <= self.fraction < 1.0:
            raise DomainError("noise fraction", self.fraction, "[0, 1)")
        unknown = set(self.targets) - set(NOISE_TARGETS_ALL)
        if unknown:
            raise UnsupportedConfig("noise targets", sorted(unknown), ", ".join(NOISE_TARGETS_ALL))
        if self.mode not in NOISE_MODES:
            raise UnsupportedConfig("noise mode", self.mode, " or ".join(NOISE_MODES))
        object.__setattr__(self, "targets", frozenset(self.targets))


@dataclasses.dataclass(frozen=True)
class McConfig(RiskMapSerializeMixin):
    iterations: int = DefaultConfig.ITERATIONS
    seed: int = DEFAULT_SEED
    noise: NoiseSpec = NoiseSpec()
    workers: int = DefaultConfig.WORKERS

    __rm_convert_types__ = {"noise": NoiseSpec.rm_from_dict}

    def __post_init__(self):
        if self.iterations < 1:
            raise DomainError("iterations", self.iterations, "[1, inf)")
        if not 0 <= self.seed < SEED_LIMIT:
            raise DomainError("seed", self.seed, "[0, 2**64)")
        if self.workers < 1:
            raise DomainError("workers", self.workers, "[1, inf)")

    @classmethod
    def from_config(cls, config: Mapping) -> "McConfig":
        return cls(
            iterations=int(config.get("ITERATIONS", DefaultConfig.ITERATIONS)),
            seed=int(config.get("SEED", DEFAULT_SEED)),
            noise=NoiseSpec(
                fraction=float(config.get("NOISE_FRACTION", DefaultConfig.NOISE_FRACTION)),
                targets=frozenset(config.get("NOISE_TARGETS", DefaultConfig.NOISE_TARGETS)),
                mode=str(config.get("NOISE_MODE", DefaultConfig.NOISE_MODE)),
            ),
            workers=int(config.get("WORKERS", DefaultConfig.WORKERS)),
        )


@dataclasses.dataclass(frozen=True)
class DistributionSummary(RiskMapSerializeMixin):
    mean: float
    std_dev: float
    median: float
    p5: float
    p95: float
    iterations: int
    point_estimate: float

    __rm_convert_types__ = {
        "mean": float,
        "std_dev": float,
        "median": float,
        "p5": float,
        "p95": float,
        "iterations": int,
        "point_estimate": float,
    }


def perturb(value, fraction: float, u, mode: str = "multiplicative"):
    """
    draw a noisy copy of a value in [0, 1]

    :param value: scalar or array in [0, 1]
    :param fraction: noise fraction, 0 leaves the value unchanged
    :param u: uniform draw(s) in [-1, 1], same shape as value
    :param mode: "multiplicative" or "additive"
    :return: clip(value * (1 + fraction * u)) or clip(value + fraction * u)
    """
    value = np.asarray(value, dtype=float)
    u = np.asarray(u, dtype=float)
    if mode == "multiplicative":
        noisy = value * (1.0 + fraction * u)
    elif mode == "additive":
        noisy = value + fraction * u
    else:
        raise UnsupportedConfig("noise mode", mode, " or ".join(NOISE_MODES))
    noisy = np.clip(noisy, 0.0, 1.0)
    return float(noisy) if noisy.ndim == 0 else noisy


def percentile(samples: Sequence[float], q: float) -> float:
    """
    linear interpolation between closest ranks at h = q * (n - 1)

    :param samples: non empty
    :param q: quantile in [0, 1]
    :return: the interpolated value
    :throws: EmptySample
    """
    if len(samples) == 0:
        raise EmptySample()
    if not 0.0 <= q <= 1.0:
        raise DomainError("q", q)
    return float(np.quantile(np.asarray(samples, dtype=float), q, method="linear"))


def summarize(samples: Sequence[float], point_estimate: float) -> DistributionSummary:
    """
    mean, population std dev, median and the 5th/95th percentiles of a sample
    """
    values = np.asarray(samples, dtype=float)
    if values.size == 0:
        raise EmptySample()
    if np.all(values == values[0]):
        mean, std_dev = float(values[0]), 0.0
    else:
        mean, std_dev = float(np.mean(values)), float(np.std(values, ddof=0))
    p5, median, p95 = np.quantile(values, SUMMARY_QUANTILES, method="linear")
    return DistributionSummary(
        mean=mean,
        std_dev=std_dev,
        median=float(median),
        p5=float(p5),
        p95=float(p95),
        iterations=int(values.size),
        point_estimate=float(point_estimate),
    )


def crr_metric(risk: CascadeRisk) -> str:
    return f"crr.{risk.key}"


def layer_metric(layer: LayerId) -> str:
    return f"layer_score.{layer.code}"


class _Iteration:
    """
    Evaluates one Monte Carlo iteration. Every iteration draws a single block
    of uniforms laid out as likelihood, impact, gamma (row major),
    implementation, attack weight; untargeted inputs still consume their draws.
    """

    def __init__(
        self,
        c: Catalog,
        bound: BoundAssessment,
        cfg: McConfig,
        baseline_top: Sequence[CascadeRisk],
        cascade_cfg: CascadeConfig,
    ):
        self.c = c
        self.bound = bound
        self.cfg = cfg
        self.baseline_top = list(baseline_top)
        self.cascade_cfg = cascade_cfg
        self.gamma = c.gamma_matrix
        self.n_attacks, self.n_defenses = self.gamma.shape
        self.block = 3 * self.n_attacks + self.n_attacks * self.n_defenses + self.n_defenses
        self.attack_index = c.attack_index

    def draws(self, t: int) -> np.ndarray:
        seed_seq = np.random.SeedSequence(entropy=self.cfg.seed, spawn_key=(t,))
        generator = np.random.Generator(np.random.Philox(seed_seq))
        return generator.uniform(-1.0, 1.0, self.block)

    def _noisy(self, target: str, value, u):
        noise = self.cfg.noise
        if target not in noise.targets:
            return value
        return perturb(value, noise.fraction, u, noise.mode)

    def __call__(self, t: int) -> List[float]:
        a, d = self.n_attacks, self.n_defenses
        u = self.draws(t)
        u_likelihood = u[:a]
        u_impact = u[a:2 * a]
        u_gamma = u[2 * a:2 * a + a * d].reshape(a, d)
        u_mu = u[2 * a + a * d:2 * a + a * d + d]
        u_weight = u[2 * a + a * d + d:]

        likelihood = self._noisy("likelihood", self.bound.likelihood, u_likelihood)
        impact = self._noisy("impact", self.bound.impact, u_impact)
        gamma = self._noisy("gamma", self.gamma, u_gamma)
        mu = self._noisy("mu", self.bound.implementation, u_mu)
        try:
            breakdown = compute_breakdown(
                self.c, self.bound.platform, likelihood, impact, self.bound.applicability, gamma, mu
            )
        except NoApplicableThreats:
            logger.warning(
                "iteration %d of %s: every adjusted severity clipped to 0, recording 0",
                t,
                self.bound.platform,
            )
            return [0.0] * (1 + len(LayerId) + len(self.baseline_top))

        row = [breakdown.aggregate_percent]
        row += [breakdown.layer_scores[layer] for layer in LayerId.ordered()]
        row += self._crr(breakdown, u_weight)
        return row

    def _crr(self, breakdown: ScoreBreakdown, u_weight: np.ndarray) -> List[float]:
        if not self.baseline_top:
            return []
        coverage = layer_coverage(breakdown, self.cascade_cfg.coverage_mode)
        values = []
        for risk in self.baseline_top:
            i = self.attack_index[risk.attack_id]
            weight = min(1.0, max(0.0, float(breakdown.omega_adjusted[i]) * float(self.bound.detectability[i])))
            weight = float(self._noisy("attack_weight", weight, u_weight[i]))
            gap = defense_gap(coverage, risk.path)
            values.append(cascade_residual_risk(risk.path, weight, gap, attack_id=risk.attack_id).crr)
        return values


def run_monte_carlo(
    c: Catalog,
    a: PlatformAssessment,
    coupling: Optional[CouplingInputs] = None,
    cfg: McConfig = McConfig(),
    cascade_cfg: CascadeConfig = CascadeConfig(),
    allow_continuous: bool = False,
) -> Dict[str, DistributionSummary]:
    """
    perturb the targeted inputs and summarize the aggregate score, every
    layer score and, when coupling is given, the crr of each baseline top k
    cascade record. Samples are collected by iteration index, so the result
    does not depend on the worker count.

    :param c: the catalog
    :param a: the platform assessment
    :param coupling: optional coupling inputs
    :param cfg: McConfig
    :param cascade_cfg: cascade parameters used for the crr metrics
    :param allow_continuous: accept any implementation level in [0, 1]
    :return: metric name -> DistributionSummary, in metric order
    :throws: NoApplicableThreats when the noise free baseline fails
    """
    bound = bind(c, a, allow_continuous)
    baseline = score_bound(c, bound)
    baseline_top: List[CascadeRisk] = []
    if coupling is not None:
        baseline_top = list(analyze_cascades(baseline, bound.detectability, coupling, cascade_cfg).top)

    metrics = [AGGREGATE_METRIC] + [layer_metric(layer) for layer in LayerId.ordered()]
    metrics += [crr_metric(risk) for risk in baseline_top]
    point = [baseline.aggregate_percent]
    point += [baseline.layer_scores[layer] for layer in LayerId.ordered()]
    point += [risk.crr for risk in baseline_top]

    iteration = _Iteration(c, bound, cfg, baseline_top, cascade_cfg)
    logger.debug(
        "monte carlo on %s: %d iterations, seed %d, %d workers",
        a.platform,
        cfg.iterations,
        cfg.seed,
        cfg.workers,
    )
    if cfg.workers == 1:
        rows = [iteration(t) for t in range(cfg.iterations)]
    else:
        with concurrent.futures.ThreadPoolExecutor(max_workers=cfg.workers) as executor:
            rows = list(executor.map(iteration, range(cfg.iterations)))

    samples = np.array(rows, dtype=float).reshape(cfg.iterations, len(metrics))
    return {
        name: summarize(samples[:, k], point[k])
        for k, name in enumerate(metrics)
    }
