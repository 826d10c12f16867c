import dataclasses
import functools
import logging
import math
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .catalog import DATA_DIR, LayerId, ValidationReport, Violation, read_source, schema_violations
from .config import COVERAGE_MODES, DefaultConfig
from .errors import DomainError, UnsupportedConfig, ValidationError
from .scoring import LAYER_SCALE, ScoreBreakdown
from .serialize import RiskMapSerializeMixin, fingerprint

logger = logging.getLogger(__name__)

DEFAULT_COUPLING_PATH = DATA_DIR / "coupling.json"
LAYERS = LayerId.ordered()
WEIGHT_TOLERANCE = 1e-9


def _matrix(value) -> np.ndarray:
    matrix = np.array(value, dtype=float)
    matrix.setflags(write=False)
    return matrix


@dataclasses.dataclass(frozen=True, eq=False)
class CouplingInputs(RiskMapSerializeMixin):
    """
    Inter-layer spread inputs, 7 x 7 and indexed by layer ordinal:
    S structural feasibility, E empirical evidence, M edge mitigation.
    """

    S: np.ndarray
    E: np.ndarray
    M: np.ndarray
    alpha: float = DefaultConfig.ALPHA
    beta: float = DefaultConfig.BETA
    illustrative: bool = False

    __rm_convert_types__ = {
        "S": _matrix,
        "E": _matrix,
        "M": _matrix,
        "alpha": float,
        "beta": float,
        "illustrative": bool,
    }

    @functools.cached_property
    def fingerprint(self) -> str:
        return fingerprint(self.rm_as_dict)


@dataclasses.dataclass(frozen=True)
class CascadeConfig:
    """
    Enumeration and ranking parameters. epsilon_hop is the per hop gate on D,
    unrelated to the effective coverage epsilon_ij of the scoring module.
    """

    epsilon_hop: float = DefaultConfig.EPSILON_HOP
    min_prop: float = DefaultConfig.MIN_PROP
    hops: int = DefaultConfig.HOPS
    top_k: int = DefaultConfig.TOP_K
    require_distinct_endpoints: bool = DefaultConfig.REQUIRE_DISTINCT_ENDPOINTS
    coverage_mode: str = DefaultConfig.COVERAGE_MODE
    origin_only: bool = DefaultConfig.ORIGIN_ONLY

    def __post_init__(self):
        if not 0.0 <= self.epsilon_hop <= 1.0:
            raise DomainError("epsilon_hop", self.epsilon_hop)
        if not 0.0 <= self.min_prop <= 1.0:
            raise DomainError("min_prop", self.min_prop)
        if self.top_k < 0:
            raise DomainError("top_k", self.top_k, "[0, inf)")
        if self.hops != 2:
            raise UnsupportedConfig("hops", self.hops, "2")
        if self.coverage_mode not in COVERAGE_MODES:
            raise UnsupportedConfig("coverage_mode", self.coverage_mode, " or ".join(COVERAGE_MODES))

    @classmethod
    def from_config(cls, config: Mapping) -> "CascadeConfig":
        """
        build from a flask config (or any mapping with DefaultConfig keys)
        """
        return cls(
            epsilon_hop=float(config.get("EPSILON_HOP", DefaultConfig.EPSILON_HOP)),
            min_prop=float(config.get("MIN_PROP", DefaultConfig.MIN_PROP)),
            hops=int(config.get("HOPS", DefaultConfig.HOPS)),
            top_k=int(config.get("TOP_K", DefaultConfig.TOP_K)),
            require_distinct_endpoints=bool(
                config.get("REQUIRE_DISTINCT_ENDPOINTS", DefaultConfig.REQUIRE_DISTINCT_ENDPOINTS)
            ),
            coverage_mode=str(config.get("COVERAGE_MODE", DefaultConfig.COVERAGE_MODE)),
            origin_only=bool(config.get("ORIGIN_ONLY", DefaultConfig.ORIGIN_ONLY)),
        )


@dataclasses.dataclass(frozen=True)
class CascadePath(RiskMapSerializeMixin):
    layers: Tuple[LayerId, LayerId, LayerId]
    hop_strengths: Tuple[float, float]
    strength: float

    __rm_convert_types__ = {
        "layers": lambda v: tuple(LayerId.from_code(code) for code in v),
        "hop_strengths": lambda v: tuple(float(x) for x in v),
        "strength": float,
    }

    @property
    def codes(self) -> Tuple[str, str, str]:
        return tuple(layer.code for layer in self.layers)

    @property
    def label(self) -> str:
        return "->".join(self.codes)


@dataclasses.dataclass(frozen=True)
class CascadeRisk(RiskMapSerializeMixin):
    path: CascadePath
    attack_id: str
    attack_weight: float
    defense_gap: float
    crr: float
    cci: float

    __rm_convert_types__ = {
        "path": CascadePath.rm_from_dict,
        "attack_weight": float,
        "defense_gap": float,
        "crr": float,
        "cci": float,
    }

    @property
    def key(self) -> str:
        return f"{'>'.join(self.path.codes)}.{self.attack_id}"


@dataclasses.dataclass(frozen=True)
class LayerCoverageVector(RiskMapSerializeMixin):
    coverage: Dict[LayerId, float]

    def __post_init__(self):
        for layer, value in self.coverage.items():
            if not 0.0 <= value <= 1.0:
                raise DomainError(f"coverage[{layer.code}]", value)

    def __getitem__(self, layer: LayerId) -> float:
        return self.coverage.get(layer, 0.0)


@dataclasses.dataclass(frozen=True, eq=False)
class CascadeAnalysis(RiskMapSerializeMixin):
    coupling_matrix: np.ndarray
    paths: Tuple[CascadePath, ...]
    coverage: LayerCoverageVector
    records: Tuple[CascadeRisk, ...]
    top: Tuple[CascadeRisk, ...]


def validate_coupling(c: CouplingInputs) -> ValidationReport:
    """
    list every violated coupling invariant: 7 x 7 shapes, entries in
    [0, 1], alpha and beta finite, non negative and summing to 1
    """
    violations = []
    for name in ("S", "E", "M"):
        matrix = getattr(c, name)
        if matrix.shape != (7, 7):
            violations.append(Violation("MATRIX_SHAPE", name, f"{name} has shape {matrix.shape}, expected (7, 7)"))
            continue
        bad = np.argwhere(np.isnan(matrix) | (matrix < 0.0) | (matrix > 1.0))
        for i, j in bad:
            violations.append(
                Violation("MATRIX_RANGE", f"{name}[{i}][{j}]", f"{matrix[i, j]} is outside [0, 1]")
            )
    finite = True
    for name in ("alpha", "beta"):
        value = getattr(c, name)
        if not math.isfinite(value):
            finite = False
            violations.append(Violation("WEIGHT_RANGE", name, f"{name}={value} is not a finite number"))
        elif value < 0.0:
            violations.append(Violation("WEIGHT_RANGE", name, f"{name}={value} is negative"))
    if finite and abs(c.alpha + c.beta - 1.0) > WEIGHT_TOLERANCE:
        violations.append(
            Violation("WEIGHT_SUM", "alpha", f"alpha + beta = {c.alpha + c.beta}, expected 1")
        )
    return ValidationReport(tuple(violations))


def lint_coupling(source) -> Tuple[Optional[CouplingInputs], ValidationReport]:
    _, data = read_source(source)
    violations = schema_violations("coupling", data)
    if violations:
        return None, ValidationReport(tuple(violations))
    coupling = CouplingInputs.rm_from_dict(data)
    return coupling, validate_coupling(coupling)


def load_coupling(source) -> CouplingInputs:
    """
    load a coupling file; omitted alpha/beta default to 0.6/0.4

    :throws: ParseError, ValidationError
    """
    coupling, report = lint_coupling(source)
    if not report.is_valid:
        raise ValidationError(report.violations)
    return coupling


def emit_coupling(c: CouplingInputs) -> bytes:
    return c.rm_as_json


@functools.lru_cache(maxsize=None)
def default_coupling() -> CouplingInputs:
    """
    the shipped illustrative coupling inputs
    """
    return load_coupling(DEFAULT_COUPLING_PATH)


def coupling_matrix(inputs: CouplingInputs) -> np.ndarray:
    """
    D = (alpha S + beta E) o (1 - M) off the diagonal, D_ii = 1

    :param inputs: CouplingInputs
    :return: 7 x 7 array with entries in [0, 1]
    :throws: DomainError when the inputs break their invariants
    """
    report = validate_coupling(inputs)
    if not report.is_valid:
        first = report.violations[0]
        raise DomainError(first.path, first.message, "the coupling invariants")
    d = (inputs.alpha * inputs.S + inputs.beta * inputs.E) * (1.0 - inputs.M)
    d = np.clip(d, 0.0, 1.0)
    np.fill_diagonal(d, 1.0)
    return d


def enumerate_two_hop_paths(d, cfg: CascadeConfig = CascadeConfig()) -> List[CascadePath]:
    """
    every l_i -> l_j -> l_k with both hops >= epsilon_hop and strength
    D_ij * D_jk >= min_prop. Self loops are never hops. Sorted by strength
    descending, then by layer code triple.

    :param d: coupling matrix from coupling_matrix
    :param cfg: CascadeConfig
    :return: list of CascadePath
    """
    d = np.asarray(d, dtype=float)
    paths = []
    for i, first in enumerate(LAYERS):
        for j, middle in enumerate(LAYERS):
            if i == j or d[i, j] < cfg.epsilon_hop:
                continue
            for k, last in enumerate(LAYERS):
                if k == j or (cfg.require_distinct_endpoints and k == i):
                    continue
                if d[j, k] < cfg.epsilon_hop:
                    continue
                strength = float(d[i, j]) * float(d[j, k])
                if strength < cfg.min_prop:
                    continue
                paths.append(
                    CascadePath(
                        layers=(first, middle, last),
                        hop_strengths=(float(d[i, j]), float(d[j, k])),
                        strength=strength,
                    )
                )
    paths.sort(key=lambda p: (-p.strength, p.codes))
    logger.debug("enumerated %d two hop paths", len(paths))
    return paths


def _attack_layer(attack_id: str) -> LayerId:
    return LayerId.from_code(attack_id.split("-", 1)[0])


def layer_coverage(breakdown: ScoreBreakdown, mode: str = "layer_score") -> LayerCoverageVector:
    """
    per layer coverage C(l). The default reuses LayerScore_l / 5; "resident"
    takes the severity weighted mean of kappa_i over the attacks resident in
    l (0 when that layer carries no weight).

    :param breakdown: ScoreBreakdown
    :param mode: "layer_score" or "resident"
    :return: LayerCoverageVector
    """
    if mode == "layer_score":
        coverage = {
            layer: min(1.0, max(0.0, breakdown.layer_scores[layer] / LAYER_SCALE)) for layer in LAYERS
        }
    elif mode == "resident":
        layers = np.array([_attack_layer(a).ordinal for a in breakdown.attack_ids])
        weights = np.asarray(breakdown.omega_adjusted, dtype=float)
        kappa = np.asarray(breakdown.kappa, dtype=float)
        coverage = {}
        for layer in LAYERS:
            mask = layers == layer.ordinal
            total = math.fsum(weights[mask])
            value = math.fsum(weights[mask] * kappa[mask]) / total if total > 0.0 else 0.0
            coverage[layer] = min(1.0, max(0.0, value))
    else:
        raise UnsupportedConfig("coverage_mode", mode, " or ".join(COVERAGE_MODES))
    return LayerCoverageVector(coverage)


def defense_gap(coverage: LayerCoverageVector, path: CascadePath) -> float:
    """
    U = prod over the path's layers of (1 - C(l))
    """
    gap = 1.0
    for layer in path.layers:
        gap *= 1.0 - coverage[layer]
    return gap


def cascade_residual_risk(path: CascadePath, attack_weight: float, gap: float, attack_id: str = "") -> CascadeRisk:
    """
    crr = clip(P * w_a * U) to [0, 1], cci = 1 - crr

    :param path: CascadePath
    :param attack_weight: w_a in [0, 1]
    :param gap: defense gap U in [0, 1]
    :param attack_id: id of the attack the record is about
    :return: CascadeRisk
    """
    if not 0.0 <= attack_weight <= 1.0:
        raise DomainError("attack_weight", attack_weight)
    if not 0.0 <= gap <= 1.0:
        raise DomainError("defense_gap", gap)
    crr = min(1.0, max(0.0, path.strength * attack_weight * gap))
    return CascadeRisk(
        path=path,
        attack_id=attack_id,
        attack_weight=float(attack_weight),
        defense_gap=float(gap),
        crr=crr,
        cci=1.0 - crr,
    )


def top_k_cascades(risks: Sequence[CascadeRisk], k: int = DefaultConfig.TOP_K) -> List[CascadeRisk]:
    """
    the k highest crr records, ties broken by layer code triple then attack id
    """
    if k < 0:
        raise DomainError("k", k, "[0, inf)")
    ranked = sorted(risks, key=lambda r: (-r.crr, r.path.codes, r.attack_id))
    return ranked[:k]


def attack_weights(breakdown: ScoreBreakdown, detectability) -> np.ndarray:
    """
    w_a = omega~_a * delta_a; with detectability 1 this is the adjusted severity
    """
    return np.clip(
        np.asarray(breakdown.omega_adjusted, dtype=float) * np.asarray(detectability, dtype=float),
        0.0,
        1.0,
    )


def cascade_records(
    paths: Sequence[CascadePath],
    coverage: LayerCoverageVector,
    attack_ids: Sequence[str],
    weights: np.ndarray,
    cfg: CascadeConfig = CascadeConfig(),
) -> List[CascadeRisk]:
    """
    one CascadeRisk per (path, weighted attack) pair; with origin_only an
    attack is only paired with paths that start in its own layer
    """
    gaps = [defense_gap(coverage, p) for p in paths]
    records = []
    for attack_id, w in zip(attack_ids, weights):
        if w <= 0.0:
            continue
        origin = _attack_layer(attack_id)
        for path, gap in zip(paths, gaps):
            if cfg.origin_only and path.layers[0] is not origin:
                continue
            records.append(cascade_residual_risk(path, float(w), gap, attack_id=attack_id))
    return records


def analyze_cascades(
    breakdown: ScoreBreakdown,
    detectability,
    coupling: CouplingInputs,
    cfg: CascadeConfig = CascadeConfig(),
) -> CascadeAnalysis:
    """
    coupling matrix, two hop paths, layer coverage, every CRR/CCI record and the top k

    :param breakdown: ScoreBreakdown of the platform
    :param detectability: delta per attack in catalog order
    :param coupling: CouplingInputs
    :param cfg: CascadeConfig
    :return: CascadeAnalysis
    """
    d = coupling_matrix(coupling)
    paths = enumerate_two_hop_paths(d, cfg)
    coverage = layer_coverage(breakdown, cfg.coverage_mode)
    records = cascade_records(
        paths, coverage, breakdown.attack_ids, attack_weights(breakdown, detectability), cfg
    )
    top = top_k_cascades(records, cfg.top_k)
    logger.debug(
        "cascades for %s: %d paths, %d records, top crr %s",
        breakdown.platform,
        len(paths),
        len(records),
        top[0].crr if top else None,
    )
    return CascadeAnalysis(
        coupling_matrix=d,
        paths=tuple(paths),
        coverage=coverage,
        records=tuple(records),
        top=tuple(top),
    )
