import dataclasses
import functools
import logging
import math
from typing import Dict, Mapping, Optional, Sequence, Tuple

import numpy as np

from .catalog import (
    FIVE_LEVELS,
    IMPACT_LEVELS,
    IMPACT_SCALE,
    IMPLEMENTATION_SCALE,
    Catalog,
    LayerId,
    ValidationReport,
    Violation,
    layer_columns,
    on_level,
    read_source,
    scale_hint,
    schema_violations,
)
from .errors import (
    BindError,
    DomainError,
    LengthMismatch,
    NoApplicableThreats,
    ValidationError,
)
from .serialize import RiskMapSerializeMixin, fingerprint

logger = logging.getLogger(__name__)

# LayerScores run 0 to 5, the aggregate is the same mean times LAYER_SCALE then
# PERCENT_PER_POINT
LAYER_SCALE = 5.0
PERCENT_PER_POINT = 20.0


def _float_dict(values) -> dict:
    return {str(k): float(v) for k, v in (values or {}).items()}


def _override_dict(values) -> dict:
    return {str(k): _float_dict(v) for k, v in (values or {}).items()}


@dataclasses.dataclass(frozen=True, eq=False)
class PlatformAssessment(RiskMapSerializeMixin):
    """
    One platform's applicability vector Z (attack id -> 0/1), implementation
    vector mu (defense id -> level) and optional per attack likelihood/impact
    overrides.
    """

    platform: str
    applicability: Dict[str, int]
    implementation: Dict[str, float]
    overrides: Dict[str, Dict[str, float]] = dataclasses.field(default_factory=dict)
    notes: str = ""

    __rm_convert_types__ = {
        "applicability": lambda v: {str(k): int(z) for k, z in v.items()},
        "implementation": _float_dict,
        "overrides": _override_dict,
        "notes": str,
    }

    @functools.cached_property
    def fingerprint(self) -> str:
        return fingerprint(self.rm_as_dict)

    def with_implementation(self, changes: Mapping[str, float]) -> "PlatformAssessment":
        """
        a copy with some implementation levels replaced
        """
        implementation = dict(self.implementation)
        implementation.update({k: float(v) for k, v in changes.items()})
        return dataclasses.replace(self, implementation=implementation)


@dataclasses.dataclass(frozen=True, eq=False)
class BoundAssessment:
    """
    An assessment aligned to a catalog's attack and defense order, overrides applied.
    """

    platform: str
    applicability: np.ndarray
    implementation: np.ndarray
    likelihood: np.ndarray
    impact: np.ndarray
    detectability: np.ndarray


@dataclasses.dataclass(frozen=True, eq=False)
class ScoreBreakdown(RiskMapSerializeMixin):
    platform: str
    attack_ids: Tuple[str, ...]
    defense_ids: Tuple[str, ...]
    omega: np.ndarray
    omega_adjusted: np.ndarray
    epsilon: np.ndarray
    kappa: np.ndarray
    residual: np.ndarray
    aggregate_percent: float
    layer_scores: Dict[LayerId, float]
    catalog_fingerprint: str = ""
    layer_kappa: Optional[Dict[LayerId, np.ndarray]] = None

    __rm_exclude_serialize_fields__ = ["layer_kappa"]
    __rm_convert_types__ = {
        "attack_ids": tuple,
        "defense_ids": tuple,
        "omega": np.asarray,
        "omega_adjusted": np.asarray,
        "epsilon": lambda v: np.asarray(v, dtype=float),
        "kappa": np.asarray,
        "residual": np.asarray,
        "aggregate_percent": float,
        "layer_scores": lambda v: {LayerId.from_code(k): float(s) for k, s in v.items()},
    }


@dataclasses.dataclass(frozen=True)
class KeyFindings(RiskMapSerializeMixin):
    """
    strongest layers by LayerScore and most exposed attacks by uncovered weighted severity
    """

    strengths: Tuple[Tuple[str, float], ...]
    vulnerabilities: Tuple[Tuple[str, float], ...]

    __rm_convert_types__ = {
        "strengths": lambda v: tuple((str(c), float(s)) for c, s in v),
        "vulnerabilities": lambda v: tuple((str(a), float(r)) for a, r in v),
    }


def _require_unit(name: str, values) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    bad = np.isnan(arr) | (arr < 0.0) | (arr > 1.0)
    if bad.any():
        raise DomainError(name, arr[bad].flat[0])
    return arr


def _as_result(arr: np.ndarray):
    return float(arr) if arr.ndim == 0 else arr


def severity(likelihood, impact):
    """
    omega = likelihood x impact

    :param likelihood: lambda in [0, 1], scalar or vector
    :param impact: iota in [0, 1], scalar or vector
    :return: omega, same shape as the inputs
    :throws: DomainError when an input is outside [0, 1]
    """
    lam = _require_unit("likelihood", likelihood)
    iota = _require_unit("impact", impact)
    if lam.shape != iota.shape:
        raise LengthMismatch("likelihood", lam.size, "impact", iota.size)
    return _as_result(lam * iota)


def adjusted_severity(omega, applicability) -> np.ndarray:
    """
    zero the weight of inapplicable attacks: omega~_i = Z_i * omega_i
    """
    omega = np.asarray(omega, dtype=float)
    z = np.asarray(applicability, dtype=float)
    if omega.shape != z.shape:
        raise LengthMismatch("severity vector", omega.size, "applicability vector", z.size)
    return z * omega


def effective_coverage(gamma, implementation) -> np.ndarray:
    """
    epsilon_ij = gamma_ij * mu_j

    :param gamma: coverage matrix, attacks x defenses
    :param implementation: mu, one value per defense column
    :return: epsilon matrix
    """
    gamma = np.atleast_2d(np.asarray(gamma, dtype=float))
    mu = np.asarray(implementation, dtype=float)
    if gamma.shape[1] != mu.size:
        raise LengthMismatch("gamma columns", gamma.shape[1], "implementation vector", mu.size)
    return gamma * mu[np.newaxis, :]


def _kappa_rows(epsilon: np.ndarray) -> np.ndarray:
    """
    1 - prod(1 - eps) per row, via summed log1p terms. A row holding an
    exact 1.0 is fully covered.
    """
    if epsilon.shape[1] == 0:
        return np.zeros(epsilon.shape[0])
    full = (epsilon >= 1.0).any(axis=1)
    with np.errstate(divide="ignore"):
        log_miss = np.log1p(-epsilon).sum(axis=1)
    kappa = -np.expm1(log_miss) + 0.0
    kappa[full] = 1.0
    return np.clip(kappa, 0.0, 1.0)


def total_coverage(epsilon_row) -> float:
    """
    combined coverage of independent defenses against one attack,
    kappa = 1 - prod_j (1 - eps_j)

    :param epsilon_row: effective coverages in [0, 1]
    :return: kappa in [0, 1]
    :throws: DomainError on an out of range entry
    """
    row = _require_unit("effective coverage", epsilon_row).reshape(1, -1)
    return float(_kappa_rows(row)[0])


def _weighted_mean(weights: np.ndarray, values: np.ndarray, platform: Optional[str] = None) -> float:
    total = math.fsum(weights)
    if total <= 0.0:
        raise NoApplicableThreats(platform)
    return math.fsum(weights * values) / total


def riskmap_score(omega_adjusted, kappa, platform: Optional[str] = None) -> float:
    """
    severity weighted mean coverage as a percentage

    :param omega_adjusted: adjusted severity vector
    :param kappa: total coverage vector
    :return: percent in [0, 100]
    :throws: NoApplicableThreats when the adjusted severities sum to 0
    """
    weights = np.asarray(omega_adjusted, dtype=float)
    kappa = np.asarray(kappa, dtype=float)
    if weights.shape != kappa.shape:
        raise LengthMismatch("adjusted severity", weights.size, "coverage vector", kappa.size)
    return _weighted_mean(weights, kappa, platform) * LAYER_SCALE * PERCENT_PER_POINT


def _check_partition(partition: Mapping[LayerId, Sequence[int]], columns: int):
    seen = sorted(j for cols in partition.values() for j in cols)
    if seen != list(range(columns)):
        raise DomainError(
            "partition", seen, f"a cover of the {columns} defense columns with no repeats"
        )


def layer_kappa(epsilon, partition: Mapping[LayerId, Sequence[int]]) -> Dict[LayerId, np.ndarray]:
    """
    per layer restricted total coverage kappa_i^l over the layer's resident defenses
    """
    epsilon = np.asarray(epsilon, dtype=float)
    _check_partition(partition, epsilon.shape[1])
    return {
        layer: _kappa_rows(epsilon[:, list(partition.get(layer, ()))])
        for layer in LayerId.ordered()
    }


def layer_scores(
    omega_adjusted, epsilon, partition: Mapping[LayerId, Sequence[int]], platform: Optional[str] = None
) -> Dict[LayerId, float]:
    """
    LayerScore_l = 5 x severity weighted mean of kappa_i^l. A layer with no
    resident defense scores 0.

    :param omega_adjusted: adjusted severity vector
    :param epsilon: effective coverage matrix
    :param partition: layer -> defense column indices
    :return: map LayerId -> score in [0, 5]
    """
    weights = np.asarray(omega_adjusted, dtype=float)
    restricted = layer_kappa(epsilon, partition)
    return {
        layer: _weighted_mean(weights, kappa, platform) * LAYER_SCALE
        for layer, kappa in restricted.items()
    }


def lint_assessment(source, allow_continuous: bool = False) -> Tuple[Optional[PlatformAssessment], ValidationReport]:
    """
    parse an assessment and collect every violation that does not need a catalog

    :param source: path, bytes or stream
    :param allow_continuous: accept any implementation level in [0, 1]
    :return: (assessment or None, report)
    :throws: ParseError when the source is not JSON
    """
    _, data = read_source(source)
    violations = schema_violations("assessment", data)
    if violations:
        return None, ValidationReport(tuple(violations))
    assessment = PlatformAssessment.rm_from_dict(data)
    for defense_id, level in assessment.implementation.items():
        path = f"implementation.{defense_id}"
        if not 0.0 <= level <= 1.0:
            violations.append(Violation("MU_RANGE", path, f"{level} is outside [0, 1]"))
        elif not allow_continuous and not on_level(level, FIVE_LEVELS):
            message = f"{level} is not an implementation level: {scale_hint(IMPLEMENTATION_SCALE)}"
            violations.append(Violation("MU_LEVEL", path, message))
    for attack_id, override in assessment.overrides.items():
        for key, value in override.items():
            path = f"overrides.{attack_id}.{key}"
            if not 0.0 <= value <= 1.0:
                violations.append(Violation("OVERRIDE_RANGE", path, f"{value} is outside [0, 1]"))
            elif key == "impact" and not allow_continuous and not on_level(value, IMPACT_LEVELS):
                message = f"{value} is not an impact level: {scale_hint(IMPACT_SCALE)}"
                violations.append(Violation("IMPACT_LEVEL", path, message))
    return assessment, ValidationReport(tuple(violations))


def load_assessment(source, allow_continuous: bool = False) -> PlatformAssessment:
    """
    load and validate an assessment file

    :throws: ParseError, ValidationError
    """
    assessment, report = lint_assessment(source, allow_continuous)
    if not report.is_valid:
        raise ValidationError(report.violations)
    return assessment


def emit_assessment(a: PlatformAssessment) -> bytes:
    return a.rm_as_json


def bind(c: Catalog, a: PlatformAssessment, allow_continuous: bool = False) -> BoundAssessment:
    """
    align an assessment to the catalog order and apply its overrides

    :param c: the catalog
    :param a: the assessment
    :param allow_continuous: accept any implementation level in [0, 1]
    :return: BoundAssessment
    :throws: BindError listing missing, unknown and invalid entries
    """
    attack_ids, defense_ids = set(c.attack_ids), set(c.defense_ids)
    missing = (attack_ids - set(a.applicability)) | (defense_ids - set(a.implementation))
    extra = (
        (set(a.applicability) - attack_ids)
        | (set(a.implementation) - defense_ids)
        | (set(a.overrides) - attack_ids)
    )
    invalid = []
    for defense_id, level in a.implementation.items():
        if not 0.0 <= level <= 1.0 or (not allow_continuous and not on_level(level, FIVE_LEVELS)):
            invalid.append(f"implementation {defense_id}={level}")
    for attack_id, z in a.applicability.items():
        if z not in (0, 1):
            invalid.append(f"applicability {attack_id}={z}")
    for attack_id, override in a.overrides.items():
        for key, value in override.items():
            if key not in ("likelihood", "impact") or not 0.0 <= value <= 1.0:
                invalid.append(f"override {attack_id}.{key}={value}")
    if missing or extra or invalid:
        raise BindError(f"assessment {a.platform!r}", missing, extra, invalid)

    likelihood = np.array([x.likelihood for x in c.attacks], dtype=float)
    impact = np.array([x.impact for x in c.attacks], dtype=float)
    for attack_id, override in a.overrides.items():
        i = c.attack_index[attack_id]
        likelihood[i] = override.get("likelihood", likelihood[i])
        impact[i] = override.get("impact", impact[i])
    return BoundAssessment(
        platform=a.platform,
        applicability=np.array([a.applicability[x] for x in c.attack_ids], dtype=float),
        implementation=np.array([a.implementation[x] for x in c.defense_ids], dtype=float),
        likelihood=likelihood,
        impact=impact,
        detectability=np.array([x.detectability for x in c.attacks], dtype=float),
    )


def compute_breakdown(
    c: Catalog,
    platform: str,
    likelihood: np.ndarray,
    impact: np.ndarray,
    applicability: np.ndarray,
    gamma: np.ndarray,
    implementation: np.ndarray,
) -> ScoreBreakdown:
    """
    run the scoring pipeline on aligned arrays: severity, applicability
    masking, effective coverage, total coverage, aggregate and layer scores
    """
    omega = np.atleast_1d(severity(likelihood, impact))
    omega_adjusted = adjusted_severity(omega, applicability)
    epsilon = effective_coverage(gamma, implementation)
    kappa = _kappa_rows(epsilon)
    restricted = layer_kappa(epsilon, layer_columns(c))
    weights = omega_adjusted
    return ScoreBreakdown(
        platform=platform,
        attack_ids=tuple(c.attack_ids),
        defense_ids=tuple(c.defense_ids),
        omega=omega,
        omega_adjusted=omega_adjusted,
        epsilon=epsilon,
        kappa=kappa,
        residual=omega_adjusted * (1.0 - kappa),
        aggregate_percent=riskmap_score(weights, kappa, platform),
        layer_scores={
            layer: _weighted_mean(weights, k, platform) * LAYER_SCALE
            for layer, k in restricted.items()
        },
        catalog_fingerprint=c.fingerprint,
        layer_kappa=restricted,
    )


def score_bound(c: Catalog, bound: BoundAssessment) -> ScoreBreakdown:
    return compute_breakdown(
        c,
        bound.platform,
        bound.likelihood,
        bound.impact,
        bound.applicability,
        c.gamma_matrix,
        bound.implementation,
    )


def score_platform(c: Catalog, a: PlatformAssessment, allow_continuous: bool = False) -> ScoreBreakdown:
    """
    score one platform against the catalog

    :param c: the catalog
    :param a: the platform assessment
    :param allow_continuous: accept any implementation level in [0, 1]
    :return: ScoreBreakdown
    :throws: BindError, NoApplicableThreats
    """
    breakdown = score_bound(c, bind(c, a, allow_continuous))
    logger.debug(
        "scored %s: %.6f%% over %d applicable attacks",
        a.platform,
        breakdown.aggregate_percent,
        int(np.count_nonzero(breakdown.omega_adjusted)),
    )
    return breakdown


def key_findings(breakdown: ScoreBreakdown, n: int = 3) -> KeyFindings:
    """
    the n strongest layers and the n attacks with the largest uncovered
    adjusted severity, ties broken by ordinal and id
    """
    layers = sorted(breakdown.layer_scores.items(), key=lambda kv: (-kv[1], kv[0].ordinal))
    exposed = sorted(
        (
            (attack_id, float(r))
            for attack_id, r in zip(breakdown.attack_ids, breakdown.residual)
            if r > 0.0
        ),
        key=lambda kv: (-kv[1], kv[0]),
    )
    return KeyFindings(
        strengths=tuple((layer.code, float(score)) for layer, score in layers[:n]),
        vulnerabilities=tuple(exposed[:n]),
    )
