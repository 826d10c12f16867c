import dataclasses
import enum
import functools
import json
import logging
import math
import re
from pathlib import Path
from typing import Dict, List, NamedTuple, Optional, Tuple, Union

import numpy as np
from jsonschema import Draft202012Validator

from .errors import ParseError, ValidationError
from .serialize import RiskMapSerializeMixin, fingerprint

logger = logging.getLogger(__name__)

DATA_DIR = Path(__file__).parent / "data"
SCHEMA_DIR = Path(__file__).parent / "schemas"
DEFAULT_CATALOG_PATH = DATA_DIR / "catalog.json"

# discrete scales; values within LEVEL_TOLERANCE of a level count as on it
FIVE_LEVELS = (0.0, 0.25, 0.5, 0.75, 1.0)
IMPACT_LEVELS = (0.0, 0.2, 0.4, 0.6, 0.8, 1.0)
LEVEL_TOLERANCE = 1e-9

IMPACT_SCALE = {
    0.0: "Negligible impact and consequences",
    0.2: "Minor disruption; brief degradation",
    0.4: "Functional loss; data issues",
    0.6: "Major failure; prolonged outage",
    0.8: "Safety-critical; risk to people/property",
    1.0: "Catastrophic failure; severe safety consequences",
}
CAPABILITY_SCALE = {
    0.0: "No mitigation capability",
    0.25: "Limited",
    0.5: "Moderate",
    0.75: "Strong",
    1.0: "Complete",
}
IMPLEMENTATION_SCALE = {
    0.0: "Defense completely absent",
    0.25: "Minimal implementation; major gaps",
    0.5: "Partial implementation; moderately effective",
    0.75: "Near-complete implementation; minor gaps",
    1.0: "Fully implemented; best practices met",
}

ATTACK_ID = re.compile(r"^(P|SP|DP|MW|DM|AP|SI)-A([1-9][0-9]*)$")
DEFENSE_ID = re.compile(r"^(P|SP|DP|MW|DM|AP|SI)-D([1-9][0-9]*)$")


class LayerId(enum.Enum):
    """
    The seven architectural layers of a humanoid, bottom to top.
    """

    P = ("P", "Physical", 0, "actuation and mechanical structure")
    SP = (
        "SP",
        "Sensing and Perception",
        1,
        "physical-to-digital conversion and environmental awareness",
    )
    DP = ("DP", "Data Processing", 2, "real-time control loops and computation")
    MW = ("MW", "Middleware", 3, "communication and data integration")
    DM = ("DM", "Decision-Making", 4, "planning and reasoning")
    AP = ("AP", "Application", 5, "task-specific behavior")
    SI = ("SI", "Social Interface", 6, "human-robot interaction")

    def __init__(self, code: str, display_name: str, ordinal: int, description: str):
        self.code = code
        self.display_name = display_name
        self.ordinal = ordinal
        self.description = description

    @classmethod
    def from_code(cls, code) -> "LayerId":
        if isinstance(code, LayerId):
            return code
        try:
            return cls[code]
        except KeyError:
            raise ValueError(f"unknown layer code: {code!r}") from None

    @classmethod
    def ordered(cls) -> List["LayerId"]:
        return sorted(cls, key=lambda layer: layer.ordinal)

    def __lt__(self, other):
        return self.ordinal < other.ordinal


LAYER_CODES = tuple(layer.code for layer in LayerId.ordered())


def on_level(value: float, levels) -> bool:
    return any(abs(value - level) <= LEVEL_TOLERANCE for level in levels)


def level_label(value: float, scale: Dict[float, str]) -> str:
    """
    the description of a level on one of the scales above, "continuous" off level
    """
    for level, text in scale.items():
        if abs(value - level) <= LEVEL_TOLERANCE:
            return text
    return "continuous"


def scale_hint(scale: Dict[float, str]) -> str:
    return ", ".join(f"{level:g} ({text})" for level, text in scale.items())


def _str_tuple(values) -> tuple:
    return tuple(str(v) for v in values or ())


@dataclasses.dataclass(frozen=True)
class AttackVector(RiskMapSerializeMixin):
    id: str
    layer: LayerId
    name: str
    likelihood: float
    impact: float
    detectability: float = 1.0
    references: Tuple[str, ...] = ()

    __rm_convert_types__ = {
        "layer": LayerId.from_code,
        "likelihood": float,
        "impact": float,
        "detectability": float,
        "references": _str_tuple,
    }


@dataclasses.dataclass(frozen=True)
class DefenseMechanism(RiskMapSerializeMixin):
    id: str
    layer: LayerId
    name: str
    references: Tuple[str, ...] = ()

    __rm_convert_types__ = {"layer": LayerId.from_code, "references": _str_tuple}


@dataclasses.dataclass(frozen=True)
class Violation(RiskMapSerializeMixin):
    code: str
    path: str
    message: str


@dataclasses.dataclass(frozen=True)
class ValidationReport(RiskMapSerializeMixin):
    """
    Every violated invariant of an artifact. Empty means valid.
    """

    violations: Tuple[Violation, ...] = ()

    @property
    def is_valid(self) -> bool:
        return not self.violations

    @property
    def codes(self) -> List[str]:
        return [v.code for v in self.violations]

    def __len__(self):
        return len(self.violations)

    def __iter__(self):
        return iter(self.violations)


@dataclasses.dataclass(frozen=True, eq=False)
class Catalog(RiskMapSerializeMixin):
    """
    The attack/defense taxonomy and the baseline coverage matrix gamma
    (rows follow attacks, columns follow defenses). Immutable once built.
    """

    attacks: Tuple[AttackVector, ...]
    defenses: Tuple[DefenseMechanism, ...]
    gamma: Tuple[Tuple[float, ...], ...]
    version: str = ""
    illustrative: bool = False

    __rm_property_fields__ = ["layers"]

    @property
    def layers(self) -> List[str]:
        return list(LAYER_CODES)

    @functools.cached_property
    def fingerprint(self) -> str:
        return fingerprint(self.rm_as_dict)

    @functools.cached_property
    def gamma_matrix(self) -> np.ndarray:
        """
        gamma as a read only float array of shape (attacks, defenses)
        """
        matrix = np.array(self.gamma, dtype=float).reshape(
            len(self.attacks), len(self.defenses)
        )
        matrix.setflags(write=False)
        return matrix

    @property
    def attack_ids(self) -> List[str]:
        return [a.id for a in self.attacks]

    @property
    def defense_ids(self) -> List[str]:
        return [d.id for d in self.defenses]

    @functools.cached_property
    def attack_index(self) -> Dict[str, int]:
        return {a.id: i for i, a in enumerate(self.attacks)}

    @functools.cached_property
    def defense_index(self) -> Dict[str, int]:
        return {d.id: j for j, d in enumerate(self.defenses)}


class LayerBucket(NamedTuple):
    attacks: Tuple[str, ...]
    defenses: Tuple[str, ...]


@functools.lru_cache(maxsize=None)
def load_schema(name: str) -> Draft202012Validator:
    """
    the compiled validator for one of the shipped JSON schemas

    :param name: schema file stem, e.g. "catalog"
    :return: Draft202012Validator
    """
    with open(SCHEMA_DIR / f"{name}.schema.json", "r", encoding="utf-8") as f:
        return Draft202012Validator(json.load(f))


def json_path(parts) -> str:
    """
    render a jsonschema error path as attacks[3].layer
    """
    path = ""
    for part in parts:
        if isinstance(part, int):
            path += f"[{part}]"
        else:
            path += f".{part}" if path else str(part)
    return path or "$"


def schema_violations(name: str, data) -> List[Violation]:
    """
    check parsed JSON against a shipped schema

    :param name: schema file stem
    :param data: parsed JSON
    :return: list of violations, code SCHEMA or UNKNOWN_LAYER
    """
    violations = []
    errors = sorted(load_schema(name).iter_errors(data), key=lambda e: list(map(str, e.absolute_path)))
    for error in errors:
        parts = list(error.absolute_path)
        code = "SCHEMA"
        if error.validator == "enum" and parts and parts[-1] == "layer":
            code = "UNKNOWN_LAYER"
        violations.append(Violation(code, json_path(parts), error.message))
    return violations


def read_source(source: Union[str, Path, bytes, bytearray, object]) -> Tuple[str, dict]:
    """
    read and parse a UTF-8 JSON source

    :param source: a path, raw bytes, or a binary/text stream
    :return: (name of the source for messages, parsed JSON)
    :throws: ParseError when the bytes are not UTF-8 JSON
    """
    if isinstance(source, (bytes, bytearray)):
        name, raw = "<bytes>", bytes(source)
    elif isinstance(source, (str, Path)):
        name = str(source)
        try:
            raw = Path(source).read_bytes()
        except OSError as e:
            raise ParseError(name, e.strerror or str(e)) from e
    elif hasattr(source, "read"):
        name, raw = getattr(source, "name", "<stream>"), source.read()
        if isinstance(raw, str):
            raw = raw.encode("utf-8")
    else:
        raise ParseError(repr(source), "unsupported source type")
    try:
        return name, json.loads(raw.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise ParseError(name, str(e)) from e


def read_catalog(data: dict) -> Tuple[Optional[Catalog], List[Violation]]:
    """
    build a Catalog from parsed JSON without checking its invariants

    :param data: parsed catalog file
    :return: (catalog or None when the structure is unusable, structural violations)
    """
    violations = schema_violations("catalog", data)
    if violations:
        return None, violations
    if list(data["layers"]) != list(LAYER_CODES):
        violations.append(
            Violation(
                "LAYER_ORDER",
                "layers",
                f"layers must be {list(LAYER_CODES)} in ordinal order",
            )
        )
    catalog = Catalog(
        attacks=tuple(AttackVector.rm_from_dict(a) for a in data["attacks"]),
        defenses=tuple(DefenseMechanism.rm_from_dict(d) for d in data["defenses"]),
        gamma=tuple(tuple(float(v) for v in row) for row in data["gamma"]),
        version=str(data["version"]),
        illustrative=bool(data.get("illustrative", False)),
    )
    return catalog, violations


def _check_ids(items, pattern, kind: str, seen: set) -> List[Violation]:
    violations = []
    for i, item in enumerate(items):
        path = f"{kind}[{i}].id"
        match = pattern.match(item.id)
        if not match:
            violations.append(
                Violation("ID_FORMAT", path, f"{item.id!r} does not match {pattern.pattern}")
            )
        elif match.group(1) != item.layer.code:
            violations.append(
                Violation(
                    "ID_LAYER_MISMATCH",
                    path,
                    f"{item.id} is prefixed {match.group(1)} but assigned layer {item.layer.code}",
                )
            )
        if item.id in seen:
            violations.append(Violation("DUPLICATE_ID", path, f"duplicate id {item.id}"))
        seen.add(item.id)
    return violations


def validate_catalog(c: Catalog, allow_continuous: bool = False) -> ValidationReport:
    """
    list every violated catalog invariant. Never raises for bad data.

    :param c: the catalog
    :param allow_continuous: accept any gamma and impact in [0, 1] instead of the discrete levels
    :return: ValidationReport, empty when valid
    """
    violations: List[Violation] = []
    seen: set = set()
    violations += _check_ids(c.attacks, ATTACK_ID, "attacks", seen)
    violations += _check_ids(c.defenses, DEFENSE_ID, "defenses", seen)

    for i, a in enumerate(c.attacks):
        path = f"attacks[{i}]"
        if not 0.0 <= a.likelihood <= 1.0:
            violations.append(
                Violation("LIKELIHOOD_RANGE", f"{path}.likelihood", f"{a.likelihood} is outside [0, 1]")
            )
        if not 0.0 <= a.impact <= 1.0:
            violations.append(
                Violation("IMPACT_RANGE", f"{path}.impact", f"{a.impact} is outside [0, 1]")
            )
        elif not allow_continuous and not on_level(a.impact, IMPACT_LEVELS):
            violations.append(
                Violation(
                    "IMPACT_LEVEL",
                    f"{path}.impact",
                    f"{a.impact} is not an impact level: {scale_hint(IMPACT_SCALE)}",
                )
            )
        if not 0.0 < a.detectability <= 1.0:
            violations.append(
                Violation(
                    "DETECTABILITY_RANGE",
                    f"{path}.detectability",
                    f"{a.detectability} is outside (0, 1]",
                )
            )

    if len(c.gamma) != len(c.attacks):
        violations.append(
            Violation(
                "DIM_MISMATCH",
                "gamma",
                f"gamma has {len(c.gamma)} rows for {len(c.attacks)} attacks",
            )
        )
    for i, row in enumerate(c.gamma):
        if len(row) != len(c.defenses):
            violations.append(
                Violation(
                    "DIM_MISMATCH",
                    f"gamma[{i}]",
                    f"row has {len(row)} columns for {len(c.defenses)} defenses",
                )
            )
        for j, value in enumerate(row):
            path = f"gamma[{i}][{j}]"
            if math.isnan(value) or not 0.0 <= value <= 1.0:
                violations.append(Violation("GAMMA_RANGE", path, f"{value} is outside [0, 1]"))
            elif not allow_continuous and not on_level(value, FIVE_LEVELS):
                violations.append(
                    Violation(
                        "GAMMA_LEVEL",
                        path,
                        f"{value} is not a capability level: {scale_hint(CAPABILITY_SCALE)}",
                    )
                )
    return ValidationReport(tuple(violations))


def lint_catalog(source, allow_continuous: bool = False) -> Tuple[Optional[Catalog], ValidationReport]:
    """
    parse a catalog and collect every violation without raising for them

    :param source: path, bytes or stream
    :param allow_continuous: relax the discrete level checks
    :return: (catalog or None, report)
    :throws: ParseError when the source is not JSON
    """
    _, data = read_source(source)
    catalog, violations = read_catalog(data)
    if catalog is not None:
        violations += validate_catalog(catalog, allow_continuous).violations
    return catalog, ValidationReport(tuple(violations))


def load_catalog(source, allow_continuous: bool = False) -> Catalog:
    """
    load and validate a catalog file

    :param source: path, bytes or stream of the catalog JSON
    :param allow_continuous: accept any gamma and impact in [0, 1]
    :return: Catalog
    :throws: ParseError, ValidationError
    """
    catalog, report = lint_catalog(source, allow_continuous)
    if not report.is_valid:
        raise ValidationError(report.violations)
    logger.debug(
        "loaded catalog %s: %d attacks, %d defenses, %s",
        catalog.version,
        len(catalog.attacks),
        len(catalog.defenses),
        catalog.fingerprint,
    )
    return catalog


def emit_catalog(c: Catalog) -> bytes:
    """
    the catalog in canonical JSON, loadable by load_catalog
    """
    return c.rm_as_json


@functools.lru_cache(maxsize=None)
def default_catalog() -> Catalog:
    """
    the shipped 39 x 35 catalog. Its likelihood, impact, detectability and
    gamma values are illustrative.
    """
    return load_catalog(DEFAULT_CATALOG_PATH)


def layer_partition(c: Catalog) -> Dict[LayerId, LayerBucket]:
    """
    split the catalog ids by resident layer, every layer present

    :param c: a valid catalog
    :return: map LayerId -> LayerBucket(attack ids, defense ids) in ordinal order
    """
    return {
        layer: LayerBucket(
            attacks=tuple(a.id for a in c.attacks if a.layer is layer),
            defenses=tuple(d.id for d in c.defenses if d.layer is layer),
        )
        for layer in LayerId.ordered()
    }


def layer_columns(c: Catalog) -> Dict[LayerId, List[int]]:
    """
    defense column indices of gamma per layer
    """
    return {
        layer: [j for j, d in enumerate(c.defenses) if d.layer is layer]
        for layer in LayerId.ordered()
    }
