import concurrent.futures
import csv
import dataclasses
import io
import logging
import math
from datetime import datetime, timezone
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

from rich import box
from rich.console import Console
from rich.table import Table

from .cascade import CascadeRisk, CouplingInputs
from .catalog import (
    FIVE_LEVELS,
    IMPLEMENTATION_SCALE,
    Catalog,
    LayerId,
    level_label,
    on_level,
    read_source,
    schema_violations,
)
from .errors import BindError, DomainError, SchemaError
from .scoring import KeyFindings, PlatformAssessment, ScoreBreakdown, key_findings, score_platform
from .serialize import RiskMapSerializeMixin, canonical_dumps
from .uncertainty import AGGREGATE_METRIC, DistributionSummary, crr_metric, layer_metric

logger = logging.getLogger(__name__)

TOOL_VERSION = RiskMapSerializeMixin.__rm_version__
EPOCH = datetime(1970, 1, 1, tzinfo=timezone.utc)

SCORES_HEADER = ["attack", "omega", "omega_adjusted", "kappa"]
LAYERS_HEADER = ["layer", "layer_score"]
CASCADES_HEADER = ["path", "attack", "P", "U", "crr", "cci"]
MC_HEADER = ["metric", "mean", "std", "median", "p5", "p95"]
COMPARISON_HEADER = [
    "platform",
    "aggregate_percent",
    "mean",
    "std",
    "median",
    "p5",
    "p95",
    "strongest_layer",
    "top_exposure",
]

RADAR_SIZE = 800
RADAR_RADIUS = 300.0
RADAR_MAX = 5
RADAR_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b")
TEXT_WIDTH = 100


def _parse_timestamp(value: str) -> datetime:
    return datetime.strptime(value, "%Y-%m-%dT%H:%M:%SZ").replace(tzinfo=timezone.utc)


def _parse_mc(value) -> Optional[Dict[str, DistributionSummary]]:
    if value is None:
        return None
    return {name: DistributionSummary.rm_from_dict(s) for name, s in value.items()}


def _parse_cascades(value) -> Optional[Tuple[CascadeRisk, ...]]:
    if value is None:
        return None
    return tuple(CascadeRisk.rm_from_dict(r) for r in value)


@dataclasses.dataclass(frozen=True, eq=False)
class AssessmentReport(RiskMapSerializeMixin):
    """
    Everything one run produced. Optional sections are None and flagged
    absent in ``sections``; ``config`` holds every setting with defaults
    materialized, enough to re-run the assessment.
    """

    platform: str
    catalog_fingerprint: str
    assessment_fingerprint: str
    coupling_fingerprint: Optional[str]
    illustrative: bool
    config: dict
    breakdown: ScoreBreakdown
    key_findings: KeyFindings
    mc: Optional[Dict[str, DistributionSummary]] = None
    cascades: Optional[Tuple[CascadeRisk, ...]] = None
    generated_at: datetime = EPOCH
    tool_version: str = TOOL_VERSION

    __rm_property_fields__ = ["sections"]
    __rm_convert_types__ = {
        "config": dict,
        "breakdown": ScoreBreakdown.rm_from_dict,
        "key_findings": KeyFindings.rm_from_dict,
        "mc": _parse_mc,
        "cascades": _parse_cascades,
        "generated_at": _parse_timestamp,
    }

    @property
    def sections(self) -> Dict[str, bool]:
        return {"mc": self.mc is not None, "cascades": self.cascades is not None}

    def __rm_verify__(self):
        violations = schema_violations("report", self.rm_as_dict)
        if violations:
            raise SchemaError(violations[0].message, violations[0].path)


@dataclasses.dataclass(frozen=True)
class DeltaEntry(RiskMapSerializeMixin):
    defense_id: str
    level: float
    aggregate_percent: float
    gain: float


@dataclasses.dataclass(frozen=True)
class DeltaReport(RiskMapSerializeMixin):
    """
    what-if results. Independent proposals are sorted by gain descending;
    cumulative ones keep their application order.
    """

    platform: str
    baseline_percent: float
    cumulative: bool
    entries: Tuple[DeltaEntry, ...]


def build_report(
    c: Catalog,
    a: PlatformAssessment,
    breakdown: ScoreBreakdown,
    config: Mapping,
    mc: Optional[Mapping[str, DistributionSummary]] = None,
    cascades: Optional[Sequence[CascadeRisk]] = None,
    coupling: Optional[CouplingInputs] = None,
    generated_at: Optional[datetime] = None,
) -> AssessmentReport:
    """
    assemble and check a report

    :param c: the catalog every section was computed from
    :param a: the assessment
    :param breakdown: ScoreBreakdown, required
    :param config: materialized config echo
    :param mc: optional Monte Carlo summaries
    :param cascades: optional ranked cascade records
    :param coupling: coupling inputs when cascades are present
    :param generated_at: timestamp, defaults to now
    :return: AssessmentReport
    :throws: SchemaError when sections disagree or the report breaks its schema
    """
    if breakdown.catalog_fingerprint != c.fingerprint:
        raise SchemaError(
            f"breakdown was computed from catalog {breakdown.catalog_fingerprint}, not {c.fingerprint}",
            "breakdown.catalog_fingerprint",
        )
    if breakdown.platform != a.platform:
        raise SchemaError(f"breakdown is for {breakdown.platform!r}, not {a.platform!r}", "breakdown.platform")
    if cascades is not None:
        known = c.attack_index
        for k, risk in enumerate(cascades):
            if risk.attack_id not in known:
                raise SchemaError(f"unknown attack {risk.attack_id}", f"cascades[{k}].attack_id")
        if coupling is None:
            raise SchemaError("cascade records without coupling inputs", "coupling_fingerprint")
    if generated_at is None:
        generated_at = datetime.now(timezone.utc)
    report = AssessmentReport(
        platform=a.platform,
        catalog_fingerprint=c.fingerprint,
        assessment_fingerprint=a.fingerprint,
        coupling_fingerprint=coupling.fingerprint if coupling is not None else None,
        illustrative=bool(c.illustrative or (coupling is not None and coupling.illustrative)),
        config={k: v for k, v in config.items()},
        breakdown=breakdown,
        key_findings=key_findings(breakdown),
        mc=dict(mc) if mc is not None else None,
        cascades=tuple(cascades) if cascades is not None else None,
        generated_at=generated_at.replace(microsecond=0),
    )
    report.__rm_verify__()
    return report


def emit_json(r: AssessmentReport) -> bytes:
    return r.rm_as_json


def parse_report(source) -> AssessmentReport:
    """
    read a report written by emit_json

    :param source: path, bytes or stream
    :return: AssessmentReport
    :throws: ParseError, SchemaError
    """
    _, data = read_source(source)
    violations = schema_violations("report", data)
    if violations:
        raise SchemaError(violations[0].message, violations[0].path)
    data.pop("sections", None)
    return AssessmentReport.rm_from_dict(data)


def canonical_report_bytes(r: AssessmentReport) -> bytes:
    """
    emit_json with generated_at pinned to the epoch, for byte comparisons
    """
    d = r.rm_as_dict
    d["generated_at"] = r.__rm_to_date_short__(EPOCH)
    return canonical_dumps(d)


def ordered_metrics(r: AssessmentReport) -> List[Tuple[str, DistributionSummary]]:
    """
    Monte Carlo summaries in metric order: aggregate, layers by ordinal, then
    crr metrics in cascade rank (by name when the cascade is not listed)
    """
    layers = {layer_metric(layer): layer.ordinal for layer in LayerId.ordered()}
    ranks = {crr_metric(risk): k for k, risk in enumerate(r.cascades or ())}

    def key(name: str):
        if name == AGGREGATE_METRIC:
            return 0, 0, name
        if name in layers:
            return 1, layers[name], name
        return 2, ranks.get(name, len(ranks)), name

    return sorted((r.mc or {}).items(), key=lambda item: key(item[0]))


def _number(value: float) -> str:
    return repr(float(value) + 0.0)


def _csv(header: List[str], rows) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return out.getvalue()


def emit_csv(r: AssessmentReport) -> Dict[str, str]:
    """
    the report as named CSV tables. Absent sections give header only tables.

    :param r: AssessmentReport
    :return: file name -> CSV text
    """
    b = r.breakdown
    scores = [
        [attack_id, _number(w), _number(wa), _number(k)]
        for attack_id, w, wa, k in zip(b.attack_ids, b.omega, b.omega_adjusted, b.kappa)
    ]
    layers = [[layer.code, _number(b.layer_scores[layer])] for layer in LayerId.ordered()]
    cascades = [
        [
            ">".join(risk.path.codes),
            risk.attack_id,
            _number(risk.path.strength),
            _number(risk.defense_gap),
            _number(risk.crr),
            _number(risk.cci),
        ]
        for risk in (r.cascades or ())
    ]
    mc = [
        [name, _number(s.mean), _number(s.std_dev), _number(s.median), _number(s.p5), _number(s.p95)]
        for name, s in ordered_metrics(r)
    ]
    return {
        "scores.csv": _csv(SCORES_HEADER, scores),
        "layers.csv": _csv(LAYERS_HEADER, layers),
        "cascades.csv": _csv(CASCADES_HEADER, cascades),
        "mc.csv": _csv(MC_HEADER, mc),
    }


def _radar_point(k: int, radius: float) -> Tuple[float, float]:
    angle = -math.pi / 2.0 + 2.0 * math.pi * k / len(LayerId)
    centre = RADAR_SIZE / 2.0
    return centre + radius * math.cos(angle), centre + radius * math.sin(angle)


def _points(radii: Sequence[float]) -> str:
    return " ".join("{:.3f},{:.3f}".format(*_radar_point(k, r)) for k, r in enumerate(radii))


def _radar_radii(scores: Mapping[LayerId, float], name: str) -> List[float]:
    radii = []
    for layer in LayerId.ordered():
        if layer not in scores:
            raise DomainError(f"{name}[{layer.code}]", None, "[0, 5]")
        score = float(scores[layer])
        if not 0.0 <= score <= RADAR_MAX:
            raise DomainError(f"{name}[{layer.code}]", score, "[0, 5]")
        radii.append(RADAR_RADIUS * score / RADAR_MAX)
    return radii


def emit_radar_svg(
    layer_scores: Mapping[LayerId, float],
    overlays: Sequence[Tuple[str, Mapping[LayerId, float]]] = (),
    label: str = "platform",
) -> bytes:
    """
    a self contained 800 x 800 SVG radar of the seven LayerScores, axes in
    layer ordinal order clockwise from the top, gridlines at 1 to 5

    :param layer_scores: LayerId -> score in [0, 5]
    :param overlays: (label, scores) of further platforms drawn over the first
    :param label: legend entry of the first platform
    :return: UTF-8 SVG bytes
    :throws: DomainError on a missing or out of range score
    """
    series = [(label, _radar_radii(layer_scores, "layer_scores"))]
    for n, (name, scores) in enumerate(overlays):
        series.append((name, _radar_radii(scores, f"overlays[{n}]")))

    lines = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{RADAR_SIZE}" height="{RADAR_SIZE}" '
        f'viewBox="0 0 {RADAR_SIZE} {RADAR_SIZE}" font-family="sans-serif">',
        f'<rect x="0" y="0" width="{RADAR_SIZE}" height="{RADAR_SIZE}" fill="#ffffff"/>',
    ]
    for level in range(1, RADAR_MAX + 1):
        radius = RADAR_RADIUS * level / RADAR_MAX
        lines.append(
            f'<polygon class="grid" points="{_points([radius] * len(LayerId))}" '
            f'fill="none" stroke="#cccccc" stroke-width="1"/>'
        )
        x, y = _radar_point(0, radius)
        lines.append(f'<text x="{x + 4:.3f}" y="{y - 4:.3f}" font-size="12" fill="#666666">{level}</text>')
    for k, layer in enumerate(LayerId.ordered()):
        x, y = _radar_point(k, RADAR_RADIUS)
        lx, ly = _radar_point(k, RADAR_RADIUS + 36.0)
        lines.append(
            f'<line class="axis" x1="{RADAR_SIZE / 2:.3f}" y1="{RADAR_SIZE / 2:.3f}" '
            f'x2="{x:.3f}" y2="{y:.3f}" stroke="#999999" stroke-width="1"/>'
        )
        lines.append(
            f'<text x="{lx:.3f}" y="{ly:.3f}" font-size="14" text-anchor="middle" '
            f'dominant-baseline="middle">{layer.code}</text>'
        )
    for n, (name, radii) in enumerate(series):
        color = RADAR_COLORS[n % len(RADAR_COLORS)]
        lines.append(
            f'<polygon class="series" points="{_points(radii)}" fill="{color}" '
            f'fill-opacity="0.25" stroke="{color}" stroke-width="2"/>'
        )
        lines.append(f'<rect x="20" y="{20 + 22 * n}" width="14" height="14" fill="{color}"/>')
        lines.append(f'<text x="40" y="{32 + 22 * n}" font-size="14">{_escape(name)}</text>')
    lines.append("</svg>")
    return ("\n".join(lines) + "\n").encode("utf-8")


def _escape(text: str) -> str:
    return text.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


def _table(title: str, columns: Sequence[str]) -> Table:
    table = Table(title=title, box=box.ASCII, title_justify="left")
    for n, column in enumerate(columns):
        table.add_column(column, justify="left" if n == 0 else "right")
    return table


def emit_text(r: AssessmentReport) -> str:
    """
    plain text tables for a terminal: layers, key findings, cascades and
    Monte Carlo bands, both mean +- std and median [p5, p95]
    """
    console = Console(
        file=io.StringIO(), width=TEXT_WIDTH, color_system=None, force_terminal=False, highlight=False
    )
    b = r.breakdown
    console.print(f"{r.platform}: RISK-MAP {b.aggregate_percent:.2f}%")
    if r.illustrative:
        console.print("illustrative inputs, not measured data")

    layers = _table("Layer scores", ["layer", "name", "role", "score"])
    for layer in LayerId.ordered():
        layers.add_row(layer.code, layer.display_name, layer.description, f"{b.layer_scores[layer]:.3f}")
    console.print(layers)

    findings = _table("Key findings", ["kind", "id", "value"])
    for code, score in r.key_findings.strengths:
        findings.add_row("strength", code, f"{score:.3f}")
    for attack_id, residual in r.key_findings.vulnerabilities:
        findings.add_row("exposure", attack_id, f"{residual:.4f}")
    console.print(findings)

    if r.cascades is not None:
        cascades = _table("Cascades", ["path", "attack", "P", "U", "crr", "cci"])
        for risk in r.cascades:
            cascades.add_row(
                risk.path.label,
                risk.attack_id,
                f"{risk.path.strength:.4f}",
                f"{risk.defense_gap:.4f}",
                f"{risk.crr:.4f}",
                f"{risk.cci:.4f}",
            )
        console.print(cascades)

    if r.mc is not None:
        mc = _table("Monte Carlo", ["metric", "point", "mean +- std", "median [p5, p95]"])
        for name, s in ordered_metrics(r):
            mc.add_row(
                name,
                f"{s.point_estimate:.4f}",
                f"{s.mean:.4f} +- {s.std_dev:.4f}",
                f"{s.median:.4f} [{s.p5:.4f}, {s.p95:.4f}]",
            )
        console.print(mc)
    return console.file.getvalue()


def _comparison_rows(reports: Sequence[AssessmentReport]):
    if reports:
        expected = reports[0].catalog_fingerprint
        for n, r in enumerate(reports):
            if r.catalog_fingerprint != expected:
                raise SchemaError(
                    f"{r.platform!r} was scored on catalog {r.catalog_fingerprint}, not {expected}",
                    f"reports[{n}].catalog_fingerprint",
                )
    for r in reports:
        band = (r.mc or {}).get(AGGREGATE_METRIC)
        strengths = r.key_findings.strengths
        exposures = r.key_findings.vulnerabilities
        yield (
            r,
            band,
            strengths[0][0] if strengths else "",
            exposures[0][0] if exposures else "",
        )


def emit_comparison_csv(reports: Sequence[AssessmentReport]) -> str:
    """
    one row per platform: aggregate, its Monte Carlo band (empty without one)
    and the top key findings

    :throws: SchemaError when the platforms were scored on different catalogs
    """
    rows = []
    for r, band, strongest, exposure in _comparison_rows(reports):
        stats = (
            [_number(band.mean), _number(band.std_dev), _number(band.median), _number(band.p5), _number(band.p95)]
            if band is not None
            else [""] * 5
        )
        rows.append([r.platform, _number(r.breakdown.aggregate_percent)] + stats + [strongest, exposure])
    return _csv(COMPARISON_HEADER, rows)


def emit_comparison_text(reports: Sequence[AssessmentReport]) -> str:
    console = Console(
        file=io.StringIO(), width=TEXT_WIDTH, color_system=None, force_terminal=False, highlight=False
    )
    table = _table(
        "Platforms",
        ["platform", "RISK-MAP %", "mean +- std", "median [p5, p95]", "strongest", "most exposed"],
    )
    for r, band, strongest, exposure in _comparison_rows(reports):
        table.add_row(
            r.platform,
            f"{r.breakdown.aggregate_percent:.2f}",
            f"{band.mean:.2f} +- {band.std_dev:.2f}" if band is not None else "-",
            f"{band.median:.2f} [{band.p5:.2f}, {band.p95:.2f}]" if band is not None else "-",
            strongest or "-",
            exposure or "-",
        )
    console.print(table)
    return console.file.getvalue()


def _check_proposals(
    c: Catalog, proposals: Sequence[Tuple[str, float]], allow_continuous: bool
) -> List[Tuple[str, float]]:
    extra, invalid = [], []
    checked = []
    for defense_id, level in proposals:
        level = float(level)
        if defense_id not in c.defense_index:
            extra.append(defense_id)
        elif not 0.0 <= level <= 1.0 or (not allow_continuous and not on_level(level, FIVE_LEVELS)):
            invalid.append(f"proposal {defense_id}={level}")
        checked.append((defense_id, level))
    if extra or invalid:
        raise BindError("what-if proposals", extra=extra, invalid=invalid)
    return checked


def whatif(
    c: Catalog,
    a: PlatformAssessment,
    proposals: Sequence[Tuple[str, float]],
    cumulative: bool = False,
    allow_continuous: bool = False,
    workers: int = 1,
) -> DeltaReport:
    """
    rank defense upgrades by the aggregate gain of a full rescore. Each
    proposal is measured against the baseline unless cumulative, in which
    case proposals apply in order and each gain is against the previous state.

    :param c: the catalog
    :param a: the platform assessment
    :param proposals: (defense id, proposed implementation level) pairs
    :param cumulative: apply proposals one after another
    :param allow_continuous: accept any level in [0, 1]
    :param workers: threads for independent proposals
    :return: DeltaReport
    :throws: BindError on an unknown defense or invalid level
    """
    checked = _check_proposals(c, proposals, allow_continuous)
    baseline = score_platform(c, a, allow_continuous).aggregate_percent

    entries = []
    if cumulative:
        state, previous = a, baseline
        for defense_id, level in checked:
            state = state.with_implementation({defense_id: level})
            current = score_platform(c, state, allow_continuous).aggregate_percent
            entries.append(DeltaEntry(defense_id, level, current, current - previous))
            previous = current
    else:
        def rescore(proposal: Tuple[str, float]) -> DeltaEntry:
            defense_id, level = proposal
            current = score_platform(c, a.with_implementation({defense_id: level}), allow_continuous)
            return DeltaEntry(defense_id, level, current.aggregate_percent, current.aggregate_percent - baseline)

        with concurrent.futures.ThreadPoolExecutor(max_workers=max(1, workers)) as executor:
            entries = list(executor.map(rescore, checked))
        entries.sort(key=lambda e: (-e.gain, e.defense_id, e.level))

    logger.debug("what-if on %s: %d proposals, cumulative=%s", a.platform, len(entries), cumulative)
    return DeltaReport(platform=a.platform, baseline_percent=baseline, cumulative=cumulative, entries=tuple(entries))


DELTA_HEADER = ["defense", "level", "aggregate_percent", "gain"]


def emit_delta_csv(d: DeltaReport) -> str:
    return _csv(
        DELTA_HEADER,
        [[e.defense_id, _number(e.level), _number(e.aggregate_percent), _number(e.gain)] for e in d.entries],
    )


def emit_delta_text(d: DeltaReport) -> str:
    console = Console(
        file=io.StringIO(), width=TEXT_WIDTH, color_system=None, force_terminal=False, highlight=False
    )
    mode = "cumulative" if d.cumulative else "independent"
    console.print(f"{d.platform}: baseline {d.baseline_percent:.2f}%, {mode} proposals")
    table = _table("What-if", ["defense", "level", "meaning", "RISK-MAP %", "gain (pp)"])
    for e in d.entries:
        table.add_row(
            e.defense_id,
            f"{e.level:g}",
            level_label(e.level, IMPLEMENTATION_SCALE),
            f"{e.aggregate_percent:.3f}",
            f"{e.gain:+.3f}",
        )
    console.print(table)
    return console.file.getvalue()
