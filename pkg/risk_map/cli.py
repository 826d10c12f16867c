import dataclasses
import functools
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import click
from flask import current_app
from flask.cli import FlaskGroup

from .app import create_app
from .cascade import CascadeConfig, analyze_cascades, default_coupling, lint_coupling, load_coupling
from .catalog import default_catalog, lint_catalog, load_catalog
from .config import (
    COVERAGE_MODES,
    NOISE_MODES,
    NOISE_TARGETS_ALL,
    NOISE_TARGETS_CASCADE,
    NOISE_TARGETS_INPUTS,
    config_echo,
)
from .errors import (
    BindError,
    DomainError,
    EmptySample,
    LengthMismatch,
    NoApplicableThreats,
    ParseError,
    SchemaError,
    UnsupportedConfig,
    ValidationError,
)
from .report import (
    build_report,
    emit_comparison_csv,
    emit_comparison_text,
    emit_csv,
    emit_delta_csv,
    emit_delta_text,
    emit_json,
    emit_radar_svg,
    emit_text,
    whatif,
)
from .scoring import bind, lint_assessment, load_assessment, score_bound
from .uncertainty import McConfig, run_monte_carlo

EXIT_VALIDATION = 1
EXIT_COMPUTATION = 3

TARGET_PRESETS = {
    "inputs": NOISE_TARGETS_INPUTS,
    "cascade": NOISE_TARGETS_CASCADE,
    "all": NOISE_TARGETS_ALL,
}
FORMATS = ("json", "csv", "svg", "text")


@click.group(
    cls=FlaskGroup,
    create_app=create_app,
    add_default_commands=False,
    add_version_option=False,
    load_dotenv=False,
)
def cli():
    """
    RISK-MAP: layer by layer security scoring, cascade ranking and
    Monte Carlo bands for robotic platforms.
    """


def handle_errors(f):
    """
    map risk_map errors onto exit codes: 1 validation, 2 usage, 3 computation
    """

    @functools.wraps(f)
    def wrapper(*args, **kwargs):
        ctx = click.get_current_context()
        try:
            return f(*args, **kwargs)
        except UnsupportedConfig as e:
            raise click.BadParameter(str(e)) from e
        except (ParseError, ValidationError, BindError, SchemaError) as e:
            current_app.logger.error("%s", e)
            ctx.exit(EXIT_VALIDATION)
        except (NoApplicableThreats, DomainError, LengthMismatch, EmptySample) as e:
            current_app.logger.error("%s", e)
            ctx.exit(EXIT_COMPUTATION)

    return wrapper


def _targets(value: Optional[str]) -> Optional[Tuple[str, ...]]:
    if value is None:
        return None
    if value in TARGET_PRESETS:
        return TARGET_PRESETS[value]
    targets = tuple(t.strip() for t in value.split(",") if t.strip())
    unknown = [t for t in targets if t not in NOISE_TARGETS_ALL]
    if unknown or not targets:
        raise click.BadParameter(
            f"unknown noise target(s) {', '.join(unknown) or '<none>'}; "
            f"use a preset ({', '.join(TARGET_PRESETS)}) or names from {', '.join(NOISE_TARGETS_ALL)}",
            param_hint="--targets",
        )
    return targets


def _proposal(value: str) -> Tuple[str, float]:
    defense_id, sep, level = value.partition("=")
    try:
        if not sep:
            raise ValueError(value)
        return defense_id.strip(), float(level)
    except ValueError:
        raise click.BadParameter(f"{value!r} is not DEFENSE=LEVEL", param_hint="--propose")


def inputs_options(f):
    f = click.option(
        "--catalog",
        type=click.Path(exists=True, dir_okay=False, path_type=Path),
        help="catalog JSON, defaults to the shipped illustrative catalog",
    )(f)
    f = click.option(
        "--assessment",
        type=click.Path(exists=True, dir_okay=False, path_type=Path),
        required=True,
        help="platform assessment JSON",
    )(f)
    f = click.option(
        "--allow-continuous/--discrete",
        default=None,
        help="accept implementation levels anywhere in [0, 1]",
    )(f)
    return f


def output_options(formats: Tuple[str, ...] = FORMATS):
    def decorator(f):
        f = click.option(
            "--format",
            "output_format",
            type=click.Choice(formats),
            default="json",
            show_default=True,
        )(f)
        f = click.option(
            "--output-dir",
            type=click.Path(file_okay=False, path_type=Path),
            help="write artifacts here instead of standard output",
        )(f)
        return f

    return decorator


def cascade_options(f):
    f = click.option(
        "--coupling",
        type=click.Path(exists=True, dir_okay=False, path_type=Path),
        help="coupling JSON, defaults to the shipped illustrative S/E/M",
    )(f)
    f = click.option("--alpha", type=float, help="weight of S, overrides the coupling file")(f)
    f = click.option("--beta", type=float, help="weight of E, overrides the coupling file")(f)
    f = click.option("--top-k", type=click.IntRange(min=0), help="records to rank [3]")(f)
    f = click.option("--epsilon-hop", type=float, help="per hop threshold on D [0.3]")(f)
    f = click.option("--min-prop", type=float, help="minimum path strength [0.1]")(f)
    f = click.option("--hops", type=int, help="path length, only 2 is supported")(f)
    f = click.option(
        "--allow-endpoint-repeat",
        is_flag=True,
        default=None,
        help="allow paths that return to their first layer",
    )(f)
    f = click.option("--coverage-mode", type=click.Choice(COVERAGE_MODES))(f)
    f = click.option(
        "--origin-only",
        is_flag=True,
        default=None,
        help="pair an attack only with paths starting in its own layer",
    )(f)
    return f


def mc_options(f):
    f = click.option("--seed", type=click.IntRange(min=0, max=2 ** 64 - 1), help="overrides RISKMAP_SEED")(f)
    f = click.option("--iterations", type=click.IntRange(min=1), help="Monte Carlo iterations [1000]")(f)
    f = click.option("--noise", type=float, help="noise fraction [0.25]")(f)
    f = click.option("--noise-mode", type=click.Choice(NOISE_MODES))(f)
    f = click.option(
        "--targets",
        help="inputs, cascade, all, or a comma list of likelihood, impact, gamma, mu, attack_weight",
    )(f)
    f = click.option("--workers", type=click.IntRange(min=1), help="threads evaluating iterations [1]")(f)
    return f


def apply_flags(**flags):
    """
    copy the flags given on the command line into the app config. Unset flags
    keep the config value, which is DefaultConfig unless RISKMAP_<KEY> is set.
    """
    keys = {
        "allow_continuous": "ALLOW_CONTINUOUS",
        "top_k": "TOP_K",
        "epsilon_hop": "EPSILON_HOP",
        "min_prop": "MIN_PROP",
        "hops": "HOPS",
        "coverage_mode": "COVERAGE_MODE",
        "origin_only": "ORIGIN_ONLY",
        "seed": "SEED",
        "iterations": "ITERATIONS",
        "noise": "NOISE_FRACTION",
        "noise_mode": "NOISE_MODE",
        "workers": "WORKERS",
        "cumulative": "CUMULATIVE",
    }
    config = current_app.config
    for name, key in keys.items():
        if flags.get(name) is not None:
            config[key] = flags[name]
    if flags.get("allow_endpoint_repeat"):
        config["REQUIRE_DISTINCT_ENDPOINTS"] = False
    targets = _targets(flags.get("targets"))
    if targets is not None:
        config["NOISE_TARGETS"] = targets
    return config


def _catalog(path: Optional[Path]):
    config = current_app.config
    if path is None:
        return default_catalog()
    return load_catalog(path, bool(config["ALLOW_CONTINUOUS"]))


def _coupling(path: Optional[Path], alpha: Optional[float], beta: Optional[float]):
    """
    load the coupling inputs. --alpha and --beta override the file; given
    one of them, the other becomes its complement.
    """
    coupling = load_coupling(path) if path is not None else default_coupling()
    if alpha is not None or beta is not None:
        alpha = float(alpha) if alpha is not None else 1.0 - float(beta)
        beta = float(beta) if beta is not None else 1.0 - alpha
        coupling = dataclasses.replace(coupling, alpha=alpha, beta=beta)
    config = current_app.config
    config["ALPHA"], config["BETA"] = coupling.alpha, coupling.beta
    return coupling


def _run_configs(config) -> Tuple[CascadeConfig, McConfig]:
    try:
        return CascadeConfig.from_config(config), McConfig.from_config(config)
    except (DomainError, UnsupportedConfig) as e:
        raise click.BadParameter(str(e)) from e


def _write(output_dir: Optional[Path], artifacts: Dict[str, bytes]):
    """
    write each artifact into output_dir, or all of them to standard output
    """
    if output_dir is not None:
        output_dir.mkdir(parents=True, exist_ok=True)
        for name, data in artifacts.items():
            (output_dir / name).write_bytes(data)
            current_app.logger.debug("wrote %s", output_dir / name)
        return
    stream = click.get_binary_stream("stdout")
    if len(artifacts) == 1:
        stream.write(next(iter(artifacts.values())))
    else:
        for n, (name, data) in enumerate(artifacts.items()):
            stream.write(f"{'' if n == 0 else chr(10)}# {name}\n".encode("utf-8"))
            stream.write(data)
    stream.flush()


def _emit(report, output_format: str, tables: List[str], overlays=()) -> Dict[str, bytes]:
    """
    render one format; overlays add radar polygons and a per platform comparison
    """
    if output_format == "json":
        return {"report.json": emit_json(report) + b"\n"}
    if output_format == "csv":
        csv = emit_csv(report)
        artifacts = {name: csv[name].encode("utf-8") for name in tables}
        if overlays:
            artifacts["comparison.csv"] = emit_comparison_csv([report, *overlays]).encode("utf-8")
        return artifacts
    if output_format == "svg":
        return {
            "radar.svg": emit_radar_svg(
                report.breakdown.layer_scores,
                [(o.platform, o.breakdown.layer_scores) for o in overlays],
                report.platform,
            )
        }
    text = emit_text(report)
    if overlays:
        text += emit_comparison_text([report, *overlays])
    return {"report.txt": text.encode("utf-8")}


def _overlays(paths, kwargs: dict, with_cascades: bool, with_mc: bool):
    return [
        _pipeline(dict(kwargs, assessment=path), with_cascades=with_cascades, with_mc=with_mc) for path in paths
    ]


def _pipeline(kwargs: dict, with_cascades: bool, with_mc: bool):
    config = apply_flags(**kwargs)
    cascade_cfg, mc_cfg = _run_configs(config)
    allow_continuous = bool(config["ALLOW_CONTINUOUS"])
    catalog = _catalog(kwargs.get("catalog"))
    assessment = load_assessment(kwargs["assessment"], allow_continuous)
    bound = bind(catalog, assessment, allow_continuous)
    breakdown = score_bound(catalog, bound)
    current_app.logger.debug("%s scored %.4f%%", assessment.platform, breakdown.aggregate_percent)

    coupling = cascades = mc = None
    if with_cascades or (with_mc and "attack_weight" in config["NOISE_TARGETS"]):
        coupling = _coupling(kwargs.get("coupling"), kwargs.get("alpha"), kwargs.get("beta"))
    if with_cascades:
        cascades = analyze_cascades(breakdown, bound.detectability, coupling, cascade_cfg).top
    if with_mc:
        mc = run_monte_carlo(
            catalog, assessment, coupling, mc_cfg, cascade_cfg, allow_continuous
        )
    report = build_report(
        catalog,
        assessment,
        breakdown,
        config_echo(config),
        mc=mc,
        cascades=cascades,
        coupling=coupling,
    )
    return report


@cli.command("validate")
@click.option("--catalog", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--assessment", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--coupling", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--allow-continuous/--discrete", default=None)
@handle_errors
def validate_command(catalog, assessment, coupling, allow_continuous):
    """
    lint a catalog, an assessment and/or a coupling file. Every violation is
    listed; the exit code is 1 when any is found.
    """
    config = apply_flags(allow_continuous=allow_continuous)
    allow = bool(config["ALLOW_CONTINUOUS"])
    if catalog is None and assessment is None and coupling is None:
        raise click.UsageError("give at least one of --catalog, --assessment, --coupling")

    failed = False
    loaded_catalog = loaded_assessment = None
    checks = []
    if catalog is not None:
        loaded_catalog, report = lint_catalog(catalog, allow)
        checks.append((catalog, report))
    if assessment is not None:
        loaded_assessment, report = lint_assessment(assessment, allow)
        checks.append((assessment, report))
    if coupling is not None:
        _, report = lint_coupling(coupling)
        checks.append((coupling, report))

    for path, report in checks:
        if report.is_valid:
            click.echo(f"{path}: ok")
            continue
        failed = True
        click.echo(f"{path}: {len(report)} violation(s)")
        for v in report:
            click.echo(f"  {v.code} {v.path}: {v.message}")

    if loaded_assessment is not None and not failed:
        against = loaded_catalog if loaded_catalog is not None else default_catalog()
        try:
            bind(against, loaded_assessment, allow)
            click.echo(f"{assessment}: binds to catalog {against.fingerprint}")
        except BindError as e:
            failed = True
            click.echo(f"{assessment}: BIND {e}")

    if failed:
        current_app.logger.error("validation failed")
        click.get_current_context().exit(EXIT_VALIDATION)


@cli.command("score")
@inputs_options
@click.option(
    "--overlay",
    "overlays",
    type=click.Path(exists=True, dir_okay=False, path_type=Path),
    multiple=True,
    help="another assessment drawn on the radar and compared, repeatable",
)
@output_options()
@handle_errors
def score_command(output_dir, output_format, overlays, **kwargs):
    """
    score one platform: per attack coverage, layer scores and the aggregate
    """
    report = _pipeline(kwargs, with_cascades=False, with_mc=False)
    others = _overlays(overlays, kwargs, with_cascades=False, with_mc=False)
    _write(output_dir, _emit(report, output_format, ["scores.csv", "layers.csv"], others))


@cli.command("cascade")
@inputs_options
@cascade_options
@output_options(("json", "csv", "text"))
@handle_errors
def cascade_command(output_dir, output_format, **kwargs):
    """
    rank two hop cross layer cascades by residual risk
    """
    report = _pipeline(kwargs, with_cascades=True, with_mc=False)
    _write(output_dir, _emit(report, output_format, ["cascades.csv"]))


@cli.command("mc")
@inputs_options
@cascade_options
@mc_options
@click.option("--with-cascades", is_flag=True, help="also summarize the crr of the top k cascades")
@output_options(("json", "csv", "text"))
@handle_errors
def mc_command(output_dir, output_format, with_cascades, **kwargs):
    """
    Monte Carlo bands for the aggregate, each layer score and optionally the top cascades
    """
    report = _pipeline(kwargs, with_cascades=with_cascades, with_mc=True)
    _write(output_dir, _emit(report, output_format, ["mc.csv"]))


@cli.command("report")
@inputs_options
@cascade_options
@mc_options
@click.option(
    "--overlay",
    "overlays",
    type=click.Path(exists=True, dir_okay=False, path_type=Path),
    multiple=True,
    help="another assessment drawn on the radar and compared, repeatable",
)
@output_options()
@handle_errors
def report_command(output_dir, output_format, overlays, **kwargs):
    """
    the full bundle: scores, cascades and Monte Carlo. With --output-dir every
    artifact is written (report.json, the CSV tables, radar.svg, report.txt).
    """
    report = _pipeline(kwargs, with_cascades=True, with_mc=True)
    others = _overlays(overlays, kwargs, with_cascades=True, with_mc=True)
    tables = ["scores.csv", "layers.csv", "cascades.csv", "mc.csv"]
    if output_dir is None:
        _write(None, _emit(report, output_format, tables, others))
        return
    artifacts = {}
    for output in FORMATS:
        artifacts.update(_emit(report, output, tables, others))
    _write(output_dir, artifacts)


@cli.command("whatif")
@inputs_options
@click.option(
    "--propose",
    "proposals",
    multiple=True,
    required=True,
    help="DEFENSE=LEVEL, repeat for several proposals",
)
@click.option("--cumulative/--independent", default=None, help="apply proposals in order")
@click.option("--workers", type=click.IntRange(min=1))
@output_options(("json", "csv", "text"))
@handle_errors
def whatif_command(output_dir, output_format, proposals, cumulative, workers, **kwargs):
    """
    rank proposed implementation upgrades by their gain in RISK-MAP %
    """
    config = apply_flags(cumulative=cumulative, workers=workers, allow_continuous=kwargs.get("allow_continuous"))
    allow = bool(config["ALLOW_CONTINUOUS"])
    catalog = _catalog(kwargs.get("catalog"))
    assessment = load_assessment(kwargs["assessment"], allow)
    delta = whatif(
        catalog,
        assessment,
        [_proposal(p) for p in proposals],
        cumulative=bool(config["CUMULATIVE"]),
        allow_continuous=allow,
        workers=int(config["WORKERS"]),
    )
    if output_format == "json":
        artifacts = {"whatif.json": delta.rm_as_json + b"\n"}
    elif output_format == "csv":
        artifacts = {"whatif.csv": emit_delta_csv(delta).encode("utf-8")}
    else:
        artifacts = {"whatif.txt": emit_delta_text(delta).encode("utf-8")}
    _write(output_dir, artifacts)


def main():
    cli(prog_name="risk-map")


if __name__ == "__main__":
    main()
