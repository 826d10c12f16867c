from typing import Mapping

from permissive_dict import PermissiveDict

# seed used when neither --seed nor RISKMAP_SEED is given, so unseeded runs
# are reproducible too
DEFAULT_SEED = 20240517

# counter based generator used by the Monte Carlo module. Frozen: changing it
# changes every seeded result, so it is echoed into each report.
RNG_NAME = "numpy.random.Philox(SeedSequence(seed, spawn_key=(iteration,)))"

NOISE_TARGETS_INPUTS = ("likelihood", "impact", "gamma", "mu")
NOISE_TARGETS_CASCADE = ("gamma", "mu", "attack_weight")
NOISE_TARGETS_ALL = ("likelihood", "impact", "gamma", "mu", "attack_weight")
NOISE_MODES = ("multiplicative", "additive")
COVERAGE_MODES = ("layer_score", "resident")


class DefaultConfig:
    """
    Flask style configuration object holding every tunable and its documented
    default. Loaded by create_app, then overridden by RISKMAP_<KEY>
    environment variables and finally by command line flags.
    """

    # coupling matrix weights
    ALPHA = 0.6
    BETA = 0.4
    # cascade enumeration
    EPSILON_HOP = 0.3
    MIN_PROP = 0.1
    HOPS = 2
    TOP_K = 3
    REQUIRE_DISTINCT_ENDPOINTS = True
    COVERAGE_MODE = "layer_score"
    ORIGIN_ONLY = False
    # monte carlo
    ITERATIONS = 1000
    NOISE_FRACTION = 0.25
    NOISE_MODE = "multiplicative"
    NOISE_TARGETS = NOISE_TARGETS_INPUTS
    SEED = DEFAULT_SEED
    WORKERS = 1
    # loading and what-if
    ALLOW_CONTINUOUS = False
    CUMULATIVE = False


def config_echo(config: Mapping) -> PermissiveDict:
    """
    materialize the configuration that produced a result. Every default is
    present so the echo alone is enough to re-run an assessment.

    :param config: a flask config or any mapping with DefaultConfig keys
    :return: PermissiveDict with lower case keys
    """
    defaults = {k: v for k, v in vars(DefaultConfig).items() if k.isupper()}
    merged = {k: config.get(k, v) for k, v in defaults.items()}
    return PermissiveDict(
        alpha=float(merged["ALPHA"]),
        beta=float(merged["BETA"]),
        epsilon_hop=float(merged["EPSILON_HOP"]),
        min_prop=float(merged["MIN_PROP"]),
        hops=int(merged["HOPS"]),
        top_k=int(merged["TOP_K"]),
        require_distinct_endpoints=bool(merged["REQUIRE_DISTINCT_ENDPOINTS"]),
        coverage_mode=str(merged["COVERAGE_MODE"]),
        origin_only=bool(merged["ORIGIN_ONLY"]),
        iterations=int(merged["ITERATIONS"]),
        noise_fraction=float(merged["NOISE_FRACTION"]),
        noise_mode=str(merged["NOISE_MODE"]),
        noise_targets=sorted(merged["NOISE_TARGETS"]),
        seed=int(merged["SEED"]),
        workers=int(merged["WORKERS"]),
        allow_continuous=bool(merged["ALLOW_CONTINUOUS"]),
        cumulative=bool(merged["CUMULATIVE"]),
        rng=RNG_NAME,
    )
