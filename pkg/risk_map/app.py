from flask import Flask

from .config import DefaultConfig


def create_app(config: dict = None) -> Flask:
    """
    the application every risk-map command runs in. Settings come from
    DefaultConfig, then RISKMAP_<KEY> environment variables, then ``config``.

    :param config: optional overrides, e.g. from tests
    :return: Flask app named risk_map
    """
    app = Flask("risk_map")
    app.config.from_object(DefaultConfig)
    app.config.from_prefixed_env("RISKMAP")
    if config:
        app.config.update(config)
    return app
