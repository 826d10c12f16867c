from typing import Iterable, List, Optional


class RiskMapError(Exception):
    """
    Base class for every error raised by risk_map
    """


class ParseError(RiskMapError):
    def __init__(self, source: str, reason: str):
        self.source = source
        self.reason = reason
        super().__init__(f"could not parse {source}: {reason}")


class ValidationError(RiskMapError):
    """
    raised when a loaded artifact breaks an invariant. ``violations`` holds
    every Violation found, ``path`` the field path of the first one
    """

    def __init__(self, violations: list):
        self.violations = list(violations)
        first = self.violations[0] if self.violations else None
        self.path = first.path if first else ""
        if first is None:
            message = "validation failed"
        elif len(self.violations) == 1:
            message = f"{first.code} at {first.path}: {first.message}"
        else:
            message = (
                f"{first.code} at {first.path}: {first.message} "
                f"(and {len(self.violations) - 1} more)"
            )
        super().__init__(message)


class DomainError(RiskMapError):
    def __init__(self, name: str, value, domain: str = "[0, 1]"):
        self.name = name
        self.value = value
        super().__init__(f"{name}={value!r} is outside {domain}")


class LengthMismatch(RiskMapError):
    def __init__(self, left: str, left_len: int, right: str, right_len: int):
        super().__init__(
            f"length of {left} ({left_len}) does not match {right} ({right_len})"
        )


class NoApplicableThreats(RiskMapError):
    def __init__(self, platform: Optional[str] = None):
        self.platform = platform
        where = f" for {platform}" if platform else ""
        super().__init__(
            f"no applicable threat carries weight{where}: the sum of adjusted severities is 0"
        )


class BindError(RiskMapError):
    def __init__(
        self,
        what: str,
        missing: Iterable[str] = (),
        extra: Iterable[str] = (),
        invalid: Iterable[str] = (),
    ):
        self.missing: List[str] = sorted(missing)
        self.extra: List[str] = sorted(extra)
        self.invalid: List[str] = list(invalid)
        parts = []
        if self.missing:
            parts.append(f"missing ids: {', '.join(self.missing)}")
        if self.extra:
            parts.append(f"unknown ids: {', '.join(self.extra)}")
        if self.invalid:
            parts.append(f"invalid values: {'; '.join(self.invalid)}")
        super().__init__(f"{what} does not bind to the catalog ({'; '.join(parts)})")


class UnsupportedConfig(RiskMapError):
    def __init__(self, name: str, value, supported: str):
        self.name = name
        super().__init__(f"{name}={value!r} is not supported, expected {supported}")


class EmptySample(RiskMapError):
    def __init__(self):
        super().__init__("percentile of an empty sample is undefined")


class SchemaError(RiskMapError):
    def __init__(self, reason: str, path: str = ""):
        self.path = path
        where = f" at {path}" if path else ""
        super().__init__(f"report schema error{where}: {reason}")
