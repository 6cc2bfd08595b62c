from __future__ import annotations


class ConfigError(ValueError):
    """Invalid configuration or distribution parameters."""


class InfeasibleError(ValueError):
    """No matching satisfies the requested cardinality floor."""


class ParseError(ValueError):
    """Malformed input file; ``line`` is 1-based when known."""

    def __init__(self, message: str, path: str | None = None, line: int | None = None) -> None:
        prefix = ":".join(str(x) for x in (path, line) if x is not None)
        super().__init__(f"{prefix}: {message}" if prefix else message)
        self.path = path
        self.line = line
