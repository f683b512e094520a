"""Exception hierarchy shared across the toolkit.

Errors are split by contract kind so callers (and the CLI) can map them to
exit codes: domain/data errors are user-input problems, contract errors are
programming mistakes.
"""


class SplatQAError(Exception):
    """Base class for all toolkit errors."""


class DomainError(SplatQAError):
    """An argument violates an operation's precondition (bad range, empty input)."""


class DataError(SplatQAError):
    """Input data is structurally valid but semantically unusable (missing MOS, duplicate IDs)."""


class ContractError(SplatQAError):
    """Internal API misuse: shape mismatch, stale cache, invalid index."""


class ConfigError(SplatQAError):
    """Invalid configuration, e.g. colliding output paths in a dataset build."""


class UndefinedMetricError(SplatQAError):
    """A correlation metric is undefined for the given inputs (zero variance / all ties)."""


class PlyError(SplatQAError):
    """Base class for PLY I/O failures."""


class PlyParseError(PlyError):
    """Malformed PLY header; message names the offending line."""


class PlySchemaError(PlyError):
    """Header parsed but required splat properties are missing or mistyped."""


class PlyIOError(PlyError):
    """Truncated or unreadable body; message carries the byte offset where reading stopped."""
