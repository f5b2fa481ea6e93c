"""Exception types shared across the pipeline.

The CLI maps these onto exit codes: ConfigError -> 2, TransportError -> 3,
ParseError -> 4; anything else -> 1.
"""


class PipelineError(Exception):
    """Base class for pipeline failures."""


class ConfigError(PipelineError):
    """Invalid, incomplete, or unusable configuration or input location."""


class ParseError(PipelineError):
    """Malformed input document or unparseable provider response."""


class TransportError(PipelineError):
    """A remote provider stayed unreachable after retries."""


class ContractError(PipelineError):
    """A provider or caller violated a declared contract (dimension, alignment)."""


class IntegrityError(PipelineError):
    """Cross-referenced records are inconsistent with each other."""


class MetricUndefinedError(PipelineError):
    """A metric's preconditions are not met (too few clusters, empty text)."""
