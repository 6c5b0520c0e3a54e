"""Exception types shared across hyperleaf.

Each class carries a short ``code`` used by the command line front end when
it prints ``error_code: message`` lines.
"""


class HyperleafError(Exception):
    code = "error"


class DimensionError(HyperleafError, ValueError):
    code = "dimension_error"


class FormatError(HyperleafError, ValueError):
    code = "format_error"

    def __init__(self, message, offset):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


class GenerationError(HyperleafError, RuntimeError):
    code = "generation_error"


class NormalizationError(HyperleafError, ValueError):
    code = "normalization_error"


class MetricError(HyperleafError, ValueError):
    code = "metric_error"


class SingularityError(HyperleafError, ValueError):
    code = "singularity_error"


class ConfigError(HyperleafError, ValueError):
    code = "config_error"


class TrainingError(HyperleafError, RuntimeError):
    code = "training_error"
