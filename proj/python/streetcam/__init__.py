"""Camera prevalence estimation from street-level imagery samples."""

try:
    from ._streetcam import (
        DataError,
        UsageError,
        calibrate,
        coverage_fraction,
        estimate_city,
        estimate_table,
        extract_instances,
        ols,
        round_count,
        round_density,
        version,
    )
except ImportError:  # in-tree build: the extension sits on PYTHONPATH
    from _streetcam import (
        DataError,
        UsageError,
        calibrate,
        coverage_fraction,
        estimate_city,
        estimate_table,
        extract_instances,
        ols,
        round_count,
        round_density,
        version,
    )

__version__ = version()

__all__ = [
    "DataError",
    "UsageError",
    "calibrate",
    "coverage_fraction",
    "estimate_city",
    "estimate_table",
    "extract_instances",
    "ols",
    "round_count",
    "round_density",
    "version",
]
