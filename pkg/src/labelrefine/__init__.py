"""Time-based label refinement for sensor event logs."""

__version__ = "0.1.0"

from .circstats import (  # noqa: E402
    TestResult,
    bessel_i0,
    dip_test,
    mean_resultant,
    rao_spacing_test,
    von_mises_cdf,
    von_mises_pdf,
    watson_u2_test,
)
from .eventlog import (  # noqa: E402
    CsvSchema,
    Event,
    EventLog,
    Trace,
    is_refinement,
    parse_csv,
    partition,
    read_csv_log,
    relabel,
    write_csv,
)
from .mixture import VonMisesMixture, assign_clusters, em_fit, select_components  # noqa: E402
from .refinement import PipelineConfig, analyze_label, apply_refinement, refine_iteratively  # noqa: E402

__all__ = [
    "CsvSchema",
    "Event",
    "EventLog",
    "PipelineConfig",
    "TestResult",
    "Trace",
    "VonMisesMixture",
    "analyze_label",
    "apply_refinement",
    "assign_clusters",
    "bessel_i0",
    "dip_test",
    "em_fit",
    "is_refinement",
    "mean_resultant",
    "parse_csv",
    "partition",
    "rao_spacing_test",
    "read_csv_log",
    "refine_iteratively",
    "relabel",
    "select_components",
    "von_mises_cdf",
    "von_mises_pdf",
    "watson_u2_test",
    "write_csv",
]
