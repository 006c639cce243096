"""gapflow: order-book gap/return statistics and causal discovery.

From raw limit-order-book snapshots to windowed gap/return percentile
series, averaged local cross-correlations, Granger causality tests
(standard and instantaneous) with shuffle-surrogate controls, and
additive-noise-model causal scoring, all validated on synthetic data with
known causal structure.
"""

__version__ = "0.1.0"

from .anm import AnmResult, anm_score, lagged_anm
from .errors import (
    ConfigError,
    GapflowError,
    GeneratorError,
    IngestError,
    ModelError,
    PipelineError,
    SeriesError,
    SurrogateError,
    XcorrError,
)
from .granger import GrangerResult, SeriesPanel, batch_granger, granger_test, windowed_granger
from .gpr import GPModel, gp_fit, gp_residuals
from .hsic import HsicStatistic, hsic_permutation_pvalue, hsic_statistic
from .ingest import (
    BookSnapshot,
    CoverageReport,
    ParseResult,
    SnapshotSequence,
    audit_coverage,
    parse_snapshots,
    write_snapshots,
)
from .linmodel import ARFit, bic, fit_ar, select_lag
from .pipeline import RunConfig, RunReport, run
from .series import (
    GapSeries,
    PercentileSeries,
    ReturnSeries,
    compute_gaps,
    compute_returns,
    compute_volatility,
    max_gap_position_histogram,
    reduce_to_percentile,
)
from .surrogate import (
    AnmNullConfig,
    GrangerNullConfig,
    SurrogateEnsemble,
    annotate_significance,
    null_ensemble,
    shuffle,
    significance_table,
)
from .synthgen import GeneratedData, GeneratorSpec, generate
from .xcorr import CorrelationFunction, average_correlation, local_correlation
