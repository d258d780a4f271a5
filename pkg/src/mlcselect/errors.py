"""Exception types raised across the package.

Every error that callers are expected to catch has its own class so that
pipelines can distinguish bad input from internal failures.
"""


class MlcSelectError(Exception):
    """Base class for all package errors."""


# --- configuration ---------------------------------------------------------

class UnknownConfigKeyError(MlcSelectError, KeyError):
    """Configuration file contains a key that RunConfig does not define."""


class InvalidConfigValueError(MlcSelectError, ValueError):
    """Configuration value is outside its allowed range."""


# --- ingestion -------------------------------------------------------------

class MissingFileError(MlcSelectError, FileNotFoundError):
    """A referenced input file does not exist."""


class MalformedManifestError(MlcSelectError, ValueError):
    """Dataset manifest is structurally invalid."""


class MalformedTableError(MlcSelectError, ValueError):
    """Performance CSV is structurally invalid (header or row shape)."""


class DatasetValidationError(MlcSelectError, ValueError):
    """Loaded dataset violates a structural invariant."""


class LabelColumnNotFoundError(MlcSelectError, KeyError):
    """Manifest names a label column absent from the data header."""


class NonBinaryLabelValueError(MlcSelectError, ValueError):
    """A label cell holds a value other than 0 or 1."""

    def __init__(self, dataset_id: str, row: int, column: str, value: str):
        self.dataset_id = dataset_id
        self.row = row
        self.column = column
        self.value = value
        super().__init__(
            f"dataset {dataset_id!r}: label column {column!r} row {row} "
            f"holds non-binary value {value!r}"
        )


class UnknownMetricError(MlcSelectError, KeyError):
    """A metric name does not resolve in the metric registry."""


class DuplicateKeyError(MlcSelectError, ValueError):
    """The same (dataset, algorithm, metric) key appears twice."""


class NonFiniteValueError(MlcSelectError, ValueError):
    """A performance value is NaN or infinite."""


class MissingCellError(MlcSelectError, ValueError):
    """Performance table is not dense and missing cells are not allowed."""


class DisjointCorporaError(MlcSelectError, ValueError):
    """Loaded datasets and the performance table share no dataset id."""


# --- meta-features ---------------------------------------------------------

class DegenerateLabelsError(MlcSelectError, ValueError):
    """Every label column has zero positive count."""


class LengthMismatchError(MlcSelectError, ValueError):
    """Paired vectors have different lengths."""


class AllColumnsDroppedError(MlcSelectError, ValueError):
    """Correlation pruning removed every feature column."""


# --- forests ---------------------------------------------------------------

class EmptyTrainingSetError(MlcSelectError, ValueError):
    """Tree or forest fit called with no training rows."""


class DimensionMismatchError(MlcSelectError, ValueError):
    """Prediction input length does not match the trained feature count."""


class TooFewSamplesForFoldsError(MlcSelectError, ValueError):
    """Cross-validation requested more folds than training rows."""


# --- selection -------------------------------------------------------------

class EmptyPortfolioError(MlcSelectError, ValueError):
    """No algorithm reached the win-count threshold."""


# --- explanation -----------------------------------------------------------

class MissingNodeStatisticsError(MlcSelectError, ValueError):
    """Tree nodes lack the per-node sample counts SHAP requires."""


class TooManyFeaturesError(MlcSelectError, ValueError):
    """Brute-force Shapley guard: the coalition space is too large."""


class ModelNotFoundError(MlcSelectError, KeyError):
    """No held-out-fold model exists for the requested key."""


class MetricSetMismatchError(MlcSelectError, ValueError):
    """Two selection reports do not cover the same metrics."""
