"""Parameterized PCA: principal subspaces that vary smoothly with a scalar parameter."""

from .baselines import GlobalPcaModel, IpcaModel, fit_ipca, fit_pca_global, project_baseline
from .energy import EnergyBreakdown, Penalties, energy_data, energy_ortho, energy_smoothness, energy_total
from .errors import (
    DegenerateBasisError,
    DimensionError,
    DivergenceError,
    EmptyEndpointError,
    NumericalError,
    OutOfRangeError,
    PpcaError,
    RankDeficientError,
    RankDeficientWarning,
    ReorderError,
    SingularSystemError,
    UsageError,
)
from .evaluation import GroundTruth, MetricRow, compare_methods, mean_rmse, ppca_mean_rmse
from .initialize import InitConfig, initialize_model
from .model import (
    BinGrid,
    CoefficientSet,
    Dataset,
    PpcaModel,
    compute_weights,
    interpolate_basis,
    interpolate_mean,
    reconstruct,
)
from .optim import TrainConfig, TrainReport, solve_coefficients, train

__version__ = "0.1.0"
