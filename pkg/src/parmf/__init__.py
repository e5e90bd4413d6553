"""
parmf: parallel matrix factorization for collaborative filtering.

ALS and coordinate descent (CCD, CCD++) over sparse rating matrices, with a
bulk-synchronous multi-threaded runtime whose results do not depend on the
worker count.
"""

from .als import AlsConfig, als_epoch, als_half_step, als_train, solve_item_row, solve_user_row
from .ccd import CcdConfig, ccd_epoch, ccd_train, ccdpp_train
from .errors import (
    DataFormatError,
    DimensionError,
    DuplicateEntryError,
    EvaluationError,
    MeasurementError,
    NotPositiveDefiniteError,
    ParameterError,
    ParmfError,
    SingularMatrixError,
)
from .model import FactorModel, ProbeSet, init_als, init_ccd, load_model, objective, predict, rmse, save_model, top_n
from .report import IterationRecord, TrainReport
from .runtime import Partition, Runtime, Stage, partition_balanced, partition_uniform, speedup
from .sparse import RatingsMatrix, ResidualMatrix, Triplet, col_slice, from_arrays, from_triplets, residual_from, row_slice

__version__ = "0.1.0"
