"""lncm: linear network collapse models for video-coding prediction tools.

Train small activation-free networks for intra prediction, sub-pel
interpolation and chroma prediction, collapse them algebraically into
single-layer equivalents, verify the equivalence, and quantify the
complexity/accuracy trade-off (parameter counts, PSNR, BD-rate).
"""

from .collapse import (AffineMap, ComplexityReport, ConvStack, EquivalenceReport,
                       LinearFcn, PruneReport, collapse_affine, collapse_conv,
                       count_params, prune_taps, verify_equivalence)
from .chroma import (ChromaHybridModel, ChromaHybridRegressor, ChromaInput,
                     attention_weights, predict_chroma)
from .errors import (BoundsError, DataError, DimensionError, FitError, IoError,
                     LncmError, OverlapError, ParamError, ParseError,
                     SingularError, VerificationFailure)
from .interp import (QUARTER_POSITIONS, FixedFilterBank, FractionalPosition,
                     QuarterPelFilterSet, SrcnnLinearRegressor, apply_filter,
                     apply_fixed_filter, derive_filters, gen_training_pairs,
                     switchable_select)
from .intra import (IntraFcnRegressor, RidgeAffineRegressor, contribution_map,
                    extract_references, fit_affine_ridge, predict_block, ref_count)
from .metrics import BdResult, RdCurve, bd_rate, build_rd_curve, mse, psnr
from .model_io import read_filter_set, read_model, write_filter_set, write_model
from .pgm import read_pgm, write_pgm
from .tensor_core import (Kernel, Plane, clip_plane, compose_spatial, conv2d,
                          delta_kernel, matmul, zero_pad)

__version__ = "0.1.0"

__all__ = [
    "AffineMap", "BdResult", "BoundsError", "ChromaHybridModel",
    "ChromaHybridRegressor", "ChromaInput", "ComplexityReport", "ConvStack",
    "DataError", "DimensionError", "EquivalenceReport", "FitError",
    "FixedFilterBank", "FractionalPosition", "IntraFcnRegressor", "IoError",
    "Kernel", "LinearFcn", "LncmError", "OverlapError", "ParamError",
    "ParseError", "Plane", "PruneReport", "QUARTER_POSITIONS",
    "QuarterPelFilterSet", "RdCurve", "RidgeAffineRegressor",
    "SingularError", "SrcnnLinearRegressor", "VerificationFailure",
    "apply_filter", "apply_fixed_filter", "attention_weights", "bd_rate",
    "build_rd_curve", "clip_plane", "collapse_affine", "collapse_conv",
    "compose_spatial", "contribution_map", "conv2d", "count_params",
    "delta_kernel", "derive_filters", "extract_references", "fit_affine_ridge",
    "gen_training_pairs", "matmul", "mse", "predict_block", "predict_chroma",
    "prune_taps", "psnr", "read_filter_set", "read_model", "read_pgm",
    "ref_count", "switchable_select", "verify_equivalence", "write_filter_set",
    "write_model", "write_pgm", "zero_pad",
]
