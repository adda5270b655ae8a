"""tacc: a tensor algebra compiler and contraction runtime.

Programs in the tensor algebra language parse to an AST, lower to a
contraction IR, and execute as transpose-GEMM-transpose pipelines over a
cache-blocked GEMM. An analytic model ranks fixed-function GEMM tile
designs for the same workloads.
"""

from .accel import (AccelSpec, CodesignReport, builtin_accels,
                    codesign_sweep, estimate_contraction, estimate_gemm,
                    load_accels)
from .bench import BenchCase, BenchResult, ablate_case, load_suite, run_case
from .errors import (CacheTooSmall, ConfigError, FlopOverflow,
                     InvalidIndexUsage, NonEmptyRequired, RankMismatch,
                     RankTooHigh, ShapeMismatch, TaccError, TaSyntaxError,
                     TooManyOperands, UndeclaredIdentifier,
                     UninitializedTensor, UnknownCharacter,
                     UnterminatedLiteral)
from .executor import (DenseTensor, ExecutionReport, MicroKernel,
                       execute_ttgt, load_dtns, naive_contract, permute,
                       reference_microkernel, run_program, save_dtns,
                       scalar_microkernel, tiled_gemm)
from .frontend import parse, pretty_print, tokenize
from .loops import (LoopNest, TilingConfig, derive_tiling, schedule_gemm,
                    tile_transpose, transpose_loop_order)
from .planner import (TTGTPlan, binarize, enumerate_ttgt_variants,
                      natural_order, order_expression, permutation_cost,
                      select_ttgt)
from .ta_ir import (ContractionSpec, IrModule, classify_indices, emit_ta,
                    flop_count, lower_ast, validate)

__version__ = "0.1.0"

__all__ = [
    "AccelSpec", "BenchCase", "BenchResult", "CacheTooSmall",
    "CodesignReport", "ConfigError", "ContractionSpec", "DenseTensor",
    "ExecutionReport", "FlopOverflow", "InvalidIndexUsage", "IrModule",
    "LoopNest", "MicroKernel", "NonEmptyRequired", "RankMismatch",
    "RankTooHigh", "ShapeMismatch", "TaccError", "TaSyntaxError",
    "TilingConfig", "TooManyOperands", "TTGTPlan", "UndeclaredIdentifier",
    "UninitializedTensor", "UnknownCharacter", "UnterminatedLiteral",
    "ablate_case", "binarize", "builtin_accels", "classify_indices",
    "codesign_sweep", "derive_tiling", "emit_ta", "enumerate_ttgt_variants",
    "estimate_contraction", "estimate_gemm", "execute_ttgt", "flop_count",
    "load_accels", "load_dtns", "load_suite", "lower_ast", "naive_contract",
    "natural_order", "order_expression", "parse", "permutation_cost",
    "permute", "pretty_print", "reference_microkernel", "run_case",
    "run_program", "save_dtns", "scalar_microkernel", "schedule_gemm",
    "select_ttgt", "tile_transpose", "tiled_gemm", "tokenize",
    "transpose_loop_order", "validate",
]
