"""Spectral decomposition of matrix-valued kernels over finite measure spaces.

The pipeline: load an atom space and a kernel, check the kernel axioms,
form the kernel pseudo-metric with its quotient and support, rescale the
measure, diagonalize the discrete kernel operator, and use the resulting
eigenpairs for series reconstruction, frame extraction, and synthesis of
new kernels from scalar frame families.
"""

from .space import (
    Atom,
    AtomFileError,
    AtomSpace,
    PseudoMetricMatrix,
    Quotient,
    SupportSet,
    load_atoms,
    merge_classes,
    pseudo_metric,
    pseudo_metric_prime,
    quotient,
    support,
)
from .kernels import (
    BlockGram,
    KernelEvaluationError,
    KernelSpecError,
    KernelSymmetryError,
    MatrixKernel,
    ValidationReport,
    assemble_block_gram,
    build_kernel,
    kernel_from_file,
    psd_tolerance,
    read_precomputed,
    spectral_norm,
    validate_kernel,
    write_precomputed,
)
from .operators import (
    DiscreteOperator,
    EmptySupportError,
    RKHSElement,
    RescaledMeasure,
    SpectralDecomposition,
    adjoint_embed,
    assemble_operator,
    default_tol_eig,
    eigendecompose,
    embedding_norm_bound_check,
    extend_eigenfunction,
    rescale_measure,
    trace_check,
    truncate,
    write_eigenfunctions,
    write_spectrum,
)
from .mercer import (
    MercerExpansion,
    OffSupportError,
    ScalarFrame,
    default_tol_recon,
    extract_frame,
    frame_check,
    pointwise,
    project,
    read_frame,
    reconstruct,
    reconstruction_error,
    rkhs_inner,
    write_error_table,
    write_frame,
)
from .synthesis import (
    FrameFamily,
    align_frames,
    synthesize_kernel,
    verify_diagonal_blocks,
)

__version__ = "0.1.0"

__all__ = [
    "Atom",
    "AtomFileError",
    "AtomSpace",
    "BlockGram",
    "DiscreteOperator",
    "EmptySupportError",
    "FrameFamily",
    "KernelEvaluationError",
    "KernelSpecError",
    "KernelSymmetryError",
    "MatrixKernel",
    "MercerExpansion",
    "OffSupportError",
    "PseudoMetricMatrix",
    "Quotient",
    "RKHSElement",
    "RescaledMeasure",
    "ScalarFrame",
    "SpectralDecomposition",
    "SupportSet",
    "ValidationReport",
    "adjoint_embed",
    "align_frames",
    "assemble_block_gram",
    "assemble_operator",
    "build_kernel",
    "default_tol_eig",
    "default_tol_recon",
    "eigendecompose",
    "embedding_norm_bound_check",
    "extend_eigenfunction",
    "extract_frame",
    "frame_check",
    "kernel_from_file",
    "load_atoms",
    "merge_classes",
    "pointwise",
    "project",
    "psd_tolerance",
    "pseudo_metric",
    "pseudo_metric_prime",
    "quotient",
    "read_frame",
    "read_precomputed",
    "reconstruct",
    "reconstruction_error",
    "rescale_measure",
    "rkhs_inner",
    "spectral_norm",
    "support",
    "synthesize_kernel",
    "trace_check",
    "truncate",
    "validate_kernel",
    "verify_diagonal_blocks",
    "write_eigenfunctions",
    "write_error_table",
    "write_frame",
    "write_precomputed",
    "write_spectrum",
    "__version__",
]
