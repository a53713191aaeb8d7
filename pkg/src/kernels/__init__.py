from .kernels import (
    KERNEL_KINDS,
    KernelSpec,
    cross_gram,
    eval_kernel,
    gram_matrix,
    median_bandwidth,
    per_dimension,
)

__all__ = ['KERNEL_KINDS', 'KernelSpec', 'cross_gram', 'eval_kernel', 'gram_matrix', 'median_bandwidth', 'per_dimension']
