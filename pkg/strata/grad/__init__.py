from strata.grad.tensor import (
    GradGraph,
    Tensor,
    backward,
    constant,
    debug_finite,
    parameter,
    set_debug_finite,
    zero_grads,
)
from strata.grad.ops import (
    BOUNDARY_MODES,
    add,
    band_convolve,
    concat_cols,
    concat_rows,
    conv1d_band,
    cross_entropy,
    elementwise,
    hadamard,
    matmul,
    reshape,
    scale,
    sigmoid,
    slice_rows,
    softmax,
    stack_rows,
    sub,
    take_row,
    tanh,
    total,
)
from strata.grad.check import finite_difference_check, relative_errors
from strata.grad.optim import AdamState, adam_step, clip_grad_norm

__all__ = [
    'AdamState', 'BOUNDARY_MODES', 'GradGraph', 'Tensor', 'adam_step', 'add', 'backward', 'band_convolve',
    'clip_grad_norm', 'concat_cols', 'concat_rows', 'constant', 'conv1d_band', 'cross_entropy', 'debug_finite',
    'elementwise',
    'finite_difference_check', 'hadamard', 'matmul', 'parameter', 'relative_errors', 'reshape', 'scale',
    'set_debug_finite', 'sigmoid', 'slice_rows', 'softmax', 'stack_rows', 'sub', 'take_row', 'tanh', 'total',
    'zero_grads',
]
