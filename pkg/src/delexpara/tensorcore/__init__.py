from .tensor import (
    NEG_INF,
    ShapeError,
    Tensor,
    UsageError,
    add,
    as_tensor,
    backward,
    concat,
    conv1d,
    cross_entropy,
    dropout,
    embedding_lookup,
    layer_norm,
    log_softmax_np,
    masked_fill,
    masked_softmax,
    matmul,
    max_pool,
    mean_pool,
    mul,
    no_grad,
    relu,
    reshape,
    scale,
    softmax,
    sub,
    tensor_sum,
    transpose,
)
from .optim import Adam, embedding_init, noam_rate, ones, xavier_uniform, zeros
from .checkpoint import load_checkpoint, save_checkpoint
