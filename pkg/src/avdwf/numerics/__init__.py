from .checkpoint import decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint
from .gradcheck import GradCheckResult, gradcheck, relative_error
from .nn import (
    LN_EPS,
    AttentionParams,
    LayerNormParams,
    LinearLayer,
    Module,
    attention_weights,
    check_heads,
    merge_heads,
    multi_head_self_attention,
    param,
    split_heads,
)
from .tensor import (
    Tensor,
    add,
    as_tensor,
    bce_with_logits,
    broadcast_to,
    clip_min,
    concat,
    div,
    exp,
    gelu,
    getitem,
    layer_norm,
    log,
    matmul,
    mean,
    mul,
    neg,
    no_grad,
    relu,
    reshape,
    sigmoid,
    softmax,
    sqrt,
    square,
    stack,
    sub,
    swapaxes,
    tanh,
    transpose,
    tsum,
)
