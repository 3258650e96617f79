from .params import Adam, ParamStore, finite_difference_check
from .tensor import (
    Tensor,
    add,
    as_tensor,
    clip,
    concat,
    div,
    embedding,
    exp,
    gelu,
    getitem,
    l2_normalize,
    layer_norm,
    log,
    matmul,
    mean,
    mul,
    no_grad,
    power,
    relu,
    reshape,
    scaled_dot_attention,
    sigmoid,
    softmax,
    sqrt,
    stack,
    sub,
    tanh,
    transpose,
    tsum,
    where,
)


def linear(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    out = matmul(x, w)
    return out if b is None else out + b


__all__ = [
    "Adam",
    "ParamStore",
    "Tensor",
    "add",
    "as_tensor",
    "clip",
    "concat",
    "div",
    "embedding",
    "exp",
    "finite_difference_check",
    "gelu",
    "getitem",
    "l2_normalize",
    "layer_norm",
    "linear",
    "log",
    "matmul",
    "mean",
    "mul",
    "no_grad",
    "power",
    "relu",
    "reshape",
    "scaled_dot_attention",
    "sigmoid",
    "softmax",
    "sqrt",
    "stack",
    "sub",
    "tanh",
    "transpose",
    "tsum",
    "where",
]
