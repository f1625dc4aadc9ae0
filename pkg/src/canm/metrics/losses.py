from canm.errors import ShapeError
from canm.tensor import ops
from canm.tensor.tensor import Tensor


def l1_loss(y: Tensor, t: Tensor) -> Tensor:
    """Mean absolute error; the subgradient at ties is 0."""
    if y.shape != t.shape:
        raise ShapeError(f"l1_loss: prediction {y.shape} and target {t.shape} differ")
    return ops.mean(ops.absolute(y - t))
