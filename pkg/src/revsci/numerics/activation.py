import numpy as np

DEFAULT_SLOPE = 0.01


def leaky_relu(x, slope=DEFAULT_SLOPE):
    """Elementwise max(x, slope * x) for 0 < slope < 1."""
    if not 0.0 < slope < 1.0:
        raise ValueError(f"slope must lie in (0, 1), got {slope}")
    return np.where(x > 0, x, x * x.dtype.type(slope))


def leaky_relu_grad(x, slope=DEFAULT_SLOPE):
    """Derivative of :func:`leaky_relu` (``slope`` at x <= 0).

    Accepts either the pre- or post-activation values: the sign is preserved
    for any positive slope.
    """
    one = x.dtype.type(1)
    return np.where(x > 0, one, x.dtype.type(slope))
