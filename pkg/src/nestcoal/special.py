"""Lower real branch of the Lambert W function."""
from __future__ import annotations

import math

_BRANCH_POINT = -math.exp(-1.0)


def lambert_w_m1(y: float) -> float:
    """Solve ``w * exp(w) = y`` for ``w <= -1``, with ``-1/e <= y < 0``.

    Initial guess: the branch-point series in ``p = -sqrt(2(1 + e*y))`` for
    ``y`` near ``-1/e``, otherwise the asymptotic expansion
    ``L1 - L2 + L2/L1`` with ``L1 = log(-y)``, ``L2 = log(-L1)``.  Halley
    iterations refine it to full double precision.
    """
    y = float(y)
    if not (y < 0.0) or y < _BRANCH_POINT * (1.0 + 4 * 2.0**-52):
        raise ValueError(f"lambert_w_m1 is defined on [-1/e, 0), got {y!r}")
    q = 2.0 * (1.0 + math.e * y)
    if q <= 0.0:
        return -1.0
    if y < -0.25:
        p = -math.sqrt(q)
        w = -1.0 + p - p * p / 3.0 + 11.0 / 72.0 * p**3
    else:
        l1 = math.log(-y)
        l2 = math.log(-l1)
        w = l1 - l2 + l2 / l1
    for _ in range(64):
        ew = math.exp(w)
        f = w * ew - y
        wp1 = w + 1.0
        if wp1 == 0.0:
            break
        dw = f / (ew * wp1 - (w + 2.0) * f / (2.0 * wp1))
        w -= dw
        if abs(dw) <= 4e-16 * abs(w):
            break
    return w
