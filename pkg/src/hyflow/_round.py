"""Directed-rounding helpers built on round-to-nearest floats.

The package never switches the FPU rounding mode. Instead, every bound that
must be outward-correct is computed in round-to-nearest and then bumped by
one (or a few) ULPs in the safe direction. For the correctly rounded IEEE
operations (+, -, *, /, sqrt) the true result lies within half an ULP of
the computed one, so a single `nextafter` step is always enough.

Library transcendentals (sin, cos, exp, log) carry no such guarantee; glibc
documents errors of a couple of ULPs. `LIBM_STEPS` bumps cover that with
margin.
"""

from __future__ import annotations

import math

INF = math.inf

# Safety margin, in nextafter steps, for libm transcendental results.
LIBM_STEPS = 4


def next_up(x: float) -> float:
    return math.nextafter(x, INF)


def next_down(x: float) -> float:
    return math.nextafter(x, -INF)


def up_steps(x: float, n: int) -> float:
    for _ in range(n):
        x = math.nextafter(x, INF)
    return x


def down_steps(x: float, n: int) -> float:
    for _ in range(n):
        x = math.nextafter(x, -INF)
    return x


def add_up(a: float, b: float) -> float:
    return next_up(a + b)


def add_down(a: float, b: float) -> float:
    return next_down(a + b)


def sub_up(a: float, b: float) -> float:
    return next_up(a - b)


def sub_down(a: float, b: float) -> float:
    return next_down(a - b)


def mul_up(a: float, b: float) -> float:
    return next_up(a * b)


def mul_down(a: float, b: float) -> float:
    return next_down(a * b)


def div_up(a: float, b: float) -> float:
    return next_up(a / b)


def div_down(a: float, b: float) -> float:
    return next_down(a / b)


def sum_abs_up(values) -> float:
    """Upper bound on the sum of |v| over `values`."""
    t = 0.0
    for v in values:
        t = next_up(t + abs(v))
    return t


def ulp(x: float) -> float:
    """Bound on the rounding error of a correctly rounded result `x`.

    A full ULP, which over-covers the half-ULP guarantee and stays sound
    at zero and subnormals (math.ulp(0.0) is the smallest subnormal).
    """
    return math.ulp(x)


def two_sum_err(a: float, b: float, s: float) -> float:
    """Exact absolute rounding error of the float addition s = a + b.

    Knuth's TwoSum; the error term of a float addition is itself a float.
    """
    bb = s - a
    return abs((a - (s - bb)) + (b - bb))
