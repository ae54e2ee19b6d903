"""Affine arithmetic over the reals with floating-point soundness.

A set of values is an affine form: a center plus a linear combination of
noise symbols ranging over [-1, 1], plus a nonnegative `slack` that absorbs
every floating-point rounding error as an anonymous symmetric deviation.
Linear operations are exact on the symbolic part (so x - x collapses to a
near-zero form instead of the interval-arithmetic blowup); nonlinear
operations linearize at the center and bound the remainder with a fresh
noise symbol.

Noise symbols are plain integers issued by a `NoiseAllocator`; all forms
that interact must share one allocator (one id space per simulation
branch).
"""

from __future__ import annotations

import enum
import math

from . import _round as rd
from . import interval as iv
from .errors import DomainError
from .interval import Interval
from .trivalent import Trivalent

# Coefficients below this magnitude are folded into slack to avoid denormal
# slowdown and dict churn.
_TINY = 1e-300


class Rel(enum.Enum):
    LT = "<"
    LE = "<="
    GT = ">"
    GE = ">="


class NoiseAllocator:
    """Issues strictly increasing noise-symbol ids.

    One allocator per simulation branch; `fork()` gives a child branch an
    allocator continuing from the current id, so ids stay unique within
    each branch (branches never mix forms, so cross-branch reuse is fine).
    """

    __slots__ = ("_next",)

    def __init__(self, start: int = 0):
        self._next = start

    def fresh(self) -> int:
        n = self._next
        self._next = n + 1
        return n

    def fork(self) -> "NoiseAllocator":
        return NoiseAllocator(self._next)


class AffineForm:
    """center + sum(dev[i] * eps_i) +/- slack, eps_i in [-1, 1]."""

    __slots__ = ("center", "dev", "slack")

    def __init__(self, center: float, dev: dict | None = None, slack: float = 0.0):
        if not math.isfinite(center) or not math.isfinite(slack):
            raise DomainError(f"non-finite affine form (center={center}, slack={slack})")
        if dev:
            cleaned = {}
            for i, v in dev.items():
                a = abs(v)
                if a < _TINY:
                    if a != 0.0:
                        slack = rd.next_up(slack + a)
                elif math.isfinite(v):
                    cleaned[i] = v
                else:
                    raise DomainError(f"non-finite deviation {v} for symbol {i}")
            dev = cleaned
        self.center = center
        self.dev = dev if dev else {}
        self.slack = slack

    def __repr__(self):
        terms = "".join(f" {v:+g}*e{i}" for i, v in self.dev.items())
        return f"AffineForm({self.center:g}{terms} ± {self.slack:g})"

    # Linear operators; multiplication by a form needs an allocator and
    # lives in `mul` below.
    def __add__(self, other):
        if isinstance(other, AffineForm):
            return _add(self, other, 1.0)
        return add_const(self, float(other))

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, AffineForm):
            return _add(self, other, -1.0)
        return add_const(self, -float(other))

    def __rsub__(self, other):
        return add_const(neg(self), float(other))

    def __neg__(self):
        return neg(self)

    def __mul__(self, other):
        if isinstance(other, AffineForm):
            raise TypeError("use mul(x, y, alloc) for form*form products")
        return scale(self, float(other))

    __rmul__ = __mul__

    @property
    def radius(self) -> float:
        """Upper bound on the total deviation around the center."""
        t = self.slack
        n = 1
        for v in self.dev.values():
            t += v if v >= 0.0 else -v
            n += 1
        if t != 0.0:
            t += t * (n * _EPS) + n * _SUBNORM
        return t


ZERO = AffineForm(0.0)


def from_scalar(c: float) -> AffineForm:
    return AffineForm(c)


def from_interval(box: Interval, alloc: NoiseAllocator) -> AffineForm:
    """Fresh affine form whose concretization contains `box`."""
    c = 0.5 * (box.lo + box.hi)
    if not math.isfinite(c):
        c = 0.5 * box.lo + 0.5 * box.hi
    r = 0.5 * (box.hi - box.lo)
    # Outward-rounding deficit on either side goes into slack.
    slack = 0.0
    low_gap = rd.sub_up(rd.sub_up(c, r), box.lo)
    if low_gap > 0.0:
        slack = low_gap
    high_gap = rd.sub_up(box.hi, rd.add_down(c, r))
    if high_gap > slack:
        slack = high_gap
    if r == 0.0:
        return AffineForm(c, None, slack)
    return AffineForm(c, {alloc.fresh(): r}, slack)


def to_interval(x: AffineForm) -> Interval:
    t = x.slack
    n = 1
    for v in x.dev.values():
        t += v if v >= 0.0 else -v
        n += 1
    if t == 0.0:
        return Interval(x.center, x.center)
    t += t * (n * _EPS) + n * _SUBNORM  # accumulated-sum rounding, outward
    c = x.center
    return Interval(rd.next_down(c - t), rd.next_up(c + t))


# Running-error accounting: every float operation r satisfies
# |fl(r) - r| <= eps*|fl(r)| + subnorm, so summing |fl(r)| over the
# operations of one affine op and scaling once bounds all rounding errors.
# _EPS has headroom over 2^-52 to cover the rounding of the error sum
# itself.
_EPS = 2.3e-16
_SUBNORM = 5e-324


def _mk(center: float, dev: dict, slack: float) -> AffineForm:
    # internal fast constructor: coefficient overflow surfaces through the
    # error sums (slack turns infinite), so checking center and slack is
    # enough to keep non-finite forms impossible
    if not (math.isfinite(center) and math.isfinite(slack)):
        raise DomainError(f"non-finite affine form (center={center}, slack={slack})")
    f = AffineForm.__new__(AffineForm)
    f.center = center
    f.dev = dev
    f.slack = slack
    return f


def _finish_slack(base: float, esum: float, ecnt: int) -> float:
    if esum == 0.0 and ecnt == 0:
        return base
    return rd.next_up(base + esum * _EPS + (ecnt + 1) * _SUBNORM)


def _add(x: AffineForm, y: AffineForm, sign: float) -> AffineForm:
    yc = y.center if sign > 0 else -y.center
    center = x.center + yc
    esum = abs(center)
    ecnt = 1
    dev = dict(x.dev)
    if sign > 0:
        for i, yi in y.dev.items():
            xi = dev.get(i)
            if xi is None:
                dev[i] = yi
            else:
                g = xi + yi
                esum += abs(g)
                ecnt += 1
                if g == 0.0:
                    del dev[i]
                else:
                    dev[i] = g
    else:
        for i, yi in y.dev.items():
            xi = dev.get(i)
            if xi is None:
                dev[i] = -yi
            else:
                g = xi - yi
                esum += abs(g)
                ecnt += 1
                if g == 0.0:
                    del dev[i]
                else:
                    dev[i] = g
    slack = rd.next_up(x.slack + y.slack) if y.slack != 0.0 else x.slack
    return _mk(center, dev, _finish_slack(slack, esum, ecnt))


def combine(a: float, x: AffineForm, b: float, y: AffineForm, c: float) -> AffineForm:
    """Exact linear combination a*x + b*y + c with rounding folded into slack."""
    return add_const(_add(scale(x, a), scale(y, b), 1.0), c)


def add_const(x: AffineForm, c: float) -> AffineForm:
    if c == 0.0:
        return x
    s = x.center + c
    err = rd.two_sum_err(x.center, c, s)
    slack = x.slack if err == 0.0 else rd.next_up(x.slack + err)
    return _mk(s, dict(x.dev), slack)


def scale(x: AffineForm, a: float) -> AffineForm:
    if a == 0.0:
        return AffineForm(0.0)
    if a == 1.0:
        return x
    if a == -1.0:
        return neg(x)
    c = a * x.center
    esum = abs(c)
    dev = {}
    for i, xi in x.dev.items():
        g = a * xi
        dev[i] = g
        esum += g if g >= 0.0 else -g
    ecnt = 1 + len(dev)
    slack = x.slack
    if slack != 0.0:
        sa = abs(a) * slack
        slack = sa + sa * _EPS + _SUBNORM
    return _mk(c, dev, _finish_slack(slack, esum, ecnt))


def neg(x: AffineForm) -> AffineForm:
    return _mk(-x.center, {i: -v for i, v in x.dev.items()}, x.slack)


def mul(x: AffineForm, y: AffineForm, alloc: NoiseAllocator) -> AffineForm:
    """Range-sound product: linearization plus one fresh quadratic symbol."""
    if not y.dev and y.slack == 0.0:
        return scale(x, y.center)
    if not x.dev and x.slack == 0.0:
        return scale(y, x.center)
    xc, yc = x.center, y.center
    center = xc * yc
    esum = abs(center)
    ecnt = 1
    dev = {}
    ydev = y.dev
    ax = 0.0
    for i, xi in x.dev.items():
        ax += abs(xi) if xi >= 0.0 else -xi
        yi = ydev.get(i)
        q1 = xi * yc
        if yi is None:
            g = q1
            esum += abs(g)
            ecnt += 1
        else:
            q2 = xc * yi
            g = q1 + q2
            esum += abs(q1) + abs(q2) + abs(g)
            ecnt += 3
        if g != 0.0:
            dev[i] = g
    ay = 0.0
    for i, yi in ydev.items():
        ay += abs(yi) if yi >= 0.0 else -yi
        if i in x.dev:
            continue
        g = xc * yi
        esum += abs(g)
        ecnt += 1
        if g != 0.0:
            dev[i] = g
    nx, ny = len(x.dev), len(ydev)
    ax += ax * (nx * _EPS) + nx * _SUBNORM
    ay += ay * (ny * _EPS) + ny * _SUBNORM
    sx, sy = x.slack, y.slack
    nu = ax * ay
    nu += nu * (4.0 * _EPS) + _SUBNORM
    # Cross terms between slacks, centers and deviations cannot stay
    # correlated; they all land in slack.
    slack = 0.0
    if sx != 0.0 or sy != 0.0:
        cross = abs(xc) * sy + abs(yc) * sx + ax * sy + sx * ay + sx * sy
        slack = cross + cross * (8.0 * _EPS) + _SUBNORM
    if nu != 0.0:
        dev[alloc.fresh()] = nu
    return _mk(center, dev, _finish_slack(slack, esum, ecnt))


def square(x: AffineForm, alloc: NoiseAllocator) -> AffineForm:
    """Sharp affine square: (c + D)^2 = c^2 + 2cD + D^2 with the quadratic
    part D^2 in [0, r^2] recentered, so the fresh symbol carries r^2/2
    instead of the generic product's r^2."""
    if not x.dev and x.slack == 0.0:
        c = x.center * x.center
        return _mk(c, {}, _finish_slack(0.0, abs(c), 1))
    c = x.center
    a = x.slack
    n = 1
    for v in x.dev.values():
        a += v if v >= 0.0 else -v
        n += 1
    a += a * (n * _EPS) + n * _SUBNORM  # upper bound on |D|
    r2 = a * a
    r2 += r2 * (2.0 * _EPS) + _SUBNORM
    half = 0.5 * r2
    center = c * c + half
    esum = abs(c * c) + center + half
    ecnt = 3
    two_c = 2.0 * c
    dev = {}
    for i, xi in x.dev.items():
        g = two_c * xi
        esum += g if g >= 0.0 else -g
        ecnt += 1
        if g != 0.0:
            dev[i] = g
    slack = 0.0
    if x.slack != 0.0:
        sc = abs(two_c) * x.slack
        slack = sc + sc * _EPS + _SUBNORM
    dev[alloc.fresh()] = half
    return _mk(center, dev, _finish_slack(slack, esum, ecnt))


def _unary_taylor(x, alloc, f0_fn, d0_fn, d2_mag, box):
    """First-order Taylor at the center with an interval-bounded remainder.

    d2_mag bounds |f''| over `box`; the remainder over the whole range is
    d2_mag/2 * radius^2, carried by a fresh symbol. Library evaluation
    error for f and f' is covered by LIBM_STEPS ulps.
    """
    c = x.center
    f0 = f0_fn(c)
    d0 = d0_fn(c)
    rad = x.radius
    delta = rd.mul_up(rd.mul_up(0.5 * d2_mag, rad), rad)
    err = rd.LIBM_STEPS * rd.ulp(f0)
    if d0 != 0.0:
        err = rd.next_up(err + rd.mul_up(rd.LIBM_STEPS * rd.ulp(d0), rad))
    dev = {}
    esum = 0.0
    for i, xi in x.dev.items():
        g = d0 * xi
        esum += g if g >= 0.0 else -g
        if g != 0.0:
            dev[i] = g
    if x.slack != 0.0:
        sd = abs(d0) * x.slack
        err = rd.next_up(err + sd + sd * _EPS + _SUBNORM)
    if delta != 0.0:
        dev[alloc.fresh()] = delta
    return _mk(f0, dev, _finish_slack(err, esum, len(dev)))


# name -> (point fn, derivative at a point, |f''| over an interval, range fn)
def _d2_sin(b):
    return iv.sin(b).mag


def _d2_cos(b):
    return iv.cos(b).mag


def _d2_exp(b):
    return iv.exp(b).mag


def _d2_sqrt(b):
    root3 = iv.pow_int(iv.sqrt(b), 3)
    return iv.div(Interval(0.25, 0.25), root3).mag


def _d2_log(b):
    return iv.div(Interval(1.0, 1.0), iv.pow_int(b, 2)).mag


def _d2_recip(b):
    return iv.div(Interval(2.0, 2.0), iv.pow_int(b, 3)).mag


_UNARY = {
    "sin": (math.sin, math.cos, _d2_sin, iv.sin),
    "cos": (math.cos, lambda c: -math.sin(c), _d2_cos, iv.cos),
    "exp": (math.exp, math.exp, _d2_exp, iv.exp),
    "sqrt": (math.sqrt, lambda c: 0.5 / math.sqrt(c), _d2_sqrt, iv.sqrt),
    "log": (math.log, lambda c: 1.0 / c, _d2_log, iv.log),
    "recip": (lambda c: 1.0 / c, lambda c: -1.0 / (c * c), _d2_recip,
              lambda b: iv.div(Interval(1.0, 1.0), b)),
}


def nonlinear_unary(name: str, x: AffineForm, alloc: NoiseAllocator) -> AffineForm:
    """Apply sin/cos/exp/sqrt/log/recip/abs/neg to an affine form."""
    if name == "neg":
        return neg(x)
    if name == "abs":
        return _abs_form(x, alloc)
    f0_fn, d0_fn, d2_fn, range_fn = _UNARY[name]
    box = to_interval(x)
    # Hard domain checks: no sound finite enclosure exists outside these.
    if name == "sqrt" and box.lo < 0.0:
        raise DomainError(f"sqrt of range [{box.lo}, {box.hi}]")
    if name == "log" and box.lo <= 0.0:
        raise DomainError(f"log of range [{box.lo}, {box.hi}]")
    if name == "recip" and box.lo <= 0.0 <= box.hi:
        raise DomainError(f"reciprocal of range [{box.lo}, {box.hi}] containing zero")
    try:
        d2 = d2_fn(box)
        form = _unary_taylor(x, alloc, f0_fn, d0_fn, d2, box)
    except (DomainError, OverflowError, ZeroDivisionError):
        form = None
    rng = range_fn(box)
    if form is not None:
        # A remainder wider than the plain range means the linearization is
        # useless here (wide input); the box is then both tighter and sound.
        got = to_interval(form)
        if got.width <= 4.0 * rng.width or got.subset_of(rng):
            return form
    return from_interval(rng, alloc)


def _abs_form(x: AffineForm, alloc: NoiseAllocator) -> AffineForm:
    box = to_interval(x)
    if box.lo >= 0.0:
        return AffineForm(x.center, dict(x.dev), x.slack)
    if box.hi <= 0.0:
        return neg(x)
    return from_interval(Interval(0.0, box.mag), alloc)


def div(x: AffineForm, y: AffineForm, alloc: NoiseAllocator) -> AffineForm:
    if not y.dev and y.slack == 0.0:
        if y.center == 0.0:
            raise DomainError("division by exact zero")
        return mul(x, nonlinear_unary("recip", AffineForm(y.center), alloc), alloc)
    return mul(x, nonlinear_unary("recip", y, alloc), alloc)


def pow_int(x: AffineForm, n: int, alloc: NoiseAllocator) -> AffineForm:
    if n == 0:
        return AffineForm(1.0)
    if n < 0:
        return nonlinear_unary("recip", pow_int(x, -n, alloc), alloc)
    # binary exponentiation; squaring uses the sharp centered form
    result = None
    base = x
    m = n
    while m:
        if m & 1:
            result = base if result is None else mul(result, base, alloc)
        m >>= 1
        if m:
            base = square(base, alloc)
    return result


def hull(x: AffineForm, y: AffineForm, alloc: NoiseAllocator) -> AffineForm:
    """Convex-hull join: keeps the shared linear part, pushes the rest into
    one fresh symbol. Concretization contains both operands'."""
    g0 = 0.5 * (x.center + y.center)
    kept = {}
    ydev = y.dev
    for i, xi in x.dev.items():
        yi = ydev.get(i)
        if yi is not None and (xi > 0.0) == (yi > 0.0):
            kept[i] = math.copysign(min(abs(xi), abs(yi)), xi)

    def side(form):
        d = abs(form.center - g0)
        n = 1
        for i, v in form.dev.items():
            k = kept.get(i, 0.0)
            d += abs(v - k)
            n += 2
        for i, k in kept.items():
            if i not in form.dev:
                d += abs(k)
                n += 1
        if form.slack != 0.0:
            d += form.slack
            n += 1
        if d != 0.0:
            d += d * (n * _EPS) + n * _SUBNORM
        return d

    delta = max(side(x), side(y))
    if delta != 0.0:
        kept[alloc.fresh()] = delta
    return AffineForm(g0, kept, 0.0)


def compare(x: AffineForm, rel: Rel) -> Trivalent:
    """Trivalent truth of `x rel 0` over the concretization of x."""
    box = to_interval(x)
    if rel is Rel.LT:
        if box.hi < 0.0:
            return Trivalent.TRUE
        if box.lo >= 0.0:
            return Trivalent.FALSE
    elif rel is Rel.LE:
        if box.hi <= 0.0:
            return Trivalent.TRUE
        if box.lo > 0.0:
            return Trivalent.FALSE
    elif rel is Rel.GT:
        if box.lo > 0.0:
            return Trivalent.TRUE
        if box.hi <= 0.0:
            return Trivalent.FALSE
    elif rel is Rel.GE:
        if box.lo >= 0.0:
            return Trivalent.TRUE
        if box.hi < 0.0:
            return Trivalent.FALSE
    return Trivalent.UNKNOWN


def condense(x: AffineForm, budget: int, alloc: NoiseAllocator) -> AffineForm:
    """Reduce to at most `budget` noise symbols; the concretization only grows."""
    if budget < 1:
        raise ValueError("condense budget must be >= 1")
    if len(x.dev) <= budget:
        return x
    items = sorted(x.dev.items(), key=lambda kv: (-abs(kv[1]), kv[0]))
    keep = items[: budget - 1]
    folded = rd.sum_abs_up(v for _, v in items[budget - 1:])
    dev = dict(sorted(keep))
    dev[alloc.fresh()] = folded
    return AffineForm(x.center, dev, x.slack)


def remap(x: AffineForm, mapping: dict, alloc: NoiseAllocator) -> AffineForm:
    """Rename noise symbols through `mapping` (extended with fresh ids).

    Breaks correlation with forms outside the mapping while preserving it
    among forms remapped together.
    """
    dev = {}
    for i, v in x.dev.items():
        j = mapping.get(i)
        if j is None:
            j = alloc.fresh()
            mapping[i] = j
        dev[j] = v
    return AffineForm(x.center, dev, x.slack)


def sample(x: AffineForm, valuation: dict, slack_pos: float = 0.0) -> float:
    """Scalar value at a noise valuation (missing symbols read as 0)."""
    t = x.center
    for i, v in x.dev.items():
        t += v * valuation.get(i, 0.0)
    return t + x.slack * slack_pos
