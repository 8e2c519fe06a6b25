"""Exact unit-circle points and certified interval scalars.

Two layers live here.  The exact layer is :class:`Angle`, a dyadic rational
t = num / 2**den_pow2 standing for the unimodular number exp(2*pi*i*t);
equality, addition and subtraction of angles are exact integer arithmetic,
so distinctness of circle points is decidable with no tolerance.  The
numeric layer is :class:`CertScalar` / :class:`CertComplex`: closed
intervals with MPFR endpoints, outward-rounded at every operation, so any
computed interval contains the exact real (or complex) value it tracks.

Every strict inequality asked of intervals is three-valued (HOLDS, FAILS,
UNDECIDED); UNDECIDED is the signal for the caller to retry at a higher
working precision.  Non-finite endpoints are allowed only as overflow
sentinels and immediately poison any verdict to UNDECIDED.
"""

from __future__ import annotations

import enum
import sys
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Union

import gmpy2
from gmpy2 import mpfr

__all__ = [
    "Angle",
    "CertScalar",
    "CertComplex",
    "Verdict",
    "PrecisionExhausted",
    "angle_normalize",
    "chord",
    "chord_of_fraction",
    "unit_value",
    "cert_lt",
    "cert_le",
    "refine",
]

MIN_PRECISION_BITS = 16


class PrecisionExhausted(Exception):
    """Raised when a computation would need precision above the ceiling."""


class Verdict(enum.Enum):
    HOLDS = "HOLDS"
    FAILS = "FAILS"
    UNDECIDED = "UNDECIDED"

    def __bool__(self) -> bool:
        return self is Verdict.HOLDS


# Rounding contexts, cached per precision.  All arithmetic goes through
# context methods: the module-level gmpy2 functions round into the ambient
# thread context (53 bits by default), which would silently destroy bounds.

@lru_cache(maxsize=None)
def _dn(bits: int) -> gmpy2.context:
    return gmpy2.context(precision=bits, round=gmpy2.RoundDown)


@lru_cache(maxsize=None)
def _up(bits: int) -> gmpy2.context:
    return gmpy2.context(precision=bits, round=gmpy2.RoundUp)


@lru_cache(maxsize=None)
def _pi_bracket(bits: int) -> tuple[mpfr, mpfr]:
    return _dn(bits).const_pi(), _up(bits).const_pi()


def _int_to_mpfr(n: int, ctx: gmpy2.context) -> mpfr:
    return ctx.add(mpfr(0), n)


def _neg_exact(x: mpfr) -> mpfr:
    # Sign flip keeps the significand; a context at the operand's own
    # precision makes it exact.  Bare ``-x`` would round through the ambient
    # 53-bit thread context.
    return gmpy2.context(precision=max(x.precision, 2)).minus(x)


def _ensure_digit_capacity(ndigits: int) -> None:
    # CPython 3.11+ limits int<->str conversions; exact decimals of deep
    # dyadics exceed the 4300-digit default.
    try:
        if sys.get_int_max_str_digits() < ndigits + 16:
            sys.set_int_max_str_digits(ndigits + 16)
    except AttributeError:
        pass


def decimal_exact(x: mpfr) -> str:
    """Exact finite-decimal representation of a (dyadic) MPFR value."""
    if gmpy2.is_nan(x):
        return "nan"
    if gmpy2.is_infinite(x):
        return "inf" if x > 0 else "-inf"
    if gmpy2.is_zero(x):
        return "0"
    m, e = x.as_mantissa_exp()
    m, e = int(m), int(e)
    sign = "-" if m < 0 else ""
    m = abs(m)
    tz = (m & -m).bit_length() - 1
    m >>= tz
    e += tz
    if e >= 0:
        _ensure_digit_capacity((m.bit_length() + e) // 3 + 2)
        return sign + str(m << e)
    k = -e
    scaled = m * 5**k
    _ensure_digit_capacity(scaled.bit_length() // 3 + 2)
    digits = str(scaled)
    if len(digits) <= k:
        digits = "0" * (k - len(digits) + 1) + digits
    return sign + digits[:-k] + "." + digits[-k:]


def mpfr_from_decimal(s: str) -> mpfr:
    """Parse a decimal string produced by :func:`decimal_exact`, exactly."""
    if s == "nan":
        return mpfr("nan")
    if s == "inf":
        return gmpy2.inf()
    if s == "-inf":
        return gmpy2.inf(-1)
    _ensure_digit_capacity(len(s))
    fr = Fraction(s)
    if fr == 0:
        return mpfr(0)
    den = fr.denominator
    k = den.bit_length() - 1
    if den != (1 << k):
        raise ValueError(f"not a dyadic decimal: {s!r}")
    num = fr.numerator
    bits = max(MIN_PRECISION_BITS, num.bit_length() + 2)
    return gmpy2.context(precision=bits).div_2exp(mpfr(num, precision=bits), k)


# ---------------------------------------------------------------------------
# Exact dyadic angles


@dataclass(frozen=True)
class Angle:
    """Reduced dyadic rational in [0, 1), an exact point of the unit circle.

    Invariants: 0 <= num < 2**den_pow2, and num is odd unless the angle is
    zero (num == 0, den_pow2 == 0).  Equality of reduced forms decides
    equality of the circle points exactly.
    """

    num: int
    den_pow2: int

    def __post_init__(self) -> None:
        if self.den_pow2 < 0 or self.num < 0 or self.num >= (1 << self.den_pow2):
            raise ValueError(f"unreduced angle {self.num}/2^{self.den_pow2}")
        if self.num == 0:
            if self.den_pow2 != 0:
                raise ValueError("zero angle must be 0/2^0")
        elif self.num % 2 == 0:
            raise ValueError(f"angle numerator not odd: {self.num}/2^{self.den_pow2}")

    @property
    def fraction(self) -> Fraction:
        return Fraction(self.num, 1 << self.den_pow2)

    def __add__(self, other: "Angle") -> "Angle":
        q = max(self.den_pow2, other.den_pow2)
        p = (self.num << (q - self.den_pow2)) + (other.num << (q - other.den_pow2))
        return angle_normalize(p, q)

    def __sub__(self, other: "Angle") -> "Angle":
        q = max(self.den_pow2, other.den_pow2)
        p = (self.num << (q - self.den_pow2)) - (other.num << (q - other.den_pow2))
        return angle_normalize(p, q)

    def __str__(self) -> str:
        return f"{self.num}/2^{self.den_pow2}"

    def to_json(self) -> dict:
        return {"num": str(self.num), "den_pow2": self.den_pow2}

    @classmethod
    def from_json(cls, obj: dict) -> "Angle":
        return cls(int(obj["num"]), int(obj["den_pow2"]))


ZERO_ANGLE = Angle(0, 0)


def angle_normalize(p: int, q: int) -> Angle:
    """Reduced dyadic angle congruent to p / 2**q modulo 1."""
    if q < 0:
        raise ValueError("negative denominator exponent")
    p %= 1 << q
    if p == 0:
        return ZERO_ANGLE
    while p % 2 == 0:
        p //= 2
        q -= 1
    return Angle(p, q)


def parse_angle(text: str) -> Angle:
    """Parse 'p/2^q' or 'p/d' with d a power of two (e.g. '1/64'), or '0'."""
    text = text.strip()
    if text in ("0", "0/1"):
        return ZERO_ANGLE
    if "/" not in text:
        raise ValueError(f"angle must look like p/2^q or p/d: {text!r}")
    p_str, d_str = text.split("/", 1)
    p = int(p_str)
    if d_str.startswith("2^"):
        q = int(d_str[2:])
    else:
        d = int(d_str)
        q = d.bit_length() - 1
        if d != (1 << q):
            raise ValueError(f"denominator is not a power of two: {text!r}")
    return angle_normalize(p, q)


# ---------------------------------------------------------------------------
# Certified interval scalars


Number = Union[int, Fraction, "CertScalar"]


@dataclass(frozen=True)
class CertScalar:
    """Closed interval [lo, hi] with outward rounding at ``bits`` precision.

    Immutable; every operation returns a fresh interval that contains the
    exact result of the operation applied to any points of the operands.
    """

    lo: mpfr
    hi: mpfr
    bits: int

    def __post_init__(self) -> None:
        if gmpy2.is_nan(self.lo) or gmpy2.is_nan(self.hi):
            object.__setattr__(self, "lo", gmpy2.inf(-1))
            object.__setattr__(self, "hi", gmpy2.inf())
        elif self.lo > self.hi:
            raise ValueError(f"inverted interval [{self.lo}, {self.hi}]")

    # -- constructors

    @classmethod
    def point(cls, value: int | mpfr, bits: int) -> "CertScalar":
        if isinstance(value, int):
            ctx = gmpy2.context(precision=max(bits, value.bit_length() + 2))
            v = _int_to_mpfr(value, ctx)
        else:
            v = value
        return cls(v, v, bits)

    @classmethod
    def from_fraction(cls, fr: Fraction, bits: int) -> "CertScalar":
        num, den = fr.numerator, fr.denominator
        k = den.bit_length() - 1
        if den == (1 << k) and abs(num).bit_length() <= bits:
            # dyadic and representable: exact point
            p = max(MIN_PRECISION_BITS, abs(num).bit_length() + 2, bits)
            v = gmpy2.context(precision=p).div_2exp(mpfr(num, precision=p), k)
            return cls(v, v, bits)
        lo = _dn(bits).div(_int_to_mpfr(num, _dn(bits)), _int_to_mpfr(den, _up(bits)))
        hi = _up(bits).div(_int_to_mpfr(num, _up(bits)), _int_to_mpfr(den, _dn(bits)))
        if num < 0:
            lo = _dn(bits).div(_int_to_mpfr(num, _dn(bits)), _int_to_mpfr(den, _dn(bits)))
            hi = _up(bits).div(_int_to_mpfr(num, _up(bits)), _int_to_mpfr(den, _up(bits)))
        return cls(lo, hi, bits)

    @classmethod
    def sentinel(cls, bits: int) -> "CertScalar":
        return cls(gmpy2.inf(-1), gmpy2.inf(), bits)

    # -- predicates

    @property
    def is_sentinel(self) -> bool:
        return not (gmpy2.is_finite(self.lo) and gmpy2.is_finite(self.hi))

    def contains(self, value) -> bool:
        if self.is_sentinel:
            return True
        if isinstance(value, CertScalar):
            return self.lo <= value.lo and value.hi <= self.hi
        if isinstance(value, Fraction):
            return Fraction(*self.lo.as_integer_ratio()) <= value <= Fraction(*self.hi.as_integer_ratio())
        return self.lo <= value <= self.hi

    def overlaps(self, other: "CertScalar") -> bool:
        return self.lo <= other.hi and other.lo <= self.hi

    def mid(self) -> mpfr:
        return gmpy2.context(precision=self.bits).div(
            gmpy2.context(precision=self.bits).add(self.lo, self.hi), 2
        )

    def width(self) -> mpfr:
        return _up(self.bits).sub(self.hi, self.lo)

    # -- arithmetic

    def _coerce(self, other: Number) -> "CertScalar":
        if isinstance(other, CertScalar):
            return other
        if isinstance(other, int):
            return CertScalar.point(other, self.bits)
        if isinstance(other, Fraction):
            return CertScalar.from_fraction(other, self.bits)
        return NotImplemented  # type: ignore[return-value]

    def __neg__(self) -> "CertScalar":
        return CertScalar(_neg_exact(self.hi), _neg_exact(self.lo), self.bits)

    def __add__(self, other: Number) -> "CertScalar":
        o = self._coerce(other)
        if o is NotImplemented:
            return NotImplemented
        b = max(self.bits, o.bits)
        if self.is_sentinel or o.is_sentinel:
            return CertScalar.sentinel(b)
        return CertScalar(_dn(b).add(self.lo, o.lo), _up(b).add(self.hi, o.hi), b)

    __radd__ = __add__

    def __sub__(self, other: Number) -> "CertScalar":
        o = self._coerce(other)
        if o is NotImplemented:
            return NotImplemented
        b = max(self.bits, o.bits)
        if self.is_sentinel or o.is_sentinel:
            return CertScalar.sentinel(b)
        return CertScalar(_dn(b).sub(self.lo, o.hi), _up(b).sub(self.hi, o.lo), b)

    def __rsub__(self, other: Number) -> "CertScalar":
        o = self._coerce(other)
        if o is NotImplemented:
            return NotImplemented
        return o - self

    def __mul__(self, other: Number) -> "CertScalar":
        o = self._coerce(other)
        if o is NotImplemented:
            return NotImplemented
        b = max(self.bits, o.bits)
        if self.is_sentinel or o.is_sentinel:
            return CertScalar.sentinel(b)
        dn, up = _dn(b), _up(b)
        pairs = ((self.lo, o.lo), (self.lo, o.hi), (self.hi, o.lo), (self.hi, o.hi))
        lo = min(dn.mul(x, y) for x, y in pairs)
        hi = max(up.mul(x, y) for x, y in pairs)
        return CertScalar(lo, hi, b)

    __rmul__ = __mul__

    def __truediv__(self, other: Number) -> "CertScalar":
        o = self._coerce(other)
        if o is NotImplemented:
            return NotImplemented
        b = max(self.bits, o.bits)
        if self.is_sentinel or o.is_sentinel or (o.lo <= 0 <= o.hi):
            return CertScalar.sentinel(b)
        dn, up = _dn(b), _up(b)
        pairs = ((self.lo, o.lo), (self.lo, o.hi), (self.hi, o.lo), (self.hi, o.hi))
        lo = min(dn.div(x, y) for x, y in pairs)
        hi = max(up.div(x, y) for x, y in pairs)
        return CertScalar(lo, hi, b)

    def __rtruediv__(self, other: Number) -> "CertScalar":
        o = self._coerce(other)
        if o is NotImplemented:
            return NotImplemented
        return o / self

    def square(self) -> "CertScalar":
        b = self.bits
        if self.is_sentinel:
            return CertScalar.sentinel(b)
        dn, up = _dn(b), _up(b)
        if self.lo >= 0:
            return CertScalar(dn.mul(self.lo, self.lo), up.mul(self.hi, self.hi), b)
        if self.hi <= 0:
            return CertScalar(dn.mul(self.hi, self.hi), up.mul(self.lo, self.lo), b)
        m = max(_neg_exact(self.lo), self.hi)
        return CertScalar(mpfr(0), up.mul(m, m), b)

    def sqrt(self) -> "CertScalar":
        b = self.bits
        if self.is_sentinel or self.hi < 0:
            return CertScalar.sentinel(b)
        lo = mpfr(0) if self.lo < 0 else _dn(b).sqrt(self.lo)
        return CertScalar(lo, _up(b).sqrt(self.hi), b)

    def __abs__(self) -> "CertScalar":
        if self.is_sentinel:
            return CertScalar.sentinel(self.bits)
        if self.lo >= 0:
            return self
        if self.hi <= 0:
            return -self
        return CertScalar(mpfr(0), max(_neg_exact(self.lo), self.hi), self.bits)

    def scale2(self, k: int) -> "CertScalar":
        """Multiply by 2**k; exact (pure exponent shift)."""
        if self.is_sentinel:
            return self
        ctx = gmpy2.context(precision=max(self.bits, self.lo.precision, self.hi.precision))
        if k >= 0:
            return CertScalar(ctx.mul_2exp(self.lo, k), ctx.mul_2exp(self.hi, k), self.bits)
        return CertScalar(ctx.div_2exp(self.lo, -k), ctx.div_2exp(self.hi, -k), self.bits)

    def min_with(self, other: "CertScalar") -> "CertScalar":
        b = max(self.bits, other.bits)
        return CertScalar(min(self.lo, other.lo), min(self.hi, other.hi), b)

    def max_with(self, other: "CertScalar") -> "CertScalar":
        b = max(self.bits, other.bits)
        return CertScalar(max(self.lo, other.lo), max(self.hi, other.hi), b)

    def __repr__(self) -> str:
        return f"CertScalar[{self.lo!s}, {self.hi!s}]@{self.bits}"

    def to_json(self) -> dict:
        return {"lo": decimal_exact(self.lo), "hi": decimal_exact(self.hi), "bits": self.bits}

    @classmethod
    def from_json(cls, obj: dict) -> "CertScalar":
        return cls(mpfr_from_decimal(obj["lo"]), mpfr_from_decimal(obj["hi"]), int(obj["bits"]))


@dataclass(frozen=True)
class CertComplex:
    """Rectangular complex interval: independent real and imaginary parts."""

    re: CertScalar
    im: CertScalar

    @classmethod
    def point(cls, re: int | mpfr, im: int | mpfr, bits: int) -> "CertComplex":
        return cls(CertScalar.point(re, bits), CertScalar.point(im, bits))

    @property
    def bits(self) -> int:
        return max(self.re.bits, self.im.bits)

    @property
    def is_sentinel(self) -> bool:
        return self.re.is_sentinel or self.im.is_sentinel

    def conj(self) -> "CertComplex":
        return CertComplex(self.re, -self.im)

    def __neg__(self) -> "CertComplex":
        return CertComplex(-self.re, -self.im)

    def __add__(self, other: "CertComplex") -> "CertComplex":
        return CertComplex(self.re + other.re, self.im + other.im)

    def __sub__(self, other: "CertComplex") -> "CertComplex":
        return CertComplex(self.re - other.re, self.im - other.im)

    def __mul__(self, other: Union["CertComplex", Number]) -> "CertComplex":
        if isinstance(other, CertComplex):
            return CertComplex(
                self.re * other.re - self.im * other.im,
                self.re * other.im + self.im * other.re,
            )
        return CertComplex(self.re * other, self.im * other)

    __rmul__ = __mul__

    def __truediv__(self, other: Union["CertComplex", Number]) -> "CertComplex":
        if isinstance(other, CertComplex):
            d = other.abs2()
            num = self * other.conj()
            return CertComplex(num.re / d, num.im / d)
        return CertComplex(self.re / other, self.im / other)

    def abs2(self) -> CertScalar:
        return self.re.square() + self.im.square()

    def __abs__(self) -> CertScalar:
        return self.abs2().sqrt()

    def contains(self, re, im) -> bool:
        return self.re.contains(re) and self.im.contains(im)

    def mid(self) -> tuple[mpfr, mpfr]:
        return self.re.mid(), self.im.mid()

    def to_json(self) -> dict:
        return {"re": self.re.to_json(), "im": self.im.to_json()}

    @classmethod
    def from_json(cls, obj: dict) -> "CertComplex":
        return cls(CertScalar.from_json(obj["re"]), CertScalar.from_json(obj["im"]))


def one(bits: int) -> CertComplex:
    return CertComplex.point(1, 0, bits)


# ---------------------------------------------------------------------------
# Circle evaluations


def _sin_bracket(arg_lo: mpfr, arg_hi: mpfr, bits: int) -> tuple[mpfr, mpfr]:
    # Endpoint values widened by the argument width; |sin'| <= 1 covers any
    # interior critical point.
    dn, up = _dn(bits), _up(bits)
    s_lo = min(dn.sin(arg_lo), dn.sin(arg_hi))
    s_hi = max(up.sin(arg_lo), up.sin(arg_hi))
    w = up.sub(arg_hi, arg_lo)
    lo = max(dn.sub(s_lo, w), mpfr(-1))
    hi = min(up.add(s_hi, w), mpfr(1))
    return lo, hi


def _cos_bracket(arg_lo: mpfr, arg_hi: mpfr, bits: int) -> tuple[mpfr, mpfr]:
    dn, up = _dn(bits), _up(bits)
    c_lo = min(dn.cos(arg_lo), dn.cos(arg_hi))
    c_hi = max(up.cos(arg_lo), up.cos(arg_hi))
    w = up.sub(arg_hi, arg_lo)
    lo = max(dn.sub(c_lo, w), mpfr(-1))
    hi = min(up.add(c_hi, w), mpfr(1))
    return lo, hi


def _pi_times_fraction(fr: Fraction, bits: int) -> tuple[mpfr, mpfr]:
    """Bracket of pi * fr for a nonnegative rational fr."""
    if fr < 0:
        raise ValueError("negative fraction")
    pi_lo, pi_hi = _pi_bracket(bits)
    num, den = fr.numerator, fr.denominator
    dn, up = _dn(bits), _up(bits)
    k = den.bit_length() - 1
    if den == (1 << k):
        lo = dn.div_2exp(dn.mul(pi_lo, _int_to_mpfr(num, dn)), k)
        hi = up.div_2exp(up.mul(pi_hi, _int_to_mpfr(num, up)), k)
    else:
        lo = dn.div(dn.mul(pi_lo, _int_to_mpfr(num, dn)), _int_to_mpfr(den, up))
        hi = up.div(up.mul(pi_hi, _int_to_mpfr(num, up)), _int_to_mpfr(den, dn))
    return lo, hi


@lru_cache(maxsize=None)
def unit_value(a: Angle, precision_bits: int) -> CertComplex:
    """Certified enclosure of exp(2*pi*i*a)."""
    if precision_bits < MIN_PRECISION_BITS:
        raise ValueError(f"precision below {MIN_PRECISION_BITS} bits")
    if a.num == 0:
        return CertComplex.point(1, 0, precision_bits)
    arg_lo, arg_hi = _pi_times_fraction(2 * a.fraction, precision_bits)
    return CertComplex(
        CertScalar(*_cos_bracket(arg_lo, arg_hi, precision_bits), precision_bits),
        CertScalar(*_sin_bracket(arg_lo, arg_hi, precision_bits), precision_bits),
    )


@lru_cache(maxsize=None)
def chord_of_fraction(delta: Fraction, precision_bits: int) -> CertScalar:
    """Certified 2*|sin(pi*delta)| for an exact dyadic fraction delta."""
    delta %= 1
    if delta == 0:
        return CertScalar.point(0, precision_bits)
    delta = min(delta, 1 - delta)  # chord is symmetric about a half turn
    arg_lo, arg_hi = _pi_times_fraction(delta, precision_bits)
    lo, hi = _sin_bracket(arg_lo, arg_hi, precision_bits)
    s = CertScalar(max(lo, mpfr(0)), hi, precision_bits)
    return s.scale2(1)


def chord(a1: Angle, a2: Angle, precision_bits: int) -> CertScalar:
    """Certified |exp(2*pi*i*a1) - exp(2*pi*i*a2)|; exactly zero iff a1 == a2."""
    return chord_of_fraction((a1 - a2).fraction, precision_bits)


# ---------------------------------------------------------------------------
# Three-valued comparisons


def cert_lt(x: CertScalar, y: CertScalar) -> Verdict:
    """Certified strict x < y."""
    if x.is_sentinel or y.is_sentinel:
        return Verdict.UNDECIDED
    if x.hi < y.lo:
        return Verdict.HOLDS
    if x.lo >= y.hi:
        return Verdict.FAILS
    return Verdict.UNDECIDED


def cert_le(x: CertScalar, y: CertScalar) -> Verdict:
    """Certified x <= y."""
    if x.is_sentinel or y.is_sentinel:
        return Verdict.UNDECIDED
    if x.hi <= y.lo:
        return Verdict.HOLDS
    if x.lo > y.hi:
        return Verdict.FAILS
    return Verdict.UNDECIDED


def refine(x: CertScalar | CertComplex, new_precision_bits: int,
           ceiling_bits: int | None = None):
    """Re-tag a certified value at a strictly higher working precision.

    Endpoints are exactly representable at the higher precision, so the new
    interval is contained in (here: equal to) the old one; values derived
    from angles shrink by recomputing ``chord`` / ``unit_value`` at the new
    precision instead.
    """
    if ceiling_bits is not None and new_precision_bits > ceiling_bits:
        raise PrecisionExhausted(
            f"{new_precision_bits} bits exceeds ceiling {ceiling_bits}"
        )
    if isinstance(x, CertComplex):
        return CertComplex(
            refine(x.re, new_precision_bits, ceiling_bits),
            refine(x.im, new_precision_bits, ceiling_bits),
        )
    if new_precision_bits <= x.bits:
        raise ValueError("refinement requires strictly more precision")
    return CertScalar(x.lo, x.hi, new_precision_bits)
