"""Pluggable arithmetic backends for the kernels.

Every backend exposes the same protocol: rounded scalar ops (mul, add,
sub, div), an accumulation protocol used by scheduled reductions
(accum_new / accum_term / accum_merge / accum_finish), and conversion
plumbing.  The ``roundings`` counter increments once per operation that
rounds, which is what the rounding-census properties measure:

  posit-quire    products are accumulated exactly; only accum_finish
                 rounds, so a dot of any length rounds exactly once
  posit-naive    every op rounds, accumulation is rounded adds
  binary32/64    IEEE semantics, every op rounds
  rational       exact Fractions, never rounds (the oracle)

Input conversion (from_fraction) is an I/O boundary and deliberately
does not count as a kernel rounding.  Exception values (posit NaR,
IEEE NaN/inf, None for the rational backend) propagate through all
ops as values, never as Python errors.
"""

from __future__ import annotations

import math
import struct
from fractions import Fraction
from typing import Optional

import numpy as np

from .posit import PositConfig, arith, decode, encode_round, to_float
from .quire import QuireConfig, posit_units, product_units

__all__ = [
    "Backend",
    "QuireBackend",
    "PositNaiveBackend",
    "Binary32Backend",
    "Binary64Backend",
    "RationalBackend",
    "make_backend",
    "BACKEND_NAMES",
]


class Backend:
    """Shared counter plumbing; subclasses implement the arithmetic."""

    name: str = "abstract"

    def __init__(self) -> None:
        self.roundings = 0

    def reset_counter(self) -> None:
        self.roundings = 0

    # -- scalar ops (must count one rounding each where rounding occurs)

    def mul(self, a, b):
        raise NotImplementedError

    def add(self, a, b):
        raise NotImplementedError

    def sub(self, a, b):
        raise NotImplementedError

    def div(self, a, b):
        raise NotImplementedError

    def neg(self, a):
        raise NotImplementedError

    # -- accumulation protocol for scheduled reductions

    def accum_new(self):
        raise NotImplementedError

    def accum_term(self, acc, factors):
        """Fold one term (a tuple of factor values) into the accumulator."""
        raise NotImplementedError

    def accum_merge(self, a, b):
        raise NotImplementedError

    def accum_finish(self, acc):
        raise NotImplementedError

    # -- conversions and predicates

    def from_fraction(self, x: Fraction):
        raise NotImplementedError

    def to_fraction(self, v) -> Optional[Fraction]:
        raise NotImplementedError

    def zero(self):
        return self.from_fraction(Fraction(0))

    def one(self):
        return self.from_fraction(Fraction(1))

    def is_zero(self, v) -> bool:
        raise NotImplementedError

    def is_exception(self, v) -> bool:
        raise NotImplementedError

    def to_hex(self, v) -> str:
        raise NotImplementedError

    def format_value(self, v) -> str:
        raise NotImplementedError


class QuireBackend(Backend):
    """Posit scalars with exact quire reductions; values are bit patterns."""

    def __init__(self, cfg: PositConfig, carry_bits: int = 31) -> None:
        super().__init__()
        self.cfg = cfg
        self.qcfg = QuireConfig(cfg, carry_bits)
        self.name = f"posit-quire({cfg.nbits},{cfg.es})"

    def mul(self, a, b):
        self.roundings += 1
        return arith("mul", a, b, self.cfg)

    def add(self, a, b):
        self.roundings += 1
        return arith("add", a, b, self.cfg)

    def sub(self, a, b):
        self.roundings += 1
        return arith("sub", a, b, self.cfg)

    def div(self, a, b):
        self.roundings += 1
        return arith("div", a, b, self.cfg)

    def neg(self, a):
        # two's complement negation is exact, nothing rounds
        if a == self.cfg.nar_pattern:
            return a
        return (-a) & self.cfg.mask

    def accum_new(self):
        return [0, False]

    def accum_term(self, acc, factors):
        if acc[1]:
            return acc
        k = len(factors)
        if k == 2:
            units = product_units(factors[0], factors[1], self.qcfg)
        elif k == 1:
            units = posit_units(factors[0], self.qcfg)
        elif k == 0:
            units = posit_units(self.one(), self.qcfg)
        else:
            # fold the extra factors with rounded multiplies, keep the
            # last pair fused
            head = factors[0]
            for f in factors[1:-1]:
                head = self.mul(head, f)
            units = product_units(head, factors[-1], self.qcfg)
        if units is None:
            acc[1] = True
            return acc
        acc[0] += units
        if not self.qcfg.min_int <= acc[0] <= self.qcfg.max_int:
            acc[0] = 0
            acc[1] = True
        return acc

    def accum_merge(self, a, b):
        if a[1] or b[1]:
            return [0, True]
        s = a[0] + b[0]
        if not self.qcfg.min_int <= s <= self.qcfg.max_int:
            return [0, True]
        return [s, False]

    def accum_finish(self, acc):
        self.roundings += 1
        if acc[1]:
            return self.cfg.nar_pattern
        if acc[0] == 0:
            return 0
        ls = self.qcfg.lsb_scale
        x = Fraction(acc[0] << ls) if ls >= 0 else Fraction(acc[0], 1 << -ls)
        return encode_round(x, self.cfg)

    def from_fraction(self, x: Fraction):
        return encode_round(x, self.cfg)

    def to_fraction(self, v) -> Optional[Fraction]:
        d = decode(v, self.cfg)
        if d.kind == "nar":
            return None
        return d.value

    def is_zero(self, v) -> bool:
        return v == 0

    def is_exception(self, v) -> bool:
        return v == self.cfg.nar_pattern

    def to_hex(self, v) -> str:
        return f"0x{v:0{self.cfg.hex_digits}x}"

    def format_value(self, v) -> str:
        if v == self.cfg.nar_pattern:
            return "NaR"
        return repr(to_float(v, self.cfg, exact=False))


class PositNaiveBackend(QuireBackend):
    """Same posit scalars, but reductions round after every operation."""

    def __init__(self, cfg: PositConfig) -> None:
        super().__init__(cfg)
        self.name = f"posit-naive({cfg.nbits},{cfg.es})"

    def accum_new(self):
        return None

    def accum_term(self, acc, factors):
        if len(factors) == 0:
            p = self.one()
        else:
            p = factors[0]
            for f in factors[1:]:
                p = self.mul(p, f)
        if acc is None:
            return p
        return self.add(acc, p)

    def accum_merge(self, a, b):
        if a is None:
            return b
        if b is None:
            return a
        return self.add(a, b)

    def accum_finish(self, acc):
        return 0 if acc is None else acc


class Binary32Backend(Backend):
    """IEEE single precision via numpy float32 scalars."""

    name = "binary32"

    def _op(self, f, a, b):
        self.roundings += 1
        with np.errstate(all="ignore"):
            return f(np.float32(a), np.float32(b))

    def mul(self, a, b):
        return self._op(np.multiply, a, b)

    def add(self, a, b):
        return self._op(np.add, a, b)

    def sub(self, a, b):
        return self._op(np.subtract, a, b)

    def div(self, a, b):
        return self._op(np.divide, a, b)

    def neg(self, a):
        return np.float32(-np.float32(a))

    def accum_new(self):
        return None

    def accum_term(self, acc, factors):
        if len(factors) == 0:
            p = np.float32(1)
        else:
            p = np.float32(factors[0])
            for f in factors[1:]:
                p = self.mul(p, f)
        if acc is None:
            return p
        return self.add(acc, p)

    def accum_merge(self, a, b):
        if a is None:
            return b
        if b is None:
            return a
        return self.add(a, b)

    def accum_finish(self, acc):
        return np.float32(0) if acc is None else acc

    def from_fraction(self, x: Fraction):
        # documented two-step conversion: exact -> binary64 -> binary32
        return np.float32(float(x))

    def from_float(self, x: float):
        return np.float32(x)

    def to_fraction(self, v) -> Optional[Fraction]:
        f = float(v)
        if math.isnan(f) or math.isinf(f):
            return None
        return Fraction(f)

    def is_zero(self, v) -> bool:
        return float(v) == 0.0

    def is_exception(self, v) -> bool:
        f = float(v)
        return math.isnan(f) or math.isinf(f)

    def to_hex(self, v) -> str:
        return "0x" + struct.pack(">f", float(v)).hex()

    def format_value(self, v) -> str:
        return repr(float(v))


class Binary64Backend(Backend):
    """IEEE double precision via native Python floats."""

    name = "binary64"

    def _count(self, v: float) -> float:
        self.roundings += 1
        return v

    def mul(self, a, b):
        return self._count(a * b)

    def add(self, a, b):
        return self._count(a + b)

    def sub(self, a, b):
        return self._count(a - b)

    def div(self, a, b):
        if b == 0.0:
            self.roundings += 1
            if a == 0.0 or math.isnan(a):
                return math.nan
            return math.copysign(math.inf, a) * math.copysign(1.0, b)
        return self._count(a / b)

    def neg(self, a):
        return -a

    def accum_new(self):
        return None

    def accum_term(self, acc, factors):
        if len(factors) == 0:
            p = 1.0
        else:
            p = factors[0]
            for f in factors[1:]:
                p = self.mul(p, f)
        if acc is None:
            return p
        return self.add(acc, p)

    def accum_merge(self, a, b):
        if a is None:
            return b
        if b is None:
            return a
        return self.add(a, b)

    def accum_finish(self, acc):
        return 0.0 if acc is None else acc

    def from_fraction(self, x: Fraction):
        return float(x)

    def from_float(self, x: float):
        return float(x)

    def to_fraction(self, v) -> Optional[Fraction]:
        if math.isnan(v) or math.isinf(v):
            return None
        return Fraction(v)

    def is_zero(self, v) -> bool:
        return v == 0.0

    def is_exception(self, v) -> bool:
        return math.isnan(v) or math.isinf(v)

    def to_hex(self, v) -> str:
        return "0x" + struct.pack(">d", float(v)).hex()

    def format_value(self, v) -> str:
        return repr(float(v))


class RationalBackend(Backend):
    """Exact rationals; the oracle backend.  None stands in for NaR."""

    name = "rational-exact"

    def mul(self, a, b):
        if a is None or b is None:
            return None
        return a * b

    def add(self, a, b):
        if a is None or b is None:
            return None
        return a + b

    def sub(self, a, b):
        if a is None or b is None:
            return None
        return a - b

    def div(self, a, b):
        if a is None or b is None or b == 0:
            return None
        return a / b

    def neg(self, a):
        return None if a is None else -a

    def accum_new(self):
        return Fraction(0)

    def accum_term(self, acc, factors):
        if acc is None:
            return None
        p = Fraction(1)
        for f in factors:
            if f is None:
                return None
            p *= f
        return acc + p

    def accum_merge(self, a, b):
        if a is None or b is None:
            return None
        return a + b

    def accum_finish(self, acc):
        return acc

    def from_fraction(self, x: Fraction):
        return Fraction(x)

    def to_fraction(self, v) -> Optional[Fraction]:
        return v

    def is_zero(self, v) -> bool:
        return v == 0

    def is_exception(self, v) -> bool:
        return v is None

    def to_hex(self, v) -> str:
        # rationals have no bit pattern; serialize the exact value
        return "NaR" if v is None else f"{v.numerator}/{v.denominator}"

    def format_value(self, v) -> str:
        if v is None:
            return "NaR"
        try:
            return repr(float(v))
        except OverflowError:
            return "inf" if v > 0 else "-inf"


BACKEND_NAMES = ("quire", "naive", "binary32", "binary64", "rational")


def make_backend(name: str, nbits: int = 32, es: int = 2) -> Backend:
    """Build a backend from its CLI name."""
    if name == "quire":
        return QuireBackend(PositConfig(nbits, es))
    if name == "naive":
        return PositNaiveBackend(PositConfig(nbits, es))
    if name == "binary32":
        return Binary32Backend()
    if name == "binary64":
        return Binary64Backend()
    if name == "rational":
        return RationalBackend()
    raise ValueError(f"unknown backend {name!r} (choose from {', '.join(BACKEND_NAMES)})")
