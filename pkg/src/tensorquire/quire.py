"""Exact accumulation of posit products.

The quire is a wide fixed-point two's-complement accumulator whose
least significant bit weighs minpos squared, so the product of any two
posits is an exact integer multiple of the LSB and sums of such
products carry no rounding error at all.  Rounding happens exactly
once, when the accumulated value is converted back to a posit.

Because accumulation is exact integer addition, it is associative and
commutative in the bit-pattern sense: partial quires built by different
workers over different splits merge to the same accumulator, which is
what makes parallel reductions bitwise reproducible.

Width budget: the value field spans minpos^2 .. maxpos^2, which is
4*(nbits-2)*2^es + 1 bits, plus carry headroom so that over two billion
worst-case products fit before overflow.  For es=2 with 31 carry bits
the total is exactly 16*nbits (a posit32 quire is 512 bits).
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Sequence

from .posit import NAR, ZERO, PositConfig, decode, encode_round

__all__ = ["QuireConfig", "Quire", "exact_dot", "product_units", "posit_units"]


@dataclass(frozen=True)
class QuireConfig:
    """Accumulator geometry derived from a posit format."""

    posit: PositConfig
    carry_bits: int = 31

    def __post_init__(self) -> None:
        if self.carry_bits < 30:
            raise ValueError("carry_bits must be at least 30")

    @property
    def lsb_scale(self) -> int:
        """Power-of-two weight of the accumulator LSB (minpos squared)."""
        return -((self.posit.nbits - 2) << (self.posit.es + 1))

    @property
    def total_width(self) -> int:
        return ((self.posit.nbits - 2) << (self.posit.es + 2)) + 1 + self.carry_bits

    @property
    def max_int(self) -> int:
        return (1 << (self.total_width - 1)) - 1

    @property
    def min_int(self) -> int:
        return -(1 << (self.total_width - 1))

    @property
    def hex_digits(self) -> int:
        return (self.total_width + 3) // 4


def product_units(a_bits: int, b_bits: int, qcfg: QuireConfig) -> Optional[int]:
    """Exact product of two posits in accumulator units, None for NaR.

    The shift below is never negative: the smallest odd-significand
    scale any finite posit can have is the minpos scale, so a product's
    lowest set bit is at or above minpos squared.
    """
    pcfg = qcfg.posit
    da = decode(a_bits, pcfg)
    db = decode(b_bits, pcfg)
    if da.kind == NAR or db.kind == NAR:
        return None
    if da.kind == ZERO or db.kind == ZERO:
        return 0
    shift = da.scale + db.scale - qcfg.lsb_scale
    return (da.sign * db.sign) * (da.significand * db.significand) << shift


def posit_units(p_bits: int, qcfg: QuireConfig) -> Optional[int]:
    """Exact value of a single posit in accumulator units, None for NaR."""
    d = decode(p_bits, qcfg.posit)
    if d.kind == NAR:
        return None
    if d.kind == ZERO:
        return 0
    return d.sign * d.significand << (d.scale - qcfg.lsb_scale)


@dataclass(frozen=True)
class Quire:
    """Immutable accumulator state; every operation returns a new value.

    ``acc`` counts multiples of 2**lsb_scale.  The ``nar`` flag is
    sticky: it is set by a NaR operand or by exceeding the carry
    capacity, and survives all later operations.
    """

    config: QuireConfig
    acc: int = 0
    nar: bool = False

    @classmethod
    def zero(cls, cfg: QuireConfig) -> "Quire":
        return cls(cfg)

    def _with_acc(self, acc: int) -> "Quire":
        if not self.config.min_int <= acc <= self.config.max_int:
            return Quire(self.config, 0, True)
        return Quire(self.config, acc, self.nar)

    def fma(self, a_bits: int, b_bits: int) -> "Quire":
        """Add the exact product a*b; no rounding."""
        if self.nar:
            return self
        units = product_units(a_bits, b_bits, self.config)
        if units is None:
            return Quire(self.config, 0, True)
        return self._with_acc(self.acc + units)

    def add(self, p_bits: int) -> "Quire":
        """Add the exact value of a single posit; no rounding."""
        if self.nar:
            return self
        units = posit_units(p_bits, self.config)
        if units is None:
            return Quire(self.config, 0, True)
        return self._with_acc(self.acc + units)

    def merge(self, other: "Quire") -> "Quire":
        """Exact addition of two accumulators (the parallel-join step)."""
        if self.config != other.config:
            raise ValueError("cannot merge quires with different configs")
        if self.nar or other.nar:
            return Quire(self.config, 0, True)
        return self._with_acc(self.acc + other.acc)

    def to_posit(self) -> int:
        """Round the accumulated value to a posit; the single rounding."""
        if self.nar:
            return self.config.posit.nar_pattern
        if self.acc == 0:
            return 0
        ls = self.config.lsb_scale
        if ls >= 0:
            x = Fraction(self.acc << ls)
        else:
            x = Fraction(self.acc, 1 << -ls)
        return encode_round(x, self.config.posit)

    @property
    def value(self) -> Fraction:
        if self.nar:
            raise ValueError("NaR quire has no rational value")
        ls = self.config.lsb_scale
        if ls >= 0:
            return Fraction(self.acc << ls)
        return Fraction(self.acc, 1 << -ls)

    def to_hex(self) -> str:
        """Full accumulator as two's-complement hex ('NaR' when flagged)."""
        if self.nar:
            return "NaR"
        masked = self.acc & ((1 << self.config.total_width) - 1)
        return f"0x{masked:0{self.config.hex_digits}x}"

    @classmethod
    def from_hex(cls, text: str, cfg: QuireConfig) -> "Quire":
        t = text.strip()
        if t == "NaR":
            return cls(cfg, 0, True)
        if not t.lower().startswith("0x"):
            raise ValueError(f"quire hex must start with 0x: {text!r}")
        bits = int(t[2:], 16)
        if bits >> cfg.total_width:
            raise ValueError(f"quire pattern wider than {cfg.total_width} bits")
        if bits >> (cfg.total_width - 1):
            bits -= 1 << cfg.total_width
        return cls(cfg, bits, False)


def exact_dot(xs: Sequence[int], ys: Sequence[int], cfg) -> int:
    """Dot product with a single rounding at the end.

    ``cfg`` may be a PositConfig (default quire geometry) or a
    QuireConfig.  Inputs are posit bit patterns.
    """
    if isinstance(cfg, PositConfig):
        cfg = QuireConfig(cfg)
    if len(xs) != len(ys):
        raise ValueError(f"length mismatch: {len(xs)} vs {len(ys)}")
    q = Quire.zero(cfg)
    for a, b in zip(xs, ys):
        q = q.fma(a, b)
    return q.to_posit()
