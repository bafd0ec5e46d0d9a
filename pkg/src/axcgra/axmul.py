"""Bit-exact model of the DRUM-k dynamic-range unbiased multiplier.

DRUM-k keeps the k bits starting at each operand's leading one, forces the
LSB of the kept segment to 1 (unbiasing), multiplies the two segments
exactly, and shifts the product back into position. Operands smaller than
2^k pass through unchanged, so small products are exact.

Also provides a full product table (LUT) and an exhaustive error analysis
over the complete operand cross product of the configured sign domain.
"""

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import ValidationError

SIGN_UNSIGNED = "unsigned"
SIGN_MAGNITUDE = "sign_magnitude"

# Table sizes above this are refused (2^12 x 2^12 entries is the ceiling).
MAX_TABLE_WIDTH = 12


@dataclass(frozen=True)
class DrumConfig:
    """Parameters of one DRUM-k multiplier instance.

    k:           bits retained from (and including) the leading one
    input_width: operand width in bits
    sign_mode:   'unsigned' operates on raw operands; 'sign_magnitude'
                 multiplies magnitudes and applies the XOR of the signs
    """

    k: int
    input_width: int = 8
    sign_mode: str = SIGN_UNSIGNED

    def __post_init__(self):
        if not (2 <= self.k <= self.input_width <= 32):
            raise ValidationError(
                f"need 2 <= k <= input_width <= 32, got k={self.k} "
                f"width={self.input_width}"
            )
        if self.sign_mode not in (SIGN_UNSIGNED, SIGN_MAGNITUDE):
            raise ValidationError(f"unknown sign_mode {self.sign_mode!r}")

    def to_dict(self):
        return {
            "k": self.k,
            "input_width": self.input_width,
            "sign_mode": self.sign_mode,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            k=int(d["k"]),
            input_width=int(d.get("input_width", 8)),
            sign_mode=str(d.get("sign_mode", SIGN_UNSIGNED)),
        )


@dataclass(frozen=True)
class ErrorStats:
    """Exhaustive error metrics of one DRUM configuration."""

    rmse: float
    mean_error: float
    max_abs_error: int
    exact_fraction: float
    sample_count: int

    def to_dict(self):
        return {
            "rmse": self.rmse,
            "mean_error": self.mean_error,
            "max_abs_error": self.max_abs_error,
            "exact_fraction": self.exact_fraction,
            "sample_count": self.sample_count,
        }


def leading_one_position(x, width):
    """Index of the most significant set bit (bit 0 = LSB); None for x = 0."""
    if x < 0 or x >= (1 << width):
        raise ValidationError(f"operand {x} out of range for width {width}")
    if x == 0:
        return None
    return x.bit_length() - 1


def _segment(x, k):
    """Kept segment and back-shift for one magnitude operand."""
    if x == 0:
        return 0, 0
    p = x.bit_length() - 1
    if p < k:
        # small-operand path: no truncation, no unbiasing
        return x, 0
    shift = p - k + 1
    return ((x >> shift) | 1), shift


def drum_mul_unsigned(a, b, cfg):
    """Approximate product of two unsigned operands."""
    limit = 1 << cfg.input_width
    if not (0 <= a < limit and 0 <= b < limit):
        raise ValidationError(
            f"operands ({a}, {b}) out of range for width {cfg.input_width}"
        )
    seg_a, sh_a = _segment(a, cfg.k)
    seg_b, sh_b = _segment(b, cfg.k)
    return (seg_a * seg_b) << (sh_a + sh_b)


def drum_mul_signed(a, b, cfg):
    """Sign-magnitude product: magnitudes go through the unsigned path,
    the result sign is the XOR of the operand signs."""
    mag = drum_mul_unsigned(abs(a), abs(b), cfg)
    return -mag if (a < 0) != (b < 0) else mag


def drum_mul(a, b, cfg):
    """Dispatch on cfg.sign_mode."""
    if cfg.sign_mode == SIGN_MAGNITUDE:
        return drum_mul_signed(a, b, cfg)
    return drum_mul_unsigned(a, b, cfg)


def _vec_segments(vals, k):
    """Vectorized segment extraction for an int64 array of magnitudes."""
    # frexp exponent == bit_length for positive ints (exact below 2^53)
    exp = np.frexp(vals.astype(np.float64))[1]
    pos = exp - 1  # leading-one index, -1 for zero
    shift = np.maximum(pos - (k - 1), 0)
    seg = vals >> shift
    seg = np.where(shift > 0, seg | 1, seg)
    return seg, shift


def _domain_values(cfg):
    """All operand values of the configured sign domain, in table order."""
    n = 1 << cfg.input_width
    if cfg.sign_mode == SIGN_MAGNITUDE:
        # table index i encodes two's complement value
        vals = np.arange(n, dtype=np.int64)
        return np.where(vals < n // 2, vals, vals - n)
    return np.arange(n, dtype=np.int64)


@lru_cache(maxsize=8)
def build_lut(cfg):
    """Full product table lut[a][b] = drum_mul(a, b, cfg).

    In sign_magnitude mode the indices are the two's complement encodings
    of the operands (index i maps to value i - 2^width for i >= 2^(width-1)).
    The returned array is read-only (it is cached and shared).
    """
    if cfg.input_width > MAX_TABLE_WIDTH:
        raise ValidationError(
            f"refusing a {1 << cfg.input_width}-entry-per-axis table "
            f"(width {cfg.input_width} > {MAX_TABLE_WIDTH})"
        )
    vals = _domain_values(cfg)
    mags = np.abs(vals)
    seg, sh = _vec_segments(mags, cfg.k)
    lut = ((seg[:, None] * seg[None, :]) << (sh[:, None] + sh[None, :]))
    if cfg.sign_mode == SIGN_MAGNITUDE:
        lut = lut * (np.sign(vals)[:, None] * np.sign(vals)[None, :])
    lut = lut.astype(np.int32)
    lut.setflags(write=False)
    return lut


def exhaustive_error_stats(cfg):
    """ErrorStats of drum - exact over the full operand cross product."""
    if cfg.input_width > MAX_TABLE_WIDTH:
        raise ValidationError(
            f"exhaustive analysis capped at width {MAX_TABLE_WIDTH}, "
            f"got {cfg.input_width}"
        )
    vals = _domain_values(cfg)
    drum = build_lut(cfg).astype(np.int64)
    exact = vals[:, None] * vals[None, :]
    err = drum - exact
    n = err.size
    sq_sum = float(np.sum(err.astype(np.float64) ** 2))
    return ErrorStats(
        rmse=math.sqrt(sq_sum / n),
        mean_error=float(np.mean(err)),
        max_abs_error=int(np.max(np.abs(err))),
        exact_fraction=float(np.count_nonzero(err == 0)) / n,
        sample_count=n,
    )
