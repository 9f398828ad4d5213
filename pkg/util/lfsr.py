"""LFSRs over F_p generating the trace sequences Tr(b * alpha^(r*k)).

The canonical recurrence for a channel with feedback polynomial g(x) = x^e + sum g_i x^i is

    s[k + e] = -(g_0 s[k] + g_1 s[k+1] + ... + g_{e-1} s[k+e-1])  (mod p)

and the channel outputs s[0], s[1], ... starting from its seed registers.
"""
import logging
from dataclasses import dataclass
from typing import Optional
from typing import Sequence

import numpy as np

from util.galois import FieldContext
from util.galois import FieldElement
from util.galois import field_mul
from util.galois import field_pow
from util.galois import minimal_polynomial
from util.galois import PrimePoly
from util.galois import trace

logger = logging.getLogger("additive_cs.util.lfsr")


class LfsrPreconditionError(ValueError):
    pass


class SequenceRangeError(ValueError):
    pass


@dataclass(frozen=True)
class LfsrSpec:
    p: int
    taps: tuple
    exponent: int
    feedback_polynomial: PrimePoly

    @property
    def degree(self) -> int:
        return len(self.taps)


@dataclass(frozen=True)
class LfsrState:
    registers: tuple


@dataclass(frozen=True)
class CombinedGenerator:
    channels: tuple
    period: int

    def __post_init__(self):
        if not self.channels:
            raise LfsrPreconditionError("A combined generator needs at least one channel")
        moduli = {spec.p for spec, _ in self.channels}
        if len(moduli) != 1:
            raise LfsrPreconditionError(f"Channels disagree on the modulus: {sorted(moduli)}")
        for spec, state in self.channels:
            if len(state.registers) != spec.degree:
                raise LfsrPreconditionError(
                    f"Channel r={spec.exponent} has {len(state.registers)} registers, "
                    f"expected {spec.degree}"
                )

    @property
    def p(self) -> int:
        return self.channels[0][0].p


def lfsr_from_exponent(ctx: FieldContext, r: int) -> LfsrSpec:
    """Derive the feedback taps of the LFSR generating Tr(b * alpha^(r*k)).

    :param ctx: The field
    :param r: Positive exponent not divisible by p
    :return: The LfsrSpec whose feedback polynomial is the minimal polynomial of alpha^r
    """
    if r < 1 or r % ctx.p == 0:
        raise LfsrPreconditionError(f"Exponent r={r} must be positive with gcd(r, {ctx.order}) = 1")
    poly = minimal_polynomial(ctx, field_pow(ctx, ctx.alpha, r))
    if poly.degree < ctx.m:
        logger.debug("alpha^%s lies in a subfield; LFSR has %s registers", r, poly.degree)
    taps = tuple((-c) % ctx.p for c in poly.coeffs[:-1])
    return LfsrSpec(p=ctx.p, taps=taps, exponent=r, feedback_polynomial=poly)


def seed_for_coefficient(
    ctx: FieldContext, r: int, b: FieldElement, spec: Optional[LfsrSpec] = None
) -> LfsrState:
    """Initial registers Tr(b * alpha^(r*k)) for k < degree, so the output starts at step 0."""
    if spec is None:
        spec = lfsr_from_exponent(ctx, r)
    step = field_pow(ctx, ctx.alpha, r)
    registers = []
    current = b
    for _ in range(spec.degree):
        registers.append(trace(ctx, current))
        current = field_mul(ctx, current, step)
    return LfsrState(registers=tuple(registers))


def combined_generator(
    ctx: FieldContext, exponents: Sequence[int], coefficients: Sequence[FieldElement]
) -> CombinedGenerator:
    """One LFSR channel per (r_i, b_i) pair, ready for generate()."""
    if len(exponents) != len(coefficients):
        raise LfsrPreconditionError("Need exactly one coefficient per exponent")
    channels = []
    for r, b in zip(exponents, coefficients):
        spec = lfsr_from_exponent(ctx, r)
        channels.append((spec, seed_for_coefficient(ctx, r, b, spec)))
    return CombinedGenerator(channels=tuple(channels), period=ctx.order - 1)


def run_channel(spec: LfsrSpec, state: LfsrState, length: int) -> list:
    """Clock a single LFSR for `length` outputs without touching the stored state."""
    sequence = list(state.registers[:length])
    e = spec.degree
    while len(sequence) < length:
        window = sequence[-e:]
        sequence.append(sum(t * s for t, s in zip(spec.taps, window)) % spec.p)
    return sequence


def generate(gen: CombinedGenerator, length: int) -> np.ndarray:
    """Sum of the channel outputs mod p for steps 0..length-1.

    :param gen: The combined generator
    :param length: Number of steps, at most one period
    :return: Vector of residues mod p
    """
    if length < 0 or length > gen.period:
        raise SequenceRangeError(f"Length {length} is outside one period [0, {gen.period}]")
    output = np.zeros(length, dtype=np.int64)
    for spec, state in gen.channels:
        output += np.array(run_channel(spec, state, length), dtype=np.int64)
    return output % gen.p


def trace_sequence(ctx: FieldContext, r: int, b: FieldElement, length: int) -> np.ndarray:
    """Tr(b * alpha^(r*k)) by direct field arithmetic; the oracle for the LFSR output."""
    return np.array(
        [trace(ctx, field_mul(ctx, b, field_pow(ctx, ctx.alpha, r * k))) for k in range(length)],
        dtype=np.int64,
    )


def sequence_period(sequence: Sequence[int]) -> int:
    """Least T such that the sequence repeats with shift T over its whole length."""
    values = list(sequence)
    for period in range(1, len(values)):
        if values[period:] == values[:-period]:
            return period
    return len(values)
