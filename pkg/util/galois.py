"""Arithmetic in GF(p) and GF(p^m) for odd primes p.

Elements are plain ints: the coefficient vector of the element's polynomial representative read
as a base-p number (coefficient of x^i is digit i). Zero is 0, one is 1, and the primitive element
alpha (the class of x) is p when m > 1.
"""
import logging
import math
import time
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional

import numpy as np
from sympy import isprime
from sympy import primefactors

logger = logging.getLogger("additive_cs.util.galois")

DEFAULT_FIELD_CAP = 3**10

FieldElement = int


class FieldSizeError(ValueError):
    pass


class FieldValidationError(ValueError):
    pass


class PolynomialFormatError(ValueError):
    pass


@dataclass(frozen=True)
class PrimePoly:
    """A monic polynomial over F_p, coefficients stored constant term first."""

    p: int
    coeffs: tuple

    def __post_init__(self):
        coeffs = tuple(int(c) for c in self.coeffs)
        object.__setattr__(self, "coeffs", coeffs)
        if len(coeffs) < 2:
            raise PolynomialFormatError("Polynomial degree must be at least 1")
        if any(c < 0 or c >= self.p for c in coeffs):
            raise PolynomialFormatError(f"Coefficients {coeffs} are not residues mod {self.p}")
        if coeffs[-1] != 1:
            raise PolynomialFormatError(f"Polynomial {coeffs} is not monic")

    @property
    def degree(self) -> int:
        return len(self.coeffs) - 1

    def serialize(self) -> str:
        return ",".join(str(c) for c in self.coeffs)

    @classmethod
    def parse(cls, p: int, text: str) -> "PrimePoly":
        """Parse the comma-separated coefficient format, constant term first ("2,0,0,1,1").

        :param p: The field characteristic
        :param text: The serialized coefficient list
        :return: The parsed polynomial
        """
        try:
            coeffs = tuple(int(value) for value in text.split(","))
        except ValueError as e:
            raise PolynomialFormatError(f"Unable to parse polynomial '{text}'") from e
        return cls(p, coeffs)

    def __str__(self) -> str:
        terms = []
        for power in reversed(range(len(self.coeffs))):
            c = self.coeffs[power]
            if c == 0:
                continue
            if power == 0:
                terms.append(str(c))
                continue
            monomial = "x" if power == 1 else f"x^{power}"
            terms.append(monomial if c == 1 else f"{c}{monomial}")
        return " + ".join(terms)


@dataclass(frozen=True, eq=False)
class FieldContext:
    """A fully built GF(p^m). Immutable once returned by build_field()."""

    p: int
    m: int
    modulus: PrimePoly
    exp_table: np.ndarray
    log_table: np.ndarray
    trace_table: np.ndarray
    digits: np.ndarray
    powers: np.ndarray
    power_traces: np.ndarray

    @property
    def order(self) -> int:
        return self.p**self.m

    @property
    def alpha(self) -> FieldElement:
        return int(self.exp_table[1 % (self.order - 1)])

    def __repr__(self) -> str:
        return f"FieldContext(GF({self.p}^{self.m}), modulus={self.modulus})"


def check_field_parameters(p: int, m: int, cap: int = DEFAULT_FIELD_CAP) -> None:
    """Raise unless p is an odd prime, m >= 1 and p^m is within the size cap."""
    if p == 2 or not isprime(p):
        raise FieldValidationError(f"p={p} is not an odd prime")
    if m < 1:
        raise FieldValidationError(f"Extension degree m={m} must be at least 1")
    if p**m > cap:
        raise FieldSizeError(f"Field size {p}^{m} exceeds the cap of {cap} elements")


def _mulmod(a: list, b: list, modulus: tuple, p: int) -> list:
    m = len(modulus) - 1
    product = [0] * (len(a) + len(b) - 1)
    for i, ai in enumerate(a):
        if ai:
            for j, bj in enumerate(b):
                product[i + j] = (product[i + j] + ai * bj) % p
    for top in range(len(product) - 1, m - 1, -1):
        c = product[top]
        if c:
            for i in range(m + 1):
                product[top - m + i] = (product[top - m + i] - c * modulus[i]) % p
    return (product + [0] * m)[:m]


def _x_power_mod(exponent: int, modulus: tuple, p: int) -> list:
    result = _mulmod([1], [1], modulus, p)
    base = _mulmod([1], [0, 1], modulus, p)
    while exponent:
        if exponent & 1:
            result = _mulmod(result, base, modulus, p)
        base = _mulmod(base, base, modulus, p)
        exponent >>= 1
    return result


def is_primitive(poly: PrimePoly) -> bool:
    """Check whether the class of x has multiplicative order exactly p^m - 1 modulo poly.

    A reducible modulus has fewer than p^m - 1 units, so this also rules out reducibility.

    :param poly: The candidate modulus
    :return: True if poly is primitive
    """
    p, m = poly.p, poly.degree
    if poly.coeffs[0] == 0:
        return False
    group_order = p**m - 1
    one = [1] + [0] * (m - 1)
    if _x_power_mod(group_order, poly.coeffs, p) != one:
        return False
    return all(
        _x_power_mod(group_order // q, poly.coeffs, p) != one for q in primefactors(group_order)
    )


def find_primitive_polynomial(p: int, m: int, cap: int = DEFAULT_FIELD_CAP) -> PrimePoly:
    """Find the lexicographically smallest primitive monic polynomial of degree m over F_p.

    Candidates x^m + c_{m-1}x^{m-1} + ... + c_0 are ranked by the base-p number c_{m-1}...c_0.

    :param p: Odd prime characteristic
    :param m: Extension degree
    :param cap: Largest allowed field size
    :return: The first primitive candidate
    """
    check_field_parameters(p, m, cap)
    for index in range(p**m):
        coeffs = tuple((index // p**i) % p for i in range(m)) + (1,)
        poly = PrimePoly(p, coeffs)
        if is_primitive(poly):
            logger.debug("Primitive polynomial for GF(%s^%s): %s", p, m, poly)
            return poly
    raise FieldValidationError(f"No primitive polynomial of degree {m} over F_{p}")


def build_field(
    p: int, m: int, modulus: Optional[PrimePoly] = None, cap: int = DEFAULT_FIELD_CAP
) -> FieldContext:
    """Build exp/log/trace tables for GF(p^m) defined by a primitive modulus.

    :param p: Odd prime characteristic
    :param m: Extension degree
    :param modulus: Primitive polynomial to use; searched for if not given
    :param cap: Largest allowed field size
    :return: The immutable FieldContext
    """
    check_field_parameters(p, m, cap)
    start_time = time.time()
    if modulus is None:
        modulus = find_primitive_polynomial(p, m, cap)
    elif modulus.p != p or modulus.degree != m:
        raise FieldValidationError(f"Modulus {modulus} is not a degree-{m} polynomial over F_{p}")
    if not is_primitive(modulus):
        raise FieldValidationError(f"Modulus {modulus} is not primitive over F_{p}")

    q = p**m
    powers = p ** np.arange(m, dtype=np.int64)
    reduction = np.array(modulus.coeffs[:m], dtype=np.int64)

    exp_table = np.zeros(q - 1, dtype=np.int64)
    coeffs = np.zeros(m, dtype=np.int64)
    coeffs[0] = 1
    for i in range(q - 1):
        exp_table[i] = int(coeffs @ powers)
        top = coeffs[m - 1]
        coeffs = np.roll(coeffs, 1)
        coeffs[0] = 0
        coeffs = (coeffs - top * reduction) % p

    log_table = np.full(q, -1, dtype=np.int64)
    log_table[exp_table] = np.arange(q - 1, dtype=np.int64)
    if np.count_nonzero(log_table[1:] < 0):
        raise FieldValidationError(f"Powers of x modulo {modulus} do not cover the field")

    digits = (np.arange(q, dtype=np.int64)[:, None] // powers[None, :]) % p

    # Tr is F_p-linear, so the traces of the basis 1, alpha, .., alpha^{m-1} determine it
    basis_traces = np.zeros(m, dtype=np.int64)
    for i in range(m):
        conjugate_sum = np.zeros(m, dtype=np.int64)
        for j in range(m):
            conjugate_sum += digits[exp_table[(i * p**j) % (q - 1)]]
        conjugate_sum %= p
        if np.any(conjugate_sum[1:]):
            raise FieldValidationError(f"Trace of alpha^{i} does not lie in F_{p}")
        basis_traces[i] = conjugate_sum[0]
    trace_table = (digits @ basis_traces) % p
    power_traces = trace_table[exp_table]

    for table in (exp_table, log_table, trace_table, digits, powers, power_traces):
        table.flags.writeable = False

    logger.debug(
        "Built GF(%s^%s) with modulus %s in %.3fs", p, m, modulus, time.time() - start_time
    )
    return FieldContext(
        p=p,
        m=m,
        modulus=modulus,
        exp_table=exp_table,
        log_table=log_table,
        trace_table=trace_table,
        digits=digits,
        powers=powers,
        power_traces=power_traces,
    )


def field_add(ctx: FieldContext, a: FieldElement, b: FieldElement) -> FieldElement:
    return int(((ctx.digits[a] + ctx.digits[b]) % ctx.p) @ ctx.powers)


def field_neg(ctx: FieldContext, a: FieldElement) -> FieldElement:
    return int(((ctx.p - ctx.digits[a]) % ctx.p) @ ctx.powers)


def field_sub(ctx: FieldContext, a: FieldElement, b: FieldElement) -> FieldElement:
    return field_add(ctx, a, field_neg(ctx, b))


def field_mul(ctx: FieldContext, a: FieldElement, b: FieldElement) -> FieldElement:
    if a == 0 or b == 0:
        return 0
    return int(ctx.exp_table[(ctx.log_table[a] + ctx.log_table[b]) % (ctx.order - 1)])


def field_pow(ctx: FieldContext, a: FieldElement, exponent: int) -> FieldElement:
    if a == 0:
        if exponent < 0:
            raise ZeroDivisionError("Zero has no negative powers")
        return 1 if exponent == 0 else 0
    return int(ctx.exp_table[(int(ctx.log_table[a]) * exponent) % (ctx.order - 1)])


def field_inv(ctx: FieldContext, a: FieldElement) -> FieldElement:
    if a == 0:
        raise ZeroDivisionError("Zero has no multiplicative inverse")
    return int(ctx.exp_table[(-int(ctx.log_table[a])) % (ctx.order - 1)])


def trace(ctx: FieldContext, x: FieldElement) -> int:
    """Absolute trace Tr_1^m(x), read from the table built with the field."""
    return int(ctx.trace_table[x])


def trace_direct(ctx: FieldContext, x: FieldElement) -> int:
    """Tr_1^m(x) as the literal sum of the Frobenius conjugates x^{p^i}."""
    total = 0
    for i in range(ctx.m):
        total = field_add(ctx, total, field_pow(ctx, x, ctx.p**i))
    if total >= ctx.p:
        raise FieldValidationError(f"Conjugate sum of {x} is not in the prime field")
    return total


def conjugates(ctx: FieldContext, x: FieldElement) -> list:
    """The Frobenius orbit x, x^p, x^{p^2}, .. in order of first appearance."""
    orbit = [x]
    current = field_pow(ctx, x, ctx.p)
    while current != x:
        orbit.append(current)
        current = field_pow(ctx, current, ctx.p)
    return orbit


def minimal_polynomial(ctx: FieldContext, x: FieldElement) -> PrimePoly:
    """Product of (X - c) over the conjugates c of x; its degree divides m.

    :param ctx: The field
    :param x: A nonzero field element
    :return: The minimal polynomial of x over F_p
    """
    if x == 0:
        raise FieldValidationError("The minimal polynomial is only defined here for x != 0")
    coeffs = [1]
    for c in conjugates(ctx, x):
        shifted = [0] + coeffs
        scaled = [field_mul(ctx, c, value) for value in coeffs] + [0]
        coeffs = [field_sub(ctx, hi, lo) for hi, lo in zip(shifted, scaled)]
    if any(value >= ctx.p for value in coeffs):
        raise FieldValidationError(f"Minimal polynomial of {x} has coefficients outside F_{ctx.p}")
    return PrimePoly(ctx.p, tuple(coeffs))


def poly_eval(ctx: FieldContext, poly: PrimePoly, x: FieldElement) -> FieldElement:
    """Evaluate an F_p polynomial at a field element with Horner's rule."""
    result = 0
    for c in reversed(poly.coeffs):
        result = field_add(ctx, field_mul(ctx, result, x), c)
    return result


@lru_cache(maxsize=None)
def roots_of_unity(p: int) -> np.ndarray:
    """exp(2*pi*j*t/p) for t = 0..p-1; every phase lookup goes through this table."""
    roots = np.exp(2j * np.pi * np.arange(p) / p)
    roots.flags.writeable = False
    return roots


def character_sum(ctx: FieldContext, f_coeffs: dict) -> complex:
    """Sum of exp(2*pi*j*Tr(f(x))/p) over every x in GF(p^m).

    :param ctx: The field
    :param f_coeffs: Sparse polynomial, exponent -> field element coefficient
    :return: The complex character sum
    """
    q = ctx.order
    logs = np.arange(q - 1, dtype=np.int64)
    nonzero_traces = np.zeros(q - 1, dtype=np.int64)
    zero_trace = 0
    for exponent, coefficient in f_coeffs.items():
        if coefficient == 0:
            continue
        if exponent == 0:
            zero_trace += int(ctx.trace_table[coefficient])
            nonzero_traces += int(ctx.trace_table[coefficient])
            continue
        # Tr(c * x^e) at x = alpha^l is Tr(alpha^(log c + e*l))
        offsets = int(ctx.log_table[coefficient]) + exponent * logs
        nonzero_traces += ctx.power_traces[offsets % (q - 1)]
    roots = roots_of_unity(ctx.p)
    return complex(np.sum(roots[nonzero_traces % ctx.p]) + roots[zero_trace % ctx.p])


def weil_bound(ctx: FieldContext, degree: int) -> float:
    return (degree - 1) * math.sqrt(ctx.order)
