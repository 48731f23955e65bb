"""Approximate eigenfunctions of the symmetric open-boundary process and the
Wilson-type mixing lower bound built from them.

Both test functions are affine in the configuration, and at p = 1/2 the
generator maps each occupation variable to an affine function.  The
residual (-L)F - lambda F is therefore affine too; its per-site coefficients
and constant are computed exactly (in 200-bit arithmetic), and the sup over
configurations follows from the signed coefficient sums.

Conventions fixed here, with D = 1/2 - 1/(2(beta+delta)):

* two-sided: M = N + C - D, so that phi vanishes half a step beyond each
  end at the distance the boundary rates call for; the constant term of
  Phi is chosen so that the residual has no constant part;
* one-sided: the reflected values satisfy phi(x) = phi(2N - x) and the
  constant term is phi(N) (beta - delta) / lambda.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace

import gmpy2
import numpy as np
from gmpy2 import mpfr

from ..engine.ensemble import as_rates

PRECISION_BITS = 200


class WilsonVariant(str, enum.Enum):
    TWO_SIDED = "TwoSided"
    ONE_SIDED = "OneSided"


@dataclass(frozen=True)
class AffineFunction:
    """F(eta) = sum_x weights[x-1] eta(x) + constant, in high precision."""

    weights: np.ndarray  # object array of mpfr
    constant: object
    lam: object
    length: object  # M (two-sided) or N - D (one-sided)

    def __call__(self, sites) -> float:
        total = self.constant
        for w, s in zip(self.weights, sites):
            if s:
                total = total + w
        return float(total)


@dataclass(frozen=True)
class WilsonCertificate:
    variant: WilsonVariant
    n: int
    lam: float
    c: float
    R: float
    F_inf: float
    length: float
    bulk_residual: float
    max_jump: float

    @property
    def valid(self) -> bool:
        return self.lam >= self.c > 0

    def scaled(self, factor: float) -> "WilsonCertificate":
        """The same certificate with lambda multiplied by ``factor``."""
        return replace(self, lam=self.lam * factor)


def _check_symmetric(r):
    if abs(r.p - 0.5) > 1e-15:
        raise ValueError("approximate eigenfunctions are built for p = 1/2")


def _sines(theta, shift, count):
    """sin((k + shift) theta) for k = 1..count, by the three-term recurrence."""
    out = np.empty(count, dtype=object)
    if count == 0:
        return out
    prev = gmpy2.sin(shift * theta)
    cur = gmpy2.sin((1 + shift) * theta)
    twice_cos = 2 * gmpy2.cos(theta)
    for k in range(count):
        out[k] = cur
        prev, cur = cur, twice_cos * cur - prev
    return out


def _sum(values):
    total = mpfr(0)
    for v in values:
        total += v
    return total


def affine_residual(f: AffineFunction, params, n: int):
    """Coefficients rho and constant r0 with (-L)F - lam F = rho . eta + r0."""
    r = as_rates(params)
    _check_symmetric(r)
    with gmpy2.context(gmpy2.get_context(), precision=PRECISION_BITS):
        return _affine_residual(f, r, n)


def _affine_residual(f, r, n):
    w = f.weights
    half = mpfr("0.5")
    # coordinate generator L eta(y) = sum_z A[y, z] eta(z) + b[y]
    diag = np.empty(n, dtype=object)
    for y in range(n):
        diag[y] = -half * ((y > 0) + (y < n - 1))
    diag[0] -= r.alpha + r.gamma
    diag[n - 1] -= r.beta + r.delta
    atw = diag * w
    if n > 1:
        atw[1:] += half * w[:-1]
        atw[:-1] += half * w[1:]
    rho = -atw - f.lam * w
    r0 = -(r.alpha * w[0] + r.delta * w[n - 1]) - f.lam * f.constant
    return rho, r0


def two_sided_function(params, n: int) -> AffineFunction:
    r = as_rates(params)
    _check_symmetric(r)
    if max(r.alpha, r.gamma) <= 0 or max(r.beta, r.delta) <= 0:
        raise ValueError("two-sided construction needs max(alpha,gamma) > 0 and max(beta,delta) > 0")
    with gmpy2.context(gmpy2.get_context(), precision=PRECISION_BITS):
        C = 1 / (2 * mpfr(r.alpha + r.gamma)) - mpfr("0.5")
        D = mpfr("0.5") - 1 / (2 * mpfr(r.beta + r.delta))
        M = n + C - D
        theta = gmpy2.const_pi() / M
        lam = 1 - gmpy2.cos(theta)
        phi = _sines(theta, C - mpfr("0.5"), n)
        weights = 2 * phi
        constant = -(r.alpha * weights[0] + r.delta * weights[n - 1]) / lam
        return AffineFunction(weights, constant, lam, M)


def one_sided_function(params, n: int) -> AffineFunction:
    r = as_rates(params)
    _check_symmetric(r)
    if max(r.alpha, r.gamma) > 0 or max(r.beta, r.delta) <= 0:
        raise ValueError("one-sided construction needs alpha = gamma = 0 < max(beta, delta)")
    if n < 2:
        raise ValueError("one-sided construction needs N >= 2")
    s = r.beta + r.delta
    with gmpy2.context(gmpy2.get_context(), precision=PRECISION_BITS):
        D = mpfr("0.5") - 1 / (2 * mpfr(s))
        length = n - D
        theta = gmpy2.const_pi() / (2 * length)
        lam = 1 - gmpy2.cos(theta)
        phi = _sines(theta, mpfr(0), n - 1)  # x = 1..N-1
        phi_n = phi[-1] / (s - lam)
        # height h(x) = sum_{i<=x} (2 xi(i) - 1) over the doubled word, and
        # eta(y) enters h(x) for y <= x <= 2N - y with weight 2
        tails = np.empty(n - 1, dtype=object)
        acc = mpfr(0)
        for i in range(n - 2, -1, -1):
            acc += phi[i]
            tails[i] = acc
        weights = np.empty(n, dtype=object)
        weights[: n - 1] = 2 * (2 * tails + phi_n)
        weights[n - 1] = 2 * phi_n
        # F(all empty): h(x) = -min(x, 2N - x)
        moment = _sum(mpfr(x + 1) * phi[x] for x in range(n - 1))
        constant = -2 * moment - n * phi_n + phi_n * (r.beta - r.delta) / lam
        return AffineFunction(weights, constant, lam, length)


def approximate_eigenfunction(params, n: int, variant) -> AffineFunction:
    variant = WilsonVariant(variant)
    if variant is WilsonVariant.TWO_SIDED:
        return two_sided_function(params, n)
    return one_sided_function(params, n)


def wilson_residual(params, n: int, variant) -> WilsonCertificate:
    """Certificate (lambda, c, R, ||F||_inf) for the approximate eigenfunction."""
    variant = WilsonVariant(variant)
    r = as_rates(params)
    with gmpy2.context(gmpy2.get_context(), precision=PRECISION_BITS):
        f = approximate_eigenfunction(r, n, variant)
        rho, r0 = _affine_residual(f, r, n)
        pos = _sum(x for x in rho if x > 0)
        neg = _sum(x for x in rho if x < 0)
        c = max(abs(r0 + pos), abs(r0 + neg))
        bulk = max((abs(x) for x in rho[1 : n - 1]), default=mpfr(0))
        w = f.weights
        jumps = [abs(w[i] - w[i + 1]) for i in range(n - 1)]
        if r.alpha + r.gamma > 0:
            jumps.append(abs(w[0]))
        if r.beta + r.delta > 0:
            jumps.append(abs(w[n - 1]))
        jump = max(jumps)
        rate = n - 1 + r.alpha + r.beta + r.gamma + r.delta
        R = rate * jump * jump
        F = max(abs(f.constant), abs(f.constant + _sum(w)))
        return WilsonCertificate(variant, n, float(f.lam), float(c), float(R), float(F), float(f.length),
                                 float(bulk), float(jump))


def wilson_lower_bound(cert: WilsonCertificate, epsilon: float) -> float:
    """Lower bound on t_mix(1 - epsilon) from the certificate."""
    if not 0 < epsilon < 1:
        raise ValueError("epsilon must lie in (0, 1)")
    if not cert.valid:
        raise ValueError(f"invalid certificate: need lambda >= c > 0 (lambda={cert.lam}, c={cert.c})")
    lam, c, F = cert.lam, cert.c, cert.F_inf
    inner = 16.0 * (3.0 * c * F + max(cert.R, c)) / (lam * epsilon)
    return math.log(F) / lam - math.log(inner) / (2.0 * lam)


def leading_term(cert: WilsonCertificate) -> float:
    return math.log(cert.F_inf) / cert.lam
