"""First zeros of Bessel functions of the first kind, without special-function libraries."""

from __future__ import annotations

import math


def bessel_j(nu: float, x: float, tol: float = 1e-17) -> float:
    """J_nu(x) from the ascending series, for nu >= 0 and moderate x."""
    if x == 0.0:
        return 1.0 if nu == 0 else 0.0
    half = 0.5 * x
    term = half**nu / math.gamma(nu + 1.0)
    terms = [term]
    q = -half * half
    m = 0
    while True:
        m += 1
        term *= q / (m * (m + nu))
        terms.append(term)
        if abs(term) < tol * abs(terms[0]) and m > half:
            break
    return math.fsum(terms)


def bessel_zero(nu: float, rtol: float = 1e-15) -> float:
    """First positive zero j_{nu,1}, by bisection bracketed in (nu + 1, nu + 4)."""
    if nu < 0:
        raise ValueError("order must be nonnegative")
    a, b = nu + 1.0, nu + 4.0
    fa = bessel_j(nu, a)
    while fa <= 0:
        a *= 0.5
        fa = bessel_j(nu, a)
    fb = bessel_j(nu, b)
    while fb > 0:
        b += 1.0
        fb = bessel_j(nu, b)
    while b - a > rtol * b:
        mid = 0.5 * (a + b)
        fm = bessel_j(nu, mid)
        if fm > 0:
            a = mid
        else:
            b = mid
    return 0.5 * (a + b)
