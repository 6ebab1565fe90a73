"""
Symmetric-function engine for curvflux.

Classical, weighted and binomially-shifted elementary symmetric functions of a
spectrum. Every scalar routine is generic over two modes: exact (ints and
fractions.Fraction, no rounding) and float. The *_array kernels are the
vectorized float path used pointwise on quadrature grids.
"""
import math
import numbers
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Dict, List, Sequence, Tuple, Union

import numpy as np

Scalar = Union[Fraction, float]

FLOAT_TOL = 1e-12


class DomainError(ValueError):
    """Index or range violation of a symmetric function."""
    pass


def to_scalar(value) -> Scalar:
    """Coerce ints/Fractions to Fraction and every other real to float."""
    if isinstance(value, bool):
        raise DomainError("booleans are not scalars")
    if isinstance(value, Fraction):
        return value
    if isinstance(value, numbers.Integral):
        return Fraction(int(value))
    if isinstance(value, numbers.Real):
        value = float(value)
        if not math.isfinite(value):
            raise DomainError(f"non-finite scalar: {value}")
        return value
    raise DomainError(f"unsupported scalar type: {type(value).__name__}")


def is_exact(value) -> bool:
    return isinstance(value, (Fraction, numbers.Integral)) and not isinstance(value, bool)


@dataclass(frozen=True)
class Spectrum:
    """Weight eigenvalue mu0 plus the n principal curvatures.

    The shifted spectrum (mu_i + lam) stands for the torsional second form
    B + lam*I, so no separate type is kept for it.
    """
    mu0: Scalar
    mu: Tuple[Scalar, ...]
    _power_sums: Dict[int, Scalar] = field(default_factory=dict, init=False,
                                           repr=False, compare=False, hash=False)

    def __post_init__(self):
        if len(self.mu) < 1:
            raise DomainError("a spectrum needs n >= 1 principal curvatures")
        object.__setattr__(self, "mu0", to_scalar(self.mu0))
        object.__setattr__(self, "mu", tuple(to_scalar(x) for x in self.mu))

    @classmethod
    def of(cls, mu0, mu: Sequence) -> "Spectrum":
        return cls(mu0, tuple(mu))

    @property
    def n(self) -> int:
        return len(self.mu)

    @property
    def exact(self) -> bool:
        return isinstance(self.mu0, Fraction) and all(isinstance(x, Fraction) for x in self.mu)

    def as_float(self) -> "Spectrum":
        return Spectrum(float(self.mu0), tuple(float(x) for x in self.mu))

    def power_sum(self, i: int) -> Scalar:
        """p_i = sum_j mu_j**i over the principal curvatures (mu0 excluded), memoized."""
        if i not in self._power_sums:
            self._power_sums[i] = sum((x ** i for x in self.mu), _zero_like(self.mu0))
        return self._power_sums[i]

    def shifted(self, lam) -> "Spectrum":
        lam = to_scalar(lam)
        return Spectrum(self.mu0, tuple(x + lam for x in self.mu))

    def without(self, i: int) -> Tuple[Scalar, ...]:
        """Principal curvatures with the i-th (1-based) entry deleted."""
        if not 1 <= i <= self.n:
            raise DomainError(f"index i={i} outside 1..{self.n}")
        return self.mu[:i - 1] + self.mu[i:]


def _zero_like(x) -> Scalar:
    return Fraction(0) if isinstance(x, Fraction) else 0.0


def _one_like(x) -> Scalar:
    return Fraction(1) if isinstance(x, Fraction) else 1.0


def _check_k(k: int):
    if k < 0:
        raise DomainError(f"order k={k} must be >= 0")


@lru_cache(maxsize=None)
def _factorial(j: int) -> int:
    return math.factorial(j)


def elementary_values(mu: Sequence, k: int, like=None) -> List[Scalar]:
    """sigma_0..sigma_k of the list in one pass; entries beyond n are zero."""
    _check_k(k)
    values = [to_scalar(x) for x in mu]
    seed = values[0] if values else (Fraction(0) if like is None else like)
    e = [_one_like(seed)] + [_zero_like(seed)] * k
    for count, x in enumerate(values, 1):
        for j in range(min(k, count), 0, -1):
            e[j] = e[j] + x * e[j - 1]
    return e


def sigma_k(mu: Sequence, k: int) -> Scalar:
    """Classical elementary symmetric function; 1 for k=0 and 0 for k > n."""
    return elementary_values(mu, k)[k]


def _weighted_from_elementary(mu0: Scalar, e: List[Scalar], k: int) -> Scalar:
    total = _zero_like(mu0)
    for j in range(k + 1):
        total += mu0 ** j / _factorial(j) * e[k - j]
    return total


def sigma_inf_closed(s: Spectrum, k: int) -> Scalar:
    """sum_{j=0}^{k} mu0**j / j! * sigma_{k-j}(mu)."""
    return _weighted_from_elementary(s.mu0, elementary_values(s.mu, k, s.mu0), k)


def sigma_inf_closed_all(s: Spectrum, k_max: int) -> List[Scalar]:
    """sigma_0^inf..sigma_{k_max}^inf from a single elementary pass."""
    e = elementary_values(s.mu, k_max, s.mu0)
    return [_weighted_from_elementary(s.mu0, e, m) for m in range(k_max + 1)]


def _sigma_inf_recursion(s: Spectrum, k: int, exponent_shift: int) -> Scalar:
    _check_k(k)
    sigmas = [_one_like(s.mu0)]
    lead = s.mu0 + s.power_sum(1)
    for m in range(1, k + 1):
        acc = sigmas[m - 1] * lead
        for i in range(1, m):
            term = sigmas[m - 1 - i] * s.power_sum(i + exponent_shift)
            acc = acc - term if i % 2 else acc + term
        sigmas.append(acc / m)
    return sigmas[k]


def sigma_inf_recursive(s: Spectrum, k: int) -> Scalar:
    """k sigma_k = sigma_{k-1} (mu0 + p_1) + sum_{i=1}^{k-1} (-1)^i sigma_{k-1-i} p_{i+1}.

    Newton-identity form of the weighted recursion; p_i are cached power sums of
    the principal curvatures, so one call costs O(k*n).
    """
    return _sigma_inf_recursion(s, k, 1)


def sigma_inf_recursive_printed(s: Spectrum, k: int) -> Scalar:
    """Same recursion with the literal power p_i in the inner sum.

    Kept for the algebra audit only; it departs from the closed form from k=2 on.
    """
    return _sigma_inf_recursion(s, k, 0)


def sigma_inf_shift(s: Spectrum, mu1, k: int) -> Scalar:
    """sum_{j=0}^{k} mu1**j / j! * sigma_{k-j}^inf(mu0, mu); equals sigma_k^inf(mu0 + mu1, mu)."""
    _check_k(k)
    mu1 = to_scalar(mu1)
    weighted = sigma_inf_closed_all(s, k)
    return _weighted_from_elementary(mu1, weighted, k) + _zero_like(mu1 + s.mu0)


def sigma_tilde(lam, mu: Sequence, k: int) -> Scalar:
    """sum_{j=0}^{k} C(n-k+j, j) lam**j sigma_{k-j}(mu); equals sigma_k(mu_i + lam)."""
    n = len(mu)
    if not 0 <= k <= n:
        raise DomainError(f"sigma_tilde needs 0 <= k <= n, got k={k}, n={n}")
    lam = to_scalar(lam)
    total = _zero_like(lam)
    for j in range(k + 1):
        total += math.comb(n - k + j, j) * lam ** j * sigma_k(mu, k - j)
    return total


def coefficient_ratio(n: int, k: int, j: int) -> Fraction:
    """Ratio of the lam**j coefficient of the shifted expansion to the mu0**j one of the weighted one."""
    if not 0 <= j <= k <= n:
        raise DomainError(f"coefficient_ratio needs 0 <= j <= k <= n, got n={n}, k={k}, j={j}")
    return Fraction(math.comb(n - k + j, j) * _factorial(j))


def falling_product(n: int, k: int, j: int) -> int:
    """(n-k+1)(n-k+2)...(n-k+j)."""
    return math.prod(n - k + t for t in range(1, j + 1))


def sigma_inf_reduced(s: Spectrum, k: int, i: int) -> Scalar:
    """sigma_k^inf on the spectrum with mu_i deleted (the i-th eigenvalue of T_k^inf)."""
    _check_k(k)
    rest = s.without(i)
    if not rest:
        return sigma_inf_closed_values(s.mu0, (), k)
    return sigma_inf_closed(Spectrum(s.mu0, rest), k)


def sigma_inf_closed_values(mu0, mu: Sequence, k: int) -> Scalar:
    """Closed form on a possibly empty curvature list."""
    mu0 = to_scalar(mu0)
    return _weighted_from_elementary(mu0, elementary_values(mu, k, mu0), k)


def reduced_recursion_residual(s: Spectrum, k: int, i: int) -> Scalar:
    """sigma_{k,i} - (sigma_k - mu_i sigma_{k-1,i}); zero in exact mode."""
    _check_k(k)
    previous = sigma_inf_reduced(s, k - 1, i) if k >= 1 else _zero_like(s.mu0)
    return sigma_inf_reduced(s, k, i) - (sigma_inf_closed(s, k) - s.mu[i - 1] * previous)


# Vectorized float kernels

def elementary_symmetric_array(mu: np.ndarray, k_max: int) -> np.ndarray:
    """sigma_0..sigma_{k_max} for a stack of spectra; mu has shape (..., n)."""
    mu = np.asarray(mu, dtype=float)
    e = np.zeros(mu.shape[:-1] + (k_max + 1,))
    e[..., 0] = 1.0
    for count in range(mu.shape[-1]):
        x = mu[..., count]
        for j in range(min(k_max, count + 1), 0, -1):
            e[..., j] = e[..., j] + x * e[..., j - 1]
    return e


def sigma_inf_array(mu0: np.ndarray, mu: np.ndarray, k_max: int) -> np.ndarray:
    """sigma_0^inf..sigma_{k_max}^inf for stacks; mu0 shape (...), mu shape (..., n)."""
    e = elementary_symmetric_array(mu, k_max)
    mu0 = np.asarray(mu0, dtype=float)[..., None]
    out = np.zeros_like(e)
    for k in range(k_max + 1):
        for j in range(k + 1):
            out[..., k] += mu0[..., 0] ** j / _factorial(j) * e[..., k - j]
    return out


def condition_scale(s: Spectrum, k: int) -> float:
    """sigma_k^inf of the absolute values; bounds the size of every term in the sums."""
    return float(sigma_inf_closed(Spectrum(abs(s.mu0), tuple(abs(x) for x in s.mu)), k))


def random_rational(rng, bound: int = 10, denominator: int = 12) -> Fraction:
    """Rational in [-bound, bound] with denominator at most `denominator`; rng is a numpy Generator."""
    den = int(rng.integers(1, denominator + 1))
    num = int(rng.integers(-bound * den, bound * den + 1))
    return Fraction(num, den)


def random_spectrum(rng, n: int, bound: int = 10, denominator: int = 12) -> Spectrum:
    return Spectrum(random_rational(rng, bound, denominator),
                    tuple(random_rational(rng, bound, denominator) for _ in range(n)))
