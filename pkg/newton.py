"""
Weighted Newton transformations.

Matrix-level T_k^inf(mu0, A), its trace and eigenvalue identities, and the
weighted mean curvatures H_{k,f}. Exact mode works on numpy object arrays of
Fractions and requires A diagonal (the geometry always hands A over in a
principal frame); float mode accepts any symmetric A.
"""
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import List, Optional, Sequence

import numpy as np

import sympoly
from sympoly import Scalar, Spectrum

SYMMETRY_TOL = 1e-12
EIGEN_RESIDUAL_TOL = 1e-10


class ContractViolation(Exception):
    """Operator does not satisfy the structural contract (symmetric / diagonal)."""
    pass


@dataclass(frozen=True)
class Endomorphism:
    """Symmetric n x n operator in an orthonormal tangent frame."""
    entries: np.ndarray

    def __post_init__(self):
        entries = self.entries
        if entries.ndim != 2 or entries.shape[0] != entries.shape[1]:
            raise ContractViolation(f"expected a square matrix, got shape {entries.shape}")
        if self.exact:
            symmetric = all(entries[i, j] == entries[j, i]
                            for i in range(self.dim) for j in range(i + 1, self.dim))
        else:
            scale = max(1.0, float(np.max(np.abs(entries))))
            symmetric = bool(np.all(np.abs(entries - entries.T) <= SYMMETRY_TOL * scale))
        if not symmetric:
            raise ContractViolation("operator is not symmetric")

    @classmethod
    def from_rows(cls, rows: Sequence[Sequence]) -> "Endomorphism":
        values = [[sympoly.to_scalar(x) for x in row] for row in rows]
        exact = all(isinstance(x, Fraction) for row in values for x in row)
        if exact:
            return cls(np.array(values, dtype=object))
        return cls(np.array([[float(x) for x in row] for row in values], dtype=float))

    @classmethod
    def diagonal(cls, values: Sequence) -> "Endomorphism":
        values = [sympoly.to_scalar(x) for x in values]
        n = len(values)
        if all(isinstance(x, Fraction) for x in values):
            entries = np.array([[Fraction(0)] * n for _ in range(n)], dtype=object)
        else:
            entries = np.zeros((n, n))
        for i, x in enumerate(values):
            entries[i, i] = x
        return cls(entries)

    @classmethod
    def identity(cls, n: int, exact: bool = True) -> "Endomorphism":
        return cls.diagonal([Fraction(1) if exact else 1.0] * n)

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    @property
    def exact(self) -> bool:
        return self.entries.dtype == object

    def is_diagonal(self) -> bool:
        return all(self.entries[i, j] == 0
                   for i in range(self.dim) for j in range(self.dim) if i != j)

    def diagonal_values(self) -> List[Scalar]:
        return [self.entries[i, i] for i in range(self.dim)]

    def spectrum(self) -> List[Scalar]:
        """Eigenvalues; exact mode reads the diagonal, float mode uses eigh with a residual check."""
        if self.exact:
            if not self.is_diagonal():
                raise ContractViolation("exact mode requires a diagonal operator")
            return self.diagonal_values()
        values, vectors = np.linalg.eigh(self.entries)
        scale = max(1.0, float(np.max(np.abs(self.entries))))
        residual = np.linalg.norm(self.entries @ vectors - vectors * values, axis=0)
        if np.any(residual > EIGEN_RESIDUAL_TOL * scale):
            raise ContractViolation(f"eigen-solver residual {residual.max():.3e} above tolerance")
        return [float(x) for x in values]

    def __matmul__(self, other: "Endomorphism") -> np.ndarray:
        return self.entries.dot(other.entries)

    def trace(self) -> Scalar:
        return sum((self.entries[i, i] for i in range(self.dim)), _zero(self.exact))


def _zero(exact: bool) -> Scalar:
    return Fraction(0) if exact else 0.0


def _identity_entries(n: int, exact: bool) -> np.ndarray:
    if exact:
        entries = np.array([[Fraction(0)] * n for _ in range(n)], dtype=object)
        for i in range(n):
            entries[i, i] = Fraction(1)
        return entries
    return np.eye(n)


def _symmetrize(entries: np.ndarray, exact: bool) -> np.ndarray:
    if exact:
        return entries
    return 0.5 * (entries + entries.T)


@dataclass(frozen=True)
class NewtonChain:
    mu0: Scalar
    A: Endomorphism
    k_max: int
    T: List[Endomorphism]
    sigma: List[Scalar]


@dataclass(frozen=True)
class CurvatureVector:
    """H_{k,f} for k = 0..n with the binomials and flux constants."""
    n: int
    H: List[Scalar]
    binomials: List[int]

    def c(self, k: int) -> int:
        """c_k = (n - k) C(n, k)."""
        return (self.n - k) * math.comb(self.n, k)

    def c_prev_printed(self, k: int) -> int:
        """The constant printed in front of the weighted H_{k-1,f} term: n C(n, k-1)."""
        return self.n * math.comb(self.n, k - 1)

    def c_prev_trace(self, k: int) -> int:
        """The constant the trace identity yields for that term: C(n, k-1)."""
        return math.comb(self.n, k - 1)


def _mode_spectrum(mu0, A: Endomorphism) -> Spectrum:
    mu0 = sympoly.to_scalar(mu0)
    eig = A.spectrum()
    if not A.exact:
        mu0 = float(mu0)
    return Spectrum(mu0, tuple(eig))


def _check_order(k: int, n: int, name: str = "k"):
    if not 0 <= k <= n:
        raise sympoly.DomainError(f"{name}={k} outside 0..{n}")


def sigma_values(mu0, A: Endomorphism, k_max: int) -> List[Scalar]:
    """sigma_0^inf..sigma_{k_max}^inf computed once from the spectrum of A."""
    s = _mode_spectrum(mu0, A)
    return sympoly.sigma_inf_closed_all(s, k_max)


def newton_chain(mu0, A: Endomorphism, k_max: int) -> NewtonChain:
    """T_0 = I, T_k = sigma_k I - A T_{k-1}, with the sigma's shared by the whole chain."""
    n = A.dim
    _check_order(k_max, n, "k_max")
    sigma = sigma_values(mu0, A, k_max + 1)
    exact = A.exact
    if exact:
        # exact operators are diagonal, so the chain stays diagonal
        a = A.diagonal_values()
        t = [Fraction(1)] * n
        chain = [Endomorphism.diagonal(t)]
        for k in range(1, k_max + 1):
            t = [sigma[k] - a_i * t_i for a_i, t_i in zip(a, t)]
            chain.append(Endomorphism.diagonal(t))
        return NewtonChain(mu0=sympoly.to_scalar(mu0), A=A, k_max=k_max, T=chain, sigma=sigma)
    identity = _identity_entries(n, exact)
    chain = [Endomorphism(identity)]
    for k in range(1, k_max + 1):
        entries = identity * sigma[k] - A.entries.dot(chain[-1].entries)
        chain.append(Endomorphism(_symmetrize(entries, exact)))
    return NewtonChain(mu0=sympoly.to_scalar(mu0), A=A, k_max=k_max, T=chain, sigma=sigma)


def newton_explicit(mu0, A: Endomorphism, k: int) -> Endomorphism:
    """sum_{j=0}^{k} (-1)^j sigma_{k-j}^inf A^j, powers by repeated multiplication."""
    n = A.dim
    _check_order(k, n)
    sigma = sigma_values(mu0, A, k)
    exact = A.exact
    if exact:
        values = []
        for a_i in A.diagonal_values():
            values.append(sum(((-1) ** j * sigma[k - j] * a_i ** j for j in range(k + 1)), Fraction(0)))
        return Endomorphism.diagonal(values)
    power = _identity_entries(n, exact)
    total = power * sigma[k]
    for j in range(1, k + 1):
        power = power.dot(A.entries)
        term = power * sigma[k - j]
        total = total - term if j % 2 else total + term
    return Endomorphism(_symmetrize(total, exact))


def trace_identity_residual(mu0, A: Endomorphism, k: int) -> Scalar:
    """trace(A T_k) - ((k+1) sigma_{k+1} - mu0 sigma_k)."""
    n = A.dim
    if not 0 <= k <= n - 1:
        raise sympoly.DomainError(f"k={k} outside 0..{n - 1}")
    chain = newton_chain(mu0, A, k)
    lhs = _trace(A.entries.dot(chain.T[k].entries), A.exact)
    mu0 = sympoly.to_scalar(mu0) if A.exact else float(mu0)
    rhs = (k + 1) * chain.sigma[k + 1] - mu0 * chain.sigma[k]
    return lhs - rhs


def trace_newton_residual(mu0, A: Endomorphism, k: int) -> Scalar:
    """trace(T_k) - ((n-k) sigma_k + mu0 sigma_{k-1})."""
    n = A.dim
    _check_order(k, n)
    chain = newton_chain(mu0, A, k)
    mu0 = sympoly.to_scalar(mu0) if A.exact else float(mu0)
    previous = chain.sigma[k - 1] if k >= 1 else _zero(A.exact)
    return chain.T[k].trace() - ((n - k) * chain.sigma[k] + mu0 * previous)


def _trace(entries: np.ndarray, exact: bool) -> Scalar:
    return sum((entries[i, i] for i in range(entries.shape[0])), _zero(exact))


def eigenstructure_residual(mu0, d: Endomorphism, k: int) -> List[Scalar]:
    """(T_k)_ii - sigma_{k,i}^inf for a diagonal operator."""
    if not d.is_diagonal():
        raise sympoly.DomainError("eigenstructure_residual needs a diagonal operator")
    n = d.dim
    _check_order(k, n)
    T = newton_chain(mu0, d, k).T[k]
    s = _mode_spectrum(mu0, d)
    return [T.entries[i, i] - sympoly.sigma_inf_reduced(s, k, i + 1) for i in range(n)]


def weighted_mean_curvature(mu0, A: Endomorphism, k: int) -> Scalar:
    """H_{k,f} = sigma_k^inf / C(n, k)."""
    n = A.dim
    _check_order(k, n)
    s = _mode_spectrum(mu0, A)
    return sympoly.sigma_inf_closed(s, k) / math.comb(n, k)


def curvature_vector(mu0, A: Endomorphism) -> CurvatureVector:
    n = A.dim
    s = _mode_spectrum(mu0, A)
    binomials = [math.comb(n, k) for k in range(n + 1)]
    H = [sympoly.sigma_inf_closed(s, k) / binomials[k] for k in range(n + 1)]
    return CurvatureVector(n=n, H=H, binomials=binomials)


def minimality_test(mu0, A: Endomorphism, r: int, tol: float = 1e-10) -> bool:
    """sigma_r^inf-minimality: |H_{r,f}| <= tol."""
    return abs(weighted_mean_curvature(mu0, A, r)) <= tol


# Pointwise float kernels on stacks of coordinate operators

def newton_power_sum(sigma: np.ndarray, A: np.ndarray, k: int,
                     identity: Optional[np.ndarray] = None) -> np.ndarray:
    """sum_j (-1)^j sigma[..., k-j] A^j for stacked (..., n, n) operators."""
    n = A.shape[-1]
    power = np.broadcast_to(np.eye(n) if identity is None else identity, A.shape).copy()
    total = sigma[..., k, None, None] * power
    for j in range(1, k + 1):
        power = power @ A
        total = total + (-1) ** j * sigma[..., k - j, None, None] * power
    return total
