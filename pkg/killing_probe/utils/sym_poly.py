"""
Homogeneous polynomials of degree d on R^n (the spaces S^d)

Basis convention: plain monomials v^alpha without multinomial weights, in
graded-lex order. For n=2, d=3 the basis is (x^3, x^2 y, x y^2, y^3); for
n=3, d=2 it is (x^2, xy, xz, y^2, yz, z^2).
"""

import itertools
from dataclasses import dataclass, field
from functools import lru_cache
from math import comb
from typing import Dict, List, Tuple

import numpy as np

Exponent = Tuple[int, ...]


@lru_cache(maxsize=None)
def _basis(n: int, d: int) -> Tuple[Exponent, ...]:
    basis = []
    for combo in itertools.combinations_with_replacement(range(n), d):
        exponent = [0] * n
        for var in combo:
            exponent[var] += 1
        basis.append(tuple(exponent))
    return tuple(basis)


@dataclass(frozen=True)
class SymPolySpace:
    """The space S^d of homogeneous degree-d polynomials in n variables."""

    n: int
    d: int
    basis: Tuple[Exponent, ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be at least 1")
        if self.d < 0:
            raise ValueError("d must be non-negative")
        object.__setattr__(self, "basis", _basis(self.n, self.d))

    @property
    def N(self) -> int:
        return comb(self.n + self.d - 1, self.d)

    @property
    def exponents(self) -> np.ndarray:
        return np.array(self.basis, dtype=int).reshape(len(self.basis), self.n)

    def index(self, exponent: Exponent) -> int:
        return _index_map(self.n, self.d)[tuple(exponent)]

    def element(self, coeffs) -> "SymPolyElement":
        return SymPolyElement(self, np.asarray(coeffs, dtype=float))

    def zero(self) -> "SymPolyElement":
        return self.element(np.zeros(self.N))

    def multiply(self, p: "SymPolyElement", q: "SymPolyElement") -> "SymPolyElement":
        """Product of p in S^a and q in S^b as an element of S^(a+b)."""
        if p.space.n != q.space.n:
            raise ValueError("factors live in different dimensions")
        target = SymPolySpace(self.n, p.space.d + q.space.d)
        product = _multiply_dicts(p.as_dict(), q.as_dict())
        return target.from_dict(product)

    def from_dict(self, terms: Dict[Exponent, float]) -> "SymPolyElement":
        coeffs = np.zeros(self.N)
        lookup = _index_map(self.n, self.d)
        for exponent, value in terms.items():
            coeffs[lookup[exponent]] += value
        return self.element(coeffs)


@lru_cache(maxsize=None)
def _index_map(n: int, d: int) -> Dict[Exponent, int]:
    return {exponent: i for i, exponent in enumerate(_basis(n, d))}


@dataclass(frozen=True)
class SymPolyElement:
    """A polynomial in S^d stored as its coefficient vector in basis order."""

    space: SymPolySpace
    coeffs: np.ndarray

    def __post_init__(self):
        if self.coeffs.shape != (self.space.N,):
            raise ValueError(
                f"coefficient vector has shape {self.coeffs.shape}, expected ({self.space.N},)"
            )

    def eval(self, v) -> np.ndarray:
        return veronese(self.space, v) @ self.coeffs

    def as_dict(self) -> Dict[Exponent, float]:
        return {e: float(c) for e, c in zip(self.space.basis, self.coeffs) if c != 0.0}

    def __add__(self, other: "SymPolyElement") -> "SymPolyElement":
        return SymPolyElement(self.space, self.coeffs + other.coeffs)

    def __sub__(self, other: "SymPolyElement") -> "SymPolyElement":
        return SymPolyElement(self.space, self.coeffs - other.coeffs)

    def __mul__(self, scalar: float) -> "SymPolyElement":
        return SymPolyElement(self.space, self.coeffs * float(scalar))

    __rmul__ = __mul__


def _multiply_dicts(a: Dict[Exponent, float], b: Dict[Exponent, float]) -> Dict[Exponent, float]:
    out: Dict[Exponent, float] = {}
    for ea, ca in a.items():
        for eb, cb in b.items():
            key = tuple(x + y for x, y in zip(ea, eb))
            out[key] = out.get(key, 0.0) + ca * cb
    return out


def _linear_form_product(forms: List[np.ndarray], n: int) -> Dict[Exponent, float]:
    """Expand prod_k (forms[k] . v) into monomials."""
    poly: Dict[Exponent, float] = {(0,) * n: 1.0}
    for form in forms:
        nxt: Dict[Exponent, float] = {}
        for exponent, c in poly.items():
            for j in range(n):
                if form[j] == 0.0:
                    continue
                key = list(exponent)
                key[j] += 1
                key = tuple(key)
                nxt[key] = nxt.get(key, 0.0) + c * form[j]
        poly = nxt
    return poly


def veronese(space: SymPolySpace, v) -> np.ndarray:
    """Monomial vector (v^alpha) in basis order; batches over leading axes."""
    v = np.asarray(v, dtype=float)
    if v.shape[-1] != space.n:
        raise ValueError(f"expected vectors of length {space.n}, got shape {v.shape}")
    return np.prod(v[..., None, :] ** space.exponents, axis=-1)


def veronese_jacobian(space: SymPolySpace, v) -> np.ndarray:
    """Derivatives d(v^alpha)/dv_k as an (..., N, n) array."""
    v = np.asarray(v, dtype=float)
    exps = space.exponents
    jac = np.zeros(v.shape[:-1] + (space.N, space.n))
    for k in range(space.n):
        lowered = exps.copy()
        lowered[:, k] = np.maximum(lowered[:, k] - 1, 0)
        jac[..., k] = exps[:, k] * np.prod(v[..., None, :] ** lowered, axis=-1)
    return jac


def veronese_matrix(space: SymPolySpace, vectors) -> np.ndarray:
    vectors = np.asarray(vectors, dtype=float).reshape(-1, space.n)
    return veronese(space, vectors)


def is_decisive(space: SymPolySpace, vectors, cond_max: float) -> Tuple[bool, float]:
    """Whether N vectors determine every polynomial of S^d, with the 2-norm condition number."""
    matrix = veronese_matrix(space, vectors)
    if matrix.shape != (space.N, space.N):
        raise ValueError(f"need exactly {space.N} vectors, got {matrix.shape[0]}")
    with np.errstate(divide="ignore", invalid="ignore"):
        cond = float(np.linalg.cond(matrix))
    if not np.isfinite(cond):
        return False, float("inf")
    return cond <= cond_max, cond


def induced_map(space: SymPolySpace, sigma) -> np.ndarray:
    """Matrix M with eval(M p, v) = eval(p, sigma^T v) for all p, v."""
    sigma = np.asarray(sigma, dtype=float)
    n = space.n
    lookup = _index_map(n, space.d)
    matrix = np.zeros((space.N, space.N))
    for col, exponent in enumerate(space.basis):
        forms = []
        for i, power in enumerate(exponent):
            forms.extend([sigma[:, i]] * power)
        for term, c in _linear_form_product(forms, n).items():
            matrix[lookup[term], col] += c
    return matrix


def quadratic_form_element(g) -> SymPolyElement:
    """The polynomial v -> 1/2 v^T g v in S^2."""
    g = np.asarray(g, dtype=float)
    n = g.shape[0]
    space = SymPolySpace(n, 2)
    terms: Dict[Exponent, float] = {}
    for i in range(n):
        for j in range(i, n):
            exponent = [0] * n
            exponent[i] += 1
            exponent[j] += 1
            terms[tuple(exponent)] = 0.5 * g[i, i] if i == j else 0.5 * (g[i, j] + g[j, i])
    return space.from_dict(terms)


def power_element(p: SymPolyElement, q: int) -> SymPolyElement:
    n = p.space.n
    result: Dict[Exponent, float] = {(0,) * n: 1.0}
    base = p.as_dict()
    for _ in range(q):
        result = _multiply_dicts(result, base)
    return SymPolySpace(n, p.space.d * q).from_dict(result)


def hamiltonian_power_restriction(m, x, q: int) -> SymPolyElement:
    """(1/2 g_ij(x) v^i v^j)^q expanded in the monomial basis of S^(2q)."""
    from killing_probe.utils.metric_model import eval_metric

    return power_element(quadratic_form_element(eval_metric(m, x)), q)


def frame_hamiltonian_power(n: int, signature, q: int) -> SymPolyElement:
    """H^q in orthonormal-frame coordinates, where g = diag(signature)."""
    return power_element(quadratic_form_element(np.diag(np.asarray(signature, dtype=float))), q)
