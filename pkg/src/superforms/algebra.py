"""Bigraded exterior algebra of superforms at a point.

A monomial ``dx_I ^ dxi_J`` is stored as the pair of bitmasks
``(I, J)``; its canonical order is all ``dx`` factors ascending followed by
all ``dxi`` factors ascending, and every sign below is relative to that
order.  Coefficients may be floats, numpy arrays (a batch of points sharing
one set of monomials) or :class:`~superforms.expr.Expr` nodes (form fields),
as long as they support ``+``, ``-`` and ``*``.
"""

from __future__ import annotations

import math
from functools import lru_cache
from typing import Iterable, Iterator, NamedTuple, Sequence

import numpy as np

from .expr import Expr

__all__ = [
    "MAX_DIM",
    "TAU_ALG",
    "TAU_PSD",
    "IndexPair",
    "PointSuperform",
    "DimensionError",
    "BidegreeError",
    "AsymmetricFormError",
    "volume_constant",
    "dx",
    "dxi",
    "one",
    "beta",
    "one_form",
    "from_matrix11",
    "wedge",
    "wedge_power",
    "j_map",
    "contract",
    "cup",
    "berezin_top",
    "pullback_linear",
    "trace_restricted",
    "is_positive_11",
    "is_weakly_positive",
    "to_json_terms",
    "from_json_terms",
    "factorial",
]

MAX_DIM = 12
TAU_ALG = 1e-10
TAU_PSD = 1e-9


class DimensionError(ValueError):
    pass


class BidegreeError(ValueError):
    pass


class AsymmetricFormError(ValueError):
    pass


class IndexPair(NamedTuple):
    xmask: int
    ximask: int

    @property
    def bidegree(self) -> tuple[int, int]:
        return _popcount(self.xmask), _popcount(self.ximask)


def _popcount(m: int) -> int:
    return bin(m).count("1")


def _bits(m: int) -> list[int]:
    out = []
    k = 0
    while m:
        if m & 1:
            out.append(k)
        m >>= 1
        k += 1
    return out


def _mask(indices: Iterable[int]) -> int:
    m = 0
    for i in indices:
        if m >> i & 1:
            raise ValueError(f"repeated index {i}")
        m |= 1 << i
    return m


@lru_cache(maxsize=None)
def _merge_parity(left: int, right: int) -> int:
    """Parity of the shuffle that sorts ``left`` followed by ``right``."""
    s = 0
    m = right
    while m:
        low = m & -m
        k = low.bit_length() - 1
        s += _popcount(left >> (k + 1))
        m ^= low
    return s & 1


@lru_cache(maxsize=None)
def _product_sign(x1: int, j1: int, x2: int, j2: int) -> int:
    if x1 & x2 or j1 & j2:
        return 0
    parity = _merge_parity(x1, x2) + _merge_parity(j1, j2)
    parity += _popcount(j1) * _popcount(x2)
    return -1 if parity & 1 else 1


def _is_zero(c) -> bool:
    if isinstance(c, Expr):
        return c.is_zero
    if isinstance(c, np.ndarray):
        return not np.any(c)
    return c == 0


def volume_constant(n: int) -> int:
    """``c_n = (-1)^{n(n-1)/2}``."""
    return -1 if (n * (n - 1) // 2) % 2 else 1


class PointSuperform:
    """Finite sum of monomials ``c * dx_I ^ dxi_J`` in ``dim`` variables.

    Zero coefficients are dropped on construction.  ``a ^ b`` is the wedge
    product; ``+``, ``-`` and multiplication by coefficients are termwise.
    """

    __slots__ = ("dim", "terms")

    def __init__(self, dim: int, terms=None):
        if not 0 <= dim <= MAX_DIM:
            raise DimensionError(f"dimension {dim} outside 0..{MAX_DIM}")
        self.dim = int(dim)
        clean = {}
        if terms:
            for key, c in terms.items():
                if not _is_zero(c):
                    clean[IndexPair(*key)] = c
        self.terms = clean

    # -- construction helpers --------------------------------------------
    def _new(self, terms) -> "PointSuperform":
        return type(self)(self.dim, terms)

    @classmethod
    def _result_type(cls, a: "PointSuperform", b: "PointSuperform"):
        return type(b) if issubclass(type(b), type(a)) else type(a)

    # -- container protocol ----------------------------------------------
    def __iter__(self) -> Iterator[tuple[IndexPair, object]]:
        return iter(self.terms.items())

    def __len__(self) -> int:
        return len(self.terms)

    def __bool__(self) -> bool:
        return bool(self.terms)

    def coefficient(self, xs: Sequence[int] = (), xis: Sequence[int] = ()):
        return self.terms.get(IndexPair(_mask(xs), _mask(xis)), 0.0)

    def bidegrees(self) -> set[tuple[int, int]]:
        return {k.bidegree for k in self.terms}

    @property
    def bidegree(self) -> tuple[int, int] | None:
        """The common bidegree, or ``None`` for zero / mixed forms."""
        degs = self.bidegrees()
        return degs.pop() if len(degs) == 1 else None

    def is_zero(self) -> bool:
        return not self.terms

    def homogeneous_part(self, p: int, q: int) -> "PointSuperform":
        return self._new({k: c for k, c in self.terms.items() if k.bidegree == (p, q)})

    # -- arithmetic -------------------------------------------------------
    def _check(self, other: "PointSuperform"):
        if self.dim != other.dim:
            raise DimensionError(f"dimension mismatch: {self.dim} vs {other.dim}")

    def __add__(self, other):
        if not isinstance(other, PointSuperform):
            if _is_zero(other):
                return self
            other = one(self.dim) * other
        self._check(other)
        terms = dict(self.terms)
        for k, c in other.terms.items():
            terms[k] = terms[k] + c if k in terms else c
        return PointSuperform._result_type(self, other)(self.dim, terms)

    __radd__ = __add__

    def __neg__(self):
        return self._new({k: -c for k, c in self.terms.items()})

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, PointSuperform):
            return wedge(self, other)
        return self._new({k: c * other for k, c in self.terms.items()})

    def __rmul__(self, other):
        return self._new({k: other * c for k, c in self.terms.items()})

    def __truediv__(self, other):
        return self._new({k: c / other for k, c in self.terms.items()})

    def __xor__(self, other):
        return wedge(self, other)

    # -- inspection ---------------------------------------------------------
    def matrix11(self) -> np.ndarray:
        """Coefficient matrix ``A[i, j]`` of ``sum A_ij dx_i ^ dxi_j``."""
        if any(k.bidegree != (1, 1) for k in self.terms):
            raise BidegreeError("matrix11 needs a (1,1)-form")
        shape: tuple[int, ...] = ()
        for c in self.terms.values():
            shape = np.broadcast_shapes(shape, np.shape(c))
        out = np.zeros(shape + (self.dim, self.dim))
        for k, c in self.terms.items():
            i = k.xmask.bit_length() - 1
            j = k.ximask.bit_length() - 1
            out[..., i, j] = c
        return out

    def max_abs(self) -> float:
        vals = [np.max(np.abs(c)) for c in self.terms.values()]
        return float(max(vals)) if vals else 0.0

    def allclose(self, other: "PointSuperform", tol: float = TAU_ALG) -> bool:
        return (self - other).max_abs() <= tol

    def __repr__(self) -> str:
        if not self.terms:
            return f"PointSuperform(dim={self.dim}, 0)"
        parts = []
        for k, c in sorted(self.terms.items(), key=lambda kv: (kv[0].bidegree, kv[0])):
            mono = "^".join(
                [f"dx{i + 1}" for i in _bits(k.xmask)] + [f"dxi{i + 1}" for i in _bits(k.ximask)]
            ) or "1"
            parts.append(f"{c!r}*{mono}")
        return f"{type(self).__name__}(dim={self.dim}, " + " + ".join(parts) + ")"


# ---------------------------------------------------------------------------
# basic forms


def one(n: int, c=1.0) -> PointSuperform:
    return PointSuperform(n, {(0, 0): c})


def dx(i: int, n: int, c=1.0) -> PointSuperform:
    """``c * dx_i`` with 0-based ``i``."""
    return PointSuperform(n, {(1 << i, 0): c})


def dxi(i: int, n: int, c=1.0) -> PointSuperform:
    return PointSuperform(n, {(0, 1 << i): c})


def beta(n: int) -> PointSuperform:
    """The Euclidean Kähler form ``sum_j dx_j ^ dxi_j``."""
    return PointSuperform(n, {(1 << j, 1 << j): 1.0 for j in range(n)})


def one_form(coeffs: Sequence, kind: str = "x") -> PointSuperform:
    """``sum_k coeffs[k] dx_k`` (``kind='x'``) or ``dxi_k`` (``kind='xi'``).

    ``coeffs`` may be a 1-D sequence or an array with the components on the
    last axis.
    """
    if isinstance(coeffs, np.ndarray):
        n = coeffs.shape[-1]
        comps = [coeffs[..., k] for k in range(n)]
    else:
        comps = list(coeffs)
        n = len(comps)
    if kind == "x":
        return PointSuperform(n, {(1 << k, 0): c for k, c in enumerate(comps)})
    if kind == "xi":
        return PointSuperform(n, {(0, 1 << k): c for k, c in enumerate(comps)})
    raise ValueError(f"kind must be 'x' or 'xi', not {kind!r}")


def from_matrix11(A) -> PointSuperform:
    """``sum A_ij dx_i ^ dxi_j``; ``A`` may carry leading batch axes."""
    A = np.asarray(A, dtype=float)
    n = A.shape[-1]
    return PointSuperform(
        n, {(1 << i, 1 << j): A[..., i, j] for i in range(n) for j in range(n)}
    )


# ---------------------------------------------------------------------------
# products and maps


def wedge(a: PointSuperform, b: PointSuperform) -> PointSuperform:
    if a.dim != b.dim:
        raise DimensionError(f"dimension mismatch: {a.dim} vs {b.dim}")
    out: dict[IndexPair, object] = {}
    for ka, ca in a.terms.items():
        for kb, cb in b.terms.items():
            s = _product_sign(ka.xmask, ka.ximask, kb.xmask, kb.ximask)
            if not s:
                continue
            key = (ka.xmask | kb.xmask, ka.ximask | kb.ximask)
            prod = ca * cb
            if s < 0:
                prod = -prod
            out[key] = out[key] + prod if key in out else prod
    return PointSuperform._result_type(a, b)(a.dim, out)


def wedge_power(a: PointSuperform, k: int) -> PointSuperform:
    out = one(a.dim)
    if type(a) is not PointSuperform:
        out = type(a)(a.dim, out.terms)
    for _ in range(k):
        out = wedge(out, a)
    return out


def j_map(a: PointSuperform) -> PointSuperform:
    """Multiplicative extension of ``dx_i -> dxi_i``, ``dxi_i -> -dx_i``."""
    out = {}
    for k, c in a.terms.items():
        p, q = k.bidegree
        sign = -1 if (q + p * q) % 2 else 1
        out[(k.ximask, k.xmask)] = -c if sign < 0 else c
    return a._new(out)


def _as_one_form(c, n: int) -> PointSuperform:
    if isinstance(c, PointSuperform):
        return c
    if isinstance(c, (list, tuple)):
        return one_form(c, "x")
    return one_form(np.asarray(c, dtype=float), "x")


def _contract_generator(is_xi: bool, i: int, a: PointSuperform, coeff, out: dict):
    bit = 1 << i
    for k, c in a.terms.items():
        if is_xi:
            if not k.ximask & bit:
                continue
            rest = IndexPair(k.xmask, k.ximask ^ bit)
            parity = _popcount(k.xmask) + _popcount(k.ximask & (bit - 1))
        else:
            if not k.xmask & bit:
                continue
            rest = IndexPair(k.xmask ^ bit, k.ximask)
            parity = _popcount(k.xmask & (bit - 1))
        val = coeff * c
        if parity & 1:
            val = -val
        out[rest] = out[rest] + val if rest in out else val


def contract(c, a: PointSuperform) -> PointSuperform:
    """Interior product ``c ⌟ a``, the adjoint of ``c ^ .`` in the
    orthonormal monomial basis.

    ``c`` is a form of total degree one (any mix of ``dx`` and ``dxi``) or a
    vector, which acts through its lowered ``(1,0)``-form.
    """
    c = _as_one_form(c, a.dim)
    if c.dim != a.dim:
        raise DimensionError(f"dimension mismatch: {c.dim} vs {a.dim}")
    if any(sum(k.bidegree) != 1 for k in c.terms):
        raise BidegreeError("contraction needs a form of degree 1")
    out: dict = {}
    for k, coeff in c.terms.items():
        if k.xmask:
            _contract_generator(False, k.xmask.bit_length() - 1, a, coeff, out)
        else:
            _contract_generator(True, k.ximask.bit_length() - 1, a, coeff, out)
    return PointSuperform._result_type(a, c)(a.dim, out)


def cup(F: PointSuperform, a: PointSuperform) -> PointSuperform:
    """``F ∪ a = -sum_ij F_ij dxi_j ^ (dx_i ⌟ a)`` for a (1,1)-form ``F``."""
    if any(k.bidegree != (1, 1) for k in F.terms):
        raise BidegreeError("cup needs a (1,1)-form on the left")
    if F.dim != a.dim:
        raise DimensionError(f"dimension mismatch: {F.dim} vs {a.dim}")
    n = a.dim
    out = PointSuperform._result_type(a, F)(n)
    for k, f in F.terms.items():
        i = k.xmask.bit_length() - 1
        j = k.ximask.bit_length() - 1
        inner = contract(dx(i, n), a)
        if inner:
            out = out - wedge(dxi(j, n, f), inner)
    return out


def berezin_top(a: PointSuperform, n: int | None = None):
    """Super-integral density of an (n,n)-form.

    Writes the top part as ``a0 * dx_1^dxi_1^...^dx_n^dxi_n`` and returns
    ``a0``; zero if there is no top term.
    """
    n = a.dim if n is None else n
    if n != a.dim:
        raise DimensionError(f"dimension mismatch: {n} vs {a.dim}")
    full = (1 << n) - 1
    c = a.terms.get(IndexPair(full, full))
    if c is None:
        return 0.0
    return c if volume_constant(n) > 0 else -c


def pullback_linear(L, a: PointSuperform) -> PointSuperform:
    """Pull ``a`` back along the linear map ``u -> L u``, ``R^m -> R^n``.

    ``L`` has shape ``(n, m)`` (optionally with leading batch axes); both
    ``dx_i`` and ``dxi_i`` become ``sum_k L[i, k]`` times the corresponding
    generator on ``R^m``.
    """
    L = np.asarray(L, dtype=float)
    n, m = L.shape[-2:]
    if n != a.dim:
        raise DimensionError(f"map into R^{n} cannot pull back a form on R^{a.dim}")
    gx = [PointSuperform(m, {(1 << k, 0): L[..., i, k] for k in range(m)}) for i in range(n)]
    gxi = [PointSuperform(m, {(0, 1 << k): L[..., i, k] for k in range(m)}) for i in range(n)]
    cache: dict[tuple[int, int], PointSuperform] = {(0, 0): one(m)}

    def image(xm: int, jm: int) -> PointSuperform:
        hit = cache.get((xm, jm))
        if hit is not None:
            return hit
        if jm:
            top = jm.bit_length() - 1
            img = wedge(image(xm, jm ^ (1 << top)), gxi[top])
        else:
            top = xm.bit_length() - 1
            img = wedge(image(xm ^ (1 << top), 0), gx[top])
        cache[(xm, jm)] = img
        return img

    out = PointSuperform(m)
    for k, c in a.terms.items():
        img = image(k.xmask, k.ximask)
        if img:
            out = out + img * c
    return out


def trace_restricted(F: PointSuperform, basis, tol: float = 1e-8):
    """``sum_k F(e_k, e_k^#)`` over orthonormal rows of ``basis`` (m, n)."""
    E = np.asarray(basis, dtype=float)
    if E.ndim == 1:
        E = E[None, :]
    gram = E @ np.swapaxes(E, -1, -2)
    if np.max(np.abs(gram - np.eye(E.shape[-2]))) > tol:
        raise ValueError("basis is not orthonormal")
    A = F.matrix11()
    return np.einsum("...ki,...ij,...kj->...", E, A, E)


def is_positive_11(F: PointSuperform, tol: float = TAU_PSD) -> bool:
    """Positive semidefiniteness of the coefficient matrix of a (1,1)-form."""
    A = F.matrix11()
    scale = max(1.0, float(np.max(np.abs(A))) if A.size else 1.0)
    if np.max(np.abs(A - np.swapaxes(A, -1, -2)), initial=0.0) > TAU_ALG * scale:
        raise AsymmetricFormError("(1,1)-form is not symmetric")
    eig = np.linalg.eigvalsh(0.5 * (A + np.swapaxes(A, -1, -2)))
    ok = eig[..., 0] >= -tol
    return bool(ok) if np.ndim(ok) == 0 else ok


def is_weakly_positive(
    alpha: PointSuperform, trials: int = 256, rng_seed: int = 0, tol: float = TAU_PSD
) -> bool:
    """One-sided random test of weak positivity for an (n-m, n-m)-form.

    Draws ``trials`` tuples of constant (1,0)-forms ``a_1..a_m`` and checks
    ``alpha ^ a_1 ^ a_1# ^ ... ^ a_m ^ a_m#`` has nonnegative density.  A
    ``True`` answer is evidence, not proof.
    """
    bideg = alpha.bidegree
    n = alpha.dim
    if alpha.is_zero():
        return True
    if bideg is None or bideg[0] != bideg[1]:
        raise BidegreeError("weak positivity needs a homogeneous (k,k)-form")
    m = n - bideg[0]
    rng = np.random.default_rng(rng_seed)
    scale = max(1.0, alpha.max_abs())
    for _ in range(trials):
        prod = alpha
        for _ in range(m):
            v = rng.standard_normal(n)
            v /= np.linalg.norm(v)
            prod = prod ^ one_form(v, "x") ^ one_form(v, "xi")
        if berezin_top(prod) < -tol * scale:
            return False
    return True


# ---------------------------------------------------------------------------
# serialisation (1-based indices, matching the x1..xn naming)


def to_json_terms(a: PointSuperform) -> list[dict]:
    out = []
    for k, c in sorted(a.terms.items()):
        out.append(
            {"I": [i + 1 for i in _bits(k.xmask)], "J": [j + 1 for j in _bits(k.ximask)], "c": float(c)}
        )
    return out


def from_json_terms(terms: list[dict], n: int) -> PointSuperform:
    out = PointSuperform(n)
    for t in terms:
        I = [i - 1 for i in t["I"]]
        J = [j - 1 for j in t["J"]]
        if any(not 0 <= i < n for i in I + J):
            raise DimensionError(f"index out of range 1..{n} in {t}")
        mono = one(n)
        for i in sorted(I):
            mono = mono ^ dx(i, n)
        for j in sorted(J):
            mono = mono ^ dxi(j, n)
        out = out + mono * float(t["c"])
    return out


def factorial(k: int) -> float:
    return float(math.factorial(k))
