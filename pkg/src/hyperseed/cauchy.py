"""Cauchy-matrix kernels: build, invert, and bound matrices 1/(mu_i - lambda_j).

The inverse and determinant use the classical closed-form products over node
differences.  Both are numerically structured: every factor is a difference
of unit-circle points, so no catastrophic cancellation occurs even when one
node pair is separated by 2^-2000.  A certified Gaussian elimination is kept
alongside purely as a cross-check oracle; it is never on the production
path.

All routines are pure functions of (nodes, precision) and thread-safe.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

from .exactcircle import (
    Angle,
    CertComplex,
    CertScalar,
    unit_value,
)

__all__ = [
    "CauchyNodes",
    "CertMatrix",
    "NodeCollision",
    "build",
    "cauchy_det",
    "cauchy_inverse",
    "solve_ones",
    "opnorm_upper",
    "opnorm_2to1_upper",
    "eliminate_inverse",
    "eliminate_det",
    "matmul",
    "mat_vec",
    "contains_identity",
]


class NodeCollision(Exception):
    """Two construction nodes coincide; every matrix entry must stay finite."""


@dataclass(frozen=True)
class CauchyNodes:
    """Row nodes mu_1..mu_n and column nodes lambda_1..lambda_n, all distinct."""

    mu: tuple[Angle, ...]
    lam: tuple[Angle, ...]

    def __post_init__(self) -> None:
        if len(self.mu) != len(self.lam):
            raise NodeCollision("row and column node counts differ")
        seen: set[Angle] = set()
        for a in (*self.mu, *self.lam):
            if a in seen:
                raise NodeCollision(f"repeated node {a}")
            seen.add(a)

    @property
    def n(self) -> int:
        return len(self.mu)


@dataclass(frozen=True)
class CertMatrix:
    n: int
    entries: tuple[tuple[CertComplex, ...], ...]
    provenance: str  # direct | inverse-by-formula | inverse-by-elimination

    def __post_init__(self) -> None:
        if len(self.entries) != self.n or any(len(r) != self.n for r in self.entries):
            raise ValueError("entries grid is not n x n")

    def __getitem__(self, ij: tuple[int, int]) -> CertComplex:
        return self.entries[ij[0]][ij[1]]

    def to_json(self) -> dict:
        return {
            "n": self.n,
            "provenance": self.provenance,
            "entries": [e.to_json() for row in self.entries for e in row],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "CertMatrix":
        n = int(obj["n"])
        flat = [CertComplex.from_json(e) for e in obj["entries"]]
        rows = tuple(tuple(flat[i * n:(i + 1) * n]) for i in range(n))
        return cls(n, rows, str(obj["provenance"]))


@lru_cache(maxsize=None)
def _units(angles: tuple[Angle, ...], bits: int) -> tuple[CertComplex, ...]:
    return tuple(unit_value(a, bits) for a in angles)


def _diff(a: Angle, b: Angle, bits: int) -> CertComplex:
    return unit_value(a, bits) - unit_value(b, bits)


def build(nodes: CauchyNodes, precision_bits: int) -> CertMatrix:
    """Matrix with entries 1/(mu_i - lambda_j) as certified enclosures."""
    one = CertComplex.point(1, 0, precision_bits)
    rows = []
    for mu in nodes.mu:
        row = []
        for lam in nodes.lam:
            if mu == lam:
                raise NodeCollision(f"mu == lambda at {mu}")
            row.append(one / _diff(mu, lam, precision_bits))
        rows.append(tuple(row))
    return CertMatrix(nodes.n, tuple(rows), "direct")


def _difference_products(nodes: CauchyNodes, bits: int):
    """Per-node products of pairwise differences.

    P[i] = prod_k (mu_i - lam_k)        R[j] = prod_k (mu_k - lam_j)
    Q[i] = prod_{k != i} (mu_i - mu_k)  S[j] = prod_{k != j} (lam_j - lam_k)
    """
    n = nodes.n
    one = CertComplex.point(1, 0, bits)
    P = [one] * n
    R = [one] * n
    Q = [one] * n
    S = [one] * n
    for i, mu in enumerate(nodes.mu):
        for k, lam in enumerate(nodes.lam):
            d = _diff(mu, lam, bits)
            P[i] = P[i] * d
            R[k] = R[k] * d
    for i in range(n):
        for k in range(n):
            if k != i:
                Q[i] = Q[i] * _diff(nodes.mu[i], nodes.mu[k], bits)
                S[i] = S[i] * _diff(nodes.lam[i], nodes.lam[k], bits)
    return P, Q, R, S


def cauchy_det(nodes: CauchyNodes, precision_bits: int) -> CertComplex:
    """det = prod_{i<j} (mu_j - mu_i)(lam_i - lam_j) / prod_{i,j} (mu_i - lam_j)."""
    n = nodes.n
    num = CertComplex.point(1, 0, precision_bits)
    for i in range(n):
        for j in range(i + 1, n):
            num = num * _diff(nodes.mu[j], nodes.mu[i], precision_bits)
            num = num * _diff(nodes.lam[i], nodes.lam[j], precision_bits)
    den = CertComplex.point(1, 0, precision_bits)
    for mu in nodes.mu:
        for lam in nodes.lam:
            den = den * _diff(mu, lam, precision_bits)
    return num / den


def cauchy_inverse(nodes: CauchyNodes, precision_bits: int) -> CertMatrix:
    """Closed-form inverse via difference products.

    (M^-1)[j][i] = (-1)^(n-1) * P[i] * R[j] / ((mu_i - lam_j) * Q[i] * S[j]);
    derived from Lagrange interpolation at the row and column nodes.
    """
    n = nodes.n
    P, Q, R, S = _difference_products(nodes, precision_bits)
    rows = []
    for j in range(n):
        row = []
        for i in range(n):
            e = (P[i] * R[j]) / (_diff(nodes.mu[i], nodes.lam[j], precision_bits) * Q[i] * S[j])
            if (n - 1) % 2:
                e = -e
            row.append(e)
        rows.append(tuple(row))
    return CertMatrix(n, tuple(rows), "inverse-by-formula")


def solve_ones(nodes: CauchyNodes, precision_bits: int) -> tuple[CertComplex, ...]:
    """Certified solution c of M c = (1, ..., 1)^T; c_i is row i of M^-1 summed."""
    inv = cauchy_inverse(nodes, precision_bits)
    out = []
    for i in range(nodes.n):
        acc = inv.entries[i][0]
        for j in range(1, nodes.n):
            acc = acc + inv.entries[i][j]
        out.append(acc)
    return tuple(out)


def residue_solve_ones(nodes: CauchyNodes, precision_bits: int) -> tuple[CertComplex, ...]:
    """Independent closed form for the same system.

    c_j = (-1)^(n+1) * prod_i (mu_i - lam_j) / prod_{k != j} (lam_j - lam_k);
    obtained from the partial fractions of 1 - prod(z - mu_i)/prod(z - lam_j).
    Used as a cross-check oracle against :func:`solve_ones`.
    """
    n = nodes.n
    _, _, R, S = _difference_products(nodes, precision_bits)
    out = []
    for j in range(n):
        c = R[j] / S[j]
        if (n + 1) % 2:
            c = -c
        out.append(c)
    return tuple(out)


# ---------------------------------------------------------------------------
# Norm bounds


def opnorm_upper(M: CertMatrix) -> CertScalar:
    """Certified upper bound on the spectral norm.

    min( sqrt(norm_1 * norm_inf), frobenius ), all evaluated as interval
    upper bounds; always >= ||M||_2, looseness at most sqrt(n).
    """
    n = M.n
    bits = M.entries[0][0].bits if n else 64
    mags = [[abs(M.entries[i][j]) for j in range(n)] for i in range(n)]
    zero = CertScalar.point(0, bits)

    def _sum(vals):
        acc = zero
        for v in vals:
            acc = acc + v
        return acc

    col_sums = [_sum(mags[i][j] for i in range(n)) for j in range(n)]
    row_sums = [_sum(mags[i][j] for j in range(n)) for i in range(n)]
    norm1 = zero
    for c in col_sums:
        norm1 = norm1.max_with(c)
    norminf = zero
    for r in row_sums:
        norminf = norminf.max_with(r)
    holder = (norm1 * norminf).sqrt()
    frob = _sum(m.square() for row in mags for m in row).sqrt()
    return holder.min_with(frob)


def opnorm_2to1_upper(M: CertMatrix) -> CertScalar:
    """Upper bound on the l2 -> l1 operator norm: sqrt(n) * ||M||_2 bound."""
    bits = M.entries[0][0].bits if M.n else 64
    root_n = CertScalar.point(M.n, bits).sqrt()
    return root_n * opnorm_upper(M)


# ---------------------------------------------------------------------------
# Elimination oracle (cross-check only)


def _lu_decompose(M: CertMatrix):
    n = M.n
    a = [list(row) for row in M.entries]
    perm_sign = 1
    for k in range(n):
        # pivot by largest certified lower bound of |entry|
        piv, piv_low = k, None
        for r in range(k, n):
            low = abs(a[r][k]).lo
            if piv_low is None or low > piv_low:
                piv, piv_low = r, low
        if piv != k:
            a[k], a[piv] = a[piv], a[k]
            perm_sign = -perm_sign
        d = a[k][k].abs2()
        if d.lo <= 0:
            raise NodeCollision("elimination pivot interval touches zero")
        for r in range(k + 1, n):
            f = a[r][k] / a[k][k]
            a[r][k] = f
            for c in range(k + 1, n):
                a[r][c] = a[r][c] - f * a[k][c]
    return a, perm_sign


def eliminate_det(M: CertMatrix) -> CertComplex:
    """Determinant by certified LU with partial pivoting (oracle path)."""
    bits = M.entries[0][0].bits
    a, sign = _lu_decompose(M)
    det = CertComplex.point(sign, 0, bits)
    for k in range(M.n):
        det = det * a[k][k]
    return det


def eliminate_inverse(M: CertMatrix) -> CertMatrix:
    """Inverse by certified Gauss-Jordan elimination (oracle path)."""
    n = M.n
    bits = M.entries[0][0].bits
    zero = CertComplex.point(0, 0, bits)
    one = CertComplex.point(1, 0, bits)
    a = [list(row) + [one if j == i else zero for j in range(n)]
         for i, row in enumerate(M.entries)]
    for k in range(n):
        piv, piv_low = k, None
        for r in range(k, n):
            low = abs(a[r][k]).lo
            if piv_low is None or low > piv_low:
                piv, piv_low = r, low
        if piv != k:
            a[k], a[piv] = a[piv], a[k]
        if a[k][k].abs2().lo <= 0:
            raise NodeCollision("elimination pivot interval touches zero")
        inv_piv = one / a[k][k]
        a[k] = [x * inv_piv for x in a[k]]
        for r in range(n):
            if r != k and not (a[r][k].re.lo == 0 == a[r][k].re.hi
                               and a[r][k].im.lo == 0 == a[r][k].im.hi):
                f = a[r][k]
                a[r] = [x - f * y for x, y in zip(a[r], a[k])]
    rows = tuple(tuple(a[i][n:]) for i in range(n))
    return CertMatrix(n, rows, "inverse-by-elimination")


# ---------------------------------------------------------------------------
# Small matrix helpers


def matmul(A: CertMatrix, B: CertMatrix) -> CertMatrix:
    n = A.n
    bits = A.entries[0][0].bits
    zero = CertComplex.point(0, 0, bits)
    rows = []
    for i in range(n):
        row = []
        for j in range(n):
            acc = zero
            for k in range(n):
                acc = acc + A.entries[i][k] * B.entries[k][j]
            row.append(acc)
        rows.append(tuple(row))
    return CertMatrix(n, tuple(rows), "direct")


def mat_vec(M: CertMatrix, v: tuple[CertComplex, ...]) -> tuple[CertComplex, ...]:
    bits = M.entries[0][0].bits
    zero = CertComplex.point(0, 0, bits)
    out = []
    for i in range(M.n):
        acc = zero
        for j in range(M.n):
            acc = acc + M.entries[i][j] * v[j]
        out.append(acc)
    return tuple(out)


def contains_identity(P: CertMatrix) -> bool:
    for i in range(P.n):
        for j in range(P.n):
            want = 1 if i == j else 0
            if not P.entries[i][j].contains(want, 0):
                return False
    return True
