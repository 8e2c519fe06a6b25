"""Finite truncations of the perturbed operator: orbits and spectral oracles.

A truncation acts on C^N as x -> Dx + <x, b> a with D the diagonal of unit
points, all data taken from a committed construction state.  Orbits iterate
in midpoint arithmetic by default (certified mode is available but buys
nothing the certificate suite has not already established).  The brute-force
spectrum expands the characteristic polynomial of the dense N x N matrix and
finds its roots with an independent polynomial solver, which is the
strongest end-to-end consistency test available: the roots must reproduce
the constructed eigenvalue angles.
"""

from __future__ import annotations

from dataclasses import dataclass

import gmpy2
import mpmath
from gmpy2 import mpc, mpfr

from .exactcircle import (
    Angle,
    CertComplex,
    CertScalar,
    unit_value,
)
from .induction import (
    ConstructionState,
    _coarsen,
    _sum_complexes,
    _sum_scalars,
)

__all__ = [
    "DepthExceeded",
    "OracleFailure",
    "OperatorTruncation",
    "OrbitTrace",
    "assemble",
    "orbit",
    "eigen_residual",
    "brute_spectrum",
    "root_of_unity_order",
]


class DepthExceeded(Exception):
    """Requested dimension is beyond the committed construction depth."""


class OracleFailure(Exception):
    """The independent eigenvalue solver could not resolve the spectrum."""


@dataclass(frozen=True)
class OperatorTruncation:
    """Rank-one perturbed diagonal on C^N: apply(x) = Dx + <x, b> a."""

    N: int
    diag: tuple[Angle, ...]
    a: tuple[CertComplex, ...]
    b: tuple[CertComplex, ...]
    bits: int

    def apply(self, x: list[CertComplex]) -> list[CertComplex]:
        """Certified application; the inner product is conjugate-linear in b."""
        if len(x) != self.N:
            raise ValueError("vector dimension mismatch")
        bits = self.bits
        inner = _sum_complexes(
            [x[j] * self.b[j].conj() for j in range(self.N)], bits
        )
        out = []
        for j in range(self.N):
            out.append(unit_value(self.diag[j], bits) * x[j] + inner * self.a[j])
        return out

    def midpoint_data(self, bits: int | None = None):
        """(diag, a, b) as gmpy2 complex midpoints for fast iteration."""
        bits = bits or self.bits
        prec = (bits, bits)  # the bare constructor rounds to the thread context

        def as_mpc(z: CertComplex) -> mpc:
            return mpc(*z.mid(), precision=prec)

        diag = [as_mpc(unit_value(t, bits)) for t in self.diag]
        return diag, [as_mpc(z) for z in self.a], [as_mpc(z) for z in self.b]

    def to_json_doc(self) -> dict:
        return {
            "N": self.N,
            "bits": self.bits,
            "diag": [t.to_json() for t in self.diag],
            "a": [z.to_json() for z in self.a],
            "b": [z.to_json() for z in self.b],
        }

    @classmethod
    def from_json_doc(cls, doc: dict) -> "OperatorTruncation":
        return cls(
            N=int(doc["N"]),
            diag=tuple(Angle.from_json(t) for t in doc["diag"]),
            a=tuple(CertComplex.from_json(z) for z in doc["a"]),
            b=tuple(CertComplex.from_json(z) for z in doc["b"]),
            bits=int(doc["bits"]),
        )


@dataclass(frozen=True)
class OrbitTrace:
    start_label: str
    steps: int
    target_count: int
    records: tuple[dict, ...]  # per iterate: {"iter", "norm", "dists"}

    def to_csv(self) -> str:
        head = "iter,norm" + "".join(f",dist_{i+1}" for i in range(self.target_count))
        lines = [head]
        for r in self.records:
            cells = [str(r["iter"]), _csv_fmt(r["norm"])]
            cells += [_csv_fmt(d) for d in r["dists"]]
            lines.append(",".join(cells))
        return "\n".join(lines) + "\n"


def _csv_fmt(x) -> str:
    return format(float(x), ".17g")


def assemble(state: ConstructionState, N: int,
             zero_perturbation: bool = False) -> OperatorTruncation:
    """Truncation of dimension N <= depth, using the step-N vector b."""
    if N < 1 or N > state.depth:
        raise DepthExceeded(f"dimension {N} exceeds committed depth {state.depth}")
    bits = state.policy.initial_bits
    zero = CertComplex.point(0, 0, bits)
    a = tuple(CertComplex(_coarsen(s.a_n, bits), CertScalar.point(0, bits))
              for s in state.steps[:N])
    b = tuple(zero for _ in range(N)) if zero_perturbation else state.steps[N - 1].b_n
    return OperatorTruncation(
        N=N, diag=state.lambdas[:N], a=a, b=b, bits=bits,
    )


def orbit(T: OperatorTruncation, x0: list[complex] | list[mpc], steps: int,
          targets: list[list[complex]] | None = None, bits: int | None = None,
          certified: bool = False, start_label: str = "custom") -> OrbitTrace:
    """Iterate x -> T x, recording norms and distances to each target.

    Midpoint (non-certified) arithmetic by default; pass certified=True to
    carry interval enclosures instead (slower, same record layout).
    """
    bits = bits or T.bits
    targets = targets or []
    if certified:
        return _orbit_certified(T, x0, steps, targets, start_label)
    # bare mpfr/mpc operators round in the ambient thread context, so pin it
    # to the working precision for the whole iteration
    with gmpy2.context(precision=bits):
        diag, a, b = T.midpoint_data(bits)
        x = [mpc(z) for z in x0]
        if len(x) != T.N:
            raise ValueError("start vector dimension mismatch")
        if all(gmpy2.norm(z) == 0 for z in x):
            raise ValueError("start vector must be nonzero")
        tgt = [[mpc(z) for z in t] for t in targets]
        records = []

        def norm(vec):
            return gmpy2.sqrt(sum((gmpy2.norm(z) for z in vec), mpfr(0)))

        for it in range(steps + 1):
            dists = [norm([p - q for p, q in zip(x, t)]) for t in tgt]
            records.append({"iter": it, "norm": norm(x), "dists": dists})
            if it == steps:
                break
            inner = sum((p * q.conjugate() for p, q in zip(x, b)), mpc(0))
            x = [d * p + inner * w for d, p, w in zip(diag, x, a)]
    return OrbitTrace(start_label, steps, len(targets), tuple(records))


def _orbit_certified(T, x0, steps, targets, start_label) -> OrbitTrace:
    bits = T.bits
    x = [z if isinstance(z, CertComplex)
         else CertComplex.point(mpfr(complex(z).real), mpfr(complex(z).imag), bits)
         for z in x0]
    tgt = [[CertComplex.point(mpfr(complex(z).real), mpfr(complex(z).imag), bits)
            for z in t] for t in targets]
    records = []
    for it in range(steps + 1):
        dists = [
            _sum_scalars([(p - q).abs2() for p, q in zip(x, t)], bits).sqrt().mid()
            for t in tgt
        ]
        nrm = _sum_scalars([z.abs2() for z in x], bits).sqrt().mid()
        records.append({"iter": it, "norm": nrm, "dists": dists})
        if it == steps:
            break
        x = T.apply(x)
    return OrbitTrace(start_label, steps, len(targets), tuple(records))


def eigenvector(state: ConstructionState, i: int, k: int | None = None,
                bits: int | None = None) -> list[CertComplex]:
    """u_i^(k) with components a_j / (mu_i - lambda_j), default k = depth."""
    k = k or state.depth
    bits = bits or state.policy.initial_bits
    if not (1 <= i <= k <= state.depth):
        raise DepthExceeded(f"need 1 <= i <= k <= depth, got i={i}, k={k}")
    one = CertComplex.point(1, 0, bits)
    um = unit_value(state.mus[i - 1], bits)
    out = []
    for j in range(k):
        a = _coarsen(state.steps[j].a_n, bits)
        out.append(a * (one / (um - unit_value(state.lambdas[j], bits))))
    return out


def eigen_residual(state: ConstructionState, N: int, i: int,
                   k: int | None = None, a_scale: CertScalar | None = None) -> CertScalar:
    """Certified || T_N u_i^(k) - mu_i u_i^(k) ||, default k = N.

    Closed form: with sigma = <u_i^(k), b^(N)>, the residual vector is
    (sigma - 1) a_j on j <= k and sigma a_j above, since (D - mu_i) u_i^(k)
    collapses to -a^(k).  ``a_scale`` multiplies the weight vector (used by
    fault-injection tests).
    """
    if N > state.depth:
        raise DepthExceeded(f"dimension {N} exceeds committed depth {state.depth}")
    k = k or N
    if not (1 <= i <= k <= N):
        raise ValueError("need 1 <= i <= k <= N")
    bits = state.policy.initial_bits
    u = eigenvector(state, i, k, bits)
    b = state.steps[N - 1].b_n
    one = CertComplex.point(1, 0, bits)
    a = [_coarsen(s.a_n, bits) for s in state.steps[:N]]
    if a_scale is not None:
        a = [x * a_scale for x in a]
        u = [z * a_scale for z in u]
    sigma = _sum_complexes([u[j] * b[j].conj() for j in range(k)], bits)
    head = _sum_scalars([x.square() for x in a[:k]], bits)
    tail = _sum_scalars([x.square() for x in a[k:]], bits)
    r_sq = (sigma - one).abs2() * head + sigma.abs2() * tail
    return r_sq.sqrt()


# ---------------------------------------------------------------------------
# Brute-force spectrum oracle


def _char_poly_coeffs(state: ConstructionState, n: int, prec: int):
    """Coefficients (highest degree first) of det(T_n - z), via mpmath.

    det(D - z + a b*) = prod_j (lambda_j - z) + sum_j a_j conj(b_j)
    prod_{k != j} (lambda_k - z).
    """
    with mpmath.workprec(prec):
        lam = [mpmath.mpc(*map(mpmath.mpf, _mid_strings(unit_value(t, prec))))
               for t in state.lambdas[:n]]
        step = state.steps[n - 1]
        ab = []
        for j in range(n):
            a = mpmath.mpf(_dec(state.steps[j].a_n.mid()))
            bre, bim = _mid_strings(step.b_n[j])
            ab.append(a * mpmath.mpc(mpmath.mpf(bre), -mpmath.mpf(bim)))

        def poly_from_roots(roots):
            # prod (root - z): coefficients in z, highest first
            coeffs = [mpmath.mpc(1)]
            for r in roots:
                # multiply by (r - z) = -z + r
                new = [mpmath.mpc(0)] * (len(coeffs) + 1)
                for idx, c in enumerate(coeffs):
                    new[idx] += -c
                    new[idx + 1] += c * r
                coeffs = new
            return coeffs

        total = poly_from_roots(lam)
        for j in range(n):
            rest = poly_from_roots([lam[k] for k in range(n) if k != j])
            rest = [c * ab[j] for c in rest]
            # align: rest has degree n-1, total degree n
            for idx, c in enumerate(rest):
                total[idx + 1] += c
        return total


def _dec(x: mpfr) -> str:
    from .exactcircle import decimal_exact

    return decimal_exact(x)


def _mid_strings(z: CertComplex) -> tuple[str, str]:
    re, im = z.mid()
    return _dec(re), _dec(im)


def brute_spectrum(state: ConstructionState, n: int,
                   pairing_tolerance: float = 1e-10) -> list[CertComplex]:
    """Eigenvalues of the assembled n x n truncation by polynomial rooting.

    Independent of the construction formulas: expands the characteristic
    polynomial and calls the mpmath root finder.  Returns the roots ordered
    to pair with the constructed eigenvalue angles; raises OracleFailure if
    the pairing is not a bijection within ``pairing_tolerance``.
    """
    if n > min(state.depth, 6):
        raise DepthExceeded("brute spectrum supports n <= min(depth, 6)")
    bits = state.policy.initial_bits
    prec = bits + 64
    coeffs = _char_poly_coeffs(state, n, prec)
    with mpmath.workprec(prec):
        try:
            roots = mpmath.polyroots(coeffs, maxsteps=200, extraprec=bits // 2)
        except mpmath.libmp.NoConvergence as exc:  # pragma: no cover
            raise OracleFailure(f"root finder did not converge: {exc}") from exc
        mu_vals = [mpmath.mpc(*map(mpmath.mpf, _mid_strings(unit_value(t, prec))))
                   for t in state.mus[:n]]
        paired: list = [None] * n
        used = set()
        for pos, mv in enumerate(mu_vals):
            best, best_d = None, None
            for ridx, root in enumerate(roots):
                d = abs(root - mv)
                if best_d is None or d < best_d:
                    best, best_d = ridx, d
            if best in used:
                raise OracleFailure("two eigenvalue angles claim the same root")
            if float(best_d) >= pairing_tolerance:
                raise OracleFailure(
                    f"pairing error {float(best_d):.3e} above {pairing_tolerance}"
                )
            used.add(best)
            paired[pos] = roots[best]
        out = []
        for root in paired:
            re = mpfr(mpmath.nstr(root.real, mpmath.mp.dps, strip_zeros=False),
                      precision=bits)
            im = mpfr(mpmath.nstr(root.imag, mpmath.mp.dps, strip_zeros=False),
                      precision=bits)
            out.append(CertComplex.point(re, im, bits))
    return out


def root_of_unity_order(mu: Angle) -> int:
    """Smallest power of two q with mu**q == 1, exactly: 2**den_pow2."""
    return 1 << mu.den_pow2
