"""Certificate suite: re-verify every committed inequality from a state.

Each check recomputes its quantities from the stored angles, weights and
vectors at a given working precision and renders a three-valued verdict
with a certified margin (right-hand side minus left-hand side; positive
lower bound means the strict inequality holds).  The checks never trust
the margins recorded during construction, so a hand-edited state is caught
by the matching check rather than by a file-format error.

Check catalog (the name set is a stable external contract):

  distinctness      all diagonal and eigenvalue angles pairwise distinct
  (E)               unit-system residuals of the committed step
  (3) (4)           weight and last-coordinate decay
  (5) (l) (9')      vector refresh decay ladder
  (6) (7)           eigenvector drift and cluster proximity
  (8kappa)          uniform eigenresidual bound with the kappa constant
  (8-literal-report) same data against the fixed constant 3 (report only)
  u-norms           uniform eigenvector norm bound
  spanning          basis-vector reconstruction defect at full depth
  clustering        recurrence of eigenvector clusters at full depth
  (j)-ratio         gap-ratio condition on each committed step
  (k)-surrogate     certified inverse-norm growth chain
  (a) (b) (c)       slack caps for the committed eps
  (d) (e) (f)       diagonal-angle conditions at the committed lambda
  (g) (h) (i)       eigenvalue-angle conditions at the committed mu
"""

from __future__ import annotations

import hashlib
import json
import time
from dataclasses import dataclass

from . import cauchy
from .exactcircle import (
    Angle,
    CertComplex,
    CertScalar,
    Verdict,
    chord,
    unit_value,
)
from .induction import (
    ConstructionState,
    _check_le,
    _check_lt,
    _coarsen,
    _growth_chain,
    _pow2,
    _quarter_pow,
    _sum_complexes,
    _sum_scalars,
    eigvec_inverse_matrix,
    storage_bits,
)

__all__ = [
    "Check",
    "Certificate",
    "EmptyWindow",
    "REQUIRED_CHECK_NAMES",
    "check_E",
    "check_decay",
    "check_eigvec_drift",
    "check_residual",
    "check_u_norms",
    "check_spanning",
    "check_clustering",
    "full_certificate",
]

DISPLAY_BITS = 128
E_RESIDUAL_EXP = -64  # residual threshold 2^-64; far above certified widths

REQUIRED_CHECK_NAMES = frozenset({
    "(E)", "(3)", "(4)", "(5)", "(l)", "(6)", "(7)", "(8kappa)",
    "(8-literal-report)", "(9')", "u-norms", "spanning", "clustering",
    "distinctness", "(j)-ratio", "(k)-surrogate",
    "(a)", "(b)", "(c)", "(d)", "(e)", "(f)", "(g)", "(h)", "(i)",
})


class EmptyWindow(Exception):
    """No committed step clusters at the requested index."""


@dataclass(frozen=True)
class Check:
    name: str
    tag: str
    scope: str
    verdict: Verdict
    margin: CertScalar
    gating: bool = True

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "tag": self.tag,
            "scope": self.scope,
            "verdict": self.verdict.value,
            "margin": self.margin.to_json(),
            "gating": self.gating,
        }


@dataclass(frozen=True)
class Certificate:
    state_hash: str
    checks: tuple[Check, ...]
    kappa_report: dict
    generated_at: str

    @property
    def passing(self) -> bool:
        return all(c.verdict is Verdict.HOLDS for c in self.checks if c.gating)

    def failing_names(self) -> list[str]:
        return sorted({c.name for c in self.checks
                       if c.gating and c.verdict is Verdict.FAILS})

    def undecided_names(self) -> list[str]:
        return sorted({c.name for c in self.checks
                       if c.verdict is Verdict.UNDECIDED})

    def names(self) -> frozenset[str]:
        return frozenset(c.name for c in self.checks)

    def to_json_doc(self) -> dict:
        return {
            "state_hash": self.state_hash,
            "passing": self.passing,
            "kappa_report": self.kappa_report,
            "checks": [c.to_json() for c in self.checks],
            "generated_at": self.generated_at,
        }

    def content_hash(self) -> str:
        doc = self.to_json_doc()
        doc.pop("generated_at")
        blob = json.dumps(doc, sort_keys=True, separators=(",", ":")).encode()
        return hashlib.sha256(blob).hexdigest()


def _display(margin: CertScalar) -> CertScalar:
    if margin.bits <= DISPLAY_BITS:
        return margin
    return _coarsen(margin, DISPLAY_BITS)


def _verdict_of(margin: CertScalar, strict: bool = True) -> Verdict:
    if margin.is_sentinel:
        return Verdict.UNDECIDED
    if margin.lo > 0 or (not strict and margin.lo >= 0):
        return Verdict.HOLDS
    if margin.hi <= 0 and (strict or margin.hi < 0):
        return Verdict.FAILS
    return Verdict.UNDECIDED


def _min_margin(margins: list[CertScalar], bits: int) -> CertScalar:
    if not margins:
        return CertScalar.sentinel(bits)
    acc = margins[0]
    for m in margins[1:]:
        acc = acc.min_with(m)
    return acc


def _bits_of(state: ConstructionState, precision_bits: int | None) -> int:
    # default to the precision the state actually stores its intervals at;
    # a run that escalated leaves everything wider than the policy's floor
    return precision_bits or max(state.policy.initial_bits, storage_bits(state))


# ---------------------------------------------------------------------------
# Shared evaluation helpers


def _resolvent_row(state: ConstructionState, mu: Angle, count: int,
                   bits: int) -> list[CertComplex]:
    """Vector 1/(mu - lambda_j) for j = 1..count."""
    one = CertComplex.point(1, 0, bits)
    um = unit_value(mu, bits)
    return [one / (um - unit_value(lam, bits)) for lam in state.lambdas[:count]]


def _eigvec(state: ConstructionState, i: int, k: int, bits: int) -> list[CertComplex]:
    """Eigenvector u_i^(k): components a_j / (mu_i - lambda_j), j <= k."""
    row = _resolvent_row(state, state.mus[i - 1], k, bits)
    return [_coarsen(state.steps[j].a_n, bits) * row[j] for j in range(k)]


def _eigvec_norm_sq(state: ConstructionState, i: int, k: int, bits: int) -> CertScalar:
    terms = []
    for j in range(k):
        a = _coarsen(state.steps[j].a_n, bits)
        ch = chord(state.mus[i - 1], state.lambdas[j], bits)
        terms.append((a / ch).square())
    return _sum_scalars(terms, bits)


def _vec_norm(vec: list[CertComplex], bits: int) -> CertScalar:
    return _sum_scalars([z.abs2() for z in vec], bits).sqrt()


def _a_prefix_sq(state: ConstructionState, upto: int, bits: int) -> list[CertScalar]:
    """Prefix sums A_p = sum_{j<=p} a_j^2 for p = 0..upto."""
    out = [CertScalar.point(0, bits)]
    for j in range(upto):
        a = _coarsen(state.steps[j].a_n, bits)
        out.append(out[-1] + a.square())
    return out


# ---------------------------------------------------------------------------
# Individual checks


def check_distinctness(state: ConstructionState,
                       precision_bits: int | None = None) -> Check:
    bits = _bits_of(state, precision_bits)
    angles = (*state.lambdas, *state.mus)
    collision = len(set(angles)) != len(angles)
    margins = [
        chord(angles[p], angles[q], bits)
        for p in range(len(angles)) for q in range(p + 1, len(angles))
    ]
    margin = _min_margin(margins, bits)
    verdict = Verdict.FAILS if collision else _verdict_of(margin)
    return Check("distinctness", "node-separation", f"1..{state.depth}",
                 verdict, _display(margin))


def check_E(state: ConstructionState, n: int,
            precision_bits: int | None = None) -> Check:
    """Residuals of the unit system at step n, certified below 2^-64."""
    bits = _bits_of(state, precision_bits)
    step = state.steps[n - 1]
    one = CertComplex.point(1, 0, bits)
    threshold = _pow2(E_RESIDUAL_EXP, bits)
    margins = []
    try:
        for i in range(1, n + 1):
            row = _resolvent_row(state, state.mus[i - 1], n, bits)
            terms = []
            for j in range(n):
                a = _coarsen(state.steps[j].a_n, bits)
                terms.append(a * step.b_n[j].conj() * row[j])
            resid = abs(_sum_complexes(terms, bits) - one)
            _, m = _check_lt(resid, threshold)
            margins.append(m)
    except cauchy.NodeCollision:
        margin = CertScalar.sentinel(bits)
        return Check("(E)", "unit-system-residual", str(n),
                     Verdict.UNDECIDED, _display(margin))
    margin = _min_margin(margins, bits)
    return Check("(E)", "unit-system-residual", str(n),
                 _verdict_of(margin), _display(margin))


def check_decay(state: ConstructionState, n: int,
                precision_bits: int | None = None) -> list[Check]:
    """Checks (3), (4) for every n; (5), (l), (9') for n >= 2."""
    bits = _bits_of(state, precision_bits)
    step = state.steps[n - 1]
    out = []
    _, m3 = _check_lt(step.a_n, _pow2(-n, bits))
    m3 = m3.min_with(_coarsen(step.a_n, bits))
    out.append(Check("(3)", "weight-decay", str(n), _verdict_of(m3), _display(m3)))
    _, m4 = _check_lt(abs(step.b_n[n - 1]), _pow2(-n, bits))
    out.append(Check("(4)", "last-coordinate-decay", str(n), _verdict_of(m4), _display(m4)))
    if n >= 2:
        prev = state.steps[n - 2]
        deltas = [(step.b_n[j] - prev.b_n[j]).abs2() for j in range(n - 1)]
        sum_delta = _sum_scalars(deltas, bits)
        _, m5 = _check_lt(sum_delta.sqrt(), _pow2(-n, bits))
        out.append(Check("(5)", "refresh-decay", str(n), _verdict_of(m5), _display(m5)))
        weighted = _sum_scalars(
            [_coarsen(state.steps[j].a_n, bits).square() * deltas[j] for j in range(n - 1)],
            bits,
        )
        rhs_l = _coarsen(step.epsilon_n, bits) * _growth_chain(n, bits)
        _, ml = _check_lt(weighted.sqrt(), rhs_l)
        out.append(Check("(l)", "weighted-refresh-decay", str(n), _verdict_of(ml), _display(ml)))
        tail = sum_delta + step.b_n[n - 1].abs2()
        _, m9 = _check_lt(tail.sqrt(), _pow2(-(n - 1), bits))
        out.append(Check("(9')", "vector-increment-decay", str(n), _verdict_of(m9), _display(m9)))
    return out


def check_eigvec_drift(state: ConstructionState, n: int,
                       precision_bits: int | None = None) -> list[Check]:
    """(6): per-step eigenvector drift; (7): proximity to the cluster target."""
    bits = _bits_of(state, precision_bits)
    step = state.steps[n - 1]
    out = []
    if n >= 2:
        rhs = _pow2(-n, bits) / _coarsen(state.steps[n - 2].C_n, bits)
        margins = []
        for i in range(1, n):
            drift = _coarsen(step.a_n, bits) / chord(state.mus[i - 1], step.lambda_n, bits)
            _, m = _check_lt(drift, rhs)
            margins.append(m)
        margin = _min_margin(margins, bits)
        out.append(Check("(6)", "eigenvector-drift", str(n),
                         _verdict_of(margin), _display(margin)))
    else:
        margin = _pow2(-1, bits)
        out.append(Check("(6)", "eigenvector-drift", "1 (vacuous)",
                         Verdict.HOLDS, _display(margin)))
    jn = state.j_function()(n)
    ref = _eigvec(state, jn, n, bits)
    new = _eigvec(state, n, n, bits)
    dist = _vec_norm([x - y for x, y in zip(ref, new)], bits)
    _, m7 = _check_lt(dist, _pow2(-n, bits))
    out.append(Check("(7)", "cluster-proximity", str(n), _verdict_of(m7), _display(m7)))
    return out


def _residual_margins(state: ConstructionState, n: int, bits: int,
                      rhs_unit: CertScalar) -> list[CertScalar]:
    """Margins of || T_n u_i^(k) - mu_i u_i^(k) || < rhs_unit * 2^-(k-1), k < n.

    The residual in closed form: with sigma = <u_i^(k), b^(n)>, the vector is
    (sigma - 1) a_j on j <= k and sigma a_j on k < j <= n.
    """
    step = state.steps[n - 1]
    prefix = _a_prefix_sq(state, n, bits)
    one = CertComplex.point(1, 0, bits)
    margins = []
    for k in range(1, n):
        for i in range(1, k + 1):
            u = _eigvec(state, i, k, bits)
            sigma = _sum_complexes(
                [u[j] * step.b_n[j].conj() for j in range(k)], bits
            )
            r_sq = (sigma - one).abs2() * prefix[k] + sigma.abs2() * (prefix[n] - prefix[k])
            rhs = rhs_unit.scale2(-(k - 1))
            _, m = _check_lt(r_sq.sqrt(), rhs)
            margins.append(m)
    return margins


def check_residual(state: ConstructionState, n: int,
                   precision_bits: int | None = None) -> Check:
    """(8) with the kappa constant, over all k < n, i <= k."""
    bits = _bits_of(state, precision_bits)
    kappa = _coarsen(state.kappa, bits)
    margins = _residual_margins(state, n, bits, kappa)
    if not margins:  # n == 1: nothing to compare yet
        margin = _coarsen(state.kappa, bits)
        return Check("(8kappa)", "eigenresidual-bound", "1 (vacuous)",
                     Verdict.HOLDS, _display(margin))
    margin = _min_margin(margins, bits)
    return Check("(8kappa)", "eigenresidual-bound", str(n),
                 _verdict_of(margin), _display(margin))


def check_u_norms(state: ConstructionState,
                  precision_bits: int | None = None) -> Check:
    """Uniform bound ||u_i^(k)|| <= kappa over all committed (k, i)."""
    bits = _bits_of(state, precision_bits)
    kappa = _coarsen(state.kappa, bits)
    margins = []
    for k in range(1, state.depth + 1):
        for i in range(1, k + 1):
            norm = _eigvec_norm_sq(state, i, k, bits).sqrt()
            _, m = _check_le(norm, kappa)
            margins.append(m)
    margin = _min_margin(margins, bits)
    return Check("u-norms", "eigenvector-norm-bound", f"1..{state.depth}",
                 _verdict_of(margin, strict=False), _display(margin))


def u_norm_chain_margin(state: ConstructionState,
                        precision_bits: int | None = None) -> CertScalar:
    """Worst margin of the telescoped per-index norm bound.

    Every ||u_i^(k)|| is dominated by 2 (2^-1 + ... + 2^-i) + ||u_1^(1)||,
    since the drift hops between consecutive truncations telescope along the
    cluster chain down to index 1.  Reported alongside kappa (which equals
    the i -> infinity limit of this bound).
    """
    bits = _bits_of(state, precision_bits)
    base = _coarsen(state.steps[0].a_n, bits) / chord(
        state.mus[0], state.lambdas[0], bits
    )
    margins = []
    for k in range(1, state.depth + 1):
        for i in range(1, k + 1):
            bound = (1 - _pow2(-i, bits)).scale2(1) + base
            norm = _eigvec_norm_sq(state, i, k, bits).sqrt()
            _, m = _check_le(norm, bound)
            margins.append(m)
    return _min_margin(margins, bits)


def check_spanning(state: ConstructionState, r: int,
                   precision_bits: int | None = None) -> Check:
    """Defect of rebuilding e_j (j <= r) from depth-N eigenvectors."""
    bits = _bits_of(state, precision_bits)
    N = state.depth
    if r > N - 1:
        raise ValueError("r must stay below the committed depth")
    rhs = _pow2(-r, bits) + _pow2(-(N - 1), bits)
    margins = []
    try:
        vinv = eigvec_inverse_matrix(state, r, bits)
    except cauchy.NodeCollision:
        margin = CertScalar.sentinel(bits)
        return Check("spanning", "basis-reconstruction-defect", f"r={r}",
                     Verdict.UNDECIDED, _display(margin))
    deep = [_eigvec(state, i, N, bits) for i in range(1, r + 1)]
    zero = CertComplex.point(0, 0, bits)
    one = CertComplex.point(1, 0, bits)
    for j in range(1, r + 1):
        alpha = [vinv.entries[i][j - 1] for i in range(r)]
        recon = []
        for p in range(N):
            acc = zero
            for i in range(r):
                acc = acc + alpha[i] * deep[i][p]
            recon.append(acc)
        recon[j - 1] = recon[j - 1] - one
        defect = _vec_norm(recon, bits)
        _, m = _check_lt(defect, rhs)
        margins.append(m)
    margin = _min_margin(margins, bits)
    return Check("spanning", "basis-reconstruction-defect", f"r={r}",
                 _verdict_of(margin), _display(margin))


def cluster_window(state: ConstructionState, k: int) -> list[int]:
    j = state.j_function()
    return [n for n in range(2, state.depth + 1) if j(n) == k]


def check_clustering(state: ConstructionState, k: int,
                     precision_bits: int | None = None) -> Check:
    """Eigenvector recurrence: u_n stays 5 * 2^-n close to its target u_k."""
    bits = _bits_of(state, precision_bits)
    N = state.depth
    window = cluster_window(state, k)
    if not window:
        raise EmptyWindow(f"no committed step clusters at index {k}")
    base = _eigvec(state, k, N, bits)
    margins = []
    for n in window:
        other = _eigvec(state, n, N, bits)
        dist = _vec_norm([x - y for x, y in zip(base, other)], bits)
        rhs = _pow2(-n, bits) * 5 + _pow2(-(N - 1), bits)
        _, m = _check_lt(dist, rhs)
        margins.append(m)
    margin = _min_margin(margins, bits)
    return Check("clustering", "eigenvector-recurrence", f"k={k}",
                 _verdict_of(margin), _display(margin))


def check_gap_ratio(state: ConstructionState, n: int,
                    precision_bits: int | None = None) -> Check:
    bits = _bits_of(state, precision_bits)
    step = state.steps[n - 1]
    gap = chord(step.mu_n, step.lambda_n, bits)
    rhs = _pow2(-n, bits) / _coarsen(state.steps[n - 2].C_n, bits)
    margins = []
    for i in range(1, n):
        ratio = gap / chord(state.mus[i - 1], step.lambda_n, bits)
        _, m = _check_lt(ratio, rhs)
        margins.append(m)
    margin = _min_margin(margins, bits)
    return Check("(j)-ratio", "gap-ratio", str(n), _verdict_of(margin), _display(margin))


def check_inverse_norm_chain(state: ConstructionState, n: int,
                             precision_bits: int | None = None) -> Check:
    bits = _bits_of(state, precision_bits)
    try:
        inv = cauchy.cauchy_inverse(state.nodes(n), bits)
        ub = cauchy.opnorm_upper(inv)
    except cauchy.NodeCollision:
        return Check("(k)-surrogate", "inverse-norm-growth", str(n),
                     Verdict.UNDECIDED, _display(CertScalar.sentinel(bits)))
    rhs = (1 + _pow2(-n, bits)) * _coarsen(state.steps[n - 2].B_n, bits)
    verdict, margin = _check_le(ub, rhs)
    return Check("(k)-surrogate", "inverse-norm-growth", str(n),
                 verdict, _display(margin))


def check_step_conditions(state: ConstructionState, n: int,
                          precision_bits: int | None = None) -> list[Check]:
    """Re-verify the committed eps caps and both angle-choice condition sets."""
    bits = _bits_of(state, precision_bits)
    step = state.steps[n - 1]
    prev = state.steps[n - 2]
    jn = state.j_function()(n)
    eps = _coarsen(step.epsilon_n, bits)
    chain = _growth_chain(n, bits)
    a = [_coarsen(s.a_n, bits) for s in state.steps[:n - 1]]
    a_sq = [x.square() for x in a]
    norm_a = _sum_scalars(a_sq, bits).sqrt()
    min_a = a[0]
    for x in a[1:]:
        min_a = min_a.min_with(x)
    cap_a = _quarter_pow(n + 1, bits)
    one = CertComplex.point(1, 0, bits)
    ref_row = _resolvent_row(state, state.mus[jn - 1], n - 1, bits)
    coeff = [a[j] * prev.b_n[j].conj() for j in range(n - 1)]

    out = []
    s_b = _sum_scalars([z.abs2() for z in ref_row], bits).sqrt()
    _, m = _check_lt(eps, cap_a)
    out.append(Check("(a)", "slack-cap", str(n), _verdict_of(m), _display(m)))
    _, m = _check_lt(chain * s_b * eps, cap_a)
    out.append(Check("(b)", "slack-cap-mass", str(n), _verdict_of(m), _display(m)))
    _, m = _check_lt((1 / min_a) * (1 + norm_a) * chain * eps, _pow2(-n, bits))
    out.append(Check("(c)", "slack-cap-weights", str(n), _verdict_of(m), _display(m)))

    for names, anchor in ((("(d)", "(e)", "(f)"), step.lambda_n),
                          (("(g)", "(h)", "(i)"), step.mu_n)):
        um = unit_value(anchor, bits)
        row = [one / (um - unit_value(lam, bits)) for lam in state.lambdas[:n - 1]]
        s = _sum_complexes([coeff[j] * row[j] for j in range(n - 1)], bits)
        _, m_near = _check_lt(abs(one - s), eps)
        out.append(Check(names[0], "near-unity", str(n),
                         _verdict_of(m_near), _display(m_near)))
        mass = _sum_scalars([z.abs2() for z in row], bits)
        _, m_mass = _check_lt(chain * mass.sqrt() * eps, cap_a)
        out.append(Check(names[1], "row-mass", str(n),
                         _verdict_of(m_mass), _display(m_mass)))
        drift_sq = _sum_scalars(
            [a_sq[j] * (ref_row[j] - row[j]).abs2() for j in range(n - 1)], bits
        )
        _, m_drift = _check_lt(drift_sq.sqrt(), eps)
        out.append(Check(names[2], "resolvent-drift", str(n),
                         _verdict_of(m_drift), _display(m_drift)))
    return out


def _literal_three_check(state: ConstructionState, bits: int) -> Check:
    """Report-only: the fixed constant 3 in place of kappa, both usages."""
    three = CertScalar.point(3, bits)
    margins = []
    for n in range(2, state.depth + 1):
        margins.extend(_residual_margins(state, n, bits, three))
    for k in range(1, state.depth + 1):
        for i in range(1, k + 1):
            norm = _eigvec_norm_sq(state, i, k, bits).sqrt()
            _, m = _check_le(norm, three)
            margins.append(m)
    margin = _min_margin(margins, bits) if margins else three
    return Check("(8-literal-report)", "fixed-constant-report",
                 f"1..{state.depth}", _verdict_of(margin, strict=False),
                 _display(margin), gating=False)


# ---------------------------------------------------------------------------
# Aggregation


def full_certificate(state: ConstructionState,
                     precision_bits: int | None = None) -> Certificate:
    """Run every check over all applicable indices; deterministic order."""
    bits = _bits_of(state, precision_bits)
    checks: list[Check] = [check_distinctness(state, bits)]
    for n in range(1, state.depth + 1):
        checks.append(check_E(state, n, bits))
        checks.extend(check_decay(state, n, bits))
        checks.extend(check_eigvec_drift(state, n, bits))
        checks.append(check_residual(state, n, bits))
        if n >= 2:
            checks.append(check_gap_ratio(state, n, bits))
            checks.append(check_inverse_norm_chain(state, n, bits))
            checks.extend(check_step_conditions(state, n, bits))
    checks.append(check_u_norms(state, bits))
    for r in range(1, min(6, state.depth - 1) + 1):
        checks.append(check_spanning(state, r, bits))
    for k in range(1, min(3, state.depth) + 1):
        if cluster_window(state, k):
            checks.append(check_clustering(state, k, bits))
    literal = _literal_three_check(state, bits)
    checks.append(literal)
    kappa_report = {
        "kappa": _display(state.kappa).to_json(),
        "literal_three_holds": literal.verdict.value,
        "u_norm_chain_margin": _display(u_norm_chain_margin(state, bits)).to_json(),
    }
    return Certificate(
        state_hash=state.state_hash(),
        checks=tuple(checks),
        kappa_report=kappa_report,
        generated_at=time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
    )
