"""Inductive construction of the perturbation data.

Step 1 fixes the first diagonal point at angle zero and a first weight of
1/4, then each later step n chooses a slack bound eps_n, a new diagonal
angle lambda_n clustering at an earlier eigenvalue mu_{j(n)}, a new
eigenvalue angle mu_n next to lambda_n, the weight a_n, and the refreshed
vector b^(n) solving the unit linear system over the Cauchy matrix of the
nodes.  Every inequality consumed by the acceptance argument is certified
with interval arithmetic before a step commits, and its margin is stored.

Candidate angles are scanned as dyadic offsets 2^-m with m increasing, so
the construction is deterministic: identical seed, depth, precision policy
and j-scheme reproduce bit-identical states.  A cheap low-precision probe
rejects hopeless candidates first; rejection at coarse precision is still a
certified rejection, so the committed offset remains the smallest one
accepted at the committing precision.

Searches and checks that cannot be decided at the current precision raise
internally and the whole step deterministically retries at doubled
precision, up to the configured ceiling.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, replace
from fractions import Fraction
from typing import Callable, Iterable, Mapping

import gmpy2
from gmpy2 import mpfr

from . import cauchy
from .exactcircle import (
    Angle,
    CertComplex,
    CertScalar,
    PrecisionExhausted,
    Verdict,
    ZERO_ANGLE,
    angle_normalize,
    chord,
    chord_of_fraction,
    unit_value,
)

__all__ = [
    "BadSeed",
    "SearchExhausted",
    "ConstructionError",
    "PrecisionPolicy",
    "StepData",
    "ConstructionState",
    "j_of",
    "step_one",
    "choose_epsilon",
    "choose_lambda",
    "choose_mu",
    "coefficients",
    "bound_C",
    "extend",
    "construct",
    "DEFAULT_SEED",
]

DEFAULT_SEED = Angle(1, 6)  # angle 1/64
PROBE_BITS = 768
OFFSET_EXPONENT_CAP = 20000


class BadSeed(Exception):
    """The starting eigenvalue angle violates the step-1 feasibility bounds."""


class SearchExhausted(Exception):
    """No candidate offset up to the exponent cap was accepted."""


class ConstructionError(Exception):
    """A committed step failed a check that the accepted conditions imply."""


class _NeedsPrecision(Exception):
    """Internal: some required verdict came back UNDECIDED; retry wider."""


@dataclass(frozen=True)
class PrecisionPolicy:
    initial_bits: int = 4096
    ceiling_bits: int = 1 << 20

    def __post_init__(self) -> None:
        if not (16 <= self.initial_bits <= self.ceiling_bits):
            raise ValueError("precision policy must satisfy 16 <= initial <= ceiling")


@dataclass(frozen=True)
class StepData:
    n: int
    lambda_n: Angle
    mu_n: Angle
    a_n: CertScalar
    b_n: tuple[CertComplex, ...]
    epsilon_n: CertScalar
    C_n: CertScalar
    B_n: CertScalar
    margins: Mapping[str, CertScalar]


@dataclass(frozen=True)
class ConstructionState:
    steps: tuple[StepData, ...]
    policy: PrecisionPolicy
    j_mode: str
    kappa: CertScalar

    @property
    def depth(self) -> int:
        return len(self.steps)

    @property
    def lambdas(self) -> tuple[Angle, ...]:
        return tuple(s.lambda_n for s in self.steps)

    @property
    def mus(self) -> tuple[Angle, ...]:
        return tuple(s.mu_n for s in self.steps)

    @property
    def a(self) -> tuple[CertScalar, ...]:
        return tuple(s.a_n for s in self.steps)

    def nodes(self, n: int | None = None) -> cauchy.CauchyNodes:
        n = self.depth if n is None else n
        return cauchy.CauchyNodes(self.mus[:n], self.lambdas[:n])

    def j_function(self) -> Callable[[int], int]:
        try:
            return J_MODES[self.j_mode]
        except KeyError:
            raise ValueError(f"unknown j-scheme {self.j_mode!r}") from None

    # -- serialization

    def to_json_doc(self) -> dict:
        return {
            "version": 1,
            "precision": {
                "initial_bits": self.policy.initial_bits,
                "ceiling_bits": self.policy.ceiling_bits,
            },
            "j_mode": self.j_mode,
            "kappa": self.kappa.to_json(),
            "steps": [
                {
                    "n": s.n,
                    "lambda": s.lambda_n.to_json(),
                    "mu": s.mu_n.to_json(),
                    "a": s.a_n.to_json(),
                    "b": [z.to_json() for z in s.b_n],
                    "epsilon": s.epsilon_n.to_json(),
                    "C": s.C_n.to_json(),
                    "B": s.B_n.to_json(),
                    "margins": {k: v.to_json() for k, v in sorted(s.margins.items())},
                }
                for s in self.steps
            ],
        }

    @classmethod
    def from_json_doc(cls, doc: dict) -> "ConstructionState":
        # Structural well-formedness is enforced here (shapes, counts, angle
        # reduction, step numbering); the semantic inequalities are the
        # certificate suite's job, so that hand-corrupted states are
        # *verifiable* rather than unreadable.
        if doc.get("version") != 1:
            raise ValueError(f"unsupported state version {doc.get('version')!r}")
        policy = PrecisionPolicy(
            int(doc["precision"]["initial_bits"]),
            int(doc["precision"]["ceiling_bits"]),
        )
        steps = []
        for i, s in enumerate(doc["steps"], start=1):
            if int(s["n"]) != i:
                raise ValueError(f"step numbering broken at index {i}")
            b = tuple(CertComplex.from_json(z) for z in s["b"])
            if len(b) != i:
                raise ValueError(f"step {i} carries {len(b)} vector entries")
            steps.append(
                StepData(
                    n=i,
                    lambda_n=Angle.from_json(s["lambda"]),
                    mu_n=Angle.from_json(s["mu"]),
                    a_n=CertScalar.from_json(s["a"]),
                    b_n=b,
                    epsilon_n=CertScalar.from_json(s["epsilon"]),
                    C_n=CertScalar.from_json(s["C"]),
                    B_n=CertScalar.from_json(s["B"]),
                    margins={k: CertScalar.from_json(v) for k, v in s["margins"].items()},
                )
            )
        if not steps:
            raise ValueError("state has no steps")
        return cls(
            steps=tuple(steps),
            policy=policy,
            j_mode=str(doc["j_mode"]),
            kappa=CertScalar.from_json(doc["kappa"]),
        )

    def canonical_bytes(self) -> bytes:
        return json.dumps(self.to_json_doc(), sort_keys=True,
                          separators=(",", ":")).encode("utf-8")

    def state_hash(self) -> str:
        return hashlib.sha256(self.canonical_bytes()).hexdigest()


# ---------------------------------------------------------------------------
# j-scheme


def j_of(n: int) -> int:
    """Cluster-target selector: 1, then concatenated blocks (1),(1,2),(1,2,3),...

    Satisfies j(1) = 1, j(n) < n for n >= 2, and every value recurs
    infinitely often.
    """
    if n < 1:
        raise ValueError("n must be positive")
    if n == 1:
        return 1
    p = n - 1
    k = 1
    while p > k:
        p -= k
        k += 1
    return p


J_MODES: dict[str, Callable[[int], int]] = {"blocks": j_of}


# ---------------------------------------------------------------------------
# Certified comparison helpers


def _check_lt(lhs: CertScalar, rhs: CertScalar) -> tuple[Verdict, CertScalar]:
    """Strict lhs < rhs; margin is rhs - lhs, HOLDS iff margin > 0 certified."""
    margin = rhs - lhs
    if margin.is_sentinel:
        return Verdict.UNDECIDED, margin
    if margin.lo > 0:
        return Verdict.HOLDS, margin
    if margin.hi <= 0:
        return Verdict.FAILS, margin
    return Verdict.UNDECIDED, margin


def _check_le(lhs: CertScalar, rhs: CertScalar) -> tuple[Verdict, CertScalar]:
    margin = rhs - lhs
    if margin.is_sentinel:
        return Verdict.UNDECIDED, margin
    if margin.lo >= 0:
        return Verdict.HOLDS, margin
    if margin.hi < 0:
        return Verdict.FAILS, margin
    return Verdict.UNDECIDED, margin


def _coarsen(x: CertScalar, bits: int) -> CertScalar:
    if bits >= x.bits:
        return x
    from .exactcircle import _dn, _up  # outward re-rounding into fewer bits

    return CertScalar(_dn(bits).add(x.lo, 0), _up(bits).add(x.hi, 0), bits)


def _coarsen_c(z: CertComplex, bits: int) -> CertComplex:
    return CertComplex(_coarsen(z.re, bits), _coarsen(z.im, bits))


def _pow2(k: int, bits: int) -> CertScalar:
    return CertScalar.point(1, bits).scale2(k)


def _growth_chain(n: int, bits: int) -> CertScalar:
    """Exact product of (1 + 2^-j) for j = 1..n (a dyadic rational)."""
    fr = Fraction(1)
    for j in range(1, n + 1):
        fr *= Fraction((1 << j) + 1, 1 << j)
    return CertScalar.from_fraction(fr, bits)


# ---------------------------------------------------------------------------
# Step 1


def step_one(mu1: Angle, policy: PrecisionPolicy | None = None,
             j_mode: str = "blocks") -> ConstructionState:
    """Seed the construction: angle zero diagonal, weight 1/4, eigenvalue mu1."""
    policy = policy or PrecisionPolicy()
    bits = policy.initial_bits
    if mu1 == ZERO_ANGLE:
        raise BadSeed("mu1 must differ from the angle-zero diagonal point")
    gap = chord(mu1, ZERO_ANGLE, bits)
    eighth = CertScalar.from_fraction(Fraction(1, 8), bits)
    verdict, seed_margin = _check_lt(gap, eighth)
    if verdict is not Verdict.HOLDS:
        raise BadSeed(
            f"|mu1 - 1| must certify below 1/8 (got [{gap.lo}, {gap.hi}])"
        )
    a1 = CertScalar.from_fraction(Fraction(1, 4), bits)
    bbar1 = (unit_value(mu1, bits) - CertComplex.point(1, 0, bits)) / a1
    b1 = bbar1.conj()
    _, m3 = _check_lt(a1, _pow2(-1, bits))
    m3 = m3.min_with(a1)
    v4, m4 = _check_lt(abs(b1), _pow2(-1, bits))
    if v4 is not Verdict.HOLDS:
        raise BadSeed("|b1| must certify below 1/2")

    u1_norm = a1 / gap
    vinv = cauchy.CertMatrix(1, ((bbar1,),), "direct")
    c1 = cauchy.opnorm_2to1_upper(vinv).max_with(
        CertScalar.from_fraction(Fraction(5, 2), bits)
    )
    kappa_hi = gmpy2.context(precision=bits, round=gmpy2.RoundUp).add(mpfr(2), u1_norm.hi)
    kappa = CertScalar.point(kappa_hi, bits)
    step = StepData(
        n=1,
        lambda_n=ZERO_ANGLE,
        mu_n=mu1,
        a_n=a1,
        b_n=(b1,),
        epsilon_n=CertScalar.point(0, bits),
        C_n=c1,
        B_n=gap,
        margins={"seed": seed_margin, "(3)": m3, "(4)": m4},
    )
    return ConstructionState(steps=(step,), policy=policy, j_mode=j_mode, kappa=kappa)


# ---------------------------------------------------------------------------
# Per-step workspace


class _StepContext:
    """Quantities of steps 1..n-1 evaluated once per (step, precision)."""

    def __init__(self, state: ConstructionState, n: int, bits: int):
        if n < 2 or state.depth < n - 1:
            raise ValueError("steps 1..n-1 must be complete")
        self.state = state
        self.n = n
        self.bits = bits
        self.jn = state.j_function()(n)
        prev = state.steps[n - 2]
        self.lams = state.lambdas[:n - 1]
        self.mus = state.mus[:n - 1]
        self.lam_units = [unit_value(a, bits) for a in self.lams]
        self.mu_units = [unit_value(a, bits) for a in self.mus]
        self.a = [_coarsen(s.a_n, bits) for s in state.steps[:n - 1]]
        self.b_prev = [_coarsen_c(z, bits) for z in prev.b_n]
        self.coeff = [self.a[j] * self.b_prev[j].conj() for j in range(n - 1)]
        self.a_sq = [x.square() for x in self.a]
        self.sum_a_sq = _sum_scalars(self.a_sq, bits)
        self.norm_a = self.sum_a_sq.sqrt()
        self.min_a = self.a[0]
        for x in self.a[1:]:
            self.min_a = self.min_a.min_with(x)
        self.chain = _growth_chain(n, bits)
        self.one = CertComplex.point(1, 0, bits)
        mu_ref = unit_value(self.mus[self.jn - 1], bits)
        self.inv_ref = [self.one / (mu_ref - ul) for ul in self.lam_units]
        self.C_prev = _coarsen(prev.C_n, bits)
        self.B_prev = _coarsen(prev.B_n, bits)
        self.forbidden = set(self.lams) | set(self.mus)

    def sum_conditions(self, cand: Angle, eps: CertScalar):
        """Verdicts/margins of the three clustering conditions at ``cand``.

        These are the (d)/(e)/(f) family when cand is a diagonal candidate
        and the (g)/(h)/(i) family when cand is an eigenvalue candidate; the
        formulas coincide, only the anchor differs.
        """
        bits = self.bits
        u = unit_value(cand, bits)
        inv_diffs = [self.one / (u - ul) for ul in self.lam_units]
        # near-unity condition
        s = _sum_complexes([self.coeff[j] * inv_diffs[j] for j in range(self.n - 1)], bits)
        v_near, m_near = _check_lt(abs(self.one - s), eps)
        if v_near is Verdict.FAILS:
            return Verdict.FAILS, None
        # drift condition: weighted distance of the resolvent rows
        drift_sq = _sum_scalars(
            [self.a_sq[j] * (self.inv_ref[j] - inv_diffs[j]).abs2() for j in range(self.n - 1)],
            bits,
        )
        v_drift, m_drift = _check_lt(drift_sq.sqrt(), eps)
        if v_drift is Verdict.FAILS:
            return Verdict.FAILS, None
        # mass condition: growth chain times row l2-mass times eps
        mass = _sum_scalars([d.abs2() for d in inv_diffs], bits)
        lhs_mass = self.chain * mass.sqrt() * eps
        v_mass, m_mass = _check_lt(lhs_mass, _quarter_pow(self.n + 1, bits))
        verdicts = (v_near, v_mass, v_drift)
        if any(v is Verdict.FAILS for v in verdicts):
            return Verdict.FAILS, None
        if any(v is Verdict.UNDECIDED for v in verdicts):
            return Verdict.UNDECIDED, None
        return Verdict.HOLDS, (m_near, m_mass, m_drift)


def _sum_scalars(vals: Iterable[CertScalar], bits: int) -> CertScalar:
    acc = CertScalar.point(0, bits)
    for v in vals:
        acc = acc + v
    return acc


def _sum_complexes(vals: Iterable[CertComplex], bits: int) -> CertComplex:
    acc = CertComplex.point(0, 0, bits)
    for v in vals:
        acc = acc + v
    return acc


def _quarter_pow(k: int, bits: int) -> CertScalar:
    return _pow2(-2 * k, bits)


# ---------------------------------------------------------------------------
# Step-n operations


def choose_epsilon(state: ConstructionState, n: int,
                   bits: int | None = None) -> CertScalar:
    """Half the certified minimum of the three slack caps, as an exact point."""
    bits = bits or state.policy.initial_bits
    ctx = _StepContext(state, n, bits)
    return _choose_epsilon(ctx)[0]


def _choose_epsilon(ctx: _StepContext) -> tuple[CertScalar, dict[str, CertScalar]]:
    bits, n = ctx.bits, ctx.n
    cap_a = _quarter_pow(n + 1, bits)
    s_b = _sum_scalars([r.abs2() for r in ctx.inv_ref], bits).sqrt()
    cap_b = cap_a / (ctx.chain * s_b)
    cap_c = (_pow2(-n, bits) * ctx.min_a) / ((1 + ctx.norm_a) * ctx.chain)
    floor = min(cap_a.lo, cap_b.lo, cap_c.lo)
    if not gmpy2.is_finite(floor) or floor <= 0:
        raise _NeedsPrecision("slack caps not certifiably positive")
    eps = CertScalar.point(floor, bits).scale2(-1)
    margins: dict[str, CertScalar] = {}
    for name, cap_lhs in (
        ("(a)", eps),
        ("(b)", ctx.chain * s_b * eps),
        ("(c)", (1 / ctx.min_a) * (1 + ctx.norm_a) * ctx.chain * eps),
    ):
        rhs = cap_a if name in ("(a)", "(b)") else _pow2(-n, bits)
        verdict, margin = _check_lt(cap_lhs, rhs)
        if verdict is not Verdict.HOLDS:
            raise _NeedsPrecision(f"slack condition {name} undecided")
        margins[name] = margin
    return eps, margins


def choose_lambda(state: ConstructionState, n: int, eps: CertScalar,
                  bits: int | None = None) -> Angle:
    bits = bits or state.policy.initial_bits
    ctx = _StepContext(state, n, bits)
    probe = _StepContext(state, n, PROBE_BITS) if PROBE_BITS < bits else None
    return _choose_lambda(ctx, probe, eps)[0]


def _choose_lambda(ctx: _StepContext, probe: _StepContext | None,
                   eps: CertScalar) -> tuple[Angle, dict[str, CertScalar]]:
    base = ctx.mus[ctx.jn - 1]
    eps_probe = _coarsen(eps, probe.bits) if probe else eps
    undecided = False
    for m in range(1, OFFSET_EXPONENT_CAP + 1):
        cand = base + angle_normalize(1, m)
        if cand in ctx.forbidden:
            continue
        if probe is not None:
            verdict, _ = probe.sum_conditions(cand, eps_probe)
            if verdict is Verdict.FAILS:
                continue
        verdict, margins = ctx.sum_conditions(cand, eps)
        if verdict is Verdict.HOLDS:
            m_near, m_mass, m_drift = margins
            return cand, {"(d)": m_near, "(e)": m_mass, "(f)": m_drift}
        if verdict is Verdict.UNDECIDED:
            undecided = True
    if undecided:
        raise _NeedsPrecision("diagonal-angle search undecided at this precision")
    raise SearchExhausted(f"no diagonal angle accepted for step {ctx.n}")


def choose_mu(state: ConstructionState, n: int, eps: CertScalar, lambda_n: Angle,
              bits: int | None = None) -> tuple[Angle, CertScalar]:
    bits = bits or state.policy.initial_bits
    ctx = _StepContext(state, n, bits)
    probe = _StepContext(state, n, PROBE_BITS) if PROBE_BITS < bits else None
    angle, b_n, _ = _choose_mu(ctx, probe, eps, lambda_n)
    return angle, b_n


def _mu_ratio_margin(ctx: _StepContext, lambda_n: Angle, m: int,
                     chords_to_lam: list[CertScalar]) -> tuple[Verdict, CertScalar | None]:
    """Gap-ratio condition: |mu_n - lambda_n| / |mu_i - lambda_n| < 2^-n / C_{n-1}."""
    bits = ctx.bits
    gap = chord_of_fraction(Fraction(1, 1 << m), bits)
    rhs = _pow2(-ctx.n, bits) / ctx.C_prev
    margin: CertScalar | None = None
    for ch in chords_to_lam:
        verdict, mg = _check_lt(gap / ch, rhs)
        if verdict is not Verdict.HOLDS:
            return verdict, None
        margin = mg if margin is None else margin.min_with(mg)
    if margin is None:  # n == 1 cannot happen here; loop always runs
        raise ConstructionError("empty gap-ratio scope")
    return Verdict.HOLDS, margin


def _choose_mu(ctx: _StepContext, probe: _StepContext | None, eps: CertScalar,
               lambda_n: Angle):
    bits, n = ctx.bits, ctx.n
    forbidden = ctx.forbidden | {lambda_n}
    chords_to_lam = [chord(mu_i, lambda_n, bits) for mu_i in ctx.mus]
    chords_probe = (
        [chord(mu_i, lambda_n, probe.bits) for mu_i in ctx.mus] if probe else None
    )
    eps_probe = _coarsen(eps, probe.bits) if probe else eps
    lam_full = (*ctx.lams, lambda_n)
    bound_factor = 1 + _pow2(-n, bits)
    undecided = False
    for m in range(1, OFFSET_EXPONENT_CAP + 1):
        cand = lambda_n + angle_normalize(1, m)
        if cand in forbidden:
            continue
        if probe is not None:
            verdict, _ = _mu_ratio_margin(probe, lambda_n, m, chords_probe)
            if verdict is Verdict.FAILS:
                continue
            verdict, _ = probe.sum_conditions(cand, eps_probe)
            if verdict is Verdict.FAILS:
                continue
        verdict, ratio_margin = _mu_ratio_margin(ctx, lambda_n, m, chords_to_lam)
        if verdict is Verdict.FAILS:
            continue
        if verdict is Verdict.UNDECIDED:
            undecided = True
            continue
        verdict, sum_margins = ctx.sum_conditions(cand, eps)
        if verdict is Verdict.FAILS:
            continue
        if verdict is Verdict.UNDECIDED:
            undecided = True
            continue
        # inverse-norm growth condition
        try:
            nodes = cauchy.CauchyNodes((*ctx.mus, cand), lam_full)
        except cauchy.NodeCollision:
            continue
        inv = cauchy.cauchy_inverse(nodes, bits)
        ub = cauchy.opnorm_upper(inv)
        verdict, norm_margin = _check_le(ub, bound_factor * ctx.B_prev)
        if verdict is Verdict.FAILS:
            continue
        if verdict is Verdict.UNDECIDED:
            undecided = True
            continue
        m_near, m_mass, m_drift = sum_margins
        margins = {
            "(g)": m_near,
            "(h)": m_mass,
            "(i)": m_drift,
            "(j)": ratio_margin,
            "(k)": norm_margin,
        }
        return cand, ub, margins
    if undecided:
        raise _NeedsPrecision("eigenvalue-angle search undecided at this precision")
    raise SearchExhausted(f"no eigenvalue angle accepted for step {n}")


def coefficients(state: ConstructionState, n: int, lambda_n: Angle, mu_n: Angle,
                 bits: int | None = None) -> tuple[CertScalar, tuple[CertComplex, ...]]:
    """Weight a_n = 2^-(n+1) |mu_n - lambda_n| and the refreshed vector b^(n)."""
    bits = bits or state.policy.initial_bits
    gap = chord(mu_n, lambda_n, bits)
    a_n = gap.scale2(-(n + 1))
    nodes = cauchy.CauchyNodes((*state.mus[:n - 1], mu_n), (*state.lambdas[:n - 1], lambda_n))
    c = cauchy.solve_ones(nodes, bits)
    a_all = [_coarsen(s.a_n, bits) for s in state.steps[:n - 1]] + [a_n]
    b_n = tuple((c[i] / a_all[i]).conj() for i in range(n))
    return a_n, b_n


def bound_C(state: ConstructionState, n: int, bits: int | None = None) -> CertScalar:
    """Spanning constant: max of the certified l2->l1 bound and forced growth."""
    bits = bits or state.policy.initial_bits
    if state.depth < n:
        raise ValueError("step n must be committed before bounding its constant")
    vinv = eigvec_inverse_matrix(state, n, bits)
    c = cauchy.opnorm_2to1_upper(vinv)
    floor = CertScalar.from_fraction(Fraction(2), bits) + _pow2(-n, bits)
    c = c.max_with(floor)
    if n >= 2:
        c = c.max_with(_coarsen(state.steps[n - 2].C_n, bits) + _pow2(-n, bits))
    return c


def eigvec_inverse_matrix(state: ConstructionState, n: int, bits: int) -> cauchy.CertMatrix:
    """Inverse of the eigenvector column matrix: entries (M^-1)[j][i] / a_j."""
    inv = cauchy.cauchy_inverse(state.nodes(n), bits)
    a = [_coarsen(s.a_n, bits) for s in state.steps[:n]]
    rows = tuple(
        tuple(inv.entries[j][i] / a[j] for j in range(n)) for i in range(n)
    )
    return cauchy.CertMatrix(n, rows, "direct")


# ---------------------------------------------------------------------------
# Structural margins of a freshly assembled step


def _structural_margins(ctx: _StepContext, lambda_n: Angle, mu_n: Angle,
                        eps: CertScalar, a_n: CertScalar,
                        b_n: tuple[CertComplex, ...]) -> dict[str, CertScalar]:
    bits, n = ctx.bits, ctx.n
    out: dict[str, CertScalar] = {}

    def need(name: str, verdict: Verdict, margin: CertScalar) -> None:
        if verdict is Verdict.FAILS:
            raise ConstructionError(f"committed step violates {name}")
        if verdict is Verdict.UNDECIDED:
            raise _NeedsPrecision(f"{name} undecided at commit")
        out[name] = margin

    v, m = _check_lt(a_n, _pow2(-n, bits))
    need("(3)", v, m.min_with(a_n))
    v, m = _check_lt(abs(b_n[n - 1]), _pow2(-n, bits))
    need("(4)", v, m)

    deltas = [(b_n[j] - ctx.b_prev[j]).abs2() for j in range(n - 1)]
    sum_delta = _sum_scalars(deltas, bits)
    v, m = _check_lt(sum_delta.sqrt(), _pow2(-n, bits))
    need("(5)", v, m)

    weighted = _sum_scalars(
        [ctx.a_sq[j] * deltas[j] for j in range(n - 1)], bits
    )
    v, m = _check_lt(weighted.sqrt(), eps * ctx.chain)
    need("(l)", v, m)

    tail = sum_delta + b_n[n - 1].abs2()
    v, m = _check_lt(tail.sqrt(), _pow2(-(n - 1), bits))
    need("(9')", v, m)

    rhs6 = _pow2(-n, bits) / ctx.C_prev
    margin6: CertScalar | None = None
    lam_unit = unit_value(lambda_n, bits)
    for i in range(n - 1):
        drift = a_n / chord(ctx.mus[i], lambda_n, bits)
        v, m = _check_lt(drift, rhs6)
        if v is Verdict.FAILS:
            raise ConstructionError("committed step violates (6)")
        if v is Verdict.UNDECIDED:
            raise _NeedsPrecision("(6) undecided at commit")
        margin6 = m if margin6 is None else margin6.min_with(m)
    out["(6)"] = margin6 if margin6 is not None else _pow2(-n, bits)

    mu_ref_unit = unit_value(ctx.mus[ctx.jn - 1], bits)
    mu_unit = unit_value(mu_n, bits)
    one = ctx.one
    terms = []
    for j, lu in enumerate((*ctx.lam_units, lam_unit)):
        d = one / (mu_ref_unit - lu) - one / (mu_unit - lu)
        a_j = ctx.a_sq[j] if j < n - 1 else a_n.square()
        terms.append(a_j * d.abs2())
    v, m = _check_lt(_sum_scalars(terms, bits).sqrt(), _pow2(-n, bits))
    need("(7)", v, m)
    return out


# ---------------------------------------------------------------------------
# The induction driver


def storage_bits(state: ConstructionState) -> int:
    """Precision the run currently stores its derived intervals at."""
    return max(s.a_n.bits for s in state.steps)


def upgrade_state(state: ConstructionState, bits: int) -> ConstructionState:
    """Recompute every derived interval from the exact angles at ``bits``.

    The committed angles, eps points and kappa are exact and unchanged; the
    a, b, B and C enclosures shrink around the same exact values, so every
    previously certified margin stays certified.  Needed when the run's
    precision doubles: stored widths of earlier steps would otherwise cap
    how small later slack bounds can be certified.
    """
    if bits <= storage_bits(state):
        return state
    steps: list[StepData] = []
    for s in state.steps:
        n = s.n
        nodes = cauchy.CauchyNodes(state.mus[:n], state.lambdas[:n])
        if n == 1:
            a_n = CertScalar.from_fraction(Fraction(1, 4), bits)
            b_bound = chord(s.mu_n, s.lambda_n, bits)
        else:
            a_n = chord(s.mu_n, s.lambda_n, bits).scale2(-(n + 1))
            b_bound = cauchy.opnorm_upper(cauchy.cauchy_inverse(nodes, bits))
        c = cauchy.solve_ones(nodes, bits)
        a_all = [steps[j].a_n for j in range(n - 1)] + [a_n]
        b_n = tuple((c[i] / a_all[i]).conj() for i in range(n))
        steps.append(replace(s, a_n=a_n, b_n=b_n, B_n=b_bound))
        draft = replace(state, steps=tuple(steps))
        steps[-1] = replace(steps[-1], C_n=bound_C(draft, n, bits))
    return replace(state, steps=tuple(steps))


def extend(state: ConstructionState) -> ConstructionState:
    """Append one step, escalating precision on UNDECIDED verdicts."""
    if state.depth < 1:
        raise ValueError("state must carry at least step 1")
    n = state.depth + 1
    bits = max(state.policy.initial_bits, storage_bits(state))
    while True:
        try:
            return _extend_at(upgrade_state(state, bits), n, bits)
        except _NeedsPrecision:
            if bits * 2 > state.policy.ceiling_bits:
                raise PrecisionExhausted(
                    f"step {n} needs more than {state.policy.ceiling_bits} bits"
                ) from None
            bits *= 2


def _extend_at(state: ConstructionState, n: int, bits: int) -> ConstructionState:
    ctx = _StepContext(state, n, bits)
    probe = _StepContext(state, n, PROBE_BITS) if PROBE_BITS < bits else None
    eps, margins = _choose_epsilon(ctx)
    lambda_n, lam_margins = _choose_lambda(ctx, probe, eps)
    mu_n, b_bound, mu_margins = _choose_mu(ctx, probe, eps, lambda_n)
    a_n, b_n = coefficients(state, n, lambda_n, mu_n, bits)
    margins.update(lam_margins)
    margins.update(mu_margins)
    margins.update(_structural_margins(ctx, lambda_n, mu_n, eps, a_n, b_n))
    draft = StepData(
        n=n,
        lambda_n=lambda_n,
        mu_n=mu_n,
        a_n=a_n,
        b_n=b_n,
        epsilon_n=eps,
        C_n=CertScalar.point(0, bits),  # provisional; replaced below
        B_n=b_bound,
        margins=margins,
    )
    candidate = replace(state, steps=(*state.steps, draft))
    c_n = bound_C(candidate, n, bits)
    step = replace(draft, C_n=c_n)
    new_state = replace(state, steps=(*state.steps, step))

    from . import certify  # deferred: certify depends on this module

    cert = certify.full_certificate(new_state, precision_bits=bits)
    if any(c.verdict is Verdict.UNDECIDED for c in cert.checks):
        raise _NeedsPrecision("certificate undecided on the committed prefix")
    bad = [c.name for c in cert.checks if c.verdict is Verdict.FAILS and c.gating]
    if bad:
        raise ConstructionError(f"committed prefix fails checks {sorted(set(bad))}")
    return new_state


def construct(depth: int, mu1: Angle = DEFAULT_SEED,
              policy: PrecisionPolicy | None = None, j_mode: str = "blocks",
              progress: Callable[[StepData], None] | None = None) -> ConstructionState:
    """Run the induction from step 1 to ``depth``."""
    if depth < 1:
        raise ValueError("depth must be at least 1")
    state = step_one(mu1, policy, j_mode)
    if progress is not None:
        progress(state.steps[0])
    while state.depth < depth:
        state = extend(state)
        if progress is not None:
            progress(state.steps[-1])
    return state
