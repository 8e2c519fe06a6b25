import json
from fractions import Fraction

import mpmath
import pytest

from conftest import mp_inside, mp_value
from hyperseed import certify
from hyperseed.exactcircle import (
    Angle,
    CertScalar,
    Verdict,
    ZERO_ANGLE,
    angle_normalize,
    cert_le,
)
from hyperseed.induction import (
    BadSeed,
    ConstructionState,
    PrecisionPolicy,
    _StepContext,
    _growth_chain,
    choose_epsilon,
    construct,
    extend,
    j_of,
    step_one,
)

BITS = 1024
POLICY = PrecisionPolicy(BITS, 1 << 20)


# -- j-scheme


def test_j_first_values():
    assert j_of(1) == 1
    assert j_of(2) == 1
    assert j_of(4) == 2
    assert j_of(7) == 3
    assert [j_of(n) for n in range(2, 11)] == [1, 1, 2, 1, 2, 3, 1, 2, 3]


def test_j_properties_to_ten_thousand():
    counts = {}
    for n in range(2, 10_001):
        v = j_of(n)
        assert 1 <= v < n
        counts[v] = counts.get(v, 0) + 1
    # every small value recurs many times within the horizon
    for k in range(1, 30):
        assert counts[k] >= 2


def test_j_rejects_nonpositive():
    with pytest.raises(ValueError):
        j_of(0)


# -- step 1 oracle values (independent high-precision evaluation)


def test_step_one_default_seed_values():
    st = step_one(Angle(1, 6), POLICY)
    s = st.steps[0]
    assert s.lambda_n == ZERO_ANGLE and s.mu_n == Angle(1, 6)
    assert s.a_n.contains(Fraction(1, 4))
    with mpmath.workprec(300):
        gap = 2 * mpmath.sin(mpmath.pi / 64)
        assert mp_inside(abs(s.b_n[0]), 4 * gap)
        assert mp_inside(s.B_n, gap)
        u1 = mpmath.mpf("0.25") / gap
        assert abs(mp_value(st.kappa.lo) - (2 + u1)) < mpmath.mpf("1e-300")
    # frozen decimals from the oracle above
    assert abs(float(abs(s.b_n[0]).mid()) - 0.3925413946193441) < 1e-15
    assert abs(float(st.kappa.mid()) - 4.547502030887014) < 1e-14
    assert s.C_n.contains(Fraction(5, 2))
    assert float(s.C_n.width()) == 0.0
    assert s.epsilon_n.lo == 0 == s.epsilon_n.hi
    assert set(s.margins) == {"seed", "(3)", "(4)"}
    assert all(m.lo > 0 for m in s.margins.values())


def test_step_one_bad_seeds():
    with pytest.raises(BadSeed):
        step_one(Angle(1, 1), POLICY)  # antipodal: chord 2 >= 1/8
    with pytest.raises(BadSeed):
        step_one(ZERO_ANGLE, POLICY)  # coincides with lambda_1
    with pytest.raises(BadSeed):
        step_one(Angle(1, 5), POLICY)  # chord 2 sin(pi/32) ~ 0.196 >= 1/8


# -- slack choice


def test_epsilon_cap_and_halving(state4):
    eps = state4.steps[1].epsilon_n
    cap_a = CertScalar.from_fraction(Fraction(1, 4 ** 3), BITS)
    assert eps.hi <= cap_a.lo / 2  # (a) alone caps at 4^-3, then halved
    assert eps.lo > 0


def test_epsilon_equals_half_of_min_cap(state4):
    # independent high-precision recomputation of the three caps for n = 2
    eps = choose_epsilon(state4, 2, BITS)
    with mpmath.workprec(300):
        gap = 2 * mpmath.sin(mpmath.pi / 64)
        chain = mpmath.mpf(1)
        for j in range(1, 3):
            chain *= 1 + mpmath.mpf(2) ** -j
        cap_a = mpmath.mpf(4) ** -3
        cap_b = cap_a / (chain * (1 / gap))
        a1 = mpmath.mpf("0.25")
        cap_c = (mpmath.mpf(2) ** -2) / ((1 / a1) * (1 + a1) * chain)
        want = min(cap_a, cap_b, cap_c) / 2
        got = mp_value(eps.lo)
        assert abs(got - want) / want < mpmath.mpf("1e-9")
    assert eps.lo == state4.steps[1].epsilon_n.lo


def test_epsilon_certified_below_quarter_power(state4):
    for s in state4.steps[1:]:
        cap = CertScalar.from_fraction(Fraction(1, 4 ** (s.n + 1)), BITS)
        assert s.epsilon_n.hi < cap.lo


# -- committed search offsets


def test_committed_offsets_are_minimal_powers(state4):
    # regression freeze: first accepted offsets at 1024 bits
    s2 = state4.steps[1]
    assert (s2.lambda_n - state4.mus[0]) == Angle(1, 19)
    assert (s2.mu_n - s2.lambda_n) == Angle(1, 23)


def test_public_choice_ops_reproduce_committed_step(state4):
    # the standalone operations replay the same deterministic search
    from hyperseed.induction import choose_lambda, choose_mu
    from hyperseed.exactcircle import cert_le

    s2 = state4.steps[1]
    eps = choose_epsilon(state4, 2, BITS)
    assert eps.lo == s2.epsilon_n.lo
    lam = choose_lambda(state4, 2, eps, BITS)
    assert lam == s2.lambda_n
    mu, b_bound = choose_mu(state4, 2, eps, lam, BITS)
    assert mu == s2.mu_n
    assert b_bound.overlaps(s2.B_n)


def test_lambda_offset_never_zero(state4):
    for s in state4.steps[1:]:
        jn = state4.j_function()(s.n)
        assert s.lambda_n != state4.mus[jn - 1]


def test_search_rejected_all_smaller_offsets(state4):
    # every offset below the committed one must fail some accepted condition
    n = 2
    ctx = _StepContext(state4, n, BITS)
    eps = state4.steps[1].epsilon_n
    committed = (state4.steps[1].lambda_n - state4.mus[0]).den_pow2
    for m in range(1, committed):
        cand = state4.mus[0] + angle_normalize(1, m)
        if cand in ctx.forbidden:
            continue
        verdict, _ = ctx.sum_conditions(cand, eps)
        assert verdict is not Verdict.HOLDS, f"offset 2^-{m} wrongly acceptable"


def test_all_step_margins_hold(state4):
    for s in state4.steps[1:]:
        expected = {"(a)", "(b)", "(c)", "(d)", "(e)", "(f)", "(g)", "(h)",
                    "(i)", "(j)", "(k)", "(3)", "(4)", "(5)", "(l)", "(6)",
                    "(7)", "(9')"}
        assert set(s.margins) == expected
        for name, margin in s.margins.items():
            assert margin.lo >= 0, f"step {s.n} margin {name} not positive"
            if name != "(k)":
                assert margin.lo > 0


def test_inverse_norm_chain(state4):
    # B_n <= (1 + 2^-n) B_{n-1}, hence below prod_j (1 + 2^-j) outright
    for s in state4.steps[1:]:
        prev = state4.steps[s.n - 2]
        rhs = (1 + CertScalar.point(1, BITS).scale2(-s.n)) * prev.B_n
        assert cert_le(s.B_n, rhs) is not Verdict.FAILS
        chain = _growth_chain(s.n, BITS)
        assert s.B_n.hi < chain.lo  # uses B_1 < 1


def test_spanning_constant_growth(state4):
    for s in state4.steps[1:]:
        prev = state4.steps[s.n - 2]
        assert s.C_n.lo > prev.C_n.hi
        assert s.C_n.lo > 2


def test_weight_scaling_rule():
    # with an exactly dyadic gap 2^-10 the weight is exactly 2^-(n+11)
    gap = CertScalar.point(1, 64).scale2(-10)
    for n in (1, 3, 7):
        a_n = gap.scale2(-(n + 1))
        want = Fraction(1, 1 << (n + 11))
        assert a_n.contains(want) and float(a_n.width()) == 0.0


def test_distinctness_exact(state4):
    angles = (*state4.lambdas, *state4.mus)
    assert len(set(angles)) == len(angles)


# -- determinism and persistence


def test_construction_is_deterministic():
    a = construct(3, policy=POLICY)
    b = construct(3, policy=POLICY)
    assert a.canonical_bytes() == b.canonical_bytes()
    assert a.state_hash() == b.state_hash()


def test_state_json_roundtrip(state4):
    doc = json.loads(json.dumps(state4.to_json_doc()))
    back = ConstructionState.from_json_doc(doc)
    assert back.state_hash() == state4.state_hash()
    cert_a = certify.full_certificate(state4)
    cert_b = certify.full_certificate(back)
    assert [c.verdict for c in cert_a.checks] == [c.verdict for c in cert_b.checks]
    assert cert_a.content_hash() == cert_b.content_hash()


def test_extend_appends_exactly_one_step(state4):
    st2 = ConstructionState(state4.steps[:2], state4.policy, state4.j_mode,
                            state4.kappa)
    st3 = extend(st2)
    assert st3.depth == 3
    assert st3.steps[:2] == state4.steps[:2]
    assert st3.steps[2].lambda_n == state4.steps[2].lambda_n
    assert st3.steps[2].mu_n == state4.steps[2].mu_n


def test_structural_load_validation(state4):
    doc = state4.to_json_doc()
    bad = json.loads(json.dumps(doc))
    bad["steps"][1]["n"] = 7
    with pytest.raises(ValueError):
        ConstructionState.from_json_doc(bad)
    bad = json.loads(json.dumps(doc))
    bad["steps"][2]["b"].pop()
    with pytest.raises(ValueError):
        ConstructionState.from_json_doc(bad)
    bad = json.loads(json.dumps(doc))
    bad["version"] = 2
    with pytest.raises(ValueError):
        ConstructionState.from_json_doc(bad)
    bad = json.loads(json.dumps(doc))
    bad["steps"][0]["lambda"] = {"num": "2", "den_pow2": 2}  # unreduced
    with pytest.raises(ValueError):
        ConstructionState.from_json_doc(bad)


def test_precision_escalation_upgrades_whole_prefix():
    # 256 starting bits cannot certify the step-7 slack conditions: the run
    # doubles its precision and recomputes every stored enclosure from the
    # exact angles, so the certificate stays decidable
    from hyperseed.induction import storage_bits

    st = construct(7, policy=PrecisionPolicy(256, 1 << 20))
    assert storage_bits(st) > 256
    assert len({s.a_n.bits for s in st.steps}) == 1  # uniform run precision
    cert = certify.full_certificate(st)
    assert cert.passing and not cert.undecided_names()
    # the committed angles agree with a run that started wide enough
    wide = construct(7, policy=PrecisionPolicy(1024, 1 << 20))
    assert st.lambdas == wide.lambdas and st.mus == wide.mus


def test_precision_ceiling_exhausts():
    from hyperseed.exactcircle import PrecisionExhausted

    with pytest.raises(PrecisionExhausted):
        construct(8, policy=PrecisionPolicy(256, 512))


def test_policy_validation():
    with pytest.raises(ValueError):
        PrecisionPolicy(8, 1 << 20)
    with pytest.raises(ValueError):
        PrecisionPolicy(4096, 2048)


def test_unknown_j_mode_rejected(state4):
    broken = ConstructionState(state4.steps, state4.policy, "spiral",
                               state4.kappa)
    with pytest.raises(ValueError):
        broken.j_function()
