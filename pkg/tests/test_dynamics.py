import json
from fractions import Fraction

import gmpy2
import mpmath
import pytest

from conftest import mp_value
from hyperseed.dynamics import (
    DepthExceeded,
    OperatorTruncation,
    assemble,
    brute_spectrum,
    eigen_residual,
    eigenvector,
    orbit,
    root_of_unity_order,
)
from hyperseed.exactcircle import (
    Angle,
    CertComplex,
    CertScalar,
    ZERO_ANGLE,
    angle_normalize,
    unit_value,
)

BITS = 1024


def test_assemble_dim_one_multiplies_by_eigenvalue(state4):
    T = assemble(state4, 1)
    e1 = [CertComplex.point(1, 0, BITS)]
    out = T.apply(e1)
    mu1 = unit_value(state4.mus[0], BITS)
    assert out[0].re.overlaps(mu1.re) and out[0].im.overlaps(mu1.im)


def test_assemble_depth_guard(state4):
    with pytest.raises(DepthExceeded):
        assemble(state4, 5)
    with pytest.raises(DepthExceeded):
        assemble(state4, 0)


def test_zeroed_perturbation_is_isometric(state4):
    T = assemble(state4, 4, zero_perturbation=True)
    tr = orbit(T, [0.3 + 0.1j, -0.2, 0.5j, 0.7], steps=16)
    norms = [float(r["norm"]) for r in tr.records]
    assert len(tr.records) == 17
    assert max(norms) - min(norms) < 1e-250


def test_orbit_zero_steps_and_guards(state4):
    T = assemble(state4, 2)
    tr = orbit(T, [1, 0], steps=0)
    assert len(tr.records) == 1 and tr.records[0]["iter"] == 0
    with pytest.raises(ValueError):
        orbit(T, [0, 0], steps=1)
    with pytest.raises(ValueError):
        orbit(T, [1], steps=1)


def test_orbit_of_eigenvector_drifts_within_residual(state4):
    # iterating an exact eigenvector multiplies by a unimodular number, so
    # the norm stays put up to the certified residual
    T = assemble(state4, 4)
    u1 = eigenvector(state4, 1, 4)
    start = [complex(float(z.re.mid()), float(z.im.mid())) for z in u1]
    tr = orbit(T, start, steps=10)
    norms = [float(r["norm"]) for r in tr.records]
    resid = float(eigen_residual(state4, 4, 1).hi)
    assert max(norms) - min(norms) <= 10 * resid + 1e-12


def test_midpoint_data_keeps_working_precision(state4):
    # the mpc constructor rounds to the thread context; midpoint extraction
    # must pin its own precision instead
    T = assemble(state4, 3)
    diag, a, b = T.midpoint_data()
    assert diag[0].precision == (BITS, BITS)
    assert b[2].precision == (BITS, BITS)


def test_orbit_certified_mode_matches_midpoint(state4):
    T = assemble(state4, 2)
    m = orbit(T, [1, 1j], steps=3)
    c = orbit(T, [1, 1j], steps=3, certified=True)
    for rm, rc in zip(m.records, c.records):
        assert abs(float(rm["norm"]) - float(rc["norm"])) < 1e-15


def test_orbit_distances_to_targets(state4):
    T = assemble(state4, 2)
    tr = orbit(T, [1, 0], steps=2, targets=[[1, 0], [0, 1]])
    assert tr.records[0]["dists"][0] == 0
    assert float(tr.records[0]["dists"][1]) == pytest.approx(2 ** 0.5)
    csv = tr.to_csv()
    lines = csv.splitlines()
    assert lines[0] == "iter,norm,dist_1,dist_2"
    assert len(lines) == 4
    assert csv.endswith("\n") and "\r" not in csv


def test_eigen_residual_exact_at_full_depth(state4):
    for i in range(1, 5):
        r = eigen_residual(state4, 4, i)
        assert r.contains(0)
        assert r.hi < gmpy2.mpfr(2) ** -64


def test_eigen_residual_partial_depth_bounded_by_kappa(state4):
    for k in range(1, 4):
        for i in range(1, k + 1):
            r = eigen_residual(state4, 4, i, k=k)
            bound = state4.kappa.scale2(-(k - 1))
            assert r.hi < bound.lo


def test_eigen_residual_detects_scaled_weights(state4):
    scale = CertScalar.from_fraction(Fraction(101, 100), BITS)
    r = eigen_residual(state4, 4, 2, a_scale=scale)
    assert r.lo > 0  # interval bounded away from zero


def test_eigen_residual_guards(state4):
    with pytest.raises(DepthExceeded):
        eigen_residual(state4, 5, 1)
    with pytest.raises(ValueError):
        eigen_residual(state4, 4, 5)


def test_brute_spectrum_dim_one(state4):
    spec = brute_spectrum(state4, 1)
    mu1 = unit_value(state4.mus[0], BITS)
    assert abs(float(spec[0].re.mid() - mu1.re.mid())) < 1e-30
    assert abs(float(spec[0].im.mid() - mu1.im.mid())) < 1e-30


def test_brute_spectrum_dim_two_quadratic_oracle(state4):
    # explicit quadratic formula on the dense 2x2 entries
    spec = brute_spectrum(state4, 2)
    with mpmath.workprec(600):
        s2 = state4.steps[1]
        lam = [mpmath.exp(2j * mpmath.pi * Fraction(t.num, 1 << t.den_pow2))
               for t in state4.lambdas[:2]]
        a = [mp_value(s.a_n.mid()) for s in state4.steps[:2]]
        b = [mpmath.mpc(mp_value(z.re.mid()), mp_value(z.im.mid()))
             for z in s2.b_n]
        t = [[lam[p] * (1 if p == q else 0) + a[p] * mpmath.conj(b[q])
              for q in range(2)] for p in range(2)]
        tr = t[0][0] + t[1][1]
        det = t[0][0] * t[1][1] - t[0][1] * t[1][0]
        disc = mpmath.sqrt(tr * tr - 4 * det)
        roots = [(tr + disc) / 2, (tr - disc) / 2]
        for z in spec:
            zv = mpmath.mpc(mp_value(z.re.mid()), mp_value(z.im.mid()))
            assert min(abs(zv - r) for r in roots) < mpmath.mpf("1e-100")


def test_brute_spectrum_matches_constructed_eigenvalues(state4):
    for n in range(1, 5):
        spec = brute_spectrum(state4, n)
        for i, z in enumerate(spec):
            mu = unit_value(state4.mus[i], BITS)
            err = abs(complex(float((z.re - mu.re).mid()),
                              float((z.im - mu.im).mid())))
            assert err < 1e-10
            assert abs(float(abs(z).mid()) - 1) < 1e-10


def test_brute_spectrum_guard(state4):
    with pytest.raises(DepthExceeded):
        brute_spectrum(state4, 5)


def test_root_of_unity_order():
    assert root_of_unity_order(ZERO_ANGLE) == 1
    assert root_of_unity_order(Angle(1, 1)) == 2
    assert root_of_unity_order(Angle(3, 3)) == 8


def test_spectrum_periodicity_exact(state4):
    for mu in state4.mus:
        order = root_of_unity_order(mu)
        assert angle_normalize(mu.num * order, mu.den_pow2) == ZERO_ANGLE


def test_rank_one_structure(state4):
    # all 2x2 minors of the perturbation matrix a_p conj(b_q) contain zero
    T = assemble(state4, 3)
    for p in range(3):
        for q in range(3):
            for r in range(3):
                for s in range(3):
                    m = (T.a[p] * T.b[q].conj() * T.a[r] * T.b[s].conj()
                         - T.a[p] * T.b[s].conj() * T.a[r] * T.b[q].conj())
                    assert m.contains(0, 0)


def test_operator_serialization_roundtrip(state4):
    T = assemble(state4, 4)
    back = OperatorTruncation.from_json_doc(json.loads(json.dumps(T.to_json_doc())))
    assert back.N == T.N and back.diag == T.diag
    assert back.b[2].re.lo == T.b[2].re.lo
    out1 = T.apply([CertComplex.point(1, 0, BITS)] + [CertComplex.point(0, 0, BITS)] * 3)
    out2 = back.apply([CertComplex.point(1, 0, BITS)] + [CertComplex.point(0, 0, BITS)] * 3)
    assert out1[0].re.lo == out2[0].re.lo
