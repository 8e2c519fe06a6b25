import random

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import mp_inside, overlap_c
from hyperseed.cauchy import (
    CauchyNodes,
    CertMatrix,
    NodeCollision,
    build,
    cauchy_det,
    cauchy_inverse,
    contains_identity,
    eliminate_det,
    eliminate_inverse,
    matmul,
    mat_vec,
    opnorm_2to1_upper,
    opnorm_upper,
    residue_solve_ones,
    solve_ones,
)
from hyperseed.exactcircle import (
    Angle,
    CertComplex,
    ZERO_ANGLE,
    angle_normalize,
    unit_value,
)

BITS = 256


def random_nodes(rng: random.Random, n: int) -> CauchyNodes:
    seen: set[Angle] = set()
    out: list[Angle] = []
    while len(out) < 2 * n:
        a = angle_normalize(rng.randrange(1 << 12), 12)
        if a not in seen:
            seen.add(a)
            out.append(a)
    return CauchyNodes(tuple(out[:n]), tuple(out[n:]))


def to_numpy(M: CertMatrix) -> np.ndarray:
    return np.array(
        [[complex(float(e.re.mid()), float(e.im.mid())) for e in row]
         for row in M.entries]
    )


def test_nodes_reject_collisions():
    with pytest.raises(NodeCollision):
        CauchyNodes((Angle(1, 3),), (Angle(1, 3),))
    with pytest.raises(NodeCollision):
        CauchyNodes((Angle(1, 3), Angle(1, 3)), (ZERO_ANGLE, Angle(1, 1)))
    with pytest.raises(NodeCollision):
        CauchyNodes((Angle(1, 3),), (ZERO_ANGLE, Angle(1, 1)))


def test_build_single_entry_against_mpmath():
    nodes = CauchyNodes((Angle(1, 6),), (ZERO_ANGLE,))
    M = build(nodes, BITS)
    with mpmath.workprec(400):
        z = 1 / (mpmath.exp(2j * mpmath.pi / 64) - 1)
        assert mp_inside(M.entries[0][0].re, z.real)
        assert mp_inside(M.entries[0][0].im, z.imag)
        # magnitude ~ 1 / (2 sin(pi/64)) ~ 1 / 0.09813...
        mag = abs(M.entries[0][0])
        assert mp_inside(mag, 1 / (2 * mpmath.sin(mpmath.pi / 64)))
    assert abs(float(mag.mid()) - 1 / 0.09813534865483604) < 1e-12


def test_build_antipodal_entry():
    nodes = CauchyNodes((Angle(1, 1),), (ZERO_ANGLE,))
    M = build(nodes, BITS)
    assert M.entries[0][0].re.contains(-0.5)
    assert M.entries[0][0].im.contains(0)


def test_build_matches_elementwise_evaluation():
    nodes = CauchyNodes((Angle(1, 1), Angle(1, 2)), (ZERO_ANGLE, Angle(3, 2)))
    M = build(nodes, BITS)
    one = CertComplex.point(1, 0, BITS)
    for i in range(2):
        for j in range(2):
            direct = one / (unit_value(nodes.mu[i], BITS) - unit_value(nodes.lam[j], BITS))
            assert overlap_c(M.entries[i][j], direct)


def test_det_single_is_entry():
    nodes = CauchyNodes((Angle(1, 6),), (ZERO_ANGLE,))
    det = cauchy_det(nodes, BITS)
    M = build(nodes, BITS)
    assert overlap_c(det, M.entries[0][0])


def test_det_two_by_two_cofactor_oracle():
    nodes = CauchyNodes((Angle(1, 1), Angle(1, 2)), (ZERO_ANGLE, Angle(3, 2)))
    M = build(nodes, BITS)
    e = M.entries
    direct = e[0][0] * e[1][1] - e[0][1] * e[1][0]
    assert overlap_c(cauchy_det(nodes, BITS), direct)


def test_det_row_swap_negates():
    rng = random.Random(7)
    nodes = random_nodes(rng, 3)
    swapped = CauchyNodes((nodes.mu[1], nodes.mu[0], nodes.mu[2]), nodes.lam)
    s = cauchy_det(nodes, BITS) + cauchy_det(swapped, BITS)
    assert s.re.contains(0) and s.im.contains(0)


def test_inverse_single_is_node_difference():
    nodes = CauchyNodes((Angle(1, 6),), (ZERO_ANGLE,))
    inv = cauchy_inverse(nodes, BITS)
    diff = unit_value(Angle(1, 6), BITS) - unit_value(ZERO_ANGLE, BITS)
    assert overlap_c(inv.entries[0][0], diff)


def test_solve_ones_single():
    nodes = CauchyNodes((Angle(1, 6),), (ZERO_ANGLE,))
    c = solve_ones(nodes, BITS)
    diff = unit_value(Angle(1, 6), BITS) - unit_value(ZERO_ANGLE, BITS)
    assert overlap_c(c[0], diff)


@pytest.mark.parametrize("n,seed", [(2, 1), (3, 2), (4, 3), (5, 4), (6, 5)])
def test_inverse_formula_vs_elimination(n, seed):
    nodes = random_nodes(random.Random(seed), n)
    M = build(nodes, BITS)
    inv_f = cauchy_inverse(nodes, BITS)
    inv_e = eliminate_inverse(M)
    for i in range(n):
        for j in range(n):
            assert overlap_c(inv_f.entries[i][j], inv_e.entries[i][j])
    assert contains_identity(matmul(M, inv_f))
    assert contains_identity(matmul(M, inv_e))
    assert inv_f.provenance == "inverse-by-formula"
    assert inv_e.provenance == "inverse-by-elimination"


@pytest.mark.parametrize("n,seed", [(2, 11), (4, 12), (6, 13)])
def test_det_formula_vs_elimination(n, seed):
    nodes = random_nodes(random.Random(seed), n)
    det_f = cauchy_det(nodes, BITS)
    det_e = eliminate_det(build(nodes, BITS))
    assert overlap_c(det_f, det_e)
    assert not det_f.abs2().contains(0)  # determinant certified nonzero


@pytest.mark.parametrize("seed", [21, 22, 23])
def test_solve_ones_residual_and_oracles(seed):
    rng = random.Random(seed)
    n = rng.randrange(2, 5)
    nodes = random_nodes(rng, n)
    c = solve_ones(nodes, BITS)
    for entry in mat_vec(build(nodes, BITS), c):
        assert entry.contains(1, 0)
    for x, y in zip(c, residue_solve_ones(nodes, BITS)):
        assert overlap_c(x, y)


def _identity(n: int) -> CertMatrix:
    rows = tuple(
        tuple(CertComplex.point(1 if i == j else 0, 0, BITS) for j in range(n))
        for i in range(n)
    )
    return CertMatrix(n, rows, "direct")


def test_opnorm_identity_and_zero():
    I4 = _identity(4)
    u = opnorm_upper(I4)
    assert u.contains(1) and float(u.width()) < 1e-60
    zero = CertMatrix(2, tuple(
        tuple(CertComplex.point(0, 0, BITS) for _ in range(2)) for _ in range(2)
    ), "direct")
    z = opnorm_upper(zero)
    assert z.lo == 0 == z.hi


def test_opnorm_all_ones_matches_spectral_norm():
    # || [[1,1],[1,1]] ||_2 = 2 exactly; the bound is tight here
    ones = CertMatrix(2, tuple(
        tuple(CertComplex.point(1, 0, BITS) for _ in range(2)) for _ in range(2)
    ), "direct")
    u = opnorm_upper(ones)
    assert u.contains(2) and float(u.width()) < 1e-60


def test_opnorm_2to1():
    assert opnorm_2to1_upper(_identity(4)).contains(2)
    one_by_one = CertMatrix(1, ((CertComplex.point(3, 4, BITS),),), "direct")
    assert opnorm_2to1_upper(one_by_one).contains(5)


@pytest.mark.parametrize("seed", [31, 32])
def test_opnorm_dominates_rayleigh_quotients(seed):
    rng = random.Random(seed)
    nodes = random_nodes(rng, 4)
    inv = cauchy_inverse(nodes, BITS)
    A = to_numpy(inv)
    ub = float(opnorm_upper(inv).hi)
    gen = np.random.default_rng(seed)
    for _ in range(100):
        x = gen.standard_normal(4) + 1j * gen.standard_normal(4)
        q = np.linalg.norm(A @ x) / np.linalg.norm(x)
        assert q <= ub * (1 + 1e-9)


@settings(max_examples=15, deadline=None)
@given(st.integers(min_value=0, max_value=10**9), st.integers(min_value=2, max_value=5))
def test_inverse_identity_property(seed, n):
    nodes = random_nodes(random.Random(seed), n)
    M = build(nodes, BITS)
    assert contains_identity(matmul(M, cauchy_inverse(nodes, BITS)))


def test_matrix_serialization_roundtrip():
    nodes = random_nodes(random.Random(99), 3)
    M = build(nodes, BITS)
    back = CertMatrix.from_json(M.to_json())
    assert back.n == M.n and back.provenance == M.provenance
    for i in range(3):
        for j in range(3):
            assert back.entries[i][j].re.lo == M.entries[i][j].re.lo
            assert back.entries[i][j].im.hi == M.entries[i][j].im.hi
