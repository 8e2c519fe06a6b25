import dataclasses
import json
import time
from fractions import Fraction

import mpmath
import pytest

from hyperseed import cli
from hyperseed.exactcircle import CertComplex, CertScalar
from hyperseed.induction import ConstructionState, PrecisionPolicy, construct


def replace_step(state, n, **kw):
    steps = list(state.steps)
    steps[n - 1] = dataclasses.replace(steps[n - 1], **kw)
    return dataclasses.replace(state, steps=tuple(steps))


def bump_b(state, n, j, delta: Fraction):
    """Shift the real part of b^(n)[j] by an exact dyadic amount."""
    step = state.steps[n - 1]
    b = list(step.b_n)
    shift = CertScalar.from_fraction(delta, state.policy.initial_bits)
    b[j - 1] = CertComplex(b[j - 1].re + shift, b[j - 1].im)
    return replace_step(state, n, b_n=tuple(b))


def point_of(state, fr: Fraction) -> CertScalar:
    return CertScalar.from_fraction(fr, state.policy.initial_bits)


def mp_value(scalar_endpoint):
    """Exact mpmath value of an mpfr endpoint (for independent comparisons)."""
    fr = Fraction(*scalar_endpoint.as_integer_ratio())
    return mpmath.mpf(fr.numerator) / fr.denominator


def mp_inside(scalar, value) -> bool:
    """Does the certified interval contain the given mpmath value?"""
    return mp_value(scalar.lo) <= value <= mp_value(scalar.hi)


def overlap_c(x, y) -> bool:
    return x.re.overlaps(y.re) and x.im.overlaps(y.im)


@pytest.fixture(scope="session")
def small_policy():
    return PrecisionPolicy(1024, 1 << 20)


@pytest.fixture(scope="session")
def state4(small_policy):
    return construct(4, policy=small_policy)


@pytest.fixture(scope="session")
def cli_depth10(tmp_path_factory):
    """Full default construct through the CLI; shared by the acceptance suite."""
    out = tmp_path_factory.mktemp("accept")
    state_path = out / "state10.json"
    report_path = out / "cert10.json"
    t0 = time.monotonic()
    code = cli.main([
        "construct", "--depth", "10",
        "--out", str(state_path), "--report", str(report_path),
    ])
    duration = time.monotonic() - t0
    return {
        "exit_code": code,
        "duration": duration,
        "state_path": state_path,
        "report_path": report_path,
    }


@pytest.fixture(scope="session")
def state10(cli_depth10):
    with open(cli_depth10["state_path"]) as fh:
        return ConstructionState.from_json_doc(json.load(fh))


@pytest.fixture(scope="session")
def cert10(cli_depth10):
    with open(cli_depth10["report_path"]) as fh:
        return json.load(fh)
