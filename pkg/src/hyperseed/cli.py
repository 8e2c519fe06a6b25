"""Command-line surface: construct states, verify certificates, run orbits.

Exit codes form a stable contract:

  0   success; for construct/verify this exclusively means a PASSING
      certificate
  1   certificate has failing checks (names listed on stderr)
  2   candidate search exhausted
  3   precision ceiling reached before every verdict was decided
  4   I/O failure (missing or unwritable files)
  5   corrupt state file
  6   requested dimension exceeds the committed depth
  64  usage error

Output files are written atomically (temp file + rename) and no command
mutates its input.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile

import gmpy2

from . import certify, dynamics
from .exactcircle import PrecisionExhausted, parse_angle
from .induction import (
    BadSeed,
    ConstructionState,
    PrecisionPolicy,
    SearchExhausted,
    construct,
    DEFAULT_SEED,
)

__all__ = ["main"]

EXIT_OK = 0
EXIT_CERT_FAILED = 1
EXIT_SEARCH = 2
EXIT_PRECISION = 3
EXIT_IO = 4
EXIT_CORRUPT = 5
EXIT_DIM = 6
EXIT_USAGE = 64

ENV_CEILING = "HYPERSEED_PRECISION_CEILING"


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would exit 2; the contract says 64
        raise _UsageError(message)


def _build_parser() -> _Parser:
    p = _Parser(prog="hyperseed", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("construct", help="run the induction and write a state")
    c.add_argument("--depth", type=int, default=10)
    c.add_argument("--precision-bits", type=int, default=4096)
    c.add_argument("--precision-ceiling", type=int, default=1 << 20)
    c.add_argument("--mu1-angle", default=None, metavar="p/2^q")
    c.add_argument("--out", required=True)
    c.add_argument("--report", default=None,
                   help="also write the certificate JSON here")

    v = sub.add_parser("verify", help="re-run the certificate suite on a state")
    v.add_argument("--in", dest="input", required=True)
    v.add_argument("--precision-bits", type=int, default=None)
    v.add_argument("--report", default=None)

    o = sub.add_parser("orbit", help="iterate the truncated operator")
    o.add_argument("--in", dest="input", required=True)
    o.add_argument("--dim", type=int, required=True)
    o.add_argument("--steps", type=int, default=100)
    o.add_argument("--start", default="e1",
                   help="e<j>, u<i>, or a JSON file of [re, im] pairs")
    o.add_argument("--targets", default=None,
                   help="JSON file: list of vectors of [re, im] pairs")
    o.add_argument("--out", required=True)

    e = sub.add_parser("export", help="write a view of a state")
    e.add_argument("--in", dest="input", required=True)
    e.add_argument("--what", required=True,
                   choices=["state", "certificate", "eigenvectors", "operator", "trace"])
    e.add_argument("--format", required=True, choices=["json", "csv"])
    e.add_argument("--dim", type=int, default=None)
    e.add_argument("--steps", type=int, default=100)
    e.add_argument("--start", default="e1")
    e.add_argument("--targets", default=None)
    e.add_argument("--out", required=True)
    return p


# ---------------------------------------------------------------------------
# I/O helpers


def _atomic_write(path: str, text: str) -> None:
    directory = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".hyperseed-", suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _load_state(path: str) -> ConstructionState:
    with open(path) as fh:
        doc = json.load(fh)
    return ConstructionState.from_json_doc(doc)


def _dump_json(doc: dict) -> str:
    return json.dumps(doc, sort_keys=True, indent=2) + "\n"


# ---------------------------------------------------------------------------
# Commands


def _policy_from_args(args) -> PrecisionPolicy:
    ceiling = args.precision_ceiling
    env = os.environ.get(ENV_CEILING)
    if env is not None:
        ceiling = int(env)
    return PrecisionPolicy(args.precision_bits, ceiling)


def _step_summary(state: ConstructionState, step) -> str:
    from .exactcircle import chord

    n = step.n
    gap_mid = chord(step.mu_n, step.lambda_n, 64).mid()
    gap_log2 = float(gmpy2.log2(gap_mid)) if gap_mid > 0 else float("-inf")
    if n == 1:
        return (f"step {n:2d}: lambda=0 mu={step.mu_n} "
                f"|mu-lambda| ~ 2^{gap_log2:.1f} bits={step.a_n.bits}")
    jn = state.j_function()(n)
    lam_off = (step.lambda_n - state.mus[jn - 1]).den_pow2
    mu_off = (step.mu_n - step.lambda_n).den_pow2
    return (f"step {n:2d}: lambda offset 2^-{lam_off} mu offset 2^-{mu_off} "
            f"|mu-lambda| ~ 2^{gap_log2:.1f} bits={step.a_n.bits}")


def _certify_decided(state: ConstructionState, bits: int | None) -> certify.Certificate:
    """Run the suite, doubling precision while any verdict is undecided."""
    from .induction import storage_bits

    bits = bits or max(state.policy.initial_bits, storage_bits(state))
    while True:
        cert = certify.full_certificate(state, precision_bits=bits)
        if not cert.undecided_names():
            return cert
        if bits * 2 > state.policy.ceiling_bits:
            raise PrecisionExhausted(
                f"checks {cert.undecided_names()} undecided at ceiling"
            )
        bits *= 2


def cmd_construct(args) -> int:
    if args.depth < 1:
        raise _UsageError("--depth must be at least 1")
    try:
        mu1 = parse_angle(args.mu1_angle) if args.mu1_angle else DEFAULT_SEED
    except ValueError as exc:
        raise _UsageError(f"--mu1-angle: {exc}") from None
    policy = _policy_from_args(args)
    state = construct(args.depth, mu1, policy)
    for step in state.steps:
        print(_step_summary(state, step), flush=True)
    cert = _certify_decided(state, None)
    _atomic_write(args.out, _dump_json(state.to_json_doc()))
    if args.report:
        _atomic_write(args.report, _dump_json(cert.to_json_doc()))
    if not cert.passing:
        print("FAILING checks: " + ", ".join(cert.failing_names()), file=sys.stderr)
        return EXIT_CERT_FAILED
    print(f"certificate PASSING ({len(cert.checks)} checks); "
          f"state {state.state_hash()[:16]} -> {args.out}")
    return EXIT_OK


def cmd_verify(args) -> int:
    state = _load_state(args.input)
    cert = _certify_decided(state, args.precision_bits)
    if args.report:
        _atomic_write(args.report, _dump_json(cert.to_json_doc()))
    if not cert.passing:
        print("FAILING checks: " + ", ".join(cert.failing_names()), file=sys.stderr)
        return EXIT_CERT_FAILED
    print(f"certificate PASSING ({len(cert.checks)} checks) "
          f"for state {cert.state_hash[:16]}")
    return EXIT_OK


def _parse_start(spec: str, state: ConstructionState, dim: int):
    if spec.startswith("e") and spec[1:].isdigit():
        j = int(spec[1:])
        if not (1 <= j <= dim):
            raise _UsageError(f"basis index out of range: {spec}")
        return [1 if p == j - 1 else 0 for p in range(dim)], spec
    if spec.startswith("u") and spec[1:].isdigit():
        i = int(spec[1:])
        if not (1 <= i <= dim):
            raise _UsageError(f"eigenvector index out of range: {spec}")
        vec = dynamics.eigenvector(state, i, dim)
        return [complex(float(z.re.mid()), float(z.im.mid())) for z in vec], spec
    with open(spec) as fh:
        pairs = json.load(fh)
    if len(pairs) != dim:
        raise _UsageError("start vector dimension mismatch")
    return [complex(re, im) for re, im in pairs], os.path.basename(spec)


def _parse_targets(path: str | None):
    if path is None:
        return []
    with open(path) as fh:
        data = json.load(fh)
    return [[complex(re, im) for re, im in vec] for vec in data]


def _run_orbit(args, state: ConstructionState) -> dynamics.OrbitTrace:
    dim = args.dim if args.dim is not None else state.depth
    if dim > state.depth:
        raise dynamics.DepthExceeded(f"dim {dim} exceeds depth {state.depth}")
    if args.steps < 0:
        raise _UsageError("--steps must be nonnegative")
    T = dynamics.assemble(state, dim)
    start, label = _parse_start(args.start, state, dim)
    targets = _parse_targets(args.targets)
    for t in targets:
        if len(t) != dim:
            raise _UsageError("target vector dimension mismatch")
    return dynamics.orbit(T, start, args.steps, targets, start_label=label)


def cmd_orbit(args) -> int:
    state = _load_state(args.input)
    trace = _run_orbit(args, state)
    _atomic_write(args.out, trace.to_csv())
    print(f"orbit trace ({trace.steps} steps) -> {args.out}")
    return EXIT_OK


LOSSY_HEADER = "# lossy: decimals truncated to 17 significant digits\n"


def cmd_export(args) -> int:
    state = _load_state(args.input)
    what, fmt = args.what, args.format
    if what == "state":
        if fmt != "json":
            raise _UsageError("state export is lossless JSON only")
        _atomic_write(args.out, _dump_json(state.to_json_doc()))
    elif what == "certificate":
        if fmt != "json":
            raise _UsageError("certificate export is lossless JSON only")
        cert = _certify_decided(state, None)
        _atomic_write(args.out, _dump_json(cert.to_json_doc()))
    elif what == "operator":
        dim = args.dim if args.dim is not None else state.depth
        if dim > state.depth:
            raise dynamics.DepthExceeded(f"dim {dim} exceeds depth {state.depth}")
        T = dynamics.assemble(state, dim)
        if fmt == "json":
            _atomic_write(args.out, _dump_json(T.to_json_doc()))
        else:
            rows = ["j,angle_num,angle_den_pow2,a_re,a_im,b_re,b_im"]
            for j in range(T.N):
                are, aim = T.a[j].mid()
                bre, bim = T.b[j].mid()
                rows.append(",".join([
                    str(j + 1), str(T.diag[j].num), str(T.diag[j].den_pow2),
                    format(float(are), ".17g"), format(float(aim), ".17g"),
                    format(float(bre), ".17g"), format(float(bim), ".17g"),
                ]))
            _atomic_write(args.out, LOSSY_HEADER + "\n".join(rows) + "\n")
    elif what == "eigenvectors":
        dim = args.dim if args.dim is not None else state.depth
        if dim > state.depth:
            raise dynamics.DepthExceeded(f"dim {dim} exceeds depth {state.depth}")
        vecs = [dynamics.eigenvector(state, i, dim) for i in range(1, dim + 1)]
        if fmt == "json":
            doc = {
                "dim": dim,
                "vectors": [[z.to_json() for z in vec] for vec in vecs],
            }
            _atomic_write(args.out, _dump_json(doc))
        else:
            rows = ["i,j,re,im"]
            for i, vec in enumerate(vecs, start=1):
                for j, z in enumerate(vec, start=1):
                    re, im = z.mid()
                    rows.append(f"{i},{j},{float(re):.17g},{float(im):.17g}")
            _atomic_write(args.out, LOSSY_HEADER + "\n".join(rows) + "\n")
    else:  # trace
        trace = _run_orbit(args, state)
        if fmt == "json":
            doc = {
                "start": trace.start_label,
                "steps": trace.steps,
                "records": [
                    {"iter": r["iter"], "norm": float(r["norm"]),
                     "dists": [float(d) for d in r["dists"]]}
                    for r in trace.records
                ],
            }
            _atomic_write(args.out, _dump_json(doc))
        else:
            _atomic_write(args.out, trace.to_csv())
    print(f"export {what} ({fmt}) -> {args.out}")
    return EXIT_OK


# ---------------------------------------------------------------------------


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command == "construct":
            return cmd_construct(args)
        if args.command == "verify":
            return cmd_verify(args)
        if args.command == "orbit":
            return cmd_orbit(args)
        return cmd_export(args)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except BadSeed as exc:
        print(f"bad seed: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SearchExhausted as exc:
        print(f"search exhausted: {exc}", file=sys.stderr)
        return EXIT_SEARCH
    except PrecisionExhausted as exc:
        print(f"precision exhausted: {exc}", file=sys.stderr)
        return EXIT_PRECISION
    except dynamics.DepthExceeded as exc:
        print(f"dimension error: {exc}", file=sys.stderr)
        return EXIT_DIM
    except FileNotFoundError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (PermissionError, IsADirectoryError, NotADirectoryError, OSError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (json.JSONDecodeError, ValueError, KeyError, TypeError) as exc:
        print(f"corrupt state: {exc}", file=sys.stderr)
        return EXIT_CORRUPT


if __name__ == "__main__":
    sys.exit(main())
