"""Command-line entry point: ``qecf <subcommand> ...``.

Exit status is 0 on success, 1 when a verification or matchability check
fails and 2 for usage errors.  Every error goes to stderr as ``error: ...``.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from typing import Sequence

from . import __version__
from .builders import (
    Scheme,
    SchemeSpec,
    assemble_experiment,
    build_local_growth,
    build_nonlocal_growth,
    build_unitary_prep,
    growth_steps,
)
from .circuit import NoiseParams, apply_noise
from .decode import MatchabilityError, build_decoding_graph, dem_text, enumerate_mechanisms
from .experiments import (
    SweepRow,
    SweepSpec,
    TimeCostModel,
    cost_table,
    default_threads,
    dump_shots,
    estimate_to_dict,
    prepare,
    rows_to_csv,
    run_prepared,
    sweep,
)
from .geometry import LogicalState, regular_layout, rotated_layout
from .sim import compile_circuit
from .verify import certify_local, certify_nonlocal, verify_encoder

DEFAULTS = {"p1": 0.001, "p2": 0.005, "pm": 0.005}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # noqa: D401 - argparse hook
        raise UsageError(message)


def _env_seed() -> int:
    raw = os.environ.get("QECF_SEED")
    if raw is None:
        return 0
    try:
        return int(raw)
    except ValueError:
        raise UsageError(f"QECF_SEED must be an integer, got {raw!r}") from None


def _add_scheme(p: argparse.ArgumentParser) -> None:
    p.add_argument("--scheme", required=True, choices=[s.value for s in Scheme])
    p.add_argument("--df", type=int, required=True, help="final code distance")
    p.add_argument("--state", default="plus_i", choices=["zero", "plus", "plus_i"])
    p.add_argument("--perfect-init", action="store_true", help="noiseless rot 3 preparation")


def _add_noise(p: argparse.ArgumentParser) -> None:
    p.add_argument("--p1", type=float, default=DEFAULTS["p1"], help="idle and initialization error")
    p.add_argument("--p2", type=float, default=DEFAULTS["p2"], help="two-qubit gate error")
    p.add_argument("--pm", type=float, default=DEFAULTS["pm"], help="measurement error")


def _add_run(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=None, help="RNG seed (falls back to QECF_SEED, then 0)")
    p.add_argument("--threads", type=int, default=None, help="worker processes (default: available cores)")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="qecf", description="Unitary surface-code encoders: build, verify, sample and cost.")
    ap.add_argument("--version", action="version", version=f"qecf {__version__}")
    sub = ap.add_subparsers(dest="cmd", required=True, parser_class=_Parser)

    p = sub.add_parser("layout", help="print a code layout as JSON")
    p.add_argument("--kind", choices=["rot", "reg"], default="rot")
    p.add_argument("--d", type=int, required=True)

    p = sub.add_parser("build", help="print the experiment circuit")
    _add_scheme(p)
    _add_noise(p)
    p.add_argument("--noisy", action="store_true", help="insert the noise channels")
    p.add_argument("--out", help="write to this file instead of stdout")

    p = sub.add_parser("verify", help="check the encoder fragments symbolically")
    p.add_argument("--scheme", required=True, choices=[s.value for s in Scheme])
    p.add_argument("--df", type=int, required=True)
    p.add_argument("--format", choices=["text", "json"], default="text")

    p = sub.add_parser("dem", help="dump the decoding graph and matchability report")
    _add_scheme(p)
    _add_noise(p)
    p.add_argument("--out")

    p = sub.add_parser("sample", help="estimate one logical error rate")
    _add_scheme(p)
    _add_noise(p)
    _add_run(p)
    p.add_argument("--shots", type=int, default=10**6)
    p.add_argument("--format", choices=["csv", "json", "text"], default="text")
    p.add_argument("--dump", help="also write kept raw shots to this file")

    p = sub.add_parser("sweep", help="run a grid from a JSON config and emit CSV")
    p.add_argument("--config", required=True, help="JSON file, or '-' for stdin")
    p.add_argument("--out", help="CSV path (default stdout)")
    _add_run(p)
    p.add_argument("--shots", type=int, default=None, help="override the config's shot count")

    p = sub.add_parser("cost", help="time-cost and gate-count tables")
    p.add_argument("--t2q", type=float, default=1.0)
    p.add_argument("--tm", type=float, default=10.0)
    p.add_argument("--psucc", type=float, default=0.759)
    p.add_argument("--format", choices=["text", "json", "csv"], default="text")
    return ap


# ---------------------------------------------------------------- helpers


def _spec(a) -> SchemeSpec:
    return SchemeSpec(a.scheme, a.df, a.state, perfect_init=a.perfect_init)


def _noise(a) -> NoiseParams:
    return NoiseParams.from_p1(a.p1, a.p2, a.pm)


def _seed(a) -> int:
    return a.seed if a.seed is not None else _env_seed()


def _threads(a) -> int:
    if a.threads is not None and a.threads < 1:
        raise UsageError("--threads must be >= 1")
    return a.threads or default_threads()


def _meta(config: dict, circuit_hash: str | None = None) -> list[str]:
    lines = [f"qecf {__version__}", "config " + json.dumps(config, sort_keys=True)]
    if circuit_hash:
        lines.append(f"circuit_hash {circuit_hash}")
    lines.append("timestamp " + time.strftime("%Y-%m-%dT%H:%M:%S%z"))
    return lines


def _emit(text: str, path: str | None) -> None:
    if path:
        with open(path, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


# ---------------------------------------------------------------- subcommands


def cmd_layout(a) -> int:
    layout = rotated_layout(a.d) if a.kind == "rot" else regular_layout(a.d)
    print(json.dumps(layout.to_json(), indent=1))
    return 0


def cmd_build(a) -> int:
    c = assemble_experiment(_spec(a)).circuit
    if a.noisy:
        c = apply_noise(c, _noise(a))
    _emit(c.to_text(), a.out)
    return 0


def _fragments(scheme: Scheme, d_f: int):
    """(name, certificate) per growth fragment from rot 3 to rot d_f."""
    for d in growth_steps(scheme, d_f):
        if scheme is Scheme.NONLOCAL:
            yield f"rot{d}->rot{2 * d - 1}", certify_nonlocal(d, build_nonlocal_growth(d))
        else:
            yield f"rot{d}->rot{d + 2}", certify_local(d, build_local_growth(d))


def cmd_verify(a) -> int:
    scheme = Scheme(a.scheme)
    SchemeSpec(scheme, a.df)  # validates d_f for the scheme
    results = []
    for state in (LogicalState.ZERO, LogicalState.PLUS, LogicalState.PLUS_I):
        rep = verify_encoder(build_unitary_prep(state), rotated_layout(3), state)
        results.append((f"prep rot3 {state.value}", rep.passed, rep.detail, None))
    prep_ok = all(r[1] for r in results)
    certs = [("prep rot3", prep_ok, "; ".join(r[2] for r in results if r[2]), None)]
    for name, cert in _fragments(scheme, a.df):
        certs.append((name, cert.passed, cert.counterexample or "", cert))
    if scheme is Scheme.CONVENTIONAL and a.df > 3:
        certs.append(("growth by measurement", None, "not a unitary fragment; no flow certificate", None))
    ok = all(c[1] is not False for c in certs)
    if a.format == "json":
        out = [
            {"fragment": n, "passed": p, "detail": d, **({"certificate": c.to_json()} if c else {})}
            for n, p, d, c in certs
        ]
        print(json.dumps({"scheme": scheme.value, "d_f": a.df, "passed": ok, "certificates": out}, indent=1))
    else:
        for n, p, d, _ in certs:
            tag = "SKIP" if p is None else ("PASS" if p else "FAIL")
            print(f"{tag} {n}" + (f"  ({d})" if d else ""))
    if not ok:
        print("error: verification failed", file=sys.stderr)
        return 1
    return 0


def cmd_dem(a) -> int:
    spec = _spec(a)
    c = apply_noise(assemble_experiment(spec).circuit, _noise(a))
    cc = compile_circuit(c)
    mechs = enumerate_mechanisms(cc)
    try:
        g, rep = build_decoding_graph(mechs, len(cc.detectors), cc.detector_basis, cc.detector_post)
    except MatchabilityError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    head = _meta({"cmd": "dem", **vars(a)}, c.fingerprint()) + [f"matchability {rep.summary()}"]
    _emit("".join(f"# {h}\n" for h in head) + dem_text(g), a.out)
    return 0


def cmd_sample(a) -> int:
    if a.shots < 0:
        raise UsageError("--shots must be >= 0")
    spec = _spec(a)
    seed = _seed(a)
    try:
        prep = prepare(spec, _noise(a))
    except MatchabilityError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    est = run_prepared(prep, a.shots, seed, _threads(a))
    if a.dump:
        with open(a.dump, "w") as fh:
            dump_shots(prep, a.shots, seed, fh)
    config = {"cmd": "sample", "scheme": spec.scheme.value, "d_f": spec.d_f, "state": spec.state.value,
              "p1": a.p1, "p2": a.p2, "pm": a.pm, "perfect_init": spec.perfect_init, "shots": a.shots, "seed": seed}
    if a.format == "json":
        print(json.dumps({"version": __version__, "config": config, **estimate_to_dict(est)}, indent=1))
    elif a.format == "csv":
        row = SweepRow(spec.scheme.value, spec.d_f, spec.state.value, a.p1, a.p2, a.pm, spec.perfect_init, est)
        sys.stdout.write(rows_to_csv([row], _meta(config, est.circuit_hash)))
    else:
        lo, hi = est.ci
        for m in _meta(config, est.circuit_hash):
            print(f"# {m}")
        print(f"shots {est.shots}")
        print(f"discards {est.discards}")
        print(f"failures {est.failures}")
        print(f"rate {est.rate:.6g}")
        print(f"ci95 {lo:.6g} {hi:.6g}")
        print(f"acceptance {est.acceptance:.6g}")
    return 0


def cmd_sweep(a) -> int:
    try:
        raw = sys.stdin.read() if a.config == "-" else open(a.config).read()
        data = json.loads(raw)
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read sweep config: {exc}") from None
    if a.seed is not None:
        data["seed"] = a.seed
    elif "seed" not in data:
        data["seed"] = _env_seed()
    if a.shots is not None:
        data["shots"] = a.shots
    try:
        grid = SweepSpec.from_json(data)
    except (KeyError, TypeError, ValueError) as exc:
        raise UsageError(f"bad sweep config: {exc}") from None
    rows = sweep(grid, _threads(a))
    _emit(rows_to_csv(rows, _meta({"cmd": "sweep", **data})), a.out)
    for r in rows:
        if r.error:
            print(f"error: {r.scheme} d_f={r.d_f} p1={r.p1} p2={r.p2} pm={r.pm}: {r.error}", file=sys.stderr)
    return 1 if any(r.error for r in rows) else 0


def cmd_cost(a) -> int:
    model = TimeCostModel(a.t2q, a.tm)
    if not 0 < a.psucc <= 1:
        raise UsageError("--psucc must lie in (0, 1]")
    rows = cost_table(model, a.psucc)
    if a.format == "json":
        print(json.dumps({"t_2q": a.t2q, "t_m": a.tm, "p_succ": a.psucc, "rows": rows}, indent=1))
    elif a.format == "csv":
        print("scheme,d_f,time,growth_cx")
        for r in rows:
            print(f"{r['scheme']},{r['d_f']},{r['time']!r},{r['growth_cx']}")
    else:
        print(f"# T_2q={a.t2q} T_m={a.tm} p_succ={a.psucc}")
        print(f"{'scheme':<14}{'d_f':>4}{'time':>10}{'growth_cx':>11}")
        for r in rows:
            print(f"{r['scheme']:<14}{r['d_f']:>4}{r['time']:>10.2f}{r['growth_cx']:>11}")
    return 0


COMMANDS = {
    "layout": cmd_layout,
    "build": cmd_build,
    "verify": cmd_verify,
    "dem": cmd_dem,
    "sample": cmd_sample,
    "sweep": cmd_sweep,
    "cost": cmd_cost,
}


def main(argv: Sequence[str] | None = None) -> int:
    try:
        a = build_parser().parse_args(argv)
        return COMMANDS[a.cmd](a)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except BrokenPipeError:
        return 0


if __name__ == "__main__":
    sys.exit(main())
