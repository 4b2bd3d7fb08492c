"""Monte Carlo estimates, parameter sweeps and closed-form cost tables."""

from __future__ import annotations

import csv
import io
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy.stats import norm

from .builders import (
    Scheme,
    SchemeSpec,
    assemble_experiment,
    build_injection_prep,
    growth_cx_count,
    is_pow2_plus1,
)
from .circuit import Circuit, NoiseParams, apply_noise
from .decode import DecodingGraph, build_decoding_graph, decode_shots, enumerate_mechanisms
from .sim import CHUNK_SHOTS, CompiledCircuit, compile_circuit, frame_sample, resolve_detectors

CSV_COLUMNS = (
    "scheme",
    "d_f",
    "state",
    "p1",
    "p2",
    "pm",
    "perfect_init",
    "shots",
    "discards",
    "failures",
    "rate",
    "ci_low",
    "ci_high",
    "seed",
    "circuit_hash",
)


def wilson_interval(k: int, n: int, confidence: float = 0.95) -> tuple[float, float]:
    if n == 0:
        return 0.0, 1.0
    z = float(norm.ppf(0.5 + confidence / 2))
    phat = k / n
    denom = 1 + z * z / n
    centre = (phat + z * z / (2 * n)) / denom
    half = z * math.sqrt(phat * (1 - phat) / n + z * z / (4 * n * n)) / denom
    return max(0.0, centre - half), min(1.0, centre + half)


@dataclass(frozen=True)
class Estimate:
    shots: int
    discards: int
    failures: int
    seed: int = 0
    circuit_hash: str = ""

    @property
    def kept(self) -> int:
        return self.shots - self.discards

    @property
    def rate(self) -> float:
        return self.failures / self.kept if self.kept else float("nan")

    @property
    def ci(self) -> tuple[float, float]:
        return wilson_interval(self.failures, self.kept)

    @property
    def acceptance(self) -> float:
        return self.kept / self.shots if self.shots else float("nan")

    @property
    def acceptance_ci(self) -> tuple[float, float]:
        return wilson_interval(self.kept, self.shots)

    def separated_below(self, other: "Estimate") -> bool:
        """True if this rate's CI lies strictly below ``other``'s."""
        return self.ci[1] < other.ci[0]


# ---------------------------------------------------------------- sampling


@dataclass
class PreparedExperiment:
    """A noisy circuit with its compiled form and decoding graph, reusable across shots."""

    spec: SchemeSpec | None
    circuit: Circuit
    compiled: CompiledCircuit
    graph: DecodingGraph | None
    state: str

    @property
    def circuit_hash(self) -> str:
        return self.circuit.fingerprint()


def prepare(spec: SchemeSpec, noise: NoiseParams) -> PreparedExperiment:
    exp = assemble_experiment(spec)
    noisy = apply_noise(exp.circuit, noise)
    cc = compile_circuit(noisy)
    mechs = enumerate_mechanisms(cc)
    graph, _ = build_decoding_graph(mechs, len(cc.detectors), cc.detector_basis, cc.detector_post)
    return PreparedExperiment(spec, noisy, cc, graph, spec.state.value)


def _run_chunks(prep: PreparedExperiment, seed: int, chunks: Sequence[tuple[int, int]]) -> tuple[int, int, int]:
    shots = discards = fails = 0
    for index, n in chunks:
        batch = frame_sample(prep.compiled, n, seed, index)
        shots += n
        if prep.graph is None:
            discards += batch.num_discards
            continue
        kept, f = decode_shots(prep.graph, batch, prep.state)
        discards += n - kept
        fails += f
    return shots, discards, fails


def _chunk_plan(shots: int) -> list[tuple[int, int]]:
    out = []
    k = 0
    while shots > 0:
        n = min(CHUNK_SHOTS, shots)
        out.append((k, n))
        shots -= n
        k += 1
    return out


def default_threads() -> int:
    return len(os.sched_getaffinity(0)) if hasattr(os, "sched_getaffinity") else (os.cpu_count() or 1)


def run_prepared(prep: PreparedExperiment, shots: int, seed: int, threads: int = 1) -> Estimate:
    """Sample and decode; chunk ``k`` always uses the stream ``(seed, k)``, so results
    do not depend on ``threads``."""
    plan = _chunk_plan(shots)
    threads = max(1, min(threads, len(plan)))
    if threads == 1:
        s, dsc, f = _run_chunks(prep, seed, plan)
    else:
        parts = [plan[i::threads] for i in range(threads)]
        with ProcessPoolExecutor(threads) as pool:
            res = list(pool.map(_run_chunks, [prep] * threads, [seed] * threads, parts))
        s, dsc, f = (sum(r[i] for r in res) for i in range(3))
    return Estimate(s, dsc, f, seed, prep.circuit_hash)


def dump_shots(prep: PreparedExperiment, shots: int, seed: int, fh) -> int:
    """Write kept shots as text; returns the number written.

    The first line is a JSON header.  Each further line holds the detector
    bits as little-endian hex bytes (detector k is bit k%8 of byte k//8),
    a space, and the two observable bits.  The shots are the same ones
    :func:`run_prepared` sees for this seed.
    """
    body = []
    discards = 0
    for index, n in _chunk_plan(shots):
        batch = frame_sample(prep.compiled, n, seed, index)
        keep = ~batch.unpack(batch.discard[None, :])[0]
        discards += int(n - keep.sum())
        dets = batch.unpack(batch.detectors)[:, keep]
        obs = batch.unpack(batch.observables)[:, keep]
        packed = np.packbits(dets, axis=0, bitorder="little")
        for s in range(dets.shape[1]):
            body.append(f"{packed[:, s].tobytes().hex()} {int(obs[0, s])}{int(obs[1, s])}\n")
    header = {
        "circuit_hash": prep.circuit_hash,
        "seed": seed,
        "shots": shots,
        "discards": discards,
        "detectors": len(prep.compiled.detectors),
    }
    fh.write(json.dumps(header, sort_keys=True) + "\n")
    fh.writelines(body)
    return len(body)


def estimate_logical_error(
    spec: SchemeSpec, noise: NoiseParams, shots: int, seed: int, threads: int = 1
) -> Estimate:
    """Logical error rate among kept shots for one scheme and noise point."""
    return run_prepared(prepare(spec, noise), shots, seed, threads)


def injection_circuit(noise: NoiseParams, state: str = "plus_i", rounds: int = 2, removal: str = "both") -> Circuit:
    return apply_noise(resolve_detectors(build_injection_prep(state, rounds, removal=removal)), noise)


def estimate_acceptance(
    noise: NoiseParams,
    shots: int,
    seed: int,
    rounds: int = 2,
    removal: str = "both",
    threads: int = 1,
) -> Estimate:
    """Post-selection acceptance of the injection preparation alone."""
    c = injection_circuit(noise, "plus_i", rounds, removal)
    prep = PreparedExperiment(None, c, compile_circuit(c), None, "plus_i")
    return run_prepared(prep, shots, seed, threads)


# ---------------------------------------------------------------- sweeps


@dataclass(frozen=True)
class NoisePoint:
    p1: float
    p2: float
    pm: float

    def params(self) -> NoiseParams:
        return NoiseParams.from_p1(self.p1, self.p2, self.pm)


@dataclass
class SweepSpec:
    schemes: list[str]
    d_f: list[int]
    noise: list[NoisePoint]
    shots: int = 10**6
    seed: int = 0
    perfect_init: bool = False
    state: str = "plus_i"

    @classmethod
    def from_json(cls, data: dict | str) -> "SweepSpec":
        """Config keys: schemes, d_f, noise {p1,p2,pm} (or a list of them) or
        ratio_grid (or ratio-grid) {p2, ratios[, pm]}, shots, seed, perfect_init, state."""
        if isinstance(data, str):
            data = json.loads(data)
        if "ratio-grid" in data and "ratio_grid" not in data:
            data = {**data, "ratio_grid": data["ratio-grid"]}
        if "ratio_grid" in data:
            g = data["ratio_grid"]
            p2 = float(g["p2"])
            pm = float(g.get("pm", p2))
            pts = [NoisePoint(r * p2, p2, pm) for r in g["ratios"]]
        else:
            raw = data.get("noise", [])
            raw = [raw] if isinstance(raw, dict) else raw
            pts = [NoisePoint(float(n["p1"]), float(n["p2"]), float(n.get("pm", n["p2"]))) for n in raw]
        return cls(
            schemes=list(data.get("schemes", [])),
            d_f=[int(x) for x in data.get("d_f", [])],
            noise=pts,
            shots=int(data.get("shots", 10**6)),
            seed=int(data.get("seed", 0)),
            perfect_init=bool(data.get("perfect_init", False)),
            state=str(data.get("state", "plus_i")),
        )

    def points(self) -> list[tuple[str, int, NoisePoint]]:
        pts = []
        for scheme in self.schemes:
            for d in self.d_f:
                if Scheme(scheme) is Scheme.NONLOCAL and d != 3 and not is_pow2_plus1(d):
                    continue
                for n in self.noise:
                    pts.append((scheme, d, n))
        return sorted(pts, key=lambda t: (t[0], t[1], t[2].p2, t[2].p1, t[2].pm))


@dataclass
class SweepRow:
    scheme: str
    d_f: int
    state: str
    p1: float
    p2: float
    pm: float
    perfect_init: bool
    estimate: Estimate | None = None
    error: str | None = None

    def as_csv(self) -> list:
        e = self.estimate
        if e is None:
            tail = ["", "", "", "nan", "nan", "nan", "", ""]
        else:
            lo, hi = e.ci
            tail = [e.shots, e.discards, e.failures, repr(e.rate), repr(lo), repr(hi), e.seed, e.circuit_hash]
        return [self.scheme, self.d_f, self.state, repr(self.p1), repr(self.p2), repr(self.pm), int(self.perfect_init), *tail]


def sweep(grid: SweepSpec, threads: int = 1, progress=None) -> list[SweepRow]:
    """One estimate per grid point; a failing point records its error and the sweep goes on."""
    rows = []
    for scheme, d, n in grid.points():
        row = SweepRow(scheme, d, grid.state, n.p1, n.p2, n.pm, grid.perfect_init)
        try:
            spec = SchemeSpec(scheme, d, grid.state, perfect_init=grid.perfect_init)
            row.estimate = estimate_logical_error(spec, n.params(), grid.shots, grid.seed, threads)
        except Exception as exc:  # noqa: BLE001 - reported in the table
            row.error = f"{type(exc).__name__}: {exc}"
        rows.append(row)
        if progress is not None:
            progress(row)
    return rows


def rows_to_csv(rows: Iterable[SweepRow], header_lines: Sequence[str] = ()) -> str:
    buf = io.StringIO()
    for line in header_lines:
        buf.write(f"# {line}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in rows:
        w.writerow(r.as_csv())
        if r.error:
            buf.write(f"# error {r.scheme} d_f={r.d_f}: {r.error}\n")
    return buf.getvalue()


# ---------------------------------------------------------------- cost analytics


@dataclass(frozen=True)
class TimeCostModel:
    t_2q: float = 1.0
    t_m: float = 10.0

    def __post_init__(self) -> None:
        if self.t_2q <= 0 or self.t_m <= 0:
            raise ValueError("gate and measurement times must be positive")

    @property
    def t_step(self) -> float:
        return 4 * self.t_2q

    @property
    def t_ls(self) -> float:
        return 2 * (4 * self.t_2q + self.t_m)

    def t_rot3(self, p_succ: float) -> float:
        if not 0 < p_succ <= 1:
            raise ValueError("acceptance must lie in (0, 1]")
        return 2 * (4 * self.t_2q + self.t_m) / p_succ


def time_cost(scheme: Scheme | str, d_f: int, model: TimeCostModel, p_succ: float) -> float:
    """Expected preparation time per successful attempt."""
    scheme = Scheme(scheme)
    if d_f < 3 or d_f % 2 == 0:
        raise ValueError(f"d_f must be odd and >= 3, got {d_f}")
    base = model.t_rot3(p_succ)
    if d_f == 3:
        return base
    if scheme is Scheme.NONLOCAL:
        if not is_pow2_plus1(d_f):
            raise ValueError(f"non-local growth reaches only d_f = 2^m + 1, got {d_f}")
        return base + (math.log2(d_f - 1) - 1) * model.t_step
    if scheme is Scheme.LOCAL:
        return base + ((d_f - 3) // 2) * model.t_step
    return base + model.t_ls


def gate_count(scheme: Scheme | str, D: int, check: bool = False) -> int:
    """Growth CX total from rot 3 to rot D; ``check`` cross-checks against the builders."""
    scheme = Scheme(scheme)
    if scheme is Scheme.CONVENTIONAL:
        raise ValueError("growth by measurement uses no unitary growth gates")
    if D < 3 or D % 2 == 0:
        raise ValueError(f"D must be odd and >= 3, got {D}")
    if scheme is Scheme.NONLOCAL and D != 3 and not is_pow2_plus1(D):
        raise ValueError(f"non-local growth reaches only D = 2^m + 1, got {D}")
    value = 2 * D * D - 2 * D - 12
    if check:
        counted = growth_cx_count(scheme, D)
        if counted != value:
            raise AssertionError(f"builder counted {counted} CX, closed form gives {value}")
    return value


def cost_table(model: TimeCostModel, p_succ: float, distances: Sequence[int] = (3, 5, 9, 17)) -> list[dict]:
    rows = []
    for scheme in Scheme:
        for d in distances:
            try:
                t = time_cost(scheme, d, model, p_succ)
            except ValueError:
                continue
            gates = gate_count(scheme, d) if scheme is not Scheme.CONVENTIONAL and d > 3 else 0
            rows.append({"scheme": scheme.value, "d_f": d, "time": t, "growth_cx": gates})
    return rows


def estimate_to_dict(e: Estimate) -> dict:
    out = asdict(e)
    out.update(kept=e.kept, rate=e.rate, ci_low=e.ci[0], ci_high=e.ci[1], acceptance=e.acceptance)
    return out


__all__ = [
    "CSV_COLUMNS",
    "default_threads",
    "Estimate",
    "NoisePoint",
    "PreparedExperiment",
    "SweepRow",
    "SweepSpec",
    "TimeCostModel",
    "cost_table",
    "estimate_acceptance",
    "estimate_logical_error",
    "dump_shots",
    "estimate_to_dict",
    "gate_count",
    "injection_circuit",
    "prepare",
    "rows_to_csv",
    "run_prepared",
    "sweep",
    "time_cost",
    "wilson_interval",
]
