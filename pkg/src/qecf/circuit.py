"""Tick-structured circuit IR, its text format, and noise insertion."""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass, field, replace
from typing import Iterable, Iterator, Sequence

GATE_OPS = ("CX", "H", "H_YZ")
RESET_OPS = ("R", "RX")
NOISE_OPS = ("DEPOLARIZE1", "DEPOLARIZE2")
ALL_OPS = GATE_OPS + RESET_OPS + NOISE_OPS + (
    "M", "MPP", "TICK", "DETECTOR", "OBSERVABLE_INCLUDE", "NOISE_OFF", "NOISE_ON",
)

PauliTerm = tuple[str, int]


class CircuitError(ValueError):
    """Malformed circuit or circuit text."""


@dataclass(frozen=True)
class Instruction:
    """One line of a circuit.

    ``targets`` holds qubit ids for gates, resets, ``M`` and noise.  ``MPP``
    keeps its Pauli products in ``products``.  Detectors and observables keep
    absolute measurement indices in ``recs``; observables may also carry Pauli
    targets (evaluated against the error frame where the line appears).
    """

    op: str
    targets: tuple[int, ...] = ()
    arg: float | None = None
    products: tuple[tuple[PauliTerm, ...], ...] = ()
    recs: tuple[int, ...] = ()
    paulis: tuple[PauliTerm, ...] = ()
    basis: str | None = None
    post: bool = False
    index: int = 0

    def __post_init__(self) -> None:
        if self.op not in ALL_OPS:
            raise CircuitError(f"unknown opcode {self.op}")
        if self.arg is not None and not 0.0 <= self.arg <= 1.0:
            raise CircuitError(f"probability out of range: {self.arg}")
        if self.op in ("CX", "DEPOLARIZE2") and len(self.targets) % 2:
            raise CircuitError(f"{self.op} needs an even number of targets")

    @property
    def num_measurements(self) -> int:
        if self.op == "M":
            return len(self.targets)
        if self.op == "MPP":
            return len(self.products)
        return 0

    def qubits(self) -> tuple[int, ...]:
        if self.op == "MPP":
            return tuple(q for prod in self.products for _, q in prod)
        return self.targets


@dataclass(frozen=True)
class DetectorRequest:
    """Ask the resolver to turn measurement ``rec`` into a detector if deterministic."""

    rec: int
    basis: str
    post: bool = False
    key: tuple | None = None  # check identity, e.g. a face position


@dataclass(frozen=True)
class ObservableRequest:
    """Logical observable given as a Pauli; record terms are filled in on resolve."""

    index: int
    paulis: tuple[PauliTerm, ...]


@dataclass
class Circuit:
    qubits: dict[int, tuple[int, ...]] = field(default_factory=dict)
    instructions: list[Instruction] = field(default_factory=list)
    detector_requests: list[DetectorRequest] = field(default_factory=list)
    observable_requests: list[ObservableRequest] = field(default_factory=list)
    _by_coord: dict[tuple[int, ...], int] = field(default_factory=dict, repr=False)
    _num_meas: int = field(default=0, repr=False)

    # -- registry
    def qubit(self, coord: Sequence[int]) -> int:
        key = tuple(int(c) for c in coord)
        q = self._by_coord.get(key)
        if q is None:
            q = len(self.qubits)
            while q in self.qubits:
                q += 1
            self.qubits[q] = key
            self._by_coord[key] = q
        return q

    def has_coord(self, coord: Sequence[int]) -> bool:
        return tuple(coord) in self._by_coord

    def add_qubit(self, q: int, coord: Sequence[int]) -> None:
        key = tuple(int(c) for c in coord)
        self.qubits[q] = key
        self._by_coord[key] = q

    @property
    def num_qubits(self) -> int:
        return max(self.qubits, default=-1) + 1

    @property
    def num_measurements(self) -> int:
        return self._num_meas

    # -- emission
    def append(self, ins: Instruction) -> Instruction:
        self.instructions.append(ins)
        self._num_meas += ins.num_measurements
        return ins

    def _simple(self, op: str, qs: Iterable[int], arg: float | None = None) -> None:
        qs = tuple(qs)
        if qs:
            self.append(Instruction(op, qs, arg))

    def r(self, qs: Iterable[int]) -> None:
        self._simple("R", qs)

    def rx(self, qs: Iterable[int]) -> None:
        self._simple("RX", qs)

    def h(self, qs: Iterable[int]) -> None:
        self._simple("H", qs)

    def h_yz(self, qs: Iterable[int]) -> None:
        self._simple("H_YZ", qs)

    def cx(self, pairs: Iterable[tuple[int, int]]) -> None:
        flat = tuple(q for pair in pairs for q in pair)
        self._simple("CX", flat)

    def m(self, qs: Iterable[int]) -> list[int]:
        qs = tuple(qs)
        start = self._num_meas
        self._simple("M", qs)
        return list(range(start, start + len(qs)))

    def mpp(self, products: Iterable[Sequence[PauliTerm]]) -> list[int]:
        prods = tuple(tuple(p) for p in products)
        start = self._num_meas
        if prods:
            self.append(Instruction("MPP", products=prods))
        return list(range(start, start + len(prods)))

    def tick(self) -> None:
        self.append(Instruction("TICK"))

    def noise_off(self) -> None:
        self.append(Instruction("NOISE_OFF"))

    def noise_on(self) -> None:
        self.append(Instruction("NOISE_ON"))

    def detector(self, recs: Iterable[int], basis: str, post: bool = False) -> None:
        self.append(Instruction("DETECTOR", recs=tuple(sorted(recs)), basis=basis, post=post))

    def observable(self, index: int, paulis: Iterable[PauliTerm] = (), recs: Iterable[int] = ()) -> None:
        self.append(
            Instruction("OBSERVABLE_INCLUDE", recs=tuple(sorted(recs)), paulis=tuple(paulis), index=index)
        )

    def request_detectors(
        self, recs: Iterable[int], basis: str, post: bool = False, keys: Sequence[tuple] | None = None
    ) -> None:
        recs = list(recs)
        keys = list(keys) if keys is not None else [None] * len(recs)
        self.detector_requests.extend(DetectorRequest(r, basis, post, k) for r, k in zip(recs, keys))

    def request_observable(self, index: int, paulis: Iterable[PauliTerm]) -> None:
        self.observable_requests.append(ObservableRequest(index, tuple(paulis)))

    def extend(self, other: "Circuit") -> None:
        """Append ``other``; qubit ids of ``other`` must agree with this registry."""
        for q, coord in other.qubits.items():
            mine = self.qubits.get(q)
            if mine is None:
                self.add_qubit(q, coord)
            elif mine != coord:
                raise CircuitError(f"qubit {q} has conflicting coordinates")
        offset = self._num_meas
        for ins in other.instructions:
            if ins.recs:
                ins = replace(ins, recs=tuple(r + offset for r in ins.recs))
            self.append(ins)
        self.detector_requests.extend(replace(d, rec=d.rec + offset) for d in other.detector_requests)
        self.observable_requests.extend(other.observable_requests)

    def copy(self) -> "Circuit":
        c = Circuit()
        for q, coord in self.qubits.items():
            c.add_qubit(q, coord)
        c.instructions = list(self.instructions)
        c.detector_requests = list(self.detector_requests)
        c.observable_requests = list(self.observable_requests)
        c._num_meas = self._num_meas
        return c

    # -- queries
    def count(self, op: str) -> int:
        """Number of operations (CX pairs, qubits for single-qubit ops)."""
        total = 0
        for ins in self.instructions:
            if ins.op != op:
                continue
            if op in ("CX", "DEPOLARIZE2"):
                total += len(ins.targets) // 2
            elif op == "MPP":
                total += len(ins.products)
            else:
                total += max(1, len(ins.targets))
        return total

    def ticks(self) -> Iterator[list[Instruction]]:
        cur: list[Instruction] = []
        for ins in self.instructions:
            if ins.op == "TICK":
                yield cur
                cur = []
            else:
                cur.append(ins)
        if cur:
            yield cur

    def cx_depth(self) -> int:
        return sum(1 for t in self.ticks() if any(i.op == "CX" for i in t))

    @property
    def detectors(self) -> list[Instruction]:
        return [i for i in self.instructions if i.op == "DETECTOR"]

    @property
    def observables(self) -> list[Instruction]:
        return [i for i in self.instructions if i.op == "OBSERVABLE_INCLUDE"]

    def has_noise(self) -> bool:
        return any(i.op in NOISE_OPS for i in self.instructions)

    def validate(self, initialized: Iterable[int] = ()) -> None:
        """Check one operation per qubit per tick, reset-before-use, and record refs.

        ``initialized`` lists qubits that arrive prepared (fragments act on an
        existing code).  MPP products within one tick may overlap; they are
        commuting checks measured together.
        """
        initialized = set(initialized)
        seen_meas = 0
        for tick in self.ticks():
            busy: set[int] = set()
            for ins in tick:
                if ins.op in NOISE_OPS or ins.op in ("NOISE_OFF", "NOISE_ON"):
                    continue
                if ins.op in ("DETECTOR", "OBSERVABLE_INCLUDE"):
                    if any(r >= seen_meas or r < 0 for r in ins.recs):
                        raise CircuitError("record reference to a future measurement")
                    continue
                qs = ins.qubits()
                for q in qs:
                    if q not in self.qubits:
                        raise CircuitError(f"unknown qubit {q}")
                    if ins.op == "MPP":
                        if q not in initialized:
                            raise CircuitError(f"qubit {q} used before reset")
                        continue
                    if q in busy:
                        raise CircuitError(f"qubit {q} used twice in one tick")
                    busy.add(q)
                    if ins.op not in RESET_OPS and q not in initialized:
                        raise CircuitError(f"qubit {q} used before reset")
                if ins.op in RESET_OPS:
                    initialized.update(qs)
                seen_meas += ins.num_measurements

    # -- text format
    def to_text(self) -> str:
        lines = []
        for q in sorted(self.qubits):
            lines.append("QUBIT " + " ".join(str(v) for v in (q, *self.qubits[q])))
        nm = 0
        for ins in self.instructions:
            lines.append(_format(ins, nm))
            nm += ins.num_measurements
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "Circuit":
        c = cls()
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            try:
                _parse_line(c, line)
            except (ValueError, IndexError) as exc:
                raise CircuitError(f"line {lineno}: {exc}") from exc
        return c

    def fingerprint(self) -> str:
        return hashlib.sha256(self.to_text().encode()).hexdigest()[:16]


def _format(ins: Instruction, nm: int) -> str:
    op = ins.op
    if op in ("TICK", "NOISE_OFF", "NOISE_ON"):
        return op
    if op in NOISE_OPS:
        return f"{op}({ins.arg!r}) " + " ".join(map(str, ins.targets))
    if op == "MPP":
        return "MPP " + " ".join("*".join(f"{k}{q}" for k, q in prod) for prod in ins.products)
    recs = " ".join(f"rec[{r - nm}]" for r in ins.recs)
    if op == "DETECTOR":
        tag = ins.basis or ""
        if ins.post:
            tag += ",post"
        head = f"DETECTOR({tag})" if tag else "DETECTOR"
        return " ".join(s for s in (head, recs) if s)
    if op == "OBSERVABLE_INCLUDE":
        pstr = " ".join(f"{k}{q}" for k, q in ins.paulis)
        return " ".join(s for s in (f"OBSERVABLE_INCLUDE({ins.index})", pstr, recs) if s)
    return op + " " + " ".join(map(str, ins.targets))


_HEAD = re.compile(r"^([A-Z_0-9]+)(?:\(([^)]*)\))?$")
_PTERM = re.compile(r"^([XYZ])(\d+)$")
_REC = re.compile(r"^rec\[(-\d+)\]$")


def _parse_line(c: Circuit, line: str) -> None:
    head, *rest = line.split()
    mo = _HEAD.match(head)
    if not mo:
        raise ValueError(f"bad instruction {head!r}")
    op, paren = mo.group(1), mo.group(2)
    nm = c.num_measurements
    if op == "QUBIT":
        q, *coord = (int(v) for v in rest)
        c.add_qubit(q, coord)
        return
    if op not in ALL_OPS:
        raise ValueError(f"unknown opcode {op}")
    if op in NOISE_OPS:
        c.append(Instruction(op, tuple(int(v) for v in rest), float(paren)))
    elif op == "MPP":
        prods = []
        for tok in rest:
            terms = []
            for t in tok.split("*"):
                pm = _PTERM.match(t)
                if not pm:
                    raise ValueError(f"bad Pauli term {t!r}")
                terms.append((pm.group(1), int(pm.group(2))))
            prods.append(tuple(terms))
        c.append(Instruction("MPP", products=tuple(prods)))
    elif op in ("DETECTOR", "OBSERVABLE_INCLUDE"):
        recs, paulis = [], []
        for tok in rest:
            rm = _REC.match(tok)
            if rm:
                recs.append(nm + int(rm.group(1)))
                continue
            pm = _PTERM.match(tok)
            if not pm:
                raise ValueError(f"bad target {tok!r}")
            paulis.append((pm.group(1), int(pm.group(2))))
        if op == "DETECTOR":
            parts = [p.strip() for p in (paren or "").split(",") if p.strip()]
            basis = next((p for p in parts if p in ("X", "Z")), None)
            c.append(Instruction("DETECTOR", recs=tuple(recs), basis=basis, post="post" in parts))
        else:
            c.append(Instruction(op, recs=tuple(recs), paulis=tuple(paulis), index=int(paren)))
    elif op in ("TICK", "NOISE_OFF", "NOISE_ON"):
        c.append(Instruction(op))
    else:
        c.append(Instruction(op, tuple(int(v) for v in rest)))


# ---------------------------------------------------------------- noise


@dataclass(frozen=True)
class NoiseParams:
    p2: float = 0.0
    p_idle: float = 0.0
    p_init: float = 0.0
    p_m: float = 0.0

    def __post_init__(self) -> None:
        for name in ("p2", "p_idle", "p_init", "p_m"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {v}")

    @classmethod
    def from_p1(cls, p1: float, p2: float, p_m: float) -> "NoiseParams":
        return cls(p2=p2, p_idle=p1, p_init=p1, p_m=p_m)

    @property
    def p1(self) -> float:
        return self.p_idle


def apply_noise(c: Circuit, params: NoiseParams) -> Circuit:
    """Insert circuit-level depolarizing noise.

    Inside NOISE_ON regions: DEPOLARIZE2 after every CX, DEPOLARIZE1(p_init)
    after the first reset of each qubit, DEPOLARIZE1(p_m) before every M, and
    DEPOLARIZE1(p_idle) at the end of every tick that contains a CX or M, on
    every live qubit the tick leaves untouched.  A qubit is live from its reset
    until it is measured.  Ticks holding only resets or single-qubit gates are
    treated as instantaneous and carry no idle noise.
    """
    if c.has_noise():
        raise CircuitError("circuit already contains noise instructions")
    out = Circuit()
    for q, coord in c.qubits.items():
        out.add_qubit(q, coord)
    out.detector_requests = list(c.detector_requests)
    out.observable_requests = list(c.observable_requests)
    live: set[int] = set()
    fresh_done: set[int] = set()
    noisy = True

    def emit(op: str, qs: Sequence[int], p: float) -> None:
        if p > 0 and qs:
            out.append(Instruction(op, tuple(qs), p))

    tick: list[Instruction] = []

    def flush(end_tick: bool) -> None:
        nonlocal noisy
        busy: set[int] = set()
        timed = False
        for ins in tick:
            op = ins.op
            if op == "NOISE_OFF":
                noisy = False
            elif op == "NOISE_ON":
                noisy = True
            if op == "M" and noisy:
                emit("DEPOLARIZE1", ins.targets, params.p_m)
            out.append(ins)
            qs = ins.qubits()
            if op in GATE_OPS or op in RESET_OPS or op in ("M", "MPP"):
                busy.update(qs)
            if op in ("CX", "M"):
                timed = True
            if op == "CX" and noisy:
                emit("DEPOLARIZE2", ins.targets, params.p2)
            elif op in RESET_OPS:
                new = [q for q in ins.targets if q not in fresh_done]
                fresh_done.update(ins.targets)
                if noisy:
                    emit("DEPOLARIZE1", new, params.p_init)
            # liveness changes after noise bookkeeping for this op
        if timed and noisy:
            idle = sorted(live - busy)
            emit("DEPOLARIZE1", idle, params.p_idle)
        for ins in tick:
            if ins.op in RESET_OPS:
                live.update(ins.targets)
            elif ins.op == "M":
                live.difference_update(ins.targets)
        if end_tick:
            out.append(Instruction("TICK"))

    for ins in c.instructions:
        if ins.op == "TICK":
            flush(True)
            tick = []
        else:
            tick.append(ins)
    flush(False)
    return out
