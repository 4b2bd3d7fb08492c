"""Circuit builders for the three encoding schemes.

Every builder places qubits through a :class:`Frame` that maps a layout's own
doubled coordinates into the doubled coordinates of the final rotated code, so
fragments compose by qubit coordinate.  Measurement ancillas live on layer 1,
``(x, y, 1)``, so they never collide with data or face qubits.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Iterable

from .circuit import Circuit
from .geometry import (
    CodeLayout,
    Face,
    LogicalState,
    regular_layout,
    require_clifford,
    rotated_layout,
)


@dataclass(frozen=True)
class Frame:
    """Affine placement ``(x, y) -> (ox + s*x, oy + s*y)``."""

    scale: int = 1
    ox: int = 0
    oy: int = 0

    def __call__(self, c: tuple[int, int]) -> tuple[int, int]:
        return (self.ox + self.scale * c[0], self.oy + self.scale * c[1])

    def anc(self, c: tuple[int, int]) -> tuple[int, int, int]:
        x, y = self(c)
        return (x, y, 1)


class Scheme(str, Enum):
    NONLOCAL = "nonlocal"
    LOCAL = "local"
    CONVENTIONAL = "conventional"


def is_pow2_plus1(d: int) -> bool:
    m = d - 1
    return m >= 2 and (m & (m - 1)) == 0


@dataclass(frozen=True)
class SchemeSpec:
    scheme: Scheme
    d_f: int
    state: LogicalState = LogicalState.PLUS_I
    perfect_init: bool = False
    init_rounds: int = 2
    growth_rounds: int = 2
    trivial_removal: str = "both"

    def __post_init__(self) -> None:
        object.__setattr__(self, "scheme", Scheme(self.scheme))
        object.__setattr__(self, "state", LogicalState(self.state))
        if self.d_f < 3 or self.d_f % 2 == 0:
            raise ValueError(f"final distance must be odd and >= 3, got {self.d_f}")
        if self.scheme is Scheme.NONLOCAL and self.d_f != 3 and not is_pow2_plus1(self.d_f):
            raise ValueError(f"non-local growth reaches only d_f = 2^m + 1, got {self.d_f}")
        if self.init_rounds < 1 or self.growth_rounds < 1:
            raise ValueError("round counts must be positive")
        if self.trivial_removal not in ("both", "control", "none"):
            raise ValueError("trivial_removal must be 'both', 'control' or 'none'")


def _tick_cx(c: Circuit, pairs: list[tuple[int, int]]) -> None:
    c.cx(pairs)
    c.tick()


def _reset_tick(c: Circuit, plus: Iterable[int], zero: Iterable[int]) -> None:
    c.rx(sorted(plus))
    c.r(sorted(zero))
    c.tick()


# ---------------------------------------------------------------- non-local growth

# Partner offsets per CX timestep.  X-face qubits control their partners,
# Z-face qubits are targets.
STAGE1_X = ((1, 1), (1, -1))
STAGE1_Z = ((1, 1), (-1, 1))
STAGE2_X = ((0, 1), (-1, 0))
STAGE2_Z = ((0, 1), (1, 0))


def build_nonlocal_growth(d: int, frame: Frame = Frame()) -> Circuit:
    """Four CX layers taking rot d to rot 2d-1 through reg d.

    Coordinates: rot d data at doubled ``(2i, 2j)``, which coincide with reg d
    vertex coordinates; ``frame`` places reg-d vertex coordinates globally.
    """
    if d < 3 or d % 2 == 0:
        raise ValueError(f"non-local growth needs odd d >= 3, got {d}")
    rot = rotated_layout(d)
    reg = regular_layout(d)
    c = Circuit()
    q = lambda coord: c.qubit(frame(coord))  # noqa: E731
    for coord in rot.data_qubits:
        q(coord)

    # Stage 1: one face qubit per bulk face of rot d
    bulk = [f for f in rot.faces if f.weight == 4]
    _reset_tick(c, [q(f.center) for f in bulk if f.kind == "X"], [q(f.center) for f in bulk if f.kind == "Z"])
    for step in (0, 1):
        pairs = []
        for f in bulk:
            x, y = f.center
            dx, dy = (STAGE1_X if f.kind == "X" else STAGE1_Z)[step]
            partner = (x + dx, y + dy)
            pairs.append((q(f.center), q(partner)) if f.kind == "X" else (q(partner), q(f.center)))
        _tick_cx(c, pairs)

    # Stage 2: one face qubit per face of reg d, boundary faces included
    verts = set(reg.data_qubits)
    _reset_tick(
        c,
        [q(f.center) for f in reg.x_faces],
        [q(f.center) for f in reg.z_faces],
    )
    for step in (0, 1):
        pairs = []
        for f in reg.faces:
            u, v = f.center
            du, dv = (STAGE2_X if f.kind == "X" else STAGE2_Z)[step]
            partner = (u + du, v + dv)
            if partner not in verts:
                continue
            pairs.append((q(f.center), q(partner)) if f.kind == "X" else (q(partner), q(f.center)))
        _tick_cx(c, pairs)
    return c


def nonlocal_gate_count(d: int) -> int:
    return 6 * d * d - 10 * d + 4


# ---------------------------------------------------------------- local growth


def _local_is_plus(i: int, j: int, n: int) -> bool:
    """Reset basis of ring qubit (i, j) of an n x n grid (n = d + 2)."""
    if i != 0 and j != 0:
        i, j = n - 1 - i, n - 1 - j
    if i == 0:
        return j == 1 or (j >= 2 and j % 2 == 0)
    return i >= 2 and i % 2 == 0


def local_schedule(d: int) -> tuple[list[tuple[tuple[int, int], tuple[int, int]]], ...]:
    """CX layers of the local step rot d -> rot d+2 in index coordinates.

    The new ring occupies indices 0 and d+1; the old code sits at 1..d.  The
    left and bottom sides are listed explicitly and the right and top sides
    are their 180-degree rotations, gate directions included.  Pairs are
    ``(control, target)``.

    * layer 0: left ring edges (0,b+1)->(0,b), b even; bottom ring edges
      (a,0)->(a+1,0), a odd
    * layer 1: left links (1,b)->(0,b), b odd; bottom ring edges, a even
    * layer 2: left ring edges, b odd
    * layer 3: left links, b even; bottom links (a,0)->(a,1)

    Besides mapping stabilizers and logicals correctly, this ordering keeps
    every single fault inside the step down to at most two flipped checks
    per sector; orders that spread a hook onto three checks were rejected.
    """
    if d < 1 or d % 2 == 0:
        raise ValueError(f"local growth needs odd d >= 1, got {d}")
    n = d + 2
    rot = lambda p: (n - 1 - p[0], n - 1 - p[1])  # noqa: E731
    layers: list[list] = [[], [], [], []]
    for b in range(0, d + 1):
        layers[0 if b % 2 == 0 else 2].append(((0, b + 1), (0, b)))
    for a in range(0, d + 1):
        layers[0 if a % 2 == 1 else 1].append(((a, 0), (a + 1, 0)))
    for b in range(1, d + 1):
        layers[1 if b % 2 == 1 else 3].append(((1, b), (0, b)))
    for a in range(1, d + 1):
        layers[3].append(((a, 0), (a, 1)))
    for layer in layers:
        layer.extend([(rot(c), rot(t)) for c, t in list(layer)])
    return tuple(layers)


def local_ring(d: int) -> list[tuple[int, int]]:
    n = d + 2
    return [(i, j) for j in range(n) for i in range(n) if i in (0, n - 1) or j in (0, n - 1)]


def build_local_growth(d: int, frame: Frame = Frame()) -> Circuit:
    """Four CX layers taking rot d to rot d+2 by adding one boundary ring.

    ``frame`` places the doubled coordinates of the rot d+2 code.
    """
    layers = local_schedule(d)
    n = d + 2
    c = Circuit()
    q = lambda ij: c.qubit(frame((2 * ij[0], 2 * ij[1])))  # noqa: E731
    for j in range(1, n - 1):
        for i in range(1, n - 1):
            q((i, j))
    ring = local_ring(d)
    _reset_tick(
        c,
        [q(p) for p in ring if _local_is_plus(*p, n)],
        [q(p) for p in ring if not _local_is_plus(*p, n)],
    )
    for layer in layers:
        # at d=1 the two rotated halves share the centre qubit; split them
        pending = [(q(a), q(b)) for a, b in layer]
        while pending:
            used: set[int] = set()
            now, later = [], []
            for a, b in pending:
                (later if a in used or b in used else now).append((a, b))
                if (a, b) in now:
                    used.update((a, b))
            _tick_cx(c, now)
            pending = later
    return c


def local_gate_count(d: int) -> int:
    return 8 * d + 4


# ---------------------------------------------------------------- rot-3 preparation


def _state_gate(c: Circuit, q: int, state: LogicalState) -> None:
    require_clifford(state)
    gate = state.prep_gate
    if gate == "H":
        c.h([q])
    elif gate == "H_YZ":
        c.h_yz([q])
    c.tick()


def build_unitary_prep(state: LogicalState | str, frame: Frame = Frame()) -> Circuit:
    """Unitary rot-3 encoder: state gate on the centre qubit, then local growth from d=1."""
    state = LogicalState(state)
    require_clifford(state)
    c = Circuit()
    centre = c.qubit(frame((2, 2)))
    c.r([centre])
    c.tick()
    _state_gate(c, centre, state)
    c.extend(_remap(build_local_growth(1, frame), c))
    return c


def _remap(frag: Circuit, into: Circuit) -> Circuit:
    """Renumber ``frag``'s qubits so coordinates agree with ``into``'s registry."""
    mapping = {q: into.qubit(coord) for q, coord in frag.qubits.items()}
    out = Circuit()
    for q, coord in frag.qubits.items():
        out.add_qubit(mapping[q], coord)
    for ins in frag.instructions:
        if ins.op == "MPP":
            prods = tuple(tuple((k, mapping[q]) for k, q in p) for p in ins.products)
            out.append(replace(ins, products=prods))
        elif ins.paulis:
            out.append(replace(ins, paulis=tuple((k, mapping[q]) for k, q in ins.paulis)))
        else:
            out.append(replace(ins, targets=tuple(mapping[q] for q in ins.targets)))
    out.detector_requests = list(frag.detector_requests)
    out.observable_requests = [
        type(r)(r.index, tuple((k, mapping[q]) for k, q in r.paulis)) for r in frag.observable_requests
    ]
    return out


# ---------------------------------------------------------------- measurement rounds

# CX visiting order for ancillas, as (dx, dy) offsets from the face centre
X_ORDER = ((-1, 1), (-1, -1), (1, 1), (1, -1))  # NW, SW, NE, SE
Z_ORDER = ((-1, 1), (1, 1), (-1, -1), (1, -1))  # NW, NE, SW, SE


def _cycle_round(
    c: Circuit,
    layout: CodeLayout,
    frame: Frame,
    post: bool,
    skip_trivial: dict[tuple[int, int], str] | None = None,
    removal: str = "both",
) -> None:
    """Append one ancilla-based round over every face of a rotated layout."""
    anc = {f.center: c.qubit(frame.anc(f.center)) for f in layout.faces}
    data = {coord: c.qubit(frame(coord)) for coord in layout.data_qubits}
    _reset_tick(c, [anc[f.center] for f in layout.x_faces], [anc[f.center] for f in layout.z_faces])
    state = dict(skip_trivial) if skip_trivial is not None else None
    for step in range(4):
        pairs = []
        for f in layout.faces:
            dx, dy = (X_ORDER if f.kind == "X" else Z_ORDER)[step]
            coord = (f.center[0] + dx, f.center[1] + dy)
            if coord not in data:
                continue
            if state is not None:
                s = state.get(coord)
                if f.kind == "X" and s == "X" and removal == "both":
                    continue  # target already |+>: CX acts trivially
                if f.kind == "Z" and s == "Z" and removal != "none":
                    continue  # control still |0>: CX acts trivially
                state[coord] = "?"
            if f.kind == "X":
                pairs.append((anc[f.center], data[coord]))
            else:
                pairs.append((data[coord], anc[f.center]))
        _tick_cx(c, pairs)
    c.h([anc[f.center] for f in layout.x_faces])
    c.tick()
    for kind, faces in (("X", layout.x_faces), ("Z", layout.z_faces)):
        recs = c.m([anc[f.center] for f in faces])
        c.request_detectors(recs, kind, post, [frame(f.center) for f in faces])
    c.tick()


def build_measurement_cycle(layout: CodeLayout, rounds: int, frame: Frame = Frame(), post: bool = False) -> Circuit:
    """``rounds`` standard syndrome-extraction rounds of a rotated layout.

    Every ancilla outcome is a detector candidate; the resolver keeps those the
    reference run finds deterministic and pairs each with the earlier records
    that fix its value.
    """
    if rounds < 1:
        raise ValueError("rounds must be >= 1")
    c = Circuit()
    for coord in layout.data_qubits:
        c.qubit(frame(coord))
    for _ in range(rounds):
        _cycle_round(c, layout, frame, post)
    return c


def injection_pattern(d: int = 3) -> dict[tuple[int, int], str]:
    """Reset basis per data coordinate for state injection at the bottom-left qubit.

    Qubits strictly below the main diagonal (i > j, the side holding the X_L
    row) start in |+>, the rest in |0>.  The corner qubit is the injection site.
    """
    out = {}
    for j in range(d):
        for i in range(d):
            out[(2 * i, 2 * j)] = "X" if i > j else "Z"
    out[(0, 0)] = "psi"
    return out


def build_injection_prep(
    state: LogicalState | str,
    rounds: int = 2,
    frame: Frame = Frame(),
    removal: str = "both",
) -> Circuit:
    """Product-state injection into rot 3 followed by post-selected rounds.

    In round one, CX gates that provably act trivially on the fresh product
    state are dropped: a Z-check CX whose data control is still in |0>, and
    (when ``removal == 'both'``) an X-check CX whose data target is still in
    |+>.
    """
    state = LogicalState(state)
    require_clifford(state)
    if rounds < 1:
        raise ValueError("rounds must be >= 1")
    layout = rotated_layout(3)
    pattern = injection_pattern(3)
    c = Circuit()
    data = {coord: c.qubit(frame(coord)) for coord in layout.data_qubits}
    psi = data[(0, 0)]
    _reset_tick(
        c,
        [data[k] for k, v in pattern.items() if v == "X"],
        [data[k] for k, v in pattern.items() if v in ("Z", "psi")],
    )
    _state_gate(c, psi, state)
    fresh = {k: v for k, v in pattern.items() if v in ("X", "Z")}
    for r in range(rounds):
        _cycle_round(c, layout, frame, post=True, skip_trivial=fresh if r == 0 else None, removal=removal)
    return c


def build_growth_by_measurement(d_i: int, d_f: int, rounds: int = 2, frame: Frame = Frame()) -> Circuit:
    """Enlarge a bottom-left rot d_i block to rot d_f by measuring the big code.

    New qubits east of the block start in |+>, those north of it in |0>.  The
    north-east corner is split along the diagonal like the injection pattern
    (|+> strictly below it), so the |0> strip over the block widens with
    height instead of staying d_i wide along the whole seam.
    """
    c = Circuit()
    if d_i == d_f:
        return c
    if d_i > d_f or d_i % 2 == 0 or d_f % 2 == 0:
        raise ValueError("need odd d_i < d_f")
    big = rotated_layout(d_f)
    old = {(2 * i, 2 * j) for i in range(d_i) for j in range(d_i)}
    for coord in big.data_qubits:
        c.qubit(frame(coord))
    plus = [c.qubit(frame(k)) for k in big.data_qubits if k not in old and k[0] > k[1]]
    zero = [c.qubit(frame(k)) for k in big.data_qubits if k not in old and k[0] <= k[1]]
    _reset_tick(c, plus, zero)
    for _ in range(rounds):
        _cycle_round(c, big, frame, post=False)
    return c


# ---------------------------------------------------------------- full experiments


def scheme_frame(scheme: Scheme, d: int, d_f: int) -> Frame:
    """Where the rot-d stage of ``scheme`` sits inside the rot-d_f frame."""
    if scheme is Scheme.NONLOCAL:
        return Frame(scale=(d_f - 1) // (d - 1)) if d > 1 else Frame()
    if scheme is Scheme.LOCAL:
        off = d_f - d
        return Frame(1, off, off)
    return Frame()


def growth_steps(scheme: Scheme, d_f: int) -> list[int]:
    """Starting distances of the unitary growth steps from rot 3 to rot d_f."""
    if scheme is Scheme.NONLOCAL:
        out, d = [], 3
        while d < d_f:
            out.append(d)
            d = 2 * d - 1
        if d != d_f:
            raise ValueError(f"non-local growth cannot reach d_f={d_f}")
        return out
    if scheme is Scheme.LOCAL:
        return list(range(3, d_f, 2))
    return []


def build_growth(spec: SchemeSpec) -> Circuit:
    """All growth fragments of ``spec`` (no preparation, no final round)."""
    c = Circuit()
    scheme, d_f = spec.scheme, spec.d_f
    if scheme is Scheme.CONVENTIONAL:
        c.extend(build_growth_by_measurement(3, d_f, spec.growth_rounds))
        return c
    for d in growth_steps(scheme, d_f):
        if scheme is Scheme.NONLOCAL:
            frag = build_nonlocal_growth(d, scheme_frame(scheme, d, d_f))
        else:
            frag = build_local_growth(d, scheme_frame(scheme, d + 2, d_f))
        c.extend(_remap(frag, c))
    return c


@dataclass
class Experiment:
    """An assembled, resolved experiment circuit plus its final layout."""

    spec: SchemeSpec
    circuit: Circuit
    layout: CodeLayout
    prep_end: int = 0  # instruction index where preparation ends
    meta: dict = field(default_factory=dict)


def _base_circuit(spec: SchemeSpec, state: LogicalState) -> tuple[Circuit, int, int]:
    d_f = spec.d_f
    frame3 = scheme_frame(spec.scheme, 3, d_f)
    c = Circuit()
    if spec.perfect_init:
        c.noise_off()
        c.extend(_remap(build_unitary_prep(state, frame3), c))
        c.noise_on()
    else:
        c.extend(_remap(build_injection_prep(state, spec.init_rounds, frame3, spec.trivial_removal), c))
    prep_end = len(c.instructions)
    c.extend(_remap(build_growth(spec), c))
    growth_end = len(c.instructions)
    return c, prep_end, growth_end


def _final_round(c: Circuit, layout: CodeLayout) -> None:
    c.noise_off()
    for kind, faces in (("X", layout.x_faces), ("Z", layout.z_faces)):
        prods = [[(kind, c.qubit(f_coord)) for f_coord in f.support] for f in faces]
        recs = c.mpp(prods)
        c.request_detectors(recs, kind, post=False, keys=[f.center for f in faces])


def logical_paulis(c: Circuit, layout: CodeLayout) -> tuple[list, list]:
    zl = [("Z", c.qubit(coord)) for coord in layout.logical_z]
    xl = [("X", c.qubit(coord)) for coord in layout.logical_x]
    return zl, xl


def assemble_experiment(spec: SchemeSpec) -> Experiment:
    """Preparation, growth, a noiseless final round, detectors and observables.

    Observable 0 tracks flips of Z_L (an X_L error), observable 1 flips of
    X_L.  Each carries the measurement records that fix the logical's value
    relative to the final-code representative.
    """
    from .sim import logical_record_dependence, resolve_detectors

    require_clifford(spec.state)
    layout = rotated_layout(spec.d_f)
    c, prep_end, growth_end = _base_circuit(spec, spec.state)
    _final_round(c, layout)
    zl, xl = logical_paulis(c, layout)

    deps = {}
    for idx, (probe_state, paulis) in enumerate(((LogicalState.ZERO, zl), (LogicalState.PLUS, xl))):
        probe, _, g_end = _base_circuit(spec, probe_state)
        deps[idx] = logical_record_dependence(probe, g_end, paulis)
    resolved = resolve_detectors(c)
    resolved.observable(0, zl, deps[0])
    resolved.observable(1, xl, deps[1])
    return Experiment(spec, resolved, layout, prep_end, {"growth_end": growth_end})


def growth_cx_count(scheme: Scheme | str, d_f: int) -> int:
    """CX gates spent by the unitary growth from rot 3 to rot d_f, counted from builders."""
    scheme = Scheme(scheme)
    spec = SchemeSpec(scheme, d_f, LogicalState.ZERO, perfect_init=True)
    return build_growth(spec).count("CX")
