from pathlib import Path

import numpy as np
import pytest

from qecf.builders import (
    Frame,
    SchemeSpec,
    assemble_experiment,
    build_growth_by_measurement,
    build_injection_prep,
    build_local_growth,
    build_measurement_cycle,
    build_nonlocal_growth,
    build_unitary_prep,
    growth_cx_count,
    injection_pattern,
    local_gate_count,
    nonlocal_gate_count,
)
from qecf.circuit import (
    Circuit,
    CircuitError,
    Instruction,
    NoiseParams,
    RESET_OPS,
    apply_noise,
)
from qecf.geometry import NonCliffordError, regular_layout, rotated_layout
from qecf.sim import compile_circuit, reference_run, resolve_detectors, run_frames

GOLDEN = Path(__file__).parent / "golden"


def _fresh(c: Circuit) -> int:
    return sum(len(i.targets) for i in c.instructions if i.op in RESET_OPS)


def _validate(c: Circuit) -> None:
    """Validate a fragment: qubits it never resets are the incoming code."""
    reset = {q for i in c.instructions if i.op in RESET_OPS for q in i.targets}
    c.validate(initialized=set(c.qubits) - reset)


# ---------------------------------------------------------------- text format


@pytest.mark.parametrize(
    "make",
    [
        lambda: build_nonlocal_growth(3),
        lambda: build_local_growth(5),
        lambda: resolve_detectors(build_injection_prep("plus_i")),
        lambda: assemble_experiment(SchemeSpec("nonlocal", 5)).circuit,
        lambda: apply_noise(assemble_experiment(SchemeSpec("local", 5)).circuit, NoiseParams.from_p1(1e-3, 5e-3, 5e-3)),
    ],
)
def test_text_roundtrip_and_validate(make):
    c = make()
    _validate(c)
    back = Circuit.from_text(c.to_text())
    assert back.instructions == c.instructions
    assert back.qubits == c.qubits
    assert back.to_text() == c.to_text()


def test_parse_errors():
    with pytest.raises(CircuitError):
        Circuit.from_text("FOO 1 2\n")
    with pytest.raises(CircuitError):
        Circuit.from_text("QUBIT 0 0 0\nR 0\nCX 0\n")
    with pytest.raises(CircuitError):
        Instruction("DEPOLARIZE1", (0,), 1.5)


def test_validate_catches_conflicts():
    c = Circuit()
    a, b = c.qubit((0, 0)), c.qubit((2, 0))
    c.r([a, b])
    c.tick()
    c.cx([(a, b)])
    c.h([a])
    with pytest.raises(CircuitError):
        c.validate()
    c2 = Circuit()
    a = c2.qubit((0, 0))
    c2.h([a])
    with pytest.raises(CircuitError):
        c2.validate()


@pytest.mark.parametrize("name,make", [
    ("local_d1", lambda: build_local_growth(1)),
    ("local_d3", lambda: build_local_growth(3)),
    ("nonlocal_d3", lambda: build_nonlocal_growth(3)),
])
def test_golden_fragments(name, make):
    assert make().to_text() == (GOLDEN / f"{name}.txt").read_text()


# ---------------------------------------------------------------- non-local growth


def test_nonlocal_d3_counts():
    c = build_nonlocal_growth(3)
    assert c.count("CX") == 28 == nonlocal_gate_count(3)
    assert _fresh(c) == 16
    assert c.cx_depth() == 4
    assert len(c.qubits) == 25


def test_nonlocal_d5_counts():
    c = build_nonlocal_growth(5)
    assert c.count("CX") == 104 == nonlocal_gate_count(5)
    assert len(c.qubits) == 81 and _fresh(c) == 81 - 25
    _validate(c)


@pytest.mark.parametrize("d", [3, 5, 9])
def test_nonlocal_boundary_gates_skipped(d):
    c = build_nonlocal_growth(d)
    layers = [[i for i in t if i.op == "CX"] for t in c.ticks()]
    layers = [sum(len(i.targets) // 2 for i in t) for t in layers if t]
    stage2 = layers[2] + layers[3]
    assert stage2 == 2 * len(regular_layout(d).faces) - 2 * (d - 1)


def test_nonlocal_rejects_bad_d():
    for d in (1, 4):
        with pytest.raises(ValueError):
            build_nonlocal_growth(d)


# ---------------------------------------------------------------- local growth


@pytest.mark.parametrize("d,cx,qubits,depth", [(1, 12, 9, 6), (3, 28, 25, 4), (5, 44, 49, 4)])
def test_local_counts(d, cx, qubits, depth):
    # at d=1 two gates of a layer share the single old qubit, so two layers split
    c = build_local_growth(d)
    assert c.count("CX") == cx == local_gate_count(d)
    assert len(c.qubits) == qubits and _fresh(c) == qubits - d * d
    assert c.cx_depth() == depth
    _validate(c)


def test_local_cumulative_3_to_17():
    assert sum(local_gate_count(d) for d in range(3, 17, 2)) == 532
    assert growth_cx_count("local", 17) == 532


@pytest.mark.parametrize("D", [5, 9, 17])
def test_growth_totals_closed_form(D):
    expect = 2 * D * D - 2 * D - 12
    assert growth_cx_count("nonlocal", D) == expect
    assert growth_cx_count("local", D) == expect


def test_unitary_prep_rejects_magic():
    with pytest.raises(NonCliffordError):
        build_unitary_prep("magic_T")


# ---------------------------------------------------------------- measurement rounds


def test_rot3_round_cx_count():
    c = build_measurement_cycle(rotated_layout(3), 1)
    assert c.count("CX") == 24
    assert c.cx_depth() == 4
    assert c.num_measurements == 8


def test_rounds_must_be_positive():
    with pytest.raises(ValueError):
        build_measurement_cycle(rotated_layout(3), 0)


# ---------------------------------------------------------------- injection


@pytest.mark.parametrize("state", ["zero", "plus", "plus_i"])
def test_injection_noiseless_quiet(state):
    c = resolve_detectors(build_injection_prep(state))
    assert all(d.post for d in c.detectors)
    ref = reference_run(c)
    assert not ref.detector_parity.any()


def test_injection_first_round_detectors_match_eigenstate_rule():
    lay = rotated_layout(3)
    pat = injection_pattern(3)
    c = resolve_detectors(build_injection_prep("plus_i"))
    faces = list(lay.x_faces) + list(lay.z_faces)
    fired = {faces[d.recs[0]].center for d in c.detectors if max(d.recs) < len(faces)}
    expect = {f.center for f in faces if all(pat[q] == f.kind for q in f.support)}
    assert fired == expect and expect


def test_injection_pattern_orientation():
    pat = injection_pattern(3)
    assert pat[(0, 0)] == "psi"
    assert pat[(2, 0)] == pat[(4, 0)] == pat[(4, 2)] == "X"
    assert all(pat[k] == "Z" for k in [(0, 2), (0, 4), (2, 2), (2, 4), (4, 4)])


def test_injection_site_x_error_is_silent_logical():
    exp = assemble_experiment(SchemeSpec("conventional", 3, "plus_i"))
    c = apply_noise(exp.circuit, NoiseParams(p_init=0.01))
    cc = compile_circuit(c)
    psi = c.qubit((0, 0))
    site = next(
        k for k, (_, kind, tg, _) in enumerate(cc.noise_sites)
        if kind == "DEPOLARIZE1" and psi in tg.tolist()
    )
    tidx = cc.noise_sites[site][2].tolist().index(psi)
    b = run_frames(cc, 1, forced={site: (np.array([tidx]), np.array([0]), np.array([1]))})
    assert not b.unpack(b.detectors).any()
    obs = b.unpack(b.observables)[:, 0]
    assert obs[0] ^ obs[1]


def test_growth_by_measurement_trivial_and_deterministic():
    assert not build_growth_by_measurement(5, 5).instructions
    c = resolve_detectors(build_growth_by_measurement(3, 7))
    _validate(c)
    assert not reference_run(c).detector_parity.any()
    with pytest.raises(ValueError):
        build_growth_by_measurement(7, 5)


def test_frame_places_fragments():
    c = build_local_growth(3, Frame(1, 4, 4))
    assert min(x for x, y in c.qubits.values()) == 4


# ---------------------------------------------------------------- assembly


def test_nonlocal_d5_perfect_init_final_detectors():
    exp = assemble_experiment(SchemeSpec("nonlocal", 5, perfect_init=True))
    dets = exp.circuit.detectors
    assert len(dets) == 24 == len(exp.layout.faces)
    assert all(not d.post for d in dets)
    assert not reference_run(exp.circuit).detector_parity.any()
    assert len(exp.circuit.observables) == 2


def test_d3_identical_after_prep_across_schemes():
    texts = set()
    for scheme in ("nonlocal", "local", "conventional"):
        exp = assemble_experiment(SchemeSpec(scheme, 3))
        texts.add(exp.circuit.to_text())
    assert len(texts) == 1


@pytest.mark.parametrize("spec", [
    SchemeSpec("nonlocal", 9), SchemeSpec("local", 7, "zero"), SchemeSpec("conventional", 5, "plus"),
])
def test_assembled_observables_deterministic(spec):
    c = assemble_experiment(spec).circuit
    c.validate()
    ref = reference_run(c)
    # the observable matching the prepared eigenbasis is fixed; Y fixes neither alone
    expect = {"zero": [True, False], "plus": [False, True], "plus_i": [False, False]}[spec.state.value]
    assert ref.observable_deterministic == expect
    assert not ref.detector_parity.any()


def test_schemespec_validation():
    with pytest.raises(ValueError):
        SchemeSpec("nonlocal", 7)
    with pytest.raises(ValueError):
        SchemeSpec("local", 4)
    with pytest.raises(ValueError):
        SchemeSpec("local", 5, trivial_removal="some")


# ---------------------------------------------------------------- noise


def _dep(c: Circuit, op: str) -> list[Instruction]:
    return [i for i in c.instructions if i.op == op]


def test_dep2_follows_every_cx():
    c = apply_noise(build_nonlocal_growth(3), NoiseParams(p2=0.01))
    assert c.count("DEPOLARIZE2") == 28
    assert not _dep(c, "DEPOLARIZE1")
    prev = None
    for ins in c.instructions:
        if ins.op == "DEPOLARIZE2":
            assert prev.op == "CX" and prev.targets == ins.targets
        prev = ins


def _live_oracle(c: Circuit):
    """Per tick: (live qubits before the tick, busy qubits, has CX or M)."""
    live: set[int] = set()
    for tick in c.ticks():
        busy = set()
        timed = False
        for ins in tick:
            if ins.op in ("CX", "M", "R", "RX", "H", "H_YZ", "MPP"):
                busy.update(ins.qubits())
            timed |= ins.op in ("CX", "M")
        yield live.copy(), busy, timed, tick
        for ins in tick:
            if ins.op in ("R", "RX"):
                live.update(ins.targets)
            elif ins.op == "M":
                live.difference_update(ins.targets)


def test_idle_count_is_live_minus_two_per_gate():
    exp = assemble_experiment(SchemeSpec("nonlocal", 5, perfect_init=True))
    base = exp.circuit
    noisy = apply_noise(base, NoiseParams(p_idle=0.001))
    oracle = list(_live_oracle(base))
    noisy_ticks = list(noisy.ticks())
    assert len(oracle) == len(noisy_ticks)
    start = sum(1 for _ in Circuit(instructions=base.instructions[: exp.prep_end]).ticks())
    checked = 0
    for k, ((live, busy, timed, tick), nt) in enumerate(zip(oracle, noisy_ticks)):
        idle = sum(len(i.targets) for i in nt if i.op == "DEPOLARIZE1")
        if k < start or not timed:
            if k < start:
                assert idle == 0
            continue
        gates = sum(len(i.targets) // 2 for i in tick if i.op == "CX")
        if gates and not any(i.op in ("M", "R", "RX", "H") for i in tick):
            assert idle == len(live) - 2 * gates
            checked += 1
        else:
            assert idle == len(live - busy)
    assert checked >= 4


def test_init_and_measurement_noise_placement():
    c = resolve_detectors(build_injection_prep("zero", rounds=2))
    n = apply_noise(c, NoiseParams(p_init=0.01, p_m=0.02))
    init = [i for i in n.instructions if i.op == "DEPOLARIZE1" and i.arg == 0.01]
    assert sum(len(i.targets) for i in init) == len(c.qubits)  # first reset only
    for k, ins in enumerate(n.instructions):
        if ins.op == "M":
            before = n.instructions[k - 1]
            assert before.op == "DEPOLARIZE1" and before.arg == 0.02 and before.targets == ins.targets


def test_zero_noise_changes_nothing():
    c = build_local_growth(3)
    assert apply_noise(c, NoiseParams()).instructions == c.instructions


def test_noise_off_region_is_clean():
    exp = assemble_experiment(SchemeSpec("local", 5, perfect_init=True))
    n = apply_noise(exp.circuit, NoiseParams.from_p1(0.01, 0.01, 0.01))
    assert not any(i.op.startswith("DEPOLARIZE") for i in n.instructions[: exp.prep_end])


def test_double_noise_raises():
    c = apply_noise(build_local_growth(1), NoiseParams(p2=0.01))
    with pytest.raises(CircuitError):
        apply_noise(c, NoiseParams(p2=0.01))


def test_noise_params_range():
    with pytest.raises(ValueError):
        NoiseParams(p2=-0.1)
    p = NoiseParams.from_p1(0.001, 0.005, 0.004)
    assert (p.p_idle, p.p_init, p.p2, p.p_m, p.p1) == (0.001, 0.001, 0.005, 0.004, 0.001)
