"""Rotated and regular surface-code layouts.

Rotated codes use doubled coordinates: data qubit ``(i, j)`` of a distance-d
code sits at ``(2i, 2j)`` and face centers at odd-odd points.  Regular codes
use vertex coordinates ``(u, v)`` with ``0 <= u, v <= 2d-2`` and ``u+v`` even;
their faces sit on the odd-parity points.  With these choices a rotated code
embeds into the regular code of the same distance by the identity map, and the
regular code embeds into the rotated code of distance ``2d-1`` by doubling.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from typing import Callable

from .pauli import PauliString, commutes

Coord = tuple[int, int]


class Variant(str, Enum):
    ROTATED = "rotated"
    REGULAR = "regular"


@dataclass(frozen=True)
class Face:
    center: Coord
    kind: str  # "X" or "Z"
    support: tuple[Coord, ...]

    @property
    def weight(self) -> int:
        return len(self.support)


@dataclass(frozen=True)
class CodeLayout:
    variant: Variant
    d: int
    data_qubits: tuple[Coord, ...]
    x_faces: tuple[Face, ...]
    z_faces: tuple[Face, ...]
    logical_x: tuple[Coord, ...]
    logical_z: tuple[Coord, ...]
    index: dict[Coord, int] = field(compare=False, repr=False, default_factory=dict)

    def __post_init__(self) -> None:
        self.index.update({c: k for k, c in enumerate(self.data_qubits)})

    @property
    def n(self) -> int:
        return len(self.data_qubits)

    @property
    def faces(self) -> tuple[Face, ...]:
        return self.x_faces + self.z_faces

    @property
    def name(self) -> str:
        return f"{'rot' if self.variant is Variant.ROTATED else 'reg'}{self.d}"

    def pauli(self, kind: str, coords: tuple[Coord, ...] | list[Coord]) -> PauliString:
        return PauliString.from_sparse(self.n, ((kind, self.index[c]) for c in coords))

    @cached_property
    def stabilizers(self) -> list[PauliString]:
        return [self.pauli(f.kind, f.support) for f in self.faces]

    @property
    def logical_x_op(self) -> PauliString:
        return self.pauli("X", self.logical_x)

    @property
    def logical_z_op(self) -> PauliString:
        return self.pauli("Z", self.logical_z)

    def to_json(self) -> dict:
        def face_json(f: Face) -> dict:
            return {"center": list(f.center), "support": [list(c) for c in f.support]}

        return {
            "variant": self.variant.value,
            "d": self.d,
            "qubits": [list(c) for c in self.data_qubits],
            "x_faces": [face_json(f) for f in self.x_faces],
            "z_faces": [face_json(f) for f in self.z_faces],
            "logical_x": [self.index[c] for c in self.logical_x],
            "logical_z": [self.index[c] for c in self.logical_z],
        }


def _check_odd(d: int, minimum: int) -> None:
    if not isinstance(d, int) or d < minimum or d % 2 == 0:
        raise ValueError(f"distance must be an odd integer >= {minimum}, got {d!r}")


def rotated_layout(d: int) -> CodeLayout:
    """Rotated surface code; X_L on the bottom row, Z_L on the right column."""
    _check_odd(d, 1)
    data = tuple((2 * i, 2 * j) for j in range(d) for i in range(d))
    xf: list[Face] = []
    zf: list[Face] = []
    for b in range(-1, d):
        for a in range(-1, d):
            support = tuple(
                (2 * i, 2 * j)
                for j in (b, b + 1)
                for i in (a, a + 1)
                if 0 <= i < d and 0 <= j < d
            )
            kind = "X" if (a + b) % 2 == 0 else "Z"
            if len(support) < 2:
                continue
            if len(support) == 2:
                on_lr = a in (-1, d - 1)
                on_bt = b in (-1, d - 1)
                if on_lr == on_bt:
                    continue
                # left/right boundaries carry X faces, bottom/top carry Z faces
                if on_lr and kind != "X":
                    continue
                if on_bt and kind != "Z":
                    continue
            face = Face((2 * a + 1, 2 * b + 1), kind, support)
            (xf if kind == "X" else zf).append(face)
    lx = tuple((2 * i, 0) for i in range(d))
    lz = tuple((2 * (d - 1), 2 * j) for j in range(d))
    return CodeLayout(Variant.ROTATED, d, data, tuple(xf), tuple(zf), lx, lz)


def regular_layout(d: int) -> CodeLayout:
    """Regular (unrotated) surface code with ``d**2 + (d-1)**2`` qubits."""
    _check_odd(d, 3)
    m = 2 * d - 2
    data = tuple((u, v) for v in range(m + 1) for u in range(m + 1) if (u + v) % 2 == 0)
    dset = set(data)
    xf: list[Face] = []
    zf: list[Face] = []
    for v in range(m + 1):
        for u in range(m + 1):
            if (u + v) % 2 == 0:
                continue
            support = tuple(
                c for c in ((u, v - 1), (u - 1, v), (u + 1, v), (u, v + 1)) if c in dset
            )
            if u % 2 == 0:
                xf.append(Face((u, v), "X", support))
            else:
                zf.append(Face((u, v), "Z", support))
    lx = tuple((u, 0) for u in range(0, m + 1, 2))
    lz = tuple((m, v) for v in range(0, m + 1, 2))
    return CodeLayout(Variant.REGULAR, d, data, tuple(xf), tuple(zf), lx, lz)


def embedding_map(src: CodeLayout, dst: CodeLayout) -> Callable[[Coord], Coord]:
    """Coordinate map used by the two-stage growth.

    rot d -> reg d is the identity; reg d -> rot 2d-1 doubles coordinates,
    which is also the composite rot d -> rot 2d-1.
    """
    if src.variant is Variant.ROTATED and dst.variant is Variant.REGULAR and src.d == dst.d:
        return lambda c: (c[0], c[1])
    if src.variant is Variant.REGULAR and dst.variant is Variant.ROTATED and dst.d == 2 * src.d - 1:
        return lambda c: (2 * c[0], 2 * c[1])
    if src.variant is Variant.ROTATED and dst.variant is Variant.ROTATED and dst.d == 2 * src.d - 1:
        return lambda c: (2 * c[0], 2 * c[1])
    raise ValueError(f"unsupported embedding {src.name} -> {dst.name}")


def check_layout(layout: CodeLayout) -> None:
    """Raise AssertionError if any structural invariant fails."""
    stabs = layout.stabilizers
    assert len(stabs) == layout.n - 1
    for i, a in enumerate(stabs):
        for b in stabs[i + 1:]:
            assert commutes(a, b)
    lx, lz = layout.logical_x_op, layout.logical_z_op
    for s in stabs:
        assert commutes(s, lx) and commutes(s, lz)
    assert not commutes(lx, lz)
    assert len(layout.logical_x) == len(layout.logical_z) == layout.d


class LogicalState(str, Enum):
    ZERO = "zero"
    PLUS = "plus"
    PLUS_I = "plus_i"
    MAGIC_T = "magic_T"

    @property
    def prep_gate(self) -> str | None:
        """Single-qubit gate taking |0> to the target state."""
        return {"zero": None, "plus": "H", "plus_i": "H_YZ", "magic_T": "TH"}[self.value]

    @property
    def is_clifford(self) -> bool:
        return self is not LogicalState.MAGIC_T


class NonCliffordError(ValueError):
    """The requested state cannot be prepared by a stabilizer circuit."""


def require_clifford(state: LogicalState) -> None:
    if not state.is_clifford:
        raise NonCliffordError("the |T> state needs a non-Clifford TH gate; stabilizer simulation cannot run it")
