"""Phase-tracked Pauli strings, Clifford conjugation, and a stabilizer tableau.

A Pauli string on ``n`` qubits is stored as two integer bitmasks plus a
phase exponent: ``i**phase * prod_q X_q**x_q Z_q**z_q`` with the X factor
to the left of the Z factor on every qubit.  Under this convention a
Hermitian ``Y`` on one qubit is ``(x=1, z=1, phase=1)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np


class DimensionError(ValueError):
    """Operands act on different numbers of qubits."""


class UnsupportedGateError(ValueError):
    """A gate kind outside the supported Clifford set."""


def _popcount(v: int) -> int:
    return int(v).bit_count()


def _mask_indices(mask: int) -> list[int]:
    out = []
    q = 0
    while mask:
        if mask & 1:
            out.append(q)
        mask >>= 1
        q += 1
    return out


@dataclass(frozen=True)
class PauliString:
    n: int
    x_bits: int = 0
    z_bits: int = 0
    phase: int = 0

    def __post_init__(self) -> None:
        if self.n <= 0:
            raise ValueError("qubit count must be positive")
        limit = 1 << self.n
        if not (0 <= self.x_bits < limit and 0 <= self.z_bits < limit):
            raise ValueError("mask has bits beyond qubit count")
        object.__setattr__(self, "phase", self.phase % 4)

    @classmethod
    def identity(cls, n: int) -> "PauliString":
        return cls(n)

    @classmethod
    def from_str(cls, text: str) -> "PauliString":
        """Parse e.g. ``"-XIZY"`` or ``"+iZZ"``; character k acts on qubit k."""
        phase = 0
        body = text
        for prefix, ph in (("+i", 1), ("-i", 3), ("i", 1), ("+", 0), ("-", 2)):
            if body.startswith(prefix):
                phase = ph
                body = body[len(prefix):]
                break
        x = z = 0
        for q, ch in enumerate(body):
            if ch in "X":
                x |= 1 << q
            elif ch == "Z":
                z |= 1 << q
            elif ch == "Y":
                x |= 1 << q
                z |= 1 << q
                phase += 1
            elif ch not in "I_":
                raise ValueError(f"bad Pauli character {ch!r}")
        return cls(len(body), x, z, phase)

    @classmethod
    def single(cls, n: int, q: int, kind: str) -> "PauliString":
        s = ["I"] * n
        s[q] = kind
        return cls.from_str("".join(s))

    @classmethod
    def from_sparse(cls, n: int, terms: Iterable[tuple[str, int]]) -> "PauliString":
        """Product of single-qubit Hermitian Paulis given as (kind, qubit)."""
        out = cls(n)
        for kind, q in terms:
            out = out * cls.single(n, q, kind)
        return out

    def hermitian_sign(self) -> int:
        """Return +1 or -1 if the operator is +/- a Hermitian Pauli product, else 0."""
        rel = (self.phase - _popcount(self.x_bits & self.z_bits)) % 4
        return {0: 1, 2: -1}.get(rel, 0)

    @property
    def weight(self) -> int:
        return _popcount(self.x_bits | self.z_bits)

    def support(self) -> list[int]:
        m = self.x_bits | self.z_bits
        return [q for q in range(self.n) if (m >> q) & 1]

    def __mul__(self, other: "PauliString") -> "PauliString":
        return pauli_product(self, other)

    def __neg__(self) -> "PauliString":
        return PauliString(self.n, self.x_bits, self.z_bits, self.phase + 2)

    def __str__(self) -> str:
        chars = []
        ys = 0
        for q in range(self.n):
            x = (self.x_bits >> q) & 1
            z = (self.z_bits >> q) & 1
            chars.append("IXZY"[x + 2 * z])
            ys += x & z
        rel = (self.phase - ys) % 4
        return ("+", "+i", "-", "-i")[rel] + "".join(chars)


def _check_dims(a: PauliString, b: PauliString) -> None:
    if a.n != b.n:
        raise DimensionError(f"size mismatch: {a.n} vs {b.n}")


def pauli_product(a: PauliString, b: PauliString) -> PauliString:
    """Operator product ``a*b`` with exact phase."""
    _check_dims(a, b)
    phase = a.phase + b.phase + 2 * _popcount(a.z_bits & b.x_bits)
    return PauliString(a.n, a.x_bits ^ b.x_bits, a.z_bits ^ b.z_bits, phase)


def commutes(a: PauliString, b: PauliString) -> bool:
    _check_dims(a, b)
    return _popcount((a.x_bits & b.z_bits) ^ (a.z_bits & b.x_bits)) % 2 == 0


# ---------------------------------------------------------------- gates


@dataclass(frozen=True)
class CX:
    control: int
    target: int

    def __post_init__(self) -> None:
        if self.control == self.target:
            raise ValueError("CX needs distinct qubits")

    @property
    def qubits(self) -> tuple[int, ...]:
        return (self.control, self.target)


@dataclass(frozen=True)
class H:
    q: int

    @property
    def qubits(self) -> tuple[int, ...]:
        return (self.q,)


@dataclass(frozen=True)
class H_YZ:
    """Hadamard-like gate (Y+Z)/sqrt(2): swaps Y and Z, negates X."""

    q: int

    @property
    def qubits(self) -> tuple[int, ...]:
        return (self.q,)


CliffordGate = CX | H | H_YZ


def conjugate(p: PauliString, g: CliffordGate) -> PauliString:
    """Return ``g p g^dagger``."""
    if not isinstance(g, (CX, H, H_YZ)):
        raise UnsupportedGateError(f"unsupported gate {g!r}")
    if any(q >= p.n or q < 0 for q in g.qubits):
        raise IndexError("gate qubit out of range")
    x, z, ph = p.x_bits, p.z_bits, p.phase
    if isinstance(g, CX):
        c, t = g.control, g.target
        x ^= ((x >> c) & 1) << t
        z ^= ((z >> t) & 1) << c
    elif isinstance(g, H):
        q = g.q
        xq, zq = (x >> q) & 1, (z >> q) & 1
        ph += 2 * (xq & zq)
        x = (x & ~(1 << q)) | (zq << q)
        z = (z & ~(1 << q)) | (xq << q)
    elif isinstance(g, H_YZ):
        q = g.q
        xq, zq = (x >> q) & 1, (z >> q) & 1
        ph += 2 * xq + zq
        x ^= zq << q
    else:
        raise UnsupportedGateError(f"unsupported gate {g!r}")
    return PauliString(p.n, x, z, ph)


def inverse(g: CliffordGate) -> Sequence[CliffordGate]:
    """Gate sequence implementing the inverse of ``g``."""
    if isinstance(g, (CX, H)):
        return (g,)
    if isinstance(g, H_YZ):
        return (g,)  # H_YZ is an involution
    raise UnsupportedGateError(f"unsupported gate {g!r}")


# ---------------------------------------------------------------- tableau


class Tableau:
    """Aaronson-Gottesman tableau with i-exponent phases.

    Rows ``0..n-1`` are destabilizers, ``n..2n-1`` stabilizers.  Each
    stabilizer row also carries a *record dependency*: the set of earlier
    measurement records whose outcomes fix its sign.  This is what lets
    :func:`qecf.sim.reference_run` turn deterministic outcomes into
    detectors.
    """

    def __init__(self, n: int, rng: np.random.Generator | None = None):
        self.n = n
        self.x = np.zeros((2 * n, n), dtype=bool)
        self.z = np.zeros((2 * n, n), dtype=bool)
        self.ph = np.zeros(2 * n, dtype=np.int64)
        idx = np.arange(n)
        self.x[idx, idx] = True
        self.z[n + idx, idx] = True
        self.rng = rng if rng is not None else np.random.default_rng(0)
        self.num_records = 0
        self._dep_cap = 64
        self.dep = np.zeros((2 * n, self._dep_cap), dtype=bool)

    # -- row helpers
    def row(self, r: int) -> PauliString:
        xb = sum(1 << int(q) for q in np.nonzero(self.x[r])[0])
        zb = sum(1 << int(q) for q in np.nonzero(self.z[r])[0])
        return PauliString(self.n, xb, zb, int(self.ph[r]))

    def stabilizers(self) -> list[PauliString]:
        return [self.row(self.n + i) for i in range(self.n)]

    def _rowmul(self, rows: np.ndarray, p: int) -> None:
        """rows <- rows * row p (left multiplication by existing row)."""
        if rows.size == 0:
            return
        cnt = np.count_nonzero(self.z[rows] & self.x[p], axis=1)
        self.ph[rows] = (self.ph[rows] + self.ph[p] + 2 * cnt) % 4
        self.x[rows] ^= self.x[p]
        self.z[rows] ^= self.z[p]
        self.dep[rows] ^= self.dep[p]

    # -- gates
    def apply(self, g: CliffordGate) -> None:
        if isinstance(g, CX):
            c, t = g.control, g.target
            self.x[:, t] ^= self.x[:, c]
            self.z[:, c] ^= self.z[:, t]
        elif isinstance(g, H):
            q = g.q
            both = self.x[:, q] & self.z[:, q]
            self.ph = (self.ph + 2 * both) % 4
            tmp = self.x[:, q].copy()
            self.x[:, q] = self.z[:, q]
            self.z[:, q] = tmp
        elif isinstance(g, H_YZ):
            q = g.q
            xq = self.x[:, q].astype(np.int64)
            zq = self.z[:, q].astype(np.int64)
            self.ph = (self.ph + 2 * xq + zq) % 4
            self.x[:, q] ^= self.z[:, q]
        else:
            raise UnsupportedGateError(f"unsupported gate {g!r}")

    def apply_pauli(self, p: PauliString) -> None:
        """Apply a Pauli operator to the state (flips anticommuting row signs)."""
        self.ph = (self.ph + 2 * self._anti(p)) % 4

    def _anti(self, p: PauliString) -> np.ndarray:
        """Boolean vector: which rows anticommute with ``p``."""
        xs = _mask_indices(p.x_bits)
        zs = _mask_indices(p.z_bits)
        cnt = np.count_nonzero(self.x[:, zs], axis=1) + np.count_nonzero(self.z[:, xs], axis=1)
        return cnt % 2 == 1

    def _bits(self, mask: int) -> np.ndarray:
        out = np.zeros(self.n, dtype=bool)
        q = 0
        while mask:
            if mask & 1:
                out[q] = True
            mask >>= 1
            q += 1
        return out

    def _grow_dep(self) -> None:
        if self.num_records >= self._dep_cap:
            self._dep_cap *= 2
            new = np.zeros((2 * self.n, self._dep_cap), dtype=bool)
            new[:, : self.dep.shape[1]] = self.dep
            self.dep = new

    # -- measurement
    def peek(self, p: PauliString) -> tuple[bool, int]:
        """Return (deterministic, bit) without changing the state; bit is -1 if random."""
        n = self.n
        anti = self._anti(p)
        if anti[n:].any():
            return False, -1
        bit, _, _ = self._product_outcome(p, np.nonzero(anti[:n])[0])
        return True, bit

    def _product_outcome(self, p: PauliString, js: np.ndarray) -> tuple[int, int, np.ndarray]:
        n = self.n
        rows = js + n
        xs = self.x[rows]
        zs = self.z[rows]
        if len(rows):
            zpref = np.logical_xor.accumulate(zs, axis=0)
            cnt = int(np.count_nonzero(zpref[:-1] & xs[1:]))
        else:
            cnt = 0
        phi = (int(self.ph[rows].sum()) + 2 * cnt) % 4
        rel = (p.phase - phi) % 4
        if rel not in (0, 2):
            raise ValueError("measured operator is not Hermitian")
        return rel // 2, phi, rows

    def measure(
        self,
        p: PauliString,
        forced: int | None = None,
        record: bool = True,
    ) -> tuple[int, bool, np.ndarray]:
        """Measure Hermitian Pauli ``p``.

        Returns ``(bit, deterministic, dep)`` where ``dep`` is a boolean vector
        over earlier records: for a deterministic outcome, the records whose
        XOR (plus a constant) equals this outcome.  If ``record`` is false the
        measurement is internal (used by resets) and gets no record index.
        """
        n = self.n
        if record:
            self._grow_dep()
        m = self.num_records
        px = self._bits(p.x_bits)
        pz = self._bits(p.z_bits)
        anti = self._anti(p)
        stab_anti = np.nonzero(anti[n:])[0]
        if stab_anti.size:
            pr = n + int(stab_anti[0])
            others = np.nonzero(anti)[0]
            others = others[others != pr]
            self._rowmul(others, pr)
            self.x[pr - n] = self.x[pr]
            self.z[pr - n] = self.z[pr]
            self.ph[pr - n] = self.ph[pr]
            bit = int(self.rng.integers(2)) if forced is None else int(forced)
            self.x[pr] = px
            self.z[pr] = pz
            # row = (-1)^bit * hermitian(p); p.phase already encodes Y factors
            self.ph[pr] = (p.phase + 2 * bit) % 4
            self.dep[pr] = False
            if record:
                self.dep[pr, m] = True
                self.num_records += 1
            return bit, False, np.zeros(0, dtype=bool)
        js = np.nonzero(anti[:n])[0]
        bit, phi, rows = self._product_outcome(p, js)
        dep = np.logical_xor.reduce(self.dep[rows], axis=0) if len(rows) else np.zeros(self.dep.shape[1], dtype=bool)
        if len(rows):
            # rebase: one product row becomes the measured operator itself
            r = int(rows[-1])
            rest = rows[:-1]
            dr = r - n
            if rest.size:
                self._rowmul(rest - n, dr)
            self.x[r] = px
            self.z[r] = pz
            self.ph[r] = phi
            if record:
                self.dep[r] = False
                self.dep[r, m] = True
            else:
                self.dep[r] = dep
        if record:
            self.num_records += 1
        return bit, True, dep[: m]

    def reset(self, q: int, basis: str = "Z") -> None:
        p = PauliString.single(self.n, q, basis)
        bit, _, _ = self.measure(p, forced=0, record=False)
        # locate the row now equal to +/-P and clear its record dependency
        n = self.n
        px = self._bits(p.x_bits)
        pz = self._bits(p.z_bits)
        match = np.nonzero((self.x[n:] == px).all(axis=1) & (self.z[n:] == pz).all(axis=1))[0]
        pr = n + int(match[0])
        # make it the only stabilizer row touching q
        touch = np.nonzero(self.x[n:, q] | self.z[n:, q])[0] + n
        touch = touch[touch != pr]
        if touch.size:
            self._rowmul(touch, pr)
            # keep destabilizer pr-n anticommuting only with row pr
            for r in touch:
                self._destab_fix(pr - n, r - n)
        if bit:
            flip = PauliString.single(self.n, q, "Z" if basis == "X" else "X")
            self.apply_pauli(flip)
        self.ph[pr] = p.phase % 4
        self.dep[pr] = False

    def _destab_fix(self, dp: int, dk: int) -> None:
        cnt = np.count_nonzero(self.z[dp] & self.x[dk])
        self.ph[dp] = (self.ph[dp] + self.ph[dk] + 2 * cnt) % 4
        self.x[dp] ^= self.x[dk]
        self.z[dp] ^= self.z[dk]


def tableau_apply(t: Tableau, g: CliffordGate) -> Tableau:
    t.apply(g)
    return t


def tableau_reset(t: Tableau, q: int, basis: str = "Z") -> Tableau:
    t.reset(q, basis)
    return t


def tableau_measure(t: Tableau, q: int) -> tuple[int, bool]:
    bit, det, _ = t.measure(PauliString.single(t.n, q, "Z"))
    return bit, det
