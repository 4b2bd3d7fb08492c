"""Error enumeration, per-sector decoding graphs and exact matching.

Detectors carry a basis tag.  Z-basis detectors see X-type faults and pair
with observable 0 (the Z_L readout); X-basis detectors see Z-type faults and
pair with observable 1 (the X_L readout).  A Y fault therefore splits into an
X part and a Z part, one per sector, and each part must touch at most two
detectors of its sector for the problem to be a graph matching.
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field

import numba
import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import shortest_path

from .blossom import max_weight_matching
from .circuit import Circuit
from .sim import CHUNK_SHOTS, CompiledCircuit, ShotBatch, compile_circuit, run_frames

SECTORS = ("Z", "X")  # sector s decodes observable s
PAULI_NAMES = {0: "I", 1: "X", 2: "Z", 3: "Y"}


class MatchabilityError(ValueError):
    """A fault touches more than two detectors of one sector."""


class DisconnectedDetectorError(ValueError):
    """A flagged detector has no path to any partner or the boundary."""


@dataclass(frozen=True)
class ErrorMechanism:
    instruction: int
    label: str
    p: float
    z_dets: tuple[int, ...]  # Z-basis detectors flipped (X part of the fault)
    x_dets: tuple[int, ...]  # X-basis detectors flipped (Z part)
    flip0: bool  # observable 0 (Z_L readout) flips
    flip1: bool  # observable 1 (X_L readout) flips
    post: bool = False  # touches a post-selection detector

    def sector(self, s: int) -> tuple[tuple[int, ...], bool]:
        return (self.z_dets, self.flip0) if s == 0 else (self.x_dets, self.flip1)


def _label(kind: str, targets, code: int) -> str:
    if kind == "DEPOLARIZE1":
        return f"{PAULI_NAMES[code]}{int(targets)}"
    a, b = (int(t) for t in targets)
    parts = []
    if code & 3:
        parts.append(f"{PAULI_NAMES[code & 3]}{a}")
    if code >> 2:
        parts.append(f"{PAULI_NAMES[code >> 2]}{b}")
    return "*".join(parts)


def enumerate_mechanisms(c: Circuit | CompiledCircuit, chunk: int = CHUNK_SHOTS) -> list[ErrorMechanism]:
    """Every single Pauli fault of every noise instruction, with its effects.

    Each fault is propagated as its own forced frame (one fault per shot), so
    the result is exact and exhaustive.  Order: instruction, target, Pauli code.
    """
    cc = c if isinstance(c, CompiledCircuit) else compile_circuit(c)
    todo: list[tuple[int, int, int]] = []  # (site, target index, code)
    for s, (_, kind, tg, _) in enumerate(cc.noise_sites):
        ncode = 4 if kind == "DEPOLARIZE1" else 16
        for t in range(len(tg)):
            for code in range(1, ncode):
                todo.append((s, t, code))
    basis = cc.detector_basis
    post = cc.detector_post
    out: list[ErrorMechanism] = []
    for lo in range(0, len(todo), chunk):
        part = todo[lo:lo + chunk]
        forced: dict[int, list] = defaultdict(lambda: ([], [], []))
        for shot, (s, t, code) in enumerate(part):
            f = forced[s]
            f[0].append(t)
            f[1].append(shot)
            f[2].append(code)
        forced_np = {s: tuple(np.array(v, dtype=np.int64) for v in f) for s, f in forced.items()}
        batch = run_frames(cc, len(part), forced=forced_np)
        dets = batch.unpack(batch.detectors) if len(cc.detectors) else np.zeros((0, len(part)), bool)
        obs = batch.unpack(batch.observables)
        shot_idx, det_idx = np.nonzero(dets.T)
        bounds = np.searchsorted(shot_idx, np.arange(len(part) + 1))
        for shot, (s, t, code) in enumerate(part):
            k, kind, tg, p = cc.noise_sites[s]
            ds = det_idx[bounds[shot]:bounds[shot + 1]]
            nc = 3 if kind == "DEPOLARIZE1" else 15
            out.append(
                ErrorMechanism(
                    instruction=int(k),
                    label=_label(kind, tg[t], code),
                    p=float(p) / nc,
                    z_dets=tuple(int(d) for d in ds if basis[d] == 0),
                    x_dets=tuple(int(d) for d in ds if basis[d] == 1),
                    flip0=bool(obs[0, shot]),
                    flip1=bool(obs[1, shot]),
                    post=bool(post[ds].any()) if len(ds) else False,
                )
            )
    return out


# ---------------------------------------------------------------- graph


@dataclass
class SectorGraph:
    basis: str
    nodes: np.ndarray  # global detector indices, local index = position
    edges: dict[tuple[int, int], tuple[float, bool, list[int]]]  # (u, v) local, v == -1 boundary
    dist: np.ndarray | None = None  # (N+1, N+1), last row/col = boundary
    parity: np.ndarray | None = None

    @property
    def boundary(self) -> int:
        return len(self.nodes)


@dataclass
class MatchabilityReport:
    footprints: list[tuple[int, int]] = field(default_factory=list)  # per mechanism (|Z part|, |X part|)
    decomposed: list[bool] = field(default_factory=list)  # Y-type: both sectors nonempty
    failures: list[int] = field(default_factory=list)  # mechanisms with a sector footprint > 2
    undetectable_logical: list[int] = field(default_factory=list)
    dropped_post: int = 0
    observable_conflicts: int = 0

    @property
    def passed(self) -> bool:
        return not self.failures and not self.undetectable_logical

    @property
    def matchable(self) -> bool:
        return not self.failures

    def summary(self) -> str:
        return (
            f"mechanisms={len(self.footprints)} decomposed={sum(self.decomposed)} "
            f"over_2={len(self.failures)} undetectable_logical={len(self.undetectable_logical)} "
            f"post_dropped={self.dropped_post} conflicts={self.observable_conflicts}"
        )


@dataclass
class DecodingGraph:
    sectors: tuple[SectorGraph, SectorGraph]
    num_detectors: int

    def sector_of(self, basis: str) -> SectorGraph:
        return self.sectors[SECTORS.index(basis)]


def xor_merge(p: float, q: float) -> float:
    return p * (1 - q) + q * (1 - p)


def edge_weight(p: float) -> float:
    if not 0 < p < 0.5:
        raise ValueError(f"edge probability must lie in (0, 1/2), got {p}")
    return math.log((1 - p) / p)


def build_decoding_graph(
    mechanisms: list[ErrorMechanism],
    num_detectors: int,
    detector_basis: np.ndarray,
    detector_post: np.ndarray | None = None,
) -> tuple[DecodingGraph, MatchabilityReport]:
    """Split faults by sector, merge parallel edges and precompute shortest paths.

    Faults that fire a post-selection detector never survive to decoding and
    are left out.  A fault whose sector part flips the observable without
    touching any detector is recorded as undetectable.  Raises
    :class:`MatchabilityError` if some sector part touches more than two
    detectors.
    """
    post = detector_post if detector_post is not None else np.zeros(num_detectors, bool)
    report = MatchabilityReport()
    nodes = [np.array([d for d in range(num_detectors) if detector_basis[d] == b and not post[d]], dtype=np.int64) for b in (0, 1)]
    local = [{int(g): k for k, g in enumerate(ns)} for ns in nodes]
    edges: list[dict] = [{}, {}]
    for mi, m in enumerate(mechanisms):
        report.footprints.append((len(m.z_dets), len(m.x_dets)))
        report.decomposed.append(bool(m.z_dets) and bool(m.x_dets))
        if m.post:
            report.dropped_post += 1
            continue
        if len(m.z_dets) > 2 or len(m.x_dets) > 2:
            report.failures.append(mi)
            continue
        for s in (0, 1):
            dets, flip = m.sector(s)
            if not dets:
                if flip:
                    report.undetectable_logical.append(mi)
                continue
            us = sorted(local[s][d] for d in dets)
            key = (us[0], us[1]) if len(us) == 2 else (us[0], -1)
            if key in edges[s]:
                p0, f0, prov = edges[s][key]
                if f0 != flip:
                    report.observable_conflicts += 1
                    if m.p > p0:
                        f0 = flip
                edges[s][key] = (xor_merge(p0, m.p), f0, prov + [mi])
            else:
                edges[s][key] = (m.p, flip, [mi])
    if report.failures:
        raise MatchabilityError(f"{len(report.failures)} mechanisms touch more than two detectors of a sector")
    g = DecodingGraph(
        (SectorGraph("Z", nodes[0], edges[0]), SectorGraph("X", nodes[1], edges[1])),
        num_detectors,
    )
    for sg in g.sectors:
        _all_pairs(sg)
    return g, report


def decoding_graph_for(c: Circuit) -> tuple[DecodingGraph, MatchabilityReport, list[ErrorMechanism]]:
    cc = compile_circuit(c)
    mechs = enumerate_mechanisms(cc)
    g, rep = build_decoding_graph(mechs, len(cc.detectors), cc.detector_basis, cc.detector_post)
    return g, rep, mechs


def audit_matchability(c: Circuit) -> tuple[MatchabilityReport, list[ErrorMechanism]]:
    """Like :func:`decoding_graph_for` but reports instead of raising."""
    cc = compile_circuit(c)
    mechs = enumerate_mechanisms(cc)
    try:
        _, rep = build_decoding_graph(mechs, len(cc.detectors), cc.detector_basis, cc.detector_post)
    except MatchabilityError:
        rep = MatchabilityReport()
        for mi, m in enumerate(mechs):
            rep.footprints.append((len(m.z_dets), len(m.x_dets)))
            rep.decomposed.append(bool(m.z_dets) and bool(m.x_dets))
            if not m.post and (len(m.z_dets) > 2 or len(m.x_dets) > 2):
                rep.failures.append(mi)
    return rep, mechs


def _all_pairs(sg: SectorGraph) -> None:
    n = len(sg.nodes) + 1
    b = n - 1
    rows, cols, w, par = [], [], [], []
    for (u, v), (p, flip, _) in sorted(sg.edges.items()):
        v = b if v == -1 else v
        rows.append(u)
        cols.append(v)
        w.append(edge_weight(p))
        par.append(flip)
    if not rows:
        sg.dist = np.full((n, n), np.inf)
        np.fill_diagonal(sg.dist, 0.0)
        sg.parity = np.zeros((n, n), dtype=np.uint8)
        return
    mat = csr_matrix((np.array(w), (np.array(rows), np.array(cols))), shape=(n, n))
    dist, pred = shortest_path(mat, method="D", directed=False, return_predecessors=True)
    flip = np.zeros((n, n), dtype=np.uint8)
    for r, cc_, f in zip(rows, cols, par):
        flip[r, cc_] = flip[cc_, r] = f
    sg.dist = dist
    sg.parity = _path_parity(dist, pred.astype(np.int64), flip)


@numba.njit(cache=True)
def _path_parity(dist, pred, flip):
    n = dist.shape[0]
    out = np.zeros((n, n), dtype=np.uint8)
    for s in range(n):
        order = np.argsort(dist[s])
        for j in order:
            if j == s or not np.isfinite(dist[s, j]):
                continue
            pj = pred[s, j]
            out[s, j] = out[s, pj] ^ flip[pj, j]
    return out


# ---------------------------------------------------------------- matching kernels

DP_MAX = 6
BIG = 1e300


@numba.njit(cache=True)
def _find(parent, i):
    while parent[i] != i:
        parent[i] = parent[parent[i]]
        i = parent[i]
    return i


@numba.njit(cache=True)
def _dp_component(comp, dist, parity, b):
    """Exact min-weight pairing of ``comp`` nodes with optional boundary matches."""
    k = comp.shape[0]
    full = (1 << k) - 1
    cost = np.full(1 << k, BIG)
    par = np.zeros(1 << k, dtype=np.uint8)
    cost[0] = 0.0
    for mask in range(1, full + 1):
        i = 0
        while not (mask >> i) & 1:
            i += 1
        rest = mask ^ (1 << i)
        ni = comp[i]
        best = cost[rest] + dist[ni, b]
        bp = par[rest] ^ parity[ni, b]
        for j in range(i + 1, k):
            if (rest >> j) & 1:
                nj = comp[j]
                c = cost[rest ^ (1 << j)] + dist[ni, nj]
                if c < best:
                    best = c
                    bp = par[rest ^ (1 << j)] ^ parity[ni, nj]
        cost[mask] = best
        par[mask] = bp
    return cost[full], par[full]


@numba.njit(cache=True)
def _blossom_component(comp, dist, parity, b):
    """Exact pairing via maximum-weight matching on the savings over boundary matches."""
    k = comp.shape[0]
    for i in range(k):
        if not dist[comp[i], b] < BIG:
            return np.inf, 0
    gain = np.zeros((k, k))
    for i in range(k):
        for j in range(i + 1, k):
            g = dist[comp[i], b] + dist[comp[j], b] - dist[comp[i], comp[j]]
            if g > 0:
                gain[i, j] = g
                gain[j, i] = g
    mate = max_weight_matching(gain)
    total = 0.0
    p = 0
    for i in range(k):
        m = mate[i]
        if m == -1:
            total += dist[comp[i], b]
            p ^= parity[comp[i], b]
        elif m > i:
            total += dist[comp[i], comp[m]]
            p ^= parity[comp[i], comp[m]]
    return total, p


@numba.njit(cache=True)
def _decode_kernel(indptr, flagged, dist, parity, dp_max, pred, weight, status):
    """Decode every shot; a shot with an unmatchable detector gets status 2.

    Components up to ``dp_max`` nodes use the subset DP, larger ones the blossom.
    """
    b = dist.shape[0] - 1
    nshots = indptr.shape[0] - 1
    for s in range(nshots):
        lo = indptr[s]
        hi = indptr[s + 1]
        k = hi - lo
        if k == 0:
            continue
        nodes = flagged[lo:hi]
        parent = np.arange(k)
        for a in range(k):
            na = nodes[a]
            for c in range(a + 1, k):
                nc = nodes[c]
                if dist[na, nc] < dist[na, b] + dist[nc, b]:
                    ra = _find(parent, a)
                    rc = _find(parent, c)
                    if ra != rc:
                        parent[max(ra, rc)] = min(ra, rc)
        roots = np.empty(k, dtype=np.int64)
        for a in range(k):
            roots[a] = _find(parent, a)
        total = 0.0
        p = 0
        for r in range(k):
            cnt = 0
            for a in range(k):
                if roots[a] == r:
                    cnt += 1
            if cnt == 0:
                continue
            comp = np.empty(cnt, dtype=np.int64)
            t = 0
            for a in range(k):
                if roots[a] == r:
                    comp[t] = nodes[a]
                    t += 1
            if cnt == 1:
                total += dist[comp[0], b]
                p ^= parity[comp[0], b]
            elif cnt > dp_max:
                w, q = _blossom_component(comp, dist, parity, b)
                total += w
                p ^= q
            else:
                w, q = _dp_component(comp, dist, parity, b)
                total += w
                p ^= q
        if not total < BIG / 2 or not np.isfinite(total):
            status[s] = 2
            continue
        pred[s] = p
        weight[s] = total


def decode_sector(
    sg: SectorGraph,
    indptr: np.ndarray,
    flagged: np.ndarray,
    dp_max: int = DP_MAX,
) -> tuple[np.ndarray, np.ndarray]:
    """Predicted observable flips and matching weights for a CSR list of flagged local nodes."""
    nshots = len(indptr) - 1
    pred = np.zeros(nshots, dtype=np.uint8)
    weight = np.zeros(nshots, dtype=np.float64)
    status = np.zeros(nshots, dtype=np.uint8)
    _decode_kernel(indptr.astype(np.int64), flagged.astype(np.int64), sg.dist, sg.parity, dp_max, pred, weight, status)
    if (status == 2).any():
        s = int(np.nonzero(status == 2)[0][0])
        raise DisconnectedDetectorError(f"shot {s}: a flagged {sg.basis}-sector detector cannot be matched")
    return pred, weight


def _csr_from_bits(bits: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """bool (nodes, shots) -> (indptr, flagged local node indices)."""
    shot, node = np.nonzero(bits.T)
    indptr = np.searchsorted(shot, np.arange(bits.shape[1] + 1)).astype(np.int64)
    return indptr, node.astype(np.int64)


def decode_batch(g: DecodingGraph, det_bits: np.ndarray, dp_max: int = DP_MAX) -> np.ndarray:
    """Predictions for a bool (detectors, shots) matrix; returns uint8 (2, shots)."""
    shots = det_bits.shape[1]
    out = np.zeros((2, shots), dtype=np.uint8)
    for s, sg in enumerate(g.sectors):
        if len(sg.nodes) == 0:
            continue
        indptr, flagged = _csr_from_bits(det_bits[sg.nodes])
        out[s], _ = decode_sector(sg, indptr, flagged, dp_max)
    return out


def mwpm_decode(g: DecodingGraph, detector_bits) -> tuple[int, int]:
    """Predicted (observable 0 flip, observable 1 flip) for one shot."""
    bits = np.asarray(detector_bits, dtype=bool).reshape(-1, 1)
    p = decode_batch(g, bits)
    return int(p[0, 0]), int(p[1, 0])


def failures(state: str, pred: np.ndarray, actual: np.ndarray) -> np.ndarray:
    """Per-shot logical failure for the target state (``pred``/``actual`` are (2, shots))."""
    r = (pred ^ actual).astype(bool)
    if state == "zero":
        return r[0]
    if state == "plus":
        return r[1]
    return r[0] ^ r[1]


def decode_shots(g: DecodingGraph, batch: ShotBatch, state: str) -> tuple[int, int]:
    """(kept shots, failures among kept shots) for a sampled batch."""
    keep = ~batch.unpack(batch.discard[None, :])[0]
    if g.num_detectors:
        dets = batch.unpack(batch.detectors)[:, keep]
    else:
        dets = np.zeros((0, int(keep.sum())), dtype=bool)
    obs = batch.unpack(batch.observables)[:, keep].astype(np.uint8)
    pred = decode_batch(g, dets)
    return int(keep.sum()), int(failures(state, pred, obs).sum())


# ---------------------------------------------------------------- oracles and dumps


def brute_force_weight(dist: np.ndarray, nodes: list[int] | np.ndarray) -> float:
    """Minimum pairing weight by exhaustive recursion (boundary is the last index)."""
    b = dist.shape[0] - 1
    nodes = list(nodes)
    if not nodes:
        return 0.0
    first, rest = nodes[0], nodes[1:]
    best = dist[first, b] + brute_force_weight(dist, rest)
    for k, other in enumerate(rest):
        best = min(best, dist[first, other] + brute_force_weight(dist, rest[:k] + rest[k + 1:]))
    return best


def dem_text(g: DecodingGraph) -> str:
    """Stable text dump: one ``error(p) D.. D..|boundary [L0|L1]`` line per edge."""
    lines = []
    for s, sg in enumerate(g.sectors):
        lines.append(f"# sector {sg.basis} observable L{s} nodes {len(sg.nodes)}")
        for (u, v), (p, flip, _) in sorted(sg.edges.items()):
            a = f"D{int(sg.nodes[u])}"
            bb = "boundary" if v == -1 else f"D{int(sg.nodes[v])}"
            tail = f" L{s}" if flip else ""
            lines.append(f"error({p:.10g}) {a} {bb}{tail}")
    return "\n".join(lines) + "\n"
