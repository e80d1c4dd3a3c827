"""Exact classical track on periodic bitstrings.

Everything quantum in this package restricted to computational basis states
has a classical shadow; this module implements that shadow directly so large
rings and exhaustive scans stay cheap.  The majority-voting triple maps are
not hand-coded: they are derived mechanically from the quantum Kraus
operators by probing all eight basis states, and an agreement test guards
the derivation.

Bitstrings are numpy uint8 arrays, site 1 leftmost; ASCII '0'/'1' strings
are accepted everywhere.
"""
from __future__ import annotations

from functools import lru_cache

import numpy as np

__all__ = [
    "parse_bits", "format_bits", "popcount", "has_adjacent_ones", "is_uniform",
    "eca_step", "fuks_classical_step", "mv_spread_classical",
    "mv_consensus_classical", "mv_sublayer_sequence", "mv_classify",
    "tau_formula", "gamma_p_relation", "p_from_gamma_tau",
    "partitioned_rule_step", "fates_classical_trajectory",
    "absorption_time_trials", "mv_worst_spread_input",
    "mv_worst_consensus_input", "ClassificationFailureError",
]

SUPPORTED_RULES = (170, 184, 232, 240)


class ClassificationFailureError(RuntimeError):
    """The sublayer budget elapsed without reaching a uniform state."""


def parse_bits(bits) -> np.ndarray:
    if isinstance(bits, str):
        if set(bits) - {"0", "1"}:
            raise ValueError(f"bitstring must be over 0/1, got {bits!r}")
        arr = np.frombuffer(bits.encode(), dtype=np.uint8) - ord("0")
        return arr.copy()
    arr = np.asarray(bits, dtype=np.uint8)
    if arr.ndim != 1 or not np.isin(arr, (0, 1)).all():
        raise ValueError("expected a 1-d array of 0/1 values")
    return arr.copy()


def format_bits(bits: np.ndarray) -> str:
    return "".join("1" if b else "0" for b in bits)


def popcount(bits) -> int:
    return int(parse_bits(bits).sum())


def has_adjacent_ones(bits) -> bool:
    arr = parse_bits(bits)
    return bool(np.any(arr & np.roll(arr, -1)))


def is_uniform(bits) -> bool:
    arr = parse_bits(bits)
    return bool(np.all(arr == arr[0]))


# ---------------------------------------------------------------------------
# elementary rules


def eca_step(rule: int, bits) -> np.ndarray:
    """Synchronous radius-1 update with periodic boundary."""
    if rule not in SUPPORTED_RULES:
        raise ValueError(f"unsupported rule {rule}; supported: {SUPPORTED_RULES}")
    arr = parse_bits(bits)
    left = np.roll(arr, 1)
    right = np.roll(arr, -1)
    nbhd = (left.astype(np.int64) << 2) | (arr.astype(np.int64) << 1) | right
    table = np.array([(rule >> i) & 1 for i in range(8)], dtype=np.uint8)
    return table[nbhd]


_RULE_CENTER = {
    # deterministic center map per (left, right) neighborhood, from the
    # quantum channel tables: damp / identity / flip-or-identity / pump
    184: {(0, 0): lambda c: 0, (0, 1): lambda c: c,
          (1, 0): lambda c: 1 - c, (1, 1): lambda c: 1},
    232: {(0, 0): lambda c: 0, (0, 1): lambda c: c,
          (1, 0): lambda c: c, (1, 1): lambda c: 1},
}


def partitioned_rule_step(rule: int, bits,
                          phase_order: str = "odd_first") -> np.ndarray:
    """Center-update partitioned step of a deterministic rule.

    Mirrors the quantum discrete convention exactly: two center phases, each
    applied in descending site order with updates visible to later centers
    of the same phase.  The traffic/majority mixture pins odd centers first
    (see the quantum builder for why).
    """
    if rule not in _RULE_CENTER:
        raise ValueError(f"unsupported partitioned rule {rule}")
    table = _RULE_CENTER[rule]
    arr = parse_bits(bits)
    n = len(arr)
    evens = [j for j in range(n) if (j + 1) % 2 == 0]
    odds = [j for j in range(n) if (j + 1) % 2 == 1]
    phases = {"even_first": (evens, odds), "odd_first": (odds, evens)}
    if phase_order not in phases:
        raise ValueError(f"unknown phase_order {phase_order!r}")
    for phase in phases[phase_order]:
        for j in sorted(phase, reverse=True):
            left, right = int(arr[(j - 1) % n]), int(arr[(j + 1) % n])
            arr[j] = table[(left, right)](int(arr[j]))
    return arr


def fates_classical_trajectory(p: float, bits, n_steps: int,
                               rng: np.random.Generator) -> np.ndarray:
    """Global-coin mixture run: each step applies the full partitioned
    update of rule 184 (probability p) or rule 232.  Returns the final
    configuration."""
    if not 0 <= p <= 1:
        raise ValueError(f"p must lie in [0, 1], got {p}")
    arr = parse_bits(bits)
    for _ in range(n_steps):
        rule = 184 if rng.random() < p else 232
        arr = partitioned_rule_step(rule, arr)
    return arr


def fuks_classical_step(p: float, bits, rng: np.random.Generator) -> np.ndarray:
    """Synchronous probabilistic update; flip odds scale with disagreeing
    neighbors (p per boundary, 2p when both neighbors disagree)."""
    if not 0 < p <= 0.5:
        raise ValueError(f"p must lie in (0, 0.5], got {p}")
    arr = parse_bits(bits)
    left = np.roll(arr, 1).astype(float)
    right = np.roll(arr, -1).astype(float)
    prob_one = np.where(arr == 0, p * (left + right),
                        1.0 - p * ((1 - left) + (1 - right)))
    return (rng.random(arr.shape) < prob_one).astype(np.uint8)


# ---------------------------------------------------------------------------
# majority-voting triple maps, derived from the quantum Kraus operators


@lru_cache(maxsize=None)
def _triple_map(kind: str) -> np.ndarray:
    """Deterministic 8-entry lookup: basis triple in -> basis triple out.

    Probes the quantum Kraus set with every basis vector; exactly one Kraus
    operator must act per input and must yield a single basis vector.
    """
    from .models import _mv_consensus_kraus, _mv_spread_kraus
    kraus_fn = {"spread": _mv_spread_kraus, "consensus": _mv_consensus_kraus}[kind]
    ops = [op.matrix for op in kraus_fn((0, 1, 2))]
    table = np.zeros(8, dtype=np.int64)
    for s in range(8):
        e = np.zeros(8)
        e[s] = 1.0
        hits = []
        for K in ops:
            out = K @ e
            nz = np.flatnonzero(np.abs(out) > 1e-12)
            if len(nz) == 1 and abs(abs(out[nz[0]]) - 1.0) < 1e-12:
                hits.append(int(nz[0]))
            elif len(nz) != 0:
                raise RuntimeError(f"{kind} Kraus set is not basis-deterministic")
        if len(hits) != 1:
            raise RuntimeError(f"{kind} triple map ambiguous on input {s:03b}")
        table[s] = hits[0]
    return table


def _apply_triples(bits: np.ndarray, phase: int, kind: str) -> np.ndarray:
    n = len(bits)
    if n % 3 != 0:
        raise ValueError(f"triple partition needs length % 3 == 0, got {n}")
    if phase not in (1, 2, 3):
        raise ValueError(f"phase must be 1, 2 or 3, got {phase}")
    table = _triple_map(kind)
    out = bits.copy()
    for start in range(phase - 1, n, 3):
        i, j, k = start, (start + 1) % n, (start + 2) % n
        s = (int(bits[i]) << 2) | (int(bits[j]) << 1) | int(bits[k])
        t = table[s]
        out[i], out[j], out[k] = (t >> 2) & 1, (t >> 1) & 1, t & 1
    return out


def mv_spread_classical(bits, phase: int) -> np.ndarray:
    """One spreading sublayer: relocates the middle one of phase-aligned
    1,1,0 triples; conserves popcount."""
    return _apply_triples(parse_bits(bits), phase, "spread")


def mv_consensus_classical(bits, phase: int) -> np.ndarray:
    """One consensus sublayer: kills phase-aligned isolated ones, grows
    clusters over a neighboring zero on either side."""
    return _apply_triples(parse_bits(bits), phase, "consensus")


def mv_sublayer_sequence(count: int):
    """Phase indices in application order; a full layer is phases 3, 2, 1."""
    order = (3, 2, 1)
    return [order[i % 3] for i in range(count)]


def mv_spread_sweep(bits) -> np.ndarray:
    """Unpartitioned spreading sweep: every center once, site N down to 1.

    One sweep splits a cluster by inserting a zero after its leftmost one
    and shifting the remaining ones right, wrap included; updates are
    visible to later centers of the same sweep.
    """
    arr = parse_bits(bits)
    n = len(arr)
    table = _triple_map("spread")
    for j in reversed(range(n)):
        i, k = (j - 1) % n, (j + 1) % n
        s = (int(arr[i]) << 2) | (int(arr[j]) << 1) | int(arr[k])
        t = table[s]
        arr[i], arr[j], arr[k] = (t >> 2) & 1, (t >> 1) & 1, t & 1
    return arr


def mv_separated_target(bits) -> np.ndarray:
    """Endpoint of repeated spreading sweeps (no two ones adjacent).

    Only exists in the n <= N/2 sector; raises otherwise.
    """
    arr = parse_bits(bits)
    if popcount(arr) > len(arr) // 2:
        raise ValueError("majority-of-ones inputs cannot be fully separated")
    for _ in range(4 * len(arr)):
        if not has_adjacent_ones(arr):
            return arr
        arr = mv_spread_sweep(arr)
    raise RuntimeError("spreading sweeps failed to separate a minority input")


def tau_formula(n_sites: int) -> int:
    """Closed-form worst-case sublayer count for a multiple-of-three ring."""
    if n_sites % 3 != 0:
        raise ValueError(f"n_sites={n_sites} is not a multiple of 3")
    return 4 * (n_sites // 2) + 2 * n_sites // 3 - 5


def mv_classify(bits) -> tuple[int, int]:
    """Run spreading until no two ones are adjacent (or its budget ends),
    then consensus until uniform.  Returns (majority label, sublayers used).

    Raises :class:`ClassificationFailureError` if the budget of
    :func:`tau_formula` sublayers does not yield a uniform state; that
    would falsify the closed-form bound.
    """
    arr = parse_bits(bits)
    n = len(arr)
    if n % 3 != 0:
        raise ValueError(f"length {n} is not a multiple of 3; apply mv_pad first")
    from .models import mv_layer_counts
    tau_a, tau_b, _total = mv_layer_counts(n)
    used = 0
    for phase in mv_sublayer_sequence(tau_a):
        if not has_adjacent_ones(arr):
            break
        arr = mv_spread_classical(arr, phase)
        used += 1
    for phase in mv_sublayer_sequence(tau_b):
        if is_uniform(arr):
            break
        arr = mv_consensus_classical(arr, phase)
        used += 1
    if not is_uniform(arr):
        raise ClassificationFailureError(
            f"state {format_bits(arr)} not uniform after {used} sublayers")
    return int(arr[0]), used


# ---------------------------------------------------------------------------
# rate/probability dictionary between the discrete and continuous pictures


def gamma_p_relation(p: float) -> float:
    """gamma * tau implementing one discrete update of flip scale p."""
    if not 0 < p < 0.5:
        if p == 0.5:
            return float("inf")
        raise ValueError(f"p must lie in (0, 0.5), got {p}")
    return -np.log(1 - 2 * p)


def p_from_gamma_tau(gamma_tau: float) -> float:
    if gamma_tau < 0:
        raise ValueError(f"gamma*tau must be non-negative, got {gamma_tau}")
    return (1 - np.exp(-gamma_tau)) / 2


# ---------------------------------------------------------------------------
# Monte-Carlo absorption and worst-case inputs


def absorption_time_trials(p: float, n_sites: int, n_trials: int,
                           density: float, rng: np.random.Generator,
                           max_steps: int | None = None) -> np.ndarray:
    """Steps until all-zeros/all-ones under the probabilistic rule, batched.

    Initial configurations draw each cell one with probability ``density``.
    """
    if max_steps is None:
        max_steps = 400 * n_sites ** 2
    state = (rng.random((n_trials, n_sites)) < density).astype(np.uint8)
    times = np.full(n_trials, -1, dtype=np.int64)
    alive = np.ones(n_trials, dtype=bool)
    for step in range(1, max_steps + 1):
        sub = state[alive]
        left = np.roll(sub, 1, axis=1).astype(float)
        right = np.roll(sub, -1, axis=1).astype(float)
        prob_one = np.where(sub == 0, p * (left + right),
                            1.0 - p * ((1 - left) + (1 - right)))
        sub = (rng.random(sub.shape) < prob_one).astype(np.uint8)
        state[alive] = sub
        row = sub.sum(axis=1)
        done = (row == 0) | (row == n_sites)
        idx = np.flatnonzero(alive)
        times[idx[done]] = step
        alive[idx[done]] = False
        if not alive.any():
            break
    if alive.any():
        raise RuntimeError(f"{alive.sum()} trials unabsorbed after {max_steps} steps")
    return times


def mv_worst_spread_input(n_sites: int) -> np.ndarray:
    """Single cluster of floor(N/2) ones: the spreading worst case."""
    n = n_sites // 2
    return np.array([1] * n + [0] * (n_sites - n), dtype=np.uint8)


def mv_worst_consensus_input(n_sites: int) -> np.ndarray:
    """Maximal alternation plus a minimal cluster in the majority sector."""
    bits = np.zeros(n_sites, dtype=np.uint8)
    bits[0::2] = 1
    if n_sites % 2 == 0:
        bits[1] = 1  # forms the smallest cluster 1,1,1 at sites 1..3
    # odd N: sites N and 1 are both one and adjacent on the ring already
    return bits
