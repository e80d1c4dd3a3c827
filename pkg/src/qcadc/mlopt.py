"""Signed-fidelity cost over the eight-jump weight family and a multistart
derivative-free search.

The cost of a weight vector sums, over a small labelled training set of
basis configurations, the signed overlaps of the evolved state with the two
uniform target states at horizon tau = 10 N^2.  A perfectly classifying
generator would score -1 per training pair.  The weighted jump family is
basis preserving, so every evaluation runs on the 2^N classical restriction;
the full doubled-space route exists for cross-checking.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm
from scipy.optimize import minimize

from .classical import parse_bits
from .evolve import continuous_evolve, diagonal_rate_matrix
from .models import MLWeights, ml_lindblad
from .superop import vectorize

__all__ = [
    "TrainingPair", "TrainingSet", "default_training_set", "StateScore",
    "ml_cost", "per_state_scores", "optimize_weights", "truncate_weights",
    "ml_worst_case_time",
]


@dataclass(frozen=True)
class TrainingPair:
    bits: tuple[int, ...]
    label: int

    def __post_init__(self):
        if self.label not in (0, 1):
            raise ValueError(f"label must be 0 or 1, got {self.label}")
        if set(self.bits) - {0, 1}:
            raise ValueError(f"bits must be 0/1, got {self.bits}")


@dataclass(frozen=True)
class TrainingSet:
    pairs: tuple[TrainingPair, ...]

    def __len__(self):
        return len(self.pairs)


def default_training_set() -> TrainingSet:
    """The eleven labelled configurations on four and five sites."""
    raw = [
        ((0, 0, 0, 0), 0),
        ((1, 0, 0, 0), 0),
        ((1, 0, 1, 1), 1),
        ((1, 0, 0, 0, 0), 0),
        ((1, 1, 0, 0, 0), 0),
        ((1, 0, 1, 0, 0), 0),
        ((1, 1, 0, 1, 1), 1),
        ((1, 1, 1, 0, 0), 1),
        ((1, 0, 1, 1, 0), 1),
        ((1, 0, 1, 0, 1), 1),
        ((1, 1, 1, 1, 1), 1),
    ]
    return TrainingSet(tuple(TrainingPair(b, y) for b, y in raw))


def default_horizon(n_sites: int) -> float:
    return 10.0 * n_sites ** 2


@dataclass(frozen=True)
class StateScore:
    bits: tuple[int, ...]
    label: int
    f_zero: float        # weight on the all-zeros target
    f_one: float         # weight on the all-ones target
    summand: float
    predicted: int

    @property
    def misclassified(self) -> bool:
        return self.predicted != self.label


def _endpoint_weights(weights: MLWeights, bits: tuple[int, ...],
                      horizon_rule, method: str) -> tuple[float, float]:
    n = len(bits)
    tau = float(horizon_rule(n))
    spec = ml_lindblad(weights, n)
    if method == "diagonal":
        Q = diagonal_rate_matrix(spec).toarray()
        p0 = np.zeros(2 ** n)
        p0[int("".join(map(str, bits)), 2)] = 1.0
        p = expm(Q * tau) @ p0
        return float(p[0]), float(p[-1])
    if method == "dense":
        rho = np.zeros((2 ** n, 2 ** n), dtype=complex)
        s = int("".join(map(str, bits)), 2)
        rho[s, s] = 1.0
        out = continuous_evolve(spec, vectorize(rho), tau, method="dense",
                                samples=1, record=False)
        from .observables import diag_probabilities
        probs = diag_probabilities(out.final_state)
        return float(probs[0]), float(probs[-1])
    raise ValueError(f"unknown method {method!r}")


def per_state_scores(weights: MLWeights, tset: TrainingSet | None = None,
                     horizon_rule=default_horizon,
                     method: str = "diagonal") -> list[StateScore]:
    tset = tset or default_training_set()
    out = []
    for pair in tset.pairs:
        f0, f1 = _endpoint_weights(weights, pair.bits, horizon_rule, method)
        summand = (-1) ** (1 - pair.label) * f0 + (-1) ** pair.label * f1
        predicted = 1 if f1 > f0 else 0
        out.append(StateScore(pair.bits, pair.label, f0, f1,
                              float(summand), predicted))
    return out


def ml_cost(weights: MLWeights, tset: TrainingSet | None = None,
            horizon_rule=default_horizon, method: str = "diagonal") -> float:
    """Signed-fidelity sum; minimum is minus the training-set size."""
    return float(sum(s.summand
                     for s in per_state_scores(weights, tset, horizon_rule,
                                               method)))


def truncate_weights(weights: MLWeights, digits: int = 3) -> MLWeights:
    """Reporting convention: keep the first ``digits`` decimals."""
    factor = 10 ** digits
    return MLWeights(tuple(float(np.floor(x * factor) / factor)
                           for x in weights.w))


def ml_worst_case_time(weights: MLWeights, n_sites: int, dt: float = 0.5,
                       t_max: float = 800.0, threshold: float = 0.99,
                       criterion: str = "population") -> tuple[float, tuple[int, ...]]:
    """Slowest majority-sector input to reach the all-ones target.

    criterion "population" stops when the all-ones weight exceeds the
    threshold; "density" stops when the mean occupation n/N does.  Marches
    the full classical propagator so every input is timed in one pass.
    """
    spec = ml_lindblad(weights, n_sites)
    Q = diagonal_rate_matrix(spec).toarray()
    prop = expm(Q * dt)
    dim = 2 ** n_sites
    pop = np.array([bin(s).count("1") for s in range(dim)])
    M = np.eye(dim)
    todo = {s for s in range(dim) if pop[s] > n_sites / 2}
    taus: dict[int, float] = {}
    t = 0.0
    while todo and t < t_max:
        M = prop @ M
        t += dt
        vals = M[dim - 1] if criterion == "population" else (pop @ M) / n_sites
        hit = {s for s in todo if vals[s] > threshold}
        for s in hit:
            taus[s] = t
        todo -= hit
    if todo:
        raise RuntimeError(
            f"{len(todo)} majority inputs unconverged by t={t_max}")
    worst = max(taus, key=taus.get)
    bits = tuple((worst >> (n_sites - 1 - i)) & 1 for i in range(n_sites))
    return taus[worst], bits


@dataclass
class OptimizeResult:
    weights: MLWeights
    cost: float
    restarts_run: int
    evaluations: int
    history: list = field(default_factory=list)


def optimize_weights(tset: TrainingSet | None = None, restarts: int = 8,
                     rng: np.random.Generator | None = None,
                     start: MLWeights | None = None,
                     horizon_rule=default_horizon,
                     xatol: float = 1e-4) -> OptimizeResult:
    """Multistart simplex descent over the six free weights in [0, 1].

    Starts are uniform draws (plus the optional explicit start); iterates
    never leave the box because the objective clips before evaluating.
    Deterministic for a given generator state.
    """
    if restarts < 1:
        raise ValueError(f"restarts must be >= 1, got {restarts}")
    tset = tset or default_training_set()
    rng = rng or np.random.default_rng(0)
    evaluations = 0

    def objective(free):
        nonlocal evaluations
        evaluations += 1
        w = MLWeights.from_free(np.clip(free, 0.0, 1.0))
        return ml_cost(w, tset, horizon_rule)

    starts = []
    if start is not None:
        starts.append(np.array(start.free, dtype=float))
    while len(starts) < restarts:
        starts.append(rng.uniform(0.0, 1.0, size=6))

    best_w, best_c = None, np.inf
    history = []
    for x0 in starts:
        res = minimize(objective, x0, method="Nelder-Mead",
                       options={"xatol": xatol, "fatol": xatol,
                                "maxiter": 2000})
        w = MLWeights.from_free(np.clip(res.x, 0.0, 1.0))
        c = float(res.fun)
        history.append((w, c))
        if c < best_c:
            best_w, best_c = w, c
    return OptimizeResult(best_w, best_c, len(starts), evaluations, history)
