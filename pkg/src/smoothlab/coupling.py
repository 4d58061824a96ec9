"""Adaptive-to-oblivious coupling for smooth sequences.

Each round, an adaptive adversary picks a smooth distribution (a uniform set,
or any smooth pmf) that may depend on everything realized so far.  The
coupling draws k independent uniform replicas Y_1..Y_k from the whole domain
and produces:

- Z_1..Z_k: the replicas with every in-set hit resampled uniformly inside the
  adversary's set (so each Z_i is again uniform on the domain, i.i.d.), and
- X: the round's realized element, uniform on the adversary's set.

X lands inside {Z_1..Z_k} unless none of the k replicas hits the set, which
happens with probability (1 - sigma)^k per round for a set of density sigma.
Over T rounds the union bound gives failure probability at most
T*(1-sigma)^k; ``default_k`` sizes k as ceil(10*ln(T)/sigma) to drive that
below any polynomial.

``verify_marginals`` checks the promised structure on simulated traces:
every Z cell is uniform, cells are pairwise independent (including across
rounds), later-round Z's do not depend on earlier realized X's, and the
containment failure rate stays below the bound.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from smoothlab.domain import (
    FiniteDomain,
    History,
    RngStream,
    SmoothPmf,
    UniformOnSet,
    ValidationError,
    as_generator,
    decompose_smooth,
    min_support_size,
    validate_smooth,
)
from smoothlab.stats import chi_square_table, chi_square_uniform, wilson_interval

__all__ = [
    "UndersizedSetError",
    "CouplingConfig",
    "CouplingTrace",
    "SetAdversary",
    "PmfAdversary",
    "stationary_set_adversary",
    "full_domain_adversary",
    "window_set_adversary",
    "last_value_adversary",
    "stationary_pmf_adversary",
    "default_k",
    "containment_bound",
    "couple_single_round",
    "couple_adaptive",
    "couple_general",
    "enumerate_containment_probability",
    "MarginalReport",
    "verify_marginals",
    "traces_to_jsonl",
    "traces_from_jsonl",
]


class UndersizedSetError(ValidationError):
    """The adversary emitted a set smaller than ceil(sigma*n)."""


def default_k(T: int, sigma: float) -> int:
    """Replica count ceil(10*ln(T)/sigma), floored at 1."""
    if T < 1:
        raise ValidationError(f"T must be >= 1, got {T}")
    if not (0.0 < sigma <= 1.0):
        raise ValidationError(f"sigma must lie in (0, 1], got {sigma!r}")
    return max(1, math.ceil(10.0 * math.log(T) / sigma))


def containment_bound(T: int, sigma: float, k: int) -> float:
    """Union bound T*(1-sigma)^k on the probability that any round misses."""
    return T * (1.0 - sigma) ** k


@dataclass(frozen=True)
class CouplingConfig:
    """Horizon T and replica count k for a coupled run."""

    T: int
    k: int

    def __post_init__(self) -> None:
        if self.T < 1:
            raise ValidationError(f"T must be >= 1, got {self.T}")
        if self.k < 1:
            raise ValidationError(f"k must be >= 1, got {self.k}")

    @staticmethod
    def with_default_k(T: int, sigma: float) -> "CouplingConfig":
        return CouplingConfig(T=T, k=default_k(T, sigma))


@dataclass(frozen=True)
class SetAdversary:
    """Adaptive adversary emitting uniform sets of density at least sigma.

    ``rule`` maps the history of realized elements to the next round's set;
    it must return sets of at least ceil(sigma*n) elements.
    """

    domain: FiniteDomain
    sigma: float
    rule: Callable[[History], UniformOnSet]
    name: str = "custom"

    def __post_init__(self) -> None:
        if not (0.0 < self.sigma <= 1.0):
            raise ValidationError(f"sigma must lie in (0, 1], got {self.sigma!r}")


@dataclass(frozen=True)
class PmfAdversary:
    """Adaptive adversary emitting sigma-smooth pmfs."""

    domain: FiniteDomain
    sigma: float
    rule: Callable[[History], SmoothPmf]
    name: str = "custom"

    def __post_init__(self) -> None:
        if not (0.0 < self.sigma <= 1.0):
            raise ValidationError(f"sigma must lie in (0, 1], got {self.sigma!r}")


def stationary_set_adversary(domain: FiniteDomain, members: tuple[int, ...]) -> SetAdversary:
    """Plays the same set every round."""
    target = UniformOnSet(domain, members)
    sigma = target.size / domain.n
    return SetAdversary(domain, sigma, lambda hist: target, name="stationary-set")


def full_domain_adversary(domain: FiniteDomain) -> SetAdversary:
    """Plays the whole domain (sigma = 1); containment can never fail."""
    return stationary_set_adversary(domain, tuple(range(1, domain.n + 1)))


def window_set_adversary(domain: FiniteDomain, sigma: float) -> SetAdversary:
    """Oblivious moving window: the set of size ceil(sigma*n) rotating with the round.

    The window wraps around the domain; its location depends only on the
    round index, never on realized values.
    """
    n = domain.n
    size = min_support_size(sigma, n)

    def rule(hist: History) -> UniformOnSet:
        start = ((hist.round - 1) * size) % n
        members = tuple(sorted(((start + j) % n) + 1 for j in range(size)))
        return UniformOnSet(domain, members)

    return SetAdversary(domain, sigma, rule, name="window")


def last_value_adversary(domain: FiniteDomain, sigma: float) -> SetAdversary:
    """Micro-case adversary: round 1 plays {1, .., s}, later rounds chase the last value.

    The set is {X_{t-1}, X_{t-1}+1, .., X_{t-1}+s-1} with wraparound, where
    s = ceil(sigma*n).  With n = 2 and sigma = 0.5 this is the two-round
    enumeration example: S_1 = {1}, S_2 = {X_1}.
    """
    n = domain.n
    size = min_support_size(sigma, n)

    def rule(hist: History) -> UniformOnSet:
        start = hist.values[-1] if hist.values else 1
        members = tuple(sorted(((start - 1 + j) % n) + 1 for j in range(size)))
        return UniformOnSet(domain, members)

    return SetAdversary(domain, sigma, rule, name="last-value")


def stationary_pmf_adversary(pmf: SmoothPmf) -> PmfAdversary:
    """Plays the same smooth pmf every round."""
    return PmfAdversary(pmf.domain, pmf.sigma, lambda hist: pmf, name="stationary-pmf")


@dataclass(frozen=True, eq=False)
class CouplingTrace:
    """One coupled run: realized X's, the Z grid, and containment flags."""

    n: int
    X: np.ndarray  # shape (T,), realized elements, 1-based
    Z: np.ndarray  # shape (T, k), oblivious replicas, 1-based
    contained_rounds: np.ndarray  # shape (T,), bool, X_t in {Z_t,1..Z_t,k}
    sigma: float

    @property
    def T(self) -> int:
        return int(self.X.shape[0])

    @property
    def k(self) -> int:
        return int(self.Z.shape[1])

    @property
    def contained(self) -> bool:
        return bool(self.contained_rounds.all())


def couple_single_round(
    S: UniformOnSet, k: int, rng: "RngStream | np.random.Generator"
) -> tuple[int, np.ndarray]:
    """One round of the replica coupling against a uniform set.

    Draws Y_1..Y_k uniform on the domain; replicas that hit S are resampled
    uniformly inside S to form Z, and X is a uniform pick among those
    resampled values.  If no replica hits, X is a fresh uniform draw from S
    (and necessarily lands outside {Z}).
    """
    if k < 1:
        raise ValidationError(f"k must be >= 1, got {k}")
    gen = as_generator(rng)
    n = S.domain.n
    members = np.asarray(S.members)
    y = gen.integers(1, n + 1, size=k)
    z = y.copy()
    hit = np.isin(y, members)
    n_hits = int(hit.sum())
    if n_hits > 0:
        w = members[gen.integers(S.size, size=n_hits)]
        z[hit] = w
        x = int(w[gen.integers(n_hits)])
    else:
        x = int(members[gen.integers(S.size)])
    return x, z


def couple_adaptive(
    adv: SetAdversary, cfg: CouplingConfig, rng: "RngStream | np.random.Generator"
) -> CouplingTrace:
    """Run the coupling for T rounds against an adaptive set adversary."""
    gen = as_generator(rng)
    n = adv.domain.n
    floor = min_support_size(adv.sigma, n)
    hist = History()
    X = np.empty(cfg.T, dtype=np.int64)
    Z = np.empty((cfg.T, cfg.k), dtype=np.int64)
    flags = np.empty(cfg.T, dtype=bool)
    for t in range(cfg.T):
        S = adv.rule(hist)
        if S.domain != adv.domain:
            raise ValidationError("adversary emitted a set on the wrong domain")
        if S.size < floor:
            raise UndersizedSetError(
                f"round {t + 1}: set size {S.size} below floor {floor} for sigma={adv.sigma}"
            )
        x, z = couple_single_round(S, cfg.k, gen)
        X[t] = x
        Z[t] = z
        flags[t] = x in set(int(v) for v in z)
        hist.values.append(x)
    return CouplingTrace(n=n, X=X, Z=Z, contained_rounds=flags, sigma=adv.sigma)


def couple_general(
    adv: PmfAdversary, cfg: CouplingConfig, rng: "RngStream | np.random.Generator"
) -> CouplingTrace:
    """Run the coupling against an adaptive smooth-pmf adversary.

    Each round the emitted pmf is decomposed into a mixture of uniform sets,
    one component set is sampled by its weight, and the single-round coupling
    runs against that set.  The realized X then has the emitted pmf as its
    marginal while the Z grid stays i.i.d. uniform.
    """
    gen = as_generator(rng)
    n = adv.domain.n
    hist = History()
    X = np.empty(cfg.T, dtype=np.int64)
    Z = np.empty((cfg.T, cfg.k), dtype=np.int64)
    flags = np.empty(cfg.T, dtype=bool)
    # Stationary rules return the same pmf object every round; reuse its
    # decomposition instead of re-peeling.
    memo: dict[int, tuple[np.ndarray, tuple]] = {}
    for t in range(cfg.T):
        pmf = adv.rule(hist)
        if pmf.domain != adv.domain:
            raise ValidationError("adversary emitted a pmf on the wrong domain")
        cached = memo.get(id(pmf))
        if cached is None:
            if not validate_smooth(pmf.mass, adv.sigma):
                raise ValidationError(f"round {t + 1}: emitted pmf is not {adv.sigma}-smooth")
            mix = decompose_smooth(pmf)
            cumweights = np.cumsum([w for w, _ in mix.components])
            cached = (cumweights, tuple(comp for _, comp in mix.components))
            memo[id(pmf)] = cached
        cumweights, comps = cached
        comp = comps[int(np.searchsorted(cumweights, gen.random() * cumweights[-1], side="right"))]
        x, z = couple_single_round(comp, cfg.k, gen)
        X[t] = x
        Z[t] = z
        flags[t] = x in set(int(v) for v in z)
        hist.values.append(x)
    return CouplingTrace(n=n, X=X, Z=Z, contained_rounds=flags, sigma=adv.sigma)


def enumerate_containment_probability(adv: SetAdversary, cfg: CouplingConfig) -> float:
    """Exact probability that every round's X lands in its Z set.

    Sweeps the full outcome tree (replica draws, resampled values, and the
    uniform pick), so it is only feasible for tiny n, k, and T; the work is
    bounded before starting.  Serves as the independent oracle for the Monte
    Carlo containment estimates.
    """
    n = adv.domain.n
    work = (n**cfg.k * (n**cfg.k) * cfg.k) ** cfg.T
    if work > 10**8:
        raise ValidationError(f"enumeration too large (estimated {work} branches)")

    elements = list(range(1, n + 1))

    def recurse(past: tuple[int, ...], rounds_left: int) -> float:
        if rounds_left == 0:
            return 1.0
        S = adv.rule(History(values=list(past)))
        members = list(S.members)
        member_set = set(members)
        size = len(members)
        acc = 0.0
        for y in itertools.product(elements, repeat=cfg.k):
            p_y = n ** (-cfg.k)
            hits = [i for i, v in enumerate(y) if v in member_set]
            if hits:
                for wvec in itertools.product(members, repeat=len(hits)):
                    p_w = p_y * size ** (-len(hits))
                    z = list(y)
                    for slot, value in zip(hits, wvec):
                        z[slot] = value
                    z_set = set(z)
                    for pick in wvec:
                        if pick in z_set:
                            acc += (p_w / len(hits)) * recurse(past + (pick,), rounds_left - 1)
            else:
                z_set = set(y)
                for x in members:
                    if x in z_set:
                        acc += (p_y / size) * recurse(past + (x,), rounds_left - 1)
        return acc

    return recurse((), cfg.T)


@dataclass(frozen=True, eq=False)
class MarginalReport:
    """Distributional diagnostics over a batch of coupled traces."""

    n_traces: int
    cell_pvalues: np.ndarray  # shape (T, k), uniformity of each Z cell
    pair_pvalues: tuple[float, ...]  # independence of sampled cell pairs
    pairs: tuple[tuple[tuple[int, int], tuple[int, int]], ...]
    homogeneity_pvalues: tuple[float, ...]  # round-2 cells vs realized X_1 strata
    failure_count: int
    failure_rate: float
    failure_ci: tuple[float, float]

    def passed(self, alpha: float = 0.001) -> bool:
        cells_ok = bool((self.cell_pvalues > alpha).all())
        pairs_ok = all(p > alpha for p in self.pair_pvalues)
        homog_ok = all(p > alpha for p in self.homogeneity_pvalues)
        return cells_ok and pairs_ok and homog_ok


def verify_marginals(
    traces: list[CouplingTrace],
    n_pairs: int = 20,
    pair_seed: int = 0,
    min_traces: int = 10_000,
) -> MarginalReport:
    """Check Z-cell uniformity, pairwise independence, and containment rates.

    Requires at least ``min_traces`` traces of identical shape.  Pairs of
    cells are drawn deterministically from ``pair_seed``; when the trace has
    more than one round, at least half of the pairs span two rounds, which
    also exercises the independence of later-round replicas from earlier
    realized values.
    """
    if len(traces) < min_traces:
        raise ValidationError(
            f"need at least {min_traces} traces for stable chi-square tests, got {len(traces)}"
        )
    first = traces[0]
    T, k, n = first.T, first.k, first.n
    if any(tr.T != T or tr.k != k or tr.n != n for tr in traces):
        raise ValidationError("traces have inconsistent shapes")

    Z = np.stack([tr.Z for tr in traces])  # (N, T, k)
    X = np.stack([tr.X for tr in traces])  # (N, T)
    N = Z.shape[0]

    cell_pvalues = np.empty((T, k))
    for t in range(T):
        for i in range(k):
            counts = np.bincount(Z[:, t, i] - 1, minlength=n)
            _, cell_pvalues[t, i] = chi_square_uniform(counts)

    gen = RngStream(seed=pair_seed, stream_id=0).generator()
    all_cells = [(t, i) for t in range(T) for i in range(k)]
    pairs: list[tuple[tuple[int, int], tuple[int, int]]] = []
    want_cross = n_pairs // 2 if T > 1 else 0
    guard = 0
    while len(pairs) < n_pairs and guard < 10_000:
        guard += 1
        a, b = gen.choice(len(all_cells), size=2, replace=False)
        ca, cb = all_cells[a], all_cells[b]
        pair = (ca, cb) if ca <= cb else (cb, ca)
        if pair in pairs:
            continue
        cross_needed = want_cross - sum(1 for p in pairs if p[0][0] != p[1][0])
        remaining = n_pairs - len(pairs)
        if cross_needed >= remaining and pair[0][0] == pair[1][0]:
            continue
        pairs.append(pair)
    pair_pvalues = []
    for (t1, i1), (t2, i2) in pairs:
        table = np.zeros((n, n))
        np.add.at(table, (Z[:, t1, i1] - 1, Z[:, t2, i2] - 1), 1)
        _, p = chi_square_table(table)
        pair_pvalues.append(p)

    homogeneity_pvalues: list[float] = []
    if T > 1:
        x1 = X[:, 0]
        strata = np.unique(x1)
        strata = strata[np.array([int((x1 == s).sum()) for s in strata]) >= 200]
        if strata.size >= 2:
            for i in range(k):
                table = np.zeros((strata.size, n))
                for row, s in enumerate(strata):
                    table[row] = np.bincount(Z[x1 == s, 1, i] - 1, minlength=n)
                _, p = chi_square_table(table)
                homogeneity_pvalues.append(p)

    failures = sum(0 if tr.contained else 1 for tr in traces)
    ci = wilson_interval(failures, N, z=3.0)
    return MarginalReport(
        n_traces=N,
        cell_pvalues=cell_pvalues,
        pair_pvalues=tuple(pair_pvalues),
        pairs=tuple(pairs),
        homogeneity_pvalues=tuple(homogeneity_pvalues),
        failure_count=failures,
        failure_rate=failures / N,
        failure_ci=ci,
    )


def traces_to_jsonl(traces: list[CouplingTrace]) -> str:
    """Serialize traces, one JSON object per line: {"X", "Z", "contained"}."""
    lines = []
    for tr in traces:
        lines.append(
            json.dumps(
                {
                    "X": [int(v) for v in tr.X],
                    "Z": [[int(v) for v in row] for row in tr.Z],
                    "contained": tr.contained,
                }
            )
        )
    return "\n".join(lines) + "\n"


def traces_from_jsonl(text: str, n: int, sigma: float) -> list[CouplingTrace]:
    """Inverse of ``traces_to_jsonl``; containment flags are recomputed per round."""
    traces = []
    for line in text.splitlines():
        if not line.strip():
            continue
        obj = json.loads(line)
        X = np.asarray(obj["X"], dtype=np.int64)
        Z = np.asarray(obj["Z"], dtype=np.int64)
        flags = np.array([x in set(int(v) for v in row) for x, row in zip(X, Z)])
        tr = CouplingTrace(n=n, X=X, Z=Z, contained_rounds=flags, sigma=sigma)
        if tr.contained != bool(obj["contained"]):
            raise ValidationError("containment flag mismatch in serialized trace")
        traces.append(tr)
    return traces
