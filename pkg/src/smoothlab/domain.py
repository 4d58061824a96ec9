"""Finite domains, smooth distributions, and reproducible randomness.

A distribution on the finite domain [n] = {1, .., n} is sigma-smooth when no
element carries more than 1/(sigma*n) probability, i.e. its density against
the uniform distribution is bounded by 1/sigma.  Every distribution that is
representable as a mixture of uniform distributions on sets of at least
ceil(sigma*n) elements is sigma-smooth, and ``decompose_smooth`` recovers such
a mixture by greedy peeling.

Randomness is always routed through :class:`RngStream`, a (seed, stream_id)
pair that materializes an independent PCG64 generator, so that multi-trial
experiments are reproducible independently of scheduling.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

__all__ = [
    "ValidationError",
    "DecompositionError",
    "FiniteDomain",
    "RngStream",
    "History",
    "UniformOnSet",
    "SmoothPmf",
    "MixtureOfUniforms",
    "min_support_size",
    "validate_smooth",
    "decompose_smooth",
    "sample",
    "sample_many",
    "random_smooth_pmf",
    "as_generator",
]


class ValidationError(ValueError):
    """Raised for malformed inputs (NaN, negative mass, bad sigma, bad sets)."""


class DecompositionError(RuntimeError):
    """Raised when a pmf cannot be peeled into uniform components of the required size."""


@dataclass(frozen=True)
class FiniteDomain:
    """The ground set {1, .., n}."""

    n: int

    def __post_init__(self) -> None:
        if not isinstance(self.n, (int, np.integer)) or self.n < 1:
            raise ValidationError(f"domain size must be a positive integer, got {self.n!r}")

    @property
    def elements(self) -> range:
        return range(1, self.n + 1)


@dataclass(frozen=True)
class RngStream:
    """A named, reproducible random stream.

    Two streams with distinct (seed, stream_id) pairs are statistically
    independent; the same pair always reproduces the same draws.  Trial i of
    an experiment uses stream_id = i, which makes results invariant to how
    trials are scheduled across workers.
    """

    seed: int
    stream_id: int = 0

    def __post_init__(self) -> None:
        for name, value in (("seed", self.seed), ("stream_id", self.stream_id)):
            if not isinstance(value, (int, np.integer)) or value < 0 or value >= 2**64:
                raise ValidationError(f"{name} must be an integer in [0, 2^64), got {value!r}")

    def generator(self) -> np.random.Generator:
        seq = np.random.SeedSequence(entropy=self.seed, spawn_key=(self.stream_id,))
        return np.random.Generator(np.random.PCG64(seq))

    def substream(self, substream_id: int) -> "RngStream":
        """Derive a disjoint stream for an internal purpose (e.g. a probe pool)."""
        seq = np.random.SeedSequence(entropy=self.seed, spawn_key=(self.stream_id, substream_id))
        # Collapse the longer spawn key into a fresh 64-bit seed so the result
        # is again a plain (seed, 0) stream.
        derived = int(seq.generate_state(1, np.uint64)[0])
        return RngStream(seed=derived, stream_id=0)


def as_generator(rng: "RngStream | np.random.Generator") -> np.random.Generator:
    """Accept either a stream descriptor or a live generator."""
    if isinstance(rng, RngStream):
        return rng.generator()
    if isinstance(rng, np.random.Generator):
        return rng
    raise ValidationError(f"expected RngStream or numpy Generator, got {type(rng).__name__}")


@dataclass
class History:
    """Append-only record of a run: realized values and algorithm decisions.

    Run loops own the History and append to it; adversary rules receive it
    read-only by contract.  ``values`` holds the realized draws (elements,
    vectors, or (x, y) pairs depending on the process) and ``decisions`` the
    algorithm's outputs so far (signs, predictions).
    """

    values: list = field(default_factory=list)
    decisions: list = field(default_factory=list)

    @property
    def round(self) -> int:
        """1-based index of the round about to be played."""
        return len(self.values) + 1


def min_support_size(sigma: float, n: int) -> int:
    """ceil(sigma*n) with a tolerance guard against float noise like 0.2*5 = 1.0000000000000002."""
    if not (0.0 < sigma <= 1.0):
        raise ValidationError(f"sigma must lie in (0, 1], got {sigma!r}")
    return max(1, math.ceil(sigma * n - 1e-9))


@dataclass(frozen=True)
class UniformOnSet:
    """Uniform distribution on a nonempty subset of the domain."""

    domain: FiniteDomain
    members: tuple[int, ...]

    def __post_init__(self) -> None:
        members = tuple(int(v) for v in self.members)
        object.__setattr__(self, "members", members)
        if len(members) == 0:
            raise ValidationError("uniform set must be nonempty")
        if len(set(members)) != len(members):
            raise ValidationError("uniform set has repeated elements")
        if sorted(members) != list(members):
            raise ValidationError("uniform set members must be sorted")
        if members[0] < 1 or members[-1] > self.domain.n:
            raise ValidationError(f"members out of range 1..{self.domain.n}: {members}")

    @property
    def size(self) -> int:
        return len(self.members)

    def mass_vector(self) -> np.ndarray:
        mass = np.zeros(self.domain.n)
        mass[np.asarray(self.members) - 1] = 1.0 / len(self.members)
        return mass


@dataclass(frozen=True, eq=False)
class SmoothPmf:
    """A sigma-smooth pmf on [n]: every point mass is at most 1/(sigma*n)."""

    domain: FiniteDomain
    mass: np.ndarray
    sigma: float

    def __post_init__(self) -> None:
        mass = np.asarray(self.mass, dtype=float).copy()
        mass.flags.writeable = False
        object.__setattr__(self, "mass", mass)
        if mass.shape != (self.domain.n,):
            raise ValidationError(f"mass must have shape ({self.domain.n},), got {mass.shape}")
        if not (0.0 < self.sigma <= 1.0):
            raise ValidationError(f"sigma must lie in (0, 1], got {self.sigma!r}")
        if not np.all(np.isfinite(mass)):
            raise ValidationError("mass contains NaN or infinity")
        if np.any(mass < 0):
            raise ValidationError("mass contains negative entries")
        if abs(float(mass.sum()) - 1.0) > 1e-12:
            raise ValidationError(f"mass must sum to 1 within 1e-12, got {mass.sum()!r}")
        cap = 1.0 / (self.sigma * self.domain.n)
        if float(mass.max()) > cap + 1e-12:
            raise ValidationError(
                f"max mass {mass.max()!r} exceeds smoothness cap {cap!r} for sigma={self.sigma}"
            )

    def to_json(self) -> str:
        return json.dumps(
            {"n": self.domain.n, "sigma": self.sigma, "mass": [repr(float(v)) for v in self.mass]}
        )

    @staticmethod
    def from_json(text: str) -> "SmoothPmf":
        obj = json.loads(text)
        mass = np.array([float(v) for v in obj["mass"]])
        return SmoothPmf(FiniteDomain(int(obj["n"])), mass, float(obj["sigma"]))


@dataclass(frozen=True)
class MixtureOfUniforms:
    """Mixture of uniform distributions on sets of size at least ceil(sigma*n)."""

    domain: FiniteDomain
    components: tuple[tuple[float, UniformOnSet], ...]
    sigma: float

    def __post_init__(self) -> None:
        if len(self.components) == 0:
            raise ValidationError("mixture must have at least one component")
        floor = min_support_size(self.sigma, self.domain.n)
        total = 0.0
        for weight, comp in self.components:
            if not (weight > 0.0):
                raise ValidationError(f"component weights must be positive, got {weight!r}")
            if comp.domain != self.domain:
                raise ValidationError("component domain mismatch")
            if comp.size < floor:
                raise ValidationError(
                    f"component set size {comp.size} below floor {floor} for sigma={self.sigma}"
                )
            total += weight
        if abs(total - 1.0) > 1e-12:
            raise ValidationError(f"component weights must sum to 1 within 1e-12, got {total!r}")

    def mass_vector(self) -> np.ndarray:
        mass = np.zeros(self.domain.n)
        for weight, comp in self.components:
            mass[np.asarray(comp.members) - 1] += weight / comp.size
        return mass


def validate_smooth(mass: Sequence[float] | np.ndarray, sigma: float) -> bool:
    """Check the sigma-smoothness of a pmf given as a plain array.

    Returns False for masses that fail the sum-to-one (tolerance 1e-9) or the
    point-mass cap (tolerance 1e-12) tests.  Structurally invalid input (NaN,
    negative entries, sigma outside (0, 1]) raises ValidationError instead of
    returning False.
    """
    arr = np.asarray(mass, dtype=float)
    if arr.ndim != 1 or arr.size < 1:
        raise ValidationError(f"pmf must be a nonempty 1-D array, got shape {arr.shape}")
    if not (0.0 < sigma <= 1.0):
        raise ValidationError(f"sigma must lie in (0, 1], got {sigma!r}")
    if not np.all(np.isfinite(arr)):
        raise ValidationError("pmf contains NaN or infinity")
    if np.any(arr < 0):
        raise ValidationError("pmf contains negative entries")
    n = arr.size
    if abs(float(arr.sum()) - 1.0) > 1e-9:
        return False
    return float(arr.max()) <= 1.0 / (sigma * n) + 1e-12


def decompose_smooth(pmf: SmoothPmf) -> MixtureOfUniforms:
    """Peel a smooth pmf into a mixture of uniforms on sets of size >= ceil(sigma*n).

    Greedy rule: with s = ceil(sigma*n) and remaining mass m, repeatedly take
    the s heaviest residual coordinates (ties broken by index) and peel the
    largest weight that keeps every residual coordinate at or below m'/s for
    the new remaining mass m'.  That weight is min(s * r_s, m - s * r_{s+1})
    with r_s the smallest residual inside the set and r_{s+1} the largest
    outside it.  Terminates within n^2 + n rounds.

    Raises DecompositionError if the pmf's largest mass exceeds 1/s: such a
    pmf cannot be a mixture of uniforms on sets of s or more elements (each
    mixture caps point masses at 1/s), even though it may be sigma-smooth
    when sigma*n is fractional.
    """
    n = pmf.domain.n
    s = min_support_size(pmf.sigma, n)
    if not validate_smooth(pmf.mass, pmf.sigma):
        raise ValidationError("input pmf is not sigma-smooth")
    if float(pmf.mass.max()) > 1.0 / s + 1e-12:
        raise DecompositionError(
            f"max mass {float(pmf.mass.max())!r} exceeds 1/{s}; no mixture of "
            f"uniforms on >= {s} elements can represent it"
        )

    residual = np.array(pmf.mass, dtype=float)
    remaining = float(residual.sum())
    weights: list[float] = []
    sets: list[UniformOnSet] = []
    max_rounds = n * n + n
    for _ in range(max_rounds):
        if remaining <= 1e-12:
            break
        # Heaviest s coordinates, ties by index.
        order = np.lexsort((np.arange(n), -residual))
        chosen = np.sort(order[:s])
        r_in_min = float(residual[order[s - 1]])
        r_out_max = float(residual[order[s]]) if s < n else 0.0
        lam = min(s * r_in_min, remaining - s * r_out_max, remaining)
        if lam <= 0.0:
            raise DecompositionError("peeling stalled; residual is not representable")
        residual[chosen] -= lam / s
        np.clip(residual, 0.0, None, out=residual)
        remaining = float(residual.sum())
        weights.append(lam)
        sets.append(UniformOnSet(pmf.domain, tuple(int(v) + 1 for v in chosen)))
    else:
        if remaining > 1e-12:
            raise DecompositionError(
                f"peeling did not converge within {max_rounds} rounds (residual {remaining!r})"
            )

    total = sum(weights)
    components = tuple((w / total, comp) for w, comp in zip(weights, sets))
    return MixtureOfUniforms(pmf.domain, components, pmf.sigma)


def sample(dist, rng: "RngStream | np.random.Generator") -> int:
    """Draw one element (1-based) from a UniformOnSet, SmoothPmf, or MixtureOfUniforms.

    Passing an RngStream makes the draw a pure function of (dist, seed,
    stream_id); passing a Generator advances that generator.
    """
    gen = as_generator(rng)
    if isinstance(dist, UniformOnSet):
        return int(dist.members[gen.integers(dist.size)])
    if isinstance(dist, SmoothPmf):
        return int(gen.choice(dist.domain.n, p=dist.mass)) + 1
    if isinstance(dist, MixtureOfUniforms):
        weights = np.array([w for w, _ in dist.components])
        idx = int(gen.choice(len(dist.components), p=weights / weights.sum()))
        comp = dist.components[idx][1]
        return int(comp.members[gen.integers(comp.size)])
    raise ValidationError(f"cannot sample from {type(dist).__name__}")


def sample_many(dist, rng: "RngStream | np.random.Generator", size: int) -> np.ndarray:
    """Vector of ``size`` i.i.d. draws (1-based) from the distribution."""
    gen = as_generator(rng)
    if isinstance(dist, UniformOnSet):
        members = np.asarray(dist.members)
        return members[gen.integers(dist.size, size=size)]
    if isinstance(dist, SmoothPmf):
        return gen.choice(dist.domain.n, p=dist.mass, size=size) + 1
    if isinstance(dist, MixtureOfUniforms):
        weights = np.array([w for w, _ in dist.components])
        comp_idx = gen.choice(len(dist.components), p=weights / weights.sum(), size=size)
        out = np.empty(size, dtype=int)
        for i, c in enumerate(comp_idx):
            comp = dist.components[c][1]
            out[i] = comp.members[gen.integers(comp.size)]
        return out
    raise ValidationError(f"cannot sample from {type(dist).__name__}")


def random_smooth_pmf(
    domain: FiniteDomain,
    sigma: float,
    rng: "RngStream | np.random.Generator",
    method: str = "mixture",
) -> SmoothPmf:
    """Generate a random sigma-smooth pmf that is representable as a mixture.

    ``mixture`` draws a random mixture of uniforms on random sets of size at
    least ceil(sigma*n) (Dirichlet weights), so representability holds by
    construction.  ``capped`` draws Dirichlet mass and redistributes overflow
    above the representability cap 1/ceil(sigma*n), producing boundary-rich
    pmfs with several coordinates exactly at the cap.
    """
    gen = as_generator(rng)
    n = domain.n
    s = min_support_size(sigma, n)
    if method == "mixture":
        ncomp = int(gen.integers(1, 2 * n + 1))
        weights = gen.dirichlet(np.ones(ncomp))
        mass = np.zeros(n)
        for w in weights:
            size = int(gen.integers(s, n + 1))
            members = gen.choice(n, size=size, replace=False)
            mass[members] += w / size
        mass /= mass.sum()
        return SmoothPmf(domain, mass, sigma)
    if method == "capped":
        cap = 1.0 / s
        mass = gen.dirichlet(np.ones(n) * 0.5)
        for _ in range(10 * n):
            over = mass > cap
            if not np.any(over):
                break
            excess = float((mass[over] - cap).sum())
            mass[over] = cap
            under = ~over
            room = cap - mass[under]
            if float(room.sum()) <= 0.0:
                break
            share = room / room.sum()
            mass[under] += excess * share
        mass = np.minimum(mass, cap)
        mass /= mass.sum()
        return SmoothPmf(domain, mass, sigma)
    raise ValidationError(f"unknown method {method!r}")
