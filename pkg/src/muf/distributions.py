"""Distributions, conditional distributions and conjugate updates.

Marginal distributions (``MDistr``) are small frozen dataclasses that know how
to draw, score and summarize themselves. Conditional distributions
(``CDistr``) describe a child in terms of its parent's value; the three
conjugacy functions at the bottom combine the two.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, Sequence

import numpy as np


class DistributionError(ValueError):
    """Invalid parameters or an unsupported operation on a distribution."""


class UndefinedMoment(DistributionError):
    """Mean or variance requested for a distribution over non-numeric values."""


class NonConjugate(DistributionError):
    """The (prior, likelihood) pair has no closed-form update."""


# ---------------------------------------------------------------------------
# Random source


class Rng:
    """Thin wrapper over a numpy generator so call sites stay scalar."""

    def __init__(self, seed: int | Sequence[int] = 0):
        self._seed = [seed] if isinstance(seed, int) else list(seed)
        self._g = None

    @property
    def _gen(self) -> np.random.Generator:
        # built on first draw: most particles of conjugate models never draw
        if self._g is None:
            self._g = np.random.Generator(np.random.PCG64(np.random.SeedSequence(self._seed)))
        return self._g

    @classmethod
    def derive(cls, *keys: int) -> "Rng":
        return cls([int(k) & 0xFFFFFFFF for k in keys])

    def normal(self, mean: float, std: float) -> float:
        return float(self._gen.normal(mean, std))

    def uniform(self, lo: float = 0.0, hi: float = 1.0) -> float:
        return float(self._gen.uniform(lo, hi))

    def beta(self, a: float, b: float) -> float:
        return float(self._gen.beta(a, b))

    def poisson(self, rate: float) -> int:
        return int(self._gen.poisson(rate))

    def choice(self, weights: Sequence[float]) -> int:
        return int(self._gen.choice(len(weights), p=np.asarray(weights, dtype=float)))

    def multinomial_indices(self, weights: Sequence[float], n: int) -> list[int]:
        p = np.asarray(weights, dtype=float)
        return [int(i) for i in self._gen.choice(len(p), size=n, p=p / p.sum())]

    def permutation(self, n: int) -> list[int]:
        return [int(i) for i in self._gen.permutation(n)]


# ---------------------------------------------------------------------------
# Helpers for nested (tuple-shaped) values


def _is_num(x: Any) -> bool:
    return isinstance(x, (int, float, bool, np.integer, np.floating, np.bool_))


def _as_float_tree(x: Any) -> Any:
    if _is_num(x):
        return float(x)
    if isinstance(x, tuple):
        return tuple(_as_float_tree(c) for c in x)
    if hasattr(x, "items") and not isinstance(x, dict):
        # ListV / ArrayV style containers expose ``items``
        return tuple(_as_float_tree(c) for c in x.items)
    raise UndefinedMoment(f"no numeric moments for value {x!r}")


def tree_map(f, *trees):
    head = trees[0]
    if isinstance(head, tuple):
        return tuple(tree_map(f, *parts) for parts in zip(*trees))
    return f(*trees)


def _weighted_stats(values: Sequence[Any], weights: Sequence[float]) -> tuple[Any, Any]:
    """Weighted mean/variance of (possibly nested) numeric values."""
    trees = [_as_float_tree(v) for v in values]

    def mean_of(*xs):
        return float(sum(w * x for w, x in zip(weights, xs)))

    mean = tree_map(mean_of, *trees)

    def var_of(m, *xs):
        return float(sum(w * (x - m) ** 2 for w, x in zip(weights, xs)))

    var = tree_map(var_of, mean, *trees)
    return mean, var


def values_equal(a: Any, b: Any) -> bool:
    if _is_num(a) and _is_num(b):
        return float(a) == float(b)
    if isinstance(a, tuple) and isinstance(b, tuple):
        return len(a) == len(b) and all(values_equal(x, y) for x, y in zip(a, b))
    if hasattr(a, "items") and hasattr(b, "items"):
        return type(a) is type(b) and values_equal(tuple(a.items), tuple(b.items))
    return a == b


# ---------------------------------------------------------------------------
# Marginal distributions


class MDistr:
    """Base class for marginal distributions."""

    family = "abstract"

    def draw(self, rng: Rng) -> Any:
        raise NotImplementedError

    def pdf(self, x: Any) -> float:
        raise NotImplementedError

    def stats(self) -> tuple[Any, Any]:
        raise NotImplementedError


def _check_finite(name: str, *xs: float) -> None:
    for x in xs:
        if not (_is_num(x) and math.isfinite(float(x))):
            raise DistributionError(f"{name}: parameter {x!r} is not a finite number")


@dataclass(frozen=True)
class Gaussian(MDistr):
    mean: float
    var: float
    family = "gaussian"

    def __post_init__(self):
        _check_finite("gaussian", self.mean, self.var)
        if self.var <= 0:
            raise DistributionError(f"gaussian: variance must be positive, got {self.var}")

    def draw(self, rng):
        return rng.normal(self.mean, math.sqrt(self.var))

    def pdf(self, x):
        if not _is_num(x):
            return 0.0
        z = float(x) - self.mean
        return math.exp(-0.5 * z * z / self.var) / math.sqrt(2 * math.pi * self.var)

    def stats(self):
        return float(self.mean), float(self.var)


@dataclass(frozen=True)
class Beta(MDistr):
    a: float
    b: float
    family = "beta"

    def __post_init__(self):
        _check_finite("beta", self.a, self.b)
        if self.a <= 0 or self.b <= 0:
            raise DistributionError(f"beta: shape parameters must be positive, got {self.a}, {self.b}")

    def draw(self, rng):
        return rng.beta(self.a, self.b)

    def pdf(self, x):
        if not _is_num(x):
            return 0.0
        x = float(x)
        if x < 0.0 or x > 1.0:
            return 0.0
        if x in (0.0, 1.0):
            edge_a = self.a if x == 0.0 else self.b
            if edge_a < 1:
                return math.inf
            if edge_a > 1:
                return 0.0
        log_norm = math.lgamma(self.a + self.b) - math.lgamma(self.a) - math.lgamma(self.b)
        la = (self.a - 1) * math.log(x) if self.a != 1 else 0.0
        lb = (self.b - 1) * math.log1p(-x) if self.b != 1 else 0.0
        return math.exp(log_norm + la + lb)

    def stats(self):
        s = self.a + self.b
        return self.a / s, self.a * self.b / (s * s * (s + 1))


@dataclass(frozen=True)
class Bernoulli(MDistr):
    p: float
    family = "bernoulli"

    def __post_init__(self):
        _check_finite("bernoulli", self.p)
        if not 0.0 <= self.p <= 1.0:
            raise DistributionError(f"bernoulli: probability outside [0, 1]: {self.p}")

    def draw(self, rng):
        return rng.uniform() < self.p

    def pdf(self, x):
        if not isinstance(x, (bool, np.bool_)):
            return 0.0
        return float(self.p) if x else 1.0 - float(self.p)

    def stats(self):
        p = float(self.p)
        return p, p * (1 - p)


@dataclass(frozen=True)
class Poisson(MDistr):
    rate: float
    family = "poisson"

    def __post_init__(self):
        _check_finite("poisson", self.rate)
        if self.rate <= 0:
            raise DistributionError(f"poisson: rate must be positive, got {self.rate}")

    def draw(self, rng):
        return rng.poisson(self.rate)

    def pdf(self, x):
        if isinstance(x, bool) or not _is_num(x) or float(x) != int(x) or x < 0:
            return 0.0
        k = int(x)
        return math.exp(k * math.log(self.rate) - self.rate - math.lgamma(k + 1))

    def stats(self):
        return float(self.rate), float(self.rate)


@dataclass(frozen=True)
class Uniform(MDistr):
    lo: float
    hi: float
    family = "uniform"

    def __post_init__(self):
        _check_finite("uniform", self.lo, self.hi)
        if not self.lo < self.hi:
            raise DistributionError(f"uniform: need lo < hi, got {self.lo}, {self.hi}")

    def draw(self, rng):
        return rng.uniform(self.lo, self.hi)

    def pdf(self, x):
        if not _is_num(x):
            return 0.0
        return 1.0 / (self.hi - self.lo) if self.lo <= float(x) <= self.hi else 0.0

    def stats(self):
        w = self.hi - self.lo
        return (self.lo + self.hi) / 2, w * w / 12


@dataclass(frozen=True)
class Delta(MDistr):
    value: Any
    family = "delta"

    def draw(self, rng):
        return self.value

    def pdf(self, x):
        return 1.0 if values_equal(x, self.value) else 0.0

    def stats(self):
        m = _as_float_tree(self.value)
        return m, tree_map(lambda _: 0.0, m)


@dataclass(frozen=True)
class Categorical(MDistr):
    """Finite support with weights summing to one."""

    support: tuple
    weights: tuple
    family = "categorical"

    def __post_init__(self):
        if len(self.support) != len(self.weights) or not self.support:
            raise DistributionError("categorical: support and weights must be non-empty and aligned")
        if any(w < 0 for w in self.weights) or abs(sum(self.weights) - 1.0) > 1e-12:
            raise DistributionError("categorical: weights must be non-negative and sum to 1")

    @classmethod
    def from_samples(cls, samples: Sequence[Any], weights: Sequence[float] | None = None) -> "Categorical":
        if weights is None:
            weights = [1.0] * len(samples)
        total = float(sum(weights))
        if total <= 0:
            raise DistributionError("categorical: all weights are zero")
        ws = [float(w) / total for w in weights]
        # renormalize once more so the sum is within float noise of 1
        s = sum(ws)
        return cls(tuple(samples), tuple(w / s for w in ws))

    def draw(self, rng):
        return self.support[rng.choice(self.weights)]

    def pdf(self, x):
        return float(sum(w for v, w in zip(self.support, self.weights) if values_equal(v, x)))

    def stats(self):
        return _weighted_stats(self.support, self.weights)


@dataclass(frozen=True)
class Shuffle(MDistr):
    """Uniform distribution over the permutations of ``items``."""

    items: tuple
    family = "shuffle"

    def draw(self, rng):
        return tuple(self.items[i] for i in rng.permutation(len(self.items)))

    def pdf(self, x):
        xs = tuple(getattr(x, "items", x))
        if len(xs) != len(self.items):
            return 0.0
        remaining = list(self.items)
        for v in xs:
            for i, r in enumerate(remaining):
                if values_equal(r, v):
                    del remaining[i]
                    break
            else:
                return 0.0
        # duplicates: count distinct permutations
        return 1.0 / _distinct_perms(self.items)

    def stats(self):
        raise UndefinedMoment("shuffle: moments of a permutation are undefined")


def _distinct_perms(items: tuple) -> float:
    groups: list[list[Any]] = []
    for v in items:
        for g in groups:
            if values_equal(g[0], v):
                g.append(v)
                break
        else:
            groups.append([v])
    n = math.factorial(len(items))
    for g in groups:
        n //= math.factorial(len(g))
    return float(n)


@dataclass(frozen=True)
class Mixture(MDistr):
    """Weighted mixture; the output of one inference step."""

    weights: tuple
    components: tuple
    family = "mixture"

    def __post_init__(self):
        if len(self.weights) != len(self.components) or not self.components:
            raise DistributionError("mixture: weights and components must be non-empty and aligned")

    def draw(self, rng):
        return self.components[rng.choice(self.weights)].draw(rng)

    def pdf(self, x):
        return float(sum(w * c.pdf(x) for w, c in zip(self.weights, self.components)))

    def stats(self):
        """Law of total expectation and total variance."""
        parts = [c.stats() for c in self.components]
        ws = self.weights
        means = [p[0] for p in parts]
        mean = tree_map(lambda *ms: float(sum(w * m for w, m in zip(ws, ms))), *means)

        def total_var(mu, *mv):
            half = len(mv) // 2
            ms, vs = mv[:half], mv[half:]
            return float(sum(w * (v + (m - mu) ** 2) for w, m, v in zip(ws, ms, vs)))

        var = tree_map(total_var, mean, *means, *[p[1] for p in parts])
        return mean, var


@dataclass(frozen=True)
class Product(MDistr):
    """Independent joint over a pair (or nested pairs) of distributions."""

    parts: tuple
    family = "product"

    def draw(self, rng):
        return tuple(p.draw(rng) for p in self.parts)

    def pdf(self, x):
        if not isinstance(x, tuple) or len(x) != len(self.parts):
            return 0.0
        out = 1.0
        for p, v in zip(self.parts, x):
            out *= p.pdf(v)
        return out

    def stats(self):
        st = [p.stats() for p in self.parts]
        return tuple(s[0] for s in st), tuple(s[1] for s in st)


def draw(d: MDistr, rng: Rng) -> Any:
    return d.draw(rng)


def pdf(d: MDistr, x: Any) -> float:
    return d.pdf(x)


def stats(d: MDistr) -> tuple[Any, Any]:
    return d.stats()


# ---------------------------------------------------------------------------
# Conditional distributions and conjugacy


class CDistr:
    """A child distribution parameterized by its parent's value."""


@dataclass(frozen=True)
class CGaussianMean(CDistr):
    """child ~ N(s * parent + t, var)."""

    var: float
    affine: tuple[float, float] = (1.0, 0.0)

    def __post_init__(self):
        _check_finite("gaussian", self.var, *self.affine)
        if self.var <= 0:
            raise DistributionError(f"gaussian: variance must be positive, got {self.var}")


@dataclass(frozen=True)
class CGaussianObs(CDistr):
    """child ~ N(parent, var); same as ``CGaussianMean(var, (1, 0))``."""

    var: float

    def __post_init__(self):
        _check_finite("gaussian", self.var)
        if self.var <= 0:
            raise DistributionError(f"gaussian: variance must be positive, got {self.var}")


@dataclass(frozen=True)
class CBernoulli(CDistr):
    """child ~ Bernoulli(parent)."""


def _gauss_link(cd: CDistr) -> tuple[float, float, float] | None:
    if isinstance(cd, CGaussianMean):
        return cd.var, float(cd.affine[0]), float(cd.affine[1])
    if isinstance(cd, CGaussianObs):
        return cd.var, 1.0, 0.0
    return None


def make_marginal(prior: MDistr, cd: CDistr) -> MDistr:
    """Marginal of the child after integrating out the parent."""
    g = _gauss_link(cd)
    if g is not None and isinstance(prior, Gaussian):
        var, s, t = g
        return Gaussian(s * prior.mean + t, s * s * prior.var + var)
    if isinstance(cd, CBernoulli) and isinstance(prior, Beta):
        return Bernoulli(prior.a / (prior.a + prior.b))
    raise NonConjugate(f"no conjugate marginal for {type(prior).__name__} with {type(cd).__name__}")


def make_conditional(prior: MDistr, cd: CDistr, x: Any) -> MDistr:
    """Posterior of the parent once the child is known to equal ``x``."""
    g = _gauss_link(cd)
    if g is not None and isinstance(prior, Gaussian):
        var, s, t = g
        if s == 0.0:
            return prior
        prec = 1.0 / prior.var + s * s / var
        post_var = 1.0 / prec
        post_mean = post_var * (prior.mean / prior.var + s * (float(x) - t) / var)
        return Gaussian(post_mean, post_var)
    if isinstance(cd, CBernoulli) and isinstance(prior, Beta):
        return Beta(prior.a + 1, prior.b) if x else Beta(prior.a, prior.b + 1)
    raise NonConjugate(f"no conjugate posterior for {type(prior).__name__} with {type(cd).__name__}")


def cdistr_to_mdistr(cd: CDistr, parent_value: Any) -> MDistr:
    g = _gauss_link(cd)
    if g is not None:
        var, s, t = g
        return Gaussian(s * float(parent_value) + t, var)
    if isinstance(cd, CBernoulli):
        return Bernoulli(float(parent_value))
    raise DistributionError(f"unknown conditional distribution {cd!r}")
