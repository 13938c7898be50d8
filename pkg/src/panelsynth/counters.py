"""Tree-based private stream counting and cross-threshold monotonization."""

from __future__ import annotations

import math
from fractions import Fraction

import numpy as np

from .dp import BitSource, DiscreteGaussianSampler, ceil_log2

__all__ = ["MonotoneBank", "TreeCounter", "tree_noise_sigma2"]


def tree_noise_sigma2(horizon: int, rho: float) -> Fraction:
    """Per-node noise variance ln(horizon) / (2 rho) for a tree counter.

    The formula gives 0 at horizon 1, which would release an exact count, so
    a one-step counter is bumped to ln(2) / (2 rho). rho = inf is the
    noiseless sentinel.
    """
    if horizon < 1:
        raise ValueError("horizon must be at least 1")
    if math.isinf(rho):
        return Fraction(0)
    if rho <= 0:
        raise ValueError("rho must be positive (pass noiseless=True for an exact counter)")
    return Fraction(math.log(max(horizon, 2))) / (2 * Fraction(rho))


class TreeCounter:
    """Noisy prefix sums over a bounded stream via binary-tree aggregation.

    Register j holds the running sum of a dyadic block of 2**j stream values.
    On round t, the lowest set bit of t names the register that absorbs all
    lower registers plus the new value; that register alone is re-noised, and
    the released prefix sum adds the noisy registers picked out by t's binary
    expansion. Register folds are exact integer arithmetic, so all outputs
    are integers.
    """

    def __init__(self, horizon: int, rho: float | None = None, rng=None, noiseless: bool = False):
        if horizon < 1:
            raise ValueError("horizon must be at least 1")
        self.horizon = int(horizon)
        self.registers = ceil_log2(self.horizon) + 1
        if noiseless:
            self.sigma2 = Fraction(0)
        else:
            if rho is None:
                raise ValueError("rho is required for a noisy counter (or pass noiseless=True)")
            self.sigma2 = tree_noise_sigma2(self.horizon, rho)
        if self.sigma2 == 0:
            self._sampler = None
            self._bits = None
        else:
            if rng is None:
                raise ValueError("a random source is required for a noisy counter")
            self._sampler = DiscreteGaussianSampler(self.sigma2)
            self._bits = rng if isinstance(rng, BitSource) else BitSource(rng)
        self.t = 0
        self.alpha = [0] * self.registers
        self.alpha_noisy = [0] * self.registers
        # pre-noise value of the register re-noised each round (one tree node)
        self.node_log: list[int] = []

    def feed(self, z: int) -> int:
        """Absorb the next stream value and return the noisy prefix sum."""
        if self.t >= self.horizon:
            raise ValueError(f"counter horizon {self.horizon} exhausted")
        z = int(z)
        if z < 0:
            raise ValueError("stream values must be non-negative")
        t = self.t + 1
        i = (t & -t).bit_length() - 1
        acc = z
        for j in range(i):
            acc += self.alpha[j]
            self.alpha[j] = 0
            self.alpha_noisy[j] = 0
        self.alpha[i] = acc
        self.node_log.append(acc)
        noise = 0 if self._sampler is None else self._sampler.sample(self._bits)
        self.alpha_noisy[i] = acc + noise
        total = 0
        rem = t
        j = 0
        while rem:
            if rem & 1:
                total += self.alpha_noisy[j]
            rem >>= 1
            j += 1
        self.t = t
        return total


class MonotoneBank:
    """Monotonized cumulative-count estimates hat_S[b, t].

    Row b = 0 is pinned to the public population size (no noise, no budget
    spent); column t = 0 and the region b > t are structurally zero. Cells
    with 1 <= b <= t are filled round by round through :meth:`monotonize`,
    which needs hat_S[b, t-1] and hat_S[b-1, t-1] already final.
    """

    def __init__(self, T: int, m: int):
        if T < 1:
            raise ValueError("horizon must be at least 1")
        if m < 0:
            raise ValueError("population size must be non-negative")
        self.T = int(T)
        self.m = int(m)
        self.hat = np.zeros((T + 1, T + 1), dtype=np.int64)
        self.hat[0, :] = self.m
        self._filled = np.zeros((T + 1, T + 1), dtype=bool)
        self._filled[0, :] = True
        self._filled[:, 0] = True
        for t in range(T + 1):
            self._filled[t + 1:, t] = True

    def value(self, b: int, t: int) -> int:
        if not self._filled[b, t]:
            raise RuntimeError(f"hat_S[b={b}, t={t}] has not been set yet")
        return int(self.hat[b, t])

    def monotonize(self, b: int, t: int, s_tilde: int) -> int:
        """Clamp a noisy count into [hat_S[b, t-1], hat_S[b-1, t-1]] and store it."""
        if not (1 <= b <= t <= self.T):
            raise ValueError(f"monotonize needs 1 <= b <= t <= T, got b={b}, t={t}")
        if not (self._filled[b, t - 1] and self._filled[b - 1, t - 1]):
            raise RuntimeError(f"predecessors of (b={b}, t={t}) are not filled yet")
        lo = int(self.hat[b, t - 1])
        hi = int(self.hat[b - 1, t - 1])
        value = min(max(int(s_tilde), lo), hi)
        self.hat[b, t] = value
        self._filled[b, t] = True
        return value

    def validate(self) -> None:
        """Assert the two-sided monotonicity invariants on all filled cells."""
        for t in range(1, self.T + 1):
            for b in range(1, self.T + 1):
                if not self._filled[b, t]:
                    continue
                lo = self.hat[b, t - 1]
                hi = self.hat[b - 1, t - 1]
                if not lo <= self.hat[b, t] <= hi:
                    raise AssertionError(
                        f"monotonicity violated at b={b}, t={t}: "
                        f"{lo} <= {self.hat[b, t]} <= {hi} fails"
                    )
