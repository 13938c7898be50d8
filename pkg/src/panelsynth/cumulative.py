"""Continual synthetic data preserving cumulative weight-threshold counts.

One stream counter per threshold b feeds a monotonized bank of estimates;
after every round the synthetic rows realize the bank exactly, so released
threshold answers can never decrease over time.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .counters import MonotoneBank, TreeCounter
from .dp import ZCDPAccountant, cumulative_split_weights, split_cumulative
from .model import LongitudinalDataset, SyntheticStore

__all__ = ["CumulativeSynthConfig", "CumulativeSynthesizer", "accuracy_of"]

_SCHEDULE_REL_TOL = 1e-9


def _tree_counter_factory(horizon, rho, rng, noiseless):
    return TreeCounter(horizon, rho, rng, noiseless=noiseless)


@dataclass(frozen=True)
class CumulativeSynthConfig:
    """Run parameters for the cumulative synthesizer.

    The schedule assigns budget per threshold b = 1..T and must sum to rho;
    by default it is the error-equalizing tree-counter split. A custom
    counter_factory(horizon, rho, rng, noiseless) may replace the tree
    counter with any stream counter private for the differ-by-one-in-one-
    entry neighboring relation.
    """

    T: int
    rho: float = 0.0
    schedule: tuple[float, ...] | None = None
    counter_factory: Callable | None = None
    noiseless: bool = False

    def __post_init__(self):
        if self.T < 1:
            raise ValueError("horizon must be at least 1")
        if not self.noiseless and self.rho <= 0:
            raise ValueError("rho must be positive for a noisy run")
        if self.schedule is not None:
            sched = tuple(float(x) for x in self.schedule)
            if len(sched) != self.T:
                raise ValueError("schedule needs one entry per threshold b = 1..T")
            if any(x < 0 for x in sched):
                raise ValueError("schedule entries must be non-negative")
            if abs(sum(sched) - self.rho) > _SCHEDULE_REL_TOL * max(abs(self.rho), 1.0):
                raise ValueError("schedule must sum to rho")
            object.__setattr__(self, "schedule", sched)

    def resolved_schedule(self) -> tuple[float, ...]:
        if self.schedule is not None:
            return self.schedule
        if self.noiseless:
            return (0.0,) * self.T
        return tuple(split_cumulative(self.rho, self.T).tolist())

    @property
    def counter_kind(self) -> str:
        return "custom" if self.counter_factory is not None else "tree"


def accuracy_of(cfg: CumulativeSynthConfig, n: int, beta: float) -> tuple[float, float]:
    """Fraction-scale guarantee (alpha_star, beta_star) for the default split.

    alpha_star bounds every released threshold fraction's error with
    probability 1 - beta_star, where beta_star = T * beta.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    if not 0 < beta < 1:
        raise ValueError("beta must lie in (0, 1)")
    if cfg.rho <= 0:
        raise ValueError("rho must be positive")
    weights = cumulative_split_weights(cfg.T)
    alpha_star = math.sqrt(float(weights.sum()) / cfg.rho * math.log(1.0 / beta)) / n
    return alpha_star, cfg.T * beta


class CumulativeSynthesizer:
    """Engine for one run over a population of n true and n synthetic rows.

    Per round t: for each threshold b <= t, count the true new arrivals at
    weight b, feed counter b, monotonize, and extend exactly
    hat_S[b, t] - hat_S[b, t-1] synthetic rows out of the weight-(b-1) pool
    with a 1. Pools are read at their round t-1 state, so the loop over b is
    order-independent on disjoint pools.
    """

    def __init__(self, n: int, cfg: CumulativeSynthConfig, rng=None):
        if n < 1:
            raise ValueError("population size must be at least 1")
        self.cfg = cfg
        self.n = int(n)
        if not isinstance(rng, np.random.Generator):
            rng = np.random.default_rng(rng)
        streams = rng.spawn(cfg.T + 1)
        self.schedule = cfg.resolved_schedule()
        factory = cfg.counter_factory or _tree_counter_factory
        self.counters = {
            b: factory(cfg.T - b + 1, self.schedule[b - 1], streams[b - 1], cfg.noiseless)
            for b in range(1, cfg.T + 1)
        }
        self._select = streams[cfg.T]
        self.bank = MonotoneBank(cfg.T, m=self.n)
        self.store = SyntheticStore(self.n)
        self._synth_weights = np.zeros(self.n, dtype=np.int64)
        self._true_weights = np.zeros(self.n, dtype=np.int64)
        # raw (pre-monotonization) counter outputs, for diagnostics
        self.s_tilde = np.zeros((cfg.T + 1, cfg.T + 1), dtype=np.int64)
        self.fed = np.zeros((cfg.T + 1, cfg.T + 1), dtype=bool)
        self.accountant = ZCDPAccountant()
        if not cfg.noiseless:
            for b in range(1, cfg.T + 1):
                self.accountant.charge(f"counter b={b}", self.schedule[b - 1])
        self.t = 0

    def step(self, dataset: LongitudinalDataset, t: int) -> np.ndarray:
        """Publish the synthetic column for round t = current round + 1."""
        cfg = self.cfg
        if t != self.t + 1:
            raise ValueError(f"out-of-order round: expected {self.t + 1}, got {t}")
        if t > cfg.T:
            raise ValueError(f"round {t} is beyond the horizon T={cfg.T}")
        if t > dataset.t_max:
            raise ValueError(f"round {t} not ingested (t_max={dataset.t_max})")
        if dataset.n != self.n:
            raise ValueError("dataset population differs from synthesizer population")

        true_col = dataset.column(t)
        # arrivals[w] = number of true rows at weight w before round t reporting 1 now
        arrivals = np.bincount(self._true_weights[true_col == 1], minlength=t)
        column = np.zeros(self.n, dtype=np.uint8)
        for b in range(1, t + 1):
            s_tilde = self.counters[b].feed(int(arrivals[b - 1]))
            self.s_tilde[b, t] = s_tilde
            self.fed[b, t] = True
            s_hat = self.bank.monotonize(b, t, s_tilde)
            z_hat = s_hat - self.bank.value(b, t - 1)
            pool = np.nonzero(self._synth_weights == b - 1)[0]
            # the upper clamp makes z_hat <= pool.size; violation is a bug
            assert 0 <= z_hat <= pool.size
            perm = self._select.permutation(pool.size)
            column[pool[perm[:z_hat]]] = 1
        self.store.append_column(column)
        self._synth_weights += column
        self._true_weights += true_col
        self.t = t
        return column

    def run(self, dataset: LongitudinalDataset, through: int | None = None) -> SyntheticStore:
        """Step through rounds 1..through (default min(T, t_max))."""
        if through is None:
            through = min(self.cfg.T, dataset.t_max)
        if through < 1 or through > min(self.cfg.T, dataset.t_max):
            raise ValueError(f"cannot run through round {through}")
        for t in range(1, through + 1):
            self.step(dataset, t)
        return self.store

    def released_count(self, b: int, t: int) -> int:
        """hat_S[b, t]: the released number of rows with weight >= b at round t."""
        if b == 0:
            return self.n
        return self.bank.value(b, t)

    def metadata(self) -> dict:
        return {
            "T": self.cfg.T,
            "rho": self.cfg.rho,
            "schedule": list(self.schedule),
            "counter_kind": self.cfg.counter_kind,
            "noiseless": self.cfg.noiseless,
            "n": self.n,
            "rho_spent": self.accountant.total,
        }
