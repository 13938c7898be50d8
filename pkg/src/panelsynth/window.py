"""Continual synthetic data preserving every width-k suffix histogram.

Each round the synthesizer privatizes the current window histogram with
per-bin integer Gaussian noise on top of n_pad padding records per bin, then
extends the existing synthetic rows so the released columns realize counts
that are exactly consistent with the previous release: for every overlap
string z, the rows ending in z at round t-1 are exactly the rows ending in
z0 or z1 at round t.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .dp import BitSource, DiscreteGaussianSampler, ZCDPAccountant
from .model import (
    LongitudinalDataset,
    SuffixHistogram,
    SyntheticStore,
    suffix_string,
    true_suffix_histogram,
)

__all__ = [
    "PaddingExhaustedError",
    "WindowSynthConfig",
    "WindowSynthesizer",
    "compute_error_bound",
    "compute_n_pad",
    "compute_relative_error_bound",
    "split_consistent",
]


class PaddingExhaustedError(RuntimeError):
    """A synthetic bin count went negative: the padding reserve ran out.

    The run aborts rather than clamping, because clamping would silently
    break the consistency of already-released columns. ``suffix`` is None
    when the whole synthetic population collapsed at initialization.
    """

    def __init__(self, t: int, suffix, value: int):
        self.t = t
        self.suffix = suffix
        self.value = value
        super().__init__(
            f"synthetic count for suffix {suffix!r} at round {t} went negative ({value})"
        )


def _check_window_shape(T: int, k: int) -> None:
    if not 1 <= k <= T:
        raise ValueError(f"need 1 <= k <= T, got k={k}, T={T}")


def compute_n_pad(T: int, k: int, rho: float, beta_target: float) -> int:
    """Padding records per bin keeping all noisy counts non-negative w.p. >= 1 - beta_target.

    Ceiled to an integer so all histogram state stays integral.
    """
    _check_window_shape(T, k)
    if rho <= 0:
        raise ValueError("rho must be positive")
    if not 0 < beta_target < 1:
        raise ValueError("beta_target must lie in (0, 1)")
    r = T - k + 1
    return math.ceil(math.sqrt(r / rho * math.log((1 << k) * r / beta_target)))


def compute_error_bound(T: int, k: int, rho: float, beta: float) -> float:
    """High-probability bound on max over (s, t) of |p - (C + n_pad)| for a full run."""
    _check_window_shape(T, k)
    if rho <= 0:
        raise ValueError("rho must be positive")
    if not 0 < beta < 1:
        raise ValueError("beta must lie in (0, 1)")
    r = T - k + 1
    return (math.sqrt(r / rho) + 1.0 / math.sqrt(2.0)) * math.sqrt(
        math.log((1 << k) * r / beta)
    )


def compute_relative_error_bound(
    T: int, k: int, rho: float, beta: float, n: int, c_frac: float
) -> float:
    """Bound on max |p/m - C/n| for bins holding a c_frac fraction of the data."""
    if n < 1:
        raise ValueError("n must be at least 1")
    if not 0 <= c_frac <= 1:
        raise ValueError("c_frac must lie in [0, 1]")
    lam = compute_error_bound(T, k, rho, beta)
    return (2.0 * lam + (1 << (k + 1)) * lam * c_frac) / n


def split_consistent(prev_mass: int, c_hat0: int, c_hat1: int, rounding_bit: int = 0):
    """Target counts (p_z0, p_z1) for one overlap group.

    Moves both noisy counts by the same correction so that
    p_z0 + p_z1 == prev_mass exactly. When the correction is a half-integer,
    rounding_bit (+1 or -1) decides which side absorbs the extra half.
    """
    d2 = prev_mass - c_hat0 - c_hat1
    if d2 & 1:
        if rounding_bit not in (-1, 1):
            raise ValueError("half-integer correction needs a rounding bit of -1 or +1")
        return c_hat0 + (d2 + rounding_bit) // 2, c_hat1 + (d2 - rounding_bit) // 2
    return c_hat0 + d2 // 2, c_hat1 + d2 // 2


@dataclass(frozen=True)
class WindowSynthConfig:
    """Run parameters for the window-histogram synthesizer.

    n_pad overrides the derived padding when set. With noiseless=True the
    per-bin noise is 0 and the default padding is 0 (exact test mode).
    """

    T: int
    k: int
    rho: float = 0.0
    beta_target: float = 0.01
    n_pad: int | None = None
    noiseless: bool = False

    def __post_init__(self):
        _check_window_shape(self.T, self.k)
        if not 0 < self.beta_target < 1:
            raise ValueError("beta_target must lie in (0, 1)")
        if self.n_pad is not None and self.n_pad < 0:
            raise ValueError("n_pad must be non-negative")
        if not self.noiseless and self.rho <= 0:
            raise ValueError("rho must be positive for a noisy run")

    @property
    def update_steps(self) -> int:
        return self.T - self.k + 1

    def per_step_rho(self) -> float:
        return 0.0 if self.noiseless else self.rho / self.update_steps

    def resolved_n_pad(self) -> int:
        if self.n_pad is not None:
            return int(self.n_pad)
        if self.noiseless:
            return 0
        return compute_n_pad(self.T, self.k, self.rho, self.beta_target)


class WindowSynthesizer:
    """Engine for one run: noisy window histograms drive record extension.

    All noise and index selection comes from the generator passed at
    construction, so a run is reproducible from its seed. Per-bin noise is
    drawn in lexicographic bin order; rounding bits and index permutations
    follow in overlap-group order.
    """

    def __init__(self, cfg: WindowSynthConfig, rng=None):
        self.cfg = cfg
        if not isinstance(rng, np.random.Generator):
            rng = np.random.default_rng(rng)
        noise_rng, select_rng = rng.spawn(2)
        self._bits = BitSource(noise_rng)
        self._select = select_rng
        self.n_pad = cfg.resolved_n_pad()
        if cfg.noiseless:
            self._sampler = None
        else:
            self._sampler = DiscreteGaussianSampler(
                Fraction(cfg.update_steps) / (2 * Fraction(cfg.rho))
            )
        self.accountant = ZCDPAccountant()
        self.store: SyntheticStore | None = None
        self.m: int | None = None
        self.t = 0
        self._p: np.ndarray | None = None  # synthetic counts per k-bit bin code
        self._state: np.ndarray | None = None  # per-row code of trailing k-1 bits

    @property
    def sigma2(self) -> Fraction:
        return Fraction(0) if self._sampler is None else self._sampler.sigma2

    def _noise(self) -> int:
        return 0 if self._sampler is None else self._sampler.sample(self._bits)

    def _noisy_counts(self, dataset: LongitudinalDataset, t: int) -> np.ndarray:
        true = true_suffix_histogram(dataset, self.cfg.k, t).counts
        out = np.empty(true.shape, dtype=np.int64)
        for code in range(true.size):
            out[code] = int(true[code]) + self.n_pad + self._noise()
        if not self.cfg.noiseless:
            self.accountant.charge(f"histogram@t={t}", self.cfg.per_step_rho())
        return out

    def init(self, dataset: LongitudinalDataset) -> np.ndarray:
        """Consume rounds 1..k and publish the first k synthetic columns.

        The starting records realize the noisy counts exactly, assigned in
        lexicographic suffix blocks (row 0 up) for reproducibility.
        """
        if self.t != 0:
            raise RuntimeError("synthesizer already initialized")
        k = self.cfg.k
        if dataset.t_max < k:
            raise ValueError(f"dataset must have at least k={k} ingested rounds")
        c_hat = self._noisy_counts(dataset, k)
        negative = np.nonzero(c_hat < 0)[0]
        if negative.size:
            code = int(negative[0])
            raise PaddingExhaustedError(k, suffix_string(code, k), int(c_hat[code]))
        m = int(c_hat.sum())
        if m < 1:
            raise PaddingExhaustedError(k, None, m)
        self.m = m
        self.store = SyntheticStore(m)
        codes = np.repeat(np.arange(1 << k, dtype=np.int64), c_hat)
        for j in range(1, k + 1):
            self.store.append_column((codes >> (k - j)) & 1)
        self._state = codes & ((1 << (k - 1)) - 1)
        self._p = c_hat
        self.t = k
        return self.store.matrix()

    def step(self, dataset: LongitudinalDataset, t: int) -> np.ndarray:
        """Publish the synthetic column for round t = current round + 1."""
        cfg = self.cfg
        k = cfg.k
        if self.t == 0:
            raise RuntimeError("call init() before step()")
        if t != self.t + 1:
            raise ValueError(f"out-of-order round: expected {self.t + 1}, got {t}")
        if t > cfg.T:
            raise ValueError(f"round {t} is beyond the horizon T={cfg.T}")
        if t > dataset.t_max:
            raise ValueError(f"round {t} not ingested (t_max={dataset.t_max})")

        c_hat = self._noisy_counts(dataset, t)
        half = 1 << (k - 1)
        p_new = np.empty(1 << k, dtype=np.int64)
        for z in range(half):
            # rows ending in overlap z entered round t-1 with suffix 0z or 1z
            prev_mass = int(self._p[z]) + int(self._p[half + z])
            c0 = int(c_hat[2 * z])
            c1 = int(c_hat[2 * z + 1])
            bit = 0
            if (prev_mass - c0 - c1) & 1:
                bit = 1 if self._bits.getbits(1) else -1
            p_z0, p_z1 = split_consistent(prev_mass, c0, c1, bit)
            if p_z0 < 0:
                raise PaddingExhaustedError(t, suffix_string(2 * z, k), p_z0)
            if p_z1 < 0:
                raise PaddingExhaustedError(t, suffix_string(2 * z + 1, k), p_z1)
            p_new[2 * z] = p_z0
            p_new[2 * z + 1] = p_z1

        column = np.zeros(self.m, dtype=np.uint8)
        for z in range(half):
            pool = np.nonzero(self._state == z)[0]
            assert pool.size == int(p_new[2 * z] + p_new[2 * z + 1])
            ones = int(p_new[2 * z + 1])
            perm = self._select.permutation(pool.size)
            column[pool[perm[:ones]]] = 1
        self._state = ((self._state << 1) | column) & (half - 1)
        self._p = p_new
        self.store.append_column(column)
        self.t = t
        return column

    def run(self, dataset: LongitudinalDataset, through: int | None = None) -> SyntheticStore:
        """Initialize then step through rounds k+1..through (default min(T, t_max))."""
        if through is None:
            through = min(self.cfg.T, dataset.t_max)
        if through < self.cfg.k or through > min(self.cfg.T, dataset.t_max):
            raise ValueError(f"cannot run through round {through}")
        self.init(dataset)
        for t in range(self.cfg.k + 1, through + 1):
            self.step(dataset, t)
        return self.store

    def histogram(self) -> SuffixHistogram:
        """Synthetic suffix counts p at the last published round."""
        if self._p is None:
            raise RuntimeError("synthesizer has not published any round yet")
        return SuffixHistogram(self.cfg.k, self._p.copy())

    def metadata(self) -> dict:
        """Public release parameters. n_pad is published so analysts can debias."""
        return {
            "T": self.cfg.T,
            "k": self.cfg.k,
            "rho": self.cfg.rho,
            "beta_target": self.cfg.beta_target,
            "n_pad": self.n_pad,
            "noiseless": self.cfg.noiseless,
            "m": self.m,
            "rho_spent": self.accountant.total,
        }
