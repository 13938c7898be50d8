"""Query evaluation on real or synthetic longitudinal data, with debiasing.

All counting is exact integer arithmetic; the single division by the
population size happens last.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .model import suffix_index
from .window import compute_error_bound, compute_relative_error_bound

__all__ = [
    "MaxErrorReport",
    "QuerySpec",
    "UnsupportedWindowError",
    "cumulative_from_window_oracle",
    "debias_fraction",
    "debiased_answer",
    "eval_query",
    "max_error_report",
    "parse_queries",
]

# enumeration over 2**t full-history bins; past this the oracle is refused
_ORACLE_MAX_ROUNDS = 12


class UnsupportedWindowError(ValueError):
    """The query looks past what the synthesizer was configured to preserve.

    Answers to such queries carry no accuracy guarantee and degrade badly in
    practice, so evaluation refuses unless explicitly forced; forced answers
    must be tagged as unsupported downstream.
    """


@dataclass(frozen=True)
class QuerySpec:
    """One counting query: fixed window, cumulative threshold, or linear.

    kind "window" asks for the fraction of rows whose last len(s) bits equal
    s at round t. kind "cumulative" asks for the fraction with Hamming
    weight >= b up to round t. kind "linear" is a weighted sum of window
    queries sharing one window length.
    """

    kind: str
    t: int
    s: str | None = None
    b: int | None = None
    weights: tuple[tuple[str, float], ...] | None = None
    name: str | None = None

    def __post_init__(self):
        if self.t < 1:
            raise ValueError("query round t must be at least 1")
        if self.kind == "window":
            if not self.s:
                raise ValueError("window query needs a suffix string s")
            suffix_index(self.s)  # validates alphabet
            if self.t < len(self.s):
                raise ValueError(f"window query {self.s!r} undefined before round {len(self.s)}")
        elif self.kind == "cumulative":
            if self.b is None or self.b < 0:
                raise ValueError("cumulative query needs a threshold b >= 0")
        elif self.kind == "linear":
            if not self.weights:
                raise ValueError("linear query needs non-empty weights")
            lengths = {len(s) for s, _ in self.weights}
            if len(lengths) != 1:
                raise ValueError("linear query weights must share one window length")
            for s, w in self.weights:
                suffix_index(s)
                if not np.isfinite(w):
                    raise ValueError("linear query weights must be finite")
            if self.t < lengths.pop():
                raise ValueError("linear query undefined before its window length")
        else:
            raise ValueError(f"unknown query kind {self.kind!r}")

    @classmethod
    def window(cls, s: str, t: int) -> "QuerySpec":
        return cls(kind="window", t=t, s=s)

    @classmethod
    def cumulative(cls, b: int, t: int) -> "QuerySpec":
        return cls(kind="cumulative", t=t, b=b)

    @classmethod
    def linear(cls, weights: dict[str, float], t: int, name: str | None = None) -> "QuerySpec":
        items = tuple(sorted((s, float(w)) for s, w in weights.items()))
        return cls(kind="linear", t=t, weights=items, name=name)

    @property
    def window_length(self) -> int | None:
        """Window width the query looks at; None for cumulative queries."""
        if self.kind == "window":
            return len(self.s)
        if self.kind == "linear":
            return len(self.weights[0][0])
        return None

    @property
    def query_id(self) -> str:
        if self.kind == "window":
            return f"window:{self.s}"
        if self.kind == "cumulative":
            return f"cum:{self.b}"
        return self.name or "linear:" + "+".join(s for s, _ in self.weights)

    def to_dict(self) -> dict:
        if self.kind == "window":
            return {"kind": "window", "s": self.s, "t": self.t}
        if self.kind == "cumulative":
            return {"kind": "cum", "b": self.b, "t": self.t}
        out = {"kind": "linear", "t": self.t, "weights": dict(self.weights)}
        if self.name:
            out["name"] = self.name
        return out


def parse_queries(spec) -> list[QuerySpec]:
    """Parse the JSON query list format.

    Accepts a JSON string, a parsed list, or a single dict. Each entry is
    {"kind": "window", "s": "101", "t": 7}, {"kind": "cum", "b": 3, "t": 12},
    or {"kind": "linear", "t": 7, "weights": {"110": 1, "011": 1}}; "t" may
    be a list of rounds, which expands to one query per round.
    """
    if isinstance(spec, str):
        spec = json.loads(spec)
    if isinstance(spec, dict):
        spec = [spec]
    queries: list[QuerySpec] = []
    for entry in spec:
        kind = entry.get("kind")
        ts = entry.get("t")
        if ts is None:
            raise ValueError(f"query entry missing 't': {entry!r}")
        ts = ts if isinstance(ts, list) else [ts]
        for t in ts:
            if kind == "window":
                queries.append(QuerySpec.window(entry["s"], int(t)))
            elif kind in ("cum", "cumulative"):
                queries.append(QuerySpec.cumulative(int(entry["b"]), int(t)))
            elif kind == "linear":
                queries.append(
                    QuerySpec.linear(entry["weights"], int(t), name=entry.get("name"))
                )
            else:
                raise ValueError(f"unknown query kind {kind!r}")
    return queries


def _check_supported(q: QuerySpec, supported_k, force: bool) -> None:
    length = q.window_length
    if length is not None and supported_k is not None and length > supported_k and not force:
        raise UnsupportedWindowError(
            f"query {q.query_id} looks at a window of {length} rounds but the "
            f"synthesizer preserves windows up to k={supported_k}; pass force=True "
            "to evaluate anyway (the answer carries no accuracy guarantee)"
        )


def eval_query(data, q: QuerySpec, supported_k: int | None = None, force: bool = False) -> float:
    """Evaluate a query by exact averaging over rows.

    data is a LongitudinalDataset or SyntheticStore. supported_k, when given,
    refuses window/linear queries wider than the synthesizer's window unless
    force is set.
    """
    if q.t > data.t_max:
        raise ValueError(f"query round {q.t} exceeds available rounds ({data.t_max})")
    _check_supported(q, supported_k, force)
    if q.kind == "window":
        hist = data.suffix_histogram(len(q.s), q.t)
        return hist[q.s] / data.population
    if q.kind == "cumulative":
        if q.b == 0:
            return 1.0
        if q.b > q.t:
            return 0.0
        return int(data.cumulative_counts(q.t)[q.b]) / data.population
    hist = data.suffix_histogram(q.window_length, q.t)
    numerator = 0.0
    for s, w in q.weights:
        numerator += w * hist[s]
    return numerator / data.population


def debias_fraction(raw_count: int, n_pad: int, n: int) -> float:
    """Fraction estimate (raw_count - n_pad) / n for one width-k bin.

    May be negative; it is reported as-is because clamping to [0, 1] would
    reintroduce bias. Analysts may post-clamp.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    return (raw_count - n_pad) / n


def debiased_answer(
    store,
    q: QuerySpec,
    n_pad: int,
    n: int,
    k: int | None = None,
    force: bool = False,
) -> float:
    """Padding-corrected answer on a window-synthesized store.

    Each width-k bin carries n_pad padding records, so a width-L window bin
    (L <= k) aggregates 2**(k-L) of them. Cumulative stores carry no padding;
    call with n_pad=0 (or evaluate directly).
    """
    if q.t > store.t_max:
        raise ValueError(f"query round {q.t} exceeds released rounds ({store.t_max})")
    _check_supported(q, k, force)
    if q.kind == "cumulative":
        return eval_query(store, q)
    length = q.window_length
    pad = n_pad * (2.0 ** ((k if k is not None else length) - length))
    hist = store.suffix_histogram(length, q.t)
    if q.kind == "window":
        return (hist[q.s] - pad) / n
    numerator = 0.0
    for s, w in q.weights:
        numerator += w * (hist[s] - pad)
    return numerator / n


def cumulative_from_window_oracle(data, b: int, t: int) -> float:
    """Cumulative answer recovered by summing full-history window bins.

    With the window spanning the entire history, the weight >= b rows are
    exactly the rows falling in bins whose key has at least b ones. Exact on
    raw data; used as a cross-check oracle. Refuses t beyond 12 (2**t bins).
    """
    if t > _ORACLE_MAX_ROUNDS:
        raise ValueError(f"oracle enumerates 2**t bins and is capped at t <= {_ORACLE_MAX_ROUNDS}")
    if t > data.t_max:
        raise ValueError(f"round {t} exceeds available rounds ({data.t_max})")
    if b == 0:
        return 1.0
    if b > t:
        return 0.0
    hist = data.suffix_histogram(t, t)
    total = 0
    for code in range(1 << t):
        if code.bit_count() >= b:
            total += int(hist.counts[code])
    return total / data.population


@dataclass
class MaxErrorReport:
    """Observed worst-case deviations of a released store from padded truth."""

    per_round_additive: dict[int, int]
    max_additive: int
    max_debiased_relative: float
    additive_bound: float
    relative_bound: float
    beta: float


def max_error_report(truth, store, *, k, n_pad, rho, T, beta=0.05, noiseless=False):
    """Compare released counts against C + n_pad round by round.

    Reports max over (s, t) of |p - (C + n_pad)|, the matching debiased
    relative error, and the theoretical bounds at failure probability beta.
    """
    per_round: dict[int, int] = {}
    max_additive = 0
    max_c_frac = 0.0
    last = min(store.t_max, truth.t_max)
    for t in range(k, last + 1):
        p = store.suffix_histogram(k, t).counts
        c = truth.suffix_histogram(k, t).counts
        deviation = int(np.abs(p - (c + n_pad)).max())
        per_round[t] = deviation
        max_additive = max(max_additive, deviation)
        max_c_frac = max(max_c_frac, float(c.max()) / truth.population)
    if noiseless:
        additive_bound = 0.0
        relative_bound = 0.0
    else:
        additive_bound = compute_error_bound(T, k, rho, beta)
        relative_bound = compute_relative_error_bound(T, k, rho, beta, truth.population, max_c_frac)
    return MaxErrorReport(
        per_round_additive=per_round,
        max_additive=max_additive,
        max_debiased_relative=max_additive / truth.population,
        additive_bound=additive_bound,
        relative_bound=relative_bound,
        beta=beta,
    )
