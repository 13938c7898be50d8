"""Experiment orchestration: ingestion, simulation, repetition sweeps, outputs.

A sweep is described by a RunManifest and produces four plot-ready files in
the output directory:

  answers.csv   long format: query, t, repetition, value (debiased answers)
  summary.csv   per query/round: truth, mean, std, 2.5/50/97.5 percentiles
  errors.csv    per repetition: status, worst-case error, theoretical bound
  failures.csv  padding-exhaustion events (repetition, round, bin)

plus metadata.json carrying every public parameter needed for debiasing.
Outputs are byte-identical for the same manifest and seed, except for the
wall_time_s field of the metadata.
"""

from __future__ import annotations

import csv
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .cumulative import CumulativeSynthConfig, CumulativeSynthesizer, accuracy_of
from .model import LongitudinalDataset, true_cumulative_counts
from .queries import QuerySpec, debiased_answer, eval_query
from .window import PaddingExhaustedError, WindowSynthConfig, WindowSynthesizer, compute_error_bound

__all__ = [
    "ExperimentResult",
    "InputError",
    "RepOutcome",
    "RunManifest",
    "SCHEMA_VERSION",
    "ingest_csv",
    "run_experiment",
    "simulate_dataset",
]

SCHEMA_VERSION = 1

_MISSING_TOKENS = {"", "na", "nan", "null", "none", "."}


class InputError(ValueError):
    """Unusable input data or manifest; the CLI maps this to exit code 2."""


def ingest_csv(path, header: bool = False, threshold: float | None = None, delimiter: str = ","):
    """Load a rows-by-rounds numeric CSV into a dataset.

    With a threshold, a cell value v becomes 1 when v < threshold, else 0
    (poverty-style indicator coding). Without one, cells must already be 0/1.
    Rows containing any missing cell are dropped. Returns
    (dataset, dropped_row_count).
    """
    rows: list[list[float]] = []
    dropped = 0
    width: int | None = None
    with open(path, newline="") as handle:
        reader = csv.reader(handle, delimiter=delimiter)
        for lineno, record in enumerate(reader, start=1):
            if header and lineno == 1:
                continue
            if not record or (len(record) == 1 and not record[0].strip()):
                continue
            if width is None:
                width = len(record)
            elif len(record) != width:
                raise InputError(
                    f"{path}: line {lineno} has {len(record)} columns, expected {width}"
                )
            values: list[float] = []
            missing = False
            for cell in record:
                token = cell.strip()
                if token.lower() in _MISSING_TOKENS:
                    missing = True
                    continue
                try:
                    values.append(float(token))
                except ValueError:
                    raise InputError(f"{path}: line {lineno}: non-numeric cell {cell!r}") from None
            if missing:
                dropped += 1
                continue
            rows.append(values)
    if not rows:
        raise InputError(f"{path}: no usable rows")
    arr = np.array(rows, dtype=float)
    if threshold is not None:
        bits = (arr < threshold).astype(np.uint8)
    else:
        if not np.isin(arr, (0.0, 1.0)).all():
            raise InputError(f"{path}: values must be 0/1 unless a binarization threshold is given")
        bits = arr.astype(np.uint8)
    return LongitudinalDataset.from_matrix(bits), dropped


def simulate_dataset(kind: str, n: int, T: int, rng=None, *, p: float = 0.5,
                     p0: float = 0.12, stay: float = 0.9, enter: float = 0.02):
    """Seed-deterministic simulated input datasets.

    Kinds: "all_ones" (every update is 1, the stress input), "bernoulli"
    (iid bits at rate p), "markov" (persistent two-state chain shaped like
    program-participation panels: initial rate p0, per-round stay
    probability, per-round entry probability), and "from_seed" (uniform
    random bits, fully determined by the seed).
    """
    if n < 1 or T < 1:
        raise InputError("n and T must be at least 1")
    rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    if kind == "all_ones":
        bits = np.ones((n, T), dtype=np.uint8)
    elif kind == "from_seed":
        bits = rng.integers(0, 2, size=(n, T), dtype=np.uint8)
    elif kind == "bernoulli":
        if not 0 <= p <= 1:
            raise InputError("p must lie in [0, 1]")
        bits = (rng.random((n, T)) < p).astype(np.uint8)
    elif kind == "markov":
        for name, value in (("p0", p0), ("stay", stay), ("enter", enter)):
            if not 0 <= value <= 1:
                raise InputError(f"{name} must lie in [0, 1]")
        current = rng.random(n) < p0
        columns = [current]
        for _ in range(T - 1):
            draw = rng.random(n)
            current = np.where(current, draw < stay, draw < enter)
            columns.append(current)
        bits = np.column_stack(columns).astype(np.uint8)
    else:
        raise InputError(f"unknown simulation kind {kind!r}")
    return LongitudinalDataset.from_matrix(bits)


@dataclass
class RunManifest:
    """Everything needed to reproduce a sweep; echoed into metadata.json.

    Seeds for repetition r derive deterministically from the base seed:
    SeedSequence(seed).spawn(reps + 1) yields the simulated-data stream
    (child 0) followed by one stream per repetition.
    """

    mode: str                       # "window" or "cumulative"
    T: int
    rho: float
    k: int | None = None            # window mode only
    beta_target: float = 0.01
    n_pad: int | None = None
    reps: int = 1
    seed: int = 0
    out_dir: str = "out"
    queries: list[QuerySpec] = field(default_factory=list)
    noiseless: bool = False
    force_window: bool = False
    beta: float = 0.05              # failure probability for the reported bound
    workers: int = 1
    save_synth: int = 0
    # data source: exactly one of data_path / sim_kind
    data_path: str | None = None
    header: bool = False
    threshold: float | None = None
    sim_kind: str | None = None
    n: int | None = None
    sim_params: dict = field(default_factory=dict)

    def validate(self) -> None:
        if self.mode not in ("window", "cumulative"):
            raise InputError(f"unknown mode {self.mode!r}")
        if self.mode == "window" and self.k is None:
            raise InputError("window mode needs a window length k")
        if (self.data_path is None) == (self.sim_kind is None):
            raise InputError("specify exactly one data source (a CSV path or a simulation kind)")
        if self.sim_kind is not None and self.n is None:
            raise InputError("simulated data needs a population size n")
        if self.reps < 1:
            raise InputError("reps must be at least 1")
        if self.workers < 1:
            raise InputError("workers must be at least 1")
        if not 0 < self.beta < 1:
            raise InputError("beta must lie in (0, 1)")


@dataclass
class RepOutcome:
    """What one repetition produced."""

    rep: int
    ok: bool
    answers: list[float] | None
    max_error: int | None
    m: int | None = None
    fail_t: int | None = None
    fail_bin: str | None = None


@dataclass
class ExperimentResult:
    out_dir: Path
    n: int
    n_pad: int | None
    error_bound: float | None
    truth: list[float]
    outcomes: list[RepOutcome]
    summary_rows: list[dict]
    unsupported: list[str]

    @property
    def answers(self) -> np.ndarray:
        """(successful reps) x (queries) debiased answers."""
        good = [o.answers for o in self.outcomes if o.ok]
        return np.array(good, dtype=float) if good else np.zeros((0, len(self.truth)))

    @property
    def failures(self) -> list[RepOutcome]:
        return [o for o in self.outcomes if not o.ok]

    @property
    def all_failed(self) -> bool:
        return all(not o.ok for o in self.outcomes)


def _synth_config(manifest: RunManifest):
    if manifest.mode == "window":
        return WindowSynthConfig(
            T=manifest.T,
            k=manifest.k,
            rho=manifest.rho,
            beta_target=manifest.beta_target,
            n_pad=manifest.n_pad,
            noiseless=manifest.noiseless,
        )
    return CumulativeSynthConfig(T=manifest.T, rho=manifest.rho, noiseless=manifest.noiseless)


def _materialize_dataset(manifest: RunManifest, data_seed: np.random.SeedSequence):
    if manifest.data_path is not None:
        dataset, dropped = ingest_csv(
            manifest.data_path, header=manifest.header, threshold=manifest.threshold
        )
        source = str(manifest.data_path)
    else:
        dataset = simulate_dataset(
            manifest.sim_kind,
            manifest.n,
            manifest.T,
            np.random.default_rng(data_seed),
            **manifest.sim_params,
        )
        dropped = 0
        source = f"simulate:{manifest.sim_kind}"
    if dataset.t_max < manifest.T:
        raise InputError(
            f"data has {dataset.t_max} rounds but the manifest horizon is T={manifest.T}"
        )
    return dataset, dropped, source


def _window_max_error(truth, store, k: int, n_pad: int) -> int:
    worst = 0
    for t in range(k, store.t_max + 1):
        p = store.suffix_histogram(k, t).counts
        c = truth.suffix_histogram(k, t).counts
        worst = max(worst, int(np.abs(p - (c + n_pad)).max()))
    return worst


def _cumulative_max_error(truth, synth: CumulativeSynthesizer) -> int:
    worst = 0
    for t in range(1, synth.t + 1):
        s_true = true_cumulative_counts(truth, t)
        for b in range(1, t + 1):
            worst = max(worst, abs(synth.bank.value(b, t) - int(s_true[b])))
    return worst


def _run_one_rep(manifest: RunManifest, dataset, queries, n_pad, rep: int,
                 seed: np.random.SeedSequence) -> RepOutcome:
    rng = np.random.default_rng(seed)
    try:
        if manifest.mode == "window":
            synth = WindowSynthesizer(_synth_config(manifest), rng)
            store = synth.run(dataset, through=manifest.T)
            answers = [
                debiased_answer(store, q, n_pad, dataset.n, k=manifest.k, force=True)
                for q in queries
            ]
            max_error = _window_max_error(dataset, store, manifest.k, n_pad)
            return RepOutcome(rep, True, answers, max_error, m=store.m)
        synth = CumulativeSynthesizer(dataset.n, _synth_config(manifest), rng)
        store = synth.run(dataset, through=manifest.T)
        answers = [eval_query(store, q, force=True) for q in queries]
        max_error = _cumulative_max_error(dataset, synth)
        return RepOutcome(rep, True, answers, max_error, m=store.m)
    except PaddingExhaustedError as exc:
        return RepOutcome(rep, False, None, None, fail_t=exc.t, fail_bin=exc.suffix)


_POOL_STATE: dict = {}


def _pool_init(manifest, matrix, queries, n_pad):
    _POOL_STATE["manifest"] = manifest
    _POOL_STATE["dataset"] = LongitudinalDataset.from_matrix(matrix)
    _POOL_STATE["queries"] = queries
    _POOL_STATE["n_pad"] = n_pad


def _pool_run(args):
    rep, seed = args
    return _run_one_rep(
        _POOL_STATE["manifest"],
        _POOL_STATE["dataset"],
        _POOL_STATE["queries"],
        _POOL_STATE["n_pad"],
        rep,
        seed,
    )


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _write_csv(path: Path, header: list[str], rows) -> None:
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def run_experiment(manifest: RunManifest) -> ExperimentResult:
    """Run the sweep described by the manifest and write its output bundle.

    Synthesizer failures (padding exhaustion) are recorded per repetition and
    do not abort the sweep.
    """
    manifest.validate()
    started = time.perf_counter()
    out_dir = Path(manifest.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    root = np.random.SeedSequence(manifest.seed)
    seeds = root.spawn(manifest.reps + 1)
    dataset, dropped, source = _materialize_dataset(manifest, seeds[0])

    queries = list(manifest.queries)
    for q in queries:
        if q.t > manifest.T:
            raise InputError(f"query {q.query_id} at t={q.t} is beyond the horizon T={manifest.T}")
    supported = [_is_supported(manifest, q) for q in queries]
    unsupported = [q.query_id for q, s in zip(queries, supported) if not s]
    if unsupported and not manifest.force_window:
        raise InputError(
            "queries not preserved by this synthesizer: "
            + ", ".join(sorted(set(unsupported)))
            + " (pass force_window to evaluate them anyway, tagged as unsupported)"
        )

    if manifest.mode == "window":
        n_pad = _synth_config(manifest).resolved_n_pad()
        error_bound = (
            0.0
            if manifest.noiseless
            else compute_error_bound(manifest.T, manifest.k, manifest.rho, manifest.beta)
        )
        alpha_star = None
    else:
        n_pad = 0
        if manifest.noiseless:
            error_bound, alpha_star = 0.0, 0.0
        else:
            alpha_star, _ = accuracy_of(_synth_config(manifest), dataset.n, manifest.beta)
            error_bound = alpha_star * dataset.n

    truth = [eval_query(dataset, q, force=True) for q in queries]

    tasks = [(rep, seeds[rep + 1]) for rep in range(manifest.reps)]
    if manifest.workers > 1:
        with ProcessPoolExecutor(
            max_workers=manifest.workers,
            initializer=_pool_init,
            initargs=(manifest, dataset.matrix(), queries, n_pad),
        ) as pool:
            outcomes = list(pool.map(_pool_run, tasks, chunksize=8))
    else:
        outcomes = [
            _run_one_rep(manifest, dataset, queries, n_pad, rep, seed) for rep, seed in tasks
        ]

    # synthetic datasets are re-generated (same per-rep seed) only when saved
    for rep in range(min(manifest.save_synth, manifest.reps)):
        if not outcomes[rep].ok:
            continue
        rng = np.random.default_rng(seeds[rep + 1])
        if manifest.mode == "window":
            store = WindowSynthesizer(_synth_config(manifest), rng).run(dataset, through=manifest.T)
        else:
            store = CumulativeSynthesizer(dataset.n, _synth_config(manifest), rng).run(
                dataset, through=manifest.T
            )
        np.savetxt(out_dir / f"synth_rep{rep}.csv", store.matrix(), fmt="%d", delimiter=",")

    answer_rows = []
    for outcome in outcomes:
        if not outcome.ok:
            continue
        for q, value in zip(queries, outcome.answers):
            answer_rows.append((q.query_id, q.t, outcome.rep, value))
    _write_csv(out_dir / "answers.csv", ["query", "t", "repetition", "value"], answer_rows)

    summary_rows = []
    matrix = np.array(
        [o.answers for o in outcomes if o.ok], dtype=float
    ) if any(o.ok for o in outcomes) else np.zeros((0, len(queries)))
    for idx, q in enumerate(queries):
        column = matrix[:, idx] if matrix.size else np.array([])
        row = {
            "query": q.query_id,
            "t": q.t,
            "reps": int(column.size),
            "truth": truth[idx],
            "mean": float(column.mean()) if column.size else math.nan,
            "std": float(column.std(ddof=1)) if column.size > 1 else math.nan,
            "p2_5": float(np.percentile(column, 2.5)) if column.size else math.nan,
            "median": float(np.percentile(column, 50)) if column.size else math.nan,
            "p97_5": float(np.percentile(column, 97.5)) if column.size else math.nan,
            "supported": int(supported[idx]),
        }
        summary_rows.append(row)
    _write_csv(
        out_dir / "summary.csv",
        list(summary_rows[0].keys()) if summary_rows else
        ["query", "t", "reps", "truth", "mean", "std", "p2_5", "median", "p97_5", "supported"],
        [list(r.values()) for r in summary_rows],
    )

    _write_csv(
        out_dir / "errors.csv",
        ["repetition", "status", "m", "max_error", "error_bound", "within_bound"],
        [
            (
                o.rep,
                "ok" if o.ok else "padding_exhausted",
                o.m if o.m is not None else "",
                o.max_error if o.ok else "",
                error_bound,
                int(o.ok and o.max_error <= error_bound) if o.ok else "",
            )
            for o in outcomes
        ],
    )

    _write_csv(
        out_dir / "failures.csv",
        ["repetition", "round", "bin"],
        [(o.rep, o.fail_t, o.fail_bin if o.fail_bin is not None else "") for o in outcomes if not o.ok],
    )

    failures = [o for o in outcomes if not o.ok]
    metadata = {
        "schema": SCHEMA_VERSION,
        "version": __version__,
        "mode": manifest.mode,
        "T": manifest.T,
        "k": manifest.k,
        "rho": manifest.rho,
        "beta_target": manifest.beta_target,
        "beta": manifest.beta,
        "n_pad": n_pad if manifest.mode == "window" else None,
        "schedule": (
            list(_synth_config(manifest).resolved_schedule())
            if manifest.mode == "cumulative"
            else None
        ),
        "counter_kind": "tree" if manifest.mode == "cumulative" else None,
        "alpha_star": alpha_star,
        "error_bound": error_bound,
        "reps": manifest.reps,
        "seed": manifest.seed,
        "rep_seed_scheme": "SeedSequence(seed).spawn(reps + 1); child 0 simulates data, child r+1 drives repetition r",
        "workers": manifest.workers,
        "noiseless": manifest.noiseless,
        "force_window": manifest.force_window,
        "data": {
            "source": source,
            "n": dataset.n,
            "t_max": dataset.t_max,
            "dropped_rows": dropped,
            "sim_params": manifest.sim_params,
            "header": manifest.header,
            "threshold": manifest.threshold,
        },
        "queries": [q.to_dict() for q in queries],
        "unsupported_queries": sorted(set(unsupported)),
        "predicted_failure_rate": manifest.beta_target if manifest.mode == "window" else 0.0,
        "observed_failures": len(failures),
        "observed_failure_rate": len(failures) / manifest.reps,
        "wall_time_s": time.perf_counter() - started,
    }
    with open(out_dir / "metadata.json", "w") as handle:
        json.dump(metadata, handle, indent=2, sort_keys=True)
        handle.write("\n")

    return ExperimentResult(
        out_dir=out_dir,
        n=dataset.n,
        n_pad=n_pad if manifest.mode == "window" else None,
        error_bound=error_bound,
        truth=truth,
        outcomes=outcomes,
        summary_rows=summary_rows,
        unsupported=sorted(set(unsupported)),
    )


def _is_supported(manifest: RunManifest, q: QuerySpec) -> bool:
    if manifest.mode == "window":
        length = q.window_length
        return length is not None and length <= manifest.k
    return q.kind == "cumulative"
