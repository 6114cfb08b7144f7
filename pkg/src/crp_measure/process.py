"""Canonical compound renewal paths.

Interarrival times ``W_1, W_2, ...`` and claim sizes ``X_1, X_2, ...`` are
drawn as two independent i.i.d. sequences.  A path keeps every arrival up to
the horizon plus exactly one arrival past it, so ``t - T_{N_t}`` is known for
every ``t <= horizon``.

Two representations are provided: :class:`Path` for a single trajectory and
:class:`PathBatch`, a padded array form that the Monte Carlo estimators use.
"""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from . import distributions as dist
from .distributions import ParamDistribution

__all__ = [
    "MeasureSpec",
    "Path",
    "PathBatch",
    "ScriptedDraws",
    "sample_path",
    "sample_paths",
    "count_at",
    "aggregate_at",
    "surplus_at",
    "write_paths_csv",
]

CHUNK_SIZE = 8192


class HorizonError(ValueError):
    """Evaluation time outside ``[0, horizon]``."""


@dataclass(frozen=True)
class MeasureSpec:
    """Interarrival law plus claim-size law of a compound renewal process."""

    interarrival: ParamDistribution
    claim: ParamDistribution
    label: str = ""

    def __post_init__(self) -> None:
        for name in ("interarrival", "claim"):
            if not isinstance(getattr(self, name), ParamDistribution):
                raise TypeError(f"{name} must be a ParamDistribution")
        p = dist.mean(self.claim) / dist.mean(self.interarrival)
        if not (math.isfinite(p) and p > 0.0):
            raise ValueError(f"premium density of {self} is not finite and positive")

    @property
    def is_poisson(self) -> bool:
        return self.interarrival.is_exponential

    def __str__(self) -> str:
        tag = f"{self.label}: " if self.label else ""
        return f"{tag}W~{self.interarrival}, X~{self.claim}"


def _readonly(values) -> np.ndarray:
    arr = np.array(values, dtype=float)
    arr.setflags(write=False)
    return arr


def _check_time(t: float, horizon: float) -> float:
    t = float(t)
    if t < 0.0 or t > horizon:
        raise HorizonError(f"t={t} outside [0, {horizon}]")
    return t


@dataclass(frozen=True)
class Path:
    interarrivals: np.ndarray
    claims: np.ndarray
    horizon: float
    arrival_times: np.ndarray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        w = _readonly(self.interarrivals)
        x = _readonly(self.claims)
        horizon = float(self.horizon)
        if w.ndim != 1 or w.shape != x.shape or w.size == 0:
            raise ValueError("interarrivals and claims must be equal-length, non-empty 1-d")
        if np.any(w <= 0.0) or np.any(x <= 0.0):
            raise ValueError("interarrivals and claims must be positive")
        if not horizon > 0.0:
            raise ValueError("horizon must be positive")
        times = _readonly(np.cumsum(w))
        if not (times[-1] > horizon and (w.size == 1 or times[-2] <= horizon)):
            raise ValueError("path must end with exactly one arrival beyond the horizon")
        object.__setattr__(self, "interarrivals", w)
        object.__setattr__(self, "claims", x)
        object.__setattr__(self, "horizon", horizon)
        object.__setattr__(self, "arrival_times", times)

    def __len__(self) -> int:
        return self.interarrivals.size

    def count_at(self, t: float) -> int:
        t = _check_time(t, self.horizon)
        return int(np.searchsorted(self.arrival_times, t, side="right"))

    def last_arrival_at(self, t: float) -> float:
        n = self.count_at(t)
        return float(self.arrival_times[n - 1]) if n else 0.0

    def aggregate_at(self, t: float) -> float:
        n = self.count_at(t)
        return float(self.claims[:n].sum())

    def as_batch(self) -> "PathBatch":
        return PathBatch(
            interarrivals=self.interarrivals[None, :],
            claims=self.claims[None, :],
            lengths=np.array([len(self)]),
            horizon=self.horizon,
        )


class ScriptedDraws:
    """Deterministic replacement for a random generator in :func:`sample_path`.

    Interarrivals and claims are replayed in order, whatever the laws in the
    spec.  Claims default to 1.0 when not scripted.
    """

    def __init__(self, interarrivals: Iterable[float], claims: Iterable[float] | None = None):
        self._w = iter(list(interarrivals))
        self._x = iter(list(claims)) if claims is not None else None

    def next_interarrival(self) -> float:
        try:
            return float(next(self._w))
        except StopIteration:
            raise ValueError("scripted interarrivals exhausted before passing the horizon") from None

    def next_claim(self) -> float:
        if self._x is None:
            return 1.0
        try:
            return float(next(self._x))
        except StopIteration:
            raise ValueError("scripted claims exhausted") from None


def sample_path(spec: MeasureSpec, horizon: float, rng) -> Path:
    """Draw one path under ``spec`` until the first arrival past ``horizon``.

    ``rng`` is a :class:`numpy.random.Generator` or a :class:`ScriptedDraws`.
    All interarrivals are drawn before any claim, which keeps the two
    sequences independent.
    """
    if not horizon > 0.0:
        raise ValueError("horizon must be positive")
    scripted = isinstance(rng, ScriptedDraws)
    waits: list[float] = []
    total = 0.0
    while total <= horizon:
        w = rng.next_interarrival() if scripted else dist.sample(spec.interarrival, rng)
        waits.append(w)
        total += w
    if scripted:
        claims = [rng.next_claim() for _ in waits]
    else:
        claims = dist.sample(spec.claim, rng, size=len(waits))
    return Path(waits, claims, horizon)


@dataclass(frozen=True)
class PathBatch:
    """Many paths stored as padded ``(n_paths, width)`` arrays.

    Padding interarrivals are ``inf`` (so padded arrival times are ``inf``)
    and padding claims are 0.  ``lengths[i]`` counts the stored arrivals of
    path ``i`` including its overshoot arrival.
    """

    interarrivals: np.ndarray
    claims: np.ndarray
    lengths: np.ndarray
    horizon: float
    arrival_times: np.ndarray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        w = _readonly(self.interarrivals)
        x = _readonly(self.claims)
        lengths = np.asarray(self.lengths, dtype=np.int64)
        lengths.setflags(write=False)
        object.__setattr__(self, "interarrivals", w)
        object.__setattr__(self, "claims", x)
        object.__setattr__(self, "lengths", lengths)
        object.__setattr__(self, "horizon", float(self.horizon))
        object.__setattr__(self, "arrival_times", _readonly(np.cumsum(w, axis=1)))

    @property
    def n_paths(self) -> int:
        return self.interarrivals.shape[0]

    def __len__(self) -> int:
        return self.n_paths

    def path(self, i: int) -> Path:
        m = int(self.lengths[i])
        return Path(self.interarrivals[i, :m], self.claims[i, :m], self.horizon)

    def observed_mask(self, t: float) -> np.ndarray:
        """Boolean ``(n, width)``: arrival ``j`` happened by time ``t``."""
        t = _check_time(t, self.horizon)
        return self.arrival_times <= t

    def count_at(self, t: float) -> np.ndarray:
        return self.observed_mask(t).sum(axis=1)

    def aggregate_at(self, t: float) -> np.ndarray:
        return np.where(self.observed_mask(t), self.claims, 0.0).sum(axis=1)

    def last_arrival_at(self, t: float) -> np.ndarray:
        mask = self.observed_mask(t)
        return np.where(mask, self.arrival_times, 0.0).max(axis=1, initial=0.0)

    def first_claim(self) -> np.ndarray:
        return self.claims[:, 0].copy()

    def subset(self, index) -> "PathBatch":
        lengths = self.lengths[index]
        width = int(lengths.max()) if lengths.size else 1
        return PathBatch(
            self.interarrivals[index, :width], self.claims[index, :width], lengths, self.horizon
        )

    @classmethod
    def from_paths(cls, paths: Sequence[Path]) -> "PathBatch":
        if not paths:
            raise ValueError("no paths")
        horizon = paths[0].horizon
        if any(p.horizon != horizon for p in paths):
            raise ValueError("paths must share a horizon")
        width = max(len(p) for p in paths)
        w = np.full((len(paths), width), np.inf)
        x = np.zeros((len(paths), width))
        for i, p in enumerate(paths):
            w[i, : len(p)] = p.interarrivals
            x[i, : len(p)] = p.claims
        return cls(w, x, [len(p) for p in paths], horizon)

    @classmethod
    def concatenate(cls, batches: Sequence["PathBatch"]) -> "PathBatch":
        width = max(b.interarrivals.shape[1] for b in batches)
        horizon = batches[0].horizon

        def pad(a, fill):
            out = np.full((a.shape[0], width), fill)
            out[:, : a.shape[1]] = a
            return out

        return cls(
            np.vstack([pad(b.interarrivals, np.inf) for b in batches]),
            np.vstack([pad(b.claims, 0.0) for b in batches]),
            np.concatenate([b.lengths for b in batches]),
            horizon,
        )


def _sample_chunk(spec: MeasureSpec, horizon: float, n: int, seq: np.random.SeedSequence) -> PathBatch:
    w_seq, x_seq = seq.spawn(2)
    w_rng = np.random.default_rng(w_seq)
    x_rng = np.random.default_rng(x_seq)
    block = max(4, int(math.ceil(1.5 * horizon / dist.mean(spec.interarrival))) + 4)
    waits = dist.sample(spec.interarrival, w_rng, size=(n, block))
    while np.any(waits.sum(axis=1) <= horizon):
        waits = np.hstack([waits, dist.sample(spec.interarrival, w_rng, size=(n, block))])
    times = np.cumsum(waits, axis=1)
    lengths = (times <= horizon).sum(axis=1) + 1
    width = int(lengths.max())
    waits = waits[:, :width]
    keep = np.arange(width)[None, :] < lengths[:, None]
    waits = np.where(keep, waits, np.inf)
    claims = dist.sample(spec.claim, x_rng, size=(n, width))
    claims = np.where(keep, claims, 0.0)
    return PathBatch(waits, claims, lengths, horizon)


def sample_paths(
    spec: MeasureSpec,
    horizon: float,
    n_paths: int,
    seed: int,
    *,
    workers: int = 1,
) -> PathBatch:
    """Simulate ``n_paths`` independent paths.

    Paths are generated in fixed-size chunks, each from its own child of
    ``SeedSequence(seed)``, so the result depends only on
    ``(spec, horizon, n_paths, seed)`` and not on ``workers``.
    """
    if not horizon > 0.0:
        raise ValueError("horizon must be positive")
    if n_paths < 1:
        raise ValueError("n_paths must be >= 1")
    n_chunks = -(-n_paths // CHUNK_SIZE)
    seqs = np.random.SeedSequence(seed).spawn(n_chunks)
    sizes = [min(CHUNK_SIZE, n_paths - i * CHUNK_SIZE) for i in range(n_chunks)]
    jobs = list(zip(sizes, seqs))
    if workers > 1 and n_chunks > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(lambda job: _sample_chunk(spec, horizon, *job), jobs))
    else:
        chunks = [_sample_chunk(spec, horizon, n, s) for n, s in jobs]
    return chunks[0] if len(chunks) == 1 else PathBatch.concatenate(chunks)


def count_at(path, t: float):
    """N_t, the number of arrivals in ``[0, t]`` (arrival instants included)."""
    return path.count_at(t)


def aggregate_at(path, t: float):
    """S_t, the sum of the claims that arrived by ``t``."""
    return path.aggregate_at(t)


def surplus_at(path, t: float, premium_rate: float):
    """S_t - t * premium_rate."""
    if not premium_rate > 0.0:
        raise ValueError("premium_rate must be positive")
    return path.aggregate_at(t) - float(t) * premium_rate


def write_paths_csv(batch: PathBatch, out=None, *, start_id: int = 0) -> str | None:
    """Write ``path_id, n, W_n, T_n, X_n`` rows; returns the text if ``out`` is None."""
    buf = io.StringIO() if out is None else out
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["path_id", "n", "W_n", "T_n", "X_n"])
    for i in range(batch.n_paths):
        for j in range(int(batch.lengths[i])):
            writer.writerow(
                [
                    start_id + i,
                    j + 1,
                    repr(float(batch.interarrivals[i, j])),
                    repr(float(batch.arrival_times[i, j])),
                    repr(float(batch.claims[i, j])),
                ]
            )
    return buf.getvalue() if out is None else None
