"""Synthetic option samples: seeded generation, price filter, scaling, CSV I/O.

A sample is one row (S, K, T, r, q, sigma, C) with C the exact Black-Scholes
call price. Scaling produces the two network views: the pricer view
[S/K, T, r, q, sigma] -> C/K - shift - 0.5, and the volatility view
[S/K, T, r, q, scaled price] -> N(log(S/K) / (sigma sqrt(T))).
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from . import bs

COLUMNS = ("S", "K", "T", "r", "q", "sigma", "C")

PRICE_MIN = 0.001
PRICE_MAX = 10.0

# Fixed generation chunk; per-chunk seeds make the result independent of how
# many chunks run (and of any future parallel execution).
_GEN_CHUNK = 1 << 16


class ConfigError(ValueError):
    """Invalid sampling ranges or run configuration."""


class CsvParseError(ValueError):
    """Malformed dataset or quote CSV; message carries the line number."""


@dataclass(frozen=True)
class SamplingRanges:
    S: tuple[float, float] = (50.0, 150.0)
    K: tuple[float, float] = (50.0, 150.0)
    T: tuple[float, float] = (0.05, 2.5)
    r: tuple[float, float] = (0.0, 0.05)
    q: tuple[float, float] = (0.0, 0.03)
    sigma: tuple[float, float] = (0.05, 0.8)

    def validate(self) -> None:
        for name in ("S", "K", "T", "r", "q", "sigma"):
            lo, hi = getattr(self, name)
            if not lo < hi:
                raise ConfigError(f"range for {name} must satisfy lower < upper")
        for name in ("S", "K", "T", "sigma"):
            if getattr(self, name)[0] <= 0.0:
                raise ConfigError(f"lower bound for {name} must be positive")

    def as_dict(self) -> dict[str, tuple[float, float]]:
        return {name: getattr(self, name) for name in ("S", "K", "T", "r", "q", "sigma")}


@dataclass
class Dataset:
    samples: np.ndarray                     # (n, 7) float64, columns as COLUMNS
    seed: int | None = None
    ranges: SamplingRanges | None = None
    filter_stats: dict | None = None

    def __len__(self) -> int:
        return self.samples.shape[0]

    def col(self, name: str) -> np.ndarray:
        return self.samples[:, COLUMNS.index(name)]


def generate(n: int, ranges: SamplingRanges | None = None, seed: int = 0) -> Dataset:
    """Draw n uniform parameter vectors, price them, keep the liquid band.

    A sample survives when PRICE_MIN <= C <= PRICE_MAX and additionally when
    the exact price is strictly increasing in maturity (dC/dT > 0): with a
    dividend yield the true call can lose value with maturity in an ITM
    corner, and such rows would make the calendar constraint unattainable.
    Deterministic per seed; chunked with per-chunk derived seeds.
    """
    if n < 1:
        raise ConfigError("sample count must be at least 1")
    ranges = ranges or SamplingRanges()
    ranges.validate()

    kept = []
    n_price = 0
    n_calendar = 0
    n_chunks = (n + _GEN_CHUNK - 1) // _GEN_CHUNK
    for i in range(n_chunks):
        size = min(_GEN_CHUNK, n - i * _GEN_CHUNK)
        rng = np.random.default_rng([seed, i])
        cols = [rng.uniform(lo, hi, size) for lo, hi in (
            ranges.S, ranges.K, ranges.T, ranges.r, ranges.q, ranges.sigma)]
        S, K, T, r, q, sigma = cols
        C = bs.bs_call(S, K, T, r, q, sigma)
        in_band = (C >= PRICE_MIN) & (C <= PRICE_MAX)
        dCdT = bs.bs_greeks(S, K, T, r, q, sigma)["dCdT"]
        ok = in_band & (dCdT > 0.0)
        n_price += int(np.sum(~in_band))
        n_calendar += int(np.sum(in_band & (dCdT <= 0.0)))
        kept.append(np.column_stack(cols + [C])[ok])

    samples = np.concatenate(kept) if kept else np.empty((0, 7))
    stats = {
        "requested": n,
        "kept": samples.shape[0],
        "dropped_price_band": n_price,
        "dropped_calendar": n_calendar,
    }
    return Dataset(samples, seed=seed, ranges=ranges, filter_stats=stats)


def split(ds: Dataset, fraction: float, seed: int = 0) -> tuple[Dataset, Dataset]:
    """Deterministic shuffled partition; |train| = round(fraction * n)."""
    if not 0.0 < fraction < 1.0:
        raise ConfigError("split fraction must be in (0, 1)")
    n = len(ds)
    n_train = int(round(fraction * n))
    perm = np.random.default_rng(seed).permutation(n)
    train = Dataset(ds.samples[perm[:n_train]], ds.seed, ds.ranges)
    test = Dataset(ds.samples[perm[n_train:]], ds.seed, ds.ranges)
    return train, test


@dataclass
class ScaledSplit:
    features: np.ndarray   # (n, 5)
    targets: np.ndarray    # (n,)
    strikes: np.ndarray    # (n,) original K, needed to unscale and to normalize penalties

    def __len__(self) -> int:
        return self.features.shape[0]


@dataclass
class DirectData:
    """Pricer-view dataset: features [m, T, r, q, sigma], target scaled price."""

    train: ScaledSplit
    test: ScaledSplit
    shift: float
    ranges: SamplingRanges | None = None
    seed: int | None = None

    def meta(self) -> dict:
        out = {"kind": "direct", "shift": self.shift}
        if self.ranges is not None:
            out["ranges"] = self.ranges.as_dict()
        return out


@dataclass
class InverseData:
    """Volatility-view dataset: features [m, T, r, q, c], target in (0, 1)."""

    train: ScaledSplit
    test: ScaledSplit
    shift: float
    eps_atm: float
    dropped_train: int = 0
    dropped_test: int = 0
    ranges: SamplingRanges | None = None
    seed: int | None = None

    def meta(self) -> dict:
        out = {"kind": "inverse", "shift": self.shift, "eps_atm": self.eps_atm}
        if self.ranges is not None:
            out["ranges"] = self.ranges.as_dict()
        return out


def _direct_features(samples: np.ndarray) -> np.ndarray:
    S, K, T, r, q, sigma = (samples[:, i] for i in range(6))
    return np.column_stack([S / K, T, r, q, sigma])


def scale_direct(train: Dataset, test: Dataset) -> DirectData:
    """Price scaling C -> C/K - shift - 0.5 with shift fixed on the train split."""
    if len(train) == 0:
        raise ConfigError("cannot scale an empty training split")
    shift = float(np.min(train.col("C") / train.col("K")))

    def make(ds: Dataset) -> ScaledSplit:
        c = ds.col("C") / ds.col("K") - shift - 0.5
        return ScaledSplit(_direct_features(ds.samples), c, ds.col("K").copy())

    return DirectData(make(train), make(test), shift, train.ranges, train.seed)


def unscale_direct(c, K, shift: float):
    """Back to price units: C = K * (c + shift + 0.5)."""
    return np.asarray(K, dtype=float) * (np.asarray(c, dtype=float) + shift + 0.5)


def scale_inverse(
    train: Dataset,
    test: Dataset,
    eps_atm: float = 1e-3,
    prices_train: np.ndarray | None = None,
    prices_test: np.ndarray | None = None,
) -> InverseData:
    """Volatility-view scaling with the near-ATM band dropped.

    The target N(log(m) / (sigma sqrt(T))) equals 0.5 for every sigma when
    m = 1, so rows with |log m| < eps_atm carry no volatility information and
    are removed (counts reported). Optional price overrides let the price
    feature come from a surrogate pricer instead of the exact model.
    """
    if len(train) == 0:
        raise ConfigError("cannot scale an empty training split")

    def keep_mask(ds: Dataset) -> np.ndarray:
        return np.abs(np.log(ds.col("S") / ds.col("K"))) >= eps_atm

    keep_tr = keep_mask(train)
    keep_te = keep_mask(test)
    c_tr = train.col("C") if prices_train is None else np.asarray(prices_train, dtype=float)
    c_te = test.col("C") if prices_test is None else np.asarray(prices_test, dtype=float)
    shift = float(np.min(c_tr[keep_tr] / train.col("K")[keep_tr]))

    def make(ds: Dataset, prices: np.ndarray, keep: np.ndarray) -> ScaledSplit:
        rows = ds.samples[keep]
        prices = prices[keep]
        S, K, T, sigma = rows[:, 0], rows[:, 1], rows[:, 2], rows[:, 5]
        m = S / K
        feats = np.column_stack([m, rows[:, 2], rows[:, 3], rows[:, 4],
                                 prices / K - shift - 0.5])
        y = bs.norm_cdf(np.log(m) / (sigma * np.sqrt(T)))
        return ScaledSplit(feats, y, K.copy())

    return InverseData(
        make(train, c_tr, keep_tr),
        make(test, c_te, keep_te),
        shift,
        eps_atm,
        int(np.sum(~keep_tr)),
        int(np.sum(~keep_te)),
        train.ranges,
        train.seed,
    )


def unscale_inverse(y, m, T):
    """Analytic inverse of the volatility scaling: sigma = log(m)/(N^{-1}(y) sqrt(T))."""
    return np.log(np.asarray(m, dtype=float)) / (
        bs.norm_cdf_inv(y) * np.sqrt(np.asarray(T, dtype=float))
    )


def save_csv(ds: Dataset, path) -> None:
    """Write samples at full precision with the fixed 7-column header."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(COLUMNS)
        for row in ds.samples:
            writer.writerow([repr(float(v)) for v in row])


def load_csv(path) -> Dataset:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise CsvParseError("line 1: empty file, expected header row") from None
        if tuple(header) != COLUMNS:
            missing = [c for c in COLUMNS if c not in header]
            if missing:
                raise CsvParseError(f"line 1: missing column(s) {', '.join(missing)}")
            raise CsvParseError(f"line 1: expected header {','.join(COLUMNS)}")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(COLUMNS):
                raise CsvParseError(
                    f"line {lineno}: expected {len(COLUMNS)} fields, got {len(row)}"
                )
            try:
                rows.append([float(v) for v in row])
            except ValueError as exc:
                raise CsvParseError(f"line {lineno}: {exc}") from None
    samples = np.array(rows) if rows else np.empty((0, 7))
    return Dataset(samples)
