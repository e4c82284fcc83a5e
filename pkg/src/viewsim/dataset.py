"""Log-level impression data: record type, synthetic generator, CSV IO, splits.

Records are held column-wise in :class:`LldTable`, which behaves as a
read-only sequence of :class:`ImpressionRecord`.
"""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np

from .core import sigmoid
from .csvio import parse_bool01, parse_int, read_rows, write_rows

LLD_HEADER = (
    "timestamp",
    "hour_of_day",
    "device_type",
    "domain_id",
    "position",
    "cost_micros",
    "viewed",
    "clicked",
)

N_DEVICES = 4
N_POSITIONS = 3
N_DOMAIN_BUCKETS = 8
# device one-hot (4) | position one-hot (3) | hour sin, cos (2) | domain bucket one-hot (8) | bias
N_FEATURES = N_DEVICES + N_POSITIONS + 2 + N_DOMAIN_BUCKETS + 1
FEATURE_NAMES = (
    [f"device_{i}" for i in range(N_DEVICES)]
    + [f"position_{i}" for i in range(N_POSITIONS)]
    + ["hour_sin", "hour_cos"]
    + [f"domain_bucket_{i}" for i in range(N_DOMAIN_BUCKETS)]
    + ["bias"]
)

EPOCH_START = 1_609_459_200  # 2021-01-01T00:00:00Z


@dataclass(frozen=True)
class ImpressionRecord:
    timestamp: int
    hour_of_day: int
    device_type: int
    domain_id: int
    position: int
    cost_micros: int
    viewed: bool
    clicked: bool

    def __post_init__(self):
        if self.cost_micros < 0:
            raise ValueError(f"cost_micros must be >= 0, got {self.cost_micros}")
        if self.hour_of_day != (self.timestamp // 3600) % 24:
            raise ValueError(f"hour_of_day {self.hour_of_day} inconsistent with timestamp {self.timestamp}")
        if not 0 <= self.device_type < N_DEVICES:
            raise ValueError(f"device_type {self.device_type} outside 0..{N_DEVICES - 1}")
        if not 0 <= self.position < N_POSITIONS:
            raise ValueError(f"position {self.position} outside 0..{N_POSITIONS - 1}")
        if self.domain_id < 0:
            raise ValueError(f"domain_id must be >= 0, got {self.domain_id}")


def domain_bucket(domain_id):
    """Knuth multiplicative hash of the domain id into one of 8 buckets."""
    d = np.asarray(domain_id, dtype=np.uint64)
    return ((d * np.uint64(2654435761)) % np.uint64(2**32)) >> np.uint64(29)


class LldTable(Sequence):
    """Column store of impression records."""

    _COLUMNS = ("timestamp", "hour_of_day", "device_type", "domain_id", "position", "cost_micros", "viewed", "clicked")

    def __init__(self, timestamp, hour_of_day, device_type, domain_id, position, cost_micros, viewed, clicked):
        self.timestamp = np.asarray(timestamp, dtype=np.int64)
        self.hour_of_day = np.asarray(hour_of_day, dtype=np.int64)
        self.device_type = np.asarray(device_type, dtype=np.int64)
        self.domain_id = np.asarray(domain_id, dtype=np.int64)
        self.position = np.asarray(position, dtype=np.int64)
        self.cost_micros = np.asarray(cost_micros, dtype=np.int64)
        self.viewed = np.asarray(viewed, dtype=bool)
        self.clicked = np.asarray(clicked, dtype=bool)
        n = self.timestamp.shape[0]
        for name in self._COLUMNS:
            col = getattr(self, name)
            if col.shape != (n,):
                raise ValueError(f"column {name} has shape {col.shape}, expected ({n},)")
        if n and self.cost_micros.min() < 0:
            raise ValueError("cost_micros must be >= 0")
        self._features = None

    @classmethod
    def from_records(cls, records) -> "LldTable":
        records = list(records)
        cols = {name: [getattr(r, name) for r in records] for name in cls._COLUMNS}
        return cls(**cols)

    @classmethod
    def empty(cls) -> "LldTable":
        return cls(*([[]] * len(cls._COLUMNS)))

    def __len__(self):
        return int(self.timestamp.shape[0])

    def __getitem__(self, idx):
        if isinstance(idx, (int, np.integer)):
            return ImpressionRecord(
                int(self.timestamp[idx]),
                int(self.hour_of_day[idx]),
                int(self.device_type[idx]),
                int(self.domain_id[idx]),
                int(self.position[idx]),
                int(self.cost_micros[idx]),
                bool(self.viewed[idx]),
                bool(self.clicked[idx]),
            )
        return self.take(idx)

    def take(self, idx) -> "LldTable":
        return LldTable(*(getattr(self, name)[idx] for name in self._COLUMNS))

    def __eq__(self, other):
        if isinstance(other, LldTable):
            return len(self) == len(other) and all(
                np.array_equal(getattr(self, n), getattr(other, n)) for n in self._COLUMNS
            )
        if isinstance(other, Sequence):
            return len(self) == len(other) and all(a == b for a, b in zip(self, other))
        return NotImplemented

    __hash__ = None

    def __repr__(self):
        return f"LldTable(n={len(self)})"

    def row_matrix(self) -> np.ndarray:
        """All columns stacked as an (n, 8) int64 matrix, in header order."""
        return np.column_stack([getattr(self, n).astype(np.int64) for n in self._COLUMNS])

    def features(self) -> np.ndarray:
        """Fixed 18-column encoding used by every model (cached)."""
        if self._features is None:
            self._features = encode_features(self)
        return self._features

    def view_rate(self) -> float:
        return float(self.viewed.mean()) if len(self) else float("nan")


def encode_features(table: LldTable) -> np.ndarray:
    n = len(table)
    x = np.zeros((n, N_FEATURES))
    rows = np.arange(n)
    x[rows, table.device_type] = 1.0
    x[rows, N_DEVICES + table.position] = 1.0
    angle = 2.0 * np.pi * table.hour_of_day / 24.0
    x[:, N_DEVICES + N_POSITIONS] = np.sin(angle)
    x[:, N_DEVICES + N_POSITIONS + 1] = np.cos(angle)
    x[rows, N_DEVICES + N_POSITIONS + 2 + domain_bucket(table.domain_id).astype(np.int64)] = 1.0
    x[:, -1] = 1.0
    return x


def _default_view_weights():
    w = np.zeros(N_FEATURES)
    w[:N_DEVICES] = [0.4, -0.1, 0.2, -0.5]  # desktop, mobile, tablet, ctv
    w[N_DEVICES:N_DEVICES + N_POSITIONS] = [1.3, 0.0, -1.3]  # above / mid / below fold
    w[N_DEVICES + N_POSITIONS:N_DEVICES + N_POSITIONS + 2] = [0.25, -0.15]
    w[N_DEVICES + N_POSITIONS + 2:-1] = [1.4, 0.9, 0.5, 0.1, -0.2, -0.6, -1.0, -1.5]
    w[-1] = 0.1
    return tuple(float(v) for v in w)


@dataclass(frozen=True)
class GeneratorConfig:
    """Knobs of the synthetic LLD generator.

    ``true_view_weights`` is the ground-truth weight vector over the 18-column
    feature encoding (its last entry is the bias).  ``cost_view_coupling``
    makes more viewable inventory more expensive.
    """

    n_records: int = 200_000
    seed: int = 7
    true_view_weights: tuple = field(default_factory=_default_view_weights)
    cost_base_micros: int = 2000
    cost_view_coupling: float = 1.0
    cost_lognormal_sigma: float = 0.5
    duration_days: int = 28
    n_domains: int = 400
    click_rate_viewed: float = 0.01
    click_rate_unviewed: float = 0.002

    def __post_init__(self):
        if self.n_records <= 0:
            raise ValueError("n_records must be positive")
        if not self.cost_lognormal_sigma > 0:
            raise ValueError("cost_lognormal_sigma must be > 0")
        if self.cost_base_micros <= 0:
            raise ValueError("cost_base_micros must be positive")
        if self.cost_view_coupling < 0:
            raise ValueError("cost_view_coupling must be >= 0")
        if self.duration_days <= 0:
            raise ValueError("duration_days must be positive")
        if len(self.true_view_weights) != N_FEATURES:
            raise ValueError(f"true_view_weights needs {N_FEATURES} entries, got {len(self.true_view_weights)}")
        object.__setattr__(self, "true_view_weights", tuple(float(v) for v in self.true_view_weights))


_DEVICE_P = np.array([0.45, 0.35, 0.12, 0.08])
_POSITION_P = np.array([0.35, 0.35, 0.30])
_HOUR_P = np.array([1, 1, 1, 1, 1, 2, 3, 4, 5, 5, 5, 5, 5, 5, 5, 5, 5, 6, 6, 6, 5, 4, 3, 2], dtype=float)
_HOUR_P /= _HOUR_P.sum()


def generate_lld(config: GeneratorConfig, return_latent: bool = False):
    """Draw a synthetic impression log sorted by timestamp.

    With ``return_latent=True`` also returns the ground-truth view
    probability of every record (aligned with the returned table).
    """
    rng = np.random.default_rng(config.seed)
    n = config.n_records
    day = rng.integers(0, config.duration_days, n)
    hour = rng.choice(24, size=n, p=_HOUR_P)
    second = rng.integers(0, 3600, n)
    timestamp = EPOCH_START + day * 86400 + hour * 3600 + second
    device = rng.choice(N_DEVICES, size=n, p=_DEVICE_P)
    position = rng.choice(N_POSITIONS, size=n, p=_POSITION_P)
    ranks = np.arange(1, config.n_domains + 1, dtype=float)
    domain_p = ranks ** -0.8
    domain_p /= domain_p.sum()
    domain = rng.choice(config.n_domains, size=n, p=domain_p)

    order = np.argsort(timestamp, kind="stable")
    timestamp, hour, device, position, domain = (a[order] for a in (timestamp, hour, device, position, domain))

    table = LldTable(timestamp, hour, device, domain, position, np.zeros(n, dtype=np.int64),
                     np.zeros(n, dtype=bool), np.zeros(n, dtype=bool))
    p_view = sigmoid(table.features() @ np.asarray(config.true_view_weights))
    viewed = rng.random(n) < p_view
    log_cost = rng.normal(config.cost_view_coupling * p_view, config.cost_lognormal_sigma)
    cost = np.rint(config.cost_base_micros * np.exp(log_cost)).astype(np.int64)
    click_p = np.where(viewed, config.click_rate_viewed, config.click_rate_unviewed)
    clicked = rng.random(n) < click_p

    table.cost_micros = cost
    table.viewed = viewed
    table.clicked = clicked
    if return_latent:
        return table, p_view
    return table


def write_lld(records, path) -> None:
    table = records if isinstance(records, LldTable) else LldTable.from_records(records)
    rows = table.row_matrix()
    write_rows(path, LLD_HEADER, rows.tolist())


def read_lld(path) -> LldTable:
    rows = read_rows(path, LLD_HEADER, [parse_int] * 6 + [parse_bool01] * 2)
    if not rows:
        return LldTable.empty()
    cols = list(zip(*rows))
    table = LldTable(*cols)
    bad = np.nonzero(table.hour_of_day != (table.timestamp // 3600) % 24)[0]
    if bad.size:
        raise ValueError(f"line {int(bad[0]) + 2}: hour_of_day inconsistent with timestamp")
    return table


def split_train_eval(records, fraction: float = 0.5):
    """Chronological split; the first ``fraction`` of records (by time) trains."""
    table = records if isinstance(records, LldTable) else LldTable.from_records(records)
    n = len(table)
    if n < 2:
        raise ValueError(f"need at least 2 records to split, got {n}")
    if not 0.0 < fraction < 1.0:
        raise ValueError(f"fraction must lie in (0, 1), got {fraction}")
    order = np.argsort(table.timestamp, kind="stable")
    cut = min(max(int(round(n * fraction)), 1), n - 1)
    return table.take(order[:cut]), table.take(order[cut:])


def sample_auction_stream(eval_records, n: int, seed) -> LldTable:
    """Uniform sample of ``n`` rows; with replacement only when ``n`` exceeds the pool."""
    table = eval_records if isinstance(eval_records, LldTable) else LldTable.from_records(eval_records)
    if len(table) == 0:
        raise ValueError("cannot sample from an empty evaluation set")
    if n <= 0:
        raise ValueError(f"n must be positive, got {n}")
    rng = np.random.default_rng(seed)
    idx = rng.choice(len(table), size=n, replace=n > len(table))
    return table.take(idx)


def winners_only(records, bids) -> LldTable:
    """Keep rows whose bid (micros) would have won; mimics won-only DSP logs."""
    table = records if isinstance(records, LldTable) else LldTable.from_records(records)
    bids = np.asarray(bids)
    return table.take(np.nonzero(bids >= table.cost_micros)[0])


def tables_overlap(a: LldTable, b: LldTable) -> bool:
    """True when some full row appears in both tables."""
    if len(a) == 0 or len(b) == 0:
        return False
    ra = np.ascontiguousarray(a.row_matrix())
    rb = np.ascontiguousarray(b.row_matrix())
    dt = np.dtype((np.void, ra.dtype.itemsize * ra.shape[1]))
    return np.intersect1d(ra.view(dt).ravel(), rb.view(dt).ravel()).size > 0
