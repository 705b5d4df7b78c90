import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from sklearn.preprocessing import MinMaxScaler

from .config import SPLIT_CONFIG, SYNTH_CONFIG
from .errors import ConfigError, DataFormatError, DimensionMismatchError

logger = logging.getLogger(__name__)

TRAIN = 'train'
TEST = 'test'


@dataclass
class SynthConfig:
    n_areas: int = SYNTH_CONFIG['n_areas']
    hours: int = SYNTH_CONFIG['hours']
    seed: int = SYNTH_CONFIG['seed']
    base_load: Sequence[float] = SYNTH_CONFIG['base_load']
    seasonal_amplitude: float = SYNTH_CONFIG['seasonal_amplitude']
    diurnal_amplitude: float = SYNTH_CONFIG['diurnal_amplitude']
    correlation: float = SYNTH_CONFIG['correlation']
    noise_scale: float = SYNTH_CONFIG['noise_scale']
    start: str = SYNTH_CONFIG['start']

    def __post_init__(self):
        self.base_load = tuple(float(b) for b in self.base_load)
        if len(self.base_load) != self.n_areas:
            raise ConfigError(f"base_load has {len(self.base_load)} entries for {self.n_areas} areas")
        if min(self.base_load) <= 0:
            raise ConfigError("base_load must be strictly positive")
        if self.seasonal_amplitude < 0 or self.diurnal_amplitude < 0:
            raise ConfigError("amplitudes must be nonnegative")
        if self.seasonal_amplitude + self.diurnal_amplitude >= 1.0:
            raise ConfigError("seasonal + diurnal amplitude must stay below 1 to keep loads positive")
        if not 0.0 <= self.correlation <= 1.0:
            raise ConfigError(f"correlation must lie in [0, 1], got {self.correlation}")
        if self.hours < 1 or self.noise_scale < 0:
            raise ConfigError("hours must be positive and noise_scale nonnegative")


@dataclass
class DemandDataset:
    """Hourly demand per area (MW) with an optional train/test tag per row"""
    frame: pd.DataFrame
    split: Optional[pd.Series] = field(default=None)

    def __post_init__(self):
        if self.frame.isnull().values.any():
            raise DataFormatError("dataset contains missing entries")
        if (self.frame.values < 0).any():
            raise DataFormatError("dataset contains negative demand")

    @property
    def areas(self) -> list:
        return list(self.frame.columns)

    @property
    def timestamps(self) -> pd.DatetimeIndex:
        return self.frame.index

    @property
    def values(self) -> np.ndarray:
        return self.frame.to_numpy(dtype=np.float64)

    def rows(self, tag: str) -> np.ndarray:
        if self.split is None:
            raise ConfigError("dataset has not been split into train/test yet")
        return self.frame.to_numpy(dtype=np.float64)[(self.split == tag).to_numpy()]

    @property
    def train_values(self) -> np.ndarray:
        return self.rows(TRAIN)

    @property
    def test_values(self) -> np.ndarray:
        return self.rows(TEST)


class SyntheticDemandGenerator:
    """Seasonal + diurnal load shapes times a one-factor correlated noise term"""

    def __init__(self, cfg: SynthConfig):
        self.cfg = cfg

    def profile(self) -> np.ndarray:
        t = np.arange(self.cfg.hours, dtype=np.float64)
        seasonal = self.cfg.seasonal_amplitude * np.cos(2.0 * np.pi * t / 8760.0)
        diurnal = self.cfg.diurnal_amplitude * np.sin(2.0 * np.pi * (t - 6.0) / 24.0)
        return 1.0 + seasonal + diurnal

    def noise(self) -> np.ndarray:
        """Unit-variance factors with pairwise correlation ``cfg.correlation``"""
        rng = np.random.default_rng(self.cfg.seed)
        common = rng.standard_normal((self.cfg.hours, 1))
        idiosyncratic = rng.standard_normal((self.cfg.hours, self.cfg.n_areas))
        rho = self.cfg.correlation
        return np.sqrt(rho) * common + np.sqrt(1.0 - rho) * idiosyncratic

    def generate(self) -> DemandDataset:
        base = np.asarray(self.cfg.base_load)
        demand = base * self.profile()[:, None] * (1.0 + self.cfg.noise_scale * self.noise())
        demand = np.maximum(demand, 0.01 * base)

        index = pd.date_range(self.cfg.start, periods=self.cfg.hours, freq='h', name='timestamp')
        columns = [f'area_{i}' for i in range(self.cfg.n_areas)]
        logger.info(f"Generated synthetic demand: {self.cfg.hours} hours x {self.cfg.n_areas} areas")
        return DemandDataset(pd.DataFrame(demand, index=index, columns=columns))


def generate_synthetic(cfg: SynthConfig) -> DemandDataset:
    return SyntheticDemandGenerator(cfg).generate()


def load_csv(path) -> DemandDataset:
    """Read ``timestamp,<area>,<area>,...`` hourly rows"""
    path = Path(path)
    try:
        raw = pd.read_csv(path, dtype=str, keep_default_na=False)
    except pd.errors.ParserError as e:
        raise DataFormatError(f"ragged rows in {path.name}: {e}")
    except pd.errors.EmptyDataError:
        raise DataFormatError(f"{path.name} is empty")

    if raw.shape[1] < 2 or raw.columns[0] != 'timestamp':
        raise DataFormatError("header must be 'timestamp' followed by area columns", row=0)

    cells = raw.iloc[:, 1:]
    ragged = cells.isna().to_numpy()
    stripped = cells.apply(lambda col: col.str.strip())
    blank = (stripped == '').to_numpy()
    numeric = stripped.apply(pd.to_numeric, errors='coerce')
    bad = np.argwhere(ragged | blank | numeric.isna().to_numpy())
    if bad.size:
        i, j = (int(k) for k in bad[0])
        column = cells.columns[j]
        if ragged[i, j]:
            raise DataFormatError("ragged row (too few fields)", row=i + 1, column=column)
        if blank[i, j]:
            raise DataFormatError("missing value", row=i + 1, column=column)
        raise DataFormatError(f"non-numeric cell '{cells.iat[i, j]}'", row=i + 1, column=column)
    values = numeric.to_numpy(dtype=np.float64)

    try:
        timestamps = pd.to_datetime(raw['timestamp'])
    except (ValueError, TypeError) as e:
        raise DataFormatError(f"unparseable timestamp: {e}", column='timestamp')
    steps = np.diff(timestamps.values.astype('datetime64[ns]').astype(np.int64))
    if (steps <= 0).any():
        bad = int(np.argmax(steps <= 0)) + 2
        raise DataFormatError("timestamps are not strictly increasing", row=bad, column='timestamp')

    frame = pd.DataFrame(values, index=pd.DatetimeIndex(timestamps, name='timestamp'),
                         columns=list(raw.columns[1:]))
    logger.info(f"Loaded {frame.shape[0]} rows x {frame.shape[1]} areas from {path}")
    return DemandDataset(frame)


def write_csv(dataset: DemandDataset, path):
    out = dataset.frame.copy()
    out.index = out.index.strftime('%Y-%m-%d %H:%M:%S')
    out.to_csv(path, index_label='timestamp', float_format='%.17g')


def held_out_week_count(n_rows: int, ratio: Tuple[int, int] = None) -> int:
    """Number of held-out weeks for ``n_rows`` hours; at least one, and at least one train week"""
    train_parts, test_parts = ratio or (SPLIT_CONFIG['train_blocks'], SPLIT_CONFIG['test_blocks'])
    block = SPLIT_CONFIG['block_hours']
    n_blocks = n_rows // block
    if n_blocks < 2:
        raise ConfigError(f"weekly split needs at least two full weeks ({2 * block} hours), got {n_rows} rows")
    n_test = int(round(n_blocks * test_parts / (train_parts + test_parts)))
    return min(max(n_test, 1), n_blocks - 1)


def split_weekly(dataset: DemandDataset, ratio: Tuple[int, int] = None, seed: int = 0) -> DemandDataset:
    """Tag contiguous one-week blocks train/test at ``ratio``; the trailing partial week is train"""
    block = SPLIT_CONFIG['block_hours']
    n_rows = len(dataset.frame)
    n_blocks = n_rows // block
    n_test = held_out_week_count(n_rows, ratio)

    rng = np.random.default_rng(seed)
    test_blocks = np.sort(rng.permutation(n_blocks)[:n_test])

    tags = np.full(n_rows, TRAIN, dtype=object)
    for b in test_blocks:
        tags[b * block:(b + 1) * block] = TEST

    logger.info(f"Split {n_blocks} full weeks: {n_blocks - n_test} train, {n_test} test blocks")
    return DemandDataset(dataset.frame, pd.Series(tags, index=dataset.frame.index, name='split'))


def held_out_blocks(dataset: DemandDataset) -> list:
    block = SPLIT_CONFIG['block_hours']
    tags = dataset.split.to_numpy()
    return sorted({i // block for i in np.flatnonzero(tags == TEST)})


def apply_test_blocks(dataset: DemandDataset, test_blocks: Sequence[int]) -> DemandDataset:
    block = SPLIT_CONFIG['block_hours']
    tags = np.full(len(dataset.frame), TRAIN, dtype=object)
    for b in test_blocks:
        tags[b * block:(b + 1) * block] = TEST
    return DemandDataset(dataset.frame, pd.Series(tags, index=dataset.frame.index, name='split'))


class Normalizer:
    """Min-max scaling to [0, 1] fitted on training rows only"""

    def __init__(self, data_min: np.ndarray, data_max: np.ndarray):
        self.data_min = np.asarray(data_min, dtype=np.float64)
        self.data_max = np.asarray(data_max, dtype=np.float64)
        if self.data_min.shape != self.data_max.shape:
            raise DimensionMismatchError("normalizer bounds", self.data_min.shape, self.data_max.shape)
        if (self.data_max < self.data_min).any():
            raise ConfigError("normalizer max must not be below min")
        self.zero_range = self.data_max == self.data_min
        self._scaler = MinMaxScaler(feature_range=(0.0, 1.0))
        self._scaler.fit(np.vstack([self.data_min, self.data_max]))

    @classmethod
    def fit(cls, train_values: np.ndarray) -> 'Normalizer':
        train_values = np.asarray(train_values, dtype=np.float64)
        normalizer = cls(train_values.min(axis=0), train_values.max(axis=0))
        if normalizer.zero_range.any():
            logger.warning(f"Constant columns mapped to 0: {np.flatnonzero(normalizer.zero_range).tolist()}")
        return normalizer

    @property
    def dim(self) -> int:
        return self.data_min.shape[0]

    def normalize(self, values: np.ndarray) -> np.ndarray:
        values = np.asarray(values, dtype=np.float64)
        single = values.ndim == 1
        out = self._scaler.transform(np.atleast_2d(values))
        return out[0] if single else out

    def denormalize(self, scaled: np.ndarray, clamp: bool = False) -> np.ndarray:
        scaled = np.asarray(scaled, dtype=np.float64)
        single = scaled.ndim == 1
        out = self._scaler.inverse_transform(np.atleast_2d(scaled))
        if clamp:
            out = np.clip(out, self.data_min, self.data_max)
        return out[0] if single else out

    def to_dict(self) -> Dict:
        return {
            'min': self.data_min.tolist(),
            'max': self.data_max.tolist(),
            'zero_range': self.zero_range.tolist()
        }

    @classmethod
    def from_dict(cls, data: Dict) -> 'Normalizer':
        return cls(np.array(data['min']), np.array(data['max']))


def normalize(values: np.ndarray, normalizer: Normalizer) -> np.ndarray:
    return normalizer.normalize(values)


def denormalize(scaled: np.ndarray, normalizer: Normalizer) -> np.ndarray:
    return normalizer.denormalize(scaled)
