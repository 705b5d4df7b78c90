import logging
from dataclasses import asdict, dataclass

import numpy as np
from scipy import stats

from .adequacy import Metric
from .errors import DimensionMismatchError, OvaeError

logger = logging.getLogger(__name__)


@dataclass
class RiskEstimate:
    metric: Metric
    value: float
    std_error: float
    n_samples: int
    wall_time_s: float = 0.0

    def __post_init__(self):
        if self.n_samples < 1 or self.std_error < 0:
            raise OvaeError("RiskEstimate needs n_samples >= 1 and a nonnegative standard error")
        self.metric = Metric(self.metric)

    def to_dict(self):
        out = asdict(self)
        out['metric'] = self.metric.value
        return out


def mc_estimate(impacts: np.ndarray, metric: Metric = Metric.LOLE, wall_time_s: float = 0.0) -> RiskEstimate:
    impacts = np.asarray(impacts, dtype=np.float64).ravel()
    if impacts.size < 2:
        raise OvaeError("a Monte Carlo estimate needs at least two samples")
    std_error = float(impacts.std(ddof=1) / np.sqrt(impacts.size))
    return RiskEstimate(metric, float(impacts.mean()), std_error, impacts.size, wall_time_s)


def is_estimate(impacts: np.ndarray, weights: np.ndarray, metric: Metric = Metric.LOLE,
                wall_time_s: float = 0.0) -> RiskEstimate:
    impacts = np.asarray(impacts, dtype=np.float64).ravel()
    weights = np.asarray(weights, dtype=np.float64).ravel()
    if impacts.shape != weights.shape:
        raise DimensionMismatchError("impact/weight lengths", impacts.size, weights.size)
    if np.any(weights < 0):
        raise OvaeError("importance weights must be nonnegative")
    return mc_estimate(impacts * weights, metric, wall_time_s)


def speedup(est_a: RiskEstimate, est_b: RiskEstimate) -> float:
    """Efficiency of A relative to B: (r_A^2 t_B SE_B^2) / (r_B^2 t_A SE_A^2)"""
    for est in (est_a, est_b):
        if est.value <= 0 or est.std_error <= 0 or est.wall_time_s <= 0:
            raise OvaeError(f"speedup needs positive estimates, errors and times, got {est}")
    return (est_a.value ** 2 * est_b.wall_time_s * est_b.std_error ** 2) / \
        (est_b.value ** 2 * est_a.wall_time_s * est_a.std_error ** 2)


def spearman(x: np.ndarray, y: np.ndarray) -> float:
    x, y = np.asarray(x, dtype=np.float64).ravel(), np.asarray(y, dtype=np.float64).ravel()
    if x.size != y.size:
        raise DimensionMismatchError("spearman lengths", x.size, y.size)
    if x.size < 2:
        raise OvaeError("spearman needs at least two pairs")
    if np.ptp(x) == 0 or np.ptp(y) == 0:
        logger.warning("spearman on a constant vector is undefined")
        return float('nan')
    return float(stats.spearmanr(x, y).statistic)
