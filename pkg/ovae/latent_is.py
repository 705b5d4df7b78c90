"""Importance sampling on the first latent coordinate.

The biased density is the defensive mixture

    q(z1) = alpha N(z1; 0, 1) + (1 - alpha) N(z1; mu_is, sigma_is^2)

with the remaining coordinates left standard normal, so weights depend on z1 alone
and never exceed 1/alpha.
"""
import logging
from dataclasses import dataclass
from typing import Callable, List, Optional, Tuple

import numpy as np
import pandas as pd
from scipy import stats
from scipy.special import logsumexp

from .adequacy import NetworkModel, evaluate_epns
from .config import IS_CONFIG
from .errors import ConfigError, ConvergenceError, DimensionMismatchError, NoShortfallError
from .parallel_runner import ParallelRunner

logger = logging.getLogger(__name__)


@dataclass
class ISConfig:
    alpha: float = IS_CONFIG['alpha']
    mu_is: float = 0.0
    sigma_is: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.alpha <= 1.0:
            raise ConfigError(f"alpha must lie in (0, 1], got {self.alpha}")
        if not self.sigma_is > 0:
            raise ConfigError(f"sigma_is must be positive, got {self.sigma_is}")

    def to_dict(self):
        return {'alpha': self.alpha, 'mu_is': self.mu_is, 'sigma_is': self.sigma_is}


def sample_latent(cfg: ISConfig, L: int, rng: np.random.Generator, size: Optional[int] = None) -> np.ndarray:
    """Latent codes with z1 from the mixture and the rest from N(0, 1)"""
    if L < 1:
        raise ConfigError("latent dimension must be at least 1")
    n = 1 if size is None else size
    z = rng.standard_normal((n, L))
    biased = rng.random(n) >= cfg.alpha
    z[biased, 0] = cfg.mu_is + cfg.sigma_is * rng.standard_normal(int(biased.sum()))
    return z[0] if size is None else z


def _log_ratio(cfg: ISConfig, z1) -> np.ndarray:
    """log N(z1; mu, sigma^2) - log N(z1; 0, 1)"""
    return stats.norm.logpdf(z1, cfg.mu_is, cfg.sigma_is) - stats.norm.logpdf(z1)


def is_weight(cfg: ISConfig, z1):
    """p(z1)/q(z1), written so the 1/alpha bound survives far-tail underflow"""
    ratio = np.exp(np.minimum(_log_ratio(cfg, z1), 700.0))
    return 1.0 / (cfg.alpha + (1.0 - cfg.alpha) * ratio)


def biased_density(cfg: ISConfig, z1):
    return cfg.alpha * stats.norm.pdf(z1) + (1.0 - cfg.alpha) * stats.norm.pdf(z1, cfg.mu_is, cfg.sigma_is)


@dataclass
class WeightedPilot:
    z1_values: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        self.z1_values = np.asarray(self.z1_values, dtype=np.float64).ravel()
        self.weights = np.asarray(self.weights, dtype=np.float64).ravel()
        if self.z1_values.shape != self.weights.shape:
            raise DimensionMismatchError("pilot lengths", self.z1_values.size, self.weights.size)
        if np.any(self.weights < 0):
            raise ConfigError("pilot weights must be nonnegative")

    @property
    def positive_fraction(self) -> float:
        return float(np.mean(self.weights > 0)) if self.weights.size else 0.0

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({'z1': self.z1_values, 'weight': self.weights})

    @classmethod
    def from_frame(cls, frame: pd.DataFrame) -> 'WeightedPilot':
        return cls(frame['z1'].to_numpy(), frame['weight'].to_numpy())


class MixtureEm:
    """Weighted EM for (mu_is, sigma_is) with N(0, 1) and alpha held fixed"""

    def __init__(self, alpha: float = None, max_iter: int = None, tol: float = None, sigma_floor: float = None):
        self.alpha = IS_CONFIG['alpha'] if alpha is None else alpha
        self.max_iter = IS_CONFIG['em_max_iter'] if max_iter is None else max_iter
        self.tol = IS_CONFIG['em_tol'] if tol is None else tol
        self.sigma_floor = IS_CONFIG['sigma_floor'] if sigma_floor is None else sigma_floor
        self.history: List[float] = []

    def log_likelihood(self, z: np.ndarray, w: np.ndarray, mu: float, sigma: float) -> float:
        return float(w @ logsumexp(self._log_components(z, mu, sigma), axis=0))

    def _log_components(self, z: np.ndarray, mu: float, sigma: float) -> np.ndarray:
        with np.errstate(divide='ignore'):
            return np.vstack([
                np.log(self.alpha) + stats.norm.logpdf(z),
                np.log1p(-self.alpha) + stats.norm.logpdf(z, mu, sigma)
            ])

    def fit(self, pilot: WeightedPilot, init: Optional[Tuple[float, float]] = None) -> ISConfig:
        z, w = pilot.z1_values, pilot.weights
        keep = w > 0
        if not keep.any():
            raise NoShortfallError()
        z, w = z[keep], w[keep]

        if init is None:
            mu = float(np.average(z, weights=w))
            sigma = float(np.sqrt(np.average((z - mu) ** 2, weights=w)))
        else:
            mu, sigma = init
        sigma = max(sigma, self.sigma_floor)

        if self.alpha >= 1.0:
            logger.warning("alpha=1 leaves the biased component without weight; returning the initial guess")
            return ISConfig(self.alpha, mu, sigma)

        self.history = [self.log_likelihood(z, w, mu, sigma)]
        for iteration in range(1, self.max_iter + 1):
            log_comp = self._log_components(z, mu, sigma)
            resp = np.exp(log_comp[1] - logsumexp(log_comp, axis=0)) * w
            mass = resp.sum()
            if mass <= 0:
                logger.warning("biased component lost all responsibility; stopping EM")
                break
            mu = float(resp @ z / mass)
            sigma = float(np.sqrt(resp @ (z - mu) ** 2 / mass))
            if sigma < self.sigma_floor:
                logger.warning(f"sigma_is hit the floor {self.sigma_floor} at iteration {iteration}")
                sigma = self.sigma_floor

            current = self.log_likelihood(z, w, mu, sigma)
            previous = self.history[-1]
            if current < previous - 1e-9 * max(1.0, abs(previous)):
                raise ConvergenceError(f"EM log-likelihood decreased at iteration {iteration}: "
                                       f"{previous:.12g} -> {current:.12g}")
            self.history.append(current)
            if abs(current - previous) <= self.tol * max(1.0, abs(previous)):
                break

        logger.info(f"EM finished after {len(self.history) - 1} iterations: mu_is={mu:.4f} sigma_is={sigma:.4f}")
        return ISConfig(self.alpha, mu, sigma)


def fit_em(pilot: WeightedPilot, alpha: float = None, init: Optional[Tuple[float, float]] = None,
           max_iter: int = None, tol: float = None) -> ISConfig:
    return MixtureEm(alpha, max_iter, tol).fit(pilot, init)


def shortfall_indicator(epns: np.ndarray) -> np.ndarray:
    return (np.asarray(epns) > 0).astype(np.float64)


def epns_weight(epns: np.ndarray) -> np.ndarray:
    """Magnitude-weighted alternative to the shortfall indicator"""
    return np.asarray(epns, dtype=np.float64)


def pilot_weights(z1_values: np.ndarray, demands: np.ndarray, network: NetworkModel,
                  rng: np.random.Generator, weight_fn: Callable[[np.ndarray], np.ndarray] = shortfall_indicator,
                  runner: Optional[ParallelRunner] = None) -> WeightedPilot:
    """Pair each demand state with one generation draw and weight it by its shortfall"""
    demands = np.atleast_2d(demands)
    if len(z1_values) != demands.shape[0]:
        raise DimensionMismatchError("pilot rows", len(z1_values), demands.shape[0])
    if runner is None:
        epns = evaluate_epns(demands, network, rng)
    else:
        seed = int(rng.integers(2 ** 32))
        epns = runner.map_chunks(lambda a, b, r: evaluate_epns(demands[a:b], network, r),
                                 demands.shape[0], seed, desc="Pilot dispatch")
    pilot = WeightedPilot(z1_values, weight_fn(epns))
    logger.info(f"Pilot: {pilot.positive_fraction:.4%} of {len(pilot.weights)} states carry weight")
    return pilot
