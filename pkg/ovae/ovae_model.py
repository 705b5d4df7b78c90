"""Oriented variational autoencoder.

The encoder maps a min-max normalized state x to (mu, log sigma^2) of a latent code
of size L; the decoder maps a code back to (mu', log sigma'^2). The orientation term
ties the first latent coordinate to a feature f(x) through a frozen decoder
mu'_f(z1) = F^-1(Phi(z1)), where F is the empirical CDF of the labeled feature values.
All three losses are batch means.
"""
import json
import logging
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy import stats
from tqdm import tqdm

from .adequacy import FeatureKind
from .config import OVAE_CONFIG
from .data_processor import Normalizer
from .errors import (ConfigError, DimensionMismatchError, NonFiniteError, OvaeError,
                     UntrainedModelError)
from .nn_core import AdamState, Mlp, adam_step

logger = logging.getLogger(__name__)


class EmpiricalCdf:
    """Empirical distribution of the labeled feature values.

    Quantiles interpolate linearly between order statistics placed at plotting
    positions (k - 0.5)/n and are clamped to [min, max].
    """

    def __init__(self, values: Sequence[float]):
        values = np.sort(np.asarray(values, dtype=np.float64).ravel())
        if values.size == 0:
            raise OvaeError("EmpiricalCdf needs at least one value")
        if not np.all(np.isfinite(values)):
            raise NonFiniteError("EmpiricalCdf values must be finite")
        self.sorted_values = values
        n = values.size
        self._positions = (np.arange(1, n + 1) - 0.5) / n

    def __len__(self):
        return self.sorted_values.size

    def quantile(self, p):
        return np.interp(p, self._positions, self.sorted_values)

    def quantile_slope(self, p) -> np.ndarray:
        """dF^-1/dp; zero on the clamped tails"""
        p = np.atleast_1d(np.asarray(p, dtype=np.float64))
        n = self.sorted_values.size
        if n == 1:
            return np.zeros_like(p)
        seg = np.clip(np.searchsorted(self._positions, p, side='right') - 1, 0, n - 2)
        slopes = np.diff(self.sorted_values) * n
        inside = (p >= self._positions[0]) & (p < self._positions[-1])
        return np.where(inside, slopes[seg], 0.0)


def orientation_target(cdf: EmpiricalCdf, z1):
    """F^-1(Phi(z1)), nondecreasing in z1"""
    return cdf.quantile(stats.norm.cdf(z1))


def _orientation_target_slope(cdf: EmpiricalCdf, z1: np.ndarray) -> np.ndarray:
    return cdf.quantile_slope(stats.norm.cdf(z1)) * stats.norm.pdf(z1)


def reparameterize(mu: np.ndarray, sigma: np.ndarray, eps: np.ndarray) -> np.ndarray:
    mu, sigma, eps = (np.asarray(a, dtype=np.float64) for a in (mu, sigma, eps))
    if mu.shape != sigma.shape or mu.shape != eps.shape:
        raise DimensionMismatchError("reparameterize shapes", mu.shape, (sigma.shape, eps.shape))
    return mu + eps * sigma


def kl_loss(mu: np.ndarray, sigma: np.ndarray) -> Tuple[float, np.ndarray]:
    """Batch-mean KL divergence to N(0, I) and its per-latent decomposition"""
    mu, sigma = np.atleast_2d(mu), np.atleast_2d(sigma)
    if mu.shape != sigma.shape:
        raise DimensionMismatchError("kl_loss shapes", mu.shape, sigma.shape)
    if np.any(sigma <= 0):
        raise OvaeError("kl_loss needs strictly positive sigma")
    var = sigma ** 2
    per_dim = (0.5 * (-1.0 + var + mu ** 2 - np.log(var))).mean(axis=0)
    return float(per_dim.sum()), per_dim


def reconstruction_loss(x: np.ndarray, mu_out: np.ndarray, sigma_out: np.ndarray) -> float:
    """Single-draw Gaussian negative log-likelihood without the (d/2) log 2pi constant"""
    x, mu_out, sigma_out = np.atleast_2d(x), np.atleast_2d(mu_out), np.atleast_2d(sigma_out)
    if x.shape != mu_out.shape or x.shape != sigma_out.shape:
        raise DimensionMismatchError("reconstruction_loss shapes", x.shape, (mu_out.shape, sigma_out.shape))
    if np.any(sigma_out <= 0):
        raise OvaeError("reconstruction_loss needs strictly positive sigma'")
    var = sigma_out ** 2
    return float(0.5 * ((x - mu_out) ** 2 / var + np.log(var)).sum(axis=1).mean())


def orientation_loss(labels: np.ndarray, mask: np.ndarray, z1: np.ndarray,
                     log_var_f: float, cdf: Optional[EmpiricalCdf]) -> float:
    """Mean over labeled rows only; zero when nothing in the batch is labeled"""
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        return 0.0
    residual = np.asarray(labels)[mask] - orientation_target(cdf, np.asarray(z1)[mask])
    return float(np.mean(residual ** 2 * np.exp(-log_var_f) + log_var_f))


def total_loss(kl: float, re: float, ori: float, beta: float) -> float:
    return beta * kl + re + ori


@dataclass
class TrainBatch:
    states: np.ndarray
    labels: Optional[np.ndarray] = None
    label_mask: Optional[np.ndarray] = None

    def __post_init__(self):
        self.states = np.atleast_2d(np.asarray(self.states, dtype=np.float64))
        b = self.states.shape[0]
        if b < 1:
            raise OvaeError("TrainBatch needs at least one row")
        if self.labels is None:
            self.labels = np.full(b, np.nan)
        self.labels = np.asarray(self.labels, dtype=np.float64)
        if self.label_mask is None:
            self.label_mask = np.isfinite(self.labels)
        self.label_mask = np.asarray(self.label_mask, dtype=bool)
        if self.labels.shape != (b,) or self.label_mask.shape != (b,):
            raise DimensionMismatchError("batch label length", b, self.labels.shape)
        if np.any(self.label_mask != np.isfinite(self.labels)):
            raise OvaeError("label_mask must be true exactly where a label is present")


@dataclass
class LossReport:
    kl: float
    reconstruction: float
    orientation: float
    total: float
    per_latent_kl: np.ndarray
    validation_total: float = float('nan')


@dataclass
class TrainConfig:
    beta: float = OVAE_CONFIG['beta']
    epochs: int = OVAE_CONFIG['epochs']
    batch_size: int = OVAE_CONFIG['batch_size']
    learning_rate: float = OVAE_CONFIG['learning_rate']
    seed: int = 0
    labeled_fraction: float = OVAE_CONFIG['labeled_fraction']
    orientation: bool = OVAE_CONFIG['orientation']
    show_progress: bool = True

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ConfigError("epochs and batch_size must be positive")
        if self.learning_rate <= 0 or self.beta < 0:
            raise ConfigError("learning_rate must be positive and beta nonnegative")
        if not 0.0 <= self.labeled_fraction <= 1.0:
            raise ConfigError(f"labeled_fraction must lie in [0, 1], got {self.labeled_fraction}")


class OvaeModel:
    def __init__(self, encoder: Mlp, decoder: Mlp, normalizer: Normalizer,
                 feature_cdf: Optional[EmpiricalCdf] = None, log_var_f: float = 0.0,
                 trained: bool = False, config: Optional[Dict] = None):
        latent_dim = encoder.output_dim // 2
        data_dim = encoder.input_dim
        if latent_dim < 1 or encoder.output_dim != 2 * latent_dim:
            raise DimensionMismatchError("encoder output width", "2L", encoder.output_dim)
        if decoder.input_dim != latent_dim or decoder.output_dim != 2 * data_dim:
            raise DimensionMismatchError("decoder dims", (latent_dim, 2 * data_dim),
                                         (decoder.input_dim, decoder.output_dim))
        if normalizer.dim != data_dim:
            raise DimensionMismatchError("normalizer width", data_dim, normalizer.dim)
        self.encoder = encoder
        self.decoder = decoder
        self.normalizer = normalizer
        self.feature_cdf = feature_cdf
        self.log_var_f = float(log_var_f)
        self.trained = trained
        self.config = dict(config or {})

    @classmethod
    def build(cls, normalizer: Normalizer, latent_dim: int = OVAE_CONFIG['latent_dim'],
              hidden_sizes: Sequence[int] = OVAE_CONFIG['hidden_sizes'], seed: int = 0) -> 'OvaeModel':
        if latent_dim < 1:
            raise ConfigError("latent_dim must be at least 1")
        rng = np.random.default_rng(seed)
        d = normalizer.dim
        hidden = tuple(hidden_sizes)
        encoder = Mlp.build((d,) + hidden + (2 * latent_dim,), rng)
        decoder = Mlp.build((latent_dim,) + hidden[::-1] + (2 * d,), rng)
        config = {'latent_dim': latent_dim, 'hidden_sizes': list(hidden), 'init_seed': seed}
        return cls(encoder, decoder, normalizer, config=config)

    @property
    def latent_dim(self) -> int:
        return self.encoder.output_dim // 2

    @property
    def data_dim(self) -> int:
        return self.encoder.input_dim

    def encode(self, x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        x = np.asarray(x, dtype=np.float64)
        if not np.all(np.isfinite(x)):
            raise NonFiniteError("encode received non-finite input")
        out, _ = self.encoder.forward(x)
        L = self.latent_dim
        return out[..., :L], np.exp(0.5 * out[..., L:])

    def encode_mean(self, x: np.ndarray) -> np.ndarray:
        return self.encode(x)[0]

    def decode(self, z: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        z = np.asarray(z, dtype=np.float64)
        if not np.all(np.isfinite(z)):
            raise NonFiniteError("decode received a non-finite latent code")
        out, _ = self.decoder.forward(z)
        d = self.data_dim
        return out[..., :d], np.exp(0.5 * out[..., d:])

    def latent_kl_profile(self, x: np.ndarray) -> np.ndarray:
        """Per-latent KL on a batch; dimensions near zero carry no information"""
        mu, sigma = self.encode(x)
        return kl_loss(mu, sigma)[1]

    def generate(self, z: np.ndarray, noise: Optional[np.ndarray] = None) -> np.ndarray:
        """Decode latent codes into demand states in MW, clamped to the training range"""
        if not self.trained:
            raise UntrainedModelError("generate called on a model that has not been trained")
        z = np.atleast_2d(np.asarray(z, dtype=np.float64))
        if z.shape[1] != self.latent_dim:
            raise DimensionMismatchError("latent batch width", self.latent_dim, z.shape[1])
        mu_out, sigma_out = self.decode(z)
        if noise is not None:
            noise = np.asarray(noise, dtype=np.float64).reshape(mu_out.shape)
            mu_out = mu_out + noise * sigma_out
        return self.normalizer.denormalize(mu_out, clamp=True)

    def sample(self, n: int, rng: np.random.Generator, z: Optional[np.ndarray] = None) -> np.ndarray:
        if z is None:
            z = rng.standard_normal((n, self.latent_dim))
        noise = rng.standard_normal((len(z), self.data_dim))
        return self.generate(z, noise)

    def parameters(self) -> Dict[str, np.ndarray]:
        params = {f'encoder.{k}': v for k, v in self.encoder.parameters().items()}
        params.update({f'decoder.{k}': v for k, v in self.decoder.parameters().items()})
        params['log_var_f'] = np.array(self.log_var_f)
        return params

    def set_parameters(self, params: Dict[str, np.ndarray]):
        self.encoder.set_parameters({k[len('encoder.'):]: v for k, v in params.items() if k.startswith('encoder.')})
        self.decoder.set_parameters({k[len('decoder.'):]: v for k, v in params.items() if k.startswith('decoder.')})
        self.log_var_f = float(params['log_var_f'])

    def loss_and_gradients(self, batch: TrainBatch, eps: np.ndarray, beta: float,
                           orientation: bool = True) -> Tuple[LossReport, Dict[str, np.ndarray]]:
        """Forward pass with fixed reparameterization noise and analytic gradients of the total loss"""
        x = batch.states
        B, L, d = x.shape[0], self.latent_dim, self.data_dim
        eps = np.asarray(eps, dtype=np.float64).reshape(B, L)

        enc_out, enc_cache = self.encoder.forward(x)
        mu, log_var = enc_out[:, :L], enc_out[:, L:]
        sigma = np.exp(0.5 * log_var)
        z = reparameterize(mu, sigma, eps)

        dec_out, dec_cache = self.decoder.forward(z)
        mu_out, log_var_out = dec_out[:, :d], dec_out[:, d:]
        inv_var_out = np.exp(-log_var_out)
        resid = x - mu_out
        re = float(0.5 * (resid ** 2 * inv_var_out + log_var_out).sum(axis=1).mean())
        d_mu_out = -resid * inv_var_out / B
        d_log_var_out = 0.5 * (1.0 - resid ** 2 * inv_var_out) / B

        per_dim = (0.5 * (-1.0 + np.exp(log_var) + mu ** 2 - log_var)).mean(axis=0)
        kl = float(per_dim.sum())
        d_mu_kl = mu / B
        d_log_var_kl = 0.5 * (np.exp(log_var) - 1.0) / B

        ori = 0.0
        d_z1 = np.zeros(B)
        d_log_var_f = 0.0
        mask = batch.label_mask
        if orientation and mask.any():
            if self.feature_cdf is None:
                raise OvaeError("orientation loss needs a feature CDF")
            m = int(mask.sum())
            z1 = z[mask, 0]
            residual = batch.labels[mask] - orientation_target(self.feature_cdf, z1)
            precision = np.exp(-self.log_var_f)
            ori = float(np.mean(residual ** 2 * precision + self.log_var_f))
            d_z1[mask] = -2.0 * residual * precision * _orientation_target_slope(self.feature_cdf, z1) / m
            d_log_var_f = float(np.mean(1.0 - residual ** 2 * precision))

        dec_grads, d_z = self.decoder.backward(dec_cache, np.hstack([d_mu_out, d_log_var_out]))
        d_z[:, 0] += d_z1
        d_mu = beta * d_mu_kl + d_z
        d_log_var = beta * d_log_var_kl + d_z * eps * sigma * 0.5
        enc_grads, _ = self.encoder.backward(enc_cache, np.hstack([d_mu, d_log_var]))

        grads = {f'encoder.{k}': v for k, v in enc_grads.items()}
        grads.update({f'decoder.{k}': v for k, v in dec_grads.items()})
        grads['log_var_f'] = np.array(d_log_var_f)
        report = LossReport(kl, re, ori, total_loss(kl, re, ori, beta), per_dim)
        return report, grads

    def to_dict(self) -> Dict:
        return {
            'bundle_version': OVAE_CONFIG['bundle_version'],
            'latent_dim': self.latent_dim,
            'data_dim': self.data_dim,
            'encoder': self.encoder.to_dict(),
            'decoder': self.decoder.to_dict(),
            'norm_stats': self.normalizer.to_dict(),
            'feature_cdf': None if self.feature_cdf is None else self.feature_cdf.sorted_values.tolist(),
            'log_var_f': self.log_var_f,
            'trained': self.trained,
            'config': self.config
        }

    @classmethod
    def from_dict(cls, data: Dict) -> 'OvaeModel':
        if data.get('bundle_version') != OVAE_CONFIG['bundle_version']:
            raise OvaeError(f"Unsupported model bundle version: {data.get('bundle_version')}")
        cdf = data.get('feature_cdf')
        return cls(Mlp.from_dict(data['encoder']), Mlp.from_dict(data['decoder']),
                   Normalizer.from_dict(data['norm_stats']),
                   EmpiricalCdf(cdf) if cdf is not None else None,
                   data['log_var_f'], data['trained'], data.get('config'))

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_dict()))
        logger.info(f"Model bundle saved to: {path}")

    @classmethod
    def load(cls, path) -> 'OvaeModel':
        return cls.from_dict(json.loads(Path(path).read_text()))


def transform_labels(raw: np.ndarray, kind: FeatureKind) -> np.ndarray:
    """Scale raw feature values before they enter the orientation loss.

    Total load is min-max normalized over the labeled values; the EENS feature is
    replaced by its normalized rank in [0, 1]. Unlabeled rows (NaN) stay NaN.
    """
    raw = np.asarray(raw, dtype=np.float64)
    out = np.full_like(raw, np.nan)
    labeled = np.isfinite(raw)
    values = raw[labeled]
    if values.size == 0:
        return out
    if FeatureKind(kind) is FeatureKind.TOTAL_LOAD:
        span = values.max() - values.min()
        out[labeled] = (values - values.min()) / span if span > 0 else 0.0
    else:
        ranks = stats.rankdata(values, method='average')
        out[labeled] = (ranks - 1.0) / (values.size - 1) if values.size > 1 else 0.5
    return out


def select_labeled(labels: np.ndarray, fraction: float, rng: np.random.Generator) -> np.ndarray:
    """Keep labels on round(fraction * n) rows (at least one), drawn from rows that carry a label"""
    labels = np.asarray(labels, dtype=np.float64)
    available = np.flatnonzero(np.isfinite(labels))
    target = max(1, int(round(fraction * labels.size)))
    out = np.full_like(labels, np.nan)
    keep = available if available.size <= target else np.sort(rng.choice(available, size=target, replace=False))
    out[keep] = labels[keep]
    return out


class OvaeTrainer:
    def __init__(self, config: TrainConfig):
        self.config = config

    def _evaluate(self, model: OvaeModel, batch: TrainBatch, rng: np.random.Generator) -> float:
        eps = rng.standard_normal((batch.states.shape[0], model.latent_dim))
        report, _ = model.loss_and_gradients(batch, eps, self.config.beta, self.config.orientation)
        return report.total

    def train(self, model: OvaeModel, states: np.ndarray, labels: Optional[np.ndarray] = None,
              validation: Optional[TrainBatch] = None) -> Tuple[OvaeModel, List[LossReport]]:
        cfg = self.config
        states = np.asarray(states, dtype=np.float64)
        if states.ndim != 2 or states.shape[0] == 0:
            raise OvaeError("train needs a non-empty (n, d) matrix of normalized states")
        n = states.shape[0]
        rng = np.random.default_rng(cfg.seed)

        if labels is None:
            labels = np.full(n, np.nan)
        if cfg.orientation:
            if cfg.labeled_fraction == 0.0:
                raise ConfigError("labeled_fraction=0 leaves the orientation loss without labels")
            labels = select_labeled(labels, cfg.labeled_fraction, rng)
            labeled_values = labels[np.isfinite(labels)]
            if labeled_values.size == 0:
                raise ConfigError("orientation enabled but no row carries a label")
            model.feature_cdf = EmpiricalCdf(labeled_values)
            logger.info(f"Feature CDF frozen from {labeled_values.size} labeled rows ({labeled_values.size / n:.1%})")
        else:
            labels = np.full(n, np.nan)
        batch_all = TrainBatch(states, labels)

        params = model.parameters()
        state = AdamState.for_params(params, cfg.learning_rate)
        eval_rng = np.random.default_rng([cfg.seed, 1])
        history = []

        epochs = tqdm(range(cfg.epochs), desc="Training", disable=not cfg.show_progress)
        for epoch in epochs:
            order = rng.permutation(n)
            sums = np.zeros(3)
            per_latent = np.zeros(model.latent_dim)
            labeled_rows = 0
            for start in range(0, n, cfg.batch_size):
                idx = order[start:start + cfg.batch_size]
                batch = TrainBatch(batch_all.states[idx], batch_all.labels[idx], batch_all.label_mask[idx])
                eps = rng.standard_normal((idx.size, model.latent_dim))
                report, grads = model.loss_and_gradients(batch, eps, cfg.beta, cfg.orientation)
                params, state = adam_step(model.parameters(), grads, state)
                model.set_parameters(params)

                m = int(batch.label_mask.sum())
                sums += [report.kl * idx.size, report.reconstruction * idx.size, report.orientation * m]
                per_latent += report.per_latent_kl * idx.size
                labeled_rows += m

            kl, re = sums[0] / n, sums[1] / n
            ori = sums[2] / labeled_rows if labeled_rows else 0.0
            epoch_report = LossReport(kl, re, ori, total_loss(kl, re, ori, cfg.beta), per_latent / n)
            if validation is not None:
                epoch_report.validation_total = self._evaluate(model, validation, eval_rng)
            history.append(epoch_report)
            if not np.isfinite(epoch_report.total):
                raise NonFiniteError(f"training diverged at epoch {epoch + 1}")
            if (epoch + 1) % max(1, cfg.epochs // 10) == 0:
                logger.info(f"Epoch {epoch + 1}/{cfg.epochs} total={epoch_report.total:.4f} "
                            f"kl={kl:.4f} re={re:.4f} ori={ori:.4f}")

        model.trained = True
        model.config.update({k: v for k, v in asdict(cfg).items() if k != 'show_progress'})
        return model, history


def train(model: OvaeModel, states: np.ndarray, config: TrainConfig, labels: Optional[np.ndarray] = None,
          validation: Optional[TrainBatch] = None) -> Tuple[OvaeModel, List[LossReport]]:
    return OvaeTrainer(config).train(model, states, labels, validation)


def history_frame(history: List[LossReport]) -> pd.DataFrame:
    rows = []
    for epoch, report in enumerate(history, start=1):
        row = {'epoch': epoch, 'kl': report.kl, 're': report.reconstruction,
               'ori': report.orientation, 'total': report.total}
        for j, value in enumerate(report.per_latent_kl, start=1):
            row[f'kl_z{j}'] = value
        row['validation_total'] = report.validation_total
        rows.append(row)
    return pd.DataFrame(rows)
