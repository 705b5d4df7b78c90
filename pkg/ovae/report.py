import logging
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from .adequacy import Metric
from .config import STATS_CONFIG
from .errors import OvaeError
from .estimators import RiskEstimate, spearman, speedup

logger = logging.getLogger(__name__)

ESTIMATE_COLUMNS = ['model', 'sampling', 'metric', 'value', 'std_error', 'n_samples', 'wall_time_s',
                    'mu_is', 'sigma_is']


def _estimate(row: pd.Series) -> RiskEstimate:
    return RiskEstimate(row['metric'], float(row['value']), float(row['std_error']),
                        int(row['n_samples']), float(row['wall_time_s']))


def _safe_speedup(est_a: RiskEstimate, est_b: RiskEstimate) -> float:
    try:
        return speedup(est_a, est_b)
    except OvaeError as e:
        logger.warning(f"Speedup undefined for {est_a.metric.value}: {e}")
        return float('nan')


class ReportBuilder:
    """Plot-ready tables assembled from stage outputs"""

    def create_adequacy_table(self, estimates: pd.DataFrame) -> Optional[pd.DataFrame]:
        """One row per (model, sampling) with LOLE/EENS, their standard errors and IS speedups.

        Speedups compare each IS row against the unbiased row of the same model.
        """
        if estimates.empty:
            logger.warning("No estimates to tabulate")
            return None
        missing = set(ESTIMATE_COLUMNS) - set(estimates.columns)
        if missing:
            raise OvaeError(f"estimates table lacks columns {sorted(missing)}")

        rows = []
        for (model, sampling), group in estimates.groupby(['model', 'sampling'], sort=False):
            by_metric = {Metric(r['metric']): r for _, r in group.iterrows()}
            first = group.iloc[0]
            row = {'model': model, 'sampling': sampling, 'mu_is': first['mu_is'],
                   'sigma_is': first['sigma_is'], 'time_s': first['wall_time_s']}
            for metric in (Metric.LOLE, Metric.EENS):
                entry = by_metric.get(metric)
                row[metric.value.lower()] = np.nan if entry is None else entry['value']
                row[f'{metric.value.lower()}_se'] = np.nan if entry is None else entry['std_error']
                row[f'{metric.value.lower()}_speedup'] = np.nan

            if sampling == 'is':
                baseline = estimates[(estimates['model'] == model) & (estimates['sampling'] == 'unbiased')]
                for metric in (Metric.LOLE, Metric.EENS):
                    ref = baseline[baseline['metric'] == metric.value]
                    if metric in by_metric and not ref.empty:
                        row[f'{metric.value.lower()}_speedup'] = _safe_speedup(
                            _estimate(by_metric[metric]), _estimate(ref.iloc[0]))
            rows.append(row)
        return pd.DataFrame(rows)

    def create_correlation_table(self, latents: Dict[Tuple[str, str], np.ndarray],
                                 features: Dict[Tuple[str, str], np.ndarray],
                                 oriented: Sequence[str]) -> pd.DataFrame:
        """Spearman between latent coordinates and the feature for each (model, dataset) pair.

        Oriented models are scored on z1; the others on their best coordinate.
        """
        rows = []
        for (model, dataset), z in latents.items():
            f = features[(model, dataset)]
            labeled = np.isfinite(f)
            if labeled.sum() < 2:
                logger.warning(f"Skipping correlation for {model}/{dataset}: fewer than two labeled rows")
                continue
            scores = [spearman(z[labeled, j], f[labeled]) for j in range(z.shape[1])]
            if model in oriented:
                dim, value = 1, scores[0]
            else:
                best = int(np.nanargmax(np.abs(scores)))
                dim, value = best + 1, scores[best]
            rows.append({'model': model, 'dataset': dataset, 'latent_dim': dim, 'spearman': value,
                         'n_rows': int(labeled.sum())})
        return pd.DataFrame(rows, columns=['model', 'dataset', 'latent_dim', 'spearman', 'n_rows'])

    def create_total_load_histograms(self, sources: Dict[str, np.ndarray], bins: int = None) -> pd.DataFrame:
        """Total-load histograms on shared bin edges, one block of rows per source"""
        bins = STATS_CONFIG['histogram_bins'] if bins is None else bins
        totals = {name: np.atleast_2d(states).sum(axis=1) for name, states in sources.items()}
        edges = np.histogram_bin_edges(np.concatenate(list(totals.values())), bins=bins)
        frames = []
        for name, total in totals.items():
            counts, _ = np.histogram(total, bins=edges)
            frames.append(pd.DataFrame({
                'source': name,
                'bin_left': edges[:-1],
                'bin_right': edges[1:],
                'count': counts,
                'density': counts / max(1, total.size) / np.diff(edges),
                'median_total_load': np.median(total)
            }))
        return pd.concat(frames, ignore_index=True)

    def create_estimate_rows(self, model: str, sampling: str, estimates: List[RiskEstimate],
                             mu_is: float = np.nan, sigma_is: float = np.nan) -> List[Dict]:
        return [{'model': model, 'sampling': sampling, 'metric': e.metric.value, 'value': e.value,
                 'std_error': e.std_error, 'n_samples': e.n_samples, 'wall_time_s': e.wall_time_s,
                 'mu_is': mu_is, 'sigma_is': sigma_is} for e in estimates]
