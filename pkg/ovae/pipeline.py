"""Run configuration and the staged workflow behind the CLI.

Stages: synth/ingest -> label -> train -> fit-is -> assess -> stat-tests -> report.
Every stage reads its inputs through the ArtifactStore and records its outputs there.
"""
import hashlib
import json
import logging
import time
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from contextlib import contextmanager
from pathlib import Path
from typing import Dict, List, Literal, Optional, Tuple

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .adequacy import FeatureKind, Metric, NetworkModel, desk_network, evaluate_epns, impact_of_epns, label_states
from .artifacts import ArtifactStore
from .config import IS_CONFIG, OVAE_CONFIG, PATHS, SPLIT_CONFIG, STATS_CONFIG, SYNTH_CONFIG
from .data_processor import (TEST, TRAIN, DemandDataset, Normalizer, SynthConfig, apply_test_blocks,
                             generate_synthetic, held_out_blocks, held_out_week_count, load_csv, split_weekly,
                             write_csv)
from .errors import ConfigError, OvaeError
from .estimators import is_estimate, mc_estimate
from .latent_is import ISConfig, MixtureEm, is_weight, pilot_weights, sample_latent
from .ovae_model import OvaeModel, TrainBatch, TrainConfig, history_frame, train, transform_labels
from .parallel_runner import ParallelRunner
from .report import ReportBuilder
from .stat_tests import AeConfig, DeterministicAutoencoder, TestKind, TestReport, repeated_energy, repeated_ks

logger = logging.getLogger(__name__)

# Stream keys mixed into the run seed so each stage draws from its own stream
SPLIT_STREAM, LABEL_STREAM, TRAIN_STREAM, PILOT_STREAM = 2, 3, 4, 5
ASSESS_STREAM, STATS_STREAM, REPORT_STREAM = 6, 7, 8


class Section(BaseModel):
    model_config = ConfigDict(extra='forbid')


class DataSection(Section):
    source: Literal['synthetic', 'csv'] = 'synthetic'
    csv_path: Optional[str] = None
    n_areas: int = Field(SYNTH_CONFIG['n_areas'], ge=1)
    hours: int = Field(SYNTH_CONFIG['hours'], ge=336)
    synth_seed: int = Field(SYNTH_CONFIG['seed'], ge=0)
    base_load: List[float] = list(SYNTH_CONFIG['base_load'])
    seasonal_amplitude: float = Field(SYNTH_CONFIG['seasonal_amplitude'], ge=0)
    diurnal_amplitude: float = Field(SYNTH_CONFIG['diurnal_amplitude'], ge=0)
    correlation: float = Field(SYNTH_CONFIG['correlation'], ge=0, le=1)
    noise_scale: float = Field(SYNTH_CONFIG['noise_scale'], ge=0)

    @model_validator(mode='after')
    def _csv_needs_path(self):
        if self.source == 'csv' and not self.csv_path:
            raise ValueError("data.source = 'csv' needs data.csv_path")
        return self


class NetworkSection(Section):
    path: Optional[str] = None


class OvaeSection(Section):
    beta: float = Field(OVAE_CONFIG['beta'], ge=0)
    epochs: int = Field(OVAE_CONFIG['epochs'], ge=1)
    batch_size: int = Field(OVAE_CONFIG['batch_size'], ge=1)
    learning_rate: float = Field(OVAE_CONFIG['learning_rate'], gt=0)
    latent_dim: int = Field(OVAE_CONFIG['latent_dim'], ge=1)
    hidden_sizes: List[int] = Field(list(OVAE_CONFIG['hidden_sizes']), min_length=1)
    validation: bool = True
    plain_vae: bool = True


class VariantSection(Section):
    name: str = Field(min_length=1)
    feature: FeatureKind = FeatureKind(OVAE_CONFIG['feature'])
    labeled_fraction: float = Field(OVAE_CONFIG['labeled_fraction'], gt=0, le=1)
    beta: Optional[float] = Field(None, ge=0)


class LabelSection(Section):
    draws: int = Field(100, ge=1)
    test_rows: int = Field(500, ge=0)


class IsSection(Section):
    alpha: float = Field(IS_CONFIG['alpha'], gt=0, le=1)
    pilot_size: int = Field(IS_CONFIG['pilot_size'], ge=10)
    em_max_iter: int = Field(IS_CONFIG['em_max_iter'], ge=1)
    em_tol: float = Field(IS_CONFIG['em_tol'], gt=0)


class AssessSection(Section):
    n_samples: int = Field(100_000, ge=2)
    metrics: List[Metric] = [Metric.LOLE, Metric.EENS]
    historical: bool = True


class StatsSection(Section):
    variant: Optional[str] = None
    n_generated: int = Field(5000, ge=2)
    subsample_size: int = Field(STATS_CONFIG['subsample_size'], ge=2)
    permutations: int = Field(STATS_CONFIG['permutations'], ge=1)
    ks_repetitions: int = Field(STATS_CONFIG['ks_repetitions'], ge=1)
    energy_repetitions: int = Field(STATS_CONFIG['energy_repetitions'], ge=1)
    autoencoder_epochs: int = Field(200, ge=1)


class ReportSection(Section):
    histogram_bins: int = Field(STATS_CONFIG['histogram_bins'], ge=2)
    biased_offsets: List[Tuple[float, float]] = [tuple(o) for o in STATS_CONFIG['biased_offsets']]
    n_generated: int = Field(5000, ge=2)
    eens_label_rows: int = Field(200, ge=0)


class RunConfig(Section):
    model_config = ConfigDict(extra='forbid', populate_by_name=True)

    seed: int = Field(0, ge=0)
    threads: int = Field(1, ge=1)
    out_dir: str = 'runs/desk'
    log_level: str = 'INFO'
    data: DataSection = Field(default_factory=DataSection)
    network: NetworkSection = Field(default_factory=NetworkSection)
    ovae: OvaeSection = Field(default_factory=OvaeSection)
    variants: List[VariantSection] = Field(
        default_factory=lambda: [VariantSection(name='ovae_total_load')], min_length=1)
    labels: LabelSection = Field(default_factory=LabelSection)
    is_: IsSection = Field(default_factory=IsSection, alias='is')
    assess: AssessSection = Field(default_factory=AssessSection)
    stats: StatsSection = Field(default_factory=StatsSection)
    report: ReportSection = Field(default_factory=ReportSection)

    @model_validator(mode='after')
    def _check_consistency(self):
        names = [v.name for v in self.variants]
        if len(set(names)) != len(names):
            raise ValueError(f"variant names must be unique: {names}")
        if self.stats.variant is not None and self.stats.variant not in names:
            raise ValueError(f"stats.variant '{self.stats.variant}' is not a configured variant")
        if self.stats.subsample_size > self.stats.n_generated:
            raise ValueError(f"stats.subsample_size ({self.stats.subsample_size}) exceeds stats.n_generated "
                             f"({self.stats.n_generated})")
        if self.data.source == 'synthetic':
            test_rows = held_out_week_count(self.data.hours) * SPLIT_CONFIG['block_hours']
            if self.stats.subsample_size > test_rows:
                raise ValueError(f"stats.subsample_size ({self.stats.subsample_size}) exceeds the {test_rows} "
                                 f"held-out rows of {self.data.hours} hours")
        return self

    def config_hash(self) -> str:
        """SHA-256 over the canonical dump, ignoring settings that do not change results"""
        payload = self.model_dump(mode='json', by_alias=True, exclude={'threads', 'out_dir', 'log_level'})
        digest = hashlib.sha256(json.dumps(payload, sort_keys=True).encode('utf-8')).hexdigest()
        return digest[:16]


def load_run_config(path=None, overrides: Optional[Dict] = None) -> RunConfig:
    """TOML file, then environment/CLI overrides (later wins)"""
    raw: Dict = {}
    base = Path.cwd()
    if path is not None:
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        try:
            with open(path, 'rb') as f:
                raw = tomllib.load(f)
        except tomllib.TOMLDecodeError as e:
            raise ConfigError(f"invalid TOML in {path}: {e}")
        base = path.parent
    raw.update({k: v for k, v in (overrides or {}).items() if v is not None})

    try:
        cfg = RunConfig.model_validate(raw)
    except ValidationError as e:
        raise ConfigError(f"invalid run configuration: {e}")

    for section, key in (('data', 'csv_path'), ('network', 'path')):
        value = getattr(getattr(cfg, section), key)
        if value is None:
            continue
        resolved = Path(value) if Path(value).is_absolute() else (base / value).resolve()
        if not resolved.exists():
            raise ConfigError(f"{section}.{key} points to a missing file: {resolved}")
        setattr(getattr(cfg, section), key, str(resolved))
    return cfg


def derive_seed(seed: int, *keys: int) -> int:
    return int(np.random.SeedSequence([seed, *keys]).generate_state(1)[0])


class OvaePipeline:
    def __init__(self, cfg: RunConfig, force: bool = False, show_progress: bool = True):
        self.cfg = cfg
        self.show_progress = show_progress
        self.store = ArtifactStore(cfg.out_dir, cfg.config_hash(), cfg.seed, force=force)
        self.runner = ParallelRunner(cfg.threads, show_progress=show_progress)
        self.reports = ReportBuilder()
        self._network: Optional[NetworkModel] = None

    @contextmanager
    def _stage(self, name: str):
        logger.info(f"Running stage '{name}' (config {self.store.config_hash}, seed {self.cfg.seed})")
        started = time.perf_counter()
        holder = {'files': [], 'extra': {}}
        try:
            yield holder
        except OvaeError as e:
            logger.error(f"Stage '{name}' failed: {e}")
            raise
        self.store.record(name, holder['files'], time.perf_counter() - started, holder['extra'])

    @property
    def network(self) -> NetworkModel:
        if self._network is None:
            path = self.cfg.network.path
            self._network = NetworkModel.from_toml(path) if path else desk_network()
        return self._network

    # data

    def _save_dataset(self, dataset: DemandDataset, holder: Dict):
        if dataset.values.shape[1] != self.network.n_areas:
            raise ConfigError(f"dataset has {dataset.values.shape[1]} areas, network has {self.network.n_areas}")
        dataset = split_weekly(dataset, seed=derive_seed(self.cfg.seed, SPLIT_STREAM))
        write_csv(dataset, self.store.path(PATHS['dataset']))
        normalizer = Normalizer.fit(dataset.train_values)
        meta = {'areas': dataset.areas, 'test_blocks': [int(b) for b in held_out_blocks(dataset)],
                'norm_stats': normalizer.to_dict(), 'rows': len(dataset.frame)}
        holder['files'] += [PATHS['dataset'], self.store.write_json(PATHS['dataset_meta'], meta)]

    def synth(self):
        d = self.cfg.data
        synth_cfg = SynthConfig(d.n_areas, d.hours, d.synth_seed, d.base_load, d.seasonal_amplitude,
                                d.diurnal_amplitude, d.correlation, d.noise_scale)
        with self._stage('data') as holder:
            self._save_dataset(generate_synthetic(synth_cfg), holder)

    def ingest(self):
        if self.cfg.data.csv_path is None:
            raise ConfigError("ingest needs data.csv_path")
        with self._stage('data') as holder:
            self._save_dataset(load_csv(self.cfg.data.csv_path), holder)

    def _dataset(self) -> Tuple[DemandDataset, Normalizer]:
        self.store.require('data', producer='synth')
        meta = self.store.read_json(PATHS['dataset_meta'])
        dataset = apply_test_blocks(load_csv(self.store.path(PATHS['dataset'])), meta['test_blocks'])
        return dataset, Normalizer.from_dict(meta['norm_stats'])

    # labels

    def label(self):
        dataset, _ = self._dataset()
        split = dataset.split.to_numpy()
        train_idx, test_idx = np.flatnonzero(split == TRAIN), np.flatnonzero(split == TEST)
        values = dataset.values
        frames = []
        with self._stage('label') as holder:
            for kind in sorted({v.feature for v in self.cfg.variants}, key=lambda k: k.value):
                if kind is FeatureKind.TOTAL_LOAD:
                    ids = np.concatenate([train_idx, test_idx])
                else:
                    rng = np.random.default_rng(derive_seed(self.cfg.seed, LABEL_STREAM))
                    fraction = max(v.labeled_fraction for v in self.cfg.variants if v.feature is kind)
                    n_train = min(train_idx.size, max(1, int(round(fraction * train_idx.size))))
                    n_test = min(test_idx.size, self.cfg.labels.test_rows)
                    ids = np.concatenate([np.sort(rng.choice(train_idx, n_train, replace=False)),
                                          np.sort(rng.choice(test_idx, n_test, replace=False))])
                    logger.info(f"Labeling {n_train} train and {n_test} test rows with f_EENS")
                labels = label_states(values[ids], self.network, kind, seed=derive_seed(self.cfg.seed, LABEL_STREAM),
                                      runner=self.runner, k=self.cfg.labels.draws, indices=ids)
                frames.append(pd.DataFrame({'state_id': ids, 'split': split[ids],
                                            'feature_kind': kind.value, 'value': labels}))
            holder['files'].append(self.store.write_frame(PATHS['labels'], pd.concat(frames, ignore_index=True)))

    def _labels(self, kind: FeatureKind, rows: np.ndarray) -> np.ndarray:
        """Raw labels aligned with ``rows``; NaN where a row was not labeled"""
        frame = self.store.read_frame(PATHS['labels'])
        frame = frame[frame['feature_kind'] == kind.value]
        lookup = pd.Series(frame['value'].to_numpy(), index=frame['state_id'].to_numpy())
        return lookup.reindex(rows).to_numpy(dtype=np.float64)

    # training

    def _variant_index(self, name: str) -> int:
        return [v.name for v in self.cfg.variants].index(name)

    def train(self):
        dataset, normalizer = self._dataset()
        self.store.require('label', producer='label')
        split = dataset.split.to_numpy()
        train_idx, test_idx = np.flatnonzero(split == TRAIN), np.flatnonzero(split == TEST)
        x_train = normalizer.normalize(dataset.values[train_idx])
        validation = None
        if self.cfg.ovae.validation and test_idx.size:
            validation = TrainBatch(normalizer.normalize(dataset.values[test_idx]))

        o = self.cfg.ovae
        with self._stage('train') as holder:
            for i, variant in enumerate(self.cfg.variants):
                seed = derive_seed(self.cfg.seed, TRAIN_STREAM, i)
                labels = transform_labels(self._labels(variant.feature, train_idx), variant.feature)
                model = OvaeModel.build(normalizer, o.latent_dim, o.hidden_sizes, seed=seed)
                train_cfg = TrainConfig(variant.beta if variant.beta is not None else o.beta, o.epochs, o.batch_size,
                                        o.learning_rate, seed, variant.labeled_fraction, True, self.show_progress)
                logger.info(f"Training variant '{variant.name}' ({variant.feature.value}, "
                            f"{variant.labeled_fraction:.0%} labeled)")
                model, history = train(model, x_train, train_cfg, labels, validation)
                model.config.update({'variant': variant.name, 'feature': variant.feature.value})
                model.save(self.store.path(PATHS['model_bundle'].format(variant=variant.name)))
                holder['files'] += [PATHS['model_bundle'].format(variant=variant.name),
                                    self.store.write_frame(PATHS['loss_history'].format(variant=variant.name),
                                                           history_frame(history))]

            if o.plain_vae:
                seed = derive_seed(self.cfg.seed, TRAIN_STREAM, 0)
                model = OvaeModel.build(normalizer, o.latent_dim, o.hidden_sizes, seed=seed)
                train_cfg = TrainConfig(o.beta, o.epochs, o.batch_size, o.learning_rate, seed,
                                        orientation=False, show_progress=self.show_progress)
                logger.info("Training plain VAE baseline")
                model, history = train(model, x_train, train_cfg, validation=validation)
                model.save(self.store.path(PATHS['vae_bundle']))
                holder['files'] += [PATHS['vae_bundle'],
                                    self.store.write_frame(PATHS['vae_loss_history'], history_frame(history))]

    def _model(self, name: str) -> OvaeModel:
        self.store.require('train', producer='train')
        return OvaeModel.load(self.store.path(PATHS['model_bundle'].format(variant=name)))

    # importance sampling

    def fit_is(self):
        c = self.cfg.is_
        fits = {}
        with self._stage('fit_is') as holder:
            for i, variant in enumerate(self.cfg.variants):
                model = self._model(variant.name)
                rng = np.random.default_rng(derive_seed(self.cfg.seed, PILOT_STREAM, i))
                z = rng.standard_normal((c.pilot_size, model.latent_dim))
                demands = model.sample(c.pilot_size, rng, z)
                pilot = pilot_weights(z[:, 0], demands, self.network, rng, runner=self.runner)
                holder['files'].append(self.store.write_frame(PATHS['pilot'].format(variant=variant.name),
                                                              pilot.to_frame()))
                em = MixtureEm(c.alpha, c.em_max_iter, c.em_tol)
                is_cfg = em.fit(pilot)
                fits[variant.name] = {**is_cfg.to_dict(), 'pilot_size': c.pilot_size,
                                      'pilot_positive_fraction': pilot.positive_fraction,
                                      'em_iterations': len(em.history) - 1}
            holder['files'].append(self.store.write_json(PATHS['is_fit'], {'variants': fits}))

    def _is_config(self, name: str) -> ISConfig:
        self.store.require('fit_is', producer='fit-is')
        fit = self.store.read_json(PATHS['is_fit'])['variants'][name]
        return ISConfig(fit['alpha'], fit['mu_is'], fit['sigma_is'])

    # assessment

    def _simulate(self, model: OvaeModel, is_cfg: Optional[ISConfig], n: int, seed) -> Tuple[np.ndarray, np.ndarray]:
        """(z1, EPNS) for n generated states; z1 from the mixture when ``is_cfg`` is given"""
        network = self.network

        def chunk(start, stop, rng):
            size = stop - start
            if is_cfg is None:
                z = rng.standard_normal((size, model.latent_dim))
            else:
                z = sample_latent(is_cfg, model.latent_dim, rng, size=size)
            epns = evaluate_epns(model.sample(size, rng, z), network, rng)
            return np.column_stack([z[:, 0], epns])

        out = self.runner.map_chunks(chunk, n, seed, desc="Sampling states")
        return out[:, 0], out[:, 1]

    def _estimates(self, epns: np.ndarray, weights: Optional[np.ndarray], wall_time: float) -> List:
        estimates = []
        for metric in self.cfg.assess.metrics:
            impacts = impact_of_epns(epns, metric)
            if weights is None:
                estimates.append(mc_estimate(impacts, metric, wall_time))
            else:
                estimates.append(is_estimate(impacts, weights, metric, wall_time))
        return estimates

    def assess(self):
        n = self.cfg.assess.n_samples
        rows = []
        with self._stage('assess') as holder:
            if self.cfg.assess.historical:
                dataset, _ = self._dataset()
                started = time.perf_counter()
                rng = np.random.default_rng(derive_seed(self.cfg.seed, ASSESS_STREAM))
                train_rows = dataset.train_values
                demands = train_rows[rng.integers(0, train_rows.shape[0], size=n)]
                epns = evaluate_epns(demands, self.network, rng)
                rows += self.reports.create_estimate_rows(
                    'historical_load', 'historical', self._estimates(epns, None, time.perf_counter() - started))

            for i, variant in enumerate(self.cfg.variants):
                model = self._model(variant.name)
                is_cfg = self._is_config(variant.name)

                started = time.perf_counter()
                _, epns = self._simulate(model, None, n, [self.cfg.seed, ASSESS_STREAM, i, 0])
                rows += self.reports.create_estimate_rows(
                    variant.name, 'unbiased', self._estimates(epns, None, time.perf_counter() - started))

                started = time.perf_counter()
                z1, epns = self._simulate(model, is_cfg, n, [self.cfg.seed, ASSESS_STREAM, i, 1])
                weights = is_weight(is_cfg, z1)
                rows += self.reports.create_estimate_rows(
                    variant.name, 'is', self._estimates(epns, weights, time.perf_counter() - started),
                    is_cfg.mu_is, is_cfg.sigma_is)
                logger.info(f"Assessed '{variant.name}': mean IS weight {weights.mean():.4f}")

            holder['files'].append(self.store.write_frame(PATHS['estimates'], pd.DataFrame(rows)))

    # statistical quality

    def stat_tests(self):
        with self._stage('stat_tests') as holder:
            self._run_stat_tests(holder)

    def _run_stat_tests(self, holder: Dict):
        s = self.cfg.stats
        dataset, normalizer = self._dataset()
        name = s.variant or self.cfg.variants[0].name
        model = self._model(name)
        rng = np.random.default_rng(derive_seed(self.cfg.seed, STATS_STREAM))
        train_rows, test_rows = dataset.train_values, dataset.test_values

        sources = {'ovae': model.sample(s.n_generated, rng)}
        if self.cfg.ovae.plain_vae:
            sources['vae'] = OvaeModel.load(self.store.path(PATHS['vae_bundle'])).sample(s.n_generated, rng)
        sources['train_resample'] = train_rows[rng.integers(0, train_rows.shape[0], size=s.n_generated)]
        sources['test'] = test_rows

        reports: List[TestReport] = []
        for j, source in enumerate(sources):
            candidate = sources[source]
            for col, area in enumerate(dataset.areas):
                p = repeated_ks(train_rows, candidate, col, s.ks_repetitions, s.subsample_size,
                                seed=[self.cfg.seed, STATS_STREAM, j, col], runner=self.runner)
                reports.append(TestReport(TestKind.KS, source, p, repetitions=s.ks_repetitions,
                                          subsample_size=s.subsample_size, area=area))
            p = repeated_energy(normalizer.normalize(train_rows), normalizer.normalize(candidate),
                                s.energy_repetitions, s.subsample_size, s.permutations,
                                seed=[self.cfg.seed, STATS_STREAM, j, 1000], runner=self.runner)
            reports.append(TestReport(TestKind.ENERGY, source, p, repetitions=s.energy_repetitions,
                                      subsample_size=s.subsample_size))

        o = self.cfg.ovae
        autoencoder = DeterministicAutoencoder(dataset.values.shape[1], AeConfig(
            o.latent_dim, o.hidden_sizes, s.autoencoder_epochs, o.batch_size, 1e-3,
            derive_seed(self.cfg.seed, STATS_STREAM, 1), self.show_progress)).fit(normalizer.normalize(train_rows))
        for source, candidate in sources.items():
            errors = autoencoder.reconstruction_errors(normalizer.normalize(candidate))
            reports.append(TestReport(TestKind.AUTOENCODER, source, errors=errors, repetitions=1,
                                      subsample_size=int(errors.size)))

        for kind in TestKind:
            frame = pd.concat([r.to_frame() for r in reports if r.test is kind], ignore_index=True)
            holder['files'].append(self.store.write_frame(PATHS['stat_tests'].format(test=kind.value.lower()), frame))
        holder['files'].append(self.store.write_json(PATHS['stat_summary'],
                                                     {'variant': name, 'reports': [r.summary() for r in reports]}))

    # report

    def report(self):
        self.store.require('assess', producer='assess')
        with self._stage('report') as holder:
            table = self.reports.create_adequacy_table(self.store.read_frame(PATHS['estimates']))
            if table is not None:
                holder['files'].append(self.store.write_frame(PATHS['adequacy_table'], table))
            holder['files'].append(self.store.write_frame(PATHS['correlation_table'], self._correlations()))
            holder['files'].append(self.store.write_frame(PATHS['histograms'], self._histograms()))

    def _feature(self, kind: FeatureKind, states: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        """Feature values for generated states; f_EENS only on the first few rows"""
        if kind is FeatureKind.TOTAL_LOAD:
            return states.sum(axis=1)
        out = np.full(states.shape[0], np.nan)
        n = min(states.shape[0], self.cfg.report.eens_label_rows)
        out[:n] = label_states(states[:n], self.network, kind, seed=int(rng.integers(2 ** 32)),
                               runner=self.runner, k=self.cfg.labels.draws)
        return out

    def _correlations(self) -> pd.DataFrame:
        dataset, normalizer = self._dataset()
        split = dataset.split.to_numpy()
        rows = {'train': np.flatnonzero(split == TRAIN), 'test': np.flatnonzero(split == TEST)}
        rng = np.random.default_rng(derive_seed(self.cfg.seed, REPORT_STREAM))
        n = self.cfg.report.n_generated

        models = {v.name: (self._model(v.name), v.feature) for v in self.cfg.variants}
        if self.cfg.ovae.plain_vae:
            models['vae'] = (OvaeModel.load(self.store.path(PATHS['vae_bundle'])), self.cfg.variants[0].feature)

        latents, features = {}, {}
        for name, (model, kind) in models.items():
            for dataset_name, idx in rows.items():
                latents[(name, dataset_name)] = model.encode_mean(normalizer.normalize(dataset.values[idx]))
                features[(name, dataset_name)] = self._labels(kind, idx)
            z = rng.standard_normal((n, model.latent_dim))
            latents[(name, 'generated')] = z
            features[(name, 'generated')] = self._feature(kind, model.sample(n, rng, z), rng)
        return self.reports.create_correlation_table(latents, features, oriented=[v.name for v in self.cfg.variants])

    def _histograms(self) -> pd.DataFrame:
        dataset, _ = self._dataset()
        rng = np.random.default_rng(derive_seed(self.cfg.seed, REPORT_STREAM, 1))
        r = self.cfg.report
        variant = next((v for v in self.cfg.variants if v.feature is FeatureKind.TOTAL_LOAD), self.cfg.variants[0])
        model = self._model(variant.name)
        sources = {'train': dataset.train_values, 'ovae_unbiased': model.sample(r.n_generated, rng)}
        for mu, sigma in r.biased_offsets:
            z = rng.standard_normal((r.n_generated, model.latent_dim))
            z[:, 0] = mu + sigma * rng.standard_normal(r.n_generated)
            sources[f'ovae_z1_N({mu:g},{sigma:g}^2)'] = model.sample(r.n_generated, rng, z)
        return self.reports.create_total_load_histograms(sources, r.histogram_bins)

    def run_all(self):
        if self.cfg.data.source == 'csv':
            self.ingest()
        else:
            self.synth()
        self.label()
        self.train()
        self.fit_is()
        self.assess()
        self.stat_tests()
        self.report()
