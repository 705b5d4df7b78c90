import json

import numpy as np
import pandas as pd
import pytest

from ovae.artifacts import ArtifactStore
from ovae.errors import ConfigHashMismatchError, OvaeError, UpstreamArtifactError
from ovae.errors import EXIT_UPSTREAM
from ovae.report import ESTIMATE_COLUMNS, ReportBuilder


@pytest.fixture
def published_estimates():
    """OVAE-Total-Load rows: plain sampling vs importance sampling (EENS in MWh/y, LOLE in h/y)"""
    rows = [
        ('ovae_total_load', 'unbiased', 'LOLE', 6.50, 0.20, 100_000, 4155.0, np.nan, np.nan),
        ('ovae_total_load', 'unbiased', 'EENS', 4.50e4, 0.17e4, 100_000, 4155.0, np.nan, np.nan),
        ('ovae_total_load', 'is', 'LOLE', 6.10, 0.10, 100_000, 4666.0, 2.25, 0.68),
        ('ovae_total_load', 'is', 'EENS', 4.137e4, 0.040e4, 100_000, 4666.0, 2.25, 0.68),
    ]
    return pd.DataFrame(rows, columns=ESTIMATE_COLUMNS)


class TestAdequacyTable:
    def test_speedup_matches_published_value(self, published_estimates):
        table = ReportBuilder().create_adequacy_table(published_estimates)
        is_row = table[table['sampling'] == 'is'].iloc[0]
        assert is_row['eens_speedup'] == pytest.approx(14.5, rel=0.15)
        assert is_row['mu_is'] == 2.25
        assert is_row['time_s'] == 4666.0

    def test_unbiased_rows_carry_no_speedup(self, published_estimates):
        table = ReportBuilder().create_adequacy_table(published_estimates)
        unbiased = table[table['sampling'] == 'unbiased'].iloc[0]
        assert np.isnan(unbiased['lole_speedup'])
        assert unbiased['eens'] == 4.50e4

    def test_zero_estimate_leaves_speedup_undefined(self, published_estimates):
        published_estimates.loc[published_estimates['sampling'] == 'is', 'value'] = 0.0
        table = ReportBuilder().create_adequacy_table(published_estimates)
        assert np.isnan(table[table['sampling'] == 'is'].iloc[0]['lole_speedup'])

    def test_missing_columns(self, published_estimates):
        with pytest.raises(OvaeError):
            ReportBuilder().create_adequacy_table(published_estimates.drop(columns=['std_error']))

    def test_empty_estimates(self):
        assert ReportBuilder().create_adequacy_table(pd.DataFrame(columns=ESTIMATE_COLUMNS)) is None


class TestOtherTables:
    def test_correlation_uses_first_latent_for_oriented_models(self):
        rng = np.random.default_rng(0)
        feature = rng.normal(size=100)
        z = np.column_stack([feature + 0.1 * rng.normal(size=100), -feature])
        table = ReportBuilder().create_correlation_table(
            {('ovae', 'test'): z, ('vae', 'test'): z},
            {('ovae', 'test'): feature, ('vae', 'test'): feature}, oriented=['ovae'])
        rows = table.set_index('model')
        assert rows.loc['ovae', 'latent_dim'] == 1
        assert rows.loc['vae', 'latent_dim'] == 2
        assert rows.loc['vae', 'spearman'] == pytest.approx(-1.0)

    def test_unlabeled_rows_are_skipped(self):
        table = ReportBuilder().create_correlation_table(
            {('ovae', 'generated'): np.zeros((3, 2))}, {('ovae', 'generated'): np.full(3, np.nan)}, ['ovae'])
        assert table.empty

    def test_histograms_share_edges(self):
        sources = {'train': np.ones((10, 2)), 'shifted': np.full((10, 2), 3.0)}
        table = ReportBuilder().create_total_load_histograms(sources, bins=4)
        train, shifted = table[table['source'] == 'train'], table[table['source'] == 'shifted']
        assert list(train['bin_left']) == list(shifted['bin_left'])
        assert train['count'].sum() == 10
        assert shifted['median_total_load'].iloc[0] == 6.0


class TestArtifactStore:
    def test_missing_upstream_names_producer(self, tmp_path):
        store = ArtifactStore(tmp_path, 'abc', 0)
        with pytest.raises(UpstreamArtifactError, match='ovae synth') as excinfo:
            store.require('data', producer='synth')
        assert excinfo.value.exit_code == EXIT_UPSTREAM

    def test_hash_mismatch_needs_force(self, tmp_path):
        ArtifactStore(tmp_path, 'abc', 0).record('data', [], 1.0)
        with pytest.raises(ConfigHashMismatchError):
            ArtifactStore(tmp_path, 'def', 0).require('data')
        assert ArtifactStore(tmp_path, 'def', 0, force=True).require('data')['config_hash'] == 'abc'

    def test_deleted_file_is_reported(self, tmp_path):
        store = ArtifactStore(tmp_path, 'abc', 0)
        store.record('label', [store.write_frame('labels.csv', pd.DataFrame({'x': [1]}))], 0.5)
        (tmp_path / 'labels.csv').unlink()
        with pytest.raises(UpstreamArtifactError):
            store.require('label')

    def test_tables_are_stamped(self, tmp_path):
        store = ArtifactStore(tmp_path, 'abc', 7)
        store.write_frame('t.csv', pd.DataFrame({'value': [0.1]}))
        store.write_json('t.json', {'value': 1})
        assert list(store.read_frame('t.csv').columns) == ['config_hash', 'seed', 'value']
        assert store.read_frame('t.csv')['value'].iloc[0] == 0.1
        assert json.loads((tmp_path / 't.json').read_text())['seed'] == 7

    def test_manifest_records_wall_time(self, tmp_path):
        ArtifactStore(tmp_path, 'abc', 0).record('train', ['m.json'], 12.5, {'epochs': 3})
        store = ArtifactStore(tmp_path, 'abc', 0)
        assert store.wall_time('train') == 12.5
        assert store.manifest['stages']['train']['epochs'] == 3
