# Configuration settings
NN_CONFIG = {
    'adam_beta1': 0.9,
    'adam_beta2': 0.999,
    'adam_epsilon': 1e-8,
    'head_init_scale': 0.01,
    'format_version': 1
}

OVAE_CONFIG = {
    'beta': 5.0,
    'epochs': 650,
    'batch_size': 64,
    'learning_rate': 1e-4,
    'latent_dim': 4,
    'hidden_sizes': (64, 64, 64),
    'labeled_fraction': 1.0,
    'feature': 'total_load',
    'orientation': True,
    'bundle_version': 1
}

IS_CONFIG = {
    'alpha': 0.1,
    'pilot_size': 100_000,
    'em_max_iter': 200,
    'em_tol': 1e-8,
    'sigma_floor': 1e-3
}

QP_CONFIG = {
    'feasibility_tol': 1e-8,
    'condition_limit': 1e12,
    'max_iter': 1000,
    'lp_regularization': 1e-8,
    'lp_objective_shift_tol': 1e-6,
    'flow_regularization': 1e-10
}

ADEQUACY_CONFIG = {
    'availability': 0.8,
    'wind_share': 0.15,
    'max_unit_size': 500,
    'epns_zero_threshold': 1e-9,
    'hours_per_year': 8760,
    'label_draws': 100
}

STATS_CONFIG = {
    'subsample_size': 66,
    'permutations': 200,
    'ks_repetitions': 5000,
    'energy_repetitions': 1000,
    'histogram_bins': 50,
    'biased_offsets': ((2.0, 0.5), (-2.0, 0.5))
}

SYNTH_CONFIG = {
    'n_areas': 5,
    'hours': 17_520,
    'seed': 2017,
    'base_load': (1000.0, 1500.0, 800.0, 1200.0, 600.0),
    'seasonal_amplitude': 0.15,
    'diurnal_amplitude': 0.10,
    'correlation': 0.7,
    'noise_scale': 0.05,
    'start': '2017-01-01 00:00'
}

SPLIT_CONFIG = {
    'block_hours': 168,
    'train_blocks': 4,
    'test_blocks': 1
}

PATHS = {
    'manifest': 'manifest.json',
    'dataset': 'dataset.csv',
    'dataset_meta': 'dataset_meta.json',
    'labels': 'labels.csv',
    'model_bundle': 'model_{variant}.json',
    'vae_bundle': 'vae.json',
    'vae_loss_history': 'loss_history_vae.csv',
    'loss_history': 'loss_history_{variant}.csv',
    'pilot': 'pilot_{variant}.csv',
    'is_fit': 'is_fit.json',
    'estimates': 'estimates.csv',
    'stat_tests': 'stat_tests_{test}.csv',
    'stat_summary': 'stat_tests_summary.json',
    'adequacy_table': 'adequacy_table.csv',
    'correlation_table': 'correlation_table.csv',
    'histograms': 'histograms.csv'
}

# Bundled 5-area system: ring plus one chord. Mirrors configs/desk_network.toml.
DESK_NETWORK = {
    'area': [
        {'name': 'north', 'conventional_capacity': 1800, 'wind_nameplate': 300, 'availability': 0.8},
        {'name': 'east', 'conventional_capacity': 2800, 'wind_nameplate': 500, 'availability': 0.8},
        {'name': 'south', 'conventional_capacity': 1500, 'wind_nameplate': 200, 'availability': 0.8},
        {'name': 'west', 'conventional_capacity': 2200, 'wind_nameplate': 400, 'availability': 0.8},
        {'name': 'central', 'conventional_capacity': 1200, 'wind_nameplate': 100, 'availability': 0.8}
    ],
    'line': [
        {'from': 'north', 'to': 'east', 'f_min': -400, 'f_max': 400},
        {'from': 'east', 'to': 'south', 'f_min': -500, 'f_max': 500},
        {'from': 'south', 'to': 'west', 'f_min': -400, 'f_max': 400},
        {'from': 'west', 'to': 'central', 'f_min': -300, 'f_max': 300},
        {'from': 'north', 'to': 'central', 'f_min': -300, 'f_max': 300},
        {'from': 'north', 'to': 'south', 'f_min': -350, 'f_max': 350}
    ]
}
