"""Oriented variational autoencoders for multi-area adequacy sampling."""
from .adequacy import Metric, NetworkModel, SystemState, desk_network, dispatch, margin
from .errors import OvaeError
from .latent_is import ISConfig, fit_em
from .ovae_model import OvaeModel, train

__version__ = '0.1.0'

__all__ = [
    'ISConfig',
    'Metric',
    'NetworkModel',
    'OvaeError',
    'OvaeModel',
    'SystemState',
    'desk_network',
    'dispatch',
    'fit_em',
    'margin',
    'train'
]
