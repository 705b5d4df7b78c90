import os
import logging
from pathlib import Path

from dotenv import load_dotenv

# Set up logging
logger = logging.getLogger(__name__)

ENV_KEYS = {
    'seed': ('OVAE_SEED', int),
    'threads': ('OVAE_THREADS', int),
    'out_dir': ('OVAE_OUT_DIR', str),
    'log_level': ('OVAE_LOG_LEVEL', str)
}


def load_env_config(env_file=None):
    """
    Load run overrides from the environment, reading a .env file first if present.
    Variables already set in the process environment win over the file.
    """
    env_file = Path(env_file) if env_file else Path(__file__).resolve().parent.parent / '.env'
    if env_file.exists():
        load_dotenv(env_file, override=False)
        logger.debug(f"Loaded environment overrides from {env_file}")

    config = {}
    for key, (variable, cast) in ENV_KEYS.items():
        raw = os.environ.get(variable)
        if raw is None or raw.strip() == '':
            continue
        try:
            config[key] = cast(raw.strip())
        except ValueError as e:
            logger.warning(f"Ignoring {variable}={raw!r}: {e}")
    return config
