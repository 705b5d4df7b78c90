import argparse
import logging
import sys
from typing import List, Optional

from config.env_config import load_env_config

from .errors import EXIT_OK, OvaeError
from .pipeline import OvaePipeline, load_run_config

logger = logging.getLogger(__name__)

COMMANDS = {
    'synth': 'Generate the synthetic demand dataset and split it into weekly blocks',
    'ingest': 'Load a demand CSV and split it into weekly blocks',
    'label': 'Compute feature labels for training and held-out rows',
    'train': 'Train every configured OVAE variant (and the plain VAE baseline)',
    'fit-is': 'Run the pilot and fit the biased latent density by EM',
    'assess': 'Estimate LOLE/EENS with plain, unbiased-OVAE and IS sampling',
    'stat-tests': 'Compare generated states against the training data (KS, energy, autoencoder)',
    'report': 'Assemble the adequacy, correlation and histogram tables',
    'run': 'Run every stage in order'
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog='ovae', description='Oriented VAE sampling for adequacy assessment')
    subparsers = parser.add_subparsers(dest='command', required=True)
    for name, help_text in COMMANDS.items():
        sub = subparsers.add_parser(name, help=help_text)
        sub.add_argument('--config', help='Run configuration TOML')
        sub.add_argument('--seed', type=int, help='Override the run seed')
        sub.add_argument('--threads', type=int, help='Worker threads inside a stage')
        sub.add_argument('--out', help='Run directory')
        sub.add_argument('--force', action='store_true', help='Accept upstream artifacts from another config')
    return parser


def _overrides(args: argparse.Namespace) -> dict:
    env = load_env_config()
    cli = {'seed': args.seed, 'threads': args.threads, 'out_dir': args.out}
    merged = {**env, **{k: v for k, v in cli.items() if v is not None}}
    return merged


def cmd_synth(pipeline: OvaePipeline):
    pipeline.synth()


def cmd_ingest(pipeline: OvaePipeline):
    pipeline.ingest()


def cmd_label(pipeline: OvaePipeline):
    pipeline.label()


def cmd_train(pipeline: OvaePipeline):
    pipeline.train()


def cmd_fit_is(pipeline: OvaePipeline):
    pipeline.fit_is()


def cmd_assess(pipeline: OvaePipeline):
    pipeline.assess()


def cmd_stat_tests(pipeline: OvaePipeline):
    pipeline.stat_tests()


def cmd_report(pipeline: OvaePipeline):
    pipeline.report()


HANDLERS = {
    'synth': cmd_synth,
    'ingest': cmd_ingest,
    'label': cmd_label,
    'train': cmd_train,
    'fit-is': cmd_fit_is,
    'assess': cmd_assess,
    'stat-tests': cmd_stat_tests,
    'report': cmd_report,
    'run': lambda pipeline: pipeline.run_all()
}


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        overrides = _overrides(args)
        cfg = load_run_config(args.config, overrides)
        level = getattr(logging, cfg.log_level.upper(), logging.INFO)
        logging.basicConfig(level=level, format='%(asctime)s %(levelname)s %(name)s: %(message)s')
        pipeline = OvaePipeline(cfg, force=args.force, show_progress=level <= logging.INFO)
        HANDLERS[args.command](pipeline)
    except OvaeError as e:
        logger.error(str(e))
        print(f"error: {e}", file=sys.stderr)
        return e.exit_code
    return EXIT_OK


if __name__ == '__main__':
    sys.exit(main())
