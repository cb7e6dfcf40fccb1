"""
Command-line interface.

    landscapy run --config run.json --stages model,simulate --seed 42 --out artifacts
    landscapy export --kind landscape_slice --in artifacts --out slices.csv --x -88 -48 -8
    landscapy init-config --preset desk --out run.json
"""
import argparse
import logging
import sys
from typing import List, Optional

from . import __version__
from .config import RunConfig
from .exceptions import LandscapyError, LandscapyValidationError, MissingArtifactError
from .pipeline import EXPORT_KINDS, STAGES, export_plotdata, run_pipeline

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_INVALID = 2
EXIT_MISSING = 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog='landscapy',
        description='Simulate beam traverses and reconstruct potential energy landscapes.')
    parser.add_argument('--version', action='version', version=f'%(prog)s {__version__}')
    parser.add_argument('--log-level', default='INFO',
                        choices=['DEBUG', 'INFO', 'WARNING', 'ERROR'])
    sub = parser.add_subparsers(dest='command', required=True)

    run = sub.add_parser('run', help='Run pipeline stages')
    run.add_argument('--config', help='Run configuration (JSON); desk preset when omitted')
    run.add_argument('--stages', default='all',
                     help=f"Comma-separated subset of {','.join(STAGES)}, or 'all'")
    run.add_argument('--seed', type=int, help='Master seed (overrides the configuration)')
    run.add_argument('--out', required=True, help='Artifact directory')
    run.add_argument('--workers', type=int, help='Worker processes')

    export = sub.add_parser('export', help='Write plot data from an artifact directory')
    export.add_argument('--kind', required=True, choices=EXPORT_KINDS)
    export.add_argument('--in', dest='artifact', required=True, help='Artifact directory')
    export.add_argument('--out', required=True, help='Output CSV')
    export.add_argument('--x', type=float, nargs='+', help='Slice positions (mm)')
    export.add_argument('--beam', choices=['left', 'right'], help='Restrict force_vs_x to one beam')
    export.add_argument('--landscape', default='model',
                        help="Landscape to slice: model, rigid or <source>_f<tag>")
    export.add_argument('--smooth', action='store_true', help='Apply display smoothing')

    init = sub.add_parser('init-config', help='Write a fully populated configuration')
    init.add_argument('--preset', default='desk', choices=['desk', 'full'])
    init.add_argument('--out', required=True, help='Output JSON')
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """
    Entry point.

    Returns:
        0 on success, 2 on an invalid configuration or argument, 3 on a missing
        artifact, 1 on any other library error
    """
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=getattr(logging, args.log_level),
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
    )
    try:
        if args.command == 'run':
            config = RunConfig.from_json(args.config) if args.config else RunConfig.desk()
            out = run_pipeline(config, args.stages, args.out, seed=args.seed, workers=args.workers)
            logger.info(f"Artifacts in {out}")
        elif args.command == 'export':
            export_plotdata(args.artifact, args.kind, args.out, x_values=args.x, beam=args.beam,
                            landscape=args.landscape, smooth=args.smooth)
        else:
            path = RunConfig.preset(args.preset).to_json(args.out)
            logger.info(f"Wrote {args.preset} configuration to {path}")
    except MissingArtifactError as e:
        logger.error(str(e))
        return EXIT_MISSING
    except LandscapyValidationError as e:
        logger.error(f"Invalid configuration: {e}")
        return EXIT_INVALID
    except LandscapyError as e:
        logger.error(str(e))
        return EXIT_ERROR
    return EXIT_OK


if __name__ == '__main__':
    sys.exit(main())
