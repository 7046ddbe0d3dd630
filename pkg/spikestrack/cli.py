"""Command-line entry point: track, eval, synth, inspect and serve."""
import argparse
import logging
import sys
from typing import List, Optional

from pydantic import ValidationError

from spikestrack import __version__
from spikestrack.core.config import TrackerConfig, config as settings, configure_logging, load_tracker_config
from spikestrack.core.exceptions import ConfigError, SpecError, SpikesError
from spikestrack.services import runner, synthdata
from spikestrack.services.spikes import SCORING_MODES
from spikestrack.utils.sequence_io import filter_by_tag, parse_box, read_sequence_list, read_tag_file

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2


class UsageError(Exception):
    """Invalid command-line usage detected after argument parsing."""


def _box(text: str):
    try:
        return parse_box(text)
    except ValueError as e:
        raise argparse.ArgumentTypeError(str(e))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="spikestrack", description="SPiKeS model-free visual tracker")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--log-level", default=None, help="overrides SPIKES_LOG_LEVEL")
    sub = parser.add_subparsers(dest="command", required=True)

    track = sub.add_parser("track", help="track a target through a sequence directory")
    track.add_argument("sequence_dir")
    track.add_argument("--init", type=_box, default=None, metavar="X,Y,W,H",
                       help="initial box; defaults to the first groundtruth box")
    track.add_argument("--config", default=None, help="tracker configuration file")
    track.add_argument("--output", default="track_output")
    track.add_argument("--overlay", action="store_true", help="write annotated PNG frames")
    track.add_argument("--snapshots", action="store_true", help="write a model snapshot per frame")
    track.add_argument("--threads", type=int, default=None)
    track.add_argument("--search-window", action="store_true")
    track.add_argument("--scoring-mode", choices=SCORING_MODES, default=None,
                       help="override the similarity terms used for matching")
    track.add_argument("--one-indexed", action="store_true", help="groundtruth uses 1-indexed coordinates")

    ev = sub.add_parser("eval", help="one-pass evaluation over a list of sequences")
    ev.add_argument("sequence_list", help="file with one sequence directory per line")
    ev.add_argument("--config", default=None)
    ev.add_argument("--output", default="eval_output")
    ev.add_argument("--oracle", action="store_true", help="echo groundtruth instead of tracking")
    ev.add_argument("--threads", type=int, default=None)
    ev.add_argument("--search-window", action="store_true")
    ev.add_argument("--scoring-mode", choices=SCORING_MODES, default=None,
                    help="full, color_only or structure_only similarity")
    ev.add_argument("--svg", action="store_true", help="also write precision/success plots")
    ev.add_argument("--tags", default=None, help="tag file: 'sequence tag tag ...' per line")
    ev.add_argument("--tag", default=None, help="only evaluate sequences carrying this tag")
    ev.add_argument("--one-indexed", action="store_true")

    synth = sub.add_parser("synth", help="render a synthetic sequence from a JSON scenario")
    synth.add_argument("spec_file")
    synth.add_argument("--output", required=True)

    inspect = sub.add_parser("inspect", help="diagnostics for a model snapshot or a single frame")
    source = inspect.add_mutually_exclusive_group(required=True)
    source.add_argument("--snapshot", default=None)
    source.add_argument("--frame", default=None)
    inspect.add_argument("--config", default=None)
    inspect.add_argument("--box", type=_box, default=None, metavar="X,Y,W,H")
    inspect.add_argument("--superpixels", type=int, default=200, help="superpixel count when no box is given")
    inspect.add_argument("--output", default="inspect_output")

    serve = sub.add_parser("serve", help="run the HTTP job service")
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--port", type=int, default=8000)
    return parser


def _tracker_config(args) -> TrackerConfig:
    cfg = load_tracker_config(getattr(args, "config", None))
    threads = getattr(args, "threads", None)
    if threads is None and settings.THREADS > 1:
        threads = settings.THREADS
    try:
        if threads is not None:
            cfg.threads = threads
        if getattr(args, "search_window", False):
            cfg.search_window = True
        if getattr(args, "scoring_mode", None):
            cfg.scoring_mode = args.scoring_mode
    except ValidationError as e:
        raise ConfigError("threads", e.errors()[0]["msg"]) from e
    return cfg


def cmd_track(args) -> int:
    cfg = _tracker_config(args)
    records = runner.track_sequence(args.sequence_dir, cfg, args.output, init_box=args.init,
                                    overlay=args.overlay, snapshots=args.snapshots, one_indexed=args.one_indexed)
    occluded = sum(r.occluded for r in records)
    print(f"Tracked {len(records)} frames ({occluded} flagged occluded); results in {args.output}")
    return EXIT_OK


def cmd_eval(args) -> int:
    cfg = _tracker_config(args)
    sequence_dirs = read_sequence_list(args.sequence_list)
    if args.tags:
        sequence_dirs = filter_by_tag(sequence_dirs, read_tag_file(args.tags), args.tag)
    if not sequence_dirs:
        raise UsageError(f"no sequences to evaluate in {args.sequence_list}")
    report = runner.evaluate_sequences(sequence_dirs, cfg, args.output, oracle=args.oracle,
                                       threads=cfg.threads, svg=args.svg, one_indexed=args.one_indexed)
    if report.pooled is None:
        print(f"All {len(report.failures)} sequences failed", file=sys.stderr)
        return EXIT_FAILURE
    print(f"{len(report.sequences)} sequences: precision@20 {report.pooled.precision_at_20:.3f}, "
          f"AUC {report.pooled.auc:.3f}; results in {args.output}")
    return EXIT_OK


def cmd_synth(args) -> int:
    spec = synthdata.load_scenario(args.spec_file)
    sequence = synthdata.generate(spec, args.output)
    print(f"Wrote {len(sequence)} frames to {args.output}")
    return EXIT_OK


def cmd_inspect(args) -> int:
    if args.snapshot:
        written = [runner.inspect_snapshot(args.snapshot, args.output)]
    else:
        cfg = _tracker_config(args)
        written = runner.inspect_frame(args.frame, cfg, args.output, box=args.box, n_superpixels=args.superpixels)
    for path in written:
        print(path)
    return EXIT_OK


def cmd_serve(args) -> int:
    import uvicorn

    uvicorn.run("spikestrack.main:app", host=args.host, port=args.port, log_level=(args.log_level or "info").lower())
    return EXIT_OK


COMMANDS = {
    "track": cmd_track,
    "eval": cmd_eval,
    "synth": cmd_synth,
    "inspect": cmd_inspect,
    "serve": cmd_serve,
}


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    configure_logging(args.log_level)
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, SpecError, UsageError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except ValidationError as e:
        first = e.errors()[0]
        field = ".".join(str(part) for part in first.get("loc", ())) or "input"
        print(f"error: {field}: {first['msg']}", file=sys.stderr)
        return EXIT_USAGE
    except (SpikesError, OSError) as e:
        logger.error(f"{args.command} failed: {e}")
        print(f"error: {e}", file=sys.stderr)
        return EXIT_FAILURE
