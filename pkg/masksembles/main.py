#!/usr/bin/env python3
# PYTHON_ARGCOMPLETE_OK

"""
Experiment runner for Masksembles: ensembles of sub-networks carved out of one
MLP by a fixed pool of binary masks with controlled overlap.

Commands:

    masks              generate a mask pool and print its properties
    train              train one model, write checkpoint + loss history + report
    eval               evaluate a checkpoint (accuracy, ECE, entropy, OOD AUCs)
    sweep-transition   single model -> Masksembles(S) -> ensemble on the toy task
    sweep-surface      trimmed size and mask IoU over a grid of N and S
    sweep-diversity    pairwise sub-model diversity vs accuracy over S

Experiment parameters come from built-in defaults, an optional ``--config``
file of ``key=value`` lines and ``--key value`` overrides, in that order:

    masksembles sweep-transition --runs 5 --s-values 1.1,2,3,10 --out runs/

Every output is a function of the configuration and the seed only; running a
command twice gives byte-identical files.
"""

import logging
import os
import sys
from argparse import ArgumentParser
from argparse import SUPPRESS
from functools import partial

import argcomplete
from rich.console import Console
from rich_argparse import RichHelpFormatter

from masksembles import const
from masksembles.config import ExperimentConfig
from masksembles.config import load_config
from masksembles.config import parse_override_args
from masksembles.env import load_dotenv
from masksembles.env import workers as default_workers
from masksembles.errors import MasksemblesError
from masksembles.errors import ValidationError
from masksembles.experiments import evaluate_severities
from masksembles.experiments import make_grid
from masksembles.experiments import make_test_set
from masksembles.experiments import run_diversity
from masksembles.experiments import run_surface
from masksembles.experiments import run_train
from masksembles.experiments import run_transition
from masksembles.files import ensure_dir
from masksembles.inout import load_checkpoint
from masksembles.inout import load_dataset
from masksembles.inout import save_masks
from masksembles.inout import save_metrics
from masksembles.inout import save_reliability
from masksembles.inout import write_csv
from masksembles.log import enable_console_logging
from masksembles.log import masksembles_logger as logger
from masksembles.masks import MaskSpec
from masksembles.masks import empirical_mean_iou
from masksembles.masks import expected_intersection
from masksembles.masks import expected_iou
from masksembles.masks import expected_retention_probability
from masksembles.masks import expected_size
from masksembles.masks import generate_masks
from masksembles.masks import solve_m_for_fixed_width
from masksembles.ui import print_error
from masksembles.ui import print_info
from masksembles.ui import print_json
from masksembles.ui import print_table
from masksembles.ui import stdout_supports_rich

EXIT_VALIDATION = 2
EXIT_RUNTIME = 3


RichHelpFormatter.styles.update({
    'argparse.args': 'bold cyan',
    'argparse.groups': 'bold dark_orange',
    'argparse.help': 'default',
    'argparse.metavar': 'bold cyan',
    'argparse.prog': 'bold green',
    'argparse.syntax': 'bold yellow',
})


def make_help_formatter(*args, **kwargs):
    rich_enabled = stdout_supports_rich()
    console = Console(
        color_system='standard' if rich_enabled else None,
        force_terminal=rich_enabled,
        highlight=False,
        soft_wrap=True,
    )
    return RichHelpFormatter(*args, console=console, **kwargs)


def print_rows(args, columns, rows):
    if args.json:
        print_json([dict(zip(columns, row)) for row in rows])
    else:
        print_table(columns, rows)


def experiment_config(args, **defaults) -> ExperimentConfig:
    """Defaults of the command, then --config, then the global flags and --key overrides."""
    overrides = []
    for name in ('seed', 'out', 'workers'):
        value = getattr(args, name, None)
        if value is not None:
            overrides.append((name, str(value)))
    overrides.extend(args.overrides)
    defaults.setdefault('workers', default_workers())
    return load_config(args.config, overrides, **defaults)


def show_masks(args):
    if args.overrides:
        raise ValidationError('unknown arguments: %s' % ' '.join(key for key, _ in args.overrides))
    seed = const.DEFAULT_SEED if args.seed is None else args.seed
    if args.fixed_width is not None:
        spec = solve_m_for_fixed_width(args.fixed_width, args.n, args.s, seed)
        trim = False
    else:
        spec = MaskSpec(args.n, args.m, args.s, seed)
        trim = not args.no_trim
    mask_set = generate_masks(spec, trim)
    path = args.path or os.path.join(ensure_dir(args.out or '.'), const.MASKS_FILE)
    save_masks(mask_set, path)

    summary = [
        ('path', path),
        ('n', spec.n),
        ('m', spec.m),
        ('s', float(spec.s)),
        ('width', mask_set.pre_trim_width),
        ('k', mask_set.k),
        ('dropped', mask_set.dropped_count),
        ('empirical_iou', empirical_mean_iou(mask_set) if mask_set.n >= 2 else 1.0),
        ('expected_iou', expected_iou(spec.s)),
        ('expected_size', expected_size(spec)),
        ('expected_intersection', expected_intersection(spec)),
        ('retention_probability', expected_retention_probability(spec)),
    ]
    if args.json:
        print_json(dict(summary))
    else:
        print_table(['property', 'value'], summary)
    return 0


def train_model(args):
    config = experiment_config(args)
    _, evaluation = run_train(config)
    print_rows(args, const.METRICS_CSV_HEADER, [evaluation.report.to_row()])
    print_info('Wrote %s' % os.path.join(config.out, const.CHECKPOINT_FILE))
    return 0


def severity_path(path, severity, sweep):
    if not sweep:
        return path
    root, extension = os.path.splitext(path)
    return '%s-severity%d%s' % (root, severity, extension)


def evaluate_model(args):
    config = experiment_config(args)
    out = ensure_dir(config.out)
    model = load_checkpoint(args.checkpoint or os.path.join(config.out, const.CHECKPOINT_FILE))
    test = load_dataset(args.data) if args.data else make_test_set(config, config.seed)
    ood = load_dataset(args.ood) if args.ood else make_grid(config)

    evaluations = evaluate_severities(model, test, ood, '%s/%s' % (args.tag, config.score), config.severities,
                                      config.seed, config.bins, config.score, config.workers, args.timing)
    sweep = len(evaluations) > 1
    save_metrics([evaluation.report for evaluation in evaluations], os.path.join(out, const.EVAL_METRICS_FILE))
    for severity, evaluation in zip(config.severities, evaluations):
        save_reliability(evaluation.diagram,
                         severity_path(os.path.join(out, const.EVAL_RELIABILITY_FILE), severity, sweep))
        if args.dump_scores:
            write_csv(severity_path(args.dump_scores, severity, sweep), const.SCORES_CSV_HEADER,
                      zip(evaluation.scores, evaluation.is_ood))
    print_rows(args, const.METRICS_CSV_HEADER, [evaluation.report.to_row() for evaluation in evaluations])
    return 0


def sweep_transition(args):
    config = experiment_config(args, n_values=(const.DEFAULT_N,), m=const.DEFAULT_M,
                               s_values=const.DEFAULT_TRANSITION_SCALES)
    print_rows(args, const.TRANSITION_CSV_HEADER, run_transition(config))
    return 0


def sweep_surface(args):
    config = experiment_config(args, n_values=const.DEFAULT_SURFACE_NS, m=const.DEFAULT_SURFACE_M,
                               s_values=const.DEFAULT_SURFACE_SCALES)
    print_rows(args, const.SURFACE_CSV_HEADER, run_surface(config))
    return 0


def sweep_diversity(args):
    config = experiment_config(args, n_values=(const.DEFAULT_N,), m=const.DEFAULT_M,
                               s_values=const.DEFAULT_DIVERSITY_SCALES, include_dropout=False)
    print_rows(args, const.DIVERSITY_CSV_HEADER, run_diversity(config))
    return 0


def no_command(parser, args):
    print_error('No command has been specified')
    parser.print_help()
    return 1


def add_global_arguments(parser, default=None):
    parser.add_argument('--seed', type=int, default=default,
                        help='Master seed (default: %d)' % const.DEFAULT_SEED)
    parser.add_argument('--out', type=str, default=default,
                        help='Output directory (default: current directory)')
    parser.add_argument('--config', type=str, default=default,
                        help='Experiment config file with key=value lines')
    parser.add_argument('--workers', type=int, default=default,
                        help='Worker threads for sweep cells and mask passes '
                             '(default: $MASKSEMBLES_WORKERS or 1)')
    parser.add_argument('--verbose', action='store_true', default=False if default is None else default,
                        help='Log to stderr')
    parser.add_argument('--json', action='store_true', default=False if default is None else default,
                        help='Pretty JSON output (colored on terminals)')


def build_parser():
    parser = ArgumentParser(
        formatter_class=make_help_formatter,
        allow_abbrev=False,
        description='masksembles trains and evaluates mask-pool ensembles of small MLPs and '
                    'runs the sweeps between a single model and a full ensemble. Any experiment '
                    'parameter can be set with --key value.')
    add_global_arguments(parser)

    subparsers = parser.add_subparsers(dest='command')
    parser.set_defaults(func=partial(no_command, parser))

    parser_masks = subparsers.add_parser(
        'masks', allow_abbrev=False,
        help='Generate a mask pool, save it and print its size and overlap next to the '
             'expected values')
    parser_masks.set_defaults(func=show_masks)
    parser_masks.add_argument('--n', type=int, default=const.DEFAULT_N, help='Number of masks')
    parser_masks.add_argument('--m', type=int, default=const.DEFAULT_M, help='Ones per mask')
    parser_masks.add_argument('--s', type=float, default=2.0, help='Scale, >= 1; larger means less overlap')
    parser_masks.add_argument('--no-trim', action='store_true', default=False,
                              help='Keep positions no mask uses')
    parser_masks.add_argument('--fixed-width', type=int, default=None, metavar='WIDTH',
                              help='Solve M for this layer width (ignores --m, implies --no-trim)')
    parser_masks.add_argument('--path', type=str, default=None,
                              help='Mask file to write (default: <out>/%s)' % const.MASKS_FILE)

    parser_train = subparsers.add_parser(
        'train', allow_abbrev=False,
        help='Train one model (first N and S of the grid, or model=single) and write '
             'checkpoint, loss history, datasets and a metrics report to --out')
    parser_train.set_defaults(func=train_model)

    parser_eval = subparsers.add_parser(
        'eval', allow_abbrev=False,
        help='Evaluate a checkpoint: mixture of all masks, metrics CSV row and reliability diagram')
    parser_eval.set_defaults(func=evaluate_model)
    parser_eval.add_argument('--checkpoint', type=str, default=None,
                             help='Checkpoint file (default: <out>/%s)' % const.CHECKPOINT_FILE)
    parser_eval.add_argument('--data', type=str, default=None,
                             help='Labelled test set CSV (default: generated from the seed)')
    parser_eval.add_argument('--ood', type=str, default=None,
                             help='OOD set CSV, every point counts as OOD (default: the entropy grid)')
    parser_eval.add_argument('--severity', dest='severities', type=str, default=SUPPRESS, metavar='SEVERITIES',
                             help='Gaussian corruption severities 0..%d of the test set, comma-separated; '
                                  'several give one report row and reliability file per severity (default: 0)'
                                  % const.MAX_SEVERITY)
    parser_eval.add_argument('--dump-scores', type=str, default=None, metavar='PATH',
                             help='Write per-sample OOD scores and flags to this CSV')
    parser_eval.add_argument('--timing', action='store_true', default=False,
                             help='Record wall time (otherwise 0 so that reports are reproducible)')
    parser_eval.add_argument('--tag', type=str, default='eval', help='Tag column prefix')
    parser_eval.add_argument('--bins', type=int, default=SUPPRESS,
                             help='ECE bins (default: %d)' % const.DEFAULT_ECE_BINS)
    parser_eval.add_argument('--score', type=str, choices=const.OOD_SCORES, default=SUPPRESS,
                             help='OOD score (default: %s)' % const.DEFAULT_OOD_SCORE)

    parser_transition = subparsers.add_parser(
        'sweep-transition', allow_abbrev=False,
        help='Train Masksembles for every S plus single, ensemble and MC-dropout baselines and '
             'write the predictive entropy over the OOD grid')
    parser_transition.set_defaults(func=sweep_transition)

    parser_surface = subparsers.add_parser(
        'sweep-surface', allow_abbrev=False,
        help='Relative model size and mask IoU over a grid of N and S, empirical and analytical')
    parser_surface.set_defaults(func=sweep_surface)

    parser_diversity = subparsers.add_parser(
        'sweep-diversity', allow_abbrev=False,
        help='Pairwise diversity and accuracy of sub-models for every S, plus single and ensemble')
    parser_diversity.set_defaults(func=sweep_diversity)

    seen_subparsers = set()
    for subparser in subparsers.choices.values():
        if id(subparser) in seen_subparsers:
            continue
        seen_subparsers.add(id(subparser))
        add_global_arguments(subparser, default=SUPPRESS)

    return parser


def parse_args(args):
    parser = build_parser()
    argcomplete.autocomplete(parser)
    args, extra = parser.parse_known_args(args)
    args.extra = extra
    return args


def run_commands(args):
    args = parse_args(args)
    if args.verbose:
        enable_console_logging(logging.DEBUG)
    result = 0
    try:
        args.overrides = parse_override_args(args.extra)
        # eval flags that are also config keys
        args.overrides.extend((name, str(getattr(args, name))) for name in ('bins', 'score', 'severities')
                              if hasattr(args, name))
        logger.info('Running %s', args.command)
        result = args.func(args)
    except BrokenPipeError:
        pass
    except (ValidationError, FileNotFoundError) as e:
        logger.exception('Invalid input')
        print_error(str(e))
        result = EXIT_VALIDATION
    except MasksemblesError as e:
        logger.exception('Command failed')
        print_error(str(e))
        result = EXIT_RUNTIME
    return result


def main():
    load_dotenv()
    exit(run_commands(sys.argv[1:]))


if __name__ == '__main__':
    main()
