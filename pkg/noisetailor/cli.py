"""
The `noisetailor` command line.

    noisetailor [-v | -q] <command> CONFIG [options]

Commands run one pipeline stage each (`gen-noise`, `pnt`, `plan`, `report`)
or a whole trial (`run`, `reproduce-figures`). Records are read from and
written to the config's output directory. Exit codes: 0 on success, 2 for
an invalid config and 3 + the stage index for a stage failure.
"""

import argparse
import logging
import sys

from blinker import signal

from noisetailor.simulator import NoiseModel
from noisetailor.tomography import TomographyResult
from noisetailor.trials import (
    ConfigError,
    ExperimentConfig,
    StageFailure,
    TRIALS,
    generate_noise,
    load_plans,
    make_plans,
    record_stores,
    report_outputs,
    reproduce_figures,
    run_tomography,
    run_trial,
    stage
    )
from noisetailor.mitigation import MitigationPlan

__all__ = [
    'build_parser',
    'main'
    ]


logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2

LOG_FORMAT = '%(asctime)s %(levelname)s %(name)s: %(message)s'

# Record classes whose inserts are logged
STORED_RECORDS = (NoiseModel, TomographyResult, MitigationPlan)


# Signal listeners

def _on_stage_started(sender, stage, **kwargs):
    logger.info('Stage %s started', stage)


def _on_stage_finished(sender, stage, elapsed, **kwargs):
    logger.info('Stage %s finished in %.2fs', stage, elapsed)


def _on_records_inserted(sender, records, **kwargs):
    for record in records:
        logger.debug('Stored %s', sender.get_path(record._id))


def _on_circuit_batch(sender, stage, done, total, **kwargs):
    logger.debug('Stage %s: %d/%d batches', stage, done, total)


# Commands

def _gen_noise(config, args):
    with stage('gen-noise', config):
        model = generate_noise(config)
        model.insert()
        if args.out:
            model.to_file(args.out)
    print(NoiseModel.get_path(model._id))


def _pnt(config, args):
    model = None
    if not args.noise:
        with stage('gen-noise', config):
            model = generate_noise(config)

    with stage('pnt', config):
        if model is None:
            model = NoiseModel.from_file(args.noise)
        results = TomographyResult.insert_many(run_tomography(config, model))

    for result in results:
        print(TomographyResult.get_path(result._id))


def _plan(config, args):
    with stage('plan', config):
        if args.tomography:
            results = [TomographyResult.from_file(p) for p in args.tomography]
        else:
            results = TomographyResult.many()

        if not results:
            raise ValueError('No tomography results to plan from')
        plans = make_plans(config, results)
        MitigationPlan.insert_many(list(plans.values()))

    for (observable, t), plan in sorted(plans.items(), key=lambda i: i[0][::-1]):
        gammas = ' '.join(
            '{0}:{1:.6f}'.format(j, g) for j, g in sorted(plan.gammas.items())
            )
        print('{0} t={1!r} sigma={2:.6f} f_nec={3:.6f} {4}'.format(
            observable,
            t,
            plan.sigma,
            plan.f_nec,
            gammas
            ))


def _run(config, args):
    manifest = run_trial(config)
    print(manifest.get_path(manifest._id))


def _report(config, args):
    with stage('report', config):
        reports = report_outputs(
            config,
            load_plans(config.trial),
            TomographyResult.many()
            )
        for report in reports.values():
            report.insert()

    for (label, subset), report in sorted(reports.items()):
        if label == 'diagnostics':
            print('diagnostics delta_nt={0!r} delta_c_unk={1!r} delta_unk={2!r}'
                .format(report.delta_nt, report.delta_c_unk, report.delta_unk))
        else:
            print('{0} {1} zeta={2!r}'.format(label, subset, report.zeta))


def _reproduce_figures(config, args):
    reproduce_figures(config)
    print(config.output)


COMMANDS = {
    'gen-noise': _gen_noise,
    'pnt': _pnt,
    'plan': _plan,
    'run': _run,
    'report': _report,
    'reproduce-figures': _reproduce_figures
    }


def build_parser():
    parser = argparse.ArgumentParser(
        prog='noisetailor',
        description='Noise tailoring and NEC mitigation experiments'
        )

    verbosity = parser.add_mutually_exclusive_group()
    verbosity.add_argument(
        '-v',
        '--verbose',
        action='store_true',
        help='log debug messages'
        )
    verbosity.add_argument(
        '-q',
        '--quiet',
        action='store_true',
        help='only log errors'
        )

    commands = parser.add_subparsers(dest='command', metavar='command')
    commands.required = True

    parsers = {}
    for name, help_text in (
        ('gen-noise', 'generate (or load) the noise model'),
        ('pnt', 'run Pauli noise tomography against a noise model'),
        ('plan', 'compute the mitigation plans of a trial'),
        ('run', 'run a whole trial'),
        ('report', 'build the reports of a trial from its outputs'),
        ('reproduce-figures', 'run T1-T4 and write plot data')
    ):
        command = commands.add_parser(name, help=help_text)
        command.add_argument('config', help='the experiment config file')
        command.add_argument('--output', help='override the output directory')
        command.add_argument('--seed', type=int, help='override the seed')
        command.add_argument('--trial', choices=TRIALS, help='override the trial')
        command.add_argument('--n-nt', type=int, help='override N_NT')
        command.add_argument('--workers', type=int, help='override the workers')
        parsers[name] = command

    parsers['gen-noise'].add_argument(
        '-o',
        '--out',
        help='also write the model to this file'
        )
    parsers['pnt'].add_argument(
        '--noise',
        help='a noise model file (generated from the config if omitted)'
        )
    parsers['plan'].add_argument(
        '--tomography',
        nargs='+',
        help='tomography result files (the stored results if omitted)'
        )

    return parser


def _configure_logging(args):
    level = logging.INFO
    if args.verbose:
        level = logging.DEBUG
    elif args.quiet:
        level = logging.ERROR
    logging.basicConfig(level=level, format=LOG_FORMAT)


def _load_config(args):
    config = ExperimentConfig.load(args.config)
    overrides = {
        'output': args.output,
        'seed': args.seed,
        'trial': args.trial,
        'n_nt': args.n_nt,
        'workers': args.workers
        }
    overrides = {k: v for k, v in overrides.items() if v is not None}
    if overrides:
        config = config.replace(**overrides)
    return config


def main(argv=None):
    args = build_parser().parse_args(argv)
    _configure_logging(args)

    try:
        config = _load_config(args)
    except ConfigError as error:
        logger.error('Invalid config: %s', error)
        return EXIT_CONFIG

    listeners = (
        ('stage-started', _on_stage_started),
        ('stage-finished', _on_stage_finished),
        ('circuit-batch', _on_circuit_batch)
        )
    for event, listener in listeners:
        signal(event).connect(listener)
    for cls in STORED_RECORDS:
        cls.listen('inserted', _on_records_inserted)

    try:
        with record_stores(config.output):
            COMMANDS[args.command](config, args)

    except StageFailure as failure:
        logger.error('Stage %s failed: %s', failure.stage, failure.cause)
        return failure.exit_code

    finally:
        for event, listener in listeners:
            signal(event).disconnect(listener)
        for cls in STORED_RECORDS:
            cls.stop_listening('inserted', _on_records_inserted)

    return EXIT_OK


if __name__ == '__main__':
    sys.exit(main())
