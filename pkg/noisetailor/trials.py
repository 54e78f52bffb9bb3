"""
Experiment orchestration: the configuration, the pipeline stages (noise
generation, tomography, planning, emulation and reporting) and the trials
built from them.

Trials:

- T1, the raw (fitted) Pauli noise + NEC
- T2, the optimal depolarizing target + NEC
- T3, finite NT sampling of the optimal target + NEC
- T4, the average-matched depolarizing target + NEC
- DIAG, T3 with and without injected extra noise and the error
  decomposition
"""

from concurrent import futures
import contextlib
import copy
import csv
import logging
import math
import os
import time

from blinker import signal
import numpy as np
import scipy

from noisetailor import __version__, seeds
from noisetailor.analysis import (
    AWAEReport,
    DiagnosticsReport,
    FitFailure,
    InsufficientData,
    awae,
    bootstrap_curve,
    diagnostics,
    extrapolate
    )
from noisetailor.bcs_bench import (
    BcsParams,
    default_pairs,
    observable_set,
    reference_table,
    trotter_circuit,
    write_reference_csv
    )
from noisetailor.compiling import dress_batch
from noisetailor.factory import synthetic_model
from noisetailor.mitigation import (
    MitigationPlan,
    build_plan,
    matched_targets,
    mitigate,
    nec_circuit,
    optimize_target
    )
from noisetailor.records import Record
from noisetailor.simulator import (
    DensityMatrix,
    ModelCoverageError,
    NoiseModel,
    expectation,
    run_circuit
    )
from noisetailor.tomography import (
    TomographyResult,
    fit_all,
    generate_pnt_circuits,
    measure_pnt
    )

__all__ = [
    # Exceptions
    'ConfigError',
    'StageFailure',

    # Types
    'ExperimentConfig',
    'RunManifest',

    # Stages
    'generate_noise',
    'make_plans',
    'report_outputs',
    'run_emulation',
    'run_tomography',

    # Trials
    'load_plans',
    'record_stores',
    'reproduce_figures',
    'run_trial',
    'stage'
    ]


logger = logging.getLogger(__name__)


# Pipeline stages in execution order (the CLI exit code of a failure is
# 3 + the stage's index).
STAGES = ('gen-noise', 'pnt', 'plan', 'run', 'report', 'reproduce-figures')

TRIALS = ('T1', 'T2', 'T3', 'T4', 'DIAG')

# Trials that sample NT circuits
SAMPLED_TRIALS = {'T3', 'DIAG'}

# The fewest NT circuits a sampled trial accepts
MIN_N_NT = 100

DEFAULTS = {
    'bcs': {
        'energies': [1.0, 1.5, 2.0],
        'coupling': 1.0,
        'dt': 0.2,
        'n_steps': 15,
        'initial': '+++'
        },
    'layout': {
        'n_qubits': 3,
        'junctions': [[0, 1], [1, 2], [0, 2]],
        'neighbors': {},
        'aliases': {}
        },
    'noise': {
        'source': 'synthetic',
        'path': None,
        'mean_error': 0.01,
        'dispersion': 1.0,
        'crosstalk': False,
        'eps_neigh': 0.0,
        'eps_glob': 0.0,
        'coherent_strength': 0.0,
        'single_qubit_rate': 0.0,
        'readout_flip': 0.0,
        'global_depolarizing': 0.0
        },
    'pnt': {
        'depths': [1, 2, 4, 8, 16],
        'n_rc': 200,
        'shots': 100,
        'analytic': False,
        'both_directions': False,
        'n_boot': 1000
        },
    'trial': 'T1',
    'n_nt': 10000,
    'shots': 1,
    'workers': 1,
    'seed': 0,
    'output': 'output',
    'fit_max_n': 1000,
    'batch_size': 100,
    'time_subset': 'last-two',
    'emulation_mode': 'trajectory'
    }


class ConfigError(ValueError):
    """
    Raised when an experiment configuration is invalid.
    """


class StageFailure(Exception):
    """
    Raised when a pipeline stage fails, carrying the stage's name.
    """

    def __init__(self, stage, cause):
        super().__init__('{0}: {1}'.format(stage, cause))
        self.stage = stage
        self.cause = cause

    @property
    def exit_code(self):
        return 3 + STAGES.index(self.stage)


def _merge(defaults, overrides, path=''):
    """Return `defaults` updated key-by-key with `overrides`"""
    merged = copy.deepcopy(defaults)
    for key, value in (overrides or {}).items():
        if key not in defaults:
            raise ConfigError('Unknown config key {0!r}'.format(path + key))

        if isinstance(merged.get(key), dict) and isinstance(value, dict) \
                and merged[key]:
            merged[key] = _merge(merged[key], value, path + key + '.')
        else:
            merged[key] = copy.deepcopy(value)
    return merged


def _junction_id(pair):
    return '{0}-{1}'.format(*pair)


class ExperimentConfig(Record):
    """
    A validated experiment configuration. Missing keys take their default
    value from `DEFAULTS`.
    """

    _fields = set(DEFAULTS)

    def __init__(self, *args, **kwargs):
        document = dict(args[0]) if args else dict(kwargs)
        _id = document.pop('_id', None)
        super().__init__(_merge(DEFAULTS, document))
        if _id:
            self._id = _id
        self.validate()

    def validate(self):
        """Raise `ConfigError` for an invalid configuration"""
        bcs = self.bcs
        layout = self.layout
        noise = self.noise
        n_qubits = layout['n_qubits']

        if self.trial not in TRIALS:
            raise ConfigError('Unknown trial {0!r}'.format(self.trial))

        if self.trial in SAMPLED_TRIALS and self.n_nt < MIN_N_NT:
            raise ConfigError(
                '{0} needs n_nt >= {1}'.format(self.trial, MIN_N_NT)
                )

        if len(bcs['energies']) != n_qubits:
            raise ConfigError(
                'Got {0} onsite energies for {1} qubits'.format(
                    len(bcs['energies']),
                    n_qubits
                    )
                )

        if bcs['dt'] <= 0:
            raise ConfigError('dt must be > 0')

        if bcs['n_steps'] < 1:
            raise ConfigError('n_steps must be >= 1')

        for pair in layout['junctions']:
            if len(pair) != 2 or pair[0] == pair[1] \
                    or not all(0 <= q < n_qubits for q in pair):
                raise ConfigError('Invalid junction {0!r}'.format(pair))

        known = {_junction_id(p) for p in layout['junctions']}
        for pair in default_pairs(n_qubits):
            if self.circuit_junction(pair) not in known:
                raise ConfigError(
                    'Pair {0} has no junction in the layout'.format(
                        _junction_id(pair)
                        )
                    )

        if noise['source'] not in ('synthetic', 'file'):
            raise ConfigError('Unknown noise source {0!r}'.format(noise['source']))

        if noise['source'] == 'file' and not noise['path']:
            raise ConfigError('A file noise source needs a path')

        if min(self.pnt['depths']) != 1 or 2 not in self.pnt['depths']:
            raise ConfigError('PNT depths must include 1 and 2')

        if self.time_subset not in ('all', 'last-two'):
            raise ConfigError('Unknown time subset {0!r}'.format(self.time_subset))

        if self.emulation_mode not in ('trajectory', 'channel'):
            raise ConfigError(
                'Unknown emulation mode {0!r}'.format(self.emulation_mode)
                )

        for field in ('shots', 'workers', 'batch_size'):
            if self.get(field) < 1:
                raise ConfigError('{0} must be >= 1'.format(field))

        try:
            self.bcs_params()
        except ValueError as error:
            raise ConfigError(str(error)) from error

    # Derived values

    def replace(self, **changes):
        document = self.to_json_type()
        document.pop('_id', None)
        document.update(changes)
        return self.__class__(document)

    def config_hash(self):
        return self.content_id()

    def bcs_params(self):
        bcs = self.bcs
        return BcsParams(
            energies=bcs['energies'],
            coupling=bcs['coupling'],
            dt=bcs['dt'],
            initial=bcs['initial']
            )

    def circuit_junction(self, pair):
        """Return the junction id the CNOTs of a pair are assigned to"""
        junction_id = _junction_id(pair)
        return self.layout['aliases'].get(junction_id, junction_id)

    def physical_junctions(self):
        return [_junction_id(p) for p in self.layout['junctions']]

    def neighbor_map(self):
        """Return the neighbour qubit of every junction (crosstalk only)"""
        if not self.noise['crosstalk']:
            return {}

        neighbors = {}
        qubits = set(range(self.layout['n_qubits']))
        for junction_id in self.physical_junctions():
            neighbor = self.layout['neighbors'].get(junction_id)
            if neighbor is None:
                pair = {int(q) for q in junction_id.split('-')}
                spare = sorted(qubits - pair)
                if not spare:
                    raise ConfigError(
                        'Junction {0} has no neighbour'.format(junction_id)
                        )
                neighbor = spare[0]
            neighbors[junction_id] = int(neighbor)
        return neighbors

    def time_points(self):
        """Return `(steps, t)` for every Trotter time point"""
        dt = self.bcs['dt']
        return [
            (j, round(j * dt, 12)) for j in range(1, self.bcs['n_steps'] + 1)
            ]

    def trotter_circuit(self, n_steps):
        n_qubits = self.layout['n_qubits']
        return trotter_circuit(
            self.bcs_params(),
            n_steps,
            junctions={
                p: self.circuit_junction(p) for p in default_pairs(n_qubits)
                },
            neighbors=self.neighbor_map()
            )

    def output_path(self, *parts):
        return os.path.join(self.output, *parts)

    @classmethod
    def load(cls, path):
        """Load and validate a configuration file"""
        try:
            return cls.from_file(path)
        except (OSError, ValueError) as error:
            if isinstance(error, ConfigError):
                raise
            raise ConfigError(
                'Cannot load config {0!r}: {1}'.format(path, error)
                ) from error


class RunManifest(Record):
    """
    What a run did: the config hash, seed, versions, stage timings and the
    files it wrote.
    """

    _fields = {
        'config_hash',
        'trial',
        'seed',
        'versions',
        'timings',
        'files',
        'reports'
        }


# Stages

@contextlib.contextmanager
def stage(name, config, timings=None):
    """
    Run a block as a pipeline stage: `stage-started`/`stage-finished`
    signals are sent and any error is re-raised as a `StageFailure`.
    """
    assert name in STAGES, 'Unknown stage {0!r}'.format(name)

    signal('stage-started').send(ExperimentConfig, stage=name, config=config)
    start = time.perf_counter()
    try:
        yield

    except StageFailure:
        raise

    except Exception as error:
        raise StageFailure(name, error) from error

    elapsed = time.perf_counter() - start
    if timings is not None:
        timings[name] = elapsed
    signal('stage-finished').send(
        ExperimentConfig,
        stage=name,
        config=config,
        elapsed=elapsed
        )


@contextlib.contextmanager
def record_stores(store):
    """Read and write every record class in a store"""
    with contextlib.ExitStack() as stack:
        for cls in (
            NoiseModel,
            TomographyResult,
            MitigationPlan,
            AWAEReport,
            DiagnosticsReport,
            RunManifest,
            ExperimentConfig
        ):
            stack.enter_context(cls.with_store(store))
        yield store


def _readout(flip, n_qubits):
    if not flip:
        return None
    return [[[1 - flip, flip], [flip, 1 - flip]] for _ in range(n_qubits)]


def generate_noise(config):
    """Return the noise model a configuration describes"""
    noise = config.noise

    if noise['source'] == 'file':
        model = NoiseModel.from_file(noise['path'])

    else:
        model = synthetic_model(
            config.physical_junctions(),
            mean_error=noise['mean_error'],
            dispersion=noise['dispersion'],
            seed=config.seed,
            crosstalk=noise['crosstalk'],
            neighbors=config.neighbor_map(),
            eps_neigh=noise['eps_neigh'],
            eps_glob=noise['eps_glob'],
            n_qubits=config.layout['n_qubits'],
            coherent_strength=noise['coherent_strength'],
            coherent_seed=config.seed,
            single_qubit_rate=noise['single_qubit_rate'],
            global_depolarizing=noise['global_depolarizing'],
            readout=_readout(noise['readout_flip'], config.layout['n_qubits'])
            )

    known = set(model.junction_ids())
    missing = [j for j in config.physical_junctions() if j not in known]
    if missing:
        raise ModelCoverageError(
            'No noise channel for junctions {0}'.format(', '.join(missing))
            )

    logger.info('Noise model for %d junctions', len(model.junctions))
    return model


def run_tomography(config, model):
    """Return the fitted `TomographyResult` of every layout junction"""
    pnt = config.pnt
    junctions = config.physical_junctions()

    results = []
    for i, junction_id in enumerate(junctions):
        specs = generate_pnt_circuits(
            junction_id,
            pnt['depths'],
            with_crosstalk=model.junction(junction_id).q == 3,
            both_directions=pnt['both_directions']
            )
        table = measure_pnt(
            specs,
            model,
            n_rc=pnt['n_rc'],
            shots=pnt['shots'],
            seed=config.seed,
            analytic=pnt['analytic']
            )
        fitted = fit_all(table, n_boot=pnt['n_boot'], seed=config.seed)
        results.extend(fitted[j] for j in sorted(fitted))

        signal('circuit-batch').send(
            ExperimentConfig,
            stage='pnt',
            done=i + 1,
            total=len(junctions)
            )

    return results


def fitted_model(results, **fields):
    """Return the noise model of fitted tomography results"""
    return TomographyResult.to_noise_model(
        results,
        description='fitted',
        **fields
        )


def _targets(trial, gate_ptms, counts, nec, observables, label, initial):
    if trial == 'T1':
        return {j: None for j in counts}
    if trial == 'T4':
        return matched_targets(gate_ptms, sorted(counts))
    return optimize_target(
        gate_ptms,
        counts,
        nec,
        observables,
        label=label,
        initial=initial
        ).target_params()


def make_plans(config, results, trial=None):
    """
    Return the `MitigationPlan` of every `(observable, t)` entry. Targets are
    chosen once per time point, jointly for all observables, and shared by
    them; the observables differ only in their NEC fidelity. NEC circuits
    start from the prepared product state.
    """
    trial = trial or config.trial
    gate_ptms = {r.junction_id: r.fidelity_vector() for r in results}
    observables = observable_set(config.layout['n_qubits'])
    initial = DensityMatrix.from_state(config.bcs['initial'])

    plans = {}
    for j, t in config.time_points():
        nec = nec_circuit(config.trotter_circuit(j))
        targets = _targets(
            trial,
            gate_ptms,
            nec.junction_counts(),
            nec,
            observables,
            '{0} t={1!r}'.format(trial, t),
            initial
            )

        for observable in observables:
            plans[(observable.word, t)] = build_plan(
                gate_ptms,
                targets,
                nec,
                observable,
                label='{0} {1} t={2!r}'.format(trial, observable.word, t),
                initial=initial
                )
            plans[(observable.word, t)].entry = [observable.word, t]

        logger.debug('Planned t=%r: sigma %.6f', t, plans[(observables[0].word, t)].sigma)

    return plans


def _measurement_basis(observables):
    """Return the one per-qubit basis measuring every observable"""
    basis = ['Z'] * len(observables[0])
    for observable in observables:
        for qubit in observable.support:
            symbol = observable[qubit]
            if basis[qubit] != 'Z' and basis[qubit] != symbol:
                raise ValueError('Observables need different bases')
            basis[qubit] = symbol
    return ''.join(basis)


def _run_one(job):
    circuit, model, mode, shots, basis, seed, path = job
    return run_circuit(
        circuit,
        model,
        mode=mode,
        rng=seeds.split(seed, *path),
        shots=shots,
        basis=basis
        )


def _map(func, jobs, workers):
    if workers <= 1:
        return [func(job) for job in jobs]
    with futures.ThreadPoolExecutor(max_workers=workers) as executor:
        return list(executor.map(func, jobs))


def _emulate_channel(config, model, plans, trial):
    """Return one row of mitigated expectations from exact emulation"""
    observables = observable_set(config.layout['n_qubits'])
    first = observables[0].word

    values = {}
    for j, t in config.time_points():
        emulated = model
        if trial != 'T1':
            emulated = plans[(first, t)].target_model(model)

        rho = run_circuit(config.trotter_circuit(j), emulated)
        for observable in observables:
            raw = expectation(rho, observable)
            values[(observable.word, t)] = mitigate(
                raw,
                plans[(observable.word, t)].f_nec
                )

    keys = sorted(values)
    return keys, np.array([[values[k] for k in keys]])


def _emulate_sampled(config, model, plans, label):
    """
    Return one row per NT circuit of `gamma^N sign outcome / F_NEC` for every
    entry; the column means are the mitigated estimates.
    """
    observables = observable_set(config.layout['n_qubits'])
    first = observables[0].word
    basis = _measurement_basis(observables)
    time_points = config.time_points()

    keys = sorted((o.word, t) for o in observables for _, t in time_points)
    outputs = np.empty((config.n_nt, len(keys)))

    for j, t in time_points:
        plan = plans[(first, t)]
        dress_seed = int(seeds.split(config.seed, label, 'dress', j).integers(2 ** 62))
        dressed = dress_batch(
            config.trotter_circuit(j),
            config.n_nt,
            dress_seed,
            crosstalk=bool(config.noise['crosstalk']),
            plans=plan.quasi_plans(),
            workers=config.workers
            )

        jobs = [
            (
                d.circuit,
                model,
                config.emulation_mode,
                config.shots,
                basis,
                config.seed,
                (label, 'run', j, i)
            )
            for i, d in enumerate(dressed)
            ]
        records = _map(_run_one, jobs, config.workers)

        for observable in observables:
            column = keys.index((observable.word, t))
            f_nec = plans[(observable.word, t)].f_nec
            outputs[:, column] = [
                d.weight * r.expectation(observable) / f_nec
                for d, r in zip(dressed, records)
                ]

        signal('circuit-batch').send(
            ExperimentConfig,
            stage='run',
            done=j,
            total=len(time_points)
            )

    return keys, outputs


def run_labels(trial):
    """Return the output labels a trial writes"""
    if trial == 'DIAG':
        return ['diag-inf', 'diag-finite', 'diag-full']
    return [trial.lower()]


def write_outputs(path, keys, outputs):
    """Write per-circuit output rows, one column per `(observable, t)`"""
    with open(path, 'w', newline='', encoding='utf8') as f:
        writer = csv.writer(f, lineterminator='\n')
        writer.writerow(['{0}@{1!r}'.format(o, t) for o, t in keys])
        for row in outputs:
            writer.writerow([repr(float(v)) for v in row])


def read_outputs(path):
    with open(path, newline='', encoding='utf8') as f:
        reader = csv.reader(f)
        header = next(reader)
        rows = [[float(v) for v in row] for row in reader]

    keys = []
    for column in header:
        observable, t = column.split('@')
        keys.append((observable, float(t)))
    return keys, np.array(rows, dtype=float).reshape(len(rows), len(keys))


def run_emulation(config, results, plans):
    """
    Run the configured trial's emulations and write their outputs. Returns
    the written paths by label.
    """
    trial = config.trial
    fitted = fitted_model(results)

    runs = {}
    if trial in ('T1', 'T2', 'T4'):
        runs[trial.lower()] = _emulate_channel(config, fitted, plans, trial)

    elif trial == 'T3':
        runs['t3'] = _emulate_sampled(config, fitted, plans, 't3')

    else:
        noise = config.noise
        injected = fitted.with_channels(
            {},
            coherent_strength=noise['coherent_strength'],
            coherent_seed=config.seed,
            single_qubit_rate=noise['single_qubit_rate']
            )
        runs['diag-inf'] = _emulate_channel(config, fitted, plans, 'T2')
        runs['diag-finite'] = _emulate_sampled(config, fitted, plans, 'diag-finite')
        runs['diag-full'] = _emulate_sampled(config, injected, plans, 'diag-full')

    paths = {}
    for label, (keys, outputs) in runs.items():
        paths[label] = config.output_path('outputs-{0}.csv'.format(label))
        write_outputs(paths[label], keys, outputs)
        logger.info('%s: %d output rows', label, len(outputs))
    return paths


def _zeta_std(curve, total):
    """Return the std of zeta at the full sample size from a batch curve"""
    points = [p for p in curve if p['batches'] > 1]
    if not points:
        return 0.0
    point = points[-1]
    return point['std'] * math.sqrt(point['N'] / total)


def _report(config, label, references):
    keys, outputs = read_outputs(config.output_path('outputs-{0}.csv'.format(label)))

    estimates = dict(zip(keys, outputs.mean(axis=0)))
    stds = {}
    if len(outputs) > 1:
        spread = outputs.std(axis=0, ddof=1) / math.sqrt(len(outputs))
        stds = dict(zip(keys, spread))

    reports = {}
    for subset in ('all', 'last-two'):
        reports[subset] = awae(estimates, references, subset, stds, label)

    primary = reports[config.time_subset]
    if len(outputs) > 1:
        columns = [keys.index(k) for k in primary.keys()]
        try:
            curve = bootstrap_curve(
                outputs[:, columns],
                [references[k] for k in primary.keys()],
                batch_size=config.batch_size
                )
        except InsufficientData as error:
            logger.warning('%s: no batch curve (%s)', label, error)
        else:
            primary.batch_curve = curve
            try:
                a, b, cov = extrapolate(curve, config.fit_max_n)
            except (InsufficientData, FitFailure) as error:
                logger.warning('%s: no extrapolation (%s)', label, error)
            else:
                primary.fit = {'a': a, 'b': b, 'cov': cov.tolist()}

            primary.curve_to_csv(
                config.output_path('batch-curve-{0}.csv'.format(label))
                )

    reports['all'].entries_to_csv(
        config.output_path('expectations-{0}.csv'.format(label))
        )
    return reports


def _trotter_baseline(config, references):
    """Return the AWAE of the noiseless Trotter circuits"""
    observables = observable_set(config.layout['n_qubits'])
    estimates = {}
    for j, t in config.time_points():
        rho = run_circuit(config.trotter_circuit(j))
        for observable in observables:
            estimates[(observable.word, t)] = expectation(rho, observable)

    report = awae(estimates, references, 'all', label='trotter-baseline')
    report.entries_to_csv(config.output_path('trotter-baseline.csv'))
    return report


def report_outputs(config, plans=None, results=None):
    """
    Build the AWAE reports (and, for DIAG, the diagnostics) from the written
    outputs. Returns the reports by label.
    """
    n_steps = config.bcs['n_steps']
    references = reference_table(config.bcs_params(), n_steps)
    write_reference_csv(config.output_path('references.csv'), references)

    reports = {}
    for label in run_labels(config.trial):
        for subset, report in _report(config, label, references).items():
            reports[(label, subset)] = report

    baseline = _trotter_baseline(config, references)
    reports[('trotter-baseline', 'all')] = baseline
    logger.info('Trotter baseline zeta %.6g', baseline.zeta)

    if config.trial == 'DIAG':
        reports[('diagnostics', config.time_subset)] = _diagnostics(
            config,
            reports,
            plans,
            results
            )

    return reports


def _diagnostics(config, reports, plans, results):
    subset = config.time_subset
    inf = reports[('diag-inf', subset)]
    finite = reports[('diag-finite', subset)]
    full = reports[('diag-full', subset)]

    # Rescaling factors are taken at the last time point (largest circuit)
    first = observable_set(config.layout['n_qubits'])[0]
    j, t = config.time_points()[-1]
    plan = plans[(first.word, t)]
    nec = nec_circuit(config.trotter_circuit(j))
    gate_ptms = {r.junction_id: r.fidelity_vector() for r in results}
    raw = build_plan(
        gate_ptms,
        {k: None for k in nec.junction_counts()},
        nec,
        first,
        initial=config.bcs['initial']
        )

    stds = {}
    for term, report in (('delta_nt', finite), ('delta_c_unk', full)):
        if report.batch_curve:
            stds[term] = _zeta_std(report.batch_curve, config.n_nt)

    return diagnostics(
        inf,
        finite,
        full,
        gamma_total=math.exp(plan.log_gamma_total),
        f_nec_target=plan.f_nec,
        f_nec_raw=raw.f_nec,
        stds=stds,
        label='diagnostics'
        )


def load_plans(trial):
    """Return the stored plans of a trial keyed by `(observable, t)`"""
    return {
        tuple(p.entry): p for p in MitigationPlan.many()
        if p.entry and p.label.split(' ')[0] == trial
        }


# Trials

def _persisted(cls, records):
    """Insert records and return them as read back from the store"""
    cls.insert_many(records)
    return [cls.by_id(r._id) for r in records]


def run_trial(config):
    """
    Run every stage of the configured trial, persisting each stage's output
    in the config's output directory and reading it back for the next stage.
    Returns the `RunManifest`.
    """
    os.makedirs(config.output, exist_ok=True)
    timings = {}

    with record_stores(config.output):
        config.insert()

        with stage('gen-noise', config, timings):
            model = generate_noise(config)
            model, = _persisted(NoiseModel, [model])

        with stage('pnt', config, timings):
            results = _persisted(
                TomographyResult,
                run_tomography(config, model)
                )

        with stage('plan', config, timings):
            plans = make_plans(config, results)
            keys = sorted(plans)
            stored = _persisted(MitigationPlan, [plans[k] for k in keys])
            plans = dict(zip(keys, stored))

        with stage('run', config, timings):
            run_emulation(config, results, plans)

        with stage('report', config, timings):
            reports = report_outputs(config, plans, results)
            for report in reports.values():
                report.insert()

        files = sorted(
            os.path.relpath(os.path.join(root, name), config.output)
            for root, _, names in os.walk(config.output)
            for name in names
            )

        manifest = RunManifest(
            config_hash=config.config_hash(),
            trial=config.trial,
            seed=config.seed,
            versions={
                'noisetailor': __version__,
                'numpy': np.__version__,
                'scipy': scipy.__version__
                },
            timings=timings,
            files=files,
            reports={
                '{0}/{1}'.format(*k): r._id for k, r in sorted(reports.items())
                }
            )
        manifest.insert()

    for (label, subset), report in sorted(reports.items()):
        if label != 'diagnostics':
            logger.info('%s (%s): zeta %.6g', label, subset, report.zeta)

    return manifest


def reproduce_figures(config, trials=('T1', 'T2', 'T3', 'T4')):
    """
    Run the trials and write plot-ready CSVs into the output directory:
    expectations against time per trial, zeta per trial for all and the
    last two time points, and the batch curve with its fit.
    """
    outcomes = {}
    for trial in trials:
        trial_config = config.replace(
            trial=trial,
            output=config.output_path(trial.lower())
            )
        manifest = run_trial(trial_config)
        with record_stores(trial_config.output):
            outcomes[trial] = {
                tuple(k.split('/')): AWAEReport.by_id(i)
                for k, i in manifest.reports.items()
                if not k.startswith('diagnostics')
                }

    with stage('reproduce-figures', config):
        with open(config.output_path('expectations.csv'), 'w', newline='',
                encoding='utf8') as f:
            writer = csv.writer(f, lineterminator='\n')
            writer.writerow(['trial', 'observable', 't', 'perfect', 'estimate', 'std'])
            for trial in trials:
                report = outcomes[trial][(trial.lower(), 'all')]
                for e in report.entries:
                    writer.writerow([
                        trial,
                        e['observable'],
                        repr(e['t']),
                        repr(e['perfect']),
                        repr(e['estimate']),
                        repr(e['std'])
                        ])

        with open(config.output_path('awae.csv'), 'w', newline='',
                encoding='utf8') as f:
            writer = csv.writer(f, lineterminator='\n')
            writer.writerow(['trial', 'subset', 'zeta'])
            for trial in trials:
                for subset in ('all', 'last-two'):
                    report = outcomes[trial][(trial.lower(), subset)]
                    writer.writerow([trial, subset, repr(report.zeta)])
            baseline = outcomes[trials[0]][('trotter-baseline', 'all')]
            writer.writerow(['trotter-baseline', 'all', repr(baseline.zeta)])

        for trial in trials:
            report = outcomes[trial][(trial.lower(), config.time_subset)]
            if report.batch_curve:
                report.curve_to_csv(config.output_path('batch-curve.csv'))

    return outcomes
