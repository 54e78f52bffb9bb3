"""
Noise estimation circuit (NEC) mitigation and the choice of the target noise
strength minimizing the estimator prefactor

    sigma = prod_j gamma_j ** N_j / F_NEC
"""

import logging
import math

import numpy as np
from scipy import optimize

from noisetailor.channels import (
    DepolarizingParams2Q,
    InvalidChannel,
    QuasiLocalParams3Q,
    QuasiProbPlan,
    SingularChannel,
    make_depolarizing_2q,
    make_quasilocal_3q,
    matched_epsilon,
    q_dnt,
    tailor_plan
    )
from noisetailor.circuits import Circuit
from noisetailor.pauli_core import FidelityVector, PauliString, clifford_conjugate
from noisetailor.records import Record
from noisetailor.simulator import DensityMatrix, expectation, run_circuit

__all__ = [
    # Exceptions
    'InvalidFidelity',
    'OptimizationFailure',
    'UndefinedFidelity',

    # Types
    'MitigationPlan',

    # Operations
    'build_plan',
    'matched_targets',
    'mitigate',
    'nec_circuit',
    'nec_fidelity',
    'nec_path',
    'optimize_target',
    'select_nec_observable'
    ]


logger = logging.getLogger(__name__)


class UndefinedFidelity(ValueError):
    """
    Raised when the ideal NEC expectation of an observable is zero.
    """


class InvalidFidelity(ValueError):
    """
    Raised when mitigating with a non-positive fidelity.
    """


class OptimizationFailure(RuntimeError):
    """
    Raised when sigma is not finite anywhere in the search domain.
    """


# Target rates are searched in [0, 1/15] with epsilon = 16 rate <= 1
RATE_MAX = min(1 / 15, 1 / 16)

# Default grid size and coordinate sweeps of the target search
GRID_SIZE = 64
SWEEPS = 2

# Expectations below this are treated as zero
ZERO_TOLERANCE = 1e-12


def nec_circuit(circuit):
    """Return the circuit with every single-qubit gate removed"""
    return Circuit(circuit.n_qubits, [g for g in circuit if g.is_cnot])


def _initial_state(initial):
    if isinstance(initial, str):
        return DensityMatrix.from_state(initial)
    return initial


def select_nec_observable(nec, observable, initial=None):
    """
    Return the observable defining F_NEC: the mitigated observable when its
    ideal NEC expectation is nonzero, otherwise the Pauli string with the
    largest ideal magnitude (ties broken by overlap with the observable's
    support, then lowest index). `initial` is the prepared state the NEC
    starts from, a `DensityMatrix` or a spec such as `'+++'` (|0...0> when
    omitted).
    """
    if not isinstance(observable, PauliString):
        observable = PauliString(observable)

    ideal = run_circuit(nec, initial=_initial_state(initial))
    if abs(expectation(ideal, observable)) > ZERO_TOLERANCE:
        return observable

    support = set(observable.support)
    best = None
    for index in range(1, 4 ** nec.n_qubits):
        candidate = PauliString.from_index(index, nec.n_qubits)
        magnitude = abs(expectation(ideal, candidate))
        if magnitude <= ZERO_TOLERANCE:
            continue

        key = (
            -round(magnitude, 12),
            -len(support & set(candidate.support)),
            candidate.index
            )
        if best is None or key < best[0]:
            best = (key, candidate)

    if best is None:
        raise UndefinedFidelity(
            'No Pauli string has a nonzero ideal NEC expectation'
            )
    return best[1]


def nec_fidelity(nec, model, observable, initial=None):
    """
    Return `F_NEC = <O>_noisy / <O>_ideal` for the NEC circuit, emulated
    exactly in channel mode.
    """
    initial = _initial_state(initial)
    ideal = expectation(run_circuit(nec, initial=initial), observable)
    if abs(ideal) <= ZERO_TOLERANCE:
        raise UndefinedFidelity(
            'Ideal NEC expectation of {0} is zero'.format(observable)
            )
    noisy = expectation(run_circuit(nec, model, initial=initial), observable)
    return noisy / ideal


def mitigate(raw, f_nec):
    """Return the NEC-mitigated expectation `raw / F_NEC`"""
    if not f_nec > 0:
        raise InvalidFidelity('F_NEC must be > 0, got {0!r}'.format(f_nec))
    return raw / f_nec


def nec_path(nec, observable):
    """
    Return `(junction_id, index, qubits)` for every CNOT of a NEC circuit:
    the channel index (over the gate's `qubits` active qubits) whose fidelity
    multiplies into F_NEC under Pauli channels. The observable is walked back
    through the CNOTs.
    """
    if not isinstance(observable, PauliString):
        observable = PauliString(observable)

    path = []
    p = observable
    for gate in reversed(nec.gates):
        assert gate.is_cnot, 'NEC circuits hold CNOTs only'
        local = p.restrict(gate.active_qubits)
        path.append((gate.junction, local.index, local.qubits))
        p, _ = clifford_conjugate(gate, p)
    return path


def _path_counts(path):
    """Return `{junction: {(index, qubits): count}}` for a NEC path"""
    counts = {}
    for junction, index, qubits in path:
        junction_counts = counts.setdefault(junction, {})
        key = (index, qubits)
        junction_counts[key] = junction_counts.get(key, 0) + 1
    return counts


def _fidelity_at(f, index, qubits):
    """Look up a path fidelity, reducing between 2 and 3-qubit channels"""
    if f.q == qubits:
        return f.values[index]
    if f.q == 2:
        # A pair channel leaves the neighbour untouched
        return f.values[index // 4]
    return f.values[4 * index]


def _log_f_nec(counts, channels):
    """Return `ln F_NEC` for Pauli target channels (or -inf)"""
    total = 0.0
    for junction, indices in counts.items():
        f = channels[junction]
        for (index, qubits), count in indices.items():
            value = _fidelity_at(f, index, qubits)
            if value <= 0:
                return -math.inf
            total += count * math.log(value)
    return total


class MitigationPlan(Record):
    """
    Per-junction targets with their quasi-probability plans, the NEC
    fidelity and the prefactor sigma (kept as `log_sigma`). Plans made for a
    trial record the `(observable, t)` entry they mitigate in `entry`.
    """

    _fields = {
        'label',
        'entry',
        'targets',
        'gammas',
        'n_cnot',
        'observable',
        'f_nec',
        'log_sigma',
        'quasi'
        }

    @property
    def sigma(self):
        return math.exp(self.log_sigma)

    @property
    def log_gamma_total(self):
        return sum(
            n * math.log(self.gammas[j]) for j, n in self.n_cnot.items()
            )

    def quasi_plans(self):
        """Return the `QuasiProbPlan` of every junction"""
        return {
            j: QuasiProbPlan(quasi, j) for j, quasi in self.quasi.items()
            }

    def target_channels(self):
        """Return the target `FidelityVector` of every junction"""
        channels = {}
        for junction, target in self.targets.items():
            if target['kind'] == 'raw':
                continue
            if target['kind'] == 'depolarizing':
                channels[junction] = make_depolarizing_2q(target['epsilon'])
            else:
                channels[junction] = make_quasilocal_3q((
                    target['eps_cnot'],
                    target['eps_neigh'],
                    target['eps_glob']
                    ))
        return channels

    def target_params(self):
        """
        Return the targets as parameters `build_plan` accepts (None for
        junctions left with their raw noise).
        """
        params = {}
        for junction, target in self.targets.items():
            if target['kind'] == 'raw':
                params[junction] = None
            elif target['kind'] == 'depolarizing':
                params[junction] = DepolarizingParams2Q(target['epsilon'])
            else:
                params[junction] = QuasiLocalParams3Q(
                    target['eps_cnot'],
                    target['eps_neigh'],
                    target['eps_glob']
                    )
        return params

    def target_model(self, model):
        """Return a copy of `model` with the junction channels replaced"""
        return model.with_channels(self.target_channels())


def _target_document(target, q):
    if target is None:
        return {'kind': 'raw', 'q': q}
    if isinstance(target, QuasiLocalParams3Q):
        document = target.to_json_type()
        document['kind'] = 'quasilocal'
        return document
    return {
        'kind': 'depolarizing',
        'epsilon': target.epsilon,
        'rate': target.rate
        }


def _target_channel(target, q):
    if target is None:
        return FidelityVector.identity(q)
    if isinstance(target, QuasiLocalParams3Q):
        return make_quasilocal_3q(target)
    return make_depolarizing_2q(target)


def _plan_for(gate, target, junction_id):
    if isinstance(target, DepolarizingParams2Q) and gate.q == 2:
        return q_dnt(gate, target.epsilon, junction_id)
    return tailor_plan(gate, _target_channel(target, gate.q), junction_id)


def build_plan(gate_ptms, targets, nec, observable, label=None, initial=None):
    """
    Return the `MitigationPlan` for fixed targets: a mapping of junction id
    to `DepolarizingParams2Q`, `QuasiLocalParams3Q` or None (no tailoring,
    the raw gate noise is kept).
    """
    counts = nec.junction_counts()
    nec_observable = select_nec_observable(nec, observable, initial)
    path_counts = _path_counts(nec_path(nec, nec_observable))

    gammas, quasi, documents, channels = {}, {}, {}, {}
    for junction in counts:
        gate = gate_ptms[junction]
        target = targets.get(junction)
        if target is None:
            plan = QuasiProbPlan.identity(gate.q, junction)
            channels[junction] = gate
        else:
            plan = _plan_for(gate, target, junction)
            channels[junction] = _target_channel(target, gate.q)
        gammas[junction] = plan.gamma
        quasi[junction] = [float(v) for v in plan.quasi]
        documents[junction] = _target_document(target, gate.q)

    log_f_nec = _log_f_nec(path_counts, channels)
    if not math.isfinite(log_f_nec):
        raise UndefinedFidelity('F_NEC vanishes for these targets')

    log_sigma = sum(n * math.log(gammas[j]) for j, n in counts.items()) - log_f_nec

    return MitigationPlan(
        label=label,
        targets=documents,
        gammas=gammas,
        n_cnot=counts,
        observable=nec_observable.word,
        f_nec=math.exp(log_f_nec),
        log_sigma=log_sigma,
        quasi=quasi
        )


def matched_targets(gate_ptms, junctions):
    """Return the average-matched depolarizing target of every junction"""
    targets = {}
    for junction in junctions:
        gate = marginal = gate_ptms[junction]
        if gate.q == 3:
            marginal = FidelityVector(gate.blocks()[:, 0])
        epsilon = min(max(matched_epsilon(marginal), 0.0), 1.0)
        if gate.q == 3:
            targets[junction] = QuasiLocalParams3Q(epsilon, 0.0, 0.0)
        else:
            targets[junction] = DepolarizingParams2Q(epsilon)
    return targets


def _log_gamma(gate, target, junction):
    try:
        return math.log(_plan_for(gate, target, junction).gamma)
    except (InvalidChannel, SingularChannel, ValueError):
        return math.inf


def optimize_target(
    gate_ptms,
    n_cnot,
    nec,
    observable,
    grid_size=GRID_SIZE,
    sweeps=SWEEPS,
    label=None,
    initial=None
    ):
    """
    Return the plan minimizing `sigma` over the per-junction depolarizing
    rates `lambda_d` (or quasi-local triples for 3-qubit gate channels).

    `observable` may also be a list of observables sharing the targets, in
    which case the sum of their `log sigma` is minimized and the plan of the
    first is returned. Every junction on any of their NEC paths then weighs
    in the search.

    Junctions are optimized one at a time with the others held fixed, for
    `sweeps` coordinate sweeps. Each 1D search evaluates a grid over
    `[0, RATE_MAX]` and refines around the best grid point with a bounded
    scalar minimization.
    """
    if isinstance(observable, (str, PauliString)):
        observables = [observable]
    else:
        observables = list(observable)

    initial = _initial_state(initial)
    all_path_counts = [
        _path_counts(nec_path(nec, select_nec_observable(nec, o, initial)))
        for o in observables
        ]
    junctions = sorted(n_cnot)

    # Start from the average-matched targets
    targets = matched_targets(gate_ptms, junctions)

    def log_sigma(candidate):
        channels = {
            j: _target_channel(t, gate_ptms[j].q) for j, t in candidate.items()
            }
        total = 0.0
        for path_counts in all_path_counts:
            log_f = _log_f_nec(path_counts, channels)
            if not math.isfinite(log_f):
                return math.inf
            total -= log_f

        log_gamma = 0.0
        for junction, target in candidate.items():
            log_gamma += n_cnot[junction] * _log_gamma(
                gate_ptms[junction],
                target,
                junction
                )
        return total + len(all_path_counts) * log_gamma

    for sweep in range(sweeps):
        for junction in junctions:
            if gate_ptms[junction].q == 3:
                targets[junction] = _search_box(junction, targets, log_sigma)
            else:
                targets[junction] = _search_rate(
                    junction,
                    targets,
                    log_sigma,
                    grid_size
                    )
        logger.debug(
            'Sweep %d: log sigma %.6f',
            sweep + 1,
            log_sigma(targets)
            )

    plan = build_plan(gate_ptms, targets, nec, observables[0], label, initial)
    logger.info(
        'Optimized targets for %d junctions: sigma %.6f',
        len(junctions),
        plan.sigma
        )
    return plan


def _search_rate(junction, targets, log_sigma, grid_size):
    """Minimize log sigma over one junction's depolarizing rate"""

    def evaluate(rate):
        candidate = dict(targets)
        candidate[junction] = DepolarizingParams2Q.from_rate(
            min(max(rate, 0.0), RATE_MAX)
            )
        return log_sigma(candidate)

    grid = np.linspace(0, RATE_MAX, grid_size)
    values = np.array([evaluate(rate) for rate in grid])
    if not np.any(np.isfinite(values)):
        raise OptimizationFailure(
            'sigma is not finite for any target on {0}'.format(junction)
            )

    best = int(np.nanargmin(np.where(np.isfinite(values), values, np.nan)))
    lower = grid[max(best - 1, 0)]
    upper = grid[min(best + 1, grid_size - 1)]

    result = optimize.minimize_scalar(
        evaluate,
        bounds=(lower, upper),
        method='bounded',
        options={'xatol': 1e-12}
        )

    rate = grid[best]
    if result.success and result.fun <= values[best]:
        rate = float(result.x)
    return DepolarizingParams2Q.from_rate(rate)


def _search_box(junction, targets, log_sigma):
    """Minimize log sigma over one junction's quasi-local triple"""

    def evaluate(x):
        x = np.clip(x, 0, 1)
        if x.sum() > 1:
            return 1e6
        candidate = dict(targets)
        candidate[junction] = QuasiLocalParams3Q(*x)
        value = log_sigma(candidate)
        return value if math.isfinite(value) else 1e6

    # Coarse box grid, then a bounded local refinement
    axis = np.linspace(0, 0.1, 6)
    starts = [np.array(x) for x in np.array(np.meshgrid(axis, axis, axis)).T.reshape(-1, 3)]
    values = [evaluate(x) for x in starts]
    best = int(np.argmin(values))
    if values[best] >= 1e6:
        raise OptimizationFailure(
            'sigma is not finite for any target on {0}'.format(junction)
            )

    result = optimize.minimize(
        evaluate,
        starts[best],
        method='Powell',
        bounds=[(0, 1)] * 3
        )

    x = starts[best]
    if result.fun <= values[best]:
        x = np.clip(result.x, 0, 1)
    return QuasiLocalParams3Q(*x)
