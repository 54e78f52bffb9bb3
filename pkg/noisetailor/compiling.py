"""
Circuit dressing: randomized compiling (RC), crosstalk-aware RC (cRC) and
noise tailoring (NT) dressings with their sign and weight bookkeeping.

Every CNOT `c -> t` is wrapped as

    pre(P_c P_t [, Q_n V_n])  CNOT  [noise]  post(P'_c P'_t [, V_n^-1 Q_n])  [D_a]

where `P' = CNOT P CNOT^-1` undoes the random Pauli pair, `V_n` is a random
Clifford frame on the neighbour (cRC only) and `D_a` is the sampled NT
dressing.
"""

from concurrent import futures
import functools
import itertools
import math

import numpy as np

from noisetailor.channels import sample_dressing
from noisetailor.circuits import Circuit, Gate
from noisetailor.pauli_core import PauliString, clifford_conjugate
from noisetailor.simulator import circuit_unitary
from noisetailor import seeds

__all__ = [
    # Exceptions
    'LayoutError',
    'PlanCoverageError',

    # Types
    'DressedCircuit',
    'TwirlSet',

    # Operations
    'crc_dress',
    'dress',
    'dress_batch',
    'enumerate_dressings',
    'nt_dress',
    'rc_dress'
    ]


class LayoutError(ValueError):
    """
    Raised when a CNOT's neighbour is busy or is one of its own qubits.
    """


class PlanCoverageError(KeyError):
    """
    Raised when a circuit uses a junction without a tailoring plan.
    """


# Neighbour frames for cRC as rotation sequences (time order). The non
# trivial frame cycles X -> Y -> Z on the neighbour.
_HALF_PI = math.pi / 2

_NEIGHBOR_FRAMES = (
    (),
    (('rx', _HALF_PI), ('rz', _HALF_PI)),
    (('rz', -_HALF_PI), ('rx', -_HALF_PI))
    )


def _pauli_gates(word, qubits):
    """Return dressing gates applying a Pauli word on the given qubits"""
    return [
        Gate(symbol.lower(), [qubit], dressing=True)
        for qubit, symbol in zip(qubits, word)
        if symbol != 'I'
        ]


def _frame_gates(frame, qubit, inverse=False):
    rotations = _NEIGHBOR_FRAMES[frame]
    gates = [Gate(name, [qubit], angle, dressing=True) for name, angle in rotations]
    if inverse:
        gates = [g.inverse() for g in reversed(gates)]
    return gates


class TwirlSet:
    """
    The dressings leaving a CNOT logically invariant: 16 Pauli pairs with
    their conjugated corrections and (for cRC) the neighbour frames.
    """

    def __init__(self, crosstalk=False):

        # Pre-gate Pauli pairs and their post-gate corrections, on (c, t)
        cnot = Gate('cx', [0, 1])
        self._pairs = []
        for pre in PauliString.all(2):
            post, _ = clifford_conjugate(cnot, pre)
            self._pairs.append((pre.word, post.word))

        # Flag indicating neighbour frames are included
        self._crosstalk = crosstalk

    def __len__(self):
        if self._crosstalk:
            return len(self._pairs) * len(_NEIGHBOR_FRAMES) * 4
        return len(self._pairs)

    # Read-only properties

    @property
    def pairs(self):
        return list(self._pairs)

    @property
    def crosstalk(self):
        return self._crosstalk

    @property
    def frames(self):
        return len(_NEIGHBOR_FRAMES)

    # Public methods

    def gates(self, gate, twirl, frame=0, neighbor_pauli=0):
        """
        Return `(pre, post)` gate lists dressing `gate` with the given twirl
        index, neighbour frame and neighbour Pauli index.
        """
        pre_word, post_word = self._pairs[twirl]
        pre = _pauli_gates(pre_word, gate.qubits)
        post = _pauli_gates(post_word, gate.qubits)

        if gate.neighbor is not None and self._crosstalk:
            n = gate.neighbor
            symbol = PauliString.from_index(neighbor_pauli, 1).word
            pre += _pauli_gates(symbol, [n]) + _frame_gates(frame, n)
            post += _frame_gates(frame, n, inverse=True) \
                    + _pauli_gates(symbol, [n])

        return pre, post

    def verify(self, tolerance=1e-10):
        """
        Check every dressing composes with the CNOT to the CNOT (up to a
        global phase) by comparing unitaries.
        """
        reference = circuit_unitary(
            Circuit(3).cx(0, 1, neighbor=2 if self._crosstalk else None)
            )
        cnot = Gate('cx', [0, 1], neighbor=2 if self._crosstalk else None)

        frames = range(len(_NEIGHBOR_FRAMES)) if self._crosstalk else [0]
        paulis = range(4) if self._crosstalk else [0]
        for twirl, frame, q in itertools.product(range(16), frames, paulis):
            pre, post = self.gates(cnot, twirl, frame, q)
            unitary = circuit_unitary(Circuit(3, pre + [cnot] + post))
            overlap = abs(np.trace(reference.conj().T @ unitary)) / 8
            assert abs(overlap - 1) < tolerance, \
                    'Dressing {0} is not logically invariant'.format(
                        (twirl, frame, q)
                        )
        return True

    @classmethod
    @functools.lru_cache(maxsize=2)
    def build(cls, crosstalk=False):
        """Return the verified (cached) twirl set"""
        twirl_set = cls(crosstalk)
        twirl_set.verify()
        return twirl_set


class DressedCircuit:
    """
    A dressed circuit with the sign product and the summed `ln gamma` of its
    quasi-probability draws, and the draws themselves for auditing.
    """

    def __init__(self, circuit, sign=1, weight_log=0.0, provenance=None):
        self._circuit = circuit
        self._sign = int(sign)
        self._weight_log = float(weight_log)
        self._provenance = provenance or {}

    def __repr__(self):
        return '<DressedCircuit gates={0} sign={1:+d} weight_log={2:.6f}>'.format(
            len(self._circuit),
            self._sign,
            self._weight_log
            )

    # Read-only properties

    @property
    def circuit(self):
        return self._circuit

    @property
    def sign(self):
        return self._sign

    @property
    def weight_log(self):
        return self._weight_log

    @property
    def weight(self):
        """Return `sign * prod(gamma)`"""
        return self._sign * math.exp(self._weight_log)

    @property
    def provenance(self):
        return self._provenance

    # Serializing

    def to_json_type(self):
        return {
            'circuit': self._circuit.to_json_type(),
            'sign': self._sign,
            'weight_log': self._weight_log,
            'provenance': self._provenance
            }

    @classmethod
    def from_json_type(cls, document):
        return cls(
            Circuit.from_json_type(document['circuit']),
            document['sign'],
            document['weight_log'],
            document.get('provenance')
            )


def _check_layout(circuit):
    """Raise `LayoutError` for neighbours that collide with active qubits"""
    moments = {}
    for gate in circuit:
        if gate.moment is not None:
            moments.setdefault(gate.moment, []).append(gate)

    for gate in circuit:
        if not gate.is_cnot or gate.neighbor is None:
            continue

        if gate.neighbor in gate.qubits:
            raise LayoutError(
                'Neighbour {0} of {1} is one of its qubits'.format(
                    gate.neighbor,
                    gate.junction
                    )
                )

        if gate.moment is None:
            continue

        for other in moments[gate.moment]:
            if other is not gate and gate.neighbor in other.qubits:
                raise LayoutError(
                    'Neighbour {0} of {1} is active in moment {2}'.format(
                        gate.neighbor,
                        gate.junction,
                        gate.moment
                        )
                    )


def _plan_qubits(plan, gate):
    if plan.q == 3:
        if gate.neighbor is None:
            raise LayoutError(
                'A 3-qubit plan needs a neighbour on {0}'.format(gate.junction)
                )
        return gate.active_qubits
    return gate.qubits


def dress(circuit, rng, crosstalk=False, plans=None, twirl=True):
    """
    Dress every CNOT of a circuit in one pass: an RC twirl (when `twirl`),
    a neighbour frame (when `crosstalk`) and an NT dressing (when `plans`).
    """
    if crosstalk:
        _check_layout(circuit)

    if plans is not None:
        missing = [j for j in circuit.junctions() if j not in plans]
        if missing:
            raise PlanCoverageError(
                'No plan for junctions {0}'.format(', '.join(missing))
                )

    twirl_set = TwirlSet.build(crosstalk)
    dressed = Circuit(circuit.n_qubits)
    sign = 1
    weight_log = 0.0
    draws = []

    for gate in circuit:
        if not gate.is_cnot:
            dressed.append(gate)
            continue

        draw = {'junction': gate.junction}
        pre, post = [], []

        if twirl:
            draw['twirl'] = int(rng.integers(16))
            if crosstalk and gate.neighbor is not None:
                draw['frame'] = int(rng.integers(len(_NEIGHBOR_FRAMES)))
                draw['neighbor_pauli'] = int(rng.integers(4))
            pre, post = twirl_set.gates(
                gate,
                draw['twirl'],
                draw.get('frame', 0),
                draw.get('neighbor_pauli', 0)
                )

        if plans is not None:
            plan = plans[gate.junction]
            if not plan.is_identity:
                pauli, s = sample_dressing(plan, rng)
                post += _pauli_gates(pauli.word, _plan_qubits(plan, gate))
                draw['dressing'] = pauli.index
                sign *= s
                weight_log += plan.log_gamma

        dressed.extend(pre)
        dressed.append(gate)
        dressed.extend(post)
        draws.append(draw)

    return DressedCircuit(dressed, sign, weight_log, {'draws': draws})


def rc_dress(circuit, rng):
    """Wrap every CNOT with a uniformly random Pauli twirl"""
    return dress(circuit, rng)


def crc_dress(circuit, rng):
    """RC plus a random Clifford frame and Pauli twirl on each neighbour"""
    return dress(circuit, rng, crosstalk=True)


def nt_dress(circuit, plans, rng, crosstalk=False):
    """RC (or cRC) plus a sampled tailoring dressing after every CNOT"""
    return dress(circuit, rng, crosstalk=crosstalk, plans=plans)


def enumerate_dressings(circuit, crosstalk=False, plans=None):
    """
    Yield `(probability, DressedCircuit)` for every combination of twirls
    (and dressings on the support of `plans`). Only practical for circuits
    with one or two CNOTs.
    """
    twirl_set = TwirlSet.build(crosstalk)
    cnots = [g for g in circuit if g.is_cnot]

    options = []
    for gate in cnots:
        choices = [(t, 0, 0) for t in range(16)]
        if crosstalk and gate.neighbor is not None:
            choices = list(itertools.product(
                range(16),
                range(len(_NEIGHBOR_FRAMES)),
                range(4)
                ))

        dressings = [(1.0, None, 1, 0.0)]
        if plans is not None:
            plan = plans[gate.junction]
            if not plan.is_identity:
                dressings = [
                    (plan.probs[a], a, int(plan.signs[a]), plan.log_gamma)
                    for a in np.flatnonzero(plan.probs)
                    ]

        options.append([
            (1.0 / len(choices) * p, choice, a, s, w)
            for choice in choices
            for p, a, s, w in dressings
            ])

    for combination in itertools.product(*options):
        probability = 1.0
        sign = 1
        weight_log = 0.0
        dressed = Circuit(circuit.n_qubits)
        i = 0
        for gate in circuit:
            if not gate.is_cnot:
                dressed.append(gate)
                continue

            p, (twirl, frame, q), a, s, w = combination[i]
            pre, post = twirl_set.gates(gate, twirl, frame, q)
            if a is not None:
                plan = plans[gate.junction]
                word = PauliString.from_index(int(a), plan.q).word
                post += _pauli_gates(word, _plan_qubits(plan, gate))
            dressed.extend(pre)
            dressed.append(gate)
            dressed.extend(post)

            probability *= p
            sign *= s
            weight_log += w
            i += 1

        yield probability, DressedCircuit(dressed, sign, weight_log)


def _dress_one(args):
    circuit, seed, index, crosstalk, plans = args
    rng = seeds.split(seed, 'dress', index)
    dressed = dress(circuit, rng, crosstalk=crosstalk, plans=plans)
    dressed.provenance['seed'] = seed
    dressed.provenance['index'] = index
    return dressed


def dress_batch(circuit, count, seed, crosstalk=False, plans=None, workers=1):
    """
    Return `count` independently dressed copies of a circuit. Copy `i` is
    drawn from the stream `(seed, 'dress', i)`, so the batch does not depend
    on `workers`.
    """
    jobs = [(circuit, seed, i, crosstalk, plans) for i in range(count)]
    if workers <= 1:
        return [_dress_one(job) for job in jobs]

    with futures.ThreadPoolExecutor(max_workers=workers) as executor:
        return list(executor.map(_dress_one, jobs))
