"""
Exact density-matrix (and Monte Carlo trajectory) emulation of small noisy
circuits.

Noise is attached by a `NoiseModel`: a Pauli channel after every CNOT (on
control, target and optionally the neighbour qubit), an optional coherent
residual unitary after every CNOT, optional single-qubit depolarizing noise
after every (non-dressing) single-qubit gate, an optional global depolarizing
channel at the end of the circuit and per-qubit readout confusion.
"""

import functools
import math
import re

import numpy as np
from scipy import linalg

from noisetailor.channels import sanitize
from noisetailor.circuits import STATE_PATTERN, Circuit, Gate, parse_state
from noisetailor.pauli_core import (
    DimensionError,
    FidelityVector,
    PauliString,
    ProbVector,
    pauli_matrix,
    walsh_hadamard
    )
from noisetailor.records import Record, SubRecord
from noisetailor import seeds

__all__ = [
    # Exceptions
    'DegenerateResponse',
    'ModelCoverageError',
    'QuasiChannelNotAllowed',

    # Types
    'DensityMatrix',
    'JunctionNoise',
    'NoiseModel',
    'ShotRecord',

    # Operations
    'apply_depolarizing',
    'apply_gate',
    'apply_global_depolarizing',
    'apply_pauli_channel',
    'apply_readout_error',
    'apply_unitary',
    'calibrate_readout',
    'circuit_unitary',
    'expectation',
    'gate_unitary',
    'ibu_correct',
    'process_chi',
    'run_circuit',
    'sample_shots'
    ]


# The largest register the emulator accepts
MAX_QUBITS = 5

# Set to `True` to validate density matrix invariants after every step
CHECK_INVARIANTS = False

# Version of the noise model file schema
SCHEMA_VERSION = 1


class QuasiChannelNotAllowed(ValueError):
    """
    Raised when a quasi-probability vector is applied as a physical channel.
    """


class DegenerateResponse(ValueError):
    """
    Raised when a readout response matrix cannot be unfolded.
    """


class ModelCoverageError(KeyError):
    """
    Raised when a circuit uses a junction the noise model does not describe.
    """


# Gate matrices

_H = np.array([[1, 1], [1, -1]], dtype=complex) / math.sqrt(2)

_FIXED_GATES = {
    'h': _H,
    'x': pauli_matrix('X'),
    'y': pauli_matrix('Y'),
    'z': pauli_matrix('Z'),
    's': np.diag([1, 1j]).astype(complex),
    'sdg': np.diag([1, -1j]).astype(complex),
    'cx': np.array([
        [1, 0, 0, 0],
        [0, 1, 0, 0],
        [0, 0, 0, 1],
        [0, 0, 1, 0]
        ], dtype=complex)
    }


def _rotation(axis, angle):
    return linalg.expm(-0.5j * angle * pauli_matrix(axis))


def gate_unitary(gate):
    """Return the local unitary of a gate (control first for CNOT)"""
    if gate.name in _FIXED_GATES:
        return _FIXED_GATES[gate.name]
    return _rotation(gate.name[1].upper(), gate.param)


def _apply_left(tensor, op, axes):
    """Contract a local operator into the given axes of a tensor"""
    k = len(axes)
    op = op.reshape((2,) * (2 * k))
    tensor = np.tensordot(op, tensor, axes=(list(range(k, 2 * k)), list(axes)))
    return np.moveaxis(tensor, list(range(k)), list(axes))


@functools.lru_cache(maxsize=8192)
def _embedded(key, qubits, n):
    """Return the full 2^n x 2^n matrix of a cached local operator"""
    op = _OPERATORS[key]
    identity = np.eye(2 ** n, dtype=complex).reshape((2,) * n + (2 ** n,))
    full = _apply_left(identity, op, qubits).reshape(2 ** n, 2 ** n)
    full.setflags(write=False)
    return full


# Local operators addressed by hashable keys for `_embedded`
_OPERATORS = {}


def _operator_key(op):
    key = op.tobytes()
    _OPERATORS.setdefault(key, op)
    return key


def _full_matrix(op, qubits, n):
    return _embedded(_operator_key(np.asarray(op, dtype=complex)), tuple(qubits), n)


@functools.lru_cache(maxsize=4096)
def _pauli_action(words, qubits, n):
    """
    Return `(perms, signs)` such that `P_a |k> ~ signs[a][k'] |...>` acts as
    `psi -> signs[a] * psi[perms[a]]`, up to a global phase.
    """
    d = 2 ** n
    index = np.arange(d)
    perms = np.empty((len(words), d), dtype=np.intp)
    signs = np.empty((len(words), d))
    for a, word in enumerate(words):
        xmask = zmask = 0
        for qubit, symbol in zip(qubits, word):
            bit = 1 << (n - 1 - qubit)
            if symbol in 'XY':
                xmask |= bit
            if symbol in 'YZ':
                zmask |= bit
        perms[a] = index ^ xmask
        parity = np.array([bin(v).count('1') & 1 for v in perms[a] & zmask])
        signs[a] = 1 - 2 * parity
    perms.setflags(write=False)
    signs.setflags(write=False)
    return perms, signs


def _words(q):
    return tuple(p.word for p in PauliString.all(q))


class DensityMatrix:
    """
    A read-only 2^q x 2^q density matrix.
    """

    def __init__(self, matrix, check=False):
        matrix = np.array(matrix, dtype=complex)
        d = matrix.shape[0]
        q = int(round(math.log2(d))) if d else 0
        if matrix.shape != (d, d) or 2 ** q != d or q < 1:
            raise DimensionError('Density matrices must be 2^q x 2^q')
        if q > MAX_QUBITS:
            raise DimensionError(
                'At most {0} qubits are supported'.format(MAX_QUBITS)
                )

        matrix.setflags(write=False)
        self._matrix = matrix
        self._q = q

        if check:
            self.validate()

    def __repr__(self):
        return '<DensityMatrix q={0} purity={1:.6f}>'.format(
            self._q,
            self.purity
            )

    # Read-only properties

    @property
    def q(self):
        return self._q

    @property
    def matrix(self):
        return self._matrix

    @property
    def purity(self):
        return float(np.real(np.einsum('ij,ji->', self._matrix, self._matrix)))

    # Public methods

    def probabilities(self):
        """Return the computational basis probabilities"""
        probs = np.clip(np.real(np.diag(self._matrix)), 0, None)
        return probs / probs.sum()

    def partial_trace(self, keep):
        """Return the reduced state on the qubits in `keep`"""
        keep = sorted(keep)
        n = self._q
        tensor = self._matrix.reshape((2,) * (2 * n))
        traced = [q for q in range(n) if q not in keep]
        for offset, qubit in enumerate(traced):
            axis = qubit - offset
            tensor = np.trace(tensor, axis1=axis, axis2=axis + tensor.ndim // 2)
        d = 2 ** len(keep)
        return DensityMatrix(tensor.reshape(d, d))

    def validate(self, tolerance=1e-10):
        """Check hermiticity, unit trace and positivity"""
        m = self._matrix
        assert np.allclose(m, m.conj().T, atol=tolerance), \
                'Density matrix is not Hermitian'
        assert abs(np.trace(m) - 1) < tolerance, \
                'Density matrix trace is not 1'
        assert np.linalg.eigvalsh(m).min() >= -1e-8, \
                'Density matrix is not positive semidefinite'
        return True

    @classmethod
    def zero(cls, q):
        matrix = np.zeros((2 ** q, 2 ** q), dtype=complex)
        matrix[0, 0] = 1
        return cls(matrix)

    @classmethod
    def from_statevector(cls, psi):
        psi = np.asarray(psi, dtype=complex).reshape(-1)
        return cls(np.outer(psi, psi.conj()))

    @classmethod
    def from_state(cls, state):
        """Return the product state for a spec such as `'+0+y'`"""
        if isinstance(state, str):
            n = len(re.findall(STATE_PATTERN, state))
        else:
            n = len(state)
        parse_state(state, n)
        return _evolve_density(Circuit(n).prepare(state), cls.zero(n), None)


class ShotRecord:
    """
    Measurement outcomes in a per-qubit Pauli basis. Counts map bitstrings
    (qubit 0 first) to counts, which are floats after readout unfolding.
    """

    def __init__(self, basis, counts, sign=1, weight_log=0.0):
        basis = str(basis).upper().replace('I', 'Z')

        self._basis = basis
        self._counts = dict(sorted(
            (k, v) for k, v in counts.items() if v
            ))
        for outcome in self._counts:
            if len(outcome) != len(basis):
                raise DimensionError(
                    'Outcome {0!r} does not match basis {1!r}'.format(
                        outcome,
                        basis
                        )
                    )

        # Quasi-probability bookkeeping carried by NT-dressed circuits
        self._sign = int(sign)
        self._weight_log = float(weight_log)

    def __repr__(self):
        return '<ShotRecord basis={0} total={1}>'.format(
            self._basis,
            self.total
            )

    def __add__(self, other):
        """Merge two records of the same basis and weight (associative)"""
        assert self._basis == other._basis, 'Cannot merge different bases'
        counts = dict(self._counts)
        for outcome, count in other._counts.items():
            counts[outcome] = counts.get(outcome, 0) + count
        return ShotRecord(self._basis, counts, self._sign, self._weight_log)

    # Read-only properties

    @property
    def basis(self):
        return self._basis

    @property
    def counts(self):
        return dict(self._counts)

    @property
    def total(self):
        return sum(self._counts.values())

    @property
    def n_qubits(self):
        return len(self._basis)

    @property
    def sign(self):
        return self._sign

    @property
    def weight_log(self):
        return self._weight_log

    # Public methods

    def vector(self):
        """Return the counts as a dense vector over basis indices"""
        vector = np.zeros(2 ** self.n_qubits)
        for outcome, count in self._counts.items():
            vector[int(outcome, 2)] = count
        return vector

    def expectation(self, observable):
        """
        Return the estimate of a Pauli observable measured in this basis.
        """
        if not isinstance(observable, PauliString):
            observable = PauliString(observable)

        for qubit in observable.support:
            if observable[qubit] != self._basis[qubit]:
                raise ValueError(
                    '{0} is not diagonal in basis {1}'.format(
                        observable,
                        self._basis
                        )
                    )

        total = self.total
        if not total:
            raise ValueError('No shots recorded')

        value = 0.0
        for outcome, count in self._counts.items():
            parity = sum(int(outcome[q]) for q in observable.support) & 1
            value += -count if parity else count
        return value / total

    def with_counts(self, counts):
        return ShotRecord(self._basis, counts, self._sign, self._weight_log)

    def to_json_type(self):
        return {
            'basis': self._basis,
            'counts': self._counts,
            'sign': self._sign,
            'weight_log': self._weight_log
            }


class JunctionNoise(SubRecord):
    """
    The Pauli channel of one directed junction. `fidelities` are indexed in
    (control, target[, neighbour]) order.
    """

    _fields = {
        'junction_id',
        'q',
        'direction',
        'neighbor',
        'fidelities',
        'rates'
        }

    def fidelity_vector(self):
        return FidelityVector(self.fidelities)


class NoiseModel(Record):
    """
    A persisted noise model (one JSON document per model).
    """

    _fields = {
        'schema_version',
        'description',
        'junctions',
        'coherent_strength',
        'coherent_seed',
        'single_qubit_rate',
        'global_depolarizing',
        'readout'
        }

    _sub_records = {'junctions': JunctionNoise}

    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)

        if self.schema_version is None:
            self.schema_version = SCHEMA_VERSION
        if self.junctions is None:
            self.junctions = []

        if self.schema_version > SCHEMA_VERSION:
            raise ValueError(
                'Noise model schema {0} is newer than supported ({1})'.format(
                    self.schema_version,
                    SCHEMA_VERSION
                    )
                )

        for field in ('coherent_strength', 'single_qubit_rate',
                'global_depolarizing'):
            if (self.get(field) or 0) < 0:
                raise ValueError('{0} must be >= 0'.format(field))

        for confusion in self.readout or []:
            confusion = np.asarray(confusion, dtype=float)
            if confusion.shape != (2, 2) or np.any(confusion < 0) \
                    or not np.allclose(confusion.sum(axis=1), 1):
                raise ValueError('Readout confusion rows must be distributions')

    # Channels

    def _cache(self):
        return self.__dict__.setdefault('_channel_cache', {})

    def junction(self, junction_id):
        """Return the entry for a junction"""
        for entry in self.junctions:
            if entry.junction_id == junction_id:
                return entry
        raise ModelCoverageError(
            'No noise channel for junction {0!r}'.format(junction_id)
            )

    def junction_ids(self):
        return [j.junction_id for j in self.junctions]

    def fidelities(self, junction_id):
        return self.junction(junction_id).fidelity_vector()

    def probabilities(self, junction_id, with_neighbor=True):
        """
        Return the emulation probabilities for a junction (negative entries
        from anomalous fidelities are clamped and renormalized). Without a
        neighbour, 3-qubit channels are reduced to their pair marginal.
        """
        key = ('probs', junction_id, with_neighbor)
        cache = self._cache()
        if key not in cache:
            f = self.fidelities(junction_id)
            if f.q == 3 and not with_neighbor:
                f = FidelityVector(f.blocks()[:, 0])
            cache[key] = sanitize(walsh_hadamard(f))
        return cache[key]

    def coherent_unitary(self, junction_id):
        """
        Return the residual `exp(-i delta H)` after a CNOT on a junction, with
        `H` a fixed random Hermitian 4x4 matrix of unit spectral norm.
        """
        delta = self.coherent_strength or 0
        if not delta:
            return None

        key = ('coherent', junction_id)
        cache = self._cache()
        if key not in cache:
            rng = seeds.split(self.coherent_seed or 0, 'coherent', junction_id)
            a = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
            hermitian = (a + a.conj().T) / 2
            hermitian /= np.abs(np.linalg.eigvalsh(hermitian)).max()
            cache[key] = linalg.expm(-1j * delta * hermitian)
        return cache[key]

    def covers(self, circuit):
        """Return the junction ids used by a circuit but missing here"""
        known = set(self.junction_ids())
        return [j for j in circuit.junctions() if j not in known]

    def confusion(self, n_qubits):
        """Return the per-qubit confusion matrices (identity if none set)"""
        readout = self.readout or []
        if readout and len(readout) < n_qubits:
            raise ModelCoverageError('Readout confusion missing for some qubits')
        if not readout:
            return None
        return [np.asarray(r, dtype=float) for r in readout[:n_qubits]]

    # Variants

    def with_channels(self, channels, **changes):
        """
        Return a copy with the given junction fidelities replaced (a mapping
        of junction id to `FidelityVector`) and fields changed.
        """
        document = self.to_json_type()
        document.pop('_id', None)
        for entry in document['junctions']:
            if entry['junction_id'] in channels:
                f = channels[entry['junction_id']]
                entry['fidelities'] = f.to_json_type()
                entry['q'] = f.q
                entry.pop('rates', None)
        document.update(changes)
        return NoiseModel(document)

    def pauli_only(self):
        """Return a copy without coherent, single-qubit, global and readout noise"""
        return self.with_channels(
            {},
            coherent_strength=0.0,
            single_qubit_rate=0.0,
            global_depolarizing=0.0,
            readout=None
            )

    @classmethod
    def from_channels(cls, channels, directions=None, neighbors=None, **kwargs):
        """Build a model from a mapping of junction id to `FidelityVector`"""
        junctions = []
        for junction_id, f in sorted(channels.items()):
            direction = (directions or {}).get(junction_id)
            if direction is None:
                direction = [int(q) for q in junction_id.split('-')]
            junctions.append({
                'junction_id': junction_id,
                'q': f.q,
                'direction': list(direction),
                'neighbor': (neighbors or {}).get(junction_id),
                'fidelities': f.to_json_type()
                })
        return cls(junctions=junctions, **kwargs)

    @classmethod
    def noiseless(cls, junction_ids, q=2):
        return cls.from_channels(
            {j: FidelityVector.identity(q) for j in junction_ids}
            )


# Operations

def _checked(rho, check):
    if check if check is not None else CHECK_INVARIANTS:
        rho.validate()
    return rho


def _check_qubits(qubits, n):
    for qubit in qubits:
        if not 0 <= qubit < n:
            raise IndexError(
                'Qubit {0} outside a {1}-qubit register'.format(qubit, n)
                )


def apply_unitary(rho, unitary, qubits, check=None):
    """Return `U rho U^dagger` for a local unitary on `qubits`"""
    _check_qubits(qubits, rho.q)
    full = _full_matrix(unitary, qubits, rho.q)
    return _checked(
        DensityMatrix(full @ rho.matrix @ full.conj().T),
        check
        )


def apply_gate(rho, gate, check=None):
    """Apply a gate ideally"""
    return apply_unitary(rho, gate_unitary(gate), gate.qubits, check)


def _pauli_sum(matrix, probs, qubits, n):
    """Return `sum_a p_a P_a rho P_a` using index permutations"""
    words = _words(len(qubits))
    perms, signs = _pauli_action(words, tuple(qubits), n)
    nonzero = np.flatnonzero(probs)
    perms, signs, probs = perms[nonzero], signs[nonzero], probs[nonzero]
    stacked = matrix[perms[:, :, None], perms[:, None, :]]
    return np.einsum('a,ai,aij,aj->ij', probs, signs, stacked, signs)


def apply_pauli_channel(rho, channel, qubits, check=None):
    """Apply `rho -> sum_a p_a P_a rho P_a` on the given qubits"""
    if not isinstance(channel, ProbVector):
        channel = ProbVector(channel)

    if channel.quasi or np.any(channel.values < 0):
        raise QuasiChannelNotAllowed(
            'Quasi-probability vectors cannot be applied as channels'
            )
    if channel.q != len(qubits):
        raise DimensionError(
            'A {0}-qubit channel cannot act on {1} qubits'.format(
                channel.q,
                len(qubits)
                )
            )
    _check_qubits(qubits, rho.q)

    matrix = _pauli_sum(rho.matrix, channel.values, qubits, rho.q)
    return _checked(DensityMatrix(matrix), check)


def apply_depolarizing(rho, rate, qubit, check=None):
    """Apply single-qubit depolarizing noise with total error `rate`"""
    probs = ProbVector([1 - rate, rate / 3, rate / 3, rate / 3])
    return apply_pauli_channel(rho, probs, [qubit], check)


def apply_global_depolarizing(rho, p, check=None):
    """Return `(1 - p) rho + p I / d`"""
    d = 2 ** rho.q
    return _checked(
        DensityMatrix((1 - p) * rho.matrix + p * np.eye(d) / d),
        check
        )


def expectation(rho, observable):
    """Return `Tr(rho P)`"""
    if not isinstance(observable, PauliString):
        observable = PauliString(observable)
    if observable.qubits != rho.q:
        raise DimensionError(
            'Observable on {0} qubits, state on {1}'.format(
                observable.qubits,
                rho.q
                )
            )
    value = np.einsum('ij,ji->', rho.matrix, observable.matrix())
    return float(np.real(value))


def _basis_rotations(basis):
    """Return the gates mapping each qubit's measurement basis to Z"""
    gates = []
    for qubit, symbol in enumerate(basis):
        if symbol == 'X':
            gates.append(Gate('h', [qubit]))
        elif symbol == 'Y':
            gates.append(Gate('sdg', [qubit]))
            gates.append(Gate('h', [qubit]))
        elif symbol not in 'ZI':
            raise ValueError('Unknown basis symbol {0!r}'.format(symbol))
    return gates


def _outcomes(n):
    return [format(i, '0{0}b'.format(n)) for i in range(2 ** n)]


def sample_shots(rho, basis, n, rng):
    """Sample `n` shots of `rho` measured in a per-qubit Pauli basis"""
    basis = str(basis).upper()
    if len(basis) != rho.q:
        raise DimensionError('Basis does not match the state')

    for gate in _basis_rotations(basis):
        rho = apply_gate(rho, gate, check=False)

    counts = rng.multinomial(int(n), rho.probabilities())
    return ShotRecord(
        basis,
        {o: int(c) for o, c in zip(_outcomes(rho.q), counts) if c}
        )


def _response_matrix(confusion):
    """Return the full response matrix `R[true, measured]`"""
    response = np.ones((1, 1))
    for matrix in confusion:
        matrix = np.asarray(matrix, dtype=float)
        if np.any(matrix.sum(axis=1) <= 0):
            raise DegenerateResponse('A confusion matrix has an empty row')
        response = np.kron(response, matrix)
    return response


def apply_readout_error(record, confusion, rng):
    """Resample every outcome through the per-qubit confusion matrices"""
    response = _response_matrix(confusion)
    outcomes = _outcomes(record.n_qubits)

    counts = np.zeros(len(outcomes), dtype=np.int64)
    for outcome, count in record.counts.items():
        counts += rng.multinomial(int(count), response[int(outcome, 2)])

    return record.with_counts(
        {o: int(c) for o, c in zip(outcomes, counts) if c}
        )


def ibu_correct(record, confusion, iters=10, prior=None):
    """
    Unfold readout errors by iterative Bayesian unfolding:

        t'(i) = t(i) sum_j R(j|i) m_j / sum_i' R(j|i') t(i')

    Returns a record of quasi-counts with the same total.
    """
    assert iters >= 1, 'At least one iteration is needed'

    response = _response_matrix(confusion)
    measured = record.vector()
    total = measured.sum()

    if prior is None:
        truth = np.full(len(measured), total / len(measured))
    else:
        truth = np.asarray(prior, dtype=float)
        truth = truth * total / truth.sum()

    if np.any((response.sum(axis=0) == 0) & (measured > 0)):
        raise DegenerateResponse('Measured outcomes no state can produce')

    for _ in range(iters):
        folded = truth @ response
        ratio = np.divide(
            measured,
            folded,
            out=np.zeros_like(measured),
            where=folded > 0
            )
        truth = truth * (response @ ratio)

    if truth.sum() > 0:
        truth *= total / truth.sum()

    return record.with_counts(
        {o: float(c) for o, c in zip(_outcomes(record.n_qubits), truth) if c}
        )


def calibrate_readout(model, n_qubits, shots, rng):
    """
    Estimate per-qubit confusion matrices from all-0 and all-1 preparations.
    """
    confusion = model.confusion(n_qubits)
    basis = 'Z' * n_qubits
    estimated = [np.zeros((2, 2)) for _ in range(n_qubits)]

    for prepared in (0, 1):
        rho = DensityMatrix.zero(n_qubits)
        if prepared:
            rho = _evolve_density(
                Circuit(n_qubits).prepare('1' * n_qubits),
                rho,
                None
                )
        record = sample_shots(rho, basis, shots, rng)
        if confusion is not None:
            record = apply_readout_error(record, confusion, rng)

        for outcome, count in record.counts.items():
            for qubit in range(n_qubits):
                estimated[qubit][prepared, int(outcome[qubit])] += count

    return [e / e.sum(axis=1, keepdims=True) for e in estimated]


# Circuit execution

def _junction_channel(model, gate):
    """Return `(probs, qubits)` for the channel following a CNOT"""
    entry = model.junction(gate.junction)
    with_neighbor = gate.neighbor is not None and entry.q == 3
    probs = model.probabilities(gate.junction, with_neighbor)
    qubits = gate.active_qubits if with_neighbor else gate.qubits
    return probs, qubits


def _evolve_density(circuit, rho, model, check=None):
    n = circuit.n_qubits
    sq_rate = (model.single_qubit_rate or 0) if model else 0

    for gate in circuit:
        full = _full_matrix(gate_unitary(gate), gate.qubits, n)
        matrix = full @ rho.matrix @ full.conj().T

        if model is not None:
            if gate.is_cnot:
                coherent = model.coherent_unitary(gate.junction)
                if coherent is not None:
                    full = _full_matrix(coherent, gate.qubits, n)
                    matrix = full @ matrix @ full.conj().T

                probs, qubits = _junction_channel(model, gate)
                matrix = _pauli_sum(matrix, probs.values, qubits, n)

            elif sq_rate and not gate.dressing:
                probs = np.array([1 - sq_rate] + [sq_rate / 3] * 3)
                matrix = _pauli_sum(matrix, probs, gate.qubits, n)

        rho = _checked(DensityMatrix(matrix), check)

    if model is not None and model.global_depolarizing:
        rho = apply_global_depolarizing(rho, model.global_depolarizing, check)

    return rho


def _sample_index(cdf, rng):
    return min(int(np.searchsorted(cdf, rng.random(), side='right')), len(cdf) - 1)


def _evolve_trajectory(circuit, psi, model, rng):
    """Evolve a state vector, sampling one Pauli error per noisy location"""
    n = circuit.n_qubits
    sq_rate = (model.single_qubit_rate or 0) if model else 0
    sq_cdf = np.cumsum([1 - sq_rate] + [sq_rate / 3] * 3)

    for gate in circuit:
        psi = _full_matrix(gate_unitary(gate), gate.qubits, n) @ psi

        if model is None:
            continue

        if gate.is_cnot:
            coherent = model.coherent_unitary(gate.junction)
            if coherent is not None:
                psi = _full_matrix(coherent, gate.qubits, n) @ psi

            probs, qubits = _junction_channel(model, gate)
            a = _sample_index(np.cumsum(probs.values), rng)
            if a:
                perms, signs = _pauli_action(_words(len(qubits)), tuple(qubits), n)
                psi = signs[a] * psi[perms[a]]

        elif sq_rate and not gate.dressing:
            a = _sample_index(sq_cdf, rng)
            if a:
                perms, signs = _pauli_action(_words(1), gate.qubits, n)
                psi = signs[a] * psi[perms[a]]

    if model is not None and model.global_depolarizing:
        if rng.random() < model.global_depolarizing:
            # A uniformly random Pauli on every qubit fully depolarizes
            a = int(rng.integers(4 ** n))
            perms, signs = _pauli_action(_words(n), tuple(range(n)), n)
            psi = signs[a] * psi[perms[a]]

    return psi


def run_circuit(
    circuit,
    model=None,
    mode='channel',
    rng=None,
    shots=None,
    basis=None,
    initial=None,
    check=None
    ):
    """
    Execute a circuit under a noise model.

    In `channel` mode the full Pauli channel is applied after every CNOT and
    the final `DensityMatrix` is returned, or a `ShotRecord` when `shots` are
    requested. In `trajectory` mode every shot samples one Pauli error per
    noisy location and a `ShotRecord` is always returned.
    """
    n = circuit.n_qubits
    if n > MAX_QUBITS:
        raise DimensionError('At most {0} qubits are supported'.format(MAX_QUBITS))

    if model is not None:
        missing = model.covers(circuit)
        if missing:
            raise ModelCoverageError(
                'No noise channel for junctions {0}'.format(', '.join(missing))
                )

    if initial is None:
        initial = DensityMatrix.zero(n)

    confusion = model.confusion(n) if model is not None else None

    if mode == 'channel':
        rho = _evolve_density(circuit, initial, model, check)
        if shots is None:
            return rho

        record = sample_shots(rho, basis or 'Z' * n, shots, rng)
        if confusion is not None:
            record = apply_readout_error(record, confusion, rng)
        return record

    if mode != 'trajectory':
        raise ValueError('Unknown mode {0!r}'.format(mode))

    assert rng is not None, 'Trajectory mode needs a random stream'
    shots = 1 if shots is None else int(shots)
    basis = str(basis or 'Z' * n).upper()
    rotations = Circuit(n, _basis_rotations(basis))

    # Trajectories start from a pure state
    values, vectors = np.linalg.eigh(initial.matrix)
    pure = np.isclose(values.max(), 1.0)
    assert pure, 'Trajectory mode needs a pure initial state'
    start = vectors[:, np.argmax(values)]

    counts = np.zeros(2 ** n, dtype=np.int64)
    for _ in range(shots):
        psi = _evolve_trajectory(circuit, start, model, rng)
        psi = _evolve_trajectory(rotations, psi, None, rng)
        probs = np.abs(psi) ** 2
        counts[_sample_index(np.cumsum(probs / probs.sum()), rng)] += 1

    record = ShotRecord(
        basis,
        {o: int(c) for o, c in zip(_outcomes(n), counts) if c}
        )
    if confusion is not None:
        record = apply_readout_error(record, confusion, rng)
    return record


def circuit_unitary(circuit):
    """Return the ideal unitary of a circuit"""
    n = circuit.n_qubits
    unitary = np.eye(2 ** n, dtype=complex)
    for gate in circuit:
        unitary = _full_matrix(gate_unitary(gate), gate.qubits, n) @ unitary
    return unitary


def process_chi(channel, n):
    """
    Return the chi matrix (Pauli basis, `E(rho) = sum chi_ab P_a rho P_b`) of
    a linear map given as a function on `d x d` matrices.
    """
    d = 2 ** n
    choi = np.zeros((d * d, d * d), dtype=complex)
    for i in range(d):
        for j in range(d):
            unit = np.zeros((d, d), dtype=complex)
            unit[i, j] = 1
            out = channel(unit)
            # choi[(k, i), (l, j)] = E(|i><j|)[k, l]
            choi[i::d, j::d] += out

    vectors = np.array([
        pauli_matrix(p.word).reshape(-1) for p in PauliString.all(n)
        ])
    return vectors.conj() @ choi @ vectors.T / d ** 2
