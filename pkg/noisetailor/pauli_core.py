"""
Pauli strings and the maps between the fidelity (PTM diagonal) and error
probability (chi diagonal) pictures of a Pauli channel.

Index encoding: a word `w_0 w_1 ... w_{q-1}` over I=0, X=1, Y=2, Z=3 has the
index `sum(w_k * 4 ** (q - 1 - k))`, so qubit 0 is the most significant
digit and `numpy.kron(P_0, P_1, ...)` is the matrix of the word. Basis
states use the same order (qubit 0 is the most significant bit).
"""

import functools
import math

import numpy as np

__all__ = [
    # Exceptions
    'DimensionError',
    'UnsupportedGate',

    # Types
    'FidelityVector',
    'PauliString',
    'ProbVector',

    # Operations
    'clifford_conjugate',
    'inverse_walsh_hadamard',
    'pauli_matrix',
    'sign_matrix',
    'symplectic_product',
    'walsh_hadamard'
    ]


SYMBOLS = 'IXYZ'

# Tolerance on the sum of a probability vector
SUM_TOLERANCE = 1e-12

# Entries below this are treated as genuinely negative (quasi-probabilities)
NEGATIVE_TOLERANCE = 1e-12

# Single-qubit Pauli matrices indexed by symbol
_MATRICES = (
    np.eye(2, dtype=complex),
    np.array([[0, 1], [1, 0]], dtype=complex),
    np.array([[0, -1j], [1j, 0]], dtype=complex),
    np.array([[1, 0], [0, -1]], dtype=complex)
    )

# Per-qubit Walsh-Hadamard butterfly, `(-1) ** sp(a, b)` for single-qubit a, b
_BUTTERFLY = np.array([
    [1, 1, 1, 1],
    [1, 1, -1, -1],
    [1, -1, 1, -1],
    [1, -1, -1, 1]
    ], dtype=float)

# (x, z) bits for each single-qubit symbol, Y = i X Z
_XZ = ((0, 0), (1, 0), (1, 1), (0, 1))
_FROM_XZ = {(0, 0): 0, (1, 0): 1, (1, 1): 2, (0, 1): 3}


class DimensionError(ValueError):
    """
    Raised when two objects that must act on the same number of qubits don't.
    """


class UnsupportedGate(ValueError):
    """
    Raised when a gate outside the supported Clifford set is conjugated.
    """


class PauliString:
    """
    A word over {I, X, Y, Z} on `qubits` qubits.
    """

    __slots__ = ('_qubits', '_symbols')

    def __init__(self, word):
        word = str(word).upper()
        if not word or any(c not in SYMBOLS for c in word):
            raise ValueError('Invalid Pauli word {0!r}'.format(word))

        # The number of qubits the string acts on
        self._qubits = len(word)

        # The symbol index (I=0, X=1, Y=2, Z=3) for each qubit
        self._symbols = tuple(SYMBOLS.index(c) for c in word)

    def __eq__(self, other):
        if not isinstance(other, PauliString):
            return False
        return self._symbols == other._symbols

    def __hash__(self):
        return hash(self._symbols)

    def __lt__(self, other):
        return (self._qubits, self.index) < (other._qubits, other.index)

    def __repr__(self):
        return "PauliString('{0}')".format(self.word)

    def __str__(self):
        return self.word

    def __len__(self):
        return self._qubits

    def __getitem__(self, qubit):
        return SYMBOLS[self._symbols[qubit]]

    # Read-only properties

    @property
    def qubits(self):
        """Return the number of qubits the string acts on"""
        return self._qubits

    @property
    def symbols(self):
        """Return the symbol index for each qubit"""
        return self._symbols

    @property
    def word(self):
        return ''.join(SYMBOLS[s] for s in self._symbols)

    @property
    def index(self):
        """Return the canonical base-4 index (qubit 0 most significant)"""
        index = 0
        for s in self._symbols:
            index = index * 4 + s
        return index

    @property
    def support(self):
        """Return the qubits the string acts on non-trivially"""
        return tuple(i for i, s in enumerate(self._symbols) if s)

    @property
    def weight(self):
        return len(self.support)

    # Public methods

    def embed(self, positions, qubits):
        """
        Return the string placed on `positions` of a larger register of
        `qubits` qubits (identity elsewhere).
        """
        if len(positions) != self._qubits:
            raise DimensionError(
                'Cannot place {0} symbols on {1} positions'.format(
                    self._qubits,
                    len(positions)
                    )
                )

        word = ['I'] * qubits
        for position, symbol in zip(positions, self._symbols):
            word[position] = SYMBOLS[symbol]
        return PauliString(''.join(word))

    def restrict(self, positions):
        """Return the sub-string on the given positions"""
        return PauliString(''.join(self[p] for p in positions))

    def matrix(self):
        """Return the dense 2^q x 2^q matrix of the string"""
        return pauli_matrix(self.word)

    def xz(self):
        """Return the (x, z) bit tuples of the string"""
        return tuple(_XZ[s] for s in self._symbols)

    @classmethod
    def from_index(cls, index, qubits):
        """Return the string with the given canonical index"""
        if not 0 <= index < 4 ** qubits:
            raise ValueError(
                'Index {0} out of range for {1} qubits'.format(index, qubits)
                )

        symbols = []
        for i in range(qubits):
            symbols.append(SYMBOLS[index % 4])
            index //= 4
        return cls(''.join(reversed(symbols)))

    @classmethod
    def identity(cls, qubits):
        return cls('I' * qubits)

    @classmethod
    def all(cls, qubits):
        """Return every string on `qubits` qubits in index order"""
        return [cls.from_index(a, qubits) for a in range(4 ** qubits)]


class _PauliVector:
    """
    Base class for the per-Pauli-index vectors of a channel.
    """

    def __init__(self, values):
        values = np.array(values, dtype=float)
        if values.ndim != 1:
            raise DimensionError('Pauli vectors must be one dimensional')

        q = math.log(len(values), 4) if len(values) else 0
        qubits = int(round(q))
        if qubits < 1 or 4 ** qubits != len(values):
            raise DimensionError(
                'Vector length {0} is not a power of 4'.format(len(values))
                )

        if not np.all(np.isfinite(values)):
            raise ValueError('Pauli vector contains non-finite values')

        values.setflags(write=False)

        self._q = qubits
        self._values = values

    def __len__(self):
        return len(self._values)

    def __getitem__(self, index):
        if isinstance(index, (str, PauliString)):
            index = PauliString(index).index
        return self._values[index]

    def __iter__(self):
        return iter(self._values)

    def __eq__(self, other):
        if not isinstance(other, self.__class__):
            return False
        return np.array_equal(self._values, other._values)

    __hash__ = None

    # Read-only properties

    @property
    def q(self):
        """Return the number of qubits the channel acts on"""
        return self._q

    @property
    def values(self):
        """Return the read-only numpy array of values"""
        return self._values

    def to_json_type(self):
        return [float(v) for v in self._values]


class FidelityVector(_PauliVector):
    """
    The PTM diagonal of a Pauli channel. `f[0]` is exactly 1; other entries may
    exceed 1 (tomography anomalies) or be of any magnitude (inverse channels).
    """

    def __init__(self, values):
        super().__init__(values)

        if abs(self._values[0] - 1.0) > SUM_TOLERANCE * 10:
            raise ValueError(
                'f[0] must be 1 (trace preservation), got {0!r}'.format(
                    float(self._values[0])
                    )
                )

        # Pin the trace-preserving entry
        values = self._values.copy()
        values[0] = 1.0
        values.setflags(write=False)
        self._values = values

    def __repr__(self):
        return 'FidelityVector(q={0}, min={1:.6f})'.format(
            self._q,
            float(self._values.min())
            )

    def __mul__(self, other):
        """Compose two diagonal channels (they commute)"""
        _check_same_q(self, other)
        return FidelityVector(self._values * other._values)

    def blocks(self):
        """
        Return the fidelities of a 3-qubit channel as a (16, 4) array whose
        columns are the neighbour blocks I, X, Y, Z.
        """
        if self._q != 3:
            raise DimensionError('Only 3-qubit channels have neighbour blocks')
        return self._values.reshape(16, 4)

    @classmethod
    def identity(cls, q):
        return cls(np.ones(4 ** q))


class ProbVector(_PauliVector):
    """
    Pauli error probabilities (chi diagonal). A vector with negative entries
    must be flagged `quasi`.
    """

    def __init__(self, values, quasi=None):
        super().__init__(values)

        total = self._values.sum()
        if abs(total - 1.0) > SUM_TOLERANCE * len(self._values):
            raise ValueError(
                'Probabilities must sum to 1, got {0!r}'.format(float(total))
                )

        negative = bool(np.any(self._values < -NEGATIVE_TOLERANCE))
        if quasi is None:
            quasi = negative

        elif not quasi and negative:
            raise ValueError(
                'Negative entries are only allowed in a quasi-distribution'
                )

        # Flag indicating the vector is a signed quasi-distribution
        self._quasi = bool(quasi)

    def __repr__(self):
        return 'ProbVector(q={0}, p0={1:.6f}, quasi={2})'.format(
            self._q,
            float(self._values[0]),
            self._quasi
            )

    @property
    def quasi(self):
        return self._quasi

    @property
    def gamma(self):
        """Return the sampling factor `sum(|p|)`"""
        return float(np.abs(self._values).sum())

    @classmethod
    def identity(cls, q):
        values = np.zeros(4 ** q)
        values[0] = 1.0
        return cls(values)


# Operations

def symplectic_product(a, b):
    """
    Return 1 if the two Pauli strings anticommute and 0 if they commute.
    """
    if a.qubits != b.qubits:
        raise DimensionError(
            'Cannot compare strings on {0} and {1} qubits'.format(
                a.qubits,
                b.qubits
                )
            )

    parity = 0
    for s, t in zip(a.symbols, b.symbols):
        if s and t and s != t:
            parity ^= 1
    return parity


@functools.lru_cache(maxsize=None)
def sign_matrix(q):
    """
    Return the 4^q x 4^q matrix `(-1) ** sp(a, b)` (read-only).
    """
    matrix = np.ones((1, 1))
    for _ in range(q):
        matrix = np.kron(matrix, _BUTTERFLY)
    matrix.setflags(write=False)
    return matrix


def _butterfly(values, q):
    """Apply the per-qubit 4x4 butterfly on every qubit axis"""
    tensor = np.asarray(values, dtype=float).reshape((4,) * q)
    for axis in range(q):
        tensor = np.moveaxis(
            np.tensordot(_BUTTERFLY, tensor, axes=([1], [axis])),
            0,
            axis
            )
    return tensor.reshape(-1)


def walsh_hadamard(f):
    """
    Map fidelities to Pauli error probabilities,
    `p_a = 4^-q sum_b (-1)^sp(a, b) f_b`.
    """
    if not isinstance(f, FidelityVector):
        f = FidelityVector(f)

    p = _butterfly(f.values, f.q) / 4 ** f.q
    return ProbVector(p)


def inverse_walsh_hadamard(p):
    """
    Map Pauli error probabilities to fidelities,
    `f_b = sum_a (-1)^sp(a, b) p_a`.
    """
    if not isinstance(p, ProbVector):
        p = ProbVector(p)

    return FidelityVector(_butterfly(p.values, p.q))


@functools.lru_cache(maxsize=4096)
def _pauli_matrix(word):
    matrix = np.ones((1, 1), dtype=complex)
    for c in word:
        matrix = np.kron(matrix, _MATRICES[SYMBOLS.index(c)])
    matrix.setflags(write=False)
    return matrix


def pauli_matrix(word):
    """Return the dense (read-only) matrix of a Pauli word"""
    if isinstance(word, PauliString):
        word = word.word
    return _pauli_matrix(str(word).upper())


# Clifford conjugation

# Single-qubit conjugation tables: symbol -> (symbol, sign), I fixed
_SINGLE_QUBIT_TABLES = {
    'h': {1: (3, 1), 2: (2, -1), 3: (1, 1)},
    'x': {1: (1, 1), 2: (2, -1), 3: (3, -1)},
    'y': {1: (1, -1), 2: (2, 1), 3: (3, -1)},
    'z': {1: (1, -1), 2: (2, -1), 3: (3, 1)},
    's': {1: (2, 1), 2: (1, -1), 3: (3, 1)},
    'sdg': {1: (2, -1), 2: (1, 1), 3: (3, 1)},
    ('rx', 1): {1: (1, 1), 2: (3, 1), 3: (2, -1)},
    ('rx', -1): {1: (1, 1), 2: (3, -1), 3: (2, 1)},
    ('ry', 1): {1: (3, -1), 2: (2, 1), 3: (1, 1)},
    ('ry', -1): {1: (3, 1), 2: (2, 1), 3: (1, -1)},
    ('rz', 1): {1: (2, 1), 2: (1, -1), 3: (3, 1)},
    ('rz', -1): {1: (2, -1), 2: (1, 1), 3: (3, 1)}
    }


def _quarter_turn(angle):
    """Return +1/-1 for an angle of +-pi/2 (mod 2 pi), else None"""
    turns = (angle / (math.pi / 2)) % 4
    if abs(turns - 1) < 1e-9:
        return 1
    if abs(turns - 3) < 1e-9:
        return -1
    return None


def clifford_conjugate(gate, p):
    """
    Return `(U p U^dagger, sign)` for a supported Clifford gate `U`.

    `gate` is a `Gate` (see `noisetailor.circuits`) whose qubits index into
    `p`. Supported gates: cx, h, s, sdg, x, y, z and rx/ry/rz by +-pi/2.
    """
    for qubit in gate.qubits:
        if not 0 <= qubit < p.qubits:
            raise DimensionError(
                'Gate qubit {0} outside a {1}-qubit string'.format(
                    qubit,
                    p.qubits
                    )
                )

    symbols = list(p.symbols)

    if gate.name == 'cx':
        c, t = gate.qubits
        (xc, zc), (xt, zt) = _XZ[symbols[c]], _XZ[symbols[t]]

        # Aaronson-Gottesman phase rule, evaluated on the incoming bits
        sign = -1 if xc & zt & (xt ^ zc ^ 1) else 1

        symbols[c] = _FROM_XZ[(xc, zc ^ zt)]
        symbols[t] = _FROM_XZ[(xt ^ xc, zt)]
        return PauliString(''.join(SYMBOLS[s] for s in symbols)), sign

    key = gate.name
    if gate.name in ('rx', 'ry', 'rz'):
        turn = _quarter_turn(gate.param)
        if turn is None:
            raise UnsupportedGate(
                '{0}({1}) is not a Clifford gate'.format(gate.name, gate.param)
                )
        key = (gate.name, turn)

    table = _SINGLE_QUBIT_TABLES.get(key)
    if table is None:
        raise UnsupportedGate('Unsupported gate {0!r}'.format(gate.name))

    qubit = gate.qubits[0]
    sign = 1
    if symbols[qubit]:
        symbols[qubit], sign = table[symbols[qubit]]

    return PauliString(''.join(SYMBOLS[s] for s in symbols)), sign


def _check_same_q(a, b):
    if a.q != b.q:
        raise DimensionError(
            'Channels act on {0} and {1} qubits'.format(a.q, b.q)
            )
