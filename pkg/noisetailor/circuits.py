import collections
import re

__all__ = [
    'Circuit',
    'Gate',
    'parse_state'
    ]


# Gate names understood by the simulator
SINGLE_QUBIT_GATES = {'h', 'x', 'y', 'z', 's', 'sdg', 'rx', 'ry', 'rz'}
ROTATIONS = {'rx', 'ry', 'rz'}
TWO_QUBIT_GATES = {'cx'}

# Product-state labels, one per qubit
STATE_PATTERN = r'[+-]y|[01+-]'

# Gates preparing each product-state label from |0>
_PREPARATIONS = {
    '0': (),
    '1': ('x',),
    '+': ('h',),
    '-': ('x', 'h'),
    '+y': ('h', 's'),
    '-y': ('x', 'h', 's')
    }


class Gate:
    """
    A single gate. CNOTs carry the junction whose noise they suffer and,
    optionally, the neighbour qubit exposed to crosstalk.
    """

    __slots__ = (
        '_name',
        '_qubits',
        '_param',
        '_junction',
        '_neighbor',
        '_dressing',
        '_moment'
        )

    def __init__(self,
        name,
        qubits,
        param=None,
        junction=None,
        neighbor=None,
        dressing=False,
        moment=None
        ):

        name = name.lower()
        qubits = tuple(int(q) for q in qubits)

        if name in SINGLE_QUBIT_GATES:
            assert len(qubits) == 1, \
                    '{0} acts on a single qubit'.format(name)
            if name in ROTATIONS and param is None:
                raise ValueError('{0} needs an angle'.format(name))

        elif name in TWO_QUBIT_GATES:
            assert len(qubits) == 2 and qubits[0] != qubits[1], \
                    'cx needs distinct control and target qubits'
            if junction is None:
                junction = '{0}-{1}'.format(*qubits)

        else:
            raise ValueError('Unknown gate {0!r}'.format(name))

        self._name = name
        self._qubits = qubits
        self._param = None if param is None else float(param)

        # The junction id used to look up this gate's noise channel
        self._junction = junction

        # The spectator qubit exposed to this gate's crosstalk (if any)
        self._neighbor = None if neighbor is None else int(neighbor)

        # Flag for gates inserted by twirling/tailoring, which are folded into
        # adjacent single-qubit gates on hardware.
        self._dressing = bool(dressing)

        # Gates sharing a moment are executed simultaneously
        self._moment = moment

    def __eq__(self, other):
        if not isinstance(other, Gate):
            return False
        return self._key() == other._key()

    def __hash__(self):
        return hash(self._key())

    def __repr__(self):
        args = [repr(self._name), repr(self._qubits)]
        if self._param is not None:
            args.append('param={0!r}'.format(self._param))
        if self._neighbor is not None:
            args.append('neighbor={0!r}'.format(self._neighbor))
        return 'Gate({0})'.format(', '.join(args))

    def _key(self):
        return (
            self._name,
            self._qubits,
            self._param,
            self._junction,
            self._neighbor,
            self._dressing
            )

    # Read-only properties

    @property
    def name(self):
        return self._name

    @property
    def qubits(self):
        return self._qubits

    @property
    def param(self):
        return self._param

    @property
    def junction(self):
        return self._junction

    @property
    def neighbor(self):
        return self._neighbor

    @property
    def dressing(self):
        return self._dressing

    @property
    def moment(self):
        return self._moment

    @property
    def is_cnot(self):
        return self._name == 'cx'

    @property
    def active_qubits(self):
        """Return the qubits a junction channel acts on, neighbour last"""
        if self._neighbor is None:
            return self._qubits
        return self._qubits + (self._neighbor,)

    # Public methods

    def inverse(self):
        """Return the inverse gate"""
        if self._name in ROTATIONS:
            return self.replace(param=-self._param)
        if self._name == 's':
            return self.replace(name='sdg')
        if self._name == 'sdg':
            return self.replace(name='s')
        return self

    def replace(self, **changes):
        """Return a copy of the gate with the given attributes changed"""
        args = {
            'name': self._name,
            'qubits': self._qubits,
            'param': self._param,
            'junction': self._junction,
            'neighbor': self._neighbor,
            'dressing': self._dressing,
            'moment': self._moment
            }
        args.update(changes)
        return Gate(**args)

    def to_json_type(self):
        document = {'name': self._name, 'qubits': list(self._qubits)}
        if self._param is not None:
            document['param'] = self._param
        if self._name in TWO_QUBIT_GATES:
            document['junction'] = self._junction
        if self._neighbor is not None:
            document['neighbor'] = self._neighbor
        if self._dressing:
            document['dressing'] = True
        if self._moment is not None:
            document['moment'] = self._moment
        return document

    @classmethod
    def from_json_type(cls, document):
        return cls(**document)


class Circuit:
    """
    An ordered list of gates on `n_qubits` qubits. Builder methods append in
    place and return the circuit so calls can be chained.
    """

    def __init__(self, n_qubits, gates=None):
        if n_qubits < 1:
            raise ValueError('A circuit needs at least one qubit')

        self._n_qubits = int(n_qubits)
        self._gates = []
        for gate in gates or []:
            self.append(gate)

    def __eq__(self, other):
        if not isinstance(other, Circuit):
            return False
        return (self._n_qubits, self._gates) == (other._n_qubits, other._gates)

    def __iter__(self):
        return iter(self._gates)

    def __len__(self):
        return len(self._gates)

    def __getitem__(self, index):
        return self._gates[index]

    def __repr__(self):
        return '<Circuit qubits={0} gates={1} cnots={2}>'.format(
            self._n_qubits,
            len(self._gates),
            self.cnot_count()
            )

    # Read-only properties

    @property
    def n_qubits(self):
        return self._n_qubits

    @property
    def gates(self):
        return tuple(self._gates)

    # Building

    def append(self, gate):
        for qubit in gate.qubits + (
            () if gate.neighbor is None else (gate.neighbor,)
        ):
            if not 0 <= qubit < self._n_qubits:
                raise IndexError(
                    'Qubit {0} outside a {1}-qubit circuit'.format(
                        qubit,
                        self._n_qubits
                        )
                    )
        self._gates.append(gate)
        return self

    def extend(self, gates):
        for gate in gates:
            self.append(gate)
        return self

    def h(self, qubit):
        return self.append(Gate('h', [qubit]))

    def x(self, qubit):
        return self.append(Gate('x', [qubit]))

    def y(self, qubit):
        return self.append(Gate('y', [qubit]))

    def z(self, qubit):
        return self.append(Gate('z', [qubit]))

    def s(self, qubit):
        return self.append(Gate('s', [qubit]))

    def sdg(self, qubit):
        return self.append(Gate('sdg', [qubit]))

    def rx(self, angle, qubit):
        return self.append(Gate('rx', [qubit], angle))

    def ry(self, angle, qubit):
        return self.append(Gate('ry', [qubit], angle))

    def rz(self, angle, qubit):
        return self.append(Gate('rz', [qubit], angle))

    def cx(self, control, target, junction=None, neighbor=None):
        return self.append(
            Gate('cx', [control, target], junction=junction, neighbor=neighbor)
            )

    def prepare(self, state):
        """Append the gates preparing a product state from |0...0>"""
        labels = parse_state(state, self._n_qubits)
        for qubit, label in enumerate(labels):
            for name in _PREPARATIONS[label]:
                self.append(Gate(name, [qubit]))
        return self

    # Queries

    def cnot_count(self):
        return sum(1 for g in self._gates if g.is_cnot)

    def junction_counts(self):
        """Return a mapping of junction id to the number of CNOTs on it"""
        return dict(
            sorted(collections.Counter(
                g.junction for g in self._gates if g.is_cnot
                ).items())
            )

    def junctions(self):
        return list(self.junction_counts())

    def copy(self):
        return Circuit(self._n_qubits, self._gates)

    # Serializing

    def to_json_type(self):
        return {
            'n_qubits': self._n_qubits,
            'gates': [g.to_json_type() for g in self._gates]
            }

    @classmethod
    def from_json_type(cls, document):
        return cls(
            document['n_qubits'],
            [Gate.from_json_type(g) for g in document['gates']]
            )


def parse_state(state, n_qubits):
    """
    Return the per-qubit labels of a product state. `state` is a list of
    labels or a string such as `'+0+y'`.
    """
    if isinstance(state, str):
        labels = re.findall(STATE_PATTERN, state)
        if ''.join(labels) != state:
            raise ValueError('Invalid state specification {0!r}'.format(state))
    else:
        labels = list(state)

    if len(labels) != n_qubits:
        raise ValueError(
            'State {0!r} does not cover {1} qubits'.format(state, n_qubits)
            )

    for label in labels:
        if label not in _PREPARATIONS:
            raise ValueError('Unknown state label {0!r}'.format(label))

    return labels
