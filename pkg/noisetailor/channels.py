"""
Pauli channels in PTM-diagonal form, quasi-probability plans and the target
strength helpers used by noise tailoring.

All channels here are diagonal in the Pauli transfer matrix picture, so
inversion and composition are elementwise.
"""

import math

import numpy as np

from noisetailor.pauli_core import (
    DimensionError,
    FidelityVector,
    PauliString,
    ProbVector,
    sign_matrix,
    walsh_hadamard
    )

__all__ = [
    # Exceptions
    'InvalidChannel',
    'SanitationFailure',
    'SingularChannel',

    # Types
    'DepolarizingParams2Q',
    'QuasiLocalParams3Q',
    'QuasiProbPlan',

    # Operations
    'compose',
    'invert',
    'isotropize_neighbor',
    'make_depolarizing_2q',
    'make_quasilocal_3q',
    'matched_epsilon',
    'pec_gamma',
    'pec_plan',
    'per_plan',
    'q_dnt',
    'sample_dressing',
    'sample_dressings',
    'sanitize',
    'tailor_plan',
    'total_error'
    ]


class InvalidChannel(ValueError):
    """
    Raised when channel parameters are out of range.
    """


class SingularChannel(ValueError):
    """
    Raised when a channel with a zero fidelity has to be inverted.
    """


class SanitationFailure(ValueError):
    """
    Raised when clamping negative probabilities leaves no probability mass.
    """


class DepolarizingParams2Q:
    """
    A 2-qubit depolarizing channel with PTM damping `epsilon`; each of the 15
    Pauli errors occurs with rate `epsilon / 16`.
    """

    def __init__(self, epsilon):
        epsilon = float(epsilon)
        if not 0 <= epsilon <= 1:
            raise InvalidChannel(
                'Depolarizing epsilon must be in [0, 1], got {0!r}'.format(
                    epsilon
                    )
                )
        self._epsilon = epsilon

    def __eq__(self, other):
        if not isinstance(other, DepolarizingParams2Q):
            return False
        return self._epsilon == other._epsilon

    def __repr__(self):
        return 'DepolarizingParams2Q(epsilon={0!r})'.format(self._epsilon)

    @property
    def epsilon(self):
        return self._epsilon

    @property
    def rate(self):
        """Return the per-Pauli error rate (lambda_d)"""
        return self._epsilon / 16

    @property
    def total_error(self):
        return 15 * self._epsilon / 16

    @classmethod
    def from_rate(cls, rate):
        return cls(16 * rate)

    def to_json_type(self):
        return {'epsilon': self._epsilon}


class QuasiLocalParams3Q:
    """
    The 3-parameter quasi-local depolarizing channel on a CNOT pair and its
    neighbour: depolarizing on the pair, on the neighbour and on all three.
    """

    def __init__(self, eps_cnot, eps_neigh, eps_glob):
        values = [float(eps_cnot), float(eps_neigh), float(eps_glob)]
        if min(values) < 0 or sum(values) > 1:
            raise InvalidChannel(
                'Quasi-local rates must be >= 0 with a sum <= 1, '
                'got {0!r}'.format(values)
                )
        self._eps_cnot, self._eps_neigh, self._eps_glob = values

    def __eq__(self, other):
        if not isinstance(other, QuasiLocalParams3Q):
            return False
        return self.as_tuple() == other.as_tuple()

    def __repr__(self):
        return 'QuasiLocalParams3Q({0!r}, {1!r}, {2!r})'.format(
            *self.as_tuple()
            )

    @property
    def eps_cnot(self):
        return self._eps_cnot

    @property
    def eps_neigh(self):
        return self._eps_neigh

    @property
    def eps_glob(self):
        return self._eps_glob

    def as_tuple(self):
        return (self._eps_cnot, self._eps_neigh, self._eps_glob)

    def to_json_type(self):
        return {
            'eps_cnot': self._eps_cnot,
            'eps_neigh': self._eps_neigh,
            'eps_glob': self._eps_glob
            }


class QuasiProbPlan:
    """
    A signed distribution over Pauli dressings for one junction. Sampling
    index `a` with probability `|q_a| / gamma` and weighting by
    `gamma * sign(q_a)` reproduces the quasi-channel on average.
    """

    def __init__(self, quasi, junction_id=None):
        quasi = np.array(quasi, dtype=float)
        quasi.setflags(write=False)

        if abs(quasi.sum() - 1.0) > 1e-12 * len(quasi):
            raise InvalidChannel(
                'Quasi-probabilities must sum to 1, got {0!r}'.format(
                    float(quasi.sum())
                    )
                )

        # Check the dimension through the probability vector type
        ProbVector(quasi, quasi=True)

        self._quasi = quasi
        self._junction_id = junction_id

        # The sampling factor and the (true) sampling distribution
        self._gamma = float(np.abs(quasi).sum())
        probs = np.abs(quasi) / self._gamma
        probs.setflags(write=False)
        self._probs = probs

        signs = np.where(quasi < 0, -1, 1)
        signs.setflags(write=False)
        self._signs = signs

        # Cumulative distribution used for sampling
        self._cdf = np.cumsum(probs)
        self._cdf[-1] = 1.0

    def __repr__(self):
        return '<QuasiProbPlan junction={0!r} q={1} gamma={2:.6f}>'.format(
            self._junction_id,
            self.q,
            self._gamma
            )

    # Read-only properties

    @property
    def q(self):
        return int(round(math.log(len(self._quasi), 4)))

    @property
    def quasi(self):
        return self._quasi

    @property
    def probs(self):
        return self._probs

    @property
    def signs(self):
        return self._signs

    @property
    def gamma(self):
        return self._gamma

    @property
    def log_gamma(self):
        return math.log(self._gamma)

    @property
    def junction_id(self):
        return self._junction_id

    @property
    def is_identity(self):
        return self._quasi[0] == 1.0 and not np.any(self._quasi[1:])

    # Public methods

    def tailor_fidelities(self):
        """Return the fidelities of the (quasi) channel the plan samples"""
        return FidelityVector(self._quasi @ sign_matrix(self.q))

    def with_junction(self, junction_id):
        return QuasiProbPlan(self._quasi, junction_id)

    def to_json_type(self):
        return {
            'junction_id': self._junction_id,
            'q': self.q,
            'quasi': [float(v) for v in self._quasi],
            'gamma': self._gamma
            }

    @classmethod
    def from_json_type(cls, document):
        return cls(document['quasi'], document.get('junction_id'))

    @classmethod
    def identity(cls, q, junction_id=None):
        quasi = np.zeros(4 ** q)
        quasi[0] = 1.0
        return cls(quasi, junction_id)


# Constructors

def make_depolarizing_2q(params):
    """Return the PTM diagonal `(1, 1 - eps, ..., 1 - eps)`"""
    if not isinstance(params, DepolarizingParams2Q):
        params = DepolarizingParams2Q(params)

    f = np.full(16, 1.0 - params.epsilon)
    f[0] = 1.0
    return FidelityVector(f)


def make_quasilocal_3q(params):
    """
    Return the 64 fidelities of a quasi-local 3-qubit channel, indexed
    `4 * a + k` with `a` the pair string and `k` the neighbour symbol.
    """
    if not isinstance(params, QuasiLocalParams3Q):
        params = QuasiLocalParams3Q(*params)

    eps_c, eps_n, eps_g = params.as_tuple()

    blocks = np.empty((16, 4))

    # Neighbour identity block
    blocks[0, 0] = 1.0
    blocks[1:, 0] = 1.0 - eps_c - eps_g

    # Neighbour error blocks (X, Y, Z share the same values)
    blocks[0, 1:] = 1.0 - eps_n - eps_g
    blocks[1:, 1:] = 1.0 - eps_n - eps_c - eps_g

    return FidelityVector(blocks.reshape(-1))


def compose(*channels):
    """Return the composition of diagonal channels"""
    assert channels, 'Nothing to compose'

    values = np.ones(len(channels[0]))
    for channel in channels:
        if len(channel) != len(values):
            raise DimensionError('Cannot compose channels of different size')
        values = values * channel.values
    return FidelityVector(values)


def invert(channel):
    """Return the inverse of a diagonal channel"""
    if np.any(channel.values == 0):
        raise SingularChannel('Channel has a zero fidelity')
    return FidelityVector(1.0 / channel.values)


def isotropize_neighbor(channel):
    """
    Average the neighbour X, Y, Z blocks of a 3-qubit channel, the effect of
    an infinite crosstalk-aware twirl.
    """
    blocks = channel.blocks().copy()
    blocks[:, 1:] = blocks[:, 1:].mean(axis=1, keepdims=True)
    return FidelityVector(blocks.reshape(-1))


def total_error(channel):
    """Return the total Pauli error probability `1 - p_0`"""
    return float(1.0 - channel.values.sum() / len(channel))


# Quasi-probability plans

def tailor_plan(gate, target, junction_id=None):
    """
    Return the plan sampling `E_tailor = E_target E_gate^-1`, which turns the
    gate's noise into the target channel.
    """
    if gate.q != target.q:
        raise DimensionError(
            'Gate and target act on {0} and {1} qubits'.format(gate.q, target.q)
            )

    tailor = compose(target, invert(gate))
    quasi = walsh_hadamard(tailor)
    return QuasiProbPlan(quasi.values, junction_id)


def pec_plan(gate, junction_id=None):
    """Return the plan cancelling the gate noise entirely (target identity)"""
    return tailor_plan(gate, FidelityVector.identity(gate.q), junction_id)


def per_plan(gate, scale, junction_id=None):
    """
    Return the plan rescaling the gate noise to `f_a ** scale` (scale >= 1
    amplifies, as used for error-rate rescaling).
    """
    if scale < 1:
        raise InvalidChannel('Rescaling needs scale >= 1')

    target = FidelityVector(np.sign(gate.values) * np.abs(gate.values) ** scale)
    return tailor_plan(gate, target, junction_id)


def pec_gamma(epsilon):
    """Return the closed-form PEC gamma for 2-qubit depolarizing noise"""
    return (30 / (1 - epsilon) - 14) / 16


def matched_epsilon(gate):
    """
    Return the depolarizing epsilon with the same average fidelity as the
    gate channel, `1 - mean(f_a, a != 0)`.
    """
    if gate.q != 2:
        raise DimensionError('Matched epsilon is defined for 2-qubit channels')
    return float(1.0 - gate.values[1:].mean())


def q_dnt(gate, epsilon, junction_id=None):
    """
    Return the plan tailoring a 2-qubit gate channel to depolarizing noise of
    strength `epsilon`:

        q_a = (1 + (1 - epsilon) sum_{b >= 1} (-1)^sp(a, b) / f_b) / 16
    """
    if gate.q != 2:
        raise DimensionError('q_dnt is defined for 2-qubit channels')
    if np.any(gate.values == 0):
        raise SingularChannel('Channel has a zero fidelity')

    signs = sign_matrix(2)
    quasi = (1.0 + (1.0 - epsilon) * (signs[:, 1:] @ (1.0 / gate.values[1:])))
    return QuasiProbPlan(quasi / 16, junction_id)


# Sampling

def sample_dressing(plan, rng):
    """Draw one dressing, returning `(PauliString, sign)`"""
    index = int(np.searchsorted(plan._cdf, rng.random(), side='right'))
    index = min(index, len(plan.probs) - 1)
    return PauliString.from_index(index, plan.q), int(plan.signs[index])


def sample_dressings(plan, rng, size):
    """Draw `size` dressings, returning arrays of indices and signs"""
    indices = np.searchsorted(plan._cdf, rng.random(size), side='right')
    indices = np.minimum(indices, len(plan.probs) - 1)
    return indices, plan.signs[indices]


# Emulation helpers

def sanitize(probs):
    """
    Clamp negative probabilities to 0 and renormalize. Note this differs from
    clamping fidelities above 1.
    """
    values = np.clip(np.asarray(probs.values, dtype=float), 0, None)
    total = values.sum()
    if total <= 0:
        raise SanitationFailure('No probability mass left after clamping')
    return ProbVector(values / total, quasi=False)
