from blinker import signal
from collections import OrderedDict

import numpy as np

from noisetailor.channels import QuasiLocalParams3Q, make_quasilocal_3q
from noisetailor.factory.makers import Lambda, Maker, Static
from noisetailor.factory.makers.numbers import PauliRates
from noisetailor.pauli_core import ProbVector, inverse_walsh_hadamard
from noisetailor.simulator import JunctionNoise

__all__ = [
    'Blueprint',
    'CrosstalkBlueprint',
    'JunctionBlueprint'
    ]


class _BlueprintMeta(type):
    """
    Meta class for `Blueprint`s to collect their instructions and check a
    record class is associated with them.
    """

    def __new__(meta, name, bases, dct):

        # Collect all instructions for the blueprint. Each instruction is stored
        # as a key value pair in a dictionary where the name represents the
        # field the instruction refers to and the value is a `Maker` type for
        # generating a value for that field. Inherited instructions keep their
        # position when overridden.
        instructions = OrderedDict()
        for base in bases:
            instructions.update(getattr(base, '_instructions', {}))
        instructions.update(dct.get('_instructions') or {})

        for k, v in dct.items():
            if isinstance(v, Maker):
                instructions[k] = v

        dct['_instructions'] = instructions

        # Check the blueprint has a record class associated with it
        assert '_record_cls' in dct or any(
            hasattr(b, '_record_cls') for b in bases
            ) or len(bases) == 0, \
                'No `_record_cls` defined for the blueprint'

        # Meta-fields are set when generating a document but are not fields
        # of the associated record class.
        meta_fields = set()
        for base in bases:
            meta_fields |= set(getattr(base, '_meta_fields', set()))
        dct['_meta_fields'] = meta_fields | set(dct.get('_meta_fields', set()))

        return super(_BlueprintMeta, meta).__new__(meta, name, bases, dct)


class Blueprint(metaclass=_BlueprintMeta):
    """
    Blueprints provide the instructions for producing a synthetic document
    for a record class.
    """

    def __init__(self):
        assert False, \
            'Blueprint classes should remain static and not be initialized'

    # Public methods

    @classmethod
    def get_record_cls(cls):
        """Return the record class for the blueprint"""
        return cls._record_cls

    @classmethod
    def get_instructions(cls):
        """Return the instructions for the blueprint"""
        return dict(cls._instructions)

    @classmethod
    def get_meta_fields(cls):
        """Return the meta-fields for the blueprint"""
        return cls._meta_fields

    # Factory methods

    @classmethod
    def assemble(cls, rng=None):
        """Assemble a single document using the blueprint"""
        document = {}
        for field_name, maker in cls._instructions.items():
            with maker.target(document, rng):
                document[field_name] = maker()
        return document

    @classmethod
    def finish(cls, document, rng=None):
        """
        Take an assembled document and convert all assembled values to
        finished values. Makers see the fields finished before them.
        """
        target_document = dict(document)
        for field_name, maker in cls._instructions.items():
            if field_name not in document:
                continue
            with maker.target(target_document, rng):
                target_document[field_name] = maker(document[field_name])
        return target_document

    @classmethod
    def reset(cls):
        """
        Reset the blueprint. Blueprints are typically reset before being used to
        assemble a quota of documents. Resetting a Blueprint will in turn reset
        all the Maker instances defined as instructions for the Blueprint
        allowing internal counters and alike to be reset.
        """
        for maker in cls._instructions.values():
            maker.reset()

    # Events

    @classmethod
    def on_fake(cls, records):
        """Called before the records are handed out"""
        signal('fake').send(cls._record_cls, records=records)

    @classmethod
    def on_faked(cls, records):
        """Called after the records are handed out"""
        signal('faked').send(cls._record_cls, records=records)


# Junction noise

def _direction(document, value):
    return [int(q) for q in document['junction_id'].split('-')]


def _pair_fidelities(document, value):
    return inverse_walsh_hadamard(ProbVector(document['rates'])).values.tolist()


class JunctionBlueprint(Blueprint):
    """
    A directed junction with anisotropic 2-qubit Pauli noise. Layout
    specific blueprints override `junction_id` (typically with a `Cycle`)
    and `rates`.
    """

    _record_cls = JunctionNoise

    junction_id = Static('0-1')
    q = Static(2)
    direction = Lambda(_direction, assembler=False, finisher=True)
    neighbor = Static(None)
    rates = PauliRates(0.01)
    fidelities = Lambda(_pair_fidelities, assembler=False, finisher=True)


def _crosstalk_fidelities(document, value):
    pair = np.asarray(_pair_fidelities(document, value))
    crosstalk = make_quasilocal_3q(
        QuasiLocalParams3Q(0.0, document['eps_neigh'], document['eps_glob'])
        )
    return (np.repeat(pair, 4) * crosstalk.values).tolist()


class CrosstalkBlueprint(JunctionBlueprint):
    """
    A junction whose channel also acts on a neighbour: the anisotropic pair
    channel composed with a quasi-local channel of strengths `eps_neigh`
    and `eps_glob` (no extra pair error). `rates` holds the pair part.
    """

    _meta_fields = {'eps_neigh', 'eps_glob'}

    q = Static(3)
    neighbor = Static(2)
    fidelities = Lambda(_crosstalk_fidelities, assembler=False, finisher=True)
    eps_neigh = Static(0.002)
    eps_glob = Static(0.001)

    @staticmethod
    def pair_error(mean_error, eps_neigh, eps_glob):
        """
        Return the pair error probability that makes the total 3-qubit error
        `1 - p_0` equal `mean_error`.
        """
        a = 1 + 3 * (1 - eps_neigh - eps_glob)
        b = (1 - eps_glob) + 3 * (1 - eps_neigh - eps_glob)
        error = (15 - (64 * (1 - mean_error) - a) / b) / 16
        if error < -1e-12 or error > 1:
            raise ValueError(
                'Crosstalk strengths are inconsistent with a mean error '
                'of {0!r}'.format(mean_error)
                )
        return max(error, 0.0)
