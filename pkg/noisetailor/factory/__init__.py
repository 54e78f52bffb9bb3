from noisetailor.factory.blueprints import CrosstalkBlueprint, JunctionBlueprint
from noisetailor.factory.makers import Lambda, Static
from noisetailor.factory.makers.numbers import PauliRates
from noisetailor.factory.makers.selections import Cycle
from noisetailor.factory.quotas import Quota
from noisetailor import seeds
from noisetailor.simulator import NoiseModel

__all__ = [
    'Factory',
    'synthetic_model'
    ]


class Factory:
    """
    The `Factory` class is responsible for the production of synthetic
    noise documents. Production is a two stage process:

    Assembly (see `assemble`)
    :   A `Quota` of documents is assembled based on a `Blueprint`.

        At this stage the documents contain a mixture of static and dynamic
        data. Dynamic data is data that will be transformed during finishing,
        for example the relative weights of the Pauli errors are drawn here
        and only turned into probabilities once finished.

        Once assembled the documents are plain JSON types and can be used
        immediately or saved out as a template (for example to reuse the same
        error shapes at several error strengths).

    Finishing and population (see `finish` and `populate`)
    :   Dynamic data is converted to static data (this process is called
        finishing) and each document is wrapped in the blueprint's record
        class. `populate` calls the blueprint's `on_fake` and `on_faked`
        hooks around handing the records out.

    Every stage takes the `numpy.random.Generator` to draw from.
    """

    # Public methods

    def assemble(self, blueprint, quota, rng=None):
        """Assemble a quota of documents"""

        # Reset the blueprint
        blueprint.reset()

        if isinstance(quota, Quota):
            quota = quota.draw(rng)

        # Assemble the documents
        documents = []
        for i in range(0, int(quota)):
            documents.append(blueprint.assemble(rng))

        return documents

    def finish(self, blueprint, documents, rng=None):
        """Finish a list of pre-assembled documents"""

        # Reset the blueprint
        blueprint.reset()

        # Finish the documents
        finished = []
        for document in documents:
            finished.append(blueprint.finish(document, rng))

        return finished

    def populate(self, blueprint, documents, rng=None):
        """Return the documents finished and wrapped as records"""

        # Finish the documents
        documents = self.finish(blueprint, documents, rng)

        # Convert the documents to record instances
        records = []
        for document in documents:
            # Separate out any meta fields
            meta_document = {}
            for field_name in blueprint.get_meta_fields():
                meta_document[field_name] = document.pop(field_name)

            # Initialize the record
            record = blueprint.get_record_cls()(document)

            # Apply any meta fields
            for key, value in meta_document.items():
                setattr(record, key, value)

            records.append(record)

        blueprint.on_fake(records)
        blueprint.on_faked(records)

        return records


def _junction_id(junction):
    if isinstance(junction, str):
        return junction
    return '{0}-{1}'.format(*junction)


def _default_neighbor(junction_id, qubits):
    pair = {int(q) for q in junction_id.split('-')}
    spare = sorted(set(qubits) - pair)
    if not spare:
        raise ValueError(
            'Junction {0!r} has no neighbour qubit in the layout'.format(
                junction_id
                )
            )
    return spare[0]


def synthetic_model(
    junctions,
    mean_error=0.01,
    dispersion=0.0,
    seed=0,
    crosstalk=False,
    neighbors=None,
    eps_neigh=0.0,
    eps_glob=0.0,
    n_qubits=None,
    **fields
    ):
    """
    Return a synthetic `NoiseModel` for a layout.

    Each junction (a `[control, target]` pair or a `"c-t"` id) gets
    anisotropic Pauli noise with log-normal error weights (`dispersion` is
    the std of their logarithm) and a total error probability `1 - p_0` of
    exactly `mean_error`. With `crosstalk` the channels act on a neighbour
    too (from `neighbors`, else the lowest spare qubit). Any other keyword
    arguments are set on the model (`coherent_strength`, `readout`, ...).
    """
    ids = [_junction_id(j) for j in junctions]
    if not ids:
        raise ValueError('The layout has no junctions')

    qubits = range(n_qubits) if n_qubits else {
        int(q) for j in ids for q in j.split('-')
        }

    instructions = {
        'junction_id': Cycle(ids),
        'rates': PauliRates(mean_error, dispersion)
        }

    base = JunctionBlueprint
    if crosstalk:
        base = CrosstalkBlueprint
        neighbor_map = {
            j: (neighbors or {}).get(j, None) for j in ids
            }
        for j in ids:
            if neighbor_map[j] is None:
                neighbor_map[j] = _default_neighbor(j, qubits)

        instructions.update({
            'neighbor': Lambda(
                lambda document, value: neighbor_map[document['junction_id']],
                assembler=False,
                finisher=True
                ),
            'eps_neigh': Static(float(eps_neigh)),
            'eps_glob': Static(float(eps_glob)),
            'rates': PauliRates(
                lambda document: CrosstalkBlueprint.pair_error(
                    mean_error,
                    document['eps_neigh'],
                    document['eps_glob']
                    ),
                dispersion
                )
            })

    blueprint = type('LayoutBlueprint', (base,), instructions)

    factory = Factory()
    rng = seeds.split(seed, 'noise')
    documents = factory.assemble(blueprint, len(ids), rng)
    records = factory.populate(blueprint, documents, rng)

    fields.setdefault(
        'description',
        'synthetic: mean_error={0!r}, dispersion={1!r}, crosstalk={2!r}'.format(
            mean_error,
            dispersion,
            bool(crosstalk)
            )
        )
    return NoiseModel(junctions=records, **fields)
