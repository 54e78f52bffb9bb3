import os

import numpy as np
import pytest

from noisetailor.channels import QuasiLocalParams3Q, make_quasilocal_3q
from noisetailor.pauli_core import ProbVector, inverse_walsh_hadamard
from noisetailor.simulator import NoiseModel
from noisetailor.tomography import *

from tests.fixtures import *


# Helpers

def random_gate(rng, error=0.03):
    p = np.concatenate([[1 - error], rng.dirichlet(np.ones(15)) * error])
    return inverse_walsh_hadamard(ProbVector(p))


# Circuit generation tests

def test_depth_schedule():
    """Should double the depth for every step"""
    assert depth_schedule(4) == [1, 2, 4, 8]

def test_pnt_circuit_cost():
    """Should count 9 families per depth, direction, junction and RC draw"""
    assert pnt_circuit_cost(4, 3, 100) == 21600

def test_generate_pnt_circuits():
    """Should generate 9 families per depth"""

    specs = generate_pnt_circuits('0-1', [1, 2, 4])
    assert len(specs) == 27
    assert {s.family for s in specs} == {
        'INV', 'XY', 'YZ', 'YY', 'XZ', 'XX/XI', 'YX/YI', 'ZY/IY', 'ZZ/IZ'
        }
    assert all(s.junction_id == '0-1' for s in specs)

    # Both directions
    specs = generate_pnt_circuits((1, 2), [1, 2], both_directions=True)
    assert len(specs) == 36
    assert {s.junction_id for s in specs} == {'1-2', '2-1'}

    with pytest.raises(ValueError):
        generate_pnt_circuits('0-1', [0, 1])

def test_pnt_circuit_spec():
    """Should build circuits of 2n (or 2n + 1) CNOTs"""

    spec = PntCircuitSpec('0-1', (0, 1), 'INV', 4)
    assert spec.cnots == 8
    assert spec.parity == 'even'
    assert spec.circuit.cnot_count() == 8
    assert spec.n_qubits == 2
    assert [x.observable for x in spec.quantities] == ['ZI', 'IX', 'ZX']

    spec = PntCircuitSpec('0-1', (0, 1), 'XX/XI', 4)
    assert spec.cnots == 9
    assert spec.parity == 'odd'
    assert spec.basis == 'XX'

    # The joint and marginal quantities share their SPAM amplitude
    groups = [x.spam_group for x in spec.quantities]
    assert groups[0] == groups[1] is not None
    assert groups[2] is None

    # With crosstalk the neighbour is prepared in |0> and measured too
    spec = PntCircuitSpec('0-1', (0, 1), 'INV', 1, crosstalk=True)
    assert spec.n_qubits == 3
    assert spec.preparation.endswith('0')
    assert 'IIZ' in [x.observable for x in spec.quantities]

    with pytest.raises(ValueError):
        PntCircuitSpec('0-1', (0, 1), 'INV', 0)


# Fitting tests

def test_fit_recovers_injected_channel(rng):
    """Should recover every fidelity of an injected Pauli channel"""

    gate = random_gate(rng)
    model = NoiseModel.from_channels({'0-1': gate})
    specs = generate_pnt_circuits('0-1', [1, 2, 4])
    table = measure_pnt(specs, model, analytic=True)

    result = fit_fidelities(table)

    assert result.junction_id == '0-1'
    assert result.direction == [0, 1]
    assert result.q == 2
    assert np.allclose(result.fidelities, gate.values, atol=1e-6)
    assert result.anomalies == []
    assert result.invalid == []

    # Noiseless preparation gives unit SPAM amplitudes
    assert all(a == pytest.approx(1.0, abs=1e-6) for a in result.spam.values())

def test_fit_recovers_crosstalk(rng):
    """Should recover the identity and Z neighbour blocks with crosstalk"""

    f = make_quasilocal_3q(QuasiLocalParams3Q(0.02, 0.01, 0.005))
    model = NoiseModel.from_channels({'0-1': f}, neighbors={'0-1': 2})
    specs = generate_pnt_circuits('0-1', [1, 2, 4], with_crosstalk=True)
    table = measure_pnt(specs, model, analytic=True)

    result = fit_fidelities(table)
    blocks = f.blocks()

    assert result.q == 3
    assert np.allclose(result.crosstalk['F_I'], blocks[:, 0], atol=1e-6)
    assert np.allclose(result.crosstalk['F_D'], blocks[:, 3], atol=1e-6)
    assert np.allclose(result.fidelity_vector().values, f.values, atol=1e-6)

def test_fit_needs_two_depths(rng):
    """Should refuse families measured at a single depth"""

    model = NoiseModel.from_channels({'0-1': random_gate(rng)})
    table = measure_pnt(generate_pnt_circuits('0-1', [2]), model, analytic=True)

    with pytest.raises(UnfittableFamily):
        fit_fidelities(table)

def test_fit_names_a_junction(rng):
    """Should ask for a junction when the table holds several"""

    model = NoiseModel.from_channels({
        '0-1': random_gate(rng),
        '1-2': random_gate(rng)
        })
    specs = generate_pnt_circuits('0-1', [1, 2]) \
            + generate_pnt_circuits('1-2', [1, 2])
    table = measure_pnt(specs, model, analytic=True)

    with pytest.raises(ValueError):
        fit_fidelities(table)

    # Fit them all
    results = fit_all(table)
    assert sorted(results) == ['0-1', '1-2']
    assert np.allclose(
        results['1-2'].fidelities,
        model.fidelities('1-2').values,
        atol=1e-6
        )

def test_fit_sampled_signals():
    """Should fit signals sampled from RC dressings and bootstrap them"""

    model = NoiseModel.noiseless(['0-1'])
    specs = generate_pnt_circuits('0-1', [1, 2])
    table = measure_pnt(specs, model, n_rc=4, shots=50, seed=1)

    # Per-RC samples are kept for the bootstrap
    assert len(table.samples) == len(table)
    assert all(row['signal'] == pytest.approx(1.0) for row in table)

    result = fit_fidelities(table, n_boot=20)
    assert np.allclose(result.fidelities, 1.0)
    assert result.n_boot == 20


# Signal table tests

def test_signal_table_csv(rng, tmpdir):
    """Should write signals to CSV and fit them after loading"""

    gate = random_gate(rng)
    model = NoiseModel.from_channels({'0-1': gate})
    table = measure_pnt(
        generate_pnt_circuits('0-1', [1, 2, 4]),
        model,
        analytic=True
        )

    path = os.path.join(str(tmpdir), 'signals.csv')
    table.to_csv(path)
    loaded = SignalTable.from_csv(path)

    assert len(loaded) == len(table)
    assert loaded.junction_ids() == ['0-1']
    assert loaded.rows[0]['depth'] == table.rows[0]['depth']

    result = fit_fidelities(loaded)
    assert np.allclose(result.fidelities, gate.values, atol=1e-6)


# Result tests

def test_to_noise_model(rng, store):
    """Should build a noise model from fitted results"""

    gate = random_gate(rng)
    table = measure_pnt(
        generate_pnt_circuits('0-1', [1, 2, 4]),
        NoiseModel.from_channels({'0-1': gate}),
        analytic=True
        )
    result = fit_fidelities(table)
    result.insert()

    model = TomographyResult.to_noise_model([TomographyResult.one()])
    assert model.junction_ids() == ['0-1']
    assert np.allclose(model.fidelities('0-1').values, gate.values, atol=1e-6)

def test_sanitize_for_emulation():
    """Should clamp the negative error probabilities of anomalous fits"""

    fidelities = [1.0] * 16
    fidelities[1] = 1.002
    result = TomographyResult(
        junction_id='0-1',
        direction=[0, 1],
        q=2,
        fidelities=fidelities
        )

    probs = sanitize_for_emulation(result)
    assert not probs.quasi
    assert np.all(probs.values >= 0)
    assert probs.values.sum() == pytest.approx(1.0)
