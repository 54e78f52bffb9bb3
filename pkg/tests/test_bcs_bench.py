import math
import os

import numpy as np
import pytest
from scipy import linalg

from noisetailor.bcs_bench import *
from noisetailor.pauli_core import pauli_matrix
from noisetailor.simulator import circuit_unitary, expectation, run_circuit

from tests.fixtures import *


# Parameter tests

def test_bcs_params():
    """Should default to the 3 qubit quench"""

    params = BcsParams()
    assert params.n_qubits == 3
    assert params.energies == (1.0, 1.5, 2.0)
    assert params.coupling == 1.0
    assert params.dt == 0.2
    assert params.initial == '+++'

    # Replace
    params = params.replace(coupling=0.5)
    assert params.coupling == 0.5
    assert params.energies == (1.0, 1.5, 2.0)

    # JSON
    assert BcsParams.from_json_type(params.to_json_type()).coupling == 0.5

def test_bcs_params_validation():
    """Should refuse bad steps and initial states"""

    with pytest.raises(ValueError):
        BcsParams(dt=0)

    with pytest.raises(ValueError):
        BcsParams(energies=[])

    with pytest.raises(ValueError):
        BcsParams(initial='++')


# Exact evolution tests

def test_hamiltonian():
    """Should build a Hermitian Hamiltonian"""

    h = bcs_hamiltonian(BcsParams())
    assert h.shape == (8, 8)
    assert np.allclose(h, h.conj().T)

    # Without coupling only the onsite terms remain
    h = bcs_hamiltonian(BcsParams(energies=[1.0], coupling=0.0, initial='+'))
    assert np.allclose(h, -pauli_matrix('Z'))

def test_exact_evolution_without_coupling():
    """Should precess every spin at twice its onsite energy"""

    params = BcsParams(coupling=0.0)
    for t in (0.0, 0.3, 1.7):
        for qubit, word in enumerate(('XII', 'IXI', 'IIX')):
            expected = math.cos(2 * params.energies[qubit] * t)
            assert exact_evolution(params, t, word) \
                    == pytest.approx(expected, abs=1e-12)

def test_exact_series():
    """Should key values by (observable, t)"""

    params = BcsParams()
    values = exact_series(params, [0.0, 0.2], ['XII', 'IIZ'])

    assert set(values) == {
        ('XII', 0.0),
        ('XII', 0.2),
        ('IIZ', 0.0),
        ('IIZ', 0.2)
        }

    # Check the initial state
    assert values[('XII', 0.0)] == pytest.approx(1.0)
    assert values[('IIZ', 0.0)] == pytest.approx(0.0, abs=1e-12)

    with pytest.raises(ValueError):
        exact_series(params, [-0.1], ['XII'])


# Trotter circuit tests

def test_default_pairs():
    """Should order the pairs neighbours first"""
    assert default_pairs(3) == [(0, 1), (1, 2), (0, 2)]
    assert default_pairs(2) == [(0, 1)]

def test_xx_yy_block(rng):
    """Should implement exp(i a (XX + YY)) with 3 CNOTs"""

    # Onsite energies of g / 2 leave the pair term alone in a step
    params = BcsParams(energies=[0.5, 0.5], coupling=1.0, initial='00')
    for _ in range(5):
        a = rng.uniform(0.05, 1.0)
        circuit = trotter_circuit(params.replace(dt=2 * a), 1)
        assert circuit.cnot_count() == 3

        u = circuit_unitary(circuit)
        expected = linalg.expm(1j * a * (pauli_matrix('XX') + pauli_matrix('YY')))
        overlap = abs(np.trace(expected.conj().T @ u)) / 4
        assert overlap == pytest.approx(1.0, abs=1e-10)

def test_trotter_cnot_count():
    """Should use 9 CNOTs per step for 3 qubits"""

    circuit = trotter_circuit(BcsParams(), 15)
    assert circuit.cnot_count() == 135
    assert circuit.junction_counts() == {'0-1': 45, '1-2': 45, '0-2': 45}

    # Junctions and neighbours are assigned per pair
    circuit = trotter_circuit(
        BcsParams(),
        1,
        junctions={(0, 2): 'long'},
        neighbors={'0-1': 2}
        )
    assert circuit.junction_counts()['long'] == 3
    assert all(g.neighbor == 2 for g in circuit if g.junction == '0-1')

    with pytest.raises(ValueError):
        trotter_circuit(BcsParams(), -1)

def test_trotter_without_coupling():
    """Should match the exact evolution when the terms commute"""

    params = BcsParams(coupling=0.0)
    rho = run_circuit(trotter_circuit(params, 4))
    for observable in observable_set():
        exact = exact_evolution(params, 4 * params.dt, observable)
        assert expectation(rho, observable) == pytest.approx(exact, abs=1e-10)

def test_trotter_converges():
    """Should approach the exact evolution for small steps"""

    params = BcsParams(dt=0.005)
    rho = run_circuit(trotter_circuit(params, 20))
    for observable in observable_set():
        exact = exact_evolution(params, 0.1, observable)
        assert expectation(rho, observable) == pytest.approx(exact, abs=1e-2)


# Reference tests

def test_observable_set():
    """Should return the 7 benchmark observables"""

    words = [p.word for p in observable_set()]
    assert words == ['XII', 'IYI', 'IIZ', 'XYI', 'IYZ', 'XIZ', 'XYZ']

    with pytest.raises(ValueError):
        observable_set(2)

def test_reference_csv(tmpdir):
    """Should write one row per observable and time point"""

    table = reference_table(BcsParams(), 3)
    assert len(table) == 21
    assert ('XYZ', 0.6) in table

    path = os.path.join(str(tmpdir), 'reference.csv')
    write_reference_csv(path, table)

    with open(path) as f:
        lines = f.read().splitlines()

    assert lines[0] == 'observable,t,value'
    assert len(lines) == 22
    assert lines[1].startswith('IIZ,0.2,')
