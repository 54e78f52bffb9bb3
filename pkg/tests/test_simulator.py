import numpy as np
import pytest

from noisetailor.channels import make_depolarizing_2q
from noisetailor.circuits import Circuit, Gate
from noisetailor.pauli_core import (
    DimensionError,
    FidelityVector,
    ProbVector,
    inverse_walsh_hadamard,
    walsh_hadamard
    )
from noisetailor.simulator import *
from noisetailor.simulator import MAX_QUBITS

from tests.fixtures import *


# Helpers

def bell_circuit():
    return Circuit(2).h(0).cx(0, 1)

def anisotropic_gate():
    """Return a fixed anisotropic 2-qubit channel"""
    p = np.zeros(16)
    p[0] = 0.94
    p[[1, 4, 5, 15]] = [0.01, 0.02, 0.025, 0.005]
    return inverse_walsh_hadamard(ProbVector(p))


# DensityMatrix tests

def test_density_matrix():
    """Should hold a read-only density matrix of 2^q x 2^q"""

    rho = DensityMatrix.zero(2)
    assert rho.q == 2
    assert rho.purity == pytest.approx(1.0)
    assert rho.validate()
    assert np.allclose(rho.probabilities(), [1, 0, 0, 0])

    with pytest.raises(ValueError):
        rho.matrix[0, 0] = 0

    with pytest.raises(DimensionError):
        DensityMatrix(np.eye(3) / 3)

    with pytest.raises(DimensionError):
        DensityMatrix.zero(MAX_QUBITS + 1)

def test_from_state():
    """Should prepare product states"""

    rho = DensityMatrix.from_state('+0-y')
    assert rho.q == 3
    assert expectation(rho, 'XZI') == pytest.approx(1.0)
    assert expectation(rho, 'IIY') == pytest.approx(-1.0)
    assert expectation(rho, 'ZII') == pytest.approx(0.0, abs=1e-12)

def test_partial_trace():
    """Should reduce a Bell state to the maximally mixed state"""

    rho = run_circuit(bell_circuit())
    reduced = rho.partial_trace([1])
    assert np.allclose(reduced.matrix, np.eye(2) / 2)

    # Product states reduce to their factors
    rho = DensityMatrix.from_state('+1')
    assert expectation(rho.partial_trace([1]), 'Z') == pytest.approx(-1.0)
    assert expectation(rho.partial_trace([0]), 'X') == pytest.approx(1.0)


# Channel application tests

def test_apply_gate():
    """Should apply gates ideally"""

    rho = apply_gate(DensityMatrix.zero(1), Gate('h', [0]))
    assert expectation(rho, 'X') == pytest.approx(1.0)

    rho = apply_gate(rho, Gate('rz', [0], np.pi / 2))
    assert expectation(rho, 'Y') == pytest.approx(1.0)

    with pytest.raises(IndexError):
        apply_gate(DensityMatrix.zero(1), Gate('h', [1]))

def test_apply_pauli_channel():
    """Should damp each Pauli expectation by its fidelity"""

    gate = anisotropic_gate()
    rho = DensityMatrix.from_state('+y')
    noisy = apply_pauli_channel(
        rho,
        walsh_hadamard(gate),
        [0, 1],
        check=True
        )

    for word in ('XI', 'IY', 'XY'):
        assert expectation(noisy, word) \
                == pytest.approx(gate[word] * expectation(rho, word))

def test_apply_pauli_channel_validation():
    """Should refuse quasi-probabilities and mismatched qubits"""

    rho = DensityMatrix.zero(2)

    with pytest.raises(QuasiChannelNotAllowed):
        apply_pauli_channel(rho, ProbVector([1.1, -0.1, 0, 0]), [0])

    with pytest.raises(DimensionError):
        apply_pauli_channel(rho, ProbVector.identity(2), [0])

def test_apply_depolarizing():
    """Should damp X, Y, Z by 1 - 4 rate / 3"""

    rho = apply_depolarizing(DensityMatrix.from_state('+'), 0.03, 0)
    assert expectation(rho, 'X') == pytest.approx(1 - 0.04)

def test_apply_global_depolarizing():
    """Should mix towards the maximally mixed state"""

    rho = apply_global_depolarizing(DensityMatrix.from_state('+0'), 0.2)
    assert expectation(rho, 'XZ') == pytest.approx(0.8)
    assert np.trace(rho.matrix) == pytest.approx(1.0)

def test_expectation_dimensions():
    """Should refuse observables on the wrong number of qubits"""
    with pytest.raises(DimensionError):
        expectation(DensityMatrix.zero(2), 'Z')

def test_process_chi():
    """Should return the chi matrix of a map"""

    # Identity channel
    chi = process_chi(lambda m: m, 1)
    expected = np.zeros((4, 4))
    expected[0, 0] = 1
    assert np.allclose(chi, expected)

    # Pauli channels are diagonal with the error probabilities
    probs = ProbVector([0.9, 0.05, 0.03, 0.02])
    chi = process_chi(
        lambda m: apply_pauli_channel(DensityMatrix(m), probs, [0]).matrix,
        1
        )
    assert np.allclose(chi, np.diag(probs.values))


# Circuit execution tests

def test_circuit_unitary():
    """Should return the ideal unitary of a circuit"""

    unitary = circuit_unitary(Circuit(2).cx(0, 1))
    assert np.allclose(unitary, gate_unitary(Gate('cx', [0, 1])))

    # Control on the second qubit
    unitary = circuit_unitary(Circuit(2).cx(1, 0))
    assert np.allclose(unitary @ [0, 1, 0, 0], [0, 0, 0, 1])

def test_run_circuit_noiseless():
    """Should prepare a Bell state"""

    rho = run_circuit(bell_circuit(), check=True)
    assert expectation(rho, 'XX') == pytest.approx(1.0)
    assert expectation(rho, 'ZZ') == pytest.approx(1.0)
    assert expectation(rho, 'YY') == pytest.approx(-1.0)

def test_run_circuit_pauli_noise():
    """Should damp the Bell state correlations by the junction fidelities"""

    gate = anisotropic_gate()
    model = NoiseModel.from_channels({'0-1': gate})
    rho = run_circuit(bell_circuit(), model)

    assert expectation(rho, 'XX') == pytest.approx(gate['XX'])
    assert expectation(rho, 'ZZ') == pytest.approx(gate['ZZ'])
    assert expectation(rho, 'YY') == pytest.approx(-gate['YY'])

def test_run_circuit_trajectory(rng):
    """Should agree with channel mode on average"""

    gate = make_depolarizing_2q(0.2)
    model = NoiseModel.from_channels({'0-1': gate})

    record = run_circuit(
        bell_circuit(),
        model,
        mode='trajectory',
        rng=rng,
        shots=5000,
        basis='ZZ'
        )

    assert isinstance(record, ShotRecord)
    assert record.total == 5000
    assert record.expectation('ZZ') == pytest.approx(0.8, abs=0.04)

def test_run_circuit_shots(rng):
    """Should sample shots in a rotated basis in channel mode"""

    record = run_circuit(bell_circuit(), rng=rng, shots=1000, basis='XX')
    assert record.basis == 'XX'
    assert record.expectation('XX') == pytest.approx(1.0)

    # Y basis
    record = run_circuit(bell_circuit(), rng=rng, shots=1000, basis='YY')
    assert record.expectation('YY') == pytest.approx(-1.0)

def test_run_circuit_coverage():
    """Should refuse circuits using junctions the model doesn't describe"""

    model = NoiseModel.noiseless(['1-2'])
    with pytest.raises(ModelCoverageError):
        run_circuit(bell_circuit(), model)

    with pytest.raises(ValueError):
        run_circuit(bell_circuit(), mode='unknown')

def test_run_circuit_neighbor():
    """Should apply 3-qubit channels on the neighbour too"""

    # A channel flipping the neighbour with probability 0.1 (error IIX)
    p = np.zeros(64)
    p[0] = 0.9
    p[1] = 0.1
    f = inverse_walsh_hadamard(ProbVector(p))
    model = NoiseModel.from_channels({'0-1': f}, neighbors={'0-1': 2})

    circuit = Circuit(3).cx(0, 1, neighbor=2)
    rho = run_circuit(circuit, model)
    assert expectation(rho, 'IIZ') == pytest.approx(0.8)

    # Without a neighbour the pair marginal is used
    rho = run_circuit(Circuit(3).cx(0, 1), model)
    assert expectation(rho, 'IIZ') == pytest.approx(1.0)

def test_single_qubit_noise():
    """Should add depolarizing noise after non-dressing single-qubit gates"""

    model = NoiseModel(single_qubit_rate=0.03)

    rho = run_circuit(Circuit(1).h(0), model)
    assert expectation(rho, 'X') == pytest.approx(1 - 0.04)

    # Dressings are folded into other gates and carry no noise of their own
    circuit = Circuit(1).h(0).append(Gate('x', [0], dressing=True))
    rho = run_circuit(circuit, model)
    assert expectation(rho, 'X') == pytest.approx(1 - 0.04)

def test_global_depolarizing_noise():
    """Should depolarize the whole register at the end of the circuit"""

    model = NoiseModel.from_channels(
        {'0-1': FidelityVector.identity(2)},
        global_depolarizing=0.25
        )
    rho = run_circuit(bell_circuit(), model)
    assert expectation(rho, 'ZZ') == pytest.approx(0.75)

def test_coherent_noise():
    """Should add a seeded coherent residual after every CNOT"""

    model = NoiseModel.from_channels(
        {'0-1': FidelityVector.identity(2)},
        coherent_strength=0.1,
        coherent_seed=3
        )

    unitary = model.coherent_unitary('0-1')
    assert np.allclose(unitary @ unitary.conj().T, np.eye(4))

    # The residual is fixed by the seed
    same = NoiseModel.from_channels(
        {'0-1': FidelityVector.identity(2)},
        coherent_strength=0.1,
        coherent_seed=3
        )
    assert np.allclose(same.coherent_unitary('0-1'), unitary)

    # It leaves the state pure but moves it
    rho = run_circuit(bell_circuit(), model)
    assert rho.purity == pytest.approx(1.0)
    assert expectation(rho, 'ZZ') < 1.0

    # No strength, no residual
    assert model.pauli_only().coherent_unitary('0-1') is None


# Readout tests

def test_sample_shots(rng):
    """Should sample computational basis outcomes"""

    record = sample_shots(DensityMatrix.from_state('10'), 'ZZ', 100, rng)
    assert record.counts == {'10': 100}
    assert record.expectation('ZI') == -1.0
    assert record.expectation('IZ') == 1.0

    with pytest.raises(DimensionError):
        sample_shots(DensityMatrix.zero(2), 'Z', 10, rng)

def test_shot_record():
    """Should estimate diagonal observables and merge records"""

    record = ShotRecord('XZ', {'00': 3, '01': 1, '11': 0})
    assert record.counts == {'00': 3, '01': 1}
    assert record.total == 4
    assert record.expectation('XI') == 1.0
    assert record.expectation('IZ') == 0.5
    assert np.array_equal(record.vector(), [3, 1, 0, 0])

    with pytest.raises(ValueError):
        record.expectation('ZI')

    merged = record + ShotRecord('XZ', {'11': 4})
    assert merged.total == 8
    assert merged.expectation('XZ') == 0.75

def test_readout_and_ibu(rng):
    """Should unfold readout errors with iterative Bayesian unfolding"""

    confusion = [np.array([[0.9, 0.1], [0.2, 0.8]])]

    # Resample a record through the confusion matrix
    record = ShotRecord('Z', {'0': 20000})
    noisy = apply_readout_error(record, confusion, rng)
    assert noisy.total == 20000
    assert noisy.expectation('Z') == pytest.approx(0.8, abs=0.02)

    # Unfold the expected counts of a (0.7, 0.3) state
    measured = ShotRecord('Z', {'0': 6900, '1': 3100})
    unfolded = ibu_correct(measured, confusion, iters=200)
    assert unfolded.total == pytest.approx(10000)
    assert unfolded.counts['0'] == pytest.approx(7000, abs=50)

def test_ibu_degenerate():
    """Should refuse outcomes no state can produce"""

    record = ShotRecord('Z', {'1': 10})
    with pytest.raises(DegenerateResponse):
        ibu_correct(record, [np.array([[1.0, 0.0], [1.0, 0.0]])])

def test_calibrate_readout(rng):
    """Should estimate the confusion matrices of a model"""

    confusion = [[0.95, 0.05], [0.1, 0.9]]
    model = NoiseModel(readout=[confusion, confusion])

    estimated = calibrate_readout(model, 2, 20000, rng)
    assert len(estimated) == 2
    for matrix in estimated:
        assert np.allclose(matrix, confusion, atol=0.01)


# NoiseModel tests

def test_noise_model_validation():
    """Should refuse negative noise strengths and invalid readout"""

    with pytest.raises(ValueError):
        NoiseModel(coherent_strength=-0.1)

    with pytest.raises(ValueError):
        NoiseModel(readout=[[[0.5, 0.6], [0.0, 1.0]]])

    with pytest.raises(ValueError):
        NoiseModel(schema_version=99)

def test_noise_model_junctions():
    """Should look up the channel of each junction"""

    gate = anisotropic_gate()
    model = NoiseModel.from_channels({'0-1': gate, '1-2': gate})

    assert model.junction_ids() == ['0-1', '1-2']
    assert isinstance(model.junction('0-1'), JunctionNoise)
    assert model.junction('1-2').direction == [1, 2]
    assert np.allclose(model.fidelities('0-1').values, gate.values)

    with pytest.raises(ModelCoverageError):
        model.junction('0-2')

    assert model.covers(Circuit(3).cx(0, 2).cx(0, 1)) == ['0-2']

def test_noise_model_variants():
    """Should copy a model with channels or fields replaced"""

    model = NoiseModel.from_channels(
        {'0-1': anisotropic_gate()},
        single_qubit_rate=0.01,
        readout=[[[0.9, 0.1], [0.1, 0.9]]] * 2
        )

    depolarized = model.with_channels({'0-1': make_depolarizing_2q(0.05)})
    assert np.allclose(
        depolarized.fidelities('0-1').values,
        make_depolarizing_2q(0.05).values
        )
    assert depolarized.single_qubit_rate == 0.01

    # The original is untouched
    assert np.allclose(model.fidelities('0-1').values, anisotropic_gate().values)

    clean = model.pauli_only()
    assert clean.single_qubit_rate == 0.0
    assert clean.confusion(2) is None
    assert model.confusion(2)[0].shape == (2, 2)

def test_noise_model_store(store):
    """Should persist a model and read it back"""

    model = NoiseModel.from_channels({'0-1': anisotropic_gate()})
    model.insert()

    loaded = NoiseModel.by_id(model._id)
    assert loaded.schema_version == 1
    assert isinstance(loaded.junctions[0], JunctionNoise)
    assert np.allclose(
        loaded.fidelities('0-1').values,
        anisotropic_gate().values
        )
