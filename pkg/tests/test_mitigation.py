import math

import numpy as np
import pytest

from noisetailor.channels import (
    DepolarizingParams2Q,
    make_depolarizing_2q,
    pec_gamma
    )
from noisetailor.circuits import Circuit
from noisetailor.mitigation import *
from noisetailor.pauli_core import FidelityVector
from noisetailor.simulator import (
    DensityMatrix,
    NoiseModel,
    expectation,
    run_circuit
    )

from tests.fixtures import *


# Helpers

def example_circuit():
    return Circuit(2) \
        .h(0) \
        .cx(0, 1) \
        .rz(0.4, 1) \
        .cx(0, 1) \
        .rx(0.3, 0) \
        .cx(0, 1)


# NEC tests

def test_nec_circuit():
    """Should keep the CNOTs only"""

    nec = nec_circuit(example_circuit())
    assert len(nec) == 3
    assert all(g.is_cnot for g in nec)

def test_nec_exact_for_global_depolarizing():
    """Should mitigate global depolarizing noise exactly"""

    circuit = example_circuit()
    model = NoiseModel.noiseless(['0-1']).with_channels(
        {},
        global_depolarizing=0.1
        )

    f_nec = nec_fidelity(nec_circuit(circuit), model, 'ZZ')
    assert f_nec == pytest.approx(0.9, abs=1e-12)

    for observable in ('XI', 'ZZ', 'YX'):
        ideal = expectation(run_circuit(circuit), observable)
        raw = expectation(run_circuit(circuit, model), observable)
        assert mitigate(raw, f_nec) == pytest.approx(ideal, abs=1e-10)

def test_mitigate_validation():
    """Should refuse non-positive fidelities"""

    assert mitigate(0.45, 0.9) == pytest.approx(0.5)

    with pytest.raises(InvalidFidelity):
        mitigate(0.45, 0.0)

    with pytest.raises(InvalidFidelity):
        mitigate(0.45, -0.1)

def test_select_nec_observable():
    """Should fall back to the best Z-string when the ideal value vanishes"""

    nec = nec_circuit(example_circuit())

    # ZZ survives the CNOTs on |00>
    assert select_nec_observable(nec, 'ZZ').word == 'ZZ'

    # XI does not, ZI overlaps its support and has the lowest index
    assert select_nec_observable(nec, 'XI').word == 'ZI'

    with pytest.raises(UndefinedFidelity):
        nec_fidelity(nec, NoiseModel.noiseless(['0-1']), 'XI')

def test_select_nec_observable_prepared():
    """Should evaluate the NEC on the prepared product state"""

    nec = nec_circuit(example_circuit())

    # |++> is invariant under CNOT so XI keeps its ideal value
    assert select_nec_observable(nec, 'XI', initial='++').word == 'XI'

    # ZI vanishes on |++>, XI overlaps its support and has the lowest index
    assert select_nec_observable(nec, 'ZI', initial='++').word == 'XI'

    # Check a density matrix is accepted as the initial state
    initial = DensityMatrix.from_state('++')
    assert select_nec_observable(nec, 'XX', initial=initial).word == 'XX'

    model = NoiseModel.noiseless(['0-1']).with_channels(
        {'0-1': make_depolarizing_2q(0.04)}
        )
    f_nec = nec_fidelity(nec, model, 'XI', initial='++')
    assert f_nec == pytest.approx(0.96 ** 3)

    plan = build_plan(
        {'0-1': make_depolarizing_2q(0.04)},
        {'0-1': None},
        nec,
        'XI',
        initial='++'
        )
    assert plan.observable == 'XI'
    assert plan.f_nec == pytest.approx(f_nec)

def test_nec_path():
    """Should walk the observable back through the CNOTs"""

    nec = Circuit(2).cx(0, 1).cx(0, 1)
    path = nec_path(nec, 'IZ')

    # IZ comes from ZZ before the last CNOT, which comes from IZ
    assert [p[0] for p in path] == ['0-1', '0-1']
    assert [p[1] for p in path] == [3, 15]
    assert all(p[2] == 2 for p in path)


# Plan tests

def test_identity_noise():
    """Should need no overhead without noise"""

    nec = nec_circuit(example_circuit())
    plan = build_plan(
        {'0-1': FidelityVector.identity(2)},
        {'0-1': DepolarizingParams2Q(0.0)},
        nec,
        'ZZ'
        )

    assert plan.sigma == pytest.approx(1.0)
    assert plan.gammas == {'0-1': pytest.approx(1.0)}
    assert plan.f_nec == pytest.approx(1.0)
    assert plan.n_cnot == {'0-1': 3}

def test_build_plan():
    """Should combine the gammas and NEC fidelity into sigma"""

    gate = make_depolarizing_2q(0.04)
    nec = nec_circuit(example_circuit())

    # Full cancellation (PEC) leaves F_NEC = 1
    plan = build_plan({'0-1': gate}, {'0-1': DepolarizingParams2Q(0.0)}, nec, 'ZZ')
    assert plan.f_nec == pytest.approx(1.0)
    assert plan.sigma == pytest.approx(pec_gamma(0.04) ** 3)

    # Tailoring to the gate's own noise costs nothing
    plan = build_plan({'0-1': gate}, {'0-1': DepolarizingParams2Q(0.04)}, nec, 'ZZ')
    assert plan.gammas['0-1'] == pytest.approx(1.0)
    assert plan.f_nec == pytest.approx(0.96 ** 3)
    assert plan.sigma == pytest.approx(0.96 ** -3)

    # Raw junctions keep the gate noise and a unit gamma
    plan = build_plan({'0-1': gate}, {'0-1': None}, nec, 'ZZ')
    assert plan.targets['0-1']['kind'] == 'raw'
    assert plan.gammas['0-1'] == pytest.approx(1.0)
    assert plan.f_nec == pytest.approx(0.96 ** 3)

def test_target_params():
    """Should return the targets a plan was built with"""

    plan = build_plan(
        {'0-1': make_depolarizing_2q(0.04)},
        {'0-1': DepolarizingParams2Q(0.02)},
        nec_circuit(example_circuit()),
        'ZZ'
        )

    params = plan.target_params()
    assert params['0-1'].epsilon == pytest.approx(0.02)
    assert np.allclose(
        plan.target_channels()['0-1'].values,
        make_depolarizing_2q(0.02).values
        )

    # Check the quasi-probability plans are stored per junction
    quasi = plan.quasi_plans()['0-1']
    assert quasi.gamma == pytest.approx(plan.gammas['0-1'])

    # Rebuilding from the parameters gives the same plan
    rebuilt = build_plan(
        {'0-1': make_depolarizing_2q(0.04)},
        params,
        nec_circuit(example_circuit()),
        'ZZ'
        )
    assert rebuilt.log_sigma == pytest.approx(plan.log_sigma)

def test_matched_targets():
    """Should match the average fidelity of every junction"""

    targets = matched_targets({'0-1': make_depolarizing_2q(0.03)}, ['0-1'])
    assert targets['0-1'].epsilon == pytest.approx(0.03)


# Optimization tests

def test_optimize_target():
    """Should do at least as well as full cancellation and matching"""

    gate = make_depolarizing_2q(0.05)
    nec = nec_circuit(example_circuit())
    n_cnot = nec.junction_counts()

    plan = optimize_target({'0-1': gate}, n_cnot, nec, 'ZZ', grid_size=32)

    pec = build_plan({'0-1': gate}, {'0-1': DepolarizingParams2Q(0.0)}, nec, 'ZZ')
    matched = build_plan(
        {'0-1': gate},
        matched_targets({'0-1': gate}, ['0-1']),
        nec,
        'ZZ'
        )

    assert plan.log_sigma <= pec.log_sigma + 1e-6
    assert plan.log_sigma <= matched.log_sigma + 1e-6
    assert math.isfinite(plan.sigma)
    assert plan.targets['0-1']['kind'] == 'depolarizing'

    # The chosen target is never noisier than epsilon = 1
    assert 0 <= plan.target_params()['0-1'].epsilon <= 1

def test_optimize_target_jointly():
    """Should weigh in every junction the observables' NEC paths traverse"""

    gate_ptms = {
        '0-1': make_depolarizing_2q(0.02),
        '1-2': make_depolarizing_2q(0.08)
        }
    nec = Circuit(3).cx(0, 1).cx(1, 2)
    n_cnot = nec.junction_counts()

    # ZII never reaches junction 1-2, IIZ does
    assert nec_path(nec, 'ZII')[0][1] == 0
    assert nec_path(nec, 'IIZ')[0][1] != 0

    single = optimize_target(gate_ptms, n_cnot, nec, 'ZII', grid_size=32)
    joint = optimize_target(
        gate_ptms,
        n_cnot,
        nec,
        ['ZII', 'IIZ'],
        grid_size=32
        )

    # Check the plan returned is the first observable's
    assert joint.observable == 'ZII'

    def total(plan):
        return sum(
            build_plan(gate_ptms, plan.target_params(), nec, o).log_sigma
            for o in ('ZII', 'IIZ')
            )

    assert total(joint) <= total(single) + 1e-6
