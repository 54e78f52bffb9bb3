import numpy as np
import pytest

from noisetailor.factory.makers import numbers

from tests.fixtures import *


def test_pauli_rates(rng):
    """
    `PauliRates` makers should draw 15 error weights and rescale them to the
    mean error.
    """

    maker = numbers.PauliRates(0.02, dispersion=1.0)

    with maker.target({}, rng):
        assembled = maker._assemble()
        finished = maker._finish(assembled)

    # Check the assembled weights
    assert len(assembled) == 15
    assert all(w > 0 for w in assembled)

    # Check the finished probabilities
    assert len(finished) == 16
    assert finished[0] == pytest.approx(0.98)
    assert sum(finished) == pytest.approx(1.0)

    # Check the relative weights are kept
    assert np.allclose(
        np.array(finished[1:]) / finished[1],
        np.array(assembled) / assembled[0]
        )

def test_pauli_rates_depolarizing():
    """Should spread the error evenly without dispersion"""

    maker = numbers.PauliRates(0.03)
    finished = maker._finish(maker._assemble())
    assert np.allclose(finished[1:], 0.002)

def test_pauli_rates_of_document():
    """Should read a mean error given as a function of the document"""

    maker = numbers.PauliRates(lambda doc: doc['error'])
    with maker.target({'error': 0.15}):
        finished = maker._finish([1.0] * 15)
    assert finished[0] == pytest.approx(0.85)
    assert finished[1] == pytest.approx(0.01)

def test_pauli_rates_validation():
    """Should refuse negative dispersion and errors outside [0, 1]"""

    with pytest.raises(ValueError):
        numbers.PauliRates(0.01, dispersion=-1.0)._assemble()

    with pytest.raises(ValueError):
        numbers.PauliRates(1.5)._finish([1.0] * 15)

    with pytest.raises(ValueError):
        numbers.PauliRates(-0.1)._finish([1.0] * 15)

def test_pauli_rates_log_normal_weights():
    """Should draw the error weights from a median-1 log-normal quota"""

    maker = numbers.PauliRates(0.01, dispersion=2.0)
    with maker.target({}, np.random.default_rng(3)):
        assembled = maker._assemble()

    expected = np.random.default_rng(3).lognormal(0.0, 2.0, size=15)
    assert np.allclose(assembled, expected)
