import math
import os

import numpy as np
import pytest

from noisetailor.analysis import *

from tests.fixtures import *


# Helpers

def example_references():
    return {
        ('XII', 0.2): 0.8,
        ('XII', 0.4): -0.5,
        ('IIZ', 0.2): 0.0,
        ('IIZ', 0.4): 0.25
        }


# AWAE tests

def test_zeta():
    """Should weight every error by the magnitude of its reference"""

    assert zeta([1, 2], [1, -3]) == pytest.approx(3.75)
    assert zeta([0.5, -0.5], [0.5, -0.5]) == 0.0

    with pytest.raises(UndefinedAWAE):
        zeta([1, 2], [0, 0])

def test_select_times():
    """Should select all, the last two or explicit time points"""

    times = [0.6, 0.2, 0.4, 0.2]
    assert select_times(times) == [0.2, 0.4, 0.6]
    assert select_times(times, 'last-two') == [0.4, 0.6]
    assert select_times(times, [0.2, 0.8]) == [0.2]

def test_awae():
    """Should report the AWAE of estimates against references"""

    references = example_references()
    estimates = {k: v + 0.1 for k, v in references.items()}

    report = awae(estimates, references, label='T1')
    assert report.label == 'T1'
    assert report.zeta == pytest.approx(0.1)
    assert report.normalization == pytest.approx(1.55)
    assert len(report.entries) == 4
    assert report.keys() == sorted(references)

    # An explicit subset of time points
    report = awae(estimates, references, subset=[0.4])
    assert report.keys() == [('IIZ', 0.4), ('XII', 0.4)]
    assert report.subset == [0.4]

    # Estimates must cover the same entries
    del estimates[('XII', 0.2)]
    with pytest.raises(KeyError):
        awae(estimates, references)

def test_awae_csv(tmpdir):
    """Should write the entries of a report"""

    references = example_references()
    stds = {k: 0.01 for k in references}
    report = awae(references, references, stds=stds)

    path = os.path.join(str(tmpdir), 'entries.csv')
    report.entries_to_csv(path)

    with open(path) as f:
        lines = f.read().splitlines()

    assert lines[0] == 'observable,t,perfect,estimate,std'
    assert lines[1] == 'IIZ,0.2,0.0,0.0,0.01'
    assert len(lines) == 5


# Batch curve tests

def test_batch_grid():
    """Should grow by one batch to 10, then by 10 batches to 50"""

    assert batch_grid(5000) == [
        100, 200, 300, 400, 500, 600, 700, 800, 900, 1000,
        2000, 3000, 4000, 5000
        ]
    assert batch_grid(1250) == [
        100, 200, 300, 400, 500, 600, 700, 800, 900, 1000, 1250
        ]
    assert batch_grid(300, batch_size=50) == [50, 100, 150, 200, 250, 300]

def test_bootstrap_curve(rng):
    """Should average zeta over consecutive batches"""

    references = np.array([0.8, -0.5, 0.25])
    outputs = references + rng.normal(scale=0.5, size=(1000, 3))

    curve = bootstrap_curve(outputs, references)

    assert [p['N'] for p in curve] == batch_grid(1000)
    assert curve[0]['batches'] == 10
    assert curve[4]['batches'] == 2
    assert curve[-1]['batches'] == 1
    assert math.isnan(curve[-1]['std'])

    # Larger batches give smaller errors
    assert curve[0]['zeta'] > curve[-1]['zeta']

def test_bootstrap_curve_validation(rng):
    """Should refuse fewer than 2 batches and misaligned outputs"""

    references = np.array([0.8, -0.5])
    with pytest.raises(InsufficientData):
        bootstrap_curve(np.zeros((150, 2)), references)

    with pytest.raises(ValueError):
        bootstrap_curve(np.zeros((300, 3)), references)


# Extrapolation tests

def test_extrapolate():
    """Should recover a and b of an exact a / sqrt(N) + b curve"""

    curve = [
        {'N': n, 'batches': 1, 'zeta': 0.5 / math.sqrt(n) + 0.01, 'std': 0.001}
        for n in batch_grid(5000)
        ]
    a, b, cov = extrapolate(curve)

    assert a == pytest.approx(0.5)
    assert b == pytest.approx(0.01)
    assert cov.shape == (2, 2)

def test_extrapolate_bounds_the_intercept():
    """Should hold the intercept at 0 rather than go negative"""

    curve = [
        {'N': n, 'batches': 1, 'zeta': 0.5 / math.sqrt(n) - 0.01, 'std': 0.001}
        for n in batch_grid(1000)
        ]
    a, b, _ = extrapolate(curve)

    assert b == 0.0
    assert a > 0

def test_extrapolate_partial_stds():
    """Should keep weighting when some points have no std"""

    def point(n, offset, std):
        return {
            'N': n,
            'batches': 1,
            'zeta': 0.5 / math.sqrt(n) + 0.01 + offset,
            'std': std
            }

    # A noisy point with a large std and a single-batch point without one
    curve = [
        point(100, 0.0, 0.001),
        point(200, 0.05, 1.0),
        point(400, 0.0, 0.001),
        point(800, 0.0, float('nan'))
        ]
    a, b, cov = extrapolate(curve)

    # Check the noisy point is down-weighted
    assert a == pytest.approx(0.5, rel=1e-3)
    assert b == pytest.approx(0.01, abs=1e-4)
    assert np.all(np.isfinite(cov))

def test_extrapolate_needs_points():
    """Should refuse fewer than 3 points"""

    curve = [
        {'N': n, 'batches': 1, 'zeta': 0.1, 'std': 0.01}
        for n in (100, 200, 2000)
        ]
    with pytest.raises(InsufficientData):
        extrapolate(curve)


# Diagnostics tests

def test_diagnostics():
    """Should split the error into sampling, coherent and unknown parts"""

    references = example_references()

    def report(shift):
        return awae({k: v + shift for k, v in references.items()}, references)

    emu_inf = report(0.01)
    emu_finite = report(0.03)
    full_run = report(0.07)
    full_run.fit = {'a': 0.5, 'b': 0.05, 'cov': [[1e-4, 0.0], [0.0, 1e-6]]}

    diag = diagnostics(emu_inf, emu_finite, full_run, 2.0, 0.9, 0.5)

    assert diag.delta_nt == pytest.approx(0.02)
    assert diag.delta_c_unk == pytest.approx(0.04)
    assert diag.delta_unk == pytest.approx(0.04)
    assert diag.delta_unk_std == pytest.approx(1e-3)
    assert diag.no_nt_projection == pytest.approx(0.04 * 0.9 / 2.0 / 0.5)

def test_diagnostics_inconsistency():
    """Should warn when a term is negative beyond its std"""

    references = example_references()
    emu_inf = awae({k: v + 0.05 for k, v in references.items()}, references)
    emu_finite = awae({k: v + 0.01 for k, v in references.items()}, references)

    with pytest.warns(InconsistencyWarning):
        diagnostics(emu_inf, emu_finite, emu_finite, 1.0, 1.0, 1.0)

    # Within its std the term is accepted
    diag = diagnostics(
        emu_inf,
        emu_finite,
        emu_finite,
        1.0,
        1.0,
        1.0,
        stds={'delta_nt': 0.1}
        )
    assert diag.delta_unk is None

    with pytest.raises(ValueError):
        diagnostics(
            emu_inf,
            awae({('XII', 0.2): 0.8}, {('XII', 0.2): 0.8}),
            emu_finite,
            1.0,
            1.0,
            1.0
            )
