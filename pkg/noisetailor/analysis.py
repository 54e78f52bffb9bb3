"""
Accuracy analysis: the average weighted absolute error (AWAE, zeta), its
behaviour under finite sampling (batch curves and the `a / sqrt(N) + b`
extrapolation) and the decomposition of the error into sampling, coherent
and unknown contributions.
"""

import csv
import math
import warnings

import numpy as np

from noisetailor.pagination import Paginator
from noisetailor.records import Record

__all__ = [
    # Exceptions
    'FitFailure',
    'InsufficientData',
    'UndefinedAWAE',

    # Warnings
    'FitWarning',
    'InconsistencyWarning',

    # Types
    'AWAEReport',
    'DiagnosticsReport',

    # Operations
    'awae',
    'batch_grid',
    'bootstrap_curve',
    'diagnostics',
    'extrapolate',
    'select_times',
    'zeta'
    ]


class UndefinedAWAE(ValueError):
    """
    Raised when every reference value is zero.
    """


class InsufficientData(ValueError):
    """
    Raised when there are too few outputs or points for an analysis.
    """


class FitFailure(ValueError):
    """
    Raised when an extrapolation design is singular.
    """


class FitWarning(UserWarning):
    """
    Warning issued when a numerical fit is unreliable.
    """


class InconsistencyWarning(UserWarning):
    """
    Warning issued when an error decomposition term is negative beyond its
    standard deviation.
    """


def zeta(estimates, references):
    """
    Return `sum |ref| |est - ref| / sum |ref|` for aligned arrays.
    """
    estimates = np.asarray(estimates, dtype=float)
    references = np.asarray(references, dtype=float)
    weights = np.abs(references)
    normalization = weights.sum()
    if normalization == 0:
        raise UndefinedAWAE('All reference values are zero')
    return float(weights @ np.abs(estimates - references) / normalization)


def select_times(times, subset='all'):
    """
    Return the time points in a subset: `all`, `last-two` or an explicit
    list of times.
    """
    times = sorted(set(times))
    if subset == 'all':
        return times
    if subset == 'last-two':
        return times[-2:]
    return sorted(set(subset) & set(times))


class AWAEReport(Record):
    """
    Expectations against references for one trial with their AWAE, and
    (after a bootstrap) the batch curve and extrapolation.
    """

    _fields = {
        'label',
        'subset',
        'entries',
        'zeta',
        'normalization',
        'batch_curve',
        'fit'
        }

    def keys(self):
        return [(e['observable'], e['t']) for e in self.entries]

    def entries_to_csv(self, path):
        with open(path, 'w', newline='', encoding='utf8') as f:
            writer = csv.writer(f, lineterminator='\n')
            writer.writerow(['observable', 't', 'perfect', 'estimate', 'std'])
            for e in self.entries:
                writer.writerow([
                    e['observable'],
                    repr(e['t']),
                    repr(e['perfect']),
                    repr(e['estimate']),
                    repr(e['std'])
                    ])

    def curve_to_csv(self, path):
        """Write the batch curve with the fitted `a / sqrt(N) + b` values"""
        fit = self.fit or {}
        with open(path, 'w', newline='', encoding='utf8') as f:
            writer = csv.writer(f, lineterminator='\n')
            writer.writerow(['N', 'batches', 'zeta', 'std', 'fit'])
            for point in self.batch_curve or []:
                fitted = ''
                if fit:
                    fitted = repr(fit['a'] / math.sqrt(point['N']) + fit['b'])
                writer.writerow([
                    point['N'],
                    point['batches'],
                    repr(point['zeta']),
                    repr(point['std']),
                    fitted
                    ])


def awae(estimates, references, subset='all', stds=None, label=None):
    """
    Return the `AWAEReport` of estimates against references. Both are
    mappings of `(observable, t)` to values and must share their keys.
    """
    if set(estimates) != set(references):
        raise KeyError('Estimates and references cover different entries')

    times = select_times({t for _, t in references}, subset)
    keys = sorted(k for k in references if k[1] in times)

    perfect = np.array([references[k] for k in keys])
    estimate = np.array([estimates[k] for k in keys])

    entries = []
    for k, p, e in zip(keys, perfect, estimate):
        entries.append({
            'observable': k[0],
            't': k[1],
            'perfect': float(p),
            'estimate': float(e),
            'std': float((stds or {}).get(k, 0.0))
            })

    return AWAEReport(
        label=label,
        subset=subset if isinstance(subset, str) else list(subset),
        entries=entries,
        zeta=zeta(estimate, perfect),
        normalization=float(np.abs(perfect).sum())
        )


def batch_grid(total, batch_size=100):
    """
    Return the batch sizes of a curve: 1..10 batches, then 20..50 batches in
    steps of 10, then all outputs.
    """
    grid = [batch_size * i for i in range(1, 11)]
    grid += [batch_size * 10 * i for i in range(2, 6)]
    grid = [n for n in grid if n <= total]
    if total not in grid:
        grid.append(total)
    return grid


def bootstrap_curve(outputs, references, batch_size=100, grid=None):
    """
    Return the batch curve of a sampled estimator.

    `outputs` has one row per sampled circuit and one column per reference
    entry; the mean of a batch of rows is that batch's estimate. For each
    batch size `N` the rows are split into consecutive batches (a trailing
    partial batch is dropped), zeta is computed per batch and averaged. The
    std is the spread of the batch values over `sqrt(batches)`.
    """
    outputs = np.asarray(outputs, dtype=float)
    references = np.asarray(references, dtype=float)
    if outputs.ndim != 2 or outputs.shape[1] != len(references):
        raise ValueError('Outputs need one column per reference entry')

    total = len(outputs)
    if total < 2 * batch_size:
        raise InsufficientData(
            'Need at least 2 batches of {0} outputs, got {1}'.format(
                batch_size,
                total
                )
            )

    curve = []
    for n in grid or batch_grid(total, batch_size):
        paginator = Paginator(outputs, per_page=n, complete_only=True)
        values = np.array([
            zeta(page.items.mean(axis=0), references) for page in paginator
            ])
        k = len(values)
        std = float(values.std(ddof=1) / math.sqrt(k)) if k > 1 else float('nan')
        curve.append({
            'N': int(n),
            'batches': k,
            'zeta': float(values.mean()),
            'std': std
            })
    return curve


def extrapolate(curve, fit_max_N=1000):
    """
    Fit `zeta(N) = a / sqrt(N) + b` to the curve points with `N <= fit_max_N`
    by weighted least squares (weights `1 / std^2`). `b` is bounded below by
    0. Returns `(a, b, cov)`.
    """
    points = [
        p for p in curve
        if p['N'] <= fit_max_N and not math.isnan(p['zeta'])
        ]
    if len(points) < 3:
        raise InsufficientData('Need at least 3 points to extrapolate')

    n = np.array([p['N'] for p in points], dtype=float)
    y = np.array([p['zeta'] for p in points])
    std = np.array([p['std'] for p in points], dtype=float)

    # Points without a positive std take the smallest known weight, unit
    # weights are used when no point has one
    known = np.isfinite(std) & (std > 0)
    weighted = bool(np.any(known))
    weights = np.ones_like(y)
    if weighted:
        weights[known] = 1 / std[known] ** 2
        weights[~known] = weights[known].min()

    design = np.column_stack([1 / np.sqrt(n), np.ones_like(n)])
    if np.linalg.matrix_rank(design) < 2:
        raise FitFailure('Singular extrapolation design')

    w = np.sqrt(weights)
    (a, b), *_ = np.linalg.lstsq(design * w[:, None], y * w, rcond=None)

    if b < 0:
        # Refit with the intercept held at its bound
        x = design[:, 0]
        a = float((weights * x) @ y / ((weights * x) @ x))
        b = 0.0

    normal = (design * weights[:, None]).T @ design
    cov = np.linalg.inv(normal)
    if not weighted:
        dof = max(len(y) - 2, 1)
        residual = y - design @ np.array([a, b])
        cov = cov * float(residual @ residual) / dof

    return float(a), float(b), cov


class DiagnosticsReport(Record):
    """
    The decomposition of a run's error into finite-sampling (NT), coherent
    and unknown contributions. "Unknown" here means whatever extra noise was
    injected into the emulation.
    """

    _fields = {
        'label',
        'zeta_inf',
        'zeta_finite',
        'zeta_full',
        'delta_nt',
        'delta_c_unk',
        'delta_unk',
        'delta_unk_std',
        'no_nt_projection',
        'stds',
        'notes'
        }


def diagnostics(
    emu_inf,
    emu_finite,
    full_run,
    gamma_total,
    f_nec_target,
    f_nec_raw,
    stds=None,
    label=None
    ):
    """
    Decompose the AWAE of a run:

    - `delta_nt` = zeta(finite sampling) - zeta(infinite sampling)
    - `delta_c_unk` = zeta(full run) - zeta(finite sampling)
    - `delta_unk` = extrapolated intercept of the full run - zeta(infinite)
    - `no_nt_projection` = delta_c_unk * F_NEC(target) / gamma^N / F_NEC(raw)

    `emu_inf`, `emu_finite` and `full_run` are `AWAEReport`s on the same
    entries; the intercept is taken from `full_run.fit` when present.
    """
    stds = dict(stds or {})
    if emu_inf.keys() != emu_finite.keys() or emu_inf.keys() != full_run.keys():
        raise ValueError('Reports must cover the same entries')

    report = DiagnosticsReport(
        label=label,
        zeta_inf=emu_inf.zeta,
        zeta_finite=emu_finite.zeta,
        zeta_full=full_run.zeta,
        delta_nt=emu_finite.zeta - emu_inf.zeta,
        delta_c_unk=full_run.zeta - emu_finite.zeta,
        stds=stds,
        notes='Unknown noise is the noise injected into the emulation'
        )

    report.no_nt_projection = report.delta_c_unk * f_nec_target \
            / gamma_total / f_nec_raw

    fit = full_run.fit
    if fit:
        report.delta_unk = fit['b'] - emu_inf.zeta
        report.delta_unk_std = math.sqrt(max(fit['cov'][1][1], 0))
        stds.setdefault('delta_unk', report.delta_unk_std)

    for term in ('delta_nt', 'delta_c_unk', 'delta_unk'):
        value = report.get(term)
        if value is not None and value < -stds.get(term, 0.0):
            warnings.warn(
                '{0} = {1:.6g} is negative beyond its std'.format(term, value),
                InconsistencyWarning
                )

    return report
