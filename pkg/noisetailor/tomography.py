"""
Pauli noise tomography (PNT) of CNOT junctions.

Nine circuit families are run at several depths. Every measured quantity is a
product of junction fidelities whose exponents grow linearly with depth,

    s(n) = A * prod_a f_a ** (n * u_a + v_a)

and the exponents are found by propagating the prepared Pauli component
through the circuit. Fitting `ln s` against `n` for every quantity and solving
the resulting linear system in `ln f` recovers the 15 fidelities (or the 31
crosstalk parameters when the neighbour is measured too).
"""

from collections import namedtuple
import csv
import itertools
import logging
import math
import warnings

import numpy as np
from scipy import optimize

from noisetailor.analysis import FitWarning
from noisetailor.channels import isotropize_neighbor, sanitize
from noisetailor.circuits import Circuit, parse_state
from noisetailor.compiling import crc_dress, rc_dress
from noisetailor.pauli_core import (
    FidelityVector,
    PauliString,
    clifford_conjugate,
    walsh_hadamard
    )
from noisetailor.records import Record
from noisetailor.simulator import NoiseModel, expectation, run_circuit
from noisetailor import seeds

__all__ = [
    # Exceptions
    'AnomalyWarning',
    'UnfittableFamily',

    # Types
    'PntCircuitSpec',
    'SignalTable',
    'TomographyResult',

    # Operations
    'depth_schedule',
    'fit_all',
    'fit_fidelities',
    'generate_pnt_circuits',
    'measure_pnt',
    'pnt_circuit_cost',
    'sanitize_for_emulation'
    ]


logger = logging.getLogger(__name__)


class UnfittableFamily(ValueError):
    """
    Raised when signals cannot determine the junction fidelities.
    """


class AnomalyWarning(UserWarning):
    """
    Warning issued when a fitted fidelity exceeds 1 by more than 3 std.
    """


# Family name -> (prepared state, kind, observables). Kinds: `even` runs 2n
# CNOTs, `cat1` runs 2n CNOTs each followed by Rz(pi/2) x Rx(pi/2), `odd`
# runs 2n + 1 CNOTs. The first two observables of an odd family share a
# SPAM amplitude.
FAMILIES = {
    'INV': ('0+', 'even', ('ZI', 'IX', 'ZX')),
    'XY': ('++y', 'cat1', ('XY',)),
    'YZ': ('+y0', 'cat1', ('YZ',)),
    'YY': ('+0', 'cat1', ('XZ',)),
    'XZ': ('+y+y', 'cat1', ('YY',)),
    'XX/XI': ('++', 'odd', ('XX', 'XI', 'IX')),
    'YX/YI': ('+y+', 'odd', ('YX', 'YI', 'IX')),
    'ZY/IY': ('0+y', 'odd', ('ZY', 'IY', 'ZI')),
    'ZZ/IZ': ('00', 'odd', ('ZZ', 'IZ', 'ZI'))
    }

# Default number of bootstrap resamples
N_BOOT = 1000

# Columns of the signals CSV
CSV_COLUMNS = (
    'junction',
    'direction',
    'family',
    'depth',
    'cnots',
    'qubits',
    'observable',
    'quantity_label',
    'signal',
    'std'
    )


# A measured quantity: `observable` (on the circuit's qubits), exponents per
# depth `u` and offset `v` (arrays over the junction channel's indices), the
# ideal sign and the SPAM group it shares an amplitude with (or None).
Quantity = namedtuple(
    'Quantity',
    ['observable', 'label', 'u', 'v', 'sign', 'spam_group']
    )


def depth_schedule(n_d):
    """Return the depths `n = 2^d` for `d = 0..n_d - 1`"""
    return [2 ** d for d in range(n_d)]


def pnt_circuit_cost(n_d, n_junctions, n_rc):
    """Return the number of circuits PNT needs (both CNOT directions)"""
    return 9 * n_d * 2 * n_junctions * n_rc


def _parse_junction(junction):
    if isinstance(junction, str):
        control, target = (int(q) for q in junction.split('-'))
    else:
        control, target = junction
    return control, target


def _pauli_path(body, component):
    """
    Propagate a Pauli component through a Clifford body, returning the final
    string, its sign and how often each junction fidelity was collected.
    """
    q = 4 ** (3 if any(g.neighbor is not None for g in body) else 2)
    exponents = np.zeros(q, dtype=int)
    sign = 1
    p = component
    for gate in body:
        p, s = clifford_conjugate(gate, p)
        sign *= s
        if gate.is_cnot:
            exponents[p.restrict(gate.active_qubits).index] += 1
    return p, sign, exponents


def _components(state, n_qubits):
    """Yield the Pauli components of a product stabilizer state"""
    symbols = []
    for label in parse_state(state, n_qubits):
        if label in ('0', '1'):
            symbols.append('Z')
        elif label in ('+', '-'):
            symbols.append('X')
        else:
            symbols.append('Y')

    # Only positive eigenstates are prepared by the families
    for mask in itertools.product((False, True), repeat=n_qubits):
        yield PauliString(''.join(s if m else 'I' for s, m in zip(symbols, mask)))


def _word_label(index, q):
    return PauliString.from_index(int(index), q).word


def _monomial_label(u, v, q):
    """Return a readable label such as `(f_XX f_XI)^n f_XX`"""
    parts = []
    nonzero = np.flatnonzero(u)
    if len(nonzero):
        powers = set(u[nonzero])
        names = ' '.join('f_' + _word_label(i, q) for i in nonzero)
        if len(powers) == 1:
            k = powers.pop()
            power = 'n' if k == 1 else '{0}n'.format(k)
            parts.append(
                '{0}^{{{1}}}'.format(names, power) if len(nonzero) == 1
                else '({0})^{1}'.format(names, power)
                )
        else:
            parts.append(' '.join(
                'f_{0}^{{{1}n}}'.format(_word_label(i, q), u[i]) for i in nonzero
                ))

    for i in np.flatnonzero(v):
        name = 'f_' + _word_label(i, q)
        parts.append(name if v[i] == 1 else '{0}^{1}'.format(name, v[i]))

    return ' '.join(parts)


class PntCircuitSpec:
    """
    One PNT circuit: a family at depth `n` for one CNOT direction.
    """

    def __init__(self, junction_id, direction, family, n, crosstalk=False):
        assert family in FAMILIES, 'Unknown PNT family {0!r}'.format(family)
        if n < 1:
            raise ValueError('PNT depths must be >= 1')

        self._junction_id = junction_id
        self._direction = tuple(direction)
        self._family = family
        self._n = int(n)
        self._crosstalk = bool(crosstalk)

        prep, kind, _ = FAMILIES[family]
        self._kind = kind
        self._preparation = prep + ('0' if crosstalk else '')

        self._body = self._build_body(self._n)
        self._circuit = Circuit(self.n_qubits).prepare(self._preparation)
        self._circuit.extend(self._body)
        self._quantities = self._build_quantities()

    def __repr__(self):
        return '<PntCircuitSpec {0} {1} n={2} cnots={3}>'.format(
            self._junction_id,
            self._family,
            self._n,
            self.cnots
            )

    # Read-only properties

    @property
    def junction_id(self):
        return self._junction_id

    @property
    def direction(self):
        return self._direction

    @property
    def family(self):
        return self._family

    @property
    def n(self):
        return self._n

    @property
    def parity(self):
        return 'odd' if self._kind == 'odd' else 'even'

    @property
    def crosstalk(self):
        return self._crosstalk

    @property
    def n_qubits(self):
        return 3 if self._crosstalk else 2

    @property
    def cnots(self):
        return 2 * self._n + (1 if self._kind == 'odd' else 0)

    @property
    def preparation(self):
        return self._preparation

    @property
    def circuit(self):
        return self._circuit

    @property
    def body(self):
        return self._body

    @property
    def quantities(self):
        return self._quantities

    @property
    def basis(self):
        """Return the per-qubit measurement basis"""
        basis = ['Z'] * self.n_qubits
        for quantity in self._quantities:
            for qubit, symbol in enumerate(quantity.observable):
                if symbol != 'I':
                    basis[qubit] = symbol
        return ''.join(basis)

    # Building

    def _build_body(self, n):
        neighbor = 2 if self._crosstalk else None
        cnots = 2 * n + (1 if self._kind == 'odd' else 0)
        body = Circuit(self.n_qubits)
        for _ in range(cnots):
            body.cx(0, 1, junction=self._junction_id, neighbor=neighbor)
            if self._kind == 'cat1':
                body.rz(math.pi / 2, 0)
                body.rx(math.pi / 2, 1)
        return body

    def _observables(self):
        _, kind, observables = FAMILIES[self._family]
        if not self._crosstalk:
            return [(o, (self._family, 'I') if kind == 'odd' and i < 2 else None)
                    for i, o in enumerate(observables)]

        items = []
        for suffix in ('I', 'Z'):
            for i, o in enumerate(observables):
                group = (self._family, suffix) if kind == 'odd' and i < 2 else None
                items.append((o + suffix, group))
        if self._family == 'INV':
            items.append(('IIZ', None))
        return items

    def _exponents(self, observable, n):
        body = self._body if n == self._n else self._build_body(n)
        for component in _components(self._preparation, self.n_qubits):
            final, sign, exponents = _pauli_path(body, component)
            if final.word == observable:
                return sign, exponents
        raise AssertionError(
            '{0} carries no signal in family {1}'.format(observable, self._family)
            )

    def _build_quantities(self):
        q = self.n_qubits
        quantities = []
        for observable, group in self._observables():
            _, e1 = self._exponents(observable, 1)
            _, e2 = self._exponents(observable, 2)
            sign, _ = self._exponents(observable, self._n)

            # Exponents are linear in depth, e(n) = n u + v
            u = e2 - e1
            v = 2 * e1 - e2
            quantities.append(Quantity(
                observable,
                _monomial_label(u, v, q),
                u,
                v,
                sign,
                group
                ))
        return quantities

    # Serializing

    def to_json_type(self):
        return {
            'junction_id': self._junction_id,
            'direction': list(self._direction),
            'family': self._family,
            'n': self._n,
            'cnots': self.cnots,
            'crosstalk': self._crosstalk,
            'preparation': self._preparation,
            'basis': self.basis,
            'quantities': [
                {'observable': x.observable, 'label': x.label, 'sign': x.sign}
                for x in self._quantities
                ],
            'circuit': self._circuit.to_json_type()
            }


def generate_pnt_circuits(
    junction,
    depths,
    with_crosstalk=False,
    both_directions=False
    ):
    """
    Return the PNT circuit specs of a junction: 9 families per depth, for
    both CNOT directions when requested.
    """
    if not depths or min(depths) < 1:
        raise ValueError('PNT depths must be >= 1')

    control, target = _parse_junction(junction)
    directions = [(control, target)]
    if both_directions:
        directions.append((target, control))

    specs = []
    for direction in directions:
        junction_id = '{0}-{1}'.format(*direction)
        for family in FAMILIES:
            for n in depths:
                specs.append(
                    PntCircuitSpec(junction_id, direction, family, n, with_crosstalk)
                    )
    return specs


class SignalTable:
    """
    PNT signals, one row per (junction, family, depth, observable), with the
    per-RC samples behind each signal when the table was measured here.
    """

    def __init__(self, rows=None, samples=None):
        self._rows = list(rows or [])
        self._samples = dict(samples or {})

    def __len__(self):
        return len(self._rows)

    def __iter__(self):
        return iter(self._rows)

    @property
    def rows(self):
        return list(self._rows)

    @property
    def samples(self):
        return self._samples

    def junction_ids(self):
        return sorted({r['junction'] for r in self._rows})

    def select(self, junction_id):
        """Return the table restricted to one junction"""
        rows = [r for r in self._rows if r['junction'] == junction_id]
        samples = {k: v for k, v in self._samples.items() if k[0] == junction_id}
        return SignalTable(rows, samples)

    def extend(self, other):
        self._rows.extend(other._rows)
        self._samples.update(other._samples)

    def to_csv(self, path):
        with open(path, 'w', newline='', encoding='utf8') as f:
            writer = csv.DictWriter(f, fieldnames=CSV_COLUMNS)
            writer.writeheader()
            for row in self._rows:
                writer.writerow({c: row[c] for c in CSV_COLUMNS})

    @classmethod
    def from_csv(cls, path):
        """Load signals measured elsewhere (no per-RC samples)"""
        rows = []
        with open(path, newline='', encoding='utf8') as f:
            for row in csv.DictReader(f):
                row['depth'] = int(row['depth'])
                row['cnots'] = int(row['cnots'])
                row['qubits'] = int(row['qubits'])
                row['signal'] = float(row['signal'])
                row['std'] = float(row['std'])
                rows.append(row)
        return cls(rows)


def _sample_key(row):
    return (row['junction'], row['family'], row['depth'], row['observable'])


def _analytic_model(model):
    """Return the infinitely twirled Pauli part of a model"""
    model = model.pauli_only()
    channels = {}
    for entry in model.junctions:
        if entry.q == 3:
            channels[entry.junction_id] = isotropize_neighbor(entry.fidelity_vector())
    return model.with_channels(channels) if channels else model


def measure_pnt(
    specs,
    model,
    n_rc=200,
    shots=100,
    seed=0,
    analytic=False,
    mode='channel'
    ):
    """
    Run PNT specs under a noise model and return a `SignalTable`.

    With `analytic` set the undressed circuits are emulated exactly under the
    model's twirled Pauli channels. Otherwise every spec is run as `n_rc`
    RC (cRC with crosstalk) dressings of `shots` shots each; the per-dressing
    estimates are kept for bootstrapping.
    """
    rows = []
    samples = {}

    if analytic:
        model = _analytic_model(model)

    for spec in specs:
        if analytic:
            rho = run_circuit(spec.circuit, model)
            values = {
                x.observable: np.array([expectation(rho, x.observable) * x.sign])
                for x in spec.quantities
                }

        else:
            values = {x.observable: np.empty(n_rc) for x in spec.quantities}
            dress = crc_dress if spec.crosstalk else rc_dress
            for r in range(n_rc):
                rng = seeds.split(seed, 'pnt', spec.junction_id, spec.family, spec.n, r)
                dressed = dress(spec.circuit, rng)
                record = run_circuit(
                    dressed.circuit,
                    model,
                    mode=mode,
                    rng=rng,
                    shots=shots,
                    basis=spec.basis
                    )
                for x in spec.quantities:
                    values[x.observable][r] = record.expectation(x.observable) * x.sign

        for x in spec.quantities:
            data = values[x.observable]
            signal = float(data.mean())
            if len(data) > 1:
                std = float(data.std(ddof=1) / math.sqrt(len(data)))
            elif analytic:
                std = 0.0
            else:
                std = math.sqrt(max(1 - signal ** 2, 0) / shots)

            row = {
                'junction': spec.junction_id,
                'direction': '{0}-{1}'.format(*spec.direction),
                'family': spec.family,
                'depth': spec.n,
                'cnots': spec.cnots,
                'qubits': spec.n_qubits,
                'observable': x.observable,
                'quantity_label': x.label,
                'signal': signal,
                'std': std
                }
            rows.append(row)
            if not analytic:
                samples[_sample_key(row)] = data

        logger.debug('Measured %r', spec)

    return SignalTable(rows, samples)


class TomographyResult(Record):
    """
    The fitted channel of one junction. `fidelities` holds all 16 entries
    (index 0 is 1); with crosstalk `crosstalk` holds the F^I and F^D blocks.
    """

    _fields = {
        'junction_id',
        'direction',
        'q',
        'fidelities',
        'std',
        'crosstalk',
        'spam',
        'residuals',
        'anomalies',
        'invalid',
        'n_boot'
        }

    def fidelity_vector(self):
        """Return the 2-qubit (or, with crosstalk, 64 entry) fidelity vector"""
        if self.crosstalk:
            blocks = np.empty((16, 4))
            blocks[:, 0] = self.crosstalk['F_I']
            blocks[:, 1:] = np.asarray(self.crosstalk['F_D'])[:, None]
            return FidelityVector(blocks.reshape(-1))
        return FidelityVector(self.fidelities)

    def std_vector(self):
        if self.crosstalk:
            blocks = np.empty((16, 4))
            blocks[:, 0] = self.crosstalk['std_I']
            blocks[:, 1:] = np.asarray(self.crosstalk['std_D'])[:, None]
            return blocks.reshape(-1)
        return np.asarray(self.std, dtype=float)

    def noise_entry(self):
        """Return the noise model junction document for this result"""
        f = self.fidelity_vector()
        return {
            'junction_id': self.junction_id,
            'q': f.q,
            'direction': list(self.direction),
            'neighbor': None,
            'fidelities': f.to_json_type()
            }

    @classmethod
    def to_noise_model(cls, results, **kwargs):
        """Build a `NoiseModel` from fitted results"""
        return NoiseModel(
            junctions=[r.noise_entry() for r in results],
            **kwargs
            )


# Fitting

def _fit_series(depths, signals, stds):
    """
    Fit `ln s = alpha + beta n`, returning
    `(alpha, beta, var_alpha, var_beta, residual)` or None when invalid.
    """
    depths = np.asarray(depths, dtype=float)
    signals = np.asarray(signals, dtype=float)
    stds = np.asarray(stds, dtype=float)

    if np.all(signals <= 0):
        raise UnfittableFamily('Non-positive signals at every depth')

    if np.all(signals > 0):
        y = np.log(signals)
        rel = stds / signals
        weights = np.ones_like(y) if np.all(rel == 0) \
                else 1 / np.maximum(rel, rel[rel > 0].min()) ** 2
        X = np.column_stack([np.ones_like(depths), depths])
        W = np.sqrt(weights)
        coef, *_ = np.linalg.lstsq(X * W[:, None], y * W, rcond=None)
        residual = float(np.sqrt(np.mean((y - X @ coef) ** 2)))
        if np.all(rel == 0):
            cov = np.zeros((2, 2))
        else:
            cov = np.linalg.pinv((X * weights[:, None]).T @ X)
        return coef[0], coef[1], cov[0, 0], cov[1, 1], residual

    # Fall back to a direct nonlinear fit when some signal is <= 0
    sigma = stds if np.all(stds > 0) else None
    p0 = (max(signals[0], 1e-3), 0.9)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter('always', optimize.OptimizeWarning)
        try:
            popt, pcov = optimize.curve_fit(
                lambda n, a, r: a * np.sign(r) * np.abs(r) ** n,
                depths,
                signals,
                p0=p0,
                sigma=sigma,
                absolute_sigma=sigma is not None
                )
        except RuntimeError as e:
            warnings.warn('Direct fit failed: {0}'.format(e), FitWarning)
            return None

    for w in caught:
        warnings.warn(str(w.message), FitWarning)

    a, r = popt
    if a <= 0 or r <= 0:
        return None

    fitted = a * r ** depths
    residual = float(np.sqrt(np.mean((signals - fitted) ** 2)))
    var = np.diag(pcov) if np.all(np.isfinite(pcov)) else np.zeros(2)
    return math.log(a), math.log(r), var[0] / a ** 2, var[1] / r ** 2, residual


def _series(table):
    """Group rows into per-quantity series keyed by (family, observable)"""
    series = {}
    for row in table:
        key = (row['family'], row['observable'])
        series.setdefault(key, []).append(row)
    for rows in series.values():
        rows.sort(key=lambda r: r['depth'])
    return series


def _quantities(table):
    """Regenerate the quantity exponents for the rows of one junction"""
    first = table.rows[0]
    crosstalk = first['qubits'] == 3
    direction = [int(q) for q in first['direction'].split('-')]

    quantities = {}
    for family in {r['family'] for r in table}:
        spec = PntCircuitSpec(first['junction'], direction, family, 1, crosstalk)
        for x in spec.quantities:
            quantities[(family, x.observable)] = x
    return quantities


def _solve(series, quantities, values, q):
    """
    Solve the weighted linear system in `ln f` (and shared `ln A`), returning
    `(ln_f, columns, spam, residuals, invalid)`.
    """
    fits = {}
    invalid = []
    for key, rows in series.items():
        fit = _fit_series(
            [r['depth'] for r in rows],
            [values[_sample_key(r)] for r in rows],
            [r['std'] for r in rows]
            )
        if fit is None:
            invalid.append(quantities[key].observable)
        else:
            fits[key] = fit

    # Unknowns: fidelity logs then shared SPAM amplitudes
    columns = sorted({
        int(i) for key in fits for i in np.flatnonzero(quantities[key].u)
        })
    groups = sorted({
        quantities[key].spam_group for key in fits
        if quantities[key].spam_group is not None
        })
    index = {c: i for i, c in enumerate(columns)}
    n_unknowns = len(columns) + len(groups)

    variances = [v for fit in fits.values() for v in (fit[2], fit[3]) if v > 0]
    floor = min(variances) if variances else 1.0

    rows, targets, weights = [], [], []
    for key, (alpha, beta, var_alpha, var_beta, _) in sorted(fits.items()):
        quantity = quantities[key]
        row = np.zeros(n_unknowns)
        for i in np.flatnonzero(quantity.u):
            row[index[int(i)]] = quantity.u[i]
        rows.append(row)
        targets.append(beta)
        weights.append(1 / max(var_beta, floor))

        if quantity.spam_group is not None:
            row = np.zeros(n_unknowns)
            for i in np.flatnonzero(quantity.v):
                row[index[int(i)]] = quantity.v[i]
            row[len(columns) + groups.index(quantity.spam_group)] = 1
            rows.append(row)
            targets.append(alpha)
            weights.append(1 / max(var_alpha, floor))

    A = np.array(rows)
    W = np.sqrt(np.array(weights))
    if not len(rows) or np.linalg.matrix_rank(A) < n_unknowns:
        raise UnfittableFamily('Signals do not determine every fidelity')

    solution, *_ = np.linalg.lstsq(A * W[:, None], np.array(targets) * W, rcond=None)

    spam = {}
    residuals = {}
    for key, (alpha, _, _, _, residual) in fits.items():
        quantity = quantities[key]
        if quantity.spam_group is not None:
            ln_a = solution[len(columns) + groups.index(quantity.spam_group)]
        else:
            ln_a = alpha - quantity.v[columns] @ solution[:len(columns)]
        spam[quantity.observable] = math.exp(ln_a)
        residuals[quantity.observable] = residual

    return solution[:len(columns)], columns, spam, residuals, invalid


def _expand(ln_f, columns, q):
    """Return the full fidelity vector (indices not fitted are 1)"""
    f = np.ones(4 ** q)
    f[columns] = np.exp(ln_f)
    return f


def _bootstrap_values(table, values, rng):
    """Return resampled signals (per-RC resampling, or parametric)"""
    resampled = {}
    draws = {}
    for row in table:
        key = _sample_key(row)
        data = table.samples.get(key)
        if data is None:
            resampled[key] = values[key] + row['std'] * rng.normal()
            continue

        # Observables of one circuit share the resampled dressings
        circuit = key[:3]
        if circuit not in draws:
            draws[circuit] = rng.integers(len(data), size=len(data))
        resampled[key] = float(data[draws[circuit]].mean())
    return resampled


def fit_fidelities(table, junction_id=None, n_boot=N_BOOT, seed=0):
    """
    Fit the fidelities of one junction from its PNT signals.

    Every quantity is fitted as `ln s = ln A + n ln R`. The depth rates give
    `u . ln f = ln R`; odd families additionally share `A` between their
    joint and marginal quantity, `ln A + v . ln f = intercept`, which
    separates the paired fidelities:

        f_1 = sqrt(c_1 P / c_2),  f_2 = sqrt(c_2 P / c_1)

    for intercepts `c_1, c_2` and depth product `P = f_1 f_2`. Redundant
    estimates (f_ZI, f_IX) are combined by inverse-variance weighting. The
    std of every fidelity comes from `n_boot` bootstrap refits.
    """
    if junction_id is None:
        junctions = table.junction_ids()
        if len(junctions) != 1:
            raise ValueError('Signals hold several junctions, name one')
        junction_id = junctions[0]

    table = table.select(junction_id)
    if not len(table):
        raise UnfittableFamily('No signals for junction {0!r}'.format(junction_id))

    series = _series(table)
    for (family, observable), rows in series.items():
        if len({r['depth'] for r in rows}) < 2:
            raise UnfittableFamily(
                'Family {0} needs at least 2 depths'.format(family)
                )

    quantities = _quantities(table)
    q = table.rows[0]['qubits']
    values = {_sample_key(r): r['signal'] for r in table}

    ln_f, columns, spam, residuals, invalid = _solve(series, quantities, values, q)
    f = _expand(ln_f, columns, q)

    # Bootstrap
    analytic = all(r['std'] == 0 for r in table) and not table.samples
    boot = []
    if n_boot and not analytic:
        rng = seeds.split(seed, 'bootstrap', junction_id)
        for _ in range(n_boot):
            try:
                resampled = _bootstrap_values(table, values, rng)
                boot_ln_f, *_ = _solve(series, quantities, resampled, q)
            except UnfittableFamily:
                continue
            boot.append(_expand(boot_ln_f, columns, q))
    std = np.std(boot, axis=0, ddof=1) if len(boot) > 1 else np.zeros(4 ** q)

    # Flag fidelities above the physical limit
    anomalies = []
    for i in range(1, 4 ** q):
        if f[i] > 1 + max(3 * std[i], 1e-9):
            anomalies.append(_word_label(i, q))
    if anomalies:
        warnings.warn(
            'Fidelities above 1 on {0}: {1}'.format(junction_id, ', '.join(anomalies)),
            AnomalyWarning
            )

    first = table.rows[0]
    result = TomographyResult(
        junction_id=junction_id,
        direction=[int(x) for x in first['direction'].split('-')],
        q=q,
        spam=spam,
        residuals=residuals,
        anomalies=anomalies,
        invalid=invalid,
        n_boot=len(boot)
        )

    if q == 3:
        blocks = f.reshape(16, 4)
        std_blocks = std.reshape(16, 4)
        result.fidelities = blocks[:, 0].tolist()
        result.std = std_blocks[:, 0].tolist()
        result.crosstalk = {
            'F_I': blocks[:, 0].tolist(),
            'F_D': blocks[:, 3].tolist(),
            'std_I': std_blocks[:, 0].tolist(),
            'std_D': std_blocks[:, 3].tolist()
            }
    else:
        result.fidelities = f.tolist()
        result.std = std.tolist()

    logger.info(
        'Fitted %s: min fidelity %.6f, %d anomalies',
        junction_id,
        min(result.fidelities),
        len(anomalies)
        )

    return result


def fit_all(table, n_boot=N_BOOT, seed=0):
    """Fit every junction in a signal table"""
    return {
        junction_id: fit_fidelities(table, junction_id, n_boot, seed)
        for junction_id in table.junction_ids()
        }


def sanitize_for_emulation(result):
    """
    Return emulation probabilities for a fitted result: negative error
    probabilities (from fidelities above 1) are set to 0 and the rest
    renormalized. Fidelities themselves are not clamped.
    """
    return sanitize(walsh_hadamard(result.fidelity_vector()))
