import numpy as np

from noisetailor.factory.makers import Maker
from noisetailor.factory.quotas import LogNormal

__all__ = [
    'PauliRates'
    ]


class PauliRates(Maker):
    """
    Generate the Pauli error probabilities of a 2-qubit channel.

    Assembly draws the 15 relative error weights from a `LogNormal` quota of
    median 1 (`dispersion` is the std of their logarithm, 0 gives
    depolarizing noise). Finishing rescales them so that the total error
    probability `1 - p_0` equals `mean_error`, returning all 16
    probabilities. `mean_error` may be a function of the target document.
    """

    def __init__(self, mean_error, dispersion=0.0):
        super().__init__()

        self._mean_error = mean_error
        self._dispersion = dispersion

    def _assemble(self):
        dispersion = float(self._quantity(self._dispersion))
        if dispersion < 0:
            raise ValueError('Dispersion must be >= 0')
        return LogNormal(1.0, dispersion).draw(self.rng, size=15).tolist()

    def _finish(self, value):
        mean_error = self._mean_error
        if callable(mean_error):
            mean_error = mean_error(self.document)
        mean_error = float(self._quantity(mean_error))

        if not 0 <= mean_error <= 1:
            raise ValueError(
                'Mean error must be in [0, 1], got {0!r}'.format(mean_error)
                )

        weights = np.asarray(value, dtype=float)
        rates = np.empty(16)
        rates[0] = 1.0 - mean_error
        rates[1:] = mean_error * weights / weights.sum()
        return rates.tolist()
