import numpy as np

__all__ = [
    'LogNormal',
    'Quota'
    ]


class Quota:
    """
    A base class for implementing variable quota (although the base class
    provides a fixed value and is no different than using an integer or float
    value).

    Variable quotas draw from a `numpy.random.Generator`: the one passed to
    `draw`, else the one they were created with.

    The Quota class can be safely used as an argument for `Factory`s and
    `Maker`s.
    """

    def __init__(self, quantity):
        self._quantity = quantity

    def __int__(self):
        return int(self._quantity)

    def __float__(self):
        return float(self._quantity)

    def draw(self, rng=None, size=None):
        """Return a float value for the quota (an array of `size` values)"""
        if size is not None:
            return np.full(size, float(self._quantity))
        return float(self._quantity)


class LogNormal(Quota):
    """
    Return a random positive quota with median `median`; `sigma` is the
    standard deviation of its logarithm.
    """

    def __init__(self, median, sigma, rng=None):
        if median <= 0:
            raise ValueError('Median must be > 0')
        if sigma < 0:
            raise ValueError('Sigma must be >= 0')

        self._median = median
        self._sigma = sigma
        self._rng = rng

    def __int__(self):
        return int(self.draw())

    def __float__(self):
        return self.draw()

    def draw(self, rng=None, size=None):
        if rng is None:
            if self._rng is None:
                self._rng = np.random.default_rng()
            rng = self._rng

        values = rng.lognormal(np.log(self._median), self._sigma, size=size)
        if size is None:
            return float(values)
        return values
