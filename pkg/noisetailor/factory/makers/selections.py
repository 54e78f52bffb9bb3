from noisetailor.factory.makers import Maker

__all__ = ['Cycle']


class Cycle(Maker):
    """
    Pick from a list of makers and/or values in turn, starting again from
    the first after the last. The assembled value is `[index, assembled]`,
    where `assembled` is the picked maker's assembled value (`None` for
    plain values).
    """

    def __init__(self, items):
        super().__init__()
        self._items = items
        self._item_index = 0

    def reset(self):
        """Start again from the first item"""
        self._item_index = 0

    def _assemble(self):
        item_index = self._item_index
        self._item_index = (item_index + 1) % len(self._items)

        item = self._items[item_index]
        if isinstance(item, Maker):
            with item.target(self.document, self.rng):
                return [item_index, item._assemble()]
        return [item_index, None]

    def _finish(self, value):
        item = self._items[value[0]]
        if isinstance(item, Maker):
            with item.target(self.document, self.rng):
                return item._finish(value[1])
        return item
