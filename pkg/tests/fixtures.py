import shutil
import tempfile

import numpy as np
import pytest

from noisetailor.records import Record, SubRecord

__all__ = [
    # Records
    'Dragon',
    'Hoard',
    'Lair',
    'MonitoredDragon',

    # Fixtures
    'store',
    'rng',
    'example_dataset_one',
    'example_dataset_many'
    ]


# Classes

class Dragon(Record):
    """
    A dragon.
    """

    _fields = {
        'name',
        'breed'
        }
    _private_fields = {'breed'}


class Hoard(SubRecord):
    """
    A hoard of items kept within a lair.
    """

    _fields = {
        'gold',
        'skulls'
        }
    _private_fields = {'gold'}


class Lair(Record):
    """
    A lair in which a dragon resides.
    """

    _fields = {
        'name',
        'hoard',
        'heat_map'
        }
    _sub_records = {'hoard': Hoard}


class MonitoredDragon(Dragon):

    _fields = Dragon._fields | {
        'created',
        'modified'
        }


# Fixtures

@pytest.fixture(scope='function')
def store(request):
    """Create a temporary store directory for records"""

    path = tempfile.mkdtemp(prefix='noisetailor_test_')
    Record._store = path

    def fin():
        # Remove the store
        Record._store = None
        shutil.rmtree(path, ignore_errors=True)

    request.addfinalizer(fin)

    return path

@pytest.fixture(scope='function')
def rng():
    """A seeded random generator"""
    return np.random.default_rng(1234)

@pytest.fixture(scope='function')
def example_dataset_one(store):
    """Create an example set of data that can be used in testing"""
    lair = Lair(
        name='Cave',
        hoard=Hoard(gold=1000, skulls=100),
        heat_map=np.array([[0.5, 1.0], [1.5, 2.0]])
        )
    lair.insert()

    burt = Dragon(
        name='Burt',
        breed='Cold-drake'
        )
    burt.insert()

    return burt, lair

@pytest.fixture(scope='function')
def example_dataset_many(store):
    """Create an example set of data that can be used in testing"""

    dragons = [
        Dragon(name=name, breed=breed) for name, breed in (
            ('Burt', 'Cold-drake'),
            ('Fred', 'Fire-drake'),
            ('Albert', 'Stone-drake')
        )]
    Dragon.insert_many(dragons)

    return dragons
