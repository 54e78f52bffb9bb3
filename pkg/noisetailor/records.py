from contextlib import contextmanager
import hashlib
import json
import os

from blinker import signal
from copy import deepcopy
import numpy as np

__all__ = [
    'Record',
    'SubRecord'
    ]


class _BaseRecord:
    """
    Base class for Records and SubRecords.
    """

    # A cache of key lists generated from path strings used for performance (see
    # `_path_to_keys`.
    _path_to_keys_cache = {}

    # A map of field names to the `SubRecord` class their values are wrapped in
    _sub_records = {}

    def __init__(self, *args, **kwargs):
        # Set the document against the record (or assign an empty one if one
        # isn't provided).
        if args:
            self._document = args[0]
        else:
            self._document = kwargs

        self._wrap_sub_records()

    # Get/Set attribute methods are overwritten to support for setting values
    # against the `_document`.

    def __getattr__(self, name):
        if '_document' in self.__dict__ and name in self._fields:
            return self.__dict__['_document'].get(name, None)
        raise AttributeError(
            "'{0}' has no attribute '{1}'".format(self.__class__.__name__, name)
            )

    def __setattr__(self, name, value):
        if '_document' in self.__dict__ and name in self._fields:
            self.__dict__['_document'][name] = value
        else:
            super(_BaseRecord, self).__setattr__(name, value)

    def __getitem__(self, name):
        return self.__dict__['_document'][name]

    def __contains__(self, name):
        return name in self.__dict__['_document']

    def get(self, name, default=None):
        return self.__dict__['_document'].get(name, default)

    def _wrap_sub_records(self):
        """Wrap plain dictionaries held by sub-record fields"""
        for field, sub_cls in self._sub_records.items():
            value = self._document.get(field)
            if isinstance(value, dict):
                self._document[field] = sub_cls(value)
            elif isinstance(value, list):
                self._document[field] = [
                    sub_cls(v) if isinstance(v, dict) else v for v in value
                    ]

    # Serializing

    def to_json_type(self):
        """
        Return a dictionary for the document with values converted to JSON safe
        types.
        """
        document_dict = self._json_safe(self._document)
        self._remove_keys(document_dict, self._private_fields)
        return document_dict

    @classmethod
    def _json_safe(cls, value):
        """Return a JSON safe value"""

        # Records
        if isinstance(value, _BaseRecord):
            return value.to_json_type()

        # Numpy arrays and scalars
        elif isinstance(value, np.ndarray):
            return cls._json_safe(value.tolist())

        elif isinstance(value, np.bool_):
            return bool(value)

        elif isinstance(value, np.integer):
            return int(value)

        elif isinstance(value, np.floating):
            return float(value)

        # Domain values that know how to serialize themselves
        elif hasattr(value, 'to_json_type'):
            return cls._json_safe(value.to_json_type())

        # Lists
        elif isinstance(value, (list, tuple)):
            return [cls._json_safe(v) for v in value]

        # Dictionaries
        elif isinstance(value, dict):
            return {str(k): cls._json_safe(v) for k, v in value.items()}

        return value

    @classmethod
    def _path_to_keys(cls, path):
        """Return a list of keys for a given path"""

        # Paths are cached for performance
        keys = _BaseRecord._path_to_keys_cache.get(path)
        if keys is None:
            keys = _BaseRecord._path_to_keys_cache[path] = path.split('.')

        return keys

    @classmethod
    def _path_to_value(cls, path, parent_dict):
        """Return a value from a dictionary at the given path"""
        keys = cls._path_to_keys(path)

        # Traverse to the tip of the path
        child_dict = parent_dict
        for key in keys[:-1]:
            child_dict = child_dict.get(key)
            if child_dict is None:
                return

        return child_dict.get(keys[-1])

    @classmethod
    def _remove_keys(cls, parent_dict, paths):
        """
        Remove a list of keys from a dictionary.

        Keys are specified as a series of `.` separated paths for keys in child
        dictionaries, e.g 'parent_key.child_key.grandchild_key'.
        """

        for path in paths:
            keys = cls._path_to_keys(path)

            # Traverse to the tip of the path
            child_dict = parent_dict
            for key in keys[:-1]:
                child_dict = child_dict.get(key)

                if child_dict is None:
                    break

            if child_dict is None:
                continue

            # Remove the key
            if keys[-1] in child_dict:
                child_dict.pop(keys[-1])

    # Public methods

    @classmethod
    def get_fields(cls):
        """Return the set of fields defined for the class"""
        return set(cls._fields)

    @classmethod
    def get_private_fields(cls):
        """Return the set of private fields defined for the class"""
        return set(cls._private_fields)


class _RecordMeta(type):
    """
    Meta class for `Record`s to ensure an `_id` is present in any defined set
    of fields.
    """

    def __new__(meta, name, bases, dct):

        # If a set of fields is defined ensure it contains `_id`
        if '_fields' in dct and not '_id' in dct['_fields']:
            dct['_fields'] = set(dct['_fields']) | {'_id'}

        # If no collection name is set then use the class name
        if dct.get('_collection') is None:
            dct['_collection'] = name

        return super(_RecordMeta, meta).__new__(meta, name, bases, dct)


class Record(_BaseRecord, metaclass=_RecordMeta):
    """
    Records wrap a JSON document in a class adding dot notation access to its
    fields and persistence as one JSON file per document inside a store
    directory (`<store>/<collection>/<_id>.json`).
    """

    # The directory documents are stored in
    _store = None

    # The sub-directory of the store this class represents
    _collection = None

    # The documents defined fields
    _fields = set()

    # A set of private fields that will be excluded from the output of
    # `to_json_type`.
    _private_fields = set()

    def __eq__(self, other):
        if not isinstance(other, self.__class__):
            return False
        return self._id == other._id

    def __hash__(self):
        if not self._id:
            raise TypeError('Cannot hash a document without an `_id` set.')
        return hash((self._collection, self._id))

    def __lt__(self, other):
        return self._id < other._id

    def __repr__(self):
        return '<{0} {1!r}>'.format(self.__class__.__name__, self._id)

    # Operations

    def insert(self):
        """Insert this document"""

        # Send insert signal
        signal('insert').send(self.__class__, records=[self])

        # Documents without an Id are named by their content
        if not self._id:
            self._id = self.content_id()

        self._write()

        # Send inserted signal
        signal('inserted').send(self.__class__, records=[self])

    def update(self, *fields):
        """
        Update this document. Optionally a specific list of fields to update can
        be specified (other stored values are kept).
        """

        assert '_id' in self._document, "Can't update documents without `_id`"

        # Send update signal
        signal('update').send(self.__class__, records=[self])

        # Check for selective updates
        if len(fields) > 0 and os.path.exists(self.get_path(self._id)):
            stored = self._read(self._id)
            for field in fields:
                stored[field] = self._json_safe(
                    self._path_to_value(field, self._document)
                    )
            self._dump(self.get_path(self._id), stored)
        else:
            self._write()

        # Send updated signal
        signal('updated').send(self.__class__, records=[self])

    def delete(self):
        """Delete this document"""

        assert '_id' in self._document, "Can't delete documents without `_id`"

        # Send delete signal
        signal('delete').send(self.__class__, records=[self])

        path = self.get_path(self._id)
        if os.path.exists(path):
            os.remove(path)

        # Send deleted signal
        signal('deleted').send(self.__class__, records=[self])

    @classmethod
    def insert_many(cls, documents):
        """Insert a list of documents"""

        # Ensure all documents have been converted to records
        records = cls._ensure_records(documents)

        # Send insert signal
        signal('insert').send(cls, records=records)

        for record in records:
            if not record._id:
                record._id = record.content_id()
            record._write()

        # Send inserted signal
        signal('inserted').send(cls, records=records)

        return records

    @classmethod
    def _ensure_records(cls, documents):
        """
        Ensure all items in a list are records by converting those that aren't.
        """
        records = []
        for document in documents:
            if not isinstance(document, Record):
                records.append(cls(document))
            else:
                records.append(document)
        return records

    @classmethod
    def by_id(cls, id):
        """Get a document by ID"""
        path = cls.get_path(id)
        if not os.path.exists(path):
            return None
        return cls(cls._read(id))

    @classmethod
    def ids(cls, filter=None):
        """Return a sorted list of Ids for documents matching the filter"""
        return [r._id for r in cls.many(filter)]

    @classmethod
    def count(cls, filter=None):
        """Return a count of documents matching the filter"""
        return len(cls.ids(filter))

    @classmethod
    def one(cls, filter=None):
        """Return the first document matching the filter"""
        records = cls.many(filter)
        return records[0] if records else None

    @classmethod
    def many(cls, filter=None):
        """
        Return a list of documents matching the filter, a callable taking a
        record and returning a bool. Documents are ordered by Id.
        """
        directory = cls.get_collection()
        if not os.path.isdir(directory):
            return []

        records = []
        for name in sorted(os.listdir(directory)):
            if not name.endswith('.json'):
                continue
            record = cls(cls._read(name[:-len('.json')]))
            if filter is None or filter(record):
                records.append(record)
        return records

    # Files

    def content_id(self):
        """Return an Id derived from the document's content"""
        document = self.to_json_type()
        document.pop('_id', None)
        payload = json.dumps(document, sort_keys=True).encode('utf8')
        return hashlib.sha1(payload).hexdigest()[:16]

    def dumps(self):
        """Return the canonical JSON text for the document"""
        return self._dumps(self._json_safe(self._document))

    def to_file(self, path):
        """Write the document to a file outside of the store"""
        directory = os.path.dirname(os.path.abspath(path))
        os.makedirs(directory, exist_ok=True)
        self._dump(path, self._json_safe(self._document))

    @classmethod
    def from_file(cls, path):
        """Load a document from a file"""
        with open(path, encoding='utf8') as f:
            return cls(json.load(f))

    def _write(self):
        self.to_file(self.get_path(self._id))

    @classmethod
    def _read(cls, id):
        with open(cls.get_path(id), encoding='utf8') as f:
            return json.load(f)

    @staticmethod
    def _dumps(document):
        return json.dumps(document, sort_keys=True, indent=2) + '\n'

    @classmethod
    def _dump(cls, path, document):
        with open(path, 'w', encoding='utf8', newline='\n') as f:
            f.write(cls._dumps(document))

    # Signals

    @classmethod
    def listen(cls, event, func):
        """Add a callback for a signal against the class"""
        signal(event).connect(func, sender=cls)

    @classmethod
    def stop_listening(cls, event, func):
        """Remove a callback for a signal against the class"""
        signal(event).disconnect(func, sender=cls)

    # Misc.

    @classmethod
    def get_store(cls):
        """Return the store directory for the class"""
        store = getattr(cls, '_store_context', None) or cls._store
        assert store, 'No store set for {0}'.format(cls.__name__)
        return store

    @classmethod
    def get_collection(cls):
        """Return the directory documents of this class are kept in"""
        return os.path.join(cls.get_store(), cls._collection)

    @classmethod
    def get_path(cls, id):
        """Return the file path for the document with the given Id"""
        directory = cls.get_collection()
        os.makedirs(directory, exist_ok=True)
        return os.path.join(directory, '{0}.json'.format(id))

    @classmethod
    @contextmanager
    def with_store(cls, store):
        """Temporarily read and write documents in another store"""
        existing_context = cls.__dict__.get('_store_context')

        try:
            cls._store_context = store
            yield store

        finally:
            if existing_context is None:
                del cls._store_context

            else:
                cls._store_context = existing_context


class SubRecord(_BaseRecord):
    """
    Sub-records allow embedded documents to be wrapped in a class adding support
    for dot notation access to attributes.
    """

    # The documents defined fields
    _fields = set()

    # A set of private fields that will be excluded from the output of
    # `to_json_type`.
    _private_fields = set()

    def copy(self):
        return self.__class__(deepcopy(self.to_json_type()))
