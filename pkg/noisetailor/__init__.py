__version__ = '0.1.0'

from noisetailor.pauli_core import *
from noisetailor.channels import *
from noisetailor.circuits import *
from noisetailor.simulator import *
