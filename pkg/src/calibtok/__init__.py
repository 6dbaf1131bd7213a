import logging

from .version import __version__
from .core import *
from .exceptions import CalibTokException

logging.getLogger(__name__).addHandler(logging.NullHandler())
