from .version import __version__
from .exceptions import *
