from .exceptions import *
from .graph import *
from .systems import *
from .relations import *
from .simulation import *
from .synthesis import *

__version__ = "0.1.0"
