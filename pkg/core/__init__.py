
from .errors import *
