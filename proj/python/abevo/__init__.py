from ._abevo import *  # noqa: F401,F403
from ._abevo import __version__  # noqa: F401
