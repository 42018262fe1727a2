from ._uta import *  # noqa: F401,F403
