"""Art recommendation from visual embeddings and purchase baskets."""

from ._curatornet import *  # noqa: F401,F403
from ._curatornet import __doc__  # noqa: F401

__version__ = "0.1.0"
