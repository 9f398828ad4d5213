from importlib.metadata import PackageNotFoundError
from importlib.metadata import version

try:
    __version__ = version("additive_cs")
except PackageNotFoundError:
    __version__ = "0.0.0"
