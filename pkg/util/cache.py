import logging
import pickle
from pathlib import Path
from typing import Optional

import numpy as np

from util.galois import PrimePoly
from util.sensing import ConstructionSpec

logger = logging.getLogger("additive_cs.util.cache")

CACHE_DIR = "cache"


def write_sequence(sequence_file_name, sequence, p: int, m: int, r: int, b: int) -> None:
    """Dump one LFSR channel, one residue per line, under a `# p m r b` header.

    :param sequence_file_name: File to write
    :param sequence: The residues mod p
    :param p: Field characteristic
    :param m: Extension degree
    :param r: The channel's exponent
    :param b: The channel's coefficient, as a field element index
    """
    with open(sequence_file_name, "w") as sequence_file:
        sequence_file.write(f"# {p} {m} {r} {b}\n")
        sequence_file.write("".join(f"{int(value)}\n" for value in sequence))


def read_sequence(sequence_file_name) -> tuple:
    """

    :param sequence_file_name:
    :return: ((p, m, r, b), residues) read back from a write_sequence() dump
    """
    with open(sequence_file_name) as sequence_file:
        lines = sequence_file.read().splitlines()
    if not lines or not lines[0].startswith("#"):
        raise ValueError(f"{sequence_file_name} has no '# p m r b' header")
    header = tuple(int(v) for v in lines[0].lstrip("#").split())
    if len(header) != 4:
        raise ValueError(f"Malformed sequence header '{lines[0]}'")
    return header, np.array([int(line) for line in lines[1:] if line.strip()], dtype=np.int64)


class MatrixCache:
    """Pickled dense entries of built matrices, one file per construction and modulus."""

    filename: str
    path: Path
    _initialized: bool = False

    def initialize(self, spec: ConstructionSpec, modulus: PrimePoly):
        self._initialized = True
        exponents = "-".join(str(r) for r in spec.exponents)
        self.filename = "matrix_p{}_m{}_h{}_d{}_r{}_g{}_cache.p".format(
            spec.p, spec.m, spec.h, spec.d, exponents, modulus.serialize().replace(",", "")
        )

        # Make sure the cache directory exists
        self.path = Path(CACHE_DIR)
        self.path.mkdir(exist_ok=True)
        self.path = self.path / self.filename

    def load(self) -> Optional[np.ndarray]:
        """Load previously built entries for this construction.

        :return: The K x N entries, or None when nothing usable is cached
        """
        if not self._initialized:
            raise RuntimeError("Trying to use cache before initializing it")

        try:
            with self.path.open("rb") as file:
                entries = pickle.load(file)
                logger.debug("Loaded cached matrix from %s", self.filename)
                return entries
        except Exception as e:
            logger.debug("Unable to load cache file %s: %s", self.filename, e)
            return None

    def save(self, entries: np.ndarray) -> None:
        """Save built entries, overwriting whatever is cached for this construction.

        :param entries: The dense K x N entries
        """
        if not self._initialized:
            raise RuntimeError("Trying to use cache before initializing it")

        try:
            with self.path.open("wb") as file:
                pickle.dump(np.asarray(entries), file)
                logger.debug("Wrote cached matrix to %s", self.path)
        except Exception as e:
            logger.warning("Unable to write cache file %s: %s", self.filename, e)

    def bust(self) -> None:
        if not self._initialized:
            raise RuntimeError("Trying to use cache before initializing it")
        self.path.unlink(missing_ok=True)
        logger.debug("Cleared cache file %s", self.filename)


matrix_cache = MatrixCache()
