"""
JSON problem documents.

    {
      "n": 2,
      "f": {"A": [[1, 0], [0, 0]], "a": [0, 0], "a0": 0},
      "g": {"A": [[0, 0], [0, 1]], "a": [0, 0], "a0": 0},
      "F": {"theta": [1, 0, 1], "eta": [0, 0]},
      "linear": {"a": [1], "b": [0], "c": [4]}
    }

Matrices are row-major. "F" defaults to z1^2 + z2^2 and a missing "linear"
block means no rows. Errors name the offending field and, when it can be
located in the source text, its line.
"""
import re
import json
import logging
from dataclasses import dataclass
from typing import Any, Dict, Optional

import numpy as np

from core.errors import ProblemFileError
from core.problem import ObjectiveF, Po4Problem, QuadraticFunction

logger = logging.getLogger(__name__)

KNOWN_KEYS = {'n', 'f', 'g', 'F', 'linear', 'name', 'description'}


class _Reader:
    """Walks a decoded document, turning shape errors into ProblemFileError"""

    def __init__(self, text: str):
        self.lines = text.splitlines()

    def line_of(self, field_path: str) -> Optional[int]:
        """Line of the innermost key of field_path, each key searched below its parent"""
        found = None
        start = 0
        for key in re.findall(r"[A-Za-z_]\w*", field_path):
            needle = f'"{key}"'
            for number in range(start, len(self.lines)):
                if needle in self.lines[number]:
                    found, start = number + 1, number
                    break
            else:
                break
        return found

    def fail(self, message: str, field_path: str):
        raise ProblemFileError(message, field_path=field_path, line=self.line_of(field_path))

    def number(self, value: Any, field_path: str) -> float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            self.fail(f"expected a number, got {type(value).__name__}", field_path)
        if not np.isfinite(value):
            self.fail("number must be finite", field_path)
        return float(value)

    def vector(self, value: Any, length: Optional[int], field_path: str) -> np.ndarray:
        if not isinstance(value, list):
            self.fail(f"expected a list, got {type(value).__name__}", field_path)
        if length is not None and len(value) != length:
            self.fail(f"expected {length} entries, got {len(value)}", field_path)
        return np.array([self.number(v, f"{field_path}[{i}]") for i, v in enumerate(value)])

    def matrix(self, value: Any, n: int, field_path: str) -> np.ndarray:
        if not isinstance(value, list) or len(value) != n:
            self.fail(f"expected {n} rows", field_path)
        return np.vstack([self.vector(row, n, f"{field_path}[{i}]") for i, row in enumerate(value)])

    def quadratic(self, doc: Dict[str, Any], key: str, n: int) -> QuadraticFunction:
        block = doc.get(key)
        if not isinstance(block, dict):
            self.fail("missing or not an object", key)
        if 'A' not in block:
            self.fail("missing matrix", f"{key}.A")
        A = self.matrix(block['A'], n, f"{key}.A")
        a = self.vector(block.get('a', [0.0] * n), n, f"{key}.a")
        a0 = self.number(block.get('a0', 0.0), f"{key}.a0")
        return QuadraticFunction(A=A, a=a, a0=a0)

    def objective(self, doc: Dict[str, Any]) -> ObjectiveF:
        block = doc.get('F')
        if block is None:
            return ObjectiveF.squared_norm()
        if not isinstance(block, dict):
            self.fail("expected an object", 'F')
        theta = self.vector(block.get('theta', [1.0, 0.0, 1.0]), 3, "F.theta")
        eta = self.vector(block.get('eta', [0.0, 0.0]), 2, "F.eta")
        return ObjectiveF.from_coefficients(theta[0], theta[1], theta[2], eta[0], eta[1])

    def rows(self, doc: Dict[str, Any]):
        block = doc.get('linear')
        if block is None:
            return np.zeros(0), np.zeros(0), np.zeros(0)
        if not isinstance(block, dict):
            self.fail("expected an object", 'linear')
        for key in ('a', 'b', 'c'):
            if key not in block:
                self.fail("missing vector", f"linear.{key}")
        a = self.vector(block['a'], None, "linear.a")
        b = self.vector(block['b'], a.size, "linear.b")
        c = self.vector(block['c'], a.size, "linear.c")
        return a, b, c


@dataclass
class ProblemFile:
    """A parsed problem document"""
    problem: Po4Problem
    name: str = ""
    description: str = ""
    source: str = ""

    @classmethod
    def parse(cls, text: str, source: str = "<string>") -> 'ProblemFile':
        """
        Parse a JSON problem document

        Args:
            text: Document text
            source: Label used in log lines

        Returns:
            ProblemFile

        Raises:
            ProblemFileError: on syntax errors or inconsistent dimensions
        """
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as e:
            raise ProblemFileError(e.msg, field_path="<json>", line=e.lineno) from e
        if not isinstance(doc, dict):
            raise ProblemFileError("top level must be an object")

        reader = _Reader(text)
        unknown = sorted(set(doc) - KNOWN_KEYS)
        if unknown:
            logger.warning(f"{source}: ignoring unknown keys {unknown}")

        if 'n' not in doc:
            reader.fail("missing dimension", 'n')
        n = doc['n']
        if isinstance(n, bool) or not isinstance(n, int) or n < 1:
            reader.fail(f"dimension must be a positive integer, got {n!r}", 'n')

        f = reader.quadratic(doc, 'f', n)
        g = reader.quadratic(doc, 'g', n)
        F = reader.objective(doc)
        a, b, c = reader.rows(doc)
        problem = Po4Problem(f=f, g=g, F=F, a=a, b=b, c=c)
        logger.debug(f"Parsed {source}: n={problem.n}, m={problem.m}")
        return cls(problem=problem, name=str(doc.get('name', '')),
                   description=str(doc.get('description', '')), source=source)

    @classmethod
    def load(cls, path: str) -> 'ProblemFile':
        try:
            with open(path, 'r', encoding='utf-8') as fh:
                text = fh.read()
        except OSError as e:
            raise ProblemFileError(f"cannot read file: {e.strerror}", field_path=path) from e
        return cls.parse(text, source=path)

    def to_dict(self) -> Dict[str, Any]:
        p = self.problem
        doc: Dict[str, Any] = {}
        if self.name:
            doc['name'] = self.name
        if self.description:
            doc['description'] = self.description
        doc['n'] = p.n
        doc['f'] = p.f.to_dict()
        doc['g'] = p.g.to_dict()
        doc['F'] = p.F.to_dict()
        if p.m:
            doc['linear'] = {'a': p.a.tolist(), 'b': p.b.tolist(), 'c': p.c.tolist()}
        return doc

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def save(self, path: str):
        with open(path, 'w', encoding='utf-8') as fh:
            fh.write(self.dumps() + "\n")
        logger.info(f"Saved problem to {path}")


def load_problem(path: str) -> Po4Problem:
    return ProblemFile.load(path).problem


def dump_problem(problem: Po4Problem) -> str:
    return ProblemFile(problem=problem).dumps()
