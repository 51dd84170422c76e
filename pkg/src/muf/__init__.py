"""Probabilistic stream programs with delayed sampling and a bounded-memory analysis."""

from pathlib import Path

from .ast_parser import ParseError, Program, parse
from .core_types import CoreTypeError, typecheck_core

CORPUS = Path(__file__).parent / "corpus"

__all__ = ["CORPUS", "CoreTypeError", "ParseError", "Program", "parse", "typecheck_core"]
