"""Exception hierarchy shared by the library and the CLI"""
from __future__ import annotations

from typing import Optional, Sequence


class TwoTruthsError(Exception):
    """Base error; ``context`` names the module that raised it"""

    context = "two_truths"

    def __init__(self, message: str, *, context: Optional[str] = None):
        super().__init__(message)
        if context:
            self.context = context

    def describe(self) -> str:
        return f"[{self.context}] {self}"


class GraphFormatError(TwoTruthsError, ValueError):
    context = "graph"

    def __init__(self, message: str, *, line_number: Optional[int] = None, path: Optional[str] = None):
        where = ""
        if path is not None:
            where = f"{path}"
        if line_number is not None:
            where = f"{where}:{line_number}" if where else f"line {line_number}"
        super().__init__(f"{where}: {message}" if where else message)
        self.line_number = line_number
        self.path = path


class LabelError(TwoTruthsError, ValueError):
    context = "graph"


class SbmParamsError(TwoTruthsError, ValueError):
    context = "sbm"


class DegenerateBlockError(TwoTruthsError, ValueError):
    context = "sbm"


class IsolatedVertexError(TwoTruthsError, ValueError):
    context = "spectral"


class ConvergenceError(TwoTruthsError, RuntimeError):
    context = "spectral"

    def __init__(self, message: str, *, residuals: Sequence[float] = (), context: Optional[str] = None):
        super().__init__(message, context=context)
        self.residuals = list(residuals)


class DegenerateScreeError(TwoTruthsError, ValueError):
    context = "model_selection"


class GmmFitError(TwoTruthsError, RuntimeError):
    context = "gmm"


class DimensionMismatchError(TwoTruthsError, ValueError):
    context = "gmm"


class DegenerateGaussianError(TwoTruthsError, ValueError):
    context = "chernoff"
