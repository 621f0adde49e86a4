"""
Exact spectral representation of functions on (-pi, pi) in the sine
eigenbasis of Lambda, plus the H^s norm scale.

Coefficients are taken against the un-normalized sin(j t); no 1/sqrt(pi)
factor is applied anywhere.
"""
import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Optional, Sequence, Union

import numpy as np

from errors import GridMismatchError, SpectralDomainError, SpectralOverflowError
from models import SpectralGrid


SpectralFunction = Callable[[np.ndarray], Union[np.ndarray, float]]


@dataclass(frozen=True, eq=False)
class CoefVec:
    grid: SpectralGrid
    coef: np.ndarray

    def __post_init__(self):
        arr = np.array(self.coef, dtype=float)
        if arr.ndim != 1 or arr.shape[0] != self.grid.n_modes:
            raise GridMismatchError(
                f"coefficient vector has shape {arr.shape}, grid has {self.grid.n_modes} modes"
            )
        if not np.all(np.isfinite(arr)):
            j = int(np.nonzero(~np.isfinite(arr))[0][0]) + 1
            raise SpectralDomainError(f"non-finite coefficient on mode {j}", mode=j)
        arr.setflags(write=False)
        object.__setattr__(self, "coef", arr)

    @classmethod
    def zeros(cls, grid: SpectralGrid) -> "CoefVec":
        return cls(grid, np.zeros(grid.n_modes))

    @classmethod
    def single_mode(cls, grid: SpectralGrid, j: int, value: float = 1.0) -> "CoefVec":
        if not 1 <= j <= grid.n_modes:
            raise SpectralDomainError(f"mode {j} not on a grid with {grid.n_modes} modes", mode=j)
        coef = np.zeros(grid.n_modes)
        coef[j - 1] = value
        return cls(grid, coef)

    def _check_same_grid(self, other: "CoefVec") -> None:
        if other.grid is not self.grid and other.grid != self.grid:
            raise GridMismatchError("coefficient vectors live on different spectral grids")

    def __add__(self, other: "CoefVec") -> "CoefVec":
        self._check_same_grid(other)
        return CoefVec(self.grid, self.coef + other.coef)

    def __sub__(self, other: "CoefVec") -> "CoefVec":
        self._check_same_grid(other)
        return CoefVec(self.grid, self.coef - other.coef)

    def __mul__(self, scalar: float) -> "CoefVec":
        return CoefVec(self.grid, self.coef * float(scalar))

    __rmul__ = __mul__

    def __neg__(self) -> "CoefVec":
        return CoefVec(self.grid, -self.coef)

    def __len__(self) -> int:
        return self.grid.n_modes

    def norm(self) -> float:
        """Plain H^0 (l2) norm."""
        return float(np.sqrt(np.dot(self.coef, self.coef)))

    def allclose(self, other: "CoefVec", rtol: float = 1e-12, atol: float = 0.0) -> bool:
        self._check_same_grid(other)
        return bool(np.allclose(self.coef, other.coef, rtol=rtol, atol=atol))

    # --- serialization ---

    def to_json(self) -> str:
        return "[" + ", ".join(format(float(c), ".17g") for c in self.coef) + "]"

    @classmethod
    def from_json(cls, text: str, grid: Optional[SpectralGrid] = None) -> "CoefVec":
        values = json.loads(text)
        if not isinstance(values, list):
            raise SpectralDomainError("coefficient JSON must be a single array")
        grid = grid or SpectralGrid.laplacian(len(values))
        return cls(grid, np.asarray(values, dtype=float))

    def write_csv(self, path: Union[str, Path]) -> None:
        with open(path, "w", newline="") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(["mode", "coefficient"])
            for j, c in enumerate(self.coef, start=1):
                writer.writerow([j, format(float(c), ".17g")])

    @classmethod
    def read_csv(cls, path: Union[str, Path], grid: Optional[SpectralGrid] = None) -> "CoefVec":
        with open(path, newline="") as f:
            rows = list(csv.DictReader(f))
        if not rows:
            raise SpectralDomainError(f"{path}: no coefficient rows")
        modes = [int(row["mode"]) for row in rows]
        n_modes = grid.n_modes if grid is not None else max(modes)
        coef = np.zeros(n_modes)
        for j, row in zip(modes, rows):
            if not 1 <= j <= n_modes:
                raise SpectralDomainError(f"{path}: mode {j} outside 1..{n_modes}", mode=j)
            coef[j - 1] = float(row["coefficient"])
        grid = grid or SpectralGrid.laplacian(n_modes)
        return cls(grid, coef)

    @classmethod
    def load(cls, path: Union[str, Path], grid: Optional[SpectralGrid] = None) -> "CoefVec":
        path = Path(path)
        if path.suffix == ".csv":
            return cls.read_csv(path, grid)
        return cls.from_json(path.read_text(), grid)

    def save(self, path: Union[str, Path]) -> None:
        path = Path(path)
        if path.suffix == ".csv":
            self.write_csv(path)
        else:
            path.write_text(self.to_json() + "\n")


def _first_bad_mode(values: np.ndarray) -> int:
    return int(np.nonzero(~np.isfinite(values))[0][0]) + 1


def hs_norm(v: CoefVec, s: float) -> float:
    """
    Norm of the H^s scale: sqrt(sum_j (1 + lambda_j^2)^s v_j^2).
    Negative s gives the duality-scale value with the same formula.
    """
    lam = v.grid.values
    with np.errstate(over="ignore", invalid="ignore", under="ignore"):
        weights = np.power(1.0 + lam * lam, s)
        terms = weights * v.coef * v.coef
    # a zero coefficient contributes nothing whatever its weight
    terms = np.where(v.coef == 0.0, 0.0, terms)
    if not np.all(np.isfinite(terms)):
        j = _first_bad_mode(terms)
        raise SpectralOverflowError(
            f"H^{s} norm overflows on mode {j} (weight (1+lambda^2)^s with lambda={lam[j - 1]})",
            mode=j,
        )
    with np.errstate(over="ignore"):
        total = float(np.sum(terms))
    if not math.isfinite(total):
        raise SpectralOverflowError(f"H^{s} norm overflows summing {v.grid.n_modes} modes")
    if total == 0.0 and np.any(v.coef != 0.0):
        j = int(np.nonzero(v.coef)[0][0]) + 1
        raise SpectralDomainError(
            f"H^{s} norm underflows to 0 for a nonzero vector (first nonzero mode {j})", mode=j
        )
    return math.sqrt(total)


def eval_spectral(grid: SpectralGrid, g: SpectralFunction) -> np.ndarray:
    """Evaluate g on every eigenvalue of the grid, refusing non-finite values."""
    lam = grid.values
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        values = np.broadcast_to(np.asarray(g(lam), dtype=float), lam.shape)
    if not np.all(np.isfinite(values)):
        j = _first_bad_mode(values)
        raise SpectralDomainError(
            f"spectral function is not finite at lambda={lam[j - 1]} (mode {j})", mode=j
        )
    return values


def apply_spectral_function(v: CoefVec, g: SpectralFunction) -> CoefVec:
    """
    Functional calculus on the retained modes: (g(Lambda) v)_j = g(lambda_j) v_j.
    g receives the eigenvalue array and may return an array or a scalar.
    """
    values = eval_spectral(v.grid, g)
    with np.errstate(over="ignore", invalid="ignore"):
        out = values * v.coef
    if not np.all(np.isfinite(out)):
        j = _first_bad_mode(out)
        raise SpectralOverflowError(f"spectral product overflows on mode {j}", mode=j)
    return CoefVec(v.grid, out)


def synthesize(v: CoefVec, points: Union[Sequence[float], Iterable[float]]) -> np.ndarray:
    """Point values of sum_j v_j sin(j t) on (-pi, pi)."""
    t = np.asarray(list(points) if not isinstance(points, np.ndarray) else points, dtype=float)
    if t.size and not np.all(np.isfinite(t)):
        raise SpectralDomainError("sample points must be finite")
    if t.size and (np.any(t <= -math.pi) or np.any(t >= math.pi)):
        raise SpectralDomainError("sample points must lie strictly inside (-pi, pi)")
    return np.sin(np.outer(t, v.grid.modes)) @ v.coef
