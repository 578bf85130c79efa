"""Problem instances and reference frontiers.

An :class:`Instance` bundles the asset universe (expected returns and the
covariance matrix) with the selection constraints: at most ``max_assets``
assets may be held, and each held asset's fraction must lie in
``[min_frac[i], max_frac[i]]``.

Instances are read from the OR-Library "port" format::

    n
    r_1 sd_1
    ...
    r_n sd_n
    i j rho_ij     (one line per pair, 1-based, i <= j, all pairs present)

The covariance is reconstructed as ``sigma_ij = rho_ij * sd_i * sd_j``.
Constraint parameters are not part of the file and default to
``min_frac = 0.01``, ``max_frac = 1`` and ``max_assets = 10``.

Reference (unconstrained) frontiers are plain two-column text files, one
``R V`` pair per line.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from .errors import (
    IncompleteMatrixError,
    InfeasibleError,
    ParseError,
    ValidationError,
)

DEFAULT_MIN_FRAC = 0.01
DEFAULT_MAX_FRAC = 1.0
DEFAULT_MAX_ASSETS = 10

#: Correlations within this distance of +-1 are clamped instead of rejected.
RHO_SLACK = 1e-9

#: A desired expected return, in the same units as the per-asset returns.
TargetReturn = float


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=np.float64)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Instance:
    """An asset universe plus selection constraints (immutable)."""

    returns: np.ndarray
    cov: np.ndarray
    min_frac: np.ndarray
    max_frac: np.ndarray
    max_assets: int

    @property
    def n(self) -> int:
        return self.returns.shape[0]

    def __post_init__(self):
        object.__setattr__(self, "returns", _readonly(self.returns))
        object.__setattr__(self, "cov", _readonly(self.cov))
        object.__setattr__(self, "min_frac", _readonly(self.min_frac))
        object.__setattr__(self, "max_frac", _readonly(self.max_frac))
        self._validate()

    def _validate(self) -> None:
        n = self.n
        if n < 1:
            raise ValidationError("instance needs at least one asset")
        if self.cov.shape != (n, n):
            raise ValidationError(f"covariance must be {n}x{n}, got {self.cov.shape}")
        if self.min_frac.shape != (n,) or self.max_frac.shape != (n,):
            raise ValidationError("fraction bounds must have one entry per asset")
        if not np.array_equal(self.cov, self.cov.T):
            raise ValidationError("covariance matrix is not symmetric")
        if np.any(np.diag(self.cov) < 0):
            raise ValidationError("covariance diagonal has negative entries")
        if np.any(self.min_frac < 0) or np.any(self.max_frac > 1):
            raise ValidationError("fraction bounds must lie within [0, 1]")
        if np.any(self.min_frac > self.max_frac):
            raise ValidationError("min fraction exceeds max fraction for some asset")
        if not (1 <= self.max_assets <= n):
            raise ValidationError(f"max_assets must be in [1, {n}], got {self.max_assets}")
        if not self._cardinality_feasible():
            raise InfeasibleError(
                "no subset of at most max_assets assets can satisfy the "
                "fraction bounds with total weight 1"
            )

    def _cardinality_feasible(self) -> bool:
        # Need some S with |S| <= k, sum(min_frac[S]) <= 1 <= sum(max_frac[S]).
        # Two greedy candidate orders cover all practical bound patterns.
        k = self.max_assets
        for order in (np.argsort(-self.max_frac, kind="stable"),
                      np.argsort(self.min_frac, kind="stable")):
            lo = np.cumsum(self.min_frac[order[:k]])
            hi = np.cumsum(self.max_frac[order[:k]])
            if np.any((lo <= 1.0) & (hi >= 1.0)):
                return True
        return False

    def with_constraints(
        self,
        *,
        max_assets: int | None = None,
        min_frac: float | Sequence[float] | None = None,
        max_frac: float | Sequence[float] | None = None,
    ) -> "Instance":
        """Copy of this instance with some constraint parameters replaced.

        Scalar ``min_frac``/``max_frac`` apply uniformly to all assets.
        """
        kw = {}
        if max_assets is not None:
            kw["max_assets"] = max_assets
        if min_frac is not None:
            kw["min_frac"] = np.broadcast_to(np.asarray(min_frac, dtype=np.float64), (self.n,)).copy()
        if max_frac is not None:
            kw["max_frac"] = np.broadcast_to(np.asarray(max_frac, dtype=np.float64), (self.n,)).copy()
        return replace(self, **kw)


@dataclass(frozen=True)
class UefReference:
    """Reference frontier: (return, variance) pairs, ascending in return."""

    returns: np.ndarray
    variances: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "returns", _readonly(self.returns))
        object.__setattr__(self, "variances", _readonly(self.variances))
        if self.returns.ndim != 1 or self.returns.shape != self.variances.shape:
            raise ValidationError("reference frontier arrays must be 1-d and equal length")
        if self.returns.size == 0:
            raise ValidationError("reference frontier is empty")
        if np.any(np.diff(self.returns) <= 0):
            raise ValidationError("reference returns must be strictly increasing")
        if np.any(self.variances <= 0):
            raise ValidationError("reference variances must be positive")

    def __len__(self) -> int:
        return self.returns.size

    def mean_variance(self) -> float:
        return float(np.mean(self.variances))


def _tokens_with_lines(text: str) -> Iterator[tuple[str, int]]:
    for lineno, line in enumerate(text.splitlines(), start=1):
        for tok in line.split():
            yield tok, lineno


class _TokenReader:
    def __init__(self, text: str):
        self._it = _tokens_with_lines(text)
        self.line = 0

    def next(self, what: str) -> str:
        try:
            tok, self.line = next(self._it)
        except StopIteration:
            raise ParseError(f"unexpected end of input, expected {what}",
                             self.line or None) from None
        return tok

    def next_or_none(self) -> str | None:
        try:
            tok, self.line = next(self._it)
        except StopIteration:
            return None
        return tok

    def next_int(self, what: str) -> int:
        tok = self.next(what)
        try:
            return int(tok)
        except ValueError:
            raise ParseError(f"expected integer {what}, got {tok!r}", self.line) from None

    def next_float(self, what: str) -> float:
        tok = self.next(what)
        return self._as_float(tok, what)

    def _as_float(self, tok: str, what: str) -> float:
        try:
            value = float(tok)
        except ValueError:
            raise ParseError(f"expected number {what}, got {tok!r}", self.line) from None
        if not np.isfinite(value):
            raise ParseError(f"non-finite value {what}: {tok!r}", self.line)
        return value


def parse_instance(
    text: str,
    *,
    min_frac: float | Sequence[float] = DEFAULT_MIN_FRAC,
    max_frac: float | Sequence[float] = DEFAULT_MAX_FRAC,
    max_assets: int | None = None,
) -> Instance:
    """Parse an OR-Library style instance file.

    The file stores per-asset mean returns and standard deviations followed
    by the full upper triangle of the correlation matrix (diagonal included).
    Constraint parameters are supplied by the caller, not the file;
    ``max_assets`` defaults to 10, capped at the universe size.
    """
    rd = _TokenReader(text)
    n = rd.next_int("asset count")
    if n < 1:
        raise ParseError(f"asset count must be positive, got {n}", rd.line)

    returns = np.empty(n)
    sd = np.empty(n)
    for i in range(n):
        returns[i] = rd.next_float(f"return of asset {i + 1}")
        sd[i] = rd.next_float(f"standard deviation of asset {i + 1}")
        if sd[i] < 0:
            raise ValidationError(f"negative standard deviation for asset {i + 1}")

    cov = np.zeros((n, n))
    seen = np.zeros((n, n), dtype=bool)
    while True:
        tok = rd.next_or_none()
        if tok is None:
            break
        try:
            i = int(tok)
        except ValueError:
            raise ParseError(f"expected asset index, got {tok!r}", rd.line) from None
        j = rd.next_int("asset index")
        rho = rd.next_float(f"correlation of pair ({i}, {j})")
        if not (1 <= i <= n and 1 <= j <= n):
            raise ParseError(f"asset index out of range in pair ({i}, {j})", rd.line)
        if abs(rho) > 1.0 + RHO_SLACK:
            raise ValidationError(f"correlation of pair ({i}, {j}) is {rho}, outside [-1, 1]")
        rho = min(1.0, max(-1.0, rho))
        a, b = i - 1, j - 1
        if seen[a, b]:
            raise ParseError(f"duplicate correlation entry for pair ({i}, {j})", rd.line)
        seen[a, b] = seen[b, a] = True
        if a == b and rho < 0:
            raise ValidationError(f"negative self-correlation for asset {i}")
        s = rho * sd[a] * sd[b]
        cov[a, b] = cov[b, a] = s

    missing = int(n * (n + 1) // 2 - np.count_nonzero(np.triu(seen)))
    if missing:
        raise IncompleteMatrixError(f"{missing} correlation pair(s) missing from the file")

    if max_assets is None:
        max_assets = min(DEFAULT_MAX_ASSETS, n)
    return Instance(
        returns=returns,
        cov=cov,
        min_frac=np.broadcast_to(np.asarray(min_frac, dtype=np.float64), (n,)).copy(),
        max_frac=np.broadcast_to(np.asarray(max_frac, dtype=np.float64), (n,)).copy(),
        max_assets=max_assets,
    )


def serialize_instance(inst: Instance) -> str:
    """Render the fields stored by the file format back to text.

    Floats are written with 17 significant digits so that parsing the
    result recovers them (up to one rounding in the sd/correlation split).
    """
    sd = np.sqrt(np.diag(inst.cov))
    lines = [str(inst.n)]
    for r, s in zip(inst.returns, sd):
        lines.append(f"{r:.17g} {s:.17g}")
    for i in range(inst.n):
        for j in range(i, inst.n):
            denom = sd[i] * sd[j]
            if denom > 0:
                rho = inst.cov[i, j] / denom
            else:
                rho = 1.0 if i == j else 0.0
            lines.append(f"{i + 1} {j + 1} {rho:.17g}")
    return "\n".join(lines) + "\n"


def parse_uef(text: str) -> UefReference:
    """Parse a reference frontier file: one ``R V`` pair per line."""
    rd = _TokenReader(text)
    rets: list[float] = []
    vars_: list[float] = []
    while True:
        tok = rd.next_or_none()
        if tok is None:
            break
        rets.append(rd._as_float(tok, "frontier return"))
        vars_.append(rd.next_float("frontier variance"))
    if not rets:
        raise ParseError("reference frontier file is empty")
    order = np.argsort(np.asarray(rets), kind="stable")
    r = np.asarray(rets)[order]
    v = np.asarray(vars_)[order]
    if np.any(np.diff(r) == 0):
        raise ValidationError("duplicate return value in reference frontier")
    return UefReference(returns=r, variances=v)


def return_grid(uef: UefReference) -> np.ndarray:
    """Target returns to solve for: the reference frontier's abscissae."""
    return uef.returns.copy()


def validate_target_return(inst: Instance, r_target: float) -> None:
    """Reject target returns no portfolio can reach.

    Values below every asset's return are accepted: the constraint is then
    slack for any portfolio.
    """
    hi = float(np.max(inst.returns))
    if r_target > hi:
        raise ValidationError(
            f"target return {r_target} exceeds the best achievable return {hi}"
        )


def load_instance(path: str | Path, **constraints) -> Instance:
    return parse_instance(Path(path).read_text(), **constraints)


def load_uef(path: str | Path) -> UefReference:
    return parse_uef(Path(path).read_text())
