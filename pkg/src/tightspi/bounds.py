"""Sample-size thresholds and admissible performance losses.

Each family pairs a loss ``zeta_*(params, n)`` (the guaranteed performance
gap when every non-bootstrapped pair has more than ``n`` samples) with its
inverse ``nmin_*(params, zeta)``. The families differ in the concentration
inequality behind the per-pair error:

* ``spi`` / ``spibb``: L1 deviation of a full successor row, whose log term
  carries ``|S| ln 2``;
* ``2s``: the same inequality on two-successor rows, spread over
  ``|S|^2 |A|^2`` pairs;
* ``beta``: the width of a central Beta posterior interval for a single
  Bernoulli parameter, again per two-successor pair.

Logs are natural; ``2^|S|`` is always handled as ``|S| ln 2``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

from .errors import DomainError, Infeasible, InvalidParameters
from .special import inv_reg_inc_beta, reg_inc_beta

CEIL_SLACK = 1e-12

__all__ = [
    "BoundParams",
    "BetaPrior",
    "log_term_spibb",
    "log_term_2s",
    "zeta_spi",
    "nmin_spi",
    "zeta_spibb",
    "nmin_spibb",
    "zeta_2s",
    "nmin_2s",
    "interval_width",
    "width_at_most",
    "zeta_beta",
    "nmin_beta",
    "nmin_ksucc",
    "convert_nmin",
    "all_nmin",
]


@dataclass(frozen=True)
class BoundParams:
    n_states: int
    n_actions: int
    v_max: float = 1.0
    gamma: float = 0.95
    delta: float = 0.1
    rho_tilde: float = 0.0

    def __post_init__(self):
        if self.n_states < 1 or self.n_actions < 1:
            raise InvalidParameters("state and action counts must be at least 1")
        if not 0 < self.gamma < 1:
            raise InvalidParameters(f"gamma={self.gamma} outside (0, 1)")
        if not 0 < self.delta < 1:
            raise InvalidParameters(f"delta={self.delta} outside (0, 1)")
        if not self.v_max > 0:
            raise InvalidParameters("v_max must be positive")

    @property
    def delta_pairs(self) -> float:
        """Per-pair confidence budget ``delta / (|S|^2 |A|^2)``."""
        return self.delta / (self.n_states**2 * self.n_actions**2)

    def with_(self, **kw) -> "BoundParams":
        return replace(self, **kw)


@dataclass(frozen=True)
class BetaPrior:
    alpha1: float = 1.0
    alpha2: float = 1.0

    def __post_init__(self):
        if not (self.alpha1 > 0 and self.alpha2 > 0):
            raise DomainError("prior parameters must be positive")


def _ceil(x: float) -> int:
    # Formula values that land on an integer up to rounding count as that integer.
    return int(math.ceil(x * (1.0 - CEIL_SLACK)))


def _check_n(n: float) -> None:
    if not n >= 1:
        raise DomainError(f"sample threshold must be >= 1, got {n}")


def _check_zeta(zeta: float, offset: float = 0.0) -> float:
    gap = zeta - offset
    if not gap > 0:
        raise DomainError(f"zeta={zeta} must exceed rho_tilde={offset}")
    return gap


def log_term_spibb(p: BoundParams) -> float:
    """``ln(2 |S| |A| 2^|S| / delta)``."""
    return math.log(2.0 * p.n_states * p.n_actions / p.delta) + p.n_states * math.log(2.0)


def log_term_2s(p: BoundParams) -> float:
    """``ln(8 |S|^2 |A|^2 / delta)``."""
    return math.log(8.0 * p.n_states**2 * p.n_actions**2 / p.delta)


def _scale(p: BoundParams) -> float:
    return p.v_max / (1.0 - p.gamma)


# -- SPI ------------------------------------------------------------------------
def zeta_spi(p: BoundParams, n_wedge: float) -> float:
    _check_n(n_wedge)
    return 2.0 * p.gamma * _scale(p) * math.sqrt(2.0 * log_term_spibb(p) / n_wedge)


def nmin_spi(p: BoundParams, zeta: float) -> int:
    _check_zeta(zeta)
    return _ceil(8.0 * _scale(p) ** 2 * log_term_spibb(p) / zeta**2)


# -- SPIBB / 2s -------------------------------------------------------------------
def _zeta_l1(p: BoundParams, n_wedge: float, log_term: float) -> float:
    _check_n(n_wedge)
    return 4.0 * _scale(p) * math.sqrt(2.0 * log_term / n_wedge) + p.rho_tilde


def _nmin_l1(p: BoundParams, zeta: float, log_term: float) -> int:
    gap = _check_zeta(zeta, p.rho_tilde)
    return _ceil(32.0 * _scale(p) ** 2 * log_term / gap**2)


def zeta_spibb(p: BoundParams, n_wedge: float) -> float:
    return _zeta_l1(p, n_wedge, log_term_spibb(p))


def nmin_spibb(p: BoundParams, zeta: float) -> int:
    return _nmin_l1(p, zeta, log_term_spibb(p))


def zeta_2s(p: BoundParams, n_wedge: float) -> float:
    return _zeta_l1(p, n_wedge, log_term_2s(p))


def nmin_2s(p: BoundParams, zeta: float) -> int:
    return _nmin_l1(p, zeta, log_term_2s(p))


def nmin_ksucc(p: BoundParams, zeta: float, k: int) -> int:
    """Threshold when every row is rewritten to at most ``k`` successors."""
    if k < 2 or int(k) != k:
        raise DomainError(f"k must be an integer >= 2, got {k}")
    gap = _check_zeta(zeta, p.rho_tilde)
    log_term = (
        math.log(2.0 * p.n_states**2 * p.n_actions**2 / ((k - 1) * p.delta))
        + k * math.log(2.0)
    )
    return _ceil(32.0 * _scale(p) ** 2 * log_term / gap**2)


# -- Beta -------------------------------------------------------------------------
def _beta_shape(n: float, prior: BetaPrior | None) -> float:
    if prior is None:
        return n / 2.0 + 1.0
    return (n + prior.alpha1 + prior.alpha2) / 2.0


def interval_width(n: float, delta_t: float, prior: BetaPrior | None = None) -> float:
    """Width ``1 - 2 I^{-1}_{delta_t/2}(c, c)`` of the central posterior interval.

    ``c = n/2 + 1`` for the uniform prior and ``(n + a1 + a2)/2`` otherwise;
    ``n/2`` is kept real-valued for odd ``n``.
    """
    if n < 0:
        raise DomainError(f"n must be nonnegative, got {n}")
    if not 0 < delta_t < 1:
        raise DomainError(f"delta_t={delta_t} outside (0, 1)")
    c = _beta_shape(n, prior)
    return 1.0 - 2.0 * inv_reg_inc_beta(delta_t / 2.0, c, c)


def width_at_most(n: float, delta_t: float, target: float, prior: BetaPrior | None = None) -> bool:
    """``interval_width(n, delta_t) <= target`` without inverting ``I``.

    The lower quantile ``q`` satisfies ``1 - 2q <= target`` exactly when
    ``I_{(1-target)/2}(c, c) <= delta_t / 2``.
    """
    if target >= 1.0:
        return True
    if target <= 0.0:
        return False
    c = _beta_shape(n, prior)
    return reg_inc_beta((1.0 - target) / 2.0, c, c) <= delta_t / 2.0


def zeta_beta(p: BoundParams, n_wedge: float, prior: BetaPrior | None = None) -> float:
    if n_wedge < 0:
        raise DomainError(f"sample threshold must be >= 0, got {n_wedge}")
    return 4.0 * _scale(p) * interval_width(n_wedge, p.delta_pairs, prior) + p.rho_tilde


def _least_n(ok, hi: int) -> int:
    """Smallest ``n`` in ``[0, hi]`` with ``ok(n)``, for monotone ``ok``."""
    if ok(0):
        return 0
    if not ok(hi):
        # defensive fallback; the upper bracket is expected to hold
        lo = hi
        while not ok(hi):
            lo, hi = hi, hi * 2
            if hi > 1 << 62:
                raise Infeasible("no sample size satisfies the width target")
    else:
        lo = 0
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if ok(mid):
            hi = mid
        else:
            lo = mid
    return hi


def nmin_beta(p: BoundParams, zeta: float, prior: BetaPrior | None = None) -> int:
    """Least ``n`` with ``zeta_beta(p, n) <= zeta`` (binary search up to ``nmin_2s``)."""
    gap = _check_zeta(zeta, p.rho_tilde)
    target = gap / (4.0 * _scale(p))
    hi = max(nmin_2s(p, zeta), 1)
    return _least_n(lambda n: width_at_most(n, p.delta_pairs, target, prior), hi)


# -- conversion at matched loss -----------------------------------------------------
def convert_nmin(p: BoundParams, n_spibb: int, target: str) -> int:
    """Threshold for ``target`` giving the same loss as SPIBB run with ``n_spibb``.

    The correction ``rho_tilde`` appears on both sides and cancels, so only
    the concentration terms are matched; the result does not depend on
    ``v_max`` or ``gamma``.
    """
    _check_n(n_spibb)
    l_spibb = log_term_spibb(p)
    if target == "2s":
        return _ceil(n_spibb * log_term_2s(p) / l_spibb)
    if target == "beta":
        width = math.sqrt(2.0 * l_spibb / n_spibb)
        hi = max(_ceil(n_spibb * log_term_2s(p) / l_spibb), 1)
        return _least_n(lambda n: width_at_most(n, p.delta_pairs, width), hi)
    if target == "spibb":
        return int(n_spibb)
    raise DomainError(f"unknown conversion target {target!r}")


def all_nmin(p: BoundParams, zeta: float) -> dict[str, int]:
    return {
        "n_spi": nmin_spi(p, zeta),
        "n_spibb": nmin_spibb(p, zeta),
        "n_2s": nmin_2s(p, zeta),
        "n_beta": nmin_beta(p, zeta),
    }
