"""
Price levels of the adaptive adversaries: the number of levels each construction uses and the
bundle-size schedule shared by the bundle-based constructions.
"""

import math
from dataclasses import dataclass

from trading_bench.core.helper import is_power_of_two, log_base, smallest_power_of_two_above

CONSTRUCTIONS = ("logv", "logd", "smallv", "smalld")


def _check_eps(eps):
    if not 0 < eps <= 1:
        raise ValueError(f"Augmentation eps must lie in (0, 1], but got eps = {eps}")


def log_levels(bound, eps):
    r"""
    Number of price levels c of the value and bundle-size attacks.

    Returns
    -------
    `int`
        :math:`c = \lfloor \frac{1}{2}\log_{1+\varepsilon} B \rfloor - 1` for the bound B (v or d).
    """
    _check_eps(eps)
    return int(math.floor(log_base(bound, 1 + eps) / 2)) - 1


def small_inventory_cap(v, eps):
    r"""Largest cap w of the small-inventory regime: :math:`\lfloor -1 + \frac{1}{2}\log_{1+\varepsilon} v \rfloor`."""
    return log_levels(v, eps)


def check_log_v(v, eps):
    """Validates the value attack's parameters and returns c."""
    _check_eps(eps)
    if v < (1 + eps) ** 8 * (1 - 1e-12):
        raise ValueError(f"The value attack needs v >= (1+eps)^8 = {(1 + eps) ** 8:.6g}, but got v = {v}")
    c = log_levels(v, eps)
    if c < 3:
        raise ValueError(f"The value attack needs at least 3 levels, but v = {v}, eps = {eps} give c = {c}")
    return c


def check_log_d(d, eps):
    """Validates the bundle-size attack's parameters and returns c."""
    _check_eps(eps)
    if not is_power_of_two(d):
        raise ValueError(f"The bundle-size attack needs d to be a power of 2, but got d = {d}")
    if d < (1 + eps) ** 8 * (1 - 1e-12):
        raise ValueError(f"The bundle-size attack needs d >= (1+eps)^8 = {(1 + eps) ** 8:.6g}, but got d = {d}")
    c = log_levels(d, eps)
    if c < 3:
        raise ValueError(f"The bundle-size attack needs at least 3 levels, but d = {d}, eps = {eps} give c = {c}")
    return c


@dataclass(frozen=True)
class Level:
    """One price level: unit price `x`, bundle size `d`, bundle value `v` = x d and its raised counterparts."""
    exponent: int
    x: float
    d: int
    v: float
    x_raised: float
    v_raised: float


@dataclass(frozen=True)
class LevelSchedule:
    r"""
    Levels :math:`\ell = 0, \dots, L-1`, level :math:`\ell` at exponent :math:`\ell + 1`:
    :math:`x_\ell = (1+\varepsilon)^{-2(\ell+1)}`, :math:`d_\ell` the smallest power of 2 above
    :math:`1/x_\ell`, :math:`v_\ell = x_\ell d_\ell \in [1, 2]`, :math:`x'_\ell = (1+\varepsilon)^2 x_\ell`
    and :math:`v'_\ell = x'_\ell d_\ell \in [1, 8]`.
    """
    eps: float
    levels: tuple

    @staticmethod
    def at_exponent(eps, k):
        """Level with unit price (1+eps)^(-2k)."""
        _check_eps(eps)
        x = (1 + eps) ** (-2 * k)
        d = smallest_power_of_two_above(1 / x)
        x_raised = (1 + eps) ** 2 * x
        return Level(exponent=k, x=x, d=d, v=x * d, x_raised=x_raised, v_raised=x_raised * d)

    @classmethod
    def build(cls, eps, num_levels):
        return cls(eps=eps, levels=tuple(cls.at_exponent(eps, level + 1) for level in range(num_levels)))

    def __len__(self):
        return len(self.levels)

    def __getitem__(self, level):
        return self.levels[level]

    @property
    def sizes(self):
        return [level.d for level in self.levels]

    def validate(self):
        """
        Lists the schedule's broken properties (empty when sizes are nondecreasing powers of 2 and
        values lie in [1, 2] and raised values in [1, 8]).
        """
        problems = []
        for index, level in enumerate(self.levels):
            if not is_power_of_two(level.d):
                problems.append(f"d at level {index} is {level.d}, not a power of 2")
            if not 1 <= level.v <= 2 * (1 + 1e-12):
                problems.append(f"v at level {index} is {level.v}, outside [1, 2]")
            if not 1 <= level.v_raised <= 8 * (1 + 1e-12):
                problems.append(f"raised v at level {index} is {level.v_raised}, outside [1, 8]")
            if index and level.d < self.levels[index - 1].d:
                problems.append(f"d decreases from level {index - 1} to level {index}")
        return problems
