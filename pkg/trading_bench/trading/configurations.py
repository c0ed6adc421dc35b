"""
Parameter formulas for the trading engines: the known-valuation engine's (mu, eta), the truthful mechanism's
inflated (mu, eta, delta), and the distribution of the random price shift rho.
"""

import math
from dataclasses import dataclass

import numpy as np

CUSTOMER_RULES = ("floored", "standard")


@dataclass(frozen=True)
class EngineParams:
    r"""
    Parameters of the exponential inventory pricing rule.

    Attributes
    ----------
    mu : `float`
        Price scale :math:`\mu \geq 1`.
    eta : `float`
        Exponent scale; must satisfy :math:`\eta \geq 1 + \ln(1 + v d \mu)`.
    eps : `float`
        Supplier augmentation, in (0, 1].
    v : `float`
        Declared upper bound on customer bundle values (at least 1).
    d : `int`
        Declared upper bound on customer bundle sizes (at least 1).
    customer_rule : {"floored", "standard"}
        Customer utility used to pick and accept a bundle.
            - "floored" uses :math:`v_s - \max\{1, p_s\}` (never sells for less than 1).
            - "standard" uses :math:`v_s - p_s`.

    """
    mu: float
    eta: float
    eps: float
    v: float
    d: int
    customer_rule: str = "floored"

    def __post_init__(self):
        object.__setattr__(self, "mu", float(self.mu))
        object.__setattr__(self, "eta", float(self.eta))
        object.__setattr__(self, "eps", float(self.eps))
        object.__setattr__(self, "v", float(self.v))
        object.__setattr__(self, "d", int(self.d))
        check_domain(self.v, self.d, self.eps)
        if self.mu < 1:
            raise ValueError(f"Engine parameter mu must be at least 1, but got {self.mu}")
        eta_min = 1 + math.log1p(self.v * self.d * self.mu)
        if self.eta < eta_min * (1 - 1e-12):
            raise ValueError(f"Engine parameter eta = {self.eta} is below the admissible minimum "
                             f"1 + ln(1 + v*d*mu) = {eta_min} for v = {self.v}, d = {self.d}, mu = {self.mu}")
        if self.customer_rule not in CUSTOMER_RULES:
            raise ValueError(f"Invalid customer rule {self.customer_rule!r}; acceptable are {CUSTOMER_RULES}")


def check_domain(v, d, eps):
    """Raise `ValueError` unless v >= 1, d >= 1 and 0 < eps <= 1."""
    if not v >= 1:
        raise ValueError(f"Value bound v must be at least 1 (values are normalized so the smallest is 1), "
                         f"but got v = {v}")
    if not d >= 1:
        raise ValueError(f"Bundle size bound d must be a positive integer, but got d = {d}")
    if not 0 < eps <= 1:
        raise ValueError(f"Augmentation eps must lie in (0, 1], but got eps = {eps}")


def default_params(v, d, eps, customer_rule="floored"):
    """Known-valuation engine parameters: mu = 1 and eta = 1 + ln(1 + v*d)."""
    check_domain(v, d, eps)
    return EngineParams(mu=1., eta=1 + math.log1p(v * d), eps=eps, v=v, d=d, customer_rule=customer_rule)


def truthful_params(v, d, eps):
    r"""
    Parameters of the incentive-compatible mechanism.

    Returns
    -------
    `EngineParams`
        :math:`\mu = (32/\varepsilon)(1 + \ln v)` and :math:`\eta = 32(1 + \ln(1 + d v \mu))`, floored
        customer rule.

    Notes
    -----
    These make :math:`e^\eta` very large even for moderate v and d; prices overflow double precision once
    :math:`(1 - r/w)\eta > 700`, which `trading_bench.trading.pricing.prices` reports as a numerical failure.

    """
    check_domain(v, d, eps)
    mu = 32 / eps * (1 + math.log(v))
    eta = 32 * (1 + math.log1p(d * v * mu))
    return EngineParams(mu=mu, eta=eta, eps=eps, v=v, d=d, customer_rule="floored")


@dataclass(frozen=True)
class RhoDistribution:
    """Finite distribution of the price shift rho: `values[k]` is drawn with probability `probabilities[k]`."""
    delta: float
    values: tuple
    probabilities: tuple

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(float(value) for value in self.values))
        object.__setattr__(self, "probabilities", tuple(float(prob) for prob in self.probabilities))
        if len(self.values) != len(self.probabilities):
            raise ValueError("RhoDistribution needs one probability per value")
        total = math.fsum(self.probabilities)
        if abs(total - 1) > 1e-12 or min(self.probabilities) < 0:
            raise ValueError(f"Rho probabilities must be nonnegative and sum to 1, but sum to {total}")

    @property
    def J(self):  # noqa
        """Largest dyadic exponent in the support."""
        return len(self.values) - 2

    def support(self):
        return list(zip(self.values, self.probabilities))


def rho_distribution(v, eps, delta=None):
    r"""
    Distribution of the random shift :math:`\rho` added to customer prices.

    Parameters
    ----------
    v : `float`
        Declared value bound.
    eps : `float`
        Augmentation parameter.
    delta : `float`, optional
        Overrides :math:`\delta = \varepsilon/8`; tests use 0 to switch the shift off.

    Returns
    -------
    `RhoDistribution`
        :math:`\rho = 0` with probability :math:`1-\delta` and :math:`\rho = 2^j` with probability
        :math:`\delta/(1+J)` for :math:`j = 0, \dots, J`, where :math:`J = \lfloor \log_2 v \rfloor`.

    Notes
    -----
    The exponent bound uses the base-2 logarithm so that the thresholds :math:`2^j` cover every gap
    :math:`v - \max\{1, P\} \leq v` dyadically; the expected-revenue bound relies on that cover.
    """
    check_domain(v, 1, eps)
    delta = eps / 8 if delta is None else float(delta)
    if not 0 <= delta <= 1:
        raise ValueError(f"delta must lie in [0, 1], but got {delta}")
    J = int(np.floor(np.log2(v) + 1e-12))  # noqa
    values = [0.] + [float(2 ** j) for j in range(J + 1)]
    probabilities = [1 - delta] + [delta / (1 + J)] * (J + 1)
    return RhoDistribution(delta=delta, values=tuple(values), probabilities=tuple(probabilities))
