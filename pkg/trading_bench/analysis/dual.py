"""
Dual fitting for the trading LP: builds the dual solution from an engine trace, checks its feasibility
constraint by constraint, checks the per-step potential inequalities of the price rule, and reports the dual
objective as an upper bound on the augmented offline optimum.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from trading_bench.configurations import TAU
from trading_bench.core.helper import weighted_kl
from trading_bench.core.types import EventKind, Violation

CUSTOMER_COVER = "customer cover"
SUPPLIER_COVER = "supplier cover"
PRICE_INCREASE = "price increase"
NONNEGATIVITY = "nonnegativity"
NO_TRADE_PRICES = "no-trade prices"


@dataclass(frozen=True)
class DualSolution:
    r"""
    Dual variables fitted from a trace.

    Attributes
    ----------
    x : `numpy.ndarray`
        (T+1) x n prices; row t is the price vector after step t (row 0 is the initial price vector).
    ell : `numpy.ndarray`
        T x n price-increase charges.
    alpha : `numpy.ndarray`
        Length-T customer variables (0 at supplier steps).
    beta : `numpy.ndarray`
        Length-T supplier variables (0 at customer steps).
    w : `numpy.ndarray`
        Inventory caps, the weights of `ell` in the objective.
    objective : `float`
        :math:`\sum_t \sum_i w_i \ell_i^t + \sum_t \alpha^t + \sum_t \beta^t`.
    """
    x: np.ndarray
    ell: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray
    w: np.ndarray
    objective: float


@dataclass
class VerificationReport:
    """Number of constraints checked and the list of those that failed."""
    checked: int = 0
    violations: list = field(default_factory=list)

    @property
    def ok(self):
        return len(self.violations) == 0

    def extend(self, other):
        self.checked += other.checked
        self.violations.extend(other.violations)
        return self

    def to_json(self):
        return {"checked": self.checked,
                "violations": [{"constraint": violation.constraint, "t": violation.t, "s": violation.s,
                                "i": violation.i, "slack": violation.slack, "message": violation.message}
                               for violation in self.violations]}


@dataclass(frozen=True)
class DualGap:
    """Certified ratio witness: dual objective over the run's profit, raw and divided by eta/eps."""
    objective: float
    profit: float
    ratio: float
    eta_over_eps: float
    normalized: float
    degenerate: bool


def _tolerances(tau, *arrays):
    scale = np.max(np.abs(np.stack(np.broadcast_arrays(*arrays))), axis=0)
    return np.maximum(tau, tau * scale)


def fit_dual(trace):
    """
    Constructs the dual solution from a trace.

    Prices are read from the trace; ell is the positive part of each step's price change; alpha is the chosen
    value at steps where inventory was sold; beta is P - (1+eps) v at steps where the engine bought.

    Parameters
    ----------
    trace : `trading_bench.core.types.Trace`
        From `pricing.run` or `truthful.run_truthful`; only the inventory-driven quantities are used.

    Returns
    -------
    `DualSolution`

    Raises
    ------
    `ValueError`
        If some step lacks price vectors of the catalog's dimension.
    """
    n = trace.instance.n
    for step in trace.steps:
        if len(step.x_before) != n or len(step.x_after) != n:
            raise ValueError(f"Trace step {step.t} has price vectors of length {len(step.x_before)} and "
                             f"{len(step.x_after)}, but the catalog has {n} item types; the dual needs the full "
                             f"price trajectory")
    x = trace.x_matrix()
    num_steps = len(trace.steps)
    ell = np.maximum(0., np.diff(x, axis=0)) if num_steps else np.zeros((0, n))
    alpha = np.zeros(num_steps)
    beta = np.zeros(num_steps)
    eps = trace.params.eps
    for t, step in enumerate(trace.steps):
        if step.sold:
            alpha[t] = step.value
        elif step.bought:
            beta[t] = step.P - (1 + eps) * step.value
    w = np.array(trace.instance.catalog.w, dtype=float)
    objective = float(np.sum(ell @ w) + np.sum(alpha) + np.sum(beta))
    return DualSolution(x=x, ell=ell, alpha=alpha, beta=beta, w=w, objective=objective)


def verify_dual(inst, trace, dual, tau=TAU):
    """
    Checks every dual constraint for every step and every menu entry.

    Constraints
    -----------
    - nonnegativity of x, ell, alpha and beta (within tau);
    - customer cover: a_s . x^t + alpha^t >= v_s for every bundle s of every customer;
    - supplier cover: a_s . x^t - beta^t <= (1+eps) v_s for every bundle s of every supplier;
    - price increase: ell^t >= x^t - x^{t-1};
    - no-trade prices: x^t = x^{t-1} at customer steps where nothing was sold.

    Returns
    -------
    `VerificationReport`
        Empty violation list for any trace of the reference engine on a valid instance.
    """
    report = VerificationReport()
    eps = inst.eps

    for name, array in (("x", dual.x), ("ell", dual.ell), ("alpha", dual.alpha), ("beta", dual.beta)):
        report.checked += array.size
        for index in zip(*np.nonzero(array < -tau)):
            t = int(index[0])
            i = int(index[1]) if len(index) > 1 else None
            report.violations.append(Violation(NONNEGATIVITY, f"{name} is negative at {tuple(map(int, index))}",
                                               t=t, i=i, slack=float(array[index])))

    for t, (event, step) in enumerate(zip(inst.events, trace.steps)):
        x_t = dual.x[t + 1]
        x_prev = dual.x[t]
        bundle_prices = event.counts @ x_t
        if event.kind is EventKind.CUSTOMER:
            lhs = bundle_prices + dual.alpha[t]
            slack = lhs - event.values
            tol = _tolerances(tau, lhs, event.values)
            name, message = CUSTOMER_COVER, "a.x + alpha < v"
            if not step.sold:
                report.checked += 1
                change = np.abs(x_t - x_prev)
                if np.any(change > _tolerances(tau, x_t, x_prev)):
                    i = int(np.argmax(change))
                    report.violations.append(Violation(NO_TRADE_PRICES, f"prices changed at no-trade customer "
                                                       f"step {t}", t=t, i=i, slack=-float(change[i])))
        else:
            rhs = (1 + eps) * event.values
            lhs = bundle_prices - dual.beta[t]
            slack = rhs - lhs
            tol = _tolerances(tau, lhs, rhs)
            name, message = SUPPLIER_COVER, "a.x - beta > (1+eps) v"
        report.checked += slack.size
        for s in np.nonzero(slack < -tol)[0]:
            report.violations.append(Violation(name, f"{message} at step {t}, bundle {int(s)}", t=t, s=int(s),
                                               slack=float(slack[s])))

        increase_slack = dual.ell[t] - (x_t - x_prev)
        report.checked += increase_slack.size
        for i in np.nonzero(increase_slack < -_tolerances(tau, x_t, x_prev))[0]:
            report.violations.append(Violation(PRICE_INCREASE, f"ell below the price increase at step {t}, "
                                               f"item {int(i)}", t=t, i=int(i), slack=float(increase_slack[i])))
    return report


def _shifted(trace):
    """x-hat = x + 1/(d mu) for the before and after price vectors of every step."""
    shift = 1 / (trace.params.d * trace.params.mu)
    x = trace.x_matrix()
    return x[:-1] + shift, x[1:] + shift


def verify_step_inequalities(trace, tau=TAU):
    r"""
    Checks the per-step properties of the price rule and the potential inequalities behind the ratio bound.

    Checks
    ------
    - nonnegative prices: :math:`x_i^t \geq 0`;
    - price-inventory identity: :math:`\frac{1}{\eta}\ln(\hat{x}_i^t/\hat{x}_i^{t-1}) = (r_i^{t-1}-r_i^t)/w_i`
      with :math:`\hat{x} = x + 1/(d\mu)`, on coordinates changed by a trade (for purchases, only where
      :math:`x_i^t > 0`, i.e. where the cap did not bind);
    - monotone prices: up after sales, down after purchases;
    - trade criterion: value at least the (floored) price at sales, discounted price at least the value at
      purchases;
    - sell potential: :math:`\frac{1}{\eta}\sum_i w_i \hat{x}_i^t \ln(\hat{x}_i^t/\hat{x}_i^{t-1})
      \leq e^{\varepsilon/8}(P^t + 1/\mu)`;
    - buy potential: :math:`\frac{1}{\eta}[\sum_{x_i^t > 0} w_i \hat{x}_i^t \ln(\hat{x}_i^t/\hat{x}_i^{t-1})
      - \sum_{x_i^t = 0} w_i x_i^{t-1}] \leq -e^{-\varepsilon/8} P^t`;
    - potential balance: :math:`\sum_{sold}(P^t + 1/\mu) - e^{-\varepsilon/4}\sum_{bought} P^t \geq 0`.

    Returns
    -------
    `VerificationReport`
    """
    report = VerificationReport()
    params = trace.params
    eta, eps, mu = params.eta, params.eps, params.mu
    w = np.array(trace.instance.catalog.w, dtype=float)
    if not trace.steps:
        return report
    x_hat_before, x_hat_after = _shifted(trace)
    sold_total = bought_total = 0.

    for t, step in enumerate(trace.steps):
        x_before = np.array(step.x_before)
        x_after = np.array(step.x_after)
        r_before = np.array(step.r_before)
        r_after = np.array(step.r_after)

        report.checked += x_after.size
        for i in np.nonzero(x_after < -tau)[0]:
            report.violations.append(Violation("nonnegative prices", f"negative price at step {t}, item {int(i)}",
                                               t=t, i=int(i), slack=float(x_after[i])))

        log_ratio = np.log(x_hat_after[t] / x_hat_before[t])
        changed = r_before != r_after
        if step.kind is EventKind.SUPPLIER:
            changed &= x_after > 0
        identity_gap = log_ratio / eta - (r_before - r_after) / w
        report.checked += int(np.sum(changed))
        for i in np.nonzero(changed & (np.abs(identity_gap) > tau))[0]:
            report.violations.append(Violation("price-inventory identity", f"log price change does not match the "
                                               f"inventory change at step {t}, item {int(i)}", t=t, i=int(i),
                                               slack=-abs(float(identity_gap[i]))))

        report.checked += x_after.size
        direction = x_after - x_before if step.kind is EventKind.CUSTOMER else x_before - x_after
        for i in np.nonzero(direction < -_tolerances(tau, x_before, x_after))[0]:
            report.violations.append(Violation("monotone prices", f"price moved the wrong way at step {t}, "
                                               f"item {int(i)}", t=t, i=int(i), slack=float(direction[i])))

        if step.sold:
            threshold = max(1., step.P) if params.customer_rule == "floored" else step.P
            _check(report, "trade criterion", step.value - threshold, tau, (step.value, threshold),
                   f"sold below the price at step {t}", t, step.chosen)
            potential = float(np.sum(w * x_hat_after[t] * log_ratio)) / eta
            bound = math.exp(eps / 8) * (step.P + 1 / mu)
            _check(report, "sell potential", bound - potential, tau, (bound, potential),
                   f"potential increase exceeds its bound at step {t}", t, step.chosen)
            sold_total += step.P + 1 / mu
        elif step.bought:
            _check(report, "trade criterion", step.P / (1 + eps) - step.value, tau, (step.P, step.value),
                   f"bought above the discounted price at step {t}", t, step.chosen)
            at_cap = r_after == np.array(trace.instance.catalog.w)
            potential = (float(np.sum((w * x_hat_after[t] * log_ratio)[~at_cap]))
                         - float(np.sum((w * x_before)[at_cap]))) / eta
            bound = -math.exp(-eps / 8) * step.P
            _check(report, "buy potential", bound - potential, tau, (bound, potential),
                   f"potential decrease falls short of its bound at step {t}", t, step.chosen)
            bought_total += step.P

    balance = sold_total - math.exp(-eps / 4) * bought_total
    _check(report, "potential balance", balance, tau, (sold_total, bought_total),
           "discounted purchases exceed sales", None, None)
    return report


def _check(report, name, slack, tau, scales, message, t, s):
    report.checked += 1
    tol = max(tau, tau * max(abs(scale) for scale in scales))
    if slack < -tol:
        report.violations.append(Violation(name, message, t=t, s=s, slack=float(slack)))


def dual_gap(trace, dual, tau=TAU):
    """
    Ratio witness from weak duality: the fitted dual objective bounds the augmented offline optimum from above.

    Returns
    -------
    `DualGap`
        `ratio` = objective / max(profit, tau); `degenerate` marks runs with profit at most tau, whose ratio is
        not meaningful.
    """
    profit = trace.recompute_profit()
    ratio = dual.objective / max(profit, tau)
    eta_over_eps = trace.params.eta / trace.params.eps
    return DualGap(objective=dual.objective, profit=profit, ratio=ratio, eta_over_eps=eta_over_eps,
                   normalized=ratio / eta_over_eps, degenerate=profit <= tau)


def potential_chain_total(trace):
    """
    Intermediate quantity of the ratio argument, sum over sales of ((1 - eps/4) P + eps v / eta + 1/mu) minus the
    sum over purchases of P/(1+eps); reported next to the dual objective.
    """
    params = trace.params
    total = 0.
    for step in trace.steps:
        if step.sold:
            total += (1 - params.eps / 4) * step.P + params.eps * step.value / params.eta + 1 / params.mu
        elif step.bought:
            total -= step.P / (1 + params.eps)
    return total


def price_charge_slack(trace):
    r"""
    Per-step gap between the potential increase of a sale and the dual's price-increase charge.

    At a sale, :math:`\sum_i w_i \hat{x}_i^t \ln(\hat{x}_i^t/\hat{x}_i^{t-1}) - w \cdot \ell^t` equals the weighted
    KL divergence :math:`\mathrm{wKL}(\hat{x}^t \| \hat{x}^{t-1})`, since :math:`\ell^t = x^t - x^{t-1}` there. The
    divergence is nonnegative, which is what lets the potential pay for the charge.

    Returns
    -------
    `numpy.ndarray`
        Length T; zero at steps that are not sales.
    """
    slack = np.zeros(len(trace.steps))
    if not trace.steps:
        return slack
    w = np.array(trace.instance.catalog.w, dtype=float)
    x_hat_before, x_hat_after = _shifted(trace)
    for t, step in enumerate(trace.steps):
        if step.sold:
            slack[t] = weighted_kl(w, x_hat_after[t], x_hat_before[t])
    return slack
