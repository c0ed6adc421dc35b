from trading_bench.configurations import TAU
from trading_bench.core.helper import tolerance
from trading_bench.core.types import Bundle, Event, EventKind, Instance, Violation


def validate_instance(inst):
    """
    Lists every violated invariant of an instance.

    Parameters
    ----------
    inst : `trading_bench.core.types.Instance`

    Returns
    -------
    `list` of `trading_bench.core.types.Violation`
        Empty if and only if the instance is valid: positive caps, eps in (0, 1], v >= 1, d >= 1,
        nonempty menus of the catalog's dimension, nonnegative counts and values, no all-zero bundle with
        positive value, and every customer bundle with value in [1, v] and size at most d.
    """
    violations = []
    n = inst.catalog.n
    if n < 1:
        violations.append(Violation("catalog", "catalog has no item types"))
    for i, cap in enumerate(inst.catalog.w):
        if cap < 1:
            violations.append(Violation("catalog", f"inventory cap w[{i}] = {cap} is not positive", i=i))
    if not 0 < inst.eps <= 1:
        violations.append(Violation("eps", f"eps = {inst.eps} is outside (0, 1]"))
    if not inst.declared_v >= 1:
        violations.append(Violation("declared_v", f"declared v = {inst.declared_v} is below 1"))
    if inst.declared_d < 1:
        violations.append(Violation("declared_d", f"declared d = {inst.declared_d} is below 1"))

    for t, event in enumerate(inst.events):
        if len(event.menu) == 0:
            violations.append(Violation("menu", f"empty menu at step {t}", t=t))
        for s, bundle in enumerate(event.menu):
            violations.extend(_bundle_violations(inst, t, s, event.kind, bundle, n))
    return violations


def _bundle_violations(inst, t, s, kind, bundle, n):
    if len(bundle.counts) != n:
        return [Violation("dimension", f"bundle has {len(bundle.counts)} counts but the catalog has {n} item types "
                                       f"at step {t}", t=t, s=s)]
    violations = []
    if min(bundle.counts, default=0) < 0:
        violations.append(Violation("counts", f"negative item count at step {t}", t=t, s=s))
    if bundle.value < 0:
        violations.append(Violation("value", f"negative value at step {t}", t=t, s=s))
    if bundle.size == 0 and bundle.value > 0:
        violations.append(Violation("empty bundle", f"all-zero bundle with positive value at step {t}", t=t, s=s))
    if kind is EventKind.CUSTOMER:
        if bundle.value < 1:
            violations.append(Violation("customer value", f"customer value < 1 at step {t}", t=t, s=s,
                                        slack=bundle.value - 1))
        elif bundle.value > inst.declared_v:
            violations.append(Violation("customer value", f"customer value exceeds v at step {t}", t=t, s=s,
                                        slack=inst.declared_v - bundle.value))
        if bundle.size > inst.declared_d:
            violations.append(Violation("bundle size", f"bundle size exceeds d at step {t}", t=t, s=s,
                                        slack=float(inst.declared_d - bundle.size)))
    return violations


def normalize(inst):
    """
    Rescales all values so the smallest positive customer value becomes 1.

    Divides every bundle value (customers and suppliers) and the declared value bound by the minimum positive
    customer value. Instances without a positive customer value are returned unchanged.
    """
    customer_values = [bundle.value for event in inst.events if event.kind is EventKind.CUSTOMER
                       for bundle in event.menu if bundle.value > 0]
    if not customer_values:
        return inst
    scale = min(customer_values)
    events = [Event(event.kind, [Bundle(bundle.counts, bundle.value / scale) for bundle in event.menu])
              for event in inst.events]
    return Instance(catalog=inst.catalog, eps=inst.eps, events=events,
                    declared_v=max(1., inst.declared_v / scale), declared_d=inst.declared_d)


def _step_violations(trace, t, step, r_expected):
    inst = trace.instance
    event = inst.events[t]
    violations = []
    if step.t != t:
        violations.append(Violation("step index", f"step record {t} is labelled t = {step.t}", t=t))
    if step.kind is not event.kind:
        violations.append(Violation("step kind", f"step {t} is a {step.kind.value} step but the event is a "
                                                 f"{event.kind.value}", t=t))
    if step.chosen is not None and not 0 <= step.chosen < len(event.menu):
        violations.append(Violation("chosen", f"step {t} chose bundle {step.chosen} of a menu of {len(event.menu)}",
                                    t=t, s=step.chosen))
    if step.kind is EventKind.CUSTOMER and step.traded and not step.inventory_sold:
        violations.append(Violation("inventory sold", f"customer step {t} was charged without selling inventory",
                                    t=t))
    if step.kind is EventKind.SUPPLIER and step.inventory_sold:
        violations.append(Violation("inventory sold", f"supplier step {t} is marked as selling inventory", t=t))
    for name in ("r_before", "r_after", "x_before", "x_after"):
        if len(getattr(step, name)) != inst.n:
            violations.append(Violation("dimension", f"{name} of step {t} has {len(getattr(step, name))} entries "
                                                     f"for {inst.n} item types", t=t))
    if violations:
        return violations
    for i, cap in enumerate(inst.catalog.w):
        if step.r_before[i] != r_expected[i]:
            violations.append(Violation("inventory chain", f"r_before[{i}] = {step.r_before[i]} at step {t} does not "
                                                           f"continue the previous r_after = {r_expected[i]}",
                                        t=t, i=i))
        if not 0 <= step.r_after[i] <= cap:
            violations.append(Violation("inventory range", f"r_after[{i}] = {step.r_after[i]} at step {t} is outside "
                                                           f"[0, {cap}]", t=t, i=i))
    return violations


def validate_trace(trace, tau=TAU):
    """
    Lists every inconsistency between a trace's steps, its embedded instance and its stated profit.

    Parameters
    ----------
    trace : `trading_bench.core.types.Trace`
    tau : `float`, default=1e-9

    Returns
    -------
    `list` of `trading_bench.core.types.Violation`
        Empty when there is one step per event, each step is labelled with its index and the event's kind,
        chosen bundles lie in the menu, inventories chain from the caps and stay in [0, w], and the stated
        profit equals the signed sum of step prices to within `tau` (relative to the prices' scale).
    """
    inst = trace.instance
    violations = []
    if len(trace.steps) != inst.T:
        violations.append(Violation("step count", f"trace has {len(trace.steps)} steps for {inst.T} events"))
    r_expected = tuple(inst.catalog.w)
    for t, step in enumerate(trace.steps[:inst.T]):
        violations.extend(_step_violations(trace, t, step, r_expected))
        r_expected = step.r_after

    recomputed = trace.recompute_profit()
    scale = sum(abs(step.price) for step in trace.steps)
    if abs(trace.profit - recomputed) > tolerance(tau, scale):
        violations.append(Violation("profit", f"stated profit {trace.profit!r} differs from the signed sum of step "
                                              f"prices {recomputed!r}", slack=-abs(trace.profit - recomputed)))
    return violations
