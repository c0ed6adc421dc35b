"""
JSON Lines formats for instances and traces.

Instance file: a header object {"n", "w", "eps", "v", "d"} on line 1, then one event object
{"kind": "customer" | "supplier", "menu": [{"counts": [...], "value": ...}, ...]} per line.

Trace file: a header object {"params": {...}, "profit", "tags", "instance": {"header", "events"}} on line 1,
then one step object per line. Floats are written with `repr`, so values round-trip exactly.
"""

import json

from trading_bench.core.errors import InstanceFormatError
from trading_bench.core.types import Bundle, Event, EventKind, Instance, ItemCatalog, Trace, TraceStep
from trading_bench.core.validation import validate_trace
from trading_bench.trading.configurations import EngineParams

INSTANCE_HEADER_FIELDS = ("n", "w", "eps", "v", "d")
STEP_FIELDS = ("t", "kind", "chosen", "traded", "inventory_sold", "P", "price", "value",
               "r_before", "r_after", "x_before", "x_after")


def _require(obj, name, line, expected_type=None):
    if not isinstance(obj, dict):
        raise InstanceFormatError("Expected a JSON object", line=line)
    if name not in obj:
        raise InstanceFormatError(f"Missing required field {name!r}", line=line, field=name)
    value = obj[name]
    if expected_type is not None and not isinstance(value, expected_type):
        raise InstanceFormatError(f"Field {name!r} has type {type(value).__name__}", line=line, field=name)
    return value


def _parse_json(text, line):
    try:
        return json.loads(text)
    except json.JSONDecodeError as error:
        raise InstanceFormatError(f"Malformed JSON: {error.msg}", line=line) from error


def _header_dict(inst):
    return {"n": inst.n, "w": list(inst.catalog.w), "eps": inst.eps, "v": inst.declared_v, "d": inst.declared_d}


def _event_dict(event):
    return {"kind": event.kind.value,
            "menu": [{"counts": list(bundle.counts), "value": bundle.value} for bundle in event.menu]}


def _parse_header(obj, line):
    n = _require(obj, "n", line, int)
    w = _require(obj, "w", line, list)
    eps = _require(obj, "eps", line, (int, float))
    v = _require(obj, "v", line, (int, float))
    d = _require(obj, "d", line, int)
    if len(w) != n or not all(isinstance(cap, int) for cap in w):
        raise InstanceFormatError(f"Field 'w' must list {n} integers", line=line, field="w")
    return ItemCatalog(w), eps, v, d


def _parse_event(obj, line, n):
    kind = _require(obj, "kind", line, str)
    if kind not in (EventKind.CUSTOMER.value, EventKind.SUPPLIER.value):
        raise InstanceFormatError(f"Unknown event kind {kind!r}", line=line, field="kind")
    menu = _require(obj, "menu", line, list)
    if len(menu) == 0:
        raise InstanceFormatError("Menu must contain at least one bundle", line=line, field="menu")
    bundles = []
    for entry in menu:
        counts = _require(entry, "counts", line, list)
        value = _require(entry, "value", line, (int, float))
        if len(counts) != n or not all(isinstance(count, int) for count in counts):
            raise InstanceFormatError(f"Bundle counts must list {n} integers", line=line, field="counts")
        bundles.append(Bundle(counts, value))
    return Event(EventKind(kind), bundles)


def instance_to_lines(inst):
    """Serialize an instance to a list of JSON strings (one per line)."""
    return [json.dumps(_header_dict(inst))] + [json.dumps(_event_dict(event)) for event in inst.events]


def instance_from_lines(lines):
    """
    Parse an instance from JSON Lines.

    Raises
    ------
    `trading_bench.core.errors.InstanceFormatError`
        On malformed JSON or missing/mistyped fields, naming the line number (1-based) and the field.
    """
    lines = [(number, text) for number, text in enumerate(lines, start=1) if text.strip()]
    if not lines:
        raise InstanceFormatError("Instance file is empty", line=1)
    number, text = lines[0]
    catalog, eps, v, d = _parse_header(_parse_json(text, number), number)
    events = [_parse_event(_parse_json(text, number), number, catalog.n) for number, text in lines[1:]]
    return Instance(catalog=catalog, eps=eps, events=events, declared_v=v, declared_d=d)


def _step_dict(step):
    return {"t": step.t, "kind": step.kind.value, "chosen": step.chosen, "traded": step.traded,
            "inventory_sold": step.inventory_sold, "P": step.P, "price": step.price, "value": step.value,
            "r_before": list(step.r_before), "r_after": list(step.r_after),
            "x_before": list(step.x_before), "x_after": list(step.x_after)}


def _parse_step(obj, line):
    values = {name: _require(obj, name, line) for name in STEP_FIELDS}
    try:
        return TraceStep(**values)
    except (TypeError, ValueError) as error:
        raise InstanceFormatError(f"Invalid step record: {error}", line=line) from error


def trace_to_lines(trace):
    """Serialize a trace (header with params and the embedded instance, then one line per step)."""
    params = {"algorithm": trace.algorithm, "mu": trace.params.mu, "eta": trace.params.eta,
              "delta": trace.delta, "rho": trace.rho, "seed": trace.seed, "eps": trace.params.eps,
              "v": trace.params.v, "d": trace.params.d, "customer_rule": trace.params.customer_rule}
    header = {"params": params, "profit": trace.profit, "tags": list(trace.tags),
              "instance": {"header": _header_dict(trace.instance),
                           "events": [_event_dict(event) for event in trace.instance.events]}}
    return [json.dumps(header)] + [json.dumps(_step_dict(step)) for step in trace.steps]


def _check_trace(trace, step_lines, header_line):
    violations = validate_trace(trace)
    if not violations:
        return trace
    first = violations[0]
    if first.constraint == "profit":
        raise InstanceFormatError(f"Inconsistent trace: {first.message}", line=header_line, field="profit")
    line = step_lines[first.t] if first.t is not None and first.t < len(step_lines) else header_line
    raise InstanceFormatError(f"Inconsistent trace: {first.message} ({len(violations)} problem(s) in total)",
                              line=line)


def trace_from_lines(lines):
    """
    Parse a trace written by `trace_to_lines`.

    Raises
    ------
    `trading_bench.core.errors.InstanceFormatError`
        On malformed records, and on records that parse but disagree with each other (see
        `trading_bench.core.validation.validate_trace`), e.g. a header profit that is not the signed sum of the
        step prices.
    """
    lines = [(number, text) for number, text in enumerate(lines, start=1) if text.strip()]
    if not lines:
        raise InstanceFormatError("Trace file is empty", line=1)
    number, text = lines[0]
    header = _parse_json(text, number)
    params = _require(header, "params", number, dict)
    embedded = _require(header, "instance", number, dict)
    catalog, eps, v, d = _parse_header(_require(embedded, "header", number, dict), number)
    events = [_parse_event(event, number, catalog.n) for event in _require(embedded, "events", number, list)]
    instance = Instance(catalog=catalog, eps=eps, events=events, declared_v=v, declared_d=d)
    engine_params = EngineParams(mu=_require(params, "mu", number), eta=_require(params, "eta", number),
                                 eps=_require(params, "eps", number), v=_require(params, "v", number),
                                 d=_require(params, "d", number),
                                 customer_rule=params.get("customer_rule", "floored"))
    steps = [_parse_step(_parse_json(text, number), number) for number, text in lines[1:]]
    trace = Trace(instance=instance, params=engine_params, steps=steps,
                  profit=_require(header, "profit", number, (int, float)),
                  algorithm=params.get("algorithm", "trade"), delta=params.get("delta", 0.),
                  rho=params.get("rho", 0.), seed=params.get("seed"), tags=header.get("tags", []))
    return _check_trace(trace, [step_number for step_number, _ in lines[1:]], number)
