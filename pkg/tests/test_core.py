import json
import math
import os
from dataclasses import replace

import numpy as np
import pytest

from conftest import customer, supplier
from trading_bench.core.errors import InstanceFormatError
from trading_bench.core.helper import is_power_of_two, log_base, smallest_power_of_two_above, tolerance, weighted_kl
from trading_bench.core.serialization import instance_from_lines, instance_to_lines, trace_from_lines, trace_to_lines
from trading_bench.core.types import Bundle, Event, EventKind, Instance, ItemCatalog
from trading_bench.core.validation import normalize, validate_instance, validate_trace
from trading_bench.file_access import cell_trace_path, read_instance, read_trace, trace_directory, write_dataset_csv, \
    write_instance, write_trace
from trading_bench.trading.pricing import run


def test_weighted_kl_value():
    assert weighted_kl([1.], [2.], [1.]) == pytest.approx(2 * math.log(2) - 1)
    assert weighted_kl([3., 5.], [1., 2.], [1., 2.]) == 0.


def test_weighted_kl_zero_entries_and_errors():
    # x_i = 0 contributes w_i * y_i
    assert weighted_kl([2.], [0.], [0.5]) == pytest.approx(1.)
    with pytest.raises(ValueError, match="positive reference"):
        weighted_kl([1.], [1.], [0.])
    with pytest.raises(ValueError, match="Dimension mismatch"):
        weighted_kl([1., 1.], [1.], [1.])


def test_numeric_helpers():
    assert tolerance(1e-9) == 1e-9
    assert tolerance(1e-9, -1e6) == pytest.approx(1e-3)
    assert log_base(256, 2) == 8.
    assert is_power_of_two(64) and not is_power_of_two(48) and not is_power_of_two(0)
    assert smallest_power_of_two_above(4.) == 8
    assert smallest_power_of_two_above(5.) == 8


def test_catalog_and_event_arrays():
    catalog = ItemCatalog((3, 4))
    assert catalog.n == 2
    assert catalog.caps.tolist() == [3, 4]
    event = Event(EventKind.CUSTOMER, [Bundle((1, 0), 2.), Bundle((0, 2), 3.)])
    assert event.counts.shape == (2, 2)
    assert event.values.tolist() == [2., 3.]
    with pytest.raises(ValueError):
        event.counts[0, 0] = 5


def test_validate_instance_accepts_fixture(single_item_instance):
    assert validate_instance(single_item_instance) == []


def test_validate_instance_reports_each_problem():
    events = [customer((1,), 0.5), customer((3,), 2.), customer((1,), 9.), supplier((0,), 1.),
              Event(EventKind.CUSTOMER, [Bundle((1, 1), 2.)])]
    inst = Instance(catalog=ItemCatalog((10,)), eps=0.5, events=events, declared_v=4., declared_d=2)
    constraints = [violation.constraint for violation in validate_instance(inst)]
    assert constraints == ["customer value", "bundle size", "customer value", "empty bundle", "dimension"]


def test_validate_instance_parameters():
    inst = Instance(catalog=ItemCatalog((0,)), eps=1.5, events=[], declared_v=0.5, declared_d=0)
    constraints = {violation.constraint for violation in validate_instance(inst)}
    assert constraints == {"catalog", "eps", "declared_v", "declared_d"}


def test_normalize_scales_to_unit_minimum():
    events = [customer((1,), 4.), supplier((1,), 2.), customer((1,), 10.)]
    inst = Instance(catalog=ItemCatalog((5,)), eps=0.5, events=events, declared_v=10., declared_d=1)
    normalized = normalize(inst)
    assert [event.values[0] for event in normalized.events] == [1., 0.5, 2.5]
    assert normalized.declared_v == 2.5


def test_instance_lines_round_trip(single_item_instance):
    lines = instance_to_lines(single_item_instance)
    assert json.loads(lines[0]) == {"n": 1, "w": [40], "eps": 0.5, "v": 2., "d": 1}
    assert instance_from_lines(lines) == single_item_instance


@pytest.mark.parametrize("lines, line, field", [
    (['{"n": 1, "w": [4], "eps": 0.5, "v": 2}'], 1, "d"),
    (['{"n": 1, "w": [4], "eps": 0.5, "v": 2, "d": 1}', '{"kind": "customer", "menu": [{"counts": [1]}]}'],
     2, "value"),
    (['{"n": 1, "w": [4], "eps": 0.5, "v": 2, "d": 1}', '{"kind": "agent", "menu": []}'], 2, "kind"),
    (['{"n": 1, "w": [4], "eps": 0.5, "v": 2, "d": 1}', '', '{"kind": "supplier", "menu": [}'], 3, None),
])
def test_instance_format_errors_locate_the_problem(lines, line, field):
    with pytest.raises(InstanceFormatError) as error:
        instance_from_lines(lines)
    assert error.value.line == line
    assert error.value.field == field


def test_trace_lines_keep_exact_floats(single_item_instance, single_item_params):
    trace = run(single_item_instance, single_item_params)
    restored = trace_from_lines(trace_to_lines(trace))
    assert restored.instance == trace.instance
    assert restored.steps == trace.steps
    assert restored.profit == trace.profit
    assert restored.params == trace.params


def _edit_line(lines, index, **changes):
    record = json.loads(lines[index])
    record.update(changes)
    return lines[:index] + [json.dumps(record)] + lines[index + 1:]


def test_trace_with_a_forged_profit_is_rejected(single_item_instance, single_item_params):
    trace = run(single_item_instance, single_item_params)
    lines = _edit_line(trace_to_lines(trace), 0, profit=trace.profit + 1000.)
    with pytest.raises(InstanceFormatError, match="signed sum") as error:
        trace_from_lines(lines)
    assert (error.value.line, error.value.field) == (1, "profit")


def test_trace_with_inconsistent_steps_is_rejected(single_item_instance, single_item_params):
    lines = trace_to_lines(run(single_item_instance, single_item_params))

    with pytest.raises(InstanceFormatError, match="outside") as error:
        trace_from_lines(_edit_line(lines, 2, r_after=[41]))
    assert error.value.line == 3

    with pytest.raises(InstanceFormatError, match="no chosen bundle") as error:
        trace_from_lines(_edit_line(lines, 1, chosen=None))
    assert error.value.line == 2

    with pytest.raises(InstanceFormatError, match="steps for 4 events"):
        trace_from_lines(lines[:-1])


def test_validate_trace_lists_every_inconsistency(single_item_instance, single_item_params):
    trace = run(single_item_instance, single_item_params)
    assert validate_trace(trace) == []

    steps = list(trace.steps)
    steps[1] = replace(steps[1], t=7, r_before=(12,))
    steps[2] = replace(steps[2], chosen=3)
    constraints = {violation.constraint for violation in validate_trace(replace(trace, steps=steps, profit=0.))}
    assert constraints == {"step index", "inventory chain", "chosen", "profit"}


def test_trace_dataset(single_item_instance, single_item_params):
    dataset = run(single_item_instance, single_item_params).to_dataset()
    assert dict(dataset.sizes) == {"step": 4, "item": 1}
    assert dataset["r_after"].values[:, 0].tolist() == [39, 38, 39, 38]
    assert dataset["kind"].values.tolist() == ["customer", "customer", "supplier", "customer"]
    assert dataset.attrs["algorithm"] == "trade"


def test_files_round_trip(tmp_path, single_item_instance, single_item_params):
    path = str(tmp_path / "instance.jsonl")
    write_instance(path, single_item_instance)
    assert read_instance(path) == single_item_instance

    trace = run(single_item_instance, single_item_params)
    trace_path = write_trace(str(tmp_path / "nested" / "trace.jsonl"), trace)
    assert read_trace(trace_path).steps == trace.steps


def test_dataset_csv_uses_full_precision(tmp_path, single_item_instance, single_item_params):
    dataset = run(single_item_instance, single_item_params).to_dataset()
    table = dataset[["P", "price"]]
    path = write_dataset_csv(table, str(tmp_path / "steps.csv"), "step")
    with open(path, encoding="utf-8") as file:
        header, first, second = file.read().splitlines()[:3]
    assert header == "step,P,price"
    assert float(second.split(",")[1]) == table["P"].values[1]
    assert np.isclose(float(first.split(",")[2]), 2.)


def test_trace_directory_is_created_and_absolute(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    directory = trace_directory("bench/traces/")
    assert os.path.isabs(directory) and os.path.samefile(directory, tmp_path / "bench" / "traces")
    assert trace_directory(directory) == directory
    assert cell_trace_path(directory, 7) == os.path.join(directory, "cell_0007.jsonl")


def test_trace_directory_rejects_files(tmp_path):
    existing = tmp_path / "bench.csv"
    existing.write_text("cell\n", encoding="utf-8")
    with pytest.raises(ValueError, match="existing file"):
        trace_directory(str(existing))
    with pytest.warns(UserWarning, match="looks like a file name"):
        trace_directory(str(tmp_path / "traces.jsonl"))
    assert (tmp_path / "traces.jsonl").is_dir()
