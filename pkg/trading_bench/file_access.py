"""
Provide functions to locate, read and write the package's files: JSON Lines instances and traces,
flat JSON configuration/result files, and CSV tables exported from xarray Datasets.
"""

import json
import os
import warnings

from trading_bench.core.serialization import instance_from_lines, instance_to_lines, trace_from_lines, trace_to_lines

CSV_FLOAT_FORMAT = "%.17g"
TRACE_FILE_TEMPLATE = "cell_{cell:04d}.jsonl"


def trace_directory(path):
    """
    Absolute path of a bench trace directory, created (with its parents) if it does not exist yet.

    Raises
    ------
    `ValueError`
        If `path` names an existing file.
    """
    directory = os.path.abspath(path)
    if os.path.isfile(directory):
        raise ValueError(f"The trace directory {path!r} is an existing file; pass a directory path")
    if os.path.splitext(directory)[1] and not os.path.isdir(directory):
        warnings.warn(f"Creating trace directory {directory!r}, whose name looks like a file name")
    os.makedirs(directory, exist_ok=True)
    return directory


def cell_trace_path(trace_dir, cell):
    """Path of the trace of bench cell `cell` inside `trace_dir`."""
    return os.path.join(trace_dir, TRACE_FILE_TEMPLATE.format(cell=int(cell)))


def _ensure_parent(path):
    parent = os.path.dirname(os.path.abspath(path))
    if not os.path.isdir(parent):
        os.makedirs(parent)


def read_lines(path):
    """Read a text file as a list of lines (UTF-8, newlines stripped)."""
    with open(path, "r", encoding="utf-8") as file:
        return file.read().splitlines()


def write_lines(path, lines):
    """Write lines to a UTF-8 text file, one per line, creating parent directories as needed."""
    _ensure_parent(path)
    with open(path, "w", encoding="utf-8", newline="\n") as file:
        for line in lines:
            file.write(line + "\n")
    return path


def read_json(path):
    with open(path, "r", encoding="utf-8") as file:
        return json.load(file)


def write_json(path, obj):
    _ensure_parent(path)
    with open(path, "w", encoding="utf-8") as file:
        json.dump(obj, file, indent=2)
        file.write("\n")


def write_dataset_csv(dataset, path, dim):
    """
    Writes a one-dimensional `xarray.Dataset` to CSV: one row per entry along `dim`, with a header row,
    '.' decimals and floats printed with 17 significant digits.
    """
    _ensure_parent(path)
    frame = dataset.to_dataframe()
    frame.index.name = dim
    frame.to_csv(path, float_format=CSV_FLOAT_FORMAT, encoding="utf-8")
    return path


def read_instance(path):
    """Load an instance from a JSON Lines file."""
    return instance_from_lines(read_lines(path))


def write_instance(path, inst):
    return write_lines(path, instance_to_lines(inst))


def read_trace(path):
    """Load a trace (with its embedded instance) from a JSON Lines file."""
    return trace_from_lines(read_lines(path))


def write_trace(path, trace):
    return write_lines(path, trace_to_lines(trace))
