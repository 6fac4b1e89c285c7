"""Run files and result tables.

A run file is versioned JSON holding one record per dead point; a packed
``.npz`` variant carries the same content as arrays. See
``docs/run_format.md`` for the schema.
"""

import csv
import io as _io
import json
import math
import os
import tempfile

import numpy as np

from .run import Run, validate_run

FORMAT_NAME = "nserrors-run"
FORMAT_VERSION = 1


class RunFileError(ValueError):
    """Base class for problems reading a run file."""


class RunFormatError(RunFileError):
    """The file is not a run file at all (bad JSON, wrong format tag)."""


class RunVersionError(RunFileError):
    """The run file was written by an unsupported format version."""


class MalformedRecordError(RunFileError):
    """A point record is missing a field or holds a non-numeric value."""


class RunValidationError(RunFileError):
    """The records parse but violate a run invariant."""


def atomic_write(path, data, mode="w"):
    """Write ``data`` to a temporary file next to ``path`` then rename it."""
    path = os.fspath(path)
    folder = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=folder, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, mode) as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    if hasattr(obj, "to_dict"):
        return obj.to_dict()
    return obj


def _finite_or_none(x):
    return None if x == -math.inf else float(x)


def run_to_dict(run):
    records = []
    for i in range(len(run)):
        rec = {
            "logl": float(run.logl[i]),
            "birth_logl": _finite_or_none(run.birth_logl[i]),
            "params": [float(v) for v in run.params[i]],
            "nlive": int(run.nlive[i]),
        }
        if run.true_logx is not None:
            rec["true_logx"] = float(run.true_logx[i])
        records.append(rec)
    return {
        "format": FORMAT_NAME,
        "version": FORMAT_VERSION,
        "problem": _jsonable(run.meta.get("problem")),
        "tracked_components": int(run.params.shape[1]),
        "logl_end": float(run.logl_end),
        "meta": _jsonable(run.meta),
        "points": records,
    }


def _check_header(doc):
    if not isinstance(doc, dict) or doc.get("format") != FORMAT_NAME:
        raise RunFormatError(f"not a {FORMAT_NAME} file")
    version = doc.get("version")
    if version != FORMAT_VERSION:
        raise RunVersionError(f"unsupported run file version {version!r} (expected {FORMAT_VERSION})")


def _number(rec, key, index, allow_none=False):
    if key not in rec:
        raise MalformedRecordError(f"record {index}: missing field {key!r}")
    val = rec[key]
    if val is None and allow_none:
        return -math.inf
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        raise MalformedRecordError(f"record {index}: field {key!r} is not a number ({val!r})")
    return float(val)


def _validated(run):
    problems = validate_run(run)
    if problems:
        first = problems[0]
        where = first.rsplit(" at ", 1)
        if len(where) == 2:
            raise RunValidationError(f"record {where[1]}: {where[0]}" + (f" (+{len(problems) - 1} more)" if len(problems) > 1 else ""))
        raise RunValidationError(first)
    return run


def run_from_dict(doc):
    """Build and validate a run from a parsed run file document."""
    _check_header(doc)
    records = doc.get("points")
    if not isinstance(records, list):
        raise MalformedRecordError("missing 'points' list")
    k = None
    logl, birth, params, nlive, tlx = [], [], [], [], []
    has_x = bool(records) and all(isinstance(r, dict) and "true_logx" in r for r in records)
    for i, rec in enumerate(records):
        if not isinstance(rec, dict):
            raise MalformedRecordError(f"record {i}: not an object")
        logl.append(_number(rec, "logl", i))
        birth.append(_number(rec, "birth_logl", i, allow_none=True))
        n = _number(rec, "nlive", i)
        if n != int(n):
            raise MalformedRecordError(f"record {i}: nlive is not an integer")
        nlive.append(int(n))
        p = rec.get("params")
        if not isinstance(p, list) or not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in p):
            raise MalformedRecordError(f"record {i}: params must be a list of numbers")
        if k is None:
            k = len(p)
        elif len(p) != k:
            raise MalformedRecordError(f"record {i}: expected {k} params, got {len(p)}")
        params.append(p)
        if has_x:
            tlx.append(_number(rec, "true_logx", i))
    meta = doc.get("meta") or {}
    if doc.get("problem") is not None:
        meta["problem"] = doc["problem"]
    run = Run(
        logl=np.array(logl, dtype=float),
        birth_logl=np.array(birth, dtype=float),
        params=np.array(params, dtype=float).reshape(len(records), k or doc.get("tracked_components", 1)),
        nlive=np.array(nlive, dtype=np.int64),
        true_logx=np.array(tlx, dtype=float) if has_x else None,
        logl_end=doc.get("logl_end"),
        meta=meta,
    )
    return _validated(run)


def _npz_bytes(run):
    header = run_to_dict(run)
    del header["points"]
    arrays = {
        "header": np.array(json.dumps(header)),
        "logl": run.logl,
        "birth_logl": run.birth_logl,
        "params": run.params,
        "nlive": run.nlive,
    }
    if run.true_logx is not None:
        arrays["true_logx"] = run.true_logx
    buf = _io.BytesIO()
    np.savez(buf, **arrays)
    return buf.getvalue()


def _run_from_npz(path):
    try:
        data = np.load(path, allow_pickle=False)
        header = json.loads(str(data["header"]))
    except (OSError, ValueError, KeyError) as exc:
        raise RunFormatError(f"{path}: unreadable packed run file ({exc})") from exc
    _check_header(header)
    meta = header.get("meta") or {}
    if header.get("problem") is not None:
        meta["problem"] = header["problem"]
    run = Run(
        logl=data["logl"],
        birth_logl=data["birth_logl"],
        params=data["params"],
        nlive=data["nlive"],
        true_logx=data["true_logx"] if "true_logx" in data.files else None,
        logl_end=header.get("logl_end"),
        meta=meta,
    )
    return _validated(run)


def write_run(run, path, fmt=None):
    """Write ``run`` as JSON (default) or packed ``npz`` (by ``fmt`` or suffix)."""
    path = os.fspath(path)
    fmt = fmt or ("npz" if path.endswith(".npz") else "json")
    if fmt == "npz":
        atomic_write(path, _npz_bytes(run), mode="wb")
    elif fmt == "json":
        atomic_write(path, json.dumps(run_to_dict(run), indent=1) + "\n")
    else:
        raise ValueError(f"unknown run file format {fmt!r}")


def read_run(path):
    """Read and validate a run file written by :func:`write_run`."""
    path = os.fspath(path)
    if path.endswith(".npz"):
        return _run_from_npz(path)
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise RunFormatError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from exc
    return run_from_dict(doc)


def _cell(v):
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    if isinstance(v, np.integer):
        return str(int(v))
    return v


def format_rows(rows, fmt="csv"):
    """Render row dicts as CSV (17 significant digits) or a JSON list."""
    rows = list(rows)
    if fmt == "json":
        clean = [{k: (None if isinstance(v, float) and math.isnan(v) else _jsonable(v)) for k, v in r.items()} for r in rows]
        return json.dumps(clean, indent=1) + "\n"
    columns = []
    for r in rows:
        for key in r:
            if key not in columns:
                columns.append(key)
    buf = _io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=columns, lineterminator="\n")
    writer.writeheader()
    for r in rows:
        writer.writerow({k: _cell(v) for k, v in r.items()})
    return buf.getvalue()


def write_rows(rows, path, fmt="csv"):
    atomic_write(path, format_rows(rows, fmt))
