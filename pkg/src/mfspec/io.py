"""CSV/JSON writers with a fixed dialect.

CSV: comma separator, '.' decimal point, lowercase headers, LF line endings,
floats at 17 significant digits (lossless double round trip). Writes go to a
temporary file in the target directory and are renamed into place, so a
failed run never leaves a partial file.
"""

import json
import math
import os
from typing import Iterable, Sequence


def format_value(x) -> str:
    if isinstance(x, bool):
        return "1" if x else "0"
    if isinstance(x, (int,)):
        return str(x)
    if isinstance(x, float):
        return f"{x:.17g}"
    return str(x)


def write_text_atomic(path: str, text: str) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    tmp = f"{path}.tmp.{os.getpid()}"
    with open(tmp, "w", newline="\n") as fh:
        fh.write(text)
    os.replace(tmp, path)


def write_csv_atomic(path: str, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    lines = [",".join(h.lower() for h in header)]
    for row in rows:
        lines.append(",".join(format_value(x) for x in row))
    write_text_atomic(path, "\n".join(lines) + "\n")


def _json_safe(obj):
    if isinstance(obj, float):
        if math.isnan(obj):
            return None
        if math.isinf(obj):
            return "inf" if obj > 0 else "-inf"
        return obj
    if isinstance(obj, dict):
        return {k: _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if hasattr(obj, "tolist"):
        return _json_safe(obj.tolist())
    return obj


def write_json_atomic(path: str, obj) -> None:
    text = json.dumps(_json_safe(obj), sort_keys=True, indent=2)
    write_text_atomic(path, text + "\n")


def read_csv(path: str) -> tuple[list[str], list[list[str]]]:
    with open(path, "r", newline="") as fh:
        lines = [line.rstrip("\n") for line in fh if line.strip()]
    header = lines[0].split(",")
    return header, [line.split(",") for line in lines[1:]]


# ---------------------------------------------------------------------------
# row builders for the package's table types
# ---------------------------------------------------------------------------

def grid_function_rows(func, axis_name: str = "q"):
    header = [axis_name, "value", "inf_flag"]
    xs = func.grid.values()
    rows = [(float(xs[i]), float(func.values[i]), int(bool(func.is_inf[i])))
            for i in range(xs.size)]
    return header, rows


def grid_function_from_csv(path: str):
    """Rebuild a grid function from its CSV serialization, bit for bit."""
    from .convex import GridFunction, UniformGrid

    _, rows = read_csv(path)
    xs = [float(r[0]) for r in rows]
    values = [float(r[1]) for r in rows]
    flags = [r[2] == "1" for r in rows]
    step = (xs[-1] - xs[0]) / (len(xs) - 1)
    grid = UniformGrid(xs[0], xs[-1], step)
    import numpy as np
    return GridFunction(grid, np.array(values), is_inf=np.array(flags))


def curve_rows(curve):
    prefix = "p" if curve.kind == "pressure" else "phi"
    header = ["q"] + [f"{prefix}_{n}" for n in curve.depths] + ["limit", "error_bound"]
    qs = curve.q_grid.values()
    rows = []
    for i in range(qs.size):
        row = [float(qs[i])]
        row += [float(curve.values[d, i]) for d in range(len(curve.depths))]
        row += [float(curve.limit[i]), float(curve.error_bound[i])]
        rows.append(row)
    return header, rows


def spectrum_rows(table):
    header = ["alpha", "rate", "entropy", "dimension", "empty_flag",
              "reliability_flag", "label"]
    rows = []
    for i in range(table.alpha.size):
        rows.append([
            float(table.alpha[i]),
            float(table.rate[i]),
            float(table.entropy[i]),
            float(table.dimension[i]),
            int(bool(table.empty[i])),
            table.reliability[i],
            table.label,
        ])
    return header, rows


def spectrum_json(table, config=None):
    body = {
        "label": table.label,
        "metadata": table.metadata,
        "rows": [
            {
                "alpha": float(table.alpha[i]),
                "rate": float(table.rate[i]),
                "entropy": float(table.entropy[i]),
                "dimension": float(table.dimension[i]),
                "empty": bool(table.empty[i]),
                "reliability": table.reliability[i],
            }
            for i in range(table.alpha.size)
        ],
    }
    if config is not None:
        body["config"] = config
    return body


def tail_estimate_dict(est):
    return {
        "n": est.n,
        "interval": [est.interval[0], est.interval[1]],
        "prob_estimate": est.prob_estimate,
        "log_rate": est.log_rate,
        "log_rate_bound": est.log_rate_bound,
        "ci_95_rel": est.ci_95_rel,
        "sampler": est.sampler,
        "samples": est.samples,
        "seed": est.seed,
    }
