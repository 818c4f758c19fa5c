"""File exports: metadata-headed CSVs, the binary history dump with its JSON
sidecar, and checksum helpers.

Every CSV starts with one ``#``-prefixed metadata line recording the tool
version, units, and the conventions that shaped the numbers (window policy,
sign convention, model hash), followed by a normal column-header row.
Floats are printed with 17 significant digits so parsing them back
reproduces the exact binary values.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

from . import __version__
from .errors import ValidationError
from .lde import HistoryMatrix
from .models import state_label


def fmt(value) -> str:
    """Round-trip-safe float rendering (17 significant digits)."""
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return format(float(value), ".17g")


def meta_line(name: str, fields: dict) -> str:
    parts = [f"chainhist {__version__}", name]
    parts += [f"{key}={value}" for key, value in fields.items() if value is not None]
    return "# " + " | ".join(parts)


def state_labels(n: int, q: int) -> list[str]:
    return [state_label(s, n, q) for s in range(q**n)]


def _write_lines(path, lines):
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        for line in lines:
            handle.write(line)
            handle.write("\n")


def sha256_path(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for chunk in iter(lambda: handle.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


# ---------------------------------------------------------------------------
# history


def write_history_csv(path, history: HistoryMatrix, n: int, q: int, meta: dict | None = None):
    """Rows are states (with their base-q label), columns are timestamps."""
    fields = {"units": "probability", "h": fmt(history.h), "t_offset": fmt(history.t_offset),
              "model_hash": history.model_hash}
    fields.update(meta or {})
    labels = state_labels(n, q)
    if len(labels) != history.n_states:
        raise ValidationError("state labeling does not match the history dimension")
    times = history.times
    lines = [meta_line("history", fields),
             "state," + ",".join(fmt(t) for t in times)]
    for row, label in enumerate(labels):
        values = history.data[row]
        lines.append(label + "," + ",".join(fmt(v) for v in values))
    _write_lines(path, lines)


def write_history_binary(path, history: HistoryMatrix, extra_meta: dict | None = None):
    """Column-major float64 dump at ``path`` plus a ``.json`` sidecar."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = np.asfortranarray(history.data)
    with open(path, "wb") as handle:
        handle.write(payload.tobytes(order="F"))
    sidecar = {
        "tool": f"chainhist {__version__}",
        "dtype": "float64",
        "layout": "column-major",
        "n_states": history.n_states,
        "n_steps": history.n_steps,
        "h": history.h,
        "t_offset": history.t_offset,
        "model_hash": history.model_hash,
    }
    sidecar.update(extra_meta or {})
    with open(path.with_suffix(path.suffix + ".json"), "w", encoding="utf-8") as handle:
        json.dump(sidecar, handle, indent=2, sort_keys=True)
        handle.write("\n")


def read_history_binary(path) -> HistoryMatrix:
    path = Path(path)
    with open(path.with_suffix(path.suffix + ".json"), "r", encoding="utf-8") as handle:
        sidecar = json.load(handle)
    raw = np.fromfile(path, dtype=np.float64)
    shape = (sidecar["n_states"], sidecar["n_steps"] + 1)
    data = raw.reshape(shape, order="F")
    return HistoryMatrix(data, sidecar["h"], sidecar["t_offset"], sidecar.get("model_hash"))


# ---------------------------------------------------------------------------
# analysis exports


def write_singular_values_csv(path, singular_values, meta: dict | None = None):
    lines = [meta_line("singular_values", {"units": "probability-amplitude", **(meta or {})}),
             "index,sigma"]
    for j, sigma in enumerate(singular_values):
        lines.append(f"{j},{fmt(sigma)}")
    _write_lines(path, lines)


def write_vectors_csv(path, vectors, row_labels, label_name: str, meta: dict | None = None):
    """One column per vector; ``meta`` should record any sqrt-sigma scaling."""
    vectors = np.asarray(vectors)
    lines = [meta_line("vectors", meta or {}),
             label_name + "," + ",".join(f"vector_{j}" for j in range(vectors.shape[1]))]
    for label, row in zip(row_labels, vectors):
        lines.append(str(label) + "," + ",".join(fmt(v) for v in row))
    _write_lines(path, lines)


def write_power_spectrum_csv(path, spectrum, meta: dict | None = None):
    fields = {"units": "squared magnitude", "frequency_units": "cycles per unit time",
              "window": spectrum.window.describe(), **(meta or {})}
    lines = [meta_line("power_spectrum", fields), "bin,frequency,power"]
    for k, (freq, power) in enumerate(zip(spectrum.frequencies, spectrum.power)):
        lines.append(f"{k},{fmt(freq)},{fmt(power)}")
    _write_lines(path, lines)


def write_haar_power_csv(path, spectrum, meta: dict | None = None):
    """Total squared magnitude per wavelet index of a haar Spectrum."""
    power = np.abs(spectrum.coefficients) ** 2
    if power.ndim > 1:
        power = power.sum(axis=tuple(range(power.ndim - 1)))
    fields = {"units": "squared magnitude", "window": spectrum.window.describe(), **(meta or {})}
    lines = [meta_line("haar_power", fields), "wavelet,power"]
    for k, value in enumerate(power):
        lines.append(f"{k},{fmt(value)}")
    _write_lines(path, lines)


def write_coefficients_csv(path, spectrum, meta: dict | None = None):
    """Per-vector transform magnitudes: rows = bins, columns = vectors."""
    mags = np.abs(np.atleast_2d(spectrum.coefficients))
    fields = {"units": "coefficient magnitude", "kind": spectrum.kind,
              "window": spectrum.window.describe(), **(meta or {})}
    axis_name = "frequency" if spectrum.kind == "fourier" else "wavelet"
    lines = [meta_line("vector_coefficients", fields),
             axis_name + "," + ",".join(f"vector_{j}" for j in range(mags.shape[0]))]
    for k in range(mags.shape[1]):
        axis_value = fmt(spectrum.axis[k]) if spectrum.kind == "fourier" else str(int(spectrum.axis[k]))
        lines.append(axis_value + "," + ",".join(fmt(mags[j, k]) for j in range(mags.shape[0])))
    _write_lines(path, lines)


# ---------------------------------------------------------------------------
# sampling exports


def write_estimates_csv(path, reports, meta: dict | None = None):
    fields = {"rng": "philox keyed streams (seed, trajectory)", **(meta or {})}
    lines = [meta_line("estimates", fields),
             "estimator,t,j,j_prime,samples,estimate,stderr,seed"]
    for report in reports:
        params = report.params
        lines.append(",".join([
            report.estimator,
            fmt(params["t"]) if "t" in params else "",
            str(params.get("j", "")),
            str(params.get("j_prime", "")),
            str(report.samples),
            fmt(report.estimate),
            fmt(report.stderr),
            str(report.seed),
        ]))
    _write_lines(path, lines)


def write_convergence_csv(path, rows, meta: dict | None = None):
    lines = [meta_line("convergence", {"units": "root mean squared error", **(meta or {})}),
             "samples,rmse"]
    for size, rmse in rows:
        lines.append(f"{size},{fmt(rmse)}")
    _write_lines(path, lines)


# ---------------------------------------------------------------------------
# resources


def write_resources_json(path, estimate):
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(estimate.to_dict(), handle, indent=2, sort_keys=True)
        handle.write("\n")
