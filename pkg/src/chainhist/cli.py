"""Batch front door: parse network/scenario files, run the
solve -> analyze -> sample -> resources pipeline, and emit figure-ready
CSV/JSON artifacts plus a run manifest.

Exit codes: 0 ok, 2 validation, 3 capacity, 4 numerical, 5 I/O.
"""

from __future__ import annotations

import argparse
import datetime
import hashlib
import json
import sys
import time
from dataclasses import dataclass, field
from importlib import resources as importlib_resources
from pathlib import Path

import numpy as np

from . import __version__, io
from .analysis import (
    WindowPolicy,
    haar_time,
    power_spectrum,
    scaled_singular_vectors,
    svd_history,
    transform_right_vectors,
)
from .errors import CapacityError, NumericalError, ValidationError
from .lde import OdeProblem, euler_step_history, normalize_history, stability_margin
from .models import (
    Distancing,
    InitialSpec,
    ModelSpec,
    Network,
    build_generator,
    make_initial_distribution,
)
from .qresource import ResourceInputs, eigenbasis_condition, estimate_resources, operator_norm
from .sampling import (
    InitialStateSampler,
    convergence_study,
    estimate_observable_mc,
    exact_observable,
    indicator_observable,
    node_count_observable,
    popcount_observable,
    table_observable,
)

SIGN_CONVENTION = "largest-entry-positive"
DEMO_NAMES = ("fig2", "fig3", "fig4", "opinion", "distancing")

_WINDOW_ALIASES = {
    "trunc-tail": "trunc_tail",
    "trunc-head": "trunc_head",
    "zero-pad": "zero_pad",
    "trunc_tail": "trunc_tail",
    "trunc_head": "trunc_head",
    "zero_pad": "zero_pad",
    "none": "none",
}


def _reject_unknown(mapping: dict, allowed: set, where: str):
    unknown = set(mapping) - allowed
    if unknown:
        raise ValidationError(f"unknown field '{sorted(unknown)[0]}' in {where}")


def _load_json(path: Path, what: str) -> dict:
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise ValidationError(f"{what} file not found: {path}") from None
    try:
        payload = json.loads(text)
    except json.JSONDecodeError as err:
        raise ValidationError(f"{what} file {path} is not valid JSON: {err}") from None
    if not isinstance(payload, dict):
        raise ValidationError(f"{what} file {path} must contain a JSON object")
    return payload


# ---------------------------------------------------------------------------
# network files


def _parse_initial(payload: dict, where: str) -> InitialSpec:
    _reject_unknown(payload, {"kind", "p", "weights", "index"}, where)
    if "kind" not in payload:
        raise ValidationError(f"missing field 'kind' in {where}")
    return InitialSpec(
        kind=payload["kind"],
        p=payload.get("p"),
        weights=payload.get("weights"),
        index=payload.get("index"),
    )


def parse_network(path) -> tuple[Network, ModelSpec, InitialSpec | None, list[str]]:
    """Load and validate a network/model document.

    Returns the network, the model spec, the bundled initial-distribution
    spec (if any), and a list of warnings (duplicate edges are merged by
    summing their rates, with a warning).
    """
    path = Path(path)
    payload = _load_json(path, "network")
    _reject_unknown(payload, {"version", "q", "n", "edges", "model", "initial"}, f"network file {path.name}")
    for key in ("q", "n", "edges", "model"):
        if key not in payload:
            raise ValidationError(f"missing field '{key}' in network file {path.name}")
    if payload.get("version", 1) != 1:
        raise ValidationError(f"unsupported network file version {payload['version']}")

    q, n = int(payload["q"]), int(payload["n"])
    model_doc = payload["model"]
    _reject_unknown(model_doc, {"kind", "r_IS", "distancing", "persuasion_rates"}, "network model")
    kind = model_doc.get("kind")
    if kind not in ("sis", "sis_distancing", "opinion"):
        raise ValidationError(f"unknown model kind '{kind}' in network file")
    if (kind in ("sis", "sis_distancing") and q != 2) or (kind == "opinion" and q != 3):
        raise ValidationError(f"model kind '{kind}' is incompatible with q={q}; built-in kinds need q in {{2, 3}}")

    warnings: list[str] = []
    merged: dict[tuple[int, int], float] = {}
    order: list[tuple[int, int]] = []
    for edge in payload["edges"]:
        _reject_unknown(edge, {"u", "v", "rate"}, "network edge")
        u, v, rate = int(edge["u"]), int(edge["v"]), float(edge["rate"])
        key = (min(u, v), max(u, v))
        if u == v:
            raise ValidationError(f"self-loop on node {u} in network file")
        if key in merged:
            warnings.append(f"duplicate edge {key} merged by rate summation")
            merged[key] += rate
        else:
            merged[key] = rate
            order.append(key)
    network = Network(n, q, tuple((u, v, merged[(u, v)]) for u, v in order))

    distancing = None
    if model_doc.get("distancing") is not None:
        ddoc = model_doc["distancing"]
        _reject_unknown(ddoc, {"threshold", "factor"}, "distancing rule")
        distancing = Distancing(int(ddoc["threshold"]), float(ddoc["factor"]))
    spec = ModelSpec(
        kind=kind,
        recovery_rate=float(model_doc.get("r_IS", 0.0)),
        distancing=distancing,
        persuasion_rates=model_doc.get("persuasion_rates"),
    )
    initial = None
    if "initial" in payload:
        initial = _parse_initial(payload["initial"], "network initial distribution")
    return network, spec, initial, warnings


# ---------------------------------------------------------------------------
# scenarios


@dataclass
class AnalysisConfig:
    rank: int = 8
    transforms: tuple[str, ...] = ()
    window: str = "trunc_tail"
    scaled_vectors: bool = True


@dataclass
class SamplingConfig:
    samples: int = 1000
    seed: int = 0
    observables: tuple[str, ...] = ("popcount",)
    convergence: dict | None = None


@dataclass
class ResourcesConfig:
    epsilon: float = 0.01
    norm: str = "one"
    kappa: float | None = None


@dataclass
class Scenario:
    network_path: Path
    t_start: float
    t_end: float
    steps: int
    warmup: float
    initial: InitialSpec | None
    analysis: AnalysisConfig | None
    sampling: SamplingConfig | None
    resources: ResourcesConfig | None
    out_dir: Path
    formats: tuple[str, ...]
    source_path: Path | None = None

    @property
    def h(self) -> float:
        return (self.t_end - self.t_start) / self.steps


def _parse_window(name: str) -> str:
    if name not in _WINDOW_ALIASES:
        raise ValidationError(f"unknown window policy '{name}', expected one of {sorted(set(_WINDOW_ALIASES))}")
    return _WINDOW_ALIASES[name]


def parse_scenario(path) -> Scenario:
    path = Path(path)
    payload = _load_json(path, "scenario")
    _reject_unknown(
        payload,
        {"version", "network", "time", "warmup", "initial", "analysis", "sampling", "resources", "output"},
        f"scenario file {path.name}",
    )
    if payload.get("version", 1) != 1:
        raise ValidationError(f"unsupported scenario version {payload['version']}")
    for key in ("network", "time"):
        if key not in payload:
            raise ValidationError(f"missing field '{key}' in scenario file {path.name}")

    tdoc = payload["time"]
    _reject_unknown(tdoc, {"t_start", "t_end", "steps", "h"}, "scenario time grid")
    t_start = float(tdoc.get("t_start", 0.0))
    t_end = float(tdoc["t_end"]) if "t_end" in tdoc else None
    if t_end is None:
        raise ValidationError("scenario time grid needs t_end")
    if not (t_end > t_start >= 0.0):
        raise ValidationError(f"need t_end > t_start >= 0, got [{t_start}, {t_end}]")
    if ("steps" in tdoc) == ("h" in tdoc):
        raise ValidationError("scenario time grid needs exactly one of 'steps' or 'h'")
    if "steps" in tdoc:
        steps = int(tdoc["steps"])
    else:
        steps = int(round((t_end - t_start) / float(tdoc["h"])))
    if steps < 1:
        raise ValidationError(f"steps must be >= 1, got {steps}")

    warmup = float(payload.get("warmup", t_start))
    if warmup < 0:
        raise ValidationError("warmup duration must be >= 0")

    analysis = None
    if "analysis" in payload:
        adoc = payload["analysis"]
        _reject_unknown(adoc, {"rank", "transforms", "window", "scaled_vectors"}, "scenario analysis")
        transforms = tuple(adoc.get("transforms", ()))
        for t in transforms:
            if t not in ("fourier", "haar"):
                raise ValidationError(f"unknown transform '{t}', expected 'fourier' or 'haar'")
        analysis = AnalysisConfig(
            rank=int(adoc.get("rank", 8)),
            transforms=transforms,
            window=_parse_window(adoc.get("window", "trunc_tail")),
            scaled_vectors=bool(adoc.get("scaled_vectors", True)),
        )

    sampling = None
    if "sampling" in payload:
        sdoc = payload["sampling"]
        _reject_unknown(sdoc, {"samples", "seed", "observables", "convergence"}, "scenario sampling")
        convergence = sdoc.get("convergence")
        if convergence is not None:
            _reject_unknown(convergence, {"sizes", "replicates", "observable"}, "convergence study")
        sampling = SamplingConfig(
            samples=int(sdoc.get("samples", 1000)),
            seed=int(sdoc.get("seed", 0)),
            observables=tuple(sdoc.get("observables", ("popcount",))),
            convergence=convergence,
        )

    res = None
    if "resources" in payload:
        rdoc = payload["resources"]
        _reject_unknown(rdoc, {"epsilon", "norm", "kappa"}, "scenario resources")
        res = ResourcesConfig(
            epsilon=float(rdoc.get("epsilon", 0.01)),
            norm=str(rdoc.get("norm", "one")),
            kappa=None if rdoc.get("kappa") is None else float(rdoc["kappa"]),
        )

    odoc = payload.get("output", {})
    _reject_unknown(odoc, {"directory", "formats"}, "scenario output")
    out_dir = Path(odoc.get("directory", "runs/scenario"))
    formats = tuple(odoc.get("formats", ("csv", "json")))
    for fmt in formats:
        if fmt not in ("csv", "json", "svg"):
            raise ValidationError(f"unknown output format '{fmt}', expected csv, json, or svg")

    initial = None
    if "initial" in payload:
        initial = _parse_initial(payload["initial"], "scenario initial distribution")

    network_path = (path.parent / payload["network"]).resolve()
    return Scenario(
        network_path=network_path,
        t_start=t_start,
        t_end=t_end,
        steps=steps,
        warmup=warmup,
        initial=initial,
        analysis=analysis,
        sampling=sampling,
        resources=res,
        out_dir=out_dir,
        formats=formats,
        source_path=path,
    )


# ---------------------------------------------------------------------------
# observables from CLI syntax


def _parse_observable(token: str, network: Network):
    if token == "popcount":
        if network.q != 2:
            raise ValidationError("popcount needs a q = 2 model; use count:STATE instead")
        return popcount_observable(network.n)
    if token.startswith("count:"):
        return node_count_observable(network, int(token.split(":", 1)[1]))
    if token.startswith("indicator:"):
        return indicator_observable(int(token.split(":", 1)[1]))
    if token.startswith("file:"):
        table_path = Path(token.split(":", 1)[1])
        values = np.zeros(network.n_states)
        with open(table_path, "r", encoding="utf-8") as handle:
            for line in handle:
                line = line.strip()
                if not line or line.startswith("#") or line.startswith("state"):
                    continue
                state_str, value_str = line.split(",")
                values[int(state_str)] = float(value_str)
        return table_observable(values, name=f"file:{table_path.name}")
    raise ValidationError(f"unknown observable '{token}', expected popcount, indicator:K, or file:PATH")


def _parse_initial_flag(token: str) -> InitialSpec:
    if token == "uniform":
        return InitialSpec("uniform")
    if token.startswith("product:"):
        return InitialSpec("product", p=float(token.split(":", 1)[1]))
    if token.startswith("point:"):
        return InitialSpec("point_mass", index=int(token.split(":", 1)[1]))
    if token.startswith("file:"):
        payload = _load_json(Path(token.split(":", 1)[1]), "initial distribution")
        return _parse_initial(payload, "initial distribution file")
    raise ValidationError(
        f"unknown initial spec '{token}', expected product:P, uniform, point:K, or file:PATH"
    )


# ---------------------------------------------------------------------------
# pipeline


class _Manifest:
    def __init__(self, scenario: Scenario | None):
        self.started = time.perf_counter()
        self.doc = {
            "tool": f"chainhist {__version__}",
            "created_utc": datetime.datetime.now(datetime.timezone.utc).isoformat(),
            "scenario_sha256": None,
            "stages": {},
            "files": {},
            "settings": {
                "svd_sign_convention": SIGN_CONVENTION,
                "float_format": ".17g",
                "rng": "philox keyed streams (seed, trajectory index)",
            },
            "warnings": [],
            "status": "incomplete",
        }
        if scenario is not None and scenario.source_path is not None:
            self.doc["scenario_sha256"] = hashlib.sha256(
                scenario.source_path.read_bytes()
            ).hexdigest()

    def stage(self, name: str, seconds: float):
        self.doc["stages"][name] = {"seconds": seconds}

    def add_file(self, path: Path, out_dir: Path):
        self.doc["files"][str(path.relative_to(out_dir))] = {
            "sha256": io.sha256_path(path),
            "bytes": path.stat().st_size,
        }

    def warn(self, message: str):
        self.doc["warnings"].append(message)

    def write(self, out_dir: Path, status: str):
        self.doc["status"] = status
        self.doc["wall_clock_s"] = time.perf_counter() - self.started
        out_dir.mkdir(parents=True, exist_ok=True)
        with open(out_dir / "manifest.json", "w", encoding="utf-8") as handle:
            json.dump(self.doc, handle, indent=2, sort_keys=True)
            handle.write("\n")


def _maybe_svg(enabled: bool, out_dir: Path, name: str, plotter):
    if not enabled:
        return None
    try:
        import matplotlib
    except ImportError:
        raise ValidationError("svg output needs matplotlib (install extra 'plots')") from None
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    matplotlib.rcParams["svg.hashsalt"] = "chainhist"
    fig = plt.figure(figsize=(6.0, 4.0))
    plotter(fig)
    path = out_dir / name
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return path


def run_pipeline(scenario: Scenario, stages: tuple[str, ...] = ("solve", "analyze", "sample", "resources")) -> dict:
    """Execute the requested stages in order; returns the manifest document.

    The manifest is written even when a stage fails (status records the
    error); data files are deterministic for a fixed scenario and seed.
    """
    manifest = _Manifest(scenario)
    out_dir = scenario.out_dir
    out_dir.mkdir(parents=True, exist_ok=True)
    svg = "svg" in scenario.formats
    try:
        network, model_spec, file_initial, warnings = parse_network(scenario.network_path)
        for message in warnings:
            manifest.warn(message)
        initial = scenario.initial or file_initial
        if initial is None:
            raise ValidationError("no initial distribution: provide one in the scenario or network file")

        generator = build_generator(network, model_spec)
        manifest.doc["settings"]["model_hash"] = generator.content_hash()
        h = scenario.h

        # --- solve ---------------------------------------------------------
        started = time.perf_counter()
        x0 = make_initial_distribution(initial, network.n, network.q)
        margin = stability_margin(generator, h)
        if margin > 1.0:
            manifest.warn(
                f"stability margin h*max|Q_jj| = {margin:.3g} > 1; "
                "columns may go negative (reported, not clipped)"
            )
        if scenario.warmup > 0:
            warm_steps = max(1, int(round(scenario.warmup / h)))
            warm = euler_step_history(
                OdeProblem(generator, x0, t_max=scenario.warmup, steps=warm_steps)
            )
            window_start = warm.data[:, -1]
        else:
            window_start = x0
        problem = OdeProblem(
            generator,
            window_start,
            t_max=scenario.t_end - scenario.t_start,
            steps=scenario.steps,
            t_offset=scenario.t_start,
        )
        history = euler_step_history(problem)
        io.write_history_csv(out_dir / "history.csv", history, network.n, network.q)
        io.write_history_binary(out_dir / "history.bin", history)
        _maybe_svg(svg, out_dir, "history.svg", lambda fig: _plot_history(fig, history))
        manifest.stage("solve", time.perf_counter() - started)

        # --- analyze -------------------------------------------------------
        if scenario.analysis is not None and "analyze" in stages:
            started = time.perf_counter()
            cfg = scenario.analysis
            manifest.doc["settings"]["window_policy"] = cfg.window
            decomposition = svd_history(history, rank=cfg.rank)
            meta = {
                "units": "probability-amplitude",
                "model_hash": history.model_hash,
                "window": cfg.window,
                "sign_convention": SIGN_CONVENTION,
            }
            io.write_singular_values_csv(out_dir / "singular_values.csv", decomposition.singular_values, meta)
            if cfg.scaled_vectors:
                left, right = scaled_singular_vectors(decomposition)
                scale_tag = "sqrt_sigma"
            else:
                left, right = decomposition.left, decomposition.right
                scale_tag = "none"
            io.write_vectors_csv(
                out_dir / "left_vectors.csv", left, io.state_labels(network.n, network.q),
                "state", {**meta, "scaling": scale_tag, "axis": "state"},
            )
            io.write_vectors_csv(
                out_dir / "right_vectors.csv", right,
                [io.fmt(t) for t in history.times], "time",
                {**meta, "scaling": scale_tag, "axis": "time"},
            )
            _maybe_svg(svg, out_dir, "singular_values.svg",
                       lambda fig: _plot_singular_values(fig, decomposition.singular_values))
            window = WindowPolicy(cfg.window)
            normalized = normalize_history(history)
            if "fourier" in cfg.transforms:
                ps = power_spectrum(normalized, WindowPolicy("none"))
                io.write_power_spectrum_csv(out_dir / "spectrum.csv", ps, meta)
                spectra = transform_right_vectors(decomposition, "fourier", WindowPolicy("none"), history.h)
                io.write_coefficients_csv(out_dir / "right_vector_spectrum.csv", spectra, meta)
                _maybe_svg(svg, out_dir, "spectrum.svg", lambda fig: _plot_power(fig, ps))
            if "haar" in cfg.transforms:
                wavelets = haar_time(normalized, window)
                io.write_haar_power_csv(out_dir / "haar.csv", wavelets, meta)
                vector_wavelets = transform_right_vectors(decomposition, "haar", window, history.h)
                io.write_coefficients_csv(out_dir / "right_vector_haar.csv", vector_wavelets, meta)
            manifest.stage("analyze", time.perf_counter() - started)

        # --- sample --------------------------------------------------------
        if scenario.sampling is not None and "sample" in stages:
            started = time.perf_counter()
            cfg = scenario.sampling
            sampler = InitialStateSampler(initial, network.n, network.q)
            reports = []
            horizon = scenario.t_end
            for obs_token in cfg.observables:
                observable = _parse_observable(obs_token, network)
                report = estimate_observable_mc(
                    generator, sampler, observable, horizon, cfg.samples, cfg.seed
                )
                exact = exact_observable(history, observable, history.n_steps)
                report.params["exact"] = exact
                reports.append(report)
            io.write_estimates_csv(out_dir / "estimates.csv", reports,
                                   {"model_hash": history.model_hash})
            if cfg.convergence is not None:
                sizes = [int(s) for s in cfg.convergence.get("sizes", (100, 1000, 10000))]
                reps = cfg.convergence.get("replicates", 16)
                reps = [int(r) for r in reps] if isinstance(reps, list) else int(reps)
                observable = _parse_observable(cfg.convergence.get("observable", "popcount"), network)
                reference = exact_observable(history, observable, history.n_steps)
                rows = convergence_study(
                    generator, sampler, observable, horizon, reference, sizes, reps, cfg.seed
                )
                io.write_convergence_csv(out_dir / "convergence.csv", rows,
                                         {"model_hash": history.model_hash})
            manifest.stage("sample", time.perf_counter() - started)

        # --- resources -----------------------------------------------------
        if scenario.resources is not None and "resources" in stages:
            started = time.perf_counter()
            cfg = scenario.resources
            manifest.doc["settings"]["norm_kind"] = cfg.norm
            kappa = cfg.kappa
            if kappa is None:
                if generator.dimension > 64:
                    raise ValidationError(
                        "kappa must be supplied in the scenario for models above 64 states"
                    )
                kappa = eigenbasis_condition(generator)
            inputs = ResourceInputs(
                epsilon=cfg.epsilon,
                t_max=scenario.t_end,
                matrix_norm=operator_norm(generator, cfg.norm),
                sparsity=generator.sparsity,
                kappa=kappa,
                dimension=generator.dimension,
                x0_norm=float(np.linalg.norm(x0)),
                norm_kind=cfg.norm,
            )
            io.write_resources_json(out_dir / "resources.json", estimate_resources(inputs))
            manifest.stage("resources", time.perf_counter() - started)

        for path in sorted(out_dir.iterdir()):
            if path.is_file() and path.name != "manifest.json":
                manifest.add_file(path, out_dir)
        manifest.write(out_dir, "ok")
        return manifest.doc
    except Exception as err:
        manifest.write(out_dir, f"failed: {err}")
        raise


def _plot_history(fig, history):
    ax = fig.add_subplot(111)
    shown = np.maximum(history.data, 1e-12)
    im = ax.imshow(np.log10(shown), aspect="auto", origin="lower",
                   extent=(history.times[0], history.times[-1], 0, history.n_states))
    ax.set_xlabel("time")
    ax.set_ylabel("state index")
    fig.colorbar(im, ax=ax, label="log10 probability")


def _plot_singular_values(fig, singular_values):
    ax = fig.add_subplot(111)
    ax.semilogy(np.arange(singular_values.size), singular_values, marker="o")
    ax.set_xlabel("index")
    ax.set_ylabel("singular value")


def _plot_power(fig, ps):
    ax = fig.add_subplot(111)
    keep = min(ps.power.size, 64)
    ax.semilogy(ps.frequencies[:keep], np.maximum(ps.power[:keep], 1e-18), marker=".")
    ax.set_xlabel("frequency (cycles per unit time)")
    ax.set_ylabel("power")


# ---------------------------------------------------------------------------
# argument parsing


def _scenario_from_flags(args) -> Scenario:
    if args.network is None:
        raise ValidationError("--network is required without a scenario file")
    if (args.steps is None) == (args.h_step is None):
        raise ValidationError("give exactly one of --steps or --h")
    t_start, t_end = float(args.t0), float(args.t1)
    if not (t_end > t_start >= 0):
        raise ValidationError(f"need --t1 > --t0 >= 0, got [{t_start}, {t_end}]")
    steps = int(args.steps) if args.steps is not None else int(round((t_end - t_start) / float(args.h_step)))
    analysis = None
    if getattr(args, "with_analysis", False):
        transforms = tuple(t for t in (args.transform or ()) if t)
        transforms = tuple("fourier" if t == "fft" else t for t in transforms)
        analysis = AnalysisConfig(
            rank=args.rank,
            transforms=transforms,
            window=_parse_window(args.window),
        )
    sampling = None
    if getattr(args, "with_sampling", False):
        sampling = SamplingConfig(
            samples=args.samples,
            seed=args.seed,
            observables=tuple(args.observable or ("popcount",)),
        )
    res = ResourcesConfig() if getattr(args, "with_resources", False) else None
    return Scenario(
        network_path=Path(args.network),
        t_start=t_start,
        t_end=t_end,
        steps=steps,
        warmup=float(args.warmup) if args.warmup is not None else t_start,
        initial=_parse_initial_flag(args.initial) if args.initial else None,
        analysis=analysis,
        sampling=sampling,
        resources=res,
        out_dir=Path(args.out),
        formats=tuple(args.format.split(",")) if args.format else ("csv", "json"),
    )


def _add_common_flags(sub):
    sub.add_argument("--network", metavar="PATH", help="network/model JSON file")
    sub.add_argument("--t0", type=float, default=0.0, help="analysis window start")
    sub.add_argument("--t1", type=float, default=1.0, help="analysis window end")
    sub.add_argument("--steps", type=int, default=None, help="step count for the window")
    sub.add_argument("--h", dest="h_step", type=float, default=None, help="step size (alternative to --steps)")
    sub.add_argument("--warmup", type=float, default=None, help="warm-up duration before t0 (default: t0)")
    sub.add_argument("--initial", default=None, metavar="SPEC",
                     help="product:P | uniform | point:K | file:PATH (default: from network file)")
    sub.add_argument("--out", default="runs/out", metavar="DIR")
    sub.add_argument("--format", default=None, metavar="LIST", help="comma-set of csv,json,svg")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="chainhist",
        description="Markov-chain history matrices: solve, analyze, sample, size.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    solve = sub.add_parser("solve", help="solve the history matrix and export it")
    _add_common_flags(solve)
    solve.set_defaults(func=_cmd_solve)

    analyze = sub.add_parser("analyze", help="solve then run SVD/transforms")
    _add_common_flags(analyze)
    analyze.add_argument("--rank", type=int, default=8)
    analyze.add_argument("--transform", action="append", choices=["fft", "fourier", "haar"],
                         help="repeatable; fft is an alias for fourier")
    analyze.add_argument("--window", default="trunc-tail",
                         choices=["trunc-tail", "trunc-head", "zero-pad", "none"])
    analyze.set_defaults(func=_cmd_analyze)

    sample = sub.add_parser("sample", help="Monte Carlo estimates against the exact solve")
    _add_common_flags(sample)
    sample.add_argument("--samples", type=int, default=1000)
    sample.add_argument("--seed", type=int, default=0)
    sample.add_argument("--observable", action="append", metavar="SPEC",
                        help="popcount | indicator:K | file:PATH (repeatable)")
    sample.set_defaults(func=_cmd_sample)

    res = sub.add_parser("resources", help="resource arithmetic for the model")
    _add_common_flags(res)
    res.set_defaults(func=_cmd_resources)

    run = sub.add_parser("run", help="full pipeline from a scenario file")
    run.add_argument("scenario", metavar="SCENARIO", help="scenario JSON file")
    run.add_argument("--out", default=None, metavar="DIR", help="override the scenario output directory")
    run.add_argument("--seed", type=int, default=None, help="override the sampling seed")
    run.add_argument("--format", default=None, metavar="LIST")
    run.set_defaults(func=_cmd_run)

    demo = sub.add_parser("demo", help="run a bundled scenario")
    demo.add_argument("name", choices=DEMO_NAMES)
    demo.add_argument("--out", default=None, metavar="DIR")
    demo.add_argument("--seed", type=int, default=None)
    demo.add_argument("--format", default=None, metavar="LIST")
    demo.set_defaults(func=_cmd_demo)
    return parser


def _cmd_solve(args) -> int:
    scenario = _scenario_from_flags(args)
    run_pipeline(scenario, stages=("solve",))
    print(f"history written to {scenario.out_dir}")
    return 0


def _cmd_analyze(args) -> int:
    args.with_analysis = True
    scenario = _scenario_from_flags(args)
    run_pipeline(scenario, stages=("solve", "analyze"))
    print(f"analysis written to {scenario.out_dir}")
    return 0


def _cmd_sample(args) -> int:
    args.with_sampling = True
    scenario = _scenario_from_flags(args)
    run_pipeline(scenario, stages=("solve", "sample"))
    print(f"estimates written to {scenario.out_dir}")
    return 0


def _cmd_resources(args) -> int:
    args.with_resources = True
    scenario = _scenario_from_flags(args)
    run_pipeline(scenario, stages=("solve", "resources"))
    print(f"resource sheet written to {scenario.out_dir}")
    return 0


def _apply_overrides(scenario: Scenario, args) -> Scenario:
    if args.out is not None:
        scenario.out_dir = Path(args.out)
    if args.format is not None:
        scenario.formats = tuple(args.format.split(","))
    if args.seed is not None and scenario.sampling is not None:
        scenario.sampling.seed = args.seed
    return scenario


def _cmd_run(args) -> int:
    scenario = _apply_overrides(parse_scenario(args.scenario), args)
    doc = run_pipeline(scenario)
    print(f"pipeline ok: {len(doc['files'])} files in {scenario.out_dir}")
    return 0


def _cmd_demo(args) -> int:
    data_root = importlib_resources.files("chainhist").joinpath("data")
    with importlib_resources.as_file(data_root.joinpath(f"scenarios/{args.name}.json")) as path:
        scenario = parse_scenario(path)
    if args.out is None:
        args.out = f"runs/{args.name}"
    scenario = _apply_overrides(scenario, args)
    doc = run_pipeline(scenario)
    print(f"demo '{args.name}' ok: {len(doc['files'])} files in {scenario.out_dir}")
    return 0


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ValidationError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except CapacityError as err:
        print(f"capacity error: {err}", file=sys.stderr)
        return 3
    except NumericalError as err:
        print(f"numerical error: {err}", file=sys.stderr)
        return 4
    except OSError as err:
        print(f"i/o error: {err}", file=sys.stderr)
        return 5


if __name__ == "__main__":
    sys.exit(main())
