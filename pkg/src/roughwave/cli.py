"""Command-line workbench: experiment configs, pipelines, artifacts, manifests.

This module glues the library together into reproducible experiment runs.  A
run is described by an :class:`ExperimentConfig` (built from a flat
``key = value`` config file, command-line flags, or both), executed by
:func:`run`, and summarised by a :class:`RunManifest` written as
``manifest.json`` in the output directory.  The manifest is written last and
atomically, so a directory containing one is always a completed run.

Also hosted here: the binary field-series container used to persist solver
output (:func:`save_field_series` / :func:`load_field_series`) and the CSV
report round-trip helpers (:func:`write_reports` / :func:`read_reports`).
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import json
import os
import struct
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from . import __version__
from .counting import (
    COUNT_LEMMAS,
    OTHER_LEMMAS,
    SUM_LEMMAS,
    CaseSpec,
    CountingReport,
    tensor_unfold_norms,
    verify_bound,
)
from .fields import FieldSeries, SpectralField
from .lattice import TruncatedLattice
from .noise import TimeGrid, sample_noise_path
from .norms import default_trilinear_margins, ensemble_slope, hs_norm, trilinear_ratio
from .solver import SolverConfig, solve
from .symbols import SYMBOL_NAMES, build_symbol_set, sigma_curve

__all__ = [
    "ArtifactRecord",
    "ConfigError",
    "ExperimentConfig",
    "RunManifest",
    "StorageError",
    "load_field_series",
    "load_manifest",
    "main",
    "parse_config",
    "read_reports",
    "run",
    "save_field_series",
    "save_manifest",
    "thread_cap",
    "write_reports",
]


# ---------------------------------------------------------------------------
# binary field-series storage
# ---------------------------------------------------------------------------

_MAGIC = b"RWV1"
_FORMAT_VERSION = 1
# Header layout (30 bytes total):
#   offset 0:  4-byte magic "RWV1"
#   offset 4:  "<HII" -> (format version, lattice cutoff, frame count)
#   offset 14: "<dd"  -> (time step, final time)
# Frames follow as little-endian complex128 (interleaved re/im float64),
# one frame per time sample, coefficients in lattice mode order.
_HEAD_META = struct.Struct("<HII")
_HEAD_TIME = struct.Struct("<dd")
_HEADER_SIZE = 4 + _HEAD_META.size + _HEAD_TIME.size


class StorageError(ValueError):
    """A field-series file is malformed, truncated, or not ours."""


def _canonical_times(T: float, n: int) -> np.ndarray:
    if n == 0:
        return np.zeros(0, dtype=float)
    if n == 1:
        return np.array([T], dtype=float)
    return np.linspace(0.0, T, n)


def save_field_series(series: FieldSeries, path: Union[str, os.PathLike]) -> Path:
    """Write ``series`` to ``path`` in the RWV1 container format.

    The container stores only (dt, T, frame count); the time grid must
    therefore be the canonical uniform grid on ``[0, T]`` (this is what the
    solver and samplers produce).  Non-canonical grids are rejected rather
    than silently altered on reload.
    """
    times = np.asarray(series.times, dtype=float)
    n = times.shape[0]
    T = float(times[-1]) if n else 0.0
    dt = float(times[1] - times[0]) if n > 1 else 0.0
    canonical = _canonical_times(T, n)
    if n and not np.allclose(times, canonical, rtol=0.0, atol=1e-9 * (1.0 + abs(T))):
        raise StorageError(
            "field series does not live on a uniform time grid starting at 0; "
            "the RWV1 container cannot represent it"
        )
    frames = np.ascontiguousarray(series.frames, dtype="<c16")
    out = Path(path)
    payload = bytearray()
    payload += _MAGIC
    payload += _HEAD_META.pack(_FORMAT_VERSION, int(series.lattice.cutoff), n)
    payload += _HEAD_TIME.pack(dt, T)
    payload += frames.tobytes()
    out.write_bytes(bytes(payload))
    return out


def load_field_series(path: Union[str, os.PathLike]) -> FieldSeries:
    """Read an RWV1 container back into a :class:`FieldSeries`."""
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER_SIZE:
        raise StorageError(f"file too short for an RWV1 header: {len(raw)} bytes")
    if raw[:4] != _MAGIC:
        raise StorageError(f"bad magic number {raw[:4]!r}; expected {_MAGIC!r}")
    version, cutoff, n = _HEAD_META.unpack_from(raw, 4)
    if version != _FORMAT_VERSION:
        raise StorageError(f"unsupported container version {version}")
    dt, T = _HEAD_TIME.unpack_from(raw, 4 + _HEAD_META.size)
    lattice = TruncatedLattice(int(cutoff))
    expected = _HEADER_SIZE + n * lattice.size * 16
    if len(raw) != expected:
        raise StorageError(
            f"truncated or oversized container: {len(raw)} bytes, expected {expected}"
        )
    frames = np.frombuffer(raw, dtype="<c16", count=n * lattice.size, offset=_HEADER_SIZE)
    frames = frames.reshape(n, lattice.size).astype(np.complex128)
    del dt  # dt is implied by (T, n); stored for readers that want it directly
    return FieldSeries(lattice, _canonical_times(T, n), frames)


# ---------------------------------------------------------------------------
# experiment configuration
# ---------------------------------------------------------------------------


class ConfigError(ValueError):
    """An experiment configuration is invalid; nothing has been executed."""


_SUBCOMMANDS = ("simulate", "symbols", "regularity", "counting", "trilinear", "tensor", "report")

_TRILINEAR_REGIMES = ("tri1", "tri2", "tri3", "tri4")

_ALL_CASE_NAMES = tuple(sorted({*COUNT_LEMMAS, *SUM_LEMMAS, *OTHER_LEMMAS}))

_DEFAULT_CUTOFFS: Dict[str, Tuple[int, ...]] = {
    "simulate": (32,),
    "symbols": (32,),
    "regularity": (256,),
    "counting": (),
    "trilinear": (16, 32, 64),
    "tensor": (4, 8),
    "report": (),
}

# Every key accepted in a config file, with the parser used for its value.
_CONFIG_KEYS = (
    "subcommand",
    "alpha",
    "cutoff",
    "T",
    "dt",
    "ensemble",
    "seed",
    "symbol",
    "regime",
    "s",
    "b",
    "eps",
    "delta",
    "cases",
    "method",
    "out",
)


def _split_list(text: str) -> Tuple[str, ...]:
    return tuple(part.strip() for part in text.split(",") if part.strip())


def _parse_floats(text: str, key: str) -> Tuple[float, ...]:
    try:
        return tuple(float(tok) for tok in _split_list(text))
    except ValueError as exc:
        raise ConfigError(f"{key}: expected comma-separated numbers, got {text!r}") from exc


def _parse_ints(text: str, key: str) -> Tuple[int, ...]:
    try:
        return tuple(int(tok) for tok in _split_list(text))
    except ValueError as exc:
        raise ConfigError(f"{key}: expected comma-separated integers, got {text!r}") from exc


@dataclass(frozen=True)
class ExperimentConfig:
    """A fully validated description of one workbench run.

    All fields have CLI flags and config-file keys of the same name
    (``cutoffs`` / ``s_grid`` etc. use the keys ``cutoff`` / ``s``).  Grid
    fields left empty fall back to subcommand-specific defaults at run time.
    Validation happens here, before any work starts.
    """

    subcommand: str
    alpha: float = 0.3
    cutoffs: Optional[Tuple[int, ...]] = None
    T: float = 0.5
    dt: Optional[float] = None
    ensemble: int = 4
    seed: int = 0
    symbol: str = "linear"
    regime: str = "tri1"
    s_grid: Tuple[float, ...] = ()
    b_grid: Tuple[float, ...] = ()
    eps_grid: Tuple[float, ...] = ()
    delta_grid: Tuple[float, ...] = ()
    cases: Optional[Tuple[str, ...]] = None
    method: str = "factorized"
    out: Optional[str] = None

    def __post_init__(self) -> None:
        if self.subcommand not in _SUBCOMMANDS:
            raise ConfigError(
                f"unknown subcommand {self.subcommand!r}; choose from {_SUBCOMMANDS}"
            )
        if not (0.0 < self.alpha < 0.5):
            raise ConfigError(f"alpha must lie in (0, 1/2), got {self.alpha}")
        if self.cutoffs is None:
            object.__setattr__(self, "cutoffs", _DEFAULT_CUTOFFS[self.subcommand])
        cuts = tuple(int(c) for c in self.cutoffs)
        object.__setattr__(self, "cutoffs", cuts)
        for c in cuts:
            if not (1 <= c <= 4096):
                raise ConfigError(f"cutoff must lie in [1, 4096], got {c}")
        if not (self.T > 0.0):
            raise ConfigError(f"T must be positive, got {self.T}")
        if self.dt is not None:
            if not (0.0 < self.dt <= self.T):
                raise ConfigError(f"dt must lie in (0, T], got {self.dt}")
            steps = self.T / self.dt
            if abs(steps - round(steps)) > 1e-6 * max(1.0, steps):
                raise ConfigError(
                    f"T/dt must be an integer number of steps, got {steps!r}"
                )
        if self.ensemble < 1:
            raise ConfigError(f"ensemble must be >= 1, got {self.ensemble}")
        if self.seed < 0:
            raise ConfigError(f"seed must be >= 0, got {self.seed}")
        if self.symbol not in SYMBOL_NAMES:
            raise ConfigError(f"unknown symbol {self.symbol!r}; choose from {SYMBOL_NAMES}")
        if self.regime not in _TRILINEAR_REGIMES:
            raise ConfigError(
                f"unknown trilinear regime {self.regime!r}; choose from {_TRILINEAR_REGIMES}"
            )
        if self.method not in ("factorized", "naive"):
            raise ConfigError(f"method must be 'factorized' or 'naive', got {self.method!r}")
        if self.cases is not None:
            object.__setattr__(self, "cases", tuple(self.cases))
            for name in self.cases:
                if name not in _ALL_CASE_NAMES:
                    raise ConfigError(
                        f"unknown counting case {name!r}; choose from {_ALL_CASE_NAMES}"
                    )
        for label, grid in (
            ("s", self.s_grid),
            ("b", self.b_grid),
            ("eps", self.eps_grid),
            ("delta", self.delta_grid),
        ):
            vals = tuple(float(v) for v in grid)
            object.__setattr__(self, f"{label}_grid", vals)
            for v in vals:
                if not np.isfinite(v):
                    raise ConfigError(f"{label} grid contains a non-finite value: {v}")
        if self.out is None:
            object.__setattr__(self, "out", f"{self.subcommand}-run")
        if not str(self.out):
            raise ConfigError("output directory must be a non-empty path")


def parse_config(text: str) -> Dict[str, str]:
    """Parse flat ``key = value`` config text into a raw string mapping.

    Blank lines and ``#`` comments are ignored.  Unknown and duplicate keys
    are errors: a config file that is not fully understood is not executed.
    """
    raw: Dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, value = stripped.split("=", 1)
        key = key.strip()
        if key not in _CONFIG_KEYS:
            raise ConfigError(f"line {lineno}: unknown config key {key!r}")
        if key in raw:
            raise ConfigError(f"line {lineno}: duplicate config key {key!r}")
        raw[key] = value.strip()
    return raw


def _config_from_raw(raw: Mapping[str, str], subcommand: Optional[str] = None) -> ExperimentConfig:
    """Build an :class:`ExperimentConfig` from raw string values."""
    raw = dict(raw)
    file_sub = raw.pop("subcommand", None)
    if subcommand is None:
        subcommand = file_sub
    elif file_sub is not None and file_sub != subcommand:
        raise ConfigError(
            f"config file names subcommand {file_sub!r} but {subcommand!r} was requested"
        )
    if subcommand is None:
        raise ConfigError("no subcommand given (config key 'subcommand' or CLI argument)")

    kwargs: Dict[str, object] = {"subcommand": subcommand}
    converters: Dict[str, Callable[[str], object]] = {
        "alpha": float,
        "cutoff": lambda v: _parse_ints(v, "cutoff"),
        "T": float,
        "dt": float,
        "ensemble": int,
        "seed": int,
        "symbol": str,
        "regime": str,
        "s": lambda v: _parse_floats(v, "s"),
        "b": lambda v: _parse_floats(v, "b"),
        "eps": lambda v: _parse_floats(v, "eps"),
        "delta": lambda v: _parse_floats(v, "delta"),
        "cases": _split_list,
        "method": str,
        "out": str,
    }
    names = {
        "cutoff": "cutoffs",
        "s": "s_grid",
        "b": "b_grid",
        "eps": "eps_grid",
        "delta": "delta_grid",
    }
    for key, value in raw.items():
        conv = converters.get(key)
        if conv is None:
            raise ConfigError(f"unknown config key {key!r}")
        try:
            kwargs[names.get(key, key)] = conv(value)
        except ConfigError:
            raise
        except ValueError as exc:
            raise ConfigError(f"{key}: could not parse {value!r} ({exc})") from exc
    return ExperimentConfig(**kwargs)  # type: ignore[arg-type]


def _config_echo(config: ExperimentConfig) -> Dict[str, object]:
    echo: Dict[str, object] = {}
    for f in dataclasses.fields(config):
        value = getattr(config, f.name)
        if isinstance(value, tuple):
            value = list(value)
        echo[f.name] = value
    return echo


# ---------------------------------------------------------------------------
# CSV reports
# ---------------------------------------------------------------------------

_REPORT_COLUMNS = ("case", "scales", "lhs", "rhs", "ratio", "seconds")


def _format_report_row(report: CountingReport) -> Dict[str, str]:
    return {
        "case": report.case.lemma,
        "scales": "x".join(str(int(n)) for n in report.scales),
        "lhs": repr(float(report.lhs)),
        "rhs": repr(float(report.rhs)),
        "ratio": format(float(report.ratio), ".6g"),
        "seconds": format(float(report.seconds), ".6f"),
    }


def write_reports(
    reports: Sequence[Union[CountingReport, Mapping[str, str]]],
    path: Union[str, os.PathLike],
) -> Path:
    """Write counting reports as a CSV file with a fixed column order.

    Rows may be :class:`CountingReport` objects (formatted here: exact float
    reprs for lhs/rhs, six significant digits for the ratio) or string
    mappings as returned by :func:`read_reports`, which are written back
    verbatim so that parse -> write is byte-for-byte idempotent.
    """
    out = Path(path)
    with open(out, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(_REPORT_COLUMNS)
        for entry in reports:
            if isinstance(entry, CountingReport):
                row = _format_report_row(entry)
            else:
                row = {col: str(entry[col]) for col in _REPORT_COLUMNS}
            writer.writerow([row[col] for col in _REPORT_COLUMNS])
    return out


def read_reports(path: Union[str, os.PathLike]) -> List[Dict[str, str]]:
    """Parse a report CSV back into a list of string-valued row mappings."""
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or tuple(reader.fieldnames) != _REPORT_COLUMNS:
            raise StorageError(
                f"unexpected report columns {reader.fieldnames!r} in {path}"
            )
        return [dict(row) for row in reader]


def _write_csv(path: Path, columns: Sequence[str], rows: Iterable[Sequence[object]]) -> Path:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_cell(v) for v in row])
    return path


def _cell(value: object) -> str:
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (np.floating,)):
        return repr(float(value))
    if isinstance(value, (np.integer,)):
        return str(int(value))
    if value is None:
        return ""
    return str(value)


# ---------------------------------------------------------------------------
# run manifest
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ArtifactRecord:
    """One output file of a run: its path (relative to the run directory),
    SHA-256 checksum, and size in bytes."""

    path: str
    sha256: str
    bytes: int


@dataclass(frozen=True)
class RunManifest:
    """Summary of a completed run, stored as ``manifest.json``.

    ``started_at`` and ``wall_seconds`` are wall-time fields; everything else
    is a pure function of the configuration (and code version).
    """

    subcommand: str
    version: str
    config: Dict[str, object]
    started_at: str
    wall_seconds: float
    artifacts: Tuple[ArtifactRecord, ...]


_MANIFEST_NAME = "manifest.json"


def _sha256_file(path: Path) -> Tuple[str, int]:
    digest = hashlib.sha256()
    data = path.read_bytes()
    digest.update(data)
    return digest.hexdigest(), len(data)


def _artifact_record(run_dir: Path, rel_path: str) -> ArtifactRecord:
    digest, size = _sha256_file(run_dir / rel_path)
    return ArtifactRecord(path=rel_path, sha256=digest, bytes=size)


def save_manifest(manifest: RunManifest, run_dir: Union[str, os.PathLike]) -> Path:
    """Atomically write ``manifest.json`` into ``run_dir`` (write temp, rename)."""
    run_dir = Path(run_dir)
    payload = {
        "subcommand": manifest.subcommand,
        "version": manifest.version,
        "config": manifest.config,
        "started_at": manifest.started_at,
        "wall_seconds": manifest.wall_seconds,
        "artifacts": [dataclasses.asdict(a) for a in manifest.artifacts],
    }
    text = json.dumps(payload, indent=2, sort_keys=True) + "\n"
    final = run_dir / _MANIFEST_NAME
    tmp = run_dir / (_MANIFEST_NAME + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, final)
    return final


def load_manifest(run_dir: Union[str, os.PathLike], verify: bool = True) -> RunManifest:
    """Load ``manifest.json`` from ``run_dir``.

    With ``verify=True`` every listed artifact must exist and match its
    recorded checksum; a mismatch raises :class:`StorageError`.  A missing
    manifest raises :class:`ConfigError`: the directory is not a completed
    run.
    """
    run_dir = Path(run_dir)
    path = run_dir / _MANIFEST_NAME
    if not path.is_file():
        raise ConfigError(f"{run_dir} has no {_MANIFEST_NAME}; not a completed run")
    try:
        payload = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise StorageError(f"corrupt manifest in {run_dir}: {exc}") from exc
    try:
        manifest = RunManifest(
            subcommand=str(payload["subcommand"]),
            version=str(payload["version"]),
            config=dict(payload["config"]),
            started_at=str(payload["started_at"]),
            wall_seconds=float(payload["wall_seconds"]),
            artifacts=tuple(
                ArtifactRecord(
                    path=str(a["path"]), sha256=str(a["sha256"]), bytes=int(a["bytes"])
                )
                for a in payload["artifacts"]
            ),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise StorageError(f"manifest in {run_dir} is missing fields: {exc}") from exc
    if verify:
        for record in manifest.artifacts:
            target = run_dir / record.path
            if not target.is_file():
                raise StorageError(f"artifact missing: {target}")
            digest, size = _sha256_file(target)
            if digest != record.sha256 or size != record.bytes:
                raise StorageError(f"artifact checksum mismatch: {target}")
    return manifest


# ---------------------------------------------------------------------------
# parallelism cap
# ---------------------------------------------------------------------------


def thread_cap() -> int:
    """Worker-thread cap from ``ROUGHWAVE_THREADS`` (default 1, minimum 1)."""
    raw = os.environ.get("ROUGHWAVE_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def _ordered_map(fn: Callable, items: Sequence) -> List:
    """Map ``fn`` over ``items`` preserving order, using at most
    :func:`thread_cap` worker threads."""
    cap = thread_cap()
    if cap <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=min(cap, len(items))) as pool:
        return list(pool.map(fn, items))


# ---------------------------------------------------------------------------
# counting defaults
# ---------------------------------------------------------------------------


def _counting_plan(
    name: str, alpha: float, horizon: float
) -> Tuple[CaseSpec, List[Tuple[int, ...]]]:
    """Default case template and scale grid for one counting family.

    Grids are sized so that the full default suite stays within the budget
    guard rails of the counting module on a single core.
    """
    doubling = [(n, n) for n in (4, 8, 16, 32, 64, 128)]
    if name in ("basic-hyp", "basic-ell"):
        return CaseSpec(lemma=name, scales=(4, 4)), doubling
    if name == "two-ball":
        return (
            CaseSpec(lemma=name, scales=(4, 4, 4)),
            [(n, n, n) for n in (4, 8, 16, 32, 64, 128)],
        )
    if name in ("cubic-i", "cubic-ii", "cubic-iii", "cubic-iv", "cubic-sup-1", "cubic-sup-2"):
        return CaseSpec(lemma=name, scales=(2, 2, 2)), [(2,) * 3, (4,) * 3, (8,) * 3]
    if name == "cubic-sum":
        return (
            CaseSpec(lemma=name, scales=(2, 2, 2), alpha=alpha, s=0.5),
            [(2,) * 3, (4,) * 3, (2, 4, 8), (8,) * 3],
        )
    if name == "special-cubic":
        return (
            CaseSpec(lemma=name, scales=(2, 2, 2), alpha=alpha),
            [(2,) * 3, (4,) * 3, (8,) * 3],
        )
    if name == "basic-resonant":
        return (
            CaseSpec(lemma=name, scales=(4,), alpha=alpha),
            [(n,) for n in (4, 8, 16, 32, 64, 128)],
        )
    if name == "quartic":
        return (
            CaseSpec(lemma=name, scales=(1,) * 4, alpha=alpha, s=round(-alpha - 0.1, 6)),
            [(1,) * 4, (2,) * 4, (4,) * 4, (8,) * 4],
        )
    if name == "quintic":
        return (
            CaseSpec(lemma=name, scales=(1,) * 5, alpha=alpha, s=0.6),
            [(1,) * 5, (2,) * 5, (4,) * 5],
        )
    if name == "septic":
        return (
            CaseSpec(lemma=name, scales=(1,) * 7, alpha=alpha, s=0.55, params={"nsum": 1}),
            [(1,) * 7, (2,) * 7, (4,) * 7],
        )
    if name == "sine-cancel":
        params = {
            "T": horizon,
            "fparams": {"s3": 0.3, "n3": (2, 1), "n4": (1, -2)},
        }
        return (
            CaseSpec(lemma=name, scales=(8,), params=params),
            [(n,) for n in (8, 16, 32, 64, 128)],
        )
    if name == "tensor":
        return (
            CaseSpec(lemma=name, scales=(4,) * 4, alpha=alpha, s=round(alpha + 0.06, 6)),
            [(4,) * 4, (8,) * 4],
        )
    raise ConfigError(f"unknown counting case {name!r}")


# ---------------------------------------------------------------------------
# pipelines
# ---------------------------------------------------------------------------


def _resolved_dt(config: ExperimentConfig) -> float:
    return config.dt if config.dt is not None else config.T / 64.0


def _run_simulate(config: ExperimentConfig, out: Path) -> List[str]:
    dt = _resolved_dt(config)
    nsteps = int(round(config.T / dt))
    artifacts: List[str] = []
    rows: List[Sequence[object]] = []
    for cutoff in config.cutoffs:
        lattice = TruncatedLattice(cutoff)
        grid = TimeGrid(dt, nsteps)

        def run_one(realization: int, cutoff: int = cutoff, lattice=lattice, grid=grid):
            path = sample_noise_path(lattice, grid, config.seed, realization)
            scfg = SolverConfig(
                alpha=config.alpha,
                cutoff=cutoff,
                T=config.T,
                dt=dt,
                seed=config.seed,
            )
            store = "all" if realization == 0 else "final"
            return solve(scfg, path=path, store=store)

        results = _ordered_map(run_one, list(range(config.ensemble)))
        for realization, result in enumerate(results):
            final = result.final_state
            final_norm = hs_norm(
                SpectralField(lattice, final.time, final.position), 0.0
            )
            rows.append(
                (
                    cutoff,
                    realization,
                    result.status,
                    result.blowup_time,
                    final_norm,
                )
            )
            if realization == 0 and result.series is not None:
                name = f"series-N{cutoff}.rwv"
                save_field_series(result.series, out / name)
                artifacts.append(name)
    _write_csv(
        out / "simulate.csv",
        ("cutoff", "realization", "status", "blowup_time", "final_l2"),
        rows,
    )
    artifacts.append("simulate.csv")
    return artifacts


def _run_symbols(config: ExperimentConfig, out: Path) -> List[str]:
    dt = _resolved_dt(config)
    nsteps = int(round(config.T / dt))
    rows: List[Sequence[object]] = []
    for cutoff in config.cutoffs:
        lattice = TruncatedLattice(cutoff)
        grid = TimeGrid(dt, nsteps)
        sigma_T = float(sigma_curve(cutoff, [config.T], config.alpha)[0])
        rows.append((cutoff, "sigma", sigma_T, 0.0, None, 1))

        def sample_one(realization: int, lattice=lattice, grid=grid):
            path = sample_noise_path(lattice, grid, config.seed, realization)
            symbols = build_symbol_set(path, config.alpha, names=("linear", "square", "cube"))
            values = {}
            for name in ("linear", "square", "cube"):
                series = symbols[name]
                frame = series[len(series.times) - 1]
                values[name] = frame.value_at((0.0, 0.0))
            return values

        samples = _ordered_map(sample_one, list(range(config.ensemble)))
        quantities = {
            "mean_square": np.array([s["square"] for s in samples]),
            "mean_cube": np.array([s["cube"] for s in samples]),
            "mean_square_linear": np.array(
                [s["square"] * s["linear"] for s in samples]
            ),
        }
        M = config.ensemble
        for label, vals in quantities.items():
            mean = vals.mean()
            spread = float(
                np.sqrt((np.var(vals.real) + np.var(vals.imag)) / max(M, 1))
            )
            rows.append((cutoff, label, float(mean.real), float(mean.imag), spread, M))
    _write_csv(
        out / "symbols.csv",
        ("cutoff", "quantity", "mean_re", "mean_im", "stderr", "samples"),
        rows,
    )
    return ["symbols.csv"]


def _run_regularity(config: ExperimentConfig, out: Path) -> List[str]:
    artifacts: List[str] = []
    summary: List[Sequence[object]] = []
    for cutoff in config.cutoffs:
        profile, fit = ensemble_slope(
            config.symbol,
            cutoff,
            config.alpha,
            time=config.T,
            realizations=config.ensemble,
            seed=config.seed,
            dt=config.dt,
        )
        name = f"profile-{config.symbol}-N{cutoff}.csv"
        _write_csv(
            out / name,
            ("level", "mean_square"),
            list(zip(profile.levels.tolist(), profile.values.tolist())),
        )
        artifacts.append(name)
        summary.append(
            (
                cutoff,
                config.symbol,
                fit.slope,
                fit.stderr,
                fit.r_squared,
                fit.intercept,
                config.ensemble,
            )
        )
    _write_csv(
        out / "regularity.csv",
        ("cutoff", "symbol", "slope", "stderr", "r_squared", "intercept", "realizations"),
        summary,
    )
    artifacts.append("regularity.csv")
    return artifacts


def _run_counting(config: ExperimentConfig, out: Path) -> List[str]:
    names = config.cases if config.cases is not None else _ALL_CASE_NAMES
    if not names:
        return []
    # Build and validate the whole plan before any case runs.
    plan = []
    try:
        for name in names:
            case, grid = _counting_plan(name, config.alpha, config.T)
            plan.append((name, case, grid))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    reports: List[CountingReport] = []
    bounds: List[Sequence[object]] = []
    for name, case, grid in plan:
        verification = verify_bound(case, grid, method=config.method)
        reports.extend(verification.reports)
        bounds.append(
            (
                name,
                verification.max_ratio,
                verification.growth,
                verification.flagged,
            )
        )
    write_reports(reports, out / "counting.csv")
    _write_csv(out / "bounds.csv", ("case", "max_ratio", "growth", "flagged"), bounds)
    return ["counting.csv", "bounds.csv"]


def _wave_series(
    lattice: TruncatedLattice, times: np.ndarray, seed_key: Tuple[int, ...]
) -> FieldSeries:
    """A random smooth field series with wave-like time dependence.

    Each mode oscillates at its dispersive frequency with random seeded
    amplitudes and a polynomial high-frequency decay, giving test inputs that
    exercise the trilinear estimates without being solver output.
    """
    rng = np.random.default_rng(seed_key)
    size = lattice.size
    a = rng.standard_normal(size) + 1j * rng.standard_normal(size)
    b = rng.standard_normal(size) + 1j * rng.standard_normal(size)
    decay = lattice.brackets ** (-2.5)
    frames = np.empty((len(times), size), dtype=np.complex128)
    for k, t in enumerate(times):
        phase = lattice.brackets * t
        frames[k] = decay * (a * np.cos(phase) + b * np.sin(phase))
    return FieldSeries(lattice, times, frames)


def _run_trilinear(config: ExperimentConfig, out: Path) -> List[str]:
    eps_default, delta_default = default_trilinear_margins(config.regime, config.alpha)
    eps_values = config.eps_grid or (eps_default,)
    delta_values = config.delta_grid or (delta_default,)
    rows: List[Sequence[object]] = []
    for cutoff in config.cutoffs:
        lattice = TruncatedLattice(cutoff)
        times = np.linspace(0.0, config.T, 9)

        def run_trial(trial: int, lattice=lattice, times=times, cutoff=cutoff):
            u = _wave_series(lattice, times, (config.seed, cutoff, trial, 0))
            v = _wave_series(lattice, times, (config.seed, cutoff, trial, 1))
            w = _wave_series(lattice, times, (config.seed, cutoff, trial, 2))
            trial_rows = []
            for eps in eps_values:
                for delta in delta_values:
                    ratio = trilinear_ratio(
                        u, v, w, config.regime, config.alpha, eps=eps, delta=delta
                    )
                    trial_rows.append(
                        (cutoff, trial, config.regime, eps, delta, ratio)
                    )
            return trial_rows

        for trial_rows in _ordered_map(run_trial, list(range(config.ensemble))):
            rows.extend(trial_rows)
    _write_csv(
        out / "trilinear.csv",
        ("cutoff", "trial", "regime", "eps", "delta", "ratio"),
        rows,
    )
    return ["trilinear.csv"]


def _run_tensor(config: ExperimentConfig, out: Path) -> List[str]:
    s_values = config.s_grid or (round(config.alpha + 0.06, 6),)
    signs = (1, -1, 1, -1)
    rows: List[Sequence[object]] = []
    for cutoff in config.cutoffs:
        for s in s_values:
            norms = tensor_unfold_norms(
                alpha=config.alpha, s=float(s), scales=(cutoff,) * 4, signs=signs
            )
            for unfolding in sorted(norms):
                rows.append((cutoff, s, unfolding, norms[unfolding]))
    _write_csv(out / "tensor.csv", ("scale", "s", "unfolding", "norm"), rows)
    return ["tensor.csv"]


_PIPELINES: Dict[str, Callable[[ExperimentConfig, Path], List[str]]] = {
    "simulate": _run_simulate,
    "symbols": _run_symbols,
    "regularity": _run_regularity,
    "counting": _run_counting,
    "trilinear": _run_trilinear,
    "tensor": _run_tensor,
}


def run(config: ExperimentConfig) -> RunManifest:
    """Execute one experiment and return its manifest.

    For every subcommand except ``report`` this creates the output directory,
    runs the pipeline, then writes ``manifest.json`` last and atomically; a
    failed run leaves no manifest behind.  ``report`` instead loads and
    verifies the manifest of an existing run directory.
    """
    if config.subcommand == "report":
        return load_manifest(config.out, verify=True)
    out = Path(config.out)
    out.mkdir(parents=True, exist_ok=True)
    started_at = datetime.now(timezone.utc).isoformat()
    started = time.perf_counter()
    pipeline = _PIPELINES[config.subcommand]
    artifact_names = pipeline(config, out)
    wall = time.perf_counter() - started
    manifest = RunManifest(
        subcommand=config.subcommand,
        version=__version__,
        config=_config_echo(config),
        started_at=started_at,
        wall_seconds=wall,
        artifacts=tuple(_artifact_record(out, name) for name in artifact_names),
    )
    save_manifest(manifest, out)
    return manifest


# ---------------------------------------------------------------------------
# command line entry point
# ---------------------------------------------------------------------------


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="roughwave",
        description=(
            "Simulation and verification workbench for a renormalized cubic "
            "stochastic wave equation on the two-dimensional torus."
        ),
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="subcommand", required=True)
    helps = {
        "simulate": "integrate the truncated equation and store field series",
        "symbols": "sample renormalization curves and stochastic-object statistics",
        "regularity": "estimate dyadic regularity slopes of stochastic objects",
        "counting": "verify lattice counting and summation bounds",
        "trilinear": "measure trilinear estimate ratios on random wave data",
        "tensor": "compute tensor unfolding operator norms",
        "report": "verify and summarise the manifest of a completed run",
    }
    for name in _SUBCOMMANDS:
        p = sub.add_parser(name, help=helps[name])
        p.add_argument("--config", metavar="FILE", help="flat key=value config file")
        p.add_argument("--alpha", type=float, help="forcing roughness exponent in (0, 1/2)")
        p.add_argument(
            "--cutoff",
            metavar="N[,N...]",
            help="comma-separated frequency cutoffs",
        )
        p.add_argument("--T", type=float, help="final time")
        p.add_argument("--dt", type=float, help="time step (T/dt must be an integer)")
        p.add_argument("--ensemble", type=int, help="number of realizations / trials")
        p.add_argument("--seed", type=int, help="base random seed")
        p.add_argument("--symbol", help="stochastic object name (regularity)")
        p.add_argument("--regime", help="trilinear regime tri1..tri4")
        p.add_argument("--s", metavar="S[,S...]", help="regularity exponent grid")
        p.add_argument("--b", metavar="B[,B...]", help="auxiliary exponent grid")
        p.add_argument("--eps", metavar="E[,E...]", help="trilinear eps margin grid")
        p.add_argument("--delta", metavar="D[,D...]", help="trilinear delta margin grid")
        p.add_argument(
            "--cases",
            metavar="NAME[,NAME...]",
            help="counting cases to run ('' for none; default: all)",
        )
        p.add_argument("--method", choices=("factorized", "naive"), help="counting evaluator")
        p.add_argument("--out", metavar="DIR", help="output directory")
    return parser


def _raw_from_args(args: argparse.Namespace) -> Dict[str, str]:
    raw: Dict[str, str] = {}
    if args.config is not None:
        path = Path(args.config)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        raw.update(parse_config(path.read_text(encoding="utf-8")))
    overrides = {
        "alpha": args.alpha,
        "cutoff": args.cutoff,
        "T": args.T,
        "dt": args.dt,
        "ensemble": args.ensemble,
        "seed": args.seed,
        "symbol": args.symbol,
        "regime": args.regime,
        "s": args.s,
        "b": args.b,
        "eps": args.eps,
        "delta": args.delta,
        "cases": args.cases,
        "method": args.method,
        "out": args.out,
    }
    for key, value in overrides.items():
        if value is not None:
            raw[key] = str(value)
    return raw


def _print_manifest(manifest: RunManifest) -> None:
    print(f"{manifest.subcommand}: ok (version {manifest.version})")
    print(f"  output: {manifest.config.get('out')}")
    print(f"  wall time: {manifest.wall_seconds:.2f} s")
    print(f"  artifacts: {len(manifest.artifacts)}")
    for record in manifest.artifacts:
        print(f"    {record.path}  {record.bytes} bytes  sha256:{record.sha256[:12]}")


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Console entry point.  Exit codes: 0 success, 2 invalid configuration,
    1 runtime failure."""
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        raw = _raw_from_args(args)
        config = _config_from_raw(raw, subcommand=args.subcommand)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    try:
        manifest = run(config)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - map any failure to exit code 1
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    _print_manifest(manifest)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
