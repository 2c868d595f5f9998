"""Flat-file configuration, binary artifacts, CSV series, JSON reports.

Config files are ``key = value`` lines with a strict schema: unknown or
duplicate keys are errors, values are typed per key.  Binary files open
with a four-byte magic and a version; readers reject versions newer than
they understand.  Numeric payloads are little-endian 64-bit throughout,
so every round-trip is bitwise.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import struct
from dataclasses import dataclass

import numpy as np

from .errors import (
    ConfigError,
    GridMismatchError,
    SeriesFormatError,
    StreamFormatError,
)
from .interpolants import (
    MODAL,
    SMOOTHED_VOLUME,
    VOLUME,
    Interpolant,
    Modal,
    Observation,
    SmoothedVolume,
    Volume,
)
from .series import ErrorSeries
from .spectral import CHANNEL, TORUS, FlowState, Grid, Params, SpectralField, random_field

__all__ = [
    "ExperimentConfig",
    "parse_config",
    "load_config",
    "build_grid",
    "build_params",
    "build_interpolant",
    "initial_state",
    "save_checkpoint",
    "load_checkpoint",
    "save_stream",
    "load_stream",
    "save_series",
    "load_series",
    "save_report",
    "jsonable",
]


# -- configuration ---------------------------------------------------------


@dataclass
class ExperimentConfig:
    """Everything a command needs, with desk-scale defaults.

    ``mu = None`` means auto (geometric mean of the admissible interval);
    ``h`` sets the cell side of volume-kind interpolants and must divide
    the extents; ``stream``/``resume``/``series`` point commands at
    existing artifacts instead of synthesizing inputs.
    """

    model: str = "boussinesq"
    geometry: str = "torus"
    resolution: tuple = (128, 128)
    extent: tuple = (0.5, 0.5)
    nu: float = 1e-2
    kappa: float = 1e-2
    f_amplitude: float = 0.0
    c: float = 1e-4
    C: float = 1.0
    interpolant: str = "modal"
    modes: int = 8
    h: float | None = None
    mu: float | None = None
    variant: str = "sync"
    obs_every: int = 1
    force: bool = False
    dt: float = 2e-3
    T: float = 20.0
    record_every: int = 10
    seed: int = 1
    ic_energy: float = 5e-3
    ic_theta_energy: float = 5e-3
    stream: str = ""
    resume: str = ""
    series: str = ""
    sweep_mu: tuple = ()
    outdir: str = "out"

    def __post_init__(self):
        if self.model not in ("boussinesq", "nse"):
            raise ConfigError(f"model must be boussinesq or nse, got {self.model!r}")
        if self.geometry not in (TORUS, CHANNEL):
            raise ConfigError(f"geometry must be torus or channel, got {self.geometry!r}")
        if self.interpolant not in (MODAL, VOLUME, SMOOTHED_VOLUME):
            raise ConfigError(f"unknown interpolant kind {self.interpolant!r}")
        if len(self.resolution) != len(self.extent):
            raise ConfigError("resolution and extent must have the same length")
        for name in ("nu", "dt", "T", "ic_energy", "ic_theta_energy"):
            if getattr(self, name) < 0 or (name in ("nu", "dt", "T") and getattr(self, name) == 0):
                raise ConfigError(f"{name} must be positive")
        if self.kappa < 0 or self.f_amplitude < 0 or self.c <= 0 or self.C <= 0:
            raise ConfigError("kappa and f_amplitude must be nonnegative, c and C positive")
        if self.model == "boussinesq" and self.kappa == 0:
            raise ConfigError("boussinesq runs need a positive kappa")
        if self.interpolant == MODAL:
            if self.modes < 1:
                raise ConfigError("modal interpolant needs modes >= 1")
        elif self.h is None or self.h <= 0:
            raise ConfigError("volume-kind interpolants need a positive h (cell side)")
        if self.mu is not None and self.mu < 0:
            raise ConfigError("mu must be nonnegative (or auto)")
        if self.obs_every < 1 or self.record_every < 1:
            raise ConfigError("obs_every and record_every must be positive integers")
        if any(v <= 0 for v in self.sweep_mu):
            raise ConfigError("sweep_mu values must be positive")


def _as_floats(raw: str) -> tuple:
    return tuple(float(tok) for tok in raw.replace(",", " ").split())


def _as_ints(raw: str) -> tuple:
    return tuple(int(tok) for tok in raw.replace(",", " ").split())


def _as_bool(raw: str) -> bool:
    low = raw.lower()
    if low in ("true", "yes", "on", "1"):
        return True
    if low in ("false", "no", "off", "0"):
        return False
    raise ValueError(f"not a boolean: {raw!r}")


def _as_mu(raw: str):
    return None if raw.lower() == "auto" else float(raw)


_SCHEMA = {
    "model": str,
    "geometry": str,
    "resolution": _as_ints,
    "extent": _as_floats,
    "nu": float,
    "kappa": float,
    "f_amplitude": float,
    "c": float,
    "C": float,
    "interpolant": str,
    "modes": int,
    "h": float,
    "mu": _as_mu,
    "variant": str,
    "obs_every": int,
    "force": _as_bool,
    "dt": float,
    "T": float,
    "record_every": int,
    "seed": int,
    "ic_energy": float,
    "ic_theta_energy": float,
    "stream": str,
    "resume": str,
    "series": str,
    "sweep_mu": _as_floats,
    "outdir": str,
}


def parse_config(text: str) -> ExperimentConfig:
    """Parse ``key = value`` lines; '#' starts a comment."""
    values: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value, got {raw!r}")
        key, _, val = line.partition("=")
        key, val = key.strip(), val.strip()
        if key not in _SCHEMA:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        try:
            values[key] = _SCHEMA[key](val)
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"line {lineno}: bad value for {key}: {exc}") from exc
    return ExperimentConfig(**values)


def load_config(path) -> ExperimentConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return parse_config(fh.read())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc


def build_grid(cfg: ExperimentConfig) -> Grid:
    return Grid(len(cfg.resolution), cfg.geometry, cfg.extent, cfg.resolution)


def build_params(cfg: ExperimentConfig, grid: Grid) -> Params:
    f = None
    if cfg.f_amplitude > 0:
        # the body force gets its own seed lane so IC draws stay aligned
        rng = np.random.default_rng(cfg.seed + 7919)
        f = random_field(
            grid, rng, ncomp=grid.dim, divergence_free=True, energy=cfg.f_amplitude
        )
    return Params(nu=cfg.nu, kappa=cfg.kappa, f=f, c_interp=cfg.c, C_sob=cfg.C)


def build_interpolant(cfg: ExperimentConfig, grid: Grid) -> Interpolant:
    if cfg.interpolant == MODAL:
        return Modal(grid, cfg.modes)
    cells = []
    for ext in grid.extents:
        n = ext / cfg.h
        if abs(n - round(n)) > 1e-9 * max(1.0, n):
            raise ConfigError(f"h = {cfg.h:g} does not divide the extent {ext:g}")
        cells.append(int(round(n)))
    cls = Volume if cfg.interpolant == VOLUME else SmoothedVolume
    return cls(grid, tuple(cells))


def initial_state(cfg: ExperimentConfig, grid: Grid) -> FlowState:
    """Seeded random start: divergence-free velocity band-limited to
    |k| <= resolution/8 with the prescribed energy, temperature likewise."""
    rng = np.random.default_rng(cfg.seed)
    u = random_field(
        grid, rng, ncomp=grid.dim, divergence_free=True, energy=cfg.ic_energy
    )
    theta = None
    if cfg.model == "boussinesq":
        theta = random_field(grid, rng, ncomp=1, energy=cfg.ic_theta_energy)
    return FlowState(u=u, theta=theta, t=0.0)


# -- binary helpers --------------------------------------------------------

_CKPT_MAGIC = b"NDGL"
_STREAM_MAGIC = b"NDGS"
_VERSION = 1
_GEOM_TAGS = {TORUS: 0, CHANNEL: 1}
_GEOM_NAMES = {v: k for k, v in _GEOM_TAGS.items()}
_KIND_TAGS = {MODAL: 0, VOLUME: 1, SMOOTHED_VOLUME: 2}
_KIND_NAMES = {v: k for k, v in _KIND_TAGS.items()}
_DTYPE_TAGS = {np.dtype("complex128"): 0, np.dtype("float64"): 1}
_DTYPE_CODES = {0: "<c16", 1: "<f8"}


def _read(fh, n: int) -> bytes:
    buf = fh.read(n)
    if len(buf) != n:
        raise StreamFormatError("truncated file")
    return buf


def _check_header(fh, magic: bytes, what: str) -> None:
    if _read(fh, 4) != magic:
        raise StreamFormatError(f"not a {what} file (bad magic)")
    (version,) = struct.unpack("<H", _read(fh, 2))
    if version > _VERSION:
        raise StreamFormatError(
            f"{what} version {version} is newer than supported ({_VERSION})"
        )


def _write_array(fh, arr: np.ndarray) -> None:
    tag = _DTYPE_TAGS[np.dtype(arr.dtype)]
    fh.write(struct.pack("<BB", tag, arr.ndim))
    fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
    fh.write(np.ascontiguousarray(arr, dtype=_DTYPE_CODES[tag]).tobytes())


def _read_array(fh) -> np.ndarray:
    tag, ndim = struct.unpack("<BB", _read(fh, 2))
    if tag not in _DTYPE_CODES:
        raise StreamFormatError(f"unknown array dtype tag {tag}")
    shape = struct.unpack(f"<{ndim}I", _read(fh, 4 * ndim))
    dt = np.dtype(_DTYPE_CODES[tag])
    raw = _read(fh, dt.itemsize * int(np.prod(shape, dtype=np.int64)))
    return np.frombuffer(raw, dtype=dt).reshape(shape).copy()


# -- checkpoints -----------------------------------------------------------


def save_checkpoint(path, state: FlowState, history=None) -> None:
    """Write state (and optionally the multistep history) to ``path``.

    ``history`` is the stepper's previous explicit slope pair; storing it
    makes restarts reproduce the uninterrupted run exactly.
    """
    grid = state.u.grid
    flags = 0
    if state.theta is not None:
        flags |= 1
    if history is not None:
        flags |= 2
    with open(path, "wb") as fh:
        fh.write(_CKPT_MAGIC)
        fh.write(struct.pack("<H", _VERSION))
        fh.write(struct.pack("<BBH", _GEOM_TAGS[grid.geometry], flags, grid.dim))
        fh.write(struct.pack(f"<{grid.dim}I", *grid.resolution))
        fh.write(struct.pack(f"<{grid.dim}d", *grid.extents))
        fh.write(struct.pack("<d", state.t))
        _write_array(fh, state.u.coeffs)
        if state.theta is not None:
            _write_array(fh, state.theta.coeffs)
        if history is not None:
            eu, eth = history
            _write_array(fh, eu)
            fh.write(struct.pack("<B", int(eth is not None)))
            if eth is not None:
                _write_array(fh, eth)


def load_checkpoint(path, grid: Grid | None = None) -> tuple:
    """Read (FlowState, history) from ``path``.

    The grid is rebuilt from the stored descriptor; passing ``grid``
    asserts it matches.
    """
    try:
        fh = open(path, "rb")
    except OSError as exc:
        raise StreamFormatError(f"cannot read checkpoint {path}: {exc}") from exc
    with fh:
        _check_header(fh, _CKPT_MAGIC, "checkpoint")
        geom_tag, flags, dim = struct.unpack("<BBH", _read(fh, 4))
        if geom_tag not in _GEOM_NAMES:
            raise StreamFormatError(f"unknown geometry tag {geom_tag}")
        resolution = struct.unpack(f"<{dim}I", _read(fh, 4 * dim))
        extents = struct.unpack(f"<{dim}d", _read(fh, 8 * dim))
        (t,) = struct.unpack("<d", _read(fh, 8))
        file_grid = Grid(dim, _GEOM_NAMES[geom_tag], extents, resolution)
        if grid is not None and grid != file_grid:
            raise GridMismatchError("checkpoint grid does not match the requested grid")
        g = grid if grid is not None else file_grid
        u = SpectralField(g, _read_array(fh))
        theta = SpectralField(g, _read_array(fh)) if flags & 1 else None
        history = None
        if flags & 2:
            eu = _read_array(fh)
            (has_eth,) = struct.unpack("<B", _read(fh, 1))
            eth = _read_array(fh) if has_eth else None
            history = (eu, eth)
    return FlowState(u=u, theta=theta, t=t), history


# -- observation streams ---------------------------------------------------


def save_stream(path, stream) -> None:
    with open(path, "wb") as fh:
        fh.write(_STREAM_MAGIC)
        fh.write(struct.pack("<H", _VERSION))
        fh.write(struct.pack("<BxI", _KIND_TAGS[stream.kind], len(stream)))
        for obs in stream:
            fh.write(struct.pack("<d", obs.t))
            _write_array(fh, obs.payload)


def load_stream(path, interpolant: Interpolant):
    """Read observations and attach them to ``interpolant``; every record
    passes the stream's kind/shape/cadence validation on append."""
    from .assimilation.streams import ObservationStream

    try:
        fh = open(path, "rb")
    except OSError as exc:
        raise StreamFormatError(f"cannot read stream {path}: {exc}") from exc
    with fh:
        _check_header(fh, _STREAM_MAGIC, "stream")
        kind_tag, count = struct.unpack("<BxI", _read(fh, 6))
        if kind_tag not in _KIND_NAMES:
            raise StreamFormatError(f"unknown interpolant kind tag {kind_tag}")
        kind = _KIND_NAMES[kind_tag]
        if kind != interpolant.kind:
            raise StreamFormatError(
                f"stream holds {kind!r} observations, interpolant is {interpolant.kind!r}"
            )
        out = ObservationStream(interpolant)
        for _ in range(count):
            (t,) = struct.unpack("<d", _read(fh, 8))
            out.append(Observation(kind, t, _read_array(fh)))
    return out


# -- series (CSV + JSON metadata sidecar) ------------------------------------


def _meta_path(path) -> str:
    s = str(path)
    base = s[:-4] if s.endswith(".csv") else s
    return base + ".meta.json"


def save_series(path, series: ErrorSeries) -> None:
    """CSV with a header row and 17-significant-digit decimals, plus a
    ``.meta.json`` sidecar carrying the run metadata."""
    header, rows = series.to_rows()
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([f"{v:.17g}" for v in row])
    with open(_meta_path(path), "w", encoding="utf-8") as fh:
        json.dump(jsonable(series.meta), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_series(path) -> ErrorSeries:
    try:
        with open(path, "r", newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            try:
                header = next(reader)
            except StopIteration:
                raise SeriesFormatError(f"{path}: empty series file") from None
            rows = list(reader)
    except OSError as exc:
        raise SeriesFormatError(f"cannot read series {path}: {exc}") from exc
    if not rows:
        raise SeriesFormatError(f"{path}: no data rows")
    try:
        columns = [np.array([float(row[i]) for row in rows]) for i in range(len(header))]
    except (ValueError, IndexError) as exc:
        raise SeriesFormatError(f"{path}: malformed row: {exc}") from exc
    meta = {}
    try:
        with open(_meta_path(path), "r", encoding="utf-8") as fh:
            meta = json.load(fh)
    except OSError:
        pass
    except json.JSONDecodeError as exc:
        raise SeriesFormatError(f"{path}: malformed metadata sidecar: {exc}") from exc
    return ErrorSeries.from_columns(header, columns, meta=meta)


# -- reports -----------------------------------------------------------------


def jsonable(obj):
    """Recursively convert reports to plain JSON types."""
    if obj is None or isinstance(obj, (bool, int, float, str)):
        return obj
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return [jsonable(v) for v in obj.tolist()]
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if hasattr(obj, "to_dict"):
        return jsonable(obj.to_dict())
    if dataclasses.is_dataclass(obj):
        return jsonable(dataclasses.asdict(obj))
    return str(obj)


def save_report(path, data) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(jsonable(data), fh, indent=2, sort_keys=True)
        fh.write("\n")
