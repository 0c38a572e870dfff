"""Run configuration: JSON parsing with strict key validation.

The configuration is a single JSON file (nested key/value; exact grammar in
the README).  Unknown keys are errors, not warnings: silent typos are the
main field failure.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass

import numpy as np

from .continuity import MonitorOptions, PathConfig
from .errors import BadSplitting, ConfigError
from .geometry import build_radial_geometry, build_surface_geometry, \
    make_mesh_background
from .mesh import load_off_mesh

_AXES = {"x": 0, "y": 1, "z": 2}


@dataclass(frozen=True)
class MeshGeometrySpec:
    mesh_path: str
    f_spec: dict | None     # None only for manufacture-only configs


@dataclass(frozen=True)
class RadialGeometrySpec:
    n: int
    k: int
    a: tuple
    grid_size: int


@dataclass(frozen=True)
class UniquenessSpec:
    magnitude: float = 0.1
    seeds: tuple = (0, 1, 2, 3, 4)


@dataclass(frozen=True)
class WeitzenbockSpec:
    enabled: bool = True
    samples: int = 3


@dataclass(frozen=True)
class ManufactureSpec:
    t_star: float
    constants: tuple
    targets: tuple      # per-equation tuples of (amplitude, field-name)


@dataclass(frozen=True)
class RunConfig:
    geometry: MeshGeometrySpec | RadialGeometrySpec
    sigma: int                     # +1 anti-Fano, -1 Fano
    path: PathConfig
    monitors: MonitorOptions
    weitzenbock: WeitzenbockSpec
    uniqueness: UniquenessSpec
    manufacture: ManufactureSpec | None
    output_dir: str

    def build_geometry(self):
        if isinstance(self.geometry, RadialGeometrySpec):
            return build_radial_geometry(self.geometry.n,
                                         self.geometry.grid_size,
                                         np.array(self.geometry.a))[0]
        return build_surface_geometry(load_off_mesh(self.geometry.mesh_path))

    def build(self):
        """Instantiate (DiscreteGeometry, BackgroundSplit)."""
        if isinstance(self.geometry, RadialGeometrySpec):
            return build_radial_geometry(self.geometry.n,
                                         self.geometry.grid_size,
                                         np.array(self.geometry.a))
        if self.geometry.f_spec is None:
            raise ConfigError("geometry.f_spec: required unless the config "
                              "is manufacture-only")
        mesh = load_off_mesh(self.geometry.mesh_path)
        geom = build_surface_geometry(mesh)
        f = evaluate_f_spec(self.geometry.f_spec, geom)
        return geom, make_mesh_background(geom, f, self.sigma)


def _reject_unknown(section: dict, allowed, path: str) -> None:
    for key in section:
        if key not in allowed:
            raise ConfigError(f"{path}{key}: unknown key")


def _require(section: dict, key: str, path: str):
    if key not in section:
        raise ConfigError(f"{path}{key}: missing required key")
    return section[key]


def _number(value, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{path}: expected a number, got {value!r}")
    return float(value)


def _integer(value, path: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"{path}: expected an integer, got {value!r}")
    return value


def evaluate_preset(entry: dict, points: np.ndarray, path: str) -> np.ndarray:
    """Evaluate one named analytic density at mesh vertices."""
    if not isinstance(entry, dict):
        raise ConfigError(f"{path}: preset entry must be an object")
    name = _require(entry, "name", path + ".")
    if name == "constant":
        _reject_unknown(entry, {"name", "value"}, path + ".")
        return np.full(points.shape[0], _number(_require(entry, "value",
                                                         path + "."),
                                                path + ".value"))
    if name in ("axis", "sin"):
        _reject_unknown(entry, {"name", "epsilon", "axis"}, path + ".")
        eps = _number(_require(entry, "epsilon", path + "."),
                      path + ".epsilon")
        axis = _require(entry, "axis", path + ".")
        if axis not in _AXES:
            raise ConfigError(f"{path}.axis: must be one of x, y, z")
        coord = points[:, _AXES[axis]]
        return 1.0 + eps * (np.sin(coord) if name == "sin" else coord)
    raise ConfigError(f"{path}.name: unknown preset {name!r}")


def evaluate_f_spec(f_spec: dict, geom) -> np.ndarray:
    """Per-equation densities (k, N) from an f_spec section."""
    if "file" in f_spec:
        try:
            f = np.loadtxt(f_spec["file"], ndmin=2).T
        except (OSError, ValueError) as exc:
            raise ConfigError(f"geometry.f_spec.file: {exc}") from exc
    else:
        f = np.array([evaluate_preset(entry, geom.points,
                                      f"geometry.f_spec.preset[{i}]")
                      for i, entry in enumerate(f_spec["preset"])])
    if f.shape[1] != geom.num_nodes:
        raise ConfigError(f"geometry.f_spec: {f.shape[1]} values per "
                          f"equation, mesh has {geom.num_nodes} vertices")
    if np.any(f <= 0.0):
        raise ConfigError("geometry.f_spec: densities must be positive "
                          "everywhere")
    return f


def _parse_geometry(section, allow_missing_f=False, path="geometry."):
    if not isinstance(section, dict):
        raise ConfigError("geometry: expected an object")
    gtype = _require(section, "type", path)
    if gtype == "mesh":
        _reject_unknown(section, {"type", "mesh_path", "f_spec"}, path)
        if allow_missing_f and "f_spec" not in section:
            f_spec = None
        else:
            f_spec = _require(section, "f_spec", path)
            if not isinstance(f_spec, dict) or \
                    ("preset" in f_spec) == ("file" in f_spec):
                raise ConfigError("geometry.f_spec: exactly one of 'preset' "
                                  "or 'file' required")
            _reject_unknown(f_spec, {"preset", "file"}, path + "f_spec.")
            if "preset" in f_spec and not isinstance(f_spec["preset"], list):
                raise ConfigError("geometry.f_spec.preset: expected a list "
                                  "with one entry per equation")
        return MeshGeometrySpec(mesh_path=str(_require(section, "mesh_path",
                                                       path)),
                                f_spec=f_spec)
    if gtype == "radial":
        _reject_unknown(section, {"type", "n", "k", "a", "grid_size"}, path)
        n = _integer(_require(section, "n", path), path + "n")
        k = _integer(_require(section, "k", path), path + "k")
        a = _require(section, "a", path)
        if not isinstance(a, list) or len(a) != k:
            raise ConfigError(f"geometry.a: expected a list of {k} "
                              "coefficients")
        a = tuple(_number(v, f"geometry.a[{i}]") for i, v in enumerate(a))
        if any(v <= 0 for v in a) or abs(sum(a) - (n + 1)) > 1e-12:
            raise ConfigError(f"geometry.a: coefficients must be positive "
                              f"and sum to n + 1 = {n + 1}, got sum "
                              f"{sum(a)}")
        grid = _integer(section.get("grid_size", 256), path + "grid_size")
        if grid < 16:
            raise ConfigError("geometry.grid_size: must be >= 16")
        return RadialGeometrySpec(n=n, k=k, a=a, grid_size=grid)
    raise ConfigError(f"geometry.type: must be 'mesh' or 'radial', "
                      f"got {gtype!r}")


def _parse_path(section) -> PathConfig:
    if section is None:
        return PathConfig()
    allowed = {f.name for f in dataclasses.fields(PathConfig)}
    _reject_unknown(section, allowed, "path.")
    kwargs = {}
    for key, value in section.items():
        if key in ("newton_max_iters", "armijo_max_backtracks",
                   "dt_halve_iters", "dt_double_iters"):
            kwargs[key] = _integer(value, f"path.{key}")
        else:
            kwargs[key] = _number(value, f"path.{key}")
    try:
        return PathConfig(**kwargs)
    except ValueError as exc:
        raise ConfigError(f"path: {exc}") from exc


def _toggle(section, key, path):
    """Accept true/false or an option object; returns (enabled, options)."""
    value = section.get(key, True)
    if isinstance(value, bool):
        return value, {}
    if isinstance(value, dict):
        return True, value
    raise ConfigError(f"{path}: expected true/false or an options object")


def _parse_monitors(section) -> tuple[MonitorOptions, WeitzenbockSpec]:
    if section is None:
        return MonitorOptions(), WeitzenbockSpec()
    _reject_unknown(section, {"c0", "laplacian", "jensen", "spectrum",
                              "weitzenbock"}, "monitors.")
    c0 = section.get("c0", True)
    if not isinstance(c0, bool):
        raise ConfigError("monitors.c0: expected true/false")
    lap_on, lap_opts = _toggle(section, "laplacian", "monitors.laplacian")
    _reject_unknown(lap_opts, {"lambda"}, "monitors.laplacian.")
    lam = _number(lap_opts.get("lambda", 1.0), "monitors.laplacian.lambda")
    if lam <= 0:
        raise ConfigError("monitors.laplacian.lambda: must be positive")
    jen_on, jen_opts = _toggle(section, "jensen", "monitors.jensen")
    _reject_unknown(jen_opts, {"green_samples"}, "monitors.jensen.")
    green_samples = _integer(jen_opts.get("green_samples", 16),
                             "monitors.jensen.green_samples")
    spectrum = section.get("spectrum", True)
    if not isinstance(spectrum, bool):
        raise ConfigError("monitors.spectrum: expected true/false")
    wb_on, wb_opts = _toggle(section, "weitzenbock", "monitors.weitzenbock")
    _reject_unknown(wb_opts, {"samples"}, "monitors.weitzenbock.")
    wb = WeitzenbockSpec(enabled=wb_on,
                         samples=_integer(wb_opts.get("samples", 3),
                                          "monitors.weitzenbock.samples"))
    return MonitorOptions(c0=c0, laplacian=lap_on, lam=lam, jensen=jen_on,
                          green_samples=green_samples,
                          spectrum=spectrum), wb


def _parse_verify(section) -> UniquenessSpec:
    if section is None:
        return UniquenessSpec()
    _reject_unknown(section, {"uniqueness"}, "verify.")
    uniq = section.get("uniqueness")
    if uniq is None:
        return UniquenessSpec()
    _reject_unknown(uniq, {"magnitude", "seeds"}, "verify.uniqueness.")
    magnitude = _number(uniq.get("magnitude", 0.1),
                        "verify.uniqueness.magnitude")
    seeds = uniq.get("seeds", [0, 1, 2, 3, 4])
    if isinstance(seeds, int) and not isinstance(seeds, bool):
        seeds = list(range(seeds))
    if not isinstance(seeds, list) or \
            any(isinstance(s, bool) or not isinstance(s, int) for s in seeds):
        raise ConfigError("verify.uniqueness.seeds: expected an integer "
                          "count or a list of integers")
    return UniquenessSpec(magnitude=magnitude, seeds=tuple(seeds))


def _parse_manufacture(section) -> ManufactureSpec | None:
    if section is None:
        return None
    _reject_unknown(section, {"t_star", "constants", "targets"},
                    "manufacture.")
    t_star = _number(_require(section, "t_star", "manufacture."),
                     "manufacture.t_star")
    if not 0.0 <= t_star <= 1.0:
        raise ConfigError("manufacture.t_star: must lie in [0, 1]")
    constants = _require(section, "constants", "manufacture.")
    if not isinstance(constants, list) or not constants:
        raise ConfigError("manufacture.constants: expected a non-empty list")
    constants = tuple(_number(c, f"manufacture.constants[{i}]")
                      for i, c in enumerate(constants))
    if any(c <= 0 for c in constants):
        raise ConfigError("manufacture.constants: must be positive")
    targets_raw = _require(section, "targets", "manufacture.")
    if not isinstance(targets_raw, list) or len(targets_raw) != len(constants):
        raise ConfigError("manufacture.targets: one target per equation "
                          "required")
    targets = []
    for i, terms in enumerate(targets_raw):
        if not isinstance(terms, list):
            raise ConfigError(f"manufacture.targets[{i}]: expected a list of "
                              "terms")
        parsed = []
        for j, term in enumerate(terms):
            tpath = f"manufacture.targets[{i}][{j}]"
            if not isinstance(term, dict):
                raise ConfigError(f"{tpath}: expected an object")
            _reject_unknown(term, {"field", "amplitude"}, tpath + ".")
            parsed.append((_number(_require(term, "amplitude", tpath + "."),
                                   tpath + ".amplitude"),
                           str(_require(term, "field", tpath + "."))))
        targets.append(tuple(parsed))
    return ManufactureSpec(t_star=t_star, constants=constants,
                           targets=tuple(targets))


def parse_config(path) -> RunConfig:
    """Read and validate a JSON run configuration."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("top level: expected an object")

    _reject_unknown(data, {"geometry", "sign", "path", "monitors", "verify",
                           "manufacture", "output_dir"}, "")
    manufacture_spec = _parse_manufacture(data.get("manufacture"))
    geometry = _parse_geometry(_require(data, "geometry", ""),
                               allow_missing_f=manufacture_spec is not None)
    sign = _require(data, "sign", "")
    if sign not in ("fano", "antifano"):
        raise ConfigError(f"sign: must be 'fano' or 'antifano', got {sign!r}")
    sigma = +1 if sign == "antifano" else -1
    if isinstance(geometry, RadialGeometrySpec) and sigma != -1:
        raise ConfigError("sign: the radial backend realizes the Fano "
                          "arrangement; 'antifano' is inconsistent with it")
    monitors, weitzenbock = _parse_monitors(data.get("monitors"))
    return RunConfig(
        geometry=geometry,
        sigma=sigma,
        path=_parse_path(data.get("path")),
        monitors=monitors,
        weitzenbock=weitzenbock,
        uniqueness=_parse_verify(data.get("verify")),
        manufacture=manufacture_spec,
        output_dir=str(data.get("output_dir", "cke_out")),
    )
