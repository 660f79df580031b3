"""Declarative boundary configurations (YAML text, schema-validated).

A configuration names the grid regions, the boundary entities, optional
stencil footprints for pruning, the partition halo and run settings.
Region fields accept a region literal such as ``(0,5,1)x(0,5,1)``, the
name of an entry in ``regions`` (``data`` and ``full`` always exist), or
the name of another boundary, meaning that boundary's region.
"""
from __future__ import annotations

import copy
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import jsonschema
import numpy as np
import yaml

from .boundary import (
    CsrStorage, make_csr, make_edge_sync, make_mapping, make_pure_function, make_simple,
)
from .errors import ConfigurationError, GhostopError
from .expr import parse_int, parse_weight
from .pruning import StencilFootprint, apply_pruning, compute_effective_space, five_point, nine_point
from .region import Region, parse_region
from .staging import BoundaryProgram, synthesize_branches

VERSION = 1

_REGION = {"type": "string", "minLength": 1}
_EXPR = {"type": ["string", "integer"]}
_WEIGHT = {"type": ["string", "number"]}

SCHEMA: dict = {
    "type": "object",
    "required": ["version", "grid", "boundaries"],
    "additionalProperties": False,
    "properties": {
        "version": {"const": VERSION},
        "name": {"type": "string"},
        "grid": {
            "type": "object",
            "required": ["data", "full"],
            "additionalProperties": False,
            "properties": {
                "data": _REGION,
                "full": _REGION,
                "blocks": {"type": "integer", "minimum": 1},
            },
        },
        "regions": {"type": "object", "additionalProperties": _REGION},
        "variables": {
            "type": "object",
            "additionalProperties": {
                "type": "object",
                "additionalProperties": False,
                "properties": {"ncomp": {"type": "integer", "minimum": 1}},
            },
        },
        "program": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "input": {"type": "string"},
                "output": {"type": "string"},
                "full_column": {"type": "boolean"},
            },
        },
        "params": {"type": "object", "additionalProperties": {"type": "integer"}},
        "boundaries": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["name", "kind"],
                "properties": {
                    "name": {"type": "string", "pattern": "^[A-Za-z_][A-Za-z0-9_]*$"},
                    "kind": {"enum": ["zero", "halo_copy", "circular", "symmetric", "mapping",
                                      "csr", "edge_sync", "pure_function"]},
                    "region": _REGION,
                    "exclude": {"type": "array", "items": _REGION},
                    "axis": {"oneOf": [{"type": "integer", "minimum": 0},
                                       {"type": "array", "items": {"type": "integer", "minimum": 0}}]},
                    "data_extent": _REGION,
                    "col": {"type": "array", "items": _EXPR, "minItems": 1},
                    "weight": _WEIGHT,
                    "value": _WEIGHT,
                    "gid": _EXPR,
                    "block_axis": {"type": "integer", "minimum": 0},
                    "n_group": {"type": "integer", "minimum": 1},
                    "file": {"type": "string"},
                    "calc_addr": _REGION,
                    "extract": _REGION,
                    "groups": {"type": "array", "items": {
                        "type": "array", "minItems": 1,
                        "items": {"type": "array", "items": {"type": "integer"}}}},
                    "weights": {"type": "array", "items": {"type": "array", "items": {"type": "number"}}},
                    "strict": {"type": "boolean"},
                },
                "additionalProperties": False,
                "allOf": [
                    {"if": {"properties": {"kind": {"const": "edge_sync"}}},
                     "then": {"required": ["groups"]}, "else": {"required": ["region"]}},
                    {"if": {"properties": {"kind": {"enum": ["circular", "symmetric"]}}},
                     "then": {"required": ["axis"]}},
                    {"if": {"properties": {"kind": {"const": "mapping"}}}, "then": {"required": ["col"]}},
                    {"if": {"properties": {"kind": {"const": "csr"}}}, "then": {"required": ["file"]}},
                    {"if": {"properties": {"kind": {"const": "pure_function"}}},
                     "then": {"required": ["value"]}},
                ],
            },
        },
        "footprints": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["inner"],
                "additionalProperties": False,
                "properties": {
                    "inner": _REGION,
                    "var": {"type": "string"},
                    "stencil": {"enum": ["five_point", "nine_point"]},
                    "axes": {"type": "array", "items": {"type": "integer", "minimum": 0}},
                    "offsets": {"type": "array", "items": {"type": "array", "items": {"type": "integer"}}},
                    "weights": {"type": "array", "items": {"type": "number"}},
                },
            },
        },
        "partition": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "halo": {"type": "array", "items": {"type": "integer", "minimum": 0}},
                "proc_grids": {"type": "object", "additionalProperties": {
                    "type": "array", "items": {"type": "integer", "minimum": 1}}},
            },
        },
        "run": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "steps": {"type": "integer", "minimum": 0},
                "seed": {"type": "integer"},
                "out": {"type": "string"},
                "ranks": {"type": "array", "items": {"type": "integer", "minimum": 1}},
            },
        },
    },
}


class ConfigError(ConfigurationError):
    """Invalid configuration; ``field`` is a dotted path to the offending entry."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}" if field else message)
        self.field = field


@dataclass
class Config:
    data: dict
    base_dir: Path = field(default_factory=Path.cwd, compare=False)
    path: Path | None = field(default=None, compare=False)

    @property
    def name(self) -> str:
        if "name" in self.data:
            return self.data["name"]
        return self.path.stem if self.path else "config"

    @property
    def boundaries(self) -> list[dict]:
        return self.data["boundaries"]

    @property
    def footprints(self) -> list[dict]:
        return self.data.get("footprints", [])

    @property
    def program(self) -> dict:
        p = {"input": "x", "output": "y", "full_column": False}
        p.update(self.data.get("program", {}))
        return p

    @property
    def run(self) -> dict:
        r = {"steps": 1, "seed": 0, "out": "out", "ranks": [1, 2, 4]}
        r.update(self.data.get("run", {}))
        return r

    def ncomp(self, var: str) -> int:
        return int(self.data.get("variables", {}).get(var, {}).get("ncomp", 1))


def _path(err: jsonschema.ValidationError) -> str:
    out = ""
    for p in err.absolute_path:
        out += f"[{p}]" if isinstance(p, int) else (f".{p}" if out else str(p))
    return out or "<root>"


def validate(data: Any) -> None:
    v = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(v.iter_errors(data), key=lambda e: (len(list(e.absolute_path)), str(e.absolute_path)))
    if errors:
        e = errors[0]
        raise ConfigError(_path(e), e.message)


def loads(text: str, base_dir: Path | str = ".", path=None) -> Config:
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError("", f"not valid YAML: {exc}") from None
    validate(data)
    cfg = Config(data, Path(base_dir), Path(path) if path else None)
    resolve(cfg)  # reject bad regions and dangling references before staging
    return cfg


def parse_config(path) -> Config:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError("", f"cannot read {path}: {exc.strerror}") from None
    return loads(text, path.parent, path)


def render(cfg: Config) -> str:
    return yaml.safe_dump(cfg.data, sort_keys=False, allow_unicode=True)


# ---------------------------------------------------------------- building

class _Resolver:
    def __init__(self, cfg: Config):
        self.cfg = cfg
        g = cfg.data["grid"]
        self.regions: dict[str, Region] = {}
        self.regions["data"] = self._literal(g["data"], "grid.data")
        self.regions["full"] = self._literal(g["full"], "grid.full")
        if not self.regions["data"].issubset(self.regions["full"]):
            raise ConfigError("grid.data", "data region must lie inside the full region")
        for k, v in cfg.data.get("regions", {}).items():
            self.regions[k] = self._literal(v, f"regions.{k}")
        self.bc_regions: dict[str, Region] = {}

    def _literal(self, text: str, where: str) -> Region:
        try:
            return parse_region(text)
        except (GhostopError, ValueError) as exc:
            raise ConfigError(where, str(exc)) from None

    def region(self, ref: str, where: str) -> Region:
        if ref in self.regions:
            return self.regions[ref]
        if ref in self.bc_regions:
            return self.bc_regions[ref]
        r = self._literal(ref, where)
        if r.ndim != self.regions["full"].ndim:
            raise ConfigError(where, f"{r.ndim}-D region in a {self.regions['full'].ndim}-D grid")
        return r


@dataclass
class Built:
    config: Config
    data: Region
    full: Region
    mats: list
    vecs: list
    footprints: list
    stencil_weights: list
    params: dict

    @property
    def column_space(self) -> Region:
        return self.full if self.config.program["full_column"] else self.data

    def stage(self) -> BoundaryProgram:
        p = self.config.program
        return synthesize_branches(
            self.mats, self.vecs, self.full, self.params, column_space=self.column_space,
            data_region=self.data, output_var=p["output"], input_var=p["input"],
            full_column=p["full_column"],
        )

    def prune(self, program: BoundaryProgram) -> BoundaryProgram:
        if not self.footprints:
            return program
        return apply_pruning(program, compute_effective_space(program, self.footprints))

    def halo(self) -> tuple[int, ...]:
        h = self.config.data.get("partition", {}).get("halo")
        if h is None:
            return tuple(max(0, -(-(ds - fs) // dt), -(-(fl - dl) // dt)) for (fs, _, _), (ds, _, dt), fl, dl
                         in zip(self.full.dims, self.data.dims, self.full.lasts, self.data.lasts))
        if len(h) != self.full.ndim:
            raise ConfigError("partition.halo", f"needs {self.full.ndim} entries")
        return tuple(h)

    def proc_grid(self, ranks: int):
        grids = self.config.data.get("partition", {}).get("proc_grids", {})
        g = grids.get(str(ranks))
        return tuple(g) if g else None


def _storage(cfg: Config, bc: dict, where: str, region: Region, res: _Resolver) -> CsrStorage:
    path = cfg.base_dir / bc["file"]
    if not path.is_file():
        raise ConfigError(f"{where}.file", f"CSR payload {path} not found")
    calc = res.region(bc.get("calc_addr", bc["name"]), f"{where}.calc_addr")
    extract = res.region(bc.get("extract", "data"), f"{where}.extract")
    try:
        return CsrStorage.load(path, calc, extract)
    except GhostopError as exc:
        raise ConfigError(f"{where}.file", str(exc)) from None


def resolve(cfg: Config) -> Built:
    res = _Resolver(cfg)
    data, full = res.regions["data"], res.regions["full"]
    names = set()
    for k, bc in enumerate(cfg.boundaries):
        if bc["name"] in names:
            raise ConfigError(f"boundaries[{k}].name", f"duplicate boundary {bc['name']!r}")
        names.add(bc["name"])
        if "region" in bc:
            res.bc_regions[bc["name"]] = res.region(bc["region"], f"boundaries[{k}].region")
    mats, vecs = [], []
    for k, bc in enumerate(cfg.boundaries):
        where = f"boundaries[{k}]"
        kind, name = bc["kind"], bc["name"]
        region = res.bc_regions.get(name)
        exclude = [res.region(r, f"{where}.exclude") for r in bc.get("exclude", [])]
        common = dict(exclude=exclude, name=name)
        try:
            if kind in ("zero", "halo_copy", "circular", "symmetric"):
                extent = res.region(bc.get("data_extent", "data"), f"{where}.data_extent")
                mats.append(make_simple(kind, region, bc.get("axis"), extent,
                                        block_axis=bc.get("block_axis"),
                                        n_group=bc.get("n_group", 1), **common))
            elif kind == "mapping":
                cols = [parse_int(c) for c in bc["col"]]
                if len(cols) != full.ndim:
                    raise ConfigError(f"{where}.col", f"needs {full.ndim} expressions")
                gid = parse_int(bc["gid"]) if "gid" in bc else None
                mats.append(make_mapping(region, cols, parse_weight(bc.get("weight", 1.0)), gid=gid,
                                         block_axis=bc.get("block_axis"),
                                         n_group=bc.get("n_group", 1), **common))
            elif kind == "csr":
                st = _storage(cfg, bc, where, region, res)
                mats.append(make_csr(region, st, n_group=bc.get("n_group", 1), **common))
            elif kind == "edge_sync":
                mats.append(make_edge_sync(bc["groups"], bc.get("weights"), ndim=full.ndim,
                                           strict=bc.get("strict", True), name=name))
            elif kind == "pure_function":
                vecs.append(make_pure_function(region, parse_weight(bc["value"]), **common))
        except ConfigError:
            raise
        except (GhostopError, ValueError, SyntaxError) as exc:
            raise ConfigError(where, str(exc)) from None
    fps, weights = [], []
    out_var = cfg.program["output"]
    for k, fp in enumerate(cfg.footprints):
        inner = res.region(fp["inner"], f"footprints[{k}].inner")
        var = fp.get("var", out_var)
        if "offsets" in fp:
            f = StencilFootprint(inner, [(var, o) for o in fp["offsets"]])
        elif fp.get("stencil", "five_point") == "five_point":
            f = five_point(inner, var, fp.get("axes"))
        else:
            f = nine_point(inner, var, fp.get("axes"))
        w = fp.get("weights")
        if w is not None and len(w) != len(f.reads):
            raise ConfigError(f"footprints[{k}].weights", f"needs {len(f.reads)} values")
        fps.append(f)
        weights.append(w)
    return Built(cfg, data, full, mats, vecs, fps, weights, dict(cfg.data.get("params", {})))


def with_updates(cfg: Config, **sections) -> Config:
    data = copy.deepcopy(cfg.data)
    data.update(sections)
    return Config(data, cfg.base_dir, cfg.path)


def csr_from_rows(rows, calc_addr: Region, extract: Region) -> CsrStorage:
    """Storage from ``[[(col_index, weight), ...], ...]`` in ``calc_addr`` order."""
    row_ptr, col, data = [0], [], []
    for r in rows:
        for c, w in r:
            col.append(extract.ordinal(c))
            data.append(float(w))
        row_ptr.append(len(col))
    return CsrStorage(np.array(row_ptr), np.array(col, dtype=np.int64), np.array(data), calc_addr, extract)
