"""Run-spec documents: YAML in, validated by JSON Schema, turned into objects.

Bundled presets (dies, DRAM chiplets, the four representative wafers and the
model zoo) are merged under whatever a spec defines itself.
"""

from __future__ import annotations

import copy
import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Any

import jsonschema
import yaml

from .engines import TpSplit
from .hw_model import (CoreSpec, DieSpec, DramChipletSpec, TemplateRanges, WaferConfig,
                       config_label)
from .search import GaParams, SearchKnobs
from .workload import ModelConfig, TrainingWorkload

SPEC_VERSION = 1
GB = 10 ** 9
MIB = 2 ** 20


class SpecError(ValueError):
    """Schema or reference error in a run spec; message names the field."""


_num = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}
_int = {"type": "integer", "minimum": 0}
_posint = {"type": "integer", "minimum": 1}

_core = {"type": "object", "additionalProperties": False,
         "required": ["peak_flops", "sram_bytes"],
         "properties": {"peak_flops": _pos, "sram_bytes": _posint, "frequency": _pos}}
_die = {"type": "object", "additionalProperties": False,
        "required": ["width_mm", "height_mm", "core_rows", "core_cols", "core"],
        "properties": {"width_mm": _pos, "height_mm": _pos, "core_rows": _posint,
                       "core_cols": _posint, "core": _core, "edge_io_bandwidth": _pos,
                       "dram_io_fraction": {"type": "number", "minimum": 0, "maximum": 1}}}
_dram = {"type": "object", "additionalProperties": False,
         "required": ["width_mm", "height_mm", "capacity_gb", "bandwidth"],
         "properties": {"width_mm": _pos, "height_mm": _pos, "capacity_gb": _pos, "bandwidth": _pos}}
_wafer = {"type": "object", "additionalProperties": False,
          "required": ["grid", "die", "dram", "dram_chiplets", "d2d_bandwidth"],
          "properties": {"grid": {"type": "array", "items": _posint, "minItems": 2, "maxItems": 2},
                         "die": {"type": "string"}, "dram": {"type": "string"},
                         "dram_chiplets": _int, "d2d_bandwidth": _num, "d2d_latency": _num,
                         "labels": {"type": "object", "additionalProperties": {"type": "string"}}}}


def _list_of(item):
    return {"type": "array", "items": item}


_ranges = {"type": "object", "additionalProperties": False,
           "required": ["grid_x", "grid_y", "die", "dram", "dram_chiplets", "d2d_bandwidth"],
           "properties": {"grid_x": _list_of(_posint), "grid_y": _list_of(_posint),
                          "die": _list_of({"type": "string"}), "dram": _list_of({"type": "string"}),
                          "dram_chiplets": _list_of(_int), "d2d_bandwidth": _list_of(_num),
                          "d2d_latency": _list_of(_num)}}
_model = {"type": "object", "additionalProperties": False,
          "required": ["num_layers", "hidden_size", "num_heads", "seq_len", "vocab_size"],
          "properties": {"name": {"type": "string"}, "num_layers": _posint, "hidden_size": _posint,
                         "num_heads": _posint, "seq_len": _posint, "vocab_size": _posint,
                         "param_count": _pos, "ffn_hidden": _posint, "moe_experts": _int}}
_ga = {"type": "object", "additionalProperties": False,
       "properties": {"population": _posint, "steps": _int,
                      "omega": {"type": "number", "minimum": 0, "maximum": 1},
                      "seed": {"type": "integer"}, "random_restart": {"type": "boolean"},
                      "op_probs": {"type": "array", "minItems": 5, "maxItems": 5,
                                   "items": {"type": "number", "minimum": 0, "maximum": 1}}}}

SPEC_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object", "additionalProperties": False, "required": ["version"],
    "properties": {
        "version": {"const": SPEC_VERSION},
        "hardware": {"type": "object", "additionalProperties": False, "properties": {
            "dies": {"type": "object", "additionalProperties": _die},
            "drams": {"type": "object", "additionalProperties": _dram},
            "wafers": {"type": "object", "additionalProperties": _wafer},
            "ranges": _ranges,
            "use": _list_of({"type": "string"}),
            "wafer_mm": {"type": "array", "items": _pos, "minItems": 2, "maxItems": 2}}},
        "model": {"oneOf": [{"type": "string"}, _model]},
        "workload": {"type": "object", "additionalProperties": False,
                     "properties": {"microbatch_size": _int, "num_microbatches": _posint}},
        "strategy": {"type": "object", "additionalProperties": False, "required": ["tp", "pp"],
                     "properties": {"tp": _posint, "pp": _posint,
                                    "shape": {"type": "array", "items": _posint,
                                              "minItems": 2, "maxItems": 2},
                                    "factors": {"type": "object", "additionalProperties": False,
                                                "properties": {d: _posint for d in "BSHK"}},
                                    "recompute": {"enum": ["gcmr", "none"]}}},
        "search": {"type": "object", "additionalProperties": False, "properties": {
            "quantum_mib": _posint, "utilization": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
            "punishment": {"type": "number", "minimum": 0}, "fast": {"type": "boolean"},
            "ga_top_k": _int, "anneal_steps": _int, "ga": _ga}},
    },
}


class _Loader(yaml.SafeLoader):
    """SafeLoader that also reads ``4e12`` as a float (YAML 1.2 style)."""


_Loader.add_implicit_resolver(
    "tag:yaml.org,2002:float",
    re.compile(r"""^(?:[-+]?(?:[0-9][0-9_]*)\.[0-9_]*(?:[eE][-+]?[0-9]+)?
                  |[-+]?(?:[0-9][0-9_]*)(?:[eE][-+]?[0-9]+)
                  |\.[0-9_]+(?:[eE][-+]?[0-9]+)?
                  |[-+]?\.(?:inf|Inf|INF)
                  |\.(?:nan|NaN|NAN))$""", re.X),
    list("-+0123456789."))


def parse_yaml(text: str):
    return yaml.load(text, Loader=_Loader)


def _load_preset(name: str) -> dict:
    text = resources.files("waferdse").joinpath("presets", name).read_text()
    return parse_yaml(text) or {}


def preset_path(name: str) -> Path:
    return Path(str(resources.files("waferdse").joinpath("presets", name)))


def _line_of(text: str, path) -> int | None:
    """Best-effort source line of a field path inside a YAML document."""
    try:
        node = yaml.compose(text)
    except yaml.YAMLError:
        return None
    line = None
    for key in path:
        if node is None:
            break
        line = node.start_mark.line + 1
        if isinstance(node, yaml.MappingNode):
            nxt = None
            for k, v in node.value:
                if k.value == str(key):
                    nxt, line = v, k.start_mark.line + 1
                    break
            node = nxt
        elif isinstance(node, yaml.SequenceNode) and isinstance(key, int) and key < len(node.value):
            node = node.value[key]
            line = node.start_mark.line + 1
        else:
            break
    return line


def validate_spec(doc: Any, text: str | None = None) -> dict:
    if not isinstance(doc, dict):
        raise SpecError("spec document must be a mapping")
    validator = jsonschema.Draft202012Validator(SPEC_SCHEMA)
    errors = sorted(validator.iter_errors(doc), key=lambda e: list(map(str, e.absolute_path)))
    if errors:
        msgs = []
        for e in errors:
            path = list(e.absolute_path)
            if e.validator == "additionalProperties" and isinstance(e.instance, dict):
                # point at the first offending key rather than its parent
                allowed = e.schema.get("properties", {})
                extra = sorted(k for k in e.instance if k not in allowed)
                if extra and e.schema.get("additionalProperties") is False:
                    path.append(extra[0])
            field = ".".join(str(p) for p in path) or "<root>"
            line = _line_of(text, path) if text else None
            where = f" (line {line})" if line else ""
            msgs.append(f"{field}{where}: {e.message}")
        raise SpecError("; ".join(msgs))
    return doc


def load_spec(path: str | Path) -> dict:
    text = Path(path).read_text()
    try:
        doc = parse_yaml(text)
    except yaml.YAMLError as e:
        raise SpecError(f"malformed YAML: {e}") from None
    return validate_spec(doc, text)


# -- object construction -----------------------------------------------------

def _die(name: str, d: dict) -> DieSpec:
    core = CoreSpec(float(d["core"]["peak_flops"]), int(d["core"]["sram_bytes"]),
                    float(d["core"].get("frequency", 2.0e9)))
    return DieSpec(float(d["width_mm"]), float(d["height_mm"]), int(d["core_rows"]),
                   int(d["core_cols"]), core, float(d.get("edge_io_bandwidth", 12e12)),
                   float(d.get("dram_io_fraction", 0.25)), name)


def _dram(name: str, d: dict) -> DramChipletSpec:
    return DramChipletSpec(float(d["width_mm"]), float(d["height_mm"]),
                           int(round(float(d["capacity_gb"]) * GB)), float(d["bandwidth"]), name)


@dataclass(frozen=True)
class Hardware:
    dies: dict
    drams: dict
    wafers: dict          # name -> WaferConfig
    ranges: TemplateRanges | None
    use: tuple[str, ...]
    wafer_mm: tuple[float, float]


def hardware_from_spec(spec: dict) -> Hardware:
    preset = _load_preset("hardware.yaml")
    hw = spec.get("hardware", {})
    dies_raw = {**preset.get("dies", {}), **hw.get("dies", {})}
    drams_raw = {**preset.get("drams", {}), **hw.get("drams", {})}
    wafers_raw = {**preset.get("wafers", {}), **hw.get("wafers", {})}
    dies = {k: _die(k, v) for k, v in dies_raw.items()}
    drams = {k: _dram(k, v) for k, v in drams_raw.items()}
    wmm = tuple(float(x) for x in hw.get("wafer_mm", (198.0, 198.0)))

    def get(table, key, kind):
        if key not in table:
            raise SpecError(f"hardware: unknown {kind} {key!r}")
        return table[key]

    wafers = {}
    for name, w in wafers_raw.items():
        wafers[name] = WaferConfig(
            grid_x=int(w["grid"][0]), grid_y=int(w["grid"][1]), die=get(dies, w["die"], "die"),
            dram_chiplets_per_die=int(w["dram_chiplets"]), dram=get(drams, w["dram"], "dram"),
            d2d_bandwidth=float(w["d2d_bandwidth"]), d2d_latency=float(w.get("d2d_latency", 1e-7)),
            wafer_width_mm=wmm[0], wafer_height_mm=wmm[1], name=name,
            labels=tuple(sorted(w.get("labels", {}).items())))
    ranges = None
    if "ranges" in hw:
        r = hw["ranges"]
        ranges = TemplateRanges(
            grid_x=list(r["grid_x"]), grid_y=list(r["grid_y"]),
            die=[get(dies, d, "die") for d in r["die"]],
            dram=[get(drams, d, "dram") for d in r["dram"]],
            dram_chiplets_per_die=list(r["dram_chiplets"]),
            d2d_bandwidth=[float(x) for x in r["d2d_bandwidth"]],
            d2d_latency=[float(x) for x in r.get("d2d_latency", [1e-7])])
    use = tuple(hw.get("use", ()))
    for u in use:
        get(wafers, u, "wafer")
    return Hardware(dies, drams, wafers, ranges, use, wmm)


def selected_wafers(hw: Hardware) -> list[WaferConfig]:
    names = hw.use or tuple(sorted(hw.wafers))
    return [hw.wafers[n] for n in names]


def model_from_spec(spec: dict) -> ModelConfig:
    m = spec.get("model")
    if m is None:
        raise SpecError("model: required for this command")
    if isinstance(m, str):
        zoo = _load_preset("models.yaml")
        if m not in zoo:
            raise SpecError(f"model: unknown preset {m!r} (known: {', '.join(sorted(zoo))})")
        d = dict(zoo[m], name=m)
    else:
        d = dict(m)
        d.setdefault("name", "custom")
    if "param_count" in d:
        d["param_count"] = int(d["param_count"])
    return ModelConfig(**d)


def workload_from_spec(spec: dict) -> TrainingWorkload:
    w = spec.get("workload", {})
    return TrainingWorkload(model_from_spec(spec), int(w.get("microbatch_size", 1)),
                            int(w.get("num_microbatches", 8)))


def knobs_from_spec(spec: dict, overrides: dict | None = None) -> SearchKnobs:
    s = copy.deepcopy(spec.get("search", {}))
    ga = s.get("ga", {})
    o = {k: v for k, v in (overrides or {}).items() if v is not None}
    params = GaParams(population=int(o.get("population", ga.get("population", 32))),
                      steps=int(o.get("steps", ga.get("steps", 100))),
                      omega=float(o.get("omega", ga.get("omega", 0.5))),
                      seed=int(o.get("seed", ga.get("seed", 0))),
                      op_probs=tuple(ga.get("op_probs", (1.0,) * 5)),
                      random_restart=bool(ga.get("random_restart", False)))
    return SearchKnobs(quantum=int(s.get("quantum_mib", 256)) * MIB,
                       utilization=float(s.get("utilization", 0.5)),
                       punishment=float(s.get("punishment", 4.0)),
                       fast=bool(o.get("fast", s.get("fast", False))),
                       ga=params, ga_top_k=int(s.get("ga_top_k", 2)),
                       anneal_steps=int(s.get("anneal_steps", 2000)))


def split_from_spec(spec: dict) -> tuple[int, int, TpSplit, str]:
    st = spec.get("strategy")
    if st is None:
        raise SpecError("strategy: required for evaluate")
    tp, pp = int(st["tp"]), int(st["pp"])
    shape = tuple(st.get("shape", (1, tp)))
    factors = st.get("factors", {"H": tp} if tp > 1 else {})
    try:
        split = TpSplit(shape, tuple((d, int(factors[d])) for d in "BSHK" if d in factors and factors[d] > 1))
    except ValueError as e:
        raise SpecError(f"strategy: {e}") from None
    if split.tp != tp:
        raise SpecError(f"strategy.shape {shape} does not hold tp={tp} dies")
    return tp, pp, split, st.get("recompute", "gcmr")


def wafer_to_dict(w: WaferConfig) -> dict:
    return {"name": w.name or config_label(w), "grid": [w.grid_x, w.grid_y], "dies": w.num_dies,
            "die": w.die.name, "die_tflops": w.die.compute_flops / 1e12,
            "die_sram_mb": w.die.sram_bytes / 1e6, "dram": w.dram.name,
            "dram_chiplets": w.dram_chiplets_per_die, "dram_per_die_gb": w.dram_capacity_per_die / GB,
            "dram_bandwidth_per_die": w.dram_bandwidth_per_die, "d2d_bandwidth": w.d2d_bandwidth,
            "d2d_latency": w.d2d_latency, "total_dram_gb": w.total_dram_bytes / GB,
            "slot_mm": [round(w.slot_width_mm(), 6), round(w.slot_height_mm(), 6)],
            "labels": dict(w.labels)}


REPORT_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object", "additionalProperties": False,
    "required": ["tool", "version", "command", "input_hash", "spec", "status"],
    "properties": {
        "tool": {"const": "waferdse"}, "version": {"type": "string"},
        "command": {"enum": ["enumerate", "evaluate", "search"]},
        "input_hash": {"type": "string"}, "spec": {"type": "object"},
        "status": {"enum": ["ok", "infeasible", "exhausted"]},
        "error": {"type": "string"},
        "configs": {"type": "array", "items": {"type": "object"}},
        "results": {"type": "array", "items": {"type": "object"}},
        "notes": {"type": "array", "items": {"type": "string"}},
    },
}


def validate_report(doc: dict) -> dict:
    jsonschema.validate(doc, REPORT_SCHEMA)
    return doc
