"""Scenario files (YAML) and run manifests.

A scenario fixes everything a run depends on; see README for the schema.
Validation errors name the offending field as a dotted path.
"""

import copy
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .detectors import Cutoff, CutoffError, ProductCutoff
from .dynamics import ConfigError, EvolutionConfig, GaussianPotential, SampledPotential, SourceModel
from .grid import make_grid
from .kgwave import PacketError, make_packet, product_state, velocity_support
from .kgwave import reach as packet_reach
from .regions import RegionSpec


class ScenarioError(ValueError):
    pass


DEFAULTS = {
    "name": "scenario",
    "grid": {"d": 1, "n": 512, "L": "auto"},
    "mass": 1.0,
    "symmetrize": True,
    "source": {"variant": "none"},
    "evolution": {"t0": 1.0, "T": 400.0, "dt": 0.25, "scheme": "strang", "n_log": 48,
                  "linear_step": 0.0, "wraparound_tol": 1e-6, "record_cook": False},
    "region": {"kind": "annulus", "r_in": 1.0, "r_out": 2.0, "diag_gap": 0.5},
    "large_velocity": {"r": 1.6, "r_prime": 3.0, "eps": 0.3},
    "graf": {"resolution": 4},
    "limits": {"tol": 1e-2, "cook_tail_tol": 1e-2},
    "diagnostics": [],
    "seed": 0,
    "output": "runs/scenario",
    "figures": True,
}

KNOWN_DIAGNOSTICS = ("two_detector", "large_velocity", "phase_space", "monitor_A1", "monitor_A2",
                     "monitor_A3", "source_offdiag")


def _merge(base, extra):
    out = copy.deepcopy(base)
    for k, v in (extra or {}).items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def _num(data, path, cast=float, positive=False):
    node = data
    for key in path.split("."):
        if not isinstance(node, dict) or key not in node:
            raise ScenarioError(f"{path}: missing")
        node = node[key]
    try:
        val = cast(node)
    except (TypeError, ValueError):
        raise ScenarioError(f"{path}: expected a number, got {node!r}") from None
    if positive and not val > 0:
        raise ScenarioError(f"{path}: must be positive, got {val}")
    return val


def apply_override(data, text):
    """KEY=VALUE with a dotted key; VALUE is parsed as YAML."""
    if "=" not in text:
        raise ScenarioError(f"override {text!r}: expected KEY=VALUE")
    key, raw = text.split("=", 1)
    value = yaml.safe_load(raw)
    parts = key.strip().split(".")
    node = data
    for p in parts[:-1]:
        if p.isdigit() and isinstance(node, list):
            node = node[int(p)]
            continue
        node = node.setdefault(p, {})
    last = parts[-1]
    if last.isdigit() and isinstance(node, list):
        node[int(last)] = value
    else:
        node[last] = value
    return data


@dataclass
class Scenario:
    data: dict
    warnings: list = field(default_factory=list)

    # construction -------------------------------------------------------
    @classmethod
    def from_dict(cls, data, overrides=()):
        merged = _merge(DEFAULTS, data)
        for ov in overrides:
            apply_override(merged, ov)
        sc = cls(merged)
        sc.validate()
        return sc

    @classmethod
    def load(cls, path, overrides=()):
        path = Path(path)
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as exc:
            raise ScenarioError(f"cannot read scenario {path}: {exc}") from None
        try:
            # PyYAML reads JSON exponents like 1e-06 as strings, so manifests go through json
            data = json.loads(text) if path.suffix == ".json" else yaml.safe_load(text)
        except (json.JSONDecodeError, yaml.YAMLError) as exc:
            raise ScenarioError(f"cannot parse {path}: {exc}") from None
        if isinstance(data, dict) and "scenario" in data and "code_version" in data:
            data = data["scenario"]  # a run manifest
        if not isinstance(data, dict):
            raise ScenarioError(f"{path}: top level must be a mapping")
        return cls.from_dict(data, overrides)

    def dump(self):
        return yaml.safe_dump(self.data, sort_keys=True)

    def save(self, path):
        Path(path).write_text(self.dump(), encoding="utf-8")

    # accessors ----------------------------------------------------------
    @property
    def name(self):
        return self.data["name"]

    @property
    def m(self):
        return float(self.data["mass"])

    @property
    def grid(self):
        return make_grid(int(self.data["grid"]["d"]), int(self.data["grid"]["n"]), float(self.data["grid"]["L"]))

    def packets(self):
        g = self.grid
        out = []
        for k, spec in enumerate(self.data["packets"]):
            try:
                out.append(make_packet(g, self.m, spec["p_center"], spec["p_width"], x0=spec.get("x0", 0.0),
                                       sharpness=spec.get("sharpness")))
            except PacketError as exc:
                raise ScenarioError(f"packets.{k}: {exc}") from None
        return out

    def initial_state(self):
        p1, p2 = self.packets()
        return product_state(p1.initial, p2.initial, symmetrize=bool(self.data["symmetrize"]))

    def source(self):
        spec = self.data["source"]
        variant = spec.get("variant", "none")
        if variant == "none":
            return SourceModel.none()
        if variant == "pair_potential":
            pot = spec.get("potential", {})
            if pot.get("kind", "gaussian") == "gaussian":
                return SourceModel.pair(GaussianPotential(float(pot["coupling"]), float(pot["width"])))
            return SourceModel.pair(SampledPotential(np.asarray(pot["separations"], float),
                                                     np.asarray(pot["values"], float)))
        raise ScenarioError(f"source.variant: {variant!r} cannot be given in a scenario file "
                            "(tabulated sources are library-only)")

    def evolution(self):
        e = self.data["evolution"]
        return EvolutionConfig(T=float(e["T"]), dt=float(e["dt"]), t0=float(e["t0"]), scheme=e["scheme"],
                               n_log=int(e["n_log"]), linear_step=float(e.get("linear_step", 0.0)),
                               extra_times=tuple(float(t) for t in e.get("extra_times", ())),
                               wraparound_tol=float(e["wraparound_tol"]), record_cook=bool(e["record_cook"]))

    def detectors(self):
        det = self.data.get("detectors")
        if not det:
            return None
        h1, h2 = Cutoff.from_dict(det["h1"]), Cutoff.from_dict(det["h2"])
        return ProductCutoff(h1, h2)

    def region(self):
        return RegionSpec.from_dict(self.data["region"], d=int(self.data["grid"]["d"]))

    # validation ---------------------------------------------------------
    def validate(self):
        d = self.data
        gd = d["grid"]
        dim = _num(d, "grid.d", int)
        n = _num(d, "grid.n", int)
        if dim not in (1, 2):
            raise ScenarioError(f"grid.d: must be 1 or 2, got {dim}")
        if n < 16 or n & (n - 1):
            raise ScenarioError(f"grid.n: must be a power of two >= 16, got {n}")
        _num(d, "mass", positive=True)
        if "packets" not in d or not isinstance(d["packets"], list) or len(d["packets"]) != 2:
            raise ScenarioError("packets: exactly two packet specifications are required")
        for k, spec in enumerate(d["packets"]):
            for key in ("p_center", "p_width"):
                if key not in spec:
                    raise ScenarioError(f"packets.{k}.{key}: missing")
            if not np.all(np.asarray(spec["p_width"], float) > 0):
                raise ScenarioError(f"packets.{k}.p_width: must be positive, got {spec['p_width']}")
            if spec.get("sharpness") is not None and not float(spec["sharpness"]) > 0:
                raise ScenarioError(f"packets.{k}.sharpness: must be positive")
        T = _num(d, "evolution.T", positive=True)
        sigma = 0.0
        src = d["source"]
        if src.get("variant") not in ("none", "pair_potential"):
            raise ScenarioError(f"source.variant: expected 'none' or 'pair_potential', got {src.get('variant')!r}")
        if src.get("variant") == "pair_potential":
            pot = src.get("potential") or {}
            if pot.get("kind", "gaussian") == "gaussian":
                for key in ("coupling", "width"):
                    if key not in pot:
                        raise ScenarioError(f"source.potential.{key}: missing")
                sigma = _num(d, "source.potential.width", positive=True)
        if gd.get("L") in (None, "auto"):
            x0max = max(float(np.max(np.abs(np.atleast_1d(p.get("x0", 0.0))))) for p in d["packets"])
            gd["L"] = float(math.ceil(x0max + 1.05 * T + 10.0 * sigma))
            self.warnings.append(f"grid.L: auto-sized to {gd['L']} (|x0|max + 1.05 T + 10 sigma)")
        _num(d, "grid.L", positive=True)
        try:
            evo = self.evolution()
        except ConfigError as exc:
            raise ScenarioError(f"evolution: {exc}") from None
        try:
            self.source()
            if src.get("variant") == "pair_potential":
                from .dynamics import potential_array
                potential_array(self.grid, self.source().potential)
        except ConfigError as exc:
            raise ScenarioError(f"source.potential: {exc}") from None
        packets = self.packets()
        try:
            cut = self.detectors()
        except CutoffError as exc:
            raise ScenarioError(f"detectors: {exc}") from None
        except KeyError as exc:
            raise ScenarioError(f"detectors.{exc.args[0]}: missing") from None
        try:
            region = self.region()
        except (ValueError, TypeError) as exc:
            raise ScenarioError(f"region: {exc}") from None
        if not region.diagonal_clearance() > 0:
            raise ScenarioError("region: K touches the diagonal (diagonal clearance must be > 0)")
        lv = d["large_velocity"]
        if not float(lv["r"]) > math.sqrt(2):
            raise ScenarioError(f"large_velocity.r: must exceed sqrt(2), got {lv['r']}")
        if not float(lv["r_prime"]) > float(lv["r"]):
            raise ScenarioError("large_velocity.r_prime: must exceed large_velocity.r")
        for name in d["diagnostics"]:
            if name not in KNOWN_DIAGNOSTICS:
                raise ScenarioError(f"diagnostics: unknown entry {name!r}; known: {', '.join(KNOWN_DIAGNOSTICS)}")
        # wraparound precheck at the run's mass tolerance
        g = self.grid
        for k, pk in enumerate(packets):
            reach = packet_reach(pk, T, evo.wraparound_tol)
            if reach >= 0.95 * g.L:
                raise ScenarioError(
                    f"grid.L: packet {k} reaches |x| = {reach:.4g} by T = {T:g}, beyond 0.95 L = {0.95 * g.L:.4g}; "
                    f"need L >= {reach / 0.95:.4g}"
                )
        if cut is not None:
            self._velocity_warnings(cut, packets)
        return self

    def _velocity_warnings(self, cut, packets):
        for k, (pk, h) in enumerate(zip(packets, (cut.h1, cut.h2))):
            vs = velocity_support(pk)
            inside = h(vs.samples)
            if np.min(inside) < 1.0:
                self.warnings.append(
                    f"detectors.h{k + 1}: packet {k} velocity support is not inside the inner plateau "
                    f"(min h = {float(np.min(inside)):.3g})"
                )

    # echo ---------------------------------------------------------------
    def as_dict(self):
        return copy.deepcopy(self.data)


@dataclass
class RunManifest:
    scenario: dict
    command: str
    code_version: str = __version__
    checksums: dict = field(default_factory=dict)
    outputs: dict = field(default_factory=dict)
    wall_clock_s: float = 0.0
    steps: int = 0
    status: str = "ok"
    notes: list = field(default_factory=list)

    def as_dict(self):
        return {"scenario": self.scenario, "command": self.command, "code_version": self.code_version,
                "checksums": self.checksums, "outputs": self.outputs, "wall_clock_s": self.wall_clock_s,
                "steps": self.steps, "status": self.status, "notes": self.notes}
