"""Multiplication and parameter counts for standard and depthwise-separable convolutions.

Bias terms are ignored throughout.  The two presets rebuild the neck and head
reductions from stated layer shapes; the shapes are assumptions and are kept
next to the layers so reports can print them.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

KINDS = ("standard", "depthwise_separable")

FPN_TARGET = 1.0 / 15.0
HEAD_TARGET = 0.005


@dataclass(frozen=True)
class ConvSpec:
    kind: str
    k: int
    c_in: int
    c_out: int
    w_out: int = 1
    h_out: int = 1
    name: str = ""

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}, got {self.kind!r}")
        for f in ("k", "c_in", "c_out", "w_out", "h_out"):
            v = getattr(self, f)
            if isinstance(v, bool) or not isinstance(v, int) or v < 1:
                raise ValueError(f"{f} must be a positive integer, got {v!r}")

    @classmethod
    def from_dict(cls, d: dict) -> "ConvSpec":
        return cls(**d)


@dataclass(frozen=True)
class LayerCost:
    name: str
    kind: str
    mults: int
    params: int


@dataclass(frozen=True)
class CostReport:
    mults: int
    params: int
    layers: tuple[LayerCost, ...] = ()

    def to_dict(self) -> dict:
        return {"mults": self.mults, "params": self.params,
                "layers": [asdict(layer) for layer in self.layers]}


def conv_cost(spec: ConvSpec) -> CostReport:
    k2 = spec.k * spec.k
    area = spec.w_out * spec.h_out
    if spec.kind == "standard":
        mults = k2 * spec.c_in * area * spec.c_out
        params = k2 * spec.c_in * spec.c_out
    else:
        mults = k2 * spec.c_in * area + spec.c_in * area * spec.c_out
        params = k2 * spec.c_in + spec.c_in * spec.c_out
    return CostReport(mults, params, (LayerCost(spec.name or spec.kind, spec.kind, mults, params),))


def total_cost(specs) -> CostReport:
    layers = tuple(layer for s in specs for layer in conv_cost(s).layers)
    return CostReport(sum(l.mults for l in layers), sum(l.params for l in layers), layers)


def ratio(before, after) -> float:
    before = list(before)
    after = list(after)
    if not before or not after:
        raise ValueError("ratio needs two non-empty layer lists")
    denom = total_cost(before).mults
    if denom == 0:
        raise ZeroDivisionError("reference cost is zero")
    return total_cost(after).mults / denom


@dataclass(frozen=True)
class Preset:
    name: str
    before: tuple[ConvSpec, ...]
    after: tuple[ConvSpec, ...]
    target: float
    claim: str
    assumptions: tuple[str, ...] = field(default=())

    def ratio(self) -> float:
        return ratio(self.before, self.after)

    def param_ratio(self) -> float:
        return total_cost(self.after).params / total_cost(self.before).params

    def within(self, factor: float = 2.0) -> bool:
        r = self.ratio()
        return self.target / factor <= r <= self.target * factor

    def report(self) -> dict:
        return {
            "preset": self.name,
            "claim": self.claim,
            "target_ratio": self.target,
            "ratio": self.ratio(),
            "param_ratio": self.param_ratio(),
            "within_factor_2": self.within(2.0),
            "before": total_cost(self.before).to_dict(),
            "after": total_cost(self.after).to_dict(),
            "assumptions": list(self.assumptions),
        }


def _fpn_preset() -> Preset:
    before = (ConvSpec("standard", 3, 256, 256, name="fpn_output_3x3_256"),)
    after = []
    for unit in (1, 2):
        after.append(ConvSpec("standard", 1, 96, 96, name=f"ghost_unit{unit}_1x1_96"))
        after.append(ConvSpec("depthwise_separable", 3, 96, 96, name=f"ghost_unit{unit}_dw3x3_96"))
    return Preset(
        "fpn", before, tuple(after), FPN_TARGET, "neck cost is 1/15 of the original",
        ("one pyramid level; every layer keeps the same output size, so W_out*H_out cancels",
         "removed layer: standard 3x3 output convolution, 256 -> 256 channels",
         "added ghost block: two units, each a 1x1 standard conv plus a 3x3 depthwise-separable conv, 96 -> 96 channels"))


def _head_preset() -> Preset:
    before = tuple(ConvSpec("standard", 3, 256, 256, name=f"{branch}_tower{i}_3x3_256")
                   for branch in ("cls", "reg") for i in range(1, 5))
    after = tuple(ConvSpec("depthwise_separable", 5, 96, 96, name=f"shared_tower{i}_dw5x5_96")
                  for i in (1, 2))
    return Preset(
        "head", before, after, HEAD_TARGET, "head cost is 0.5% of the original",
        ("one pyramid level; every layer keeps the same output size, so W_out*H_out cancels",
         "original head: classification and regression towers, four standard 3x3 convs each, 256 -> 256 channels",
         "optimised head: two shared 5x5 depthwise-separable convs, 96 -> 96 channels",
         "final prediction layers excluded on both sides"))


PRESETS = {"fpn": _fpn_preset(), "head": _head_preset()}


def load_specs(path) -> list[ConvSpec]:
    with open(path) as fh:
        payload = json.load(fh)
    if isinstance(payload, dict):
        payload = payload.get("layers", [])
    if not isinstance(payload, list):
        raise ValueError("expected a JSON list of conv specs")
    return [ConvSpec.from_dict(d) for d in payload]


def format_table(report: CostReport) -> str:
    rows = [("layer", "kind", "mults", "params")]
    rows += [(l.name, l.kind, f"{l.mults:,}", f"{l.params:,}") for l in report.layers]
    rows.append(("total", "", f"{report.mults:,}", f"{report.params:,}"))
    widths = [max(len(r[i]) for r in rows) for i in range(4)]
    lines = ["  ".join(cell.ljust(widths[i]) if i < 2 else cell.rjust(widths[i])
                       for i, cell in enumerate(row)) for row in rows]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines)
