"""Seeded synthetic module corpora.

Each module is drawn from its own counter-based stream (Philox keyed by the
corpus seed and the module index), so module k is the same no matter how
many modules are generated or in what order.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import irmodel
from ._io import atomic_write_text
from .errors import ParameterError
from .irmodel import EXTERNAL, INTERNAL, CallSite, FunctionDef, ModuleGraph

MANIFEST = "manifest.json"
MODULE_SUFFIX = ".mod"


@dataclass(frozen=True)
class CorpusParams:
    seed: int = 0
    module_count: int = 200
    functions_per_module: tuple[int, int] = (8, 40)
    size: tuple[int, int] = (3, 60)
    param_count: tuple[int, int] = (0, 4)
    calls_per_function: tuple[int, int] = (0, 3)
    const_arg_probability: float = 0.3
    internal_linkage_probability: float = 0.7
    back_edge_probability: float = 0.05
    savings_fraction: tuple[float, float] = (0.0, 0.5)
    growth_cap_factor: str = "3/2"

    def check(self):
        if not 0 <= self.seed < 2**64:
            raise ParameterError("seed must fit in 64 bits")
        if self.module_count < 0:
            raise ParameterError("module_count must be >= 0")
        for name in ("functions_per_module", "size", "param_count", "calls_per_function", "savings_fraction"):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise ParameterError(f"{name}: empty range [{lo}, {hi}]")
            if lo < 0:
                raise ParameterError(f"{name}: negative bound")
        if self.functions_per_module[0] < 2:
            raise ParameterError("functions_per_module must allow at least 2 functions")
        if self.size[0] < 2:
            raise ParameterError("size lower bound must be >= 2 (one call plus one other instruction)")
        if self.calls_per_function[1] < 1:
            raise ParameterError("calls_per_function must allow at least one call site")
        for name in ("const_arg_probability", "internal_linkage_probability", "back_edge_probability"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ParameterError(f"{name} must be in [0, 1]")
        if self.savings_fraction[1] > 1.0:
            raise ParameterError("savings_fraction must lie in [0, 1]")
        try:
            from fractions import Fraction

            if Fraction(self.growth_cap_factor) <= 1:
                raise ParameterError("growth_cap_factor must be > 1")
        except (ValueError, ZeroDivisionError):
            raise ParameterError("growth_cap_factor must be a rational like 3/2") from None

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "CorpusParams":
        kw = dict(d)
        for name in ("functions_per_module", "size", "param_count", "calls_per_function", "savings_fraction"):
            if name in kw:
                kw[name] = tuple(kw[name])
        return cls(**kw)


def module_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(index,))))


def _uniform_int(rng, lo_hi):
    lo, hi = lo_hi
    return int(rng.integers(lo, hi + 1))


def _draw_module(p: CorpusParams, rng: np.random.Generator, name: str) -> ModuleGraph:
    n = _uniform_int(rng, p.functions_per_module)
    ids = [f"f{i:03d}" for i in range(n)]
    funcs = []
    for i, fid in enumerate(ids):
        size = _uniform_int(rng, p.size)
        blocks = int(rng.integers(1, max(1, size // 4) + 1))
        cond = int(rng.integers(0, blocks))
        internal = i > 0 and rng.random() < p.internal_linkage_probability
        n_params = _uniform_int(rng, p.param_count)
        funcs.append(FunctionDef(fid, INTERNAL if internal else EXTERNAL, size, blocks, cond, [0] * n_params, []))

    for i, f in enumerate(funcs):
        k = min(_uniform_int(rng, p.calls_per_function), f.size - 1)
        for _ in range(k):
            back = rng.random() < p.back_edge_probability
            if back:
                j = int(rng.integers(0, i + 1))
            elif i + 1 < n:
                j = int(rng.integers(i + 1, n))
            else:
                continue
            callee = funcs[j]
            mask = tuple(bool(rng.random() < p.const_arg_probability) for _ in range(callee.param_count))
            f.call_sites.append(CallSite("", f.id, callee.id, mask))

    serial = 0
    for f in funcs:
        renamed = []
        for c in f.call_sites:
            renamed.append(dataclasses.replace(c, id=f"c{serial:04d}"))
            serial += 1
        f.call_sites = renamed
        budget = f.size - len(f.call_sites) - 1
        lo, hi = p.savings_fraction
        savings = [int(rng.uniform(lo, hi) * f.size / max(1, f.param_count)) for _ in range(f.param_count)]
        # clamp to the body budget, trimming from the last parameter
        excess = sum(savings) - budget
        for idx in range(len(savings) - 1, -1, -1):
            if excess <= 0:
                break
            cut = min(excess, savings[idx])
            savings[idx] -= cut
            excess -= cut
        f.param_savings = savings
    return ModuleGraph(funcs, name=name, growth_cap_factor=p.growth_cap_factor)


def gen_module(p: CorpusParams, index: int, max_attempts: int = 100) -> ModuleGraph:
    rng = module_rng(p.seed, index)
    name = f"s{p.seed}m{index:04d}"
    for _ in range(max_attempts):
        m = _draw_module(p, rng, name)
        if m.edge_count >= 1:
            problems = m.validate()
            if problems:
                raise ParameterError(f"{name}: generated an invalid module: {problems[0]}")
            return m
    raise ParameterError(f"{name}: could not draw a module with a call site in {max_attempts} attempts")


def gen_corpus(p: CorpusParams) -> list[ModuleGraph]:
    p.check()
    return [gen_module(p, i) for i in range(p.module_count)]


def write_corpus(modules: list[ModuleGraph], directory, params: CorpusParams | None = None) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for m in modules:
        atomic_write_text(directory / f"{m.name}{MODULE_SUFFIX}", irmodel.dumps(m))
    manifest = {
        "modules": [m.name for m in modules],
        "seed": None if params is None else params.seed,
        "params": None if params is None else params.to_dict(),
    }
    atomic_write_text(directory / MANIFEST, json.dumps(manifest, indent=1, sort_keys=True) + "\n")


def read_corpus(directory) -> list[ModuleGraph]:
    directory = Path(directory)
    manifest = json.loads((directory / MANIFEST).read_text())
    return [irmodel.load(directory / f"{name}{MODULE_SUFFIX}") for name in manifest["modules"]]
