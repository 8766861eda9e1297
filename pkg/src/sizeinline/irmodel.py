"""A tiny call-graph IR with exact inlining semantics and size accounting.

A module is a set of functions, each with an instruction count and an
ordered list of call sites.  Every call site costs exactly one instruction.
Inlining a call site splices a copy of the callee body into the caller, minus
the instructions removed by constant arguments, and clones the callee's own
call sites in place of the inlined call.  When the last in-module user of an
internal function disappears, the function is deleted.
"""

from __future__ import annotations

import dataclasses
from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Sequence

from .errors import (
    FormatError,
    InvalidCallSiteError,
    RecursionRefusedError,
    UnknownFunctionError,
)

INTERNAL = "internal"
EXTERNAL = "external"
LINKAGES = (INTERNAL, EXTERNAL)

FORMAT_VERSION = 1
DEFAULT_GROWTH_CAP = Fraction(3, 2)


@dataclass(frozen=True)
class CallSite:
    id: str
    caller: str
    callee: str
    const_args: tuple[bool, ...] = ()

    @property
    def n_const(self) -> int:
        return sum(self.const_args)


@dataclass
class FunctionDef:
    id: str
    linkage: str
    size: int
    basic_block_count: int = 1
    conditional_block_count: int = 0
    param_savings: list[int] = field(default_factory=list)
    call_sites: list[CallSite] = field(default_factory=list)

    @property
    def param_count(self) -> int:
        return len(self.param_savings)

    @property
    def internal(self) -> bool:
        return self.linkage == INTERNAL

    def savings_for(self, const_args: Sequence[bool]) -> int:
        """Instructions removed from this body when `const_args` are constant."""
        return sum(s for s, k in zip(self.param_savings, const_args) if k)

    def copy(self) -> "FunctionDef":
        return dataclasses.replace(
            self,
            param_savings=list(self.param_savings),
            call_sites=list(self.call_sites),
        )


@dataclass(frozen=True)
class InlineOutcome:
    step_reward: int
    callee_deleted: bool
    cloned_call_sites: tuple[str, ...]


def strongly_connected_components(functions: dict[str, FunctionDef]) -> list[list[str]]:
    """Tarjan's algorithm, iterative.

    Roots are visited in ascending id order and successors in call-site
    order, so the output is deterministic.  Components come out in reverse
    topological order (callees before callers); members are sorted by id.
    """
    index: dict[str, int] = {}
    low: dict[str, int] = {}
    on_stack: set[str] = set()
    stack: list[str] = []
    out: list[list[str]] = []
    counter = 0

    def successors(f):
        seen = []
        for c in functions[f].call_sites:
            if c.callee in functions and c.callee not in seen:
                seen.append(c.callee)
        return seen

    for root in sorted(functions):
        if root in index:
            continue
        work = [(root, iter(successors(root)))]
        index[root] = low[root] = counter
        counter += 1
        stack.append(root)
        on_stack.add(root)
        while work:
            node, it = work[-1]
            for succ in it:
                if succ not in index:
                    index[succ] = low[succ] = counter
                    counter += 1
                    stack.append(succ)
                    on_stack.add(succ)
                    work.append((succ, iter(successors(succ))))
                    break
                if succ in on_stack:
                    low[node] = min(low[node], index[succ])
            else:
                work.pop()
                if work:
                    parent = work[-1][0]
                    low[parent] = min(low[parent], low[node])
                if low[node] == index[node]:
                    comp = []
                    while True:
                        w = stack.pop()
                        on_stack.discard(w)
                        comp.append(w)
                        if w == node:
                            break
                    out.append(sorted(comp))
    return out


class ModuleGraph:
    """A mutable compilation unit.

    Module size, per-function user counts and the live edge count are kept
    incrementally; `validate` cross-checks them against a recomputation.
    SCC membership is frozen from the graph as constructed.
    """

    def __init__(
        self,
        functions: Iterable[FunctionDef] = (),
        name: str = "module",
        growth_cap_factor=DEFAULT_GROWTH_CAP,
        initial_size: int | None = None,
    ):
        self.name = name
        self.growth_cap_factor = Fraction(growth_cap_factor)
        self.functions: dict[str, FunctionDef] = {}
        for f in functions:
            self.functions[f.id] = f
        self._reindex()
        self.initial_size = self._size if initial_size is None else int(initial_size)
        self.sccs = strongly_connected_components(self.functions)
        self.scc_of = {f: i for i, comp in enumerate(self.sccs) for f in comp}
        self._clone_serial = 0

    def _reindex(self):
        self._sites: dict[str, CallSite] = {}
        self._users: Counter = Counter()
        self._size = 0
        for f in self.functions.values():
            self._size += f.size
            for c in f.call_sites:
                self._sites[c.id] = c
                self._users[c.callee] += 1

    # -- read access -----------------------------------------------------

    @property
    def size(self) -> int:
        return self._size

    @property
    def edge_count(self) -> int:
        return len(self._sites)

    @property
    def node_count(self) -> int:
        return len(self.functions)

    def users(self, fid: str) -> int:
        return self._users.get(fid, 0)

    def site(self, site_id: str) -> CallSite:
        try:
            return self._sites[site_id]
        except KeyError:
            raise InvalidCallSiteError(f"call site {site_id!r} is not live") from None

    def is_live(self, site: CallSite | str) -> bool:
        sid = site if isinstance(site, str) else site.id
        return sid in self._sites

    def call_sites(self) -> list[CallSite]:
        return [c for f in self.functions.values() for c in f.call_sites]

    def same_scc(self, a: str, b: str) -> bool:
        sa, sb = self.scc_of.get(a), self.scc_of.get(b)
        return sa is not None and sa == sb

    def function(self, fid: str) -> FunctionDef:
        try:
            return self.functions[fid]
        except KeyError:
            raise UnknownFunctionError(fid) from None

    # -- mutation --------------------------------------------------------

    def _fresh_site_id(self, base: str) -> str:
        while True:
            self._clone_serial += 1
            sid = f"{base}@{self._clone_serial}"
            if sid not in self._sites:
                return sid

    def inline(self, site: CallSite | str) -> InlineOutcome:
        sid = site if isinstance(site, str) else site.id
        c = self.site(sid)
        if c.caller == c.callee or self.same_scc(c.caller, c.callee):
            raise RecursionRefusedError(
                f"{c.id}: {c.caller} and {c.callee} share a strongly connected component"
            )
        caller = self.functions[c.caller]
        callee = self.functions[c.callee]
        before = caller.size

        clones = [
            CallSite(self._fresh_site_id(s.id), caller.id, s.callee, s.const_args)
            for s in callee.call_sites
        ]
        pos = next(i for i, s in enumerate(caller.call_sites) if s.id == c.id)
        caller.call_sites[pos : pos + 1] = clones

        caller.size = caller.size - 1 + callee.size - callee.savings_for(c.const_args)
        caller.basic_block_count += max(0, callee.basic_block_count - 1)
        caller.conditional_block_count += callee.conditional_block_count

        del self._sites[c.id]
        self._users[callee.id] -= 1
        for cl in clones:
            self._sites[cl.id] = cl
            self._users[cl.callee] += 1
        self._size += caller.size - before

        reward = before - caller.size
        deleted = False
        if self._users[callee.id] == 0 and callee.internal:
            reward += callee.size
            self._delete(callee.id)
            deleted = True
        return InlineOutcome(reward, deleted, tuple(cl.id for cl in clones))

    def _delete(self, fid: str):
        f = self.functions.pop(fid)
        self._size -= f.size
        for c in f.call_sites:
            del self._sites[c.id]
            self._users[c.callee] -= 1
        self._users.pop(fid, None)

    def delete_if_dead(self, fid: str) -> bool:
        f = self.function(fid)
        if self.users(fid) == 0 and f.internal:
            self._delete(fid)
            return True
        return False

    def copy(self) -> "ModuleGraph":
        new = object.__new__(ModuleGraph)
        new.name = self.name
        new.growth_cap_factor = self.growth_cap_factor
        new.functions = {k: f.copy() for k, f in self.functions.items()}
        new._sites = dict(self._sites)
        new._users = Counter(self._users)
        new._size = self._size
        new.initial_size = self.initial_size
        new.sccs = self.sccs
        new.scc_of = self.scc_of
        new._clone_serial = self._clone_serial
        return new

    # -- checks ----------------------------------------------------------

    def validate(self) -> list[str]:
        problems = []
        seen_sites = set()
        for fid, f in self.functions.items():
            n_sites = len(f.call_sites)
            if f.id != fid:
                problems.append(f"{fid}: keyed under a different id ({f.id})")
            if f.linkage not in LINKAGES:
                problems.append(f"{fid}: unknown linkage {f.linkage!r}")
            if f.basic_block_count < 1:
                problems.append(f"{fid}: basic_block_count < 1")
            if not 0 <= f.conditional_block_count <= f.basic_block_count:
                problems.append(f"{fid}: conditional_block_count outside [0, basic_block_count]")
            if f.size < 1 + n_sites:
                problems.append(f"{fid}: size {f.size} < 1 + {n_sites} call sites")
            if any(s < 0 for s in f.param_savings):
                problems.append(f"{fid}: negative param savings")
            elif f.size >= 1 + n_sites and sum(f.param_savings) > f.size - n_sites - 1:
                problems.append(f"{fid}: param savings exceed size - call sites - 1")
            for c in f.call_sites:
                if c.id in seen_sites:
                    problems.append(f"{c.id}: duplicate call site id")
                seen_sites.add(c.id)
                if c.caller != fid:
                    problems.append(f"{c.id}: caller {c.caller} but listed under {fid}")
                callee = self.functions.get(c.callee)
                if callee is None:
                    problems.append(f"{c.id}: callee {c.callee} does not exist")
                elif len(c.const_args) != callee.param_count:
                    problems.append(
                        f"{c.id}: const mask length {len(c.const_args)} != "
                        f"{c.callee} param_count {callee.param_count}"
                    )
        fresh_size = sum(f.size for f in self.functions.values())
        if fresh_size != self._size:
            problems.append(f"module size bookkeeping {self._size} != recomputed {fresh_size}")
        fresh_users = Counter(c.callee for c in self.call_sites())
        if +fresh_users != +self._users:
            problems.append("user count bookkeeping disagrees with recomputation")
        if len(seen_sites) != len(self._sites) or seen_sites != set(self._sites):
            problems.append("live call site index disagrees with function bodies")
        return problems

    def __eq__(self, other):
        if not isinstance(other, ModuleGraph):
            return NotImplemented
        return (
            self.name == other.name
            and self.growth_cap_factor == other.growth_cap_factor
            and self.initial_size == other.initial_size
            and list(self.functions.items()) == list(other.functions.items())
        )

    def __repr__(self):
        return (
            f"ModuleGraph(name={self.name!r}, functions={self.node_count}, "
            f"call_sites={self.edge_count}, size={self.size})"
        )


def module_size(m: ModuleGraph) -> int:
    return m.size


def inline(m: ModuleGraph, c: CallSite | str) -> InlineOutcome:
    return m.inline(c)


def delete_if_dead(m: ModuleGraph, fid: str) -> bool:
    return m.delete_if_dead(fid)


def validate(m: ModuleGraph) -> list[str]:
    return m.validate()


# -- text format -------------------------------------------------------------
#
#   sizeinline-module 1
#   name <id>
#   growth_cap_factor <p/q>
#   initial_size <int>
#   function <id> <linkage> size=<int> blocks=<int> cond=<int> savings=<a,b,..|->
#   call <id> <callee> <mask bits|->
#   end


def _mask_text(mask):
    return "".join("1" if b else "0" for b in mask) or "-"


def dumps(m: ModuleGraph) -> str:
    lines = [
        f"sizeinline-module {FORMAT_VERSION}",
        f"name {m.name}",
        f"growth_cap_factor {m.growth_cap_factor}",
        f"initial_size {m.initial_size}",
    ]
    for f in m.functions.values():
        savings = ",".join(map(str, f.param_savings)) or "-"
        lines.append(
            f"function {f.id} {f.linkage} size={f.size} blocks={f.basic_block_count} "
            f"cond={f.conditional_block_count} savings={savings}"
        )
        for c in f.call_sites:
            lines.append(f"call {c.id} {c.callee} {_mask_text(c.const_args)}")
    lines.append("end")
    return "\n".join(lines) + "\n"


def _int(tok, lineno):
    try:
        return int(tok)
    except ValueError:
        raise FormatError(f"expected an integer, got {tok!r}", lineno) from None


def _keyed(tok, key, lineno):
    prefix = key + "="
    if not tok.startswith(prefix):
        raise FormatError(f"expected {prefix}..., got {tok!r}", lineno)
    return tok[len(prefix):]


def loads(text: str) -> ModuleGraph:
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if len(lines) < 5:
        raise FormatError("truncated module document")

    def header(i, key):
        parts = lines[i].split(" ")
        if len(parts) != 2 or parts[0] != key:
            raise FormatError(f"expected '{key} <value>'", i + 1)
        return parts[1]

    magic = lines[0].split(" ")
    if len(magic) != 2 or magic[0] != "sizeinline-module":
        raise FormatError("not a module document", 1)
    if magic[1] != str(FORMAT_VERSION):
        raise FormatError(f"unsupported format version {magic[1]}", 1)
    name = header(1, "name")
    try:
        cap = Fraction(header(2, "growth_cap_factor"))
    except ValueError:
        raise FormatError("bad growth_cap_factor", 3) from None
    initial = _int(header(3, "initial_size"), 4)

    functions: list[FunctionDef] = []
    ended = False
    for i, line in enumerate(lines[4:], start=5):
        if ended:
            raise FormatError("content after 'end'", i)
        parts = line.split(" ")
        kind = parts[0]
        if kind == "end" and len(parts) == 1:
            ended = True
        elif kind == "function" and len(parts) == 7:
            _, fid, linkage, size, blocks, cond, savings = parts
            if linkage not in LINKAGES:
                raise FormatError(f"unknown linkage {linkage!r}", i)
            sv = _keyed(savings, "savings", i)
            functions.append(
                FunctionDef(
                    id=fid,
                    linkage=linkage,
                    size=_int(_keyed(size, "size", i), i),
                    basic_block_count=_int(_keyed(blocks, "blocks", i), i),
                    conditional_block_count=_int(_keyed(cond, "cond", i), i),
                    param_savings=[] if sv == "-" else [_int(t, i) for t in sv.split(",")],
                )
            )
        elif kind == "call" and len(parts) == 4:
            if not functions:
                raise FormatError("call site before any function", i)
            _, sid, callee, mask = parts
            if mask != "-" and set(mask) - {"0", "1"}:
                raise FormatError(f"bad const mask {mask!r}", i)
            bits = () if mask == "-" else tuple(ch == "1" for ch in mask)
            owner = functions[-1]
            owner.call_sites.append(CallSite(sid, owner.id, callee, bits))
        else:
            raise FormatError(f"unrecognized line {line!r}", i)
    if not ended:
        raise FormatError("missing 'end' (truncated document)", len(lines))
    return ModuleGraph(functions, name=name, growth_cap_factor=cap, initial_size=initial)


def save(m: ModuleGraph, path) -> None:
    Path(path).write_text(dumps(m))


def load(path) -> ModuleGraph:
    return loads(Path(path).read_text())


def reference_module() -> ModuleGraph:
    """Three-function module used throughout the docs and tests.

    f_main (external, size 10) calls f_helper with its first argument
    constant and f_leaf; f_helper (internal, size 6) calls f_leaf.
    """
    return ModuleGraph(
        [
            FunctionDef(
                "f_main", EXTERNAL, 10, 3, 1, [],
                [
                    CallSite("c1", "f_main", "f_helper", (True, False)),
                    CallSite("c2", "f_main", "f_leaf", ()),
                ],
            ),
            FunctionDef(
                "f_helper", INTERNAL, 6, 2, 1, [2, 1],
                [CallSite("c3", "f_helper", "f_leaf", ())],
            ),
            FunctionDef("f_leaf", INTERNAL, 3, 1, 0, [], []),
        ],
        name="M1",
    )
