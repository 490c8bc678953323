"""Interpretation of forall/where IR over CSF tensors and dense workspaces.

Each ``forall`` iterates the merged (union) coordinate set of the sparse
operands it drills at that nesting level; loops touched only through dense
operands run over the full index range. A statement contributes only when
every sparse operand carries the current coordinates (intersection realized
by guards). Each ``where`` zeroes the producer's workspace, runs the
producer subtree, then the consumer, once per enclosing iteration.

Dense n-ary and unfused sequential oracles provide independent ground truth
for the interpreter.
"""

from __future__ import annotations

import string
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .constraints import ScheduleSolution
from .errors import (
    ExtentMismatchError,
    MalformedScheduleError,
    ModeOrderMismatchError,
    ShapeMismatchError,
    TooLargeError,
    UnboundTensorError,
)
from .lowering import Assign, Forall, IrNode, Where
from .network import ContractionTree, TensorRef
from .tensor import CsfTensor, DenseWorkspace, SparseTensor, coo_from_entries, csf_build

DENSE_SPACE_BUDGET = 100_000_000


@dataclass
class ExecStats:
    """Exact operation and memory counters for one execute call."""

    multiply_adds: int = 0
    max_workspace_cells: int = 0
    per_assignment: dict[str, int] = field(default_factory=dict)

    def to_json_dict(self) -> dict:
        return {
            "multiply_adds": self.multiply_adds,
            "max_workspace_cells": self.max_workspace_cells,
            "per_assignment": [
                {"result": name, "count": self.per_assignment[name]}
                for name in sorted(self.per_assignment)
            ],
        }


@dataclass(frozen=True)
class Binding:
    """Input tensors prepared for execution under one schedule.

    CSF inputs are built with the solution's mode orders; tensors flagged
    dense are kept as plain arrays in their declared mode order. ``raw``
    keeps the canonical tensors for oracles.
    """

    tree: ContractionTree
    raw: Mapping[str, SparseTensor]
    csf: Mapping[str, CsfTensor]
    dense: Mapping[str, np.ndarray]


def bind(
    tree: ContractionTree,
    sol: ScheduleSolution,
    tensors: Mapping[str, SparseTensor],
    dense_names: Sequence[str] = (),
) -> Binding:
    """Validate shapes against declared extents and build per-layout CSF trees."""
    csf: dict[str, CsfTensor] = {}
    dense: dict[str, np.ndarray] = {}
    raw: dict[str, SparseTensor] = {}
    for name in tree.input_names:
        if name not in tensors:
            raise UnboundTensorError(f"no tensor bound for input '{name}'")
        t = tensors[name]
        ref = tree.abstract_ref(name)
        expected = tree.ref_shape(ref)
        if t.shape != expected:
            raise ExtentMismatchError(
                ref.indices[0],
                f"tensor '{name}' has shape {t.shape}, declared extents give {expected}",
            )
        raw[name] = t
        if name in dense_names or t.order == 0:
            dense[name] = t.to_dense()
        else:
            csf[name] = csf_build(t, sol.mode_perm(name))
    return Binding(tree, raw, csf, dense)


class _Cursor:
    """Drill position of one CSF reference; -1 marks an absent subtree."""

    __slots__ = ("csf", "stack")

    def __init__(self, csf: CsfTensor):
        self.csf = csf
        self.stack: list[int] = []

    @property
    def absent(self) -> bool:
        return -1 in self.stack

    def stream(self) -> Sequence[int]:
        d = len(self.stack)
        if d == 0:
            lo, hi = self.csf.root_range()
        else:
            lo, hi = self.csf.child_range(d - 1, self.stack[-1])
        return self.csf.coords[d][lo:hi]

    def push(self, coord: int) -> None:
        if self.absent:
            self.stack.append(-1)
            return
        d = len(self.stack)
        if d == 0:
            lo, hi = self.csf.root_range()
        else:
            lo, hi = self.csf.child_range(d - 1, self.stack[-1])
        self.stack.append(self.csf.find(d, lo, hi, coord))

    def pop(self) -> None:
        self.stack.pop()

    def leaf_value(self) -> float:
        return self.csf.values[self.stack[-1]]


@dataclass
class _OperandPlan:
    kind: str  # "csf" | "dense" | "workspace"
    ref: TensorRef
    cursor: _Cursor | None = None
    array: np.ndarray | None = None
    abstract: tuple[str, ...] = ()
    workspace: DenseWorkspace | None = None


@dataclass
class _AssignPlan:
    node: Assign
    operands: list[_OperandPlan]
    result_workspace: DenseWorkspace | None  # None = root accumulator
    result_key: tuple[str, ...]


class _Program:
    """Static execution plan: drill registrations, loop ranges, zero sets."""

    def __init__(self, ir: IrNode, binding: Binding):
        tree = binding.tree
        self.binding = binding
        self.extents = dict(tree.extents)
        self.root_name = tree.root.result.tensor
        self.acc: dict[tuple[int, ...], float] = {}
        self.stats = ExecStats()
        self.workspaces: dict[str, DenseWorkspace] = {}
        self.drills: dict[int, list[_Cursor]] = {}
        self.full_range: dict[int, bool] = {}
        self.loop_index: dict[int, str] = {}
        self.zero_sets: dict[int, list[DenseWorkspace]] = {}
        self.assigns: dict[int, _AssignPlan] = {}
        self.workspace_layout: dict[str, tuple[str, ...]] = {}
        intermediates = set(tree.intermediate_names)

        # allocate workspaces at the producer's surviving dims, once
        def scan_results(node: IrNode) -> None:
            if isinstance(node, Assign):
                name = node.result.tensor
                if name in intermediates and name not in self.workspaces:
                    dims = [self._extent(i) for i in node.result.indices]
                    self.workspaces[name] = DenseWorkspace(dims)
                    self.workspace_layout[name] = node.result.indices
            elif isinstance(node, Forall):
                scan_results(node.body)
            else:
                scan_results(node.producer)
                scan_results(node.consumer)

        scan_results(ir)
        self.stats.max_workspace_cells = max(
            (w.ncells for w in self.workspaces.values()), default=0
        )

        def produced(node: IrNode) -> set[str]:
            if isinstance(node, Assign):
                return {node.result.tensor}
            if isinstance(node, Forall):
                return produced(node.body)
            return produced(node.producer) | produced(node.consumer)

        def consumed(node: IrNode) -> set[str]:
            if isinstance(node, Assign):
                return {node.lhs.tensor, node.rhs.tensor}
            if isinstance(node, Forall):
                return consumed(node.body)
            return consumed(node.producer) | consumed(node.consumer)

        def plan(node: IrNode, path: list[tuple[int, str]]) -> None:
            if isinstance(node, Forall):
                if any(idx == node.index for _, idx in path):
                    raise MalformedScheduleError(f"loop index '{node.index}' bound twice")
                self.loop_index[id(node)] = node.index
                self.drills.setdefault(id(node), [])
                self.full_range.setdefault(id(node), False)
                plan(node.body, path + [(id(node), node.index)])
                return
            if isinstance(node, Where):
                links = produced(node.producer) & consumed(node.consumer)
                self.zero_sets[id(node)] = [
                    self.workspaces[name] for name in sorted(links) if name in self.workspaces
                ]
                plan(node.producer, path)
                plan(node.consumer, path)
                return
            self.assigns[id(node)] = self._plan_assign(node, path)

        plan(ir, [])
        self.ir = ir

    def _extent(self, index: str) -> int:
        try:
            return self.extents[index]
        except KeyError:
            raise ExtentMismatchError(index, f"no extent declared for index '{index}'")

    def _plan_assign(self, node: Assign, path: list[tuple[int, str]]) -> _AssignPlan:
        binding = self.binding
        tree = binding.tree
        contraction = tree.contractions[node.cid]
        operands = []
        loop_positions = {idx: pos for pos, (_, idx) in enumerate(path)}
        sparse_at: dict[str, bool] = {}
        for ref, abstract in ((node.lhs, contraction.lhs), (node.rhs, contraction.rhs)):
            name = ref.tensor
            if name in binding.csf:
                cursor = _Cursor(binding.csf[name])
                positions = []
                for level, idx in enumerate(ref.indices):
                    if idx not in loop_positions:
                        raise ModeOrderMismatchError(
                            f"reference {ref}: index '{idx}' not bound by an enclosing loop"
                        )
                    positions.append(loop_positions[idx])
                    node_id = path[loop_positions[idx]][0]
                    self.drills[node_id].append(cursor)
                if positions != sorted(positions):
                    raise ModeOrderMismatchError(
                        f"reference {ref}: CSF layout incompatible with loop order "
                        f"{[idx for _, idx in path]}"
                    )
                operands.append(_OperandPlan("csf", ref, cursor=cursor))
                for idx in ref.indices:
                    sparse_at[idx] = True
            elif name in binding.dense:
                operands.append(
                    _OperandPlan("dense", ref, array=binding.dense[name], abstract=abstract.indices)
                )
            elif name in self.workspaces:
                if ref.indices != self.workspace_layout[name]:
                    raise ModeOrderMismatchError(
                        f"reference {ref} disagrees with workspace layout "
                        f"{self.workspace_layout[name]}"
                    )
                operands.append(_OperandPlan("workspace", ref, workspace=self.workspaces[name]))
            else:
                raise UnboundTensorError(f"no binding or workspace for tensor '{name}'")
            for idx in ref.indices:
                if idx not in loop_positions:
                    raise ModeOrderMismatchError(
                        f"reference {ref}: index '{idx}' not bound by an enclosing loop"
                    )
                sparse_at.setdefault(idx, False)

        # loops this statement touches only through dense operands need the
        # full index range; sparse-guarded loops get coordinate streams
        for idx, has_sparse in sparse_at.items():
            if not has_sparse and idx in loop_positions:
                self.full_range[path[loop_positions[idx]][0]] = True

        name = node.result.tensor
        if name == self.root_name:
            result_ws = None
            result_key = tree.root.result.indices  # declared order, for interchange
        else:
            result_ws = self.workspaces[name]
            result_key = node.result.indices
        for idx in result_key:
            if idx not in loop_positions:
                raise ModeOrderMismatchError(
                    f"result {node.result}: index '{idx}' not bound by an enclosing loop"
                )
        return _AssignPlan(node, operands, result_ws, result_key)


def execute(ir: IrNode, binding: Binding) -> tuple[SparseTensor, ExecStats]:
    """Interpret the loop IR and assemble the (canonical) result tensor.

    Workspaces and counters are private to the call, so independent calls may
    run concurrently over the same (immutable) binding.
    """
    prog = _Program(ir, binding)
    env: dict[str, int] = {}

    def run(node: IrNode) -> None:
        if isinstance(node, Forall):
            nid = id(node)
            drills = prog.drills[nid]
            if prog.full_range[nid] or not drills:
                values: Sequence[int] = range(prog._extent(node.index))
            else:
                streams = [c.stream() for c in drills if not c.absent]
                if not streams:
                    values = ()  # every sparse operand is absent under this path
                elif len(streams) == 1:
                    values = streams[0]
                else:
                    values = sorted(set().union(*streams))
            index = node.index
            body = node.body
            for v in values:
                for c in drills:
                    c.push(v)
                env[index] = v
                run(body)
                for c in drills:
                    c.pop()
            env.pop(index, None)
            return
        if isinstance(node, Where):
            for ws in prog.zero_sets[id(node)]:
                ws.zero()
            run(node.producer)
            run(node.consumer)
            return
        plan = prog.assigns[id(node)]
        value = 1.0
        for op in plan.operands:
            if op.kind == "csf":
                if op.cursor.absent:
                    return
                factor = op.cursor.leaf_value()
            elif op.kind == "dense":
                factor = op.array[tuple(env[i] for i in op.abstract)]
            else:
                factor = op.workspace.cells[tuple(env[i] for i in op.ref.indices)]
            if factor == 0.0:
                return  # exact zero annihilates; no multiply-add performed
            value *= factor
        key = tuple(env[i] for i in plan.result_key)
        if plan.result_workspace is not None:
            plan.result_workspace.cells[key] += value
        else:
            prog.acc[key] = prog.acc.get(key, 0.0) + value
        prog.stats.multiply_adds += 1
        name = plan.node.result.tensor
        prog.stats.per_assignment[name] = prog.stats.per_assignment.get(name, 0) + 1

    run(ir)
    root_ref = binding.tree.root.result
    shape = binding.tree.ref_shape(root_ref)
    result = coo_from_entries(list(prog.acc.items()), shape)
    return result, prog.stats


# ---------------------------------------------------------------------------
# dense oracles


def _as_dense(t: SparseTensor | np.ndarray) -> np.ndarray:
    if isinstance(t, SparseTensor):
        return t.to_dense()
    return np.asarray(t, dtype=np.float64)


def _letters(names: Sequence[str]) -> dict[str, str]:
    alphabet = string.ascii_letters
    if len(names) > len(alphabet):
        raise TooLargeError("more distinct indices than einsum subscripts")
    return {name: alphabet[i] for i, name in enumerate(sorted(set(names)))}


def oracle_nary(
    tree: ContractionTree,
    tensors: Mapping[str, SparseTensor | np.ndarray],
    budget: int = DENSE_SPACE_BUDGET,
) -> SparseTensor:
    """Ground truth by direct n-ary contraction over the densified leaves.

    Evaluates the flat product of every input reference, summing all indices
    absent from the root result; equivalent to one nested loop per index.
    """
    produced = {c.result.tensor for c in tree.contractions}
    leaf_refs = [
        ref
        for c in tree.contractions
        for ref in (c.lhs, c.rhs)
        if ref.tensor not in produced
    ]
    all_indices = sorted({i for ref in leaf_refs for i in ref.indices})
    space = 1
    for i in all_indices:
        space *= tree.extents[i]
    if space > budget:
        raise TooLargeError(f"n-ary iteration space {space} exceeds budget {budget}")
    sub = _letters(all_indices)
    operands = []
    for ref in leaf_refs:
        if ref.tensor not in tensors:
            raise UnboundTensorError(f"no tensor bound for input '{ref.tensor}'")
        arr = _as_dense(tensors[ref.tensor])
        if arr.shape != tree.ref_shape(ref):
            raise ExtentMismatchError(
                ref.indices[0],
                f"tensor '{ref.tensor}' has shape {arr.shape}, expected {tree.ref_shape(ref)}",
            )
        operands.append(arr)
    out_ref = tree.root.result
    expr = ",".join("".join(sub[i] for i in ref.indices) for ref in leaf_refs)
    expr += "->" + "".join(sub[i] for i in out_ref.indices)
    dense = np.einsum(expr, *operands)
    return SparseTensor.from_dense(dense.reshape(tree.ref_shape(out_ref)))


def _topological_ids(tree: ContractionTree) -> list[int]:
    placed: list[int] = []
    done: set[int] = set()
    while len(placed) < tree.m:
        for c in tree.contractions:
            if c.cid in done:
                continue
            if all(ch in done for ch in tree.children_of(c.cid)):
                placed.append(c.cid)
                done.add(c.cid)
                break
    return placed


def oracle_unfused(
    tree: ContractionTree,
    tensors: Mapping[str, SparseTensor | np.ndarray],
    order: Sequence[int] | None = None,
    budget: int = DENSE_SPACE_BUDGET,
) -> tuple[SparseTensor, dict]:
    """Evaluate contractions one at a time with full-order dense intermediates.

    Returns the result plus ``{"max_intermediate_cells": ...}`` for memory
    comparisons against fused execution.
    """
    if order is None:
        order = _topological_ids(tree)
    produced = {c.result.tensor for c in tree.contractions}
    env: dict[str, np.ndarray] = {}

    def fetch(ref: TensorRef) -> np.ndarray:
        name = ref.tensor
        if name in env:
            return env[name]
        if name in produced:
            raise MalformedScheduleError(f"'{name}' used before it is produced")
        if name not in tensors:
            raise UnboundTensorError(f"no tensor bound for input '{name}'")
        arr = _as_dense(tensors[name])
        env[name] = arr
        return arr

    max_cells = 0
    root_name = tree.root.result.tensor
    for cid in order:
        c = tree.contractions[cid]
        sub = _letters(sorted(c.index_set))
        expr = (
            "".join(sub[i] for i in c.lhs.indices)
            + ","
            + "".join(sub[i] for i in c.rhs.indices)
            + "->"
            + "".join(sub[i] for i in c.result.indices)
        )
        cells = 1
        for i in c.result.indices:
            cells *= tree.extents[i]
        if cells > budget:
            raise TooLargeError(f"intermediate '{c.result.tensor}' needs {cells} dense cells")
        out = np.einsum(expr, fetch(c.lhs), fetch(c.rhs))
        env[c.result.tensor] = out.reshape(tree.ref_shape(c.result))
        if c.result.tensor != root_name:
            max_cells = max(max_cells, env[c.result.tensor].size)
    result = SparseTensor.from_dense(env[root_name])
    return result, {"max_intermediate_cells": max_cells}


# ---------------------------------------------------------------------------
# comparison


@dataclass(frozen=True)
class CompareReport:
    passed: bool
    checked: int
    max_abs_err: float
    worst_coords: tuple[int, ...] | None
    worst_values: tuple[float, float] | None

    def message(self) -> str:
        if self.passed:
            return f"pass: {self.checked} coordinates, max abs error {self.max_abs_err:.3e}"
        a, b = self.worst_values
        return (
            f"FAIL at {self.worst_coords}: {a!r} vs {b!r} "
            f"(abs error {self.max_abs_err:.3e}, {self.checked} coordinates checked)"
        )


def compare(
    a: SparseTensor,
    b: SparseTensor,
    rel_tol: float = 1e-10,
    abs_tol: float = 0.0,
) -> CompareReport:
    """Pointwise comparison over the union of coordinates.

    Passes iff |a - b| <= abs_tol + rel_tol * max(|a|, |b|) everywhere; the
    report carries the worst offender.
    """
    if a.shape != b.shape:
        raise ShapeMismatchError(f"shapes differ: {a.shape} vs {b.shape}")
    va = dict(a.entries)
    vb = dict(b.entries)
    passed = True
    max_err = 0.0
    worst_coords = None
    worst_values = None
    checked = 0
    for coords in sorted(set(va) | set(vb)):
        x = va.get(coords, 0.0)
        y = vb.get(coords, 0.0)
        err = abs(x - y)
        checked += 1
        if err > max_err:
            max_err = err
            worst_coords = coords
            worst_values = (x, y)
        if err > abs_tol + rel_tol * max(abs(x), abs(y)):
            passed = False
    return CompareReport(passed, checked, max_err, worst_coords, worst_values)
