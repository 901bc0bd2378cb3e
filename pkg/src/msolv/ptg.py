"""Participation analysis: taint summary, derived topology graph, and the
brute-force semantic participation oracle used to test the over-approximation.

The taint side is purely syntactic (per-function, flow- and path-insensitive
over the lowered IR). The semantic side enumerates witness states and
single-user variants and compares transition outcomes; it shares the
interpreter with the semantics module but nothing with the taint walk.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

from . import ir
from .errors import BudgetExceeded
from .semantics import (Action, BundleState, ControlState, DataDomain, Leaf,
                        UserRecord, collect_uses, explore, step)
from .validator import ContractBundle, ZERO_ACCOUNT

SC = "sc"
STAR = "*"


@dataclass(frozen=True)
class TaintSummary:
    """Which client slots, role indices, and literal addresses can reach a
    sink (an address comparison or a mapping access key) in any transaction."""

    args: frozenset[int]
    roles: frozenset[int]
    lits: frozenset[int]


@dataclass(frozen=True)
class PtGraph:
    """The derived participation topology graph.

    Vertices are the literal addresses plus the contract vertex ``sc`` and
    the fold-all vertex ``*``; every edge leaves ``sc``. Labels are
    ("explicit", i), ("transient", i), or ("implicit", a).
    """

    lits: frozenset[int]
    vertices: frozenset
    edges: frozenset[tuple]
    labels: frozenset[tuple]  # (edge, label)

    def rho(self, action=None):
        """Every action maps to the contract vertex."""
        return SC

    def tau(self, address: int):
        """Literal addresses keep their own vertex; all others fold to *."""
        return address if address in self.lits else STAR

    @property
    def explicit_indices(self) -> frozenset[int]:
        return frozenset(l[1] for _, l in self.labels if l[0] == "explicit")

    @property
    def transient_indices(self) -> frozenset[int]:
        return frozenset(l[1] for _, l in self.labels if l[0] == "transient")

    @property
    def implicit_addresses(self) -> frozenset[int]:
        return frozenset(l[1] for _, l in self.labels if l[0] == "implicit")

    def to_json(self) -> dict:
        return {
            "vertices": sorted(self.vertices, key=str),
            "edges": sorted([list(e) for e in self.edges], key=str),
            "labels": sorted(f"{l[0]}@{l[1]} on ({e[0]},{e[1]})"
                             for e, l in self.labels),
        }

    def to_dot(self) -> str:
        lines = ["digraph ptg {"]
        for v in sorted(self.vertices, key=str):
            shape = "box" if v == SC else "circle"
            lines.append(f'  "{v}" [shape={shape}];')
        by_edge: dict[tuple, list[str]] = {}
        for e, l in sorted(self.labels, key=str):
            by_edge.setdefault(e, []).append(f"{l[0]}@{l[1]}")
        for e in sorted(self.edges, key=str):
            label = "\\n".join(by_edge.get(e, []))
            lines.append(f'  "{e[0]}" -> "{e[1]}" [label="{label}"];')
        lines.append("}")
        return "\n".join(lines)


# --------------------------------------------------------------------------
# taint analysis
# --------------------------------------------------------------------------

_Origin = tuple[str, int]  # ("client", slot) | ("role", idx) | ("lit", addr)


class _FnTaint:
    def __init__(self, fn: ir.IRFunction):
        self.fn = fn
        self.local_origins: dict[int, set[_Origin]] = {}
        self.role_writes: dict[int, set[_Origin]] = {}  # within-function flows
        self.sink_clients: set[int] = set()             # this fn's client slots
        self.sink_roles: set[int] = set()
        self.sink_lits: set[int] = set()


def _expr_origins(t: _FnTaint, e) -> set[_Origin]:
    """Address origins an expression's value may carry. Numeric expressions
    carry none; MicroSol has no numeric-to-address route."""
    if isinstance(e, ir.RClient):
        return {("client", e.slot)}
    if isinstance(e, ir.RRole):
        return {("role", e.index)} | t.role_writes.get(e.index, set())
    if isinstance(e, ir.RAddrLit):
        return {("lit", e.value)}
    if isinstance(e, ir.RLocal) and e.is_address:
        return set(t.local_origins.get(e.slot, set()))
    return set()


def _sink(t: _FnTaint, origins: set[_Origin]) -> None:
    for kind, idx in origins:
        if kind == "client":
            t.sink_clients.add(idx)
        elif kind == "role":
            t.sink_roles.add(idx)
        else:
            t.sink_lits.add(idx)


def _walk_expr(t: _FnTaint, e) -> None:
    if isinstance(e, ir.RBin):
        _walk_expr(t, e.left)
        _walk_expr(t, e.right)
        if e.address_compare:
            _sink(t, _expr_origins(t, e.left) | _expr_origins(t, e.right))
    elif isinstance(e, ir.RNot):
        _walk_expr(t, e.operand)
    elif isinstance(e, ir.RMapRead):
        _walk_expr(t, e.key)
        _sink(t, _expr_origins(t, e.key))


def _walk_stmt(t: _FnTaint, s, tables: dict) -> None:
    if isinstance(s, ir.SRole):
        _walk_expr(t, s.value)
        t.role_writes.setdefault(s.index, set()).update(_expr_origins(t, s.value))
    elif isinstance(s, ir.SData):
        _walk_expr(t, s.value)
    elif isinstance(s, ir.SLocal):
        _walk_expr(t, s.value)
        t.local_origins.setdefault(s.slot, set()).update(_expr_origins(t, s.value))
    elif isinstance(s, ir.SMapWrite):
        _walk_expr(t, s.key)
        _sink(t, _expr_origins(t, s.key))
        _walk_expr(t, s.value)
    elif isinstance(s, (ir.SRequire, ir.SAssert)):
        _walk_expr(t, s.cond)
    elif isinstance(s, (ir.SIf, ir.SWhile)):
        _walk_expr(t, s.cond)
        for b in s.body:
            _walk_stmt(t, b, tables)
    elif isinstance(s, ir.SCall):
        callee = tables["taints"][s.callee]
        accounts = tables["accounts"]
        for e in s.client_exprs:
            _walk_expr(t, e)
        for e in s.arg_exprs:
            _walk_expr(t, e)
        # Addresses handed to a callee that sinks the matching client slot
        # reach a sink here too. Slot 0 of the callee is the effective sender.
        for slot in callee.sink_clients:
            if slot == 0:
                if s.forwards_clients:
                    _sink(t, {("client", 0)})
                else:
                    _sink(t, {("lit", accounts[t.fn.contract_index])})
            elif slot - 1 < len(s.client_exprs):
                _sink(t, _expr_origins(t, s.client_exprs[slot - 1]))
        t.sink_roles.update(callee.sink_roles)
        t.sink_lits.update(callee.sink_lits)


def taint_summary(bundle: ContractBundle) -> TaintSummary:
    """Flow-insensitive over-approximation of participating address classes.

    The zero account and every contract account are always included in the
    literal set, and client slot 0 in the argument set: the transaction
    dispatcher compares each sender against those accounts before any body
    runs, whether or not the source mentions them. This also guarantees the
    derived neighbourhoods always contain a representative able to act.
    """
    taints = {key: _FnTaint(fn) for key, fn in bundle.all_functions.items()}
    tables = {"taints": taints, "accounts": bundle.contract_accounts}
    changed = True
    while changed:
        changed = False
        for t in taints.values():
            before = (len(t.sink_clients), len(t.sink_roles), len(t.sink_lits),
                      sum(len(v) for v in t.local_origins.values()),
                      sum(len(v) for v in t.role_writes.values()))
            for s in t.fn.body:
                _walk_stmt(t, s, tables)
            after = (len(t.sink_clients), len(t.sink_roles), len(t.sink_lits),
                     sum(len(v) for v in t.local_origins.values()),
                     sum(len(v) for v in t.role_writes.values()))
            changed = changed or before != after
    args: set[int] = {0}
    roles: set[int] = set()
    lits: set[int] = {ZERO_ACCOUNT, *bundle.contract_accounts}
    for name in bundle.tx_order:
        t = taints[(0, name)]
        args |= t.sink_clients
        roles |= t.sink_roles
        lits |= t.sink_lits
    return TaintSummary(frozenset(args), frozenset(roles), frozenset(lits))


def build_ptg(summary: TaintSummary) -> PtGraph:
    """Derive the labeled graph from a taint summary (a pure function):
    one vertex per literal plus sc and *, star edges from sc, explicit and
    transient labels on every edge, implicit@a on the edge to a."""
    vertices = frozenset(summary.lits) | {SC, STAR}
    edges = frozenset((SC, v) for v in vertices if v != SC)
    labels: set[tuple] = set()
    for e in edges:
        for i in summary.args:
            labels.add((e, ("explicit", i)))
        for i in summary.roles:
            labels.add((e, ("transient", i)))
    for a in summary.lits:
        labels.add(((SC, a), ("implicit", a)))
    return PtGraph(frozenset(summary.lits), vertices, edges, frozenset(labels))


# --------------------------------------------------------------------------
# semantic participation (the oracle side of the over-approximation theorem)
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class SemanticPT:
    explicit: frozenset[tuple[int, int]]   # (client slot, address)
    transient: frozenset[tuple[int, int]]  # (role index, address)
    implicit: frozenset[int]
    participants: frozenset[int]


@dataclass
class _PtCollector:
    """Accumulates participants classified by how the contract reached
    them: through a client input, a stored role, or a literal address. The
    provenance comes from the interpreter's tagged use log, which is what
    distinguishes, say, a manager compared by role from the same address
    incidentally appearing as an unused argument."""

    explicit: set[tuple[int, int]] = field(default_factory=set)
    transient: set[tuple[int, int]] = field(default_factory=set)
    implicit: set[int] = field(default_factory=set)
    participants: set[int] = field(default_factory=set)

    def attribute(self, a: int, origins) -> None:
        self.participants.add(a)
        for kind, idx in origins:
            if kind == "explicit":
                self.explicit.add((idx, a))
            elif kind == "transient":
                self.transient.add((idx, a))
            else:
                self.implicit.add(a)

    def result(self) -> SemanticPT:
        return SemanticPT(frozenset(self.explicit), frozenset(self.transient),
                          frozenset(self.implicit), frozenset(self.participants))


def _fresh_address(bundle: ContractBundle, n: int) -> int:
    lits = [l.value for key in bundle.all_functions
            for l in _iter_addr_lits(bundle.all_functions[key].body)]
    return max([n - 1, *bundle.contract_accounts, *lits]) + 1


def _iter_addr_lits(body):
    stack = list(body)
    while stack:
        node = stack.pop()
        if isinstance(node, ir.RAddrLit):
            yield node
        for f in getattr(node, "__dataclass_fields__", {}):
            v = getattr(node, f)
            if isinstance(v, tuple):
                stack.extend(x for x in v if hasattr(x, "__dataclass_fields__"))
            elif hasattr(v, "__dataclass_fields__"):
                stack.append(v)


def _controls(bundle: ContractBundle, n: int, domain: DataDomain):
    for roles in itertools.product(range(n), repeat=bundle.n_roles):
        for data in itertools.product(domain.values(), repeat=bundle.n_data):
            for ctor in (0, 1):
                yield ControlState(roles, data, ctor)


def _effective_control(leaf: Leaf, pre: ControlState):
    if leaf.outcome == "ok":
        return leaf.control_after
    if leaf.outcome == "revert":
        return (pre.roles, pre.data, pre.ctor_done)
    return "bottom"


def _leaf_post_differs(a: Leaf, b: Leaf, skip_slot: int, pre: ControlState,
                       merged: dict) -> bool:
    """Whether two execution paths taken from states differing only in user
    ``skip_slot`` give observably different results per the influence
    definition: different post controls, or some other user's post state
    differs for a suitable choice of the map vectors neither path read."""
    if _effective_control(a, pre) != _effective_control(b, pre):
        return True
    wa: dict[int, dict[int, int]] = {}
    wb: dict[int, dict[int, int]] = {}
    for s, c, v in a.write_cells:
        if s != skip_slot:
            wa.setdefault(s, {})[c] = v
    for s, c, v in b.write_cells:
        if s != skip_slot:
            wb.setdefault(s, {})[c] = v
    for s in set(wa) | set(wb):
        da, db = wa.get(s, {}), wb.get(s, {})
        base = merged.get(s)
        for c in set(da) | set(db):
            if base is not None:
                if da.get(c, base[c]) != db.get(c, base[c]):
                    return True
            elif c in da and c in db:
                if da[c] != db[c]:
                    return True
            else:
                return True  # written on one side only: some base disagrees
    return False


def semantic_pt(bundle: ContractBundle, n: int, action: Action,
                domain: DataDomain, budget: int = 2_000_000) -> SemanticPT:
    """Brute-force participation topology of one action in the n-user bundle.

    Enumerates every control state (reachable or not) and every assignment
    of map vectors, and asks for each user whether some single-user variant
    of the configuration changes the transaction's outcome (influence), or
    whether the transaction permanently changes that user (influenced by).
    Variants cover both map values and readdressing the user to a fresh
    address; a user readdressed away faults the run at the first use of its
    old address, which the interpreter's use log pinpoints exactly.
    """
    ids = tuple(range(n))
    vectors = tuple(itertools.product(domain.values(), repeat=bundle.n_maps))
    domains = {slot: vectors for slot in range(n)}
    collector = _PtCollector()
    work = 0
    id_set = set(ids)
    for control in _controls(bundle, n, domain):
        leaves = explore(bundle, control, ids, domains, action, domain, log_uses=True)
        work += len(leaves)
        if work > budget:
            raise BudgetExceeded(f"semantic_pt budget of {budget} paths exceeded")
        use_maps = [dict(leaf.uses) for leaf in leaves]
        read_slots: set[int] = set()
        for leaf, uses in zip(leaves, use_maps):
            assign = dict(leaf.assignment)
            read_slots.update(assign)
            # influenced-by: a persistent write some base vector can observe
            for slot, cell, val in leaf.write_cells:
                base = assign.get(slot)
                if base is None or base[cell] != val:
                    collector.attribute(ids[slot], uses.get(ids[slot], ()))
            # influence via readdressing: any use of the old address faults
            if leaf.outcome != "bottom":
                for a, origins in uses.items():
                    if a in id_set:
                        collector.attribute(a, origins)
        # influence via map variants: pair executions whose read sets agree
        # everywhere except the varied slot (a leaf that never read the slot
        # stands for every value of it)
        for slot in read_slots:
            for (x, ux), (y, uy) in itertools.combinations(zip(leaves, use_maps), 2):
                ax, ay = dict(x.assignment), dict(y.assignment)
                if any(ax[s] != ay[s] for s in ax.keys() & ay.keys() if s != slot):
                    continue
                xi, yi = ax.get(slot), ay.get(slot)
                if xi is not None and yi is not None and xi == yi:
                    continue
                if xi is None and yi is None:
                    continue  # neither read it: identical executions
                merged = {s: v for s, v in {**ax, **ay}.items() if s != slot}
                if _leaf_post_differs(x, y, slot, control, merged):
                    origins = set(ux.get(ids[slot], ())) | set(uy.get(ids[slot], ()))
                    collector.attribute(ids[slot], origins)
                    break
    return collector.result()


def semantic_pt_naive(bundle: ContractBundle, n: int, action: Action,
                      domain: DataDomain) -> SemanticPT:
    """Reference implementation: literal state-pair enumeration through the
    deterministic step function, no path sharing. Influence detection is
    fully independent of :func:`semantic_pt`; classification reuses the
    interpreter's provenance log. Exponentially slower; for tiny instances.
    """
    ids = tuple(range(n))
    fresh = _fresh_address(bundle, n)
    vectors = tuple(itertools.product(domain.values(), repeat=bundle.n_maps))
    collector = _PtCollector()

    def users_of(assign: tuple) -> tuple[UserRecord, ...]:
        return tuple(UserRecord(ids[i], assign[i]) for i in range(n))

    for control in _controls(bundle, n, domain):
        for assign in itertools.product(vectors, repeat=n):
            base_state = BundleState(control, users_of(assign))
            base_post = step(bundle, base_state, action, domain)
            base_uses = collect_uses(bundle, base_state, action, domain)

            def attribute(i: int, extra_state=None) -> None:
                origins = set(base_uses.get(ids[i], ()))
                if extra_state is not None:
                    origins |= collect_uses(bundle, extra_state, action,
                                            domain).get(ids[i], set())
                collector.attribute(ids[i], origins)

            for i in range(n):
                if base_post.users[i] != base_state.users[i]:
                    attribute(i)
                variants = [UserRecord(ids[i], v) for v in vectors if v != assign[i]]
                variants.append(UserRecord(fresh, assign[i]))
                for vu in variants:
                    vstate = BundleState(control, base_state.users[:i] + (vu,)
                                         + base_state.users[i + 1:])
                    vpost = step(bundle, vstate, action, domain)
                    if base_post.control != vpost.control or any(
                            base_post.users[j] != vpost.users[j]
                            for j in range(n) if j != i):
                        attribute(i, vstate)
                        break
    return collector.result()


def coverage_violations(ptg: PtGraph, pt: SemanticPT) -> list[str]:
    """Participation classes the graph fails to cover (empty means the
    over-approximation holds for this action)."""
    out = []
    for i, a in sorted(pt.explicit):
        if i not in ptg.explicit_indices:
            out.append(f"explicit@{i} missing (address {a})")
    for i, a in sorted(pt.transient):
        if i not in ptg.transient_indices:
            out.append(f"transient@{i} missing (address {a})")
    for a in sorted(pt.implicit):
        if a not in ptg.implicit_addresses:
            out.append(f"implicit@{a} missing")
    return out
