"""Executable N-user bundle semantics.

States are immutable; :func:`step` is a deterministic function. Function
bodies are compiled once per bundle into Python closures over a mutable
frame; a transaction either commits (fresh state), reverts (input state
returned unchanged), or faults to the absorbing error state ``BOTTOM``.

Failure modes:
  * failed ``require``, division by zero, arithmetic leaving [0, 2**w):
    revert, i.e. the transaction is a no-op;
  * failed ``assert`` or any use of an address value that no current user
    holds: ``BOTTOM``;
  * runaway loops: :class:`ResourceExhausted` (a tool error, not a state).

Address values are plain integers. Using an address (equality comparison,
mapping access, literal evaluation, the implicit zero-account and
contract-account guards) requires a user with that id to exist. Mapping
cells travel with the user's id, not the user's slot, which is what makes
address swaps commute with transactions.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Iterable, Iterator, Union

from . import ir
from .errors import ResourceExhausted, TooFewUsers
from .validator import ContractBundle, ZERO_ACCOUNT

DEFAULT_FUEL = 1 << 16


@dataclass(frozen=True)
class DataDomain:
    """Numeric values are integers in [0, 2**width); width is configurable."""

    width: int = 8

    def __post_init__(self):
        if not 1 <= self.width <= 64:
            raise ValueError("domain width must be between 1 and 64 bits")

    @property
    def limit(self) -> int:
        return 1 << self.width

    def values(self) -> range:
        return range(self.limit)


class Bottom:
    """The absorbing error state marker."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "s_bottom"


BOTTOM = Bottom()


@dataclass(frozen=True)
class ControlState:
    roles: tuple[int, ...]
    data: tuple[int, ...]
    ctor_done: int = 0


@dataclass(frozen=True)
class UserRecord:
    id: int
    map_vals: tuple[int, ...]


@dataclass(frozen=True)
class BundleState:
    control: Union[ControlState, Bottom]
    users: tuple[UserRecord, ...]

    @property
    def is_bottom(self) -> bool:
        return isinstance(self.control, Bottom)


@dataclass(frozen=True)
class Action:
    tx: str
    clients: tuple[int, ...]
    args: tuple[int, ...]


def init_state(bundle: ContractBundle, addresses: Iterable[int]) -> BundleState:
    """All-zero initial state with one user per address, in the given order."""
    addrs = tuple(addresses)
    if len(addrs) < 2:
        raise TooFewUsers(
            f"need at least the zero account and the contract account, got {len(addrs)}")
    if len(set(addrs)) != len(addrs):
        raise ValueError("addresses must be distinct")
    zeros = (0,) * bundle.n_maps
    control = ControlState((0,) * bundle.n_roles, (0,) * bundle.n_data, 0)
    return BundleState(control, tuple(UserRecord(a, zeros) for a in addrs))


def enumerate_actions(bundle: ContractBundle, addresses: Iterable[int],
                      domain: DataDomain, function: str | None = None) -> Iterator[Action]:
    """Every (tx, clients, args) combination exactly once, in a fixed order:
    transactions in declaration order (constructor first), then clients and
    arguments lexicographically over the sorted address set."""
    addrs = sorted(addresses)
    names = (function,) if function is not None else bundle.tx_order
    for name in names:
        sig = bundle.signature(name)
        for clients in itertools.product(addrs, repeat=sig.clients):
            for args in itertools.product(domain.values(), repeat=sig.args):
                yield Action(name, clients, args)


def swap_addresses(obj, x: int, y: int):
    """Exchange addresses x and y wherever they appear as ids, role values,
    or action clients; map values and numeric data are untouched."""
    def sw(a: int) -> int:
        if a == x:
            return y
        if a == y:
            return x
        return a

    if isinstance(obj, BundleState):
        control = obj.control
        if not isinstance(control, Bottom):
            control = ControlState(tuple(sw(r) for r in control.roles),
                                   control.data, control.ctor_done)
        return BundleState(control,
                           tuple(UserRecord(sw(u.id), u.map_vals) for u in obj.users))
    if isinstance(obj, ControlState):
        return ControlState(tuple(sw(r) for r in obj.roles), obj.data, obj.ctor_done)
    if isinstance(obj, Action):
        return Action(obj.tx, tuple(sw(c) for c in obj.clients), obj.args)
    if isinstance(obj, UserRecord):
        return UserRecord(sw(obj.id), obj.map_vals)
    raise TypeError(f"cannot swap addresses in {type(obj).__name__}")


# --------------------------------------------------------------------------
# transaction execution machinery
# --------------------------------------------------------------------------

class _Revert(Exception):
    pass


class _Return(Exception):
    pass


class _Fault(Exception):
    """Raised for transitions into BOTTOM."""


class NeedChoice(Exception):
    """Internal: a choice-mode read hit a user slot with no assigned value."""

    def __init__(self, slot: int):
        super().__init__(slot)
        self.slot = slot


_REVERT = _Revert()
_RETURN = _Return()
_FAULT = _Fault()


class TaggedAddress(int):
    """An address value carrying the provenance of its occurrence (client
    slot, role index, or literal). Behaves as a plain int everywhere; the
    logging interpreter uses the tag to classify participation."""

    def __new__(cls, value: int, origins: tuple):
        self = super().__new__(cls, value)
        self.origins = origins
        return self


class _ConcreteStore:
    """Per-slot mutable map vectors for an ordinary deterministic step."""

    __slots__ = ("maps",)

    def __init__(self, users: tuple[UserRecord, ...]):
        self.maps = [list(u.map_vals) for u in users]

    def read(self, slot: int, cell: int) -> int:
        return self.maps[slot][cell]

    def write(self, slot: int, cell: int, value: int) -> None:
        self.maps[slot][cell] = value


class _ChoiceStore:
    """Map vectors where unassigned slots fork the exploration on first read."""

    __slots__ = ("base", "writes")

    def __init__(self, assignment: dict[int, tuple[int, ...]]):
        self.base = assignment
        self.writes: dict[tuple[int, int], int] = {}

    def read(self, slot: int, cell: int) -> int:
        w = self.writes.get((slot, cell))
        if w is not None:
            return w
        base = self.base.get(slot)
        if base is None:
            raise NeedChoice(slot)
        return base[cell]

    def write(self, slot: int, cell: int, value: int) -> None:
        self.writes[(slot, cell)] = value


class _Frame:
    __slots__ = ("roles", "data", "slot_of", "store", "limit", "fuel",
                 "uses", "clients", "args", "locs", "functions")

    def __init__(self, roles, data, slot_of, store, limit, fuel, uses, functions):
        self.roles = roles
        self.data = data
        self.slot_of = slot_of
        self.store = store
        self.limit = limit
        self.fuel = fuel
        self.uses = uses
        self.clients: tuple[int, ...] = ()
        self.args: tuple[int, ...] = ()
        self.locs: list[int] = []
        self.functions = functions

    def use_address(self, a: int) -> int:
        if self.uses is not None:
            self.uses.append((int(a), getattr(a, "origins", ())))
        if a not in self.slot_of:
            raise _FAULT
        return a


# -- expression compilation -------------------------------------------------

def _compile_expr(e):
    if isinstance(e, ir.RNum):
        v = e.value
        return lambda f: v
    if isinstance(e, ir.RAddrLit):
        a = e.value
        tagged = TaggedAddress(a, (("implicit", a),))
        return lambda f: f.use_address(tagged if f.uses is not None else a)
    if isinstance(e, ir.RRole):
        i = e.index
        return lambda f: f.roles[i]
    if isinstance(e, ir.RData):
        i = e.index
        return lambda f: f.data[i]
    if isinstance(e, ir.RClient):
        i = e.slot
        return lambda f: f.clients[i]
    if isinstance(e, ir.RArg):
        i = e.index
        return lambda f: f.args[i]
    if isinstance(e, ir.RLocal):
        i = e.slot
        return lambda f: f.locs[i]
    if isinstance(e, ir.RMapRead):
        m = e.map_index
        key = _compile_expr(e.key)
        def ev(f):
            a = f.use_address(key(f))
            return f.store.read(f.slot_of[a], m)
        return ev
    if isinstance(e, ir.RNot):
        op = _compile_expr(e.operand)
        return lambda f: 1 if op(f) == 0 else 0
    if isinstance(e, ir.RBin):
        return _compile_bin(e)
    raise TypeError(f"cannot compile {e!r}")


def _compile_bin(e: ir.RBin):
    op = e.op
    left = _compile_expr(e.left)
    right = _compile_expr(e.right)
    if op == "&&":
        return lambda f: 1 if (left(f) != 0 and right(f) != 0) else 0
    if op == "||":
        return lambda f: 1 if (left(f) != 0 or right(f) != 0) else 0
    if e.address_compare:
        if op == "==":
            return lambda f: 1 if f.use_address(left(f)) == f.use_address(right(f)) else 0
        return lambda f: 1 if f.use_address(left(f)) != f.use_address(right(f)) else 0
    if op == "==":
        return lambda f: 1 if left(f) == right(f) else 0
    if op == "!=":
        return lambda f: 1 if left(f) != right(f) else 0
    if op == "<":
        return lambda f: 1 if left(f) < right(f) else 0
    if op == ">":
        return lambda f: 1 if left(f) > right(f) else 0
    if op == "+":
        def add(f):
            v = left(f) + right(f)
            if v >= f.limit:
                raise _REVERT  # arithmetic outside the domain reverts
            return v
        return add
    if op == "-":
        def sub(f):
            v = left(f) - right(f)
            if v < 0:
                raise _REVERT
            return v
        return sub
    if op == "*":
        def mul(f):
            v = left(f) * right(f)
            if v >= f.limit:
                raise _REVERT
            return v
        return mul
    if op == "/":
        def div(f):
            r = right(f)
            if r == 0:
                raise _REVERT  # on-chain style: division by zero reverts
            return left(f) // r
        return div
    raise TypeError(f"unknown operator {op}")


def _compile_stmt(s):
    if isinstance(s, ir.SRole):
        i, val = s.index, _compile_expr(s.value)
        def st(f):
            f.roles[i] = val(f)
        return st
    if isinstance(s, ir.SData):
        i, val = s.index, _compile_expr(s.value)
        def st(f):
            f.data[i] = val(f)
        return st
    if isinstance(s, ir.SLocal):
        i, val = s.slot, _compile_expr(s.value)
        def st(f):
            f.locs[i] = val(f)
        return st
    if isinstance(s, ir.SMapWrite):
        m, key, val = s.map_index, _compile_expr(s.key), _compile_expr(s.value)
        def st(f):
            a = f.use_address(key(f))
            slot = f.slot_of[a]
            f.store.write(slot, m, val(f))
        return st
    if isinstance(s, ir.SRequire):
        cond = _compile_expr(s.cond)
        def st(f):
            if cond(f) == 0:
                raise _REVERT
        return st
    if isinstance(s, ir.SAssert):
        cond = _compile_expr(s.cond)
        def st(f):
            if cond(f) == 0:
                raise _FAULT
        return st
    if isinstance(s, ir.SReturn):
        def st(f):
            raise _RETURN
        return st
    if isinstance(s, ir.SIf):
        cond = _compile_expr(s.cond)
        body = [_compile_stmt(x) for x in s.body]
        def st(f):
            if cond(f) != 0:
                for b in body:
                    b(f)
        return st
    if isinstance(s, ir.SWhile):
        cond = _compile_expr(s.cond)
        body = [_compile_stmt(x) for x in s.body]
        def st(f):
            while cond(f) != 0:
                f.fuel -= 1
                if f.fuel <= 0:
                    raise ResourceExhausted("loop fuel exhausted")
                for b in body:
                    b(f)
        return st
    if isinstance(s, ir.SCall):
        callee = s.callee
        client_exprs = [_compile_expr(c) for c in s.client_exprs]
        arg_exprs = [_compile_expr(a) for a in s.arg_exprs]
        forwards = s.forwards_clients
        def st(f):
            callee_fn = f.functions[callee]
            if forwards:
                sender = f.clients[0]
            elif f.uses is not None:
                acct = callee_fn.caller_account
                sender = TaggedAddress(acct, (("implicit", acct),))
            else:
                sender = callee_fn.caller_account
            clients = (sender, *(c(f) for c in client_exprs))
            args = tuple(a(f) for a in arg_exprs)
            saved = (f.clients, f.args, f.locs)
            try:
                callee_fn.invoke(f, clients, args)
            finally:
                f.clients, f.args, f.locs = saved
        return st
    raise TypeError(f"cannot compile statement {s!r}")


class _CompiledFunction:
    __slots__ = ("body", "n_locals", "caller_account")

    def __init__(self, fn: ir.IRFunction, caller_account: int):
        self.body = [_compile_stmt(s) for s in fn.body]
        self.n_locals = fn.n_locals
        # Account used as msg.sender when this caller issues nested calls.
        self.caller_account = caller_account

    def invoke(self, f: _Frame, clients: tuple[int, ...], args: tuple[int, ...]) -> None:
        f.clients = clients
        f.args = args
        f.locs = [0] * self.n_locals
        try:
            for st in self.body:
                st(f)
        except _Return:
            pass


class _CompiledBundle:
    def __init__(self, bundle: ContractBundle):
        self.bundle = bundle
        self.accounts = bundle.contract_accounts
        self.functions: dict[tuple[int, str], _CompiledFunction] = {}
        for key, fn in bundle.all_functions.items():
            # Nested calls issued from contract ci have the ci account as sender.
            self.functions[key] = _CompiledFunction(fn, bundle.contract_accounts[fn.contract_index])


def _compiled(bundle: ContractBundle) -> _CompiledBundle:
    cb = getattr(bundle, "_compiled_cache", None)
    if cb is None:
        cb = _CompiledBundle(bundle)
        bundle._compiled_cache = cb  # type: ignore[attr-defined]
    return cb


_SLOTOF_CACHE: dict[tuple[int, ...], dict[int, int]] = {}


def _slot_of(ids: tuple[int, ...]) -> dict[int, int]:
    m = _SLOTOF_CACHE.get(ids)
    if m is None:
        m = {a: i for i, a in enumerate(ids)}
        _SLOTOF_CACHE[ids] = m
    return m


def _run_transaction(cb: _CompiledBundle, roles: list[int], data: list[int],
                     ctor_done: int, slot_of: dict[int, int], store, action: Action,
                     limit: int, fuel: int, uses) -> int:
    """Execute one transaction in place. Returns the new ctor flag.

    Raises _Revert for no-ops and _Fault for transitions into BOTTOM. When
    ``uses`` is a list, address occurrences are tagged with their provenance
    (client slot, role index, or literal) and every use is logged.
    """
    f = _Frame(roles, data, slot_of, store, limit, fuel, uses, cb.functions)
    if uses is None:
        clients = action.clients
        zero: int = ZERO_ACCOUNT
        accounts: tuple = cb.accounts
    else:
        clients = tuple(TaggedAddress(c, (("explicit", i),))
                        for i, c in enumerate(action.clients))
        zero = TaggedAddress(ZERO_ACCOUNT, (("implicit", ZERO_ACCOUNT),))
        accounts = tuple(TaggedAddress(a, (("implicit", a),)) for a in cb.accounts)
        for i, v in enumerate(roles):
            roles[i] = TaggedAddress(v, (("transient", i),))
    # Implicit guards: transactions from the zero account or a contract
    # account are no-ops; an unrepresented address (the sender included)
    # is a fault.
    sender = f.use_address(clients[0])
    if sender == f.use_address(zero):
        raise _REVERT
    for acct in accounts:
        if sender == f.use_address(acct):
            raise _REVERT
    fn_key = (0, action.tx)
    if action.tx == "constructor":
        if ctor_done:
            raise _REVERT  # the constructor runs once and only once
        cb.functions[fn_key].invoke(f, clients, action.args)
        return 1
    if not ctor_done:
        raise _REVERT  # nothing is callable before construction
    cb.functions[fn_key].invoke(f, clients, action.args)
    return ctor_done


def step(bundle: ContractBundle, state: BundleState, action: Action,
         domain: DataDomain, fuel: int = DEFAULT_FUEL) -> BundleState:
    """Deterministic transition function over full bundle states."""
    if state.is_bottom:
        raise ValueError("cannot step from the error state")
    bundle.signature(action.tx)  # raises UnknownFunction early
    cb = _compiled(bundle)
    control = state.control
    roles = list(control.roles)
    data = list(control.data)
    ids = tuple(u.id for u in state.users)
    store = _ConcreteStore(state.users)
    try:
        ctor = _run_transaction(cb, roles, data, control.ctor_done,
                                _slot_of(ids), store, action, domain.limit, fuel, None)
    except _Revert:
        return state
    except _Fault:
        return BundleState(BOTTOM, state.users)
    users = tuple(UserRecord(u.id, tuple(store.maps[i]))
                  for i, u in enumerate(state.users))
    return BundleState(ControlState(tuple(roles), tuple(data), ctor), users)


# --------------------------------------------------------------------------
# choice-mode exploration: one transaction over per-user value domains
# --------------------------------------------------------------------------

def _canon_uses(uses: list | None) -> tuple:
    if not uses:
        return ()
    agg: dict[int, set] = {}
    for v, origins in uses:
        agg.setdefault(v, set()).update(origins)
    return tuple(sorted((v, tuple(sorted(o))) for v, o in agg.items()))


@dataclass(frozen=True)
class Leaf:
    """One execution path of an action from a control state.

    ``assignment`` fixes the map vectors of the user slots the execution
    read; ``outcome`` is "ok", "revert", or "bottom". For "ok",
    ``control_after`` is (roles, data, ctor_done) and ``write_cells`` lists
    the overwritten user cells. ``uses`` pairs every address value whose
    representation the run required with the provenance of its occurrences
    (logged only when requested).
    """

    assignment: tuple[tuple[int, tuple[int, ...]], ...]
    outcome: str
    control_after: tuple[tuple[int, ...], tuple[int, ...], int] | None
    write_cells: tuple[tuple[int, int, int], ...]  # (slot, cell, value)
    uses: tuple = ()


def explore(bundle: ContractBundle, control: ControlState, ids: tuple[int, ...],
            domains, action: Action, domain: DataDomain,
            fuel: int = DEFAULT_FUEL, log_uses: bool = False) -> list[Leaf]:
    """All execution paths of ``action`` when each user slot's map vector
    ranges over ``domains[slot]`` (a sequence of tuples). Deterministic
    order: depth-first, forked values in sorted order."""
    cb = _compiled(bundle)
    slot_of = _slot_of(ids)
    leaves: list[Leaf] = []

    def run(assignment: dict[int, tuple[int, ...]]):
        roles = list(control.roles)
        data = list(control.data)
        store = _ChoiceStore(assignment)
        uses = [] if log_uses else None
        try:
            ctor = _run_transaction(cb, roles, data, control.ctor_done,
                                    slot_of, store, action, domain.limit, fuel, uses)
        except NeedChoice as nc:
            for v in sorted(domains[nc.slot]):
                run({**assignment, nc.slot: v})
            return
        except _Revert:
            leaves.append(Leaf(tuple(sorted(assignment.items())), "revert",
                               None, (), _canon_uses(uses)))
            return
        except _Fault:
            leaves.append(Leaf(tuple(sorted(assignment.items())), "bottom",
                               None, (), _canon_uses(uses)))
            return
        writes = tuple(sorted((slot, cell, val)
                              for (slot, cell), val in store.writes.items()))
        leaves.append(Leaf(tuple(sorted(assignment.items())), "ok",
                           (tuple(int(r) for r in roles), tuple(data), ctor),
                           writes, _canon_uses(uses)))

    run({})
    return leaves


def collect_uses(bundle: ContractBundle, state: BundleState, action: Action,
                 domain: DataDomain, fuel: int = DEFAULT_FUEL) -> dict[int, frozenset]:
    """Address values a concrete run of ``action`` uses, with the provenance
    of their occurrences; covers the prefix up to a revert or fault."""
    cb = _compiled(bundle)
    control = state.control
    roles = list(control.roles)
    data = list(control.data)
    ids = tuple(u.id for u in state.users)
    store = _ConcreteStore(state.users)
    uses: list = []
    try:
        _run_transaction(cb, roles, data, control.ctor_done, _slot_of(ids),
                         store, action, domain.limit, fuel, uses)
    except (_Revert, _Fault):
        pass
    return {v: frozenset(o) for v, o in _canon_uses(uses)}
