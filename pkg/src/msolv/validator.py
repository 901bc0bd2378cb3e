"""Semantic validation and lowering of parsed MicroSol bundles.

Produces a :class:`ContractBundle`: the surface AST plus a deterministic
:class:`VariableLayout` and the lowered per-function IR. Rules are rejected
with stable identifiers so tests and users can match on them.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from . import ast_nodes as A
from . import ir
from .errors import UnknownFunction, ValidationError

ZERO_ACCOUNT = 0
ROOT_ACCOUNT = 1


@dataclass(frozen=True)
class VariableLayout:
    """Stable storage indices: declaration order, contracts in bundle order.

    Names are qualified ``Contract.var`` when the bundle has several
    contracts, bare otherwise.
    """

    roles: tuple[str, ...]
    data: tuple[str, ...]
    maps: tuple[str, ...]


@dataclass(frozen=True)
class FunctionSig:
    name: str
    clients: int  # msg.sender plus address params
    args: int     # numeric params


@dataclass
class ContractBundle:
    """A validated bundle: AST, layout, lowered functions, account map."""

    unit: A.SourceUnit
    layout: VariableLayout
    transactions: dict[str, ir.IRFunction]            # root's external surface
    all_functions: dict[tuple[int, str], ir.IRFunction]
    contract_accounts: tuple[int, ...]                 # per contract index
    tx_order: tuple[str, ...] = field(default_factory=tuple)

    def signature(self, function: str) -> FunctionSig:
        if function not in self.transactions:
            raise UnknownFunction(function)
        fn = self.transactions[function]
        return FunctionSig(function, fn.n_clients, fn.n_args)

    @property
    def n_roles(self) -> int:
        return len(self.layout.roles)

    @property
    def n_data(self) -> int:
        return len(self.layout.data)

    @property
    def n_maps(self) -> int:
        return len(self.layout.maps)


def layout_counts(bundle: ContractBundle, function: str) -> tuple[int, int]:
    """(client count, argument count) of a root transaction."""
    sig = bundle.signature(function)
    return sig.clients, sig.args


_NUMERIC = "num"
_ADDRESS = "addr"
_MAPPING = "map"


def _err(rule: str, msg: str, node) -> ValidationError:
    pos = getattr(node, "pos", A.Pos(0, 0))
    return ValidationError(rule, msg, pos.line, pos.col)


class _ContractInfo:
    def __init__(self, index: int, decl: A.ContractDecl):
        self.index = index
        self.decl = decl
        self.var_kind: dict[str, str] = {}        # name -> num/addr/map/ref
        self.var_ref_target: dict[str, str] = {}  # contract-ref var -> contract name
        self.role_index: dict[str, int] = {}
        self.data_index: dict[str, int] = {}
        self.map_index: dict[str, int] = {}
        self.ref_binding: dict[str, int] = {}     # contract-ref var -> instance index
        self.functions: dict[str, A.FunctionDecl] = {}


class _Validator:
    def __init__(self, unit: A.SourceUnit):
        self.unit = unit
        self.contracts: list[_ContractInfo] = []
        self.by_name: dict[str, _ContractInfo] = {}
        self.roles: list[str] = []
        self.data: list[str] = []
        self.maps: list[str] = []

    def run(self) -> ContractBundle:
        self._collect()
        self._bind_instances()
        all_functions: dict[tuple[int, str], ir.IRFunction] = {}
        for info in self.contracts:
            fns = [info.decl.constructor, *info.decl.functions]
            for fn in fns:
                lowered = _FunctionLowering(self, info, fn).run()
                all_functions[(info.index, lowered.name)] = lowered
        root = self.contracts[0]
        transactions = {name: f for (ci, name), f in all_functions.items() if ci == 0}
        tx_order = ("constructor", *(f.name for f in root.decl.functions))
        return ContractBundle(
            unit=self.unit,
            layout=VariableLayout(tuple(self.roles), tuple(self.data), tuple(self.maps)),
            transactions=transactions,
            all_functions=all_functions,
            contract_accounts=tuple(ROOT_ACCOUNT + i for i in range(len(self.contracts))),
            tx_order=tx_order,
        )

    def _collect(self) -> None:
        qualify = len(self.unit.contracts) > 1
        for idx, decl in enumerate(self.unit.contracts):
            if decl.name in self.by_name:
                raise _err("duplicate-contract", f"contract {decl.name} declared twice", decl)
            info = _ContractInfo(idx, decl)
            self.contracts.append(info)
            self.by_name[decl.name] = info
        names = {c.name for c in self.unit.contracts}
        for info in self.contracts:
            for var in info.decl.state_vars:
                if var.name in info.var_kind:
                    raise _err("duplicate-variable", f"state variable {var.name} redeclared", var)
                label = f"{info.decl.name}.{var.name}" if qualify else var.name
                kind = var.typ.kind
                if kind == "address":
                    info.var_kind[var.name] = _ADDRESS
                    info.role_index[var.name] = len(self.roles)
                    self.roles.append(label)
                elif kind in ("uint", "bool"):
                    info.var_kind[var.name] = _NUMERIC
                    info.data_index[var.name] = len(self.data)
                    self.data.append(label)
                elif kind == "mapping":
                    info.var_kind[var.name] = _MAPPING
                    info.map_index[var.name] = len(self.maps)
                    self.maps.append(label)
                else:  # contract reference
                    if var.typ.contract not in names:
                        raise _err("unknown-contract",
                                   f"unknown contract type {var.typ.contract}", var)
                    info.var_kind[var.name] = "ref"
                    info.var_ref_target[var.name] = var.typ.contract
            for fn in info.decl.functions:
                if fn.name in info.functions or fn.name == "constructor":
                    raise _err("duplicate-function", f"function {fn.name} redeclared", fn)
                info.functions[fn.name] = fn
            info.functions["constructor"] = info.decl.constructor

    def _bind_instances(self) -> None:
        """Resolve `new` sites: each non-root contract instantiated exactly once."""
        instantiated: dict[str, tuple[_ContractInfo, str]] = {}
        for info in self.contracts:
            for fn in [info.decl.constructor, *info.decl.functions]:
                for node in A.walk(fn):
                    if not isinstance(node, A.NewAssign):
                        continue
                    if not fn.is_constructor:
                        raise _err("new-in-constructor-only",
                                   "`new` must only appear in constructors", node)
                    if node.contract not in self.by_name:
                        raise _err("unknown-contract",
                                   f"unknown contract {node.contract}", node)
                    if self.by_name[node.contract].index == 0:
                        raise _err("no-new-root",
                                   "the root contract cannot be instantiated", node)
                    if not isinstance(node.target, A.Name):
                        raise _err("new-target-variable",
                                   "`new` must assign to a contract-reference variable", node)
                    tgt = node.target.ident
                    if info.var_kind.get(tgt) != "ref":
                        raise _err("new-target-variable",
                                   f"{tgt} is not a contract-reference state variable", node)
                    if info.var_ref_target[tgt] != node.contract:
                        raise _err("type-mismatch",
                                   f"{tgt} holds {info.var_ref_target[tgt]}, not {node.contract}",
                                   node)
                    if node.contract in instantiated:
                        raise _err("new-exactly-once",
                                   f"{node.contract} instantiated more than once", node)
                    instantiated[node.contract] = (info, tgt)
                    info.ref_binding[tgt] = self.by_name[node.contract].index
        for info in self.contracts[1:]:
            if info.decl.name not in instantiated:
                raise _err("new-exactly-once",
                           f"contract {info.decl.name} is never instantiated", info.decl)


class _FunctionLowering:
    """Type checks a single function body and lowers it to IR."""

    def __init__(self, v: _Validator, info: _ContractInfo, fn: A.FunctionDecl):
        self.v = v
        self.info = info
        self.fn = fn
        self.client_slot: dict[str, int] = {}
        self.arg_index: dict[str, int] = {}
        self.locals: dict[str, tuple[int, str]] = {}  # name -> (slot, kind)

    def run(self) -> ir.IRFunction:
        n_clients, n_args = 1, 0  # slot 0 is msg.sender
        for p in self.fn.params:
            if p.name in self.client_slot or p.name in self.arg_index:
                raise _err("duplicate-variable", f"parameter {p.name} redeclared", p)
            if p.typ.kind == "address":
                self.client_slot[p.name] = n_clients
                n_clients += 1
            elif p.typ.kind in ("uint", "bool"):
                self.arg_index[p.name] = n_args
                n_args += 1
            else:
                raise _err("bad-param-type",
                           "parameters must be address or numeric", p)
        body = self._stmts(self.fn.body)
        return ir.IRFunction(
            name=self.fn.name,
            contract_index=self.info.index,
            n_clients=n_clients,
            n_args=n_args,
            n_locals=len(self.locals),
            body=body,
            is_constructor=self.fn.is_constructor,
        )

    # -- expression lowering; returns (kind, ir_expr) -------------------

    def _expr(self, e: A.Expr) -> tuple[str, object]:
        if isinstance(e, A.IntLit):
            return _NUMERIC, ir.RNum(e.value)
        if isinstance(e, A.BoolLit):
            return _NUMERIC, ir.RNum(1 if e.value else 0)
        if isinstance(e, A.AddressLit):
            return _ADDRESS, ir.RAddrLit(e.value)
        if isinstance(e, A.This):
            return _ADDRESS, ir.RAddrLit(ROOT_ACCOUNT + self.info.index)
        if isinstance(e, A.MsgSender):
            return _ADDRESS, ir.RClient(0)
        if isinstance(e, A.Name):
            return self._name(e)
        if isinstance(e, A.Not):
            kind, op = self._expr(e.operand)
            if kind != _NUMERIC:
                raise _err("type-mismatch", "'!' needs a numeric operand", e)
            return _NUMERIC, ir.RNot(op)
        if isinstance(e, A.AddressCast):
            return self._cast(e)
        if isinstance(e, A.Index):
            return self._index(e)
        if isinstance(e, A.Binary):
            return self._binary(e)
        if isinstance(e, (A.Call, A.MemberCall)):
            raise _err("void-in-expression", "calls return nothing and cannot be used as values", e)
        raise _err("internal", f"unhandled expression {type(e).__name__}", e)

    def _name(self, e: A.Name) -> tuple[str, object]:
        n = e.ident
        if n in self.locals:
            slot, kind = self.locals[n]
            if kind == "ref":
                return f"ref:{self.info.var_ref_target.get(n, '')}", ("local-ref", n)
            return kind, ir.RLocal(slot, kind == _ADDRESS)
        if n in self.client_slot:
            return _ADDRESS, ir.RClient(self.client_slot[n])
        if n in self.arg_index:
            return _NUMERIC, ir.RArg(self.arg_index[n])
        info = self.info
        kind = info.var_kind.get(n)
        if kind == _ADDRESS:
            return _ADDRESS, ir.RRole(info.role_index[n])
        if kind == _NUMERIC:
            return _NUMERIC, ir.RData(info.data_index[n])
        if kind == _MAPPING:
            return _MAPPING, ("map", info.map_index[n])
        if kind == "ref":
            return f"ref:{info.var_ref_target[n]}", ("state-ref", n)
        raise _err("unknown-variable", f"unknown variable {n}", e)

    def _cast(self, e: A.AddressCast) -> tuple[str, object]:
        kind, inner = self._expr(e.operand)
        if kind == _ADDRESS:
            return _ADDRESS, inner
        if kind.startswith("ref:"):
            idx = self._ref_instance(e.operand, kind)
            return _ADDRESS, ir.RAddrLit(ROOT_ACCOUNT + idx)
        raise _err("no-numeric-cast", "numeric values cannot be cast to address", e)

    def _index(self, e: A.Index) -> tuple[str, object]:
        if not isinstance(e.base, A.Name):
            raise _err("map-single-dim", "only one-dimensional mappings exist", e)
        kind, base = self._expr(e.base)
        if kind != _MAPPING:
            raise _err("not-a-mapping", f"{e.base.ident} is not a mapping", e)
        kkind, key = self._expr(e.key)
        if kkind != _ADDRESS:
            raise _err("map-key-address", "mapping keys must be addresses", e)
        return _NUMERIC, ir.RMapRead(base[1], key)

    def _binary(self, e: A.Binary) -> tuple[str, object]:
        lk, left = self._expr(e.left)
        rk, right = self._expr(e.right)
        if e.op in ("+", "-", "*", "/"):
            if lk == _ADDRESS or rk == _ADDRESS:
                raise _err("no-address-arith", "addresses do not support arithmetic", e)
            if lk != _NUMERIC or rk != _NUMERIC:
                raise _err("type-mismatch", f"'{e.op}' needs numeric operands", e)
            return _NUMERIC, ir.RBin(e.op, left, right)
        if e.op in ("<", ">"):
            if lk == _ADDRESS or rk == _ADDRESS:
                raise _err("no-address-order", "addresses only compare with == and !=", e)
            if lk != _NUMERIC or rk != _NUMERIC:
                raise _err("type-mismatch", f"'{e.op}' needs numeric operands", e)
            return _NUMERIC, ir.RBin(e.op, left, right)
        if e.op in ("==", "!="):
            if lk == _ADDRESS and rk == _ADDRESS:
                return _NUMERIC, ir.RBin(e.op, left, right, address_compare=True)
            if lk == _NUMERIC and rk == _NUMERIC:
                return _NUMERIC, ir.RBin(e.op, left, right)
            raise _err("type-mismatch", "cannot compare address with numeric", e)
        if e.op in ("&&", "||"):
            if lk != _NUMERIC or rk != _NUMERIC:
                raise _err("type-mismatch", f"'{e.op}' needs boolean operands", e)
            return _NUMERIC, ir.RBin(e.op, left, right)
        raise _err("internal", f"unhandled operator {e.op}", e)

    def _ref_instance(self, target: A.Expr, kind: str) -> int:
        if not isinstance(target, A.Name):
            raise _err("type-mismatch", "contract references must be named variables", target)
        binding = self.info.ref_binding.get(target.ident)
        if binding is None:
            raise _err("unbound-contract-ref",
                       f"{target.ident} is never bound by `new`", target)
        return binding

    # -- statements ------------------------------------------------------

    def _stmts(self, stmts: tuple[A.Stmt, ...]) -> tuple:
        return tuple(self._stmt(s) for s in stmts)

    def _stmt(self, s: A.Stmt):
        if isinstance(s, A.VarDecl):
            if s.name in self.locals or s.name in self.client_slot or s.name in self.arg_index:
                raise _err("duplicate-variable", f"{s.name} redeclared", s)
            k = s.typ.kind
            if k == "mapping":
                raise _err("no-local-mapping", "mappings must be state variables", s)
            if k == "contract" or k not in ("uint", "bool", "address"):
                raise _err("no-local-contract-ref",
                           "contract references must be state variables", s)
            kind = _ADDRESS if k == "address" else _NUMERIC
            slot = len(self.locals)
            self.locals[s.name] = (slot, kind)
            return ir.SLocal(slot, ir.RNum(0))  # zero-initialized
        if isinstance(s, A.Require):
            kind, c = self._expr(s.cond)
            if kind != _NUMERIC:
                raise _err("type-mismatch", "require needs a boolean condition", s)
            return ir.SRequire(c)
        if isinstance(s, A.Assert):
            kind, c = self._expr(s.cond)
            if kind != _NUMERIC:
                raise _err("type-mismatch", "assert needs a boolean condition", s)
            return ir.SAssert(c)
        if isinstance(s, A.Return):
            return ir.SReturn()
        if isinstance(s, A.If):
            kind, c = self._expr(s.cond)
            if kind != _NUMERIC:
                raise _err("type-mismatch", "if needs a boolean condition", s)
            return ir.SIf(c, self._stmts(s.body))
        if isinstance(s, A.While):
            kind, c = self._expr(s.cond)
            if kind != _NUMERIC:
                raise _err("type-mismatch", "while needs a boolean condition", s)
            return ir.SWhile(c, self._stmts(s.body))
        if isinstance(s, A.Assign):
            return self._assign(s)
        if isinstance(s, A.NewAssign):
            return self._new(s)
        if isinstance(s, A.ExprStmt):
            return self._call_stmt(s)
        raise _err("internal", f"unhandled statement {type(s).__name__}", s)

    def _assign(self, s: A.Assign):
        if isinstance(s.target, A.Index):
            _, mapread = self._index(s.target)
            vk, value = self._expr(s.value)
            if vk != _NUMERIC:
                raise _err("type-mismatch", "mapping cells hold numeric values", s)
            return ir.SMapWrite(mapread.map_index, mapread.key, value)
        if not isinstance(s.target, A.Name):
            raise _err("bad-assign-target", "cannot assign to this expression", s)
        name = s.target.ident
        vk, value = self._expr(s.value)
        if name in self.locals:
            slot, kind = self.locals[name]
            if kind == "ref":
                raise _err("type-mismatch", "contract references are bound with `new`", s)
            if kind != vk:
                rule = "no-numeric-cast" if kind == _ADDRESS and vk == _NUMERIC else "type-mismatch"
                raise _err(rule, f"cannot assign {vk} to {kind} variable {name}", s)
            return ir.SLocal(slot, value)
        if name in self.client_slot or name in self.arg_index:
            raise _err("assign-to-param", f"parameter {name} is read-only", s)
        info = self.info
        kind = info.var_kind.get(name)
        if kind is None:
            raise _err("unknown-variable", f"unknown variable {name}", s)
        if kind == _ADDRESS:
            if vk != _ADDRESS:
                raise _err("no-numeric-cast", f"cannot store numeric into address {name}", s)
            return ir.SRole(info.role_index[name], value)
        if kind == _NUMERIC:
            if vk != _NUMERIC:
                raise _err("type-mismatch", f"cannot store address into numeric {name}", s)
            return ir.SData(info.data_index[name], value)
        if kind == _MAPPING:
            raise _err("no-map-assign", "mappings are written per key", s)
        raise _err("type-mismatch", "contract references are bound with `new`", s)

    def _lower_call(self, callee_info: _ContractInfo, fname: str,
                    args: tuple[A.Expr, ...], node, forwards_clients: bool):
        fn = callee_info.functions.get(fname)
        if fn is None or (fn.is_constructor and fname != "constructor"):
            raise _err("unknown-function",
                       f"{callee_info.decl.name} has no function {fname}", node)
        want_addr = [p for p in fn.params if p.typ.kind == "address"]
        want_num = [p for p in fn.params if p.typ.kind in ("uint", "bool")]
        if len(args) != len(fn.params):
            raise _err("arity-mismatch",
                       f"{fname} takes {len(fn.params)} arguments, got {len(args)}", node)
        client_exprs, arg_exprs = [], []
        for p, a in zip(fn.params, args):
            kind, lowered = self._expr(a)
            if p.typ.kind == "address":
                if kind != _ADDRESS:
                    raise _err("type-mismatch", f"argument {p.name} must be an address", node)
                client_exprs.append(lowered)
            else:
                if kind != _NUMERIC:
                    raise _err("type-mismatch", f"argument {p.name} must be numeric", node)
                arg_exprs.append(lowered)
        assert len(client_exprs) == len(want_addr) and len(arg_exprs) == len(want_num)
        return ir.SCall((callee_info.index, fname), tuple(client_exprs),
                        tuple(arg_exprs), forwards_clients)

    def _new(self, s: A.NewAssign):
        # Binding was resolved in _bind_instances; runtime effect is the
        # callee constructor body with the creator's account as sender.
        target = self.v.by_name[s.contract]
        return self._lower_call(target, "constructor", s.callargs, s, forwards_clients=False)

    def _call_stmt(self, s: A.ExprStmt):
        e = s.expr
        if isinstance(e, A.Call):
            # Internal call on the same contract: keep the original clients.
            return self._lower_call(self.info, e.func, e.callargs, s, forwards_clients=True)
        if isinstance(e, A.MemberCall):
            kind, _ = self._expr(e.target)
            if not kind.startswith("ref:"):
                raise _err("type-mismatch", "only contract references can be called", s)
            idx = self._ref_instance(e.target, kind)
            return self._lower_call(self.v.contracts[idx], e.func, e.callargs, s,
                                    forwards_clients=False)
        raise _err("bad-statement", "only calls may be used as statements", s)


def validate(unit: A.SourceUnit) -> ContractBundle:
    """Validate an AST and lower it; raises ValidationError with a rule id."""
    return _Validator(unit).run()
