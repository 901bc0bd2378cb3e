"""Neighbourhood construction and the local-bundle transition relation.

A local bundle runs the ordinary transaction semantics over a small,
possibly non-consecutive address set and then havocs every user's mapping
state to an arbitrary vector satisfying the candidate interference
invariant. A post-state outside the invariant is returned frozen, as the
witness that the invariant is not closed under that transaction.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Iterable

from .errors import SpecBindingError
from .properties import GuardedProperty, SplitInvariant, eval_split
from .ptg import PtGraph
from .semantics import (Action, BundleState, ControlState, DataDomain,
                        UserRecord, step)
from .validator import ContractBundle


@dataclass(frozen=True)
class Neighbourhood:
    """Disjoint representative sets: one address per explicit class, one per
    transient class or role guard, and every implicit or literal-guard
    address itself."""

    exp: frozenset[int]
    trans: frozenset[int]
    impl: frozenset[int]

    def __post_init__(self):
        if (self.exp & self.trans) or (self.exp & self.impl) or (self.trans & self.impl):
            raise ValueError("neighbourhood parts must be pairwise disjoint")

    @property
    def addresses(self) -> tuple[int, ...]:
        return tuple(sorted(self.exp | self.trans | self.impl))


def saturating_neighbourhood(ptg: PtGraph, role_guards: Iterable[int],
                             lit_guards: Iterable[int]) -> Neighbourhood:
    """Implicit-class and literal-guard addresses verbatim; then one fresh
    address per transient class or role guard, then one per explicit class.
    Fresh addresses are the smallest naturals not already taken."""
    impl = frozenset(ptg.implicit_addresses) | frozenset(lit_guards)
    n_trans = len(frozenset(ptg.transient_indices) | frozenset(role_guards))
    n_exp = len(ptg.explicit_indices)
    used = set(impl)
    counter = itertools.count()

    def fresh() -> int:
        for a in counter:
            if a not in used:
                used.add(a)
                return a
        raise AssertionError("unreachable")

    trans = frozenset(fresh() for _ in range(n_trans))
    exp = frozenset(fresh() for _ in range(n_exp))
    return Neighbourhood(exp, trans, impl)


def extend_neighbourhood(nbhd: Neighbourhood, mode: str, k: int = 0) -> tuple[int, ...]:
    """The extended address set used by the two proof rules.

    ``"compositionality"`` adds one fresh address, the arbitrary user under
    interference. ``"safety"`` adds max(0, k - |exp|) fresh addresses so a
    k-universal property has enough arbitrary representatives.
    """
    base = set(nbhd.addresses)
    if mode == "compositionality":
        missing = 1
    elif mode == "safety":
        missing = max(0, k - len(nbhd.exp))
    else:
        raise ValueError("mode must be 'compositionality' or 'safety'")
    for a in itertools.count():
        if missing == 0:
            break
        if a not in base:
            base.add(a)
            missing -= 1
    return tuple(sorted(base))


def check_guards_in_scope(obj: SplitInvariant | GuardedProperty,
                          addresses: Iterable[int]) -> None:
    """Literal guards naming addresses outside the neighbourhood could never
    bind a representative; reject the configuration up front."""
    addrs = set(addresses)
    missing = sorted(obj.lit_guard_addresses - addrs)
    if missing:
        raise SpecBindingError(
            f"literal guard address(es) {missing} are outside the neighbourhood {sorted(addrs)}")


def allowed_vectors(theta: SplitInvariant, control: ControlState, user_id: int,
                    domain: DataDomain, n_maps: int) -> tuple[tuple[int, ...], ...]:
    """All map vectors the invariant admits for this user at this control
    state, in ascending order."""
    return tuple(v for v in itertools.product(domain.values(), repeat=n_maps)
                 if eval_split(theta, control, UserRecord(user_id, v), domain))


def interference_successors(theta: SplitInvariant, state: BundleState,
                            domain: DataDomain) -> set[BundleState]:
    """Every state with the same control and ids whose users each satisfy
    the invariant; the exhaustive rendering of the interference relation."""
    if state.is_bottom:
        raise ValueError("the error state has no interference successors")
    n_maps = len(state.users[0].map_vals) if state.users else 0
    per_user = [allowed_vectors(theta, state.control, u.id, domain, n_maps)
                for u in state.users]
    out: set[BundleState] = set()
    for combo in itertools.product(*per_user):
        users = tuple(UserRecord(u.id, v) for u, v in zip(state.users, combo))
        out.add(BundleState(state.control, users))
    return out


def local_step(bundle: ContractBundle, a_plus: Iterable[int], theta: SplitInvariant,
               state: BundleState, action: Action,
               domain: DataDomain) -> set[BundleState]:
    """One local-bundle transition: run the transaction, then havoc under
    the invariant when the raw post-state satisfies it for every user;
    otherwise return the raw state alone (the non-compositionality witness)."""
    addrs = set(a_plus)
    if not set(action.clients) <= addrs:
        raise ValueError(f"action clients {action.clients} outside the neighbourhood")
    raw = step(bundle, state, action, domain)
    if raw.is_bottom:
        return {raw}
    if all(eval_split(theta, raw.control, u, domain) for u in raw.users):
        return interference_successors(theta, raw, domain)
    return {raw}
