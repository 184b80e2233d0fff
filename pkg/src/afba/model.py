"""Domain types for validators, organizations, slices and network snapshots."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping

from afba.reputation import TrustCategory


class Status(enum.Enum):
    ACTIVE = "Active"
    CRASHED = "Crashed"
    BYZANTINE = "Byzantine"


@dataclass(frozen=True)
class Validator:
    id: str
    org: str
    is_validating: bool = True
    full_validator: bool = True
    overloaded: bool = False
    uptime: float = 1.0
    status: Status = Status.ACTIVE
    name: str = ""


@dataclass(frozen=True)
class Organization:
    id: str
    members: frozenset[str]
    name: str = ""


@dataclass(frozen=True)
class QuorumSlice:
    """The peers ``owner`` relies on. The owner itself is never a member."""

    owner: str
    members: frozenset[str]


@dataclass(frozen=True)
class NetworkSnapshot:
    validators: Mapping[str, Validator]
    organizations: Mapping[str, Organization]
    slices: Mapping[str, QuorumSlice] = field(default_factory=dict)

    @property
    def n(self) -> int:
        return len(self.validators)

    @classmethod
    def build(
        cls,
        validators: Iterable[Validator],
        organizations: Iterable[Organization],
        slices: Iterable[QuorumSlice] = (),
    ) -> "NetworkSnapshot":
        return cls(
            validators={v.id: v for v in validators},
            organizations={o.id: o for o in organizations},
            slices={s.owner: s for s in slices},
        )

    def org_of(self, node: str) -> str:
        return self.validators[node].org

    def with_slices(self, slices: Mapping[str, QuorumSlice]) -> "NetworkSnapshot":
        return replace(self, slices=dict(slices))

    def with_status(self, nodes: Iterable[str], status: Status) -> "NetworkSnapshot":
        validators = dict(self.validators)
        for node in nodes:
            validators[node] = replace(validators[node], status=status)
        return replace(self, validators=validators)


@dataclass(frozen=True)
class Violation:
    kind: str
    subject: str
    detail: str

    def __str__(self) -> str:
        return f"{self.kind}: {self.subject}: {self.detail}"


def validate_snapshot(snapshot: NetworkSnapshot) -> list[Violation]:
    """Return every structural problem in ``snapshot``; an empty list means valid."""
    out: list[Violation] = []
    validators = snapshot.validators

    for key in sorted(validators):
        v = validators[key]
        if not v.id:
            out.append(Violation("empty-id", repr(key), "validator id is empty"))
        elif v.id != key:
            out.append(Violation("duplicate-id", v.id, f"stored under key {key!r}"))
        if not 0.0 <= v.uptime <= 1.0:
            out.append(Violation("uptime-range", key, f"uptime {v.uptime} outside [0, 1]"))
        if v.org not in snapshot.organizations:
            out.append(Violation("unknown-org", key, f"organization {v.org!r} does not exist"))

    seen: dict[str, str] = {}
    for org_id in sorted(snapshot.organizations):
        org = snapshot.organizations[org_id]
        if not org.members:
            out.append(Violation("empty-org", org_id, "organization has no members"))
        for member in sorted(org.members):
            if member not in validators:
                out.append(Violation("dangling-member", member, f"listed in organization {org_id!r}"))
                continue
            if member in seen:
                out.append(
                    Violation("org-overlap", member, f"member of both {seen[member]!r} and {org_id!r}")
                )
            else:
                seen[member] = org_id
    for key in sorted(validators):
        org = validators[key].org
        if org in snapshot.organizations and key not in snapshot.organizations[org].members:
            out.append(Violation("org-mismatch", key, f"not listed among members of {org!r}"))

    for owner in sorted(snapshot.slices):
        sl = snapshot.slices[owner]
        if sl.owner != owner:
            out.append(Violation("slice-owner", owner, f"slice stored for {owner!r} names owner {sl.owner!r}"))
        if owner not in validators:
            out.append(Violation("dangling-slice-owner", owner, "slice owner is not a validator"))
        if not sl.members:
            out.append(Violation("empty-slice", owner, "slice has no members"))
        if sl.owner in sl.members:
            out.append(Violation("self-in-slice", owner, "slice contains its owner"))
        for member in sorted(sl.members):
            if member not in validators:
                out.append(Violation("dangling-slice-member", member, f"referenced by slice of {owner!r}"))
    return out


class MissingCategory(KeyError):
    pass


def active_set(snapshot: NetworkSnapshot, categories: Mapping[str, TrustCategory]) -> frozenset[str]:
    """Validators that are up and not blacklisted."""
    missing = [v for v in snapshot.validators if v not in categories]
    if missing:
        raise MissingCategory(f"no trust category for {sorted(missing)[:5]}")
    return frozenset(
        v.id
        for v in snapshot.validators.values()
        if v.status is Status.ACTIVE and categories[v.id] is not TrustCategory.BLACKLISTED
    )
