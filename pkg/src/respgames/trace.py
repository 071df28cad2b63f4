"""Bounded histories, pure joint plans, compatibility classes and payoffs.

A history alternates states and joint actions; its probability is the
product of the parametric transition entries along its steps (every step's
entry is not identically zero).  A plan is a pure joint-action sequence from
a start state; two plans are coalition-compatible when they agree on every
coalition agent's action at every step.  Enumeration is a pure function of
immutable inputs and honours a configurable branching-volume guard.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .errors import ModelError, ResourceLimitError
from .model import JointAction, Psmas, RewardStructure
from .polyarith import Polynomial

DEFAULT_PATH_LIMIT = 1_000_000

_path_limit = DEFAULT_PATH_LIMIT


def set_path_limit(limit: int) -> None:
    global _path_limit
    if limit < 1:
        raise ValueError("path limit must be positive")
    _path_limit = limit


def get_path_limit() -> int:
    return _path_limit


@dataclass(frozen=True)
class History:
    """A finite state/joint-action alternation with polynomial probability."""

    states: tuple[str, ...]
    actions: tuple[JointAction, ...]
    step_probs: tuple[Polynomial, ...]
    probability: Polynomial

    def __post_init__(self):
        if len(self.states) != len(self.actions) + 1:
            raise ValueError("history needs |states| = |actions| + 1")

    @property
    def steps(self) -> int:
        return len(self.actions)

    def key(self) -> tuple:
        return (self.states, self.actions)

    @staticmethod
    def single(state: str) -> "History":
        return History((state,), (), (), Polynomial.one())

    def extend(self, joint: JointAction, target: str,
               step: Polynomial) -> "History":
        return History(self.states + (target,), self.actions + (joint,),
                       self.step_probs + (step,), self.probability * step)


@dataclass(frozen=True)
class Plan:
    """A pure joint plan: fixed joint actions for a fixed number of steps."""

    start: str
    steps: tuple[JointAction, ...]

    def __len__(self) -> int:
        return len(self.steps)

    def truncated(self, length: int) -> "Plan":
        return Plan(self.start, self.steps[:length])


def plan_from_model(m: Psmas, name: str) -> Plan:
    decl = m.base.plans.get(name)
    if decl is None:
        raise ModelError(f"model declares no plan named '{name}'")
    start, steps = decl
    return Plan(start, steps)


def validate_plan(m: Psmas, plan: Plan) -> None:
    """Every joint action must be available at every state the plan can reach."""
    game = m.base
    if plan.start not in game.states:
        raise ModelError(f"plan starts at unknown state {plan.start}")
    reachable = {plan.start}
    for step_no, joint in enumerate(plan.steps):
        if len(joint) != len(game.agents):
            raise ModelError(f"step {step_no + 1} is not a joint action")
        for state in reachable:
            for agent, action in zip(game.agents, joint):
                if action not in game.available[(agent, state)]:
                    raise ModelError(
                        f"plan step {step_no + 1}: action {action} not "
                        f"available to {agent} at {state}")
        reachable = {target
                     for state in reachable
                     for target, prob in game.delta[(state, joint)].items()
                     if prob > 0}


@dataclass(frozen=True)
class CompatClass:
    """All plans that agree with the anchor on the coalition's actions."""

    anchor: Plan
    coalition: frozenset[str]
    members: tuple[Plan, ...]
    prefix_sets: tuple[frozenset[tuple[JointAction, ...]], ...] = field(
        repr=False, default=())

    def contains_action_prefix(self, actions: Sequence[JointAction]) -> bool:
        """Is this action prefix consistent with some member plan?"""
        j = len(actions)
        if j > len(self.anchor.steps):
            return False
        return tuple(actions) in self.prefix_sets[j]


def guard_enumeration_volume(m: Psmas, depth: int) -> None:
    """Refuse enumerations whose worst-case branching volume is over the
    configured limit."""
    max_branch = max(
        (len(m.base.joint_actions(s)) for s in m.base.states), default=1)
    volume = (max_branch ** depth) * len(m.base.states)
    if volume > _path_limit:
        raise ResourceLimitError(
            f"enumeration volume {volume} exceeds limit {_path_limit}")


def enumerate_histories(m: Psmas, state: str, depth: int) -> list[History]:
    """All histories of exactly `depth` steps from `state`.

    Per-step transition polynomials are not identically zero; for any
    admissible valuation the returned probabilities sum to 1.
    """
    if depth < 0:
        raise ValueError("depth must be >= 0")
    guard_enumeration_volume(m, depth)
    frontier = [History.single(state)]
    for _ in range(depth):
        nxt: list[History] = []
        for h in frontier:
            here = h.states[-1]
            for joint in m.base.joint_actions(here):
                for target, poly in m.successors(here, joint):
                    nxt.append(h.extend(joint, target, poly))
        frontier = nxt
    return frontier


def plan_histories(m: Psmas, plan: Plan) -> list[History]:
    """Histories consistent with a plan (branching over successors only)."""
    validate_plan(m, plan)
    frontier = [History.single(plan.start)]
    for joint in plan.steps:
        nxt: list[History] = []
        for h in frontier:
            for target, poly in m.successors(h.states[-1], joint):
                nxt.append(h.extend(joint, target, poly))
        frontier = nxt
    return frontier


def compatible_plans(m: Psmas, plan: Plan,
                     coalition: Iterable[str]) -> CompatClass:
    """The coalition-compatibility equivalence class of a plan.

    Members agree with the anchor on every coalition agent's action at every
    step; agents outside the coalition range over all actions available along
    the states each candidate plan can reach.
    """
    coalition = frozenset(coalition)
    unknown = coalition - set(m.base.agents)
    if unknown:
        raise ModelError(f"unknown coalition agent {sorted(unknown)[0]}")
    validate_plan(m, plan)
    game = m.base
    guard_enumeration_volume(m, len(plan.steps))

    members: list[tuple[JointAction, ...]] = []

    def grow(prefix: tuple[JointAction, ...], reachable: frozenset[str]):
        step_no = len(prefix)
        if step_no == len(plan.steps):
            members.append(prefix)
            return
        anchor_joint = plan.steps[step_no]
        pools: list[tuple[str, ...]] = []
        for idx, agent in enumerate(game.agents):
            allowed = set(game.available[(agent, next(iter(reachable)))])
            for state in reachable:
                allowed &= set(game.available[(agent, state)])
            if agent in coalition:
                choice = anchor_joint[idx]
                pools.append((choice,) if choice in allowed else ())
            else:
                pools.append(tuple(sorted(allowed)))
        for joint in itertools.product(*pools):
            nxt = frozenset(
                target
                for state in reachable
                for target, prob in game.delta[(state, joint)].items()
                if prob > 0)
            grow(prefix + (joint,), nxt)

    grow((), frozenset({plan.start}))
    plans = tuple(Plan(plan.start, steps) for steps in members)
    prefix_sets = tuple(
        frozenset(p.steps[:j] for p in plans)
        for j in range(len(plan.steps) + 1))
    return CompatClass(anchor=plan, coalition=coalition, members=plans,
                       prefix_sets=prefix_sets)


def payoff(h: History, r: RewardStructure) -> Polynomial:
    """Expected per-step payoff along a history.

    Each step contributes (action reward + state reward) weighted by that
    step's parametric transition entry.
    """
    total = Polynomial.zero()
    for j, joint in enumerate(h.actions):
        reward = r.step_reward(h.states[j], joint)
        if reward != 0:
            total = total + h.step_probs[j] * reward
    return total
