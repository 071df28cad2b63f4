"""Game model types, the model file parser, and the parametric construction.

A Csg is the concrete game: agents, states, per-state available actions, an
exact stochastic transition kernel over joint actions, labels, rewards and
named pure joint plans.  build_psmas turns it into the parametric model whose
transition entries are polynomials in the strategy parameters, with one
dependent action per agent scope eliminated as 1 - (sum of the others) so
that the per-scope simplex identity holds algebraically.

Model file format (UTF-8, '#' comments, sections in this order):

    agents: A1 A2
    states: s0 s1
    init: s0
    params: shared                  # optional: tie strategies across states
    param x1: A1 skip               # optional explicit free-parameter names
    labels: s0 { dropped } s1 { collision }
    actions A1 @ s0: catch skip     # one line per agent per state
    trans s0 (skip, skip) -> { s0: 1/2, s1: 1/2 }
    reward A1 action catch: 2       # per-agent, per own action / per state
    reward A1 state s1: 1
    plan pi1 @ s0: (catch, skip) (skip, skip)

Joint-action tuples list actions in the declared agent order.  Rewards
default to 0 when omitted.  Parser errors carry file:line:col positions.
Model objects are treated as immutable after construction and are safe to
share across threads.
"""

from __future__ import annotations

import itertools
import re
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping

from .errors import MissingParameterError, ModelError
from .polyarith import ParamId, Polynomial

JointAction = tuple[str, ...]
Scope = tuple[str, str | None]  # (agent, state) or (agent, None) when shared


@dataclass(frozen=True)
class RewardStructure:
    """Per-agent rewards: a state reward plus an own-action reward.

    Action rewards are declared per individual action and lifted to joint
    actions by reading off this agent's component.
    """

    agent: str
    agent_index: int
    state_reward: Mapping[str, Fraction] = field(default_factory=dict)
    action_reward: Mapping[str, Fraction] = field(default_factory=dict)

    def joint_action_reward(self, joint: JointAction) -> Fraction:
        return self.action_reward.get(joint[self.agent_index], Fraction(0))

    def state_value(self, state: str) -> Fraction:
        return self.state_reward.get(state, Fraction(0))

    def step_reward(self, state: str, joint: JointAction) -> Fraction:
        return self.joint_action_reward(joint) + self.state_value(state)


@dataclass
class Csg:
    """Concurrent stochastic game with exact rational transition kernel."""

    agents: tuple[str, ...]
    states: tuple[str, ...]
    initial: str
    available: Mapping[tuple[str, str], tuple[str, ...]]
    delta: Mapping[tuple[str, JointAction], Mapping[str, Fraction]]
    labels: Mapping[str, frozenset[str]]
    rewards: Mapping[str, RewardStructure] = field(default_factory=dict)
    plans: Mapping[str, tuple[str, tuple[JointAction, ...]]] = field(
        default_factory=dict)
    shared_params: bool = False
    param_decls: tuple[tuple[str, str, str | None, str], ...] = ()
    # param_decls entries: (name, agent, state-or-None, action)

    def __post_init__(self):
        if self.initial not in self.states:
            raise ModelError(f"initial state {self.initial} not declared")
        for agent in self.agents:
            for state in self.states:
                acts = self.available.get((agent, state))
                if not acts:
                    raise ModelError(
                        f"agent {agent} has no actions at state {state}")
        for state in self.states:
            for joint in self.joint_actions(state):
                dist = self.delta.get((state, joint))
                if dist is None:
                    raise ModelError(
                        f"no transition for state {state}, joint action "
                        f"({', '.join(joint)})")
                total = Fraction(0)
                for target, prob in dist.items():
                    if target not in self.states:
                        raise ModelError(
                            f"transition from {state} targets unknown state "
                            f"{target}")
                    if prob < 0 or prob > 1:
                        raise ModelError(
                            f"probability {prob} out of [0,1] in transition "
                            f"from {state}")
                    total += prob
                if total != 1:
                    raise ModelError(
                        f"transition probabilities from {state} under "
                        f"({', '.join(joint)}) sum to {total}, not 1")

    def joint_actions(self, state: str) -> list[JointAction]:
        pools = [self.available[(agent, state)] for agent in self.agents]
        return [tuple(choice) for choice in itertools.product(*pools)]

    def propositions(self) -> frozenset[str]:
        out: set[str] = set()
        for props in self.labels.values():
            out.update(props)
        return frozenset(out)

    def agent_index(self, agent: str) -> int:
        return self.agents.index(agent)


@dataclass(frozen=True)
class AdmissibilityReport:
    """Outcome of the three-condition admissibility check."""

    ok: bool
    violations: tuple[tuple[int, str, Fraction], ...]


class Psmas:
    """Parametric model: one strategy parameter per agent-scope-action.

    The last action of each scope (lexicographically, unless the model
    declares parameter names) is dependent and replaced by 1 - (sum of the
    scope's free parameters), so every transition row sums to the constant 1
    as a polynomial identity.
    """

    def __init__(self, base: Csg, params: tuple[ParamId, ...],
                 dependent: Mapping[Scope, str],
                 dependent_params: tuple[ParamId, ...],
                 transition: Mapping[tuple[str, JointAction, str], Polynomial]):
        self.base = base
        self.params = params
        self.dependent = dict(dependent)
        self.dependent_params = dependent_params
        self.transition = dict(transition)
        self.param_table = {p.name: p for p in params}
        self.param_table.update({p.name: p for p in dependent_params})
        self._by_triple = {(p.agent, p.state, p.action): p
                           for p in params + dependent_params}
        self._free_by_scope: dict[Scope, list[ParamId]] = {}
        for p in params:
            self._free_by_scope.setdefault((p.agent, p.state), []).append(p)

    # -- scope helpers --------------------------------------------------

    def scope_of(self, agent: str, state: str) -> Scope:
        return (agent, None) if self.base.shared_params else (agent, state)

    def scopes(self) -> list[Scope]:
        if self.base.shared_params:
            return [(agent, None) for agent in self.base.agents]
        return [(agent, state) for agent in self.base.agents
                for state in self.base.states]

    def agent_scopes(self, agent: str) -> list[Scope]:
        return [s for s in self.scopes() if s[0] == agent]

    def scope_actions(self, scope: Scope) -> tuple[str, ...]:
        agent, state = scope
        if state is not None:
            return self.base.available[(agent, state)]
        return self.base.available[(agent, self.base.states[0])]

    def free_params(self, scope: Scope) -> tuple[ParamId, ...]:
        return tuple(self._free_by_scope.get(scope, ()))

    def free_param(self, agent: str, state: str, action: str) -> ParamId | None:
        scope = self.scope_of(agent, state)
        for p in self._free_by_scope.get(scope, ()):
            if p.action == action:
                return p
        return None

    def action_probability(self, agent: str, state: str, action: str) -> Polynomial:
        """The (polynomial) probability of one agent action at a state."""
        scope = self.scope_of(agent, state)
        if self.dependent[scope] == action:
            total = Polynomial.one()
            for p in self._free_by_scope.get(scope, ()):
                total = total - Polynomial.variable(p)
            return total
        param = self.free_param(agent, state, action)
        if param is None:
            raise ModelError(f"unknown action {action} for {agent} at {state}")
        return Polynomial.variable(param)

    def vertex_valuation(self, scope: Scope, action: str) -> dict[ParamId, Fraction]:
        """Free-parameter values that make `action` the pure choice at scope."""
        out = {}
        for p in self._free_by_scope.get(scope, ()):
            out[p] = Fraction(1) if p.action == action else Fraction(0)
        return out

    # -- transition helpers ----------------------------------------------

    def successors(self, state: str, joint: JointAction) -> list[tuple[str, Polynomial]]:
        out = []
        for target, prob in self.base.delta[(state, joint)].items():
            if prob == 0:
                continue
            out.append((target, self.transition[(state, joint, target)]))
        return out

    def transition_poly(self, state: str, joint: JointAction, target: str) -> Polynomial:
        return self.transition.get((state, joint, target), Polynomial.zero())

    def derived_valuation(self, valuation: Mapping[ParamId, Fraction]
                          ) -> dict[ParamId, Fraction]:
        """Extend a free-parameter valuation with the dependent values."""
        out = dict(valuation)
        for dep in self.dependent_params:
            scope = (dep.agent, dep.state)
            total = Fraction(0)
            for p in self._free_by_scope.get(scope, ()):
                if p not in valuation:
                    raise MissingParameterError(p)
                total += Fraction(valuation[p])
            out.setdefault(dep, 1 - total)
        return out


def build_psmas(g: Csg) -> Psmas:
    """Construct the parametric model for a game.

    Deterministic: identical input text yields identical parameter naming and
    polynomials.  Declared `param` names select the free actions of a scope;
    otherwise every action but the lexicographically last is free.
    """
    declared: dict[Scope, list[tuple[str, str]]] = {}
    for name, agent, state, action in g.param_decls:
        declared.setdefault((agent, state), []).append((name, action))

    scopes: list[Scope]
    if g.shared_params:
        scopes = [(agent, None) for agent in g.agents]
        for agent in g.agents:
            acts = {g.available[(agent, s)] for s in g.states}
            if len(acts) > 1:
                raise ModelError(
                    f"params: shared requires agent {agent} to have the same "
                    f"action set at every state")
    else:
        scopes = [(agent, state) for agent in g.agents for state in g.states]

    params: list[ParamId] = []
    dependent: dict[Scope, str] = {}
    dependent_params: list[ParamId] = []
    for scope in scopes:
        agent, state = scope
        actions = (g.available[(agent, state)] if state is not None
                   else g.available[(agent, g.states[0])])
        decls = declared.pop(scope, None)
        if decls:
            free_actions = [a for _, a in decls]
            unknown = set(free_actions) - set(actions)
            if unknown:
                raise ModelError(
                    f"param declares unknown action {sorted(unknown)[0]} "
                    f"for {agent}")
            if len(set(free_actions)) != len(actions) - 1:
                raise ModelError(
                    f"{agent}: declare exactly {len(actions) - 1} free "
                    f"parameters (one per action except the dependent one) "
                    f"or none")
            dep = next(a for a in actions if a not in free_actions)
            names = {a: n for n, a in decls}
        else:
            dep = sorted(actions)[-1]
            free_actions = [a for a in actions if a != dep]
            names = {}
        dependent[scope] = dep
        for action in actions:
            if action == dep:
                dependent_params.append(ParamId(agent, state, action))
            else:
                params.append(ParamId(agent, state, action,
                                      label=names.get(action)))
    if declared:
        scope = next(iter(declared))
        raise ModelError(f"param declaration for unknown scope {scope}")

    by_scope: dict[Scope, dict[str, ParamId]] = {}
    for p in params:
        by_scope.setdefault((p.agent, p.state), {})[p.action] = p

    def action_poly(agent: str, state: str, action: str) -> Polynomial:
        scope = (agent, None) if g.shared_params else (agent, state)
        if dependent[scope] == action:
            total = Polynomial.one()
            for p in by_scope.get(scope, {}).values():
                total = total - Polynomial.variable(p)
            return total
        return Polynomial.variable(by_scope[scope][action])

    transition: dict[tuple[str, JointAction, str], Polynomial] = {}
    for state in g.states:
        for joint in g.joint_actions(state):
            mix = Polynomial.one()
            for agent, action in zip(g.agents, joint):
                mix = mix * action_poly(agent, state, action)
            for target, prob in g.delta[(state, joint)].items():
                if prob == 0:
                    continue
                transition[(state, joint, target)] = mix * prob

    return Psmas(g, tuple(params), dependent, tuple(dependent_params),
                 transition)


def check_admissible(m: Psmas, valuation: Mapping[ParamId, Fraction]
                     ) -> AdmissibilityReport:
    """Check the three admissibility conditions exactly.

    Condition 1: every instantiated transition value lies in [0,1].
    Condition 2: every action probability (free, explicitly bound dependent,
    or derived dependent) lies in [0,1].  Condition 3: per agent and scope the
    action probabilities sum to exactly 1.
    """
    violations: list[tuple[int, str, Fraction]] = []
    for p in m.params:
        if p not in valuation:
            raise MissingParameterError(p)

    by_scope_values: dict[Scope, dict[str, Fraction]] = {}
    for scope in m.scopes():
        values: dict[str, Fraction] = {}
        for p in m.free_params(scope):
            values[p.action] = Fraction(valuation[p])
        dep_action = m.dependent[scope]
        dep_id = next(d for d in m.dependent_params
                      if (d.agent, d.state) == scope)
        if dep_id in valuation:
            values[dep_action] = Fraction(valuation[dep_id])
        else:
            values[dep_action] = 1 - sum(values.values())
        by_scope_values[scope] = values

    for scope, values in by_scope_values.items():
        total = sum(values.values())
        if total != 1:
            where = scope[0] if scope[1] is None else f"{scope[0]}@{scope[1]}"
            violations.append((3, where, total))
        for action, value in values.items():
            if value < 0 or value > 1:
                pid = m._by_triple[(scope[0], scope[1], action)]
                violations.append((2, pid.name, value))

    free_only = {p: Fraction(valuation[p]) for p in m.params}
    for (state, joint, target), poly in m.transition.items():
        value = poly.evaluate(free_only)
        if value < 0 or value > 1:
            where = f"trans {state} ({', '.join(joint)}) -> {target}"
            violations.append((1, where, value))

    # Parameter-level violations are the root cause; cite them first.
    priority = {2: 0, 3: 1, 1: 2}
    violations.sort(key=lambda v: (priority[v[0]], v[1]))
    return AdmissibilityReport(ok=not violations, violations=tuple(violations))


# -- model file parsing -------------------------------------------------

_SECTION_ORDER = ["agents", "states", "init", "params", "param", "labels",
                  "actions", "trans", "reward", "plan"]


def parse_model(text: str, source: str = "<model>") -> Csg:
    """Parse the model file format into a Csg."""
    parser = _ModelParser(text, source)
    return parser.parse()


def load_model(path) -> Csg:
    with open(path, "r", encoding="utf-8") as handle:
        text = handle.read()
    return parse_model(text, source=str(path))


class _ModelParser:
    def __init__(self, text: str, source: str):
        self.source = source
        self.lines = text.splitlines()
        self.agents: list[str] = []
        self.states: list[str] = []
        self.initial: str | None = None
        self.shared = False
        self.param_decls: list[tuple[str, str, str | None, str]] = []
        self.labels: dict[str, frozenset[str]] = {}
        self.available: dict[tuple[str, str], tuple[str, ...]] = {}
        self.delta: dict[tuple[str, JointAction], dict[str, Fraction]] = {}
        self.rewards: dict[str, dict[str, dict[str, Fraction]]] = {}
        self.plans: dict[str, tuple[str, tuple[JointAction, ...]]] = {}
        self.section_rank = -1

    def error(self, msg: str, line_no: int, col: int = 1):
        raise ModelError(msg, self.source, line_no, col)

    def parse(self) -> Csg:
        for idx, raw in enumerate(self.lines, start=1):
            line = raw.split("#", 1)[0].rstrip()
            if not line.strip():
                continue
            self.dispatch(line, idx)
        if not self.agents:
            raise ModelError("missing agents section", self.source)
        if self.initial is None:
            raise ModelError("missing init section", self.source)
        rewards = {
            agent: RewardStructure(
                agent=agent,
                agent_index=self.agents.index(agent),
                state_reward=dict(decl.get("state", {})),
                action_reward=dict(decl.get("action", {})))
            for agent, decl in self.rewards.items()
        }
        try:
            game = Csg(
                agents=tuple(self.agents),
                states=tuple(self.states),
                initial=self.initial,
                available=dict(self.available),
                delta={k: dict(v) for k, v in self.delta.items()},
                labels=dict(self.labels),
                rewards=rewards,
                plans=dict(self.plans),
                shared_params=self.shared,
                param_decls=tuple(self.param_decls),
            )
        except ModelError as exc:
            raise ModelError(str(exc), self.source) from None
        self.validate_plans(game)
        return game

    def enter(self, section: str, line_no: int):
        rank = _SECTION_ORDER.index(section)
        if rank < self.section_rank and not (
                section in ("actions", "trans", "reward", "plan", "param")):
            self.error(f"section '{section}' out of order", line_no)
        self.section_rank = max(self.section_rank, rank)

    def dispatch(self, line: str, line_no: int):
        stripped = line.strip()
        keyword = stripped.split(None, 1)[0].rstrip(":")
        handler = getattr(self, f"on_{keyword}", None)
        if handler is None:
            self.error(f"unknown directive '{keyword}'", line_no,
                       line.index(keyword) + 1)
        self.enter(keyword if keyword in _SECTION_ORDER else "plan", line_no)
        handler(stripped, line_no)

    def _after_colon(self, line: str, line_no: int) -> str:
        if ":" not in line:
            self.error("expected ':'", line_no, len(line))
        return line.split(":", 1)[1].strip()

    def on_agents(self, line: str, line_no: int):
        self.agents = self._after_colon(line, line_no).split()
        if len(set(self.agents)) != len(self.agents) or not self.agents:
            self.error("agents must be a non-empty list of distinct names",
                       line_no)

    def on_states(self, line: str, line_no: int):
        self.states = self._after_colon(line, line_no).split()
        if len(set(self.states)) != len(self.states) or not self.states:
            self.error("states must be a non-empty list of distinct names",
                       line_no)

    def on_init(self, line: str, line_no: int):
        self.initial = self._after_colon(line, line_no)
        if self.initial not in self.states:
            self.error(f"unknown initial state '{self.initial}'", line_no)

    def on_params(self, line: str, line_no: int):
        mode = self._after_colon(line, line_no)
        if mode not in ("shared", "per-state"):
            self.error("params must be 'shared' or 'per-state'", line_no)
        self.shared = mode == "shared"

    def on_param(self, line: str, line_no: int):
        m = re.fullmatch(
            r"param\s+(\w+)\s*:\s*(\w+)\s+(\w+)(?:\s*@\s*(\w+))?", line)
        if not m:
            self.error("expected 'param NAME: AGENT ACTION [@ STATE]'",
                       line_no)
        name, agent, action, state = m.groups()
        if agent not in self.agents:
            self.error(f"unknown agent '{agent}'", line_no)
        if state is not None and state not in self.states:
            self.error(f"unknown state '{state}'", line_no)
        if self.shared and state is not None:
            self.error("shared params cannot name a state", line_no)
        if not self.shared and state is None:
            self.error("per-state params must name a state", line_no)
        if any(name == n for n, _, _, _ in self.param_decls):
            self.error(f"duplicate parameter name '{name}'", line_no)
        self.param_decls.append((name, agent, state, action))

    def on_labels(self, line: str, line_no: int):
        body = self._after_colon(line, line_no)
        for m in re.finditer(r"(\w+)\s*\{([^}]*)\}", body):
            state, props = m.group(1), m.group(2).split()
            if state not in self.states:
                self.error(f"unknown state '{state}' in labels", line_no)
            self.labels[state] = frozenset(props)
        for state in self.states:
            self.labels.setdefault(state, frozenset())

    def on_actions(self, line: str, line_no: int):
        m = re.fullmatch(r"actions\s+(\w+)\s*@\s*(\w+)\s*:\s*(.+)", line)
        if not m:
            self.error("expected 'actions AGENT @ STATE: a b ...'", line_no)
        agent, state, acts = m.group(1), m.group(2), m.group(3).split()
        if agent not in self.agents:
            self.error(f"unknown agent '{agent}'", line_no)
        if state not in self.states:
            self.error(f"unknown state '{state}'", line_no)
        if not acts or len(set(acts)) != len(acts):
            self.error("actions must be a non-empty list of distinct names",
                       line_no)
        self.available[(agent, state)] = tuple(acts)

    def _parse_joint(self, text: str, line_no: int) -> JointAction:
        joint = tuple(a.strip() for a in text.split(","))
        if len(joint) != len(self.agents):
            self.error(
                f"joint action ({text}) must list one action per agent "
                f"in order ({', '.join(self.agents)})", line_no)
        return joint

    def on_trans(self, line: str, line_no: int):
        m = re.fullmatch(
            r"trans\s+(\w+)\s*\(([^)]*)\)\s*->\s*\{([^}]*)\}", line)
        if not m:
            self.error("expected 'trans STATE (a, b) -> { s: p, ... }'",
                       line_no)
        state, joint_text, dist_text = m.groups()
        if state not in self.states:
            self.error(f"unknown state '{state}'", line_no)
        joint = self._parse_joint(joint_text, line_no)
        dist: dict[str, Fraction] = {}
        for chunk in dist_text.split(","):
            chunk = chunk.strip()
            if not chunk:
                continue
            if ":" not in chunk:
                self.error(f"expected 'state: probability' in '{chunk}'",
                           line_no)
            target, prob_text = (part.strip() for part in chunk.split(":", 1))
            if target not in self.states:
                self.error(f"unknown target state '{target}'", line_no)
            try:
                prob = Fraction(prob_text)
            except (ValueError, ZeroDivisionError):
                self.error(f"bad probability '{prob_text}'", line_no)
            dist[target] = dist.get(target, Fraction(0)) + prob
        self.delta[(state, joint)] = dist

    def on_reward(self, line: str, line_no: int):
        m = re.fullmatch(
            r"reward\s+(\w+)\s+(action|state)\s+(\w+)\s*:\s*(\S+)", line)
        if not m:
            self.error("expected 'reward AGENT action|state NAME: value'",
                       line_no)
        agent, kind, name, value_text = m.groups()
        if agent not in self.agents:
            self.error(f"unknown agent '{agent}'", line_no)
        if kind == "state" and name not in self.states:
            self.error(f"unknown state '{name}'", line_no)
        try:
            value = Fraction(value_text)
        except (ValueError, ZeroDivisionError):
            self.error(f"bad reward value '{value_text}'", line_no)
        self.rewards.setdefault(agent, {}).setdefault(kind, {})[name] = value

    def on_plan(self, line: str, line_no: int):
        m = re.fullmatch(r"plan\s+(\w+)\s*@\s*(\w+)\s*:\s*(.+)", line)
        if not m:
            self.error("expected 'plan NAME @ STATE: (a, b) (a, b) ...'",
                       line_no)
        name, start, body = m.groups()
        if start not in self.states:
            self.error(f"unknown state '{start}'", line_no)
        if name in self.plans:
            self.error(f"duplicate plan name '{name}'", line_no)
        steps = []
        for step in re.finditer(r"\(([^)]*)\)", body):
            steps.append(self._parse_joint(step.group(1), line_no))
        if not steps:
            self.error("plan needs at least one joint action", line_no)
        self.plans[name] = (start, tuple(steps))

    def validate_plans(self, game: Csg):
        for name, (start, steps) in game.plans.items():
            reachable = {start}
            for step_no, joint in enumerate(steps):
                for state in sorted(reachable):
                    for agent, action in zip(game.agents, joint):
                        if action not in game.available[(agent, state)]:
                            raise ModelError(
                                f"plan {name}, step {step_no + 1}: action "
                                f"{action} not available to {agent} at "
                                f"{state}", self.source)
                nxt: set[str] = set()
                for state in reachable:
                    for target, prob in game.delta[(state, joint)].items():
                        if prob > 0:
                            nxt.add(target)
                reachable = nxt
