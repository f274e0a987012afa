"""Run an agent against a GuiGraph: generate an action, execute it, repeat."""

from __future__ import annotations

import random
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any, Optional, Protocol, Sequence

from .core import Action, GuiFlow, GuiGraph, GuiPage

DEFAULT_MAX_STEPS = 15


class UnknownPage(KeyError):
    pass


class EpisodeTerminated(RuntimeError):
    pass


class AgentProtocolError(RuntimeError):
    """The agent returned something that is not an action."""

    def __init__(self, message: str, step_index: Optional[int] = None):
        super().__init__(message if step_index is None else f"step {step_index}: {message}")
        self.step_index = step_index


class InvalidActionPolicy(str, Enum):
    STRICT = "strict"
    LENIENT = "lenient"


class Outcome(str, Enum):
    EXECUTED = "executed"
    INVALID_STAY = "invalid_stay"


class Termination(str, Enum):
    COMPLETE = "complete"
    STEP_LIMIT = "step_limit"
    STRICT_FAILURE = "strict_failure"


@dataclass(frozen=True)
class EpisodeConfig:
    max_steps: int = DEFAULT_MAX_STEPS
    invalid_action_policy: InvalidActionPolicy = InvalidActionPolicy.LENIENT

    def __post_init__(self) -> None:
        object.__setattr__(self, "invalid_action_policy", InvalidActionPolicy(self.invalid_action_policy))
        if self.max_steps < 1:
            raise ValueError("max_steps must be at least 1")


@dataclass(frozen=True)
class TraceStep:
    page_id: str
    action: Action
    outcome: Outcome

    def to_dict(self) -> dict[str, Any]:
        return {"page_id": self.page_id, "action": self.action.to_dict(), "outcome": self.outcome.value}

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "TraceStep":
        return cls(str(d["page_id"]), Action.from_dict(d["action"]), Outcome(d["outcome"]))


@dataclass(frozen=True)
class EnvironmentState:
    graph: GuiGraph = field(repr=False)
    task: str
    start: str
    page_id: str
    visited: tuple[TraceStep, ...] = ()
    terminated_by: Optional[Termination] = None

    @property
    def page(self) -> GuiPage:
        return self.graph.page(self.page_id)

    @property
    def history(self) -> list[Action]:
        return [s.action for s in self.visited]


def reset(g: GuiGraph, task: str, start: Optional[str] = None) -> EnvironmentState:
    start = g.home if start is None else start
    if start not in g.pages:
        raise UnknownPage(start)
    return EnvironmentState(g, task, start, start)


def step(state: EnvironmentState, a: Action,
         policy: InvalidActionPolicy = InvalidActionPolicy.LENIENT) -> tuple[EnvironmentState, Outcome]:
    """Execute one action.

    Complete ends the episode. Otherwise the first outgoing edge matching
    the action is followed. An unmatched action leaves the page unchanged
    but still counts as a step (lenient) or ends the episode (strict).
    """
    if state.terminated_by is not None:
        raise EpisodeTerminated(f"episode already ended by {state.terminated_by.value}")
    if a.is_complete:
        rec = TraceStep(state.page_id, a, Outcome.EXECUTED)
        return replace(state, visited=state.visited + (rec,), terminated_by=Termination.COMPLETE), Outcome.EXECUTED
    dst = state.graph.transition(state.page_id, a)
    if dst is not None:
        rec = TraceStep(state.page_id, a, Outcome.EXECUTED)
        return replace(state, page_id=dst, visited=state.visited + (rec,)), Outcome.EXECUTED
    rec = TraceStep(state.page_id, a, Outcome.INVALID_STAY)
    ended = Termination.STRICT_FAILURE if InvalidActionPolicy(policy) is InvalidActionPolicy.STRICT else None
    return replace(state, visited=state.visited + (rec,), terminated_by=ended), Outcome.INVALID_STAY


@dataclass(frozen=True)
class EpisodeTrace:
    task: str
    start: str
    visited: tuple[TraceStep, ...]
    terminated_by: Termination
    final_page: str
    max_steps: int = DEFAULT_MAX_STEPS
    invalid_action_policy: InvalidActionPolicy = InvalidActionPolicy.LENIENT

    def __len__(self) -> int:
        return len(self.visited)

    def actions(self) -> list[Action]:
        return [s.action for s in self.visited]

    def to_flow(self) -> GuiFlow:
        """Non-Complete steps as a flow (invalid stays included, they are real steps)."""
        steps = [(s.page_id, s.action) for s in self.visited if not s.action.is_complete]
        return GuiFlow(self.task, tuple(steps), (), self.final_page)

    def to_dict(self) -> dict[str, Any]:
        return {
            "task": self.task,
            "start": self.start,
            "visited": [s.to_dict() for s in self.visited],
            "terminated_by": self.terminated_by.value,
            "final_page": self.final_page,
            "max_steps": self.max_steps,
            "invalid_action_policy": self.invalid_action_policy.value,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "EpisodeTrace":
        return cls(
            task=str(d["task"]), start=str(d["start"]),
            visited=tuple(TraceStep.from_dict(s) for s in d["visited"]),
            terminated_by=Termination(d["terminated_by"]), final_page=str(d["final_page"]),
            max_steps=int(d.get("max_steps", DEFAULT_MAX_STEPS)),
            invalid_action_policy=InvalidActionPolicy(d.get("invalid_action_policy", "lenient")),
        )


class Agent(Protocol):
    def decide(self, task: str, page: GuiPage, action_space: Sequence[Action], history: Sequence[Action]) -> Action:
        ...


def run_episode(g: GuiGraph, agent: Agent, task: str, cfg: EpisodeConfig = EpisodeConfig(),
                start: Optional[str] = None) -> EpisodeTrace:
    """Loop agent decisions through the environment until Complete, a strict
    failure or ``cfg.max_steps`` steps."""
    state = reset(g, task, start)
    for i in range(cfg.max_steps):
        page = state.page
        try:
            a = agent.decide(task, page, list(page.action_space), state.history)
        except AgentProtocolError as exc:
            if exc.step_index is None:
                raise type(exc)(str(exc), i) from exc
            raise
        if not isinstance(a, Action):
            raise AgentProtocolError(f"agent returned {type(a).__name__}, not an Action", i)
        state, _ = step(state, a, cfg.invalid_action_policy)
        if state.terminated_by is not None:
            break
    ended = state.terminated_by or Termination.STEP_LIMIT
    return EpisodeTrace(task, state.start, state.visited, ended, state.page_id,
                        cfg.max_steps, cfg.invalid_action_policy)


class ScriptedAgent:
    """Plays a fixed action list, then Complete."""

    def __init__(self, actions: Sequence[Action], complete: Optional[Action] = None):
        self._actions = list(actions)
        self._complete = complete or Action.complete()
        self._i = 0

    def decide(self, task, page, action_space, history):
        if self._i < len(self._actions):
            a = self._actions[self._i]
            self._i += 1
            return a
        return self._complete


class GoldenAgent(ScriptedAgent):
    """Replays a flow's actions and then completes."""

    def __init__(self, flow: GuiFlow):
        super().__init__(flow.actions())


class RandomAgent:
    def __init__(self, seed: int = 0):
        self._rng = random.Random(seed)

    def decide(self, task, page, action_space, history):
        return self._rng.choice(list(action_space))


class NeverCompleteAgent:
    """Always picks the first non-Complete action, or a fixed off-page click."""

    def decide(self, task, page, action_space, history):
        for a in action_space:
            if not a.is_complete:
                return a
        from .core import BoundingBox

        return Action.click("nothing", BoundingBox(0, 0, 1, 1))


class PolicyAgent:
    def __init__(self, policy):
        self.policy = policy

    def decide(self, task, page, action_space, history):
        from .policy import greedy_action

        return greedy_action(self.policy, task, page, history)
