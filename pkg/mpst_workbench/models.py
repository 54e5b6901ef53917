"""Serializable result documents and the per-invocation run configuration."""

from typing import Any, Callable, Dict, List, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field

from .config import DEFAULT_MAX_STATES, DEFAULT_UNFOLD_BOUND, Settings


class RunConfig(BaseModel):
    max_states: int = Field(default=DEFAULT_MAX_STATES, gt=0)
    unfold_bound: int = Field(default=DEFAULT_UNFOLD_BOUND, gt=0)
    output_format: Literal["text", "json"] = "text"
    seed: int = 0
    model_config = ConfigDict(frozen=True)

    @classmethod
    def from_settings(cls, settings: Settings, **overrides: Any) -> "RunConfig":
        values = {
            "max_states": settings.max_states,
            "unfold_bound": settings.unfold_bound,
            "seed": settings.seed,
        }
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**values)


# ── Graphs ──

class StateEntry(BaseModel):
    id: int
    term: str


class TransitionEntry(BaseModel):
    source: int = Field(alias="from")
    label: str
    target: int = Field(alias="to")
    model_config = ConfigDict(populate_by_name=True)


class GraphDocument(BaseModel):
    states: List[StateEntry] = Field(default_factory=list)
    transitions: List[TransitionEntry] = Field(default_factory=list)
    initial: int = 0
    truncated: bool = False

    @classmethod
    def from_graph(cls, graph, show_state: Callable[[Any], str], show_label: Callable[[Any], str]) -> "GraphDocument":
        return cls(
            states=[StateEntry(id=sid, term=show_state(s)) for sid, s in sorted(graph.states.items())],
            transitions=[TransitionEntry(source=a, label=show_label(l), target=b) for a, l, b in graph.transitions],
            initial=graph.initial,
            truncated=graph.truncated,
        )

    def to_json(self) -> str:
        return self.model_dump_json(by_alias=True, indent=2)


# ── Verdicts ──

class Distinguishing(BaseModel):
    trace: List[str]
    failing_side: int = Field(alias="failingSide")
    model_config = ConfigDict(populate_by_name=True)


class VerdictDocument(BaseModel):
    verdict: Literal["bisimilar", "not-bisimilar", "inconclusive"]
    mode: Literal["standard", "governed"] = "standard"
    witness: Optional[str] = None
    relation: Optional[List[List[str]]] = None
    distinguishing: Optional[Distinguishing] = None
    delta_converges: Optional[bool] = Field(default=None, alias="deltaConverges")
    explored_pairs: int = Field(default=0, alias="exploredPairs")
    model_config = ConfigDict(populate_by_name=True)

    @classmethod
    def from_verdict(cls, verdict, mode: str = "standard", witness: Optional[str] = None,
                     show_pair: Optional[Callable[[Any], List[str]]] = None) -> "VerdictDocument":
        relation = None
        if verdict.related and show_pair is not None:
            relation = [show_pair(pair) for pair in verdict.relation]
        distinguishing = None
        if verdict.failing_side is not None:
            distinguishing = Distinguishing(trace=verdict.show_trace(), failing_side=verdict.failing_side)
        return cls(
            verdict=verdict.verdict,
            mode=mode,
            witness=witness,
            relation=relation,
            distinguishing=distinguishing,
            delta_converges=verdict.delta_converges,
            explored_pairs=verdict.explored_pairs,
        )

    def to_json(self) -> str:
        return self.model_dump_json(by_alias=True, indent=2, exclude_none=True)


# ── Typing and projection ──

class CheckDocument(BaseModel):
    process: str
    ok: bool
    delta: Optional[str] = None
    expected: Optional[str] = None
    matches: Optional[bool] = None
    rule: str = ""
    location: str = ""
    message: str = ""

    def to_json(self) -> str:
        return self.model_dump_json(indent=2, exclude_none=True)


class ProjectionDocument(BaseModel):
    global_type: str = Field(alias="global")
    role: Optional[int] = None
    local: Optional[str] = None
    projections: Dict[str, str] = Field(default_factory=dict)
    error: Optional[str] = None
    diff: List[str] = Field(default_factory=list)
    model_config = ConfigDict(populate_by_name=True)

    def to_json(self) -> str:
        return self.model_dump_json(by_alias=True, indent=2, exclude_none=True)


class ReductsDocument(BaseModel):
    process: str
    reducts: List[str] = Field(default_factory=list)

    def to_json(self) -> str:
        return self.model_dump_json(indent=2)
