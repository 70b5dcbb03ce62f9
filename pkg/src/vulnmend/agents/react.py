"""The reasoning/tool loop both agents run on.

One step = one model turn: either a tool call (executed, observation fed
back) or final text (the report, ending the loop). Tool errors become
observations rather than crashes; the model is expected to read them and
adjust. When the step budget runs out the loop demands a final report in
one last turn.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Callable

from ..errors import (LLMBackendError, MaxStepsExceededWithoutReport,
                      VulnmendError)
from ..llm import ChatRequest, ChatResponse, LLMBackend

_TRANSIENT_RETRIES = 2

FINALIZE_PROMPT = ("You have reached the step limit. Produce your final "
                   "report now in the required output format. Do not call "
                   "any more tools.")


@dataclass
class Tool:
    name: str
    description: str
    parameters: dict
    fn: Callable[[dict], "ToolOutcome"]

    def schema(self) -> dict:
        return {"name": self.name, "description": self.description,
                "parameters": self.parameters}


@dataclass
class ToolOutcome:
    observation: str
    meta: dict = field(default_factory=dict)


@dataclass
class AgentSpec:
    name: str
    system_prompt: str
    max_steps: int
    tools: dict[str, Tool]


@dataclass
class Step:
    thought: str | None
    tool: str | None
    args: dict | None
    observation: str | None
    meta: dict = field(default_factory=dict)


@dataclass
class Transcript:
    agent: str
    steps: list[Step] = field(default_factory=list)
    final_text: str | None = None
    hit_step_limit: bool = False

    @property
    def tool_counts(self) -> Counter:
        return Counter(s.tool for s in self.steps if s.tool)


def _chat_with_retry(llm: LLMBackend, request: ChatRequest) -> ChatResponse:
    attempts = 0
    while True:
        try:
            return llm.chat(request)
        except LLMBackendError as exc:
            attempts += 1
            if not exc.retryable or attempts > _TRANSIENT_RETRIES:
                raise


def _execute(tool: Tool, args: dict) -> ToolOutcome:
    try:
        return tool.fn(args or {})
    except (VulnmendError, FileNotFoundError, NotADirectoryError,
            KeyError, TypeError, ValueError) as exc:
        return ToolOutcome(observation=f"Error: {exc}",
                           meta={"error": type(exc).__name__})


def run_react(spec: AgentSpec, llm: LLMBackend,
              initial_message: str) -> Transcript:
    """Drive the agent until it produces final text.

    Raises MaxStepsExceededWithoutReport if even the forced finalize turn
    keeps calling tools.
    """
    transcript = Transcript(agent=spec.name)
    tool_schemas = tuple(t.schema() for t in spec.tools.values())
    messages: list[dict] = [
        {"role": "system", "content": spec.system_prompt},
        {"role": "user", "content": initial_message},
    ]

    for _ in range(spec.max_steps):
        response = _chat_with_retry(llm, ChatRequest(
            tag=spec.name, messages=tuple(messages), tools=tool_schemas,
            temperature=0.0))
        if response.tool_call is None:
            transcript.final_text = response.text or ""
            return transcript

        call = response.tool_call
        if call.name not in spec.tools:
            allowed = ", ".join(sorted(spec.tools))
            outcome = ToolOutcome(
                observation=(f"Error: tool {call.name!r} is not available "
                             f"to this agent. Available tools: {allowed}."),
                meta={"refused": True})
        else:
            outcome = _execute(spec.tools[call.name], call.args)

        transcript.steps.append(Step(
            thought=response.thought, tool=call.name, args=call.args,
            observation=outcome.observation, meta=outcome.meta))
        messages.append({
            "role": "assistant",
            "content": response.thought or "",
            "tool_call": {"name": call.name, "args": call.args},
        })
        messages.append({
            "role": "tool",
            "name": call.name,
            "content": outcome.observation,
        })

    transcript.hit_step_limit = True
    messages.append({"role": "user", "content": FINALIZE_PROMPT})
    response = _chat_with_retry(llm, ChatRequest(
        tag=spec.name, messages=tuple(messages), tools=tool_schemas,
        temperature=0.0))
    if response.tool_call is not None:
        raise MaxStepsExceededWithoutReport(
            f"agent {spec.name!r} exhausted {spec.max_steps} steps and "
            f"still tried to call {response.tool_call.name!r}")
    transcript.final_text = response.text or ""
    return transcript
