"""Uniform access to chat-completion providers with structured-output enforcement.

Every model call in the system goes through :class:`LLMGateway`. The gateway
asks for a JSON object matching a declared schema, validates the reply, and
re-prompts with the validation error appended until the schema is satisfied
or the attempt budget runs out. A deterministic :class:`ScriptedProvider`
replays canned responses keyed by stage tag, which is what the whole test
suite runs on.
"""

from __future__ import annotations

import hashlib
import json
import os
import re
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Mapping, Sequence

import requests


class GatewayError(Exception):
    """Base class for gateway failures."""


class ProviderUnreachable(GatewayError):
    """Network or auth failure talking to the provider."""


class GatewayTimeout(GatewayError):
    """The provider did not answer within the configured timeout."""


class SchemaViolation(GatewayError):
    """Every attempt produced output that failed schema validation."""

    def __init__(self, message: str, attempts: int, last_error: str):
        super().__init__(message)
        self.attempts = attempts
        self.last_error = last_error


_KIND_CHECKS: dict[str, Callable[[Any], bool]] = {
    "string": lambda v: isinstance(v, str),
    "integer": lambda v: isinstance(v, int) and not isinstance(v, bool),
    "number": lambda v: isinstance(v, (int, float)) and not isinstance(v, bool),
    "boolean": lambda v: isinstance(v, bool),
    "array": lambda v: isinstance(v, list),
    "object": lambda v: isinstance(v, dict),
}


@dataclass(frozen=True)
class SchemaField:
    """One required field of a structured-output schema."""

    name: str
    kind: str  # one of _KIND_CHECKS
    minimum: int | None = None
    maximum: int | None = None
    choices: tuple[str, ...] | None = None

    def __post_init__(self) -> None:
        if self.kind not in _KIND_CHECKS:
            raise ValueError(f"unknown schema kind {self.kind!r}")


@dataclass(frozen=True)
class OutputSchema:
    fields: tuple[SchemaField, ...]

    def __post_init__(self) -> None:
        if not self.fields:
            raise ValueError("output schema must declare at least one field")

    def describe(self) -> str:
        parts = []
        for f in self.fields:
            desc = f"{f.name} ({f.kind}"
            if f.minimum is not None or f.maximum is not None:
                desc += f", range {f.minimum}..{f.maximum}"
            if f.choices:
                desc += ", one of " + "/".join(f.choices)
            parts.append(desc + ")")
        return ", ".join(parts)

    def validate(self, parsed: Any) -> list[str]:
        """Return a list of validation error strings (empty when valid)."""
        if not isinstance(parsed, dict):
            return [f"expected a JSON object, got {type(parsed).__name__}"]
        errors = []
        for f in self.fields:
            if f.name not in parsed:
                errors.append(f"missing field {f.name!r}")
                continue
            value = parsed[f.name]
            if not _KIND_CHECKS[f.kind](value):
                errors.append(f"field {f.name!r} must be a {f.kind}")
                continue
            if f.minimum is not None and value < f.minimum:
                errors.append(f"field {f.name!r} below minimum {f.minimum}")
            if f.maximum is not None and value > f.maximum:
                errors.append(f"field {f.name!r} above maximum {f.maximum}")
            if f.choices is not None and value not in f.choices:
                errors.append(
                    f"field {f.name!r} must be one of {', '.join(f.choices)}"
                )
        return errors


@dataclass(frozen=True)
class ModelConfig:
    model_id: str
    endpoint: str
    temperature: float
    max_attempts: int = 3
    timeout_s: float = 120.0
    api_key_env: str | None = None

    def __post_init__(self) -> None:
        if not self.endpoint:
            raise ValueError("endpoint must be non-empty")
        if not 0.0 <= self.temperature <= 2.0:
            raise ValueError("temperature must be in [0, 2]")
        if self.max_attempts < 1:
            raise ValueError("max_attempts must be >= 1")


@dataclass(frozen=True)
class PromptSpec:
    system_text: str
    user_text: str
    output_schema: OutputSchema | None = None
    tag: str = "untagged"


@dataclass(frozen=True)
class StructuredCompletion:
    raw_text: str
    parsed: dict[str, Any]
    attempts_used: int


def load_model_configs(path: str | Path) -> dict[str, ModelConfig]:
    """Load a ``{"models": [...]}`` config file into ModelConfig by id."""
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    configs = {}
    for entry in data["models"]:
        configs[entry["id"]] = ModelConfig(
            model_id=entry["id"],
            endpoint=entry["endpoint"],
            temperature=entry["temperature"],
            max_attempts=entry.get("max_attempts", 3),
            timeout_s=entry.get("timeout_s", 120.0),
            api_key_env=entry.get("api_key_env"),
        )
    return configs


_FENCE_RE = re.compile(r"```(?:json)?\s*\n(.*?)\n\s*```", re.DOTALL)


def extract_json(text: str) -> Any:
    """Parse JSON out of a model reply that may be fenced or padded with prose."""
    fenced = _FENCE_RE.search(text)
    if fenced:
        text = fenced.group(1)
    text = text.strip()
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        pass
    # Fall back to the first balanced {...} block in the reply.
    start = text.find("{")
    if start >= 0:
        depth = 0
        for i in range(start, len(text)):
            if text[i] == "{":
                depth += 1
            elif text[i] == "}":
                depth -= 1
                if depth == 0:
                    return json.loads(text[start : i + 1])
    raise json.JSONDecodeError("no JSON object found", text, 0)


class HttpProvider:
    """OpenAI-style chat-completions provider over HTTPS."""

    def send(self, spec: PromptSpec, user_text: str, config: ModelConfig) -> str:
        headers = {"Content-Type": "application/json"}
        if config.api_key_env:
            key = os.environ.get(config.api_key_env)
            if not key:
                raise ProviderUnreachable(
                    f"API key environment variable {config.api_key_env} not set"
                )
            headers["Authorization"] = f"Bearer {key}"
        payload = {
            "model": config.model_id,
            "temperature": config.temperature,
            "messages": [
                {"role": "system", "content": spec.system_text},
                {"role": "user", "content": user_text},
            ],
        }
        try:
            resp = requests.post(
                config.endpoint, json=payload, headers=headers, timeout=config.timeout_s
            )
        except requests.Timeout as exc:
            raise GatewayTimeout(str(exc)) from exc
        except requests.RequestException as exc:
            raise ProviderUnreachable(str(exc)) from exc
        if resp.status_code != 200:
            raise ProviderUnreachable(
                f"provider returned HTTP {resp.status_code}: {resp.text[:200]}"
            )
        try:
            return resp.json()["choices"][0]["message"]["content"]
        except (KeyError, IndexError, ValueError) as exc:
            raise ProviderUnreachable(f"malformed provider response: {exc}") from exc


class ScriptedProvider:
    """Deterministic provider replaying canned responses keyed by stage tag.

    The transcript maps a tag to an ordered list of response strings; each
    call for a tag consumes the next entry. Access to the per-tag cursors is
    serialized so concurrent pipeline runs see a consistent order.
    """

    def __init__(self, transcript: Mapping[str, Sequence[str]] | str | Path):
        if isinstance(transcript, (str, Path)):
            with open(transcript, encoding="utf-8") as fh:
                transcript = json.load(fh)
        self._script: dict[str, list[str]] = {
            tag: list(responses) for tag, responses in transcript.items()
        }
        self._cursors: dict[str, int] = {}
        self._lock = threading.Lock()

    def send(self, spec: PromptSpec, user_text: str, config: ModelConfig) -> str:
        with self._lock:
            responses = self._script.get(spec.tag)
            if responses is None:
                raise ProviderUnreachable(f"no scripted responses for tag {spec.tag!r}")
            cursor = self._cursors.get(spec.tag, 0)
            if cursor >= len(responses):
                raise ProviderUnreachable(
                    f"scripted responses exhausted for tag {spec.tag!r}"
                )
            self._cursors[spec.tag] = cursor + 1
            return responses[cursor]


def _sha256(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()[:16]


@dataclass
class LLMGateway:
    """Provider wrapper enforcing structured output via schema-echo re-prompts."""

    provider: Any
    log_path: str | Path | None = None
    request_log: list[dict[str, Any]] = field(default_factory=list)

    def _log(self, tag: str, model_id: str, prompt: str, response: str, ok: bool) -> None:
        record = {
            "ts": time.time(),
            "tag": tag,
            "model_id": model_id,
            "prompt_hash": _sha256(prompt),
            "response_hash": _sha256(response),
            "ok": ok,
        }
        self.request_log.append(record)
        if self.log_path is not None:
            with open(self.log_path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(record) + "\n")

    def complete_structured(
        self, spec: PromptSpec, config: ModelConfig
    ) -> StructuredCompletion:
        if not spec.user_text:
            raise ValueError("user_text must be non-empty")
        if spec.output_schema is None:
            raise ValueError("complete_structured requires an output schema")

        schema = spec.output_schema
        instruction = (
            "\n\nRespond with a single JSON object with exactly these fields: "
            + schema.describe()
        )
        user_text = spec.user_text + instruction
        last_error = ""
        for attempt in range(1, config.max_attempts + 1):
            if last_error:
                prompt = (
                    user_text
                    + "\n\nYour previous reply was invalid: "
                    + last_error
                    + "\nReply again with a corrected JSON object."
                )
            else:
                prompt = user_text
            raw = self.provider.send(spec, prompt, config)
            try:
                parsed = extract_json(raw)
                errors = schema.validate(parsed)
            except json.JSONDecodeError as exc:
                errors = [f"reply was not valid JSON: {exc}"]
                parsed = None
            ok = not errors
            self._log(spec.tag, config.model_id, prompt, raw, ok)
            if ok:
                return StructuredCompletion(
                    raw_text=raw, parsed=parsed, attempts_used=attempt
                )
            last_error = "; ".join(errors)
        raise SchemaViolation(
            f"no valid structured output after {config.max_attempts} attempts "
            f"(tag={spec.tag}): {last_error}",
            attempts=config.max_attempts,
            last_error=last_error,
        )
