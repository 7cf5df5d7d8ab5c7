"""Named, versioned prompt templates shipped with the package.

Wire requests carry only a prompt id; whoever serves the model resolves
the id to wording through this registry, so both sides of the boundary
agree on the exact text.
"""

from __future__ import annotations

from importlib import resources

from .errors import ConfigError

EXPLAIN_PROMPT_ID = "explain_v1"
ANSWER_PROMPT_ID = "answer_v1"
KNOWN_PROMPT_IDS = (EXPLAIN_PROMPT_ID, ANSWER_PROMPT_ID)


def get_prompt(prompt_id: str) -> str:
    """Raw template text for a shipped prompt id."""
    if prompt_id not in KNOWN_PROMPT_IDS:
        raise ConfigError(f"unknown prompt id {prompt_id!r}; known: {list(KNOWN_PROMPT_IDS)}")
    ref = resources.files("eagers") / "prompts" / f"{prompt_id}.txt"
    return ref.read_text(encoding="utf-8")


def render_prompt(prompt_id: str, question: str) -> str:
    """Template with the question substituted in."""
    return get_prompt(prompt_id).replace("{question}", question)
