"""Prompt templates for every agent role.

Templates substitute ``{placeholder}`` markers in a single pass, so
braces inside substituted values are never re-expanded.  The instruction
wording, including its typographic quotes, is part of the scripted-run
contract: rendered prompts are fingerprinted, and the golden fixtures
depend on these exact bytes.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .errors import ConfigError, ValidationError

VERDICT_LABEL_SENTENCE = (
    "Start your answer with exactly one of these verdict labels: "
    "True, Partly true, False, Partly false, Misleading, or Unverifiable."
)


@dataclass(frozen=True)
class PromptTemplate:
    """A named template with a fixed placeholder set."""

    name: str
    template: str
    placeholders: tuple[str, ...]

    def __post_init__(self) -> None:
        for ph in self.placeholders:
            if "{" + ph + "}" not in self.template:
                raise ConfigError(f"template {self.name!r} is missing the {{{ph}}} marker")

    def render(self, **values: str) -> str:
        missing = [ph for ph in self.placeholders if ph not in values]
        if missing:
            raise ValidationError(f"template {self.name!r}: missing values for {missing}")
        extra = [key for key in values if key not in self.placeholders]
        if extra:
            raise ValidationError(f"template {self.name!r}: unknown placeholders {extra}")
        pattern = re.compile("|".join(r"\{" + re.escape(ph) + r"\}" for ph in self.placeholders))
        return pattern.sub(lambda m: str(values[m.group(0)[1:-1]]), self.template)


GENERATE_ANSWER = PromptTemplate(
    name="generate_answer",
    placeholders=("question", "context"),
    template=(
        "You are an expert for the COVID-19 fact-checking tasks. Based on pieces of "
        "retrieved context to detect if the claim is true or false. You will have to "
        "give me the title and author of the context you referred to in one sentence. "
        "If you don’t know the answer, just say that you don’t know. Keep the "
        "answer concise.\n"
        + VERDICT_LABEL_SENTENCE
        + "\n\nClaim: {question}\nContext: {context}\nAnswer:"
    ),
)

GRADE_DOCUMENT = PromptTemplate(
    name="grade_document",
    placeholders=("document", "question"),
    template=(
        "You are a grader assessing the relevance of a retrieved document to a user "
        "question. If the document contains keywords related to the user question, "
        "grade it as relevant. It does not need to be a stringent test. The goal is "
        "to filter out erroneous retrievals. Give a binary score of “yes” or "
        "“no” score to indicate whether the document is relevant to the "
        "question. Provide the binary score as a JSON object with a single key, "
        "“score,” and no preamble or explanation."
        "\n\nHere is the retrieved document: {document}\n"
        "Here is the user question: {question}"
    ),
)

GRADE_ANSWER = PromptTemplate(
    name="grade_answer",
    placeholders=("generation", "question"),
    template=(
        "You are a grader assessing whether an answer is useful to resolve a "
        "question. Give a binary score of “yes” or “no” to indicate "
        "whether the answer is useful to resolve a question. Provide the binary "
        "score as a JSON object with a single key, “score,” and no preamble "
        "or explanation."
        "\n\nHere is the answer: {generation}\n"
        "Here is the question: {question}"
    ),
)

REWRITE_CLAIM = PromptTemplate(
    name="rewrite_claim",
    placeholders=("question",),
    template=(
        "You are a claim rewriter who converts an input claim to a better version "
        "that is optimized for vector store retrieval and fact-checking. Look at "
        "the input and try to reason about the underlying semantic intent meaning."
        "\n\nClaim: {question}\nRewritten claim:"
    ),
)

EXTRACT_CLAIMS = PromptTemplate(
    name="extract_claims",
    placeholders=("chunk",),
    template=(
        "You are a careful reader supporting a COVID-19 fact-checking workflow. "
        "Read the article excerpt below and list every distinct health-related "
        "factual claim it makes. Write each claim as one self-contained sentence "
        "on its own line, with no numbering and no commentary. If the excerpt "
        "makes no health-related factual claim, reply with the single word NONE."
        "\n\nExcerpt:\n{chunk}\n\nClaims:"
    ),
)

BASELINE_CHECK = PromptTemplate(
    name="baseline_check",
    placeholders=("question", "context"),
    template=(
        "You are an expert fact-checker for COVID-19 news. Decide whether the "
        "claim below is supported by the article it was taken from, using only "
        "that article and your general knowledge. Name the part of the article "
        "you relied on in one sentence. If you don't know, just say that you "
        "don't know. Keep the answer concise.\n"
        + VERDICT_LABEL_SENTENCE
        + "\n\nClaim: {question}\nArticle: {context}\nAnswer:"
    ),
)

EXTRACT_STATEMENTS = PromptTemplate(
    name="extract_statements",
    placeholders=("text",),
    template=(
        "List every atomic factual statement made by the text below. Write one "
        "statement per line, with no numbering and no commentary. If the text "
        "makes no factual statement, reply with the single word NONE."
        "\n\nText:\n{text}\n\nStatements:"
    ),
)

NLI_JUDGE = PromptTemplate(
    name="nli_judge",
    placeholders=("premise", "hypothesis"),
    template=(
        "You are a grader assessing whether a statement is supported by a "
        "reference text. Give a binary score of \"yes\" or \"no\" to indicate "
        "whether the reference supports the statement. Provide the binary score "
        "as a JSON object with a single key, \"score\", and no preamble or "
        "explanation."
        "\n\nHere is the reference text: {premise}\n"
        "Here is the statement: {hypothesis}"
    ),
)

# Appended to a prompt when its first completion failed to parse.
SCORE_RETRY_SUFFIX = (
    '\n\nReminder: reply with only {"score": "yes"} or {"score": "no"} and nothing else.'
)
CLAIMS_RETRY_SUFFIX = (
    "\n\nReminder: reply with one claim sentence per line, or the single word NONE. "
    "No other text."
)

ALL_TEMPLATES: dict[str, PromptTemplate] = {
    t.name: t
    for t in (
        GENERATE_ANSWER,
        GRADE_DOCUMENT,
        GRADE_ANSWER,
        REWRITE_CLAIM,
        EXTRACT_CLAIMS,
        BASELINE_CHECK,
        EXTRACT_STATEMENTS,
        NLI_JUDGE,
    )
}
