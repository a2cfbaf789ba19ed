from __future__ import annotations

from collections.abc import Sequence

from app.errors import ContractViolation
from app.models import TextMetrics


def text_metrics(generated: Sequence[Sequence[int]], references: Sequence[Sequence[int]]) -> TextMetrics:
    """Caption exact match and positional token accuracy; ids exclude BOS/EOS."""
    if len(generated) != len(references):
        raise ContractViolation("one generated caption per reference is required")
    if not references:
        return TextMetrics(exact_match=0.0, token_accuracy=0.0)
    exact = sum(list(g) == list(r) for g, r in zip(generated, references))
    total = sum(len(r) for r in references)
    correct = sum(int(a) == int(b) for g, r in zip(generated, references) for a, b in zip(g, r))
    return TextMetrics(
        exact_match=exact / len(references),
        token_accuracy=correct / total if total else 1.0,
    )
