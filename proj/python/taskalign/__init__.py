"""Python access to the intent-task alignment engine.

Documents are plain dicts in the same JSON layout the server and CLI use.
"""

import json
import os

# Wheels ship the prompt templates inside the package.
_templates = os.path.join(os.path.dirname(__file__), "templates")
if os.path.isdir(_templates):
    os.environ.setdefault("TASKALIGN_TEMPLATES", _templates)

from . import _core  # noqa: E402
from ._core import TaskAlignError, bleu, run_cli, speedup, tokenize  # noqa: E402

__all__ = [
    "TaskAlignError",
    "apply_updates",
    "bleu",
    "canonical_triple",
    "diff_graphs",
    "expand_supernode",
    "rouge",
    "run_cli",
    "score_corpus",
    "simplify",
    "speedup",
    "tokenize",
]


def canonical_triple(triple):
    """Validate a triple and return its canonical serialization."""
    return _core.canonical_triple(json.dumps(triple))


def simplify(triple, focus=()):
    """Simplified view of `triple` for the focused intent ids."""
    return json.loads(_core.simplify(json.dumps(triple), list(focus)))


def expand_supernode(view, supernode_id):
    return _core.expand_supernode(json.dumps(view), supernode_id)


def diff_graphs(before, after):
    return json.loads(_core.diff_graphs(json.dumps(before), json.dumps(after)))


def apply_updates(tree, updates):
    """Apply intent updates; returns (new tree, focus ids)."""
    doc, focus = _core.apply_updates(json.dumps(tree), json.dumps({"updates": list(updates)}))
    return json.loads(doc), set(focus)


def rouge(candidate, reference, variant="1"):
    return _core.rouge(candidate, reference, variant)


def score_corpus(pairs):
    """Mean ROUGE-1/2/L and BLEU over (candidate, reference) pairs."""
    return json.loads(_core.score_corpus([tuple(p) for p in pairs]))
