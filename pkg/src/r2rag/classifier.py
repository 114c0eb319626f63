"""Simple-vs-complex query routing.

Two methods: the adopted LLM judge (a yes/no prompt, cheap to adjust without
retraining) and a logistic regression over a 147-dimensional feature vector
(128-dim hashed text embedding + 19 linguistic features). The LLM judge never
raises: any failure degrades to a Simple routing so latency stays bounded.
"""

from __future__ import annotations

import hashlib
import json
import math
import re
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable, Optional, Protocol, Sequence

import numpy as np

from . import prompts
from .errors import ProviderError
from .providers import ChatRequest
from .runtime import RunContext
from .tagparse import YesNo, parse_yes_no

EMBEDDING_DIM = 128
LINGUISTIC_DIM = 19
FEATURE_DIM = EMBEDDING_DIM + LINGUISTIC_DIM
FEATURE_LIST_VERSION = "hash128+ling19/v1"


class RouteLabel(Enum):
    SIMPLE = "simple"
    COMPLEX = "complex"


class RouteMethod(Enum):
    LLM_JUDGE = "llm-judge"
    LOGREG = "logreg"
    FALLBACK = "fallback"
    FORCED = "forced"


@dataclass(frozen=True)
class RoutingDecision:
    label: RouteLabel
    method: RouteMethod
    confidence: Optional[float] = None
    raw_evidence: str = ""

    def to_dict(self) -> dict:
        return {
            "label": self.label.value,
            "method": self.method.value,
            "confidence": self.confidence,
            "raw_evidence": self.raw_evidence,
        }


@dataclass(frozen=True)
class FeatureVector:
    values: np.ndarray

    def __post_init__(self):
        if self.values.shape != (FEATURE_DIM,):
            raise ValueError(f"feature vector must have {FEATURE_DIM} dims, got {self.values.shape}")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("feature vector contains non-finite values")


def classify_llm(ctx: RunContext, question: str) -> RoutingDecision:
    """Ask the judge model whether the question needs more than one search.

    Yes routes Complex, no routes Simple. Unparseable replies and provider
    failures both route Simple via the fallback path; classification must
    never kill a request.
    """
    system, user = prompts.classifier_messages(question)
    request = ChatRequest(
        model_id=ctx.config.generator_model_id,
        system_prompt=system,
        user_prompt=user,
        temperature=ctx.config.temperature,
        top_p=ctx.config.top_p,
        thinking_enabled=True,
        purpose="classify",
    )
    try:
        reply = ctx.chat(request)
    except ProviderError as exc:
        return RoutingDecision(RouteLabel.SIMPLE, RouteMethod.FALLBACK, raw_evidence=f"error: {exc}")
    verdict = parse_yes_no(reply)
    if verdict is YesNo.YES:
        return RoutingDecision(RouteLabel.COMPLEX, RouteMethod.LLM_JUDGE, raw_evidence=reply)
    if verdict is YesNo.NO:
        return RoutingDecision(RouteLabel.SIMPLE, RouteMethod.LLM_JUDGE, raw_evidence=reply)
    return RoutingDecision(RouteLabel.SIMPLE, RouteMethod.FALLBACK, raw_evidence=reply)


# ---------------------------------------------------------------------------
# Linguistic features
# ---------------------------------------------------------------------------

class PosTagger(Protocol):
    """Pluggable part-of-speech interface; ``tag`` maps tokens to labels in
    {noun, verb, adj, adv, pron, prep, conj, det, other}."""

    def tag(self, tokens: Sequence[str]) -> list[str]: ...


_DETERMINERS = {
    "the", "a", "an", "this", "that", "these", "those", "each", "every",
    "some", "any", "no", "all", "both", "either", "neither", "such",
}
_PRONOUNS = {
    "i", "you", "he", "she", "it", "we", "they", "me", "him", "her", "us",
    "them", "my", "your", "his", "its", "our", "their", "mine", "yours",
    "hers", "ours", "theirs", "who", "whom", "whose", "what", "which",
    "someone", "anyone", "everyone", "something", "anything", "everything",
}
_PREPOSITIONS = {
    "of", "in", "on", "at", "by", "for", "with", "about", "against",
    "between", "into", "through", "during", "before", "after", "above",
    "below", "to", "from", "up", "down", "over", "under", "across",
    "toward", "towards", "within", "without", "near",
}
_CONJUNCTIONS = {
    "and", "or", "but", "nor", "so", "yet", "although", "though", "because",
    "since", "unless", "while", "whereas", "if",
}
_ADVERB_LEXICON = {
    "very", "too", "also", "often", "always", "never", "now", "then",
    "here", "there", "quite", "rather", "almost", "just", "still", "well",
    "not", "how", "when", "where", "why",
}
_VERB_LEXICON = {
    "is", "are", "was", "were", "be", "been", "being", "am", "do", "does",
    "did", "have", "has", "had", "can", "could", "will", "would", "shall",
    "should", "may", "might", "must", "go", "goes", "went", "make", "makes",
    "made", "get", "gets", "got", "give", "take", "find", "use", "work",
    "works", "mean", "means", "compare", "contrast", "discuss", "explain",
    "describe", "define", "list", "analyze", "analyse", "evaluate",
    "identify", "summarize", "outline", "assess", "happen", "happens",
    "cause", "causes", "affect", "affects", "differ", "differs",
}
_ADJECTIVE_LEXICON = {
    "good", "bad", "new", "old", "big", "small", "high", "low", "major",
    "minor", "complex", "simple", "best", "worst", "main", "key", "common",
    "different", "similar", "important", "effective", "significant",
}
_ADJECTIVE_SUFFIXES = ("ous", "ful", "ive", "able", "ible", "ish", "less", "ical", "ary")
_WH_WORDS = {"what", "who", "whom", "whose", "which", "when", "where", "why", "how"}

_TOKEN_RE = re.compile(r"[A-Za-z0-9']+")

#: Fixed order of the 19 linguistic features. All values are raw counts except
#: avg_word_length. Changing this list invalidates serialized models, which is
#: why LogRegModel records FEATURE_LIST_VERSION.
LINGUISTIC_FEATURE_NAMES = (
    "noun_count",
    "verb_count",
    "adjective_count",
    "adverb_count",
    "pronoun_count",
    "preposition_count",
    "conjunction_count",
    "determiner_count",
    "question_mark_count",
    "comma_count",
    "semicolon_count",
    "colon_count",
    "quote_count",
    "wh_word_count",
    "word_count",
    "char_count",
    "avg_word_length",
    "sub_question_count",
    "digit_token_count",
)


class RuleLexiconTagger:
    """Deterministic rule/lexicon tagger, the offline default.

    Priority: determiner > pronoun > preposition > conjunction > adverb
    > verb > adjective; remaining alphabetic tokens count as nouns.
    """

    def tag(self, tokens: Sequence[str]) -> list[str]:
        labels = []
        for token in tokens:
            lowered = token.lower()
            if lowered in _DETERMINERS:
                labels.append("det")
            elif lowered in _PRONOUNS:
                labels.append("pron")
            elif lowered in _PREPOSITIONS:
                labels.append("prep")
            elif lowered in _CONJUNCTIONS:
                labels.append("conj")
            elif lowered in _ADVERB_LEXICON or (lowered.endswith("ly") and len(lowered) > 3):
                labels.append("adv")
            elif lowered in _VERB_LEXICON or lowered.endswith("ing") or lowered.endswith("ize"):
                labels.append("verb")
            elif lowered in _ADJECTIVE_LEXICON or lowered.endswith(_ADJECTIVE_SUFFIXES):
                labels.append("adj")
            elif lowered[:1].isalpha():
                labels.append("noun")
            else:
                labels.append("other")
        return labels


_SUB_QUESTION_SPLIT_RE = re.compile(r"\?|;|\b(?:and|or|but)\b", re.IGNORECASE)


def extract_linguistic_features(text: str, tagger: Optional[PosTagger] = None) -> np.ndarray:
    """The 19 linguistic features, in LINGUISTIC_FEATURE_NAMES order."""
    tagger = tagger or RuleLexiconTagger()
    tokens = _TOKEN_RE.findall(text)
    labels = tagger.tag(tokens)
    pos_counts = {pos: labels.count(pos) for pos in ("noun", "verb", "adj", "adv", "pron", "prep", "conj", "det")}
    word_count = len(text.split())
    char_count = len(text)
    avg_word_length = (sum(len(t) for t in tokens) / len(tokens)) if tokens else 0.0
    sub_questions = sum(1 for part in _SUB_QUESTION_SPLIT_RE.split(text) if part and part.strip())
    digit_tokens = sum(1 for t in tokens if any(ch.isdigit() for ch in t))
    wh_count = sum(1 for t in tokens if t.lower() in _WH_WORDS)
    values = [
        pos_counts["noun"],
        pos_counts["verb"],
        pos_counts["adj"],
        pos_counts["adv"],
        pos_counts["pron"],
        pos_counts["prep"],
        pos_counts["conj"],
        pos_counts["det"],
        text.count("?"),
        text.count(","),
        text.count(";"),
        text.count(":"),
        text.count('"') + text.count("'") + text.count("“") + text.count("”"),
        wh_count,
        word_count,
        char_count,
        avg_word_length,
        sub_questions,
        digit_tokens,
    ]
    return np.asarray(values, dtype=np.float64)


class HashingEmbedder:
    """Seeded feature-hashing projection into EMBEDDING_DIM dims.

    A stand-in for a trained sentence encoder that keeps the LR path fully
    testable offline; deterministic across processes (sha256-based).
    """

    def __init__(self, seed: int = 7, dim: int = EMBEDDING_DIM):
        self._seed = seed
        self._dim = dim

    def embed(self, text: str) -> np.ndarray:
        vec = np.zeros(self._dim, dtype=np.float64)
        for token in _TOKEN_RE.findall(text.lower()):
            digest = hashlib.sha256(f"{self._seed}:{token}".encode("utf-8")).digest()
            index = int.from_bytes(digest[:4], "big") % self._dim
            sign = 1.0 if digest[4] % 2 == 0 else -1.0
            vec[index] += sign
        norm = np.linalg.norm(vec)
        if norm > 0:
            vec /= norm
        return vec


class EmbeddingProvider(Protocol):
    def embed(self, text: str) -> np.ndarray: ...


def featurize(
    text: str,
    embedder: Optional[EmbeddingProvider] = None,
    tagger: Optional[PosTagger] = None,
) -> FeatureVector:
    embedder = embedder or HashingEmbedder()
    values = np.concatenate([embedder.embed(text), extract_linguistic_features(text, tagger)])
    return FeatureVector(values=values)


# ---------------------------------------------------------------------------
# Logistic regression
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LogRegModel:
    weights: np.ndarray
    bias: float
    threshold: float = 0.5
    feature_version: str = FEATURE_LIST_VERSION

    def __post_init__(self):
        if not np.all(np.isfinite(self.weights)) or not math.isfinite(self.bias):
            raise ValueError("model parameters must be finite")
        if not (0.0 < self.threshold < 1.0):
            raise ValueError("threshold must lie in (0, 1)")

    def to_json(self) -> str:
        return json.dumps(
            {
                "weights": self.weights.tolist(),
                "bias": self.bias,
                "threshold": self.threshold,
                "feature_version": self.feature_version,
            }
        )

    @classmethod
    def from_json(cls, payload: str) -> "LogRegModel":
        data = json.loads(payload)
        return cls(
            weights=np.asarray(data["weights"], dtype=np.float64),
            bias=float(data["bias"]),
            threshold=float(data.get("threshold", 0.5)),
            feature_version=data.get("feature_version", FEATURE_LIST_VERSION),
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json(), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "LogRegModel":
        return cls.from_json(Path(path).read_text(encoding="utf-8"))


def _sigmoid(z: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def lr_predict(model: LogRegModel, features: FeatureVector) -> RoutingDecision:
    if model.weights.shape != features.values.shape:
        raise ValueError(
            f"dimension mismatch: model has {model.weights.shape[0]} weights, "
            f"features have {features.values.shape[0]}"
        )
    p = float(_sigmoid(np.asarray(model.weights @ features.values + model.bias)))
    label = RouteLabel.COMPLEX if p >= model.threshold else RouteLabel.SIMPLE
    return RoutingDecision(label, RouteMethod.LOGREG, confidence=p, raw_evidence=f"p={p:.6f}")


def logistic_loss(
    weights: np.ndarray,
    bias: float,
    X: np.ndarray,
    y: np.ndarray,
    l2: float = 0.0,
) -> float:
    """L2-regularized mean negative log-likelihood (bias unregularized)."""
    z = X @ weights + bias
    # log(1+exp(-z)) computed stably for both signs of z
    loss = np.mean(np.logaddexp(0.0, -z) * y + np.logaddexp(0.0, z) * (1.0 - y))
    return float(loss + 0.5 * l2 * float(weights @ weights))


def logistic_gradient(
    weights: np.ndarray,
    bias: float,
    X: np.ndarray,
    y: np.ndarray,
    l2: float = 0.0,
) -> tuple[np.ndarray, float]:
    p = _sigmoid(X @ weights + bias)
    err = p - y
    grad_w = X.T @ err / len(y) + l2 * weights
    grad_b = float(np.mean(err))
    return grad_w, grad_b


def lr_train(
    data: Sequence[tuple[FeatureVector, bool]],
    learning_rate: float = 0.5,
    epochs: int = 500,
    l2: float = 0.0,
    seed: int = 0,
    loss_history: Optional[list[float]] = None,
) -> LogRegModel:
    """Full-batch gradient descent with backtracking line search.

    The backtracking step guarantees the training loss is non-increasing
    per epoch. Deterministic given the seed (which only drives the tiny
    random init). Pass ``loss_history`` to capture the per-epoch loss.
    """
    if len(data) < 2:
        raise ValueError("need at least 2 training examples")
    labels = {bool(label) for _, label in data}
    if len(labels) < 2:
        raise ValueError("degenerate data: both labels must be present")

    X = np.stack([fv.values for fv, _ in data])
    y = np.asarray([1.0 if label else 0.0 for _, label in data])
    rng = np.random.default_rng(seed)
    weights = rng.normal(0.0, 0.01, size=X.shape[1])
    bias = 0.0

    loss = logistic_loss(weights, bias, X, y, l2)
    if loss_history is not None:
        loss_history.append(loss)
    for _ in range(epochs):
        grad_w, grad_b = logistic_gradient(weights, bias, X, y, l2)
        step = learning_rate
        while step > 1e-12:
            new_w = weights - step * grad_w
            new_b = bias - step * grad_b
            new_loss = logistic_loss(new_w, new_b, X, y, l2)
            if new_loss <= loss:
                weights, bias, loss = new_w, new_b, new_loss
                break
            step /= 2.0
        else:
            break
        if loss_history is not None:
            loss_history.append(loss)
    return LogRegModel(weights=weights, bias=bias)


def evaluate(
    model: LogRegModel,
    data: Iterable[tuple[FeatureVector, bool]],
) -> dict[str, float]:
    """Accuracy/precision/recall with Complex as the positive class."""
    tp = fp = tn = fn = 0
    for features, label in data:
        predicted = lr_predict(model, features).label is RouteLabel.COMPLEX
        if predicted and label:
            tp += 1
        elif predicted and not label:
            fp += 1
        elif not predicted and not label:
            tn += 1
        else:
            fn += 1
    total = tp + fp + tn + fn
    return {
        "accuracy": (tp + tn) / total if total else 0.0,
        "precision": tp / (tp + fp) if tp + fp else 0.0,
        "recall": tp / (tp + fn) if tp + fn else 0.0,
        "count": float(total),
    }
