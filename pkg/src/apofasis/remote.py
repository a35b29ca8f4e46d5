"""Remote-model adapters behind the local ports, with a replay cache.

The replay cache keys responses by (model, prompt hash); runs replayed from
cache are byte-reproducible and never touch the network. Credentials come
from an environment variable and are never logged.
"""

from __future__ import annotations

import hashlib
import json
import os
import threading
from pathlib import Path
from typing import Iterator, Protocol, Sequence

import requests

from apofasis.boiler import Segmentation, tokenize_words
from apofasis.rag import MAX_OUTPUT_TOKENS, StructuredAnswer

API_KEY_ENV = "APOFASIS_GENERATOR_KEY"
DEFAULT_REMOTE_BASE = "https://api.openai.com/v1"

# Versioned prompt templates. Bump the suffix when the wording changes.
SEGMENT_PROMPT_V1 = (
    "Παρακάτω δίνεται ένα διοικητικό έγγραφο και {n} γειτονικά έγγραφα.\n"
    "Χώρισε το έγγραφο σε διαδοχικά τμήματα λέξεων με ετικέτα BP (επαναλαμβανόμενο "
    "πρότυπο) ή CT (κύριο περιεχόμενο). Απάντησε ΜΟΝΟ με JSON της μορφής\n"
    '{{"spans": [{{"label": "BP", "start": 0, "end": 12}}, ...]}} όπου start/end '
    "είναι δείκτες λέξεων που καλύπτουν όλο το έγγραφο.\n\n"
    "ΕΓΓΡΑΦΟ:\n{document}\n\nΓΕΙΤΟΝΕΣ:\n{neighbors}"
)
CLASSIFY_PROMPT_V1 = (
    "Παρακάτω δίνεται ένα διοικητικό έγγραφο και {n} γειτονικά έγγραφα.\n"
    "Εκτίμησε την πιθανότητα (0 έως 1) το έγγραφο να προέρχεται από "
    "επαναχρησιμοποιούμενο διοικητικό πρότυπο. Απάντησε ΜΟΝΟ με τον αριθμό.\n\n"
    "ΕΓΓΡΑΦΟ:\n{document}\n\nΓΕΙΤΟΝΕΣ:\n{neighbors}"
)


class RemoteError(RuntimeError):
    """The remote endpoint failed or returned a non-success status."""


class UnparseableResponse(ValueError):
    """Remote output did not parse; the raw response is retained."""

    def __init__(self, message: str, raw: str):
        super().__init__(message)
        self.raw = raw


class ChatCompletionPort(Protocol):
    def complete(self, prompt: str, model: str) -> str: ...


class ReplayCache:
    """Directory of cached completions keyed by sha256(model, prompt).

    Safe for concurrent readers; writes are serialized and atomic.
    """

    def __init__(self, root: Path | str):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self._write_lock = threading.Lock()

    @staticmethod
    def key(model: str, prompt: str) -> str:
        return hashlib.sha256(f"{model}\x00{prompt}".encode("utf-8")).hexdigest()

    def _path(self, key: str) -> Path:
        return self.root / f"{key}.json"

    def get(self, model: str, prompt: str) -> str | None:
        path = self._path(self.key(model, prompt))
        if not path.is_file():
            return None
        return json.loads(path.read_text(encoding="utf-8"))["response"]

    def put(self, model: str, prompt: str, response: str) -> None:
        path = self._path(self.key(model, prompt))
        payload = json.dumps(
            {"model": model, "prompt": prompt, "response": response}, ensure_ascii=False
        )
        with self._write_lock:
            tmp = path.with_name(path.name + ".tmp")
            tmp.write_text(payload, encoding="utf-8")
            os.replace(tmp, path)


class RemoteChatClient:
    """Minimal chat-completions client (OpenAI-compatible endpoint)."""

    def __init__(
        self,
        base_url: str = DEFAULT_REMOTE_BASE,
        api_key_env: str = API_KEY_ENV,
        session: requests.Session | None = None,
        timeout: float = 120.0,
        max_output_tokens: int = MAX_OUTPUT_TOKENS,
    ):
        self.base_url = base_url.rstrip("/")
        self._api_key = os.environ.get(api_key_env, "")
        self.session = session or requests.Session()
        self.timeout = timeout
        self.max_output_tokens = max_output_tokens

    def complete(self, prompt: str, model: str) -> str:
        headers = {"Content-Type": "application/json"}
        if self._api_key:
            headers["Authorization"] = f"Bearer {self._api_key}"
        try:
            response = self.session.post(
                f"{self.base_url}/chat/completions",
                json={
                    "model": model,
                    "messages": [{"role": "user", "content": prompt}],
                    "max_tokens": self.max_output_tokens,
                },
                headers=headers,
                timeout=self.timeout,
            )
        except requests.RequestException as exc:
            raise RemoteError(f"request failed: {exc}") from exc
        if response.status_code != 200:
            raise RemoteError(f"remote returned HTTP {response.status_code}")
        try:
            return response.json()["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise RemoteError(f"malformed completion payload: {exc}") from exc


class CachedCompletion:
    """Wrap a chat client with the replay cache."""

    def __init__(self, client: ChatCompletionPort, cache: ReplayCache | None):
        self.client = client
        self.cache = cache

    def complete(self, prompt: str, model: str) -> str:
        if self.cache is not None:
            cached = self.cache.get(model, prompt)
            if cached is not None:
                return cached
        response = self.client.complete(prompt, model)
        if self.cache is not None:
            self.cache.put(model, prompt, response)
        return response


def _render_neighbors(neighbors: Sequence[str]) -> str:
    return "\n---\n".join(neighbors)


class LLMSegmenter:
    """SegmenterPort adapter: remote model output parsed into a Segmentation."""

    def __init__(self, client: ChatCompletionPort, model: str,
                 cache: ReplayCache | None = None):
        self._completion = CachedCompletion(client, cache)
        self.model = model
        self.name = f"llm-segmenter({model})"

    def segment(self, text: str, neighbors: Sequence[str], ada: str = "") -> Segmentation:
        prompt = SEGMENT_PROMPT_V1.format(
            n=len(neighbors), document=text, neighbors=_render_neighbors(neighbors)
        )
        raw = self._completion.complete(prompt, self.model)
        return parse_segmentation_response(raw, ada=ada, word_count=len(tokenize_words(text)))


class LLMClassifier:
    """ClassifierPort adapter: remote model output parsed into a likelihood."""

    def __init__(self, client: ChatCompletionPort, model: str,
                 cache: ReplayCache | None = None):
        self._completion = CachedCompletion(client, cache)
        self.model = model
        self.name = f"llm-classifier({model})"

    def classify(self, text: str, neighbors: Sequence[str]) -> float:
        prompt = CLASSIFY_PROMPT_V1.format(
            n=len(neighbors), document=text, neighbors=_render_neighbors(neighbors)
        )
        raw = self._completion.complete(prompt, self.model)
        return parse_likelihood_response(raw)


def parse_segmentation_response(raw: str, ada: str = "",
                                word_count: int | None = None) -> Segmentation:
    """Parse a spans JSON payload; any invariant violation is UnparseableResponse."""
    try:
        doc = json.loads(_extract_json(raw))
        seg = Segmentation.from_json({"ada": ada, "spans": doc["spans"]})
        if word_count is not None:
            seg.validate(word_count)
    except UnparseableResponse:
        raise
    except Exception as exc:
        raise UnparseableResponse(f"bad segmentation response: {exc}", raw) from exc
    return seg


def parse_likelihood_response(raw: str) -> float:
    try:
        value = float(raw.strip().rstrip("."))
    except ValueError as exc:
        raise UnparseableResponse(f"bad likelihood response: {exc}", raw) from exc
    if not 0.0 <= value <= 1.0:
        raise UnparseableResponse(f"likelihood {value} outside [0, 1]", raw)
    return value


def _extract_json(raw: str) -> str:
    """Tolerate code fences and leading prose around a JSON object."""
    start = raw.find("{")
    end = raw.rfind("}")
    if start == -1 or end == -1 or end <= start:
        raise UnparseableResponse("no JSON object in response", raw)
    return raw[start : end + 1]


class RemoteGenerator:
    """GeneratorPort adapter over the chat-completions client."""

    def __init__(self, client: ChatCompletionPort, model: str,
                 cache: ReplayCache | None = None,
                 max_output_tokens: int = MAX_OUTPUT_TOKENS):
        self._completion = CachedCompletion(client, cache)
        self.model = model
        self.max_output_tokens = max_output_tokens

    def generate(self, prompt: str) -> Iterator[str]:
        yield self._completion.complete(prompt, self.model)

    def generate_structured(self, prompt: str) -> StructuredAnswer:
        schema_prompt = (
            f"{prompt}\n\nΑπάντησε ΜΟΝΟ με JSON: "
            '{"concise_answer": "...", "detailed_explanation": "...", "citations": ["ΑΔΑ", ...]}'
        )
        raw = self._completion.complete(schema_prompt, self.model)
        try:
            doc = json.loads(_extract_json(raw))
            return StructuredAnswer(
                concise_answer=str(doc["concise_answer"]),
                detailed_explanation=str(doc["detailed_explanation"]),
                citations=tuple(str(c) for c in doc.get("citations", [])),
            )
        except UnparseableResponse:
            raise
        except Exception as exc:
            raise UnparseableResponse(f"bad structured answer: {exc}", raw) from exc
