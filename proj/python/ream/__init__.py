"""Python access to the reference-set reliability toolkit."""

import json

from ._ream import (
    Model,
    ParseError,
    TransportError,
    corpus_bleu,
    kendall,
    pearson,
    sentence_bleu,
    tokenize,
)
from . import _ream

__all__ = [
    "Model",
    "ParseError",
    "Service",
    "TransportError",
    "auto_augment",
    "corpus_bleu",
    "kendall",
    "pearson",
    "sentence_bleu",
    "synth",
    "tokenize",
]


def synth(**kwargs):
    """Generates a synthetic corpus and returns its samples as dicts."""
    text = _ream.synth_jsonl(**kwargs)
    return [json.loads(line) for line in text.splitlines() if line]


def auto_augment(query, init_set, candidates, scorer, seed=0):
    """Greedy augmentation with a Python scorer(query, refs) -> float."""
    return json.loads(_ream.auto_augment_json(query, list(init_set), list(candidates), scorer, seed))


class Service:
    """In-process HTTP API; ``request`` routes without sockets."""

    def __init__(self, model, max_attempts=None):
        if max_attempts is None:
            self._svc = _ream.Service(model)
        else:
            self._svc = _ream.Service(model, max_attempts)

    def request(self, method, path, body=None):
        status, payload = self._svc.handle(method, path, "" if body is None else json.dumps(body))
        return status, json.loads(payload)

    def start(self, host="127.0.0.1", port=0):
        return self._svc.start(host, port)

    def stop(self):
        self._svc.stop()
