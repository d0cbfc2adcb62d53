"""Training examples and their JSON-lines file format.

One example pairs a synthetic image feature vector with a token sequence, a
class label, and optionally the id of the knowledge node that grounds it.
Batches carry a precomputed normalized bag-of-tokens matrix so the text
encoder can run as a single matrix product.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np


class DataError(ValueError):
    """A dataset file or example is malformed."""


@dataclass
class Example:
    image_features: np.ndarray
    token_ids: list[int]
    label: int
    gold_node: str | None = None

    def __post_init__(self):
        self.image_features = np.asarray(self.image_features, dtype=np.float64)
        if self.image_features.ndim != 1:
            raise DataError("image_features must be a flat vector")
        if not self.token_ids:
            raise DataError("token sequence must be non-empty")
        if self.label < 0:
            raise DataError("label must be a non-negative class id")


@dataclass
class Batch:
    """Collated examples ready for the batched pipeline."""

    images: np.ndarray        # (B, d_i)
    token_bow: np.ndarray     # (B, V), rows are mean-of-tokens weights
    labels: np.ndarray        # (B,) int64
    gold_indices: np.ndarray  # (B,) int64, -1 where no gold node
    examples: list[Example] = field(default_factory=list)

    def __len__(self) -> int:
        return self.labels.shape[0]


def collate(examples: list[Example], vocab_size: int,
            node_index: dict[str, int] | None = None) -> Batch:
    """Stack examples into a batch; token ids become normalized counts."""
    if not examples:
        raise DataError("cannot collate an empty example list")
    bow = np.zeros((len(examples), vocab_size))
    gold = np.full(len(examples), -1, dtype=np.int64)
    for row, ex in enumerate(examples):
        for tok in ex.token_ids:
            if tok < 0 or tok >= vocab_size:
                raise DataError(f"token id {tok} out of range for vocab {vocab_size}")
            bow[row, tok] += 1.0
        bow[row] /= len(ex.token_ids)
        if ex.gold_node is not None and node_index is not None:
            idx = node_index.get(ex.gold_node)
            if idx is None:
                raise DataError(f"gold node {ex.gold_node!r} not present in the graph")
            gold[row] = idx
    return Batch(
        images=np.stack([ex.image_features for ex in examples]),
        token_bow=bow,
        labels=np.array([ex.label for ex in examples], dtype=np.int64),
        gold_indices=gold,
        examples=list(examples),
    )


def write_examples(path, examples: list[Example]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for ex in examples:
            record = {
                "image_features": ex.image_features.tolist(),
                "token_ids": list(ex.token_ids),
                "label": int(ex.label),
                "gold_node": ex.gold_node,
            }
            fh.write(json.dumps(record) + "\n")


def read_examples(path) -> list[Example]:
    examples = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}: line {line_no}: invalid JSON: {exc}") from exc
            try:
                examples.append(Example(
                    image_features=record["image_features"],
                    token_ids=[int(t) for t in record["token_ids"]],
                    label=int(record["label"]),
                    gold_node=record.get("gold_node"),
                ))
            except (KeyError, TypeError) as exc:
                raise DataError(f"{path}: line {line_no}: missing or bad field: {exc}") from exc
    if not examples:
        raise DataError(f"{path}: no examples found")
    return examples
