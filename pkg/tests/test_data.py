"""Example collation and the JSON-lines dataset format."""

import numpy as np
import pytest

from akgp.data import DataError, Example, collate, read_examples, write_examples


def sample_examples():
    return [
        Example(np.array([0.1, 0.2]), [0, 1, 1], label=0, gold_node="a"),
        Example(np.array([-0.5, 0.25]), [2], label=1, gold_node=None),
    ]


def test_collate_bow_is_mean_weights():
    batch = collate(sample_examples(), vocab_size=3, node_index={"a": 7})
    assert np.allclose(batch.token_bow[0], [1 / 3, 2 / 3, 0.0])
    assert np.allclose(batch.token_bow[1], [0.0, 0.0, 1.0])
    assert batch.gold_indices.tolist() == [7, -1]
    assert batch.labels.tolist() == [0, 1]


def test_collate_rejects_out_of_range_token():
    with pytest.raises(DataError):
        collate(sample_examples(), vocab_size=2)


def test_collate_rejects_unknown_gold_node():
    with pytest.raises(DataError):
        collate(sample_examples(), vocab_size=3, node_index={"b": 0})


def test_example_validation():
    with pytest.raises(DataError):
        Example(np.array([1.0]), [], label=0)
    with pytest.raises(DataError):
        Example(np.array([[1.0]]), [0], label=0)


def test_jsonl_round_trip(tmp_path):
    path = tmp_path / "data.jsonl"
    examples = sample_examples()
    write_examples(path, examples)
    loaded = read_examples(path)
    assert len(loaded) == 2
    for orig, back in zip(examples, loaded):
        assert np.array_equal(orig.image_features, back.image_features)
        assert orig.token_ids == back.token_ids
        assert orig.label == back.label
        assert orig.gold_node == back.gold_node


def test_read_rejects_bad_json(tmp_path):
    path = tmp_path / "broken.jsonl"
    path.write_text('{"image_features": [1.0], "token_ids": [0], "label": 0}\nnot json\n')
    with pytest.raises(DataError, match="line 2"):
        read_examples(path)


def test_read_rejects_missing_field(tmp_path):
    path = tmp_path / "missing.jsonl"
    path.write_text('{"token_ids": [0], "label": 0}\n')
    with pytest.raises(DataError):
        read_examples(path)


def test_read_rejects_empty_file(tmp_path):
    path = tmp_path / "empty.jsonl"
    path.write_text("")
    with pytest.raises(DataError):
        read_examples(path)
