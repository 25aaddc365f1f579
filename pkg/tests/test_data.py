import json

import numpy as np
import pytest

from qmf.data import (
    PAD,
    UNK,
    DataConfig,
    SyntheticConfig,
    collate,
    generate_synthetic,
    load_dataset,
    load_embeddings,
    make_sentence,
    read_sidecar,
    with_labels,
    write_dataset,
)
from qmf.errors import DataError


def _record(split, n, vdim=2, adim=3, label=0.5, prefix="w"):
    return {
        "split": split,
        "words": [f"{prefix}{i}" for i in range(n)],
        "visual": [[float(i)] * vdim for i in range(n)],
        "acoustic": [[float(-i)] * adim for i in range(n)],
        "label": label,
    }


def _write(path, records, cfg="L=5\nvisual_dim=2\nacoustic_dim=3\nembedding_dim=4\n"):
    path.write_text("".join(json.dumps(r) + "\n" for r in records))
    if cfg is not None:
        path.with_suffix(".cfg").write_text(cfg)
    return path


def test_empty_file_is_rejected(tmp_path):
    p = tmp_path / "d.jsonl"
    p.write_text("")
    with pytest.raises(DataError):
        load_dataset(p)


def test_missing_file(tmp_path):
    with pytest.raises(DataError):
        load_dataset(tmp_path / "nope.jsonl")


def test_errors_name_the_line(tmp_path):
    p = tmp_path / "d.jsonl"
    p.write_text(json.dumps(_record("train", 2)) + "\n{not json\n")
    with pytest.raises(DataError, match=":2:"):
        load_dataset(p)


def test_misaligned_modalities(tmp_path):
    rec = _record("train", 3)
    rec["visual"] = rec["visual"][:2]
    with pytest.raises(DataError):
        load_dataset(_write(tmp_path / "d.jsonl", [rec]))


def test_truncation_and_padding(tmp_path):
    p = _write(tmp_path / "d.jsonl", [_record("train", 8), _record("valid", 3)])
    ds = load_dataset(p)
    long, short = ds.train[0], ds.valid[0]
    assert long.words.shape == (5,) and long.mask.all()
    np.testing.assert_array_equal(long.visual[:, 0], [0, 1, 2, 3, 4])  # head kept
    assert short.length == 3
    np.testing.assert_array_equal(short.words[3:], PAD)
    assert not short.visual[3:].any() and not short.acoustic[3:].any()


def test_defaults_truncate_to_fifty(tmp_path):
    assert DataConfig() == DataConfig(L=50, visual_dim=35, acoustic_dim=74, embedding_dim=300)
    ds = load_dataset(_write(tmp_path / "d.jsonl", [_record("train", 60, 35, 74)], cfg=None))
    s = ds.train[0]
    assert s.words.shape == (50,) and s.length == 50


def test_sidecar_rejects_unknown_keys(tmp_path):
    p = tmp_path / "x.cfg"
    p.write_text("L=3\ncolour=blue\n")
    with pytest.raises(DataError):
        read_sidecar(p)


def test_label_range_checked():
    with pytest.raises(DataError):
        make_sentence([2], np.ones((1, 1)), np.ones((1, 1)), 3.5, 3, 1, 1)


def test_round_trip(tmp_path):
    ds = generate_synthetic(30, seed=3)
    p = tmp_path / "syn.jsonl"
    write_dataset(ds, p)
    back = load_dataset(p)
    assert back.config == ds.config
    assert back.lexicon == ds.lexicon
    for name in ("train", "valid", "test"):
        assert len(back[name]) == len(ds[name])
        for a, b in zip(back[name], ds[name]):
            words_a = [back.vocab.itos[i] for i in a.words[: a.length]]
            words_b = [ds.vocab.itos[i] for i in b.words[: b.length]]
            assert words_a == words_b
            np.testing.assert_array_equal(a.visual, b.visual)
            assert a.label == b.label


def test_vocabulary_reserves_pad_and_unk(tmp_path):
    ds = load_dataset(_write(tmp_path / "d.jsonl", [_record("train", 2)]))
    assert ds.vocab.itos[PAD] == "<pad>" and ds.vocab.itos[UNK] == "<unk>"
    assert ds.vocab.encode(["w0", "zzz"]) == [2, UNK]


def test_embeddings_file(tmp_path):
    ds = load_dataset(_write(tmp_path / "d.jsonl", [_record("train", 2)]))
    emb = tmp_path / "vec.txt"
    emb.write_text("w1 1 2 3 4\nother 9 9 9 9\n")
    table = load_embeddings(emb, ds.vocab, 4, np.random.default_rng(0))
    np.testing.assert_array_equal(table[ds.vocab.stoi["w1"]], [1, 2, 3, 4])
    np.testing.assert_array_equal(table[PAD], 0)
    assert np.all(np.abs(table[ds.vocab.stoi["w0"]]) <= 0.05)
    emb.write_text("w1 1 2\n")
    with pytest.raises(DataError):
        load_embeddings(emb, ds.vocab, 4, np.random.default_rng(0))


def test_collate_shapes():
    ds = generate_synthetic(10, seed=0)
    b = collate(ds.train[:4])
    cfg = ds.config
    assert b.ids.shape == (4, cfg.L)
    assert b.visual.shape == (4, cfg.L, cfg.visual_dim)
    assert b.labels.shape == (4,)
    with pytest.raises(DataError):
        collate([])


def test_synthetic_split_sizes_and_determinism():
    a, b = generate_synthetic(500, seed=7), generate_synthetic(500, seed=7)
    assert (len(a.train), len(a.valid), len(a.test)) == (350, 75, 75)
    assert all(x == y for x, y in zip(a.test, b.test))


def test_synthetic_text_dominates_labels():
    ds, z = generate_synthetic(1000, seed=1, return_latents=True)
    labels = np.array([s.label for split in ("train", "valid", "test") for s in ds[split]])
    corr = [abs(np.corrcoef(z[:, m], labels)[0, 1]) for m in range(3)]
    assert corr[0] > corr[1] > corr[2]
    assert np.all(np.abs(labels) <= 3)


def test_synthetic_config_is_respected():
    ds = generate_synthetic(20, seed=0, cfg=SyntheticConfig(L=7, visual_dim=3, acoustic_dim=2))
    s = ds.train[0]
    assert s.words.shape == (7,) and s.visual.shape == (7, 3) and s.acoustic.shape == (7, 2)


def test_with_labels():
    ds = generate_synthetic(10, seed=0)
    out = with_labels(ds.train[:2], [1.0, -1.0])
    assert [s.label for s in out] == [1.0, -1.0]
    np.testing.assert_array_equal(out[0].words, ds.train[0].words)
