"""Dataset ingestion, padding, splits and synthetic data.

On-disk format is JSON-lines, one sentence per line::

    {"split": "train", "words": ["a", "b"], "visual": [[...], [...]],
     "acoustic": [[...], [...]], "label": 1.2}

Feature widths and the padded length live in a sidecar ``<stem>.cfg`` file of
``key=value`` lines (``L``, ``visual_dim``, ``acoustic_dim``, ``embedding_dim``).
An optional ``<stem>.lexicon`` (``word<TAB>+1|-1``) is picked up the same way.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .errors import DataError

log = logging.getLogger(__name__)

PAD = 0
UNK = 1
SPLITS = ("train", "valid", "test")


@dataclass
class DataConfig:
    L: int = 50
    visual_dim: int = 35
    acoustic_dim: int = 74
    embedding_dim: int = 300


def read_kv(path) -> dict:
    """Parse a flat ``key=value`` text file (``#`` comments allowed)."""
    out = {}
    for n, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise DataError(f"{path}:{n}: expected key=value")
        k, v = line.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def read_sidecar(path) -> DataConfig:
    kv = read_kv(path)
    known = {f.name for f in fields(DataConfig)}
    unknown = set(kv) - known
    if unknown:
        raise DataError(f"{path}: unknown keys {sorted(unknown)}")
    return DataConfig(**{k: int(v) for k, v in kv.items()})


def write_sidecar(cfg: DataConfig, path) -> None:
    Path(path).write_text("".join(f"{f.name}={getattr(cfg, f.name)}\n" for f in fields(cfg)))


def sidecar_path(data_path) -> Path:
    return Path(data_path).with_suffix(".cfg")


def lexicon_path(data_path) -> Path:
    return Path(data_path).with_suffix(".lexicon")


class Vocabulary:
    """Bijective word/id map with PAD at 0 and UNK at 1."""

    def __init__(self, words=()):
        self.itos = ["<pad>", "<unk>"]
        self.stoi = {"<pad>": PAD, "<unk>": UNK}
        for w in words:
            self.add(w)

    def add(self, word: str) -> int:
        if word not in self.stoi:
            self.stoi[word] = len(self.itos)
            self.itos.append(word)
        return self.stoi[word]

    def encode(self, tokens) -> list[int]:
        return [self.stoi.get(t, UNK) for t in tokens]

    def __len__(self):
        return len(self.itos)

    def __contains__(self, word):
        return word in self.stoi

    def __eq__(self, other):
        return isinstance(other, Vocabulary) and self.itos == other.itos


@dataclass
class SentimentLexicon:
    polarity: dict = field(default_factory=dict)

    def __call__(self, word: str) -> int:
        return self.polarity.get(word, 0)


@dataclass(eq=False)
class MultimodalSentence:
    words: np.ndarray  # (L,) int ids, PAD=0 beyond the sentence
    visual: np.ndarray  # (L, visual_dim)
    acoustic: np.ndarray  # (L, acoustic_dim)
    mask: np.ndarray  # (L,) bool
    label: float

    def __post_init__(self):
        self.words = np.asarray(self.words, dtype=np.int64)
        self.visual = np.asarray(self.visual, dtype=np.float64)
        self.acoustic = np.asarray(self.acoustic, dtype=np.float64)
        self.mask = np.asarray(self.mask, dtype=bool)
        self.label = float(self.label)
        L = self.words.shape[0]
        if self.visual.shape[0] != L or self.acoustic.shape[0] != L or self.mask.shape != (L,):
            raise DataError("modalities are not aligned to the same length")
        if not self.mask.any():
            raise DataError("sentence has no real words")
        pad = ~self.mask
        if np.any(self.words[pad] != PAD) or np.any(self.visual[pad]) or np.any(self.acoustic[pad]):
            raise DataError("padded positions must carry PAD ids and zero features")
        if not -3.0 <= self.label <= 3.0:
            raise DataError(f"label {self.label} outside [-3, 3]")

    @property
    def length(self) -> int:
        return int(self.mask.sum())

    def __eq__(self, other):
        return (
            isinstance(other, MultimodalSentence)
            and np.array_equal(self.words, other.words)
            and np.array_equal(self.visual, other.visual)
            and np.array_equal(self.acoustic, other.acoustic)
            and np.array_equal(self.mask, other.mask)
            and self.label == other.label
        )


@dataclass
class DatasetSplits:
    train: list
    valid: list
    test: list
    vocab: Vocabulary
    config: DataConfig
    lexicon: SentimentLexicon = field(default_factory=SentimentLexicon)

    def __getitem__(self, name: str) -> list:
        if name not in SPLITS:
            raise KeyError(name)
        return getattr(self, name)


@dataclass
class Batch:
    ids: np.ndarray  # (B, L)
    visual: np.ndarray  # (B, L, v)
    acoustic: np.ndarray  # (B, L, a)
    mask: np.ndarray  # (B, L)
    labels: np.ndarray  # (B,)

    def __len__(self):
        return self.ids.shape[0]


def collate(sentences) -> Batch:
    sentences = list(sentences)
    if not sentences:
        raise DataError("empty batch")
    return Batch(
        ids=np.stack([s.words for s in sentences]),
        visual=np.stack([s.visual for s in sentences]),
        acoustic=np.stack([s.acoustic for s in sentences]),
        mask=np.stack([s.mask for s in sentences]),
        labels=np.array([s.label for s in sentences]),
    )


def make_sentence(ids, visual, acoustic, label, L: int, visual_dim: int, acoustic_dim: int):
    """Truncate to the first ``L`` words or zero-pad at the tail."""
    n = min(len(ids), L)
    if n == 0:
        raise DataError("sentence has no words")
    visual = np.asarray(visual, dtype=np.float64).reshape(len(ids), -1)
    acoustic = np.asarray(acoustic, dtype=np.float64).reshape(len(ids), -1)
    if visual.shape[1] != visual_dim:
        raise DataError(f"visual width {visual.shape[1]} != {visual_dim}")
    if acoustic.shape[1] != acoustic_dim:
        raise DataError(f"acoustic width {acoustic.shape[1]} != {acoustic_dim}")
    w = np.zeros(L, dtype=np.int64)
    v = np.zeros((L, visual_dim))
    a = np.zeros((L, acoustic_dim))
    m = np.zeros(L, dtype=bool)
    w[:n] = ids[:n]
    v[:n] = visual[:n]
    a[:n] = acoustic[:n]
    m[:n] = True
    return MultimodalSentence(w, v, a, m, label)


def load_dataset(path, config: DataConfig | None = None) -> DatasetSplits:
    path = Path(path)
    if not path.exists():
        raise DataError(f"{path}: no such file")
    if config is None:
        side = sidecar_path(path)
        config = read_sidecar(side) if side.exists() else DataConfig()
    records = []
    vocab = Vocabulary()
    for n, line in enumerate(path.read_text().splitlines(), 1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
            split = rec["split"]
            words = [str(w) for w in rec["words"]]
            visual, acoustic, label = rec["visual"], rec["acoustic"], float(rec["label"])
        except (ValueError, KeyError, TypeError) as exc:
            raise DataError(f"{path}:{n}: malformed record ({exc})") from exc
        if split not in SPLITS:
            raise DataError(f"{path}:{n}: unknown split {split!r}")
        if not (len(words) == len(visual) == len(acoustic)):
            raise DataError(f"{path}:{n}: modalities have different lengths")
        for w in words:
            vocab.add(w)
        records.append((n, split, words, visual, acoustic, label))
    if not records:
        raise DataError(f"{path}: no records")
    out = {s: [] for s in SPLITS}
    for n, split, words, visual, acoustic, label in records:
        try:
            sent = make_sentence(
                vocab.encode(words), visual, acoustic, label,
                config.L, config.visual_dim, config.acoustic_dim,
            )
        except (DataError, ValueError) as exc:
            raise DataError(f"{path}:{n}: {exc}") from exc
        out[split].append(sent)
    lex_path = lexicon_path(path)
    lexicon = load_lexicon(lex_path) if lex_path.exists() else SentimentLexicon()
    return DatasetSplits(out["train"], out["valid"], out["test"], vocab, config, lexicon)


def write_dataset(splits: DatasetSplits, path) -> None:
    path = Path(path)
    with path.open("w") as fh:
        for name in SPLITS:
            for s in splits[name]:
                n = s.length
                rec = {
                    "split": name,
                    "words": [splits.vocab.itos[i] for i in s.words[:n]],
                    "visual": s.visual[:n].tolist(),
                    "acoustic": s.acoustic[:n].tolist(),
                    "label": s.label,
                }
                fh.write(json.dumps(rec) + "\n")
    write_sidecar(splits.config, sidecar_path(path))
    if splits.lexicon.polarity:
        write_lexicon(splits.lexicon, lexicon_path(path))


# -- external resources ---------------------------------------------------------


def random_embeddings(vocab: Vocabulary, dim: int, rng: np.random.Generator) -> np.ndarray:
    table = rng.uniform(-0.05, 0.05, size=(len(vocab), dim))
    table[PAD] = 0.0
    return table


def load_embeddings(path, vocab: Vocabulary, dim: int, rng: np.random.Generator) -> np.ndarray:
    """Rows for vocabulary words from a whitespace-separated text file."""
    table = random_embeddings(vocab, dim, rng)
    with open(path) as fh:
        for n, line in enumerate(fh, 1):
            parts = line.rstrip().split()
            if not parts:
                continue
            word, values = parts[0], parts[1:]
            if len(values) != dim:
                raise DataError(f"{path}:{n}: embedding width {len(values)} != {dim}")
            if word in vocab and vocab.stoi[word] != PAD:
                table[vocab.stoi[word]] = np.array(values, dtype=np.float64)
    return table


def load_lexicon(path) -> SentimentLexicon:
    path = Path(path) if path is not None else None
    if path is None or not path.exists():
        log.warning("no sentiment lexicon at %s; every word is neutral", path)
        return SentimentLexicon()
    pol = {}
    for n, line in enumerate(path.read_text().splitlines(), 1):
        if not line.strip():
            continue
        try:
            word, sign = line.split("\t")
            value = int(sign.strip())
        except ValueError as exc:
            raise DataError(f"{path}:{n}: expected 'word<TAB>+1|-1'") from exc
        if value not in (1, -1):
            raise DataError(f"{path}:{n}: polarity must be +1 or -1")
        pol[word] = value
    return SentimentLexicon(pol)


def write_lexicon(lex: SentimentLexicon, path) -> None:
    Path(path).write_text("".join(f"{w}\t{p:+d}\n" for w, p in lex.polarity.items() if p))


# -- synthetic data ---------------------------------------------------------------


@dataclass
class SyntheticConfig:
    L: int = 20
    min_len: int = 4
    visual_dim: int = 8
    acoustic_dim: int = 8
    embedding_dim: int = 16
    n_positive: int = 20
    n_negative: int = 20
    n_neutral: int = 40
    sentiment_rate: float = 0.7
    text_weight: float = 2.5
    visual_weight: float = 0.4
    acoustic_weight: float = 0.2
    feature_noise: float = 0.5
    noise: float = 0.1


def synthetic_vocabulary(cfg: SyntheticConfig) -> tuple[Vocabulary, SentimentLexicon]:
    pos = [f"pos{i}" for i in range(cfg.n_positive)]
    neg = [f"neg{i}" for i in range(cfg.n_negative)]
    neu = [f"neu{i}" for i in range(cfg.n_neutral)]
    lex = SentimentLexicon({**{w: 1 for w in pos}, **{w: -1 for w in neg}})
    return Vocabulary(pos + neg + neu), lex


def generate_synthetic(n: int, seed: int, cfg: SyntheticConfig | None = None,
                       return_latents: bool = False):
    """Sentences whose label is a smooth function of planted per-modality latents.

    The textual latent is the mean polarity of a sentence's words; visual and
    acoustic latents are scalars written along a fixed direction of every word's
    feature vector. The label is ``3 tanh(wt*zt + wv*zv + wa*za)`` plus
    Gaussian noise, with the textual weight the largest.
    """
    cfg = cfg or SyntheticConfig()
    rng = np.random.default_rng(seed)
    vocab, lex = synthetic_vocabulary(cfg)
    pos_ids = [vocab.stoi[f"pos{i}"] for i in range(cfg.n_positive)]
    neg_ids = [vocab.stoi[f"neg{i}"] for i in range(cfg.n_negative)]
    neu_ids = [vocab.stoi[f"neu{i}"] for i in range(cfg.n_neutral)]
    dir_v = rng.normal(size=cfg.visual_dim)
    dir_v /= np.linalg.norm(dir_v)
    dir_a = rng.normal(size=cfg.acoustic_dim)
    dir_a /= np.linalg.norm(dir_a)

    sentences, latents = [], []
    for _ in range(n):
        length = int(rng.integers(cfg.min_len, cfg.L + 1))
        bias = rng.uniform(-1.0, 1.0)
        ids, polarity = [], []
        for _ in range(length):
            if rng.random() < cfg.sentiment_rate:
                positive = rng.random() < 0.5 * (1.0 + bias)
                ids.append(int(rng.choice(pos_ids if positive else neg_ids)))
                polarity.append(1.0 if positive else -1.0)
            else:
                ids.append(int(rng.choice(neu_ids)))
                polarity.append(0.0)
        zt = float(np.mean(polarity))
        zv, za = rng.uniform(-1.0, 1.0, size=2)
        visual = zv * dir_v + cfg.feature_noise * rng.normal(size=(length, cfg.visual_dim))
        acoustic = za * dir_a + cfg.feature_noise * rng.normal(size=(length, cfg.acoustic_dim))
        score = cfg.text_weight * zt + cfg.visual_weight * zv + cfg.acoustic_weight * za
        label = float(np.clip(3.0 * np.tanh(score) + cfg.noise * rng.normal(), -3.0, 3.0))
        sentences.append(make_sentence(ids, visual, acoustic, label, cfg.L, cfg.visual_dim, cfg.acoustic_dim))
        latents.append((zt, zv, za))

    n_train = int(round(0.7 * n))
    n_valid = int(round(0.15 * n))
    data_cfg = DataConfig(L=cfg.L, visual_dim=cfg.visual_dim, acoustic_dim=cfg.acoustic_dim,
                          embedding_dim=cfg.embedding_dim)
    splits = DatasetSplits(
        sentences[:n_train],
        sentences[n_train:n_train + n_valid],
        sentences[n_train + n_valid:],
        vocab,
        data_cfg,
        lex,
    )
    if return_latents:
        return splits, np.array(latents).reshape(-1, 3)
    return splits


def with_labels(sentences, labels) -> list:
    """Copies of ``sentences`` with replaced labels."""
    return [replace(s, label=float(y)) for s, y in zip(sentences, labels)]
