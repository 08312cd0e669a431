"""
N-gram feature extraction and the linear max-margin deception classifier.

Features are binary presence indicators over lowercased unigrams and bigrams.
The classifier minimises L2-regularised hinge loss (liblinear dual solver);
C multiplies the *summed* hinge loss, so duplicating every training review is
equivalent to doubling C.
"""
from __future__ import annotations

import json
import logging
import os
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from joblib import Parallel, delayed
from scipy import sparse
from sklearn.exceptions import ConvergenceWarning
from sklearn.feature_extraction.text import CountVectorizer
from sklearn.metrics import accuracy_score, balanced_accuracy_score, precision_recall_fscore_support
from sklearn.model_selection import GroupKFold, StratifiedKFold
from sklearn.svm import LinearSVC

from src.corpus import Corpus

logger = logging.getLogger(__name__)

MODEL_FORMAT_VERSION = 1
# runs of unicode letters/digits; everything else separates tokens
TOKEN_PATTERN = r"(?u)[^\W_]+"
NGRAM_RANGE = (1, 2)
DEFAULT_C_GRID = (1e-4, 1e-3, 1e-2, 1e-1, 1.0, 10.0, 100.0)
DEFAULT_TOL = 1e-6


def _vectorizer(vocabulary: Optional[dict] = None) -> CountVectorizer:
    return CountVectorizer(
        lowercase=True,
        token_pattern=TOKEN_PATTERN,
        ngram_range=NGRAM_RANGE,
        binary=True,
        vocabulary=vocabulary,
        dtype=np.float64,
    )


_ANALYZER = _vectorizer().build_analyzer()


def ngrams(text: str) -> list:
    """Unigrams and bigrams of a text, in order of appearance (with repeats)."""
    return _ANALYZER(text)


@dataclass(frozen=True)
class Vocabulary:
    """N-gram to dense feature index map."""
    index: dict = field(default_factory=dict)

    def __post_init__(self):
        if sorted(self.index.values()) != list(range(len(self.index))):
            raise ValueError("vocabulary indices must be dense 0..|V|-1")

    @property
    def size(self) -> int:
        return len(self.index)

    @classmethod
    def fit(cls, texts: Sequence[str]) -> 'Vocabulary':
        """Collects every n-gram in `texts`; indices follow sorted n-gram order."""
        grams = sorted({g for text in texts for g in ngrams(text)})
        return cls({g: i for i, g in enumerate(grams)})

    def transform(self, texts: Sequence[str]) -> sparse.csr_matrix:
        """Binary presence matrix, one row per text; unknown n-grams are dropped."""
        if self.size == 0:
            return sparse.csr_matrix((len(texts), 0), dtype=np.float64)
        return _vectorizer(self.index).transform(texts).tocsr()


@dataclass(frozen=True)
class FeatureVector:
    """Sparse (index, value) pairs sorted by index."""
    indices: tuple = ()
    values: tuple = ()

    def __post_init__(self):
        if len(self.indices) != len(self.values):
            raise ValueError("indices and values must have equal length")
        if any(b <= a for a, b in zip(self.indices, self.indices[1:])):
            raise ValueError("feature indices must be strictly increasing")
        if not np.all(np.isfinite(np.asarray(self.values, dtype=float))):
            raise ValueError("feature values must be finite")

    def __len__(self) -> int:
        return len(self.indices)

    @classmethod
    def from_row(cls, row: sparse.spmatrix) -> 'FeatureVector':
        row = sparse.csr_matrix(row)
        row.sort_indices()
        return cls(tuple(int(i) for i in row.indices), tuple(float(v) for v in row.data))


def extract_features(text: str, vocab: Optional[Vocabulary] = None):
    """
    Maps a text to a binary uni/bigram FeatureVector.

    Returns (FeatureVector, Vocabulary). Without `vocab` a new vocabulary is
    built from the text itself; with it, out-of-vocabulary n-grams are dropped
    and the same vocabulary is returned.
    """
    if vocab is None:
        vocab = Vocabulary.fit([text])
    row = vocab.transform([text])
    return FeatureVector.from_row(row), vocab


@dataclass(frozen=True)
class LinearModel:
    """Trained classifier f: decision value w.x + bias, positive means deceptive."""
    vocabulary: Vocabulary
    weights: np.ndarray
    bias: float
    cost_C: float
    training_metadata: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        weights = np.asarray(self.weights, dtype=np.float64)
        if weights.shape != (self.vocabulary.size,):
            raise ValueError(f"expected {self.vocabulary.size} weights, got {weights.shape}")
        if not np.all(np.isfinite(weights)) or not np.isfinite(self.bias):
            raise ValueError("model weights and bias must be finite")
        if self.cost_C <= 0:
            raise ValueError("cost_C must be positive")
        object.__setattr__(self, 'weights', weights)


def _check_trainable(corpus: Corpus) -> np.ndarray:
    y = corpus.labels()
    if len(np.unique(y)) < 2:
        raise ValueError("training corpus must contain both truthful and deceptive reviews (single-class data)")
    return y


def train(corpus: Corpus, C: float, seed: int = 0, tol: float = DEFAULT_TOL,
          max_iter: int = 200_000) -> LinearModel:
    """Fits the hinge-loss linear classifier on a fully labeled corpus."""
    if C <= 0:
        raise ValueError(f"C must be positive, got {C}")
    y = _check_trainable(corpus)
    vocab = Vocabulary.fit(corpus.texts)
    if vocab.size == 0:
        raise ValueError("training corpus has no tokens")
    X = vocab.transform(corpus.texts)

    svm = LinearSVC(C=C, loss='hinge', dual=True, tol=tol, max_iter=max_iter, random_state=seed)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter('always', ConvergenceWarning)
        svm.fit(X, y)
    converged = not any(issubclass(w.category, ConvergenceWarning) for w in caught)
    if not converged:
        logger.warning(f"Solver did not reach tol={tol} within {max_iter} iterations (C={C})")

    metadata = {
        'n_reviews': int(len(y)),
        'n_deceptive': int(y.sum()),
        'n_truthful': int(len(y) - y.sum()),
        'seed': seed,
        'tol': tol,
        'converged': converged,
        'solver_iterations': int(np.max(svm.n_iter_)),
        'loss': 'hinge',
        'C_convention': 'C multiplies the summed hinge loss',
        'features': {'ngram_range': list(NGRAM_RANGE), 'binary': True, 'token_pattern': TOKEN_PATTERN},
    }
    logger.info(f"Trained classifier on {len(y)} reviews, |V|={vocab.size}, C={C}")
    return LinearModel(vocab, svm.coef_.ravel().copy(), float(svm.intercept_[0]), float(C), metadata)


def decision_function(model: LinearModel, X: sparse.spmatrix) -> np.ndarray:
    return np.asarray(X @ model.weights).ravel() + model.bias


def predict(model: LinearModel, x: FeatureVector) -> int:
    """1 iff the decision value is strictly positive; ties go to truthful."""
    score = model.bias + sum(model.weights[i] * v for i, v in zip(x.indices, x.values))
    return int(score > 0)


def predict_corpus(model: LinearModel, corpus: Corpus) -> np.ndarray:
    X = model.vocabulary.transform(corpus.texts)
    return (decision_function(model, X) > 0).astype(np.int64)


def _best_C(scores: dict) -> float:
    """Highest mean score; ties resolved toward the smallest C."""
    best = max(scores.values())
    return min(c for c, s in scores.items() if s >= best - 1e-12)


def _fit_score(corpus: Corpus, train_idx, test_idx, C: float, seed: int) -> float:
    model = train(corpus.derive(corpus[int(i)] for i in train_idx), C, seed=seed)
    held_out = corpus.derive(corpus[int(i)] for i in test_idx)
    return balanced_accuracy_score(held_out.labels(), predict_corpus(model, held_out))


def classification_report(y_true: np.ndarray, y_pred: np.ndarray) -> dict:
    """Accuracy plus per-class precision / recall / F-score and balanced accuracy."""
    precision, recall, fscore, _ = precision_recall_fscore_support(
        y_true, y_pred, labels=[1, 0], zero_division=0)
    return {
        'accuracy': float(accuracy_score(y_true, y_pred)),
        'balanced_accuracy': float(balanced_accuracy_score(y_true, y_pred)),
        'deceptive_precision': float(precision[0]),
        'deceptive_recall': float(recall[0]),
        'deceptive_fscore': float(fscore[0]),
        'truthful_precision': float(precision[1]),
        'truthful_recall': float(recall[1]),
        'truthful_fscore': float(fscore[1]),
    }


def _outer_splits(corpus: Corpus, y: np.ndarray, folds: int, seed: int):
    hotels = np.array([r.hotel_id for r in corpus])
    if len(np.unique(hotels)) >= folds:
        return list(GroupKFold(n_splits=folds).split(np.zeros(len(y)), y, groups=hotels))
    logger.warning(f"Fewer than {folds} hotels; outer folds fall back to stratified random splits")
    return list(StratifiedKFold(n_splits=folds, shuffle=True, random_state=seed).split(np.zeros(len(y)), y))


def nested_cross_validate(corpus: Corpus, grid: Sequence[float] = DEFAULT_C_GRID, folds: int = 5,
                          seed: int = 0, n_jobs: int = 1) -> dict:
    """
    Nested cross-validation: outer folds by hotel, inner stratified folds by review.

    Each C is scored by balanced accuracy on every inner fold of every outer
    fold; the C with the best overall mean is selected. Every outer fold also
    picks its own C from its inner folds and is evaluated on its held-out
    hotels, which gives the cross-validated performance report.
    """
    if folds < 2:
        raise ValueError("folds must be >= 2")
    if not grid:
        raise ValueError("C grid must be non-empty")
    grid = sorted(float(c) for c in grid)
    y = _check_trainable(corpus)

    all_scores = {c: [] for c in grid}
    pooled_true, pooled_pred, outer_report = [], [], []

    for fold_no, (outer_train, outer_test) in enumerate(_outer_splits(corpus, y, folds, seed)):
        inner = StratifiedKFold(n_splits=folds, shuffle=True, random_state=seed)
        inner_splits = [(outer_train[a], outer_train[b])
                        for a, b in inner.split(np.zeros(len(outer_train)), y[outer_train])]
        jobs = [(c, tr, te) for c in grid for tr, te in inner_splits]
        scores = Parallel(n_jobs=n_jobs)(delayed(_fit_score)(corpus, tr, te, c, seed) for c, tr, te in jobs)

        fold_scores = {c: [] for c in grid}
        for (c, _, _), score in zip(jobs, scores):
            fold_scores[c].append(score)
            all_scores[c].append(score)
        chosen = _best_C({c: float(np.mean(s)) for c, s in fold_scores.items()})

        model = train(corpus.derive(corpus[int(i)] for i in outer_train), chosen, seed=seed)
        held_out = corpus.derive(corpus[int(i)] for i in outer_test)
        pred = predict_corpus(model, held_out)
        pooled_true.extend(held_out.labels().tolist())
        pooled_pred.extend(pred.tolist())
        outer_report.append({
            'fold': fold_no,
            'held_out_hotels': sorted({r.hotel_id for r in held_out}),
            'chosen_C': chosen,
            'balanced_accuracy': float(balanced_accuracy_score(held_out.labels(), pred)),
        })
        logger.info(f"Outer fold {fold_no}: C={chosen}, balanced accuracy {outer_report[-1]['balanced_accuracy']:.3f}")

    mean_scores = {c: float(np.mean(s)) for c, s in all_scores.items()}
    selected = _best_C(mean_scores)
    logger.info(f"Selected C={selected} (mean inner balanced accuracy {mean_scores[selected]:.3f})")
    return {
        'grid': grid,
        'folds': folds,
        'seed': seed,
        'mean_inner_balanced_accuracy': {repr(c): s for c, s in mean_scores.items()},
        'selected_C': selected,
        'outer_folds': outer_report,
        'cross_validated': classification_report(np.array(pooled_true), np.array(pooled_pred)),
    }


def select_C(corpus: Corpus, grid: Sequence[float] = DEFAULT_C_GRID, folds: int = 5, seed: int = 0,
             n_jobs: int = 1) -> float:
    """Grid value with the best mean nested-CV balanced accuracy (smallest C on ties)."""
    if not grid:
        raise ValueError("C grid must be non-empty")
    if len(grid) == 1:
        return float(grid[0])
    return nested_cross_validate(corpus, grid, folds, seed, n_jobs)['selected_C']


def cross_val_predict_by_group(corpus: Corpus, groups: dict, C: float, seed: int = 0,
                               on_fold: Optional[Callable] = None, n_jobs: int = 1) -> dict:
    """
    Leave-one-group-out predictions: reviews of group j are classified by a
    model trained on every other group. Returns {review id: predicted label}.

    `on_fold(group_key, train_ids, test_ids)` is called once per fold before
    training, which lets callers audit what each model sees.
    """
    if len(groups) < 2:
        raise ValueError(f"need at least 2 groups for grouped cross-validation, got {len(groups)}")

    folds = []
    for key, group in groups.items():
        held_out_ids = set(group.ids)
        train_part = corpus.derive(r for r in corpus if r.id not in held_out_ids)
        if held_out_ids & set(train_part.ids):
            raise AssertionError(f"fold {key} would train on held-out reviews")
        if on_fold is not None:
            on_fold(key, train_part.ids, group.ids)
        folds.append((train_part, group))

    def _run(train_part, group):
        model = train(train_part, C, seed=seed)
        return dict(zip(group.ids, predict_corpus(model, group).tolist()))

    results = Parallel(n_jobs=n_jobs)(delayed(_run)(tr, te) for tr, te in folds)
    predictions = {}
    for part in results:
        predictions.update(part)
    logger.info(f"Grouped cross-validation over {len(groups)} groups produced {len(predictions)} predictions")
    return predictions


def save_model(model: LinearModel, path: str) -> None:
    """Writes the versioned JSON model file (float repr round-trips exactly)."""
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    document = {
        'version': MODEL_FORMAT_VERSION,
        'vocabulary': model.vocabulary.index,
        'weights': [float(w) for w in model.weights],
        'bias': float(model.bias),
        'cost_C': float(model.cost_C),
        'training_metadata': model.training_metadata,
    }
    with open(path, 'w', encoding='utf-8') as handle:
        json.dump(document, handle, sort_keys=True, ensure_ascii=False)
    logger.info(f"Model saved to {path}")


def load_model(path: str) -> LinearModel:
    if not os.path.exists(path):
        raise FileNotFoundError(f"model file not found: {path}")
    with open(path, 'r', encoding='utf-8') as handle:
        document = json.load(handle)
    if document.get('version') != MODEL_FORMAT_VERSION:
        raise ValueError(f"unsupported model file version: {document.get('version')}")
    model = LinearModel(
        vocabulary=Vocabulary(document['vocabulary']),
        weights=np.array(document['weights'], dtype=np.float64),
        bias=float(document['bias']),
        cost_C=float(document['cost_C']),
        training_metadata=document.get('training_metadata', {}),
    )
    logger.info(f"Model loaded from {path}")
    return model
