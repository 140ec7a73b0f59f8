"""Two-step room classification over a provider's local database.

Step one scores entries by Wi-Fi similarity; step two classifies the
additional features of the matched entries with NFM (number of feature
matches) or, as a baseline, multinomial logistic regression. The two label
distributions are then blended with weights ``(r1, r2)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable, Mapping, Optional, Sequence, Union

import numpy as np

from collabloc import kernels
from collabloc.errors import InvalidArgument
from collabloc.fingerprint import Entry, FeatureVector, LocalDatabase, LocationLabel, WifiScan, match_entries

DEFAULT_WEIGHTS = (0.5, 0.5)


class LabelDistribution(Mapping[LocationLabel, float]):
    """Probability mass over location labels, in a stable label order."""

    __slots__ = ("_mass",)

    def __init__(self, mass: Union[Mapping[LocationLabel, float], Iterable[tuple[LocationLabel, float]]] = ()):
        items = mass.items() if isinstance(mass, Mapping) else mass
        self._mass: dict[LocationLabel, float] = {}
        for label, p in items:
            p = float(p)
            if not p >= 0.0:
                raise InvalidArgument(f"negative or NaN mass {p} for {label}")
            if label in self._mass:
                raise InvalidArgument(f"duplicate label {label}")
            self._mass[label] = p

    @classmethod
    def _trusted(cls, mass: dict) -> "LabelDistribution":
        # internal constructor for masses already known to be valid
        out = cls.__new__(cls)
        out._mass = mass
        return out

    def __getitem__(self, label):
        return self._mass[label]

    def __contains__(self, label):
        return label in self._mass

    def keys(self):
        return self._mass.keys()

    def items(self):
        return self._mass.items()

    def values(self):
        return self._mass.values()

    def __iter__(self):
        return iter(self._mass)

    def __len__(self):
        return len(self._mass)

    def __repr__(self):
        body = ", ".join(f"{l}: {p:.4g}" for l, p in self._mass.items())
        return f"LabelDistribution({{{body}}})"

    def get(self, label, default=0.0):
        return self._mass.get(label, default)

    @property
    def total(self) -> float:
        return float(sum(self._mass.values()))

    def is_normalized(self, tol: float = 1e-9) -> bool:
        return abs(self.total - 1.0) <= tol

    def normalized(self) -> "LabelDistribution":
        """Divide by the total; an all-zero distribution becomes uniform."""
        if not self._mass:
            return LabelDistribution()
        total = self.total
        if total <= 0.0:
            u = 1.0 / len(self._mass)
            return LabelDistribution._trusted(dict.fromkeys(self._mass, u))
        return LabelDistribution._trusted({l: p / total for l, p in self._mass.items()})

    def padded(self, labels: Iterable[LocationLabel]) -> "LabelDistribution":
        """Append every label not yet in the support with zero mass."""
        mass = dict(self._mass)
        for label in labels:
            mass.setdefault(label, 0.0)
        return LabelDistribution._trusted(mass)

    def argmax(self) -> Optional[LocationLabel]:
        if not self._mass:
            return None
        return max(self._mass, key=lambda l: self._mass[l])


@dataclass(frozen=True)
class CategoryPartition:
    """Intervals over one numeric feature, split at midpoints of adjacent values."""

    feature: str
    boundaries: np.ndarray

    def category_of(self, value) -> np.ndarray:
        # a value exactly on a boundary falls into the upper interval
        return np.searchsorted(self.boundaries, value, side="right")

    def intervals(self) -> list[tuple[float, float]]:
        edges = [-np.inf, *self.boundaries.tolist(), np.inf]
        return list(zip(edges[:-1], edges[1:]))

    def __len__(self):
        return len(self.boundaries) + 1


def build_categories(values: Sequence[float], feature: str = "") -> CategoryPartition:
    arr = np.asarray(values, dtype=np.float64)
    if arr.size == 0:
        raise InvalidArgument("cannot build categories from no values")
    if not np.all(np.isfinite(arr)):
        raise InvalidArgument("category values must be finite")
    distinct = np.unique(arr)
    bounds = (distinct[:-1] + distinct[1:]) / 2.0
    return CategoryPartition(feature, bounds)


def _sum_by_label(labels: Sequence[LocationLabel], weights) -> LabelDistribution:
    mass: dict[LocationLabel, float] = {}
    for label, w in zip(labels, weights):
        mass[label] = mass.get(label, 0.0) + float(w)
    return LabelDistribution(mass)


def _check_training(training: Sequence[Entry], features: FeatureVector):
    if len(training) == 0:
        raise InvalidArgument("training set is empty")
    schema = features.schema
    for e in training:
        if e.features.schema != schema:
            raise InvalidArgument("training entry schema differs from input schema")
    return schema


def feature_codes(training: Sequence[Entry], features: FeatureVector) -> tuple[np.ndarray, np.ndarray]:
    """Encode training rows and the input as per-feature category codes.

    Numeric features map to their interval index; categorical features map to
    a per-column code, with -1 for an input value no training row has.
    """
    numeric_names, cat_names = _check_training(training, features)
    m = len(training)
    train = np.empty((m, len(numeric_names) + len(cat_names)), dtype=np.int64)
    query = np.empty(train.shape[1], dtype=np.int64)
    for j, name in enumerate(numeric_names):
        col = np.fromiter((e.features.numeric[name] for e in training), dtype=np.float64, count=m)
        part = build_categories(col, name)
        train[:, j] = part.category_of(col)
        query[j] = part.category_of(features.numeric[name])
    off = len(numeric_names)
    for j, name in enumerate(cat_names):
        codes: dict[str, int] = {}
        for i, e in enumerate(training):
            train[i, off + j] = codes.setdefault(e.features.categorical[name], len(codes))
        query[off + j] = codes.get(features.categorical[name], -1)
    return np.ascontiguousarray(train), query


def nfm_counts(training: Sequence[Entry], features: FeatureVector) -> np.ndarray:
    train, query = feature_codes(training, features)
    return kernels.match_counts(train, query)


def nfm_classify(training: Sequence[Entry], features: FeatureVector) -> LabelDistribution:
    """Distribution over training labels proportional to feature-match counts.

    Counts of entries sharing a label are summed. When nothing matches, the
    result is uniform over the training labels.
    """
    counts = nfm_counts(training, features)
    return _sum_by_label([e.label for e in training], counts).normalized()


def similarity_distribution(matches: Sequence[tuple[Entry, float]]) -> LabelDistribution:
    if not matches:
        raise InvalidArgument("no matches to normalize")
    for _, s in matches:
        if not s > 0:
            raise InvalidArgument("match similarities must be positive")
    return _sum_by_label([e.label for e, _ in matches], [s for _, s in matches]).normalized()


def blend(dists: Sequence[LabelDistribution], weights: Sequence[float]) -> LabelDistribution:
    """Weighted sum of distributions over the union of their supports."""
    mass: dict[LocationLabel, float] = {}
    for d, w in zip(dists, weights):
        for label, p in d.items():
            mass[label] = mass.get(label, 0.0) + w * p
    return LabelDistribution(mass)


# --- multinomial logistic regression baseline -------------------------------

MLR_LEARNING_RATE = 0.1
MLR_EPOCHS = 500
MLR_TOL = 1e-6


class MlrModel:
    """Softmax-linear classifier trained by full-batch gradient descent."""

    def __init__(self, learning_rate: float = MLR_LEARNING_RATE, epochs: int = MLR_EPOCHS, tol: float = MLR_TOL):
        self.learning_rate = learning_rate
        self.epochs = epochs
        self.tol = tol
        self.labels: list[LocationLabel] = []

    def _design(self, fvs: Sequence[FeatureVector]) -> np.ndarray:
        cols = []
        for name in self._numeric:
            x = np.array([f.numeric[name] for f in fvs], dtype=np.float64)
            mu, sd = self._scale[name]
            cols.append((x - mu) / sd)
        for name in self._categorical:
            values = [f.categorical[name] for f in fvs]
            for level in self._levels[name]:
                cols.append(np.array([v == level for v in values], dtype=np.float64))
        cols.append(np.ones(len(fvs)))
        return np.column_stack(cols)

    def fit(self, training: Sequence[Entry]) -> "MlrModel":
        if not training:
            raise InvalidArgument("training set is empty")
        schema = training[0].features.schema
        if any(e.features.schema != schema for e in training):
            raise InvalidArgument("mixed feature schemas in training set")
        self._numeric, self._categorical = schema
        self.labels = list(dict.fromkeys(e.label for e in training))
        if len(self.labels) < 2:
            return self
        self._scale = {}
        for name in self._numeric:
            x = np.array([e.features.numeric[name] for e in training])
            sd = x.std()
            self._scale[name] = (x.mean(), sd if sd > 0 else 1.0)
        self._levels = {name: sorted({e.features.categorical[name] for e in training})
                        for name in self._categorical}
        X = self._design([e.features for e in training])
        index = {l: i for i, l in enumerate(self.labels)}
        Y = np.zeros((len(training), len(self.labels)))
        Y[np.arange(len(training)), [index[e.label] for e in training]] = 1.0
        W = np.zeros((X.shape[1], Y.shape[1]))
        prev = np.inf
        n = X.shape[0]
        for _ in range(self.epochs):
            P = _softmax(X @ W)
            loss = -np.sum(Y * np.log(P + 1e-300)) / n
            if abs(prev - loss) < self.tol:
                break
            prev = loss
            W -= self.learning_rate * (X.T @ (P - Y)) / n
        self.weights = W
        return self

    def predict(self, features: FeatureVector) -> LabelDistribution:
        if len(self.labels) == 1:
            return LabelDistribution({self.labels[0]: 1.0})
        if features.schema != (tuple(self._numeric), tuple(self._categorical)):
            raise InvalidArgument("input schema differs from training schema")
        p = _softmax(self._design([features]) @ self.weights)[0]
        return LabelDistribution(zip(self.labels, p)).normalized()


def _softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def mlr_classify(training: Sequence[Entry], features: FeatureVector) -> LabelDistribution:
    return MlrModel().fit(training).predict(features)


# --- two-step classification --------------------------------------------------

Classifier = Callable[[Sequence[Entry], FeatureVector], LabelDistribution]


def _resolve(classifier: Union[str, Classifier], db: LocalDatabase, idx: tuple[int, ...]):
    if callable(classifier):
        return classifier
    if classifier == "nfm":
        return nfm_classify
    if classifier == "mlr":
        def cached_mlr(training, features):
            model = db.model_cache.get(idx)
            if model is None:
                model = db.model_cache[idx] = MlrModel().fit(training)
            return model.predict(features)
        return cached_mlr
    raise InvalidArgument(f"unknown classifier {classifier!r}")


def check_weights(r1: float, r2: float) -> None:
    if r1 < 0 or r2 < 0 or abs(r1 + r2 - 1.0) > 1e-9:
        raise InvalidArgument("fusion weights must be non-negative and sum to 1")


def two_step_classify(db: LocalDatabase, scan: WifiScan, features: FeatureVector,
                      r1: float = DEFAULT_WEIGHTS[0], r2: float = DEFAULT_WEIGHTS[1],
                      classifier: Union[str, Classifier] = "nfm") -> Optional[LabelDistribution]:
    """Classify a fingerprint against ``db``; ``None`` means NA (no shared AP).

    ``r1`` weights the similarity distribution and ``r2`` the feature
    classifier's distribution. Database labels outside the matched set are
    appended with zero mass.
    """
    check_weights(r1, r2)
    db.check_schema(features)
    matches = match_entries(db, scan)
    if not matches:
        return None
    idx = tuple(i for i, _ in matches)
    matched = [db[i] for i in idx]
    s1 = similarity_distribution([(db[i], s) for i, s in matches])
    s2 = _resolve(classifier, db, idx)(matched, features)
    return blend([s1, s2], [r1, r2]).padded(db.labels).normalized()
