"""Synthetic dataset generation and plain-text dataset persistence.

On-disk format: a JSON manifest naming per-modality feature CSVs (one row
per vertex, no header), a labels file (one class index per line), and a
split file (``train`` or ``test`` per line).  Hypergraphs are not stored;
they are rebuilt on load by k-nearest-neighbor construction over each
modality's features with the manifest's ``knn_k``.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from .errors import ParameterError, ValidationError
from .hypergraph import Modality, MultiModalDataset, build_knn_hypergraph


@dataclass(frozen=True)
class ModalityFile:
    """Manifest entry for one modality's feature CSV."""

    id: str
    dim: int
    feature_file: str


@dataclass(frozen=True)
class DatasetManifest:
    """Names and shapes of the files making up one on-disk dataset."""

    name: str
    n_vertices: int
    n_classes: int
    modalities: tuple[ModalityFile, ...]
    labels_file: str
    split_file: str
    knn_k: int = 10


def _read_lines(path: Path) -> list[str]:
    try:
        return path.read_text().splitlines()
    except OSError as e:
        raise ValidationError(f"{path}: cannot read file: {e}") from e


def _expect_rows(path: Path, lines: list[str], n: int) -> None:
    if len(lines) != n:
        raise ValidationError(
            f"{path} line {min(len(lines), n) + 1}: expected {n} lines, "
            f"file has {len(lines)}"
        )


def _field(raw: dict, key: str, kind: type, path: Path):
    if key not in raw:
        raise ValidationError(f"{path}: manifest is missing {key!r}")
    val = raw[key]
    if not isinstance(val, kind) or isinstance(val, bool):
        raise ValidationError(
            f"{path}: manifest field {key!r} must be a {kind.__name__}"
        )
    return val


def load_manifest(manifest_path) -> DatasetManifest:
    """Parse and validate a dataset manifest JSON file."""
    path = Path(manifest_path)
    try:
        raw = json.loads(path.read_text())
    except OSError as e:
        raise ValidationError(f"{path}: cannot read manifest: {e}") from e
    except json.JSONDecodeError as e:
        raise ValidationError(f"{path}: invalid JSON: {e}") from e
    if not isinstance(raw, dict):
        raise ValidationError(f"{path}: manifest must be a JSON object")
    name = _field(raw, "name", str, path)
    n_vertices = _field(raw, "n_vertices", int, path)
    n_classes = _field(raw, "n_classes", int, path)
    labels_file = _field(raw, "labels_file", str, path)
    split_file = _field(raw, "split_file", str, path)
    knn_k = raw.get("knn_k", 10)
    if not isinstance(knn_k, int) or isinstance(knn_k, bool) or knn_k < 1:
        raise ValidationError(f"{path}: knn_k must be a positive integer")
    if n_vertices < 1:
        raise ValidationError(f"{path}: n_vertices must be positive")
    if n_classes < 2:
        raise ValidationError(f"{path}: n_classes must be at least 2")
    raw_mods = _field(raw, "modalities", list, path)
    if not raw_mods:
        raise ValidationError(f"{path}: manifest lists no modalities")
    mods = []
    for i, entry in enumerate(raw_mods):
        if not isinstance(entry, dict):
            raise ValidationError(f"{path}: modality {i} must be an object")
        mid = _field(entry, "id", str, path)
        dim = _field(entry, "dim", int, path)
        feature_file = _field(entry, "feature_file", str, path)
        if dim < 1:
            raise ValidationError(f"{path}: modality {mid!r} dim must be positive")
        mods.append(ModalityFile(id=mid, dim=dim, feature_file=feature_file))
    return DatasetManifest(
        name=name,
        n_vertices=n_vertices,
        n_classes=n_classes,
        modalities=tuple(mods),
        labels_file=labels_file,
        split_file=split_file,
        knn_k=knn_k,
    )


def load_dataset(manifest_path) -> MultiModalDataset:
    """Read a manifest and its files into a dataset.

    Per-modality hypergraphs are built with ``build_knn_hypergraph`` at the
    manifest's ``knn_k``.  Malformed content raises a validation error
    naming the offending file and line.
    """
    manifest_path = Path(manifest_path)
    man = load_manifest(manifest_path)
    base = manifest_path.parent
    n = man.n_vertices

    labels_path = base / man.labels_file
    lines = _read_lines(labels_path)
    _expect_rows(labels_path, lines, n)
    labels = np.zeros(n, dtype=np.int64)
    for i, line in enumerate(lines, start=1):
        text = line.strip()
        try:
            v = int(text)
        except ValueError:
            raise ValidationError(
                f"{labels_path} line {i}: not an integer: {text!r}"
            ) from None
        if not 0 <= v < man.n_classes:
            raise ValidationError(
                f"{labels_path} line {i}: label {v} outside [0, {man.n_classes})"
            )
        labels[i - 1] = v

    split_path = base / man.split_file
    lines = _read_lines(split_path)
    _expect_rows(split_path, lines, n)
    train_mask = np.zeros(n, dtype=bool)
    for i, line in enumerate(lines, start=1):
        tok = line.strip()
        if tok not in ("train", "test"):
            raise ValidationError(
                f"{split_path} line {i}: expected 'train' or 'test', got {tok!r}"
            )
        train_mask[i - 1] = tok == "train"

    modalities = []
    for mf in man.modalities:
        fpath = base / mf.feature_file
        lines = _read_lines(fpath)
        _expect_rows(fpath, lines, n)
        feats = np.zeros((n, mf.dim))
        for i, line in enumerate(lines, start=1):
            parts = line.split(",")
            if len(parts) != mf.dim:
                raise ValidationError(
                    f"{fpath} line {i}: expected {mf.dim} columns, "
                    f"got {len(parts)}"
                )
            try:
                feats[i - 1] = [float(p) for p in parts]
            except ValueError:
                raise ValidationError(
                    f"{fpath} line {i}: row contains an unparsable number"
                ) from None
        bad = np.argwhere(~np.isfinite(feats))
        if bad.size:
            raise ValidationError(
                f"{fpath} line {bad[0][0] + 1}: non-finite value"
            )
        modalities.append(
            Modality(features=feats, hypergraph=build_knn_hypergraph(feats, man.knn_k))
        )
    return MultiModalDataset(
        modalities, labels, train_mask, ~train_mask, man.n_classes, name=man.name
    )


def _infer_knn_k(ds: MultiModalDataset) -> int:
    """Guess the k that produced the dataset's hypergraphs, default 10."""
    sizes = {len(e) for m in ds.modalities for e in m.hypergraph.hyperedges}
    per_vertex = all(m.hypergraph.n_edges == ds.n_vertices for m in ds.modalities)
    if per_vertex and len(sizes) == 1:
        k = sizes.pop() - 1
        if k >= 1:
            return k
    return 10


def save_dataset(ds: MultiModalDataset, out_dir, name: str | None = None,
                 knn_k: int | None = None, force: bool = False) -> DatasetManifest:
    """Write a dataset as manifest + CSV/label/split files.

    Floats are written with 17 significant digits, so features survive a
    round-trip bit-exactly.  Existing files are only overwritten with
    ``force``.  The split format requires every vertex to be in exactly one
    of train/test; hypergraphs are not persisted (reload rebuilds kNN).
    """
    if not ds.modalities:
        raise ValidationError("dataset has no modalities to save")
    if not (ds.train_mask | ds.test_mask).all():
        raise ValidationError(
            "split format needs every vertex in either train or test"
        )
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    name = ds.name if name is None else str(name)
    if knn_k is None:
        knn_k = _infer_knn_k(ds)
    mfiles = tuple(
        ModalityFile(id=f"m{i}", dim=m.dim, feature_file=f"{name}_m{i}.csv")
        for i, m in enumerate(ds.modalities)
    )
    manifest = DatasetManifest(
        name=name,
        n_vertices=ds.n_vertices,
        n_classes=ds.n_classes,
        modalities=mfiles,
        labels_file=f"{name}_labels.txt",
        split_file=f"{name}_split.txt",
        knn_k=knn_k,
    )
    targets = [out / f"{name}.json", out / manifest.labels_file,
               out / manifest.split_file]
    targets += [out / mf.feature_file for mf in mfiles]
    if not force:
        for t in targets:
            if t.exists():
                raise FileExistsError(
                    f"{t} already exists; refusing to overwrite without force"
                )
    for mf, m in zip(mfiles, ds.modalities):
        rows = (",".join(f"{v:.17g}" for v in row) for row in m.features)
        (out / mf.feature_file).write_text("\n".join(rows) + "\n")
    (out / manifest.labels_file).write_text(
        "\n".join(str(int(v)) for v in ds.labels) + "\n"
    )
    (out / manifest.split_file).write_text(
        "\n".join("train" if t else "test" for t in ds.train_mask) + "\n"
    )
    (out / f"{name}.json").write_text(json.dumps(asdict(manifest), indent=2) + "\n")
    return manifest


@dataclass(frozen=True)
class SyntheticSpec:
    """Recipe for a multi-modal Gaussian-blob classification dataset.

    Class means per modality are scaled so the closest pair sits at
    ``separation``.  A vertex is cross-modally consistent with probability
    ``cross_modal_correlation``; otherwise one modality (chosen uniformly)
    is resampled from a random other class, so each modality carries signal
    the others lack.  The default modality widths are unequal: the wider
    modality picks up more accumulated noise at the same class separation,
    so its kNN graph is less reliable and per-modality branches have
    something real to disagree about.  The defaults are the fixed benchmark
    configuration used by the acceptance tests.
    """

    n_vertices: int = 600
    n_classes: int = 4
    dims: tuple[int, ...] = (16, 32)
    separation: float = 5.0
    noise_std: float = 1.0
    cross_modal_correlation: float = 0.7
    label_rate: float = 0.2
    knn_k: int = 10
    seed: int = 151
    name: str = "synthetic"

    def __post_init__(self):
        object.__setattr__(self, "dims", tuple(int(d) for d in self.dims))
        if self.n_classes < 2:
            raise ValidationError(f"n_classes must be at least 2, got {self.n_classes}")
        if not self.dims or any(d < 2 for d in self.dims):
            raise ValidationError(f"every modality dim must be at least 2, got {self.dims}")
        if self.separation <= 0.0:
            raise ValidationError(f"separation must be positive, got {self.separation}")
        if self.noise_std < 0.0:
            raise ValidationError(f"noise_std must be nonnegative, got {self.noise_std}")
        if not 0.0 <= self.cross_modal_correlation <= 1.0:
            raise ValidationError(
                f"cross_modal_correlation must lie in [0, 1], "
                f"got {self.cross_modal_correlation}"
            )
        if not 0.0 < self.label_rate < 1.0:
            raise ValidationError(f"label_rate must lie in (0, 1), got {self.label_rate}")
        if self.knn_k < 1:
            raise ValidationError(f"knn_k must be positive, got {self.knn_k}")
        if self.n_vertices < self.knn_k + 1:
            raise ValidationError(
                f"need at least knn_k+1={self.knn_k + 1} vertices, "
                f"got {self.n_vertices}"
            )
        if self.label_rate * self.n_vertices < self.n_classes:
            raise ValidationError(
                "label_rate is too small to label at least one vertex per class"
            )

    @property
    def n_modalities(self) -> int:
        return len(self.dims)


def load_synthetic_spec(path) -> SyntheticSpec:
    """Read a SyntheticSpec from a JSON object file."""
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except OSError as e:
        raise ValidationError(f"{path}: cannot read spec: {e}") from e
    except json.JSONDecodeError as e:
        raise ValidationError(f"{path}: invalid JSON: {e}") from e
    if not isinstance(raw, dict):
        raise ValidationError(f"{path}: spec must be a JSON object")
    allowed = {f.name for f in fields(SyntheticSpec)}
    unknown = sorted(set(raw) - allowed)
    if unknown:
        raise ValidationError(f"{path}: unknown spec fields: {', '.join(unknown)}")
    if "dims" in raw:
        if not isinstance(raw["dims"], list):
            raise ValidationError(f"{path}: dims must be a list of integers")
        raw = dict(raw, dims=tuple(raw["dims"]))
    try:
        return SyntheticSpec(**raw)
    except TypeError as e:
        raise ValidationError(f"{path}: bad spec value: {e}") from e


def stratified_train_mask(labels, rate: float, rng: np.random.Generator) -> np.ndarray:
    """Boolean mask selecting about ``rate * N`` vertices, stratified by class.

    Largest-remainder apportionment over the class counts, with at least one
    vertex per class; the total is round(rate * N) clamped so at least one
    vertex is left out.
    """
    labels = np.asarray(labels)
    n = labels.shape[0]
    if not 0.0 < rate < 1.0:
        raise ParameterError(f"rate must lie in (0, 1), got {rate}")
    classes, counts = np.unique(labels, return_counts=True)
    c = classes.size
    target = min(max(int(round(rate * n)), c), n - 1)
    ideal = target * counts / n
    take = np.floor(ideal).astype(np.int64)
    rem = ideal - take
    deficit = target - int(take.sum())
    if deficit > 0:
        order = np.argsort(-rem, kind="stable")
        take[order[:deficit]] += 1
    take = np.clip(take, 1, counts)
    # clamping can perturb the total; rebalance deterministically
    while take.sum() > target:
        take[int(np.argmax(take))] -= 1
    while take.sum() < target:
        take[int(np.argmax(counts - take))] += 1
    mask = np.zeros(n, dtype=bool)
    for cls, cnt in zip(classes, take):
        members = np.flatnonzero(labels == cls)
        mask[rng.choice(members, size=int(cnt), replace=False)] = True
    return mask


def generate_synthetic(spec: SyntheticSpec) -> MultiModalDataset:
    """Deterministically generate the dataset described by ``spec``.

    Labels are near-uniform over classes (floor/remainder split, shuffled).
    All vertices outside the stratified train mask form the test mask.
    """
    rng = np.random.default_rng(spec.seed)
    n, c = spec.n_vertices, spec.n_classes
    counts = np.full(c, n // c, dtype=np.int64)
    counts[: n % c] += 1
    labels = rng.permutation(np.repeat(np.arange(c, dtype=np.int64), counts))
    inconsistent = rng.random(n) >= spec.cross_modal_correlation
    which = rng.integers(0, spec.n_modalities, size=n)
    shift = rng.integers(1, c, size=n)
    modalities = []
    for m_idx, d in enumerate(spec.dims):
        means = rng.standard_normal((c, d))
        gaps = np.linalg.norm(means[:, None, :] - means[None, :, :], axis=2)
        min_gap = gaps[~np.eye(c, dtype=bool)].min()
        if min_gap <= 0.0:
            raise ValidationError("class means coincide; use a different seed")
        means *= spec.separation / min_gap
        effective = labels.copy()
        hit = inconsistent & (which == m_idx)
        effective[hit] = (labels[hit] + shift[hit]) % c
        feats = means[effective] + rng.standard_normal((n, d)) * spec.noise_std
        modalities.append(
            Modality(features=feats, hypergraph=build_knn_hypergraph(feats, spec.knn_k))
        )
    train = stratified_train_mask(labels, spec.label_rate, rng)
    return MultiModalDataset(modalities, labels, train, ~train, c, name=spec.name)
